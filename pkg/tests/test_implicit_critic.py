import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from proxbellman.approximator import forward, init_mlp, unflatten, vjp
from proxbellman.constraint_ops import (
    ConstraintKind,
    ConstraintSpec,
    DualState,
    monotone_penalty,
    monotone_penalty_grad,
    prox_monotone_penalty,
)
from proxbellman.errors import DomainError, StepSizeError, TrainingError
from proxbellman.implicit_critic import (
    Batch,
    CriticSettings,
    CriticState,
    batch_objective,
    bellman_targets,
    cg_solve,
    clip_grad_norm,
    critic_layer,
    critic_step,
    logged_action_cotangent,
    prox_layer,
    prox_step,
    remember_iterate,
    residual_g,
)
from proxbellman.verification import implicit_gradient_error

PENALTY = ConstraintSpec(ConstraintKind.MONOTONE_PENALTY)
CONE = ConstraintSpec(ConstraintKind.MONOTONE_CONE)


def random_batch(rng, size: int = 8) -> Batch:
    return Batch(states=rng.uniform(size=(size, 2)), actions=rng.integers(0, 5, size=size),
                 rewards=rng.normal(size=size), next_states=rng.uniform(size=(size, 2)))


def critic_state(rng, lam: float, n_transitions=None) -> CriticState:
    theta = init_mlp([2, 6, 5], rng=rng)
    return CriticState.create(theta, DualState(lam=lam), n_transitions)


# ------------------------------------------------------------------------------
# targets and layer
# ------------------------------------------------------------------------------

def test_zero_critic_targets_are_rewards(rng):
    batch = random_batch(rng)
    template = init_mlp([2, 6, 5], seed=0)
    zero = unflatten(template, np.zeros(template.n_params))
    assert_allclose(bellman_targets(batch, zero, 0.9, CONE, 0.5), batch.rewards)


def test_myopic_targets_are_rewards(rng):
    batch = random_batch(rng)
    assert_array_equal(bellman_targets(batch, init_mlp([2, 6, 5], rng=rng), 0.0), batch.rewards)


def test_targets_reject_non_finite_critic(rng):
    template = init_mlp([2, 6, 5], seed=0)
    broken = unflatten(template, np.full(template.n_params, np.nan))
    with pytest.raises(TrainingError):
        bellman_targets(random_batch(rng), broken, 0.9)


def test_critic_layer_variants(rng):
    f = rng.normal(size=(20, 5))
    assert critic_layer(f, None, 1.0) is f
    assert_allclose(critic_layer(f, PENALTY, 1.0), prox_monotone_penalty(f, 1.0))
    assert np.all(np.diff(critic_layer(f, CONE, 0.3), axis=1) >= 0.0)


# ------------------------------------------------------------------------------
# prox subproblem
# ------------------------------------------------------------------------------

def test_batch_objective_example():
    u = np.array([[1.0, 0.0, 0.0, 0.0, 0.0]])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        value = batch_objective(u, np.zeros((1, 5)), 0.5, monotone_penalty(u))
    assert isinstance(value, float)
    assert value == pytest.approx(1.0)
    with pytest.raises(DomainError):
        batch_objective(u, np.zeros((2, 5)), 0.5, 0.0)


def test_residual_vanishes_on_feasible_targets(rng):
    y = np.sort(rng.normal(size=(6, 5)), axis=1)
    assert_array_equal(residual_g(y, y, 2.0), np.zeros_like(y))


def test_prox_step_leaves_feasible_rows(rng):
    y = np.sort(rng.normal(size=(6, 5)), axis=1)
    assert_array_equal(prox_step(y, y, DualState(lam=1.0)), y)


def test_prox_step_without_penalty_jumps_to_targets(rng):
    y = rng.normal(size=(6, 5))
    assert_allclose(prox_step(np.zeros_like(y), y, DualState(lam=0.0), step=1.0), y, atol=1e-15)


def test_more_inner_steps_approach_the_exact_prox(rng):
    y = rng.normal(size=(30, 5))
    dual = DualState(lam=1.0)
    exact = prox_monotone_penalty(y, dual.lam)
    one = prox_step(y, y, dual, inner_iters=1)
    five = prox_step(y, y, dual, inner_iters=5)
    assert np.linalg.norm(five - exact) < np.linalg.norm(one - exact) < np.linalg.norm(y - exact)


def test_prox_step_accepts_single_rows():
    out = prox_step([1.0, 0.0, 0.0, 0.0, 0.0], np.zeros(5), DualState(lam=0.0), step=0.5)
    assert out.shape == (5,)
    assert_allclose(out, [0.5, 0, 0, 0, 0])


def test_prox_step_flags_a_diverging_step():
    with pytest.raises(StepSizeError):
        prox_step(np.zeros((1, 5)), np.ones((1, 5)), DualState(lam=0.0), step=10.0)
    with pytest.raises(DomainError):
        prox_step(np.zeros((1, 5)), np.ones((1, 5)), DualState(lam=0.0), step=0.0)


# ------------------------------------------------------------------------------
# conjugate gradient
# ------------------------------------------------------------------------------

@pytest.mark.parametrize("a, b, expected", [
    (np.eye(3), [1.0, -2.0, 0.5], [1.0, -2.0, 0.5]),
    (np.diag([1.0, 2.0]), [1.0, 2.0], [1.0, 1.0]),
    (np.array([[2.0, 1.0], [1.0, 2.0]]), [3.0, 3.0], [1.0, 1.0]),
])
def test_cg_examples(a, b, expected):
    assert_allclose(cg_solve(lambda w: a @ w, b), expected, atol=1e-10)


def test_cg_zero_rhs_and_bad_cap():
    assert_array_equal(cg_solve(lambda w: 2 * w, np.zeros(4)), np.zeros(4))
    with pytest.raises(DomainError):
        cg_solve(lambda w: w, [1.0], max_iter=0)


# ------------------------------------------------------------------------------
# implicit gradient
# ------------------------------------------------------------------------------

@pytest.mark.parametrize("spec", [PENALTY, CONE])
@pytest.mark.parametrize("lam", [0.1, 1.0])
def test_implicit_gradient_matches_finite_differences(spec, lam):
    assert implicit_gradient_error(np.random.default_rng(17), spec, lam) <= 1e-4


def test_zero_lambda_gives_the_semi_gradient(rng):
    cs = critic_state(rng, lam=0.0)
    batch = random_batch(rng)
    settings = CriticSettings(gamma=0.9, spec=PENALTY, exact_prox=True)
    result = critic_step(cs, batch, settings)
    _, cot = logged_action_cotangent(result.f, batch.actions, result.y)
    assert_allclose(result.grad, vjp(cs.theta, batch.states, cot))
    assert result.cg_iterations == 0


def test_fitted_targets_give_zero_gradient(rng):
    cs = critic_state(rng, lam=0.5)
    batch = random_batch(rng)
    settings = CriticSettings(gamma=0.0, spec=CONE, exact_prox=True)
    u = prox_layer(forward(cs.theta, batch.states), CONE, 0.5)
    fitted = Batch(batch.states, batch.actions, u[np.arange(batch.size), batch.actions], batch.next_states)
    result = critic_step(cs, fitted, settings)
    assert result.loss == 0.0
    assert_array_equal(result.grad, np.zeros(cs.theta.n_params))


def test_cone_rows_are_monotone_and_penalty_reported(rng):
    cs = critic_state(rng, lam=0.3)
    result = critic_step(cs, random_batch(rng, 16), CriticSettings())
    assert np.all(np.diff(result.q, axis=1) >= 0.0)
    assert result.c_value == pytest.approx(float(np.mean(monotone_penalty(result.u))))
    assert cs.cg_guess is not None


def test_soft_penalty_skips_the_layer(rng):
    cs = critic_state(rng, lam=0.4)
    batch = random_batch(rng)
    result = critic_step(cs, batch, CriticSettings(spec=PENALTY), soft_penalty=True)
    assert_array_equal(result.q, result.f)
    err, cot = logged_action_cotangent(result.f, batch.actions, result.y)
    expected = vjp(cs.theta, batch.states, cot + 0.4 * monotone_penalty_grad(result.f) / batch.size)
    assert_allclose(result.grad, expected)
    assert result.loss == pytest.approx(0.5 * np.mean(err ** 2) + 0.4 * result.c_value)


def test_warm_start_continues_the_prox_iteration(rng):
    cs = critic_state(rng, lam=1.0, n_transitions=8)
    batch = random_batch(rng)
    settings = CriticSettings(spec=PENALTY)
    first = critic_step(cs, batch, settings)
    remember_iterate(cs, batch, first)
    second = critic_step(cs, batch, settings)
    exact = prox_monotone_penalty(first.f, 1.0)
    assert np.linalg.norm(second.u - exact) < np.linalg.norm(first.u - exact)
    cold = critic_step(cs, batch, CriticSettings(spec=PENALTY, warm_start=False))
    assert_allclose(cold.u, first.u)


def test_logged_action_cotangent():
    q = np.arange(10.0).reshape(2, 5)
    err, cot = logged_action_cotangent(q, np.array([1, 4]), np.array([0.0, 10.0]))
    assert_allclose(err, [1.0, -1.0])
    expected = np.zeros((2, 5))
    expected[0, 1], expected[1, 4] = 0.5, -0.5
    assert_allclose(cot, expected)


# ------------------------------------------------------------------------------
# validation
# ------------------------------------------------------------------------------

def test_settings_validation():
    with pytest.raises(DomainError):
        CriticSettings(gamma=1.0)
    with pytest.raises(DomainError):
        CriticSettings(spec=ConstraintSpec(ConstraintKind.LIPSCHITZ_PENALTY))
    with pytest.raises(DomainError):
        CriticSettings(inner_iters=0)


def test_batch_validation_and_dataset_view(tiny_data):
    with pytest.raises(DomainError):
        Batch(np.zeros((2, 2)), [0, 5], np.zeros(2), np.zeros((2, 2)))
    with pytest.raises(DomainError):
        Batch(np.zeros((2, 2)), [0, 1], np.zeros(3), np.zeros((2, 2)))
    batch = Batch.from_dataset(tiny_data, np.array([4, 0, 9]))
    assert batch.size == 3
    assert_array_equal(batch.indices, [4, 0, 9])
    assert batch.transitions[0] == tiny_data[4]


def test_critic_state_needs_matching_networks():
    with pytest.raises(DomainError):
        CriticState(theta=init_mlp([2, 6, 5], seed=0), theta_bar=init_mlp([2, 4, 5], seed=0))


# ------------------------------------------------------------------------------
# loss placement, warm-start memory, gradient bound
# ------------------------------------------------------------------------------

def test_cone_gradient_ignores_the_projection_at_zero_lambda(rng):
    cs = critic_state(rng, lam=0.0)
    batch = random_batch(rng, 32)
    result = critic_step(cs, batch, CriticSettings(gamma=0.9, spec=CONE, exact_prox=True))
    _, cot = logged_action_cotangent(result.f, batch.actions, result.y)
    assert_allclose(result.grad, vjp(cs.theta, batch.states, cot))


def test_pooled_actions_get_distinct_updates():
    # one row whose last three actions pool under the projection
    theta = init_mlp([2, 3, 5], seed=0)
    out_w, out_b = theta.layers[-1]
    out_w[:] = 0.0
    out_b[:] = [0.56, 0.60, 0.63, 0.62, 0.60]
    cs = CriticState.create(theta, DualState(lam=0.0))
    batch = Batch(states=[[0.5, 0.5]], actions=[2], rewards=[0.0], next_states=[[0.5, 0.5]])
    result = critic_step(cs, batch, CriticSettings(gamma=0.0, spec=CONE, exact_prox=True))
    assert result.q[0, 2] == result.q[0, 4]
    bias_grad = result.grad[-5:]
    assert bias_grad[2] == pytest.approx(0.63)
    assert_array_equal(bias_grad[[0, 1, 3, 4]], np.zeros(4))


def test_warm_start_follows_a_shifted_network(rng):
    cs = critic_state(rng, lam=1.0, n_transitions=8)
    batch = random_batch(rng)
    settings = CriticSettings(spec=CONE)
    first = critic_step(cs, batch, settings)
    remember_iterate(cs, batch, first)
    second = critic_step(cs, batch, settings)

    cs.theta = cs.theta.copy()
    cs.theta.layers[-1][1][:] += 5.0
    shifted = critic_step(cs, batch, settings)
    assert_allclose(shifted.f, second.f + 5.0, atol=1e-12)
    assert_allclose(shifted.u, second.u + 5.0, atol=1e-10)
    assert_allclose(shifted.q, second.q + 5.0, atol=1e-10)


def test_remember_iterate_stores_the_correction(rng):
    cs = critic_state(rng, lam=1.0, n_transitions=16)
    batch = random_batch(rng)
    result = critic_step(cs, batch, CriticSettings(spec=PENALTY))
    remember_iterate(cs, batch, result)
    assert_allclose(cs.shift_prev[batch.indices], result.u - result.f)
    assert np.all(np.isnan(cs.shift_prev[8:]))


def test_clip_grad_norm():
    grad = np.array([3.0, 4.0])
    clipped, norm = clip_grad_norm(grad, 1.0)
    assert norm == pytest.approx(5.0)
    assert_allclose(clipped, [0.6, 0.8])
    assert clip_grad_norm(grad, None)[0] is grad
    assert clip_grad_norm(grad, 10.0)[0] is grad


def test_critic_step_bounds_the_gradient(rng):
    cs = critic_state(rng, lam=0.5)
    batch = Batch(states=rng.uniform(size=(8, 2)), actions=rng.integers(0, 5, size=8),
                  rewards=np.full(8, 1e4), next_states=rng.uniform(size=(8, 2)))
    result = critic_step(cs, batch, CriticSettings(spec=CONE, max_grad_norm=1e-3))
    assert result.grad_norm > 1e-3
    assert np.linalg.norm(result.grad) == pytest.approx(1e-3)
