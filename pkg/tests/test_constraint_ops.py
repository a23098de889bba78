import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from proxbellman.constraint_ops import (
    ConstraintKind,
    ConstraintSpec,
    DualState,
    as_qrow,
    dual_update,
    lipschitz_penalty,
    lipschitz_penalty_grad,
    monotone_penalty,
    monotone_penalty_grad,
    monotone_penalty_hvp,
    project_monotone_cone,
    prox_for_spec,
    prox_lipschitz_penalty,
    prox_monotone_penalty,
)
from proxbellman.errors import DomainError, ProxSolverError

LIP = ConstraintKind.LIPSCHITZ_PENALTY


@pytest.mark.parametrize("q, expected", [
    ([0, 0.25, 0.5, 0.75, 1], 0.0),
    ([0.7] * 5, 0.0),
    ([0.5, 0.4, 0.6, 0.6, 0.7], 0.01),
])
def test_monotone_penalty_values(q, expected):
    assert monotone_penalty(q) == pytest.approx(expected, abs=1e-15)


def test_monotone_penalty_batches_rows():
    rows = np.array([[0, 1, 2, 3, 4], [1, 0, 0, 0, 0]], dtype=float)
    assert_allclose(monotone_penalty(rows), [0.0, 1.0])


def test_penalty_rejects_non_finite():
    with pytest.raises(DomainError):
        monotone_penalty([0, np.nan, 1, 2, 3])


def test_qrow_shape_is_checked():
    with pytest.raises(DomainError):
        as_qrow([1, 2, 3])


def test_penalty_grad_hand_values():
    assert_array_equal(monotone_penalty_grad([1, 0, 0, 0, 0]), [2, -2, 0, 0, 0])
    assert_array_equal(monotone_penalty_grad([0, 1, 2, 3, 4]), np.zeros(5))


def test_hvp_matches_grad_differences(rng):
    q = rng.normal(size=5)
    w = rng.normal(size=5)
    h = 1e-7
    fd = (monotone_penalty_grad(q + h * w) - monotone_penalty_grad(q - h * w)) / (2 * h)
    assert_allclose(monotone_penalty_hvp(q, w), fd, atol=1e-6)


@pytest.mark.parametrize("q, expected", [
    ([1, 2, 3, 4, 5], [1, 2, 3, 4, 5]),
    ([3, 1, 2, 4, 5], [2, 2, 2, 4, 5]),
    ([5, 4, 3, 2, 1], [3, 3, 3, 3, 3]),
])
def test_cone_projection_examples(q, expected):
    assert_allclose(project_monotone_cone(q), expected, atol=1e-12)


def test_cone_projection_is_nondecreasing_and_idempotent(rng):
    p = project_monotone_cone(rng.normal(size=(200, 5)))
    assert np.all(np.diff(p, axis=1) >= 0.0)
    assert_array_equal(project_monotone_cone(p), p)


def test_prox_identity_at_zero_lambda(rng):
    y = rng.normal(size=(10, 5))
    assert_array_equal(prox_monotone_penalty(y, 0.0), y)


def test_prox_leaves_feasible_rows(rng):
    y = np.sort(rng.normal(size=(10, 5)), axis=1)
    assert_array_equal(prox_monotone_penalty(y, 3.0), y)


def test_prox_two_action_hand_solution():
    # 0.5(u0-1)^2 + 0.5 u1^2 + (u0-u1)^2 is minimized at u0 - u1 = 1/5
    assert_allclose(prox_monotone_penalty(np.array([1.0, 0.0]), 1.0), [0.6, 0.4], atol=1e-12)


@pytest.mark.parametrize("lam", [0.01, 0.1, 1.0, 10.0])
def test_prox_optimality_residual(rng, lam):
    y = rng.normal(size=(100, 5))
    u = prox_monotone_penalty(y, lam, tol=1e-10)
    assert np.max(np.abs(u - y + lam * monotone_penalty_grad(u))) <= 1e-9


def test_prox_large_lambda_approaches_projection():
    assert_allclose(prox_monotone_penalty([3, 1, 2, 4, 5], 1e6), [2, 2, 2, 4, 5], atol=1e-3)


def test_prox_reports_non_convergence():
    with pytest.raises(ProxSolverError) as info:
        prox_monotone_penalty([3, 1, 2, 4, 5], 1.0, max_iter=0)
    assert info.value.residual > 0
    assert info.value.iterations == 0


def test_prox_rejects_negative_lambda():
    with pytest.raises(DomainError):
        prox_monotone_penalty([0, 1, 2, 3, 4], -1.0)


def test_lipschitz_penalty_examples():
    assert lipschitz_penalty(np.full((4, 3), 2.0), ConstraintSpec(LIP, 0.1)) == 0.0
    assert lipschitz_penalty([0.0, 1.0], ConstraintSpec(LIP, 1.0)) == 0.0
    assert lipschitz_penalty([0.0, 1.0], ConstraintSpec(LIP, 0.5)) == pytest.approx(0.25)


def test_lipschitz_penalty_needs_two_points_per_axis():
    with pytest.raises(DomainError):
        lipschitz_penalty([1.0], ConstraintSpec(LIP, 1.0))
    with pytest.raises(DomainError):
        lipschitz_penalty(np.zeros((1, 4)), ConstraintSpec(LIP, 1.0))


def test_lipschitz_grad_matches_differences(rng):
    spec = ConstraintSpec(LIP, 0.5, grid_spacing=(0.5, 0.25))
    v = rng.normal(size=(4, 3))
    grad = lipschitz_penalty_grad(v, spec)
    h = 1e-6
    for idx in np.ndindex(v.shape):
        e = np.zeros_like(v)
        e[idx] = h
        fd = (lipschitz_penalty(v + e, spec) - lipschitz_penalty(v - e, spec)) / (2 * h)
        assert grad[idx] == pytest.approx(fd, abs=1e-5)


def test_lipschitz_prox_hand_solution():
    # stationarity gives u1 - u0 = 7/5 for y = (0, 3), L = 1, lambda = 1
    assert_allclose(prox_lipschitz_penalty([0.0, 3.0], 1.0, ConstraintSpec(LIP, 1.0)), [0.8, 2.2], atol=1e-10)


def test_lipschitz_prox_on_2d_grid(rng):
    spec = ConstraintSpec(LIP, 0.5)
    y = rng.normal(size=(6, 5))
    u = prox_lipschitz_penalty(y, 2.0, spec)
    assert u.shape == y.shape
    assert np.max(np.abs(u - y + 2.0 * lipschitz_penalty_grad(u, spec))) <= 1e-9
    assert lipschitz_penalty(u, spec) < lipschitz_penalty(y, spec)


def test_prox_for_spec_dispatch(rng):
    y = rng.normal(size=(8, 5))
    cone = ConstraintSpec(ConstraintKind.MONOTONE_CONE)
    assert_array_equal(prox_for_spec(y, cone, 0.0), y)
    assert_array_equal(prox_for_spec(y, cone, 0.3), project_monotone_cone(y))
    assert_allclose(prox_for_spec(y, ConstraintSpec(), 0.3), prox_monotone_penalty(y, 0.3))


@pytest.mark.parametrize("lam, eta, c, expected", [
    (0.1, 0.05, 0.2, 0.11),
    (0.0, 0.7, 0.0, 0.0),
    (0.1, 1.0, 0.01, 0.11),
])
def test_dual_update_examples(lam, eta, c, expected):
    assert dual_update(DualState(lam, eta), c).lam == pytest.approx(expected)


def test_dual_update_keeps_step_and_rejects_negative_violation():
    d = dual_update(DualState(0.1, 0.3), 0.5)
    assert d.eta_lambda == 0.3
    with pytest.raises(DomainError):
        dual_update(d, -0.1)


def test_spec_validation():
    with pytest.raises(DomainError):
        ConstraintSpec(LIP, lipschitz_bound=0.0)
    with pytest.raises(DomainError):
        ConstraintSpec(grid_spacing=-1.0)
    assert ConstraintSpec("monotone_cone").is_monotone
    assert not ConstraintSpec(LIP).is_monotone
