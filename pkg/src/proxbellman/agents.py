"""
Offline agents: the constraint-aware actor-critic and its baselines

    constraint_aware  warm-started prox critic, implicit gradient, dual ascent on lambda
    fitted_q          plain TD with a target network and the same soft actor
    iql               expectile value regression + advantage-weighted policy extraction
    cql               TD plus the logsumexp conservative penalty
    bc                behavior cloning (cross-entropy on logged actions)

Every trainer returns a TrainResult that unpacks as (critic, policy, trace).
"""

import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
from scipy.special import log_softmax, logsumexp, softmax

from .approximator import MlpParams, Sgd, forward, init_mlp, polyak_average, spectral_normalize, vjp
from .bidclick_env import (
    Dataset,
    analytic_q,
    count_monotonicity_errors,
    evaluation_grid,
    generate_dataset,
    optimal_value,
    sample_states,
    stream_rng,
)
from .config import TrainConfig, apply_variant
from .constraint_ops import N_ACTIONS, ConstraintSpec, DualState, dual_update, monotone_penalty, monotone_penalty_grad
from .errors import ConfigError, DomainError, TrainingError
from .implicit_critic import (
    Batch,
    CriticState,
    bellman_targets,
    clip_grad_norm,
    critic_step,
    logged_action_cotangent,
    q_values,
    remember_iterate,
)
from .trace import TraceRow, TrainingTrace

logger = logging.getLogger(__name__)

STATE_DIM = 2
EVAL_STREAM = 7
RESIDUAL_SEED_OFFSET = 10_000

QFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class PolicyParams:
    """Softmax policy over the 5 bids from actor logits"""
    phi: MlpParams
    temperature: float = 0.01

    def logits(self, states) -> np.ndarray:
        return forward(self.phi, states)

    def probs(self, states) -> np.ndarray:
        return softmax(np.atleast_2d(self.logits(states)), axis=1)


@dataclass
class TrainResult:
    agent: str
    critic: Optional[CriticState]
    policy: PolicyParams
    trace: TrainingTrace
    q_fn: QFn
    residual_at_convergence: float = float("nan")
    extras: Dict[str, Any] = field(default_factory=dict)

    def __iter__(self) -> Iterator[Any]:
        return iter((self.critic, self.policy, self.trace))


# ==============================================================================
# EVALUATION
# ==============================================================================

def policy_values(policy: Union[PolicyParams, Callable[[np.ndarray], np.ndarray]], states) -> np.ndarray:
    """Exact expected one-step reward sum_a pi(a|s) E[r | s, a] per state"""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    probs = policy.probs(states) if isinstance(policy, PolicyParams) else np.atleast_2d(policy(states))
    return np.sum(probs * analytic_q(states), axis=1)


def evaluation_states(n_states: int = 10_000, seed: int = 0) -> np.ndarray:
    return sample_states(stream_rng(seed, EVAL_STREAM), n_states)


def evaluate_policy(policy: Union[PolicyParams, Callable[[np.ndarray], np.ndarray]],
                    n_states: int = 10_000, seed: int = 0,
                    states: Optional[np.ndarray] = None) -> Tuple[float, float]:
    """(return_norm, regret_norm): mean policy value and mean gap to the one-step oracle"""
    states = evaluation_states(n_states, seed) if states is None else states
    values = policy_values(policy, states)
    return float(np.mean(values)), float(np.mean(optimal_value(states) - values))


def residual_at_convergence(q_fn: QFn, data: Dataset, gamma: float) -> float:
    """Mean absolute Bellman residual |Q(s, a) - (r + gamma max Q(s', .))| over data"""
    q = np.atleast_2d(q_fn(data.states()))
    q_next = np.atleast_2d(q_fn(data.next_states()))
    target = data.r + gamma * np.max(q_next, axis=1)
    return float(np.mean(np.abs(q[np.arange(len(data)), data.a] - target)))


@dataclass
class Evaluator:
    """Frozen evaluation grid (monotonicity) and evaluation states (return)"""
    grid: np.ndarray
    states: np.ndarray
    tol: float = 1e-6

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> "Evaluator":
        return cls(grid=evaluation_grid(*cfg.eval_grid), states=evaluation_states(cfg.eval_states, cfg.seed),
                   tol=cfg.eval_tol)

    def __call__(self, policy: PolicyParams, q_fn: QFn) -> Tuple[float, int]:
        ret, _ = evaluate_policy(policy, states=self.states)
        return ret, count_monotonicity_errors(q_fn, self.grid, self.tol)


# ==============================================================================
# ACTOR
# ==============================================================================

def soft_optimal_policy(q_rows, alpha: float) -> np.ndarray:
    """Maximizer of sum_a pi (Q - alpha log pi): softmax(Q / alpha), greedy at alpha = 0"""
    q = np.atleast_2d(np.asarray(q_rows, dtype=float))
    if alpha < 0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    if alpha == 0.0:
        return np.eye(q.shape[1])[np.argmax(q, axis=1)]
    return softmax(q / alpha, axis=1)


def soft_objective(logits: np.ndarray, q_rows: np.ndarray, alpha: float) -> np.ndarray:
    """Per-state J = sum_a pi(a|s) [Q(s, a) - alpha log pi(a|s)]"""
    log_pi = log_softmax(logits, axis=1)
    return np.sum(np.exp(log_pi) * (q_rows - alpha * log_pi), axis=1)


def soft_objective_logit_grad(logits: np.ndarray, q_rows: np.ndarray, alpha: float) -> np.ndarray:
    """dJ / dlogits = pi * (Q - alpha log pi - J), exact expectation over the 5 actions"""
    log_pi = log_softmax(logits, axis=1)
    pi = np.exp(log_pi)
    adv = q_rows - alpha * log_pi
    return pi * (adv - np.sum(pi * adv, axis=1, keepdims=True))


def score_function_logit_grad(logits: np.ndarray, q_rows: np.ndarray, alpha: float,
                              rng: np.random.Generator) -> np.ndarray:
    """One-sample likelihood-ratio estimate of dJ / dlogits with the state value as baseline"""
    log_pi = log_softmax(logits, axis=1)
    pi = np.exp(log_pi)
    adv = q_rows - alpha * log_pi
    baseline = np.sum(pi * adv, axis=1)
    draws = rng.random(len(pi))
    actions = np.minimum(np.sum(np.cumsum(pi, axis=1) < draws[:, None], axis=1), pi.shape[1] - 1)
    rows = np.arange(len(pi))
    onehot = np.zeros_like(pi)
    onehot[rows, actions] = 1.0
    return (adv[rows, actions] - baseline)[:, None] * (onehot - pi)


def score_penalty_logit_grad(logits: np.ndarray, q_rows: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Monotone penalty of the scores pi(a|s) Q(s, a) and its gradient in the logits"""
    pi = softmax(logits, axis=1)
    scores = pi * q_rows
    weights = monotone_penalty_grad(scores) * q_rows
    return monotone_penalty(scores), pi * (weights - np.sum(pi * weights, axis=1, keepdims=True))


def _actor_step(policy: PolicyParams, q_rows: np.ndarray, states: np.ndarray, optimizer: Sgd,
                cfg: TrainConfig, rng: Optional[np.random.Generator] = None,
                score_lam: Optional[float] = None) -> Tuple[PolicyParams, float]:
    """One ascent step on the soft policy objective; returns the new policy and mean score penalty"""
    logits = forward(policy.phi, states)
    if cfg.score_function_actor:
        if rng is None:
            raise DomainError("score-function actor needs a random generator")
        ascent = score_function_logit_grad(logits, q_rows, policy.temperature, rng)
    else:
        ascent = soft_objective_logit_grad(logits, q_rows, policy.temperature)
    descent = -ascent
    c_scores = 0.0
    if score_lam is not None:
        penalties, penalty_grad = score_penalty_logit_grad(logits, q_rows)
        c_scores = float(np.mean(penalties))
        descent = descent + score_lam * penalty_grad
    grad = vjp(policy.phi, states, descent / len(states))
    return PolicyParams(optimizer.step(policy.phi, grad), policy.temperature), c_scores


def actor_update(policy: PolicyParams, critic: CriticState, batch: Batch, cfg: TrainConfig,
                 optimizer: Optional[Sgd] = None, spec: Optional[ConstraintSpec] = None,
                 rng: Optional[np.random.Generator] = None) -> PolicyParams:
    """One step of the soft policy objective against the (constrained) critic"""
    optimizer = optimizer or Sgd(cfg.eta_phi, cfg.momentum)
    q_rows = q_values(critic.theta, batch.states, spec, critic.dual.lam, cfg.prox_tol)
    if not np.all(np.isfinite(q_rows)):
        raise DomainError("critic Q-values must be finite for the actor update")
    return _actor_step(policy, q_rows, batch.states, optimizer, cfg, rng)[0]


# ==============================================================================
# SHARED LOOP PIECES
# ==============================================================================

@dataclass
class _Streams:
    critic: np.random.Generator
    actor: np.random.Generator
    batches: np.random.Generator
    extra: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "_Streams":
        return cls(*[np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)])


def _network_sizes(cfg: TrainConfig, out: int = N_ACTIONS) -> List[int]:
    return [STATE_DIM, *cfg.hidden, out]


def _check_dataset(data: Dataset) -> None:
    if len(data) == 0:
        raise DomainError("dataset must be non-empty")


def _sample_batch(data: Dataset, cfg: TrainConfig, rng: np.random.Generator) -> Batch:
    return Batch.from_dataset(data, rng.integers(0, len(data), size=cfg.batch_size))


def _guard(value: float, what: str, step: int, trace: TrainingTrace) -> None:
    if not np.isfinite(value):
        raise TrainingError(f"{what} is not finite", step=step, trace=list(trace.rows))


def _record(trace: TrainingTrace, row: TraceRow, step: int, cfg: TrainConfig, evaluator: Evaluator,
            policy: PolicyParams, q_fn: QFn, agent: str) -> None:
    if step % cfg.eval_every == 0 or step == cfg.steps:
        row.eval_return, row.monotonicity_errors = evaluator(policy, q_fn)
        logger.info(f"[TRAIN] {agent} {row.to_log_str()}")
    trace.append(row)


def _finish(agent: str, critic: Optional[CriticState], policy: PolicyParams, trace: TrainingTrace,
            q_fn: QFn, cfg: TrainConfig, started: float, **extras) -> TrainResult:
    eval_data = generate_dataset(cfg.eval_states, cfg.seed + RESIDUAL_SEED_OFFSET)
    residual = residual_at_convergence(q_fn, eval_data, cfg.gamma) if critic is not None else float("nan")
    logger.info(f"[TRAIN] {agent} finished {cfg.steps} steps in {time.perf_counter() - started:.1f}s "
                f"(residual at convergence {residual:.4g})")
    return TrainResult(agent=agent, critic=critic, policy=policy, trace=trace, q_fn=q_fn,
                       residual_at_convergence=residual, extras=dict(extras))


def _frozen_q_fn(theta: MlpParams, spec: Optional[ConstraintSpec], lam: float, tol: float) -> QFn:
    return lambda states: q_values(theta, states, spec, lam, tol)


# ==============================================================================
# CONSTRAINT-AWARE AGENT
# ==============================================================================

def train_constraint_aware(data: Dataset, cfg: TrainConfig) -> TrainResult:
    """Warm-started prox critic with implicit gradients, dual ascent and a soft actor"""
    _check_dataset(data)
    cfg = apply_variant(cfg)
    started = time.perf_counter()
    streams = _Streams.from_seed(cfg.seed)
    settings = cfg.critic_settings()
    layer_spec = settings.spec
    theta = init_mlp(_network_sizes(cfg), cfg.activation, rng=streams.critic)
    policy = PolicyParams(init_mlp(_network_sizes(cfg), cfg.activation, rng=streams.actor), cfg.alpha_entropy)
    cs = CriticState.create(theta, cfg.initial_dual(),
                            len(data) if layer_spec is not None and cfg.warm_start else None)
    critic_opt = Sgd(cfg.eta_theta, cfg.momentum)
    actor_opt = Sgd(cfg.eta_phi, cfg.momentum)
    evaluator = Evaluator.from_config(cfg)
    trace = TrainingTrace()
    uses_dual = cfg.learns_lambda and (layer_spec is not None or cfg.soft_penalty or cfg.actor_constraint)
    name = f"constraint_aware[{cfg.variant.value}]"
    logger.info(f"[TRAIN] {name}: {cfg.steps} steps, batch {cfg.batch_size}, lambda0={cs.dual.lam}")

    for step in range(1, cfg.steps + 1):
        batch = _sample_batch(data, cfg, streams.batches)
        try:
            res = critic_step(cs, batch, settings, soft_penalty=cfg.soft_penalty)
        except TrainingError as exc:
            raise TrainingError(exc.reason, step=step, trace=list(trace.rows)) from exc
        _guard(res.loss, "critic loss", step, trace)
        if layer_spec is not None:
            remember_iterate(cs, batch, res)

        cs.theta = critic_opt.step(cs.theta, res.grad)
        if cfg.spectral_norm:
            cs.theta = spectral_normalize(cs.theta, cfg.power_iters)
        if not cs.theta.is_finite():
            raise TrainingError("critic parameters are not finite", step=step, trace=list(trace.rows))

        policy, c_scores = _actor_step(policy, res.q, batch.states, actor_opt, cfg, streams.extra,
                                       score_lam=cs.dual.lam if cfg.actor_constraint else None)
        c_value = c_scores if cfg.actor_constraint else res.c_value
        if uses_dual:
            cs.dual = dual_update(cs.dual, c_value)
        cs.theta_bar = polyak_average(cs.theta_bar, cs.theta, cfg.tau)

        q_fn = _frozen_q_fn(cs.theta, layer_spec, cs.dual.lam, cfg.prox_tol)
        _record(trace, TraceRow(step, res.loss, c_value, cs.dual.lam), step, cfg, evaluator, policy, q_fn, name)

    q_fn = _frozen_q_fn(cs.theta, layer_spec, cs.dual.lam, cfg.prox_tol)
    return _finish(name, cs, policy, trace, q_fn, cfg, started)


# ==============================================================================
# TD BASELINES (fitted Q, CQL)
# ==============================================================================

def cql_penalty(q_rows, actions) -> float:
    """mean_i [logsumexp_a Q(s_i, a) - Q(s_i, a_i)]"""
    q = np.atleast_2d(np.asarray(q_rows, dtype=float))
    actions = np.asarray(actions, dtype=np.int64)
    return float(np.mean(logsumexp(q, axis=1) - q[np.arange(len(q)), actions]))


def cql_penalty_grad(q_rows: np.ndarray, actions: np.ndarray) -> np.ndarray:
    grad = softmax(q_rows, axis=1)
    grad[np.arange(len(q_rows)), actions] -= 1.0
    return grad / len(q_rows)


def _train_td(data: Dataset, cfg: TrainConfig, agent: str, cql_weight: float = 0.0) -> TrainResult:
    _check_dataset(data)
    started = time.perf_counter()
    streams = _Streams.from_seed(cfg.seed)
    theta = init_mlp(_network_sizes(cfg), cfg.activation, rng=streams.critic)
    policy = PolicyParams(init_mlp(_network_sizes(cfg), cfg.activation, rng=streams.actor), cfg.alpha_entropy)
    cs = CriticState.create(theta, DualState(lam=0.0, eta_lambda=cfg.eta_lambda))
    critic_opt = Sgd(cfg.eta_theta, cfg.momentum)
    actor_opt = Sgd(cfg.eta_phi, cfg.momentum)
    evaluator = Evaluator.from_config(cfg)
    trace = TrainingTrace()
    logger.info(f"[TRAIN] {agent}: {cfg.steps} steps, batch {cfg.batch_size}")

    for step in range(1, cfg.steps + 1):
        batch = _sample_batch(data, cfg, streams.batches)
        f = forward(cs.theta, batch.states)
        try:
            y = bellman_targets(batch, cs.theta_bar, cfg.gamma)
        except TrainingError as exc:
            raise TrainingError(exc.reason, step=step, trace=list(trace.rows)) from exc
        err, cot = logged_action_cotangent(f, batch.actions, y)
        loss = 0.5 * float(np.mean(err ** 2))
        if cql_weight > 0.0:
            cot = cot + cql_weight * cql_penalty_grad(f, batch.actions)
            loss += cql_weight * cql_penalty(f, batch.actions)
        _guard(loss, "critic loss", step, trace)
        c_value = float(np.mean(monotone_penalty(f)))

        grad, _ = clip_grad_norm(vjp(cs.theta, batch.states, cot), cfg.critic_grad_clip)
        cs.theta = critic_opt.step(cs.theta, grad)
        if cfg.spectral_norm:
            cs.theta = spectral_normalize(cs.theta, cfg.power_iters)
        if not cs.theta.is_finite():
            raise TrainingError("critic parameters are not finite", step=step, trace=list(trace.rows))
        policy, _ = _actor_step(policy, f, batch.states, actor_opt, cfg, streams.extra)
        cs.theta_bar = polyak_average(cs.theta_bar, cs.theta, cfg.tau)

        q_fn = _frozen_q_fn(cs.theta, None, 0.0, cfg.prox_tol)
        _record(trace, TraceRow(step, loss, c_value, cs.dual.lam), step, cfg, evaluator, policy, q_fn, agent)

    return _finish(agent, cs, policy, trace, _frozen_q_fn(cs.theta, None, 0.0, cfg.prox_tol), cfg, started)


def train_fitted_q(data: Dataset, cfg: TrainConfig) -> TrainResult:
    """Unconstrained TD critic with a target network and the soft actor"""
    return _train_td(data, cfg, "fitted_q")


def train_cql(data: Dataset, cfg: TrainConfig, cql_weight: Optional[float] = None) -> TrainResult:
    """TD loss plus cql_weight * mean(logsumexp Q - Q(s, a_logged))"""
    weight = cfg.cql_weight if cql_weight is None else cql_weight
    if not weight > 0:
        raise ConfigError(f"cql_weight must be > 0, got {weight}")
    return _train_td(data, cfg, "cql", cql_weight=weight)


# ==============================================================================
# IQL
# ==============================================================================

def expectile_loss(u, tau: float) -> np.ndarray:
    """|tau - 1(u < 0)| * u^2 per sample"""
    if not 0.0 < tau < 1.0:
        raise DomainError(f"expectile must lie in (0, 1), got {tau}")
    u = np.asarray(u, dtype=float)
    return np.abs(tau - (u < 0.0)) * u ** 2


def awr_weights(advantage: np.ndarray, temperature: float, clip: float) -> np.ndarray:
    return np.minimum(np.exp(temperature * advantage), clip)


def train_iql(data: Dataset, cfg: TrainConfig, expectile: Optional[float] = None) -> TrainResult:
    """Expectile value net, TD critic on r + gamma V(s'), advantage-weighted policy"""
    tau_e = cfg.expectile if expectile is None else expectile
    if not 0.5 < tau_e < 1.0:
        raise ConfigError(f"expectile must lie in (0.5, 1), got {tau_e}")
    _check_dataset(data)
    started = time.perf_counter()
    streams = _Streams.from_seed(cfg.seed)
    theta = init_mlp(_network_sizes(cfg), cfg.activation, rng=streams.critic)
    policy = PolicyParams(init_mlp(_network_sizes(cfg), cfg.activation, rng=streams.actor), cfg.alpha_entropy)
    value = init_mlp(_network_sizes(cfg, out=1), cfg.activation, rng=streams.extra)
    cs = CriticState.create(theta, DualState(lam=0.0, eta_lambda=cfg.eta_lambda))
    critic_opt = Sgd(cfg.eta_theta, cfg.momentum)
    value_opt = Sgd(cfg.eta_theta, cfg.momentum)
    actor_opt = Sgd(cfg.eta_phi, cfg.momentum)
    evaluator = Evaluator.from_config(cfg)
    trace = TrainingTrace()
    logger.info(f"[TRAIN] iql: {cfg.steps} steps, expectile {tau_e}")

    for step in range(1, cfg.steps + 1):
        batch = _sample_batch(data, cfg, streams.batches)
        rows = np.arange(batch.size)
        q_bar = forward(cs.theta_bar, batch.states)[rows, batch.actions]
        v = forward(value, batch.states)[:, 0]
        u = q_bar - v
        v_cot = (-2.0 * np.abs(tau_e - (u < 0.0)) * u / batch.size)[:, None]

        v_next = forward(value, batch.next_states)[:, 0]
        f = forward(cs.theta, batch.states)
        err, cot = logged_action_cotangent(f, batch.actions, batch.rewards + cfg.gamma * v_next)
        loss = 0.5 * float(np.mean(err ** 2))
        _guard(loss + float(np.mean(expectile_loss(u, tau_e))), "IQL loss", step, trace)

        value = value_opt.step(value, vjp(value, batch.states, v_cot))
        grad, _ = clip_grad_norm(vjp(cs.theta, batch.states, cot), cfg.critic_grad_clip)
        cs.theta = critic_opt.step(cs.theta, grad)
        if cfg.spectral_norm:
            cs.theta = spectral_normalize(cs.theta, cfg.power_iters)
        if not (cs.theta.is_finite() and value.is_finite()):
            raise TrainingError("IQL parameters are not finite", step=step, trace=list(trace.rows))

        logits = forward(policy.phi, batch.states)
        weights = awr_weights(u, cfg.awr_temperature, cfg.awr_weight_clip)
        logit_grad = softmax(logits, axis=1)
        logit_grad[rows, batch.actions] -= 1.0
        logit_grad *= weights[:, None] / batch.size
        policy = PolicyParams(actor_opt.step(policy.phi, vjp(policy.phi, batch.states, logit_grad)),
                              policy.temperature)
        cs.theta_bar = polyak_average(cs.theta_bar, cs.theta, cfg.tau)

        q_fn = _frozen_q_fn(cs.theta, None, 0.0, cfg.prox_tol)
        row = TraceRow(step, loss, float(np.mean(monotone_penalty(f))), 0.0)
        _record(trace, row, step, cfg, evaluator, policy, q_fn, "iql")

    return _finish("iql", cs, policy, trace, _frozen_q_fn(cs.theta, None, 0.0, cfg.prox_tol), cfg, started,
                   value=value)


# ==============================================================================
# BEHAVIOR CLONING
# ==============================================================================

def behavior_accuracy(policy: PolicyParams, data: Dataset) -> float:
    return float(np.mean(np.argmax(policy.logits(data.states()), axis=1) == data.a))


def train_bc(data: Dataset, cfg: TrainConfig) -> TrainResult:
    """Cross-entropy fit of the actor to the logged actions; errors are counted on its logits"""
    _check_dataset(data)
    started = time.perf_counter()
    streams = _Streams.from_seed(cfg.seed)
    policy = PolicyParams(init_mlp(_network_sizes(cfg), cfg.activation, rng=streams.actor), cfg.alpha_entropy)
    actor_opt = Sgd(cfg.eta_phi, cfg.momentum)
    evaluator = Evaluator.from_config(cfg)
    trace = TrainingTrace()
    logger.info(f"[TRAIN] bc: {cfg.steps} steps, batch {cfg.batch_size}")

    for step in range(1, cfg.steps + 1):
        batch = _sample_batch(data, cfg, streams.batches)
        rows = np.arange(batch.size)
        logits = forward(policy.phi, batch.states)
        log_pi = log_softmax(logits, axis=1)
        loss = -float(np.mean(log_pi[rows, batch.actions]))
        _guard(loss, "cross-entropy", step, trace)
        logit_grad = np.exp(log_pi)
        logit_grad[rows, batch.actions] -= 1.0
        policy = PolicyParams(actor_opt.step(policy.phi, vjp(policy.phi, batch.states, logit_grad / batch.size)),
                              policy.temperature)
        row = TraceRow(step, loss, float(np.mean(monotone_penalty(logits))), 0.0)
        _record(trace, row, step, cfg, evaluator, policy, policy.logits, "bc")

    return _finish("bc", None, policy, trace, policy.logits, cfg, started,
                   accuracy=behavior_accuracy(policy, data))


# ==============================================================================
# AGENT INTERFACE
# ==============================================================================

class OfflineAgent(ABC):
    name: str = "agent"

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg

    @abstractmethod
    def train(self, data: Dataset) -> TrainResult:
        """Fit on a fixed dataset and return parameters plus the training trace"""


class ConstraintAwareAgent(OfflineAgent):
    name = "constraint_aware"

    def train(self, data: Dataset) -> TrainResult:
        return train_constraint_aware(data, self.cfg)


class FittedQAgent(OfflineAgent):
    name = "fitted_q"

    def train(self, data: Dataset) -> TrainResult:
        return train_fitted_q(data, self.cfg)


class IqlAgent(OfflineAgent):
    name = "iql"

    def train(self, data: Dataset) -> TrainResult:
        return train_iql(data, self.cfg)


class CqlAgent(OfflineAgent):
    name = "cql"

    def train(self, data: Dataset) -> TrainResult:
        return train_cql(data, self.cfg)


class BcAgent(OfflineAgent):
    name = "bc"

    def train(self, data: Dataset) -> TrainResult:
        return train_bc(data, self.cfg)


AGENTS = {cls.name: cls for cls in (ConstraintAwareAgent, FittedQAgent, IqlAgent, CqlAgent, BcAgent)}
_ALIASES = {"ours": "constraint_aware", "fqi": "fitted_q", "behavior_cloning": "bc"}


def get_agent(name: str, cfg: TrainConfig) -> OfflineAgent:
    key = _ALIASES.get(name.lower(), name.lower())
    if key not in AGENTS:
        raise ConfigError(f"unknown agent '{name}' (known: {', '.join(sorted(AGENTS))})")
    return AGENTS[key](cfg)
