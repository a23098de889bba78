"""
Constraint-aware critic update

The critic network f_theta(s) gives one raw score per action. Its Q-row is the output of a
constraint layer: the exact prox of lam * C around f_theta(s), followed by the cone projection
when the monotone cone is active. Training replaces the exact prox with a few warm-started
proximal-gradient steps and differentiates through the optimality condition

    g(u, theta) = u - f_theta(s) + lam * grad C(u) = 0

so the outer gradient is vjp(f_theta, s, z) with z = (I + lam * hess C(u))^-1 cot, solved by
conjugate gradients. The Bellman loss is taken on the prox iterate u; the cone projection only
shapes the rows the targets, the actor and evaluation read, and passes no Jacobian back.

The warm-start memory holds the prox correction u - f per transition, so a revisited row
restarts from f_theta(s) + correction and follows the network exactly in every direction the
penalty does not act on.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .approximator import FlatGrad, MlpParams, forward, vjp
from .bidclick_env import Dataset, State, Transition
from .constraint_ops import (
    N_ACTIONS,
    ConstraintKind,
    ConstraintSpec,
    DualState,
    monotone_penalty,
    monotone_penalty_grad,
    monotone_penalty_hvp,
    project_monotone_cone,
    prox_monotone_penalty,
)
from .errors import ConjugateGradientError, DomainError, StepSizeError, TrainingError

logger = logging.getLogger(__name__)

# Relative slack before a prox step counts as an objective increase.
_OBJECTIVE_SLACK = 1e-12


@dataclass
class Batch:
    """Mini-batch of logged transitions; indices point back into the dataset"""
    states: np.ndarray       # (B, 2)
    actions: np.ndarray      # (B,)
    rewards: np.ndarray      # (B,)
    next_states: np.ndarray  # (B, 2)
    indices: Optional[np.ndarray] = None

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.next_states = np.atleast_2d(np.asarray(self.next_states, dtype=float))
        self.actions = np.asarray(self.actions, dtype=np.int64).ravel()
        self.rewards = np.asarray(self.rewards, dtype=float).ravel()
        size = len(self.actions)
        if size < 1:
            raise DomainError("batch must hold at least one transition")
        if len(self.rewards) != size or len(self.states) != size or len(self.next_states) != size:
            raise DomainError("batch columns have different lengths")
        for name in ("states", "rewards", "next_states"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DomainError(f"batch {name} must be finite")
        if np.any((self.actions < 0) | (self.actions >= N_ACTIONS)):
            raise DomainError("batch actions must be indices in 0..4")
        if self.indices is None:
            self.indices = np.arange(size)

    @classmethod
    def from_dataset(cls, data: Dataset, indices: np.ndarray) -> "Batch":
        indices = np.asarray(indices, dtype=np.int64)
        return cls(
            states=np.column_stack([data.x[indices], data.c[indices]]),
            actions=data.a[indices],
            rewards=data.r[indices],
            next_states=np.column_stack([data.x_next[indices], data.c_next[indices]]),
            indices=indices,
        )

    @property
    def size(self) -> int:
        return len(self.actions)

    @property
    def transitions(self) -> List[Transition]:
        return [
            Transition(State(*self.states[i]), int(self.actions[i]), float(self.rewards[i]),
                       State(*self.next_states[i]))
            for i in range(self.size)
        ]


@dataclass
class CriticState:
    """Online and target critic, warm-start memory and the dual variable"""
    theta: MlpParams
    theta_bar: MlpParams
    dual: DualState = field(default_factory=DualState)
    shift_prev: Optional[np.ndarray] = None    # (N, 5) prox correction u - f, NaN until visited
    cg_guess: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.theta.sizes != self.theta_bar.sizes:
            raise DomainError(f"online {self.theta.sizes} and target {self.theta_bar.sizes} critics differ")

    @classmethod
    def create(cls, theta: MlpParams, dual: DualState, n_transitions: Optional[int] = None) -> "CriticState":
        shift_prev = None if n_transitions is None else np.full((n_transitions, theta.sizes[-1]), np.nan)
        return cls(theta=theta, theta_bar=theta.copy(), dual=dual, shift_prev=shift_prev)


@dataclass(frozen=True)
class CriticSettings:
    """Per-update knobs of the constraint-aware critic.

    spec=None means an unconstrained critic (identity output layer).
    """
    gamma: float = 0.9
    spec: Optional[ConstraintSpec] = ConstraintSpec(ConstraintKind.MONOTONE_CONE)
    inner_iters: int = 1
    warm_start: bool = True
    prox_step_size: Optional[float] = None
    exact_prox: bool = False
    prox_tol: float = 1e-10
    cg_tol: float = 1e-8
    cg_max_iter: Optional[int] = None
    max_grad_norm: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise DomainError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.spec is not None and not self.spec.is_monotone:
            raise DomainError(f"critic layer supports monotone constraints only, got {self.spec.kind.value}")
        if self.inner_iters < 1:
            raise DomainError(f"inner_iters must be >= 1, got {self.inner_iters}")
        if self.prox_step_size is not None and not self.prox_step_size > 0:
            raise DomainError(f"prox step size must be > 0, got {self.prox_step_size}")
        if self.max_grad_norm is not None and not self.max_grad_norm > 0:
            raise DomainError(f"max_grad_norm must be > 0, got {self.max_grad_norm}")


@dataclass
class CriticStepResult:
    grad: FlatGrad
    f: np.ndarray        # raw network rows
    u: np.ndarray        # prox iterate (before the cone projection)
    q: np.ndarray        # constrained Q-rows
    y: np.ndarray        # scalar Bellman targets
    c_value: float       # mean monotone penalty of u
    loss: float          # half mean squared Bellman residual of u on the logged actions
    cg_iterations: int = 0
    grad_norm: float = 0.0  # before clipping


# ==============================================================================
# CONSTRAINT LAYER AND TARGETS
# ==============================================================================

def prox_layer(f: np.ndarray, spec: Optional[ConstraintSpec], lam: float, tol: float = 1e-10) -> np.ndarray:
    """The differentiable part of the layer: the exact prox, or f itself without a constraint"""
    return f if spec is None else prox_monotone_penalty(f, lam, tol=tol)


def critic_layer(f: np.ndarray, spec: Optional[ConstraintSpec], lam: float,
                 tol: float = 1e-10) -> np.ndarray:
    """Q-rows from raw network rows: exact prox, then the cone projection if the cone is active"""
    u = prox_layer(f, spec, lam, tol)
    if spec is not None and spec.kind == ConstraintKind.MONOTONE_CONE:
        return project_monotone_cone(u)
    return u


def q_values(theta: MlpParams, states: np.ndarray, spec: Optional[ConstraintSpec] = None,
             lam: float = 0.0, tol: float = 1e-10) -> np.ndarray:
    return critic_layer(forward(theta, states), spec, lam, tol)


def bellman_targets(batch: Batch, theta_bar: MlpParams, gamma: float,
                    spec: Optional[ConstraintSpec] = None, lam: float = 0.0) -> np.ndarray:
    """y_i = r_i + gamma * max_a' Q_theta_bar(s'_i, a'); constants with respect to theta"""
    if not 0.0 <= gamma < 1.0:
        raise DomainError(f"gamma must lie in [0, 1), got {gamma}")
    raw = forward(theta_bar, batch.next_states)
    if not np.all(np.isfinite(raw)):
        bad = int(np.sum(~np.all(np.isfinite(raw), axis=1)))
        raise TrainingError(f"target critic produced non-finite values on {bad}/{batch.size} next states", step=-1)
    if gamma == 0.0:
        return batch.rewards.copy()
    return batch.rewards + gamma * np.max(critic_layer(raw, spec, lam), axis=1)


# ==============================================================================
# PROX SUBPROBLEM
# ==============================================================================

def batch_objective(u, y, lam: float, c_value: float) -> float:
    """(1 / 2|B|) sum_i ||u_i - y_i||^2 + lam * c_value"""
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.shape != y.shape:
        raise DomainError(f"u {u.shape} and y {y.shape} are not aligned")
    return 0.5 * float(np.sum((u - y) ** 2)) / len(u) + lam * float(np.sum(c_value))


def residual_g(u, y, lam: float) -> np.ndarray:
    """u - y + lam * grad C(u), row by row"""
    if lam < 0:
        raise DomainError(f"lambda must be >= 0, got {lam}")
    u = np.asarray(u, dtype=float)
    return u - np.asarray(y, dtype=float) + lam * monotone_penalty_grad(u)


def default_prox_step(lam: float) -> float:
    return 0.5 / (1.0 + 2.0 * lam)


def _subproblem_objective(u: np.ndarray, y: np.ndarray, lam: float) -> float:
    return batch_objective(u, y, lam, float(np.mean(monotone_penalty(u))))


def prox_step(u0, y, dual: DualState, step: Optional[float] = None, inner_iters: int = 1) -> np.ndarray:
    """inner_iters proximal-gradient steps u <- u - step * g(u) from the warm start u0"""
    step = default_prox_step(dual.lam) if step is None else step
    if not step > 0:
        raise DomainError(f"step must be > 0, got {step}")
    if inner_iters < 1:
        raise DomainError(f"inner_iters must be >= 1, got {inner_iters}")
    u = np.atleast_2d(np.asarray(u0, dtype=float)).copy()
    y = np.atleast_2d(np.asarray(y, dtype=float))
    before = _subproblem_objective(u, y, dual.lam)
    for _ in range(inner_iters):
        u = u - step * residual_g(u, y, dual.lam)
    after = _subproblem_objective(u, y, dual.lam)
    if after > before + _OBJECTIVE_SLACK * (1.0 + abs(before)):
        raise StepSizeError(
            f"prox step {step:g} increased the objective from {before:.6g} to {after:.6g}",
            residual=after - before, iterations=inner_iters,
        )
    return u if np.ndim(u0) > 1 else u[0]


# ==============================================================================
# CONJUGATE GRADIENT
# ==============================================================================

def _conjugate_gradient(matvec: Callable[[np.ndarray], np.ndarray], b: np.ndarray, tol: float,
                        max_iter: int, x0: Optional[np.ndarray]) -> Tuple[np.ndarray, int]:
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros_like(b), 0
    z = np.zeros_like(b) if x0 is None else x0.astype(float).copy()
    r = b - matvec(z) if x0 is not None else b.copy()
    p = r.copy()
    rr = float(r @ r)
    if np.sqrt(rr) <= tol * b_norm:
        return z, 0
    for it in range(1, max_iter + 1):
        ap = matvec(p)
        curvature = float(p @ ap)
        if not curvature > 0.0:
            raise ConjugateGradientError("operator is not positive definite", residual=np.sqrt(rr) / b_norm,
                                         iterations=it)
        alpha = rr / curvature
        z = z + alpha * p
        r = r - alpha * ap
        rr_next = float(r @ r)
        if np.sqrt(rr_next) <= tol * b_norm:
            return z, it
        p = r + (rr_next / rr) * p
        rr = rr_next
    raise ConjugateGradientError("CG did not converge", residual=np.sqrt(rr) / b_norm, iterations=max_iter)


def cg_solve(matvec: Callable[[np.ndarray], np.ndarray], b, tol: float = 1e-8,
             max_iter: Optional[int] = None, x0: Optional[np.ndarray] = None) -> np.ndarray:
    """Solve A z = b for symmetric positive definite A given only z -> A z"""
    b = np.asarray(b, dtype=float).ravel()
    max_iter = b.size if max_iter is None else max_iter
    if max_iter < 1:
        raise DomainError(f"max_iter must be >= 1, got {max_iter}")
    return _conjugate_gradient(matvec, b, tol, max_iter, x0)[0]


# ==============================================================================
# IMPLICIT GRADIENT
# ==============================================================================

def _prox_iterate(cs: CriticState, batch: Batch, f: np.ndarray, settings: CriticSettings) -> np.ndarray:
    lam = cs.dual.lam
    if settings.exact_prox:
        return prox_monotone_penalty(f, lam, tol=settings.prox_tol)
    u0 = f
    if settings.warm_start and cs.shift_prev is not None:
        shift = cs.shift_prev[batch.indices]
        u0 = f + np.where(np.isnan(shift), 0.0, shift)
    return prox_step(u0, f, cs.dual, step=settings.prox_step_size, inner_iters=settings.inner_iters)


def logged_action_cotangent(q: np.ndarray, actions: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Residuals q[i, a_i] - y_i and the cotangent of their half mean square on the rows"""
    rows = np.arange(len(actions))
    err = q[rows, actions] - y
    cot = np.zeros_like(q)
    cot[rows, actions] = err / len(actions)
    return err, cot


def clip_grad_norm(grad: FlatGrad, max_norm: Optional[float]) -> Tuple[FlatGrad, float]:
    """Rescale grad to norm at most max_norm; returns the clipped gradient and the original norm"""
    norm = float(np.linalg.norm(grad))
    if max_norm is None or norm <= max_norm:
        return grad, norm
    return grad * (max_norm / norm), norm


def critic_step(cs: CriticState, batch: Batch, settings: CriticSettings,
                soft_penalty: bool = False) -> CriticStepResult:
    """Targets, prox iterate, constrained Q-rows and the implicit outer gradient for one batch.

    With soft_penalty the layer is skipped and lam * mean C(f) is added to the loss instead.
    """
    lam = cs.dual.lam
    f = forward(cs.theta, batch.states)
    if not np.all(np.isfinite(f)):
        raise TrainingError("critic produced non-finite values", step=-1)
    layer_spec = None if soft_penalty else settings.spec
    y = bellman_targets(batch, cs.theta_bar, settings.gamma, layer_spec, lam)

    if layer_spec is None:
        u = f
        q = f
    else:
        u = _prox_iterate(cs, batch, f, settings)
        q = project_monotone_cone(u) if layer_spec.kind == ConstraintKind.MONOTONE_CONE else u

    err, cot = logged_action_cotangent(u, batch.actions, y)
    c_value = float(np.mean(monotone_penalty(u)))
    loss = 0.5 * float(np.mean(err ** 2))

    cg_iterations = 0
    if layer_spec is None:
        z = cot
        if soft_penalty and lam > 0.0:
            z = cot + lam * monotone_penalty_grad(f) / batch.size
            loss += lam * c_value
    elif lam == 0.0:
        z = cot
    else:
        z, cg_iterations = _implicit_solve(cs, u, cot, lam, settings)

    grad = vjp(cs.theta, batch.states, z)
    if not np.all(np.isfinite(grad)):
        raise TrainingError("implicit gradient is not finite", step=-1)
    grad, grad_norm = clip_grad_norm(grad, settings.max_grad_norm)
    return CriticStepResult(grad=grad, f=f, u=u, q=q, y=y, c_value=c_value, loss=loss,
                            cg_iterations=cg_iterations, grad_norm=grad_norm)


def _implicit_solve(cs: CriticState, u: np.ndarray, rhs: np.ndarray, lam: float,
                    settings: CriticSettings) -> Tuple[np.ndarray, int]:
    shape = u.shape
    matvec = lambda w: (w.reshape(shape) + lam * monotone_penalty_hvp(u, w.reshape(shape))).ravel()
    guess = cs.cg_guess if cs.cg_guess is not None and cs.cg_guess.size == u.size else None
    max_iter = settings.cg_max_iter or u.size
    flat, iterations = _conjugate_gradient(matvec, rhs.ravel(), settings.cg_tol, max_iter, guess)
    cs.cg_guess = flat
    return flat.reshape(shape), iterations


def implicit_gradient(cs: CriticState, batch: Batch, settings: CriticSettings) -> FlatGrad:
    """Gradient of the half mean squared Bellman residual through the prox layer"""
    return critic_step(cs, batch, settings).grad


def remember_iterate(cs: CriticState, batch: Batch, result: CriticStepResult) -> None:
    """Store the step's prox correction u - f as the next warm start for these transitions"""
    if cs.shift_prev is not None:
        cs.shift_prev[batch.indices] = result.u - result.f
