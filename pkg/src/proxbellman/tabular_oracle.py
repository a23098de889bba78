"""
Exact tabular reference for the Bellman operator, its proximal composition and fixed points

Everything here is computed with known transition matrices, so it serves as ground truth for
the sample-based critic.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .bidclick_env import analytic_q, evaluation_grid
from .constraint_ops import ConstraintSpec, prox_for_spec
from .errors import DomainError, FixedPointError

logger = logging.getLogger(__name__)

ORACLE_GRID = (41, 21)
DEFAULT_GAMMA = 0.9


@dataclass
class DiscreteMdp:
    reward: np.ndarray       # (S, A)
    transition: np.ndarray   # (S, A, S), row-stochastic over the last axis
    gamma: float

    def __post_init__(self):
        self.reward = np.asarray(self.reward, dtype=float)
        self.transition = np.asarray(self.transition, dtype=float)
        if self.reward.ndim != 2:
            raise DomainError(f"reward must be (states, actions), got shape {self.reward.shape}")
        n_states, n_actions = self.reward.shape
        if self.transition.shape != (n_states, n_actions, n_states):
            raise DomainError(
                f"transition must have shape {(n_states, n_actions, n_states)}, got {self.transition.shape}"
            )
        if not 0.0 <= self.gamma < 1.0:
            raise DomainError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not np.all(np.isfinite(self.reward)):
            raise DomainError("reward must be finite")
        if np.any(self.transition < 0.0):
            raise DomainError("transition probabilities must be >= 0")
        if np.max(np.abs(self.transition.sum(axis=-1) - 1.0)) > 1e-12:
            raise DomainError("transition rows must sum to 1 within 1e-12")

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward.shape[1]

    @property
    def r_max(self) -> float:
        return float(np.max(np.abs(self.reward)))

    @property
    def value_bound(self) -> float:
        return self.r_max / (1.0 - self.gamma)


@dataclass
class ValueGrid:
    """State values plus optional grid layout and convergence certificate"""
    values: np.ndarray
    grid_meta: Dict[str, Any] = field(default_factory=dict)
    residual: Optional[float] = None
    iterations: Optional[int] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise DomainError(f"values must be a vector, got shape {self.values.shape}")

    def __len__(self) -> int:
        return len(self.values)


VLike = Union[ValueGrid, np.ndarray, Sequence[float]]


def _values(v: VLike, m: DiscreteMdp) -> np.ndarray:
    arr = v.values if isinstance(v, ValueGrid) else np.asarray(v, dtype=float)
    if arr.shape != (m.n_states,):
        raise DomainError(f"value vector has shape {arr.shape}, MDP has {m.n_states} states")
    return arr


def _meta(v: VLike) -> Dict[str, Any]:
    return dict(v.grid_meta) if isinstance(v, ValueGrid) else {}


def q_rows(v: VLike, m: DiscreteMdp) -> np.ndarray:
    """r(s, a) + gamma * sum_s' P(s'|s, a) v(s'), shape (S, A)"""
    return m.reward + m.gamma * (m.transition @ _values(v, m))


def bellman_optimal(v: VLike, m: DiscreteMdp) -> ValueGrid:
    return ValueGrid(np.max(q_rows(v, m), axis=1), grid_meta=_meta(v))


def psi_lambda(v: VLike, m: DiscreteMdp, spec: ConstraintSpec, lam: float,
               tol: float = 1e-10) -> ValueGrid:
    """Proximal Bellman operator: exact prox of lam * C composed with the optimal backup.

    Monotone constraints act on each state's Q-row before the max; the Lipschitz penalty acts
    on the backed-up value grid (shaped by grid_meta["shape"] when present).
    """
    if lam < 0:
        raise DomainError(f"lambda must be >= 0, got {lam}")
    meta = _meta(v)
    if spec.is_monotone:
        rows = prox_for_spec(q_rows(v, m), spec, lam, tol=tol)
        return ValueGrid(np.max(rows, axis=1), grid_meta=meta)
    backed_up = bellman_optimal(v, m).values
    shape = tuple(meta.get("shape", (m.n_states,)))
    return ValueGrid(prox_for_spec(backed_up.reshape(shape), spec, lam, tol=tol).ravel(), grid_meta=meta)


def iteration_cap(m: DiscreteMdp, tol: float, start_norm: float = 0.0, margin: int = 10) -> int:
    """Sweeps needed for a gamma-contraction to shrink the initial residual below tol"""
    scale = 2.0 * (m.r_max + (1.0 - m.gamma) * start_norm)
    if scale <= tol * (1.0 - m.gamma) or m.gamma == 0.0:
        return margin
    return math.ceil(math.log(tol * (1.0 - m.gamma) / scale) / math.log(m.gamma)) + margin


def fixed_point(m: DiscreteMdp, spec: ConstraintSpec, lam: float, tol: float = 1e-10,
                v0: Optional[VLike] = None, max_iter: Optional[int] = None,
                grid_meta: Optional[Dict[str, Any]] = None) -> ValueGrid:
    """Iterate psi_lambda from v0 (default zero) until ||psi(v) - v||_inf <= tol"""
    if not tol > 0:
        raise DomainError(f"tol must be > 0, got {tol}")
    v = np.zeros(m.n_states) if v0 is None else _values(v0, m).copy()
    meta = dict(grid_meta) if grid_meta is not None else _meta(v0) if v0 is not None else {}
    cap = max_iter if max_iter is not None else iteration_cap(m, tol, float(np.max(np.abs(v))))
    prox_tol = max(tol * 1e-3, 1e-14)

    residual = np.inf
    for it in range(1, cap + 1):
        v_next = psi_lambda(ValueGrid(v, meta), m, spec, lam, tol=prox_tol).values
        residual = float(np.max(np.abs(v_next - v)))
        v = v_next
        if residual <= tol:
            logger.debug(f"[ORACLE] fixed point lambda={lam} after {it} sweeps (residual={residual:.3e})")
            return ValueGrid(v, grid_meta=meta, residual=residual, iterations=it)
    raise FixedPointError(f"fixed point for lambda={lam} not reached", residual=residual, iterations=cap)


def lambda_continuation(m: DiscreteMdp, spec: ConstraintSpec, lambdas: Sequence[float],
                        tol: float = 1e-10) -> List[Tuple[float, float]]:
    """Distance ||v_lambda - v_0||_inf along a descending lambda path, warm-started"""
    lambdas = [float(l) for l in lambdas]
    if any(l < 0 for l in lambdas):
        raise DomainError("lambdas must be >= 0")
    if any(b >= a for a, b in zip(lambdas, lambdas[1:])):
        raise DomainError(f"lambdas must be strictly descending, got {lambdas}")
    reference = fixed_point(m, spec, 0.0, tol).values
    path = []
    v = None
    for lam in lambdas:
        v = fixed_point(m, spec, lam, tol, v0=v)
        path.append((lam, float(np.max(np.abs(v.values - reference)))))
        logger.info(f"[ORACLE] lambda={lam:g}: distance to unconstrained fixed point {path[-1][1]:.3e}")
    return path


# ==============================================================================
# MDP BUILDERS
# ==============================================================================

def random_mdp(n_states: int, n_actions: int, gamma: float = DEFAULT_GAMMA, seed: int = 0) -> DiscreteMdp:
    """Dense random MDP with rewards in [-1, 1] and Dirichlet transition rows"""
    rng = np.random.default_rng(seed)
    reward = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    transition /= transition.sum(axis=-1, keepdims=True)
    return DiscreteMdp(reward=reward, transition=transition, gamma=gamma)


def bidclick_mdp(n_x: int = ORACLE_GRID[0], n_c: int = ORACLE_GRID[1],
                 gamma: float = DEFAULT_GAMMA) -> Tuple[DiscreteMdp, Dict[str, Any]]:
    """Bid-Click on an x-major (n_x, n_c) grid with uniform i.i.d. next states.

    Returns the MDP and grid metadata suitable for ValueGrid.grid_meta.
    """
    states = evaluation_grid(n_x, n_c)
    n_states = len(states)
    reward = analytic_q(states)
    transition = np.full((n_states, reward.shape[1], n_states), 1.0 / n_states)
    meta = {
        "x": states[::n_c, 0].tolist(),
        "c": states[:n_c, 1].tolist(),
        "shape": (n_x, n_c),
    }
    return DiscreteMdp(reward=reward, transition=transition, gamma=gamma), meta


def oracle_rows(v: ValueGrid, m: DiscreteMdp, spec: ConstraintSpec, lam: float,
                tol: float = 1e-10) -> np.ndarray:
    """Constrained Q-rows at v (the rows whose max defines psi_lambda for monotone specs)"""
    if not spec.is_monotone:
        raise DomainError(f"row view needs a monotone spec, got {spec.kind.value}")
    return prox_for_spec(q_rows(v, m), spec, lam, tol=tol)
