"""
Convex constraint functionals, their derivatives, exact proximal maps and the dual update

Two families of structure are supported:
    - monotonicity of a Q-row in the (ordered) bid action, either as the squared-hinge
      penalty C(q) = sum_i max(0, -(q[i+1] - q[i]))^2 or as the indicator of the monotone cone
    - a global Lipschitz bound on a value grid, as the squared violation of |dv|/ds <= L

Row operations accept a single row (shape (n,)) or a batch of rows (shape (m, n)) and act on
the last axis.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import DomainError, ProxSolverError

logger = logging.getLogger(__name__)

N_ACTIONS = 5
BID_FRACTIONS = np.array([0.0, 0.25, 0.5, 0.75, 1.0])

_EPS = np.finfo(float).eps


class ConstraintKind(Enum):
    """Which convex functional is active"""
    MONOTONE_PENALTY = "monotone_penalty"
    MONOTONE_CONE = "monotone_cone"
    LIPSCHITZ_PENALTY = "lipschitz_penalty"


@dataclass(frozen=True)
class ConstraintSpec:
    """Active constraint functional plus its parameters"""
    kind: ConstraintKind = ConstraintKind.MONOTONE_PENALTY
    lipschitz_bound: float = 1.0
    grid_spacing: Union[float, Tuple[float, ...]] = 1.0

    def __post_init__(self):
        if not isinstance(self.kind, ConstraintKind):
            object.__setattr__(self, "kind", ConstraintKind(self.kind))
        if self.kind == ConstraintKind.LIPSCHITZ_PENALTY and not self.lipschitz_bound > 0:
            raise DomainError(f"lipschitz_bound must be > 0, got {self.lipschitz_bound}")
        spacing = np.atleast_1d(np.asarray(self.grid_spacing, dtype=float))
        if np.any(spacing <= 0) or not np.all(np.isfinite(spacing)):
            raise DomainError(f"grid_spacing must be positive, got {self.grid_spacing}")

    @property
    def is_monotone(self) -> bool:
        return self.kind in (ConstraintKind.MONOTONE_PENALTY, ConstraintKind.MONOTONE_CONE)


@dataclass(frozen=True)
class DualState:
    """Penalty weight lambda and its dual step size"""
    lam: float = 0.1
    eta_lambda: float = 0.05

    def __post_init__(self):
        if self.lam < 0:
            raise DomainError(f"lambda must be >= 0, got {self.lam}")
        if not self.eta_lambda > 0:
            raise DomainError(f"eta_lambda must be > 0, got {self.eta_lambda}")


# ==============================================================================
# VALIDATION HELPERS
# ==============================================================================

def _finite(q, name: str = "input") -> np.ndarray:
    arr = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def as_qrow(q) -> np.ndarray:
    """Validate a single Q-row: exactly N_ACTIONS finite entries ordered by bid"""
    arr = _finite(q, "QRow")
    if arr.shape != (N_ACTIONS,):
        raise DomainError(f"QRow must have shape ({N_ACTIONS},), got {arr.shape}")
    return arr


def _diff_transpose(z: np.ndarray) -> np.ndarray:
    """Apply D^T where (Dq)_i = q[i+1] - q[i] along the last axis"""
    pad = [(0, 0)] * (z.ndim - 1)
    return np.pad(z, pad + [(1, 0)]) - np.pad(z, pad + [(0, 1)])


# ==============================================================================
# MONOTONE PENALTY
# ==============================================================================

def monotone_penalty(q) -> Union[float, np.ndarray]:
    """C(q) = sum_i max(0, -(q[i+1]-q[i]))^2 over adjacent actions; zero iff q nondecreasing"""
    arr = _finite(q)
    violation = np.maximum(0.0, -np.diff(arr, axis=-1))
    value = np.sum(violation ** 2, axis=-1)
    return float(value) if arr.ndim == 1 else value


def monotone_penalty_grad(q) -> np.ndarray:
    """Exact gradient of monotone_penalty"""
    arr = _finite(q)
    return _diff_transpose(2.0 * np.minimum(np.diff(arr, axis=-1), 0.0))


def monotone_penalty_hvp(q, w) -> np.ndarray:
    """Hessian-vector product of monotone_penalty at q; H = D^T diag(2 * [dq < 0]) D"""
    arr = _finite(q)
    w = np.asarray(w, dtype=float)
    active = (np.diff(arr, axis=-1) < 0.0).astype(float)
    return _diff_transpose(2.0 * active * np.diff(w, axis=-1))


def _monotone_hessians(u: np.ndarray, lam: float) -> np.ndarray:
    """Batch of I + lam * H(u) matrices, shape (m, n, n)"""
    n = u.shape[-1]
    diff_op = np.diff(np.eye(n), axis=0)
    active = 2.0 * (np.diff(u, axis=-1) < 0.0)
    hess = np.einsum("ki,mk,kj->mij", diff_op, active, diff_op)
    return np.eye(n)[None, :, :] + lam * hess


# ==============================================================================
# MONOTONE CONE PROJECTION (pool adjacent violators)
# ==============================================================================

def _pava_blocks(row: Sequence[float]) -> List[Tuple[int, int, float]]:
    """Pooled blocks (start, stop, mean) of the isotonic fit of one row.

    A new value is pooled only when it is strictly below the mean of the block before it.
    """
    sums: List[float] = []
    counts: List[int] = []
    starts: List[int] = []
    for i, value in enumerate(row):
        sums.append(float(value))
        counts.append(1)
        starts.append(i)
        while len(sums) > 1 and sums[-1] / counts[-1] < sums[-2] / counts[-2]:
            s, c = sums.pop(), counts.pop()
            starts.pop()
            sums[-1] += s
            counts[-1] += c
    stops = starts[1:] + [len(row)]
    return [(a, b, s / c) for a, b, s, c in zip(starts, stops, sums, counts)]


def project_monotone_cone(q) -> np.ndarray:
    """Euclidean projection onto nondecreasing rows (isotonic regression)"""
    arr = _finite(q)
    rows = np.atleast_2d(arr)
    out = rows.copy()
    for i in np.flatnonzero(np.any(np.diff(rows, axis=-1) < 0.0, axis=-1)):
        for start, stop, mean in _pava_blocks(rows[i]):
            out[i, start:stop] = mean
    return out[0] if arr.ndim == 1 else out


# ==============================================================================
# EXACT PROX OF THE MONOTONE PENALTY (damped Newton)
# ==============================================================================

def _prox_objective(u: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    return 0.5 * np.sum((u - y) ** 2, axis=-1) + lam * monotone_penalty(u)


def prox_monotone_penalty(y, lam: float, tol: float = 1e-10, max_iter: int = 50) -> np.ndarray:
    """argmin_u 1/2 ||u - y||^2 + lam * monotone_penalty(u), row by row.

    The objective is piecewise quadratic and strictly convex, so damped Newton terminates once
    the active hinge set settles. The stopping test is ||u - y + lam grad C(u)||_inf <= tol,
    floored at the level float64 can resolve for the given lam.
    """
    arr = _finite(y, "y")
    if lam < 0:
        raise DomainError(f"lambda must be >= 0, got {lam}")
    if not tol > 0:
        raise DomainError(f"tol must be > 0, got {tol}")
    rows = np.atleast_2d(arr)
    if lam == 0.0:
        return arr.copy()

    scale = 1.0 + np.max(np.abs(rows), axis=-1)
    floor = 64.0 * _EPS * (1.0 + 8.0 * lam) * scale
    u = rows.copy()
    residual = np.zeros(len(rows))
    for iteration in range(max_iter + 1):
        grad = u - rows + lam * monotone_penalty_grad(u)
        residual = np.max(np.abs(grad), axis=-1)
        todo = residual > np.maximum(tol, floor)
        if not np.any(todo):
            return u[0] if arr.ndim == 1 else u
        if iteration == max_iter:
            break

        idx = np.flatnonzero(todo)
        step = np.linalg.solve(_monotone_hessians(u[idx], lam), grad[idx][..., None])[..., 0]
        f0 = _prox_objective(u[idx], rows[idx], lam)
        slope = np.sum(grad[idx] * step, axis=-1)
        t = np.ones(len(idx))
        accepted = np.zeros(len(idx), dtype=bool)
        for _ in range(40):
            trial = u[idx] - t[:, None] * step
            ok = ~accepted & (_prox_objective(trial, rows[idx], lam) <= f0 - 1e-4 * t * slope)
            u[idx[ok]] = trial[ok]
            accepted |= ok
            if np.all(accepted):
                break
            t = np.where(accepted, t, 0.5 * t)

    raise ProxSolverError(
        "monotone prox did not converge", residual=float(np.max(residual)), iterations=max_iter
    )


# ==============================================================================
# LIPSCHITZ PENALTY ON VALUE GRIDS
# ==============================================================================

def _axis_spacings(spec: ConstraintSpec, ndim: int) -> Tuple[float, ...]:
    spacing = np.atleast_1d(np.asarray(spec.grid_spacing, dtype=float))
    if spacing.size == 1:
        return tuple(float(spacing[0]) for _ in range(ndim))
    if spacing.size != ndim:
        raise DomainError(f"grid_spacing has {spacing.size} entries for a {ndim}-D grid")
    return tuple(float(h) for h in spacing)


def _check_grid(v, spec: ConstraintSpec) -> np.ndarray:
    if spec.kind != ConstraintKind.LIPSCHITZ_PENALTY:
        raise DomainError(f"expected a LipschitzPenalty spec, got {spec.kind.value}")
    grid = _finite(v, "value grid")
    if grid.ndim == 0 or min(grid.shape) < 2:
        raise DomainError(f"grid needs at least 2 points per axis, got shape {grid.shape}")
    return grid


def lipschitz_penalty(v, spec: ConstraintSpec) -> float:
    """Sum over adjacent grid pairs of max(0, |v(s) - v(s')| / ds - L)^2"""
    grid = _check_grid(v, spec)
    total = 0.0
    for axis, h in enumerate(_axis_spacings(spec, grid.ndim)):
        slope = np.abs(np.diff(grid, axis=axis)) / h
        total += float(np.sum(np.maximum(0.0, slope - spec.lipschitz_bound) ** 2))
    return total


def lipschitz_penalty_grad(v, spec: ConstraintSpec) -> np.ndarray:
    grid = _check_grid(v, spec)
    grad = np.zeros_like(grid)
    for axis, h in enumerate(_axis_spacings(spec, grid.ndim)):
        diff = np.diff(grid, axis=axis)
        excess = np.maximum(0.0, np.abs(diff) / h - spec.lipschitz_bound)
        m = 2.0 * excess * np.sign(diff) / h
        pad_lo = [(0, 0)] * grid.ndim
        pad_hi = [(0, 0)] * grid.ndim
        pad_lo[axis] = (1, 0)
        pad_hi[axis] = (0, 1)
        grad += np.pad(m, pad_lo) - np.pad(m, pad_hi)
    return grad


def _grid_difference_ops(shape: Tuple[int, ...]) -> List[sp.csr_matrix]:
    """Sparse forward-difference operators along each axis of a C-ordered grid"""
    ops = []
    for axis, n in enumerate(shape):
        d1 = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n))
        factors = [sp.identity(m) for m in shape]
        factors[axis] = d1
        op = factors[0]
        for f in factors[1:]:
            op = sp.kron(op, f)
        ops.append(sp.csr_matrix(op))
    return ops


def prox_lipschitz_penalty(y, lam: float, spec: ConstraintSpec,
                           tol: float = 1e-10, max_iter: int = 50) -> np.ndarray:
    """argmin_u 1/2 ||u - y||^2 + lam * lipschitz_penalty(u) on a 1-D or 2-D grid"""
    grid = _check_grid(y, spec)
    if lam < 0:
        raise DomainError(f"lambda must be >= 0, got {lam}")
    if lam == 0.0:
        return grid.copy()

    shape = grid.shape
    ops = _grid_difference_ops(shape)
    spacings = _axis_spacings(spec, grid.ndim)
    target = grid.ravel()
    u = target.copy()
    floor = 64.0 * _EPS * (1.0 + 8.0 * lam / min(spacings) ** 2) * (1.0 + np.max(np.abs(target)))

    def objective(vec: np.ndarray) -> float:
        return 0.5 * float(np.sum((vec - target) ** 2)) + lam * lipschitz_penalty(vec.reshape(shape), spec)

    residual = np.inf
    for iteration in range(max_iter + 1):
        grad = u - target + lam * lipschitz_penalty_grad(u.reshape(shape), spec).ravel()
        residual = float(np.max(np.abs(grad)))
        if residual <= max(tol, floor):
            return u.reshape(shape)
        if iteration == max_iter:
            break

        hess = sp.identity(u.size, format="csr")
        for op, h in zip(ops, spacings):
            active = (np.abs(op @ u) / h > spec.lipschitz_bound).astype(float)
            hess = hess + lam * (op.T @ sp.diags(2.0 * active / h ** 2) @ op)
        step = spsolve(sp.csc_matrix(hess), grad)

        f0 = objective(u)
        slope = float(grad @ step)
        t = 1.0
        for _ in range(40):
            trial = u - t * step
            if objective(trial) <= f0 - 1e-4 * t * slope:
                u = trial
                break
            t *= 0.5

    raise ProxSolverError("lipschitz prox did not converge", residual=residual, iterations=max_iter)


# ==============================================================================
# DISPATCH AND DUAL UPDATE
# ==============================================================================

def prox_for_spec(y, spec: ConstraintSpec, lam: float, tol: float = 1e-10) -> np.ndarray:
    """Exact prox of lam * C for the functional named by spec.

    The cone indicator is scale free, so any lam > 0 gives the Euclidean projection and
    lam = 0 gives the identity.
    """
    if lam == 0.0:
        return _finite(y, "y").copy()
    if spec.kind == ConstraintKind.MONOTONE_PENALTY:
        return prox_monotone_penalty(y, lam, tol=tol)
    if spec.kind == ConstraintKind.MONOTONE_CONE:
        return project_monotone_cone(y)
    return prox_lipschitz_penalty(y, lam, spec, tol=tol)


def dual_update(d: DualState, c_value: float) -> DualState:
    """lambda <- [lambda + eta_lambda * C]_+"""
    if c_value < 0:
        raise DomainError(f"constraint value must be >= 0, got {c_value}")
    return replace(d, lam=max(0.0, d.lam + d.eta_lambda * float(c_value)))
