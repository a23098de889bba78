"""
Randomized verification suites behind `python -m proxbellman verify --suite ...`

    props   projection / prox / penalty properties
    oracle  tabular Bellman and proximal-Bellman operators, fixed points, continuation
    grad    VJP/JVP consistency, implicit gradient vs finite differences, CG

Each check returns a CheckResult; nothing here raises on a failed property.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np

from .approximator import flatten, forward, init_mlp, jvp_params, unflatten, vjp
from .constraint_ops import (
    ConstraintKind,
    ConstraintSpec,
    DualState,
    monotone_penalty,
    monotone_penalty_grad,
    monotone_penalty_hvp,
    project_monotone_cone,
    prox_monotone_penalty,
)
from .implicit_critic import (
    Batch,
    CriticSettings,
    CriticState,
    bellman_targets,
    cg_solve,
    implicit_gradient,
    prox_layer,
)
from .tabular_oracle import bellman_optimal, fixed_point, lambda_continuation, oracle_rows, psi_lambda, random_mdp

logger = logging.getLogger(__name__)

LAMBDAS = (0.0, 0.01, 0.1, 1.0, 10.0)
PENALTY = ConstraintSpec(ConstraintKind.MONOTONE_PENALTY)
CONE = ConstraintSpec(ConstraintKind.MONOTONE_CONE)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class VerificationReport:
    suite: str
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_text(self) -> str:
        lines = [f"suite {self.suite}: {'PASS' if self.passed else 'FAIL'}"]
        lines += [f"  [{'ok' if c.passed else 'FAIL'}] {c.name}: {c.detail}" for c in self.checks]
        return "\n".join(lines)


def _check(name: str, worst: float, bound: float) -> CheckResult:
    return CheckResult(name, bool(worst <= bound), f"worst {worst:.3e} (bound {bound:.1e})")


# ==============================================================================
# PROPS
# ==============================================================================

def exhaustive_isotonic(q: np.ndarray) -> np.ndarray:
    """Projection onto nondecreasing vectors by enumerating every contiguous block partition"""
    n = len(q)
    best, best_dist = None, np.inf
    for cuts in itertools.product([False, True], repeat=n - 1):
        bounds = [0] + [i + 1 for i, cut in enumerate(cuts) if cut] + [n]
        candidate = np.concatenate([np.full(b - a, q[a:b].mean()) for a, b in zip(bounds, bounds[1:])])
        if np.all(np.diff(candidate) >= 0.0):
            dist = float(np.sum((candidate - q) ** 2))
            if dist < best_dist:
                best, best_dist = candidate, dist
    return best


def check_firm_nonexpansive(rng: np.random.Generator, n_pairs: int) -> CheckResult:
    x = rng.normal(size=(n_pairs, 5))
    y = rng.normal(size=(n_pairs, 5))
    px, py = project_monotone_cone(x), project_monotone_cone(y)
    lhs = np.sum((px - py) ** 2, axis=1)
    rhs = np.sum((px - py) * (x - y), axis=1)
    return _check("cone projection firmly non-expansive", float(np.max(lhs - rhs)), 1e-12)


def check_prox_nonexpansive(rng: np.random.Generator, n_pairs: int) -> CheckResult:
    worst = -np.inf
    for lam in LAMBDAS[1:]:
        x = rng.normal(size=(n_pairs, 5))
        y = rng.normal(size=(n_pairs, 5))
        gap = (np.linalg.norm(prox_monotone_penalty(x, lam) - prox_monotone_penalty(y, lam), axis=1)
               - np.linalg.norm(x - y, axis=1))
        worst = max(worst, float(np.max(gap)))
    return _check("penalty prox non-expansive", worst, 1e-9)


def check_idempotence(rng: np.random.Generator, n_rows: int) -> CheckResult:
    p = project_monotone_cone(rng.normal(size=(n_rows, 5)))
    return _check("cone projection idempotent (exact)", float(np.max(np.abs(project_monotone_cone(p) - p))), 0.0)


def check_pava_oracle() -> CheckResult:
    grid = np.array(list(itertools.product(range(-2, 3), repeat=5)), dtype=float)
    fast = project_monotone_cone(grid)
    worst = max(float(np.max(np.abs(fast[i] - exhaustive_isotonic(grid[i])))) for i in range(len(grid)))
    return _check("PAVA matches exhaustive QP on {-2..2}^5", worst, 1e-9)


def check_penalty_gradient(rng: np.random.Generator, n_rows: int, h: float = 1e-5) -> CheckResult:
    worst = 0.0
    for q in rng.normal(size=(n_rows, 5)):
        grad = monotone_penalty_grad(q)
        fd = np.array([(monotone_penalty(q + h * e) - monotone_penalty(q - h * e)) / (2 * h) for e in np.eye(5)])
        worst = max(worst, float(np.max(np.abs(grad - fd)) / max(1.0, float(np.max(np.abs(fd))))))
    return _check("penalty gradient vs central differences", worst, 1e-6)


def check_monotone_limit(rng: np.random.Generator, n_rows: int) -> CheckResult:
    y = rng.normal(size=(n_rows, 5))
    worst = float(np.max(np.abs(prox_monotone_penalty(y, 1e6) - project_monotone_cone(y))))
    return _check("prox at lambda=1e6 approaches the cone projection", worst, 1e-3)


def check_spd_certificate(rng: np.random.Generator, n_vectors: int) -> CheckResult:
    worst = -np.inf
    for lam in LAMBDAS:
        u = rng.normal(size=(n_vectors, 5))
        w = rng.normal(size=(n_vectors, 5))
        quad = np.sum(w * (w + lam * monotone_penalty_hvp(u, w)), axis=1)
        worst = max(worst, float(np.max(np.sum(w * w, axis=1) - quad)))
    return _check("<w, (I + lam H) w> >= ||w||^2", worst, 1e-12)


# ==============================================================================
# ORACLE
# ==============================================================================

def check_contraction(rng: np.random.Generator, n_pairs: int, n_states: int = 20) -> CheckResult:
    m = random_mdp(n_states, 5, gamma=0.9, seed=int(rng.integers(1 << 31)))
    worst = -np.inf
    for _ in range(n_pairs):
        v1 = rng.normal(scale=5.0, size=n_states)
        v2 = rng.normal(scale=5.0, size=n_states)
        gap = m.gamma * np.max(np.abs(v1 - v2))
        worst = max(worst, float(np.max(np.abs(bellman_optimal(v1, m).values - bellman_optimal(v2, m).values)) - gap))
        for spec in (PENALTY, CONE):
            for lam in LAMBDAS:
                diff = psi_lambda(v1, m, spec, lam, tol=1e-12).values - psi_lambda(v2, m, spec, lam, tol=1e-12).values
                worst = max(worst, float(np.max(np.abs(diff)) - gap))
    return _check("T* and psi_lambda are gamma-contractions", worst, 1e-9)


def check_bellman_monotone(rng: np.random.Generator, n_pairs: int, n_states: int = 20) -> CheckResult:
    m = random_mdp(n_states, 5, seed=int(rng.integers(1 << 31)))
    worst = -np.inf
    for _ in range(n_pairs):
        v1 = rng.normal(size=n_states)
        v2 = v1 + np.abs(rng.normal(size=n_states))
        worst = max(worst, float(np.max(bellman_optimal(v1, m).values - bellman_optimal(v2, m).values)))
    return _check("v1 <= v2 implies T*v1 <= T*v2", worst, 0.0)


def check_fixed_point_uniqueness(rng: np.random.Generator, n_mdps: int, tol: float = 1e-9) -> CheckResult:
    worst = -np.inf
    for _ in range(n_mdps):
        m = random_mdp(20, 5, seed=int(rng.integers(1 << 31)))
        for spec, lam in ((PENALTY, 1.0), (CONE, 1.0), (PENALTY, 0.0)):
            a = fixed_point(m, spec, lam, tol)
            b = fixed_point(m, spec, lam, tol, v0=rng.normal(scale=10.0, size=m.n_states))
            bound = 2 * tol / (1 - m.gamma)
            worst = max(worst, float(np.max(np.abs(a.values - b.values))) - bound)
            worst = max(worst, float(np.max(np.abs(a.values))) - (m.value_bound + tol))
    return _check("unique fixed point within 2 tol/(1-gamma) and inside the value bound", worst, 0.0)


def check_continuation(rng: np.random.Generator, n_mdps: int, tol: float = 1e-9) -> CheckResult:
    worst = -np.inf
    for _ in range(n_mdps):
        m = random_mdp(20, 5, seed=int(rng.integers(1 << 31)))
        distances = [d for _, d in lambda_continuation(m, PENALTY, [1.0, 0.1, 0.01, 0.001], tol)]
        worst = max(worst, float(np.max(np.diff(distances))))
    return _check("continuation distances non-increasing as lambda decreases", worst, 2 * tol / (1 - 0.9))


def check_cone_fixed_point_rows(rng: np.random.Generator, n_mdps: int) -> CheckResult:
    worst = -np.inf
    for _ in range(n_mdps):
        m = random_mdp(20, 5, seed=int(rng.integers(1 << 31)))
        v = fixed_point(m, CONE, 1.0, 1e-10)
        rows = oracle_rows(v, m, CONE, 1.0)
        worst = max(worst, float(np.max(-np.diff(rows, axis=1))))
    return _check("cone fixed-point rows are nondecreasing", worst, 1e-9)


# ==============================================================================
# GRAD
# ==============================================================================

def check_transpose_identity(rng: np.random.Generator, n_cases: int) -> CheckResult:
    worst = 0.0
    for _ in range(n_cases):
        p = init_mlp([2, 6, 5], rng=rng)
        x = rng.uniform(size=(3, 2))
        w = rng.normal(size=(3, 5))
        t = rng.normal(size=p.n_params)
        lhs = float(np.sum(w * jvp_params(p, x, t)))
        rhs = float(vjp(p, x, w) @ t)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
    return _check("<w, J t> == <J^T w, t>", worst, 1e-10)


def implicit_gradient_error(rng: np.random.Generator, spec: ConstraintSpec, lam: float, h: float = 1e-5) -> float:
    """Relative gap between the implicit gradient and central differences of the loss on the solved prox"""
    theta = init_mlp([2, 4, 5], rng=rng)
    target = init_mlp([2, 4, 5], rng=rng)
    batch = Batch(states=rng.uniform(size=(3, 2)), actions=rng.integers(0, 5, size=3),
                  rewards=rng.normal(size=3), next_states=rng.uniform(size=(3, 2)))
    settings = CriticSettings(gamma=0.9, spec=spec, exact_prox=True, prox_tol=1e-12, cg_tol=1e-12)
    cs = CriticState(theta=theta, theta_bar=target, dual=DualState(lam=lam))
    grad = implicit_gradient(cs, batch, settings)
    y = bellman_targets(batch, target, settings.gamma, spec, lam)
    rows = np.arange(batch.size)

    def loss(flat: np.ndarray) -> float:
        u = prox_layer(forward(unflatten(theta, flat), batch.states), spec, lam, tol=1e-12)
        return 0.5 * float(np.mean((u[rows, batch.actions] - y) ** 2))

    base = flatten(theta)
    fd = np.array([(loss(base + h * e) - loss(base - h * e)) / (2 * h) for e in np.eye(len(base))])
    return float(np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-8))


def check_implicit_gradient(rng: np.random.Generator, n_cases: int) -> CheckResult:
    worst = 0.0
    for i in range(n_cases):
        spec = PENALTY if i % 2 == 0 else CONE
        worst = max(worst, implicit_gradient_error(rng, spec, lam=float(rng.choice([0.1, 0.5, 2.0]))))
    return _check("implicit gradient vs finite differences", worst, 1e-3)


def check_cg(rng: np.random.Generator, n_cases: int) -> CheckResult:
    worst = 0.0
    for _ in range(n_cases):
        n = int(rng.integers(1, 65))
        basis, _ = np.linalg.qr(rng.normal(size=(n, n)))
        a = basis @ np.diag(rng.uniform(1.0, 10.0, size=n)) @ basis.T
        b = rng.normal(size=n)
        z = cg_solve(lambda w: a @ w, b, tol=1e-9, max_iter=4 * n)
        worst = max(worst, float(np.linalg.norm(a @ z - b) / np.linalg.norm(b)))
    return _check("CG relative residual on random SPD systems", worst, 1e-8)


# ==============================================================================
# SUITES
# ==============================================================================

def _props(rng: np.random.Generator, scale: float) -> List[CheckResult]:
    n = lambda k: max(10, int(k * scale))
    return [
        check_firm_nonexpansive(rng, n(10_000)),
        check_prox_nonexpansive(rng, n(1_000)),
        check_idempotence(rng, n(1_000)),
        check_pava_oracle(),
        check_penalty_gradient(rng, n(1_000)),
        check_monotone_limit(rng, n(200)),
        check_spd_certificate(rng, n(1_000)),
    ]


def _oracle(rng: np.random.Generator, scale: float) -> List[CheckResult]:
    n = lambda k: max(2, int(k * scale))
    return [
        check_contraction(rng, n(1_000)),
        check_bellman_monotone(rng, n(1_000)),
        check_fixed_point_uniqueness(rng, n(5)),
        check_continuation(rng, n(10)),
        check_cone_fixed_point_rows(rng, n(5)),
    ]


def _grad(rng: np.random.Generator, scale: float) -> List[CheckResult]:
    n = lambda k: max(2, int(k * scale))
    return [
        check_transpose_identity(rng, n(1_000)),
        check_implicit_gradient(rng, n(100)),
        check_cg(rng, n(100)),
    ]


SUITES: Dict[str, Callable[[np.random.Generator, float], List[CheckResult]]] = {
    "props": _props,
    "oracle": _oracle,
    "grad": _grad,
}


def run_suite(name: str, seed: int = 0, scale: float = 1.0) -> VerificationReport:
    """Run one suite; scale < 1 shrinks the random sample sizes"""
    if name not in SUITES:
        raise KeyError(f"unknown suite '{name}' (known: {', '.join(SUITES)})")
    report = VerificationReport(name, SUITES[name](np.random.default_rng(seed), scale))
    for check in report.checks:
        log = logger.info if check.passed else logger.error
        log(f"[VERIFY] {name}: {check.name} -> {check.detail}")
    return report
