"""
Bid-Click: a synthetic single-slot advertising auction

State s = (x, c): query descriptor x ~ U[0, 1] and per-click cost c ~ U[0.2, 0.4].
Action: index 0..4 into the bid fractions {0, 0.25, 0.5, 0.75, 1}.
Click probability sigma(2a + 0.5x); reward = click - c * a.
Next states are drawn i.i.d. from the state distribution (a fresh auction every round).
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .constraint_ops import BID_FRACTIONS, N_ACTIONS
from .errors import DomainError

logger = logging.getLogger(__name__)

GENERATOR_VERSION = "bidclick-1"
X_RANGE = (0.0, 1.0)
C_RANGE = (0.2, 0.4)
BEHAVIOR_MEAN = 0.4
BEHAVIOR_STD = 0.4
DEFAULT_DATASET_SIZE = 100_000


@dataclass(frozen=True)
class State:
    x: float
    c: float

    def __post_init__(self):
        if not X_RANGE[0] <= self.x <= X_RANGE[1]:
            raise DomainError(f"x must lie in {X_RANGE}, got {self.x}")
        if not C_RANGE[0] <= self.c <= C_RANGE[1]:
            raise DomainError(f"c must lie in {C_RANGE}, got {self.c}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.c])


@dataclass(frozen=True)
class Transition:
    s: State
    a: int
    r: float
    s_next: State

    @property
    def bid(self) -> float:
        return float(BID_FRACTIONS[self.a])


@dataclass
class Dataset:
    """Replay buffer stored column-wise; indexing yields Transition values"""
    x: np.ndarray
    c: np.ndarray
    a: np.ndarray
    r: np.ndarray
    x_next: np.ndarray
    c_next: np.ndarray
    seed: int
    generator_version: str = GENERATOR_VERSION

    def __post_init__(self):
        n = len(self.x)
        if n == 0:
            raise DomainError("dataset must be non-empty")
        for name in ("c", "a", "r", "x_next", "c_next"):
            if len(getattr(self, name)) != n:
                raise DomainError(f"column {name} has {len(getattr(self, name))} rows, expected {n}")
        self.a = np.asarray(self.a, dtype=np.int64)
        if np.any((self.a < 0) | (self.a >= N_ACTIONS)):
            raise DomainError("actions must be indices in 0..4")

    def __len__(self) -> int:
        return len(self.x)

    def __getitem__(self, i: int) -> Transition:
        return Transition(
            s=State(float(self.x[i]), float(self.c[i])),
            a=int(self.a[i]),
            r=float(self.r[i]),
            s_next=State(float(self.x_next[i]), float(self.c_next[i])),
        )

    def __iter__(self) -> Iterator[Transition]:
        return (self[i] for i in range(len(self)))

    @property
    def transitions(self) -> List[Transition]:
        return list(self)

    def states(self) -> np.ndarray:
        return np.column_stack([self.x, self.c])

    def next_states(self) -> np.ndarray:
        return np.column_stack([self.x_next, self.c_next])

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(
            x=self.x[indices], c=self.c[indices], a=self.a[indices], r=self.r[indices],
            x_next=self.x_next[indices], c_next=self.c_next[indices],
            seed=self.seed, generator_version=self.generator_version,
        )


# ==============================================================================
# DYNAMICS
# ==============================================================================

def stream_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Independent generator for one worker stream of a seeded run"""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream_id,)))


def _split_state(s) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(s, State):
        return np.float64(s.x), np.float64(s.c)
    arr = np.asarray(s, dtype=float)
    return arr[..., 0], arr[..., 1]


def click_prob(s, bid) -> Union[float, np.ndarray]:
    """sigma(2 * bid + 0.5 * x) for a State or an array of (x, c) rows"""
    x, _ = _split_state(s)
    p = expit(2.0 * np.asarray(bid, dtype=float) + 0.5 * x)
    return float(p) if np.ndim(p) == 0 else p


def expected_reward(s, bid) -> Union[float, np.ndarray]:
    x, c = _split_state(s)
    value = click_prob(s, bid) - c * np.asarray(bid, dtype=float)
    return float(value) if np.ndim(value) == 0 else value


def sample_states(rng: np.random.Generator, n: int) -> np.ndarray:
    x = rng.uniform(*X_RANGE, size=n)
    c = rng.uniform(*C_RANGE, size=n)
    return np.column_stack([x, c])


def step(s: State, bid: float, rng: np.random.Generator) -> Tuple[float, State]:
    """One auction round: realized click minus payment, then a fresh i.i.d. state"""
    if not 0.0 <= bid <= 1.0:
        raise DomainError(f"bid fraction must lie in [0, 1], got {bid}")
    click = float(rng.random() < click_prob(s, bid))
    x_next, c_next = sample_states(rng, 1)[0]
    return click - s.c * bid, State(float(x_next), float(c_next))


def snap_bid(g) -> np.ndarray:
    """Clip a continuous bid to [0, 1] and snap to the nearest fraction (ties round up)"""
    clipped = np.clip(np.asarray(g, dtype=float), 0.0, 1.0)
    return np.floor(clipped / 0.25 + 0.5).astype(np.int64)


def behavior_action(rng: np.random.Generator) -> int:
    """Clipped Gaussian(0.4, 0.4) bid snapped to the action grid"""
    return int(snap_bid(rng.normal(BEHAVIOR_MEAN, BEHAVIOR_STD)))


def behavior_action_marginal() -> np.ndarray:
    """Exact probability of each action index under the behavior policy"""
    edges = (np.arange(1, N_ACTIONS) - 0.5) * 0.25
    cdf = norm.cdf(edges, loc=BEHAVIOR_MEAN, scale=BEHAVIOR_STD)
    return np.diff(np.concatenate([[0.0], cdf, [1.0]]))


def generate_dataset(n: int = DEFAULT_DATASET_SIZE, seed: int = 0) -> Dataset:
    """n logged transitions from the behavior policy, reproducible from seed"""
    if n < 1:
        raise DomainError(f"dataset size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    states = sample_states(rng, n)
    actions = snap_bid(rng.normal(BEHAVIOR_MEAN, BEHAVIOR_STD, size=n))
    bids = BID_FRACTIONS[actions]
    clicks = (rng.random(n) < click_prob(states, bids)).astype(float)
    next_states = sample_states(rng, n)
    logger.info(f"[DATA] Generated {n} transitions (seed={seed})")
    return Dataset(
        x=states[:, 0], c=states[:, 1], a=actions, r=clicks - states[:, 1] * bids,
        x_next=next_states[:, 0], c_next=next_states[:, 1], seed=seed,
    )


def subsample_dataset(data: Dataset, fraction: float, seed: int = 0) -> Dataset:
    """Uniform sub-sample keeping floor(fraction * N) transitions.

    One seeded permutation is shared by every fraction, so smaller fractions are subsets of
    larger ones.
    """
    if not 0.0 < fraction <= 1.0:
        raise DomainError(f"fraction must lie in (0, 1], got {fraction}")
    if fraction == 1.0:
        return data
    keep = int(np.floor(fraction * len(data) + 1e-9))
    if keep < 1:
        raise DomainError(f"fraction {fraction} of {len(data)} transitions keeps nothing")
    order = np.random.default_rng(seed).permutation(len(data))
    return data.subset(np.sort(order[:keep]))


# ==============================================================================
# ANALYTIC ORACLE
# ==============================================================================

def analytic_q(states) -> np.ndarray:
    """E[r | s, a] for every action, shape (n, 5)"""
    arr = np.atleast_2d(np.asarray(states, dtype=float))
    return expected_reward(arr[:, None, :], BID_FRACTIONS[None, :])


def optimal_value(s) -> Union[float, np.ndarray]:
    """One-step optimal value max_a E[r | s, a] (regret oracle)"""
    if isinstance(s, State):
        return float(np.max(analytic_q(s.as_array())))
    arr = np.asarray(s, dtype=float)
    values = np.max(analytic_q(arr), axis=-1)
    return float(values[0]) if arr.ndim == 1 else values


def evaluation_grid(n_x: int = 50, n_c: int = 20) -> np.ndarray:
    """Cartesian grid of evaluation states, x-major, shape (n_x * n_c, 2)"""
    xs, cs = np.meshgrid(np.linspace(*X_RANGE, n_x), np.linspace(*C_RANGE, n_c), indexing="ij")
    return np.column_stack([xs.ravel(), cs.ravel()])


def count_monotonicity_errors(q_fn: Callable[[np.ndarray], np.ndarray], eval_states,
                              tol: float = 1e-6) -> int:
    """Adjacent action pairs (i, i+1) over eval_states with q[i] > q[i+1] + tol"""
    if not tol > 0:
        raise DomainError(f"tol must be > 0, got {tol}")
    q = np.atleast_2d(q_fn(np.asarray(eval_states, dtype=float)))
    return int(np.sum(q[:, :-1] > q[:, 1:] + tol))


def ground_truth_monotonicity(eval_states: Optional[np.ndarray] = None,
                              tol: float = 1e-6) -> Dict[str, Any]:
    """Measured monotonicity of the analytic Q on the evaluation grid"""
    states = evaluation_grid() if eval_states is None else eval_states
    q = analytic_q(states)
    bad_pairs = q[:, :-1] > q[:, 1:] + tol
    return {
        "states": int(len(states)),
        "pairs": int(bad_pairs.size),
        "monotonicity_errors": int(bad_pairs.sum()),
        "nonmonotone_states": int(np.any(bad_pairs, axis=1).sum()),
        "argmax_histogram": np.bincount(np.argmax(q, axis=1), minlength=N_ACTIONS).tolist(),
    }


# ==============================================================================
# PERSISTENCE
# ==============================================================================

def save_dataset(data: Dataset, path: Union[str, Path]) -> Path:
    """JSON Lines: header line, then one transition per line"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps({"n": len(data), "seed": data.seed,
                            "generator_version": data.generator_version}) + "\n")
        for i in range(len(data)):
            a = int(data.a[i])
            f.write(json.dumps({
                "x": float(data.x[i]), "c": float(data.c[i]), "a": a,
                "bid": float(BID_FRACTIONS[a]), "r": float(data.r[i]),
                "x_next": float(data.x_next[i]), "c_next": float(data.c_next[i]),
            }) + "\n")
    return path


def load_dataset(path: Union[str, Path]) -> Dataset:
    with open(path, "r", encoding="utf-8") as f:
        header = json.loads(f.readline())
        rows = [json.loads(line) for line in f if line.strip()]
    if len(rows) != header["n"]:
        raise DomainError(f"{path}: header declares {header['n']} transitions, found {len(rows)}")
    column = lambda key, dtype=float: np.array([row[key] for row in rows], dtype=dtype)
    return Dataset(
        x=column("x"), c=column("c"), a=column("a", np.int64), r=column("r"),
        x_next=column("x_next"), c_next=column("c_next"),
        seed=int(header["seed"]), generator_version=header["generator_version"],
    )


def dataset_hash(data: Dataset) -> str:
    """sha256 over the header and the raw column bytes"""
    digest = hashlib.sha256()
    digest.update(json.dumps({"n": len(data), "seed": data.seed,
                              "generator_version": data.generator_version}, sort_keys=True).encode())
    for col in (data.x, data.c, data.a, data.r, data.x_next, data.c_next):
        digest.update(np.ascontiguousarray(col).tobytes())
    return digest.hexdigest()


def file_sha256(path: Union[str, Path]) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
