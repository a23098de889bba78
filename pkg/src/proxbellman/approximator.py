"""
Minimal feed-forward approximator with exact parameter gradients

Sized for the 2-input Bid-Click critic (5 Q-values) and actor (5 logits). Parameters are
values: every update returns a new MlpParams, so a training loop owns exactly one copy.

Canonical flat ordering: W0 (row-major), b0, W1, b1, ...
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError

# Flat vector aligned with the canonical parameter ordering.
FlatGrad = np.ndarray


class Activation(Enum):
    TANH = "tanh"
    RELU = "relu"


@dataclass
class MlpParams:
    """Layered (weight, bias) collection; weights are (out, in)"""
    layers: List[Tuple[np.ndarray, np.ndarray]]
    activations: List[Activation]
    spectral_state: Optional[List[np.ndarray]] = None

    def __post_init__(self):
        if len(self.activations) != len(self.layers) - 1:
            raise DomainError(
                f"{len(self.layers)} layers need {len(self.layers) - 1} hidden activations, "
                f"got {len(self.activations)}"
            )
        for (w, b), (w_next, _) in zip(self.layers, self.layers[1:]):
            if w_next.shape[1] != w.shape[0]:
                raise DomainError(f"layer shapes do not compose: {w.shape} -> {w_next.shape}")
        for w, b in self.layers:
            if b.shape != (w.shape[0],):
                raise DomainError(f"bias shape {b.shape} does not match weight {w.shape}")

    @property
    def sizes(self) -> List[int]:
        return [self.layers[0][0].shape[1]] + [w.shape[0] for w, _ in self.layers]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in self.layers)

    def copy(self) -> "MlpParams":
        return MlpParams(
            layers=[(w.copy(), b.copy()) for w, b in self.layers],
            activations=list(self.activations),
            spectral_state=None if self.spectral_state is None else [u.copy() for u in self.spectral_state],
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(w)) and np.all(np.isfinite(b)) for w, b in self.layers)


def init_mlp(
    sizes: Sequence[int],
    activation: Activation = Activation.TANH,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> MlpParams:
    """Uniform fan-in initialization U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero"""
    if len(sizes) < 2:
        raise DomainError(f"need at least input and output sizes, got {list(sizes)}")
    rng = rng if rng is not None else np.random.default_rng(seed)
    layers = []
    spectral = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        layers.append((rng.uniform(-bound, bound, size=(fan_out, fan_in)), np.zeros(fan_out)))
        u = rng.standard_normal(fan_out)
        spectral.append(u / np.linalg.norm(u))
    return MlpParams(layers=layers, activations=[activation] * (len(sizes) - 2), spectral_state=spectral)


def _act(kind: Activation, z: np.ndarray) -> np.ndarray:
    return np.tanh(z) if kind == Activation.TANH else np.maximum(z, 0.0)


def _act_slope(kind: Activation, z: np.ndarray, h: np.ndarray) -> np.ndarray:
    return 1.0 - h ** 2 if kind == Activation.TANH else (z > 0.0).astype(float)


def _as_batch(p: MlpParams, x) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != p.sizes[0]:
        raise DomainError(f"input dimension {arr.shape[1]} does not match first layer {p.sizes[0]}")
    return arr, single


def _trace(p: MlpParams, x: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Layer inputs h_l and pre-activations z_l for a batch"""
    inputs, pre = [], []
    h = x
    for i, (w, b) in enumerate(p.layers):
        inputs.append(h)
        z = h @ w.T + b
        pre.append(z)
        h = _act(p.activations[i], z) if i < len(p.activations) else z
    inputs.append(h)
    return inputs, pre


def forward(p: MlpParams, x) -> np.ndarray:
    """Network output for one input (d,) or a batch (n, d); the output layer is linear"""
    batch, single = _as_batch(p, x)
    out = _trace(p, batch)[0][-1]
    return out[0] if single else out


def flatten(p: MlpParams) -> FlatGrad:
    return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in p.layers])


def unflatten(template: MlpParams, flat: FlatGrad) -> MlpParams:
    """Parameters shaped like template, filled from a flat vector"""
    flat = np.asarray(flat, dtype=float)
    if flat.shape != (template.n_params,):
        raise DomainError(f"flat vector has shape {flat.shape}, expected ({template.n_params},)")
    layers, offset = [], 0
    for w, b in template.layers:
        w_new = flat[offset:offset + w.size].reshape(w.shape)
        offset += w.size
        b_new = flat[offset:offset + b.size].copy()
        offset += b.size
        layers.append((w_new.copy(), b_new))
    spectral = None if template.spectral_state is None else [u.copy() for u in template.spectral_state]
    return MlpParams(layers=layers, activations=list(template.activations), spectral_state=spectral)


def vjp(p: MlpParams, x, cotangent) -> FlatGrad:
    """Reverse-mode product cotangent^T d f(x) / d theta, summed over the batch"""
    batch, single = _as_batch(p, x)
    g = np.atleast_2d(np.asarray(cotangent, dtype=float))
    if g.shape != (batch.shape[0], p.sizes[-1]):
        raise DomainError(f"cotangent shape {g.shape} does not match output {(batch.shape[0], p.sizes[-1])}")
    inputs, pre = _trace(p, batch)
    grads: List[np.ndarray] = []
    for i in range(len(p.layers) - 1, -1, -1):
        w, _ = p.layers[i]
        grads.append(g.sum(axis=0))
        grads.append((g.T @ inputs[i]).ravel())
        if i > 0:
            g = (g @ w) * _act_slope(p.activations[i - 1], pre[i - 1], inputs[i])
    return np.concatenate(grads[::-1])


def jvp_params(p: MlpParams, x, tangent: FlatGrad) -> np.ndarray:
    """Forward-mode product d f(x) / d theta . tangent"""
    batch, single = _as_batch(p, x)
    dp = unflatten(p, tangent)
    inputs, pre = _trace(p, batch)
    dh = np.zeros_like(batch)
    out = dh
    for i, ((w, _), (dw, db)) in enumerate(zip(p.layers, dp.layers)):
        dz = inputs[i] @ dw.T + db + dh @ w.T
        if i < len(p.activations):
            dh = _act_slope(p.activations[i], pre[i], inputs[i + 1]) * dz
        else:
            out = dz
    return out[0] if single else out


# ==============================================================================
# SPECTRAL NORMALIZATION
# ==============================================================================

def spectral_norm_estimate(w: np.ndarray, u: Optional[np.ndarray] = None,
                           power_iters: int = 30) -> Tuple[float, np.ndarray]:
    """Largest singular value of w by power iteration; returns (sigma, left vector u)"""
    if power_iters < 1:
        raise DomainError(f"power_iters must be >= 1, got {power_iters}")
    u = np.ones(w.shape[0]) / np.sqrt(w.shape[0]) if u is None else u
    v = np.zeros(w.shape[1])
    for _ in range(power_iters):
        v = w.T @ u
        v_norm = np.linalg.norm(v)
        if v_norm == 0.0:
            return 0.0, u
        v = v / v_norm
        u = w @ v
        u_norm = np.linalg.norm(u)
        if u_norm == 0.0:
            return 0.0, np.ones(w.shape[0]) / np.sqrt(w.shape[0])
        u = u / u_norm
    return float(u @ w @ v), u


def spectral_normalize(p: MlpParams, power_iters: int = 1) -> MlpParams:
    """Divide each weight by its estimated sigma_max when that estimate exceeds 1"""
    state = p.spectral_state or [None] * len(p.layers)
    layers, new_state = [], []
    for (w, b), u in zip(p.layers, state):
        sigma, u_new = spectral_norm_estimate(w, u, power_iters)
        layers.append((w / sigma if sigma > 1.0 else w.copy(), b.copy()))
        new_state.append(u_new)
    return MlpParams(layers=layers, activations=list(p.activations), spectral_state=new_state)


def lipschitz_upper_bound(p: MlpParams) -> float:
    """Product of exact per-layer spectral norms (activation slopes are <= 1)"""
    return float(np.prod([np.linalg.norm(w, 2) for w, _ in p.layers]))


# ==============================================================================
# OPTIMIZATION HELPERS
# ==============================================================================

@dataclass
class Sgd:
    """Plain SGD with heavy-ball momentum over the flat parameter vector"""
    lr: float
    momentum: float = 0.9
    velocity: Optional[np.ndarray] = field(default=None, repr=False)

    def step(self, p: MlpParams, grad: FlatGrad) -> MlpParams:
        if self.velocity is None:
            self.velocity = np.zeros_like(grad)
        self.velocity = self.momentum * self.velocity + grad
        return unflatten(p, flatten(p) - self.lr * self.velocity)


def polyak_average(target: MlpParams, online: MlpParams, tau: float) -> MlpParams:
    """theta_bar <- tau * theta + (1 - tau) * theta_bar"""
    if not 0.0 <= tau <= 1.0:
        raise DomainError(f"tau must lie in [0, 1], got {tau}")
    layers = [
        (tau * w + (1.0 - tau) * w_bar, tau * b + (1.0 - tau) * b_bar)
        for (w, b), (w_bar, b_bar) in zip(online.layers, target.layers)
    ]
    return MlpParams(layers=layers, activations=list(target.activations),
                     spectral_state=target.spectral_state)
