"""
Training configuration: hyperparameters, ablation variants and their profiles
"""

from dataclasses import asdict, dataclass, fields, replace
from enum import Enum
from typing import Any, Dict, Optional, Tuple

from .approximator import Activation
from .constraint_ops import ConstraintKind, ConstraintSpec, DualState
from .errors import ConfigError
from .implicit_critic import CriticSettings


class Variant(Enum):
    """Ablation variants of the constraint-aware agent"""
    FULL = "full"
    FIXED_LAMBDA_WEAK = "fixed_lambda_weak"
    FIXED_LAMBDA_STRONG = "fixed_lambda_strong"
    SOFT_PENALTY = "soft_penalty"
    NO_WARM_START = "no_warm_start"
    INNER1 = "inner1"
    INNER5 = "inner5"
    NO_SPECTRAL_NORM = "no_spectral_norm"
    ACTOR_ONLY_CONSTRAINT = "actor_only_constraint"


@dataclass
class TrainConfig:
    """Hyperparameters shared by every agent"""
    # Bellman / dual
    gamma: float = 0.9
    lambda0: float = 0.1
    eta_lambda: float = 0.05
    fixed_lambda: Optional[float] = None

    # Optimization
    eta_theta: float = 1e-3
    eta_phi: float = 1e-3
    momentum: float = 0.9
    tau: float = 0.005
    alpha_entropy: float = 0.01
    batch_size: int = 256
    steps: int = 50_000
    seed: int = 0

    # Critic output layer
    constraint: Optional[ConstraintKind] = ConstraintKind.MONOTONE_CONE
    inner_iters: int = 1
    warm_start: bool = True
    prox_step_size: Optional[float] = None
    soft_penalty: bool = False
    actor_constraint: bool = False
    cg_tol: float = 1e-8
    prox_tol: float = 1e-10
    critic_grad_clip: Optional[float] = 10.0

    # Networks
    hidden: Tuple[int, ...] = (64, 64)
    activation: Activation = Activation.TANH
    spectral_norm: bool = True
    power_iters: int = 1

    # Actor
    score_function_actor: bool = False

    # Baselines
    expectile: float = 0.7
    awr_temperature: float = 3.0
    awr_weight_clip: float = 100.0
    cql_weight: float = 1.0

    # Evaluation
    eval_every: int = 1000
    eval_states: int = 10_000
    eval_grid: Tuple[int, int] = (50, 20)
    eval_tol: float = 1e-6

    variant: Variant = Variant.FULL

    def __post_init__(self):
        if isinstance(self.variant, str):
            self.variant = parse_variant(self.variant)
        if isinstance(self.activation, str):
            self.activation = Activation(self.activation)
        if isinstance(self.constraint, str):
            self.constraint = ConstraintKind(self.constraint)
        self.hidden = tuple(self.hidden)
        self.eval_grid = tuple(self.eval_grid)
        self.validate()

    def validate(self) -> None:
        checks = [
            (0.0 < self.gamma < 1.0, f"gamma must lie in (0, 1), got {self.gamma}"),
            (self.lambda0 >= 0.0, f"lambda0 must be >= 0, got {self.lambda0}"),
            (self.fixed_lambda is None or self.fixed_lambda >= 0.0, f"fixed_lambda must be >= 0, got {self.fixed_lambda}"),
            (self.eta_theta > 0 and self.eta_phi > 0 and self.eta_lambda > 0, "learning rates must be > 0"),
            (0.0 <= self.momentum < 1.0, f"momentum must lie in [0, 1), got {self.momentum}"),
            (0.0 < self.tau <= 1.0, f"tau must lie in (0, 1], got {self.tau}"),
            (self.alpha_entropy >= 0.0, f"alpha_entropy must be >= 0, got {self.alpha_entropy}"),
            (self.batch_size >= 1, f"batch_size must be >= 1, got {self.batch_size}"),
            (self.steps >= 0, f"steps must be >= 0, got {self.steps}"),
            (self.inner_iters >= 1, f"inner_iters must be >= 1, got {self.inner_iters}"),
            (self.critic_grad_clip is None or self.critic_grad_clip > 0, f"critic_grad_clip must be > 0, got {self.critic_grad_clip}"),
            (self.constraint != ConstraintKind.LIPSCHITZ_PENALTY, "the critic layer takes monotone constraints only"),
            (all(h >= 1 for h in self.hidden), f"hidden sizes must be >= 1, got {self.hidden}"),
            (self.power_iters >= 1, f"power_iters must be >= 1, got {self.power_iters}"),
            (0.5 < self.expectile < 1.0, f"expectile must lie in (0.5, 1), got {self.expectile}"),
            (self.awr_temperature > 0 and self.awr_weight_clip > 0, "AWR temperature and clip must be > 0"),
            (self.cql_weight >= 0.0, f"cql_weight must be >= 0, got {self.cql_weight}"),
            (self.eval_every >= 1 and self.eval_states >= 1, "evaluation cadence and size must be >= 1"),
            (len(self.eval_grid) == 2 and min(self.eval_grid) >= 2, f"eval_grid needs two axes of >= 2 points, got {self.eval_grid}"),
            (self.eval_tol > 0, f"eval_tol must be > 0, got {self.eval_tol}"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    @property
    def constraint_spec(self) -> Optional[ConstraintSpec]:
        return None if self.constraint is None else ConstraintSpec(self.constraint)

    @property
    def learns_lambda(self) -> bool:
        return self.fixed_lambda is None

    def initial_dual(self) -> DualState:
        lam = self.lambda0 if self.fixed_lambda is None else self.fixed_lambda
        return DualState(lam=lam, eta_lambda=self.eta_lambda)

    def critic_settings(self) -> CriticSettings:
        return CriticSettings(
            gamma=self.gamma,
            spec=None if self.soft_penalty else self.constraint_spec,
            inner_iters=self.inner_iters,
            warm_start=self.warm_start,
            prox_step_size=self.prox_step_size,
            prox_tol=self.prox_tol,
            cg_tol=self.cg_tol,
            max_grad_norm=self.critic_grad_clip,
        )

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["variant"] = self.variant.value
        out["activation"] = self.activation.value
        out["constraint"] = None if self.constraint is None else self.constraint.value
        out["hidden"] = list(self.hidden)
        out["eval_grid"] = list(self.eval_grid)
        return out


# Flags each variant sets on top of the user's configuration
VARIANT_PROFILES: Dict[Variant, Dict[str, Any]] = {
    Variant.FULL: {},
    Variant.FIXED_LAMBDA_WEAK: {"constraint": ConstraintKind.MONOTONE_PENALTY, "fixed_lambda": 0.01},
    Variant.FIXED_LAMBDA_STRONG: {"fixed_lambda": 10.0},
    Variant.SOFT_PENALTY: {"constraint": None, "soft_penalty": True},
    Variant.NO_WARM_START: {"warm_start": False},
    Variant.INNER1: {"inner_iters": 1},
    Variant.INNER5: {"inner_iters": 5},
    Variant.NO_SPECTRAL_NORM: {"spectral_norm": False},
    Variant.ACTOR_ONLY_CONSTRAINT: {"constraint": None, "actor_constraint": True},
}


def parse_variant(name: str) -> Variant:
    try:
        return Variant(name.lower())
    except ValueError:
        known = ", ".join(v.value for v in Variant)
        raise ConfigError(f"unknown variant '{name}' (known: {known})") from None


def apply_variant(cfg: TrainConfig) -> TrainConfig:
    """Concrete configuration with the variant's flags applied"""
    if not isinstance(cfg.variant, Variant) or cfg.variant not in VARIANT_PROFILES:
        raise ConfigError(f"unknown variant {cfg.variant!r}")
    profile = VARIANT_PROFILES[cfg.variant]
    return replace(cfg, **profile) if profile else cfg


def get_train_config(variant: str = "full", **overrides) -> TrainConfig:
    """Convenience: TrainConfig for a named variant with keyword overrides"""
    known = {f.name for f in fields(TrainConfig)}
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise ConfigError(f"unknown TrainConfig fields: {', '.join(unknown)}")
    return TrainConfig(variant=parse_variant(variant), **overrides)
