"""
proxbellman
Constraint-aware offline actor-critic with a proximal Bellman critic layer

Benchmarked on Bid-Click, a synthetic ad-auction MDP whose Q-values are nondecreasing in the bid
"""

from .constraint_ops import (
    ConstraintKind,
    ConstraintSpec,
    DualState,
    dual_update,
    lipschitz_penalty,
    monotone_penalty,
    project_monotone_cone,
    prox_for_spec,
    prox_lipschitz_penalty,
    prox_monotone_penalty,
)

from .tabular_oracle import (
    DiscreteMdp,
    ValueGrid,
    bellman_optimal,
    bidclick_mdp,
    fixed_point,
    lambda_continuation,
    psi_lambda,
)

from .approximator import (
    Activation,
    MlpParams,
    forward,
    init_mlp,
    spectral_normalize,
    vjp,
)

from .implicit_critic import (
    Batch,
    CriticSettings,
    CriticState,
    cg_solve,
    critic_step,
    implicit_gradient,
    prox_step,
)

from .config import (
    TrainConfig,
    Variant,
    apply_variant,
    get_train_config,
)

from .agents import (
    PolicyParams,
    TrainResult,
    evaluate_policy,
    get_agent,
    train_bc,
    train_constraint_aware,
    train_cql,
    train_fitted_q,
    train_iql,
)

from .bidclick_env import (
    Dataset,
    State,
    Transition,
    generate_dataset,
    load_dataset,
    save_dataset,
    subsample_dataset,
)

from .orchestrator import (
    ExperimentConfig,
    run_experiment,
    subsample_sweep,
)

from .report import (
    MetricsRecord,
    emit_report,
)

__version__ = "0.1.0"

__all__ = [
    # Constraint operators
    "ConstraintKind",
    "ConstraintSpec",
    "DualState",
    "dual_update",
    "lipschitz_penalty",
    "monotone_penalty",
    "project_monotone_cone",
    "prox_for_spec",
    "prox_lipschitz_penalty",
    "prox_monotone_penalty",

    # Tabular oracle
    "DiscreteMdp",
    "ValueGrid",
    "bellman_optimal",
    "bidclick_mdp",
    "fixed_point",
    "lambda_continuation",
    "psi_lambda",

    # Networks
    "Activation",
    "MlpParams",
    "forward",
    "init_mlp",
    "spectral_normalize",
    "vjp",

    # Critic
    "Batch",
    "CriticSettings",
    "CriticState",
    "cg_solve",
    "critic_step",
    "implicit_gradient",
    "prox_step",

    # Agents
    "TrainConfig",
    "Variant",
    "apply_variant",
    "get_train_config",
    "PolicyParams",
    "TrainResult",
    "evaluate_policy",
    "get_agent",
    "train_bc",
    "train_constraint_aware",
    "train_cql",
    "train_fitted_q",
    "train_iql",

    # Environment
    "Dataset",
    "State",
    "Transition",
    "generate_dataset",
    "load_dataset",
    "save_dataset",
    "subsample_dataset",

    # Harness
    "ExperimentConfig",
    "run_experiment",
    "subsample_sweep",
    "MetricsRecord",
    "emit_report",
]
