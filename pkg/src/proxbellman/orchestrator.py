"""
Experiment orchestrator: datasets, multi-seed cells, metrics and artifacts

    ExperimentConfig → dataset → (fraction × agent × seed) cells → MetricsRecord
                                       ↓                              ↓
                                 traces, checkpoints          records.jsonl, aggregate.json

Cells are independent; they run on a thread pool and are collected in config order, so the
emitted records depend only on the config.
"""

import asyncio
import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from tqdm import tqdm

from .agents import TrainResult, evaluate_policy, get_agent
from .bidclick_env import (
    Dataset,
    count_monotonicity_errors,
    dataset_hash,
    evaluation_grid,
    generate_dataset,
    load_dataset,
    save_dataset,
    subsample_dataset,
)
from .checkpoint import save_params
from .config import TrainConfig, get_train_config
from .errors import ConfigError, ProxBellmanError
from .report import NO_VARIANT, MetricsRecord, aggregate, write_aggregate, write_records

logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS = [1.0, 0.25, 0.0625]


# ==============================================================================
# EXPERIMENT FILE
# ==============================================================================

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatasetSpec(_Strict):
    """Load from path when it exists; otherwise generate (and save to path if given)"""
    path: Optional[str] = None
    n: int = Field(default=100_000, ge=1)
    seed: int = 0


class EvalSpec(_Strict):
    grid: Tuple[int, int] = (50, 20)
    n_states: int = Field(default=10_000, ge=1)
    tol: float = Field(default=1e-6, gt=0)


class AgentSpec(_Strict):
    agent: str
    variant: str = "full"
    overrides: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("agent")
    @classmethod
    def _known_agent(cls, value: str) -> str:
        get_agent(value, TrainConfig())
        return value

    @field_validator("variant")
    @classmethod
    def _known_variant(cls, value: str) -> str:
        return get_train_config(value).variant.value

    @property
    def is_ours(self) -> bool:
        return get_agent(self.agent, TrainConfig()).name == "constraint_aware"

    @property
    def agent_name(self) -> str:
        return get_agent(self.agent, TrainConfig()).name


class ExperimentConfig(_Strict):
    name: str = "experiment"
    dataset: DatasetSpec = Field(default_factory=DatasetSpec)
    agents: List[AgentSpec] = Field(min_length=1)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1)
    subsample_fractions: List[float] = Field(default_factory=lambda: list(DEFAULT_FRACTIONS), min_length=1)
    subsample_seed: int = 0
    eval_states: EvalSpec = Field(default_factory=EvalSpec)
    train: Dict[str, Any] = Field(default_factory=dict)
    output_dir: str = "runs"
    save_checkpoints: bool = False

    @field_validator("subsample_fractions")
    @classmethod
    def _fractions(cls, value: List[float]) -> List[float]:
        if any(not 0.0 < f <= 1.0 for f in value):
            raise ValueError("fractions must lie in (0, 1]")
        if any(b >= a for a, b in zip(value, value[1:])):
            raise ValueError("fractions must be sorted strictly descending")
        return value

    @model_validator(mode="after")
    def _train_overrides(self) -> "ExperimentConfig":
        for spec in self.agents:
            self.train_config(spec, self.seeds[0])
        return self

    @classmethod
    def from_file(cls, path: Path) -> "ExperimentConfig":
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))

    def train_config(self, spec: AgentSpec, seed: int) -> TrainConfig:
        """Shared train block, then per-agent overrides, then seed and evaluation settings"""
        overrides = {**self.train, **spec.overrides}
        for key in ("seed", "variant", "eval_grid", "eval_states", "eval_tol"):
            if key in overrides:
                raise ConfigError(f"'{key}' is set by the experiment, not by train overrides")
        return get_train_config(
            spec.variant, seed=seed, eval_grid=self.eval_states.grid,
            eval_states=self.eval_states.n_states, eval_tol=self.eval_states.tol, **overrides,
        )


def config_hash(payload: Dict[str, Any]) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


# ==============================================================================
# ORCHESTRATOR
# ==============================================================================

@dataclass
class Cell:
    spec: AgentSpec
    seed: int
    fraction: float

    @property
    def variant(self) -> str:
        return self.spec.variant if self.spec.is_ours else NO_VARIANT

    @property
    def key(self) -> str:
        variant = "" if self.variant == NO_VARIANT else f"-{self.variant}"
        return f"{self.spec.agent_name}{variant}_f{self.fraction:g}_s{self.seed}"


@dataclass
class ExperimentState:
    """Everything a run produced; records stay in cell order"""
    config: ExperimentConfig
    dataset_hash: str = ""
    records: List[MetricsRecord] = field(default_factory=list)
    results: Dict[str, TrainResult] = field(default_factory=dict)
    started: float = field(default_factory=time.perf_counter)

    @property
    def failures(self) -> List[MetricsRecord]:
        return [r for r in self.records if not r.ok]


def load_or_generate(spec: DatasetSpec) -> Dataset:
    if spec.path and Path(spec.path).exists():
        logger.info(f"[DATA] Loading {spec.path}")
        return load_dataset(spec.path)
    data = generate_dataset(spec.n, spec.seed)
    if spec.path:
        save_dataset(data, spec.path)
    return data


class ExperimentOrchestrator:
    """Runs every (fraction, agent, seed) cell of an experiment"""

    def __init__(self, config: ExperimentConfig, workers: int = 1, output_dir: Optional[Path] = None,
                 keep_results: bool = False):
        self.config = config
        self.workers = max(1, workers)
        self.output_dir = Path(output_dir or config.output_dir)
        self.keep_results = keep_results

    def cells(self, fractions: List[float]) -> List[Cell]:
        return [Cell(spec, seed, fraction)
                for fraction in fractions for spec in self.config.agents for seed in self.config.seeds]

    def run_cell(self, cell: Cell, data: Dataset, data_hash: str) -> Tuple[MetricsRecord, Optional[TrainResult]]:
        """Train and evaluate one cell; agent failures become failed records"""
        started = time.perf_counter()
        cfg = self.config.train_config(cell.spec, cell.seed)
        digest = config_hash({"train": cfg.to_dict(), "agent": cell.spec.agent_name, "fraction": cell.fraction,
                              "dataset": data_hash, "subsample_seed": self.config.subsample_seed})
        try:
            subset = subsample_dataset(data, cell.fraction, self.config.subsample_seed)
            result = get_agent(cell.spec.agent, cfg).train(subset)
            ret, regret = evaluate_policy(result.policy, cfg.eval_states, cfg.seed)
            errors = count_monotonicity_errors(result.q_fn, evaluation_grid(*cfg.eval_grid), cfg.eval_tol)
        except ProxBellmanError as exc:
            logger.error(f"[CELL] {cell.key} failed: {exc}")
            nan = float("nan")
            record = MetricsRecord(cell.spec.agent_name, cell.variant, cell.seed, nan, nan, 0, nan,
                                   time.perf_counter() - started, digest, cell.fraction,
                                   status="failed", error=str(exc))
            return record, None
        record = MetricsRecord(
            agent=cell.spec.agent_name, variant=cell.variant, seed=cell.seed, return_norm=ret,
            regret_norm=regret, monotonicity_errors=errors,
            residual_at_convergence=result.residual_at_convergence,
            wallclock_seconds=time.perf_counter() - started, config_hash=digest, fraction=cell.fraction,
        )
        self._write_cell_artifacts(cell, cfg, result)
        return record, result

    def _write_cell_artifacts(self, cell: Cell, cfg: TrainConfig, result: TrainResult) -> None:
        result.trace.to_csv(self.output_dir / "traces" / f"{cell.key}.csv")
        if self.config.save_checkpoints:
            ckpt = self.output_dir / "checkpoints"
            save_params(result.policy.phi, ckpt / f"{cell.key}_actor.bin", cfg.seed, {"agent": cell.spec.agent_name})
            if result.critic is not None:
                save_params(result.critic.theta, ckpt / f"{cell.key}_critic.bin", cfg.seed,
                            {"agent": cell.spec.agent_name, "lambda": result.critic.dual.lam})

    async def run(self, fractions: Optional[List[float]] = None) -> ExperimentState:
        fractions = fractions or [1.0]
        data = load_or_generate(self.config.dataset)
        state = ExperimentState(config=self.config, dataset_hash=dataset_hash(data))
        cells = self.cells(fractions)
        logger.info(f"[SWEEP] {self.config.name}: {len(cells)} cells on {self.workers} worker(s), "
                    f"dataset {state.dataset_hash[:12]}")

        loop = asyncio.get_running_loop()
        with ThreadPoolExecutor(max_workers=self.workers) as pool, tqdm(total=len(cells), desc="cells") as bar:
            async def run_one(cell: Cell):
                outcome = await loop.run_in_executor(pool, self.run_cell, cell, data, state.dataset_hash)
                bar.update(1)
                return outcome
            outcomes = await asyncio.gather(*(run_one(cell) for cell in cells))

        for cell, (record, result) in zip(cells, outcomes):
            state.records.append(record)
            if self.keep_results and result is not None:
                state.results[cell.key] = result
        self._write_summary(state)
        logger.info(f"[SWEEP] done in {time.perf_counter() - state.started:.1f}s, "
                    f"{len(state.failures)} failed cell(s)")
        return state

    def _write_summary(self, state: ExperimentState) -> None:
        write_records(state.records, self.output_dir / "records.jsonl")
        if any(r.ok for r in state.records):
            write_aggregate(aggregate(state.records), self.output_dir / "aggregate.json")


async def run_experiment_async(cfg: ExperimentConfig, workers: int = 1,
                               output_dir: Optional[Path] = None) -> List[MetricsRecord]:
    state = await ExperimentOrchestrator(cfg, workers, output_dir).run([1.0])
    return state.records


def run_experiment(cfg: ExperimentConfig, workers: int = 1, output_dir: Optional[Path] = None) -> List[MetricsRecord]:
    """One record per (agent, variant, seed) on the full dataset"""
    return asyncio.run(run_experiment_async(cfg, workers, output_dir))


def subsample_sweep(cfg: ExperimentConfig, workers: int = 1, output_dir: Optional[Path] = None) -> List[MetricsRecord]:
    """Every configured agent on each nested sub-sample; records are tagged with the fraction"""
    orchestrator = ExperimentOrchestrator(cfg, workers, output_dir)
    return asyncio.run(orchestrator.run(list(cfg.subsample_fractions))).records
