import json
import math
from pathlib import Path

import pytest
from pydantic import ValidationError

from proxbellman.bidclick_env import dataset_hash, generate_dataset
from proxbellman.orchestrator import (
    AgentSpec,
    Cell,
    DatasetSpec,
    ExperimentConfig,
    ExperimentOrchestrator,
    config_hash,
    load_or_generate,
    run_experiment,
    run_experiment_async,
    subsample_sweep,
)
from proxbellman.report import read_records, records_digest

SMALL_TRAIN = {"steps": 5, "batch_size": 16, "hidden": [8], "eval_every": 5}


def small_config(tmp_path, agents=None, **extra) -> ExperimentConfig:
    payload = {
        "name": "small",
        "dataset": {"n": 300, "seed": 0},
        "agents": agents or [{"agent": "ours"}, {"agent": "iql"}],
        "seeds": [0, 1],
        "eval_states": {"grid": [5, 4], "n_states": 64},
        "train": SMALL_TRAIN,
        "output_dir": str(tmp_path / "run"),
        **extra,
    }
    return ExperimentConfig.model_validate(payload)


async def test_records_follow_config_order(tmp_path):
    cfg = small_config(tmp_path)
    records = await run_experiment_async(cfg, workers=2)
    assert [(r.agent, r.variant, r.seed) for r in records] == [
        ("constraint_aware", "full", 0), ("constraint_aware", "full", 1), ("iql", "-", 0), ("iql", "-", 1),
    ]
    assert all(r.ok and r.fraction == 1.0 for r in records)
    assert all(r.monotonicity_errors == 0 for r in records[:2])
    assert all(math.isclose(r.return_norm + r.regret_norm, records[0].return_norm + records[0].regret_norm)
               for r in records if r.seed == 0)
    out = tmp_path / "run"
    assert read_records(out / "records.jsonl") == records
    assert (out / "aggregate.json").exists()
    assert (out / "traces" / "constraint_aware-full_f1_s0.csv").exists()
    assert (out / "traces" / "iql_f1_s1.csv").exists()


def test_runs_are_reproducible_across_worker_counts(tmp_path):
    cfg = small_config(tmp_path)
    serial = run_experiment(cfg, workers=1, output_dir=tmp_path / "serial")
    parallel = run_experiment(cfg, workers=3, output_dir=tmp_path / "parallel")
    assert records_digest(serial) == records_digest(parallel)
    assert serial[0].config_hash != serial[1].config_hash


def test_failed_cells_are_recorded(tmp_path):
    agents = [{"agent": "ours"},
              {"agent": "fitted_q", "overrides": {"eta_theta": 1e300, "spectral_norm": False}}]
    records = run_experiment(small_config(tmp_path, agents), output_dir=tmp_path / "out")
    failed = [r for r in records if not r.ok]
    assert [r.agent for r in failed] == ["fitted_q", "fitted_q"]
    assert all(r.status == "failed" and r.error and math.isnan(r.return_norm) for r in failed)
    aggregate = json.loads((tmp_path / "out" / "aggregate.json").read_text())
    assert {row["agent"]: row["n_failed"] for row in aggregate} == {"constraint_aware": 0, "fitted_q": 2}


def test_subsample_sweep_tags_fractions(tmp_path):
    cfg = small_config(tmp_path, agents=[{"agent": "bc"}], subsample_fractions=[1.0, 0.5])
    records = subsample_sweep(cfg)
    assert [(r.fraction, r.seed) for r in records] == [(1.0, 0), (1.0, 1), (0.5, 0), (0.5, 1)]
    assert all(math.isnan(r.residual_at_convergence) for r in records)


def test_checkpoints_are_written_on_request(tmp_path):
    cfg = small_config(tmp_path, agents=[{"agent": "ours", "variant": "inner5"}, {"agent": "bc"}],
                       seeds=[0], save_checkpoints=True)
    run_experiment(cfg)
    ckpt = tmp_path / "run" / "checkpoints"
    assert sorted(p.name for p in ckpt.glob("*.bin")) == [
        "bc_f1_s0_actor.bin", "constraint_aware-inner5_f1_s0_actor.bin", "constraint_aware-inner5_f1_s0_critic.bin",
    ]


def test_cells_enumerate_fractions_agents_seeds(tmp_path):
    orchestrator = ExperimentOrchestrator(small_config(tmp_path))
    keys = [cell.key for cell in orchestrator.cells([1.0, 0.25])]
    assert keys[:2] == ["constraint_aware-full_f1_s0", "constraint_aware-full_f1_s1"]
    assert keys[-1] == "iql_f0.25_s1"
    assert Cell(AgentSpec(agent="fqi"), 3, 0.0625).key == "fitted_q_f0.0625_s3"


@pytest.mark.parametrize("change", [
    {"bogus": 1},
    {"agents": []},
    {"agents": [{"agent": "ppo"}]},
    {"agents": [{"agent": "ours", "variant": "turbo"}]},
    {"subsample_fractions": [0.25, 1.0]},
    {"subsample_fractions": [1.0, 0.0]},
    {"train": {"seed": 3}},
    {"train": {"learning_rate": 0.1}},
    {"train": {"gamma": 1.5}},
    {"dataset": {"n": 0}},
])
def test_invalid_experiment_files(tmp_path, change):
    payload = {"agents": [{"agent": "ours"}], **change}
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate(payload)


def test_config_from_file(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"agents": [{"agent": "cql", "overrides": {"cql_weight": 2.0}}], "seeds": [7]}))
    cfg = ExperimentConfig.from_file(path)
    train = cfg.train_config(cfg.agents[0], 7)
    assert train.cql_weight == 2.0 and train.seed == 7 and train.eval_grid == (50, 20)


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})


def test_dataset_is_saved_then_reloaded(tmp_path):
    spec = DatasetSpec(path=str(tmp_path / "data.jsonl"), n=120, seed=2)
    first = load_or_generate(spec)
    assert (tmp_path / "data.jsonl").exists()
    assert dataset_hash(load_or_generate(spec)) == dataset_hash(first) == dataset_hash(generate_dataset(120, 2))


@pytest.mark.parametrize("name", ["performance", "ablation", "subsample", "smoke"])
def test_shipped_experiment_files_validate(name):
    path = Path(__file__).resolve().parents[1] / "config" / f"{name}.json"
    cfg = ExperimentConfig.from_file(path)
    assert cfg.name == name
    assert cfg.subsample_fractions[0] == 1.0
