import json
import os

import numpy as np
import pytest

from springsim import cli, dataio


TINY_CFG = {
    "seed": 0,
    "generate": {
        "particle_counts": [4],
        "train_pairs": 24,
        "val_pairs": 8,
        "test_pairs": 8,
        "dt_policy": "fixed",
        "fixed_dt": 0.1,
        "eval_particle_counts": [4],
        "eval_dts": [0.1],
        "eval_count": 2,
        "eval_length": 4,
    },
    "train": {
        "model": "delta_gn",
        "integrator": "rk1",
        "batch_size": 8,
        "steps": 12,
        "lr": 0.003,
        "val_every": 6,
        "hidden": [8, 8],
    },
    "sweep": {
        "count": 2,
        "low": 0.001,
        "high": 0.003,
        "rollout_count": 2,
    },
    "evaluate": {
        "models": [
            {"model": "delta_gn", "integrator": "rk1"},
            {"model": "true_hamiltonian", "integrator": "rk4"},
        ],
        "test_integrators": ["rk1"],
        "test_dts": [0.1],
        "particle_count": 4,
        "max_trajectories": 2,
    },
    "rollout": {
        "model": "true_hamiltonian",
        "integrator": "rk4",
        "dt": 0.1,
        "steps": 5,
        "particle_count": 4,
    },
}


@pytest.fixture()
def workdir(tmp_path):
    cfg = dict(TINY_CFG, out_dir=str(tmp_path / "out"))
    cfg_path = tmp_path / "tiny.cfg"
    cfg_path.write_text(json.dumps(cfg))
    return cfg_path, tmp_path / "out"


def run(cfg_path, *argv):
    return cli.main(["--config", str(cfg_path), *argv])


class TestConfigHandling:
    def test_missing_config_is_a_usage_error(self, tmp_path):
        assert cli.main(["--config", str(tmp_path / "nope.cfg"), "generate"]) == 1

    def test_invalid_json_config(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("{not json")
        assert cli.main(["--config", str(bad), "generate"]) == 1

    def test_malformed_override(self, workdir):
        cfg_path, _ = workdir
        assert run(cfg_path, "--set", "no_equals_sign", "generate") == 1

    def test_override_changes_effective_config(self, workdir, capsys):
        cfg_path, out = workdir
        assert run(cfg_path, "--set", "generate.train_pairs=4", "generate") == 0
        _, records = dataio.load_pairs(out / "pairs-train.jsonl")
        assert len(records) == 4

    def test_out_dir_flag_wins(self, workdir, tmp_path):
        cfg_path, _ = workdir
        alt = tmp_path / "alt"
        assert run(cfg_path, "--out-dir", str(alt), "generate") == 0
        assert (alt / "pairs-train.jsonl").exists()

    def test_out_dir_env_var(self, workdir, tmp_path, monkeypatch):
        cfg_path, _ = workdir
        env_dir = tmp_path / "env-out"
        monkeypatch.setenv("SPRINGSIM_OUT_DIR", str(env_dir))
        assert run(cfg_path, "generate") == 0
        assert (env_dir / "pairs-train.jsonl").exists()


class TestGenerate:
    def test_writes_all_splits_and_trajectories(self, workdir):
        cfg_path, out = workdir
        assert run(cfg_path, "generate") == 0
        for split, count in (("train", 24), ("val", 8), ("test", 8)):
            header, records = dataio.load_pairs(out / f"pairs-{split}.jsonl")
            assert header["split"] == split
            assert len(records) == count
        trajs = dataio.load_trajectories(out / "trajectories" / "traj-4-0.1.jsonl")
        assert len(trajs) == 2

    def test_splits_use_distinct_seeds(self, workdir):
        cfg_path, out = workdir
        run(cfg_path, "generate")
        _, train = dataio.load_pairs(out / "pairs-train.jsonl")
        _, val = dataio.load_pairs(out / "pairs-val.jsonl")
        assert not np.array_equal(train[0].state_in.q, val[0].state_in.q)

    def test_run_stanza_written(self, workdir):
        cfg_path, out = workdir
        run(cfg_path, "generate")
        stanza = json.loads((out / "run-generate.json").read_text())
        assert stanza["subcommand"] == "generate"
        assert stanza["seed"] == 0
        assert len(stanza["config_sha256"]) == 64

    def test_rerun_is_idempotent(self, workdir):
        cfg_path, out = workdir
        run(cfg_path, "generate")
        first = (out / "pairs-train.jsonl").read_text()
        stanza1 = (out / "run-generate.json").read_text()
        run(cfg_path, "generate")
        assert (out / "pairs-train.jsonl").read_text() == first
        assert (out / "run-generate.json").read_text() == stanza1


class TestTrainEvaluate:
    def test_full_pipeline(self, workdir, capsys):
        cfg_path, out = workdir
        assert run(cfg_path, "generate") == 0
        assert run(cfg_path, "train") == 0
        ckpt = out / "ckpt-delta_gn-rk1.bin"
        assert ckpt.exists()
        params = dataio.load_checkpoint(ckpt)
        assert params.kind.value == "delta_gn"

        assert run(cfg_path, "evaluate") == 0
        rows = dataio.read_metrics(out / "metrics.jsonl")
        eval_rows = [r for r in rows if r["record"] == "eval"]
        assert len(eval_rows) == 2
        kinds = {r["model_kind"] for r in eval_rows}
        assert kinds == {"delta_gn", "true_hamiltonian"}
        for r in eval_rows:
            assert np.isfinite(r["rollout_rmse"])
            assert np.isfinite(r["energy_error"])

        assert run(cfg_path, "rollout") == 0
        roll = dataio.load_trajectories(out / "rollout-true_hamiltonian-rk4-0.1.jsonl")
        assert len(roll) == 1 and len(roll[0]) == 6

        assert run(cfg_path, "export") == 0
        exported = dataio.read_metrics(out / "metrics-export.jsonl")
        assert len(exported) == len(rows)

    def test_train_records_curve_in_metrics(self, workdir):
        cfg_path, out = workdir
        run(cfg_path, "generate")
        run(cfg_path, "train")
        rows = dataio.read_metrics(out / "metrics.jsonl")
        curve = [r for r in rows if r["record"] == "training_curve"]
        assert curve
        assert all(r["model_kind"] == "delta_gn" for r in curve)
        assert any("val_loss" in r for r in curve)

    def test_train_without_generate_fails_cleanly(self, workdir, capsys):
        cfg_path, _ = workdir
        assert run(cfg_path, "train") == 1
        assert "generate" in capsys.readouterr().err

    def test_evaluate_without_checkpoint_fails_cleanly(self, workdir, capsys):
        cfg_path, _ = workdir
        run(cfg_path, "generate")
        assert run(cfg_path, "evaluate") == 1
        assert "checkpoint" in capsys.readouterr().err


class TestSweep:
    def test_sweep_writes_summary_and_best_checkpoint(self, workdir):
        cfg_path, out = workdir
        run(cfg_path, "generate")
        assert run(cfg_path, "sweep") == 0
        rows = dataio.read_metrics(out / "metrics.jsonl")
        sweep_rows = [r for r in rows if r["record"] == "sweep"]
        summary = [r for r in rows if r["record"] == "sweep_summary"]
        assert len(sweep_rows) == 2
        assert len(summary) == 1
        assert summary[0]["min_rollout_rmse"] <= summary[0]["max_rollout_rmse"]
        assert (out / "ckpt-delta_gn-rk1.bin").exists()
