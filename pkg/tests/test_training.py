import numpy as np
import pytest

from springsim import autodiff as ad
from springsim import dataio, training
from springsim.dataio import DatasetManifest
from springsim.models import ModelKind
from springsim.physics import State
from springsim.training import OptState, TrainConfig, TrainingDiverged


@pytest.fixture(scope="module")
def fixed_records(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "pairs.jsonl"
    manifest = DatasetManifest("train", (4,), 48, "fixed", seed=100)
    return dataio.generate_pair_dataset(manifest, path)


@pytest.fixture(scope="module")
def variable_records(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "pairs.jsonl"
    manifest = DatasetManifest("train", (4,), 48, "variable", seed=101)
    return dataio.generate_pair_dataset(manifest, path)


def tiny_config(**overrides):
    base = dict(kind=ModelKind.DELTA_GN, integrator="rk1", batch_size=8,
                steps=40, lr0=3e-3, seed=0, val_every=10, hidden=(8, 8))
    base.update(overrides)
    return TrainConfig(**base)


class TestTrainConfig:
    def test_invalid_settings_rejected(self):
        with pytest.raises(ValueError):
            tiny_config(batch_size=0)
        with pytest.raises(ValueError):
            tiny_config(lr0=0.0)
        with pytest.raises(ValueError):
            tiny_config(lr0=1.5)
        with pytest.raises(ValueError):
            tiny_config(dt_policy="adaptive")


class TestLoss:
    def test_state_pair_hand_computed(self):
        a = State(np.zeros((2, 2)), np.zeros((2, 2)))
        b = State(np.ones((2, 2)), np.zeros((2, 2)))
        # four squared-unit position errors over eight total entries
        assert training.mse_loss(a, b) == pytest.approx(0.5)

    def test_identical_states_give_zero(self):
        s = State(np.random.default_rng(0).normal(size=(3, 2)), np.zeros((3, 2)))
        assert training.mse_loss(s, s.copy()) == 0.0

    def test_shape_mismatch_raises(self):
        a = State(np.zeros((2, 2)), np.zeros((2, 2)))
        b = State(np.zeros((3, 2)), np.zeros((3, 2)))
        with pytest.raises(ValueError):
            training.mse_loss(a, b)

    def test_value_path_matches_state_path(self):
        rng = np.random.default_rng(1)
        qa, pa = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
        qb, pb = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
        expected = training.mse_loss(State(qa, pa), State(qb, pb))
        got = training.mse_loss((ad.Value(qa), ad.Value(pa)), (qb, pb))
        assert got.data.item() == pytest.approx(expected, rel=1e-12)


class TestAdam:
    def test_zero_learning_rate_is_identity(self):
        arrays = [np.array([1.0, -2.0])]
        opt = OptState.for_params(arrays)
        training.adam_step(opt, arrays, [np.array([0.3, -0.7])], lr=0.0)
        assert np.array_equal(arrays[0], [1.0, -2.0])

    def test_first_step_moves_by_signed_learning_rate(self):
        arrays = [np.array([1.0, 1.0])]
        opt = OptState.for_params(arrays)
        training.adam_step(opt, arrays, [np.array([10.0, -0.01])], lr=0.1)
        # bias correction makes the first update lr * g / (|g| + eps)
        assert np.allclose(arrays[0], [0.9, 1.1], atol=1e-4)

    def test_non_finite_gradient_raises(self):
        arrays = [np.zeros(2)]
        opt = OptState.for_params(arrays)
        with pytest.raises(TrainingDiverged):
            training.adam_step(opt, arrays, [np.array([np.nan, 0.0])], lr=0.01)

    def test_converges_on_quadratic(self):
        arrays = [np.array([5.0])]
        opt = OptState.for_params(arrays)
        for _ in range(300):
            grad = 2.0 * (arrays[0] - 3.0)
            training.adam_step(opt, arrays, [grad], lr=0.05)
        assert abs(arrays[0][0] - 3.0) < 1e-2


class TestSchedule:
    def test_initial_value(self):
        assert training.lr_at(0, 3e-3) == 3e-3

    def test_one_decade_per_decay_interval(self):
        assert training.lr_at(200_000, 3e-3) == pytest.approx(3e-4)

    def test_floor(self):
        assert training.lr_at(10_000_000, 3e-3) == pytest.approx(1e-7)

    def test_sweep_grid(self):
        lrs = training.sweep_learning_rates(13, 1e-4, 1e-1)
        assert len(lrs) == 13
        assert lrs[0] == pytest.approx(1e-1)
        assert lrs[-1] == pytest.approx(1e-4)
        assert all(a > b for a, b in zip(lrs, lrs[1:]))


class TestPairArrays:
    def test_mixed_particle_counts_rejected(self, fixed_records):
        manifest = DatasetManifest("train", (5,), 1, "fixed", seed=0)
        records5 = [dataio._generate_pair(manifest, 5, 0)]
        with pytest.raises(ValueError):
            training.PairArrays.from_records(fixed_records[:2] + records5)

    def test_shapes(self, fixed_records):
        pairs = training.PairArrays.from_records(fixed_records[:10])
        assert pairs.q_in.shape == (10, 4, 2)
        assert pairs.dts.shape == (10,)
        assert len(pairs) == 10


class TestTrainLoop:
    def test_loss_decreases_and_curve_structure(self, fixed_records):
        params, curve = training.train(tiny_config(steps=60),
                                       fixed_records[:32], fixed_records[32:])
        assert len(curve) == 60
        assert {"step", "train_loss", "lr"} <= curve[0].keys()
        assert "val_loss" in curve[0] and "val_loss" in curve[-1]
        early = np.mean([e["train_loss"] for e in curve[:10]])
        late = np.mean([e["train_loss"] for e in curve[-10:]])
        assert late < early
        assert params.kind == ModelKind.DELTA_GN

    def test_deterministic_given_seed(self, fixed_records):
        a, _ = training.train(tiny_config(steps=10), fixed_records[:16])
        b, _ = training.train(tiny_config(steps=10), fixed_records[:16])
        for (na, xa), (nb, xb) in zip(a.named_arrays(), b.named_arrays()):
            assert na == nb
            assert np.array_equal(np.asarray(xa), np.asarray(xb))

    def test_hogn_second_order_path_trains(self, fixed_records):
        params, curve = training.train(
            tiny_config(kind=ModelKind.HOGN, integrator="rk2", steps=12),
            fixed_records[:16])
        assert np.isfinite(curve[-1]["train_loss"])
        assert params.kind == ModelKind.HOGN

    def test_variable_dt_policy_uses_dt_feature(self, variable_records):
        params, curve = training.train(
            tiny_config(dt_policy="variable", steps=12), variable_records[:16])
        assert params.uses_dt_feature
        assert np.isfinite(curve[-1]["train_loss"])

    def test_fixed_policy_rejects_mixed_dt_dataset(self, variable_records):
        with pytest.raises(ValueError):
            training.train(tiny_config(steps=2), variable_records[:16])


class TestSweep:
    def test_ranked_results_and_band(self, fixed_records, tmp_path):
        paths = dataio.generate_eval_trajectories([4], [0.1], count=2, length=4,
                                                  seed=55, out_dir=tmp_path)
        val_trajs = dataio.load_trajectories(paths[0])
        out = training.lr_sweep(tiny_config(steps=8), [3e-3, 3e-4, 3e-5],
                                fixed_records[:16], fixed_records[16:24],
                                val_trajs)
        assert out["top_k"] == 1
        assert len(out["all"]) == 3
        rmses = [r["rollout_rmse"] for r in out["ranked"]]
        assert rmses == sorted(rmses)
        assert out["min_rollout_rmse"] <= out["median_rollout_rmse"] <= out["max_rollout_rmse"]

    def test_top_k_is_four_for_full_grid(self, monkeypatch):
        from springsim import evaluation

        monkeypatch.setattr(training, "train", lambda cfg, tr, va: (object(), [
            {"step": 0, "train_loss": cfg.lr0, "lr": cfg.lr0}]))
        monkeypatch.setattr(evaluation, "evaluate_model_on_trajectories",
                            lambda params, integ, trajs: (0.5, 0.1, []))
        lrs = training.sweep_learning_rates(13)
        out = training.lr_sweep(tiny_config(steps=1), lrs, [], [], [])
        assert out["top_k"] == 4
        assert len(out["ranked"]) == 13

    def test_all_diverged_raises(self, monkeypatch):
        def always_diverges(cfg, tr, va):
            raise TrainingDiverged("boom")

        monkeypatch.setattr(training, "train", always_diverges)
        with pytest.raises(TrainingDiverged):
            training.lr_sweep(tiny_config(steps=1), [1e-3, 1e-4], [], [], [])
