import numpy as np
import pytest

from springsim import dataio, evaluation, models, physics
from springsim.evaluation import TrainedModel
from springsim.models import ModelKind
from springsim.physics import State, SystemConfig, Trajectory


def make_trajectory(n=3, seed=0, dt=0.1, steps=4):
    rng = np.random.default_rng(seed)
    config, state0 = physics.sample_system(rng, n)
    dense = physics.simulate_reference(config, state0, steps * dt)
    stride = int(round(dt / physics.GENERATION_STEP))
    return physics.subsample(dense, stride)


class TestRolloutRmse:
    def test_identical_trajectories_give_zero(self):
        truth = make_trajectory()
        assert evaluation.rollout_rmse(truth, truth) == 0.0

    def test_initial_state_excluded(self):
        truth = make_trajectory()
        shifted_states = [truth.states[0].copy()] + [
            State(s.q + 1.0, s.p) for s in truth.states[1:]]
        pred = Trajectory(truth.dt, shifted_states, truth.config)
        assert evaluation.rollout_rmse(pred, truth) == pytest.approx(1.0)
        # corrupting only the shared initial state changes nothing
        pred2_states = [State(truth.states[0].q + 9.0, truth.states[0].p)] \
            + truth.states[1:]
        pred2 = Trajectory(truth.dt, pred2_states, truth.config)
        assert evaluation.rollout_rmse(pred2, truth) == 0.0

    def test_known_offset(self):
        truth = make_trajectory()
        pred = Trajectory(truth.dt,
                          [State(s.q + 0.5, s.p) for s in truth.states],
                          truth.config)
        assert evaluation.rollout_rmse(pred, truth) == pytest.approx(0.5)

    def test_misaligned_lengths_raise(self):
        truth = make_trajectory(steps=4)
        short = Trajectory(truth.dt, truth.states[:-1], truth.config)
        with pytest.raises(ValueError):
            evaluation.rollout_rmse(short, truth)


class TestEnergyError:
    def test_exact_trajectory_is_tiny(self):
        truth = make_trajectory(steps=10)
        assert evaluation.energy_error(truth.config, truth) < 1e-8

    def test_constant_offset_detected(self):
        truth = make_trajectory(steps=5)
        e0 = physics.true_hamiltonian(truth.config, truth.states[0])
        # doubling all momenta after the first state inflates the mean energy
        pred = Trajectory(truth.dt,
                          [truth.states[0]] + [State(s.q, 2.0 * s.p)
                                               for s in truth.states[1:]],
                          truth.config)
        assert evaluation.energy_error(truth.config, pred) > 0.1
        assert physics.true_hamiltonian(truth.config, pred.states[0]) == e0

    def test_zero_initial_energy_rejected(self):
        config = SystemConfig([1.0, 1.0], [1.0, 1.0])
        states = [State(np.zeros((2, 2)), np.zeros((2, 2)))] * 3
        with pytest.raises(ValueError):
            evaluation.energy_error(config, Trajectory(0.1, states, config))


class TestPooling:
    def test_rms_of_constants(self):
        assert evaluation.pool_rms([2.0, 2.0, 2.0]) == pytest.approx(2.0)

    def test_hand_computed(self):
        assert evaluation.pool_rms([3.0, 4.0]) == pytest.approx(np.sqrt(12.5))


class TestEvaluateModel:
    def test_true_hamiltonian_model_scores_near_zero(self):
        params = models.init_model_params(np.random.default_rng(0),
                                          ModelKind.TRUE_HAMILTONIAN)
        trajs = [make_trajectory(seed=s, steps=5) for s in (1, 2, 3)]
        rmse, energy, rows = evaluation.evaluate_model_on_trajectories(
            params, "rk4", trajs)
        # the reference trajectories use a much finer generation step, so the
        # dt=0.1 RK4 rollout is close but not exact
        assert rmse < 1e-4
        assert energy < 1e-3
        assert len(rows) == 3

    def test_untrained_model_scores_worse_than_reference(self):
        truth_params = models.init_model_params(np.random.default_rng(0),
                                                ModelKind.TRUE_HAMILTONIAN)
        random_params = models.init_model_params(np.random.default_rng(1),
                                                 ModelKind.OGN, hidden=(8, 8))
        trajs = [make_trajectory(seed=4, steps=4)]
        ref_rmse, _, _ = evaluation.evaluate_model_on_trajectories(
            truth_params, "rk4", trajs)
        rnd_rmse, _, _ = evaluation.evaluate_model_on_trajectories(
            random_params, "rk4", trajs)
        assert rnd_rmse > 10 * ref_rmse


class TestGrid:
    def test_cell_count_and_matched_flag(self):
        params = models.init_model_params(np.random.default_rng(0),
                                          ModelKind.TRUE_HAMILTONIAN)
        trained = {"ref": TrainedModel(params, train_integrator="rk4")}
        trajs_by_dt = {0.1: [make_trajectory(seed=5, dt=0.1, steps=3)],
                       0.05: [make_trajectory(seed=6, dt=0.05, steps=3)]}
        results = evaluation.evaluate_grid(trained, ["rk1", "rk4"], trajs_by_dt)
        assert len(results) == 4
        matched = {(r.test_integrator, r.matched_integrators) for r in results}
        assert matched == {("rk1", False), ("rk4", True)}
        dts = sorted({r.test_dt for r in results})
        assert dts == [0.05, 0.1]

    def test_result_serializes_with_stable_fields(self):
        params = models.init_model_params(np.random.default_rng(0),
                                          ModelKind.TRUE_HAMILTONIAN)
        trained = {"ref": TrainedModel(params, train_integrator="rk2",
                                       train_dt_policy="variable", seed=9)}
        trajs_by_dt = {0.1: [make_trajectory(seed=7, steps=2)]}
        (result,) = evaluation.evaluate_grid(trained, ["rk2"], trajs_by_dt)
        row = result.to_json()
        assert row["model_kind"] == "true_hamiltonian"
        assert row["train_integrator"] == "rk2"
        assert row["train_dt_policy"] == "variable"
        assert row["matched_integrators"] is True
        assert row["seed"] == 9
        assert set(row) == {"model_kind", "train_integrator", "test_integrator",
                            "train_dt_policy", "test_dt", "rollout_rmse",
                            "energy_error", "n_trajectories",
                            "matched_integrators", "seed"}
