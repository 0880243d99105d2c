"""Rollout and energy metrics plus the experiment grids: model comparison,
time-step generalization, and cross-integrator generalization."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import models, physics
from .models import ModelKind, ModelParams
from .physics import SystemConfig, Trajectory

ENERGY_FLOOR = 1e-9


@dataclass
class EvalResult:
    model_kind: str
    train_integrator: str
    test_integrator: str
    train_dt_policy: str
    test_dt: float
    rollout_rmse: float
    energy_error: float
    n_trajectories: int
    matched_integrators: bool
    seed: int = 0

    def to_json(self) -> dict:
        return asdict(self)


def rollout_rmse(pred: Trajectory, truth: Trajectory) -> float:
    """RMS position error over time steps (excluding the shared initial
    state), particles, and dimensions."""
    if len(pred) != len(truth) or pred.states[0].q.shape != truth.states[0].q.shape:
        raise ValueError("trajectories do not align")
    diff = pred.positions()[1:] - truth.positions()[1:]
    return float(np.sqrt(np.mean(diff ** 2)))


def energy_error(config: SystemConfig, pred: Trajectory) -> float:
    """Relative deviation of the trajectory's mean true energy from its
    initial true energy."""
    energies = np.array([physics.true_hamiltonian(config, s) for s in pred.states])
    if energies[0] <= ENERGY_FLOOR:
        raise ValueError("initial energy too close to zero to normalize")
    return float(abs(energies.mean() - energies[0]) / energies[0])


def pool_rms(values) -> float:
    """Example-level pooling: RMS across per-trajectory metrics."""
    values = np.asarray(values, dtype=np.float64)
    return float(np.sqrt(np.mean(values ** 2)))


def evaluate_model_on_trajectories(params: ModelParams, integrator: str,
                                   trajectories) -> tuple[float, float, list]:
    """Roll the model from each ground-truth initial state and pool metrics.

    Returns (pooled rollout RMSE, pooled energy error, per-trajectory rows).
    """
    per_traj = []
    for truth in trajectories:
        pred = models.rollout_model(params, integrator, truth.dt, truth.config,
                                    truth.states[0], len(truth) - 1)
        per_traj.append({"rollout_rmse": rollout_rmse(pred, truth),
                         "energy_error": energy_error(truth.config, pred)})
    return (pool_rms([r["rollout_rmse"] for r in per_traj]),
            pool_rms([r["energy_error"] for r in per_traj]),
            per_traj)


@dataclass
class TrainedModel:
    params: ModelParams
    train_integrator: str
    train_dt_policy: str = "fixed"
    seed: int = 0


def evaluate_grid(trained: dict, test_integrators, trajectories_by_dt: dict,
                  seed: int = 0) -> list[EvalResult]:
    """Every (model, test integrator, test dt) cell.

    `trained` maps a label to a TrainedModel; `trajectories_by_dt` maps a
    test dt to its ground-truth trajectories.  Cells whose test integrator
    equals the training integrator are flagged as matched.
    """
    results = []
    for label, tm in trained.items():
        kind = ModelKind(tm.params.kind)
        for test_integrator in test_integrators:
            for dt, trajs in sorted(trajectories_by_dt.items()):
                rmse, energy, _ = evaluate_model_on_trajectories(
                    tm.params, test_integrator, trajs)
                results.append(EvalResult(
                    model_kind=kind.value,
                    train_integrator=tm.train_integrator,
                    test_integrator=test_integrator,
                    train_dt_policy=tm.train_dt_policy,
                    test_dt=float(dt),
                    rollout_rmse=rmse,
                    energy_error=energy,
                    n_trajectories=len(trajs),
                    matched_integrators=(test_integrator == tm.train_integrator),
                    seed=tm.seed))
    return results
