"""A small end-to-end run in code: generate data, train a model, and
evaluate rollouts, without touching the CLI.

Uses a reduced budget so the whole script finishes in about a minute.
"""

import tempfile
from pathlib import Path

import numpy as np

from springsim import dataio, evaluation, models, training
from springsim.dataio import DatasetManifest
from springsim.models import ModelKind
from springsim.training import TrainConfig


def main():
    workdir = Path(tempfile.mkdtemp(prefix="springsim-demo-"))
    print(f"working in {workdir}")

    train_records = dataio.generate_pair_dataset(
        DatasetManifest("train", (4,), 200, "fixed", seed=0),
        workdir / "pairs-train.jsonl")
    val_records = dataio.generate_pair_dataset(
        DatasetManifest("val", (4,), 50, "fixed", seed=1),
        workdir / "pairs-val.jsonl")
    (traj_path,) = dataio.generate_eval_trajectories(
        [4], [0.1], count=10, length=20, seed=3, out_dir=workdir / "trajectories")
    trajectories = dataio.load_trajectories(traj_path)
    print(f"generated {len(train_records)} training pairs and "
          f"{len(trajectories)} evaluation trajectories")

    config = TrainConfig(kind=ModelKind.DELTA_GN, integrator="rk1",
                         batch_size=16, steps=1500, lr0=3e-3, seed=0,
                         val_every=250)
    params, curve = training.train(config, train_records, val_records)
    print(f"trained {config.kind.value}: loss "
          f"{curve[0]['train_loss']:.3e} -> {curve[-1]['train_loss']:.3e}")

    ckpt = workdir / "ckpt-delta_gn-rk1.bin"
    dataio.save_checkpoint(ckpt, params)
    params = dataio.load_checkpoint(ckpt)

    rmse, energy, _ = evaluation.evaluate_model_on_trajectories(
        params, "rk1", trajectories)
    reference = models.ModelParams(ModelKind.TRUE_HAMILTONIAN, ())
    ref_rmse, ref_energy, _ = evaluation.evaluate_model_on_trajectories(
        reference, "rk4", trajectories)
    print(f"20-step rollout RMSE: trained {rmse:.3e}, "
          f"true-Hamiltonian reference {ref_rmse:.3e}")
    print(f"energy error:         trained {energy:.3e}, "
          f"reference {ref_energy:.3e}")


if __name__ == "__main__":
    main()
