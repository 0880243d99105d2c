"""Command-line entry point: dataset generation, training, sweeps,
evaluation grids, showcase rollouts, and metric export.

Configuration comes from a single JSON config file (see configs/desk.cfg
and configs/paper.cfg) plus --set dotted-path overrides.  The output
directory defaults to the config's out_dir and can be overridden with
--out-dir or the SPRINGSIM_OUT_DIR environment variable.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import dataio, evaluation, graphnet, models, physics, training
from .dataio import DataFormatError, DatasetManifest
from .evaluation import TrainedModel
from .models import ModelKind
from .training import TrainConfig, TrainingDiverged

VERSION = "0.1.0"


class ConfigError(Exception):
    pass


def _load_config(path: str, overrides) -> tuple[dict, str]:
    try:
        with open(path) as fh:
            text = fh.read()
        cfg = json.loads(text)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        try:
            node[parts[-1]] = json.loads(raw)
        except json.JSONDecodeError:
            node[parts[-1]] = raw
    digest = hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()
    return cfg, digest


def _out_dir(cfg: dict, args) -> str:
    out = args.out_dir or os.environ.get("SPRINGSIM_OUT_DIR") or cfg.get("out_dir")
    if not out:
        raise ConfigError("no output directory: set out_dir in the config, "
                          "--out-dir, or SPRINGSIM_OUT_DIR")
    os.makedirs(out, exist_ok=True)
    return out


def _write_run_stanza(out_dir: str, subcommand: str, cfg: dict, digest: str) -> None:
    stanza = {"subcommand": subcommand, "seed": cfg.get("seed", 0),
              "config_sha256": digest, "version": VERSION}
    with open(os.path.join(out_dir, f"run-{subcommand}.json"), "w") as fh:
        json.dump(stanza, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _pairs_path(out_dir: str, split: str) -> str:
    return os.path.join(out_dir, f"pairs-{split}.jsonl")


def _ckpt_path(out_dir: str, model: str, integrator: str) -> str:
    return os.path.join(out_dir, f"ckpt-{model}-{integrator}.bin")


def cmd_generate(cfg: dict, out_dir: str) -> None:
    gen = cfg.get("generate")
    if not gen:
        raise ConfigError("config has no 'generate' section")
    seed = int(cfg.get("seed", 0))
    counts = tuple(gen["particle_counts"])
    policy = gen.get("dt_policy", "fixed")
    for split, key in (("train", "train_pairs"), ("val", "val_pairs"),
                       ("test", "test_pairs")):
        manifest = DatasetManifest(split=split, particle_counts=counts,
                                   pairs_per_count=int(gen[key]), dt_policy=policy,
                                   seed=seed + {"train": 0, "val": 1, "test": 2}[split],
                                   fixed_dt=float(gen.get("fixed_dt", 0.1)))
        records = dataio.generate_pair_dataset(manifest, _pairs_path(out_dir, split))
        print(f"wrote {_pairs_path(out_dir, split)} ({len(records)} records)")
    traj_dir = os.path.join(out_dir, "trajectories")
    paths = dataio.generate_eval_trajectories(
        tuple(gen.get("eval_particle_counts", counts)),
        tuple(gen.get("eval_dts", dataio.PAPER_EVAL_DTS)),
        int(gen.get("eval_count", 20)), int(gen.get("eval_length", 20)),
        seed + 3, traj_dir)
    print(f"wrote {len(paths)} trajectory files under {traj_dir}")


def _train_config(cfg: dict, overrides: dict | None = None) -> TrainConfig:
    section = dict(cfg.get("train") or {})
    section.update(overrides or {})
    try:
        return TrainConfig(kind=ModelKind(section.get("model", "hogn")),
                           integrator=section.get("integrator", "rk4"),
                           dt_policy=section.get("dt_policy", "fixed"),
                           batch_size=int(section.get("batch_size", 32)),
                           steps=int(section.get("steps", 20000)),
                           lr0=float(section.get("lr", 3e-3)),
                           seed=int(section.get("seed", cfg.get("seed", 0))),
                           val_every=int(section.get("val_every", 500)),
                           hidden=tuple(section.get("hidden", graphnet.HIDDEN_SIZES)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _load_split(out_dir: str, split: str):
    path = _pairs_path(out_dir, split)
    if not os.path.exists(path):
        raise ConfigError(f"missing dataset file {path}; run 'generate' first")
    _, records = dataio.load_pairs(path)
    return records


def cmd_train(cfg: dict, out_dir: str) -> None:
    config = _train_config(cfg)
    params, curve = training.train(config, _load_split(out_dir, "train"),
                                   _load_split(out_dir, "val"))
    ckpt = _ckpt_path(out_dir, config.kind.value, config.integrator)
    dataio.save_checkpoint(ckpt, params)
    rows = [{"record": "training_curve", "model_kind": config.kind.value,
             "train_integrator": config.integrator, "seed": config.seed, **entry}
            for entry in curve if "val_loss" in entry or entry["step"] % 100 == 0]
    dataio.append_metrics(os.path.join(out_dir, "metrics.jsonl"), rows)
    print(f"wrote {ckpt}; final train loss {curve[-1]['train_loss']:.3e}")


def cmd_sweep(cfg: dict, out_dir: str) -> None:
    sweep = cfg.get("sweep") or {}
    config = _train_config(cfg)
    lrs = sweep.get("lrs")
    if lrs is None:
        lrs = training.sweep_learning_rates(int(sweep.get("count", 13)),
                                            float(sweep.get("low", 1e-4)),
                                            float(sweep.get("high", 1e-1)))
    dt = float(sweep.get("rollout_dt", cfg.get("generate", {}).get("fixed_dt", 0.1)))
    n = int(sweep.get("rollout_n", cfg.get("generate", {}).get("particle_counts", [4])[0]))
    traj_path = os.path.join(out_dir, "trajectories", dataio.trajectory_filename(n, dt))
    if not os.path.exists(traj_path):
        raise ConfigError(f"missing trajectory file {traj_path}; run 'generate' first")
    trajs = dataio.load_trajectories(traj_path)[:int(sweep.get("rollout_count", 10))]
    result = training.lr_sweep(config, lrs, _load_split(out_dir, "train"),
                               _load_split(out_dir, "val"), trajs)
    best = result["ranked"][0]
    ckpt = _ckpt_path(out_dir, config.kind.value, config.integrator)
    dataio.save_checkpoint(ckpt, best["params"])
    rows = [{"record": "sweep", "model_kind": config.kind.value,
             "train_integrator": config.integrator, "lr": r["lr"],
             "diverged": r["diverged"],
             "rollout_rmse": r.get("rollout_rmse")} for r in result["all"]]
    rows.append({"record": "sweep_summary", "model_kind": config.kind.value,
                 "train_integrator": config.integrator, "top_k": result["top_k"],
                 "median_rollout_rmse": result["median_rollout_rmse"],
                 "min_rollout_rmse": result["min_rollout_rmse"],
                 "max_rollout_rmse": result["max_rollout_rmse"]})
    dataio.append_metrics(os.path.join(out_dir, "metrics.jsonl"), rows)
    print(f"sweep of {len(lrs)} learning rates; best lr {best['lr']:.3e} "
          f"rollout rmse {best['rollout_rmse']:.3e}; wrote {ckpt}")


def cmd_evaluate(cfg: dict, out_dir: str) -> None:
    ev = cfg.get("evaluate") or {}
    test_integrators = ev.get("test_integrators", ["rk4"])
    test_dts = ev.get("test_dts", [float(cfg.get("generate", {}).get("fixed_dt", 0.1))])
    n = int(ev.get("particle_count", cfg.get("generate", {}).get("particle_counts", [4])[0]))
    max_trajs = int(ev.get("max_trajectories", 20))
    trained = {}
    for entry in ev.get("models", [{"model": "hogn", "integrator": "rk4"}]):
        kind = ModelKind(entry["model"])
        integ = entry.get("integrator", "rk4")
        if kind == ModelKind.TRUE_HAMILTONIAN:
            params = models.ModelParams(kind, ())
        else:
            ckpt = _ckpt_path(out_dir, kind.value, integ)
            if not os.path.exists(ckpt):
                raise ConfigError(f"missing checkpoint {ckpt}; run 'train' first")
            params = dataio.load_checkpoint(ckpt)
        trained[f"{kind.value}/{integ}"] = TrainedModel(params, integ,
                                                        seed=int(cfg.get("seed", 0)))
    trajectories_by_dt = {}
    for dt in test_dts:
        path = os.path.join(out_dir, "trajectories", dataio.trajectory_filename(n, dt))
        if not os.path.exists(path):
            raise ConfigError(f"missing trajectory file {path}; run 'generate' first")
        trajectories_by_dt[float(dt)] = dataio.load_trajectories(path)[:max_trajs]
    results = evaluation.evaluate_grid(trained, test_integrators, trajectories_by_dt)
    rows = [{"record": "eval", **r.to_json()} for r in results]
    dataio.append_metrics(os.path.join(out_dir, "metrics.jsonl"), rows)
    print(f"evaluated {len(results)} grid cells into metrics.jsonl")


def cmd_rollout(cfg: dict, out_dir: str) -> None:
    ro = cfg.get("rollout") or {}
    kind = ModelKind(ro.get("model", "true_hamiltonian"))
    integ = ro.get("integrator", "rk4")
    dt = float(ro.get("dt", 0.1))
    steps = int(ro.get("steps", 500))
    n = int(ro.get("particle_count", 6))
    seed = int(ro.get("seed", cfg.get("seed", 0)))
    if kind == ModelKind.TRUE_HAMILTONIAN:
        params = models.ModelParams(kind, ())
    else:
        params = dataio.load_checkpoint(_ckpt_path(out_dir, kind.value, integ))
    rng = np.random.default_rng(seed)
    config, state0 = physics.sample_system(rng, n)
    traj = models.rollout_model(params, integ, dt, config, state0, steps)
    path = os.path.join(out_dir, f"rollout-{kind.value}-{integ}-{dt:g}.jsonl")
    dataio._write_jsonl(path, {"format": "trajectories", "n": n, "dt": dt,
                               "count": 1, "length": steps, "seed": seed},
                        [{"masses": config.masses.tolist(),
                          "spring_consts": config.spring_consts.tolist(),
                          "q": traj.positions().tolist(),
                          "p": traj.momenta().tolist()}])
    print(f"wrote {path}")


def cmd_export(cfg: dict, out_dir: str, args) -> None:
    inputs = args.inputs or [os.path.join(out_dir, "metrics.jsonl")]
    output = args.output or os.path.join(out_dir, "metrics-export.jsonl")
    rows = []
    for path in inputs:
        rows.extend(dataio.read_metrics(path))
    if os.path.exists(output):
        os.remove(output)
    dataio.append_metrics(output, rows)
    print(f"exported {len(rows)} rows to {output}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="springsim",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--config", default="configs/desk.cfg",
                        help="JSON config file")
    parser.add_argument("--out-dir", default=None, help="output directory")
    parser.add_argument("--set", action="append", dest="overrides", metavar="KEY=VALUE",
                        help="override a config entry (dotted path, JSON value)")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in ("generate", "train", "sweep", "evaluate", "rollout"):
        sub.add_parser(name)
    export = sub.add_parser("export")
    export.add_argument("--inputs", nargs="*", default=None)
    export.add_argument("--output", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg, digest = _load_config(args.config, args.overrides)
        out_dir = _out_dir(cfg, args)
        if args.subcommand == "generate":
            cmd_generate(cfg, out_dir)
        elif args.subcommand == "train":
            cmd_train(cfg, out_dir)
        elif args.subcommand == "sweep":
            cmd_sweep(cfg, out_dir)
        elif args.subcommand == "evaluate":
            cmd_evaluate(cfg, out_dir)
        elif args.subcommand == "rollout":
            cmd_rollout(cfg, out_dir)
        elif args.subcommand == "export":
            cmd_export(cfg, out_dir, args)
        _write_run_stanza(out_dir, args.subcommand, cfg, digest)
    except (ConfigError, DataFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TrainingDiverged, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
