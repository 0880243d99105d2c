"""Dataset generation and all on-disk formats.

Datasets, trajectories, and metrics are line-delimited JSON with a
versioned header line; checkpoints are a JSON header line followed by a
raw little-endian float64 blob.  Field names are documented in FORMATS.md.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import physics
from .graphnet import GNParams
from .autodiff import MLPParams
from .models import ModelKind, ModelParams
from .physics import State, SystemConfig, Trajectory

FORMAT_VERSION = 1
PAPER_EVAL_DTS = (0.005, 0.01, 0.03, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5)
PAPER_PARTICLE_COUNTS = (4, 5, 6, 8, 9)


class DataFormatError(Exception):
    """Malformed, truncated, or wrong-version file."""


@dataclass(frozen=True)
class DatasetManifest:
    split: str
    particle_counts: tuple
    pairs_per_count: int
    dt_policy: str            # "fixed" | "variable"
    seed: int
    fixed_dt: float = 0.1
    max_start_time: float = 1.0

    def __post_init__(self):
        if self.dt_policy not in ("fixed", "variable"):
            raise ValueError(f"unknown dt policy {self.dt_policy!r}")
        if self.pairs_per_count <= 0:
            raise ValueError("pairs_per_count must be positive")


@dataclass
class PairRecord:
    config: SystemConfig
    dt: float
    gen_step: float
    state_in: State
    state_out: State
    index: int = 0

    def to_json(self) -> dict:
        return {"n": self.config.n,
                "masses": self.config.masses.tolist(),
                "spring_consts": self.config.spring_consts.tolist(),
                "dt": self.dt, "gen_step": self.gen_step, "index": self.index,
                "q_in": self.state_in.q.tolist(), "p_in": self.state_in.p.tolist(),
                "q_out": self.state_out.q.tolist(), "p_out": self.state_out.p.tolist()}

    @classmethod
    def from_json(cls, row: dict) -> "PairRecord":
        return cls(SystemConfig(row["masses"], row["spring_consts"]),
                   float(row["dt"]), float(row["gen_step"]),
                   State(row["q_in"], row["p_in"]),
                   State(row["q_out"], row["p_out"]), int(row["index"]))


def _write_jsonl(path, header: dict, rows) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(json.dumps({"version": FORMAT_VERSION, **header}) + "\n")
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    os.replace(tmp, path)


def _read_jsonl(path, expected_format: str):
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
        rows = [json.loads(line) for line in lines[1:]]
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: malformed or truncated JSON: {exc}") from exc
    if header.get("format") != expected_format:
        raise DataFormatError(
            f"{path}: expected format {expected_format!r}, got {header.get('format')!r}")
    if header.get("version") != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported version {header.get('version')!r}")
    return header, rows


# ---------------------------------------------------------------------------
# pair datasets


def _generate_pair(manifest: DatasetManifest, n: int, index: int) -> PairRecord:
    rng = np.random.default_rng([manifest.seed, n, index])
    config, state0 = physics.sample_system(rng, n)
    if manifest.dt_policy == "fixed":
        gen_step = physics.GENERATION_STEP
        dt = manifest.fixed_dt
    else:
        gen_step = physics.GENERATION_STEP * (1.0 + rng.uniform(-0.1, 0.1))
        dt_raw = rng.uniform(0.02, 0.2)
        dt = max(1, int(round(dt_raw / gen_step))) * gen_step
    dt_steps = int(round(dt / gen_step))
    max_start = int(round(manifest.max_start_time / gen_step))
    start = int(rng.integers(0, max_start + 1))
    traj = physics.simulate_reference(config, state0, (start + dt_steps) * gen_step,
                                      generation_step=gen_step)
    return PairRecord(config, dt, gen_step, traj.states[start],
                      traj.states[start + dt_steps], index)


def generate_pair_dataset(manifest: DatasetManifest, path) -> list[PairRecord]:
    """One training pair per independently generated trajectory."""
    records = []
    for n in manifest.particle_counts:
        for i in range(manifest.pairs_per_count):
            records.append(_generate_pair(manifest, n, i))
    header = {"format": "pairs", "split": manifest.split,
              "particle_counts": list(manifest.particle_counts),
              "pairs_per_count": manifest.pairs_per_count,
              "dt_policy": manifest.dt_policy, "fixed_dt": manifest.fixed_dt,
              "seed": manifest.seed}
    _write_jsonl(path, header, (r.to_json() for r in records))
    return records


def load_pairs(path):
    header, rows = _read_jsonl(path, "pairs")
    return header, [PairRecord.from_json(row) for row in rows]


def verify_pair(record: PairRecord) -> float:
    """RMS position error of re-simulating state_in -> state_out."""
    steps = int(round(record.dt / record.gen_step))
    traj = physics.simulate_reference(record.config, record.state_in,
                                      steps * record.gen_step,
                                      generation_step=record.gen_step)
    return float(np.sqrt(np.mean((traj.states[-1].q - record.state_out.q) ** 2)))


# ---------------------------------------------------------------------------
# evaluation trajectories


def trajectory_filename(n: int, dt: float) -> str:
    return f"traj-{n}-{dt:g}.jsonl"


def generate_eval_trajectories(particle_counts, dts, count: int, length: int,
                               seed: int, out_dir) -> list[str]:
    """Ground-truth `length`-step trajectories for every (n, dt) cell."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for n in particle_counts:
        for dt in dts:
            stride = int(round(dt / physics.GENERATION_STEP))
            if abs(stride * physics.GENERATION_STEP - dt) > 1e-9 or stride < 1:
                raise ValueError(f"dt {dt} is not a multiple of the generation step")
            rows = []
            for i in range(count):
                rng = np.random.default_rng([seed, n, int(round(dt * 1e6)), i])
                config, state0 = physics.sample_system(rng, n)
                traj = physics.subsample(
                    physics.simulate_reference(config, state0, length * dt), stride)
                rows.append({"masses": config.masses.tolist(),
                             "spring_consts": config.spring_consts.tolist(),
                             "q": traj.positions().tolist(),
                             "p": traj.momenta().tolist()})
            path = os.path.join(out_dir, trajectory_filename(n, dt))
            _write_jsonl(path, {"format": "trajectories", "n": n, "dt": dt,
                                "count": count, "length": length, "seed": seed}, rows)
            paths.append(path)
    return paths


def load_trajectories(path) -> list[Trajectory]:
    header, rows = _read_jsonl(path, "trajectories")
    dt = float(header["dt"])
    out = []
    for row in rows:
        config = SystemConfig(row["masses"], row["spring_consts"])
        q = np.asarray(row["q"])
        p = np.asarray(row["p"])
        states = [State(q[t], p[t]) for t in range(q.shape[0])]
        out.append(Trajectory(dt, states, config))
    return out


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, params: ModelParams) -> None:
    arrays = params.named_arrays()
    header = {"format": "checkpoint", "version": FORMAT_VERSION,
              "kind": ModelKind(params.kind).value,
              "uses_dt_feature": params.uses_dt_feature,
              "n_gns": len(params.gns),
              "arrays": [[name, list(np.asarray(a).shape)] for name, a in arrays]}
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    os.replace(tmp, path)


def _rebuild_gn(named: dict, prefix: str) -> GNParams:
    def layers(model: str):
        weights, biases = [], []
        i = 0
        while f"{prefix}.{model}.w{i}" in named:
            weights.append(named[f"{prefix}.{model}.w{i}"])
            biases.append(named[f"{prefix}.{model}.b{i}"])
            i += 1
        return MLPParams(weights, biases) if weights else None

    global_mlp = layers("global")
    return GNParams(layers("edge"), layers("node"), global_mlp,
                    named[f"{prefix}.head.w"], named[f"{prefix}.head.b"],
                    "global" if global_mlp is not None else "node")


def load_checkpoint(path) -> ModelParams:
    try:
        with open(path, "rb") as fh:
            header_line = fh.readline()
            blob = fh.read()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: malformed checkpoint header") from exc
    if header.get("format") != "checkpoint" or header.get("version") != FORMAT_VERSION:
        raise DataFormatError(f"{path}: not a supported checkpoint")
    named = {}
    offset = 0
    for name, shape in header["arrays"]:
        size = int(np.prod(shape)) * 8
        chunk = blob[offset:offset + size]
        if len(chunk) != size:
            raise DataFormatError(f"{path}: truncated checkpoint blob")
        named[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += size
    if offset != len(blob):
        raise DataFormatError(f"{path}: trailing bytes in checkpoint blob")
    kind = ModelKind(header["kind"])
    gns = tuple(_rebuild_gn(named, f"gn{i}") for i in range(header["n_gns"]))
    return ModelParams(kind, gns, bool(header["uses_dt_feature"]))


# ---------------------------------------------------------------------------
# metrics


def append_metrics(path, rows) -> None:
    new_file = not os.path.exists(path)
    with open(path, "a") as fh:
        if new_file:
            fh.write(json.dumps({"format": "metrics", "version": FORMAT_VERSION}) + "\n")
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def read_metrics(path) -> list[dict]:
    _, rows = _read_jsonl(path, "metrics")
    return rows
