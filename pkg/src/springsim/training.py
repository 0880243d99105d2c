"""Loss, Adam, learning-rate schedule, the sweep protocol, and the
end-to-end training loop for any model kind x integrator x dt policy.

Training batches group systems with equal particle count; gradients flow
through the integrator (and, for the Hamiltonian models, through the
input-gradients of the network) into the parameters.
"""

from __future__ import annotations

import copy
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from . import graphnet, models
from .models import ModelKind, ModelParams, SystemBatch
from .physics import State

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
LR_DECAY_RATE = 0.1
LR_DECAY_STEPS = 2e5
LR_FLOOR = 1e-7


class TrainingDiverged(Exception):
    pass


@dataclass
class TrainConfig:
    kind: ModelKind = ModelKind.HOGN
    integrator: str = "rk4"
    dt_policy: str = "fixed"      # "fixed" | "variable"
    batch_size: int = 32
    steps: int = 20000
    lr0: float = 3e-3
    seed: int = 0
    val_every: int = 500
    hidden: tuple = graphnet.HIDDEN_SIZES

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if not 0.0 < self.lr0 < 1.0:
            raise ValueError("initial learning rate must be in (0, 1)")
        if self.dt_policy not in ("fixed", "variable"):
            raise ValueError(f"unknown dt policy {self.dt_policy!r}")


def mse_loss(pred, target):
    """Mean squared error over particles, dimensions, and both channels.

    Accepts two States (returns a float) or two (q, p) Value pairs
    (returns a scalar Value on the tape).
    """
    if isinstance(pred, State):
        if pred.q.shape != target.q.shape:
            raise ValueError("state shapes do not match")
        return float(np.mean(np.concatenate([(pred.q - target.q) ** 2,
                                             (pred.p - target.p) ** 2])))
    (pq, pp), (tq, tp) = pred, target
    tq, tp = ad.as_value(tq), ad.as_value(tp)
    if pq.data.shape != tq.data.shape:
        raise ValueError("state shapes do not match")
    total = pq.data.size + pp.data.size
    sq = ad.vsum(ad.power(ad.sub(pq, tq), 2.0))
    sp = ad.vsum(ad.power(ad.sub(pp, tp), 2.0))
    return ad.mul(ad.add(sq, sp), ad.constant(1.0 / total))


@dataclass
class OptState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def for_params(cls, arrays) -> "OptState":
        return cls([np.zeros_like(a) for a in arrays],
                   [np.zeros_like(a) for a in arrays])


def adam_step(opt: OptState, arrays, grads, lr: float):
    """One Adam update with bias correction; mutates arrays and opt in place."""
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient at optimizer step {opt.step}")
    opt.step += 1
    t = opt.step
    for a, g, m, v in zip(arrays, grads, opt.m, opt.v):
        m *= ADAM_BETA1
        m += (1 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1 - ADAM_BETA2) * g * g
        m_hat = m / (1 - ADAM_BETA1 ** t)
        v_hat = v / (1 - ADAM_BETA2 ** t)
        a -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return arrays, opt


def lr_at(step: int, lr0: float) -> float:
    """Exponential decay with a continuous exponent and a hard floor."""
    return max(lr0 * LR_DECAY_RATE ** (step / LR_DECAY_STEPS), LR_FLOOR)


@dataclass
class PairArrays:
    """Column-stacked one-step pairs for a single particle count."""

    n: int
    q_in: np.ndarray    # (M, n, 2)
    p_in: np.ndarray
    q_out: np.ndarray
    p_out: np.ndarray
    masses: np.ndarray  # (M, n)
    spring_consts: np.ndarray
    dts: np.ndarray     # (M,)

    @classmethod
    def from_records(cls, records) -> "PairArrays":
        n = records[0].config.n
        if any(r.config.n != n for r in records):
            raise ValueError("records must share one particle count")
        return cls(n,
                   np.stack([r.state_in.q for r in records]),
                   np.stack([r.state_in.p for r in records]),
                   np.stack([r.state_out.q for r in records]),
                   np.stack([r.state_out.p for r in records]),
                   np.stack([r.config.masses for r in records]),
                   np.stack([r.config.spring_consts for r in records]),
                   np.array([r.dt for r in records]))

    def __len__(self):
        return self.q_in.shape[0]


class _BatchTemplate:
    """Precomputed edges/ids for B equal-size systems."""

    def __init__(self, batch_size: int, n: int):
        self.batch_size, self.n = batch_size, n
        self.counts = [n] * batch_size
        self.graph_ids = np.repeat(np.arange(batch_size), n)
        self.senders, self.receivers = graphnet.fully_connected_edges(self.counts)

    def batch(self, pairs: PairArrays, idx) -> SystemBatch:
        return SystemBatch(pairs.masses[idx].ravel(), pairs.spring_consts[idx].ravel(),
                           self.counts, self.graph_ids, self.senders, self.receivers)


def _batch_loss(params: ModelParams, config: TrainConfig, pairs: PairArrays,
                idx, template: _BatchTemplate):
    """Scalar Value loss for one minibatch; params must be lifted."""
    batch = template.batch(pairs, idx)
    q = ad.Value(pairs.q_in[idx].reshape(-1, 2))
    p = ad.Value(pairs.p_in[idx].reshape(-1, 2))
    if config.dt_policy == "fixed":
        dts = pairs.dts[idx]
        dt = float(dts[0])
        if not np.all(dts == dt):
            raise ValueError("fixed dt policy requires a uniform dataset dt")
    else:
        dt = np.repeat(pairs.dts[idx], pairs.n)[:, None]
    pred = models.predict_batch(params, config.integrator, dt, batch, q, p)
    target = (pairs.q_out[idx].reshape(-1, 2), pairs.p_out[idx].reshape(-1, 2))
    return mse_loss(pred, target)


def _eval_loss(params: ModelParams, config: TrainConfig, pairs_by_n: dict,
               max_per_n: int = 200) -> float:
    losses, weights = [], []
    lifted = params.lifted()
    for pairs in pairs_by_n.values():
        m = min(len(pairs), max_per_n)
        template = _BatchTemplate(m, pairs.n)
        loss = _batch_loss(lifted, config, pairs, np.arange(m), template)
        losses.append(float(loss.data))
        weights.append(m)
    return float(np.average(losses, weights=weights))


def _group_by_n(records) -> dict:
    by_n: dict[int, list] = {}
    for r in records:
        by_n.setdefault(r.config.n, []).append(r)
    return {n: PairArrays.from_records(rs) for n, rs in sorted(by_n.items())}


def train(config: TrainConfig, train_records, val_records=None):
    """Minibatch training loop; returns (best-validation params, curve).

    The curve is a list of dicts with step, train loss, learning rate, and
    (at validation points) validation loss.
    """
    rng = np.random.default_rng(config.seed)
    params = models.init_model_params(rng, config.kind,
                                      dt_feature=(config.dt_policy == "variable"),
                                      hidden=tuple(config.hidden))
    arrays = [a for _, a in params.named_arrays()]
    opt = OptState.for_params(arrays)
    train_by_n = _group_by_n(train_records)
    val_by_n = _group_by_n(val_records) if val_records else None
    templates = {n: _BatchTemplate(config.batch_size, n) for n in train_by_n}
    ns = list(train_by_n)

    curve = []
    best_val, best_params = math.inf, None
    with warnings.catch_warnings():
        # the head bias of a Hamiltonian network is an additive energy
        # constant; its gradient is legitimately zero
        warnings.filterwarnings("ignore", message="gradient target is not an ancestor")
        for step in range(config.steps):
            n = ns[step % len(ns)]
            pairs = train_by_n[n]
            idx = rng.integers(0, len(pairs), size=config.batch_size)
            lifted = params.lifted()
            loss = _batch_loss(lifted, config, pairs, idx, templates[n])
            loss_val = float(loss.data)
            if not np.isfinite(loss_val):
                raise TrainingDiverged(
                    f"non-finite training loss at step {step} (lr0={config.lr0})")
            grads = [g.data for g in ad.gradient(loss, lifted.leaves())]
            lr = lr_at(step, config.lr0)
            adam_step(opt, arrays, grads, lr)
            entry = {"step": step, "train_loss": loss_val, "lr": lr}
            if val_by_n is not None and (step % config.val_every == 0
                                         or step == config.steps - 1):
                val_loss = _eval_loss(params, config, val_by_n)
                entry["val_loss"] = val_loss
                if val_loss < best_val:
                    best_val, best_params = val_loss, copy.deepcopy(params)
            curve.append(entry)
    return (best_params if best_params is not None else params), curve


def sweep_learning_rates(count: int = 13, low: float = 1e-4, high: float = 1e-1):
    """Log-uniform grid, highest first."""
    return list(np.logspace(np.log10(high), np.log10(low), count))


def lr_sweep(base_config: TrainConfig, lrs, train_records, val_records,
             val_trajectories):
    """Train one model per learning rate and rank by validation rollout error.

    Returns a dict with the ranked per-run results and the median and
    min-max band of the rollout error over the selected top runs.
    """
    from . import evaluation

    results = []
    for lr in lrs:
        config = replace(base_config, lr0=float(lr))
        try:
            params, curve = train(config, train_records, val_records)
        except TrainingDiverged as exc:
            results.append({"lr": float(lr), "diverged": True, "error": str(exc)})
            continue
        rmse, _, _ = evaluation.evaluate_model_on_trajectories(
            params, base_config.integrator, val_trajectories)
        results.append({"lr": float(lr), "diverged": False,
                        "rollout_rmse": rmse, "params": params,
                        "final_train_loss": curve[-1]["train_loss"]})
    finished = [r for r in results if not r["diverged"]]
    if not finished:
        raise TrainingDiverged("all sweep runs diverged")
    finished.sort(key=lambda r: r["rollout_rmse"])
    top_k = 4 if len(lrs) >= 13 else max(1, math.ceil(len(lrs) / 3))
    top = finished[:top_k]
    errors = [r["rollout_rmse"] for r in top]
    return {"ranked": finished, "all": results, "top_k": top_k,
            "median_rollout_rmse": float(np.median(errors)),
            "min_rollout_rmse": float(np.min(errors)),
            "max_rollout_rmse": float(np.max(errors))}
