"""The predictors: direct state-delta, learned ODE derivatives, learned
Hamiltonian, their separable variants, and the ground-truth Hamiltonian
reference.  All expose "predict the next state given (state, dt, integrator)".
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import graphnet, integrators, physics
from .autodiff import Value
from .graphnet import GNParams, Graph
from .physics import State, SystemConfig


class ModelKind(str, enum.Enum):
    DELTA_GN = "delta_gn"
    OGN = "ogn"
    HOGN = "hogn"
    SEPARABLE_OGN = "separable_ogn"
    SEPARABLE_HOGN = "separable_hogn"
    TRUE_HAMILTONIAN = "true_hamiltonian"


INTEGRATORS = ("rk1", "rk2", "rk3", "rk4", "s1", "s2", "s3")


def resolve_integrator(name: str):
    """Returns (stepper, is_symplectic); steppers take (dt, state, f)."""
    if name not in INTEGRATORS:
        raise ValueError(f"unknown integrator {name!r}")
    if name.startswith("rk"):
        return integrators.make_rk_stepper(int(name[2])), False
    return integrators.make_symplectic_stepper(int(name[1])), True


@dataclass
class ModelParams:
    kind: ModelKind
    gns: tuple        # one GNParams, or two for the separable variants
    uses_dt_feature: bool = False

    def named_arrays(self):
        out = []
        for i, gn in enumerate(self.gns):
            out.extend((f"gn{i}.{name}", arr) for name, arr in gn.named_arrays())
        return out

    def lifted(self) -> "ModelParams":
        return ModelParams(self.kind, tuple(gn.lifted() for gn in self.gns),
                           self.uses_dt_feature)

    def leaves(self):
        out = []
        for gn in self.gns:
            out.extend(gn.leaves())
        return out


def init_model_params(rng: np.random.Generator, kind: ModelKind,
                      dt_feature: bool = False,
                      hidden=graphnet.HIDDEN_SIZES) -> ModelParams:
    kind = ModelKind(kind)
    if kind == ModelKind.TRUE_HAMILTONIAN:
        return ModelParams(kind, ())
    full_width = 7 if (dt_feature and kind == ModelKind.DELTA_GN) else 6
    if kind == ModelKind.DELTA_GN:
        gns = (graphnet.init_gn_params(rng, full_width, "node", hidden),)
    elif kind == ModelKind.OGN:
        gns = (graphnet.init_gn_params(rng, 6, "node", hidden),)
    elif kind == ModelKind.HOGN:
        gns = (graphnet.init_gn_params(rng, 6, "global", hidden),)
    elif kind == ModelKind.SEPARABLE_OGN:
        # net 0 sees positions only and outputs dp/dt; net 1 sees momenta
        # only and outputs dq/dt
        gns = (graphnet.init_gn_params(rng, 4, "node", hidden),
               graphnet.init_gn_params(rng, 4, "node", hidden))
    elif kind == ModelKind.SEPARABLE_HOGN:
        # net 0: potential term (positions only); net 1: kinetic term (momenta only)
        gns = (graphnet.init_gn_params(rng, 4, "global", hidden),
               graphnet.init_gn_params(rng, 4, "global", hidden))
    else:
        raise ValueError(f"unknown kind {kind}")
    return ModelParams(kind, gns, dt_feature and kind == ModelKind.DELTA_GN)


@dataclass
class SystemBatch:
    """Static per-node data for one or more systems stacked into one graph."""

    masses: np.ndarray         # (N,)
    spring_consts: np.ndarray  # (N,)
    counts: list               # particles per system
    graph_ids: np.ndarray      # (N,)
    senders: np.ndarray
    receivers: np.ndarray

    @classmethod
    def from_configs(cls, configs) -> "SystemBatch":
        counts = [c.n for c in configs]
        graph_ids = np.repeat(np.arange(len(counts)), counts)
        senders, receivers = graphnet.fully_connected_edges(counts)
        return cls(np.concatenate([c.masses for c in configs]),
                   np.concatenate([c.spring_consts for c in configs]),
                   counts, graph_ids, senders, receivers)

    @classmethod
    def single(cls, config: SystemConfig) -> "SystemBatch":
        return cls.from_configs([config])

    @property
    def n_graphs(self) -> int:
        return len(self.counts)


def _graph(batch: SystemBatch, q, p, subset: str = "full", dt_feature=None) -> Graph:
    """Batch graph with full (q,p,m,k), position-only, or momentum-only features."""
    if subset == "full":
        nodes = graphnet.node_features(q, p, batch.masses, batch.spring_consts,
                                       batch.graph_ids, batch.counts, dt_feature)
    elif subset == "q":
        q = ad.as_value(q)
        inv = ad.constant((1.0 / np.asarray(batch.counts, dtype=np.float64))[:, None])
        q_mean = ad.mul(ad.scatter_rows(q, batch.graph_ids, batch.n_graphs), inv)
        qc = ad.sub(q, ad.take_rows(q_mean, batch.graph_ids))
        nodes = ad.concat([qc, ad.constant(batch.masses[:, None]),
                           ad.constant(batch.spring_consts[:, None])], axis=1)
    elif subset == "p":
        nodes = ad.concat([ad.as_value(p), ad.constant(batch.masses[:, None]),
                           ad.constant(batch.spring_consts[:, None])], axis=1)
    else:
        raise ValueError(subset)
    return Graph(nodes, batch.senders, batch.receivers, batch.graph_ids,
                 batch.n_graphs)


def _split_qp(node_out: Value):
    return ad.narrow(node_out, 1, 0, 2), ad.narrow(node_out, 1, 2, 2)


def delta_predict(params: ModelParams, batch: SystemBatch, q, p, dt):
    """Next state = state + per-node predicted change; no integrator."""
    q, p = ad.as_value(q), ad.as_value(p)
    dt_feature = dt if params.uses_dt_feature else None
    out = graphnet.gn_node_output(params.gns[0], _graph(batch, q, p, "full", dt_feature))
    dq, dp = _split_qp(out)
    return ad.add(q, dq), ad.add(p, dp)


def ogn_derivatives(params: ModelParams, batch: SystemBatch, q, p):
    """Node output read directly as (dq/dt, dp/dt)."""
    out = graphnet.gn_node_output(params.gns[0], _graph(batch, q, p, "full"))
    return _split_qp(out)


def hogn_hamiltonian(params: ModelParams, batch: SystemBatch, q, p) -> Value:
    """Learned system scalar, one per graph; never supervised directly."""
    return graphnet.gn_global_output(params.gns[0], _graph(batch, q, p, "full"))


def separable_hamiltonian(params: ModelParams, batch: SystemBatch, q, p) -> Value:
    """Sum of a position-only and a momentum-only network scalar."""
    v_term = graphnet.gn_global_output(params.gns[0], _graph(batch, q, p, "q"))
    t_term = graphnet.gn_global_output(params.gns[1], _graph(batch, q, p, "p"))
    return ad.add(v_term, t_term)


def true_hamiltonian_value(batch: SystemBatch, q, p) -> Value:
    """Ground-truth energy on the tape; the validation path for the reference model."""
    q, p = ad.as_value(q), ad.as_value(p)
    inv_2m = ad.constant((0.5 / batch.masses)[:, None])
    kinetic = ad.vsum(ad.mul(ad.power(p, 2.0), inv_2m))
    diff = ad.sub(ad.take_rows(q, batch.senders), ad.take_rows(q, batch.receivers))
    k_edge = batch.spring_consts[batch.senders] * batch.spring_consts[batch.receivers]
    # directed edges count each pair twice
    potential = ad.vsum(ad.mul(ad.vsum(ad.power(diff, 2.0), axis=1),
                               ad.constant(0.25 * k_edge)))
    return ad.add(kinetic, potential)


def _hamiltonian_gradient_field(hamiltonian_fn):
    """Turn a Hamiltonian on the tape into (dq/dt, dp/dt) = (dH/dp, -dH/dq)."""

    def f(q, p):
        q, p = ad.as_value(q), ad.as_value(p)
        total = ad.vsum(hamiltonian_fn(q, p))
        dq, dp = ad.gradient(total, [q, p])
        return dp, ad.neg(dq)

    return f


def hogn_derivatives(params: ModelParams, batch: SystemBatch):
    return _hamiltonian_gradient_field(lambda q, p: hogn_hamiltonian(params, batch, q, p))


def separable_derivatives(params: ModelParams, batch: SystemBatch):
    kind = ModelKind(params.kind)
    if kind == ModelKind.SEPARABLE_HOGN:
        return _hamiltonian_gradient_field(
            lambda q, p: separable_hamiltonian(params, batch, q, p))
    if kind == ModelKind.SEPARABLE_OGN:

        def f(q, p):
            p_out = graphnet.gn_node_output(params.gns[0], _graph(batch, q, p, "q"))
            q_out = graphnet.gn_node_output(params.gns[1], _graph(batch, q, p, "p"))
            return ad.narrow(q_out, 1, 0, 2), ad.narrow(p_out, 1, 0, 2)

        return f
    raise ValueError(f"{kind} is not a separable variant")


def true_hamiltonian_autodiff_derivatives(config: SystemConfig, state: State):
    """Tape-gradient route through the true energy; must match the analytic one."""
    batch = SystemBatch.single(config)
    f = _hamiltonian_gradient_field(lambda q, p: true_hamiltonian_value(batch, q, p))
    dq, dp = f(Value(state.q), Value(state.p))
    return dq.data, dp.data


def derivative_fn(params: ModelParams, batch: SystemBatch):
    """The (q, p) -> (dq/dt, dp/dt) closure an integrator queries."""
    kind = ModelKind(params.kind)
    if kind == ModelKind.OGN:
        return lambda q, p: ogn_derivatives(params, batch, q, p)
    if kind == ModelKind.HOGN:
        return hogn_derivatives(params, batch)
    if kind in (ModelKind.SEPARABLE_OGN, ModelKind.SEPARABLE_HOGN):
        return separable_derivatives(params, batch)
    raise ValueError(f"{kind} has no derivative function")


def _as_split(f):
    """Split form for a joint derivative function: each half queried separately."""

    def f_q(q, p):
        return f(q, p)[0]

    def f_p(q, p):
        return f(q, p)[1]

    return f_q, f_p


def predict_batch(params: ModelParams, integrator: str, dt, batch: SystemBatch,
                  q, p):
    """Differentiable next-state prediction on a (possibly batched) graph.

    dt may be a scalar or an (N, 1) per-node column (variable-dt batches).
    """
    kind = ModelKind(params.kind)
    if kind == ModelKind.DELTA_GN:
        return delta_predict(params, batch, q, p, dt)
    if kind == ModelKind.TRUE_HAMILTONIAN:
        if batch.n_graphs != 1:
            raise ValueError("reference model predicts one system at a time")
        config = SystemConfig(batch.masses, batch.spring_consts)

        def f(q_, p_):
            qd, pd = physics.true_derivatives(config, State(np.asarray(q_), np.asarray(p_)))
            return qd, pd

    else:
        f = derivative_fn(params, batch)
    stepper, symplectic = resolve_integrator(integrator)
    if symplectic:
        return stepper(dt, (q, p), _as_split(f))
    return stepper(dt, (q, p), f)


def predict_step(params: ModelParams, integrator: str, dt, config: SystemConfig,
                 state: State) -> State:
    """Single-system prediction on plain arrays."""
    batch = SystemBatch.single(config)
    kind = ModelKind(params.kind)
    if kind == ModelKind.TRUE_HAMILTONIAN:
        q, p = predict_batch(params, integrator, dt, batch, state.q, state.p)
        return State(np.asarray(q), np.asarray(p))
    q, p = predict_batch(params, integrator, dt, batch, Value(state.q), Value(state.p))
    return State(q.data, p.data)


def rollout_model(params: ModelParams, integrator: str, dt: float,
                  config: SystemConfig, state0: State, n_steps: int) -> physics.Trajectory:
    """Feed predictions back as inputs for n_steps; returns n_steps + 1 states."""
    states = [state0.copy()]
    state = state0
    for _ in range(n_steps):
        state = predict_step(params, integrator, dt, config, state)
        states.append(state)
    return physics.Trajectory(dt, states, config)
