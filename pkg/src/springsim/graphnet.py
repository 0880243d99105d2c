"""Graph construction from particle states and the graph-network block.

Node features are (q - mean(q), p, m, k); graphs are fully connected and
directed with no self-edges and empty edge/global input features.  Edge and
node updates use [64, 64] softplus MLPs with sum aggregation, followed by a
single non-activated linear head read out at the nodes (width 4) or at the
global (width 1).

Several systems can be processed as one block-diagonal batch graph; the
``graph_ids`` array maps each node to its system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import MLPParams, Value
from .physics import State, SystemConfig

HIDDEN_SIZES = (64, 64)
NODE_OUT_WIDTH = 4    # (dq_x, dq_y, dp_x, dp_y) per particle
GLOBAL_OUT_WIDTH = 1  # one scalar per system


@dataclass
class Graph:
    nodes: Value               # (N, d_v) node features
    senders: np.ndarray        # (E,) int
    receivers: np.ndarray      # (E,) int
    graph_ids: np.ndarray      # (N,) int, node -> graph index
    n_graphs: int

    @property
    def n_nodes(self) -> int:
        return self.nodes.data.shape[0]

    @property
    def n_edges(self) -> int:
        return self.senders.shape[0]


@dataclass
class GNParams:
    edge_mlp: MLPParams
    node_mlp: MLPParams
    global_mlp: MLPParams | None
    head_w: object             # ndarray or Value, (64, out_width)
    head_b: object             # ndarray or Value, (out_width,)
    head: str                  # "node" | "global"

    def lifted(self) -> "GNParams":
        return GNParams(self.edge_mlp.lifted(), self.node_mlp.lifted(),
                        None if self.global_mlp is None else self.global_mlp.lifted(),
                        ad.as_value(self.head_w), ad.as_value(self.head_b), self.head)

    def leaves(self):
        out = self.edge_mlp.leaves() + self.node_mlp.leaves()
        if self.global_mlp is not None:
            out += self.global_mlp.leaves()
        return out + [self.head_w, self.head_b]

    def named_arrays(self):
        """Deterministic (name, array) order used by Adam and checkpoints."""
        out = []
        for prefix, mlp in (("edge", self.edge_mlp), ("node", self.node_mlp),
                            ("global", self.global_mlp)):
            if mlp is None:
                continue
            for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
                out.append((f"{prefix}.w{i}", w))
                out.append((f"{prefix}.b{i}", b))
        out.append(("head.w", self.head_w))
        out.append(("head.b", self.head_b))
        return out


def init_gn_params(rng: np.random.Generator, node_width: int, head: str,
                   hidden=HIDDEN_SIZES) -> GNParams:
    edge_mlp = ad.init_mlp_params(rng, [2 * node_width, *hidden])
    node_mlp = ad.init_mlp_params(rng, [hidden[-1] + node_width, *hidden])
    if head == "node":
        global_mlp = None
        out_width = NODE_OUT_WIDTH
    elif head == "global":
        global_mlp = ad.init_mlp_params(rng, [2 * hidden[-1], *hidden])
        out_width = GLOBAL_OUT_WIDTH
    else:
        raise ValueError(f"unknown head {head!r}")
    bound = 1.0 / np.sqrt(hidden[-1])
    head_w = rng.uniform(-bound, bound, size=(hidden[-1], out_width))
    head_b = np.zeros(out_width)
    return GNParams(edge_mlp, node_mlp, global_mlp, head_w, head_b, head)


def fully_connected_edges(counts) -> tuple[np.ndarray, np.ndarray]:
    """Directed sender/receiver indices for a batch of complete graphs."""
    senders, receivers = [], []
    offset = 0
    for n in counts:
        s, r = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        keep = s != r
        senders.append(s[keep] + offset)
        receivers.append(r[keep] + offset)
        offset += n
    return np.concatenate(senders), np.concatenate(receivers)


def node_features(q, p, masses, spring_consts, graph_ids, counts,
                  dt_feature=None) -> Value:
    """concat(q - per-graph mean, p, m, k[, dt]); differentiable in q and p."""
    q, p = ad.as_value(q), ad.as_value(p)
    n_graphs = len(counts)
    inv_counts = ad.constant((1.0 / np.asarray(counts, dtype=np.float64))[:, None])
    q_mean = ad.mul(ad.scatter_rows(q, graph_ids, n_graphs), inv_counts)
    q_centered = ad.sub(q, ad.take_rows(q_mean, graph_ids))
    columns = [q_centered, p,
               ad.constant(np.asarray(masses, dtype=np.float64)[:, None]),
               ad.constant(np.asarray(spring_consts, dtype=np.float64)[:, None])]
    if dt_feature is not None:
        dt_col = np.asarray(dt_feature, dtype=np.float64)
        if dt_col.ndim < 2:
            dt_col = np.broadcast_to(dt_col, (q.data.shape[0],))[:, None]
        columns.append(ad.constant(dt_col))
    return ad.concat(columns, axis=1)


def build_graph(config: SystemConfig, state: State, dt_feature=None) -> Graph:
    """Single-system graph; node width 6, or 7 when dt is appended."""
    n = config.n
    graph_ids = np.zeros(n, dtype=np.intp)
    senders, receivers = fully_connected_edges([n])
    nodes = node_features(state.q, state.p, config.masses, config.spring_consts,
                          graph_ids, [n], dt_feature)
    return Graph(nodes, senders, receivers, graph_ids, 1)


def _edge_and_node_update(params: GNParams, g: Graph):
    edge_in = ad.concat([ad.take_rows(g.nodes, g.senders),
                         ad.take_rows(g.nodes, g.receivers)], axis=1)
    edges = ad.mlp_forward(params.edge_mlp, edge_in)
    incoming = ad.scatter_rows(edges, g.receivers, g.n_nodes)
    node_in = ad.concat([incoming, g.nodes], axis=1)
    nodes = ad.mlp_forward(params.node_mlp, node_in)
    return edges, nodes


def gn_node_output(params: GNParams, g: Graph) -> Value:
    """Per-node outputs, (N, 4)."""
    if params.head != "node":
        raise ValueError("params are not configured for a node head")
    _, nodes = _edge_and_node_update(params, g)
    return ad.affine(nodes, params.head_w, params.head_b)


def gn_global_output(params: GNParams, g: Graph) -> Value:
    """One scalar per graph, (n_graphs, 1)."""
    if params.head != "global":
        raise ValueError("params are not configured for a global head")
    edges, nodes = _edge_and_node_update(params, g)
    edge_sum = ad.scatter_rows(edges, g.graph_ids[g.receivers], g.n_graphs)
    node_sum = ad.scatter_rows(nodes, g.graph_ids, g.n_graphs)
    global_in = ad.concat([edge_sum, node_sum], axis=1)
    hidden = ad.mlp_forward(params.global_mlp, global_in)
    return ad.affine(hidden, params.head_w, params.head_b)
