"""Two-layer message passing over the mention graph.

Three layer rules (GCN, GraphSAGE, GATv2 single-head), relu between the
layers and identity after the second.  Backward passes are written out by
hand against the cached forward intermediates; every one is covered by a
finite-difference check in the tests.

Draft queries that are not part of the graph join it as a transient virtual
node wired to their extracted mention targets (isolated when there are
none); the stored graph is never modified.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .camgraph import CamGraph
from .corpus import ArticleId
from .numerics import ContractError, Param, glorot, leaky_relu, relu

VIRTUAL_QUERY = "__query__"
LEAKY_ALPHA = 0.2


class GnnKind(Enum):
    GCN = "gcn"
    GRAPHSAGE = "graphsage"
    GATV2 = "gatv2"


@dataclass(frozen=True)
class GraphView:
    """Node order plus symmetric neighbor index lists (no self entries)."""

    ids: tuple
    neighbors: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.ids) != len(self.neighbors):
            raise ContractError("ids and neighbor lists disagree in length")

    def index_of(self, id) -> int:
        try:
            return self.ids.index(id)
        except ValueError:
            raise KeyError(f"unknown node {id}") from None


def view_of(graph: CamGraph) -> GraphView:
    ids = tuple(graph.nodes)
    pos = {id: i for i, id in enumerate(ids)}
    nbrs = tuple(tuple(pos[nb] for nb in graph.adjacency(id)) for id in ids)
    return GraphView(ids, nbrs)


@dataclass
class NodeFeatures:
    ids: tuple
    matrix: np.ndarray  # one row per id, same order

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.ids):
            raise ContractError(
                f"features: {len(self.ids)} ids vs matrix shape {self.matrix.shape}"
            )

    def row(self, id) -> np.ndarray:
        return self.matrix[self.ids.index(id)]


def attach_virtual_query(
    graph: CamGraph | GraphView,
    feats: NodeFeatures,
    v_q: np.ndarray,
    mention_targets: Iterable[ArticleId],
) -> tuple[GraphView, NodeFeatures]:
    """A transient query node joined by its mention edges.

    Targets outside the graph are ignored (they were dangling anyway); with
    no surviving target the node participates through self-terms only.
    """
    view = graph if isinstance(graph, GraphView) else view_of(graph)
    v_q = np.asarray(v_q, dtype=np.float64).ravel()
    if v_q.shape != (feats.matrix.shape[1],):
        raise ContractError(f"query feature dim {v_q.shape} != {feats.matrix.shape[1]}")
    present = {id: i for i, id in enumerate(view.ids)}
    targets = sorted({present[t] for t in mention_targets if t in present})
    n = len(view.ids)
    nbrs = [list(t) for t in view.neighbors]
    for t in targets:
        nbrs[t] = sorted(nbrs[t] + [n])
    nbrs.append(targets)
    aug_view = GraphView(view.ids + (VIRTUAL_QUERY,), tuple(tuple(t) for t in nbrs))
    aug_feats = NodeFeatures(feats.ids + (VIRTUAL_QUERY,), np.vstack([feats.matrix, v_q[None, :]]))
    return aug_view, aug_feats


# ---------------------------------------------------------------------------
# Layers


class _GcnLayer:
    def __init__(self, name: str, rng: np.random.Generator, d_in: int, d_out: int):
        self.W = Param(f"{name}.W", glorot(rng, d_in, d_out))

    def params(self) -> list[Param]:
        return [self.W]

    @staticmethod
    def _norm_adj(view: GraphView) -> np.ndarray:
        n = len(view.ids)
        dhat = np.array([len(nb) + 1 for nb in view.neighbors], dtype=np.float64)
        inv = 1.0 / np.sqrt(dhat)
        C = np.zeros((n, n))
        for i, nbrs in enumerate(view.neighbors):
            C[i, i] = inv[i] * inv[i]
            for j in nbrs:
                C[i, j] = inv[i] * inv[j]
        return C

    def forward(self, view: GraphView, H: np.ndarray):
        C = self._norm_adj(view)
        M = H @ self.W.value
        Z = C @ M
        return Z, {"H": H, "C": C}

    def backward(self, dZ: np.ndarray, cache) -> np.ndarray:
        # Z = C M, C symmetric
        dM = cache["C"] @ dZ
        self.W.grad += cache["H"].T @ dM
        return dM @ self.W.value.T


class _SageLayer:
    def __init__(self, name: str, rng: np.random.Generator, d_in: int, d_out: int):
        self.W_self = Param(f"{name}.W_self", glorot(rng, d_in, d_out))
        self.W_nb = Param(f"{name}.W_nb", glorot(rng, d_in, d_out))

    def params(self) -> list[Param]:
        return [self.W_self, self.W_nb]

    @staticmethod
    def _mean_adj(view: GraphView) -> np.ndarray:
        n = len(view.ids)
        A = np.zeros((n, n))
        for i, nbrs in enumerate(view.neighbors):
            if nbrs:
                w = 1.0 / len(nbrs)
                for j in nbrs:
                    A[i, j] = w
        return A

    def forward(self, view: GraphView, H: np.ndarray):
        A = self._mean_adj(view)
        mean = A @ H
        Z = H @ self.W_self.value + mean @ self.W_nb.value
        return Z, {"H": H, "A": A, "mean": mean}

    def backward(self, dZ: np.ndarray, cache) -> np.ndarray:
        self.W_self.grad += cache["H"].T @ dZ
        self.W_nb.grad += cache["mean"].T @ dZ
        return dZ @ self.W_self.value.T + cache["A"].T @ (dZ @ self.W_nb.value.T)


class _Gatv2Layer:
    """Single head; scores a^T leaky_relu(W_l h_i + W_r h_j), aggregates W_r h_j."""

    def __init__(self, name: str, rng: np.random.Generator, d_in: int, d_out: int):
        self.W_l = Param(f"{name}.W_l", glorot(rng, d_in, d_out))
        self.W_r = Param(f"{name}.W_r", glorot(rng, d_in, d_out))
        self.a = Param(f"{name}.a", glorot(rng, d_out, 1).ravel())

    def params(self) -> list[Param]:
        return [self.W_l, self.W_r, self.a]

    def forward(self, view: GraphView, H: np.ndarray):
        P = H @ self.W_l.value
        Q = H @ self.W_r.value
        n = H.shape[0]
        Z = np.zeros((n, Q.shape[1]))
        per_node = []
        for i, nbrs in enumerate(view.neighbors):
            J = np.array(list(nbrs) + [i], dtype=np.intp)
            S = P[i][None, :] + Q[J]
            T = leaky_relu(S, LEAKY_ALPHA)
            e = T @ self.a.value
            e = e - e.max()  # shift-invariant softmax
            w = np.exp(e)
            alpha = w / w.sum()
            Z[i] = alpha @ Q[J]
            per_node.append((J, S, T, alpha))
        return Z, {"H": H, "P": P, "Q": Q, "per_node": per_node}

    def backward(self, dZ: np.ndarray, cache) -> np.ndarray:
        H, P, Q = cache["H"], cache["P"], cache["Q"]
        dP = np.zeros_like(P)
        dQ = np.zeros_like(Q)
        for i, (J, S, T, alpha) in enumerate(cache["per_node"]):
            dzi = dZ[i]
            dalpha = Q[J] @ dzi
            dQ[J] += alpha[:, None] * dzi[None, :]
            de = alpha * (dalpha - float(alpha @ dalpha))  # softmax Jacobian row
            self.a.grad += T.T @ de
            dT = de[:, None] * self.a.value[None, :]
            dS = dT * np.where(S > 0.0, 1.0, LEAKY_ALPHA)
            dP[i] += dS.sum(axis=0)
            dQ[J] += dS
        self.W_l.grad += H.T @ dP
        self.W_r.grad += H.T @ dQ
        return dP @ self.W_l.value.T + dQ @ self.W_r.value.T


_LAYER_CLASSES = {
    GnnKind.GCN: _GcnLayer,
    GnnKind.GRAPHSAGE: _SageLayer,
    GnnKind.GATV2: _Gatv2Layer,
}


# ---------------------------------------------------------------------------
# Two-layer network


class GnnNetwork:
    def __init__(self, kind: GnnKind, d_in: int, d_hidden: Optional[int] = None, d_out: Optional[int] = None, seed: int = 0):
        d_hidden = d_in if d_hidden is None else d_hidden
        d_out = d_in if d_out is None else d_out
        self.kind = kind
        self.dims = (d_in, d_hidden, d_out)
        rng = np.random.default_rng(seed)
        cls = _LAYER_CLASSES[kind]
        self.layer1 = cls(f"{kind.value}.l1", rng, d_in, d_hidden)
        self.layer2 = cls(f"{kind.value}.l2", rng, d_hidden, d_out)
        self._cache = None

    @property
    def d_out(self) -> int:
        return self.dims[2]

    def params(self) -> list[Param]:
        return self.layer1.params() + self.layer2.params()

    def forward(self, view: GraphView, feats: NodeFeatures) -> NodeFeatures:
        if feats.ids != view.ids:
            raise ContractError("feature rows do not line up with graph nodes")
        if feats.matrix.shape[1] != self.dims[0]:
            raise ContractError(f"feature dim {feats.matrix.shape[1]} != network d_in {self.dims[0]}")
        Z1, c1 = self.layer1.forward(view, feats.matrix)
        H1 = relu(Z1)
        Z2, c2 = self.layer2.forward(view, H1)
        self._cache = {"view": view, "ids": feats.ids, "Z1": Z1, "c1": c1, "c2": c2, "out_shape": Z2.shape}
        return NodeFeatures(feats.ids, Z2)

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        """Accumulates parameter grads; returns grads wrt the input features."""
        if self._cache is None:
            raise ContractError("backward without a cached forward")
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != self._cache["out_shape"]:
            raise ContractError(
                f"upstream shape {upstream.shape} != forward output {self._cache['out_shape']} (stale cache?)"
            )
        dH1 = self.layer2.backward(upstream, self._cache["c2"])
        dZ1 = dH1 * (self._cache["Z1"] > 0.0)
        dH = self.layer1.backward(dZ1, self._cache["c1"])
        self._cache = None
        return dH


def gnn_forward(net: GnnNetwork, graph: CamGraph | GraphView, feats: NodeFeatures) -> NodeFeatures:
    view = graph if isinstance(graph, GraphView) else view_of(graph)
    return net.forward(view, feats)


def gnn_backward(net: GnnNetwork, upstream: np.ndarray) -> np.ndarray:
    return net.backward(upstream)
