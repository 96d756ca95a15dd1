"""Two-stage training.

Stage one fits the bi-encoder projection over frozen text embeddings with a
cosine-into-BCE objective.  Stage two freezes it and fits the pair scorer
(ProbCalc, plus the GNN when the pipeline uses one).  Both stages share
Adam, linear learning-rate warmup, periodic validation, and best-checkpoint
selection by validation ROC-AUC.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .camgraph import CamGraph
from .corpus import ArticleId
from .gnn import view_of
from .metrics import roc_auc
from .numerics import (
    EPS_PROB,
    AdamState,
    ContractError,
    Param,
    adam_step,
    bce_loss,
    cosine_sim,
    cosine_sim_backward,
    sigmoid,
    zero_grads,
)
from .retriever import MODE_CAM, BiEncoder, RetrieverModels, node_features, node_text

SPLITS = ("train", "validation", "test")

LabeledPair = tuple[ArticleId, ArticleId, int]


@dataclass(frozen=True)
class PairDataset:
    pairs: tuple[LabeledPair, ...]
    split: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ContractError(f"unknown split {self.split!r}")
        object.__setattr__(self, "pairs", tuple(self.pairs))
        seen = set()
        for a, b, label in self.pairs:
            if label not in (0, 1):
                raise ContractError(f"label must be 0 or 1 for ({a}, {b})")
            if a == b:
                raise ContractError(f"self pair {a} is not scoreable")
            key = (a, b) if a.sort_key() <= b.sort_key() else (b, a)
            if key in seen:
                raise ContractError(f"duplicate pair {key[0]} / {key[1]} in split {self.split}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.pairs)

    def labels(self) -> np.ndarray:
        return np.array([label for _, _, label in self.pairs], dtype=np.float64)


@dataclass
class PairSplits:
    train: PairDataset
    validation: PairDataset
    test: Optional[PairDataset] = None


def make_splits(
    labeled: Sequence[LabeledPair],
    seed: int = 0,
    fractions: tuple[float, float] = (0.7, 0.15),
) -> PairSplits:
    """Stratified shuffle-split; remainder after train/validation is test."""
    if not 0 < fractions[0] + fractions[1] < 1:
        raise ContractError("train+validation fractions must leave room for test")
    rng = np.random.default_rng(seed)
    pos = [p for p in labeled if p[2] == 1]
    neg = [p for p in labeled if p[2] == 0]
    buckets: dict[str, list[LabeledPair]] = {s: [] for s in SPLITS}
    for group in (pos, neg):
        order = rng.permutation(len(group))
        n_train = round(fractions[0] * len(group))
        n_val = round(fractions[1] * len(group))
        for rank, idx in enumerate(order):
            if rank < n_train:
                buckets["train"].append(group[idx])
            elif rank < n_train + n_val:
                buckets["validation"].append(group[idx])
            else:
                buckets["test"].append(group[idx])
    return PairSplits(
        PairDataset(tuple(buckets["train"]), "train"),
        PairDataset(tuple(buckets["validation"]), "validation"),
        PairDataset(tuple(buckets["test"]), "test"),
    )


@dataclass
class TrainConfig:
    lr: float
    epochs: int
    batch: int = 16
    warmup_steps: int = 500
    seeds: tuple[int, ...] = (0, 42, 2024)
    eval_interval: Optional[int] = None  # None: ceil(total_steps / 13)
    stage: str = "bi"

    def __post_init__(self):
        if self.lr <= 0:
            raise ContractError("lr must be positive")
        if self.epochs < 0 or self.batch < 1 or self.warmup_steps < 1:
            raise ContractError("bad epochs/batch/warmup")
        if self.eval_interval is not None and self.eval_interval < 1:
            raise ContractError("eval_interval must be positive")
        if self.stage not in ("bi", "cross"):
            raise ContractError(f"unknown stage {self.stage!r}")

    @classmethod
    def bi_defaults(cls, **overrides) -> "TrainConfig":
        return cls(**{"lr": 1e-3, "epochs": 10, "stage": "bi", **overrides})

    @classmethod
    def cross_defaults(cls, **overrides) -> "TrainConfig":
        return cls(**{"lr": 5e-5, "epochs": 3, "stage": "cross", **overrides})


@dataclass(frozen=True)
class HistoryRecord:
    step: int
    split: str
    loss: float
    roc_auc: Optional[float] = None


def lr_at(base: float, step: int, warmup_steps: int) -> float:
    """Linear ramp: reaches base at warmup_steps, flat afterwards (1-based)."""
    return base * min(1.0, step / warmup_steps)


def _steps_per_epoch(n_pairs: int, batch: int) -> int:
    return math.ceil(n_pairs / batch)


def _resolve_eval_interval(cfg: TrainConfig, total_steps: int) -> int:
    if cfg.eval_interval is not None:
        return cfg.eval_interval
    return max(1, math.ceil(total_steps / 13))


def _check_pairs_in_graph(data: PairDataset, graph: CamGraph) -> None:
    for a, b, _ in data.pairs:
        for id in (a, b):
            if id not in graph.nodes:
                raise ContractError(f"pair article {id} is not a graph node")


def early_stop_select(history: Sequence[HistoryRecord]) -> HistoryRecord:
    """Best-validation record: max ROC-AUC, ties to the earliest step."""
    evals = [r for r in history if r.split == "validation" and r.roc_auc is not None]
    if not evals:
        raise ContractError("no validation evaluations in history")
    best = evals[0]
    for rec in evals[1:]:
        if rec.roc_auc > best.roc_auc:
            best = rec
    return best


# ---------------------------------------------------------------------------
# Stage 1: bi-encoder projection


class _EmbedCache:
    """Raw backend embeddings, keyed by (node, case index); backend frozen."""

    def __init__(self, bi: BiEncoder, graph: CamGraph):
        self.bi = bi
        self.graph = graph
        self._store: dict = {}

    def raw(self, id: ArticleId, epoch: int) -> np.ndarray:
        node = self.graph.nodes[id]
        if self.bi.mode == MODE_CAM:
            case_idx = epoch % len(node.cases)
            key = (id, case_idx)
            if key not in self._store:
                self._store[key] = self.bi.backend.embed(node_text(node.article, node.cases[case_idx]))
        else:
            key = (id, None)
            if key not in self._store:
                self._store[key] = self.bi.backend.embed(node.article.body)
        return self._store[key]


def _pair_cosines(bi: BiEncoder, cache: _EmbedCache, pairs, epoch: int) -> np.ndarray:
    out = np.empty(len(pairs))
    for t, (a, b, _) in enumerate(pairs):
        out[t] = cosine_sim(bi.project(cache.raw(a, epoch)), bi.project(cache.raw(b, epoch)))
    return out


def train_bi(
    bi: BiEncoder, graph: CamGraph, data: PairSplits, cfg: TrainConfig, seed: int = 0
) -> tuple[BiEncoder, list[HistoryRecord]]:
    """Fits the projection; returns it with the best-validation weights."""
    if len(data.train) == 0:
        raise ContractError("empty train split")
    _check_pairs_in_graph(data.train, graph)
    _check_pairs_in_graph(data.validation, graph)

    cache = _EmbedCache(bi, graph)
    rng = np.random.default_rng(seed)
    W = bi.projection
    total = cfg.epochs * _steps_per_epoch(len(data.train), cfg.batch)
    interval = _resolve_eval_interval(cfg, total)
    adam = AdamState(lr=cfg.lr)
    history: list[HistoryRecord] = []
    best: Optional[tuple[float, np.ndarray]] = None
    labels = data.train.labels()
    val_labels = data.validation.labels()

    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(data.train))
        for start in range(0, len(order), cfg.batch):
            step += 1
            idx = order[start : start + cfg.batch]
            batch = [data.train.pairs[i] for i in idx]
            zero_grads([W])
            zs = [(bi.project(cache.raw(a, epoch)), bi.project(cache.raw(b, epoch))) for a, b, _ in batch]
            y_hat = np.array([cosine_sim(zi, zj) for zi, zj in zs])
            loss, dy = bce_loss(y_hat, labels[idx])
            for (zi, zj), (a, b, _), g in zip(zs, batch, dy):
                dzi, dzj = cosine_sim_backward(zi, zj, float(g))
                W.grad += np.outer(cache.raw(a, epoch), dzi)
                W.grad += np.outer(cache.raw(b, epoch), dzj)
            adam.lr = lr_at(cfg.lr, step, cfg.warmup_steps)
            adam_step([W], adam)

            if step % interval == 0 or step == total:
                history.append(HistoryRecord(step, "train", loss))
                if len(data.validation):
                    # case index 0 for validation keeps the selection signal
                    # comparable across epochs
                    val_hat = np.clip(_pair_cosines(bi, cache, data.validation.pairs, 0),
                                      EPS_PROB, 1.0 - EPS_PROB)
                    val_loss, _ = bce_loss(val_hat, val_labels)
                    auc = None
                    if 0 < val_labels.sum() < len(val_labels):
                        auc = roc_auc(list(zip(val_hat.tolist(), val_labels.astype(int).tolist())))
                        if best is None or auc > best[0]:
                            best = (auc, W.value.copy())
                    history.append(HistoryRecord(step, "validation", val_loss, auc))

    if best is not None:
        W.value[...] = best[1]
    return bi, history


# ---------------------------------------------------------------------------
# Stage 2: pair scorer (ProbCalc, with the GNN when present)


class _CrossCache:
    """Frozen per-pair cross features and per-node step-1 vectors."""

    def __init__(self, models: RetrieverModels, graph: CamGraph):
        self.models = models
        self.graph = graph
        self.vec = {}
        self.body = {}
        for id, node in graph.nodes.items():
            self.vec[id] = models.bi.encode_node(node.article, node.cases[0])
            self.body[id] = node.article.body
        self._features: dict = {}

    def pair_features(self, a: ArticleId, b: ArticleId) -> np.ndarray:
        key = (a, b)
        if key not in self._features:
            self._features[key] = self.models.cross.cross_features(
                self.body[a], self.body[b], self.vec[a], self.vec[b]
            )
        return self._features[key]


def _cross_probs(
    models: RetrieverModels,
    cache: _CrossCache,
    pairs,
    g_matrix: Optional[np.ndarray],
    row_of: dict,
) -> tuple[np.ndarray, list[np.ndarray]]:
    xs = []
    for a, b, _ in pairs:
        x = cache.pair_features(a, b)
        if g_matrix is not None:
            x = np.concatenate([x, g_matrix[row_of[a]], g_matrix[row_of[b]]])
        xs.append(x)
    logits = np.array([models.probcalc.logit(x) for x in xs])
    return sigmoid(logits), xs


def train_cross(
    models: RetrieverModels, graph: CamGraph, data: PairSplits, cfg: TrainConfig, seed: int = 0
) -> tuple[RetrieverModels, list[HistoryRecord]]:
    """Fits ProbCalc (and the GNN when models carry one); bi stays frozen."""
    if len(data.train) == 0:
        raise ContractError("empty train split")
    _check_pairs_in_graph(data.train, graph)
    _check_pairs_in_graph(data.validation, graph)

    use_gnn = models.gnn is not None
    cache = _CrossCache(models, graph)
    if use_gnn and models.node_feats is None:
        models.node_feats = node_features(models.bi, graph)
    view = view_of(graph) if use_gnn else None
    row_of = {id: i for i, id in enumerate(graph.nodes)} if use_gnn else {}
    d_cross = models.cross.dim_c
    d_out = models.gnn.d_out if use_gnn else 0

    trainable: list[Param] = models.probcalc.params()
    if use_gnn:
        trainable += models.gnn.params()

    rng = np.random.default_rng(seed)
    total = cfg.epochs * _steps_per_epoch(len(data.train), cfg.batch)
    interval = _resolve_eval_interval(cfg, total)
    adam = AdamState(lr=cfg.lr)
    history: list[HistoryRecord] = []
    best: Optional[tuple[float, list[np.ndarray]]] = None
    labels = data.train.labels()
    val_labels = data.validation.labels()

    def node_outputs() -> Optional[np.ndarray]:
        if not use_gnn:
            return None
        return models.gnn.forward(view, models.node_feats).matrix

    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(data.train))
        for start in range(0, len(order), cfg.batch):
            step += 1
            idx = order[start : start + cfg.batch]
            batch = [data.train.pairs[i] for i in idx]
            zero_grads(trainable)
            g_matrix = node_outputs()
            probs, xs = _cross_probs(models, cache, batch, g_matrix, row_of)
            loss, dy = bce_loss(probs, labels[idx])
            dG = np.zeros_like(g_matrix) if use_gnn else None
            for x, p, g, (a, b, _) in zip(xs, probs, dy, batch):
                dlogit = float(g) * float(p) * (1.0 - float(p))
                dx = models.probcalc.backward_logit(x, dlogit)
                if use_gnn:
                    dG[row_of[a]] += dx[d_cross : d_cross + d_out]
                    dG[row_of[b]] += dx[d_cross + d_out :]
            if use_gnn:
                models.gnn.backward(dG)
            adam.lr = lr_at(cfg.lr, step, cfg.warmup_steps)
            adam_step(trainable, adam)

            if step % interval == 0 or step == total:
                history.append(HistoryRecord(step, "train", loss))
                if len(data.validation):
                    val_probs, _ = _cross_probs(
                        models, cache, data.validation.pairs, node_outputs(), row_of
                    )
                    val_loss, _ = bce_loss(val_probs, val_labels)
                    auc = None
                    if 0 < val_labels.sum() < len(val_labels):
                        auc = roc_auc(list(zip(val_probs.tolist(), val_labels.astype(int).tolist())))
                        if best is None or auc > best[0]:
                            best = (auc, [p.value.copy() for p in trainable])
                    history.append(HistoryRecord(step, "validation", val_loss, auc))

    if best is not None:
        for p, value in zip(trainable, best[1]):
            p.value[...] = value
    return models, history
