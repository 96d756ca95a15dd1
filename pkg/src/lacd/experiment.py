"""Four-combination experiment harness.

Runs both training stages per (pipeline, seed) cell, scores held-out pairs,
and measures end-to-end retrieval precision.  Also carries the scorer
ablation pair: the same bilinear-plus-linear head over GNN outputs versus
over raw bi vectors, so the graph layers are the only moving part.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .backends import HashCrossBackend, HashingEmbedBackend
from .camgraph import CamGraph
from .corpus import ArticleId, Corpus
from .gnn import GnnKind, GnnNetwork, view_of
from .metrics import MetricsReport, roc_auc
from .numerics import AdamState, ContractError, Param, adam_step, bce_loss, sigmoid, zero_grads
from .retriever import (
    MODE_CAM,
    BiEncoder,
    ProbCalc,
    RetrieverConfig,
    RetrieverModels,
    build_index,
    node_features,
    retrieve,
)
from .trainer import (
    HistoryRecord,
    LabeledPair,
    PairSplits,
    TrainConfig,
    _CrossCache,
    _cross_probs,
    lr_at,
    make_splits,
    train_bi,
    train_cross,
)

COMBINATIONS = {
    "naive": ("naive", "naive"),
    "n1+c3": ("naive", "cam"),
    "c1+n3": ("cam", "naive"),
    "cam": ("cam", "cam"),
}

# Published F1 (%) for the two endpoint pipelines on their original corpus;
# kept as orientation rows in reports, never compared against our numbers.
REFERENCE_F1 = {"naive": 48.9, "cam": 58.5}


@dataclass
class ExperimentSpec:
    corpus: Corpus
    graph: CamGraph
    labeled_pairs: Sequence[LabeledPair]
    combinations: tuple[str, ...] = ("naive", "n1+c3", "c1+n3", "cam")
    seeds: tuple[int, ...] = (0, 42, 2024)
    gnn_kind: GnnKind = GnnKind.GATV2
    dim: int = 256
    theta: float = 0.5
    ks: tuple[int, ...] = (5,)
    bi_config: Optional[TrainConfig] = None
    cross_config: Optional[TrainConfig] = None
    split_seed: int = 0
    embed_seed: int = 0

    def __post_init__(self):
        for label in self.combinations:
            if label not in COMBINATIONS:
                raise ContractError(f"unknown combination {label!r}")
        if self.bi_config is None:
            self.bi_config = TrainConfig.bi_defaults()
        if self.cross_config is None:
            self.cross_config = TrainConfig.cross_defaults()


@dataclass(frozen=True)
class CellResult:
    combination: str
    seed: int
    metrics: Optional[MetricsReport] = None
    scores: tuple = ()
    error: Optional[str] = None


@dataclass
class ExperimentReport:
    cells: list[CellResult] = field(default_factory=list)
    means: dict = field(default_factory=dict)
    reference: dict = field(default_factory=lambda: dict(REFERENCE_F1))

    def to_json(self) -> str:
        def cell_doc(c: CellResult) -> dict:
            doc = {"combination": c.combination, "seed": c.seed}
            if c.error is not None:
                doc["error"] = c.error
            if c.metrics is not None:
                doc["f1"] = c.metrics.f1
                doc["accuracy"] = c.metrics.accuracy
                doc["roc_auc"] = c.metrics.roc_auc
                doc["precision_at"] = {str(k): v for k, v in c.metrics.precision_at.items()}
                conf = c.metrics.confusion
                doc["confusion"] = {"tp": conf.tp, "fp": conf.fp, "tn": conf.tn, "fn": conf.fn}
            return doc

        return json.dumps(
            {
                "cells": [cell_doc(c) for c in self.cells],
                "means": self.means,
                "reference_f1": self.reference,
            },
            ensure_ascii=False,
            indent=2,
        )

    def table(self) -> str:
        header = f"{'combination':<12}{'seed':>6}{'f1':>9}{'acc':>9}{'auc':>9}  p@k"
        lines = [header, "-" * len(header)]
        for c in self.cells:
            if c.error is not None:
                lines.append(f"{c.combination:<12}{c.seed:>6}  FAILED: {c.error}")
                continue
            m = c.metrics
            pk = " ".join(f"@{k}={v:.3f}" for k, v in sorted(m.precision_at.items()))
            lines.append(f"{c.combination:<12}{c.seed:>6}{m.f1:>9.3f}{m.accuracy:>9.3f}{m.roc_auc:>9.3f}  {pk}")
        lines.append("-" * len(header))
        for label, m in self.means.items():
            pk = " ".join(f"@{k}={v:.3f}" for k, v in sorted(m.get("precision_at", {}).items()))
            lines.append(f"{label:<12}{'mean':>6}{m['f1']:>9.3f}{m['accuracy']:>9.3f}{m['roc_auc']:>9.3f}  {pk}")
        return "\n".join(lines)


def _positive_partners(pairs: Sequence[LabeledPair]) -> dict[ArticleId, set[ArticleId]]:
    gold: dict[ArticleId, set[ArticleId]] = {}
    for a, b, label in pairs:
        if label == 1:
            gold.setdefault(a, set()).add(b)
            gold.setdefault(b, set()).add(a)
    return gold


def build_cell_models(spec: ExperimentSpec, combination: str, seed: int) -> tuple[RetrieverModels, PairSplits]:
    """Trains both stages for one (pipeline, seed) cell."""
    step1, step3 = COMBINATIONS[combination]
    backend = HashingEmbedBackend(dim=spec.dim, seed=spec.embed_seed)
    bi = BiEncoder.create(backend, mode=step1)
    splits = make_splits(spec.labeled_pairs, seed=spec.split_seed)
    train_bi(bi, spec.graph, splits, spec.bi_config, seed=seed)

    cross = HashCrossBackend(backend)
    gnn = GnnNetwork(spec.gnn_kind, spec.dim, seed=seed) if step3 == MODE_CAM else None
    d_cat = cross.dim_c + (2 * gnn.d_out if gnn is not None else 0)
    models = RetrieverModels(bi, cross, ProbCalc.create(d_cat), gnn)
    train_cross(models, spec.graph, splits, spec.cross_config, seed=seed)
    return models, splits


def run_cell(spec: ExperimentSpec, combination: str, seed: int) -> CellResult:
    step1, step3 = COMBINATIONS[combination]
    models, splits = build_cell_models(spec, combination, seed)

    # held-out pair classification
    cache = _CrossCache(models, spec.graph)
    g_matrix = None
    row_of: dict = {}
    if models.gnn is not None:
        row_of = {id: i for i, id in enumerate(spec.graph.nodes)}
        g_matrix = models.gnn.forward(view_of(spec.graph), models.node_feats).matrix
    if splits.test is None or len(splits.test) == 0:
        raise ContractError("experiment needs a non-empty test split")
    probs, _ = _cross_probs(models, cache, splits.test.pairs, g_matrix, row_of)
    scores = tuple(zip((float(p) for p in probs), (label for _, _, label in splits.test.pairs)))

    # end-to-end retrieval over the full graph
    gold = _positive_partners(spec.labeled_pairs)
    queries = sorted(
        {id for a, b, label in splits.test.pairs if label == 1 for id in (a, b)},
        key=lambda id: id.sort_key(),
    )
    index = build_index(models.bi, spec.graph)
    config = RetrieverConfig(step1, step3, k=max(spec.ks), theta=spec.theta, gnn_kind=spec.gnn_kind)
    ranked = {}
    for q in queries:
        result = retrieve(config, spec.corpus, spec.graph, index, models, q)
        ranked[q] = [id for id, _ in result.ranked]

    metrics = MetricsReport.from_scores(scores, spec.theta, ranked, gold, spec.ks)
    return CellResult(combination, seed, metrics, scores)


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    report = ExperimentReport()
    for combination in spec.combinations:
        for seed in spec.seeds:
            try:
                report.cells.append(run_cell(spec, combination, seed))
            except Exception as exc:  # a failed cell must not sink the report
                report.cells.append(CellResult(combination, seed, error=f"{type(exc).__name__}: {exc}"))
    for combination in spec.combinations:
        done = [c for c in report.cells if c.combination == combination and c.error is None]
        if not done:
            continue
        ks = sorted({k for c in done for k in c.metrics.precision_at})
        report.means[combination] = {
            "f1": float(np.mean([c.metrics.f1 for c in done])),
            "accuracy": float(np.mean([c.metrics.accuracy for c in done])),
            "roc_auc": float(np.mean([c.metrics.roc_auc for c in done])),
            "precision_at": {k: float(np.mean([c.metrics.precision_at[k] for c in done])) for k in ks},
        }
    return report


def write_scores(report: ExperimentReport, path) -> None:
    """Raw per-pair scores, one JSON record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for cell in report.cells:
            for prob, label in cell.scores:
                fh.write(json.dumps({
                    "combination": cell.combination,
                    "seed": cell.seed,
                    "prob": prob,
                    "label": label,
                }) + "\n")


# ---------------------------------------------------------------------------
# Scorer ablation: same head, with and without the graph layers


@dataclass
class BilinearPairScorer:
    """logit(u, v) = u'Bv + w.[u; v] + b over node representations."""

    bilinear: Param
    linear: ProbCalc

    @classmethod
    def create(cls, d: int) -> "BilinearPairScorer":
        return cls(Param("ablation.bilinear", np.zeros((d, d))), ProbCalc.create(2 * d))

    def params(self) -> list[Param]:
        return [self.bilinear] + self.linear.params()

    def logit(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(u @ self.bilinear.value @ v) + self.linear.logit(np.concatenate([u, v]))

    def backward_logit(self, u: np.ndarray, v: np.ndarray, dlogit: float) -> tuple[np.ndarray, np.ndarray]:
        self.bilinear.grad += dlogit * np.outer(u, v)
        dx = self.linear.backward_logit(np.concatenate([u, v]), dlogit)
        d = u.shape[0]
        du = dlogit * (self.bilinear.value @ v) + dx[:d]
        dv = dlogit * (self.bilinear.value.T @ u) + dx[d:]
        return du, dv


def train_pair_scorer(
    scorer: BilinearPairScorer,
    graph: CamGraph,
    data: PairSplits,
    cfg: TrainConfig,
    seed: int,
    reps,
    gnn: Optional[GnnNetwork] = None,
) -> list:
    """BCE fit of the ablation head.

    ``reps``: with a GNN, the NodeFeatures it consumes; without, a dict of
    fixed per-node vectors used directly.
    """
    if len(data.train) == 0:
        raise ContractError("empty train split")
    trainable = scorer.params() + (gnn.params() if gnn is not None else [])
    view = view_of(graph) if gnn is not None else None
    row_of = {id: i for i, id in enumerate(graph.nodes)}
    rng = np.random.default_rng(seed)
    adam = AdamState(lr=cfg.lr)
    total = cfg.epochs * math.ceil(len(data.train) / cfg.batch)
    interval = cfg.eval_interval or max(1, math.ceil(total / 13))
    labels = data.train.labels()
    val_labels = data.validation.labels()
    history = []
    best = None

    def rows():
        if gnn is not None:
            return gnn.forward(view, reps).matrix
        return None

    def pair_probs(pairs, matrix):
        out = np.empty(len(pairs))
        for t, (a, b, _) in enumerate(pairs):
            u = matrix[row_of[a]] if matrix is not None else reps[a]
            v = matrix[row_of[b]] if matrix is not None else reps[b]
            out[t] = sigmoid(np.array(scorer.logit(u, v)))
        return out

    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(data.train))
        for start in range(0, len(order), cfg.batch):
            step += 1
            idx = order[start : start + cfg.batch]
            batch = [data.train.pairs[i] for i in idx]
            zero_grads(trainable)
            matrix = rows()
            probs = pair_probs(batch, matrix)
            loss, dy = bce_loss(probs, labels[idx])
            dG = np.zeros_like(matrix) if matrix is not None else None
            for p, g, (a, b, _) in zip(probs, dy, batch):
                u = matrix[row_of[a]] if matrix is not None else reps[a]
                v = matrix[row_of[b]] if matrix is not None else reps[b]
                du, dv = scorer.backward_logit(u, v, float(g) * float(p) * (1.0 - float(p)))
                if dG is not None:
                    dG[row_of[a]] += du
                    dG[row_of[b]] += dv
            if gnn is not None:
                gnn.backward(dG)
            adam.lr = lr_at(cfg.lr, step, cfg.warmup_steps)
            adam_step(trainable, adam)

            if step % interval == 0 or step == total:
                history.append(HistoryRecord(step, "train", loss))
                if len(data.validation):
                    val_probs = pair_probs(data.validation.pairs, rows())
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
    return history


@dataclass(frozen=True)
class AblationResult:
    with_gnn_f1: float
    without_gnn_f1: float
    with_gnn_scores: tuple
    without_gnn_scores: tuple


def run_gnn_ablation(spec: ExperimentSpec, seed: int) -> AblationResult:
    """Same bilinear head on GNN outputs vs raw bi vectors (cam Step 1)."""
    backend = HashingEmbedBackend(dim=spec.dim, seed=spec.embed_seed)
    bi = BiEncoder.create(backend, mode=MODE_CAM)
    splits = make_splits(spec.labeled_pairs, seed=spec.split_seed)
    train_bi(bi, spec.graph, splits, spec.bi_config, seed=seed)
    feats = node_features(bi, spec.graph)
    reps_plain = {id: feats.row(id).copy() for id in spec.graph.nodes}
    row_of = {id: i for i, id in enumerate(spec.graph.nodes)}

    def test_scores(scorer, gnn):
        matrix = gnn.forward(view_of(spec.graph), feats).matrix if gnn is not None else None
        out = []
        for a, b, label in splits.test.pairs:
            u = matrix[row_of[a]] if matrix is not None else reps_plain[a]
            v = matrix[row_of[b]] if matrix is not None else reps_plain[b]
            out.append((float(sigmoid(np.array(scorer.logit(u, v)))), label))
        return tuple(out)

    gnn = GnnNetwork(spec.gnn_kind, spec.dim, seed=seed)
    with_scorer = BilinearPairScorer.create(gnn.d_out)
    train_pair_scorer(with_scorer, spec.graph, splits, spec.cross_config, seed, feats, gnn=gnn)
    with_scores = test_scores(with_scorer, gnn)

    without_scorer = BilinearPairScorer.create(spec.dim)
    train_pair_scorer(without_scorer, spec.graph, splits, spec.cross_config, seed, reps_plain, gnn=None)
    without_scores = test_scores(without_scorer, None)

    with_report = MetricsReport.from_scores(list(with_scores), spec.theta)
    without_report = MetricsReport.from_scores(list(without_scores), spec.theta)
    return AblationResult(with_report.f1, without_report.f1, with_scores, without_scores)
