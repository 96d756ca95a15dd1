"""Retrieve-then-rerank pipelines.

Step 1 embeds the query (article text alone, or article-plus-case node
text), Step 2 takes exact top-k cosine candidates from the vector index,
Step 3 turns each candidate pair into a probability.  The step1/step3 mode
switches give the four pipeline combinations; graph-aware Step 3 fuses
two-layer GNN outputs over the mention graph into the pair features, adding
a virtual node when the query is not part of the graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .backends import CASE_SEPARATOR, CaseProvider, CrossBackend, EmbedBackend
from .camgraph import CamGraph
from .corpus import Article, ArticleId, Corpus, extract_mentions
from .gnn import (
    VIRTUAL_QUERY,
    GnnKind,
    GnnNetwork,
    GraphView,
    NodeFeatures,
    attach_virtual_query,
    view_of,
)
from .index import VectorIndex
from .numerics import ContractError, Param, sigmoid
from .persist import read_container, write_container

MODE_NAIVE = "naive"
MODE_CAM = "cam"

_DRAFT_ACT = "__draft__"


class PipelineConfigError(Exception):
    """The requested combination is missing a required model piece."""


def node_text(article: Article, case: str) -> str:
    """Article text and one case, joined by the literal case separator."""
    return article.body + CASE_SEPARATOR + case


@dataclass
class BiEncoder:
    """Projection head over a frozen embedding backend.

    Trains as a dim x dim linear map; outputs are L2-normalized (zero stays
    zero).  ``mode`` records what text the encoder expects: plain article
    bodies, or node texts carrying a case.
    """

    backend: EmbedBackend
    projection: Param
    mode: str = MODE_NAIVE  # naive: article text; cam: node text

    @classmethod
    def create(cls, backend: EmbedBackend, mode: str = MODE_NAIVE) -> "BiEncoder":
        # identity start: before training, projected = raw backend embedding
        return cls(backend, Param("bi.projection", np.eye(backend.dim)), mode)

    def project(self, embedding: np.ndarray) -> np.ndarray:
        return np.asarray(embedding, dtype=np.float64) @ self.projection.value

    def encode_embedding(self, embedding: np.ndarray) -> np.ndarray:
        z = self.project(embedding)
        norm = np.linalg.norm(z)
        return z / norm if norm > 0 else z

    def encode_text(self, text: str) -> np.ndarray:
        return self.encode_embedding(self.backend.embed(text))

    def encode_node(self, article: Article, case: str) -> np.ndarray:
        if self.mode == MODE_CAM:
            return self.encode_text(node_text(article, case))
        return self.encode_text(article.body)


@dataclass
class ProbCalc:
    """One-layer FFNN: probability = sigmoid(w . x + b)."""

    weight: Param
    bias: Param

    @classmethod
    def create(cls, d_cat: int) -> "ProbCalc":
        # zero start scores every pair 0.5
        return cls(Param("probcalc.weight", np.zeros(d_cat)), Param("probcalc.bias", np.zeros(1)))

    @property
    def d_cat(self) -> int:
        return self.weight.value.shape[0]

    def params(self) -> list[Param]:
        return [self.weight, self.bias]

    def logit(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.shape != self.weight.value.shape:
            raise ContractError(f"probcalc input dim {x.shape[0]} != {self.d_cat}")
        return float(x @ self.weight.value + self.bias.value[0])

    def prob(self, x: np.ndarray) -> float:
        return float(sigmoid(np.array(self.logit(x))))

    def backward_logit(self, x: np.ndarray, dlogit: float) -> np.ndarray:
        """Accumulates param grads for one input; returns dL/dx."""
        x = np.asarray(x, dtype=np.float64).ravel()
        self.weight.grad += dlogit * x
        self.bias.grad += dlogit
        return dlogit * self.weight.value


@dataclass
class RetrieverConfig:
    step1: str = MODE_CAM
    step3: str = MODE_CAM
    k: int = 10
    theta: float = 0.5
    gnn_kind: GnnKind = GnnKind.GATV2

    def __post_init__(self):
        for mode in (self.step1, self.step3):
            if mode not in (MODE_NAIVE, MODE_CAM):
                raise PipelineConfigError(f"unknown mode {mode!r}")
        if self.k < 1:
            raise PipelineConfigError("k must be positive")
        if not (0.0 < self.theta < 1.0):
            raise PipelineConfigError("theta must lie in (0, 1)")

    def label(self) -> str:
        return {
            (MODE_NAIVE, MODE_NAIVE): "naive",
            (MODE_NAIVE, MODE_CAM): "n1+c3",
            (MODE_CAM, MODE_NAIVE): "c1+n3",
            (MODE_CAM, MODE_CAM): "cam",
        }[(self.step1, self.step3)]


@dataclass(frozen=True)
class DraftQuery:
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("draft text must be non-empty")


Query = Union[ArticleId, DraftQuery]


@dataclass(frozen=True)
class CandidateScore:
    id: ArticleId
    probability: float
    accepted: bool


@dataclass(frozen=True)
class RetrievalResult:
    query: str  # canonical article id, or "draft"
    candidates: tuple[CandidateScore, ...]
    k: int
    theta: float
    config: str  # pipeline label

    @property
    def ranked(self) -> list[tuple[ArticleId, float]]:
        return [(c.id, c.probability) for c in self.candidates]

    @property
    def accepted(self) -> list[ArticleId]:
        return [c.id for c in self.candidates if c.accepted]

    def to_json(self) -> str:
        return json.dumps(
            {
                "query": self.query,
                "candidates": [
                    {"id": c.id.canonical(), "probability": c.probability, "accepted": c.accepted}
                    for c in self.candidates
                ],
                "k": self.k,
                "theta": self.theta,
                "config": self.config,
            },
            ensure_ascii=False,
        )


@dataclass
class RetrieverModels:
    bi: BiEncoder
    cross: CrossBackend
    probcalc: ProbCalc
    gnn: Optional[GnnNetwork] = None
    node_feats: Optional[NodeFeatures] = None  # D: bi vectors of node texts


def node_features(bi: BiEncoder, graph: CamGraph, case_index: int = 0) -> NodeFeatures:
    """D: one bi vector per node over its node text (case ``case_index``)."""
    ids, rows = [], []
    for id, node in graph.nodes.items():
        case = node.cases[case_index % len(node.cases)]
        ids.append(id)
        rows.append(bi.encode_text(node_text(node.article, case)))
    dim = bi.backend.dim
    matrix = np.vstack(rows) if rows else np.zeros((0, dim))
    return NodeFeatures(tuple(ids), matrix)


def build_index(bi: BiEncoder, graph: CamGraph, case_index: int = 0) -> VectorIndex:
    """Step-1 vectors for every node, in the encoder's own mode."""
    index = VectorIndex(bi.backend.dim)
    for id, node in graph.nodes.items():
        case = node.cases[case_index % len(node.cases)]
        index.upsert(id, bi.encode_node(node.article, case))
    return index


def _draft_article(draft: DraftQuery) -> Article:
    return Article(ArticleId(_DRAFT_ACT, 1), "draft", draft.text)


def encode_query(
    bi: BiEncoder,
    query: Query,
    provider: Optional[CaseProvider],
    corpus: Optional[Corpus] = None,
    graph: Optional[CamGraph] = None,
    seed: int = 0,
) -> np.ndarray:
    """Step-1 vector for an article or draft query.

    Graph nodes reuse their stored first case in cam mode; drafts get one
    generated on the spot.  Naive mode never touches the provider.
    """
    if isinstance(query, DraftQuery):
        article = _draft_article(query)
    elif corpus is not None:
        article = corpus.get(query)
    elif graph is not None and query in graph.nodes:
        article = graph.nodes[query].article
    else:
        raise KeyError(f"unknown query article {query}")
    if bi.mode == MODE_NAIVE:
        return bi.encode_text(article.body)
    if graph is not None and not isinstance(query, DraftQuery) and query in graph.nodes:
        case = graph.nodes[query].cases[0]
    else:
        if provider is None:
            raise PipelineConfigError("cam-mode query encoding needs a case provider")
        case = provider.generate(article, 1, seed)[0]
    return bi.encode_text(node_text(article, case))


def query_mention_targets(query: Query, corpus: Corpus, graph: CamGraph) -> set[ArticleId]:
    """Graph nodes the query's text references.

    Draft bare references carry no act, so they match their number (and
    suffix) in every act of the graph.
    """
    article = _draft_article(query) if isinstance(query, DraftQuery) else corpus.get(query)
    targets: set[ArticleId] = set()
    for ref in extract_mentions(article, corpus):
        if ref.target.act == _DRAFT_ACT:
            for node_id in graph.nodes:
                if (node_id.number, node_id.suffix) == (ref.target.number, ref.target.suffix):
                    targets.add(node_id)
        elif ref.target in graph.nodes:
            targets.add(ref.target)
    targets.discard(article.id)
    return targets


def gnn_node_outputs(
    net: GnnNetwork,
    graph: CamGraph | GraphView,
    feats: NodeFeatures,
    v_q: Optional[np.ndarray] = None,
    mention_targets: Iterable[ArticleId] = (),
    query_in_graph: bool = True,
) -> NodeFeatures:
    """GNN rows for scoring; adds the virtual query row when needed."""
    view = graph if isinstance(graph, GraphView) else view_of(graph)
    if query_in_graph:
        return net.forward(view, feats)
    if v_q is None:
        raise PipelineConfigError("out-of-graph query needs its step-1 vector for the virtual node")
    aug_view, aug_feats = attach_virtual_query(view, feats, v_q, mention_targets)
    return net.forward(aug_view, aug_feats)


def score_pair(
    mode: str,
    cross: CrossBackend,
    probcalc: ProbCalc,
    text_q: str,
    text_i: str,
    v_q: np.ndarray,
    v_i: np.ndarray,
    g_q: Optional[np.ndarray] = None,
    g_i: Optional[np.ndarray] = None,
) -> float:
    """Pair probability; cam mode appends the two GNN rows to the features."""
    x = cross.cross_features(text_q, text_i, v_q, v_i)
    if mode == MODE_CAM:
        if g_q is None or g_i is None:
            raise PipelineConfigError("cam step 3 needs GNN outputs for both articles")
        x = np.concatenate([x, np.asarray(g_q, dtype=np.float64), np.asarray(g_i, dtype=np.float64)])
    return probcalc.prob(x)


def retrieve(
    config: RetrieverConfig,
    corpus: Corpus,
    graph: CamGraph,
    index: VectorIndex,
    models: RetrieverModels,
    query: Query,
    provider: Optional[CaseProvider] = None,
    seed: int = 0,
) -> RetrievalResult:
    if models.bi.mode != config.step1:
        raise PipelineConfigError(
            f"index encoder mode {models.bi.mode!r} does not match step1 {config.step1!r}"
        )
    v_q = encode_query(models.bi, query, provider, corpus=corpus, graph=graph, seed=seed)
    exclude = query if isinstance(query, ArticleId) else None
    if len(index) == 0:
        label = "draft" if isinstance(query, DraftQuery) else query.canonical()
        return RetrievalResult(label, (), config.k, config.theta, config.label())
    candidates = index.topk(v_q, config.k, exclude=exclude)

    g_rows: Optional[NodeFeatures] = None
    if config.step3 == MODE_CAM:
        if models.gnn is None:
            raise PipelineConfigError("cam step 3 requires a GNN network")
        if models.node_feats is None:
            models.node_feats = node_features(models.bi, graph)
        in_graph = isinstance(query, ArticleId) and query in graph.nodes
        targets = () if in_graph else query_mention_targets(query, corpus, graph)
        g_rows = gnn_node_outputs(
            models.gnn, graph, models.node_feats,
            v_q=v_q, mention_targets=targets, query_in_graph=in_graph,
        )

    if isinstance(query, DraftQuery):
        text_q = query.text
        label = "draft"
    else:
        text_q = corpus.get(query).body
        label = query.canonical()

    scored: list[tuple[ArticleId, float]] = []
    for cand_id, _ in candidates:
        text_i = graph.nodes[cand_id].article.body if cand_id in graph.nodes else corpus.get(cand_id).body
        if config.step3 == MODE_CAM:
            assert g_rows is not None
            g_q = g_rows.row(query) if isinstance(query, ArticleId) and query in graph.nodes else g_rows.row(VIRTUAL_QUERY)
            g_i = g_rows.row(cand_id)
            p = score_pair(MODE_CAM, models.cross, models.probcalc, text_q, text_i, v_q, index.vector(cand_id), g_q, g_i)
        else:
            p = score_pair(MODE_NAIVE, models.cross, models.probcalc, text_q, text_i, v_q, index.vector(cand_id))
        scored.append((cand_id, p))
    scored.sort(key=lambda t: (-t[1], t[0].canonical()))
    out = tuple(CandidateScore(id, p, p > config.theta) for id, p in scored)
    return RetrievalResult(label, out, config.k, config.theta, config.label())


# ---------------------------------------------------------------------------
# Checkpointing: every trainable tensor under a stable name

_CKPT_KIND = "checkpoint"
_CKPT_VERSION = 1


def save_params(params: Sequence[Param], path, extra_meta: Optional[dict] = None) -> None:
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        raise ContractError("duplicate parameter names in checkpoint")
    meta = {
        "tensors": [{"name": p.name, "shape": list(p.value.shape)} for p in params],
        **(extra_meta or {}),
    }
    payload = b"".join(np.ascontiguousarray(p.value, dtype="<f8").tobytes() for p in params)
    write_container(path, _CKPT_KIND, _CKPT_VERSION, meta, payload)


def load_params(params: Sequence[Param], path) -> dict:
    """Fills ``params`` in place by name; returns the checkpoint meta."""
    meta, payload = read_container(path, _CKPT_KIND, _CKPT_VERSION)
    offset = 0
    stored: dict[str, np.ndarray] = {}
    for rec in meta["tensors"]:
        shape = tuple(rec["shape"])
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        block = np.frombuffer(payload, dtype="<f8", count=size, offset=offset).reshape(shape)
        stored[rec["name"]] = block
        offset += size * 8
    for p in params:
        if p.name not in stored:
            raise ContractError(f"checkpoint missing tensor {p.name!r}")
        if stored[p.name].shape != p.value.shape:
            raise ContractError(f"checkpoint tensor {p.name!r} has shape {stored[p.name].shape}, expected {p.value.shape}")
        p.value[...] = stored[p.name]
    return meta
