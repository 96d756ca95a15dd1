"""The case-augmented mention graph.

Nodes pair an article with its generated (or supplied real) case texts;
undirected edges record that either article mentions the other.  Mentions
whose target is missing from the retained corpus, and self-mentions, are
dropped at build time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional

from .backends import CaseProvider, ProviderError
from .corpus import Article, ArticleId, Corpus, Grammar, Tier, extract_mentions
from .persist import read_container, write_container


class GraphBuildError(Exception):
    """Case generation failed for a named article."""


@dataclass(frozen=True)
class CamNode:
    article: Article
    cases: tuple[str, ...]
    provenance: str = "generated"  # or "real"

    def __post_init__(self):
        if not self.cases:
            raise ValueError(f"{self.article.id}: node needs at least one case")
        if self.provenance not in ("generated", "real"):
            raise ValueError(f"unknown provenance {self.provenance!r}")


class CamGraph:
    def __init__(self):
        self.nodes: dict[ArticleId, CamNode] = {}
        self._edges: set[tuple[ArticleId, ArticleId]] = set()
        self._adjacency: dict[ArticleId, list[ArticleId]] = {}

    def add_node(self, node: CamNode) -> None:
        if node.article.id in self.nodes:
            raise ValueError(f"duplicate node {node.article.id}")
        self.nodes[node.article.id] = node
        self._adjacency[node.article.id] = []

    def add_edge(self, a: ArticleId, b: ArticleId) -> None:
        if a == b:
            raise ValueError(f"self-loop on {a}")
        if a not in self.nodes or b not in self.nodes:
            raise ValueError(f"edge endpoint missing: {a} - {b}")
        key = (a, b) if a < b else (b, a)
        if key in self._edges:
            return
        self._edges.add(key)
        self._adjacency[a].append(b)
        self._adjacency[b].append(a)
        self._adjacency[a].sort()
        self._adjacency[b].sort()

    @property
    def edges(self) -> set[tuple[ArticleId, ArticleId]]:
        return set(self._edges)

    def adjacency(self, id: ArticleId) -> list[ArticleId]:
        try:
            return list(self._adjacency[id])
        except KeyError:
            raise KeyError(f"unknown node {id}") from None

    def degree(self, id: ArticleId) -> int:
        return len(self.adjacency(id))

    def __len__(self) -> int:
        return len(self.nodes)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, CamGraph)
            and self.nodes == other.nodes
            and self._edges == other._edges
        )


def build_graph(
    corpus: Corpus,
    provider: CaseProvider,
    n_cases: int = 2,
    tier_filter: Optional[Tier] = Tier.ACT,
    seed: int = 0,
    grammar: str | Grammar = "en",
    aliases: Optional[dict[str, str]] = None,
    real_cases: Optional[dict[ArticleId, list[str]]] = None,
) -> CamGraph:
    """One node per retained article, one undirected edge per live mention pair.

    ``real_cases`` overrides generation for the listed articles (provenance
    "real"); everyone else gets ``n_cases`` provider texts.
    """
    if n_cases < 1:
        raise ValueError("n_cases must be positive")
    graph = CamGraph()
    retained = [a for a in corpus if tier_filter is None or a.tier is tier_filter]
    for article in retained:
        supplied = (real_cases or {}).get(article.id)
        if supplied:
            node = CamNode(article, tuple(supplied), provenance="real")
        else:
            try:
                cases = provider.generate(article, n_cases, seed)
            except ProviderError as exc:
                raise GraphBuildError(f"case generation failed for {article.id}: {exc}") from exc
            node = CamNode(article, tuple(cases))
        graph.add_node(node)
    for article in retained:
        for ref in extract_mentions(article, corpus, grammar=grammar, aliases=aliases):
            if ref.target == article.id or ref.target not in graph.nodes:
                continue
            graph.add_edge(article.id, ref.target)
    return graph


def neighbors(graph: CamGraph, id: ArticleId, hops: int = 1) -> list[ArticleId]:
    """Everything reachable within `hops` edges, excluding the start, sorted."""
    if hops < 1:
        raise ValueError("hops must be positive")
    if id not in graph.nodes:
        raise KeyError(f"unknown node {id}")
    seen = {id}
    frontier = [id]
    for _ in range(hops):
        nxt = []
        for node in frontier:
            for nb in graph.adjacency(node):
                if nb not in seen:
                    seen.add(nb)
                    nxt.append(nb)
        frontier = nxt
        if not frontier:
            break
    return sorted(seen - {id})


@dataclass(frozen=True)
class GraphStats:
    node_count: int
    edge_count: int
    article_words: tuple[float, float]  # (mean, std)
    case_words: tuple[float, float]
    degree: tuple[float, float]


def _mean_std(values: list[int]) -> tuple[float, float]:
    if not values:
        return (0.0, 0.0)
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    return (mean, math.sqrt(var))


def stats(graph: CamGraph) -> GraphStats:
    art_words = [node.article.word_count() for node in graph.nodes.values()]
    case_words = [len(c.split()) for node in graph.nodes.values() for c in node.cases]
    degrees = [graph.degree(id) for id in graph.nodes]
    return GraphStats(
        node_count=len(graph.nodes),
        edge_count=len(graph.edges),
        article_words=_mean_std(art_words),
        case_words=_mean_std(case_words),
        degree=_mean_std(degrees),
    )


# ---------------------------------------------------------------------------
# Persistence

_GRAPH_KIND = "camgraph"
_GRAPH_VERSION = 1

_TIER_CODES = {Tier.ACT: "A", Tier.ENFORCEMENT_DECREE: "D", Tier.ENFORCEMENT_RULE: "R"}
_TIER_FROM_CODE = {v: k for k, v in _TIER_CODES.items()}


def save_graph(graph: CamGraph, path) -> None:
    doc = {
        "nodes": [
            {
                "id": node.article.id.canonical(),
                "title": node.article.title,
                "body": node.article.body,
                "year": node.article.enactment_year,
                "tier": _TIER_CODES[node.article.tier],
                "cases": list(node.cases),
                "provenance": node.provenance,
            }
            for node in graph.nodes.values()
        ],
        "edges": sorted([a.canonical(), b.canonical()] for a, b in graph.edges),
    }
    payload = json.dumps(doc, ensure_ascii=False, sort_keys=True).encode("utf-8")
    write_container(path, _GRAPH_KIND, _GRAPH_VERSION, {"nodes": len(graph.nodes), "edges": len(graph.edges)}, payload)


def load_graph(path) -> CamGraph:
    meta, payload = read_container(path, _GRAPH_KIND, _GRAPH_VERSION)
    doc = json.loads(payload.decode("utf-8"))
    graph = CamGraph()
    for rec in doc["nodes"]:
        article = Article(
            id=ArticleId.from_canonical(rec["id"]),
            title=rec["title"],
            body=rec["body"],
            enactment_year=rec["year"],
            tier=_TIER_FROM_CODE[rec["tier"]],
        )
        graph.add_node(CamNode(article, tuple(rec["cases"]), rec["provenance"]))
    for a, b in doc["edges"]:
        graph.add_edge(ArticleId.from_canonical(a), ArticleId.from_canonical(b))
    return graph
