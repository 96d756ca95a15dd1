import pytest
from importlib import resources

from lacd.backends import ProviderError, StubCaseProvider
from lacd.camgraph import (
    CamGraph,
    CamNode,
    GraphBuildError,
    build_graph,
    load_graph,
    neighbors,
    save_graph,
    stats,
)
from lacd.corpus import Article, ArticleId, Corpus, Tier, parse_corpus
from lacd.persist import PersistError


def demo_corpus() -> Corpus:
    text = (resources.files("lacd") / "data" / "demo_corpus.txt").read_text("utf-8")
    return parse_corpus(text)


def _corpus(*bodies: str, act="Alpha Act") -> Corpus:
    return Corpus(
        Article(ArticleId(act, i + 1), f"t{i + 1}", body) for i, body in enumerate(bodies)
    )


class TestBuild:
    def test_demo_corpus_edge_set(self):
        graph = build_graph(demo_corpus(), StubCaseProvider(), n_cases=2)
        assert len(graph) == 4
        a60 = ArticleId("Narcotics Control Act", 60)
        a2 = ArticleId("Narcotics Control Act", 2)
        assert graph.edges == {(a2, a60)}
        # the reference to the absent Article 3 must not surface as an edge
        assert graph.degree(a2) == 1

    def test_no_mentions_no_edges(self):
        graph = build_graph(_corpus("Nothing here.", "Still nothing."), StubCaseProvider())
        assert len(graph) == 2
        assert graph.edges == set()

    def test_mutual_mentions_collapse_to_one_edge(self):
        corpus = _corpus("See Article 2.", "See Article 1.", "Standalone.")
        graph = build_graph(corpus, StubCaseProvider())
        assert graph.edges == {(ArticleId("Alpha Act", 1), ArticleId("Alpha Act", 2))}

    def test_self_mention_dropped(self):
        graph = build_graph(_corpus("This repeats Article 1 itself."), StubCaseProvider())
        assert graph.edges == set()

    def test_tier_filter_default_act_only(self):
        text = (
            "#ACT Alpha Act | year=1990\n##ART 1 | a\nSee Article 1 of the Beta Act.\n"
            "#ACT Beta Act | year=1991 | tier=Decree\n##ART 1 | b\nDecree body.\n"
        )
        graph = build_graph(parse_corpus(text), StubCaseProvider())
        assert set(graph.nodes) == {ArticleId("Alpha Act", 1)}
        assert graph.edges == set()  # target filtered out, so the edge must be too
        unfiltered = build_graph(parse_corpus(text), StubCaseProvider(), tier_filter=None)
        assert len(unfiltered) == 2
        assert len(unfiltered.edges) == 1

    def test_deterministic(self):
        g1 = build_graph(demo_corpus(), StubCaseProvider(), n_cases=2, seed=3)
        g2 = build_graph(demo_corpus(), StubCaseProvider(), n_cases=2, seed=3)
        assert g1 == g2

    def test_empty_corpus_empty_graph(self):
        graph = build_graph(Corpus(), StubCaseProvider())
        assert len(graph) == 0
        assert stats(graph).node_count == 0

    def test_provider_failure_names_article(self):
        class Failing:
            id = "failing"

            def generate(self, article, count, seed):
                raise ProviderError("backend down", retryable=True)

        with pytest.raises(GraphBuildError, match="Alpha Act:1"):
            build_graph(_corpus("Body."), Failing())

    def test_real_cases_override(self):
        corpus = _corpus("Body one.", "Body two.")
        overrides = {ArticleId("Alpha Act", 1): ["an actual adjudicated case"]}
        graph = build_graph(corpus, StubCaseProvider(), real_cases=overrides)
        assert graph.nodes[ArticleId("Alpha Act", 1)].provenance == "real"
        assert graph.nodes[ArticleId("Alpha Act", 1)].cases == ("an actual adjudicated case",)
        assert graph.nodes[ArticleId("Alpha Act", 2)].provenance == "generated"

    def test_node_requires_cases(self):
        with pytest.raises(ValueError, match="at least one case"):
            CamNode(Article(ArticleId("A", 1), "t", "b"), ())


class TestNeighbors:
    def _path_graph(self) -> CamGraph:
        corpus = _corpus("See Article 2.", "See Article 3.", "End.")
        return build_graph(corpus, StubCaseProvider())

    def test_isolated(self):
        graph = build_graph(_corpus("Alone."), StubCaseProvider())
        assert neighbors(graph, ArticleId("Alpha Act", 1)) == []

    def test_two_hops_on_path(self):
        graph = self._path_graph()
        a = ArticleId("Alpha Act", 1)
        assert neighbors(graph, a, 1) == [ArticleId("Alpha Act", 2)]
        assert neighbors(graph, a, 2) == [ArticleId("Alpha Act", 2), ArticleId("Alpha Act", 3)]
        assert set(neighbors(graph, a, 1)) <= set(neighbors(graph, a, 2))

    def test_demo_one_hop(self):
        graph = build_graph(demo_corpus(), StubCaseProvider())
        got = neighbors(graph, ArticleId("Narcotics Control Act", 60), 1)
        assert got == [ArticleId("Narcotics Control Act", 2)]

    def test_unknown_id(self):
        with pytest.raises(KeyError):
            neighbors(self._path_graph(), ArticleId("Nope", 1))

    def test_symmetry(self):
        graph = self._path_graph()
        for a, b in graph.edges:
            assert b in graph.adjacency(a)
            assert a in graph.adjacency(b)


class TestStats:
    def test_two_nodes_one_edge(self):
        graph = build_graph(_corpus("word " * 9 + "Article 2.", "Short body."), StubCaseProvider())
        s = stats(graph)
        assert s.node_count == 2
        assert s.edge_count == 1
        assert s.degree == (1.0, 0.0)
        assert s.article_words[0] == pytest.approx((11 + 2) / 2)

    def test_degree_sum_is_twice_edges(self):
        graph = build_graph(demo_corpus(), StubCaseProvider())
        total = sum(graph.degree(id) for id in graph.nodes)
        assert total == 2 * stats(graph).edge_count


class TestPersistence:
    def test_roundtrip_empty(self, tmp_path):
        graph = CamGraph()
        save_graph(graph, tmp_path / "g.bin")
        assert load_graph(tmp_path / "g.bin") == graph

    def test_roundtrip_demo(self, tmp_path):
        graph = build_graph(demo_corpus(), StubCaseProvider(), n_cases=2)
        path = tmp_path / "demo.bin"
        save_graph(graph, path)
        assert load_graph(path) == graph

    def test_truncated_file_rejected(self, tmp_path):
        graph = build_graph(demo_corpus(), StubCaseProvider())
        path = tmp_path / "g.bin"
        save_graph(graph, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 7])
        with pytest.raises(PersistError):
            load_graph(path)

    def test_flipped_byte_rejected(self, tmp_path):
        graph = build_graph(demo_corpus(), StubCaseProvider())
        path = tmp_path / "g.bin"
        save_graph(graph, path)
        data = bytearray(path.read_bytes())
        data[len(data) // 2] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(PersistError):
            load_graph(path)
