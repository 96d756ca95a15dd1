import hashlib
import math

import numpy as np
import pytest

from lacd.backends import HashCrossBackend, HashingEmbedBackend, StubCaseProvider
from lacd.camgraph import build_graph
from lacd.corpus import Article, ArticleId, Corpus
from lacd.gnn import GnnKind, GnnNetwork
from lacd.metrics import roc_auc
from lacd.numerics import ContractError, finite_diff_check, zero_grads
from lacd.retriever import MODE_CAM, MODE_NAIVE, BiEncoder, ProbCalc, RetrieverModels
from lacd.trainer import (
    HistoryRecord,
    PairDataset,
    PairSplits,
    TrainConfig,
    _CrossCache,
    _cross_probs,
    _EmbedCache,
    early_stop_select,
    lr_at,
    make_splits,
    train_bi,
    train_cross,
)

DIM = 64

TEMPLATE = (
    "A person who conducts the standard regulated activity described in the "
    "general provisions of this act shall be liable to the standard fine."
)

_WORDS = [
    "boreal", "cinder", "dapple", "ember", "fathom", "gossamer", "hollow",
    "inkwell", "juniper", "keel", "lantern", "meadow",
]


def toy_world(n_marked=6, n_plain=6):
    """Corpus where pair label 1 means both articles carry the marker token."""
    corpus = Corpus([])
    marked, plain = [], []
    for i in range(n_marked + n_plain):
        id = ArticleId("Toy Act", i + 1)
        has_marker = i < n_marked
        body = f"{TEMPLATE} The {_WORDS[i]} schedule applies to the {_WORDS[i]} registry."
        if has_marker:
            body += " The kestrel clause controls."
        corpus.add(Article(id, f"Provision {i + 1}", body))
        (marked if has_marker else plain).append(id)
    graph = build_graph(corpus, StubCaseProvider(), n_cases=2, seed=0)
    pairs = []
    everything = marked + plain
    for i in range(len(everything)):
        for j in range(i + 1, len(everything)):
            a, b = everything[i], everything[j]
            label = 1 if a in marked and b in marked else 0
            pairs.append((a, b, label))
    return corpus, graph, pairs


@pytest.fixture(scope="module")
def world():
    return toy_world()


def bi_for(mode=MODE_NAIVE, seed=0):
    return BiEncoder.create(HashingEmbedBackend(dim=DIM, seed=seed), mode=mode)


def checksum(arr):
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


class TestPairDataset:
    def test_duplicate_unordered_pair_rejected(self):
        a, b = ArticleId("X", 1), ArticleId("X", 2)
        with pytest.raises(ContractError):
            PairDataset(((a, b, 1), (b, a, 0)), "train")

    def test_self_pair_rejected(self):
        a = ArticleId("X", 1)
        with pytest.raises(ContractError):
            PairDataset(((a, a, 1),), "train")

    def test_bad_label_rejected(self):
        with pytest.raises(ContractError):
            PairDataset(((ArticleId("X", 1), ArticleId("X", 2), 2),), "train")

    def test_bad_split_rejected(self):
        with pytest.raises(ContractError):
            PairDataset((), "dev")


class TestMakeSplits:
    def test_partition_and_stratification(self, world):
        _, _, pairs = world
        splits = make_splits(pairs, seed=0)
        all_out = list(splits.train.pairs) + list(splits.validation.pairs) + list(splits.test.pairs)
        assert sorted(all_out, key=str) == sorted(pairs, key=str)
        for ds in (splits.train, splits.validation):
            labels = {label for _, _, label in ds.pairs}
            assert labels == {0, 1}

    def test_deterministic(self, world):
        _, _, pairs = world
        assert make_splits(pairs, seed=3).train.pairs == make_splits(pairs, seed=3).train.pairs

    def test_bad_fractions(self, world):
        _, _, pairs = world
        with pytest.raises(ContractError):
            make_splits(pairs, fractions=(0.9, 0.2))


class TestTrainConfig:
    def test_stage_defaults(self):
        bi = TrainConfig.bi_defaults()
        assert (bi.lr, bi.epochs, bi.stage) == (1e-3, 10, "bi")
        cross = TrainConfig.cross_defaults()
        assert (cross.lr, cross.epochs, cross.stage) == (5e-5, 3, "cross")
        assert bi.batch == 16 and bi.warmup_steps == 500
        assert bi.seeds == (0, 42, 2024)

    def test_overrides(self):
        cfg = TrainConfig.bi_defaults(epochs=2, lr=0.1)
        assert cfg.epochs == 2 and cfg.lr == 0.1

    @pytest.mark.parametrize("kwargs", [
        {"lr": 0.0, "epochs": 1},
        {"lr": 1e-3, "epochs": -1},
        {"lr": 1e-3, "epochs": 1, "batch": 0},
        {"lr": 1e-3, "epochs": 1, "eval_interval": 0},
        {"lr": 1e-3, "epochs": 1, "stage": "both"},
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ContractError):
            TrainConfig(**kwargs)


class TestWarmup:
    def test_half_at_250(self):
        assert lr_at(1e-3, 250, 500) == 0.5e-3

    def test_full_at_and_past_warmup(self):
        assert lr_at(2.0, 500, 500) == 2.0
        assert lr_at(2.0, 5000, 500) == 2.0

    def test_first_step_tiny(self):
        assert lr_at(1.0, 1, 500) == 1 / 500


class TestEarlyStopSelect:
    @staticmethod
    def hist(aucs):
        return [HistoryRecord(step=10 * (i + 1), split="validation", loss=0.5, roc_auc=a)
                for i, a in enumerate(aucs)]

    def test_single(self):
        records = self.hist([0.7])
        assert early_stop_select(records) is records[0]

    def test_argmax(self):
        records = self.hist([0.6, 0.9, 0.7])
        assert early_stop_select(records).step == 20

    def test_tie_earliest(self):
        records = self.hist([0.8, 0.8])
        assert early_stop_select(records).step == 10

    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            early_stop_select([])
        with pytest.raises(ContractError):
            early_stop_select([HistoryRecord(1, "train", 0.4)])


class TestEmbedCache:
    def test_case_rotation_wraps(self, world):
        _, graph, _ = world
        bi = bi_for(MODE_CAM)
        cache = _EmbedCache(bi, graph)
        id = next(iter(graph.nodes))
        e0, e1, e2 = (cache.raw(id, epoch) for epoch in (0, 1, 2))
        assert not np.array_equal(e0, e1)  # two distinct cases
        np.testing.assert_array_equal(e0, e2)  # epoch 2 wraps back to case 0

    def test_article_mode_ignores_epoch(self, world):
        _, graph, _ = world
        cache = _EmbedCache(bi_for(MODE_NAIVE), graph)
        id = next(iter(graph.nodes))
        np.testing.assert_array_equal(cache.raw(id, 0), cache.raw(id, 5))


class TestTrainBi:
    def test_zero_epochs_unchanged(self, world):
        _, graph, pairs = world
        bi = bi_for()
        before = bi.projection.value.copy()
        _, history = train_bi(bi, graph, make_splits(pairs, 0), TrainConfig(1e-3, epochs=0))
        np.testing.assert_array_equal(bi.projection.value, before)
        assert history == []

    def test_empty_train_split_rejected(self, world):
        _, graph, _ = world
        data = PairSplits(PairDataset((), "train"), PairDataset((), "validation"))
        with pytest.raises(ContractError):
            train_bi(bi_for(), graph, data, TrainConfig(1e-3, epochs=1))

    def test_unknown_pair_id_rejected(self, world):
        _, graph, _ = world
        stranger = (ArticleId("Other Act", 1), ArticleId("Toy Act", 1), 1)
        data = PairSplits(PairDataset((stranger,), "train"), PairDataset((), "validation"))
        with pytest.raises(ContractError):
            train_bi(bi_for(), graph, data, TrainConfig(1e-3, epochs=1))

    def test_separable_toy_reaches_auc_one(self, world):
        _, graph, pairs = world
        splits = make_splits(pairs, seed=0)
        cfg = TrainConfig(lr=1e-2, epochs=10, batch=8, warmup_steps=1, eval_interval=5)
        bi, history = train_bi(bi_for(), graph, splits, cfg, seed=0)
        best = early_stop_select(history)
        assert best.roc_auc == 1.0

    def test_final_params_match_best_checkpoint(self, world):
        _, graph, pairs = world
        splits = make_splits(pairs, seed=0)
        cfg = TrainConfig(lr=1e-2, epochs=4, batch=8, warmup_steps=1, eval_interval=3)
        bi, history = train_bi(bi_for(), graph, splits, cfg, seed=0)
        best = early_stop_select(history)
        scores = []
        cache = _EmbedCache(bi, graph)
        for a, b, label in splits.validation.pairs:
            c = float(np.clip(
                np.dot(bi.encode_embedding(cache.raw(a, 0)), bi.encode_embedding(cache.raw(b, 0))),
                1e-7, 1 - 1e-7))
            scores.append((c, label))
        assert roc_auc(scores) == pytest.approx(best.roc_auc, abs=1e-12)

    def test_deterministic_per_seed(self, world):
        _, graph, pairs = world
        splits = make_splits(pairs, seed=0)
        cfg = TrainConfig(lr=1e-2, epochs=2, batch=8, warmup_steps=1, eval_interval=4)
        sums = []
        for _ in range(2):
            bi, _ = train_bi(bi_for(), graph, splits, cfg, seed=42)
            sums.append(checksum(bi.projection.value))
        assert sums[0] == sums[1]
        other, _ = train_bi(bi_for(), graph, splits, cfg, seed=7)
        assert checksum(other.projection.value) != sums[0]

    def test_history_has_final_step(self, world):
        _, graph, pairs = world
        splits = make_splits(pairs, seed=0)
        cfg = TrainConfig(lr=1e-3, epochs=2, batch=8, warmup_steps=1, eval_interval=4)
        _, history = train_bi(bi_for(), graph, splits, cfg, seed=0)
        total = 2 * math.ceil(len(splits.train) / 8)
        assert history[-1].step == total


def cross_models(world, step1=MODE_NAIVE, gnn_kind=None, seed=0, bi=None):
    _, graph, _ = world
    backend = HashingEmbedBackend(dim=DIM, seed=0)
    bi = bi or BiEncoder.create(backend, mode=step1)
    cross = HashCrossBackend(backend)
    gnn = GnnNetwork(gnn_kind, DIM, seed=seed) if gnn_kind else None
    d_cat = cross.dim_c + (2 * gnn.d_out if gnn else 0)
    return RetrieverModels(bi, cross, ProbCalc.create(d_cat), gnn)


class TestTrainCross:
    def test_initial_loss_is_ln2(self, world):
        _, graph, pairs = world
        splits = make_splits(pairs, seed=0)
        models = cross_models(world, gnn_kind=GnnKind.GCN)
        cfg = TrainConfig.cross_defaults(epochs=1, batch=8, eval_interval=1)
        _, history = train_cross(models, graph, splits, cfg, seed=0)
        first_train = next(r for r in history if r.split == "train")
        assert math.isclose(first_train.loss, math.log(2), rel_tol=1e-12)

    def test_loss_decreases_on_separable_toy(self, world):
        _, graph, pairs = world
        splits = make_splits(pairs, seed=0)
        models = cross_models(world)
        cfg = TrainConfig(lr=5e-2, epochs=8, batch=8, warmup_steps=1, eval_interval=5, stage="cross")
        _, history = train_cross(models, graph, splits, cfg, seed=0)
        train_losses = [r.loss for r in history if r.split == "train"]
        assert train_losses[-1] < train_losses[0]

    def test_bi_frozen(self, world):
        _, graph, pairs = world
        splits = make_splits(pairs, seed=0)
        models = cross_models(world, gnn_kind=GnnKind.GRAPHSAGE)
        before = checksum(models.bi.projection.value)
        cfg = TrainConfig(lr=1e-3, epochs=1, batch=8, warmup_steps=1, stage="cross")
        train_cross(models, graph, splits, cfg, seed=0)
        assert checksum(models.bi.projection.value) == before

    def test_gnn_and_probcalc_move(self, world):
        # no validation split: final params are the last step's, so movement
        # is visible (zero-init probcalc blocks GNN grads at step 1 only)
        _, graph, pairs = world
        splits = make_splits(pairs, seed=0)
        data = PairSplits(splits.train, PairDataset((), "validation"))
        models = cross_models(world, gnn_kind=GnnKind.GCN)
        gnn_before = checksum(models.gnn.params()[0].value)
        cfg = TrainConfig(lr=1e-3, epochs=1, batch=8, warmup_steps=1, stage="cross")
        train_cross(models, graph, data, cfg, seed=0)
        assert checksum(models.gnn.params()[0].value) != gnn_before
        assert np.any(models.probcalc.weight.value != 0.0)

    def test_deterministic_per_seed(self, world):
        _, graph, pairs = world
        splits = make_splits(pairs, seed=0)
        sums = []
        for _ in range(2):
            models = cross_models(world, gnn_kind=GnnKind.GATV2)
            cfg = TrainConfig(lr=1e-3, epochs=1, batch=8, warmup_steps=1, stage="cross")
            train_cross(models, graph, splits, cfg, seed=42)
            sums.append(checksum(np.concatenate(
                [p.value.ravel() for p in models.probcalc.params() + models.gnn.params()])))
        assert sums[0] == sums[1]

    def test_empty_train_rejected(self, world):
        _, graph, _ = world
        models = cross_models(world)
        data = PairSplits(PairDataset((), "train"), PairDataset((), "validation"))
        with pytest.raises(ContractError):
            train_cross(models, graph, data, TrainConfig.cross_defaults())

    @pytest.mark.parametrize("kind", list(GnnKind))
    def test_gradcheck_full_objective(self, kind):
        # 5 articles, the whole batch in one step, grads vs central differences
        corpus = Corpus([])
        for i in range(5):
            corpus.add(Article(ArticleId("Grad Act", i + 1), f"P{i}",
                               f"A person who handles the {_WORDS[i]} registry shall be fined."))
        graph = build_graph(corpus, StubCaseProvider(), n_cases=1, seed=0)
        ids = list(graph.nodes)
        backend = HashingEmbedBackend(dim=12, seed=0)
        bi = BiEncoder.create(backend, mode=MODE_NAIVE)
        cross = HashCrossBackend(backend)
        gnn = GnnNetwork(kind, 12, d_hidden=6, d_out=4, seed=3)
        pc = ProbCalc.create(cross.dim_c + 2 * gnn.d_out)
        rng = np.random.default_rng(5)
        pc.weight.value[:] = rng.normal(size=pc.d_cat) * 0.05
        models = RetrieverModels(bi, cross, pc, gnn)
        cache = _CrossCache(models, graph)
        from lacd.retriever import node_features
        from lacd.gnn import view_of
        models.node_feats = node_features(bi, graph)
        view = view_of(graph)
        row_of = {id: i for i, id in enumerate(graph.nodes)}
        pairs = [(ids[0], ids[1], 1), (ids[1], ids[2], 0), (ids[2], ids[3], 1), (ids[3], ids[4], 0)]
        labels = np.array([float(label) for _, _, label in pairs])
        params = pc.params() + gnn.params()
        from lacd.numerics import bce_loss

        def run():
            zero_grads(params)
            g_matrix = gnn.forward(view, models.node_feats).matrix
            probs, xs = _cross_probs(models, cache, pairs, g_matrix, row_of)
            loss, dy = bce_loss(probs, labels)
            dG = np.zeros_like(g_matrix)
            for x, p, g, (a, b, _) in zip(xs, probs, dy, pairs):
                dlogit = float(g) * float(p) * (1.0 - float(p))
                dx = pc.backward_logit(x, dlogit)
                dG[row_of[a]] += dx[cross.dim_c : cross.dim_c + gnn.d_out]
                dG[row_of[b]] += dx[cross.dim_c + gnn.d_out :]
            gnn.backward(dG)
            return loss

        assert finite_diff_check(run, params, h=1e-5) < 1e-4
