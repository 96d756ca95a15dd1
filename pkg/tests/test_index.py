import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lacd.corpus import ArticleId
from lacd.index import VectorIndex, load_index, save_index
from lacd.numerics import ContractError, cosine_sim
from lacd.persist import PersistError


def _aid(i: int) -> ArticleId:
    return ArticleId("Act", i + 1)


def _filled(n: int, dim: int, seed: int) -> tuple[VectorIndex, np.ndarray]:
    rng = np.random.default_rng(seed)
    vecs = rng.normal(size=(n, dim))
    index = VectorIndex(dim)
    for i in range(n):
        index.upsert(_aid(i), vecs[i])
    return index, vecs


def _oracle(index: VectorIndex, vecs, query, k, exclude=None):
    scored = []
    for i in range(len(vecs)):
        if _aid(i) == exclude:
            continue
        scored.append((_aid(i), cosine_sim(query, vecs[i])))
    scored.sort(key=lambda t: (-t[1], t[0].canonical()))
    return scored[:k]


def test_upsert_replaces():
    index = VectorIndex(2)
    index.upsert(_aid(0), [1.0, 0.0])
    index.upsert(_aid(0), [0.0, 1.0])
    assert len(index) == 1
    assert index.vector(_aid(0)).tolist() == [0.0, 1.0]


def test_upsert_distinct_count():
    index, _ = _filled(3, 4, seed=0)
    assert len(index) == 3


def test_self_retrieval():
    index, vecs = _filled(5, 8, seed=1)
    top = index.topk(vecs[2], 1)
    assert top[0][0] == _aid(2)
    assert top[0][1] == pytest.approx(1.0)


def test_orthonormal_entries():
    index = VectorIndex(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1.0
        index.upsert(_aid(i), e)
    top = index.topk(np.array([0.0, 1.0, 0.0]), 3)
    assert top[0] == (_aid(1), 1.0)
    assert {id for id, _ in top[1:]} == {_aid(0), _aid(2)}


def test_matches_full_sort_oracle():
    index, vecs = _filled(50, 10, seed=2)
    rng = np.random.default_rng(3)
    for _ in range(10):
        q = rng.normal(size=10)
        for k in (1, 5, 10):
            assert index.topk(q, k) == _oracle(index, vecs, q, k)


def test_scores_equal_cosine_sim_exactly():
    index, vecs = _filled(20, 6, seed=4)
    q = np.random.default_rng(5).normal(size=6)
    for id, score in index.topk(q, 20):
        row = int(id.number) - 1
        assert score == cosine_sim(q, vecs[row])  # bit-for-bit, not approx


def test_prefix_property():
    index, vecs = _filled(30, 5, seed=6)
    q = np.random.default_rng(7).normal(size=5)
    prev = index.topk(q, 1)
    for k in range(2, 12):
        cur = index.topk(q, k)
        assert cur[: len(prev)] == prev
        prev = cur


def test_tie_break_ascending_id():
    index = VectorIndex(2)
    v = np.array([1.0, 1.0])
    for i in (3, 1, 2):
        index.upsert(_aid(i), v)
    got = [id for id, _ in index.topk(v, 3)]
    assert got == [_aid(1), _aid(2), _aid(3)]


def test_insertion_order_irrelevant():
    rng = np.random.default_rng(8)
    vecs = rng.normal(size=(10, 4))
    q = rng.normal(size=4)
    a = VectorIndex(4)
    for i in range(10):
        a.upsert(_aid(i), vecs[i])
    b = VectorIndex(4)
    for i in reversed(range(10)):
        b.upsert(_aid(i), vecs[i])
    assert a.topk(q, 5) == b.topk(q, 5)


def test_exclude_query_node():
    index, vecs = _filled(5, 8, seed=9)
    got = index.topk(vecs[0], 5, exclude=_aid(0))
    assert _aid(0) not in [id for id, _ in got]
    assert len(got) == 4


def test_k_exceeding_size_returns_all():
    index, _ = _filled(4, 3, seed=10)
    assert len(index.topk(np.ones(3), 99)) == 4


def test_zero_norm_entries_score_zero():
    index = VectorIndex(3)
    index.upsert(_aid(0), np.zeros(3))
    index.upsert(_aid(1), np.ones(3))
    top = index.topk(np.ones(3), 2)
    assert top[0][0] == _aid(1)
    assert top[1] == (_aid(0), 0.0)


def test_contract_errors():
    index = VectorIndex(3)
    with pytest.raises(ContractError):
        index.topk(np.ones(3), 0)
    with pytest.raises(ContractError):
        index.topk(np.ones(4), 1)
    with pytest.raises(ContractError):
        index.upsert(_aid(0), np.ones(2))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 12))
def test_topk_prefix_property_random(seed, k):
    index, vecs = _filled(12, 3, seed=seed)
    q = np.random.default_rng(seed + 1).normal(size=3)
    assert index.topk(q, k) == _oracle(index, vecs, q, k)


class TestPersistence:
    def test_roundtrip_empty(self, tmp_path):
        index = VectorIndex(4)
        save_index(index, tmp_path / "i.bin")
        loaded = load_index(tmp_path / "i.bin")
        assert loaded.dim == 4
        assert len(loaded) == 0

    def test_roundtrip_bit_exact(self, tmp_path):
        index, vecs = _filled(100, 16, seed=11)
        save_index(index, tmp_path / "i.bin")
        loaded = load_index(tmp_path / "i.bin")
        assert loaded.ids() == index.ids()
        for i in range(100):
            assert np.array_equal(loaded.vector(_aid(i)), vecs[i])
        q = np.random.default_rng(12).normal(size=16)
        assert loaded.topk(q, 7) == index.topk(q, 7)

    def test_corrupted(self, tmp_path):
        index, _ = _filled(3, 2, seed=13)
        path = tmp_path / "i.bin"
        save_index(index, path)
        data = bytearray(path.read_bytes())
        data[-1] ^= 0x01
        path.write_bytes(bytes(data))
        with pytest.raises(PersistError):
            load_index(path)
