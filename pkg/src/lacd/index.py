"""Exact top-k cosine retrieval over node vectors.

Brute-force scan with a bounded heap.  Scores are computed with the same
expression as numerics.cosine_sim on the stored rows, so a returned score
always equals an independent cosine_sim call bit for bit.
"""

from __future__ import annotations

import heapq

import numpy as np

from .corpus import ArticleId
from .numerics import ContractError
from .persist import read_container, write_container


class VectorIndex:
    def __init__(self, dim: int):
        if dim < 1:
            raise ContractError("dim must be positive")
        self.dim = dim
        self._ids: list[ArticleId] = []
        self._row_of: dict[ArticleId, int] = {}
        self._rows: list[np.ndarray] = []
        self._norms: list[float] = []
        self._tie_rank: list[int] | None = None  # canonical-order rank, rebuilt lazily

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, id: ArticleId) -> bool:
        return id in self._row_of

    def ids(self) -> list[ArticleId]:
        return list(self._ids)

    def vector(self, id: ArticleId) -> np.ndarray:
        return self._rows[self._row_of[id]].copy()

    def upsert(self, id: ArticleId, vector: np.ndarray) -> None:
        vec = np.asarray(vector, dtype=np.float64).ravel()
        if vec.shape != (self.dim,):
            raise ContractError(f"vector dim {vec.shape} != index dim {self.dim}")
        vec = vec.copy()
        if id in self._row_of:
            row = self._row_of[id]
            self._rows[row] = vec
            self._norms[row] = float(np.linalg.norm(vec))
        else:
            self._row_of[id] = len(self._ids)
            self._ids.append(id)
            self._rows.append(vec)
            self._norms.append(float(np.linalg.norm(vec)))
            self._tie_rank = None

    def _ranks(self) -> list[int]:
        if self._tie_rank is None:
            order = sorted(range(len(self._ids)), key=lambda i: self._ids[i].canonical())
            ranks = [0] * len(self._ids)
            for rank, i in enumerate(order):
                ranks[i] = rank
            self._tie_rank = ranks
        return self._tie_rank

    def topk(
        self, query: np.ndarray, k: int, exclude: ArticleId | None = None
    ) -> list[tuple[ArticleId, float]]:
        """Exact cosine ranking, descending, ties broken by ascending id."""
        if k < 1:
            raise ContractError("k must be positive")
        q = np.asarray(query, dtype=np.float64).ravel()
        if q.shape != (self.dim,):
            raise ContractError(f"query dim {q.shape} != index dim {self.dim}")
        nq = float(np.linalg.norm(q))
        ranks = self._ranks()
        # min-heap of (score, -rank): the worst retained candidate sits on top
        heap: list[tuple[float, int, int]] = []
        for row, id in enumerate(self._ids):
            if id == exclude:
                continue
            nr = self._norms[row]
            score = 0.0 if nq == 0.0 or nr == 0.0 else float(q @ self._rows[row] / (nq * nr))
            item = (score, -ranks[row], row)
            if len(heap) < k:
                heapq.heappush(heap, item)
            elif item > heap[0]:
                heapq.heapreplace(heap, item)
        out = sorted(heap, key=lambda t: (-t[0], -t[1]))
        return [(self._ids[row], score) for score, _, row in out]


_INDEX_KIND = "vecindex"
_INDEX_VERSION = 1


def save_index(index: VectorIndex, path) -> None:
    payload = (
        np.vstack(index._rows).tobytes() if index._rows else b""
    )  # row-major float64, little-endian on all supported platforms
    meta = {
        "dim": index.dim,
        "ids": [id.canonical() for id in index._ids],
        "dtype": "<f8",
    }
    write_container(path, _INDEX_KIND, _INDEX_VERSION, meta, payload)


def load_index(path) -> VectorIndex:
    meta, payload = read_container(path, _INDEX_KIND, _INDEX_VERSION)
    index = VectorIndex(meta["dim"])
    ids = meta["ids"]
    if ids:
        matrix = np.frombuffer(payload, dtype=np.dtype(meta["dtype"])).reshape(len(ids), meta["dim"])
        for canonical, row in zip(ids, matrix):
            index.upsert(ArticleId.from_canonical(canonical), row.astype(np.float64))
    return index
