"""Case-generation, embedding, and cross-feature providers.

Every provider sits behind a small contract (id + one method) so the
deterministic desk-scale implementations and the remote HTTP ones are
interchangeable.  The stub case provider and the hashing embedder are the
defaults everywhere: they need no network and make every downstream stage
reproducible bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

from .corpus import Article
from .numerics import ContractError

CASE_SEPARATOR = " [CASE] "
_CROSS_SEPARATOR = " [SEP] "


class ProviderError(Exception):
    def __init__(self, message: str, retryable: bool = False, attempts: int = 1):
        super().__init__(message)
        self.retryable = retryable
        self.attempts = attempts


class CaseProvider(Protocol):
    id: str

    def generate(self, article: Article, count: int, seed: int) -> list[str]: ...


class EmbedBackend(Protocol):
    id: str
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class CrossBackend(Protocol):
    id: str
    dim_c: int

    def cross_features(self, text_a: str, text_b: str, v_a: np.ndarray, v_b: np.ndarray) -> np.ndarray: ...


def _digest(*parts: object) -> bytes:
    h = hashlib.blake2b(digest_size=16)
    for p in parts:
        h.update(str(p).encode("utf-8"))
        h.update(b"\x1f")
    return h.digest()


# ---------------------------------------------------------------------------
# Deterministic stub cases

_CONDUCT_RE = re.compile(r"\bwho\s+(.+?)(?:\s+shall\b|\s+is\s+punish|[.;]|$)", re.DOTALL)
_PENALTY_RE = re.compile(r"(?:punished by|liable to|sentenced to)\s+(.+?)(?:[.;]|$)")

_NAMES = ["Kim", "Lee", "Park", "Choi", "Jung", "Kang", "Cho", "Yoon", "Jang", "Lim"]
_PLACES = [
    "Mapo", "Jongno", "Suseong", "Haeundae", "Bupyeong", "Deokjin",
    "Sangdang", "Paldal", "Wansan", "Danwon",
]


@dataclass
class StubCaseProvider:
    """Template narratives seeded from the article's own conduct clause.

    The conduct tokens come straight out of the body ("who <conduct> shall"),
    so near-duplicate articles yield cases that differ exactly where the
    articles differ.  Output depends only on (article, seed, index).
    """

    id: str = "stub"

    def generate(self, article: Article, count: int, seed: int) -> list[str]:
        if count < 1:
            raise ContractError("case count must be >= 1")
        m = _CONDUCT_RE.search(article.body)
        conduct = " ".join(m.group(1).split()) if m else " ".join(article.body.split()[:12])
        pm = _PENALTY_RE.search(article.body)
        penalty = " ".join(pm.group(1).split()) if pm else "the prescribed penalty"
        out = []
        for index in range(count):
            rng = random.Random(_digest(article.id.canonical(), article.body, seed, index))
            name = rng.choice(_NAMES)
            place = rng.choice(_PLACES)
            day = rng.randrange(1, 29)
            out.append(
                f"Case record {index + 1}: on day {day} of the third month, defendant {name}, "
                f"near {place} Station, {conduct}. The prosecution submitted that the conduct "
                f"falls under this provision and sought {penalty}."
            )
        assert len(set(out)) == count  # record index salts every narrative
        return out


# ---------------------------------------------------------------------------
# Hashing embedder


class HashingEmbedBackend:
    """Character-trigram signed feature hashing into `dim` buckets.

    Buckets and signs come from a keyed blake2b digest, so vectors are stable
    across processes and platforms.  Texts shorter than 3 characters have no
    trigrams and embed to the zero vector.
    """

    def __init__(self, dim: int = 256, seed: int = 0):
        if dim < 1:
            raise ContractError("dim must be positive")
        self.dim = dim
        self.seed = seed
        self.id = f"hash{dim}-s{seed}"
        self._key = _digest("hash-embed", seed)

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for i in range(len(text) - 2):
            h = hashlib.blake2b(text[i : i + 3].encode("utf-8"), digest_size=9, key=self._key).digest()
            bucket = int.from_bytes(h[:8], "little") % self.dim
            sign = 1.0 if h[8] & 1 else -1.0
            vec[bucket] += sign
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec


# ---------------------------------------------------------------------------
# Cross features


class HashCrossBackend:
    """concat[hash(text_a + sep + text_b); v_a * v_b; |v_a - v_b|]."""

    def __init__(self, embedder: EmbedBackend):
        self.embedder = embedder
        self.dim_c = 3 * embedder.dim
        self.id = f"cross-{embedder.id}"

    def cross_features(self, text_a: str, text_b: str, v_a: np.ndarray, v_b: np.ndarray) -> np.ndarray:
        v_a = np.asarray(v_a, dtype=np.float64).ravel()
        v_b = np.asarray(v_b, dtype=np.float64).ravel()
        if v_a.shape != (self.embedder.dim,) or v_b.shape != (self.embedder.dim,):
            raise ContractError(
                f"cross_features: vectors must have dim {self.embedder.dim}, got {v_a.shape} and {v_b.shape}"
            )
        joint = self.embedder.embed(text_a + _CROSS_SEPARATOR + text_b)
        return np.concatenate([joint, v_a * v_b, np.abs(v_a - v_b)])


# ---------------------------------------------------------------------------
# Remote providers (chat-completion-style case generation, batch embedding)

REMOTE_KEY_ENV = "LACD_REMOTE_KEY"

DEFAULT_CASE_PROMPT = (
    "Write one short anonymized fact pattern describing conduct to which the "
    "following statutory article applies. Use invented names only. Output just "
    "the narrative."
)


class RemoteCaseProvider:
    def __init__(
        self,
        base_url: str,
        model: str,
        temperature: float = 0.7,
        prompt: str = DEFAULT_CASE_PROMPT,
        client=None,
        max_attempts: int = 3,
    ):
        import httpx

        self.id = f"remote-{model}"
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.temperature = temperature
        self.prompt = prompt
        self.max_attempts = max_attempts
        self._client = client or httpx.Client(timeout=60.0)

    def _headers(self) -> dict:
        key = os.environ.get(REMOTE_KEY_ENV)
        if not key:
            raise ProviderError(f"{REMOTE_KEY_ENV} not set", retryable=False)
        return {"Authorization": f"Bearer {key}"}

    def generate(self, article: Article, count: int, seed: int) -> list[str]:
        if count < 1:
            raise ContractError("case count must be >= 1")
        out = []
        for index in range(count):
            body = {
                "model": self.model,
                "messages": [
                    {"role": "system", "content": self.prompt},
                    {"role": "user", "content": f"[variant {seed}/{index}]\n{article.body}"},
                ],
                "temperature": self.temperature,
            }
            out.append(self._post_with_retries(body))
        return out

    def _post_with_retries(self, body: dict) -> str:
        import httpx

        last = "no attempt made"
        for attempt in range(1, self.max_attempts + 1):
            try:
                resp = self._client.post(
                    f"{self.base_url}/chat/completions", json=body, headers=self._headers()
                )
            except httpx.HTTPError as exc:
                last = f"transport failure: {exc}"
                continue
            if resp.status_code == 200:
                try:
                    return resp.json()["choices"][0]["message"]["content"]
                except (KeyError, IndexError, ValueError) as exc:
                    raise ProviderError(f"malformed completion payload: {exc}", retryable=False, attempts=attempt)
            if resp.status_code in (401, 403):
                raise ProviderError(f"auth rejected ({resp.status_code})", retryable=False, attempts=attempt)
            last = f"status {resp.status_code}"
            if resp.status_code < 500 and resp.status_code != 429:
                raise ProviderError(f"request rejected: {last}", retryable=False, attempts=attempt)
        raise ProviderError(f"generation failed after {self.max_attempts} attempts: {last}", retryable=True, attempts=self.max_attempts)


class RemoteEmbedBackend:
    def __init__(self, base_url: str, dim: int, model: str = "embed", client=None):
        import httpx

        self.id = f"remote-embed-{model}"
        self.dim = dim
        self.base_url = base_url.rstrip("/")
        self.model = model
        self._client = client or httpx.Client(timeout=60.0)

    def embed(self, text: str) -> np.ndarray:
        key = os.environ.get(REMOTE_KEY_ENV)
        if not key:
            raise ProviderError(f"{REMOTE_KEY_ENV} not set", retryable=False)
        resp = self._client.post(
            f"{self.base_url}/embeddings",
            json={"model": self.model, "input": [text]},
            headers={"Authorization": f"Bearer {key}"},
        )
        if resp.status_code != 200:
            raise ProviderError(f"embedding failed: status {resp.status_code}", retryable=resp.status_code >= 500)
        vec = np.asarray(resp.json()["vectors"][0], dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ProviderError(f"embedding dim {vec.shape} != configured {self.dim}", retryable=False)
        return vec


# ---------------------------------------------------------------------------
# Cache


class ProviderCache:
    """Keyed store with optional append-only JSON-lines persistence.

    Values are deterministic functions of their keys, so concurrent writers
    racing on the same key are benign; hits return byte-identical payloads
    (float64 survives the JSON round-trip exactly).
    """

    def __init__(self, path: Optional[str | Path] = None):
        self._store: dict[tuple, object] = {}
        self._path = Path(path) if path else None
        if self._path and self._path.exists():
            with self._path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self._store[tuple(rec["k"])] = rec["v"]

    def get(self, key: tuple):
        return self._store.get(key)

    def put(self, key: tuple, value) -> None:
        self._store[key] = value
        if self._path:
            with self._path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"k": list(key), "v": value}, ensure_ascii=False) + "\n")

    def __len__(self) -> int:
        return len(self._store)


class CachedCaseProvider:
    def __init__(self, provider: CaseProvider, cache: ProviderCache):
        self.provider = provider
        self.cache = cache
        self.id = provider.id

    def generate(self, article: Article, count: int, seed: int) -> list[str]:
        art_key = _digest(article.id.canonical(), article.body).hex()
        out, missing = {}, []
        for index in range(count):
            key = ("case", self.id, art_key, seed, index)
            hit = self.cache.get(key)
            if hit is None:
                missing.append(index)
            else:
                out[index] = hit
        if missing:
            generated = self.provider.generate(article, count, seed)
            for index in missing:
                self.cache.put(("case", self.id, art_key, seed, index), generated[index])
                out[index] = generated[index]
        return [out[i] for i in range(count)]


class CachedEmbedBackend:
    def __init__(self, backend: EmbedBackend, cache: ProviderCache):
        self.backend = backend
        self.cache = cache
        self.id = backend.id
        self.dim = backend.dim

    def embed(self, text: str) -> np.ndarray:
        key = ("embed", self.id, _digest(text).hex())
        hit = self.cache.get(key)
        if hit is not None:
            return np.asarray(hit, dtype=np.float64)
        vec = self.backend.embed(text)
        self.cache.put(key, [float(x) for x in vec])
        return vec
