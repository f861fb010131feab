"""Embeddings, the similarity measure, and brute-force top-k retrieval.

The distance between two embeddings is the Euclidean distance divided by the
sum of their norms, which the triangle inequality keeps inside [0, 1];
similarity is one minus that. Note this measure is intentionally not
scale-invariant: similarity(a, 2a) < 1 even though the vectors point the same
way. Do not "fix" it to cosine; downstream thresholds were chosen for this
measure.
"""

from __future__ import annotations

import hashlib
import math
import os
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np
import requests

from .errors import (
    DimensionMismatch,
    EmptyText,
    ProviderMismatch,
    ProviderUnavailable,
)

if TYPE_CHECKING:
    from .corpus import CorpusIndex

DEFAULT_DELTA = 0.65
CLONE_EPS = 1e-9
FALLBACK_DIM = 384

ENV_EMBED_ENDPOINT = "SIMAUDIT_EMBED_ENDPOINT"


class Category(str, Enum):
    CLONE = "clone"
    SIMILAR = "similar"
    DISSIMILAR = "dissimilar"


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    provider_id: str


@dataclass(frozen=True)
class SimilarityMatch:
    entry_id: str
    distance: float
    similarity: float
    category: Category


class FallbackEmbedder:
    """Deterministic offline embedder: hashed character-trigram bag pushed
    through a fixed sparse signed projection into 384 dimensions, then
    L2-normalized.

    The projection row for each trigram is derived from a keyed BLAKE2b digest
    of the trigram itself, so the matrix never exists in memory and the output
    is identical on every platform and every run.
    """

    provider_id = "fallback-trigram-v1"
    dimension = FALLBACK_DIM

    _KEY = b"simaudit-fallback-v1"
    _TAPS = 8  # projection entries per trigram

    def embed_many(self, texts: list[str]) -> list[tuple[float, ...]]:
        return [self._embed_one(t) for t in texts]

    def _embed_one(self, text: str) -> tuple[float, ...]:
        grams: list[str]
        if len(text) < 3:
            grams = [text]
        else:
            grams = [text[i : i + 3] for i in range(len(text) - 2)]
        acc = np.zeros(self.dimension)
        for gram, count in Counter(grams).items():
            digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=3 * self._TAPS,
                                     key=self._KEY).digest()
            for t in range(self._TAPS):
                chunk = digest[3 * t : 3 * t + 3]
                idx = int.from_bytes(chunk[:2], "big") % self.dimension
                sign = 1.0 if chunk[2] & 1 else -1.0
                acc[idx] += sign * count
        norm = float(np.linalg.norm(acc))
        if norm == 0.0:
            # All taps cancelled; park the text on a hash-chosen axis so the
            # result is still deterministic and unit length.
            fallback_idx = int(hashlib.blake2b(text.encode("utf-8"), digest_size=2,
                                               key=self._KEY).hexdigest(), 16) % self.dimension
            acc[fallback_idx] = 1.0
            norm = 1.0
        return tuple((acc / norm).tolist())


class RemoteEmbedder:
    """HTTP embedding provider: POST {"texts": [...]}, expect {"vectors": [[...]]}.

    The endpoint comes from configuration; SIMAUDIT_EMBED_ENDPOINT overrides
    it when set. Dimension is locked in by the first response.
    """

    def __init__(self, endpoint: str, api_key: str | None = None,
                 provider_id: str | None = None, timeout: float = 30.0):
        self.endpoint = os.environ.get(ENV_EMBED_ENDPOINT) or endpoint
        self.api_key = api_key
        self.provider_id = provider_id or f"remote:{self.endpoint}"
        self.timeout = timeout
        self.dimension: int | None = None

    def embed_many(self, texts: list[str]) -> list[list[float]]:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(self.endpoint, json={"texts": texts},
                                 headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            vectors = resp.json()["vectors"]
        except (requests.RequestException, ValueError, KeyError, TypeError) as exc:
            raise ProviderUnavailable(f"embedding endpoint failed: {exc}") from exc
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProviderUnavailable("embedding endpoint returned a malformed batch")
        for vec in vectors:
            if self.dimension is None:
                self.dimension = len(vec)
            if len(vec) != self.dimension:
                raise DimensionMismatch(
                    f"endpoint returned {len(vec)} dims, expected {self.dimension}")
        return vectors


def embed_texts(texts: list[str], provider) -> list[EmbeddingVector]:
    """Embed a batch, retrying a remote failure once before giving up."""
    for text in texts:
        if not text.strip():
            raise EmptyText("cannot embed empty text")
    try:
        raw = provider.embed_many(texts)
    except ProviderUnavailable:
        raw = provider.embed_many(texts)
    out: list[EmbeddingVector] = []
    for vec in raw:
        values = tuple(float(x) for x in vec)
        if not all(np.isfinite(values)):
            raise ProviderUnavailable("provider returned non-finite values")
        declared = getattr(provider, "dimension", None)
        if declared is not None and len(values) != declared:
            raise DimensionMismatch(
                f"provider produced {len(values)} dims, declared {declared}")
        out.append(EmbeddingVector(values=values, provider_id=provider.provider_id))
    return out


def embed(text: str, provider) -> EmbeddingVector:
    return embed_texts([text], provider)[0]


def _norm(values: np.ndarray) -> float:
    # norm(v) squares first, which underflows to 0 for denormal-range
    # components; scale out the magnitude so tiny nonzero vectors keep a
    # nonzero norm.
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    if scale == 0.0 or not math.isfinite(scale):
        return scale
    return scale * float(np.linalg.norm(values / scale))


def similarity(e1: EmbeddingVector, e2: EmbeddingVector) -> tuple[float, float]:
    """Return (distance, similarity) for two embeddings of equal dimension.

    distance = ||a - b|| / (||a|| + ||b||), clamped into [0, 1] against
    last-ulp drift; similarity = 1 - distance. Two zero vectors compare as
    identical (distance 0); one zero vector falls out of the formula as
    maximally distant.
    """
    if len(e1.values) != len(e2.values):
        raise DimensionMismatch(
            f"cannot compare {len(e1.values)}-dim and {len(e2.values)}-dim vectors")
    a = np.asarray(e1.values, dtype=float)
    b = np.asarray(e2.values, dtype=float)
    norm_a = _norm(a)
    norm_b = _norm(b)
    if norm_a == 0.0 and norm_b == 0.0:
        return 0.0, 1.0
    dist = _norm(a - b) / (norm_a + norm_b)
    dist = min(max(dist, 0.0), 1.0)
    return dist, 1.0 - dist


def classify(sim: float, delta: float = DEFAULT_DELTA) -> Category:
    """Clone at similarity 1 (within 1e-9), Similar strictly between delta
    and 1, Dissimilar at or below delta."""
    if sim >= 1.0 - CLONE_EPS:
        return Category.CLONE
    if sim > delta:
        return Category.SIMILAR
    return Category.DISSIMILAR


def query_top_k(target: EmbeddingVector, index: "CorpusIndex", k: int = 3,
                delta: float = DEFAULT_DELTA) -> list[SimilarityMatch]:
    """Exact brute-force top-k by similarity, ties broken by entry id.

    Matches below delta are still returned, categorized Dissimilar, so the
    caller can decide what to do with weak neighbors. An empty index yields an
    empty list.
    """
    if not index.entries:
        return []
    scored: list[tuple[float, str, float]] = []
    for entry in index.entries:
        if entry.embedding is None:
            raise ProviderMismatch(f"entry {entry.entry_id} has no embedding")
        if entry.embedding.provider_id != target.provider_id:
            raise ProviderMismatch(
                f"entry {entry.entry_id} embedded by {entry.embedding.provider_id}, "
                f"query by {target.provider_id}")
        dist, sim = similarity(target, entry.embedding)
        scored.append((sim, entry.entry_id, dist))
    scored.sort(key=lambda t: (-t[0], t[1]))
    return [
        SimilarityMatch(entry_id=eid, distance=dist, similarity=sim,
                        category=classify(sim, delta))
        for sim, eid, dist in scored[:k]
    ]


def embed_index(index: "CorpusIndex", provider) -> None:
    """Embed every entry's normalized source in place and stamp the index
    with the provider id."""
    texts = [e.unit.normalized_source for e in index.entries]
    if texts:
        vectors = embed_texts(texts, provider)
        for entry, vec in zip(index.entries, vectors):
            entry.embedding = vec
    index.meta.embedder_id = provider.provider_id
