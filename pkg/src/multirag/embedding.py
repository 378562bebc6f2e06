"""Embedding providers and cosine similarity.

Two provider modes exist: a deterministic test provider (seeded hash of
model id and text, expanded to a fixed-dimension vector) and a remote
client for OpenAI-compatible ``/v1/embeddings`` endpoints. Providers
cache by text — legal because every provider promises that identical
input text yields an identical vector within one instance.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass

import numpy as np

from . import transport
from .errors import DimensionMismatchError, ZeroVectorError


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray
    model_id: str

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("embedding must be a non-empty 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding contains non-finite entries")
        if np.linalg.norm(arr) == 0.0:
            raise ZeroVectorError(f"zero-norm embedding from {self.model_id!r}")
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Dot product over the product of Euclidean norms, clamped to [-1, 1]."""
    va, vb = a.values, b.values
    if va.shape[0] != vb.shape[0]:
        raise DimensionMismatchError(
            f"cosine over mismatched dimensions {va.shape[0]} vs {vb.shape[0]}")
    denom = np.linalg.norm(va) * np.linalg.norm(vb)
    if denom == 0.0:
        raise ZeroVectorError("cosine over a zero-norm vector")
    return float(np.clip(np.dot(va, vb) / denom, -1.0, 1.0))


class _CachingProvider:
    """Shared embed() plumbing: per-text cache plus batch dispatch."""

    model_id: str

    def __init__(self):
        self._cache: dict[str, EmbeddingVector] = {}
        self._lock = threading.Lock()
        self._dim: int | None = None

    def _compute_batch(self, texts: list[str]) -> list[np.ndarray]:
        raise NotImplementedError

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        if not texts:
            raise ValueError("embed() requires at least one text")
        with self._lock:
            missing = [t for t in dict.fromkeys(texts) if t not in self._cache]
        if missing:
            raw = self._compute_batch(missing)
            vectors = {}
            for text, arr in zip(missing, raw):
                vec = EmbeddingVector(values=arr, model_id=self.model_id)
                vectors[text] = vec
            dims = {v.dim for v in vectors.values()}
            with self._lock:
                if self._dim is not None:
                    dims.add(self._dim)
                if len(dims) > 1:
                    raise DimensionMismatchError(
                        f"provider {self.model_id!r} returned mixed dimensions {sorted(dims)}")
                self._dim = dims.pop()
                self._cache.update(vectors)
        with self._lock:
            return [self._cache[t] for t in texts]


class DeterministicProvider(_CachingProvider):
    """Pure test provider: vector = seeded-hash expansion of (model id, text)."""

    def __init__(self, model_id: str, dim: int = 32):
        super().__init__()
        if dim <= 0:
            raise ValueError("dimension must be positive")
        self.model_id = model_id
        self.dim = dim

    def _compute_batch(self, texts: list[str]) -> list[np.ndarray]:
        return [self._vector(t) for t in texts]

    def _vector(self, text: str) -> np.ndarray:
        digest = hashlib.blake2b(
            f"{self.model_id}\x00{text}".encode("utf-8"), digest_size=8).digest()
        seed = int.from_bytes(digest, "big")
        rng = np.random.default_rng(seed)
        vec = rng.standard_normal(self.dim)
        # shift away from the (astronomically unlikely) zero vector
        if np.linalg.norm(vec) < 1e-9:
            vec[0] += 1.0
        return vec


class RemoteProvider(_CachingProvider):
    """OpenAI-compatible embeddings client.

    POST {endpoint}/v1/embeddings with {"model", "input"}; the response
    ``data[i].embedding`` is taken in input order. A batch mixing vector
    dimensions or containing a zero vector is a provider misconfiguration
    and is fatal.
    """

    def __init__(self, model_id: str, endpoint: str, api_key_env: str | None = None,
                 batch_size: int = 64, timeout: float = 30.0,
                 retries: int = 2, backoff: float = 0.5):
        super().__init__()
        self.model_id = model_id
        self.endpoint = endpoint.rstrip("/")
        self.batch_size = batch_size
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._headers = transport.bearer_headers(api_key_env)

    def _compute_batch(self, texts: list[str]) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for start in range(0, len(texts), self.batch_size):
            batch = texts[start:start + self.batch_size]
            body = transport.post_json(
                f"{self.endpoint}/v1/embeddings",
                {"model": self.model_id, "input": batch},
                headers=self._headers, timeout=self.timeout,
                retries=self.retries, backoff=self.backoff)
            data = body.get("data")
            if not isinstance(data, list) or len(data) != len(batch):
                raise DimensionMismatchError(
                    f"provider {self.model_id!r}: expected {len(batch)} embeddings, "
                    f"got {len(data) if isinstance(data, list) else type(data).__name__}")
            out.extend(np.asarray(item["embedding"], dtype=np.float64) for item in data)
        return out
