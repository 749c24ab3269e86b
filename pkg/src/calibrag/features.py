"""Query-document feature extraction.

The default extractor is dependency-free signed feature hashing: the
query and the document (title then body) are joined with a literal
"[SEP]" marker, tokenized, and expanded into unigrams and bigrams.  Each
n-gram is hashed twice with 64-bit FNV-1a under two fixed seeds; the
first hash picks a bucket modulo the dimension and the low bit of the
second picks the sign.  Contributions accumulate and the vector is then
L2-normalized.  An input with no tokens maps to the all-zero vector.

The remote extractor instead calls an embeddings endpoint and
L2-normalizes the returned vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .corpus import Document, tokenize
from .http_client import post_with_retries

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

# Fixed seeds for the bucket hash and the sign hash.
BUCKET_SEED = 0x0
SIGN_SEED = 0x9E3779B97F4A7C15

SEP_TOKEN = "[SEP]"

MIN_DIMENSION = 8


class FeatureError(ValueError):
    """Raised for invalid extractor configuration or remote replies."""


@dataclass(frozen=True)
class ExtractorConfig:
    mode: str = "hashed"  # "hashed" or "remote"
    dimension: int = 256
    base_url: str = ""
    model: str = ""
    timeout: float = 30.0
    max_retries: int = 3

    def __post_init__(self):
        if self.mode not in ("hashed", "remote"):
            raise FeatureError(f"unknown extractor mode: {self.mode!r}")
        if self.dimension < MIN_DIMENSION:
            raise FeatureError(
                f"feature dimension must be >= {MIN_DIMENSION}, got {self.dimension}"
            )
        if self.mode == "remote" and not self.base_url:
            raise FeatureError("remote extractor requires base_url")


def fnv1a64(data: bytes, seed: int = 0) -> int:
    """64-bit FNV-1a, seeded by xor-ing the offset basis."""
    h = (FNV64_OFFSET ^ seed) & _MASK64
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


@lru_cache(maxsize=1 << 20)
def _ngram_hashes(ngram: str) -> tuple[int, int]:
    data = ngram.encode("utf-8")
    return fnv1a64(data, BUCKET_SEED), fnv1a64(data, SIGN_SEED)


def pair_tokens(query: str, doc: Document) -> list[str]:
    """Token stream of query + "[SEP]" + title + body."""
    return tokenize(f"{query} {SEP_TOKEN} {doc.title} {doc.text}")


def hashed_features(cfg: ExtractorConfig, query: str, doc: Document) -> np.ndarray:
    """Signed-hash unigrams and bigrams of the joined pair into R^dimension."""
    tokens = pair_tokens(query, doc)
    vec = np.zeros(cfg.dimension, dtype=np.float64)
    if not tokens:
        return vec

    dim = cfg.dimension
    for gram in tokens:
        h1, h2 = _ngram_hashes(gram)
        vec[h1 % dim] += 1.0 if (h2 & 1) == 0 else -1.0
    for a, b in zip(tokens, tokens[1:]):
        h1, h2 = _ngram_hashes(f"{a} {b}")
        vec[h1 % dim] += 1.0 if (h2 & 1) == 0 else -1.0

    norm = np.linalg.norm(vec)
    if norm > 0.0:
        vec /= norm
    return vec


def remote_features(cfg: ExtractorConfig, query: str, doc: Document, post=None) -> np.ndarray:
    """Fetch an embedding for the joined pair and L2-normalize it."""
    text = f"{query} {SEP_TOKEN} {doc.title} {doc.text}"
    kwargs = {} if post is None else {"post": post}
    body = post_with_retries(
        f"{cfg.base_url.rstrip('/')}/embeddings",
        {"model": cfg.model, "input": text},
        timeout=cfg.timeout,
        max_retries=cfg.max_retries,
        **kwargs,
    )
    try:
        embedding = body["data"][0]["embedding"]
    except (KeyError, IndexError, TypeError):
        raise FeatureError("embeddings reply missing data[0].embedding") from None
    vec = np.asarray(embedding, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != cfg.dimension:
        raise FeatureError(
            f"embedding dimension {vec.shape} does not match configured {cfg.dimension}"
        )
    norm = np.linalg.norm(vec)
    if norm > 0.0:
        vec = vec / norm
    return vec


def extract(cfg: ExtractorConfig, query: str, doc: Document, post=None) -> np.ndarray:
    """Feature vector for a (query, document) pair under ``cfg``."""
    if cfg.mode == "hashed":
        return hashed_features(cfg, query, doc)
    return remote_features(cfg, query, doc, post=post)
