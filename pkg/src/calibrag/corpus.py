"""Document corpus, tokenization, inverted index, and BM25 retrieval.

The index is built once over a corpus of (id, title, text) documents and
serialized to a single versioned binary file.  The file embeds the raw
documents alongside the postings so that downstream stages (training,
inference) can resolve document text from the index alone.

Scoring uses Okapi BM25 with k1 = 1.2, b = 0.75 and the smoothed
non-negative idf

    idf(term) = ln(1 + (N - df + 0.5) / (df + 0.5))

    score(d, q) = sum over unique query terms of
        idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(d) / avg_len))

Query terms are deduplicated and processed in sorted order, so the
per-document accumulation order is reproducible bit for bit.
"""

from __future__ import annotations

import json
import math
import re
import struct
import zlib
from dataclasses import dataclass
from typing import NamedTuple

BM25_K1 = 1.2
BM25_B = 0.75

_INDEX_MAGIC = b"CBRGIDX1"
_INDEX_VERSION = 1

_TOKEN_RE = re.compile(r"[^\W_]+")


class CorpusError(ValueError):
    """Raised for malformed corpora, queries, or index files."""


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    text: str


class SearchHit(NamedTuple):
    doc_id: str
    score: float


def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that is not a letter or digit.

    Unicode letters and digits are token characters; underscores,
    punctuation, and whitespace all separate.  ``tokenize("BM25-scores: 3")``
    gives ``["bm25", "scores", "3"]``.
    """
    return _TOKEN_RE.findall(text.lower())


@dataclass
class InvertedIndex:
    """Postings plus per-document statistics for BM25 scoring.

    postings maps term -> list of (doc ordinal, term frequency); ordinals
    index into ``id_table`` and ``documents`` in corpus order.
    """

    postings: dict[str, list[tuple[int, int]]]
    doc_lengths: list[int]
    avg_doc_len: float
    doc_count: int
    id_table: list[str]
    documents: list[Document]

    def document_by_id(self, doc_id: str) -> Document:
        cached = getattr(self, "_ordinal_cache", None)
        if cached is None:
            cached = {did: i for i, did in enumerate(self.id_table)}
            self._ordinal_cache = cached
        try:
            return self.documents[cached[doc_id]]
        except KeyError:
            raise CorpusError(f"unknown document id: {doc_id!r}") from None


def build_index(documents: list[Document]) -> InvertedIndex:
    """Build an inverted index over title + text of each document.

    Raises CorpusError on an empty corpus or a duplicated document id.
    """
    if not documents:
        raise CorpusError("cannot build an index over an empty corpus")

    seen: set[str] = set()
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_lengths: list[int] = []
    for ordinal, doc in enumerate(documents):
        if doc.id in seen:
            raise CorpusError(f"duplicate document id: {doc.id!r}")
        seen.add(doc.id)
        tokens = tokenize(f"{doc.title} {doc.text}")
        doc_lengths.append(len(tokens))
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((ordinal, tf))

    n = len(documents)
    return InvertedIndex(
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_len=sum(doc_lengths) / n,
        doc_count=n,
        id_table=[d.id for d in documents],
        documents=list(documents),
    )


def idf(index: InvertedIndex, term: str) -> float:
    """Smoothed idf; 0 for terms absent from the corpus."""
    df = len(index.postings.get(term, ()))
    if df == 0:
        return 0.0
    n = index.doc_count
    return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def retrieve(index: InvertedIndex, query: str, k: int) -> list[SearchHit]:
    """Top ``min(k, matching docs)`` documents by BM25 score.

    Documents matching no query term are excluded.  Ties are broken by
    doc_id ascending, so the result for k is always a prefix of the
    result for k + 1.  Raises CorpusError when k < 1.
    """
    if k < 1:
        raise CorpusError(f"k must be >= 1, got {k}")
    terms = sorted(set(tokenize(query)))
    if not terms:
        return []

    scores: dict[int, float] = {}
    n = index.doc_count
    avg_len = index.avg_doc_len
    for term in terms:
        plist = index.postings.get(term)
        if not plist:
            continue
        df = len(plist)
        term_idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        for ordinal, tf in plist:
            norm = tf + BM25_K1 * (
                1.0 - BM25_B + BM25_B * index.doc_lengths[ordinal] / avg_len
            )
            scores[ordinal] = scores.get(ordinal, 0.0) + term_idf * tf * (BM25_K1 + 1.0) / norm

    ranked = sorted(
        scores.items(), key=lambda item: (-item[1], index.id_table[item[0]])
    )
    return [SearchHit(index.id_table[o], s) for o, s in ranked[:k]]


def load_corpus(path: str) -> list[Document]:
    """Read a JSONL corpus of {"id", "title", "text"} records.

    Raises CorpusError naming the line number for malformed lines.
    """
    documents: list[Document] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"malformed corpus line {lineno}: {exc.msg}") from None
            if not isinstance(record, dict):
                raise CorpusError(f"malformed corpus line {lineno}: expected an object")
            try:
                documents.append(
                    Document(
                        id=str(record["id"]),
                        title=str(record["title"]),
                        text=str(record["text"]),
                    )
                )
            except KeyError as exc:
                raise CorpusError(
                    f"malformed corpus line {lineno}: missing key {exc.args[0]!r}"
                ) from None
    return documents


def save_index(index: InvertedIndex, path: str) -> None:
    """Serialize to a versioned binary file (magic, version, zlib JSON)."""
    payload = {
        "documents": [[d.id, d.title, d.text] for d in index.documents],
        "postings": {t: p for t, p in index.postings.items()},
        "doc_lengths": index.doc_lengths,
        "avg_doc_len": index.avg_doc_len,
        "doc_count": index.doc_count,
    }
    blob = zlib.compress(
        json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8"), 9
    )
    with open(path, "wb") as fh:
        fh.write(_INDEX_MAGIC)
        fh.write(struct.pack("<I", _INDEX_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)


def load_index(path: str) -> InvertedIndex:
    """Load an index written by save_index; rejects foreign or newer files."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(_INDEX_MAGIC) + 12 or raw[: len(_INDEX_MAGIC)] != _INDEX_MAGIC:
        raise CorpusError(f"not an index file: {path}")
    offset = len(_INDEX_MAGIC)
    (version,) = struct.unpack_from("<I", raw, offset)
    if version != _INDEX_VERSION:
        raise CorpusError(f"unsupported index version {version} in {path}")
    (size,) = struct.unpack_from("<Q", raw, offset + 4)
    blob = raw[offset + 12 : offset + 12 + size]
    if len(blob) != size:
        raise CorpusError(f"truncated index file: {path}")
    payload = json.loads(zlib.decompress(blob).decode("utf-8"))

    documents = [Document(*row) for row in payload["documents"]]
    return InvertedIndex(
        postings={t: [tuple(p) for p in pl] for t, pl in payload["postings"].items()},
        doc_lengths=list(payload["doc_lengths"]),
        avg_doc_len=float(payload["avg_doc_len"]),
        doc_count=int(payload["doc_count"]),
        id_table=[d.id for d in documents],
        documents=documents,
    )
