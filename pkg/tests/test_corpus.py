"""Tests for tokenization, index construction, BM25 retrieval and index files.

The retrieval tests lean on a deliberately naive reference scorer written
against the documented formula. The production retriever must agree with it
bit for bit, including the order in which per-term contributions are summed.
"""

import json
import math
import zlib
from collections import Counter

import numpy as np
import pytest

from calibrag.corpus import (
    BM25_B,
    BM25_K1,
    CorpusError,
    Document,
    build_index,
    idf,
    load_corpus,
    load_index,
    retrieve,
    save_index,
    tokenize,
)


def reference_scores(documents, query):
    """Brute-force BM25 over a document list.

    Walks every document for every query term instead of using postings.
    Terms are processed in sorted unique order and contributions are added
    one at a time, so float summation order matches the production path.
    """
    doc_tokens = [tokenize(f"{d.title} {d.text}") for d in documents]
    lengths = [len(toks) for toks in doc_tokens]
    avg_len = sum(lengths) / len(lengths)
    n = len(documents)
    counts = [Counter(toks) for toks in doc_tokens]
    scores = {}
    for term in sorted(set(tokenize(query))):
        df = sum(1 for c in counts if term in c)
        if df == 0:
            continue
        term_idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        for doc, count, length in zip(documents, counts, lengths):
            tf = count.get(term, 0)
            if tf == 0:
                continue
            norm = tf + BM25_K1 * (1.0 - BM25_B + BM25_B * length / avg_len)
            scores[doc.id] = scores.get(doc.id, 0.0) + term_idf * tf * (BM25_K1 + 1.0) / norm
    return scores


def reference_ranking(documents, query, k):
    scores = reference_scores(documents, query)
    ordered = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return ordered[:k]


def random_corpus(rng, n_docs, vocab=12, max_len=30):
    words = [f"w{i}" for i in range(vocab)]
    docs = []
    for i in range(n_docs):
        length = int(rng.integers(1, max_len))
        body = " ".join(rng.choice(words, size=length))
        title = " ".join(rng.choice(words, size=int(rng.integers(0, 4))))
        docs.append(Document(id=f"doc{i:03d}", title=title, text=body))
    return docs


class TestTokenize:
    def test_lowercases_and_splits_punctuation(self):
        assert tokenize("BM25-scores: 3") == ["bm25", "scores", "3"]

    def test_underscore_is_a_separator(self):
        assert tokenize("snake_case id_7") == ["snake", "case", "id", "7"]

    def test_unicode_letters_survive(self):
        assert tokenize("Café au lait!") == ["café", "au", "lait"]

    def test_digits_kept_symbols_dropped(self):
        assert tokenize("a+b=c2, 100%") == ["a", "b", "c2", "100"]

    def test_empty_and_symbol_only(self):
        assert tokenize("") == []
        assert tokenize("!!! --- ***") == []


class TestBuildIndex:
    def test_rejects_empty_corpus(self):
        with pytest.raises(CorpusError, match="empty corpus"):
            build_index([])

    def test_rejects_duplicate_ids(self):
        docs = [Document("a", "", "x"), Document("a", "", "y")]
        with pytest.raises(CorpusError, match="duplicate document id"):
            build_index(docs)

    def test_counts_title_and_body_tokens(self):
        docs = [Document("a", "Red Fox", "the red fox jumps")]
        index = build_index(docs)
        assert index.doc_count == 1
        assert index.doc_lengths == [6]
        assert index.avg_doc_len == 6.0
        assert dict(index.postings["red"]) == {0: 2}

    def test_postings_sorted_by_ordinal(self):
        rng = np.random.default_rng(3)
        docs = random_corpus(rng, 40)
        index = build_index(docs)
        for term, plist in index.postings.items():
            ordinals = [ordinal for ordinal, _ in plist]
            assert ordinals == sorted(ordinals)

    def test_document_by_id_round_trip(self):
        docs = [Document("a", "t", "x"), Document("b", "t", "y")]
        index = build_index(docs)
        assert index.document_by_id("b").text == "y"
        with pytest.raises(CorpusError, match="unknown document id"):
            index.document_by_id("zz")


class TestIdf:
    def test_matches_formula(self):
        docs = [
            Document("a", "", "apple banana"),
            Document("b", "", "apple apple cherry"),
            Document("c", "", "durian"),
        ]
        index = build_index(docs)
        expected = math.log(1.0 + (3 - 2 + 0.5) / (2 + 0.5))
        np.testing.assert_allclose(idf(index, "apple"), expected, rtol=0, atol=0)

    def test_unseen_term_contributes_nothing(self):
        index = build_index([Document("a", "", "apple")])
        assert idf(index, "zebra") == 0.0

    def test_idf_positive_even_when_term_everywhere(self):
        docs = [Document(f"d{i}", "", "common word") for i in range(5)]
        index = build_index(docs)
        assert idf(index, "common") > 0.0


class TestRetrieve:
    def test_two_doc_hand_example(self):
        """Higher term frequency wins when lengths are comparable."""
        docs = [
            Document("d1", "", "apple banana"),
            Document("d2", "", "apple apple cherry"),
        ]
        index = build_index(docs)
        hits = retrieve(index, "apple", 2)
        assert [h.doc_id for h in hits] == ["d2", "d1"]
        term_idf = math.log(1.0 + 0.5 / 2.5)
        norm2 = 2 + 1.2 * (0.25 + 0.75 * 3 / 2.5)
        norm1 = 1 + 1.2 * (0.25 + 0.75 * 2 / 2.5)
        np.testing.assert_allclose(hits[0].score, term_idf * 2 * 2.2 / norm2, rtol=0, atol=0)
        np.testing.assert_allclose(hits[1].score, term_idf * 1 * 2.2 / norm1, rtol=0, atol=0)

    def test_docs_without_query_terms_are_excluded(self):
        docs = [
            Document("d1", "", "apple"),
            Document("d2", "", "banana"),
        ]
        index = build_index(docs)
        hits = retrieve(index, "apple", 10)
        assert [h.doc_id for h in hits] == ["d1"]

    def test_no_matches_gives_empty_list(self):
        index = build_index([Document("d1", "", "apple")])
        assert retrieve(index, "zebra", 5) == []

    def test_k_must_be_positive(self):
        index = build_index([Document("d1", "", "apple")])
        with pytest.raises(CorpusError, match="k must be >= 1"):
            retrieve(index, "apple", 0)

    def test_ties_break_by_doc_id(self):
        docs = [Document(i, "", "same text here") for i in ("m", "b", "z", "a")]
        index = build_index(docs)
        hits = retrieve(index, "same", 4)
        assert [h.doc_id for h in hits] == ["a", "b", "m", "z"]
        assert len({h.score for h in hits}) == 1

    def test_repeated_query_terms_count_once(self):
        docs = [
            Document("d1", "", "apple banana"),
            Document("d2", "", "apple cherry"),
        ]
        index = build_index(docs)
        once = retrieve(index, "apple", 2)
        thrice = retrieve(index, "apple apple apple", 2)
        assert once == thrice

    def test_matches_reference_exactly(self):
        rng = np.random.default_rng(17)
        for trial in range(25):
            docs = random_corpus(rng, int(rng.integers(3, 60)))
            index = build_index(docs)
            n_terms = int(rng.integers(1, 5))
            query = " ".join(rng.choice([f"w{i}" for i in range(14)], size=n_terms))
            k = int(rng.integers(1, 12))
            hits = retrieve(index, query, k)
            expected = reference_ranking(docs, query, k)
            assert [h.doc_id for h in hits] == [doc_id for doc_id, _ in expected]
            got = np.array([h.score for h in hits])
            want = np.array([score for _, score in expected])
            np.testing.assert_array_equal(got, want)

    def test_prefix_property(self):
        rng = np.random.default_rng(23)
        docs = random_corpus(rng, 50)
        index = build_index(docs)
        full = retrieve(index, "w0 w3 w7", 50)
        for k in (1, 2, 5, 17):
            assert retrieve(index, "w0 w3 w7", k) == full[:k]


class TestLoadCorpus:
    def test_reads_jsonl(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        rows = [
            {"id": "a", "title": "T", "text": "apple"},
            {"id": "b", "title": "", "text": "banana"},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        docs = load_corpus(str(path))
        assert [d.id for d in docs] == ["a", "b"]
        assert docs[0].title == "T"

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text(
            '{"id": "a", "title": "", "text": "x"}\n'
            "\n\n"
            '{"id": "b", "title": "", "text": "y"}\n'
        )
        assert len(load_corpus(str(path))) == 2

    def test_bad_json_names_line(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "a", "title": "", "text": "x"}\n{oops\n')
        with pytest.raises(CorpusError, match="line 2"):
            load_corpus(str(path))

    def test_missing_field_names_line(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "a", "title": ""}\n')
        with pytest.raises(CorpusError, match="line 1.*text"):
            load_corpus(str(path))

    def test_non_object_row_rejected(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text("[1, 2]\n")
        with pytest.raises(CorpusError, match="expected an object"):
            load_corpus(str(path))


class TestIndexFiles:
    def build(self):
        rng = np.random.default_rng(5)
        return build_index(random_corpus(rng, 30))

    def test_round_trip_preserves_retrieval(self, tmp_path):
        index = self.build()
        path = str(tmp_path / "corpus.idx")
        save_index(index, path)
        loaded = load_index(path)
        assert loaded.doc_count == index.doc_count
        assert loaded.doc_lengths == index.doc_lengths
        assert loaded.avg_doc_len == index.avg_doc_len
        assert loaded.postings == index.postings
        assert loaded.documents == index.documents
        for query in ("w0", "w1 w2", "w5 w0 w9"):
            np.testing.assert_array_equal(
                np.array(retrieve(loaded, query, 10)),
                np.array(retrieve(index, query, 10)),
            )

    def test_documents_travel_with_index(self, tmp_path):
        index = self.build()
        path = str(tmp_path / "corpus.idx")
        save_index(index, path)
        loaded = load_index(path)
        assert loaded.document_by_id("doc003") == index.document_by_id("doc003")

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.idx"
        path.write_bytes(b"NOTANIDX" + b"\x00" * 16)
        with pytest.raises(CorpusError, match="not an index file"):
            load_index(str(path))

    def test_future_version_rejected(self, tmp_path):
        index = self.build()
        path = tmp_path / "corpus.idx"
        save_index(index, str(path))
        blob = bytearray(path.read_bytes())
        blob[8:12] = (99).to_bytes(4, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(CorpusError, match="unsupported index version 99"):
            load_index(str(path))

    def test_truncated_payload_rejected(self, tmp_path):
        index = self.build()
        path = tmp_path / "corpus.idx"
        save_index(index, str(path))
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 10])
        with pytest.raises(CorpusError, match="truncated index file"):
            load_index(str(path))

    def test_payload_is_zlib_json(self, tmp_path):
        """The container stays inspectable with standard tooling."""
        index = self.build()
        path = tmp_path / "corpus.idx"
        save_index(index, str(path))
        blob = path.read_bytes()
        assert blob[:8] == b"CBRGIDX1"
        length = int.from_bytes(blob[12:20], "little")
        payload = json.loads(zlib.decompress(blob[20 : 20 + length]))
        assert payload["doc_count"] == index.doc_count
        assert set(payload) == {
            "avg_doc_len",
            "doc_count",
            "doc_lengths",
            "documents",
            "postings",
        }
