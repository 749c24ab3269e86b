"""Build an in-memory BM25 index, query it, and round trip the index file.

Run:  python3 demos/01_retrieval.py
"""

import tempfile

from calibrag.corpus import Document, build_index, load_index, retrieve, save_index

DOCS = [
    Document("d1", "Basalt", "basalt is a dark volcanic rock rich in iron"),
    Document("d2", "Granite", "granite is a coarse igneous rock with quartz"),
    Document("d3", "Marble", "marble forms when limestone recrystallizes"),
    Document("d4", "Obsidian", "obsidian is volcanic glass, dark and brittle"),
    Document("d5", "Slate", "slate splits into thin sheets and covers roofs"),
]


def main():
    index = build_index(DOCS)
    print(f"indexed {index.doc_count} documents, average length {index.avg_doc_len:.2f}\n")

    for query in ("dark volcanic rock", "quartz", "roofs"):
        hits = retrieve(index, query, k=3)
        print(f"query: {query!r}")
        for rank, hit in enumerate(hits, start=1):
            doc = index.document_by_id(hit.doc_id)
            print(f"  {rank}. {hit.doc_id}  score={hit.score:.4f}  ({doc.title})")
        print()

    with tempfile.NamedTemporaryFile(suffix=".idx") as handle:
        save_index(index, handle.name)
        reloaded = load_index(handle.name)
        again = retrieve(reloaded, "dark volcanic rock", k=1)
        print(f"after save/load the top hit is still {again[0].doc_id}")


if __name__ == "__main__":
    main()
