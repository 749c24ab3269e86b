"""Run the full decision pipeline against the scripted offline gateway.

The corpus contains one topic with graded document quality plus a decoy
token that only appears on low-quality documents.  A decoy query then
retrieves exactly the documents a lexical ranking likes, the forecaster
scores them poorly, and the confidence threshold triggers one query
reformulation before the final decision.

Run:  python3 demos/04_pipeline.py   (a few seconds)
"""

import json

import numpy as np

from calibrag.corpus import Document, build_index
from calibrag.datagen import SurrogateUserSpec, TaskPair, build_dataset
from calibrag.features import ExtractorConfig, extract
from calibrag.gateway import MockGateway
from calibrag.pipeline import Pipeline, PipelineConfig
from calibrag.training import TrainConfig, TrainingData, train


def decoy_corpus():
    docs = []
    for g in range(4):
        for j in range(10):
            parts = [f"lvl{j}", f"lvl{j}"] + [f"qual{g}"] * (j + 1)
            if j <= 3:
                parts += [f"decoy{g}"] * 6
            docs.append(Document(f"d{g}_{j}", f"Group {g} doc {j}", " ".join(parts)))
    return docs


def fit_forecaster(index):
    tasks = [
        TaskPair(f"t{i:03d}", f"question {i}", query=f"group {i % 4} qual{i % 4}")
        for i in range(120)
    ]
    build = build_dataset(tasks, index, SurrogateUserSpec(alpha=3.0), k=10, seed=3)
    cfg = ExtractorConfig(dimension=256)
    queries = {t.id: t.query for t in tasks}
    feats = np.stack([
        extract(cfg, queries[r.query_id], index.document_by_id(r.doc_id))
        for r in build.records
    ])
    temps = np.array([r.t for r in build.records])
    labels = np.array([r.label for r in build.records])
    train_cfg = TrainConfig(learning_rate=0.1, batch_size=64, max_steps=2500,
                            warmup_steps=100, seed=1)
    params, _ = train(TrainingData(feats, temps, labels), train_cfg)
    return params, cfg


def main():
    index = build_index(decoy_corpus())
    params, extractor = fit_forecaster(index)
    pipe = Pipeline(
        index, params, extractor, MockGateway(),
        PipelineConfig(k=10, epsilon=0.5, max_reformulations=1),
    )

    tasks = [
        TaskPair("good", "what is group 2 about?", answer="qual2", query="group 2 qual2"),
        TaskPair("trap", "tell me about decoy1", answer="qual1", query="decoy1"),
    ]
    traces, predictions = pipe.batch_run(tasks)
    for trace, pred in zip(traces, predictions):
        print(f"task {trace.task_id!r}")
        print(f"  stages: {' -> '.join(trace.stages)}")
        print(f"  reformulated: {trace.reformulated}")
        print(f"  chosen: {trace.chosen_doc_id} at confidence {pred.confidence:.3f}")
        print(f"  correct: {pred.correct}")
        print()

    print("one serialized trace:")
    print(json.dumps(traces[0].to_dict(), indent=2)[:400], "...")


if __name__ == "__main__":
    main()
