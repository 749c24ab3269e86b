"""Generate synthetic decision supervision and fit the binary forecaster.

A small graded corpus is built so that within each topic group later
documents are genuinely more useful.  The surrogate user converts that
usefulness into noisy success fractions, and the forecaster is trained
to recover the underlying probabilities.

Run:  python3 demos/03_synthetic_training.py   (a few seconds)
"""

import numpy as np

from calibrag.corpus import Document, build_index
from calibrag.datagen import SurrogateUserSpec, TaskPair, build_dataset
from calibrag.features import ExtractorConfig, extract
from calibrag.metrics import ece
from calibrag.training import TrainConfig, TrainingData, train
from calibrag.forecaster import predict


def graded_corpus(groups=5, per_group=10):
    docs = []
    for g in range(groups):
        for j in range(per_group):
            text = " ".join([f"lvl{j}", f"lvl{j}"] + [f"qual{g}"] * (j + 1))
            docs.append(Document(f"d{g}_{j}", f"Group {g} doc {j}", text))
    return docs


def main():
    index = build_index(graded_corpus())
    tasks = [
        TaskPair(f"t{i:03d}", f"question {i}", query=f"group {i % 5} qual{i % 5}")
        for i in range(100)
    ]
    build = build_dataset(tasks, index, SurrogateUserSpec(alpha=3.0), k=10, seed=3)
    print(f"dataset: {build.manifest['n_records']} records, tau={build.manifest['tau']:.3f}")

    cfg = ExtractorConfig(dimension=256)
    queries = {t.id: t.query for t in tasks}
    feats = np.stack([
        extract(cfg, queries[r.query_id], index.document_by_id(r.doc_id))
        for r in build.records
    ])
    temps = np.array([r.t for r in build.records])
    labels = np.array([r.label for r in build.records])

    split = 800
    train_cfg = TrainConfig(learning_rate=0.1, batch_size=64, max_steps=2000,
                            warmup_steps=100, seed=1)
    params, report = train(TrainingData(feats[:split], temps[:split], labels[:split]), train_cfg)
    print(f"trained {report.steps} steps in {report.wall_seconds:.1f}s, "
          f"final loss {report.final_loss:.4f}")

    held = build.records[split:]
    forecast = np.array([predict(params, feats[split + i], r.t) for i, r in enumerate(held)])
    # each soft label is a fraction of 10 draws; unroll for calibration
    conf = np.repeat(forecast, 10)
    outcomes = np.zeros((len(held), 10), dtype=int)
    for i, rec in enumerate(held):
        outcomes[i, : int(round(rec.label * 10))] = 1
    print(f"held-out ece: {ece(conf, outcomes.reshape(-1)):.4f}")

    print("\nsample forecasts (forecast vs observed fraction):")
    for i in (0, 4, 9, 14):
        print(f"  doc={held[i].doc_id}  t={held[i].t:.2f}  "
              f"f={forecast[i]:.3f}  label={held[i].label:.1f}")


if __name__ == "__main__":
    main()
