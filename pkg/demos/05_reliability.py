"""Calibration metrics and the reliability table on a synthetic stream.

Two streams are compared: one whose outcomes really follow the stated
confidences, and an overconfident copy of it.

Run:  python3 demos/05_reliability.py
"""

import numpy as np

from calibrag.metrics import (
    auroc,
    brier,
    cumulative_accuracy_at_k,
    ece,
    nll,
    reliability_data,
)


def summarize(name, conf, outcomes):
    print(f"{name}:")
    print(f"  ece   {ece(conf, outcomes):.4f}")
    print(f"  brier {brier(conf, outcomes):.4f}")
    print(f"  nll   {nll(conf, outcomes):.4f}")
    print(f"  auroc {auroc(conf, outcomes):.4f}")


def main():
    rng = np.random.default_rng(12)
    conf = rng.random(20_000)
    outcomes = (rng.random(20_000) < conf).astype(int)
    summarize("calibrated stream", conf, outcomes)
    overconfident = np.clip(conf + 0.25, 0.0, 1.0)
    summarize("overconfident copy", overconfident, outcomes)

    print("\nreliability table (calibrated stream):")
    print("  bin          count  mean_conf  mean_acc")
    for stats in reliability_data(conf, outcomes, bins=10):
        if stats.count == 0:
            continue
        print(f"  [{stats.lo:.1f}, {stats.hi:.1f})  {stats.count:6d}"
              f"     {stats.mean_confidence:.3f}     {stats.mean_accuracy:.3f}")

    print("\ncumulative top-k accuracy over ranked outcome lists:")
    rows = [[0, 1, 0], [1, 0, 0], [0, 0, 0], [0, 0, 1]]
    curve = cumulative_accuracy_at_k(rows, 3)
    for k, value in enumerate(curve, start=1):
        print(f"  top-{k}: {value:.2f}")


if __name__ == "__main__":
    main()
