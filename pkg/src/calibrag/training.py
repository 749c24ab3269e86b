"""Head training with analytic gradients and decoupled weight decay.

Only the forecasting head (readout weights, bias, and the temperature
projection) is trained; the feature extractor stays frozen.  The binary
objective is the mean negative log-likelihood of soft labels

    loss = -mean(b * log f + (1 - b) * log(1 - f)),

with f clamped to [1e-12, 1 - 1e-12] inside the logs.  Its gradient per
record reduces to d loss / d logit = f - b.  The multi objective is mean
categorical cross-entropy against the label's bin, round(b * (C - 1)).

Optimization is AdamW-style: Adam moments plus weight decay applied
directly to the weights (not the biases), with global-norm gradient
clipping, linear warmup, and linear decay to zero at max_steps.  For a
fixed seed the shuffle order, accumulation order, and therefore the
resulting model file are reproducible bit for bit.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from .corpus import Document
from .features import ExtractorConfig, extract
from .forecaster import (
    N_BINS,
    ForecasterParams,
    FourierSpec,
    encode_temperatures,
    init_params,
    sigmoid,
    softmax,
)
from .seeding import derive_rng

PROB_CLAMP = 1e-12

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainError(ValueError):
    """Raised for invalid training configuration or data."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 4
    max_steps: int = 10_000
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    warmup_steps: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise TrainError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise TrainError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_steps < 1:
            raise TrainError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.weight_decay < 0:
            raise TrainError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.grad_clip <= 0:
            raise TrainError(f"grad_clip must be > 0, got {self.grad_clip}")
        if not 0 <= self.warmup_steps < self.max_steps:
            raise TrainError(
                f"need 0 <= warmup_steps < max_steps, got {self.warmup_steps}"
            )

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> "TrainConfig":
        """Build from a parsed TOML [train] table, rejecting unknown keys."""
        known = {
            "learning_rate": float,
            "batch_size": int,
            "max_steps": int,
            "weight_decay": float,
            "grad_clip": float,
            "warmup_steps": int,
            "seed": int,
        }
        kwargs = {}
        for key, value in mapping.items():
            if key not in known:
                raise TrainError(f"unknown train config key: {key!r}")
            kwargs[key] = known[key](value)
        return cls(**kwargs)


@dataclass
class TrainingData:
    """Precomputed arrays: features (n, h), temperatures (n,), labels (n,)."""

    features: np.ndarray
    temperatures: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.temperatures = np.asarray(self.temperatures, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        n = self.features.shape[0]
        if self.features.ndim != 2 or n == 0:
            raise TrainError("features must be a non-empty (n, h) array")
        if self.temperatures.shape != (n,) or self.labels.shape != (n,):
            raise TrainError("temperatures and labels must have shape (n,)")
        if not np.all(np.isfinite(self.features)):
            raise TrainError("features contain non-finite values")
        if not np.all(np.isfinite(self.temperatures)):
            raise TrainError("temperatures contain non-finite values")
        if np.any(self.labels < 0) or np.any(self.labels > 1):
            raise TrainError("labels must lie in [0, 1]")

    def __len__(self) -> int:
        return self.features.shape[0]


def prepare_training_data(
    records,
    queries: Mapping[str, str],
    documents: Mapping[str, Document],
    extractor: ExtractorConfig,
) -> TrainingData:
    """Resolve record ids to text and extract features once per record."""
    feats = []
    temps = []
    labels = []
    for rec in records:
        if rec.query_id not in queries:
            raise TrainError(f"record references unknown query_id: {rec.query_id!r}")
        if rec.doc_id not in documents:
            raise TrainError(f"record references unknown doc_id: {rec.doc_id!r}")
        feats.append(extract(extractor, queries[rec.query_id], documents[rec.doc_id]))
        temps.append(rec.t)
        labels.append(rec.label)
    if not feats:
        raise TrainError("no training records")
    return TrainingData(np.stack(feats), np.array(temps), np.array(labels))


def _forward(params: ForecasterParams, features: np.ndarray, temps: np.ndarray):
    pe = encode_temperatures(params.fourier, temps)
    shifted = features + pe @ params.w_p.T
    return pe, shifted


def loss_and_grad(
    params: ForecasterParams,
    features: np.ndarray,
    temps: np.ndarray,
    labels: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean loss over the batch and exact analytic gradients.

    Returns gradients keyed "head_w", "head_b", "w_p".
    """
    features = np.asarray(features, dtype=np.float64)
    temps = np.asarray(temps, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n = features.shape[0]
    pe, shifted = _forward(params, features, temps)

    if params.mode == "binary":
        logits = shifted @ params.head_w + float(params.head_b)
        f = sigmoid(logits)
        clamped = np.clip(f, PROB_CLAMP, 1.0 - PROB_CLAMP)
        loss = float(
            -np.mean(labels * np.log(clamped) + (1.0 - labels) * np.log(1.0 - clamped))
        )
        dlogit = (f - labels) / n
        grad_shifted = np.outer(dlogit, params.head_w)
        grads = {
            "head_w": shifted.T @ dlogit,
            "head_b": np.asarray(dlogit.sum()),
            "w_p": grad_shifted.T @ pe,
        }
    else:
        c = params.n_classes
        bins = np.rint(labels * (c - 1)).astype(int)
        bins = np.clip(bins, 0, c - 1)
        probs = softmax(shifted @ params.head_w.T + params.head_b)
        picked = np.clip(probs[np.arange(n), bins], PROB_CLAMP, None)
        loss = float(-np.mean(np.log(picked)))
        dlogits = probs.copy()
        dlogits[np.arange(n), bins] -= 1.0
        dlogits /= n
        grad_shifted = dlogits @ params.head_w
        grads = {
            "head_w": dlogits.T @ shifted,
            "head_b": dlogits.sum(axis=0),
            "w_p": grad_shifted.T @ pe,
        }
    return loss, grads


def loss_value(params, features, temps, labels) -> float:
    value, _ = loss_and_grad(params, features, temps, labels)
    return value


def learning_rate_at(cfg: TrainConfig, step: int) -> float:
    """Linear warmup to cfg.learning_rate, then linear decay to zero."""
    if cfg.warmup_steps > 0 and step <= cfg.warmup_steps:
        return cfg.learning_rate * step / cfg.warmup_steps
    span = cfg.max_steps - cfg.warmup_steps
    return cfg.learning_rate * max(0.0, (cfg.max_steps - step) / span)


def _clip_global_norm(grads: dict[str, np.ndarray], clip: float) -> dict[str, np.ndarray]:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.square(g)))
    norm = np.sqrt(total)
    if norm > clip:
        scale = clip / norm
        return {k: g * scale for k, g in grads.items()}
    return grads


@dataclass
class TrainReport:
    mode: str
    n_examples: int
    steps: int
    final_loss: float
    final_learning_rate: float
    loss_curve: list = field(default_factory=list)  # [[step, loss], ...]
    config: dict = field(default_factory=dict)
    wall_seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def save_report(report: TrainReport, path: str) -> None:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")


def train(
    data: TrainingData,
    cfg: TrainConfig,
    mode: str = "binary",
    fourier: FourierSpec | None = None,
    n_classes: int = N_BINS,
    report_every: int = 100,
) -> tuple[ForecasterParams, TrainReport]:
    """Run the optimization loop and return (params, report).

    Raises RuntimeError naming the step if the loss becomes non-finite.
    """
    if fourier is None:
        fourier = FourierSpec()
    dimension = data.features.shape[1]
    params = init_params(mode, dimension, fourier, cfg.seed, n_classes=n_classes)

    weights = {"head_w": params.head_w, "head_b": params.head_b, "w_p": params.w_p}
    decayed = ("head_w", "w_p")
    moment1 = {k: np.zeros_like(v) for k, v in weights.items()}
    moment2 = {k: np.zeros_like(v) for k, v in weights.items()}

    rng = derive_rng(cfg.seed, "train-shuffle")
    n = len(data)
    order = np.arange(n)
    cursor = n  # forces a reshuffle on the first step

    started = time.perf_counter()
    curve: list = []
    loss = float("nan")
    lr = 0.0
    for step in range(1, cfg.max_steps + 1):
        if cursor >= n:
            order = rng.permutation(n)
            cursor = 0
        batch = order[cursor : cursor + cfg.batch_size]
        cursor += cfg.batch_size

        loss, grads = loss_and_grad(
            params, data.features[batch], data.temperatures[batch], data.labels[batch]
        )
        if not np.isfinite(loss):
            raise RuntimeError(f"training diverged at step {step}: non-finite loss")
        grads = _clip_global_norm(grads, cfg.grad_clip)

        lr = learning_rate_at(cfg, step)
        bc1 = 1.0 - ADAM_BETA1**step
        bc2 = 1.0 - ADAM_BETA2**step
        for key, w in weights.items():
            g = grads[key]
            moment1[key] = ADAM_BETA1 * moment1[key] + (1.0 - ADAM_BETA1) * g
            moment2[key] = ADAM_BETA2 * moment2[key] + (1.0 - ADAM_BETA2) * np.square(g)
            update = (moment1[key] / bc1) / (np.sqrt(moment2[key] / bc2) + ADAM_EPS)
            if key in decayed:
                update = update + cfg.weight_decay * w
            weights[key] = w - lr * update

        params = ForecasterParams(
            mode, dimension, fourier, weights["w_p"], weights["head_w"], weights["head_b"]
        )
        if step % report_every == 0 or step == cfg.max_steps:
            curve.append([step, loss])

    report = TrainReport(
        mode=mode,
        n_examples=n,
        steps=cfg.max_steps,
        final_loss=loss,
        final_learning_rate=lr,
        loss_curve=curve,
        config=asdict(cfg),
        wall_seconds=time.perf_counter() - started,
    )
    return params, report
