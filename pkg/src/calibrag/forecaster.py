"""Confidence forecasting heads over frozen pair features.

A decode temperature t is embedded with a fixed Fourier feature map

    PE(t) = [sin(w_1 t), cos(w_1 t), ..., sin(w_N t), cos(w_N t)],
    w_n = 2^n * 2 pi / (t_max - t_min),   n = 1..N,

projected into feature space by a learned matrix, and added to the pair
feature vector.  The binary head applies a logistic unit to produce a
probability of a correct downstream decision; the multi head produces a
softmax histogram over 11 correctness bins (0/10 .. 10/10) that is
collapsed to a scalar by expectation.  Marginal confidence averages the
per-temperature predictions over a grid of decode temperatures.

Models serialize to JSON with full round-trip float precision, so a
saved and reloaded model predicts bit-identically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .seeding import derive_rng

MODEL_VERSION = 1
N_BINS = 11

DEFAULT_TEMPS = (1.0, 1.1, 1.2, 1.3, 1.4, 1.5)


class ModelError(ValueError):
    """Raised for invalid model parameters or model files."""


@dataclass(frozen=True)
class FourierSpec:
    """Temperature encoding: N frequencies over [t_min, t_max]."""

    n_frequencies: int = 6
    t_min: float = 1.0
    t_max: float = 2.0

    def __post_init__(self):
        if self.n_frequencies < 1:
            raise ModelError(f"n_frequencies must be >= 1, got {self.n_frequencies}")
        if not self.t_min < self.t_max:
            raise ModelError(f"need t_min < t_max, got [{self.t_min}, {self.t_max}]")

    @property
    def size(self) -> int:
        return 2 * self.n_frequencies

    def omegas(self) -> np.ndarray:
        base = 2.0 * math.pi / (self.t_max - self.t_min)
        return np.array([2.0**n * base for n in range(1, self.n_frequencies + 1)])


def encode_temperature(spec: FourierSpec, t: float) -> np.ndarray:
    """PE(t) as a length-2N vector, sin/cos interleaved per frequency."""
    if not math.isfinite(t):
        raise ModelError(f"temperature must be finite, got {t}")
    phases = spec.omegas() * t
    out = np.empty(spec.size, dtype=np.float64)
    out[0::2] = np.sin(phases)
    out[1::2] = np.cos(phases)
    return out


def encode_temperatures(spec: FourierSpec, ts: np.ndarray) -> np.ndarray:
    """Row-stacked PE(t) for a batch of temperatures, shape (len(ts), 2N)."""
    ts = np.asarray(ts, dtype=np.float64)
    if not np.all(np.isfinite(ts)):
        raise ModelError("temperatures must be finite")
    phases = ts[:, None] * spec.omegas()[None, :]
    out = np.empty((ts.shape[0], spec.size), dtype=np.float64)
    out[:, 0::2] = np.sin(phases)
    out[:, 1::2] = np.cos(phases)
    return out


@dataclass
class ForecasterParams:
    """Learned head: temperature projection w_p plus a linear readout.

    mode "binary": head_w has shape (h,) and head_b is scalar.
    mode "multi":  head_w has shape (C, h) and head_b has shape (C,).
    """

    mode: str
    dimension: int
    fourier: FourierSpec
    w_p: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray  # () for binary, (C,) for multi

    def __post_init__(self):
        if self.mode not in ("binary", "multi"):
            raise ModelError(f"unknown forecaster mode: {self.mode!r}")
        self.w_p = np.asarray(self.w_p, dtype=np.float64)
        self.head_w = np.asarray(self.head_w, dtype=np.float64)
        self.head_b = np.asarray(self.head_b, dtype=np.float64)
        h, pe = self.dimension, self.fourier.size
        if self.w_p.shape != (h, pe):
            raise ModelError(f"w_p must have shape {(h, pe)}, got {self.w_p.shape}")
        if self.mode == "binary":
            if self.head_w.shape != (h,) or self.head_b.shape != ():
                raise ModelError("binary head needs w of shape (h,) and scalar b")
        else:
            if self.head_w.ndim != 2 or self.head_w.shape[1] != h:
                raise ModelError("multi head needs w of shape (C, h)")
            if self.head_b.shape != (self.head_w.shape[0],):
                raise ModelError("multi head needs b of shape (C,)")

    @property
    def n_classes(self) -> int:
        return 1 if self.mode == "binary" else self.head_w.shape[0]


def init_params(
    mode: str,
    dimension: int,
    fourier: FourierSpec,
    seed: int,
    n_classes: int = N_BINS,
) -> ForecasterParams:
    """Seeded uniform(-0.01, 0.01) initialization of every parameter."""
    rng = derive_rng(seed, "init")
    low, high = -0.01, 0.01
    w_p = rng.uniform(low, high, size=(dimension, fourier.size))
    if mode == "binary":
        head_w = rng.uniform(low, high, size=dimension)
        head_b = np.float64(rng.uniform(low, high))
    else:
        head_w = rng.uniform(low, high, size=(n_classes, dimension))
        head_b = rng.uniform(low, high, size=n_classes)
    return ForecasterParams(mode, dimension, fourier, w_p, head_w, np.asarray(head_b))


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=-1, keepdims=True)


def shifted_features(params: ForecasterParams, features: np.ndarray, t: float) -> np.ndarray:
    """Pair features plus the projected temperature encoding."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (params.dimension,):
        raise ModelError(
            f"feature vector must have shape ({params.dimension},), got {features.shape}"
        )
    return features + params.w_p @ encode_temperature(params.fourier, t)


def predict(params: ForecasterParams, features: np.ndarray, t: float) -> float:
    """Binary-head confidence in (0, 1) at decode temperature t."""
    if params.mode != "binary":
        raise ModelError("predict requires a binary-mode forecaster")
    x = shifted_features(params, features, t)
    return float(sigmoid(float(params.head_w @ x) + float(params.head_b)))


def predict_multi(params: ForecasterParams, features: np.ndarray, t: float) -> np.ndarray:
    """Correctness histogram over C bins; entries sum to 1."""
    if params.mode != "multi":
        raise ModelError("predict_multi requires a multi-mode forecaster")
    x = shifted_features(params, features, t)
    return softmax(params.head_w @ x + params.head_b)


def scalar_confidence(distribution: np.ndarray) -> float:
    """Collapse a histogram to its expected correctness sum_c p_c * c/(C-1)."""
    dist = np.asarray(distribution, dtype=np.float64)
    if dist.ndim != 1 or dist.shape[0] < 2:
        raise ModelError("distribution must be a 1-d vector with >= 2 bins")
    if np.any(dist < 0.0) or abs(float(dist.sum()) - 1.0) > 1e-6:
        raise ModelError("distribution must be non-negative and sum to 1")
    c = dist.shape[0]
    return float(dist @ (np.arange(c) / (c - 1)))


def confidence_at(params: ForecasterParams, features: np.ndarray, t: float) -> float:
    """Scalar confidence at one temperature for either head."""
    if params.mode == "binary":
        return predict(params, features, t)
    return scalar_confidence(predict_multi(params, features, t))


def marginal_confidence(
    params: ForecasterParams, features: np.ndarray, temps=DEFAULT_TEMPS
) -> float:
    """Arithmetic mean of per-temperature confidences over ``temps``.

    Probabilities are averaged, not logits.
    """
    temps = list(temps)
    if not temps:
        raise ModelError("temps must be non-empty")
    values = [confidence_at(params, features, t) for t in temps]
    return float(sum(values) / len(values))


def save_model(params: ForecasterParams, path: str) -> None:
    """Write the model as JSON; floats keep exact round-trip precision."""
    head: dict
    if params.mode == "binary":
        head = {"w": params.head_w.tolist(), "b": float(params.head_b)}
    else:
        head = {"w": params.head_w.tolist(), "b": params.head_b.tolist()}
    payload = {
        "version": MODEL_VERSION,
        "mode": params.mode,
        "h": params.dimension,
        "fourier": {
            "n": params.fourier.n_frequencies,
            "t_min": params.fourier.t_min,
            "t_max": params.fourier.t_max,
        },
        "w_p": params.w_p.tolist(),
        "head": head,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_model(path: str) -> ForecasterParams:
    """Load a model written by save_model; rejects foreign or newer files."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"not a model file: {path} ({exc.msg})") from None
    if not isinstance(payload, dict) or "version" not in payload:
        raise ModelError(f"not a model file: {path}")
    if payload["version"] != MODEL_VERSION:
        raise ModelError(f"unsupported model version {payload['version']} in {path}")
    try:
        fourier = FourierSpec(
            n_frequencies=int(payload["fourier"]["n"]),
            t_min=float(payload["fourier"]["t_min"]),
            t_max=float(payload["fourier"]["t_max"]),
        )
        mode = payload["mode"]
        head = payload["head"]
        return ForecasterParams(
            mode=mode,
            dimension=int(payload["h"]),
            fourier=fourier,
            w_p=np.asarray(payload["w_p"], dtype=np.float64),
            head_w=np.asarray(head["w"], dtype=np.float64),
            head_b=np.asarray(
                head["b"] if mode == "multi" else float(head["b"]), dtype=np.float64
            ),
        )
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed model file {path}: {exc}") from None
