"""Supervision dataset generation, synthetic and live.

Synthetic mode simulates the downstream decision maker with a surrogate:
for a (query, document) pair with within-list normalized retrieval
relevance ``rel`` and decode temperature ``t``, the probability of a
correct decision is

    p*(rel, t) = 0.5 + (sigmoid(alpha * (rel - tau)) - 0.5) / t,

so relevance helps, high temperature pulls toward chance, and p* stays
in (0, 1).  The soft label is the success fraction of R Bernoulli
draws, b = Binomial(R, p*) / R.  Temperatures are sampled uniformly
from [t_min, t_max], one per task unless per-document sampling is
requested.  Every random draw comes from a substream derived from
(seed, task id), so output is reproducible bit for bit regardless of
task scheduling.

Live mode instead asks a generator endpoint for guidance, lets the user
endpoint decide R times at decode temperature t (with a confidence-free
decision prompt), and grades each decision.  Endpoint failures leave a
partial dataset plus a manifest entry describing the failure.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .corpus import InvertedIndex, SearchHit, retrieve
from .gateway import generate_guidance, generate_query, grade, make_decision
from .http_client import GatewayError
from .seeding import derive_rng


class DataError(ValueError):
    """Raised for malformed task or dataset files."""


@dataclass(frozen=True)
class TaskPair:
    id: str
    question: str
    answer: Optional[str] = None
    query: Optional[str] = None


@dataclass(frozen=True)
class SupervisionRecord:
    t: float
    query_id: str
    doc_id: str
    label: float  # success fraction in [0, 1]; label * r is integral
    r: int


@dataclass(frozen=True)
class SurrogateUserSpec:
    alpha: float = 8.0
    tau: Optional[float] = None  # None: resolved to the median relevance
    r_samples: int = 10
    t_min: float = 1.0
    t_max: float = 2.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise DataError(f"alpha must be > 0, got {self.alpha}")
        if self.r_samples < 1:
            raise DataError(f"r_samples must be >= 1, got {self.r_samples}")
        if not self.t_min < self.t_max:
            raise DataError(f"need t_min < t_max, got [{self.t_min}, {self.t_max}]")


@dataclass
class DatasetBuild:
    records: list
    manifest: dict


def sample_temperature(rng: np.random.Generator, t_min: float = 1.0, t_max: float = 2.0) -> float:
    """One decode temperature, uniform over [t_min, t_max]."""
    return float(rng.uniform(t_min, t_max))


def true_probability(spec: SurrogateUserSpec, rel: float, t: float) -> float:
    """Surrogate probability of a correct decision; requires resolved tau."""
    if spec.tau is None:
        raise DataError("tau is unresolved; supply a value or build a dataset first")
    if t <= 0:
        raise DataError(f"temperature must be > 0, got {t}")
    s = 1.0 / (1.0 + math.exp(-spec.alpha * (rel - spec.tau)))
    return 0.5 + (s - 0.5) / t


def sample_label(
    spec: SurrogateUserSpec, rel: float, t: float, rng: np.random.Generator
) -> float:
    """Success fraction of r_samples draws at probability p*(rel, t)."""
    p = true_probability(spec, rel, t)
    return float(rng.binomial(spec.r_samples, p)) / spec.r_samples


def relevance_from_hits(hits: list[SearchHit]) -> np.ndarray:
    """Min-max normalize retrieval scores within one hit list.

    A degenerate list (all scores equal) maps every hit to 0.5.
    """
    scores = np.array([h.score for h in hits], dtype=np.float64)
    if scores.size == 0:
        return scores
    lo, hi = float(scores.min()), float(scores.max())
    if hi == lo:
        return np.full(scores.shape, 0.5)
    return (scores - lo) / (hi - lo)


def build_dataset(
    tasks: list[TaskPair],
    index: InvertedIndex,
    spec: SurrogateUserSpec = SurrogateUserSpec(),
    k: int = 20,
    seed: int = 0,
    t_per_doc: bool = False,
) -> DatasetBuild:
    """Synthetic supervision: one record per (task, retrieved document).

    Tasks with zero retrieval hits are skipped and counted in the
    manifest.  When spec.tau is None it is resolved to the median of all
    normalized relevances and recorded in the manifest.
    """
    staged = []
    n_skipped = 0
    all_rels = []
    for task in tasks:
        hits = retrieve(index, task.query or task.question, k)
        if not hits:
            n_skipped += 1
            continue
        t_rng = derive_rng(seed, f"t:{task.id}")
        if t_per_doc:
            temps = [sample_temperature(t_rng, spec.t_min, spec.t_max) for _ in hits]
        else:
            t = sample_temperature(t_rng, spec.t_min, spec.t_max)
            temps = [t] * len(hits)
        rels = relevance_from_hits(hits)
        all_rels.append(rels)
        staged.append((task, hits, temps, rels))

    tau = spec.tau
    if tau is None:
        if not staged:
            raise DataError("every task had zero hits; cannot resolve tau")
        tau = float(np.median(np.concatenate(all_rels)))
    resolved = SurrogateUserSpec(
        alpha=spec.alpha, tau=tau, r_samples=spec.r_samples, t_min=spec.t_min, t_max=spec.t_max
    )

    records = []
    for task, hits, temps, rels in staged:
        label_rng = derive_rng(seed, f"labels:{task.id}")
        for hit, t, rel in zip(hits, temps, rels):
            records.append(
                SupervisionRecord(
                    t=t,
                    query_id=task.id,
                    doc_id=hit.doc_id,
                    label=sample_label(resolved, float(rel), t, label_rng),
                    r=resolved.r_samples,
                )
            )

    manifest = {
        "mode": "synthetic",
        "seed": seed,
        "k": k,
        "r": resolved.r_samples,
        "alpha": resolved.alpha,
        "tau": tau,
        "t_min": resolved.t_min,
        "t_max": resolved.t_max,
        "t_per_doc": t_per_doc,
        "n_tasks": len(tasks),
        "n_skipped": n_skipped,
        "n_records": len(records),
    }
    return DatasetBuild(records=records, manifest=manifest)


def live_generate(
    tasks: list[TaskPair],
    index: InvertedIndex,
    gateway,
    k: int = 20,
    seed: int = 0,
    r_samples: int = 10,
    t_min: float = 1.0,
    t_max: float = 2.0,
    parse_error_as_incorrect: bool = False,
) -> DatasetBuild:
    """Collect real decision outcomes through the gateway.

    The label for each (task, document) is the graded success fraction
    of r_samples user decisions decoded at the task's sampled
    temperature.  On an endpoint failure the records collected so far
    are returned with the failure recorded in the manifest.
    """
    records = []
    n_skipped = 0
    failure = None
    completed = 0
    for task in tasks:
        try:
            query = task.query or generate_query(gateway, task.question)
            hits = retrieve(index, query, k)
            if not hits:
                n_skipped += 1
                completed += 1
                continue
            t_rng = derive_rng(seed, f"t:{task.id}")
            t = sample_temperature(t_rng, t_min, t_max)
            for hit in hits:
                doc = index.document_by_id(hit.doc_id)
                guidance = generate_guidance(gateway, query, doc.title, doc.text)
                successes = 0
                for _ in range(r_samples):
                    decision = make_decision(
                        gateway, guidance, task.question, confidence=None, temperature=t
                    )
                    if task.answer is None:
                        raise DataError(f"task {task.id!r} has no answer to grade against")
                    if grade(
                        gateway,
                        task.question,
                        task.answer,
                        decision,
                        parse_error_as_incorrect=parse_error_as_incorrect,
                    ):
                        successes += 1
                records.append(
                    SupervisionRecord(
                        t=t,
                        query_id=task.id,
                        doc_id=hit.doc_id,
                        label=successes / r_samples,
                        r=r_samples,
                    )
                )
            completed += 1
        except GatewayError as exc:
            failure = str(exc)
            break

    manifest = {
        "mode": "live",
        "seed": seed,
        "k": k,
        "r": r_samples,
        "t_min": t_min,
        "t_max": t_max,
        "n_tasks": len(tasks),
        "n_skipped": n_skipped,
        "n_records": len(records),
        "completed_tasks": completed,
    }
    if failure is not None:
        manifest["failed"] = True
        manifest["error"] = failure
    return DatasetBuild(records=records, manifest=manifest)


def save_dataset(build: DatasetBuild, path: str, extra_manifest: Optional[dict] = None) -> None:
    """Write records as JSONL plus a sidecar <path>.manifest.json."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in build.records:
            fh.write(
                json.dumps(
                    {
                        "t": rec.t,
                        "query_id": rec.query_id,
                        "doc_id": rec.doc_id,
                        "label": rec.label,
                        "r": rec.r,
                    }
                )
                + "\n"
            )
    manifest = dict(build.manifest)
    if extra_manifest:
        manifest.update(extra_manifest)
    with open(path + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path: str) -> list[SupervisionRecord]:
    """Read a JSONL dataset, validating each record."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                rec = SupervisionRecord(
                    t=float(raw["t"]),
                    query_id=str(raw["query_id"]),
                    doc_id=str(raw["doc_id"]),
                    label=float(raw["label"]),
                    r=int(raw["r"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"malformed dataset line {lineno}: {exc}") from None
            if not 0.0 <= rec.label <= 1.0 or rec.r < 1:
                raise DataError(f"malformed dataset line {lineno}: label/r out of range")
            records.append(rec)
    return records


def load_tasks(path: str) -> list[TaskPair]:
    """Read a JSONL task file of {"id", "question", "answer"?, "query"?}."""
    tasks = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                task = TaskPair(
                    id=str(raw["id"]),
                    question=str(raw["question"]),
                    answer=None if raw.get("answer") is None else str(raw["answer"]),
                    query=None if raw.get("query") is None else str(raw["query"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"malformed task line {lineno}: {exc}") from None
            if task.id in seen:
                raise DataError(f"malformed task line {lineno}: duplicate id {task.id!r}")
            seen.add(task.id)
            tasks.append(task)
    return tasks


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
