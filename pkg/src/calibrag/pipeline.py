"""Four-stage decision pipeline: retrieve, rerank, reformulate, decide.

Stage 1 retrieves top-k candidates for the task's query.  Stage 2
reranks them by forecasted confidence (marginalized over a temperature
grid, or taken at a fixed user temperature); retrieval scores play no
further role.  If the best confidence falls below the threshold epsilon
and the reformulation budget allows, Stage 3 rewrites the query once,
repeats retrieval and reranking, and keeps whichever round produced the
higher top confidence (the first round wins ties).  Stage 4 generates
guidance from the chosen document and lets the user endpoint decide at
a fixed decode temperature, with the confidence rendered into the
prompt as a two-decimal percentage.  Traces record every stage; batch
runs isolate per-task failures.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

from .corpus import InvertedIndex, SearchHit, retrieve
from .datagen import TaskPair
from .features import ExtractorConfig, extract
from .forecaster import DEFAULT_TEMPS, ForecasterParams, confidence_at, marginal_confidence
from .gateway import format_confidence, generate_guidance, generate_query, grade, make_decision, reformulate_query


class PipelineError(RuntimeError):
    """Raised for unrecoverable single-task pipeline failures."""


@dataclass(frozen=True)
class PipelineConfig:
    k: int = 20
    epsilon: float = 0.5
    temps: tuple = DEFAULT_TEMPS
    user_t: Optional[float] = None  # fixed decode temperature; disables temps
    reformulate: bool = True
    max_reformulations: int = 1
    grade_answers: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise PipelineError(f"k must be >= 1, got {self.k}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise PipelineError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if not self.temps and self.user_t is None:
            raise PipelineError("need a temperature grid or a fixed user_t")
        if self.max_reformulations < 0:
            raise PipelineError("max_reformulations must be >= 0")

    @property
    def decision_temperature(self) -> float:
        """Decode temperature for the final decision: user_t or grid midpoint."""
        if self.user_t is not None:
            return self.user_t
        return (min(self.temps) + max(self.temps)) / 2.0


@dataclass(frozen=True)
class RankedDoc:
    doc_id: str
    confidence: float


@dataclass
class DecisionTrace:
    task_id: str
    question: str
    stages: list = field(default_factory=list)
    query: str = ""
    query_reformulated: Optional[str] = None
    reformulated: bool = False
    ranked: list = field(default_factory=list)  # [[doc_id, confidence], ...]
    chosen_doc_id: Optional[str] = None
    chosen_confidence: Optional[float] = None
    below_threshold: bool = False
    no_document: bool = False
    guidance: Optional[str] = None
    decision: Optional[str] = None
    correct: Optional[int] = None
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PredictionRecord:
    id: str
    confidence: float
    correct: Optional[int]


class Pipeline:
    """Bundles the index, forecaster, extractor, gateway, and config."""

    def __init__(
        self,
        index: InvertedIndex,
        params: ForecasterParams,
        extractor: ExtractorConfig,
        gateway,
        cfg: PipelineConfig = PipelineConfig(),
    ):
        self.index = index
        self.params = params
        self.extractor = extractor
        self.gateway = gateway
        self.cfg = cfg

    def _confidence(self, query: str, doc_id: str) -> float:
        doc = self.index.document_by_id(doc_id)
        features = extract(self.extractor, query, doc)
        if self.cfg.user_t is not None:
            return confidence_at(self.params, features, self.cfg.user_t)
        return marginal_confidence(self.params, features, self.cfg.temps)

    def rerank(self, query: str, hits: list[SearchHit]) -> list[RankedDoc]:
        """Order candidates by forecasted confidence, descending.

        Retrieval scores are ignored; ties break by doc_id ascending.
        """
        ranked = [RankedDoc(h.doc_id, self._confidence(query, h.doc_id)) for h in hits]
        ranked.sort(key=lambda r: (-r.confidence, r.doc_id))
        return ranked

    def _retrieve_and_rank(self, query: str, trace: DecisionTrace) -> list[RankedDoc]:
        hits = retrieve(self.index, query, self.cfg.k)
        trace.stages.append("retrieve")
        ranked = self.rerank(query, hits)
        trace.stages.append("rerank")
        return ranked

    def run(self, task: TaskPair) -> tuple[DecisionTrace, PredictionRecord]:
        """Run all stages for one task."""
        cfg = self.cfg
        trace = DecisionTrace(task_id=task.id, question=task.question)

        query = task.query or generate_query(self.gateway, task.question)
        trace.query = query
        first = self._retrieve_and_rank(query, trace)

        rounds = [(query, first)]
        budget = cfg.max_reformulations if cfg.reformulate else 0
        needs_retry = (not first) or (first[0].confidence < cfg.epsilon)
        if budget > 0 and needs_retry:
            new_query = reformulate_query(self.gateway, query)
            trace.stages.append("reformulate")
            trace.reformulated = True
            trace.query_reformulated = new_query
            second = self._retrieve_and_rank(new_query, trace)
            rounds.append((new_query, second))

        # The better round is the one with the higher top confidence; the
        # first round wins ties and rounds with no candidates lose.
        best_query, best = max(
            enumerate(rounds),
            key=lambda pair: (
                pair[1][1][0].confidence if pair[1][1] else float("-inf"),
                -pair[0],
            ),
        )[1]
        trace.ranked = [[r.doc_id, r.confidence] for r in best]

        if not best:
            trace.no_document = True
            trace.stages.append("no-document")
            return trace, PredictionRecord(id=task.id, confidence=0.0, correct=None)

        top = best[0]
        trace.chosen_doc_id = top.doc_id
        trace.chosen_confidence = top.confidence
        if top.confidence < cfg.epsilon:
            trace.below_threshold = True

        doc = self.index.document_by_id(top.doc_id)
        guidance = generate_guidance(self.gateway, best_query, doc.title, doc.text)
        trace.guidance = guidance
        trace.stages.append("guidance")

        decision = make_decision(
            self.gateway,
            context=guidance,
            question=task.question,
            confidence=top.confidence,
            temperature=cfg.decision_temperature,
        )
        trace.decision = decision
        trace.stages.append("decide")

        correct: Optional[int] = None
        if cfg.grade_answers and task.answer is not None:
            correct = int(grade(self.gateway, task.question, task.answer, decision))
            trace.correct = correct
            trace.stages.append("grade")

        return trace, PredictionRecord(id=task.id, confidence=top.confidence, correct=correct)

    def batch_run(self, tasks: list[TaskPair]) -> tuple[list[DecisionTrace], list[PredictionRecord]]:
        """Run every task, isolating per-task failures.

        A task that raises produces an error trace and no prediction;
        the remaining tasks still run.
        """
        traces = []
        predictions = []
        for task in tasks:
            try:
                trace, prediction = self.run(task)
            except Exception as exc:  # noqa: BLE001 - isolation is the contract
                trace = DecisionTrace(task_id=task.id, question=task.question, error=str(exc))
                traces.append(trace)
                continue
            traces.append(trace)
            predictions.append(prediction)
        return traces, predictions


def write_predictions(predictions: list[PredictionRecord], path: str) -> None:
    """JSONL of {"id", "confidence", "correct": 0 | 1 | null}."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in predictions:
            fh.write(
                json.dumps({"id": p.id, "confidence": p.confidence, "correct": p.correct})
                + "\n"
            )


def load_predictions(path: str) -> list[PredictionRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                correct = raw["correct"]
                records.append(
                    PredictionRecord(
                        id=str(raw["id"]),
                        confidence=float(raw["confidence"]),
                        correct=None if correct is None else int(correct),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise PipelineError(f"malformed predictions line {lineno}: {exc}") from None
    return records


def write_traces(traces: list[DecisionTrace], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(trace.to_dict()) + "\n")


def rendered_confidence(confidence: float) -> str:
    """How the decision prompt displays confidence, e.g. "81.41%"."""
    return format_confidence(confidence)
