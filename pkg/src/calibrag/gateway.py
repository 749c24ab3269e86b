"""Chat-endpoint access: prompt templates, rendering, retries, grading.

Three roles are addressed through one interface: "generator" (query
rewriting, guidance), "user" (the downstream decision maker), and
"grader" (answer equivalence judging).  Each role maps to an
OpenAI-compatible chat-completions endpoint.  A deterministic mock
gateway supports fully offline runs: replies are a pure function of the
template name and the rendered prompt.

Every exchange can be appended to a JSONL audit log as
{"ts", "role", "template", "prompt_sha256", "reply"}.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Callable, Mapping, Optional

from .http_client import (
    ConfigurationError,
    GatewayError,
    post_with_retries,
)

GENERATOR = "generator"
USER = "user"
GRADER = "grader"

DECISION_PROMPT = (
    "The task is to answer questions based on a context generated by a language "
    "model in response to a question about relevant information, along with the "
    "model's confidence level in the provided answer.\n"
    "Context: {context}\n"
    "Question: {question}\n"
    "Model Confidence: {confidence}\n"
    "Answer:"
)

# Variant used while collecting supervision, before any confidence exists:
# the decision prompt minus its "Model Confidence:" line.
DECISION_NO_CONFIDENCE_PROMPT = DECISION_PROMPT.replace(
    "Model Confidence: {confidence}\n", ""
)

QUERY_GEN_PROMPT = (
    "You are an automated assistant tasked with rephrasing specific questions "
    "into open-ended queries to encourage detailed exploration and discussion of "
    "the key topics mentioned.\n"
    "Your goal is to prompt someone to write a paragraph exploring the topic "
    "without directly revealing the answer.\n"
    "Examples for Guidance:\n"
    "Example 1:\n"
    "Question 1: Which sea creature is the world's largest invertebrate?\n"
    "Question 2: Write a paragraph about the world's largest invertebrate.\n"
    "...\n"
    "Now, please rephrase the following question:\n"
    "Question 1: {question}\n"
    "Question 2:"
)

GUIDANCE_PROMPT = (
    "Directly state the answer without phrases like 'the correct answer is.\n"
    "Given the retrieved context, answer the question as accurately as possible.\n"
    "Question: {question}\n"
    "Retrieved Context: {title} - {context}\n"
    "Answer: "
)

GRADING_PROMPT = (
    "The problem is: {question}\n"
    "The correct answer for this problem is: {ground-truth}\n"
    "A student submitted the answer: {prediction}\n"
    "The student's answer must be correct and specific but not overcomplete\n"
    "(for example, if they provide two different answers, they did not get the "
    "question right).\n"
    "However, small differences in formatting should not be penalized (for "
    "example, 'New York City' is equivalent to 'NYC').\n"
    "Did the student provide an equivalent answer to the ground truth? Please "
    "answer yes or no without any explanation:"
)

REFORMULATE_PROMPT = (
    "You are a language model assistant who specializes in improving queries for "
    "document search systems. Your task is to highlight and clarify the important "
    "parts of a given query to make it more precise and help retrieve relevant "
    "documents.\n"
    "Please take the original search query below and rewrite it by emphasizing "
    "the important words. Do not add any new information not included in the "
    "original query.\n"
    "Original Retrieval Query: {query}\n"
    "Please generate the new retrieval query without any explanation:"
)

PROMPTS: dict[str, str] = {
    "decision": DECISION_PROMPT,
    "decision_no_confidence": DECISION_NO_CONFIDENCE_PROMPT,
    "query_gen": QUERY_GEN_PROMPT,
    "guidance": GUIDANCE_PROMPT,
    "grading": GRADING_PROMPT,
    "reformulate": REFORMULATE_PROMPT,
}

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z0-9_-]+)\}")


class PromptError(ValueError):
    """Raised when a template placeholder has no value."""


class GradingParseError(RuntimeError):
    """Raised when a grader reply contains neither yes nor no."""


def render_prompt(template: str, variables: Mapping[str, str]) -> str:
    """Substitute every {placeholder}; unknown placeholders are an error.

    Values are inserted verbatim.  Extra keys in ``variables`` are ignored.
    """

    def _sub(match: re.Match) -> str:
        name = match.group(1)
        if name not in variables:
            raise PromptError(f"no value for placeholder {name!r}")
        return str(variables[name])

    return _PLACEHOLDER_RE.sub(_sub, template)


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def format_confidence(confidence: float) -> str:
    """Percentage with two decimals, e.g. 0.8141 -> "81.41%"."""
    return f"{confidence * 100.0:.2f}%"


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    timeout: float = 30.0
    max_retries: int = 3
    temperature: float = 1.0  # decode default when the caller passes None

    def __post_init__(self):
        if not self.base_url:
            raise ConfigurationError("endpoint base_url must be non-empty")
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be >= 0")


class HttpGateway:
    """Routes role-addressed completions to chat endpoints with retries."""

    def __init__(
        self,
        endpoints: Mapping[str, EndpointConfig],
        audit_path: Optional[str] = None,
        post=None,
        sleep=None,
    ):
        self.endpoints = dict(endpoints)
        self.audit_path = audit_path
        self._post = post
        self._sleep = sleep

    def complete(
        self, role: str, prompt: str, temperature: Optional[float] = None, template: str = ""
    ) -> str:
        cfg = self.endpoints.get(role)
        if cfg is None:
            raise ConfigurationError(f"no endpoint configured for role {role!r}")
        if temperature is None:
            temperature = cfg.temperature
        payload = {
            "model": cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        }
        kwargs = {}
        if self._post is not None:
            kwargs["post"] = self._post
        if self._sleep is not None:
            kwargs["sleep"] = self._sleep
        body = post_with_retries(
            f"{cfg.base_url.rstrip('/')}/chat/completions",
            payload,
            timeout=cfg.timeout,
            max_retries=cfg.max_retries,
            **kwargs,
        )
        try:
            reply = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise GatewayError("completion reply missing choices[0].message.content") from None
        _append_audit(self.audit_path, role, template, prompt, reply)
        return reply


class MockGateway:
    """Offline gateway whose replies are pure in (template, prompt).

    ``script`` maps (template name, prompt hash) to a canned reply; any
    unscripted call falls through to ``fallback`` (default: a built-in
    deterministic behavior that echoes the relevant prompt fields).
    """

    def __init__(
        self,
        script: Optional[Mapping[tuple[str, str], str]] = None,
        fallback: Optional[Callable[[str, str, str], str]] = None,
        audit_path: Optional[str] = None,
    ):
        self.script = dict(script or {})
        self.fallback = fallback or default_mock_reply
        self.audit_path = audit_path
        self.calls: list[tuple[str, str]] = []  # (role, template) per call

    def complete(
        self, role: str, prompt: str, temperature: Optional[float] = None, template: str = ""
    ) -> str:
        self.calls.append((role, template))
        reply = self.script.get((template, prompt_hash(prompt)))
        if reply is None:
            reply = self.fallback(role, prompt, template)
        _append_audit(self.audit_path, role, template, prompt, reply)
        return reply


def _between(text: str, start: str, end: Optional[str]) -> Optional[str]:
    i = text.find(start)
    if i < 0:
        return None
    i += len(start)
    if end is None:
        return text[i:].strip()
    j = text.find(end, i)
    return text[i:j].strip() if j >= 0 else text[i:].strip()


def default_mock_reply(role: str, prompt: str, template: str) -> str:
    """Deterministic stand-in replies derived from the prompt itself."""
    if template == "query_gen":
        question = _between(prompt, "Now, please rephrase the following question:\nQuestion 1: ", "\n")
        if question is not None:
            return f"Write a paragraph about {question.rstrip('?')}."
    elif template == "guidance":
        context = _between(prompt, "Retrieved Context: ", "\nAnswer:")
        if context is not None:
            return context
    elif template in ("decision", "decision_no_confidence"):
        context = _between(prompt, "Context: ", "\nQuestion:")
        if context is not None:
            return context
    elif template == "grading":
        truth = _between(prompt, "The correct answer for this problem is: ", "\n")
        prediction = _between(prompt, "A student submitted the answer: ", "\n")
        if truth is not None and prediction is not None:
            return "yes" if truth.lower() in prediction.lower() else "no"
    elif template == "reformulate":
        query = _between(prompt, "Original Retrieval Query: ", "\n")
        if query is not None:
            return query
    return prompt_hash(prompt)[:16]


def _append_audit(path: Optional[str], role: str, template: str, prompt: str, reply: str) -> None:
    if path is None:
        return
    line = {
        "ts": datetime.now(timezone.utc).isoformat(),
        "role": role,
        "template": template,
        "prompt_sha256": prompt_hash(prompt),
        "reply": reply,
    }
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(line) + "\n")


def generate_query(gateway, question: str, temperature: Optional[float] = None) -> str:
    prompt = render_prompt(QUERY_GEN_PROMPT, {"question": question})
    return gateway.complete(GENERATOR, prompt, temperature, template="query_gen").strip()


def generate_guidance(
    gateway, question: str, title: str, context: str, temperature: Optional[float] = None
) -> str:
    prompt = render_prompt(
        GUIDANCE_PROMPT, {"question": question, "title": title, "context": context}
    )
    return gateway.complete(GENERATOR, prompt, temperature, template="guidance").strip()


def reformulate_query(gateway, query: str, temperature: Optional[float] = None) -> str:
    prompt = render_prompt(REFORMULATE_PROMPT, {"query": query})
    return gateway.complete(GENERATOR, prompt, temperature, template="reformulate").strip()


def make_decision(
    gateway,
    context: str,
    question: str,
    confidence: Optional[float],
    temperature: float,
) -> str:
    """User-role answer; when ``confidence`` is None the prompt omits it."""
    if confidence is None:
        prompt = render_prompt(
            DECISION_NO_CONFIDENCE_PROMPT, {"context": context, "question": question}
        )
        template = "decision_no_confidence"
    else:
        prompt = render_prompt(
            DECISION_PROMPT,
            {
                "context": context,
                "question": question,
                "confidence": format_confidence(confidence),
            },
        )
        template = "decision"
    return gateway.complete(USER, prompt, temperature, template=template).strip()


def parse_grade_reply(reply: str) -> bool:
    """First case-insensitive yes/no token decides; neither is an error."""
    for token in re.findall(r"[a-zA-Z]+", reply.lower()):
        if token == "yes":
            return True
        if token == "no":
            return False
    raise GradingParseError(f"grader reply contains neither yes nor no: {reply!r}")


def grade(
    gateway,
    question: str,
    ground_truth: str,
    prediction: str,
    parse_error_as_incorrect: bool = False,
) -> bool:
    """Ask the grader whether ``prediction`` matches ``ground_truth``."""
    prompt = render_prompt(
        GRADING_PROMPT,
        {"question": question, "ground-truth": ground_truth, "prediction": prediction},
    )
    reply = gateway.complete(GRADER, prompt, temperature=0.0, template="grading")
    try:
        return parse_grade_reply(reply)
    except GradingParseError:
        if parse_error_as_incorrect:
            return False
        raise
