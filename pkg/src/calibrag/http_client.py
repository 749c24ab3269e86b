"""Retrying HTTP POST used by the chat and embeddings clients.

Transport failures and 5xx responses are retried with exponential
backoff (base 500 ms, doubling, plus jitter) up to max_retries.  A 4xx
response is a configuration problem and is surfaced immediately without
retrying.  The API key, when present in the environment, is sent as a
bearer token.
"""

from __future__ import annotations

import os
import random
import time
from typing import Any, Callable

import requests

API_KEY_ENV = "CALIBRAG_API_KEY"

BACKOFF_BASE_S = 0.5


class GatewayError(RuntimeError):
    """Endpoint unreachable or persistently failing after retries."""


class ConfigurationError(RuntimeError):
    """Client-side problem (4xx response, bad endpoint config)."""


def auth_headers() -> dict[str, str]:
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(API_KEY_ENV)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    return headers


def post_with_retries(
    url: str,
    payload: dict[str, Any],
    timeout: float,
    max_retries: int,
    post: Callable[..., Any] = requests.post,
    sleep: Callable[[float], None] = time.sleep,
    jitter: Callable[[], float] = random.random,
) -> dict[str, Any]:
    """POST JSON, returning the decoded JSON body.

    ``post``, ``sleep``, and ``jitter`` are injectable for tests.  Raises
    ConfigurationError on 4xx and GatewayError once retries are exhausted.
    """
    attempts = max_retries + 1
    last_error: str = ""
    for attempt in range(attempts):
        try:
            response = post(url, json=payload, headers=auth_headers(), timeout=timeout)
        except requests.RequestException as exc:
            last_error = f"transport error: {exc}"
        else:
            status = response.status_code
            if 200 <= status < 300:
                try:
                    return response.json()
                except ValueError:
                    last_error = "invalid JSON in response body"
            elif 400 <= status < 500:
                body = response.text[:200]
                raise ConfigurationError(f"endpoint rejected request ({status}): {body}")
            else:
                last_error = f"server error ({status})"
        if attempt < attempts - 1:
            delay = BACKOFF_BASE_S * (2.0**attempt)
            sleep(delay * (1.0 + 0.25 * jitter()))
    raise GatewayError(f"{url} failed after {attempts} attempts: {last_error}")
