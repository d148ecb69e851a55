"""Model-backend contract: chat completion, token logprob scoring, and
token embeddings.

Two backends implement the contract: an HTTP client speaking the
chat-completions JSON shape, and a deterministic offline mock whose outputs
are pure functions of the request. The mock makes every pipeline stage
reproducible without network access.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import requests

from .core import clean_text, tokenize

COMPLETE = "complete"
LOGPROBS = "logprobs"
EMBED = "embed"
_KINDS = (COMPLETE, LOGPROBS, EMBED)


class BackendError(Exception):
    pass


class TransportError(BackendError):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class BackendTimeout(BackendError):
    pass


class MalformedResponseError(BackendError):
    pass


class UnsupportedError(BackendError):
    pass


@dataclass(frozen=True)
class BackendRequest:
    """One model call. Frozen so requests are value-comparable and cacheable.

    The optional decoding seed lets a deterministic backend produce distinct
    variants for otherwise-identical prompts.
    """

    kind: str
    text: str
    model: str
    temperature: float = 0.0
    max_tokens: int = 256
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown request kind {self.kind!r}")
        if not self.text:
            raise ValueError("request text must be nonempty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.kind == COMPLETE and self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1 for completion")


@dataclass(frozen=True)
class BackendResponse:
    """Exactly one payload, matching the request kind."""

    text: str | None = None
    token_logprobs: tuple[float, ...] | None = None
    token_vectors: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self) -> None:
        present = [
            p for p in (self.text, self.token_logprobs, self.token_vectors) if p is not None
        ]
        if len(present) != 1:
            raise ValueError("response must carry exactly one payload")
        if self.token_logprobs is not None and any(lp > 0 for lp in self.token_logprobs):
            raise ValueError("logprobs must be <= 0")


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 3
    base_delay: float = 0.5
    backoff_factor: float = 2.0
    max_delay: float = 30.0
    retryable_statuses: frozenset[int] = frozenset({429, 500, 502, 503, 504})

    def __post_init__(self) -> None:
        if not 0 <= self.max_retries <= 10:
            raise ValueError("max_retries must be in [0, 10]")
        if self.backoff_factor <= 1:
            raise ValueError("backoff_factor must be > 1")
        if self.base_delay < 0 or self.max_delay < self.base_delay:
            raise ValueError("delays must satisfy 0 <= base_delay <= max_delay")


def with_retry(
    send: Callable[[BackendRequest], BackendResponse],
    request: BackendRequest,
    policy: RetryPolicy,
    sleep: Callable[[float], None] = time.sleep,
) -> BackendResponse:
    """Retry retryable transport failures with capped exponential backoff.

    Total attempts never exceed max_retries + 1; the last error surfaces on
    exhaustion; non-retryable errors raise immediately.
    """
    attempt = 0
    while True:
        try:
            return send(request)
        except (TransportError, BackendTimeout) as exc:
            retryable = isinstance(exc, BackendTimeout) or (
                exc.status is None or exc.status in policy.retryable_statuses
            )
            if not retryable or attempt >= policy.max_retries:
                raise
            delay = min(policy.base_delay * policy.backoff_factor**attempt, policy.max_delay)
            sleep(delay)
            attempt += 1


class Backend:
    """Shared public surface over a raw ``send``. Safe to share across
    threads: no per-call mutable state."""

    def send(self, request: BackendRequest) -> BackendResponse:
        raise NotImplementedError

    def complete(self, request: BackendRequest) -> str:
        if request.kind != COMPLETE:
            raise ValueError(f"complete() requires a {COMPLETE!r} request")
        response = self.send(request)
        if response.text is None:
            raise MalformedResponseError("backend returned no text payload")
        return clean_text(response.text)

    def score_logprobs(self, text: str, *, model: str | None = None) -> list[float]:
        if not text:
            raise ValueError("text must be nonempty")
        request = BackendRequest(
            kind=LOGPROBS, text=text, model=model or self.default_model(), max_tokens=1
        )
        response = self.send(request)
        if response.token_logprobs is None:
            raise MalformedResponseError("backend returned no logprobs payload")
        return list(response.token_logprobs)

    def embed_tokens(self, text: str, *, model: str | None = None) -> list[list[float]]:
        if not text:
            raise ValueError("text must be nonempty")
        request = BackendRequest(
            kind=EMBED, text=text, model=model or self.default_model(), max_tokens=1
        )
        response = self.send(request)
        if response.token_vectors is None:
            raise MalformedResponseError("backend returned no embedding payload")
        vectors = [list(v) for v in response.token_vectors]
        if vectors and any(len(v) != len(vectors[0]) for v in vectors):
            raise MalformedResponseError("embedding vectors have inconsistent width")
        return vectors

    def default_model(self) -> str:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Wire client


def parse_chat_text(payload: dict) -> str:
    """Extract choices[0].message.content from a chat-completions response."""
    try:
        content = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponseError(f"missing message content: {exc}") from exc
    if not isinstance(content, str):
        raise MalformedResponseError("message content is not text")
    return content


def parse_chat_logprobs(payload: dict) -> tuple[float, ...]:
    """Extract choices[0].logprobs.content[*].logprob."""
    try:
        entries = payload["choices"][0]["logprobs"]["content"]
        values = tuple(float(e["logprob"]) for e in entries)
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise MalformedResponseError(f"missing logprobs: {exc}") from exc
    if any(v > 0 for v in values):
        raise MalformedResponseError("logprob > 0 in response")
    return values


def parse_embeddings(payload: dict) -> tuple[tuple[float, ...], ...]:
    """Extract data[*].embedding from an embeddings response."""
    try:
        return tuple(tuple(float(x) for x in item["embedding"]) for item in payload["data"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedResponseError(f"missing embeddings: {exc}") from exc


@dataclass
class HttpBackend(Backend):
    """Client for a chat-completions-compatible server.

    Completions and logprob scoring POST to ``{base_url}/chat/completions``;
    token embeddings POST to ``{base_url}/embeddings`` with the token list as
    input. The API key is read from the named environment variable, never
    from configuration files.
    """

    base_url: str
    model: str
    api_key: str | None = None
    timeout_s: float = 60.0
    policy: RetryPolicy = field(default_factory=RetryPolicy)
    session: requests.Session = field(default_factory=requests.Session)

    def default_model(self) -> str:
        return self.model

    def send(self, request: BackendRequest) -> BackendResponse:
        return with_retry(self._send_once, request, self.policy)

    def _send_once(self, request: BackendRequest) -> BackendResponse:
        if request.kind == EMBED:
            url = self.base_url.rstrip("/") + "/embeddings"
            body: dict = {"model": request.model, "input": tokenize(request.text)}
        else:
            url = self.base_url.rstrip("/") + "/chat/completions"
            body = {
                "model": request.model,
                "messages": [{"role": "user", "content": request.text}],
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
            }
            if request.seed is not None:
                body["seed"] = request.seed
            if request.kind == LOGPROBS:
                body["logprobs"] = True
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self.session.post(url, json=body, headers=headers, timeout=self.timeout_s)
        except requests.Timeout as exc:
            raise BackendTimeout(f"request to {url} timed out") from exc
        except requests.RequestException as exc:
            raise TransportError(f"request to {url} failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(
                f"{url} returned HTTP {resp.status_code}", status=resp.status_code
            )
        try:
            payload = resp.json()
        except json.JSONDecodeError as exc:
            raise MalformedResponseError("response body is not JSON") from exc
        if request.kind == COMPLETE:
            return BackendResponse(text=parse_chat_text(payload))
        if request.kind == LOGPROBS:
            return BackendResponse(token_logprobs=parse_chat_logprobs(payload))
        return BackendResponse(token_vectors=parse_embeddings(payload))


# ---------------------------------------------------------------------------
# Deterministic mock


def stable_hash(*parts: object) -> int:
    """Process-independent 64-bit hash of the stringified parts."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


_MOCK_PREFIXES = (
    "Rephrased:",
    "In other words:",
    "Consider this:",
    "Put differently:",
    "Here you go:",
    "Simply put:",
)


@dataclass
class MockBackend(Backend):
    """Offline backend: responses are pure functions of the request.

    Completions look up an exact-prompt table first; unmatched prompts get a
    deterministic pseudo-paraphrase of the prompt's last line (word rotation
    plus a hash-picked prefix). Logprobs and embeddings derive per token from
    stable hashes, so identical texts always score and embed identically.
    """

    table: dict[str, str] = field(default_factory=dict)
    model: str = "mock"
    logprob_per_token: float | None = None
    embed_dim: int = 16

    def default_model(self) -> str:
        return self.model

    def send(self, request: BackendRequest) -> BackendResponse:
        if request.kind == COMPLETE:
            return BackendResponse(text=self._complete(request))
        if request.kind == LOGPROBS:
            return BackendResponse(token_logprobs=self._logprobs(request.text))
        return BackendResponse(token_vectors=self._vectors(request.text))

    def _complete(self, request: BackendRequest) -> str:
        if request.text in self.table:
            return self.table[request.text]
        payload = request.text.splitlines()[-1].strip() or request.text
        words = payload.split()
        h = stable_hash(request.text, request.seed)
        prefix = _MOCK_PREFIXES[h % len(_MOCK_PREFIXES)]
        if len(words) > 1:
            k = 1 + (h >> 8) % (len(words) - 1)
            words = words[k:] + words[:k]
        return f"{prefix} {' '.join(words)}"

    def _logprobs(self, text: str) -> tuple[float, ...]:
        tokens = tokenize(text)
        if self.logprob_per_token is not None:
            return tuple(self.logprob_per_token for _ in tokens)
        return tuple(-(1.0 + (stable_hash("lp", t) % 40) / 10.0) for t in tokens)

    def _vectors(self, text: str) -> tuple[tuple[float, ...], ...]:
        out = []
        for token in tokenize(text):
            rng = np.random.default_rng(stable_hash("embed", token))
            v = rng.standard_normal(self.embed_dim)
            v /= np.linalg.norm(v)
            out.append(tuple(float(x) for x in v))
        return tuple(out)
