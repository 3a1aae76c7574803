"""Transport between prompt bundles and a pluggable text backend.

Two backends ship here: an HTTP client for Ollama-style servers and a
deterministic mock driven by a JSON fixture, addressable as
``mock:<fixture-path>`` so pipelines and CI never need a live model.

Wire protocol of the HTTP backend (documented so other servers can be
adapted):

* completion: POST ``{endpoint}/api/generate`` with
  ``{"model", "prompt", "system", "options": {"temperature", "num_predict"},
  "stream": false}``; the reply carries the full text under ``"response"``.
* embeddings: POST ``{endpoint}/api/embed`` with ``{"model", "input":
  [token, ...]}``; the reply carries ``"embeddings": [[...], ...]``, one
  vector per input token.

The gateway owns retries (exponential backoff with full jitter) and the
in-flight cap; it never alters the text a backend returns.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import requests

from .errors import (
    BackendTimeoutError,
    BackendUnreachableError,
    DimensionMismatchError,
    EmptyResponseError,
)
from .prompts import DecodeParams, PromptBundle
from .similarity import tokenize

logger = logging.getLogger(__name__)

MOCK_SCHEME = "mock:"


@dataclass(frozen=True)
class BackendConfig:
    """Connection and rate-control settings for one backend."""

    endpoint_url: str = "http://localhost:11434"
    model_name: str = "llama3"
    timeout: float = 120.0
    max_retries: int = 2
    max_in_flight: int = 4
    backoff_base_ms: float = 250.0
    auth_token: str | None = None

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be at least 1")


@dataclass(frozen=True)
class CompletionResult:
    raw_text: str
    latency_ms: float
    attempt_count: int
    backend_id: str


class BackendTransportFailure(Exception):
    """Raised by backends for failures the gateway may retry.

    ``timeout`` marks timeouts; ``permanent`` marks protocol-level
    rejections (e.g. HTTP 4xx) that retrying cannot fix.
    """

    def __init__(self, message: str, *, timeout: bool = False, permanent: bool = False):
        super().__init__(message)
        self.timeout = timeout
        self.permanent = permanent


class Backend:
    """Text-in/text-out and tokens-in/vectors-out contract."""

    backend_id: str = "backend"

    def generate(self, system_text: str, user_text: str, decode: DecodeParams) -> str:
        raise NotImplementedError

    def embed_tokens(self, tokens: Sequence[str]) -> list[list[float]]:
        raise NotImplementedError


# --- deterministic mock -------------------------------------------------------


def _hash_vector(token: str, dim: int) -> list[float]:
    # Expand sha256(token || counter) to dim strictly-positive components;
    # positive components keep every pairwise cosine inside [0, 1].
    out: list[float] = []
    counter = 0
    while len(out) < dim:
        digest = hashlib.sha256(f"{token}\x00{counter}".encode("utf-8")).digest()
        out.extend(b + 1.0 for b in digest)
        counter += 1
    return out[:dim]


def _onehot_vector(token: str, dim: int) -> list[float]:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    index = int.from_bytes(digest[:8], "big") % dim
    vec = [0.0] * dim
    vec[index] = 1.0
    return vec


def onehot_index(token: str, dim: int) -> int:
    """Bucket a token lands in under the mock's one-hot embedding."""
    return int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "big") % dim


@dataclass(frozen=True)
class MockRule:
    """First rule whose substrings both occur in the request wins."""

    response: str
    match_user: str | None = None
    match_system: str | None = None

    def matches(self, system_text: str, user_text: str) -> bool:
        if self.match_user is not None and self.match_user not in user_text:
            return False
        if self.match_system is not None and self.match_system not in system_text:
            return False
        return True


class MockBackend(Backend):
    """Scripted completions plus deterministic per-token embeddings.

    Embedding modes: ``hash`` yields dense positive unit-direction vectors
    (distinct tokens are similar-but-not-equal); ``onehot`` yields basis
    vectors (distinct tokens are orthogonal unless their hash buckets
    collide).
    """

    def __init__(
        self,
        rules: Sequence[MockRule] = (),
        default_response: str | None = None,
        *,
        embedding_mode: str = "hash",
        embedding_dim: int = 32,
        backend_id: str = "mock:inline",
    ):
        if embedding_mode not in ("hash", "onehot"):
            raise ValueError(f"unknown embedding mode {embedding_mode!r}")
        self.rules = list(rules)
        self.default_response = default_response
        self.embedding_mode = embedding_mode
        self.embedding_dim = embedding_dim
        self.backend_id = backend_id

    @classmethod
    def from_fixture(cls, path: Path | str) -> "MockBackend":
        """Load a fixture: {"rules": [...], "default_response", "embedding"}."""
        with open(path, "r", encoding="utf-8") as fh:
            spec = json.load(fh)
        rules = [
            MockRule(
                response=r["response"],
                match_user=r.get("match_user"),
                match_system=r.get("match_system"),
            )
            for r in spec.get("rules", [])
        ]
        embedding = spec.get("embedding", {})
        return cls(
            rules,
            spec.get("default_response"),
            embedding_mode=embedding.get("mode", "hash"),
            embedding_dim=int(embedding.get("dim", 32)),
            backend_id=f"mock:{path}",
        )

    def generate(self, system_text: str, user_text: str, decode: DecodeParams) -> str:
        for rule in self.rules:
            if rule.matches(system_text, user_text):
                return rule.response
        if self.default_response is not None:
            return self.default_response
        raise BackendTransportFailure(
            "mock fixture has no matching rule and no default_response", permanent=True
        )

    def embed_tokens(self, tokens: Sequence[str]) -> list[list[float]]:
        make = _hash_vector if self.embedding_mode == "hash" else _onehot_vector
        return [make(token, self.embedding_dim) for token in tokens]


# --- HTTP backend --------------------------------------------------------------


class OllamaHttpBackend(Backend):
    """Client for an Ollama-style JSON-over-HTTP generation server."""

    def __init__(self, config: BackendConfig, session: requests.Session | None = None):
        self.config = config
        self.session = session or requests.Session()
        self.backend_id = f"{config.model_name}@{config.endpoint_url}"

    def _post(self, path: str, payload: dict) -> dict:
        headers = {}
        if self.config.auth_token:
            headers["Authorization"] = f"Bearer {self.config.auth_token}"
        try:
            response = self.session.post(
                self.config.endpoint_url.rstrip("/") + path,
                json=payload,
                timeout=self.config.timeout,
                headers=headers,
            )
        except requests.exceptions.Timeout as exc:
            raise BackendTransportFailure(f"timeout: {exc}", timeout=True) from exc
        except requests.exceptions.RequestException as exc:
            raise BackendTransportFailure(f"transport error: {exc}") from exc
        if response.status_code >= 500:
            raise BackendTransportFailure(f"server error HTTP {response.status_code}")
        if response.status_code >= 400:
            raise BackendTransportFailure(
                f"request rejected: HTTP {response.status_code}", permanent=True
            )
        try:
            return response.json()
        except ValueError as exc:
            raise BackendTransportFailure(f"non-JSON response: {exc}") from exc

    def generate(self, system_text: str, user_text: str, decode: DecodeParams) -> str:
        data = self._post(
            "/api/generate",
            {
                "model": self.config.model_name,
                "prompt": user_text,
                "system": system_text,
                "options": {
                    "temperature": decode.temperature,
                    "num_predict": decode.max_tokens,
                },
                "stream": False,
            },
        )
        text = data.get("response")
        if not isinstance(text, str):
            raise BackendTransportFailure("response payload missing 'response' text")
        return text

    def embed_tokens(self, tokens: Sequence[str]) -> list[list[float]]:
        data = self._post(
            "/api/embed", {"model": self.config.model_name, "input": list(tokens)}
        )
        embeddings = data.get("embeddings")
        if not isinstance(embeddings, list):
            raise BackendTransportFailure("response payload missing 'embeddings'")
        return embeddings


def make_backend(config: BackendConfig, backend_uri: str | None = None) -> Backend:
    """Build the backend a config or URI addresses.

    ``mock:<fixture-path>`` (as ``backend_uri`` or as the endpoint URL)
    selects the fixture-driven mock; anything else is an HTTP endpoint.
    """
    uri = backend_uri or config.endpoint_url
    if uri.startswith(MOCK_SCHEME):
        return MockBackend.from_fixture(uri[len(MOCK_SCHEME):])
    return OllamaHttpBackend(config)


# --- gateway -------------------------------------------------------------------


class Gateway:
    """Retry, backoff, and in-flight limiting around one backend.

    Safe for concurrent callers; the only shared mutable state is the
    in-flight semaphore.
    """

    def __init__(
        self,
        backend: Backend,
        config: BackendConfig,
        *,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.config = config
        self._sleeper = sleeper
        self._slots = threading.BoundedSemaphore(config.max_in_flight)

    def _backoff(self, attempt: int) -> None:
        base = self.config.backoff_base_ms / 1000.0
        if base <= 0:
            return
        self._sleeper(random.uniform(0.0, base * (2 ** (attempt - 1))))

    def complete(self, bundle: PromptBundle) -> CompletionResult:
        """Send one prompt; retry transport failures and empty responses.

        A well-formed non-empty response is returned verbatim on the
        attempt it arrives; total attempts never exceed max_retries + 1.
        """
        started = time.perf_counter()
        last_failure = "transport"
        last_message = "no attempt made"
        attempts = 0
        while attempts <= self.config.max_retries:
            attempts += 1
            try:
                with self._slots:
                    text = self.backend.generate(
                        bundle.system_text, bundle.user_text, bundle.decode_params
                    )
            except BackendTransportFailure as exc:
                if exc.permanent:
                    raise BackendUnreachableError(
                        f"{self.backend.backend_id}: {exc} (attempt {attempts})"
                    ) from exc
                last_failure = "timeout" if exc.timeout else "transport"
                last_message = str(exc)
                logger.warning(
                    "%s: attempt %d failed: %s", self.backend.backend_id, attempts, exc
                )
                if attempts <= self.config.max_retries:
                    self._backoff(attempts)
                continue
            if not text.strip():
                last_failure = "empty"
                last_message = "backend returned empty text"
                if attempts <= self.config.max_retries:
                    self._backoff(attempts)
                continue
            return CompletionResult(
                raw_text=text,
                latency_ms=(time.perf_counter() - started) * 1000.0,
                attempt_count=attempts,
                backend_id=self.backend.backend_id,
            )
        detail = f"{self.backend.backend_id}: {last_message} (after {attempts} attempts)"
        if last_failure == "timeout":
            raise BackendTimeoutError(detail)
        if last_failure == "empty":
            raise EmptyResponseError(detail)
        raise BackendUnreachableError(detail)

    def embed(self, text: str) -> list[list[float]]:
        """One embedding vector per token of ``text``; dimensions uniform.

        Tokenization is this package's own word-level splitter, so every
        backend sees the same token boundaries.
        """
        tokens = tokenize(text)
        if not tokens:
            raise ValueError("text has no tokens to embed")
        attempts = 0
        last_exc: BackendTransportFailure | None = None
        while attempts <= self.config.max_retries:
            attempts += 1
            try:
                with self._slots:
                    vectors = self.backend.embed_tokens(tokens)
            except BackendTransportFailure as exc:
                if exc.permanent:
                    raise BackendUnreachableError(f"{self.backend.backend_id}: {exc}") from exc
                last_exc = exc
                if attempts <= self.config.max_retries:
                    self._backoff(attempts)
                continue
            if len(vectors) != len(tokens):
                raise DimensionMismatchError(
                    f"expected {len(tokens)} vectors (one per token), got {len(vectors)}"
                )
            dims = {len(v) for v in vectors}
            if len(dims) != 1:
                raise DimensionMismatchError(f"ragged embedding dimensions: {sorted(dims)}")
            return vectors
        if last_exc is not None and last_exc.timeout:
            raise BackendTimeoutError(f"{self.backend.backend_id}: {last_exc}")
        raise BackendUnreachableError(f"{self.backend.backend_id}: {last_exc}")


def complete(bundle: PromptBundle, config: BackendConfig) -> CompletionResult:
    """One-shot completion against the backend the config addresses."""
    return Gateway(make_backend(config), config).complete(bundle)


def embed(text: str, config: BackendConfig) -> list[list[float]]:
    """One-shot per-token embedding against the backend the config addresses."""
    return Gateway(make_backend(config), config).embed(text)
