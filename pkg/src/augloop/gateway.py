"""Uniform access to chat-completion and embedding providers.

One gateway instance serves all agent purposes. It enforces the
purpose-to-temperature routing (0.7 for data generation, 0 everywhere
else), retries transient transport failures, bounds per-purpose
concurrency, and keeps call counters plus an optional request log that
tests and the run report read back.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

PURPOSES = (
    "error_analysis",
    "categorization",
    "strategy",
    "generation",
    "quality_control",
    "student_eval",
)

GENERATION_TEMPERATURE = 0.7


def temperature_for(purpose: str) -> float:
    """Deterministic routing: only data generation samples above zero."""
    if purpose not in PURPOSES:
        raise ValueError(f"unknown purpose {purpose!r}")
    return GENERATION_TEMPERATURE if purpose == "generation" else 0.0


class GatewayError(Exception):
    """Base for gateway failures."""


class TransportError(GatewayError):
    """Transient transport failure; retried per the binding's policy."""


class ProviderRejected(GatewayError):
    """Non-retryable provider response (bad request, auth, quota)."""


class MalformedOutput(GatewayError):
    """Model output held no parseable JSON; callers count a quality failure."""


class DimensionMismatch(GatewayError):
    """Embedding provider returned ragged vectors."""


class ReplayMiss(GatewayError):
    """No fixture recorded for this request digest."""


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff: tuple[float, ...] = (0.5, 2.0, 8.0)

    def delay(self, attempt: int) -> float:
        if not self.backoff:
            return 0.0
        return self.backoff[min(attempt, len(self.backoff) - 1)]


@dataclass(frozen=True)
class ProviderBinding:
    endpoint: str
    model_id: str
    api_key_env: str | None = None
    max_concurrency: int = 4
    retry: RetryPolicy = RetryPolicy()


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[dict, ...]
    purpose: str
    model_id: str = ""
    max_output_tokens: int = 1024
    temperature: float | None = None

    def __post_init__(self) -> None:
        expected = temperature_for(self.purpose)
        if self.temperature is None:
            object.__setattr__(self, "temperature", expected)
        elif self.temperature != expected:
            raise ValueError(
                f"purpose {self.purpose!r} requires temperature {expected}, got {self.temperature}"
            )

    def digest(self) -> str:
        canonical = json.dumps(
            {
                "messages": list(self.messages),
                "model_id": self.model_id,
                "purpose": self.purpose,
                "temperature": self.temperature,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ChatProvider(Protocol):
    def complete(self, req: ChatRequest) -> str: ...


class Embedder(Protocol):
    def embed(self, texts: list[str]) -> list[list[float]]: ...


@dataclass
class RecordedCall:
    purpose: str
    model_id: str
    temperature: float
    messages: tuple[dict, ...]
    response: str | None
    error: str | None = None

    @property
    def prompt_text(self) -> str:
        return "\n".join(str(m.get("content", "")) for m in self.messages)


def extract_json(raw: str):
    """Pull the first balanced top-level JSON array or object out of model text.

    Code fences are tried first, then a left-to-right scan of the whole
    text; trailing prose after the balanced value is ignored.
    """
    if raw is None:
        raise MalformedOutput("no output")
    text = raw.strip()
    fence = re.compile(r"```[a-zA-Z0-9_-]*\s*\n(.*?)```", re.DOTALL)
    candidates = [m.group(1) for m in fence.finditer(text)]
    candidates.append(text)
    decoder = json.JSONDecoder()
    for cand in candidates:
        for i, ch in enumerate(cand):
            if ch in "[{":
                try:
                    value, _ = decoder.raw_decode(cand, i)
                except ValueError:
                    continue
                return value
    raise MalformedOutput(f"no parseable JSON in output: {text[:80]!r}")


class HttpChatProvider:
    """OpenAI-compatible chat-completions endpoint over HTTP."""

    def __init__(self, binding: ProviderBinding, timeout: float = 60.0):
        import httpx

        self.binding = binding
        self._client = httpx.Client(timeout=timeout)

    def _headers(self) -> dict:
        import os

        headers = {"Content-Type": "application/json"}
        if self.binding.api_key_env:
            key = os.environ.get(self.binding.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, req: ChatRequest) -> str:
        import httpx

        url = self.binding.endpoint.rstrip("/") + "/chat/completions"
        payload = {
            "model": req.model_id or self.binding.model_id,
            "messages": list(req.messages),
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        try:
            resp = self._client.post(url, json=payload, headers=self._headers())
        except httpx.HTTPError as exc:
            raise TransportError(f"chat request failed: {exc}") from exc
        if resp.status_code in (408, 429) or resp.status_code >= 500:
            raise TransportError(f"retryable status {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderRejected(f"status {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise ProviderRejected(f"unexpected response shape: {exc}") from exc


class HttpEmbedder:
    """OpenAI-compatible embeddings endpoint over HTTP."""

    def __init__(self, binding: ProviderBinding, timeout: float = 60.0):
        import httpx

        self.binding = binding
        self._client = httpx.Client(timeout=timeout)

    def embed(self, texts: list[str]) -> list[list[float]]:
        import httpx

        url = self.binding.endpoint.rstrip("/") + "/embeddings"
        payload = {"model": self.binding.model_id, "input": texts}
        try:
            resp = self._client.post(url, json=payload)
        except httpx.HTTPError as exc:
            raise TransportError(f"embedding request failed: {exc}") from exc
        if resp.status_code >= 400:
            raise ProviderRejected(f"status {resp.status_code}: {resp.text[:200]}")
        data = resp.json()["data"]
        return [item["embedding"] for item in data]


class HashEmbedder:
    """Deterministic test embedder: hashed token n-grams, unit-normalized.

    Stands in for a sentence-embedding model in tests and dry runs;
    clustering only needs metric structure, not real semantics.
    """

    def __init__(self, dim: int = 8, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.seed = seed

    def _vector(self, text: str) -> list[float]:
        tokens = re.findall(r"[a-z0-9]+", text.lower())
        grams = tokens + [" ".join(p) for p in zip(tokens, tokens[1:])]
        if not grams:
            grams = list(text) or ["\0"]
        vec = [0.0] * self.dim
        for gram in grams:
            h = int.from_bytes(
                hashlib.sha256(f"{self.seed}:{gram}".encode("utf-8")).digest()[:8], "big"
            )
            sign = 1.0 if (h >> 32) & 1 else -1.0
            vec[h % self.dim] += sign
        norm = math.sqrt(sum(v * v for v in vec))
        if norm == 0.0:
            vec[0] = 1.0
            norm = 1.0
        return [v / norm for v in vec]

    def embed(self, texts: list[str]) -> list[list[float]]:
        return [self._vector(t) for t in texts]


class ReplayProvider:
    """Replays responses from a directory of digest-named text files.

    With an inner provider attached it records cache misses, which is how
    fixture directories get built in the first place.
    """

    def __init__(self, fixtures_dir: str | Path, inner: ChatProvider | None = None):
        self.dir = Path(fixtures_dir)
        self.inner = inner
        self.dir.mkdir(parents=True, exist_ok=True)

    def complete(self, req: ChatRequest) -> str:
        path = self.dir / f"{req.digest()}.txt"
        if path.exists():
            return path.read_text(encoding="utf-8")
        if self.inner is None:
            raise ReplayMiss(f"no fixture for digest {req.digest()} (purpose={req.purpose})")
        text = self.inner.complete(req)
        path.write_text(text, encoding="utf-8")
        return text


@dataclass
class _Route:
    binding: ProviderBinding
    provider: ChatProvider


class Gateway:
    """Routes purposes to providers with retries, batching, and accounting."""

    def __init__(
        self,
        routes: dict[str, tuple[ProviderBinding, ChatProvider]],
        embedder: Embedder | None = None,
        record_requests: bool = False,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self._routes = {p: _Route(binding=b, provider=pr) for p, (b, pr) in routes.items()}
        self._embedder = embedder
        self._sleep = sleep
        self._lock = threading.Lock()
        self.call_counts: Counter[str] = Counter()
        self.record_requests = record_requests
        self.recorded: list[RecordedCall] = []

    def bind(self, purpose: str, binding: ProviderBinding, provider: ChatProvider) -> None:
        self._routes[purpose] = _Route(binding=binding, provider=provider)

    def binding_for(self, purpose: str) -> ProviderBinding:
        return self._route(purpose).binding

    def _route(self, purpose: str) -> _Route:
        if purpose not in self._routes:
            raise GatewayError(f"no provider bound for purpose {purpose!r}")
        return self._routes[purpose]

    def _record(self, req: ChatRequest, response: str | None, error: Exception | None) -> None:
        with self._lock:
            self.call_counts[req.purpose] += 1
            if self.record_requests:
                self.recorded.append(
                    RecordedCall(
                        purpose=req.purpose,
                        model_id=req.model_id,
                        temperature=req.temperature,
                        messages=req.messages,
                        response=response,
                        error=None if error is None else f"{type(error).__name__}: {error}",
                    )
                )

    def snapshot_counts(self) -> dict[str, int]:
        with self._lock:
            return dict(self.call_counts)

    def complete(self, req: ChatRequest) -> str:
        route = self._route(req.purpose)
        if not req.model_id:
            req = ChatRequest(
                messages=req.messages,
                purpose=req.purpose,
                model_id=route.binding.model_id,
                max_output_tokens=req.max_output_tokens,
            )
        assert req.temperature == temperature_for(req.purpose)
        policy = route.binding.retry
        last: Exception | None = None
        for attempt in range(policy.max_attempts):
            try:
                text = route.provider.complete(req)
            except TransportError as exc:
                last = exc
                if attempt + 1 < policy.max_attempts:
                    self._sleep(policy.delay(attempt))
                continue
            except GatewayError as exc:
                self._record(req, None, exc)
                raise
            self._record(req, text, None)
            return text
        assert last is not None
        self._record(req, None, last)
        raise last

    def complete_batch(self, reqs: list[ChatRequest]) -> list[str | Exception]:
        """Ordered responses; per-item failures come back positionally."""
        if not reqs:
            return []
        purposes = {r.purpose for r in reqs}
        if len(purposes) != 1:
            raise GatewayError(f"batch mixes purposes: {sorted(purposes)}")
        route = self._route(reqs[0].purpose)
        results: list[str | Exception] = [None] * len(reqs)  # type: ignore[list-item]

        def run(i: int, req: ChatRequest) -> None:
            try:
                results[i] = self.complete(req)
            except Exception as exc:  # noqa: BLE001 - reported positionally
                results[i] = exc

        workers = max(1, route.binding.max_concurrency)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run, i, r) for i, r in enumerate(reqs)]
            for f in futures:
                f.result()
        return results

    def embed(self, texts: list[str]) -> list[list[float]]:
        if self._embedder is None:
            raise GatewayError("no embedder configured")
        if not texts:
            return []
        vectors = self._embedder.embed(texts)
        if len(vectors) != len(texts):
            raise DimensionMismatch(f"expected {len(texts)} vectors, got {len(vectors)}")
        dims = {len(v) for v in vectors}
        if len(dims) != 1:
            raise DimensionMismatch(f"ragged embedding dimensions: {sorted(dims)}")
        return vectors
