"""Dispatch rendered prompts to a text-generation backend with a persistent,
crash-safe response cache, retries with exponential backoff, and bounded
parallel batches.

Backends are text-in/text-out: anything with a ``complete(request) -> str``
method works. Adapters for an OpenAI-compatible chat endpoint and a local
text-generation-inference server are provided, plus two in-process mocks.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Protocol, Sequence

import requests

from .prompts import RenderedPrompt


class GatewayError(Exception):
    """Transport failure that survived all retries; carries the last cause."""


class RefusalError(Exception):
    """Backend refused or safety-blocked the request; raw payload retained."""

    def __init__(self, message: str, payload: object = None):
        super().__init__(message)
        self.payload = payload


class TransportError(Exception):
    """Retryable failure talking to a backend."""


@dataclass(frozen=True)
class GenerationRequest:
    prompt: RenderedPrompt
    generator_id: str
    temperature: float = 0.0
    max_new_tokens: int = 256
    seed: int | None = None

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class GenerationRecord:
    fingerprint: str
    response_text: str
    latency_ms: int
    created_at: str
    attempt: int


def fingerprint(request: GenerationRequest) -> str:
    """Pure function of (generator_id, prompt text, temperature, seed)."""
    payload = json.dumps(
        [request.generator_id, request.prompt.text, request.temperature, request.seed],
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Backend(Protocol):
    def complete(self, request: GenerationRequest) -> str: ...


class ResponseCache:
    """Append-only JSONL journal keyed by fingerprint, compacted on load.

    Writes are serialized through a lock so parallel batches share one
    writer; the last row per fingerprint wins on reload.
    """

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._entries: dict[str, GenerationRecord] = {}
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        assert self.path is not None
        with self.path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError:
                    continue  # torn tail write from a crash; ignore
                self._entries[obj["fingerprint"]] = GenerationRecord(
                    fingerprint=obj["fingerprint"],
                    response_text=obj["response_text"],
                    latency_ms=obj["latency_ms"],
                    created_at=obj["created_at"],
                    attempt=obj["attempt"],
                )

    def get(self, fp: str) -> GenerationRecord | None:
        return self._entries.get(fp)

    def put(self, request: GenerationRequest, record: GenerationRecord) -> None:
        with self._lock:
            self._entries[record.fingerprint] = record
            if self.path is None:
                return
            self.path.parent.mkdir(parents=True, exist_ok=True)
            row = {
                "fingerprint": record.fingerprint,
                "request": {
                    "generator_id": request.generator_id,
                    "mode": str(request.prompt.mode.value),
                    "example_id": request.prompt.example_id,
                    "prompt_text": request.prompt.text,
                    "temperature": request.temperature,
                    "max_new_tokens": request.max_new_tokens,
                    "seed": request.seed,
                },
                "response_text": record.response_text,
                "latency_ms": record.latency_ms,
                "created_at": record.created_at,
                "attempt": record.attempt,
            }
            with self.path.open("a", encoding="utf-8", newline="\n") as fh:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
                fh.flush()

    def __len__(self) -> int:
        return len(self._entries)


@dataclass
class BatchItem:
    """Per-item outcome of a batch: a record or the error that stopped it."""

    index: int
    request: GenerationRequest
    record: GenerationRecord | None = None
    error: Exception | None = None

    @property
    def ok(self) -> bool:
        return self.record is not None


class Gateway:
    def __init__(
        self,
        backend: Backend,
        cache_path: str | Path | None = None,
        max_retries: int = 3,
        backoff_s: float = 0.5,
    ):
        if max_retries < 1:
            raise ValueError("max_retries must be >= 1")
        self.backend = backend
        self.cache = ResponseCache(cache_path)
        self.max_retries = max_retries
        self.backoff_s = backoff_s

    def generate(self, request: GenerationRequest) -> GenerationRecord:
        """Serve from cache when the fingerprint is known; otherwise call the
        backend with retries, persist the record, and return it."""
        fp = fingerprint(request)
        cached = self.cache.get(fp)
        if cached is not None:
            return cached

        last_cause: Exception | None = None
        for attempt in range(1, self.max_retries + 1):
            start = time.monotonic()
            try:
                text = self.backend.complete(request)
            except RefusalError:
                raise
            except TransportError as exc:
                last_cause = exc
                if attempt < self.max_retries:
                    time.sleep(self.backoff_s * (2 ** (attempt - 1)))
                continue
            latency_ms = int((time.monotonic() - start) * 1000)
            record = GenerationRecord(
                fingerprint=fp,
                response_text=text,
                latency_ms=latency_ms,
                created_at=datetime.now(timezone.utc).isoformat(),
                attempt=attempt,
            )
            self.cache.put(request, record)
            return record
        raise GatewayError(
            f"backend failed after {self.max_retries} attempts: {last_cause}"
        ) from last_cause

    def generate_batch(
        self, requests_: Sequence[GenerationRequest], max_in_flight: int
    ) -> list[BatchItem]:
        """Run requests with at most ``max_in_flight`` outstanding at once.

        Results come back in input order regardless of completion order, and
        per-item failures are embedded without aborting the batch.
        """
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        items = [BatchItem(index=i, request=r) for i, r in enumerate(requests_)]
        if not items:
            return items

        def run(item: BatchItem) -> None:
            try:
                item.record = self.generate(item.request)
            except Exception as exc:  # noqa: BLE001 - per-item error reporting
                item.error = exc

        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            list(pool.map(run, items))
        return items


# --------------------------------------------------------------------------
# Backend adapters
# --------------------------------------------------------------------------


class OpenAIChatBackend:
    """OpenAI-compatible chat-completion endpoint.

    ``base_url`` should include the API version segment (e.g. ``.../v1``);
    the key is read from ``api_key_env`` at call time.
    """

    def __init__(
        self,
        base_url: str,
        api_key_env: str = "OPENAI_API_KEY",
        timeout_s: float = 60.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s
        self.session = session or requests.Session()

    def complete(self, request: GenerationRequest) -> str:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body: dict = {
            "model": request.generator_id,
            "messages": [{"role": "user", "content": request.prompt.text}],
            "temperature": request.temperature,
            "max_tokens": request.max_new_tokens,
        }
        if request.seed is not None:
            body["seed"] = request.seed
        try:
            resp = self.session.post(
                f"{self.base_url}/chat/completions",
                headers=headers,
                json=body,
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code >= 500 or resp.status_code == 429:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        payload = resp.json()
        if resp.status_code != 200:
            raise RefusalError(f"HTTP {resp.status_code}", payload=payload)
        choice = payload["choices"][0]
        if choice.get("finish_reason") == "content_filter":
            raise RefusalError("content filtered", payload=payload)
        content = choice["message"]["content"]
        return content if content is not None else ""


class LocalTGIBackend:
    """Local text-generation server speaking the ``/generate`` protocol:
    ``{"inputs": ..., "parameters": {...}}`` in, ``{"generated_text": ...}``
    out."""

    def __init__(
        self,
        base_url: str,
        timeout_s: float = 120.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self.session = session or requests.Session()

    def complete(self, request: GenerationRequest) -> str:
        parameters: dict = {"max_new_tokens": request.max_new_tokens}
        if request.temperature > 0:
            parameters["temperature"] = request.temperature
            parameters["do_sample"] = True
        if request.seed is not None:
            parameters["seed"] = request.seed
        try:
            resp = self.session.post(
                f"{self.base_url}/generate",
                json={"inputs": request.prompt.text, "parameters": parameters},
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code != 200:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        payload = resp.json()
        if isinstance(payload, list):
            payload = payload[0]
        return payload.get("generated_text", "")


class MockBackend:
    """Canned map from prompt text to response; raises when unmapped unless
    a default is provided."""

    def __init__(self, canned: dict[str, str], default: str | None = None):
        self.canned = dict(canned)
        self.default = default
        self.calls = 0

    def complete(self, request: GenerationRequest) -> str:
        self.calls += 1
        if request.prompt.text in self.canned:
            return self.canned[request.prompt.text]
        if self.default is not None:
            return self.default
        raise RefusalError(f"no canned response for prompt {request.prompt.example_id!r}")


_ASPECT_FROM_PROMPT = re.compile(r"sentiment polarity towards (.+?)(?:, why\?| is )")


class TemplatedMockBackend:
    """Deterministic generator that emits a well-formed three-hop rationale.

    The concluding polarity is configurable per example id; unmapped ids get
    a stable hash-based choice (or ``default_polarity`` when set). The
    rationale contains exactly one polarity token, the conclusion, so parsing
    and verification behave predictably in end-to-end tests.
    """

    _TEMPLATE = (
        "The mentioned aspect towards {t} is about the way {t} is presented in the sentence. "
        "The underlying opinion towards {t} is about how the writer judges it overall. "
        "Therefore, the sentiment polarity towards {t} is {y}."
    )

    def __init__(
        self,
        polarity_by_id: dict[str, str] | None = None,
        aspect_by_id: dict[str, str] | None = None,
        default_polarity: str | None = None,
    ):
        self.polarity_by_id = dict(polarity_by_id or {})
        self.aspect_by_id = dict(aspect_by_id or {})
        self.default_polarity = default_polarity
        self.calls = 0

    @staticmethod
    def _hash_pick(key: str) -> str:
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        return ("positive", "negative", "neutral")[digest[0] % 3]

    def _aspect_for(self, request: GenerationRequest) -> str:
        if request.prompt.example_id in self.aspect_by_id:
            return self.aspect_by_id[request.prompt.example_id]
        m = _ASPECT_FROM_PROMPT.search(request.prompt.text)
        return m.group(1) if m else "the aspect"

    def complete(self, request: GenerationRequest) -> str:
        self.calls += 1
        eid = request.prompt.example_id
        label = self.polarity_by_id.get(eid) or self.default_polarity or self._hash_pick(
            eid or request.prompt.text
        )
        return self._TEMPLATE.format(t=self._aspect_for(request), y=label)


def agreement_polarity_map(
    examples, agreement: float, miss: Callable[[str], str] | None = None
) -> dict[str, str]:
    """Assign each example its gold polarity with probability ``agreement``
    (decided by a stable hash, so the split is reproducible) and a fixed
    wrong label otherwise. Drives the templated mock in pipeline runs."""
    if not 0.0 <= agreement <= 1.0:
        raise ValueError("agreement must be in [0, 1]")
    wrong = {"positive": "negative", "negative": "positive", "neutral": "negative"}
    out: dict[str, str] = {}
    for ex in examples:
        digest = hashlib.sha256(f"agree:{ex.id}".encode("utf-8")).digest()
        agree = (digest[0] / 256.0) < agreement
        if agree:
            out[ex.id] = ex.polarity
        else:
            out[ex.id] = miss(ex.polarity) if miss else wrong[ex.polarity]
    return out
