"""Client for chat-completion endpoints that synthesize answers.

Speaks the OpenAI-compatible chat-completions JSON schema so hosted and
locally served models interchange freely. Every completed generation is
persisted to an append-only JSONL cache keyed by a content hash of
(model, prompt type, question id, prompt text); repeat calls are served from
disk without network I/O, making large generation runs resumable. Transient
HTTP failures (429, 5xx) retry with exponential backoff; batches run under a
bounded thread pool and report failures per item.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

from .corpus import GENERATED, Answer
from .prompt import RenderedPrompt

log = logging.getLogger(__name__)

CACHE_KEY_SEP = "\x1f"
DEFAULT_CACHE_DIR = "gen_cache"
DEFAULT_MAX_IN_FLIGHT = 4

_UNSAFE_PATH = re.compile(r"[^A-Za-z0-9._-]+")


def cache_key(model_name: str, prompt_type: str, question_id: str, prompt_text: str) -> str:
    payload = CACHE_KEY_SEP.join((model_name, prompt_type, question_id, prompt_text))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class GenParams:
    model_name: str
    endpoint_url: str = "https://api.openai.com/v1/chat/completions"
    temperature: float = 1.0
    max_tokens: int = 500
    api_key_env: str = "SYNTHPQA_API_KEY"

    def __post_init__(self):
        if not self.model_name:
            raise ValueError("model_name must be non-empty")
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")


@dataclass(frozen=True)
class GenRecord:
    cache_key: str
    question_id: str
    prompt_type: str
    model_name: str
    prompt_text: str
    answer_text: str
    created_at: int
    usage: dict | None = None


@dataclass(frozen=True)
class GenFailure:
    question_id: str
    prompt_type: str
    error: str
    kind: str
    attempts: int


class GenerationError(Exception):
    def __init__(self, message: str, kind: str, attempts: int = 1):
        super().__init__(message)
        self.kind = kind
        self.attempts = attempts


@dataclass(frozen=True)
class RetryPolicy:
    base_delay: float = 1.0
    factor: float = 2.0
    max_attempts: int = 5
    sleep: Callable[[float], None] = time.sleep

    def delay(self, attempt: int) -> float:
        """Seconds to wait after the given 1-based failed attempt."""
        return self.base_delay * self.factor ** (attempt - 1)


class Backend(Protocol):
    def complete(self, prompt_text: str, params: GenParams) -> tuple[str, dict | None]:
        """Return (answer_text, usage) for one prompt; raise GenerationError."""
        ...


class HttpBackend:
    """Chat-completion calls over httpx; the transport is injectable for tests."""

    def __init__(self, retry: RetryPolicy = RetryPolicy(), transport=None, timeout: float = 60.0):
        self.retry = retry
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def complete(self, prompt_text: str, params: GenParams) -> tuple[str, dict | None]:
        headers = {}
        api_key = os.environ.get(params.api_key_env, "") if params.api_key_env else ""
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": params.model_name,
            "messages": [{"role": "user", "content": prompt_text}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        last_error = "unknown"
        for attempt in range(1, self.retry.max_attempts + 1):
            try:
                resp = self._client.post(params.endpoint_url, json=body, headers=headers)
            except httpx.TransportError as exc:
                last_error = f"network error: {exc}"
                log.warning("attempt %d/%d failed: %s", attempt, self.retry.max_attempts, exc)
            else:
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_error = f"HTTP {resp.status_code}"
                    log.warning("attempt %d/%d got %s", attempt, self.retry.max_attempts,
                                last_error)
                elif resp.status_code >= 400:
                    raise GenerationError(f"HTTP {resp.status_code}: {resp.text[:200]}",
                                          kind="http_status", attempts=attempt)
                else:
                    return self._parse(resp, attempt)
            if attempt < self.retry.max_attempts:
                self.retry.sleep(self.retry.delay(attempt))
        raise GenerationError(f"gave up after {self.retry.max_attempts} attempts: {last_error}",
                              kind="retries_exhausted", attempts=self.retry.max_attempts)

    @staticmethod
    def _parse(resp: httpx.Response, attempt: int) -> tuple[str, dict | None]:
        try:
            payload = resp.json()
            text = payload["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise GenerationError(f"malformed completion response: {exc}",
                                  kind="malformed_response", attempts=attempt)
        if not isinstance(text, str) or not text.strip():
            raise GenerationError("model returned an empty completion",
                                  kind="empty_generation", attempts=attempt)
        usage = payload.get("usage")
        return text, usage if isinstance(usage, dict) else None


class MockBackend:
    """Offline deterministic stand-in: echoes a digest of the request.

    The text depends only on (model, prompt text), so repeat runs are
    byte-identical. Useful for dry runs and end-to-end tests.
    """

    def complete(self, prompt_text: str, params: GenParams) -> tuple[str, dict | None]:
        digest = hashlib.sha256(
            f"{params.model_name}{CACHE_KEY_SEP}{prompt_text}".encode("utf-8")).hexdigest()
        text = f"[{params.model_name} mock {digest[:12]}] {prompt_text}"
        return text, {"prompt_tokens": len(prompt_text.split()),
                      "completion_tokens": len(text.split())}


class GenCache:
    """Append-only JSONL record store under cache_dir/<model>/<prompt_type>.jsonl.

    An in-memory key index is built per file on first touch; appends are
    single-writer (lock) and flushed per record, so a crash loses at most the
    in-flight generations.
    """

    def __init__(self, cache_dir: str | Path = DEFAULT_CACHE_DIR, fsync: bool = False):
        self.cache_dir = Path(cache_dir)
        self.fsync = fsync
        self._lock = threading.Lock()
        self._index: dict[Path, dict[str, GenRecord]] = {}

    def _file_for(self, model_name: str, prompt_type: str) -> Path:
        safe_model = _UNSAFE_PATH.sub("_", model_name) or "model"
        safe_prompt = _UNSAFE_PATH.sub("_", prompt_type) or "prompt"
        return self.cache_dir / safe_model / f"{safe_prompt}.jsonl"

    def _load(self, path: Path) -> dict[str, GenRecord]:
        if path in self._index:
            return self._index[path]
        records: dict[str, GenRecord] = {}
        if path.exists():
            with open(path, "r", encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        raw = json.loads(line)
                        record = GenRecord(**raw)
                    except (ValueError, TypeError) as exc:
                        raise ValueError(f"{path}:{lineno}: bad cache record: {exc}")
                    records.setdefault(record.cache_key, record)
        self._index[path] = records
        return records

    def get(self, model_name: str, prompt_type: str, key: str) -> GenRecord | None:
        with self._lock:
            return self._load(self._file_for(model_name, prompt_type)).get(key)

    def put(self, record: GenRecord) -> None:
        path = self._file_for(record.model_name, record.prompt_type)
        with self._lock:
            records = self._load(path)
            if record.cache_key in records:
                return
            path.parent.mkdir(parents=True, exist_ok=True)
            line = json.dumps(record.__dict__, sort_keys=True, ensure_ascii=False)
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                if self.fsync:
                    os.fsync(fh.fileno())
            records[record.cache_key] = record

    def records(self, model_name: str, prompt_type: str) -> list[GenRecord]:
        with self._lock:
            return list(self._load(self._file_for(model_name, prompt_type)).values())


class GenClient:
    """Generation driver tying together params, backend, retry, and cache."""

    def __init__(
        self,
        params: GenParams,
        cache: GenCache | None = None,
        backend: Backend | None = None,
        retry: RetryPolicy = RetryPolicy(),
        transport=None,
        clock: Callable[[], float] = time.time,
    ):
        self.params = params
        self.cache = cache if cache is not None else GenCache()
        self.backend = backend if backend is not None else HttpBackend(retry=retry,
                                                                       transport=transport)
        self.clock = clock

    def generate_one(self, prompt: RenderedPrompt) -> GenRecord:
        """Resolve one prompt from cache or the backend; persist on success."""
        key = cache_key(self.params.model_name, prompt.prompt_type,
                        prompt.question_id, prompt.text)
        hit = self.cache.get(self.params.model_name, prompt.prompt_type, key)
        if hit is not None:
            return hit
        answer_text, usage = self.backend.complete(prompt.text, self.params)
        record = GenRecord(
            cache_key=key,
            question_id=prompt.question_id,
            prompt_type=prompt.prompt_type,
            model_name=self.params.model_name,
            prompt_text=prompt.text,
            answer_text=answer_text,
            created_at=int(self.clock()),
            usage=usage,
        )
        self.cache.put(record)
        return record

    def generate_batch(
        self,
        prompts: Sequence[RenderedPrompt],
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
    ) -> list[GenRecord | GenFailure]:
        """Resolve many prompts with bounded parallelism.

        Output index i corresponds to prompts[i]; failed items come back as
        GenFailure instead of aborting the batch.
        """
        if max_in_flight < 1:
            raise ValueError(f"max_in_flight must be >= 1, got {max_in_flight}")

        def _one(prompt: RenderedPrompt) -> GenRecord | GenFailure:
            try:
                return self.generate_one(prompt)
            except GenerationError as exc:
                log.error("generation failed for %s/%s: %s",
                          prompt.question_id, prompt.prompt_type, exc)
                return GenFailure(question_id=prompt.question_id,
                                  prompt_type=prompt.prompt_type,
                                  error=str(exc), kind=exc.kind, attempts=exc.attempts)

        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            return list(pool.map(_one, prompts))


def record_to_answer(record: GenRecord) -> Answer:
    """Present a generation as a corpus Answer with a collision-free id."""
    return Answer(
        id=f"gen::{record.model_name}::{record.prompt_type}::{record.question_id}",
        question_id=record.question_id,
        text=record.answer_text,
        source=GENERATED,
        model_name=record.model_name,
        prompt_type=record.prompt_type,
        created_at=record.created_at,
    )
