"""Chat-completion access with caching, retries, and token accounting.

One configured backend per gateway: either a deterministic offline mock or
a JSON-over-HTTP endpoint speaking the common chat-completion protocol.
Responses are cached in a line-oriented JSON file keyed by a digest of the
full request, so repeated runs never hit the backend twice for the same
prompt.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

from .errors import GatewayError, ProtocolError

Tokenizer = Callable[[str], int]


def count_tokens(text: str) -> int:
    """Approximate token count: whitespace word count x 4/3, rounded up.

    Deterministic and monotone under text extension. An exact tokenizer can
    be plugged in wherever a ``Tokenizer`` is accepted; this is the default
    used for budget checks and for backends that do not report usage.
    """
    words = len(text.split())
    return (4 * words + 2) // 3


@dataclass(frozen=True)
class ChatRequest:
    model: str
    user_text: str
    system_text: str | None = None
    max_output_tokens: int = 256
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def digest(self) -> str:
        """SHA-256 over every request field; equal requests hash equally."""
        payload = json.dumps(
            {
                "model": self.model,
                "system_text": self.system_text,
                "user_text": self.user_text,
                "max_output_tokens": self.max_output_tokens,
                "temperature": self.temperature,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatResponse:
    text: str
    input_tokens: int
    output_tokens: int
    cached: bool
    token_source: str = "backend"  # "backend" | "approximate"


@dataclass(frozen=True)
class CacheEntry:
    request_hash: str
    model: str
    text: str
    input_tokens: int
    output_tokens: int
    timestamp: float


@dataclass(frozen=True)
class BackendReply:
    """Raw backend output; token counts are None when the backend reports none."""

    text: str
    input_tokens: int | None = None
    output_tokens: int | None = None


class TransportError(Exception):
    """Retriable backend failure (connection, timeout, throttling, 5xx)."""


class ResponseCache:
    """Append-only JSONL store of responses, one live entry per request hash.

    Appends are serialized through a single lock; lookups read an in-memory
    dict rebuilt from the file at open time (last write wins on duplicate
    hashes).
    """

    FIELDS = ("hash", "model", "text", "in_tok", "out_tok", "ts")

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, CacheEntry] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    raw = json.loads(line)
                    entry = CacheEntry(
                        request_hash=raw["hash"],
                        model=raw["model"],
                        text=raw["text"],
                        input_tokens=int(raw["in_tok"]),
                        output_tokens=int(raw["out_tok"]),
                        timestamp=float(raw["ts"]),
                    )
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise GatewayError(
                        f"corrupt cache line {self.path}:{line_no}: {exc}"
                    ) from exc
                self._entries[entry.request_hash] = entry

    def get(self, request_hash: str) -> CacheEntry | None:
        return self._entries.get(request_hash)

    def put(self, entry: CacheEntry) -> None:
        record = {
            "hash": entry.request_hash,
            "model": entry.model,
            "text": entry.text,
            "in_tok": entry.input_tokens,
            "out_tok": entry.output_tokens,
            "ts": entry.timestamp,
        }
        line = json.dumps(record, sort_keys=True, ensure_ascii=False)
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
            self._entries[entry.request_hash] = entry

    def entries(self) -> Iterator[CacheEntry]:
        return iter(list(self._entries.values()))

    def __len__(self) -> int:
        return len(self._entries)


_SUMMARY_BUDGET_RE = re.compile(r"about (\d+) tokens")


class MockBackend:
    """Deterministic offline backend for dry runs and tests.

    The reply depends only on (seed, request digest), so transcripts are
    reproducible across processes. Judge-style prompts (a ``Query:`` plus a
    ``Passage:`` section) get a pseudo-random grade in 0-3; summary-style
    prompts (a trailing ``Document:`` section with a token budget) get an
    extractive prefix of the document that fits the stated budget under the
    approximate tokenizer.
    """

    def __init__(self, seed: int):
        self.seed = seed

    def send(self, req: ChatRequest) -> BackendReply:
        text = self._reply_text(req)
        in_tok = count_tokens((req.system_text or "") + "\n" + req.user_text)
        return BackendReply(text=text, input_tokens=in_tok, output_tokens=count_tokens(text))

    def _reply_text(self, req: ChatRequest) -> str:
        h = hashlib.sha256(f"{self.seed}:{req.digest()}".encode("utf-8")).digest()
        user = req.user_text
        if "Passage:" in user and "Query:" in user:
            return str(h[0] % 4)
        if "Document:" in user:
            doc = user.rsplit("Document:", 1)[1].strip()
            if not doc:
                return "NO_CONTENT"
            match = _SUMMARY_BUDGET_RE.search(user)
            budget = int(match.group(1)) if match else req.max_output_tokens
            max_words = (3 * budget) // 4  # ceil(words * 4/3) <= budget
            return " ".join(doc.split()[:max_words])
        return f"ok {h.hex()[:12]}"


class HttpBackend:
    """JSON-over-HTTP chat-completion backend (OpenAI-style payloads).

    The API key is read from the environment variable named in the config;
    the request body carries model, messages, temperature, and max_tokens.
    Transport-level failures (including 429/5xx) raise TransportError and
    are retried by the gateway; unparseable payloads raise ProtocolError.
    """

    def __init__(self, endpoint: str, api_key_env: str = "", timeout: float = 60.0):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout = timeout

    def send(self, req: ChatRequest) -> BackendReply:
        messages = []
        if req.system_text:
            messages.append({"role": "system", "content": req.system_text})
        messages.append({"role": "user", "content": req.user_text})
        body = json.dumps(
            {
                "model": req.model,
                "messages": messages,
                "temperature": req.temperature,
                "max_tokens": req.max_output_tokens,
            }
        ).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        request = urllib.request.Request(self.endpoint, data=body, headers=headers)
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                payload = resp.read()
        except urllib.error.HTTPError as exc:
            if exc.code == 429 or exc.code >= 500:
                raise TransportError(f"HTTP {exc.code}") from exc
            raise ProtocolError(f"HTTP {exc.code} from backend") from exc
        except (urllib.error.URLError, OSError) as exc:
            raise TransportError(str(exc)) from exc
        return self._parse(payload)

    @staticmethod
    def _parse(payload: bytes) -> BackendReply:
        try:
            data = json.loads(payload)
            text = data["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"unexpected backend payload: {exc}") from exc
        usage = data.get("usage") or {}
        in_tok = usage.get("prompt_tokens")
        out_tok = usage.get("completion_tokens")
        return BackendReply(
            text=text,
            input_tokens=int(in_tok) if in_tok is not None else None,
            output_tokens=int(out_tok) if out_tok is not None else None,
        )


class Gateway:
    """Cached, retrying front door to a single chat backend.

    ``complete`` is safe for concurrent callers: at most ``max_in_flight``
    backend calls run at once, cache appends go through one writer lock,
    and concurrent identical requests are deduplicated so each distinct
    request digest hits the backend at most once.
    """

    def __init__(
        self,
        backend,
        cache_path: str | Path,
        *,
        max_attempts: int = 5,
        backoff_base: float = 1.0,
        max_in_flight: int = 8,
        tokenizer: Tokenizer = count_tokens,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.time,
    ):
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.backend = backend
        self.cache = ResponseCache(cache_path)
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.tokenizer = tokenizer
        self._sleep = sleep
        self._clock = clock
        self._inflight = threading.BoundedSemaphore(max_in_flight)
        self._jitter = random.Random(0)
        self._hash_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._stats_lock = threading.Lock()
        self.backend_calls = 0
        self.cache_hits = 0

    def now(self) -> float:
        return self._clock()

    def complete(self, req: ChatRequest) -> ChatResponse:
        request_hash = req.digest()
        entry = self.cache.get(request_hash)
        if entry is not None:
            return self._from_cache(entry)
        with self._locks_guard:
            lock = self._hash_locks.setdefault(request_hash, threading.Lock())
        with lock:
            entry = self.cache.get(request_hash)
            if entry is not None:
                return self._from_cache(entry)
            reply = self._call_with_retries(req)
            token_source = "backend"
            in_tok, out_tok = reply.input_tokens, reply.output_tokens
            if in_tok is None or out_tok is None:
                token_source = "approximate"
                in_tok = self.tokenizer((req.system_text or "") + "\n" + req.user_text)
                out_tok = self.tokenizer(reply.text)
            self.cache.put(
                CacheEntry(
                    request_hash=request_hash,
                    model=req.model,
                    text=reply.text,
                    input_tokens=in_tok,
                    output_tokens=out_tok,
                    timestamp=self._clock(),
                )
            )
            return ChatResponse(
                text=reply.text,
                input_tokens=in_tok,
                output_tokens=out_tok,
                cached=False,
                token_source=token_source,
            )

    def _from_cache(self, entry: CacheEntry) -> ChatResponse:
        with self._stats_lock:
            self.cache_hits += 1
        return ChatResponse(
            text=entry.text,
            input_tokens=entry.input_tokens,
            output_tokens=entry.output_tokens,
            cached=True,
            token_source="backend",
        )

    def _call_with_retries(self, req: ChatRequest) -> BackendReply:
        for attempt in range(1, self.max_attempts + 1):
            try:
                with self._inflight:
                    with self._stats_lock:
                        self.backend_calls += 1
                    return self.backend.send(req)
            except TransportError as exc:
                if attempt == self.max_attempts:
                    raise GatewayError(
                        f"backend failed after {attempt} attempts: {exc}",
                        attempts=attempt,
                    ) from exc
                delay = self.backoff_base * (2 ** (attempt - 1))
                self._sleep(delay * (0.5 + self._jitter.random() / 2))
        raise AssertionError("unreachable")
