"""Backend-agnostic chat completions with a persistent, replayable cache.

Every completion is cache-first: a warm cache answers without touching any
backend, which makes whole pipeline runs byte-reproducible and free. The
http backend speaks the common `POST /v1/chat/completions` wire format.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import requests

from .errors import AuthMissing, BackendUnavailable, CacheMiss, MalformedFile

API_KEY_ENV = "POLICYX_API_KEY"
RETRYABLE_STATUS = (429, 500, 502, 503, 504)


@dataclass(frozen=True)
class CompletionRequest:
    """One chat-completion exchange request.

    `tag` is routing metadata for the mock backend ("record-id/role-or-method")
    and is deliberately excluded from the cache identity.
    """

    model_id: str
    user_text: str
    system_text: str | None = None
    temperature: float = 0.0
    max_tokens: int = 1024
    tag: str | None = None


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    backend: str
    latency_ms: float
    from_cache: bool


def cache_key(req: CompletionRequest) -> str:
    """Stable digest of the request content (field-order independent).

    Text is hashed byte-for-byte; even trailing whitespace changes the key.
    """
    payload = json.dumps(
        {
            "model_id": req.model_id,
            "system_text": req.system_text,
            "user_text": req.user_text,
            "temperature": req.temperature,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache:
    """One JSON file per response under `<dir>/<first-2-hex>/<digest>.json`."""

    def __init__(self, cache_dir: str | Path):
        self.root = Path(cache_dir)

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> str | None:
        path = self._path(key)
        if not path.is_file():
            return None
        entry = json.loads(path.read_text(encoding="utf-8"))
        return entry["response_text"]

    def put(self, key: str, req: CompletionRequest, text: str) -> None:
        """Atomic write; an existing entry is kept (one response per key)."""
        path = self._path(key)
        if path.exists():
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        entry = {
            "request": {
                "model_id": req.model_id,
                "system_text": req.system_text,
                "user_text": req.user_text,
                "temperature": req.temperature,
                "max_tokens": req.max_tokens,
            },
            "response_text": text,
            "timestamp": time.time(),
        }
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(entry, fh, ensure_ascii=False)
            os.replace(tmp_name, path)
        finally:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)

    def entries(self) -> list[Path]:
        if not self.root.is_dir():
            return []
        return sorted(self.root.glob("*/*.json"))

    def stats(self) -> dict[str, int]:
        files = self.entries()
        return {"entries": len(files), "bytes": sum(p.stat().st_size for p in files)}

    def prune(self, older_than_s: float | None = None) -> int:
        """Delete entries (optionally only those older than a cutoff)."""
        now = time.time()
        removed = 0
        for path in self.entries():
            if older_than_s is not None and now - path.stat().st_mtime < older_than_s:
                continue
            path.unlink()
            removed += 1
        return removed


@dataclass(frozen=True)
class BackendConfig:
    """Which backend to talk to and how."""

    kind: str  # http | mock | replay
    base_url: str = ""
    model_id: str = ""
    api_key_env: str = API_KEY_ENV
    max_attempts: int = 3
    timeout_s: float = 60.0
    backoff_base_s: float = 0.5
    script_path: str | None = None

    def __post_init__(self):
        if self.kind not in ("http", "mock", "replay"):
            raise ValueError(f"unknown backend kind {self.kind!r}")


def load_mock_script(path: str | Path) -> dict[str, str]:
    """Load a mock script: JSON map "record-id/role-or-method" -> response."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedFile(f"cannot read mock script {path}: {exc}") from exc
    if not isinstance(data, dict) or not all(isinstance(v, str) for v in data.values()):
        raise MalformedFile(f"mock script {path} must map strings to strings")
    return data


class LlmGateway:
    """Issues completions through one backend with a shared response cache.

    Safe for concurrent use; a bounded semaphore caps in-flight backend calls.
    """

    def __init__(
        self,
        backend: BackendConfig,
        cache_dir: str | Path,
        concurrency_limit: int = 4,
        mock_script: dict[str, str] | None = None,
        post_fn: Callable | None = None,
        sleep_fn: Callable[[float], None] = time.sleep,
    ):
        if concurrency_limit < 1:
            raise ValueError("concurrency_limit must be >= 1")
        self.backend = backend
        self.cache = ResponseCache(cache_dir)
        self._semaphore = threading.BoundedSemaphore(concurrency_limit)
        self._post = post_fn if post_fn is not None else requests.post
        self._sleep = sleep_fn
        if backend.kind == "mock":
            if mock_script is None:
                if backend.script_path is None:
                    raise ValueError("mock backend needs a script")
                mock_script = load_mock_script(backend.script_path)
            self._script = mock_script
        else:
            self._script = {}

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        """Cache-first completion; see the backend-specific error contract."""
        start = time.perf_counter()
        key = cache_key(req)
        cached = self.cache.get(key)
        if cached is not None:
            return CompletionResponse(
                text=cached,
                backend=self.backend.kind,
                latency_ms=(time.perf_counter() - start) * 1000.0,
                from_cache=True,
            )
        if self.backend.kind == "replay":
            raise CacheMiss(f"replay backend has no cached response for key {key}")

        with self._semaphore:
            if self.backend.kind == "mock":
                text = self._mock_send(req)
            else:
                text = self._http_send(req)
        self.cache.put(key, req, text)
        return CompletionResponse(
            text=text,
            backend=self.backend.kind,
            latency_ms=(time.perf_counter() - start) * 1000.0,
            from_cache=False,
        )

    def _mock_send(self, req: CompletionRequest) -> str:
        if req.tag is None or req.tag not in self._script:
            raise BackendUnavailable(f"mock script has no entry for tag {req.tag!r}")
        return self._script[req.tag]

    def _http_send(self, req: CompletionRequest) -> str:
        api_key = os.environ.get(self.backend.api_key_env, "").strip()
        if not api_key:
            raise AuthMissing(
                f"http backend selected but {self.backend.api_key_env} is not set"
            )
        if not self.backend.base_url:
            raise BackendUnavailable("http backend needs a base_url")

        messages = []
        if req.system_text:
            messages.append({"role": "system", "content": req.system_text})
        messages.append({"role": "user", "content": req.user_text})
        body = {
            "model": req.model_id,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        url = self.backend.base_url.rstrip("/") + "/v1/chat/completions"

        last_error: Exception | None = None
        for attempt in range(self.backend.max_attempts):
            if attempt:
                self._sleep(self.backend.backoff_base_s * (2 ** (attempt - 1)))
            try:
                resp = self._post(
                    url,
                    headers={
                        "Authorization": f"Bearer {api_key}",
                        "Content-Type": "application/json",
                    },
                    json=body,
                    timeout=self.backend.timeout_s,
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code in RETRYABLE_STATUS:
                last_error = BackendUnavailable(f"HTTP {resp.status_code} from {url}")
                continue
            if resp.status_code != 200:
                raise BackendUnavailable(f"HTTP {resp.status_code} from {url}")
            try:
                data = resp.json()
                return data["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendUnavailable(f"malformed completion payload: {exc}") from exc
        raise BackendUnavailable(
            f"giving up after {self.backend.max_attempts} attempts: {last_error}"
        )
