"""Chat-completion client with cassette recording and replay.

Wire format is the OpenAI-compatible ``POST {endpoint}/chat/completions``.
Cassettes are JSON Lines; each line holds ``digest``, ``request``,
``response`` and ``timestamp``. Replay looks entries up by digest only, so
the order of calls does not matter.

Digest: SHA-256 over the UTF-8 bytes of
``json.dumps({"model", "system", "user", "temperature"}, sort_keys=True,
separators=(",", ":"), ensure_ascii=False)`` with temperature as a float.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal

import httpx

log = logging.getLogger(__name__)

GatewayMode = Literal["live", "record", "replay"]
DEFAULT_ENDPOINT = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-4-turbo-2024-04-09"
API_KEY_ENV = "WMREASON_API_KEY"
FALLBACK_KEY_ENV = "OPENAI_API_KEY"

_TRANSIENT_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


class GatewayError(RuntimeError):
    """kind is one of network, http_status, cassette_miss, exhausted_retries."""

    def __init__(self, kind: str, message: str, *, digest: str | None = None, status: int | None = None):
        super().__init__(f"{kind}: {message}")
        self.kind = kind
        self.digest = digest
        self.status = status


@dataclass
class GatewayConfig:
    endpoint: str = DEFAULT_ENDPOINT
    model: str = DEFAULT_MODEL
    temperature: float = 0.0
    max_retries: int = 3
    mode: GatewayMode = "live"
    cassette: str | os.PathLike | None = None
    timeout: float = 60.0
    backoff: float = 1.0
    api_key_env: str = API_KEY_ENV

    def __post_init__(self):
        if self.mode not in ("live", "record", "replay"):
            raise ValueError(f"unknown gateway mode {self.mode!r}")
        if self.mode in ("record", "replay") and not self.cassette:
            raise ValueError(f"{self.mode} mode needs a cassette path")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env) or os.environ.get(FALLBACK_KEY_ENV)


def request_digest(model: str, system: str, user: str, temperature: float) -> str:
    payload = json.dumps(
        {"model": model, "system": system, "user": user, "temperature": float(temperature)},
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Cassette:
    """Digest-indexed store of recorded exchanges, backed by a JSONL file."""

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self._entries: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    if not line.strip():
                        continue
                    try:
                        entry = json.loads(line)
                        self._entries[entry["digest"]] = entry
                    except (json.JSONDecodeError, KeyError) as exc:
                        raise ValueError(f"{self.path}:{lineno}: bad cassette entry ({exc})") from exc

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, digest: str) -> bool:
        return digest in self._entries

    def get(self, digest: str) -> dict | None:
        return self._entries.get(digest)

    def append(self, digest: str, request: dict, response: str) -> None:
        entry = {
            "digest": digest,
            "request": request,
            "response": response,
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }
        with self._lock:
            if digest in self._entries:
                return
            self._entries[digest] = entry
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, ensure_ascii=False) + "\n")


class Gateway:
    """Thread-safe completion client. `live_calls` counts real HTTP round trips."""

    def __init__(self, config: GatewayConfig, client: httpx.Client | None = None):
        self.config = config
        self.cassette = Cassette(config.cassette) if config.cassette else None
        self._client = client
        self._count_lock = threading.Lock()
        self.live_calls = 0
        self.replayed = 0

    def complete(self, system: str, user: str) -> str:
        cfg = self.config
        digest = request_digest(cfg.model, system, user, cfg.temperature)
        if cfg.mode in ("replay", "record") and self.cassette is not None:
            hit = self.cassette.get(digest)
            if hit is not None:
                with self._count_lock:
                    self.replayed += 1
                return hit["response"]
            if cfg.mode == "replay":
                raise GatewayError(
                    "cassette_miss",
                    f"no recorded response for digest {digest} in {self.cassette.path}",
                    digest=digest,
                )
        request = self._request_body(system, user)
        text = self._post(request)
        if cfg.mode == "record":
            self.cassette.append(digest, request, text)
        return text

    def _request_body(self, system: str, user: str) -> dict:
        messages = []
        if system:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": user})
        return {
            "model": self.config.model,
            "messages": messages,
            "temperature": float(self.config.temperature),
        }

    def _post(self, body: dict) -> str:
        cfg = self.config
        headers = {"Content-Type": "application/json"}
        key = cfg.api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        url = cfg.endpoint.rstrip("/") + "/chat/completions"
        client = self._client or httpx.Client(timeout=cfg.timeout)
        last: GatewayError | None = None
        try:
            for attempt in range(cfg.max_retries + 1):
                if attempt:
                    time.sleep(cfg.backoff * 2 ** (attempt - 1))
                with self._count_lock:
                    self.live_calls += 1
                try:
                    resp = client.post(url, json=body, headers=headers)
                except httpx.HTTPError as exc:
                    last = GatewayError("network", str(exc))
                    log.warning("gateway attempt %d failed: %s", attempt + 1, exc)
                    continue
                if resp.status_code in _TRANSIENT_STATUS:
                    last = GatewayError("http_status", f"HTTP {resp.status_code}", status=resp.status_code)
                    log.warning("gateway attempt %d got HTTP %d", attempt + 1, resp.status_code)
                    continue
                if resp.status_code >= 400:
                    raise GatewayError("http_status", f"HTTP {resp.status_code}: {resp.text[:200]}", status=resp.status_code)
                try:
                    return resp.json()["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise GatewayError("http_status", f"malformed completion body: {exc}") from exc
        finally:
            if self._client is None:
                client.close()
        if cfg.max_retries == 0 and last is not None:
            raise last
        raise GatewayError("exhausted_retries", f"{cfg.max_retries + 1} attempts failed; last: {last}")
