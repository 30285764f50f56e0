"""Sentence-level translation behind a provider interface.

A provider turns a list of :class:`TranslationUnit` into
:class:`TranslationResult` objects matched by id.  Three providers ship:
identity (test oracle), a JSONL lookup file, and an HTTP client.  Every
call through :func:`translate_batch` goes through a content-hash cache,
which can be persisted as an append-only JSONL file.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import httpx
from filelock import FileLock

logger = logging.getLogger(__name__)

CACHE_ENV = "QAFORGE_CACHE_DIR"
TOKEN_ENV = "QAFORGE_HTTP_TOKEN"


class TranslationError(Exception):
    pass


class ProviderUnavailable(TranslationError):
    """Transport failure; retrying later may succeed."""


class MissingResult(TranslationError):
    def __init__(self, unit_id: str):
        super().__init__(f"provider returned no result for unit {unit_id!r}")
        self.unit_id = unit_id


class UnresolvedSource(TranslationError):
    def __init__(self, text: str):
        super().__init__(f"no translation on file for {text!r}")
        self.text = text


@dataclass(frozen=True)
class TranslationUnit:
    id: str
    source_text: str
    source_lang: str
    target_lang: str


@dataclass(frozen=True)
class TranslationResult:
    id: str
    target_text: str


class Provider(Protocol):
    name: str
    calls: int

    def translate(self, units: Sequence[TranslationUnit]) -> list[TranslationResult]: ...


class IdentityProvider:
    name = "identity"

    def __init__(self):
        self.calls = 0

    def translate(self, units):
        self.calls += 1
        return [TranslationResult(u.id, u.source_text) for u in units]


def identity_provider() -> IdentityProvider:
    return IdentityProvider()


class FileProvider:
    """Exact-match lookup in a JSONL file of ``{"src", "tgt", "src_lang", "tgt_lang"}``."""

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self.calls = 0
        raw = self.path.read_bytes()
        self.name = "file:" + hashlib.sha256(raw).hexdigest()[:16]
        self._table: dict[tuple[str, str | None, str | None], str] = {}
        for lineno, line in enumerate(raw.decode("utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                src, tgt = rec["src"], rec["tgt"]
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{self.path}:{lineno}: bad translation record ({exc})") from None
            self._table[(src, rec.get("src_lang"), rec.get("tgt_lang"))] = tgt
            self._table.setdefault((src, None, None), tgt)

    def translate(self, units):
        self.calls += 1
        out = []
        for u in units:
            tgt = self._table.get((u.source_text, u.source_lang, u.target_lang))
            if tgt is None:
                tgt = self._table.get((u.source_text, None, None))
            if tgt is None:
                raise UnresolvedSource(u.source_text)
            out.append(TranslationResult(u.id, tgt))
        return out


def file_provider(path) -> FileProvider:
    return FileProvider(path)


class HttpProvider:
    """Client for ``POST <endpoint>/translate``.

    Request ``{"units": [{"id", "text", "src_lang", "tgt_lang"}]}``, response
    ``{"results": [{"id", "text"}]}``.  Anything but HTTP 200 is retried with
    exponential backoff, at most ``max_attempts`` times in total.
    """

    def __init__(
        self,
        endpoint: str,
        auth: str | None = None,
        batch_size: int = 32,
        max_attempts: int = 5,
        backoff: float = 0.5,
        timeout: float = 60.0,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.name = "http:" + self.endpoint
        self.batch_size = batch_size
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.calls = 0
        headers = {"Authorization": f"Bearer {auth}"} if auth else {}
        self._client = httpx.Client(headers=headers, timeout=timeout)
        self._lock = threading.Lock()

    def _post(self, units: Sequence[TranslationUnit]) -> list[TranslationResult]:
        body = {
            "units": [
                {"id": u.id, "text": u.source_text, "src_lang": u.source_lang, "tgt_lang": u.target_lang}
                for u in units
            ]
        }
        last = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            with self._lock:
                self.calls += 1
            try:
                resp = self._client.post(self.endpoint + "/translate", json=body)
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code != 200:
                last = f"HTTP {resp.status_code}"
                continue
            try:
                results = resp.json()["results"]
                return [TranslationResult(str(r["id"]), r["text"]) for r in results]
            except (ValueError, KeyError, TypeError) as exc:
                last = f"malformed response: {exc}"
        raise ProviderUnavailable(f"{self.endpoint}: gave up after {self.max_attempts} attempts ({last})")

    def translate(self, units):
        out = []
        for k in range(0, len(units), self.batch_size):
            out.extend(self._post(units[k:k + self.batch_size]))
        return out

    def close(self):
        self._client.close()


def http_provider(endpoint: str, auth: str | None = None, **kwargs) -> HttpProvider:
    return HttpProvider(endpoint, auth=auth, **kwargs)


def make_provider(spec: str):
    """Build a provider from ``identity``, ``file:<path>`` or ``http:<url>``."""
    if spec == "identity":
        return IdentityProvider()
    kind, _, rest = spec.partition(":")
    if kind == "file" and rest:
        return FileProvider(rest)
    if kind == "http" and rest:
        return HttpProvider(rest, auth=os.environ.get(TOKEN_ENV))
    raise ValueError(f"unknown provider spec {spec!r} (expected identity, file:<path> or http:<url>)")


# ---------------------------------------------------------------------------
# Cache

def cache_key(provider_name: str, unit: TranslationUnit) -> str:
    payload = "\x1f".join((provider_name, unit.source_lang, unit.target_lang, unit.source_text))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class TranslationCache:
    """Content-hash cache, in memory or backed by an append-only JSONL file.

    Appends hold a file lock, so several processes may share one file.
    Empty translations are never stored.
    """

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else None
        self._data: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as f:
                for line in f:
                    try:
                        rec = json.loads(line)
                        self._data[rec["key"]] = rec["tgt"]
                    except (ValueError, KeyError, TypeError):
                        # a torn last line from an interrupted run
                        logger.warning("skipping unreadable cache line in %s", self.path)

    @classmethod
    def default(cls) -> "TranslationCache":
        root = os.environ.get(CACHE_ENV)
        base = Path(root) if root else Path.home() / ".cache" / "qaforge"
        base.mkdir(parents=True, exist_ok=True)
        return cls(base / "translations.jsonl")

    def __len__(self) -> int:
        return len(self._data)

    def get(self, key: str) -> str | None:
        return self._data.get(key)

    def put_many(self, items: Iterable[tuple[str, str]]) -> None:
        fresh = [(k, v) for k, v in items if v.strip() and k not in self._data]
        if not fresh:
            return
        with self._lock:
            for k, v in fresh:
                self._data[k] = v
            if self.path is None:
                return
            self.path.parent.mkdir(parents=True, exist_ok=True)
            lines = "".join(json.dumps({"key": k, "tgt": v}, ensure_ascii=False) + "\n" for k, v in fresh)
            with FileLock(str(self.path) + ".lock"):
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(lines)


# ---------------------------------------------------------------------------

def translate_batch(
    units: Sequence[TranslationUnit],
    provider: Provider,
    cache: TranslationCache | None = None,
    chunk_size: int = 256,
    jobs: int = 1,
) -> list[TranslationResult]:
    """Translate ``units``, returning one result per unit in input order.

    Cache hits skip the provider.  Misses with identical source text are
    sent once.  Up to ``jobs`` provider calls run concurrently; results are
    merged by id, so completion order does not matter.
    """
    ids = [u.id for u in units]
    if len(set(ids)) != len(ids):
        seen = set()
        dup = next(i for i in ids if i in seen or seen.add(i))
        raise ValueError(f"duplicate translation unit id {dup!r}")
    if cache is None:
        cache = TranslationCache()

    keys = [cache_key(provider.name, u) for u in units]
    texts: dict[str, str] = {}
    pending: dict[str, TranslationUnit] = {}
    for u, k in zip(units, keys):
        hit = cache.get(k)
        if hit is not None:
            texts[k] = hit
        elif k not in pending:
            pending[k] = u

    todo = list(pending.items())
    chunks = [todo[i:i + chunk_size] for i in range(0, len(todo), chunk_size)]

    def run(chunk):
        results = provider.translate([u for _, u in chunk])
        by_id = {r.id: r.target_text for r in results}
        out = []
        for k, u in chunk:
            if u.id not in by_id:
                raise MissingResult(u.id)
            out.append((k, by_id[u.id]))
        return out

    if jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(run, chunks))
    else:
        done = [run(c) for c in chunks]
    for pairs in done:
        texts.update(pairs)
        cache.put_many(pairs)

    return [TranslationResult(u.id, texts[k]) for u, k in zip(units, keys)]
