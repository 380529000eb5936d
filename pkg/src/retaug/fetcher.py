"""Bulk image download with bounded concurrency, retries, and validation.

Downloads dominate wall-clock time for this pipeline, so the fetcher runs a
work pool with a per-host politeness cap. Permanent failures (4xx, undecodable
or undersized content) are never retried; transient ones (5xx, timeouts,
connection drops) back off exponentially. Files land under a temporary name
and are renamed only after the bytes validate, so no partial file survives a
crash. Re-running skips any destination that already holds a valid image.
"""

from __future__ import annotations

import io
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional
from urllib.parse import urlsplit

import requests
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, DecodeError, TooSmall

MIN_SIDE = 64
SUPPORTED_FORMATS = {"JPEG", "PNG", "WEBP"}
PER_HOST_LIMIT = 4


class FetchStatus(str, Enum):
    OK = "ok"
    DEAD_URL = "dead-url"
    DECODE_ERROR = "decode-error"
    TIMEOUT = "timeout"
    TOO_SMALL = "too-small"


@dataclass
class FetchTask:
    record_id: int
    url: str
    dest_path: str
    attempts: int = 0


@dataclass(frozen=True)
class FetchOutcome:
    record_id: int
    status: FetchStatus
    width: Optional[int] = None
    height: Optional[int] = None
    bytes_written: int = 0
    detail: str = ""


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_backoff: float = 0.5


def validate_image(data: bytes) -> tuple[int, int]:
    """Decode check: JPEG/PNG/WebP only, both sides at least MIN_SIDE pixels."""
    try:
        with Image.open(io.BytesIO(data)) as img:
            if img.format not in SUPPORTED_FORMATS:
                raise DecodeError(f"unsupported format {img.format!r}")
            img.load()
            width, height = img.size
    except DecodeError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"image failed to decode: {exc}") from exc
    if min(width, height) < MIN_SIDE:
        raise TooSmall(f"{width}x{height} is below the {MIN_SIDE} px minimum side")
    return width, height


class _HostGates:
    """Per-host semaphores capping in-flight requests for politeness."""

    def __init__(self, limit: int):
        self._limit = limit
        self._lock = threading.Lock()
        self._gates: dict[str, threading.Semaphore] = {}

    def gate(self, url: str) -> threading.Semaphore:
        host = urlsplit(url).netloc
        with self._lock:
            if host not in self._gates:
                self._gates[host] = threading.Semaphore(self._limit)
            return self._gates[host]


def _write_atomic(dest: Path, data: bytes) -> None:
    tmp = dest.with_name(dest.name + ".part")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, dest)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def _fetch_one(
    session: requests.Session,
    task: FetchTask,
    retry: RetryPolicy,
    gates: _HostGates,
    timeout: float,
) -> FetchOutcome:
    dest = Path(task.dest_path)

    if dest.exists():
        try:
            width, height = validate_image(dest.read_bytes())
            return FetchOutcome(task.record_id, FetchStatus.OK, width, height, 0, "cached")
        except (DecodeError, TooSmall):
            dest.unlink()  # stale junk; re-download

    dest.parent.mkdir(parents=True, exist_ok=True)
    terminal = FetchOutcome(task.record_id, FetchStatus.DEAD_URL, detail="no attempt made")
    gate = gates.gate(task.url)
    while task.attempts < retry.max_attempts:
        task.attempts += 1
        try:
            with gate:
                response = session.get(task.url, timeout=timeout)
        except requests.Timeout:
            terminal = FetchOutcome(task.record_id, FetchStatus.TIMEOUT, detail="timed out")
        except requests.RequestException as exc:
            terminal = FetchOutcome(task.record_id, FetchStatus.DEAD_URL, detail=str(exc))
        else:
            if response.status_code == 200:
                try:
                    width, height = validate_image(response.content)
                except TooSmall as exc:
                    return FetchOutcome(task.record_id, FetchStatus.TOO_SMALL, detail=str(exc))
                except DecodeError as exc:
                    return FetchOutcome(task.record_id, FetchStatus.DECODE_ERROR, detail=str(exc))
                _write_atomic(dest, response.content)
                return FetchOutcome(
                    task.record_id,
                    FetchStatus.OK,
                    width,
                    height,
                    len(response.content),
                )
            if 400 <= response.status_code < 500:
                # permanent: the URL will not start working on retry
                return FetchOutcome(
                    task.record_id,
                    FetchStatus.DEAD_URL,
                    detail=f"HTTP {response.status_code}",
                )
            terminal = FetchOutcome(
                task.record_id, FetchStatus.DEAD_URL, detail=f"HTTP {response.status_code}"
            )
        if task.attempts < retry.max_attempts:
            time.sleep(retry.base_backoff * 2 ** (task.attempts - 1))
    return terminal


def fetch_all(
    tasks,
    max_concurrency: int,
    retry: RetryPolicy = RetryPolicy(),
    timeout: float = 10.0,
    per_host_limit: int = PER_HOST_LIMIT,
) -> list[FetchOutcome]:
    """Run every task to exactly one terminal outcome, in input order."""
    if max_concurrency < 1:
        raise ConfigError(f"max_concurrency must be >= 1, got {max_concurrency}")
    tasks = list(tasks)
    gates = _HostGates(per_host_limit)
    session = requests.Session()
    try:
        with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
            futures = [
                pool.submit(_fetch_one, session, task, retry, gates, timeout) for task in tasks
            ]
            return [f.result() for f in futures]
    finally:
        session.close()


def write_outcome_log(outcomes, fh) -> None:
    for o in outcomes:
        fh.write(
            json.dumps(
                {
                    "record_id": o.record_id,
                    "status": o.status.value,
                    "width": o.width,
                    "height": o.height,
                    "bytes_written": o.bytes_written,
                    "detail": o.detail,
                }
            )
            + "\n"
        )
