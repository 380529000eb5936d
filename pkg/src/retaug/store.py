"""Durable state for the curation service.

A store directory holds candidate pairs, declared splits, dataset manifests,
validated images, and an append-only verdict log. Every verdict is flushed
and fsynced before the call returns, so an acknowledged verdict survives a
hard kill; restart replays the log (on top of the latest snapshot) and
reproduces the exact same report. Pair keys are content-addressed from the
two image hashes, so re-running a scan lands on the existing keys and keeps
their verdicts.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional

from .dedup import CandidatePair, LeakageReport, Verdict, leakage_report
from .errors import (
    BadParams,
    InvalidVerdict,
    UnknownDataset,
    UnknownImage,
    UnknownJob,
    UnknownPair,
)

SNAPSHOT_EVERY = 500


def pair_key(left_hash: int, right_hash: int) -> str:
    """Content address for a candidate pair (order-insensitive)."""
    lo, hi = sorted((left_hash & 0xFFFFFFFFFFFFFFFF, right_hash & 0xFFFFFFFFFFFFFFFF))
    return hashlib.sha256(f"{lo:016x}:{hi:016x}".encode()).hexdigest()[:16]


@dataclass(frozen=True)
class PairEntry:
    key: str
    split: str
    left_id: str
    right_id: str
    left_hash: int
    right_hash: int
    distance: int
    verdict: Verdict = Verdict.PENDING
    reviewer: Optional[str] = None
    reviewed_at: Optional[float] = None
    seq: int = 0

    def as_dict(self) -> dict:
        return {
            "key": self.key,
            "split": self.split,
            "left_id": self.left_id,
            "right_id": self.right_id,
            "left_hash": f"{self.left_hash:016x}",
            "right_hash": f"{self.right_hash:016x}",
            "distance": self.distance,
            "verdict": self.verdict.value,
            "reviewer": self.reviewer,
            "reviewed_at": self.reviewed_at,
        }


class CuratorStore:
    """Single-writer store; reads are safe from any thread."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "manifests").mkdir(exist_ok=True)
        (self.root / "images").mkdir(exist_ok=True)
        self._lock = threading.RLock()
        self._pairs: dict[str, PairEntry] = {}
        self._pair_order: list[str] = []
        self._splits: dict[str, int] = {}
        self._seq = 0
        self._events_since_snapshot = 0
        self._load()
        self._log_fh = open(self._verdict_log_path, "a", encoding="utf-8")

    # -- paths ---------------------------------------------------------------

    @property
    def _pairs_path(self) -> Path:
        return self.root / "pairs.jsonl"

    @property
    def _splits_path(self) -> Path:
        return self.root / "splits.json"

    @property
    def _verdict_log_path(self) -> Path:
        return self.root / "verdicts.log"

    @property
    def _snapshot_path(self) -> Path:
        return self.root / "verdicts.snapshot.json"

    # -- load / replay --------------------------------------------------------

    def _load(self) -> None:
        if self._splits_path.exists():
            self._splits = {
                k: int(v) for k, v in json.loads(self._splits_path.read_text()).items()
            }
        if self._pairs_path.exists():
            with open(self._pairs_path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    obj = json.loads(line)
                    entry = PairEntry(
                        key=obj["key"],
                        split=obj["split"],
                        left_id=obj["left_id"],
                        right_id=obj["right_id"],
                        left_hash=int(obj["left_hash"], 16),
                        right_hash=int(obj["right_hash"], 16),
                        distance=int(obj["distance"]),
                    )
                    if entry.key not in self._pairs:
                        self._pairs[entry.key] = entry
                        self._pair_order.append(entry.key)

        snapshot_seq = 0
        if self._snapshot_path.exists():
            snap = json.loads(self._snapshot_path.read_text())
            snapshot_seq = int(snap["seq"])
            self._seq = snapshot_seq
            for key, state in snap["pairs"].items():
                if key in self._pairs:
                    self._pairs[key] = replace(
                        self._pairs[key],
                        verdict=Verdict(state["verdict"]),
                        reviewer=state["reviewer"],
                        reviewed_at=state["reviewed_at"],
                        seq=int(state["seq"]),
                    )
        if self._verdict_log_path.exists():
            with open(self._verdict_log_path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    event = json.loads(line)
                    if int(event["seq"]) <= snapshot_seq:
                        continue
                    self._apply_event(event)

    def _apply_event(self, event: dict) -> None:
        key = event["pair_key"]
        self._seq = max(self._seq, int(event["seq"]))
        if key in self._pairs:
            self._pairs[key] = replace(
                self._pairs[key],
                verdict=Verdict(event["verdict"]),
                reviewer=event.get("reviewer"),
                reviewed_at=event.get("timestamp"),
                seq=int(event["seq"]),
            )

    def _maybe_snapshot(self) -> None:
        self._events_since_snapshot += 1
        if self._events_since_snapshot < SNAPSHOT_EVERY:
            return
        self._events_since_snapshot = 0
        snap = {
            "seq": self._seq,
            "pairs": {
                key: {
                    "verdict": p.verdict.value,
                    "reviewer": p.reviewer,
                    "reviewed_at": p.reviewed_at,
                    "seq": p.seq,
                }
                for key, p in self._pairs.items()
                if p.verdict is not Verdict.PENDING
            },
        }
        tmp = self._snapshot_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(snap))
        os.replace(tmp, self._snapshot_path)

    def close(self) -> None:
        self._log_fh.close()

    # -- splits & pairs --------------------------------------------------------

    def register_split(self, name: str, size: int) -> None:
        with self._lock:
            self._splits[name] = int(size)
            tmp = self._splits_path.with_suffix(".tmp")
            tmp.write_text(json.dumps(self._splits, indent=2))
            os.replace(tmp, self._splits_path)

    def splits(self) -> dict[str, int]:
        return dict(self._splits)

    def register_pairs(self, split: str, scan_pairs, left_hashes, right_hashes) -> int:
        """Record scan output under a split; existing keys keep their verdicts.

        Returns the number of newly registered pairs.
        """
        added = 0
        with self._lock, open(self._pairs_path, "a", encoding="utf-8") as fh:
            for pair in scan_pairs:
                lh = left_hashes[pair.left_id]
                rh = right_hashes[pair.right_id]
                key = pair_key(lh, rh)
                if key in self._pairs:
                    continue
                entry = PairEntry(
                    key=key,
                    split=split,
                    left_id=pair.left_id,
                    right_id=pair.right_id,
                    left_hash=lh,
                    right_hash=rh,
                    distance=pair.distance,
                )
                self._pairs[key] = entry
                self._pair_order.append(key)
                fh.write(json.dumps(entry.as_dict()) + "\n")
                added += 1
            fh.flush()
            os.fsync(fh.fileno())
        return added

    def pairs(self, status: Optional[Verdict] = None, limit: Optional[int] = None) -> list[PairEntry]:
        with self._lock:
            out = []
            for key in self._pair_order:
                entry = self._pairs[key]
                if status is not None and entry.verdict is not status:
                    continue
                out.append(entry)
                if limit is not None and len(out) >= limit:
                    break
            return out

    def get_pair(self, key: str) -> PairEntry:
        with self._lock:
            if key not in self._pairs:
                raise UnknownPair(f"no candidate pair {key!r}")
            return self._pairs[key]

    def post_verdict(self, key: str, verdict, reviewer: Optional[str] = None) -> PairEntry:
        """Persist a review verdict; durable before this returns."""
        if isinstance(verdict, str):
            try:
                verdict = Verdict(verdict)
            except ValueError:
                raise InvalidVerdict(f"verdict must be one of "
                                     f"{[v.value for v in Verdict if v is not Verdict.PENDING]}, "
                                     f"got {verdict!r}") from None
        if verdict is Verdict.PENDING:
            raise InvalidVerdict("cannot post a pending verdict")
        with self._lock:
            entry = self.get_pair(key)
            if entry.verdict is verdict:
                return entry  # idempotent repeat
            self._seq += 1
            event = {
                "seq": self._seq,
                "pair_key": key,
                "verdict": verdict.value,
                "reviewer": reviewer,
                "timestamp": time.time(),
            }
            self._log_fh.write(json.dumps(event) + "\n")
            self._log_fh.flush()
            os.fsync(self._log_fh.fileno())
            self._apply_event(event)
            self._maybe_snapshot()
            return self._pairs[key]

    # -- reports ----------------------------------------------------------------

    def leakage_report(self) -> LeakageReport:
        with self._lock:
            by_split: dict[str, list[CandidatePair]] = {name: [] for name in self._splits}
            for key in self._pair_order:
                entry = self._pairs[key]
                by_split.setdefault(entry.split, []).append(
                    CandidatePair(
                        left_id=entry.left_id,
                        right_id=entry.right_id,
                        distance=entry.distance,
                        verdict=entry.verdict,
                        reviewer=entry.reviewer,
                        reviewed_at=entry.reviewed_at,
                    )
                )
            return leakage_report(by_split, self._splits)

    # -- datasets & images -------------------------------------------------------

    def save_manifest(self, dataset_id: str, manifest) -> Path:
        path = self.root / "manifests" / f"{dataset_id}.jsonl"
        manifest.save(path)
        return path

    def manifest_path(self, dataset_id: str) -> Path:
        path = self.root / "manifests" / f"{dataset_id}.jsonl"
        if not path.exists():
            raise UnknownDataset(f"no dataset {dataset_id!r}")
        return path

    def add_image(self, image_id: str, data: bytes) -> Path:
        path = self.root / "images" / image_id
        tmp = path.with_name(path.name + ".part")
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
        return path

    def image_path(self, image_id: str) -> Path:
        path = self.root / "images" / image_id
        if not path.exists():
            raise UnknownImage(f"no image {image_id!r}")
        return path


# -- jobs -----------------------------------------------------------------------


class JobKind(str, Enum):
    RETRIEVE = "retrieve"
    DOWNLOAD = "download"
    DEDUP_SCAN = "dedup-scan"
    ASSEMBLE_REPLICAS = "assemble-replicas"


class JobState(str, Enum):
    QUEUED = "queued"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


_VALID_TRANSITIONS = {
    JobState.QUEUED: {JobState.RUNNING},
    JobState.RUNNING: {JobState.DONE, JobState.FAILED},
    JobState.DONE: set(),
    JobState.FAILED: set(),
}

_REQUIRED_PARAMS = {
    JobKind.RETRIEVE: {"index", "queries", "out"},
    JobKind.DOWNLOAD: {"manifest", "out"},
    JobKind.DEDUP_SCAN: {"left", "right", "split"},
    JobKind.ASSEMBLE_REPLICAS: {"pool", "n", "seed", "out_prefix"},
}


@dataclass
class Job:
    job_id: str
    kind: JobKind
    state: JobState
    progress: float = 0.0
    error: Optional[str] = None
    params: Optional[dict] = None
    result: Optional[dict] = None

    def transition(self, new_state: JobState) -> None:
        if new_state not in _VALID_TRANSITIONS[self.state]:
            raise ValueError(f"illegal job transition {self.state.value} -> {new_state.value}")
        self.state = new_state

    def as_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "kind": self.kind.value,
            "state": self.state.value,
            "progress": self.progress,
            "error": self.error,
            "result": self.result,
        }


class JobManager:
    """Bounded worker pool with idempotency-keyed at-most-once submission."""

    def __init__(self, store: CuratorStore, workers: int = 2, handlers=None):
        from concurrent.futures import ThreadPoolExecutor

        self.store = store
        self._jobs: dict[str, Job] = {}
        self._by_idempotency: dict[str, str] = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=workers)
        self._handlers = handlers if handlers is not None else default_job_handlers()

    def submit(self, kind, params: dict, idempotency_key: Optional[str] = None) -> Job:
        if isinstance(kind, str):
            try:
                kind = JobKind(kind)
            except ValueError:
                raise BadParams(f"unknown job kind {kind!r}") from None
        if not isinstance(params, dict):
            raise BadParams("params must be an object")
        missing = _REQUIRED_PARAMS[kind] - set(params)
        if missing:
            raise BadParams(f"{kind.value} params missing {sorted(missing)}")
        with self._lock:
            if idempotency_key is not None and idempotency_key in self._by_idempotency:
                return self._jobs[self._by_idempotency[idempotency_key]]
            job = Job(job_id=uuid.uuid4().hex[:12], kind=kind, state=JobState.QUEUED, params=params)
            self._jobs[job.job_id] = job
            if idempotency_key is not None:
                self._by_idempotency[idempotency_key] = job.job_id
        self._pool.submit(self._run, job)
        return job

    def get(self, job_id: str) -> Job:
        with self._lock:
            if job_id not in self._jobs:
                raise UnknownJob(f"no job {job_id!r}")
            return self._jobs[job_id]

    def _run(self, job: Job) -> None:
        job.transition(JobState.RUNNING)
        try:
            handler = self._handlers[job.kind]
            job.result = handler(self.store, job.params, job)
            job.progress = 1.0
            job.transition(JobState.DONE)
        except Exception as exc:  # terminal failure is part of the job contract
            job.error = f"{type(exc).__name__}: {exc}"
            job.transition(JobState.FAILED)

    def shutdown(self) -> None:
        self._pool.shutdown(wait=True)


# -- job handlers ------------------------------------------------------------------


def _handle_retrieve(store: CuratorStore, params: dict, job: Job) -> dict:
    import numpy as np

    from .catalog import CatalogIndex
    from .retrieval import DedupChecker, RetrievalPolicy, retrieve_class

    index = CatalogIndex.load(params["index"])
    policy = RetrievalPolicy(**params.get("policy", {}))
    dedup = DedupChecker()
    out_path = store.root / params["out"]
    queries = []
    with open(params["queries"], encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                queries.append(json.loads(line))
    statuses = {}
    with open(out_path, "w", encoding="utf-8") as out:
        for i, query in enumerate(queries):
            result = retrieve_class(
                index,
                np.asarray(query["embedding"], dtype=np.float32),
                policy,
                dedup,
                query["class_wnid"],
            )
            statuses[result.class_wnid] = result.status.value
            for acc in result.accepted:
                out.write(
                    json.dumps(
                        {
                            "class_wnid": result.class_wnid,
                            "record_id": acc.record_id,
                            "url": index.record(acc.record_id).url,
                            "similarity": acc.similarity,
                            "fetch_round": acc.fetch_round,
                        }
                    )
                    + "\n"
                )
            job.progress = (i + 1) / max(1, len(queries))
    return {"classes": len(queries), "statuses": statuses, "out": str(out_path)}


def _handle_download(store: CuratorStore, params: dict, job: Job) -> dict:
    from .fetcher import FetchTask, fetch_all

    out_dir = store.root / params["out"]
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = []
    with open(params["manifest"], encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            tasks.append(
                FetchTask(
                    record_id=int(obj["record_id"]),
                    url=obj["url"],
                    dest_path=str(out_dir / str(obj["record_id"])),
                )
            )
    outcomes = fetch_all(tasks, max_concurrency=int(params.get("concurrency", 8)))
    ok = sum(1 for o in outcomes if o.status.value == "ok")
    return {"tasks": len(tasks), "ok": ok, "out": str(out_dir)}


def _handle_dedup_scan(store: CuratorStore, params: dict, job: Job) -> dict:
    from .dedup import DEFAULT_RADIUS, load_hashes, scan

    left = load_hashes(params["left"])
    right = load_hashes(params["right"])
    pairs = scan(left, right, int(params.get("radius", DEFAULT_RADIUS)))
    added = store.register_pairs(params["split"], pairs, left, right)
    return {"candidates": len(pairs), "new": added}


def _handle_assemble_replicas(store: CuratorStore, params: dict, job: Job) -> dict:
    from .assembler import DatasetManifest, Split, make_replicas, pool_target

    pool = DatasetManifest.load(params["pool"], name="pool", split=Split.POOL)
    targets = params.get("targets") or pool_target(
        pool.class_counts(), int(params.get("multiplier", 1)), uniform=False
    )
    replicas = make_replicas(pool, targets, int(params["n"]), int(params["seed"]))
    names = []
    for i, replica in enumerate(replicas):
        dataset_id = f"{params['out_prefix']}-{i}"
        store.save_manifest(dataset_id, replica)
        names.append(dataset_id)
    return {"replicas": names}


def default_job_handlers() -> dict:
    return {
        JobKind.RETRIEVE: _handle_retrieve,
        JobKind.DOWNLOAD: _handle_download,
        JobKind.DEDUP_SCAN: _handle_dedup_scan,
        JobKind.ASSEMBLE_REPLICAS: _handle_assemble_replicas,
    }
