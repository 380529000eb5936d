import json

import pytest

from retaug.dedup import CandidatePair, Verdict
from retaug.errors import (
    BadParams,
    InvalidVerdict,
    UnknownDataset,
    UnknownImage,
    UnknownJob,
    UnknownPair,
)
from retaug.store import SNAPSHOT_EVERY, CuratorStore, JobManager, JobState, pair_key


def seeded_store(tmp_path, n_pairs=20, split="test", size=1000):
    store = CuratorStore(tmp_path / "store")
    store.register_split(split, size)
    pairs = [CandidatePair(f"aug{i:04d}", f"orig{i:04d}", distance=i % 10) for i in range(n_pairs)]
    left = {f"aug{i:04d}": 1000 + i for i in range(n_pairs)}
    right = {f"orig{i:04d}": 2000 + i for i in range(n_pairs)}
    store.register_pairs(split, pairs, left, right)
    return store


class TestPairKey:
    def test_order_insensitive(self):
        assert pair_key(0xAAAA, 0xBBBB) == pair_key(0xBBBB, 0xAAAA)

    def test_distinct_pairs_differ(self):
        assert pair_key(1, 2) != pair_key(1, 3)

    def test_stable(self):
        assert pair_key(0, 1) == pair_key(0, 1)


class TestCuratorStore:
    def test_register_and_list_pending(self, tmp_path):
        store = seeded_store(tmp_path, n_pairs=5)
        pending = store.pairs(status=Verdict.PENDING)
        assert len(pending) == 5
        assert store.pairs(status=Verdict.PENDING, limit=2)[0].left_id == "aug0000"

    def test_reregistration_is_idempotent(self, tmp_path):
        store = seeded_store(tmp_path, n_pairs=3)
        pairs = [CandidatePair("aug0000", "orig0000", distance=0)]
        added = store.register_pairs("test", pairs, {"aug0000": 1000}, {"orig0000": 2000})
        assert added == 0
        assert len(store.pairs(status=None)) == 3

    def test_verdict_updates_pair(self, tmp_path):
        store = seeded_store(tmp_path)
        key = store.pairs()[0].key
        updated = store.post_verdict(key, "true-duplicate", reviewer="alice")
        assert updated.verdict is Verdict.TRUE_DUPLICATE
        assert updated.reviewer == "alice"
        assert updated.reviewed_at is not None
        assert all(p.key != key for p in store.pairs(status=Verdict.PENDING))

    def test_repeat_verdict_is_noop(self, tmp_path):
        store = seeded_store(tmp_path)
        key = store.pairs()[0].key
        store.post_verdict(key, Verdict.NOT_DUPLICATE)
        seq_after_first = store.get_pair(key).seq
        store.post_verdict(key, Verdict.NOT_DUPLICATE)
        assert store.get_pair(key).seq == seq_after_first
        log_lines = (store.root / "verdicts.log").read_text().strip().splitlines()
        assert len(log_lines) == 1

    def test_invalid_verdict(self, tmp_path):
        store = seeded_store(tmp_path)
        key = store.pairs()[0].key
        with pytest.raises(InvalidVerdict):
            store.post_verdict(key, "maybe")
        with pytest.raises(InvalidVerdict):
            store.post_verdict(key, Verdict.PENDING)

    def test_unknown_pair(self, tmp_path):
        store = seeded_store(tmp_path)
        with pytest.raises(UnknownPair):
            store.post_verdict("feedfeedfeedfeed", "true-duplicate")
        with pytest.raises(UnknownPair):
            store.get_pair("nope")

    def test_restart_replays_log(self, tmp_path):
        store = seeded_store(tmp_path, n_pairs=10)
        keys = [p.key for p in store.pairs()]
        for key in keys[:4]:
            store.post_verdict(key, "true-duplicate")
        for key in keys[4:7]:
            store.post_verdict(key, "not-duplicate")
        report_before = store.leakage_report().as_dict()
        store.close()

        reopened = CuratorStore(tmp_path / "store")
        assert reopened.leakage_report().as_dict() == report_before
        assert reopened.get_pair(keys[0]).verdict is Verdict.TRUE_DUPLICATE
        assert len(reopened.pairs(status=Verdict.PENDING)) == 3

    def test_latest_event_wins(self, tmp_path):
        store = seeded_store(tmp_path)
        key = store.pairs()[0].key
        store.post_verdict(key, "true-duplicate")
        store.post_verdict(key, "not-duplicate")
        store.close()
        reopened = CuratorStore(tmp_path / "store")
        assert reopened.get_pair(key).verdict is Verdict.NOT_DUPLICATE

    def test_snapshot_plus_tail_replay(self, tmp_path):
        n = SNAPSHOT_EVERY + 25
        store = seeded_store(tmp_path, n_pairs=n)
        keys = [p.key for p in store.pairs()]
        for key in keys:
            store.post_verdict(key, "not-duplicate")
        assert (store.root / "verdicts.snapshot.json").exists()
        key = keys[0]
        store.post_verdict(key, "true-duplicate")  # event after the snapshot
        report = store.leakage_report().as_dict()
        store.close()
        reopened = CuratorStore(tmp_path / "store")
        assert reopened.get_pair(key).verdict is Verdict.TRUE_DUPLICATE
        assert reopened.leakage_report().as_dict() == report

    def test_leakage_report_counts(self, tmp_path):
        store = seeded_store(tmp_path, n_pairs=10, size=126_861)
        keys = [p.key for p in store.pairs()]
        for key in keys[:6]:
            store.post_verdict(key, "true-duplicate")
        for key in keys[6:]:
            store.post_verdict(key, "not-duplicate")
        entry = store.leakage_report().split("test")
        assert entry.candidates == 10
        assert entry.reviewed == 10
        assert entry.confirmed == 6
        assert entry.estimated == 6
        assert len(entry.flagged_for_exclusion) == 6

    def test_manifest_and_image_lookup(self, tmp_path):
        from retaug.assembler import DatasetManifest, ManifestRecord, Source, Split

        store = CuratorStore(tmp_path / "store")
        manifest = DatasetManifest(
            name="d",
            split=Split.TRAIN,
            records=(ManifestRecord("im1", "n0", Source.ORIGINAL, "p"),),
        )
        store.save_manifest("train-0", manifest)
        assert store.manifest_path("train-0").exists()
        with pytest.raises(UnknownDataset):
            store.manifest_path("missing")

        store.add_image("img-1", b"\x89PNG\r\n\x1a\nrest")
        assert store.image_path("img-1").read_bytes().startswith(b"\x89PNG")
        with pytest.raises(UnknownImage):
            store.image_path("img-2")


class TestJobManager:
    def _wait(self, manager, job_id, timeout=10.0):
        import time

        deadline = time.time() + timeout
        while time.time() < deadline:
            job = manager.get(job_id)
            if job.state in (JobState.DONE, JobState.FAILED):
                return job
            time.sleep(0.02)
        raise TimeoutError("job did not finish")

    def test_dedup_scan_job(self, tmp_path):
        from retaug.dedup import save_hashes

        store = CuratorStore(tmp_path / "store")
        store.register_split("test", 100)
        save_hashes({"a": 0, "b": 0xF0F0F0F0F0F0F0F0}, tmp_path / "left.jsonl")
        save_hashes({"x": 1, "y": 0xFFFFFFFF}, tmp_path / "right.jsonl")
        manager = JobManager(store, workers=1)
        job = manager.submit(
            "dedup-scan",
            {
                "left": str(tmp_path / "left.jsonl"),
                "right": str(tmp_path / "right.jsonl"),
                "split": "test",
            },
        )
        finished = self._wait(manager, job.job_id)
        assert finished.state is JobState.DONE
        assert finished.result["candidates"] == 1  # only (a, x) at distance 1
        assert len(store.pairs()) == 1
        manager.shutdown()

    def test_idempotency_key(self, tmp_path):
        store = CuratorStore(tmp_path / "store")
        store.register_split("s", 10)
        manager = JobManager(store, workers=1)
        params = {"left": "x", "right": "y", "split": "s"}
        a = manager.submit("dedup-scan", params, idempotency_key="k1")
        b = manager.submit("dedup-scan", params, idempotency_key="k1")
        assert a.job_id == b.job_id
        self._wait(manager, a.job_id)
        manager.shutdown()

    def test_failed_job_reports_error(self, tmp_path):
        store = CuratorStore(tmp_path / "store")
        manager = JobManager(store, workers=1)
        job = manager.submit(
            "dedup-scan", {"left": "/nonexistent", "right": "/nope", "split": "s"}
        )
        finished = self._wait(manager, job.job_id)
        assert finished.state is JobState.FAILED
        assert "FileNotFoundError" in finished.error
        manager.shutdown()

    def test_bad_params(self, tmp_path):
        store = CuratorStore(tmp_path / "store")
        manager = JobManager(store, workers=1)
        with pytest.raises(BadParams):
            manager.submit("dedup-scan", {"left": "only"})
        with pytest.raises(BadParams):
            manager.submit("not-a-kind", {})
        manager.shutdown()

    def test_unknown_job(self, tmp_path):
        manager = JobManager(CuratorStore(tmp_path / "store"), workers=1)
        with pytest.raises(UnknownJob):
            manager.get("nope")
        manager.shutdown()

    def test_state_transitions_guarded(self, tmp_path):
        from retaug.store import Job, JobKind

        job = Job(job_id="j", kind=JobKind.DOWNLOAD, state=JobState.QUEUED)
        job.transition(JobState.RUNNING)
        job.transition(JobState.DONE)
        with pytest.raises(ValueError):
            job.transition(JobState.RUNNING)
