"""Stratified subsamples, augmentation pools, replica sets, and merged manifests.

All sampling is uniform without replacement and reproducible: every draw uses
a generator derived from (seed, class wnid), so results never depend on
iteration order. Replicas are drawn independently of each other and may
overlap across replicas.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

from .errors import DuplicateId, IdCollision, InsufficientRemainder, PoolTooSmall
from .retrieval import RetrievalStatus
from .util import class_rng, round_half_away


class Split(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"
    POOL = "pool"
    REPLICA = "replica"


class Source(str, Enum):
    ORIGINAL = "original"
    RETRIEVED = "retrieved"
    GENERATED = "generated"


@dataclass(frozen=True)
class ManifestRecord:
    image_id: str
    class_wnid: str
    source: Source
    path: str
    provenance: str = ""


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    split: Split
    records: tuple[ManifestRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        ids = [r.image_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise DuplicateId(f"manifest {self.name!r} repeats image ids")

    def __len__(self) -> int:
        return len(self.records)

    def image_ids(self) -> set[str]:
        return {r.image_id for r in self.records}

    def by_class(self) -> dict[str, list[ManifestRecord]]:
        grouped: dict[str, list[ManifestRecord]] = {}
        for record in self.records:
            grouped.setdefault(record.class_wnid, []).append(record)
        return grouped

    def class_counts(self) -> dict[str, int]:
        return {wnid: len(records) for wnid, records in self.by_class().items()}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.records:
                fh.write(
                    json.dumps(
                        {
                            "image_id": r.image_id,
                            "class_wnid": r.class_wnid,
                            "source": r.source.value,
                            "path": r.path,
                            "provenance": r.provenance,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )

    @classmethod
    def load(cls, path, name: str, split: Split) -> "DatasetManifest":
        records = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                records.append(
                    ManifestRecord(
                        image_id=obj["image_id"],
                        class_wnid=obj["class_wnid"],
                        source=Source(obj["source"]),
                        path=obj.get("path", ""),
                        provenance=obj.get("provenance", ""),
                    )
                )
        return cls(name=name, split=split, records=tuple(records))


def _sorted_class_records(manifest: DatasetManifest) -> dict[str, list[ManifestRecord]]:
    return {
        wnid: sorted(records, key=lambda r: r.image_id)
        for wnid, records in manifest.by_class().items()
    }


def stratified_subsample(
    manifest: DatasetManifest, fraction: float, seed: int
) -> DatasetManifest:
    """Per-class sample of round(fraction * n_c) records (at least 1),
    preserving the class-imbalance profile up to rounding."""
    if manifest.split is not Split.TRAIN:
        raise ValueError(f"expected a train manifest, got split {manifest.split.value!r}")
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    selected: list[ManifestRecord] = []
    for wnid, records in sorted(_sorted_class_records(manifest).items()):
        take = max(1, round_half_away(fraction * len(records)))
        rng = class_rng(seed, wnid)
        chosen = rng.choice(len(records), size=take, replace=False)
        selected.extend(records[i] for i in sorted(chosen))
    return DatasetManifest(
        name=f"{manifest.name}-sub", split=Split.TRAIN, records=tuple(selected)
    )


def disjoint_validation_split(
    manifest: DatasetManifest, train_sub: DatasetManifest, seed: int
) -> DatasetManifest:
    """Draw a split with train_sub's exact per-class counts from the records
    of `manifest` not already in train_sub."""
    taken = train_sub.image_ids()
    if not taken <= manifest.image_ids():
        raise ValueError("train_sub contains records missing from the source manifest")
    remainder = {
        wnid: [r for r in records if r.image_id not in taken]
        for wnid, records in _sorted_class_records(manifest).items()
    }
    selected: list[ManifestRecord] = []
    for wnid, count in sorted(train_sub.class_counts().items()):
        available = remainder.get(wnid, [])
        if len(available) < count:
            raise InsufficientRemainder(
                f"class {wnid!r}: need {count} validation records, only {len(available)} remain"
            )
        rng = class_rng(seed, wnid, 1)
        chosen = rng.choice(len(available), size=count, replace=False)
        selected.extend(available[i] for i in sorted(chosen))
    return DatasetManifest(
        name=f"{manifest.name}-val", split=Split.VALIDATION, records=tuple(selected)
    )


def pool_target(
    counts: Mapping[str, int], multiplier: int, uniform: bool = True
) -> dict[str, int]:
    """Generation/retrieval quota per class.

    Uniform mode assigns every class the same quota, multiplier times the
    largest class count; per-class mode scales each class's own count.
    """
    if multiplier < 1:
        raise ValueError(f"multiplier must be >= 1, got {multiplier}")
    if not counts:
        return {}
    if uniform:
        target = multiplier * max(counts.values())
        return {wnid: target for wnid in counts}
    return {wnid: multiplier * count for wnid, count in counts.items()}


def make_replicas(
    pool: DatasetManifest,
    target_counts: Mapping[str, int],
    n_replicas: int,
    seed: int,
) -> list[DatasetManifest]:
    """n_replicas manifests, each with exactly the target per-class counts,
    sampled without replacement within a replica (overlap across replicas is
    expected)."""
    if n_replicas < 1:
        raise ValueError(f"n_replicas must be >= 1, got {n_replicas}")
    pool_records = _sorted_class_records(pool)
    deficient = {}
    for wnid, need in target_counts.items():
        have = len(pool_records.get(wnid, ()))
        if have < need:
            deficient[wnid] = (have, need)
    if deficient:
        raise PoolTooSmall(deficient)

    replicas = []
    for replica_idx in range(n_replicas):
        selected: list[ManifestRecord] = []
        for wnid, need in sorted(target_counts.items()):
            records = pool_records[wnid]
            rng = class_rng(seed, wnid, 2, replica_idx)
            chosen = rng.choice(len(records), size=need, replace=False)
            selected.extend(records[i] for i in sorted(chosen))
        replicas.append(
            DatasetManifest(
                name=f"{pool.name}-replica{replica_idx}",
                split=Split.REPLICA,
                records=tuple(selected),
            )
        )
    return replicas


def merge(
    original: DatasetManifest,
    replica: DatasetManifest,
    exclusions: Iterable[str] = (),
) -> DatasetManifest:
    """Concatenate original and replica records, dropping excluded image ids
    (confirmed leaked duplicates)."""
    excluded = set(exclusions)
    shared = original.image_ids() & replica.image_ids()
    if shared:
        raise IdCollision(f"manifests share image ids: {sorted(shared)[:5]}")
    records = [
        r for r in (*original.records, *replica.records) if r.image_id not in excluded
    ]
    return DatasetManifest(
        name=f"{original.name}+{replica.name}", split=Split.TRAIN, records=tuple(records)
    )


def exclude_insufficient_classes(
    manifests: Mapping[str, DatasetManifest],
    statuses: Mapping[str, RetrievalStatus],
) -> tuple[dict[str, DatasetManifest], dict[str, dict[str, int]]]:
    """Drop every class whose retrieval came up short from all manifests.

    Returns the updated manifests plus a log of removed record counts,
    keyed class -> manifest name -> count.
    """
    for name, manifest in manifests.items():
        missing = {r.class_wnid for r in manifest.records} - set(statuses)
        if missing:
            raise ValueError(
                f"manifest {name!r} has classes with no retrieval status: {sorted(missing)[:5]}"
            )
    insufficient = {
        wnid for wnid, status in statuses.items() if status is RetrievalStatus.INSUFFICIENT
    }
    updated = {}
    log: dict[str, dict[str, int]] = {wnid: {} for wnid in sorted(insufficient)}
    for name, manifest in manifests.items():
        kept = tuple(r for r in manifest.records if r.class_wnid not in insufficient)
        removed = [r for r in manifest.records if r.class_wnid in insufficient]
        for record in removed:
            log[record.class_wnid][name] = log[record.class_wnid].get(name, 0) + 1
        updated[name] = DatasetManifest(name=manifest.name, split=manifest.split, records=kept)
    return updated, log
