import numpy as np
import pytest

from retaug.assembler import (
    DatasetManifest,
    ManifestRecord,
    Source,
    Split,
    disjoint_validation_split,
    exclude_insufficient_classes,
    make_replicas,
    merge,
    pool_target,
    stratified_subsample,
)
from retaug.errors import (
    DuplicateId,
    IdCollision,
    InsufficientRemainder,
    PoolTooSmall,
)
from retaug.retrieval import RetrievalStatus


def build_manifest(class_sizes, name="train", split=Split.TRAIN, source=Source.ORIGINAL, prefix=""):
    records = []
    for wnid, size in class_sizes.items():
        for i in range(size):
            records.append(
                ManifestRecord(
                    image_id=f"{prefix}{wnid}-{i:05d}",
                    class_wnid=wnid,
                    source=source,
                    path=f"/data/{wnid}/{i}.jpg",
                )
            )
    return DatasetManifest(name=name, split=split, records=tuple(records))


class TestManifest:
    def test_unique_ids_enforced(self):
        record = ManifestRecord("dup", "n0", Source.ORIGINAL, "p")
        with pytest.raises(DuplicateId):
            DatasetManifest(name="x", split=Split.TRAIN, records=(record, record))

    def test_jsonl_round_trip(self, tmp_path):
        manifest = build_manifest({"n0": 3, "n1": 2})
        path = tmp_path / "m.jsonl"
        manifest.save(path)
        loaded = DatasetManifest.load(path, name="train", split=Split.TRAIN)
        assert loaded.records == manifest.records


class TestStratifiedSubsample:
    def test_ten_percent_of_1300(self):
        manifest = build_manifest({"n0": 1300})
        sub = stratified_subsample(manifest, 0.1, seed=0)
        assert len(sub) == 130

    def test_ten_percent_of_740(self):
        manifest = build_manifest({"n0": 740})
        sub = stratified_subsample(manifest, 0.1, seed=0)
        assert len(sub) == 74

    def test_full_fraction_is_identity(self):
        manifest = build_manifest({"n0": 17, "n1": 5})
        sub = stratified_subsample(manifest, 1.0, seed=3)
        assert sub.image_ids() == manifest.image_ids()

    def test_minimum_one_per_class(self):
        manifest = build_manifest({"n0": 3})
        sub = stratified_subsample(manifest, 0.01, seed=0)
        assert len(sub) == 1

    def test_imbalance_preserved(self):
        import math

        sizes = {f"n{i:03d}": int(s) for i, s in enumerate(np.linspace(740, 1300, 20))}
        manifest = build_manifest(sizes)
        sub = stratified_subsample(manifest, 0.1, seed=1)
        counts = sub.class_counts()
        for wnid, size in sizes.items():
            # nearest integer, halves away from zero
            assert counts[wnid] == max(1, math.floor(size * 0.1 + 0.5))

    def test_deterministic_and_order_independent(self):
        sizes = {"n0": 40, "n1": 25, "n2": 60}
        manifest = build_manifest(sizes)
        reversed_manifest = DatasetManifest(
            name="train", split=Split.TRAIN, records=tuple(reversed(manifest.records))
        )
        a = stratified_subsample(manifest, 0.2, seed=9)
        b = stratified_subsample(reversed_manifest, 0.2, seed=9)
        assert a.image_ids() == b.image_ids()
        assert a.image_ids() != stratified_subsample(manifest, 0.2, seed=10).image_ids()

    def test_requires_train_manifest(self):
        manifest = build_manifest({"n0": 5}, split=Split.POOL)
        with pytest.raises(ValueError):
            stratified_subsample(manifest, 0.5, seed=0)

    def test_fraction_bounds(self):
        manifest = build_manifest({"n0": 5})
        for bad in (0.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                stratified_subsample(manifest, bad, seed=0)


class TestDisjointValidationSplit:
    def test_counts_match_and_disjoint(self):
        sizes = {f"n{i:03d}": 50 + 7 * i for i in range(100)}
        manifest = build_manifest(sizes)
        train_sub = stratified_subsample(manifest, 0.1, seed=5)
        val = disjoint_validation_split(manifest, train_sub, seed=5)
        assert val.class_counts() == train_sub.class_counts()
        assert not val.image_ids() & train_sub.image_ids()
        assert val.image_ids() <= manifest.image_ids()

    def test_insufficient_remainder(self):
        manifest = build_manifest({"n0": 10})
        full = stratified_subsample(manifest, 1.0, seed=0)
        with pytest.raises(InsufficientRemainder):
            disjoint_validation_split(manifest, full, seed=0)

    def test_exact_remainder_works(self):
        manifest = build_manifest({"n0": 10})
        half = stratified_subsample(manifest, 0.5, seed=0)
        val = disjoint_validation_split(manifest, half, seed=0)
        assert val.image_ids() == manifest.image_ids() - half.image_ids()

    def test_train_sub_must_be_subset(self):
        manifest = build_manifest({"n0": 10})
        foreign = build_manifest({"n0": 2}, prefix="other-")
        with pytest.raises(ValueError):
            disjoint_validation_split(manifest, foreign, seed=0)


class TestPoolTarget:
    def test_uniform_mode_gives_constant(self):
        counts = {f"n{i}": c for i, c in enumerate([74, 99, 130, 111])}
        targets = pool_target(counts, multiplier=3, uniform=True)
        assert set(targets.values()) == {390}

    def test_per_class_mode(self):
        targets = pool_target({"n0": 100}, multiplier=3, uniform=False)
        assert targets == {"n0": 300}

    def test_multiplier_one_identity(self):
        counts = {"n0": 10, "n1": 20}
        assert pool_target(counts, multiplier=1, uniform=False) == counts


class TestMakeReplicas:
    def test_five_replicas_exact_counts(self):
        targets = {f"n{i:02d}": 20 + i for i in range(10)}
        pool = build_manifest(
            {w: 3 * c for w, c in targets.items()}, name="pool", split=Split.POOL,
            source=Source.RETRIEVED,
        )
        replicas = make_replicas(pool, targets, n_replicas=5, seed=42)
        assert len(replicas) == 5
        for replica in replicas:
            assert replica.class_counts() == targets
            assert replica.image_ids() <= pool.image_ids()

    def test_replicas_differ_but_are_deterministic(self):
        targets = {"n0": 10}
        pool = build_manifest({"n0": 100}, name="pool", split=Split.POOL)
        first = make_replicas(pool, targets, n_replicas=3, seed=7)
        second = make_replicas(pool, targets, n_replicas=3, seed=7)
        assert [r.image_ids() for r in first] == [r.image_ids() for r in second]
        assert len({frozenset(r.image_ids()) for r in first}) > 1

    def test_pool_equal_to_targets_forces_selection(self):
        targets = {"n0": 5, "n1": 3}
        pool = build_manifest(targets, name="pool", split=Split.POOL)
        for replica in make_replicas(pool, targets, n_replicas=4, seed=0):
            assert replica.image_ids() == pool.image_ids()

    def test_pool_too_small_names_classes(self):
        pool = build_manifest({"n0": 10, "n1": 2}, name="pool", split=Split.POOL)
        with pytest.raises(PoolTooSmall) as err:
            make_replicas(pool, {"n0": 5, "n1": 5, "n2": 1}, n_replicas=1, seed=0)
        assert err.value.deficient == {"n1": (2, 5), "n2": (0, 1)}

    def test_no_duplicates_within_replica(self):
        pool = build_manifest({"n0": 50}, name="pool", split=Split.POOL)
        (replica,) = make_replicas(pool, {"n0": 25}, n_replicas=1, seed=3)
        ids = [r.image_id for r in replica.records]
        assert len(ids) == len(set(ids))


class TestMerge:
    def test_doubling(self):
        original = build_manifest({"n0": 100, "n1": 60})
        replica = build_manifest(
            {"n0": 100, "n1": 60}, name="replica", split=Split.REPLICA,
            source=Source.RETRIEVED, prefix="ret-",
        )
        merged = merge(original, replica)
        assert len(merged) == 2 * len(original)

    def test_exclusions_drop_records(self):
        original = build_manifest({"n0": 100})
        replica = build_manifest(
            {"n0": 100}, name="replica", split=Split.REPLICA, prefix="ret-"
        )
        excluded = {f"ret-n0-{i:05d}" for i in range(11)}
        merged = merge(original, replica, exclusions=excluded)
        assert len(merged) == 189
        assert not excluded & merged.image_ids()

    def test_empty_replica(self):
        original = build_manifest({"n0": 4})
        empty = DatasetManifest(name="r", split=Split.REPLICA, records=())
        assert merge(original, empty).image_ids() == original.image_ids()

    def test_id_collision(self):
        original = build_manifest({"n0": 5})
        with pytest.raises(IdCollision):
            merge(original, build_manifest({"n0": 5}, name="r", split=Split.REPLICA))


class TestExcludeInsufficientClasses:
    def _statuses(self, wnids, bad):
        return {
            w: RetrievalStatus.INSUFFICIENT if w in bad else RetrievalStatus.COMPLETE
            for w in wnids
        }

    def test_insufficient_classes_removed_everywhere(self):
        wnids = [f"n{i:03d}" for i in range(20)]
        bad = set(wnids[:3])
        manifests = {
            "train": build_manifest({w: 10 for w in wnids}),
            "pool": build_manifest(
                {w: 30 for w in wnids}, name="pool", split=Split.POOL, prefix="r-"
            ),
        }
        updated, log = exclude_insufficient_classes(manifests, self._statuses(wnids, bad))
        for manifest in updated.values():
            assert not bad & set(manifest.class_counts())
            assert len(manifest.class_counts()) == 17
        assert set(log) == bad
        assert log["n000"] == {"train": 10, "pool": 30}

    def test_no_insufficient_is_identity(self):
        manifests = {"train": build_manifest({"n0": 5})}
        updated, log = exclude_insufficient_classes(manifests, self._statuses(["n0"], set()))
        assert updated["train"].records == manifests["train"].records
        assert log == {}

    def test_all_insufficient_empties_manifests(self):
        manifests = {"train": build_manifest({"n0": 5, "n1": 2})}
        updated, log = exclude_insufficient_classes(
            manifests, self._statuses(["n0", "n1"], {"n0", "n1"})
        )
        assert len(updated["train"]) == 0
        assert log == {"n0": {"train": 5}, "n1": {"train": 2}}

    def test_missing_status_rejected(self):
        manifests = {"train": build_manifest({"n0": 5})}
        with pytest.raises(ValueError):
            exclude_insufficient_classes(manifests, {})
