import numpy as np
import pytest

from retaug.catalog import CatalogIndex, normalize
from retaug.errors import ConfigError, DimensionMismatch
from retaug.retrieval import (
    AcceptedRecord,
    DedupChecker,
    RejectReason,
    RetrievalPolicy,
    RetrievalStatus,
    filter_record,
    plan_fetch_sizes,
    retrieve_class,
    select_most_similar,
)
from test_catalog import make_record


class TestPlanFetchSizes:
    def test_default_schedule(self):
        assert plan_fetch_sizes(RetrievalPolicy()) == [182, 364, 728, 1456, 1820]

    def test_tiny_target(self):
        policy = RetrievalPolicy(target_per_class=1, overfetch_factor=1.4, max_multiplier=10)
        assert plan_fetch_sizes(policy) == [2, 4, 8, 14]

    def test_single_round_when_clamp_equals_start(self):
        policy = RetrievalPolicy(max_multiplier=1)
        assert plan_fetch_sizes(policy) == [182]

    def test_strictly_increasing_and_clamped(self):
        for target in (1, 7, 50, 130, 999):
            policy = RetrievalPolicy(target_per_class=target)
            sizes = plan_fetch_sizes(policy)
            assert all(a < b for a, b in zip(sizes, sizes[1:]))
            assert sizes[-1] == int(np.ceil(10 * 1.4 * target - 1e-9))

    def test_invalid_policy(self):
        with pytest.raises(ConfigError):
            RetrievalPolicy(target_per_class=0)
        with pytest.raises(ConfigError):
            RetrievalPolicy(overfetch_factor=0.5)


class TestFilterRecord:
    def test_just_below_boundary_rejected(self):
        record = make_record(1, [1, 0], aesthetics=4.99)
        assert filter_record(record, RetrievalPolicy()) is RejectReason.LOW_AESTHETICS

    def test_boundary_accepted(self):
        record = make_record(1, [1, 0], aesthetics=5.0)
        assert filter_record(record, RetrievalPolicy()) is None

    def test_nsfw_dominates(self):
        record = make_record(1, [1, 0], aesthetics=9.0, nsfw=True)
        assert filter_record(record, RetrievalPolicy()) is RejectReason.NSFW

    def test_nsfw_allowed_when_disabled(self):
        record = make_record(1, [1, 0], aesthetics=9.0, nsfw=True)
        assert filter_record(record, RetrievalPolicy(exclude_nsfw=False)) is None

    def test_monotone_in_aesthetics_min(self):
        rng = np.random.default_rng(4)
        records = [
            make_record(i, rng.normal(size=4), aesthetics=float(rng.uniform(0, 10)))
            for i in range(200)
        ]
        accepted_strict = sum(
            1 for r in records if filter_record(r, RetrievalPolicy(aesthetics_min=7.0)) is None
        )
        accepted_loose = sum(
            1 for r in records if filter_record(r, RetrievalPolicy(aesthetics_min=3.0)) is None
        )
        assert accepted_loose >= accepted_strict


def build_synthetic_class_index(rng, n, d, accept_rate, dup_url_every=0):
    """Catalog where a programmed fraction of records pass the filters."""
    records = []
    for i in range(n):
        ok = rng.random() < accept_rate
        url = f"http://cat.test/{i}"
        if dup_url_every and i % dup_url_every == 0 and i > 0:
            url = f"http://cat.test/{i - 1}"
        records.append(
            make_record(
                int(i),
                rng.normal(size=d),
                url=url,
                aesthetics=float(rng.uniform(5.0, 9.0)) if ok else float(rng.uniform(0, 4.99)),
                nsfw=False,
            )
        )
    return CatalogIndex(records), records


def simulate_retrieval(index, records, q, policy, claimed_urls):
    """Sequential hand-simulation: walk the full ranking in fetch-size steps,
    accept passing records until the target is reached."""
    ranking = index.query(q, k=index.count)
    by_id = {r.record_id: r for r in records}
    sizes = plan_fetch_sizes(policy)
    accepted = []
    urls = set(claimed_urls)
    consumed = 0
    rounds_used = 0
    for round_number, size in enumerate(sizes, start=1):
        rounds_used = round_number
        visible = ranking[: min(size, len(ranking))]
        for nb in visible[consumed:]:
            record = by_id[nb.record_id]
            if policy.exclude_nsfw and record.nsfw_flag:
                continue
            if record.aesthetics_score < policy.aesthetics_min:
                continue
            if record.url in urls:
                continue
            urls.add(record.url)
            accepted.append(AcceptedRecord(nb.record_id, nb.similarity, round_number))
            if len(accepted) == policy.target_per_class:
                return (
                    accepted,
                    RetrievalStatus.COMPLETE,
                    round_number,
                )
        consumed = len(visible)
    return accepted, RetrievalStatus.INSUFFICIENT, rounds_used


class TestRetrieveClass:
    def test_complete_within_two_rounds(self):
        rng = np.random.default_rng(21)
        # ~60% acceptance: 182 * 0.6 ≈ 109 < 130 but 364 * 0.6 ≈ 218 >= 130
        index, records = build_synthetic_class_index(rng, 2000, 8, accept_rate=0.6)
        q = normalize(rng.normal(size=8))
        result = retrieve_class(index, q, RetrievalPolicy(), DedupChecker(), "n000")
        assert result.status is RetrievalStatus.COMPLETE
        assert len(result.accepted) == 130
        assert result.fetch_rounds <= 2

        expected, status, rounds = simulate_retrieval(index, records, q, RetrievalPolicy(), set())
        assert list(result.accepted) == expected
        assert result.status is status
        assert result.fetch_rounds == rounds

    def test_supply_exhausted(self):
        rng = np.random.default_rng(22)
        records = [
            make_record(i, rng.normal(size=4), aesthetics=6.0 if i < 50 else 1.0)
            for i in range(400)
        ]
        index = CatalogIndex(records)
        q = normalize(rng.normal(size=4))
        result = retrieve_class(index, q, RetrievalPolicy(), DedupChecker(), "n001")
        assert result.status is RetrievalStatus.INSUFFICIENT
        assert len(result.accepted) == 50

    def test_everything_filtered(self):
        rng = np.random.default_rng(23)
        records = [make_record(i, rng.normal(size=4), nsfw=True) for i in range(300)]
        index = CatalogIndex(records)
        q = normalize(rng.normal(size=4))
        result = retrieve_class(index, q, RetrievalPolicy(), DedupChecker(), "n002")
        assert result.status is RetrievalStatus.INSUFFICIENT
        assert result.accepted == ()

    def test_url_dedup_within_class(self):
        rng = np.random.default_rng(24)
        index, records = build_synthetic_class_index(rng, 600, 4, 1.0, dup_url_every=2)
        q = normalize(rng.normal(size=4))
        policy = RetrievalPolicy(target_per_class=200)
        result = retrieve_class(index, q, policy, DedupChecker(), "n003")
        urls = [index.record(a.record_id).url for a in result.accepted]
        assert len(urls) == len(set(urls))

    def test_shared_checker_blocks_across_classes(self):
        rng = np.random.default_rng(25)
        index, records = build_synthetic_class_index(rng, 500, 4, 1.0)
        checker = DedupChecker()
        policy = RetrievalPolicy(target_per_class=100)
        q1 = normalize(rng.normal(size=4))
        q2 = normalize(rng.normal(size=4))
        first = retrieve_class(index, q1, policy, checker, "a")
        second = retrieve_class(index, q2, policy, checker, "b")
        ids_a = {a.record_id for a in first.accepted}
        ids_b = {a.record_id for a in second.accepted}
        assert not ids_a & ids_b

        # the oracle agrees when it starts from the first class's claims
        urls_a = {index.record(rid).url for rid in ids_a}
        expected, status, rounds = simulate_retrieval(index, records, q2, policy, urls_a)
        assert list(second.accepted) == expected

    def test_determinism(self):
        rng = np.random.default_rng(26)
        index, _ = build_synthetic_class_index(rng, 800, 8, 0.5)
        q = normalize(rng.normal(size=8))
        r1 = retrieve_class(index, q, RetrievalPolicy(), DedupChecker(), "n")
        r2 = retrieve_class(index, q, RetrievalPolicy(), DedupChecker(), "n")
        assert r1 == r2

    def test_dimension_mismatch_propagates(self):
        rng = np.random.default_rng(27)
        index, _ = build_synthetic_class_index(rng, 10, 4, 1.0)
        with pytest.raises(DimensionMismatch):
            retrieve_class(index, np.zeros(5, np.float32), RetrievalPolicy(), DedupChecker(), "n")

    def test_complete_accepts_most_similar_ranks(self):
        rng = np.random.default_rng(28)
        index, records = build_synthetic_class_index(rng, 1500, 8, 0.7)
        q = normalize(rng.normal(size=8))
        result = retrieve_class(index, q, RetrievalPolicy(), DedupChecker(), "n")
        assert result.status is RetrievalStatus.COMPLETE
        # nothing passing the filters in the consumed ranking prefix outranks an accepted record
        floor = min(a.similarity for a in result.accepted)
        ranking = index.query(q, k=plan_fetch_sizes(RetrievalPolicy())[result.fetch_rounds - 1])
        accepted_ids = {a.record_id for a in result.accepted}
        for nb in ranking:
            record = index.record(nb.record_id)
            passes = record.aesthetics_score >= 5.0 and not record.nsfw_flag
            if passes and nb.similarity > floor and nb.record_id not in accepted_ids:
                # only records skipped by URL dedup may outrank the floor
                assert any(
                    index.record(a).url == record.url for a in accepted_ids
                ), f"record {nb.record_id} outranks an accepted record"


class TestSelectMostSimilar:
    def test_top_three(self):
        pool = [(i, float(i) / 10) for i in range(10)]
        top = select_most_similar(pool, 3)
        assert [t[0] for t in top] == [9, 8, 7]

    def test_m_equals_pool(self):
        pool = [(3, 0.2), (1, 0.9), (2, 0.5)]
        assert [t[0] for t in select_most_similar(pool, 3)] == [1, 2, 3]

    def test_tie_break_matches_stable_sort_oracle(self):
        rng = np.random.default_rng(8)
        pool = [(int(i), float(rng.choice([0.25, 0.5, 0.75]))) for i in rng.permutation(50)]
        expected = sorted(sorted(pool, key=lambda t: t[0]), key=lambda t: -t[1])
        assert select_most_similar(pool, 50) == expected

    def test_m_larger_than_pool(self):
        pool = [(1, 0.5), (2, 0.25)]
        assert len(select_most_similar(pool, 10)) == 2

    def test_accepts_accepted_records(self):
        pool = [AcceptedRecord(5, 0.1, 1), AcceptedRecord(2, 0.9, 1)]
        assert select_most_similar(pool, 1)[0].record_id == 2


class TestDedupChecker:
    def test_url_claim(self):
        checker = DedupChecker()
        r = make_record(1, [1, 0])
        assert checker.try_claim(r)
        assert not checker.try_claim(r)

    def test_hash_radius_claim(self):
        hashes = {1: 0b0, 2: 0b111}  # distance 3 < 10
        checker = DedupChecker(hashes=hashes, radius=10)
        assert checker.try_claim(make_record(1, [1, 0], url="http://a"))
        assert not checker.try_claim(make_record(2, [1, 0], url="http://b"))

    def test_hash_outside_radius_allowed(self):
        far = (1 << 12) - 1  # 12 bits set -> distance 12
        checker = DedupChecker(hashes={1: 0, 2: far}, radius=10)
        assert checker.try_claim(make_record(1, [1, 0], url="http://a"))
        assert checker.try_claim(make_record(2, [1, 0], url="http://b"))

    def test_unknown_hash_only_checks_url(self):
        checker = DedupChecker(hashes={1: 0}, radius=10)
        assert checker.try_claim(make_record(1, [1, 0], url="http://a"))
        assert checker.try_claim(make_record(99, [1, 0], url="http://b"))
