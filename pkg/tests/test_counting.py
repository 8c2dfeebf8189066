"""Tests for the threshold test, scale search and output-probability estimates."""

import itertools
import json
import math
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from finegrained.counting import (
    ExactCountOracle,
    FunctionPredicate,
    MembershipPredicate,
    ProductPredicate,
    RandomizedAlgorithm,
    SearchStrategy,
    SetPredicate,
    a_k,
    a_k_round,
    approximate_count,
    exact_probability,
    monotonicity_violations,
    query_bound,
    repetitions,
    sandwich_holds,
    search_scale,
    stockmeyer_estimate,
    success_probability,
    xi,
)
from finegrained.hashing import ToeplitzHasher, sample_hasher
from finegrained.utils.bits import BitVector
from finegrained.utils.config import Limits
from finegrained.utils.errors import ArgumentError, ResourceLimitError


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator."""
    return np.random.default_rng(31)


@pytest.fixture
def oracle() -> ExactCountOracle:
    """Exact oracle with default limits."""
    return ExactCountOracle(Limits())


def brute_force_count(predicate: SetPredicate | ProductPredicate, hasher_bits: list[int], offset: int) -> int:
    """Count accepted x with h(x) = 0 by testing every input."""
    count = 0
    for x in range(1 << predicate.n):
        vector = BitVector(predicate.n, x)
        if not predicate.accepts(vector):
            continue
        image = sum(((row & x).bit_count() & 1) << i for i, row in enumerate(hasher_bits)) ^ offset
        count += image == 0
    return count


@pytest.mark.parametrize(
    "r,expected",
    [
        (1, 9),
        (5, 41),
        (10, 81),
    ],
)
def test_repetitions(r: int, expected: int) -> None:
    """Odd round counts of at least 8r."""
    assert repetitions(r) == expected


def test_repetitions_rejects_zero() -> None:
    """r must be positive."""
    with pytest.raises(ArgumentError):
        repetitions(0)


@pytest.mark.parametrize(
    "size,k,expected",
    [
        (10, 2, True),
        (5, 3, False),
        (1, 0, False),
        (2, 0, True),
        (63, 5, False),
        (64, 5, True),
    ],
)
def test_exact_branch(size: int, k: int, expected: bool, rng: np.random.Generator, oracle: ExactCountOracle) -> None:  # noqa: FBT001
    """For k <= 5 a round asks whether |S| >= 2^(k+1)."""
    predicate = SetPredicate.random(8, size, rng)
    assert a_k_round(predicate, k, oracle, rng) is expected
    assert a_k(predicate, k, 3, oracle, rng) is expected


@pytest.mark.parametrize("k", [-1, 9])
def test_scale_out_of_range(k: int, rng: np.random.Generator, oracle: ExactCountOracle) -> None:
    """k must lie in [0, n]."""
    predicate = SetPredicate.random(8, 4, rng)
    with pytest.raises(ArgumentError, match="k"):
        a_k(predicate, k, 1, oracle, rng)


@pytest.mark.parametrize(
    "size,k,expected",
    [
        (4000, 8, True),
        (300, 10, False),
    ],
)
def test_hashed_branch_far_from_threshold(
    size: int,
    k: int,
    expected: bool,  # noqa: FBT001
    rng: np.random.Generator,
    oracle: ExactCountOracle,
) -> None:
    """Sets well above 2^(k+1) accept and sets well below 2^k reject."""
    predicate = SetPredicate.random(16, size, rng)
    assert a_k(predicate, k, 3, oracle, rng) is expected


def test_oracle_count_matches_brute_force(rng: np.random.Generator, oracle: ExactCountOracle) -> None:
    """Hashed counts over a plain set agree with direct enumeration."""
    predicate = SetPredicate.random(9, 120, rng)
    for _ in range(10):
        hasher = sample_hasher(9, 3, rng)
        expected = brute_force_count(predicate, list(hasher.row_masks), hasher.offset)
        assert oracle.count(predicate, hasher) == expected
    assert oracle.count(predicate) == 120


@pytest.mark.parametrize("alpha", [1, 2, 3])
def test_oracle_count_over_products(alpha: int, rng: np.random.Generator, oracle: ExactCountOracle) -> None:
    """The block dynamic program equals enumeration of the product set."""
    factor = SetPredicate.random(4, 5, rng)
    predicate = ProductPredicate(factor, alpha)
    assert oracle.count(predicate) == 5**alpha
    for m in (1, 2, 4):
        hasher = sample_hasher(predicate.n, m, rng)
        expected = brute_force_count(predicate, list(hasher.row_masks), hasher.offset)
        assert oracle.count(predicate, hasher) == expected


def test_oracle_budget_applies_to_hashed_tables(rng: np.random.Generator) -> None:
    """A hashed count whose table exceeds 2^oracle_budget_bits is refused; a larger budget answers it."""
    predicate = SetPredicate(6, np.arange(20, dtype=np.uint64))
    hasher = sample_hasher(6, 1, rng)
    with pytest.raises(ResourceLimitError, match="partial-image table"):
        ExactCountOracle(Limits(oracle_budget_bits=4)).count(predicate, hasher)
    expected = brute_force_count(predicate, list(hasher.row_masks), hasher.offset)
    assert ExactCountOracle(Limits(oracle_budget_bits=5)).count(predicate, hasher) == expected


def test_unhashed_counts_ignore_the_budget(rng: np.random.Generator) -> None:
    """|S^alpha| is a product of block sizes, so exact and nonempty queries always answer."""
    oracle = ExactCountOracle(Limits(oracle_budget_bits=4))
    predicate = ProductPredicate(SetPredicate.random(10, 16, rng), 16)
    assert oracle.count(predicate) == 16**16
    assert oracle.threshold_query(predicate, 1, kind="nonempty")
    assert not oracle.threshold_query(predicate, 16**16 + 1)


def test_table_size_is_capped_by_the_hash_range(rng: np.random.Generator, oracle: ExactCountOracle) -> None:
    """Partial images never outnumber 2^m, so a 16-block product with m = 3 peaks at 8 * 16."""
    predicate = ProductPredicate(SetPredicate.random(10, 16, rng), 16)
    assert oracle.table_size(predicate, sample_hasher(160, 3, rng)) == 128
    assert oracle.table_size(predicate, sample_hasher(160, 80, rng)) == 16**16


def test_hashed_counts_stay_exact_beyond_int64(rng: np.random.Generator, oracle: ExactCountOracle) -> None:
    """Counts over every offset partition |S^16| = 2^64 exactly."""
    predicate = ProductPredicate(SetPredicate.random(10, 16, rng), 16)
    hasher = sample_hasher(160, 3, rng)
    counts = [oracle.count(predicate, ToeplitzHasher(160, 3, hasher.diag, offset)) for offset in range(8)]
    assert sum(counts) == 1 << 64
    assert all(isinstance(count, int) for count in counts)


def test_predicates() -> None:
    """Set, function and product predicates agree on membership and size."""
    odd = FunctionPredicate(4, lambda xs: (xs & np.uint64(1)) == 1)
    table = SetPredicate.from_table(np.array([0, 1] * 8))
    assert odd.size() == table.size() == 8
    assert odd.accepts(BitVector(4, 3))
    assert not table.accepts(BitVector(4, 2))
    square = ProductPredicate(table, 2)
    assert square.n == 8
    assert square.size() == 64
    assert square.accepts(BitVector(8, 0b0011_0101))
    assert not square.accepts(BitVector(8, 0b0010_0101))
    with pytest.raises(ArgumentError):
        SetPredicate(3, np.array([8], dtype=np.uint64))


def test_constant_algorithm_estimate(rng: np.random.Generator, oracle: ExactCountOracle) -> None:
    """q_0 = 1 for a constant algorithm: eta = T and the raw estimate is exactly 1."""
    alg = RandomizedAlgorithm.constant(10, 4)
    estimate = stockmeyer_estimate(alg, 0, 1, 3, oracle, rng)
    assert estimate.eta == 10
    assert estimate.raw_estimate == 1.0
    assert estimate.within_xi(1.0)
    assert estimate.queries <= query_bound(1, 10, 3)
    assert estimate.z == "0000"


def test_identity_algorithm_estimate(rng: np.random.Generator, oracle: ExactCountOracle) -> None:
    """q_z = 1/8 for the identity on 3 bits; singletons are decided exactly."""
    alg = RandomizedAlgorithm.identity(3)
    estimate = stockmeyer_estimate(alg, BitVector.from_string("101"), 1, 2, oracle, rng)
    assert estimate.eta == 0
    assert estimate.raw_estimate == 1 / 8
    assert estimate.success_probability == 1.0
    assert estimate.within_xi(1 / 8)


def test_unreachable_outcome(rng: np.random.Generator, oracle: ExactCountOracle) -> None:
    """An outcome C never produces gets eta None and estimate 0."""
    alg = RandomizedAlgorithm.constant(5, 2, value=1)
    estimate = stockmeyer_estimate(alg, 2, 2, 2, oracle, rng)
    assert estimate.eta is None
    assert estimate.estimate == 0.0
    assert estimate.queries == 1
    assert exact_probability(alg, 2) == 0


def test_harmonic_estimate_meets_xi(rng: np.random.Generator, oracle: ExactCountOracle) -> None:
    """Across a dyadic sampler every estimate lands within xi q of the truth."""
    counts = np.array([1, 3, 0, 4, 12, 40, 100, 96], dtype=np.int64)
    alg = RandomizedAlgorithm.from_counts(counts, 8)
    for z, count in enumerate(counts):
        q = Fraction(int(count), 256)
        assert exact_probability(alg, z) == q
        estimate = stockmeyer_estimate(alg, z, 2, 3, oracle, rng)
        assert sandwich_holds(estimate.eta, int(count) ** 2)
        assert estimate.within_xi(float(q))
        assert estimate.queries <= query_bound(2, 8, 3)


def test_sweep_strategy(rng: np.random.Generator, oracle: ExactCountOracle) -> None:
    """Sweeping every scale gives a monotone trail and the same bracket."""
    alg = RandomizedAlgorithm.constant(6, 1)
    estimate = stockmeyer_estimate(alg, 0, 1, 3, oracle, rng, strategy=SearchStrategy.SWEEP)
    assert [k for k, _ in estimate.probes] == list(range(7))
    assert estimate.monotone
    assert sandwich_holds(estimate.eta, 64)


def test_approximate_count_planted_set(rng: np.random.Generator, oracle: ExactCountOracle) -> None:
    """A planted set of 3000 members on 16 bits is bracketed within a factor of two."""
    predicate = SetPredicate.random(16, 3000, rng)
    estimate = approximate_count(predicate, 3, oracle, rng)
    assert estimate.eta in (11, 12)
    assert sandwich_holds(estimate.eta, 3000)
    assert estimate.lower <= 3000 < estimate.upper
    assert 0 < estimate.success_probability <= 1


@pytest.mark.parametrize(
    "eta,count,expected",
    [
        (None, 0, True),
        (None, 1, False),
        (0, 1, True),
        (3, 4, True),
        (3, 15, True),
        (3, 16, False),
        (3, 3, False),
    ],
)
def test_sandwich_holds(eta: int | None, count: int, expected: bool) -> None:  # noqa: FBT001
    """2^(eta-1) <= count < 2^(eta+1)."""
    assert sandwich_holds(eta, count) is expected


def test_monotonicity_violations() -> None:
    """A rejection followed by an acceptance at a larger scale is reported."""
    assert monotonicity_violations([(0, True), (1, False), (2, True)]) == [(1, 2)]
    assert monotonicity_violations([(0, True), (1, True), (2, False)]) == []


class ScriptedOracle:
    """Accepts exactly the listed thresholds, whatever the predicate."""

    def __init__(self, accepted: set[int]) -> None:
        self.accepted = accepted

    def threshold_query(
        self,
        predicate: MembershipPredicate,  # noqa: ARG002
        threshold: int,
        hasher: ToeplitzHasher | None = None,  # noqa: ARG002
        *,
        kind: str = "exact",  # noqa: ARG002
        hasher_seed: int | None = None,  # noqa: ARG002
    ) -> bool:
        return threshold in self.accepted


def test_sweep_retries_non_monotone_outcomes(rng: np.random.Generator) -> None:
    """A_1 rejecting while A_2 accepts triggers every retry, then the first rejection is kept."""
    predicate = SetPredicate(3, np.arange(5, dtype=np.uint64))
    search = search_scale(predicate, 1, ScriptedOracle({1, 2, 8}), rng, SearchStrategy.SWEEP, max_retries=2)
    assert search.probes == [(0, True), (1, False), (2, True), (3, False)]
    assert search.retries == 2
    assert not search.monotone
    assert search.eta == 1
    assert search.queries == 1 + 3 * 4


def test_bisection_trail_is_monotone_by_construction(rng: np.random.Generator) -> None:
    """Whatever A_k answers, bisection never records a rejection below an acceptance."""
    predicate = SetPredicate(3, np.arange(5, dtype=np.uint64))
    search = search_scale(predicate, 1, ScriptedOracle({1, 2, 8}), rng, SearchStrategy.BISECT, max_retries=2)
    assert search.probes == [(2, True), (3, False)]
    assert search.monotone
    assert search.retries == 0
    assert search.eta == 3
    for size in range(5):
        for accepted in itertools.combinations([2, 4, 8, 16], size):
            oracle = ScriptedOracle({1, *accepted})
            trail = search_scale(predicate, 1, oracle, rng, SearchStrategy.BISECT).probes
            assert monotonicity_violations(trail) == []


ROUND_SAMPLES = 200


@pytest.mark.parametrize("k", range(6, 13))
def test_hashed_round_rates(k: int, rng: np.random.Generator, oracle: ExactCountOracle) -> None:
    """One round accepts |S| = 2^(k+1) w.p. >= 3/4 and |S| < 2^k w.p. <= 1/8, within three standard errors."""
    large = SetPredicate.random(16, 1 << (k + 1), rng)
    small = SetPredicate.random(16, (1 << k) - 1, rng)
    accept_rate = np.mean([a_k_round(large, k, oracle, rng) for _ in range(ROUND_SAMPLES)])
    false_rate = np.mean([a_k_round(small, k, oracle, rng) for _ in range(ROUND_SAMPLES)])
    assert accept_rate >= 3 / 4 - 3 * math.sqrt(3 / 16 / ROUND_SAMPLES)
    assert false_rate <= 1 / 8 + 3 * math.sqrt(7 / 64 / ROUND_SAMPLES)


@pytest.mark.parametrize("k", [6, 9, 12])
def test_amplified_a_k_error_rate(k: int, rng: np.random.Generator, oracle: ExactCountOracle) -> None:
    """With r = 5 the majority vote errs at most e^-5 of the time, within three standard errors."""
    trials = 20
    large = SetPredicate.random(16, 1 << (k + 1), rng)
    small = SetPredicate.random(16, (1 << k) - 1, rng)
    misses = sum(not a_k(large, k, 5, oracle, rng) for _ in range(trials))
    false_accepts = sum(a_k(small, k, 5, oracle, rng) for _ in range(trials))
    bound = math.exp(-5)
    assert (misses + false_accepts) / (2 * trials) <= bound + 3 * math.sqrt(bound * (1 - bound) / (2 * trials))


@pytest.mark.parametrize(
    "alpha,mean_bits,cap",
    [
        (1, 8, 1 << 16),
        (4, 3, 16),
        (16, 0, 2),
    ],
)
def test_estimator_sweep_over_dyadic_samplers(
    alpha: int,
    mean_bits: int,
    cap: int,
    rng: np.random.Generator,
    oracle: ExactCountOracle,
) -> None:
    """For T = 10..16 the bracket holds at least as often as promised and each bracketed estimate is within xi.

    Outcome counts are multinomial with mean 2^mean_bits; estimated outcomes have at most ``cap``
    preimages so that ``|S_z|^alpha`` fits the oracle budget.
    """
    held = []
    promised = 1.0
    for T in range(10, 17):
        outcomes = 1 << (T - mean_bits)
        counts = rng.multinomial(1 << T, np.full(outcomes, 1 / outcomes))
        alg = RandomizedAlgorithm.from_counts(counts, T)
        z = int(rng.choice(np.flatnonzero((counts >= 1) & (counts <= cap))))
        estimate = stockmeyer_estimate(alg, z, alpha, 5, oracle, rng)
        held.append(sandwich_holds(estimate.eta, int(counts[z]) ** alpha))
        promised = min(promised, estimate.success_probability)
        if held[-1]:
            assert estimate.within_xi(float(exact_probability(alg, z)))
        assert estimate.queries <= query_bound(alpha, T, 5)
    assert np.mean(held) >= promised


def test_bounds_and_parameters() -> None:
    """Closed-form helpers."""
    assert xi(1) == pytest.approx(0.75)
    assert xi(16) < 0.05
    assert query_bound(1, 10, 1) == 37
    assert success_probability(1, 0) == 1.0
    assert success_probability(1, 10) == 0.0


def test_from_counts_sampler(rng: np.random.Generator) -> None:
    """Outcome z is produced by exactly counts[z] random strings."""
    alg = RandomizedAlgorithm.from_counts(np.array([1, 3, 0, 4]), 3)
    assert alg.outputs().tolist() == [0, 1, 1, 1, 3, 3, 3, 3]
    assert alg.N == 2
    assert alg.sample(10, rng).max() <= 3
    with pytest.raises(ArgumentError, match="sum"):
        RandomizedAlgorithm.from_counts(np.array([1, 2]), 2)


def test_query_log(tmp_path: Path, rng: np.random.Generator) -> None:
    """Every query is written as one JSON line with its audit fields."""
    log = tmp_path / "queries.jsonl"
    oracle = ExactCountOracle(Limits(), query_log=log)
    predicate = SetPredicate.random(12, 500, rng)
    approximate_count(predicate, 1, oracle, rng)
    lines = [json.loads(line) for line in log.read_text().splitlines()]
    assert len(lines) == len(oracle.records)
    assert lines[0]["kind"] == "nonempty"
    assert {line["kind"] for line in lines} <= {"nonempty", "exact", "hashed"}
    hashed = [line for line in lines if line["kind"] == "hashed"]
    assert all(line["hasher_seed"] is not None for line in hashed)
    assert [line["query_id"] for line in lines] == list(range(len(lines)))
