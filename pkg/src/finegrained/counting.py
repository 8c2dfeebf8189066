"""Hashing-based approximate counting with a pluggable counting oracle.

``a_k`` decides, with two-sided error, whether an accepted set S has at least 2^(k+1)
members or fewer than 2^k. ``stockmeyer_estimate`` binary-searches the first rejecting k
on the alpha-fold product of the preimage set of an outcome z and turns it into a
multiplicative estimate of the output probability q_z.

The oracle answers threshold questions about hash-restricted set sizes. ``ExactCountOracle``
answers them exactly by a dynamic program over partial hash images, one product block at a
time, so the alpha-fold product is never materialized.
"""

import enum
import json
import logging
import math
import threading
from abc import ABC, abstractmethod
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Any, Protocol

import numpy as np
import numpy.typing as npt

from finegrained.gf2poly import check_enumerable
from finegrained.hashing import ToeplitzHasher, random_subset, sample_hasher
from finegrained.utils.bits import BitVector, int_to_words
from finegrained.utils.config import Limits, resolve_limits
from finegrained.utils.errors import ArgumentError, ResourceLimitError
from finegrained.utils.seeding import child_seed

logger = logging.getLogger(__name__)

EXACT_BRANCH_MAX_K = 5
HASH_MARGIN = 5
HASHED_THRESHOLD = 48
DEFAULT_MAX_RETRIES = 3

Decision = Callable[[npt.NDArray[np.uint64]], npt.NDArray[np.bool_]]


@dataclass(frozen=True)
class Block:
    """One factor of a product set: inputs ``start .. start+width-1`` range over ``members``."""

    start: int
    width: int
    members: npt.NDArray[np.uint64] = field(repr=False)


class MembershipPredicate(ABC):
    """Total decision procedure on n-bit inputs; S is the set it accepts."""

    n: int

    @abstractmethod
    def accepts(self, x: BitVector) -> bool:
        """Decide one input."""

    @abstractmethod
    def blocks(self, limits: Limits | None = None) -> tuple[Block, ...]:
        """S as a product of blocks covering all n inputs."""

    def size(self, limits: Limits | None = None) -> int:
        """|S|, the product of the block sizes."""
        return math.prod(int(block.members.size) for block in self.blocks(limits))


class SetPredicate(MembershipPredicate):
    """Predicate given by an explicit accepted set.

    Args:
        n: Input width (at most 64)
        members: Packed members of S
    """

    def __init__(self, n: int, members: npt.NDArray[np.uint64]) -> None:
        """Store the deduplicated members."""
        if n < 1:
            raise ArgumentError("n", f"must be positive, got {n}")
        members = np.unique(np.asarray(members, dtype=np.uint64))
        if members.size and int(members[-1]) >> n:
            raise ArgumentError("members", f"member {int(members[-1])} does not fit in {n} bits")
        self.n = n
        self.members = members

    @classmethod
    def random(cls, n: int, size: int, rng: np.random.Generator) -> "SetPredicate":
        """Planted uniform random set of the given size."""
        return cls(n, random_subset(n, size, rng))

    @classmethod
    def from_table(cls, table: npt.NDArray[np.integer]) -> "SetPredicate":
        """Accepted set of a 0/1 truth table of length 2^n."""
        n = int(table.shape[0]).bit_length() - 1
        return cls(n, np.flatnonzero(table).astype(np.uint64))

    def accepts(self, x: BitVector) -> bool:
        """Membership test."""
        position = np.searchsorted(self.members, np.uint64(x.bits))
        return bool(position < self.members.size and self.members[position] == x.bits)

    def blocks(self, limits: Limits | None = None) -> tuple[Block, ...]:  # noqa: ARG002
        """A single block of width n."""
        return (Block(0, self.n, self.members),)


class FunctionPredicate(MembershipPredicate):
    """Predicate given by a vectorized decision function, enumerated on first use.

    Args:
        n: Input width
        decide: Maps packed inputs to booleans
    """

    def __init__(self, n: int, decide: Decision) -> None:
        """Store the decision function."""
        if n < 1:
            raise ArgumentError("n", f"must be positive, got {n}")
        self.n = n
        self.decide = decide
        self._members: npt.NDArray[np.uint64] | None = None

    def accepts(self, x: BitVector) -> bool:
        """Evaluate the decision function on one input."""
        return bool(self.decide(np.array([x.bits], dtype=np.uint64))[0])

    def blocks(self, limits: Limits | None = None) -> tuple[Block, ...]:
        """A single block holding every accepted input."""
        if self._members is None:
            check_enumerable(self.n, limits)
            inputs = np.arange(1 << self.n, dtype=np.uint64)
            self._members = inputs[np.asarray(self.decide(inputs), dtype=bool)]
        return (Block(0, self.n, self._members),)


class ProductPredicate(MembershipPredicate):
    """``S^alpha``: alpha consecutive blocks, each accepted by the same factor.

    Args:
        factor: Single-block predicate
        alpha: Number of copies
    """

    def __init__(self, factor: MembershipPredicate, alpha: int) -> None:
        """Store the factor."""
        if alpha < 1:
            raise ArgumentError("alpha", f"must be positive, got {alpha}")
        self.factor = factor
        self.alpha = alpha
        self.n = factor.n * alpha

    def accepts(self, x: BitVector) -> bool:
        """Every block of x is accepted by the factor."""
        low = (1 << self.factor.n) - 1
        width = self.factor.n
        return all(self.factor.accepts(BitVector(width, (x.bits >> (i * width)) & low)) for i in range(self.alpha))

    def blocks(self, limits: Limits | None = None) -> tuple[Block, ...]:
        """Alpha shifted copies of the factor's blocks."""
        inner = self.factor.blocks(limits)
        return tuple(
            Block(copy * self.factor.n + block.start, block.width, block.members)
            for copy in range(self.alpha)
            for block in inner
        )


@dataclass(frozen=True)
class QueryRecord:
    """Audit entry for one oracle query."""

    query_id: int
    kind: str
    threshold: int
    hasher_seed: int | None
    answer: bool
    query_bits: int


class CountOracle(Protocol):
    """Answers "is |{x in S : h(x) = 0^m}| >= threshold" (no hasher: "is |S| >= threshold")."""

    def threshold_query(
        self,
        predicate: MembershipPredicate,
        threshold: int,
        hasher: ToeplitzHasher | None = None,
        *,
        kind: str = "exact",
        hasher_seed: int | None = None,
    ) -> bool:
        """Answer one threshold query."""
        ...


class ExactCountOracle:
    """Exact counting oracle over product predicates.

    Args:
        limits: Resource limits (environment defaults when None)
        query_log: Optional JSON-lines file receiving every query record

    Raises:
        ResourceLimitError: From hashed queries whose partial-image table exceeds ``2^oracle_budget_bits``
    """

    def __init__(self, limits: Limits | None = None, query_log: Path | None = None) -> None:
        """Set up the audit trail."""
        self.limits = resolve_limits(limits)
        self.query_log = query_log
        self.records: list[QueryRecord] = []
        self._lock = threading.Lock()

    def table_size(self, predicate: MembershipPredicate, hasher: ToeplitzHasher) -> int:
        """Largest partial-image table the block dynamic program builds for one hashed count.

        Partial images after i blocks number at most ``min(2^m, |S_1| ... |S_i|)``; each block
        multiplies them by its member count before merging.
        """
        states, peak = 1, 0
        for block in predicate.blocks(self.limits):
            members = int(block.members.size)
            peak = max(peak, states * members)
            states = min(states * members, 1 << hasher.m)
        return peak

    def check_budget(self, predicate: MembershipPredicate, hasher: ToeplitzHasher) -> None:
        """Refuse hashed counts whose table would exceed ``2^oracle_budget_bits`` entries."""
        peak = self.table_size(predicate, hasher)
        budget = self.limits.oracle_budget_bits
        if peak > 1 << budget:
            raise ResourceLimitError("oracle partial-image table", math.ceil(math.log2(peak)), budget)

    def count(self, predicate: MembershipPredicate, hasher: ToeplitzHasher | None = None) -> int:
        """Exact |S|, or exact |{x in S : h(x) = 0^m}| when a hasher is given.

        Unrestricted sizes are products of block sizes and need no budget.

        Args:
            predicate: Accepted set, as blocks
            hasher: Optional hasher on predicate.n inputs

        Returns:
            int: Exact count

        Raises:
            ResourceLimitError: If the hashed count's table exceeds the oracle budget
        """
        if hasher is None:
            return predicate.size(self.limits)
        if hasher.n != predicate.n:
            raise ArgumentError("hasher", f"input width {hasher.n} does not match predicate width {predicate.n}")
        size = predicate.size(self.limits)
        if size == 0:
            return 0
        self.check_budget(predicate, hasher)

        blocks = predicate.blocks(self.limits)
        words = int_to_words(0, hasher.m).shape[0]
        partials = np.zeros((1, words), dtype=np.uint64)
        # Python integers once the total could overflow int64
        dtype: type = np.int64 if size < 1 << 62 else object
        weights = np.ones(1, dtype=dtype)
        for block in blocks[:-1]:
            images = hasher.block_images(block.start, block.width, block.members)
            combined = (partials[:, None, :] ^ images[None, :, :]).reshape(-1, words)
            partials, inverse = np.unique(combined, axis=0, return_inverse=True)
            merged = np.zeros(partials.shape[0], dtype=dtype)
            np.add.at(merged, inverse.reshape(-1), np.repeat(weights, images.shape[0]))
            weights = merged

        last = blocks[-1]
        needed = hasher.block_images(last.start, last.width, last.members) ^ int_to_words(hasher.offset, hasher.m)
        _, inverse = np.unique(np.concatenate([partials, needed]), axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        by_row = np.zeros(int(inverse.max()) + 1, dtype=dtype)
        by_row[inverse[: partials.shape[0]]] = weights
        return int(by_row[inverse[partials.shape[0] :]].sum())

    def threshold_query(
        self,
        predicate: MembershipPredicate,
        threshold: int,
        hasher: ToeplitzHasher | None = None,
        *,
        kind: str = "exact",
        hasher_seed: int | None = None,
    ) -> bool:
        """Answer one threshold query and record it.

        Args:
            predicate: Accepted set
            threshold: Count to compare against
            hasher: Optional hasher restricting S to the preimage of 0^m
            kind: Label stored in the audit record
            hasher_seed: Seed the hasher was drawn from, stored in the audit record

        Returns:
            bool: Whether the (restricted) count is at least ``threshold``
        """
        answer = self.count(predicate, hasher) >= threshold
        query_bits = predicate.n + (hasher.n + 2 * hasher.m - 1 if hasher is not None else 0)
        with self._lock:
            record = QueryRecord(len(self.records), kind, threshold, hasher_seed, answer, query_bits)
            self.records.append(record)
            if self.query_log is not None:
                with self.query_log.open("a") as handle:
                    handle.write(json.dumps(asdict(record), sort_keys=True) + "\n")
        logger.debug("Oracle query %d (%s): count >= %d -> %s", record.query_id, kind, threshold, answer)
        return answer


class _CountingOracle:
    """Forwards queries and counts them."""

    def __init__(self, inner: CountOracle) -> None:
        self.inner = inner
        self.calls = 0

    def threshold_query(
        self,
        predicate: MembershipPredicate,
        threshold: int,
        hasher: ToeplitzHasher | None = None,
        *,
        kind: str = "exact",
        hasher_seed: int | None = None,
    ) -> bool:
        self.calls += 1
        return self.inner.threshold_query(predicate, threshold, hasher, kind=kind, hasher_seed=hasher_seed)


def repetitions(r: int) -> int:
    """Rounds for a majority vote with error at most e^-r.

    A single round accepts with probability >= 3/4 or <= 1/8. By Hoeffding the majority of R
    rounds errs with probability at most ``exp(-2 R (1/4)^2) = exp(-R/8)``, so R is the
    smallest odd integer >= 8r.

    Args:
        r: Confidence parameter (>= 1)

    Returns:
        int: Odd round count
    """
    if r < 1:
        raise ArgumentError("r", f"must be at least 1, got {r}")
    return 8 * r + 1


def success_probability(r: int, hashed_probes: int) -> float:
    """Union bound ``1 - probes * e^-r`` over the randomized decisions of one search."""
    return max(0.0, 1.0 - hashed_probes * math.exp(-r))


def _check_k(predicate: MembershipPredicate, k: int) -> None:
    if not 0 <= k <= predicate.n:
        raise ArgumentError("k", f"must be in [0, {predicate.n}], got {k}")


def a_k_round(predicate: MembershipPredicate, k: int, oracle: CountOracle, rng: np.random.Generator) -> bool:
    """One round of the threshold test for 2^k.

    For k <= 5 the oracle is asked whether |S| >= 2^(k+1) (exact). Otherwise a hasher with
    m = k - 5 outputs is drawn and the oracle is asked whether at least 48 members hash to 0^m.
    k = 0 extends the range so that singleton sets are decided exactly.

    Args:
        predicate: Accepted set
        k: Scale, 0 <= k <= predicate.n
        oracle: Counting oracle
        rng: Seeded generator

    Returns:
        bool: Whether the round accepts
    """
    _check_k(predicate, k)
    if k <= EXACT_BRANCH_MAX_K:
        return oracle.threshold_query(predicate, 1 << (k + 1), kind="exact")
    seed = child_seed(rng)
    hasher = sample_hasher(predicate.n, k - HASH_MARGIN, np.random.default_rng(seed))
    return oracle.threshold_query(predicate, HASHED_THRESHOLD, hasher, kind="hashed", hasher_seed=seed)


def a_k(predicate: MembershipPredicate, k: int, r: int, oracle: CountOracle, rng: np.random.Generator) -> bool:
    """Majority vote over ``repetitions(r)`` rounds; the exact branch runs once.

    The vote stops as soon as its outcome is decided.

    Args:
        predicate: Accepted set
        k: Scale, 0 <= k <= predicate.n
        r: Confidence parameter, error at most e^-r
        oracle: Counting oracle
        rng: Seeded generator

    Returns:
        bool: Majority outcome
    """
    _check_k(predicate, k)
    rounds = repetitions(r)
    if k <= EXACT_BRANCH_MAX_K:
        return a_k_round(predicate, k, oracle, rng)
    needed = rounds // 2 + 1
    accepts = rejects = 0
    while accepts < needed and rejects < needed:
        if a_k_round(predicate, k, oracle, rng):
            accepts += 1
        else:
            rejects += 1
    return accepts >= needed


class SearchStrategy(enum.Enum):
    """How the first rejecting scale is located."""

    BISECT = "bisect"
    SWEEP = "sweep"


@dataclass
class ScaleSearch:
    """Outcome of locating the first rejecting scale eta.

    Attributes:
        eta: First rejecting k (clamped to the top scale), None for an empty set
        probes: Every evaluated (k, accepted) pair of the final attempt, in order
        queries: Oracle calls over all attempts
        retries: Attempts discarded for monotonicity violations
        monotone: Whether the final attempt was monotone
    """

    eta: int | None
    probes: list[tuple[int, bool]]
    queries: int
    retries: int
    monotone: bool

    @property
    def hashed_probes(self) -> int:
        """Probes decided by the randomized branch."""
        return sum(k > EXACT_BRANCH_MAX_K for k, _ in self.probes)


def monotonicity_violations(probes: list[tuple[int, bool]]) -> list[tuple[int, int]]:
    """Pairs (i, j) with i < j where A_i rejected but A_j accepted."""
    rejected = [k for k, accepted in probes if not accepted]
    accepted = [k for k, ok in probes if ok]
    return [(i, j) for i in rejected for j in accepted if i < j]


Probes = list[tuple[int, bool]]


def _bisect(predicate: MembershipPredicate, top: int, r: int, oracle: CountOracle, rng: np.random.Generator) -> Probes:
    probes: Probes = []
    low, high = 0, top + 1
    while low < high:
        middle = (low + high) // 2
        accepted = a_k(predicate, middle, r, oracle, rng)
        probes.append((middle, accepted))
        if accepted:
            low = middle + 1
        else:
            high = middle
    return probes


def _sweep(predicate: MembershipPredicate, top: int, r: int, oracle: CountOracle, rng: np.random.Generator) -> Probes:
    return [(k, a_k(predicate, k, r, oracle, rng)) for k in range(top + 1)]


def search_scale(
    predicate: MembershipPredicate,
    r: int,
    oracle: CountOracle,
    rng: np.random.Generator,
    strategy: SearchStrategy = SearchStrategy.BISECT,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> ScaleSearch:
    """Find eta with ``2^(eta-1) <= |S| < 2^(eta+1)`` (with high probability).

    The first query asks whether S is nonempty. Scales k = 0 .. n are then searched for the
    first rejecting A_k, treating k = n + 1 as a rejection. An attempt whose outcomes are not
    monotone in k is logged and repeated, at most ``max_retries`` times. Bisection never probes
    above a rejection or below an acceptance, so its trail is monotone by construction; only
    ``SearchStrategy.SWEEP`` can observe (and retry on) a violation.

    Args:
        predicate: Accepted set
        r: Confidence parameter for each A_k
        oracle: Counting oracle
        rng: Seeded generator
        strategy: Bisection (logarithmic probes) or a full sweep
        max_retries: Repeats allowed after a monotonicity violation

    Returns:
        ScaleSearch: eta and the search trail
    """
    counter = _CountingOracle(oracle)
    if not counter.threshold_query(predicate, 1, kind="nonempty"):
        return ScaleSearch(eta=None, probes=[], queries=counter.calls, retries=0, monotone=True)

    run = _bisect if strategy is SearchStrategy.BISECT else _sweep
    top = predicate.n
    retries = 0
    while True:
        probes = run(predicate, top, r, counter, rng)
        violations = monotonicity_violations(probes)
        if not violations or retries >= max_retries:
            break
        retries += 1
        logger.warning("A_k outcomes not monotone at %s; retrying (%d/%d)", violations[:3], retries, max_retries)
    if violations:
        logger.warning("A_k outcomes still not monotone after %d retries; using the first rejection", max_retries)
    eta = min((k for k, accepted in probes if not accepted), default=top + 1)
    return ScaleSearch(
        eta=min(eta, top),
        probes=probes,
        queries=counter.calls,
        retries=retries,
        monotone=not violations,
    )


def sandwich_holds(eta: int | None, count: int) -> bool:
    """Check ``2^(eta-1) <= count < 2^(eta+1)``; an empty set requires eta None."""
    if eta is None:
        return count == 0
    return 2 * count >= 1 << eta and count < 1 << (eta + 1)


@dataclass
class CountEstimate:
    """Approximate |S| from a scale search.

    Attributes:
        n: Input width of the predicate
        r: Confidence parameter
        eta: First rejecting scale, None for an empty set
        lower: ``2^(eta-1)`` (0 for an empty set)
        upper: ``2^(eta+1)`` (exclusive)
        estimate: ``2^eta`` (0 for an empty set)
        search: Search trail
        success_probability: Lower bound on the probability that the bracket is correct
    """

    n: int
    r: int
    eta: int | None
    lower: float
    upper: float
    estimate: float
    search: ScaleSearch
    success_probability: float


def approximate_count(
    predicate: MembershipPredicate,
    r: int,
    oracle: CountOracle,
    rng: np.random.Generator,
    strategy: SearchStrategy = SearchStrategy.BISECT,
) -> CountEstimate:
    """Bracket |S| within a factor of two either side.

    Args:
        predicate: Accepted set
        r: Confidence parameter
        oracle: Counting oracle
        rng: Seeded generator
        strategy: Scale search strategy

    Returns:
        CountEstimate: Bracket and trail
    """
    search = search_scale(predicate, r, oracle, rng, strategy)
    eta = search.eta
    return CountEstimate(
        n=predicate.n,
        r=r,
        eta=eta,
        lower=0.0 if eta is None else 2.0 ** (eta - 1),
        upper=1.0 if eta is None else 2.0 ** (eta + 1),
        estimate=0.0 if eta is None else 2.0**eta,
        search=search,
        success_probability=success_probability(r, search.hashed_probes),
    )


class RandomizedAlgorithm:
    """Deterministic map C from T random bits to N output bits; q_z is the preimage fraction.

    Args:
        T: Randomness width
        N: Output width
        output: Vectorized C on packed random strings
    """

    def __init__(self, T: int, N: int, output: Callable[[npt.NDArray[np.uint64]], npt.NDArray[np.uint64]]) -> None:
        """Store C."""
        if T < 1 or N < 1:
            raise ArgumentError("T, N", f"both must be positive, got T={T}, N={N}")
        self.T = T
        self.N = N
        self.output = output

    @classmethod
    def constant(cls, T: int, N: int, value: int = 0) -> "RandomizedAlgorithm":
        """C(r) = value for every r."""
        return cls(T, N, lambda rs: np.full(rs.shape, value, dtype=np.uint64))

    @classmethod
    def identity(cls, T: int) -> "RandomizedAlgorithm":
        """C(r) = r with N = T."""
        return cls(T, T, lambda rs: np.asarray(rs, dtype=np.uint64))

    @classmethod
    def from_table(cls, table: npt.NDArray[np.integer], N: int) -> "RandomizedAlgorithm":
        """C given by an explicit output table of length 2^T."""
        frozen = np.asarray(table, dtype=np.uint64).copy()
        T = int(frozen.shape[0]).bit_length() - 1
        if frozen.shape[0] != 1 << T:
            raise ArgumentError("table", f"length {frozen.shape[0]} is not a power of two")
        return cls(T, N, lambda rs: frozen[np.asarray(rs, dtype=np.int64)])

    @classmethod
    def from_counts(cls, counts: npt.NDArray[np.integer], T: int) -> "RandomizedAlgorithm":
        """Dyadic sampler: outcome z is produced by exactly ``counts[z]`` of the 2^T strings.

        Args:
            counts: Non-negative integers over outcomes, summing to 2^T
            T: Randomness width

        Returns:
            RandomizedAlgorithm: Sampler with ``q_z = counts[z] / 2^T``
        """
        counts = np.asarray(counts, dtype=np.int64)
        if np.any(counts < 0) or int(counts.sum()) != 1 << T:
            raise ArgumentError("counts", f"must be non-negative and sum to 2^{T}")
        N = max(1, int(counts.shape[0]).bit_length() - 1)
        if counts.shape[0] != 1 << N:
            raise ArgumentError("counts", f"length {counts.shape[0]} is not a power of two >= 2")
        boundaries = np.cumsum(counts)

        def output(rs: npt.NDArray[np.uint64]) -> npt.NDArray[np.uint64]:
            return np.searchsorted(boundaries, np.asarray(rs, dtype=np.int64), side="right").astype(np.uint64)

        return cls(T, N, output)

    @cached_property
    def _table(self) -> npt.NDArray[np.uint64]:
        return np.asarray(self.output(np.arange(1 << self.T, dtype=np.uint64)), dtype=np.uint64)

    def outputs(self, limits: Limits | None = None) -> npt.NDArray[np.uint64]:
        """C(r) for every r, indexed by packed r."""
        check_enumerable(self.T, limits)
        return self._table

    def preimage(self, z: BitVector | int, limits: Limits | None = None) -> SetPredicate:
        """``S_z = {r : C(r) = z}`` as a predicate on T bits."""
        value = z.bits if isinstance(z, BitVector) else z
        return SetPredicate(self.T, np.flatnonzero(self.outputs(limits) == np.uint64(value)).astype(np.uint64))

    def sample(self, size: int, rng: np.random.Generator) -> npt.NDArray[np.uint64]:
        """Run C on ``size`` uniform random strings."""
        return np.asarray(self.output(rng.integers(0, 1 << self.T, size=size, dtype=np.uint64)), dtype=np.uint64)


def exact_probability(alg: RandomizedAlgorithm, z: BitVector | int, limits: Limits | None = None) -> Fraction:
    """Exact ``q_z = |{r : C(r) = z}| / 2^T``.

    Raises:
        ResourceLimitError: If T exceeds the enumeration limit
    """
    value = z.bits if isinstance(z, BitVector) else z
    return Fraction(int(np.count_nonzero(alg.outputs(limits) == np.uint64(value))), 1 << alg.T)


def xi(alpha: int) -> float:
    """Relative error parameter ``(2^(1/alpha) - 2^(-1/alpha)) / 2``."""
    step = 2.0 ** (1.0 / alpha)
    return (step - 1.0 / step) / 2


@dataclass
class StockmeyerEstimate:
    """Multiplicative estimate of q_z.

    Attributes:
        z: Outcome, coordinate 0 first
        alpha: Product power
        T: Randomness width
        r: Confidence parameter of each A_k
        eta: First rejecting scale on the product set, None when q_z = 0
        sigma: ``2^(eta/alpha)``, 0 when q_z = 0
        raw_estimate: ``sigma / 2^T``
        arithmetic_estimate: raw estimate scaled by ``(2^(1/alpha) + 2^(-1/alpha)) / 2``
        harmonic_estimate: raw estimate scaled by ``2 / (2^(1/alpha) + 2^(-1/alpha))``
        xi: Relative error parameter for alpha
        queries: Oracle calls
        retries: Searches repeated for monotonicity violations
        monotone: Whether the final search was monotone
        success_probability: Lower bound on the probability that the sandwich holds
        strategy: Scale search strategy
        probes: Search trail
    """

    z: str
    alpha: int
    T: int
    r: int
    eta: int | None
    sigma: float
    raw_estimate: float
    arithmetic_estimate: float
    harmonic_estimate: float
    xi: float
    queries: int
    retries: int
    monotone: bool
    success_probability: float
    strategy: SearchStrategy
    probes: list[tuple[int, bool]] = field(default_factory=list)

    @property
    def estimate(self) -> float:
        """The estimate meeting ``|q - estimate| <= xi q`` whenever the sandwich holds."""
        return self.harmonic_estimate

    def within_xi(self, q: float) -> bool:
        """Check ``|q - harmonic| <= xi q`` (with float tolerance)."""
        return abs(q - self.harmonic_estimate) <= self.xi * q + 1e-12


def stockmeyer_estimate(
    alg: RandomizedAlgorithm,
    z: BitVector | int,
    alpha: int,
    r: int,
    oracle: CountOracle,
    rng: np.random.Generator,
    strategy: SearchStrategy = SearchStrategy.BISECT,
    max_retries: int = DEFAULT_MAX_RETRIES,
    limits: Limits | None = None,
) -> StockmeyerEstimate:
    """Estimate q_z through the scale of ``S_z^alpha``.

    With ``2^(eta-1) <= |S_z|^alpha < 2^(eta+1)``, sigma = 2^(eta/alpha) brackets
    ``q_z 2^T`` within a factor 2^(1/alpha) either side.

    Args:
        alg: Randomized algorithm C
        z: Outcome of width alg.N
        alpha: Product power
        r: Confidence parameter of each A_k
        oracle: Counting oracle
        rng: Seeded generator
        strategy: Scale search strategy
        max_retries: Repeats allowed after a monotonicity violation
        limits: Resource limits used to enumerate C

    Returns:
        StockmeyerEstimate: Estimates and audit data

    Raises:
        ResourceLimitError: If a hashed count on ``S_z^alpha`` exceeds the oracle budget
    """
    if alpha < 1:
        raise ArgumentError("alpha", f"must be positive, got {alpha}")
    vector = z if isinstance(z, BitVector) else BitVector(alg.N, z)
    if vector.length != alg.N:
        raise ArgumentError("z", f"length {vector.length} does not match output width {alg.N}")
    predicate = ProductPredicate(alg.preimage(vector, limits), alpha)
    search = search_scale(predicate, r, oracle, rng, strategy, max_retries)

    scale = 2.0 ** (1.0 / alpha)
    sigma = 0.0 if search.eta is None else 2.0 ** (search.eta / alpha)
    raw = sigma / 2.0**alg.T
    return StockmeyerEstimate(
        z=str(vector),
        alpha=alpha,
        T=alg.T,
        r=r,
        eta=search.eta,
        sigma=sigma,
        raw_estimate=raw,
        arithmetic_estimate=raw * (scale + 1.0 / scale) / 2,
        harmonic_estimate=raw * 2 / (scale + 1.0 / scale),
        xi=xi(alpha),
        queries=search.queries,
        retries=search.retries,
        monotone=search.monotone,
        success_probability=success_probability(r, search.hashed_probes),
        strategy=strategy,
        probes=search.probes,
    )


def query_bound(alpha: int, T: int, r: int) -> int:
    """Oracle calls a bisecting estimate may use: ``R(r) ceil(log2(alpha T + 2)) + 1``."""
    return repetitions(r) * math.ceil(math.log2(alpha * T + 2)) + 1


def records_as_dicts(records: list[QueryRecord]) -> list[dict[str, Any]]:
    """Audit records as plain dictionaries."""
    return [asdict(record) for record in records]
