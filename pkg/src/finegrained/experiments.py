"""Seeded experiments: anti-concentration, the Markov tail step and the full estimation chain.

Every experiment returns an :class:`ExperimentReport` holding its parameters, sample counts,
measured values, analytical bounds and one boolean per checked invariant. Statistical checks
allow three standard errors.
"""

import enum
import io
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np
import numpy.typing as npt
from tqdm import tqdm

from finegrained.circuits import DistributionTable, iqp_distribution
from finegrained.counting import (
    CountOracle,
    ExactCountOracle,
    RandomizedAlgorithm,
    SearchStrategy,
    exact_probability,
    query_bound,
    sandwich_holds,
    stockmeyer_estimate,
    xi,
)
from finegrained.gf2poly import all_polynomials, candidate_monomials, gap_spectrum, random_polynomial
from finegrained.utils.config import Limits, resolve_limits
from finegrained.utils.errors import ArgumentError, ConfigurationError, ResourceLimitError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
STDERR_MULTIPLIER = 3
BUDGET_TOLERANCE = 1e-9

ERR_TAU_RANGE = "every tau must lie strictly between 0 and 1"


@dataclass
class ExperimentReport:
    """Self-contained record of one experiment run.

    Attributes:
        name: Experiment name
        parameters: Every input needed to regenerate the run (seed included when known)
        samples: Number of sampled units behind the statistics
        results: Measured values and analytical bounds
        checks: Pass/fail per invariant
        notes: Free-form remarks, for example non-normative defaults
        runtime_seconds: Wall-clock time, excluded from serialized output by default
    """

    name: str
    parameters: dict[str, Any]
    samples: int
    results: dict[str, Any]
    checks: dict[str, bool] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    runtime_seconds: float = 0.0

    @property
    def passed(self) -> bool:
        """Whether every check passed."""
        return all(self.checks.values())

    def to_dict(self, include_runtime: bool = False) -> dict[str, Any]:  # noqa: FBT001, FBT002
        """Serializable form; runtime is left out unless requested so reruns are byte-identical."""
        data = asdict(self)
        data["schema_version"] = SCHEMA_VERSION
        data["passed"] = self.passed
        if not include_runtime:
            del data["runtime_seconds"]
        return data


def _check_taus(taus: list[float]) -> None:
    if not taus or any(not 0 < tau < 1 for tau in taus):
        raise ConfigurationError(ERR_TAU_RANGE)


def _check_degree(degree: int) -> None:
    if degree not in {2, 3}:
        raise ArgumentError("degree", f"must be 2 or 3, got {degree}")


def anticoncentration_bound(tau: float) -> float:
    """Lower bound ``(1 - tau)^2 / 3`` on ``Pr[p_z >= tau / 2^n]``."""
    return (1 - tau) ** 2 / 3


def anticoncentration_sweep(
    n: int,
    degree: int,
    taus: list[float],
    trials: int,
    rng: np.random.Generator,
    limits: Limits | None = None,
) -> ExperimentReport:
    """Estimate ``Pr_{f,z}[p_z(f) >= tau / 2^n]`` by sampling f and enumerating every z.

    The standard error is taken across the per-f fractions.

    Args:
        n: Qubit count
        degree: Polynomial degree, 2 or 3
        taus: Thresholds in (0, 1)
        trials: Sampled polynomials
        rng: Seeded generator
        limits: Resource limits (environment defaults when None)

    Returns:
        ExperimentReport: One result row per tau
    """
    _check_taus(taus)
    _check_degree(degree)
    if trials < 1:
        raise ArgumentError("trials", f"must be positive, got {trials}")
    started = time.perf_counter()
    cutoffs = np.array(taus, dtype=np.float64) * float(1 << n)
    fractions = np.empty((trials, len(taus)), dtype=np.float64)
    for trial in tqdm(range(trials), desc="Anti-concentration", leave=False, disable=None):
        squared = gap_spectrum(random_polynomial(n, degree, rng), limits).astype(np.float64) ** 2
        fractions[trial] = (squared[None, :] >= cutoffs[:, None]).mean(axis=1)

    means = fractions.mean(axis=0)
    stderrs = fractions.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 else np.zeros(len(taus))
    rows = []
    checks = {}
    for tau, mean, stderr in zip(taus, means, stderrs, strict=True):
        bound = anticoncentration_bound(tau)
        passed = bool(mean + STDERR_MULTIPLIER * stderr >= bound)
        rows.append({"tau": tau, "fraction": float(mean), "stderr": float(stderr), "bound": bound, "passed": passed})
        checks[f"tau={tau:g}"] = passed
    return ExperimentReport(
        name="anticoncentration",
        parameters={"n": n, "degree": degree, "taus": list(taus), "trials": trials, "mode": "sampled"},
        samples=trials * (1 << n),
        results={"rows": rows},
        checks=checks,
        runtime_seconds=time.perf_counter() - started,
    )


def anticoncentration_exhaustive(
    n: int,
    degree: int,
    taus: list[float],
    limits: Limits | None = None,
) -> ExperimentReport:
    """Exact ``Pr_{f,z}[p_z(f) >= tau / 2^n]`` over every polynomial and every z.

    Args:
        n: Qubit count
        degree: Polynomial degree, 2 or 3
        taus: Thresholds in (0, 1)
        limits: Resource limits; the family size 2^slots must fit ``max_exhaustive_bits``

    Returns:
        ExperimentReport: One exact result row per tau (fractions as "p/q" strings)
    """
    _check_taus(taus)
    _check_degree(degree)
    slots = len(candidate_monomials(n, degree))
    limit = resolve_limits(limits).max_exhaustive_bits
    if slots > limit:
        raise ResourceLimitError("polynomial family", slots, limit)
    started = time.perf_counter()
    cutoffs = [Fraction(tau) * (1 << n) for tau in taus]
    hits = [0] * len(taus)
    for f in tqdm(all_polynomials(n, degree), total=1 << slots, desc="Polynomials", leave=False, disable=None):
        squared = [int(g) ** 2 for g in gap_spectrum(f, limits)]
        for index, cutoff in enumerate(cutoffs):
            hits[index] += sum(value >= cutoff for value in squared)

    total = (1 << slots) << n
    rows = []
    checks = {}
    for tau, count in zip(taus, hits, strict=True):
        exact = Fraction(count, total)
        bound = (1 - Fraction(tau)) ** 2 / 3
        passed = exact >= bound
        rows.append(
            {"tau": tau, "fraction": exact, "fraction_float": float(exact), "bound": float(bound), "passed": passed}
        )
        checks[f"tau={tau:g}"] = passed
    return ExperimentReport(
        name="anticoncentration",
        parameters={"n": n, "degree": degree, "taus": list(taus), "mode": "exhaustive"},
        samples=total,
        results={"rows": rows},
        checks=checks,
        runtime_seconds=time.perf_counter() - started,
    )


def anticoncentration_csv(report: ExperimentReport) -> str:
    """Per-tau curve as CSV text (tau, fraction, stderr, bound, passed)."""
    rows = report.results["rows"]
    table = np.array(
        [
            [row["tau"], float(row["fraction"]), row.get("stderr", 0.0), row["bound"], float(row["passed"])]
            for row in rows
        ],
        dtype=np.float64,
    )
    buffer = io.StringIO()
    np.savetxt(buffer, table, delimiter=",", header="tau,fraction,stderr,bound,passed", comments="", fmt="%.10g")
    return buffer.getvalue()


def l1_distance(p: npt.NDArray[np.float64], q: npt.NDArray[np.float64]) -> float:
    """``sum_z |p_z - q_z|``."""
    return float(np.abs(p - q).sum())


def markov_tail_check(
    p: DistributionTable | npt.NDArray[np.float64],
    q: npt.NDArray[np.float64],
    eps: float,
    delta: float,
) -> float:
    """Fraction of z with ``|p_z - q_z| >= eps / (2^n delta)``; never above delta.

    Args:
        p: Ideal distribution
        q: Sampled distribution within l1 distance eps of p
        eps: Additive budget
        delta: Tail parameter

    Returns:
        float: Fraction of outcomes in the tail

    Raises:
        ArgumentError: If delta is not positive, the shapes differ or the budget is violated
    """
    probs = p.probs if isinstance(p, DistributionTable) else np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if probs.shape != q.shape:
        raise ArgumentError("q", f"shape {q.shape} does not match {probs.shape}")
    if delta <= 0:
        raise ArgumentError("delta", f"must be positive, got {delta}")
    distance = l1_distance(probs, q)
    if distance > eps + BUDGET_TOLERANCE:
        raise ArgumentError("q", f"l1 distance {distance:.6g} exceeds the additive budget {eps}")
    threshold = eps / (probs.shape[0] * delta)
    return float(np.count_nonzero(np.abs(probs - q) >= threshold)) / probs.shape[0]


class AdversaryKind(enum.Enum):
    """Mock samplers standing in for a classical algorithm with additive error."""

    EXACT = "exact"
    ADDITIVE_NOISE = "additive-noise"
    UNIFORM = "uniform"
    SPARSIFIED = "sparsified"


@dataclass(frozen=True)
class MockSampler:
    """Distribution q produced by an adversary, checked against its declared budget.

    Attributes:
        kind: Adversary kind
        eps: Declared additive budget
        p: Ideal distribution
        q: Adversary distribution
    """

    kind: AdversaryKind
    eps: float
    p: npt.NDArray[np.float64] = field(repr=False)
    q: npt.NDArray[np.float64] = field(repr=False)

    def __post_init__(self) -> None:
        """Check that q is a distribution within the declared budget of p."""
        if self.q.shape != self.p.shape:
            raise ArgumentError("q", f"shape {self.q.shape} does not match {self.p.shape}")
        if np.any(self.q < -BUDGET_TOLERANCE) or abs(float(self.q.sum()) - 1.0) > BUDGET_TOLERANCE:
            raise ArgumentError("q", "not a probability distribution")
        if self.l1 > self.eps + BUDGET_TOLERANCE:
            detail = f"{self.kind.value} sampler is {self.l1:.6g} from p, above the budget {self.eps}"
            raise ArgumentError("eps", detail)

    @property
    def l1(self) -> float:
        """``sum_z |p_z - q_z|``."""
        return l1_distance(self.p, self.q)

    def to_algorithm(self, T: int) -> tuple[RandomizedAlgorithm, float]:
        """Realize q with T random bits by largest-remainder rounding of ``q 2^T``.

        Args:
            T: Randomness width

        Returns:
            tuple[RandomizedAlgorithm, float]: Dyadic sampler and its l1 rounding error
        """
        scaled = np.clip(self.q, 0.0, None) * float(1 << T)
        counts = np.floor(scaled).astype(np.int64)
        missing = (1 << T) - int(counts.sum())
        if missing > 0:
            order = np.lexsort((np.arange(counts.size), -(scaled - counts)))
            counts[order[:missing]] += 1
        elif missing < 0:
            order = np.lexsort((np.arange(counts.size), scaled - counts))
            counts[order[:-missing]] -= 1
        error = l1_distance(counts / float(1 << T), self.q)
        logger.debug("Dyadic %s sampler with T=%d has rounding error %.3g", self.kind.value, T, error)
        return RandomizedAlgorithm.from_counts(counts, T), error


def _additive_noise(p: npt.NDArray[np.float64], eps: float, rng: np.random.Generator) -> npt.NDArray[np.float64]:
    """Move eps/2 of mass from a random donor prefix to the remaining outcomes."""
    half = eps / 2
    if half == 0:
        return p.copy()
    reserved = int(np.argmin(p))
    if half > 1 - p[reserved] + BUDGET_TOLERANCE:
        raise ArgumentError("eps", f"additive noise needs eps <= 2(1 - min p) = {2 * (1 - p[reserved]):.6g}")
    others = rng.permutation(np.delete(np.arange(p.size), reserved))
    cumulative = np.cumsum(p[others])
    cut = min(int(np.searchsorted(cumulative, half - BUDGET_TOLERANCE)) + 1, others.size)
    donors, receivers = others[:cut], np.append(others[cut:], reserved)

    available = p[donors]
    shares = available * rng.uniform(0.0, 1.0, size=donors.size)
    if shares.sum() >= half:
        taken = shares * (half / shares.sum())
    else:
        rest = available - shares
        taken = shares + rest * ((half - shares.sum()) / rest.sum())
    q = p.copy()
    q[donors] -= np.minimum(taken, available)
    q[receivers] += rng.dirichlet(np.ones(receivers.size)) * half
    return q


def _sparsified(p: npt.NDArray[np.float64], eps: float) -> npt.NDArray[np.float64]:
    """Zero the least likely outcomes up to eps/2 of mass and rescale the untouched ones."""
    half = eps / 2
    q = p.copy()
    if half == 0:
        return q
    removed = 0.0
    touched = np.zeros(p.size, dtype=bool)
    for index in np.argsort(p, kind="stable"):
        take = min(p[index], half - removed)
        q[index] -= take
        removed += take
        touched[index] = True
        if removed >= half:
            break
    untouched_mass = p[~touched].sum()
    if removed < half - BUDGET_TOLERANCE or untouched_mass <= 0:
        raise ArgumentError("eps", f"cannot sparsify {eps} of mass away from this distribution")
    q[~touched] += p[~touched] * (removed / untouched_mass)
    return q


def build_adversary(
    kind: AdversaryKind,
    base: DistributionTable | npt.NDArray[np.float64],
    eps: float,
    rng: np.random.Generator,
) -> MockSampler:
    """Build a mock sampler of the given kind around the ideal distribution.

    Args:
        kind: Adversary kind
        base: Ideal distribution p
        eps: Declared additive budget in [0, 2]
        rng: Seeded generator (used by additive noise)

    Returns:
        MockSampler: Sampler whose q is within eps of p

    Raises:
        ArgumentError: If eps is outside [0, 2] or cannot be realized, or the sampler exceeds it
    """
    if not 0 <= eps <= 2:  # noqa: PLR2004
        raise ArgumentError("eps", f"must lie in [0, 2], got {eps}")
    p = base.probs if isinstance(base, DistributionTable) else np.asarray(base, dtype=np.float64)
    if kind is AdversaryKind.EXACT:
        q = p.copy()
    elif kind is AdversaryKind.UNIFORM:
        q = np.full(p.shape, 1.0 / p.size)
    elif kind is AdversaryKind.ADDITIVE_NOISE:
        q = _additive_noise(p, eps, rng)
    else:
        q = _sparsified(p, eps)
    return MockSampler(kind, eps, p, q)


@dataclass(frozen=True)
class ChainParams:
    """Parameters of the estimation chain and the quantities derived from them.

    Attributes:
        eps: Additive budget of the adversary
        delta: Markov tail parameter
        sigma: Relative slack
        alpha: Product power of the estimator. Large powers such as 16 tighten xi but
            only fit the oracle budget when every preimage is tiny
        w: Target success probability of each estimate
    """

    eps: float = 0.01
    delta: float = 0.05
    sigma: float = 0.9
    alpha: int = 2
    w: float = 0.9

    @property
    def tau(self) -> float:
        """``eps / (sigma delta)``."""
        return self.eps / (self.sigma * self.delta)

    @property
    def xi(self) -> float:
        """``(2^(1/alpha) - 2^(-1/alpha)) / 2``."""
        return xi(self.alpha)

    @property
    def u(self) -> float:
        """``sigma + (1 + sigma) xi``."""
        return self.sigma + (1 + self.sigma) * self.xi

    @property
    def v(self) -> float:
        """``(1 - tau)^2 / 3 - delta``."""
        return (1 - self.tau) ** 2 / 3 - self.delta

    def validate(self) -> None:
        """Raise ConfigurationError unless 0 < tau < 1 and v > 0."""
        if self.eps < 0 or self.delta <= 0 or self.sigma <= 0 or self.alpha < 1:
            raise ConfigurationError(f"parameters out of range: {self}")
        if not 0 < self.w < 1:
            raise ConfigurationError(f"w must lie in (0, 1), got {self.w}")
        if not 0 < self.tau < 1:
            raise ConfigurationError(f"tau = eps/(sigma delta) = {self.tau:.6g} must lie in (0, 1)")
        if self.v <= 0:
            raise ConfigurationError(f"v = (1 - tau)^2/3 - delta = {self.v:.6g} must be positive")

    def bound_notes(self) -> dict[str, float | bool]:
        """Limits on u and v implied by the additive budget."""
        u_floor = self.eps / (1 + math.sqrt(3))
        v_ceiling = 1 - self.eps / (self.u * (1 + math.sqrt(3)))
        return {
            "u_lower_bound": u_floor,
            "v_upper_bound": v_ceiling,
            "u_consistent": self.u >= u_floor,
            "v_consistent": self.v <= v_ceiling,
        }

    def confidence(self, T: int) -> int:
        """Smallest r for which a bisecting estimate succeeds with probability >= w."""
        probes = math.ceil(math.log2(self.alpha * T + 2))
        return max(1, math.ceil(math.log(probes / (1 - self.w))))

    def to_dict(self) -> dict[str, float]:
        """Inputs and derived values."""
        return {
            **asdict(self),
            "tau": self.tau,
            "xi": self.xi,
            "u": self.u,
            "v": self.v,
        }


def chain_experiment(
    n: int,
    params: ChainParams,
    adversary: AdversaryKind,
    f_trials: int,
    rng: np.random.Generator,
    oracle: CountOracle | None = None,
    T: int | None = None,
    z_samples: int | None = None,
    degree: int = 3,
    strategy: SearchStrategy = SearchStrategy.BISECT,
    limits: Limits | None = None,
) -> ExperimentReport:
    """Run the estimation chain on random polynomials and count the (z, f) pairs it gets right.

    For each sampled f the adversary's q is realized as a dyadic sampler over T bits; every
    (or a sample of) z is estimated and counted as good when ``|p_z - q~_z| <= u p_z``.
    Outcomes whose hashed counts exceed the oracle budget are skipped and reported.

    Args:
        n: Qubit count
        params: Chain parameters
        adversary: Adversary kind
        f_trials: Sampled polynomials
        rng: Seeded generator; one child generator is spawned per polynomial
        oracle: Counting oracle (an exact one when None)
        T: Randomness width of the dyadic sampler, default ``2n - 2``
        z_samples: Outcomes estimated per polynomial, default all
        degree: Polynomial degree
        strategy: Scale search strategy
        limits: Resource limits (environment defaults when None)

    Returns:
        ExperimentReport: Good-pair fraction against v with three standard errors

    Raises:
        ConfigurationError: If the parameters are infeasible
        ResourceLimitError: If T exceeds the enumeration limit
    """
    params.validate()
    _check_degree(degree)
    if f_trials < 1:
        raise ArgumentError("f_trials", f"must be positive, got {f_trials}")
    limits = resolve_limits(limits)
    oracle = oracle if oracle is not None else ExactCountOracle(limits)
    width = T if T is not None else max(1, 2 * n - 2)
    outcomes = 1 << n
    if z_samples is not None and not 1 <= z_samples <= outcomes:
        raise ArgumentError("z_samples", f"must lie in [1, {outcomes}], got {z_samples}")
    r = params.confidence(width)
    started = time.perf_counter()

    good = pairs = sandwiches = queries = skipped = 0
    worst_queries = 0
    markov_fractions: list[float] = []
    rounding_errors: list[float] = []
    within_budget = True
    for child in tqdm(rng.spawn(f_trials), desc="Chain", leave=False, disable=None):
        distribution = iqp_distribution(random_polynomial(n, degree, child), limits)
        probs = distribution.probs
        declared = 2.0 if adversary is AdversaryKind.UNIFORM else params.eps
        sampler = build_adversary(adversary, distribution, declared, child)
        within_budget &= sampler.l1 <= params.eps + BUDGET_TOLERANCE
        if sampler.l1 <= params.eps + BUDGET_TOLERANCE:
            markov_fractions.append(markov_tail_check(distribution, sampler.q, params.eps, params.delta))
        algorithm, rounding = sampler.to_algorithm(width)
        algorithm.outputs(limits)  # T above the enumeration limit fails the run, not one outcome
        rounding_errors.append(rounding)
        zs = range(outcomes) if z_samples is None else sorted(child.choice(outcomes, z_samples, replace=False))
        for z in zs:
            try:
                estimate = stockmeyer_estimate(
                    algorithm, int(z), params.alpha, r, oracle, child, strategy, limits=limits
                )
            except ResourceLimitError as error:
                logger.debug("Skipping z=%d: %s", z, error)
                skipped += 1
                continue
            p = float(probs[z])
            good += abs(p - estimate.harmonic_estimate) <= params.u * p + 1e-15
            q_exact = exact_probability(algorithm, int(z), limits)
            sandwiches += sandwich_holds(estimate.eta, int(q_exact * (1 << width)) ** params.alpha)
            queries += estimate.queries
            worst_queries = max(worst_queries, estimate.queries)
            pairs += 1

    if max(rounding_errors) > params.eps:
        logger.warning("Dyadic rounding error %.3g exceeds eps=%g; use a larger T", max(rounding_errors), params.eps)
    if skipped:
        logger.warning(
            "Skipped %d of %d outcomes whose |S_z|^%d exceeds the oracle budget", skipped, skipped + pairs, params.alpha
        )
    fraction = good / pairs if pairs else 0.0
    v = params.v
    stderr = math.sqrt(v * (1 - v) / pairs) if pairs and v < 1 else 0.0
    checks = {
        "query_bound": worst_queries <= query_bound(params.alpha, width, r),
        "markov_tail": all(value <= params.delta for value in markov_fractions),
    }
    notes = ["default chain parameters are non-normative"]
    if not within_budget:
        notes.append("adversary exceeds the additive budget; the good-pair fraction is recorded without a bound")
    elif skipped:
        notes.append(f"{skipped} outcomes exceeded the oracle budget; the good-pair fraction has no bound")
    else:
        checks["good_fraction"] = fraction >= v - STDERR_MULTIPLIER * stderr
    return ExperimentReport(
        name="chain",
        parameters={
            "n": n,
            "degree": degree,
            "adversary": adversary.value,
            "f_trials": f_trials,
            "T": width,
            "r": r,
            "z_samples": z_samples,
            "strategy": strategy.value,
            **params.to_dict(),
        },
        samples=pairs,
        results={
            "good_fraction": fraction,
            "v": v,
            "stderr": stderr,
            "sandwich_rate": sandwiches / pairs if pairs else 0.0,
            "mean_queries": queries / pairs if pairs else 0.0,
            "skipped": skipped,
            "max_queries": worst_queries,
            "query_bound": query_bound(params.alpha, width, r),
            "max_markov_fraction": max(markov_fractions, default=0.0),
            "max_rounding_error": max(rounding_errors),
            "within_budget": within_budget,
            "bound_notes": params.bound_notes(),
        },
        checks=checks,
        notes=notes,
        runtime_seconds=time.perf_counter() - started,
    )
