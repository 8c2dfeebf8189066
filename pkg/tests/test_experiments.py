"""Tests for the anti-concentration, Markov tail and chain experiments."""

from fractions import Fraction

import numpy as np
import pytest

from finegrained.circuits import iqp_distribution
from finegrained.counting import exact_probability
from finegrained.experiments import (
    AdversaryKind,
    ChainParams,
    MockSampler,
    anticoncentration_bound,
    anticoncentration_csv,
    anticoncentration_exhaustive,
    anticoncentration_sweep,
    build_adversary,
    chain_experiment,
    l1_distance,
    markov_tail_check,
)
from finegrained.gf2poly import random_polynomial
from finegrained.utils.config import Limits
from finegrained.utils.errors import ArgumentError, ConfigurationError, ResourceLimitError


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator."""
    return np.random.default_rng(123)


@pytest.fixture
def ideal(rng: np.random.Generator) -> np.ndarray:
    """IQP distribution of a random cubic polynomial on 4 qubits."""
    return iqp_distribution(random_polynomial(4, 3, rng)).probs


def test_anticoncentration_exhaustive_n3() -> None:
    """Over all 128 cubic polynomials on 3 bits, 93/128 of the (f, z) pairs have a nonzero gap."""
    report = anticoncentration_exhaustive(3, 3, [0.25, 0.5, 0.9])
    rows = report.results["rows"]
    assert rows[0]["fraction"] == Fraction(93, 128)
    assert rows[1]["fraction"] == Fraction(93, 128)
    assert rows[2]["fraction"] == Fraction(37, 128)
    assert report.samples == 128 * 8
    assert report.passed


def test_anticoncentration_exhaustive_budget() -> None:
    """The family size is bounded by the exhaustive budget."""
    with pytest.raises(ResourceLimitError):
        anticoncentration_exhaustive(4, 3, [0.5], Limits(max_exhaustive_bits=10))


def test_anticoncentration_sweep(rng: np.random.Generator) -> None:
    """Sampled fractions clear the bound for every tau."""
    taus = [0.1, 0.5, 0.9]
    report = anticoncentration_sweep(6, 3, taus, 40, rng)
    assert report.passed
    for row, tau in zip(report.results["rows"], taus, strict=True):
        assert row["bound"] == pytest.approx(anticoncentration_bound(tau))
        assert 0 <= row["fraction"] <= 1
    assert report.samples == 40 * 64


TAU_GRID = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]


@pytest.mark.parametrize("degree", [2, 3])
def test_anticoncentration_exhaustive_tau_grid(degree: int) -> None:
    """At n = 3 the exact fraction clears (1 - tau)^2 / 3 for every tau and never grows with tau."""
    report = anticoncentration_exhaustive(3, degree, TAU_GRID)
    fractions = [row["fraction"] for row in report.results["rows"]]
    assert report.passed
    assert fractions == sorted(fractions, reverse=True)
    for row, tau in zip(report.results["rows"], TAU_GRID, strict=True):
        assert row["fraction"] >= (1 - Fraction(tau)) ** 2 / 3


@pytest.mark.parametrize(
    "n,trials",
    [
        (8, 30),
        (10, 20),
    ],
)
def test_anticoncentration_sweep_tau_grid(n: int, trials: int, rng: np.random.Generator) -> None:
    """Sampled fractions at larger n clear the bound across the tau grid."""
    report = anticoncentration_sweep(n, 3, TAU_GRID, trials, rng)
    assert report.passed
    assert set(report.checks) == {f"tau={tau:g}" for tau in TAU_GRID}
    assert report.samples == trials * (1 << n)


@pytest.mark.parametrize("taus", [[0.0], [1.0], [0.5, 1.5], []])
def test_tau_out_of_range(taus: list[float], rng: np.random.Generator) -> None:
    """Every tau must lie in (0, 1)."""
    with pytest.raises(ConfigurationError):
        anticoncentration_sweep(3, 3, taus, 4, rng)


def test_degree_must_be_two_or_three(rng: np.random.Generator) -> None:
    """Only quadratic and cubic families are studied."""
    with pytest.raises(ArgumentError, match="degree"):
        anticoncentration_sweep(3, 4, [0.5], 4, rng)


def test_anticoncentration_csv() -> None:
    """One CSV row per tau after the header."""
    report = anticoncentration_exhaustive(2, 2, [0.25, 0.75])
    lines = anticoncentration_csv(report).splitlines()
    assert lines[0] == "tau,fraction,stderr,bound,passed"
    assert len(lines) == 3
    assert lines[1].startswith("0.25,")


def test_markov_tail_identical_distributions(ideal: np.ndarray) -> None:
    """q = p has an empty tail."""
    assert markov_tail_check(ideal, ideal, 0.01, 0.1) == 0.0


def test_markov_tail_point_mass() -> None:
    """Moving eps/2 from one outcome to another puts 2 of 8 outcomes in the tail."""
    p = np.zeros(8)
    p[0] = 1.0
    q = p.copy()
    q[0] -= 0.05
    q[1] += 0.05
    assert markov_tail_check(p, q, 0.1, 0.5) == pytest.approx(0.25)


def test_markov_tail_rejects_budget_violation() -> None:
    """q must be within eps of p."""
    p = np.full(4, 0.25)
    q = np.array([0.5, 0.5, 0.0, 0.0])
    with pytest.raises(ArgumentError, match="budget"):
        markov_tail_check(p, q, 0.1, 0.5)


@pytest.mark.parametrize("seed", range(25))
def test_markov_tail_never_exceeds_delta(seed: int) -> None:
    """For random p, eps, delta and any q within eps of p, the tail holds at most a delta fraction."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    p = rng.dirichlet(np.ones(1 << n))
    eps = float(rng.uniform(0.01, 1.0))
    delta = float(rng.uniform(0.01, 0.5))

    direction = rng.standard_normal(1 << n)
    spread = p + direction * (eps * rng.uniform(0.5, 1.0) / np.abs(direction).sum())
    assert markov_tail_check(p, spread, eps, delta) <= delta

    k = max(1, int((1 << n) * delta))
    concentrated = p.copy()
    concentrated[rng.choice(1 << n, k, replace=False)] += eps / k * rng.choice([-1, 1], size=k)
    assert markov_tail_check(p, concentrated, eps, delta) <= delta

    ideal = iqp_distribution(random_polynomial(n, 3, rng)).probs
    kinds = [AdversaryKind.ADDITIVE_NOISE]
    if eps / 2 < 1 - ideal.max():  # sparsifying must leave the heaviest outcome untouched
        kinds.append(AdversaryKind.SPARSIFIED)
    for kind in kinds:
        sampler = build_adversary(kind, ideal, eps, rng)
        assert markov_tail_check(ideal, sampler.q, eps, delta) <= delta


@pytest.mark.parametrize(
    "kind,eps,expected_l1",
    [
        (AdversaryKind.EXACT, 0.1, 0.0),
        (AdversaryKind.ADDITIVE_NOISE, 0.1, 0.1),
        (AdversaryKind.ADDITIVE_NOISE, 0.3, 0.3),
        (AdversaryKind.SPARSIFIED, 0.1, 0.1),
    ],
)
def test_adversaries_spend_their_budget(
    kind: AdversaryKind,
    eps: float,
    expected_l1: float,
    ideal: np.ndarray,
    rng: np.random.Generator,
) -> None:
    """Noisy and sparsified samplers sit exactly at the declared distance."""
    sampler = build_adversary(kind, ideal, eps, rng)
    assert sampler.l1 == pytest.approx(expected_l1, abs=1e-12)
    assert sampler.q.sum() == pytest.approx(1.0)
    assert (sampler.q >= -1e-12).all()
    assert markov_tail_check(ideal, sampler.q, eps, 0.1) <= 0.1


def test_uniform_adversary(ideal: np.ndarray, rng: np.random.Generator) -> None:
    """The uniform sampler fits a budget of 2 but not a small one."""
    sampler = build_adversary(AdversaryKind.UNIFORM, ideal, 2.0, rng)
    assert np.allclose(sampler.q, 1 / 16)
    assert sampler.l1 == pytest.approx(l1_distance(ideal, np.full(16, 1 / 16)))
    with pytest.raises(ArgumentError, match="budget"):
        build_adversary(AdversaryKind.UNIFORM, ideal, 0.01, rng)


@pytest.mark.parametrize("eps", [-0.1, 2.5])
def test_adversary_budget_range(eps: float, ideal: np.ndarray, rng: np.random.Generator) -> None:
    """The declared budget must lie in [0, 2]."""
    with pytest.raises(ArgumentError, match="eps"):
        build_adversary(AdversaryKind.ADDITIVE_NOISE, ideal, eps, rng)


def test_mock_sampler_rejects_non_distributions(ideal: np.ndarray) -> None:
    """q has to sum to one."""
    with pytest.raises(ArgumentError, match="probability distribution"):
        MockSampler(AdversaryKind.EXACT, 0.1, ideal, ideal * 0.5)


def test_to_algorithm_is_dyadic(ideal: np.ndarray, rng: np.random.Generator) -> None:
    """Largest-remainder rounding keeps 2^T strings and errs by at most 2^n / 2^T."""
    sampler = build_adversary(AdversaryKind.ADDITIVE_NOISE, ideal, 0.1, rng)
    algorithm, error = sampler.to_algorithm(12)
    total = sum(exact_probability(algorithm, z) for z in range(16))
    assert total == 1
    assert error <= 16 / 2**12
    assert algorithm.T == 12
    assert algorithm.N == 4


def test_exact_sampler_is_represented_exactly(ideal: np.ndarray, rng: np.random.Generator) -> None:
    """IQP probabilities are multiples of 4^-(n-1), so T = 2n - 2 bits suffice."""
    sampler = build_adversary(AdversaryKind.EXACT, ideal, 0.0, rng)
    _, error = sampler.to_algorithm(6)
    assert error == pytest.approx(0.0, abs=1e-15)


def test_chain_params_defaults() -> None:
    """Default parameters are feasible with tau = 2/9 and v about 0.1516."""
    params = ChainParams()
    params.validate()
    assert params.tau == pytest.approx(2 / 9)
    assert params.v == pytest.approx((7 / 9) ** 2 / 3 - 0.05)
    assert params.u == pytest.approx(0.9 + 1.9 * params.xi)
    notes = params.bound_notes()
    assert notes["u_consistent"]
    assert notes["v_consistent"]
    assert params.to_dict()["alpha"] == 2


@pytest.mark.parametrize(
    "eps,delta,sigma",
    [
        (0.05, 0.2, 0.5),
        (0.1, 0.05, 0.9),
        (0.01, 0.0, 0.9),
    ],
)
def test_chain_params_infeasible(eps: float, delta: float, sigma: float) -> None:
    """Parameters with tau outside (0, 1) or v <= 0 are configuration errors."""
    with pytest.raises(ConfigurationError):
        ChainParams(eps=eps, delta=delta, sigma=sigma).validate()


def test_chain_params_confidence() -> None:
    """r is the smallest value meeting the target success probability."""
    assert ChainParams().confidence(10) == 4
    assert ChainParams(alpha=16).confidence(10) == 5
    assert ChainParams(alpha=2, w=0.5).confidence(6) == 3


def test_chain_with_exact_adversary(rng: np.random.Generator) -> None:
    """With q = p every estimate brackets the truth and the good fraction clears v."""
    params = ChainParams(alpha=2)
    report = chain_experiment(4, params, AdversaryKind.EXACT, 2, rng)
    assert report.passed
    assert report.samples == 32
    assert report.results["within_budget"]
    assert report.results["max_rounding_error"] == pytest.approx(0.0, abs=1e-15)
    assert report.results["good_fraction"] >= params.v
    assert report.results["sandwich_rate"] >= 0.9
    assert set(report.checks) == {"query_bound", "markov_tail", "good_fraction"}


def test_chain_with_uniform_adversary(rng: np.random.Generator) -> None:
    """An over-budget adversary is recorded without a good-fraction check."""
    report = chain_experiment(3, ChainParams(alpha=2), AdversaryKind.UNIFORM, 1, rng, z_samples=4)
    assert not report.results["within_budget"]
    assert "good_fraction" not in report.checks
    assert report.samples == 4


def test_chain_with_default_parameters(rng: np.random.Generator) -> None:
    """ChainParams() runs end to end at n = 6 without skipping any outcome."""
    report = chain_experiment(6, ChainParams(), AdversaryKind.EXACT, 1, rng, z_samples=16)
    assert report.passed
    assert report.samples == 16
    assert report.results["skipped"] == 0
    assert report.parameters["T"] == 10
    assert "good_fraction" in report.checks


def test_chain_skips_outcomes_over_the_oracle_budget(rng: np.random.Generator) -> None:
    """With alpha = 16 only the smallest preimages fit; the rest are skipped, not fatal."""
    report = chain_experiment(6, ChainParams(alpha=16), AdversaryKind.EXACT, 1, rng)
    assert report.results["skipped"] > 0  # sum of |S_z| is 2^10 over 64 outcomes
    assert report.samples + report.results["skipped"] == 64
    assert "good_fraction" not in report.checks
    assert any("oracle budget" in note for note in report.notes)
    assert report.checks["query_bound"]


def test_chain_rejects_infeasible_parameters(rng: np.random.Generator) -> None:
    """Infeasible parameters stop the chain before any estimate runs."""
    with pytest.raises(ConfigurationError):
        chain_experiment(6, ChainParams(eps=0.05, delta=0.2, sigma=0.5), AdversaryKind.EXACT, 1, rng)


def test_report_serialization(rng: np.random.Generator) -> None:
    """Reports carry a schema version and leave runtime out by default."""
    report = anticoncentration_sweep(3, 2, [0.5], 5, rng)
    data = report.to_dict()
    assert data["schema_version"] == "1"
    assert data["passed"] == report.passed
    assert "runtime_seconds" not in data
    assert "runtime_seconds" in report.to_dict(include_runtime=True)
