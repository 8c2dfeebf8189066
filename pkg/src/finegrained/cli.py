"""Command-line interface: one subcommand per experiment, JSON (or CSV) reports on stdout."""

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from finegrained import __version__
from finegrained.circuits import (
    BooleanCircuit,
    Cnf3,
    DistributionTable,
    boolean_phase_distribution,
    build_iqp,
    cnf_phase_distribution,
    compile_cnf,
    iqp_distribution,
    read_boolean_circuit,
    read_dimacs,
    simulate_boolean_construction,
    simulate_cnf_construction,
    simulate_statevector,
    t_count,
)
from finegrained.counting import (
    ExactCountOracle,
    MembershipPredicate,
    RandomizedAlgorithm,
    SearchStrategy,
    SetPredicate,
    a_k,
    approximate_count,
    exact_probability,
    query_bound,
    repetitions,
    sandwich_holds,
    stockmeyer_estimate,
)
from finegrained.experiments import (
    AdversaryKind,
    ChainParams,
    ExperimentReport,
    anticoncentration_csv,
    anticoncentration_exhaustive,
    anticoncentration_sweep,
    chain_experiment,
)
from finegrained.gf2poly import Gf2Polynomial, gap, random_polynomial, read_polynomial
from finegrained.hashing import leftover_deviation_probability, pairwise_independence_exhaustive, random_subset
from finegrained.utils.bits import BitVector
from finegrained.utils.config import Limits
from finegrained.utils.errors import ConfigurationError, FineGrainedError
from finegrained.utils.seeding import derive_rng
from finegrained.utils.shared import serialize_report, write_output

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_INVARIANT_FAILURE = 1
EXIT_CONFIGURATION_ERROR = 2

AGREEMENT_TOLERANCE = 1e-10
DEFAULT_TAUS = [0.1, 0.25, 0.5, 0.75, 0.9]
CSV_COMMANDS = {"anticoncentration", "iqp-dist"}


@dataclass
class RunConfig:
    """Validated invocation.

    Attributes:
        command: Subcommand name
        seed: Master seed for every random stream
        out: Report destination, stdout when None
        fmt: "json" or "csv"
        options: Remaining parsed options
    """

    command: str
    seed: int
    out: Path | None = None
    fmt: str = "json"
    options: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_namespace(cls, args: argparse.Namespace) -> "RunConfig":
        """Split parsed arguments into the common fields and subcommand options."""
        options = {key: value for key, value in vars(args).items() if key not in {"command", "seed", "out", "format"}}
        config = cls(args.command, args.seed, args.out, args.format, options)
        if config.fmt == "csv" and config.command not in CSV_COMMANDS:
            raise ConfigurationError(f"csv output is only available for {sorted(CSV_COMMANDS)}")
        return config

    def option(self, name: str, default: Any = None) -> Any:  # noqa: ANN401
        """Return an option, or ``default`` when it is unset."""
        value = self.options.get(name)
        return default if value is None else value

    def rng(self, *labels: str | int) -> np.random.Generator:
        """Generator for one named stream of this command."""
        return derive_rng(self.seed, self.command, *labels)


@dataclass
class Outcome:
    """What a subcommand produced: the text to emit and whether its invariants held."""

    text: str
    passed: bool = True


def _report_text(config: RunConfig, report: dict[str, Any]) -> str:
    return serialize_report(
        {
            "tool_version": __version__,
            "command": config.command,
            "seed": config.seed,
            "config": config.options,
            "report": report,
        }
    )


def _experiment_outcome(config: RunConfig, report: ExperimentReport) -> Outcome:
    return Outcome(_report_text(config, report.to_dict()), report.passed)


def _polynomial(config: RunConfig, n: int | None = None, degree: int = 3) -> Gf2Polynomial:
    """Polynomial from --poly, or a seeded random one."""
    path = config.option("poly")
    if path is not None:
        return read_polynomial(path)
    width = n if n is not None else config.option("n", 4)
    return random_polynomial(width, config.option("degree", degree), config.rng("f"))


def _run_gap(config: RunConfig) -> Outcome:
    return Outcome(f"{gap(_polynomial(config))}\n")


def _distribution_rows(table: DistributionTable) -> str:
    lines = ["z,gap,probability"]
    for z, (value, probability) in enumerate(zip(table.gaps, table.probs, strict=True)):
        lines.append(f"{BitVector(table.n, z)},{int(value)},{probability:.17g}")
    return "\n".join(lines) + "\n"


def _run_iqp_dist(config: RunConfig) -> Outcome:
    limits = Limits.from_env()
    circuit_path, cnf_path = config.option("circuit"), config.option("cnf")
    oracle: BooleanCircuit | Cnf3 | None = None
    if circuit_path is not None:
        oracle = read_boolean_circuit(circuit_path, config.option("n"))
    elif cnf_path is not None:
        oracle = read_dimacs(cnf_path)

    if oracle is None:
        f = _polynomial(config)
        table = iqp_distribution(f, limits)
        width = f.n
    else:
        f = _polynomial(config, n=oracle.n, degree=2)
        if isinstance(oracle, BooleanCircuit):
            table = boolean_phase_distribution(f, oracle, limits)
            width = f.n + 1
        else:
            table = cnf_phase_distribution(f, oracle, limits)
            width = f.n + 3 * oracle.m - 1

    checks = {"normalized": table.is_normalized(), "gaps_even": table.all_even()}
    results: dict[str, Any] = {"n": table.n, "gaps": table.gaps, "probs": table.probs}
    if width <= limits.max_statevector_qubits:
        if oracle is None:
            simulated = np.abs(simulate_statevector(build_iqp(f), limits)) ** 2
        elif isinstance(oracle, BooleanCircuit):
            simulated = simulate_boolean_construction(f, oracle, limits=limits)
        else:
            simulated = simulate_cnf_construction(f, oracle, limits=limits)
        deviation = float(np.max(np.abs(simulated - table.probs)))
        results["statevector_max_deviation"] = deviation
        checks["statevector_agreement"] = deviation <= AGREEMENT_TOLERANCE
    else:
        logger.info("Skipping the statevector cross-check: %d qubits exceed the limit", width)
    if isinstance(oracle, BooleanCircuit):
        results["oracle_depth"] = oracle.depth
    passed = all(checks.values())
    if config.fmt == "csv":
        return Outcome(_distribution_rows(table), passed)
    results["polynomial"] = f.to_json()
    return Outcome(_report_text(config, {"results": results, "checks": checks, "passed": passed}), passed)


def _run_anticoncentration(config: RunConfig) -> Outcome:
    taus = config.option("tau_list", DEFAULT_TAUS)
    n, degree = config.option("n", 3), config.option("degree", 3)
    if config.option("exhaustive", default=False):
        report = anticoncentration_exhaustive(n, degree, taus)
    else:
        report = anticoncentration_sweep(n, degree, taus, config.option("trials", 1000), config.rng("sweep"))
    if config.fmt == "csv":
        return Outcome(anticoncentration_csv(report), report.passed)
    return _experiment_outcome(config, report)


def _run_hash_test(config: RunConfig) -> Outcome:
    n, m = config.option("n", 3), config.option("m", 2)
    pairwise = pairwise_independence_exhaustive(n, m)
    universe = config.option("universe_bits", 16)
    members = random_subset(universe, config.option("set_size", 1024), config.rng("set"))
    leftover = leftover_deviation_probability(
        members, m, config.option("eps", 0.5), config.option("trials", 1000), config.rng("hashers"), n=universe
    )
    passed = pairwise.passed and leftover.passed
    report = {
        "pairwise": pairwise,
        "leftover": leftover,
        "checks": {"pairwise_exact": pairwise.passed, "leftover_bound": leftover.passed},
        "passed": passed,
    }
    return Outcome(_report_text(config, report), passed)


def _predicate(config: RunConfig) -> MembershipPredicate:
    poly, cnf, planted = config.option("poly"), config.option("cnf"), config.option("planted")
    if sum(value is not None for value in (poly, cnf, planted)) != 1:
        raise ConfigurationError("approx-count needs exactly one of --poly, --cnf or --planted")
    if poly is not None:
        return SetPredicate.from_table(read_polynomial(poly).truth_table())
    if cnf is not None:
        return SetPredicate.from_table(read_dimacs(cnf).evaluate_all())
    return SetPredicate.random(config.option("n", 16), planted, config.rng("planted"))


def _run_approx_count(config: RunConfig) -> Outcome:
    predicate = _predicate(config)
    oracle = ExactCountOracle(query_log=config.option("query_log"))
    r = config.option("r", 5)
    size = predicate.size()
    k = config.option("k")
    if k is not None:
        accepted = a_k(predicate, k, r, oracle, config.rng("a_k"))
        expected: bool | None = None
        if size >= 1 << (k + 1):
            expected = True
        elif size < 1 << k:
            expected = False
        passed = expected is None or accepted == expected
        report = {"k": k, "r": r, "rounds": repetitions(r), "size": size, "accepted": accepted, "expected": expected}
    else:
        estimate = approximate_count(predicate, r, oracle, config.rng("count"), config.option("strategy"))
        passed = sandwich_holds(estimate.eta, size)
        report = {"size": size, "estimate": estimate, "sandwich": passed}
    report["queries"] = len(oracle.records)
    report["passed"] = passed
    return Outcome(_report_text(config, report), passed)


def _iqp_algorithm(f: Gf2Polynomial, T: int) -> RandomizedAlgorithm:
    """Exact dyadic sampler of the IQP distribution of f using T >= 2n - 2 random bits."""
    base = 2 * f.n - 2
    if T < max(1, base):
        raise ConfigurationError(f"--T must be at least {max(1, base)} to represent the distribution exactly")
    quarter_squares = iqp_distribution(f).gaps.astype(np.int64) ** 2 >> 2
    return RandomizedAlgorithm.from_counts(quarter_squares << (T - base), T)


def _run_stockmeyer(config: RunConfig) -> Outcome:
    f = _polynomial(config)
    T = config.option("T", max(1, 2 * f.n - 2))
    algorithm = _iqp_algorithm(f, T)
    z = BitVector.from_string(config.option("z", "0" * f.n))
    alpha, r = config.option("alpha", 1), config.option("r", 5)
    oracle = ExactCountOracle(query_log=config.option("query_log"))
    estimate = stockmeyer_estimate(algorithm, z, alpha, r, oracle, config.rng("estimate"), config.option("strategy"))
    q = exact_probability(algorithm, z)
    size = int(q * (1 << T)) ** alpha
    checks = {
        "sandwich": sandwich_holds(estimate.eta, size),
        "within_xi": estimate.within_xi(float(q)),
        "query_bound": estimate.queries <= query_bound(alpha, T, r),
    }
    passed = all(checks.values())
    report = {"estimate": estimate, "exact_probability": q, "product_size": size, "checks": checks, "passed": passed}
    return Outcome(_report_text(config, report), passed)


def _run_chain(config: RunConfig) -> Outcome:
    defaults = ChainParams()
    params = ChainParams(
        eps=config.option("eps", defaults.eps),
        delta=config.option("delta", defaults.delta),
        sigma=config.option("sigma", defaults.sigma),
        alpha=config.option("alpha", defaults.alpha),
        w=config.option("w", defaults.w),
    )
    report = chain_experiment(
        n=config.option("n", 6),
        params=params,
        adversary=AdversaryKind(config.option("adversary", AdversaryKind.EXACT.value)),
        f_trials=config.option("trials", 4),
        rng=config.rng("chain"),
        oracle=ExactCountOracle(query_log=config.option("query_log")),
        T=config.option("T"),
        z_samples=config.option("z_samples"),
        degree=config.option("degree", 3),
        strategy=config.option("strategy"),
    )
    return _experiment_outcome(config, report)


def _cnf(config: RunConfig) -> Cnf3:
    path = config.option("cnf")
    if path is None:
        raise ConfigurationError(f"{config.command} needs --cnf")
    return read_dimacs(path)


def _run_tcount(config: RunConfig) -> Outcome:
    return Outcome(f"{t_count(_cnf(config))}\n")


def _run_compile_cnf(config: RunConfig) -> Outcome:
    formula = _cnf(config)
    circuit = compile_cnf(formula)
    checks = {
        "toffoli_count": circuit.toffoli_count == 3 * formula.m - 1,
        "ancillas": circuit.ancillas == 3 * formula.m - 1,
        "matches_cnf": bool(np.array_equal(circuit.output_table(), formula.evaluate_all())),
    }
    passed = all(checks.values())
    report = {
        "n": formula.n,
        "m": formula.m,
        "ancillas": circuit.ancillas,
        "toffoli_count": circuit.toffoli_count,
        "t_count": t_count(formula),
        "output_wire": circuit.output,
        "gates": [{"kind": gate.kind, "wires": gate.wires} for gate in circuit.gates],
        "checks": checks,
        "passed": passed,
    }
    return Outcome(_report_text(config, report), passed)


HANDLERS: dict[str, Callable[[RunConfig], Outcome]] = {
    "gap": _run_gap,
    "iqp-dist": _run_iqp_dist,
    "anticoncentration": _run_anticoncentration,
    "hash-test": _run_hash_test,
    "approx-count": _run_approx_count,
    "stockmeyer": _run_stockmeyer,
    "chain": _run_chain,
    "tcount": _run_tcount,
    "compile-cnf": _run_compile_cnf,
}


def _shared_options(*, trials: bool = True) -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=0, help="Master seed for every random stream")
    if trials:
        shared.add_argument("--trials", type=int, help="Number of sampled trials")
    shared.add_argument("--n", type=int, help="Number of variables / qubits")
    shared.add_argument("--degree", type=int, help="Polynomial degree")
    shared.add_argument("--alpha", type=int, help="Product power of the estimator")
    shared.add_argument("--eps", type=float, help="Additive error budget (or leftover-hash deviation)")
    shared.add_argument("--delta", type=float, help="Markov tail parameter")
    shared.add_argument("--sigma", type=float, help="Relative slack of the estimation chain")
    shared.add_argument("--tau-list", type=float, nargs="+", help="Anti-concentration thresholds in (0, 1)")
    shared.add_argument("--out", type=Path, help="Write the report here instead of stdout")
    shared.add_argument("--format", choices=["json", "csv"], default="json", help="Report format")
    shared.add_argument("--query-log", type=Path, help="Append every oracle query to this JSON-lines file")
    verbosity = shared.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="Log oracle queries and other details")
    verbosity.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    return shared


def _strategy(value: str) -> SearchStrategy:
    return SearchStrategy(value)


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with one subparser per experiment."""
    parser = argparse.ArgumentParser(prog="finegrained", description="Fine-grained sampling hardness laboratory")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)
    shared = _shared_options()

    def command(name: str, description: str, parent: argparse.ArgumentParser = shared) -> argparse.ArgumentParser:
        return commands.add_parser(name, parents=[parent], help=description, description=description)

    gap_parser = command("gap", "Print gap(f) of a polynomial")
    gap_parser.add_argument("--poly", type=Path, help="Polynomial JSON file (random when omitted)")

    dist = command("iqp-dist", "Exact output distribution of an IQP circuit, optionally with a phase oracle")
    dist.add_argument("--poly", type=Path, help="Polynomial JSON file (random when omitted)")
    oracle = dist.add_mutually_exclusive_group()
    oracle.add_argument("--circuit", type=Path, help="Boolean circuit JSON file")
    oracle.add_argument("--cnf", type=Path, help="3-CNF DIMACS file")

    anti = command("anticoncentration", "Probability that p_z(f) >= tau / 2^n", _shared_options(trials=False))
    sampling = anti.add_mutually_exclusive_group()
    sampling.add_argument("--trials", type=int, help="Number of sampled polynomials")
    sampling.add_argument("--exhaustive", action="store_true", help="Enumerate every polynomial exactly")

    hashing = command("hash-test", "Exact pairwise independence and the leftover hash bound")
    hashing.add_argument("--m", type=int, help="Hash output bits")
    hashing.add_argument("--set-size", type=int, help="Size of the planted set for the leftover test")
    hashing.add_argument("--universe-bits", type=int, help="Width of the planted set's universe")

    count = command("approx-count", "Run A_k, or bracket |S| by scale search")
    count.add_argument("--poly", type=Path, help="Accept the inputs where the polynomial is 1")
    count.add_argument("--cnf", type=Path, help="Accept the satisfying assignments of a 3-CNF")
    count.add_argument("--planted", type=int, help="Accept a random set of this size over --n bits")
    count.add_argument("--k", type=int, help="Run a single A_k instead of the full search")
    count.add_argument("--r", type=int, help="Confidence parameter (error e^-r)")
    count.add_argument("--strategy", type=_strategy, default=SearchStrategy.BISECT, help="bisect or sweep")

    stock = command("stockmeyer", "Estimate q_z of the exact IQP sampler")
    stock.add_argument("--poly", type=Path, help="Polynomial JSON file (random when omitted)")
    stock.add_argument("--z", help="Outcome bit string, coordinate 0 first (default all zeros)")
    stock.add_argument("--T", type=int, help="Randomness width (at least 2n - 2)")
    stock.add_argument("--r", type=int, help="Confidence parameter (error e^-r)")
    stock.add_argument("--strategy", type=_strategy, default=SearchStrategy.BISECT, help="bisect or sweep")

    chain = command("chain", "Run the estimation chain against a mock adversary")
    chain.add_argument("--adversary", choices=[kind.value for kind in AdversaryKind], help="Adversary kind")
    chain.add_argument("--T", type=int, help="Randomness width of the dyadic sampler")
    chain.add_argument("--z-samples", type=int, help="Outcomes estimated per polynomial")
    chain.add_argument("--w", type=float, help="Target success probability of each estimate")
    chain.add_argument("--strategy", type=_strategy, default=SearchStrategy.BISECT, help="bisect or sweep")

    tcount = command("tcount", "Print the T-count of the compiled 3-CNF construction")
    tcount.add_argument("--cnf", type=Path, help="3-CNF DIMACS file")

    compiled = command("compile-cnf", "Compile a 3-CNF into a reversible Toffoli circuit")
    compiled.add_argument("--cnf", type=Path, help="3-CNF DIMACS file")

    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def dispatch(config: RunConfig) -> int:
    """Run a subcommand and emit its output.

    Args:
        config: Validated invocation

    Returns:
        int: 0 when every invariant held, 1 otherwise
    """
    outcome = HANDLERS[config.command](config)
    write_output(outcome.text, config.out)
    if not outcome.passed:
        logger.warning("%s: at least one invariant check failed", config.command)
        return EXIT_INVARIANT_FAILURE
    return EXIT_PASS


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run the subcommand and return the exit status.

    Args:
        argv: Arguments without the program name (``sys.argv[1:]`` when None)

    Returns:
        int: 0 pass, 1 invariant failure, 2 configuration or input error
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args)
    try:
        return dispatch(RunConfig.from_namespace(args))
    except FineGrainedError:
        logger.exception("%s failed", args.command)
        return EXIT_CONFIGURATION_ERROR


if __name__ == "__main__":
    sys.exit(main())
