"""The three circuit families and their exact output distributions.

* IQP circuits ``H^n D_f H^n`` with D_f built from Z, CZ and CCZ gates.
* IQP circuits with an extra phase kicked back from a Boolean-circuit oracle.
* The Clifford+T variant whose oracle is a 3-CNF compiled to X, CNOT and Toffoli gates.

Every distribution is available two ways: through the sign-vector transform (exact integer
gaps) and through a dense statevector run of the gate sequence. Tests use each as the
reference for the other.
"""

import enum
import io
import json
import logging
import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
import numpy.typing as npt
from pysat.formula import CNF

from finegrained.gf2poly import Gf2Polynomial, check_enumerable, gap_spectrum, sign_vector
from finegrained.statevector import Statevector
from finegrained.utils.bits import BitVector, fwht
from finegrained.utils.config import Limits
from finegrained.utils.errors import ArgumentError, InputFormatError, UnsupportedGateError

logger = logging.getLogger(__name__)

IQP_MAX_DEGREE = 3
PHASE_ORACLE_MAX_DEGREE = 2
T_GATES_PER_TOFFOLI = 7

PhaseFunction = Callable[[npt.NDArray[np.int64]], npt.NDArray[np.float64]]


class GateKind(enum.Enum):
    """Diagonal IQP gates, keyed by arity."""

    Z = "Z"
    CZ = "CZ"
    CCZ = "CCZ"


_KIND_BY_ARITY = {1: GateKind.Z, 2: GateKind.CZ, 3: GateKind.CCZ}


@dataclass(frozen=True)
class IqpGate:
    """One diagonal gate: -1 phase on basis states whose listed qubits are all 1."""

    kind: GateKind
    qubits: tuple[int, ...]

    def __str__(self) -> str:
        """Render as ``CZ(1,2)``."""
        return f"{self.kind.value}({','.join(map(str, self.qubits))})"


@dataclass(frozen=True)
class IqpCircuit:
    """Diagonal layer between two implicit Hadamard layers.

    Attributes:
        n: Qubit count
        diagonal_gates: Gates of the diagonal layer, in application order
    """

    n: int
    diagonal_gates: tuple[IqpGate, ...] = ()

    def __post_init__(self) -> None:
        """Check arity and qubit ranges."""
        for gate in self.diagonal_gates:
            if _KIND_BY_ARITY.get(len(gate.qubits)) is not gate.kind:
                raise ArgumentError("diagonal_gates", f"{gate} has the wrong arity for its kind")
            if len(set(gate.qubits)) != len(gate.qubits) or any(not 0 <= q < self.n for q in gate.qubits):
                raise ArgumentError("diagonal_gates", f"{gate} addresses invalid qubits for n={self.n}")


@dataclass(frozen=True)
class DistributionTable:
    """Exact output distribution ``p_z = gaps[z]^2 / 4^n``.

    Attributes:
        n: Outcome width
        gaps: Integer gap for every outcome z
    """

    n: int
    gaps: npt.NDArray[np.int64] = field(repr=False)

    def __post_init__(self) -> None:
        """Freeze the gap array and check its shape."""
        if self.gaps.shape != (1 << self.n,):
            raise ArgumentError("gaps", f"expected length {1 << self.n}, got {self.gaps.shape}")
        self.gaps.setflags(write=False)

    @property
    def probs(self) -> npt.NDArray[np.float64]:
        """Floating-point probabilities."""
        return self.gaps.astype(np.float64) ** 2 / float(4**self.n)

    def probability(self, z: BitVector | int) -> Fraction:
        """Exact rational probability of outcome z."""
        index = z.bits if isinstance(z, BitVector) else z
        return Fraction(int(self.gaps[index]) ** 2, 4**self.n)

    def is_normalized(self) -> bool:
        """Check ``sum gaps^2 == 4^n`` in exact integer arithmetic."""
        return sum(int(g) * int(g) for g in self.gaps) == 4**self.n

    def all_even(self) -> bool:
        """Every gap of a function on n >= 1 bits is even."""
        return bool(np.all(self.gaps % 2 == 0))


def build_iqp(f: Gf2Polynomial) -> IqpCircuit:
    """One Z, CZ or CCZ gate per monomial of f.

    Args:
        f: Polynomial of degree at most 3

    Returns:
        IqpCircuit: Circuit whose diagonal layer applies ``(-1)^f(x)``

    Raises:
        UnsupportedGateError: If f has a monomial of degree above 3
    """
    if f.degree > IQP_MAX_DEGREE:
        raise UnsupportedGateError(f.degree, IQP_MAX_DEGREE)
    gates = tuple(IqpGate(_KIND_BY_ARITY[len(m)], m) for m in f.sorted_monomials())
    return IqpCircuit(f.n, gates)


def simulate_statevector(circuit: IqpCircuit, limits: Limits | None = None) -> npt.NDArray[np.complex128]:
    """Amplitudes of ``H^n D H^n |0^n>``.

    Args:
        circuit: IQP circuit
        limits: Resource limits (environment defaults when None)

    Returns:
        npt.NDArray[np.complex128]: Amplitude of every outcome

    Raises:
        ResourceLimitError: If n exceeds the statevector limit
    """
    state = Statevector(circuit.n, limits)
    for qubit in range(circuit.n):
        state.h(qubit)
    for gate in circuit.diagonal_gates:
        state.phase_flip_all_ones(gate.qubits)
    for qubit in range(circuit.n):
        state.h(qubit)
    return state.amplitudes


def iqp_distribution(f: Gf2Polynomial, limits: Limits | None = None) -> DistributionTable:
    """Exact IQP distribution from the gap spectrum of f."""
    return DistributionTable(f.n, gap_spectrum(f, limits))


class BooleanOp(enum.Enum):
    """Gate operations of a Boolean circuit."""

    AND = "AND"
    OR = "OR"
    NOT = "NOT"
    XOR = "XOR"


_FAN_IN = {BooleanOp.AND: 2, BooleanOp.OR: 2, BooleanOp.XOR: 2, BooleanOp.NOT: 1}


@dataclass(frozen=True)
class BooleanGate:
    """Gate reading the nodes listed in ``inputs`` (inputs are 0..n-1, gate k is node n+k)."""

    op: BooleanOp
    inputs: tuple[int, ...]


@dataclass(frozen=True)
class BooleanCircuit:
    """Fan-in-2 Boolean circuit in topological order.

    Attributes:
        n: Number of inputs
        gates: Gates, each reading only earlier nodes
        output: Node id of the circuit output
    """

    n: int
    gates: tuple[BooleanGate, ...]
    output: int

    def __post_init__(self) -> None:
        """Check fan-in, acyclicity (topological references) and the output id."""
        if self.n < 1:
            raise ArgumentError("n", f"must be positive, got {self.n}")
        for k, gate in enumerate(self.gates):
            node = self.n + k
            if len(gate.inputs) != _FAN_IN[gate.op]:
                raise ArgumentError("gates", f"{gate.op.value} gate {node} needs {_FAN_IN[gate.op]} inputs")
            if any(not 0 <= source < node for source in gate.inputs):
                raise ArgumentError("gates", f"gate {node} reads {list(gate.inputs)}; only earlier nodes are allowed")
        if not 0 <= self.output < self.n + len(self.gates):
            raise ArgumentError("output", f"node {self.output} does not exist")

    @cached_property
    def depth(self) -> int:
        """Longest input-to-output path, counted in gates."""
        depths = [0] * self.n
        for gate in self.gates:
            depths.append(1 + max(depths[source] for source in gate.inputs))
        return depths[self.output]

    def is_log_depth(self, c: float) -> bool:
        """Whether depth is at most ``ceil(c * log2(n + 1))``."""
        return self.depth <= math.ceil(c * math.log2(self.n + 1))

    def evaluate(self, x: BitVector) -> int:
        """Evaluate on one assignment."""
        if x.length != self.n:
            raise ArgumentError("x", f"length {x.length} does not match input count {self.n}")
        return int(self._propagate([np.uint8(bit) for bit in x.to_list()]))

    def evaluate_all(self, limits: Limits | None = None) -> npt.NDArray[np.uint8]:
        """Truth table over every assignment, indexed by the packed assignment."""
        check_enumerable(self.n, limits)
        indices = np.arange(1 << self.n, dtype=np.int64)
        inputs = [((indices >> i) & 1).astype(np.uint8) for i in range(self.n)]
        return np.asarray(self._propagate(inputs), dtype=np.uint8)

    def _propagate(self, values: list[Any]) -> Any:  # noqa: ANN401
        for gate in self.gates:
            args = [values[source] for source in gate.inputs]
            if gate.op is BooleanOp.AND:
                values.append(args[0] & args[1])
            elif gate.op is BooleanOp.OR:
                values.append(args[0] | args[1])
            elif gate.op is BooleanOp.XOR:
                values.append(args[0] ^ args[1])
            else:
                values.append(1 - args[0])
        return values[self.output]

    def to_json(self) -> dict[str, Any]:
        """Serializable form accepted by :func:`read_boolean_circuit`."""
        return {
            "n": self.n,
            "gates": [{"op": gate.op.value, "in": list(gate.inputs)} for gate in self.gates],
            "output": self.output,
        }

    @classmethod
    def from_json(
        cls,
        data: Any,  # noqa: ANN401
        n: int | None = None,
        source: str | Path = "<data>",
    ) -> "BooleanCircuit":
        """Build a circuit from its JSON form.

        Args:
            data: Parsed JSON value with keys "gates", "output" and optionally "n"
            n: Input count when the data does not carry one
            source: Where the data came from, for error messages

        Returns:
            BooleanCircuit: Validated circuit

        Raises:
            InputFormatError: If the data is malformed or violates a circuit invariant
        """
        if not isinstance(data, dict) or "gates" not in data or "output" not in data:
            raise InputFormatError(source, "expected an object with keys 'gates' and 'output'")
        width = data.get("n", n)
        if not isinstance(width, int) or isinstance(width, bool):
            raise InputFormatError(source, "input count 'n' missing; pass it explicitly")
        if n is not None and width != n:
            raise InputFormatError(source, f"file declares n={width} but n={n} was requested")
        try:
            gates = tuple(
                BooleanGate(BooleanOp(str(g["op"]).upper()), tuple(int(i) for i in g["in"])) for g in data["gates"]
            )
            return cls(width, gates, int(data["output"]))
        except (KeyError, TypeError, ValueError) as error:
            raise InputFormatError(source, f"invalid circuit ({error})") from error


def read_boolean_circuit(path: str | Path, n: int | None = None) -> BooleanCircuit:
    """Read a Boolean circuit JSON file.

    Raises:
        InputFormatError: If the file is unreadable or invalid
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as error:
        raise InputFormatError(path, f"unreadable circuit file ({error})") from error
    return BooleanCircuit.from_json(data, n=n, source=path)


def _check_phase_inputs(f: Gf2Polynomial, width: int) -> None:
    if f.degree > PHASE_ORACLE_MAX_DEGREE:
        raise ArgumentError("f", f"degree {f.degree} exceeds {PHASE_ORACLE_MAX_DEGREE}; only Z and CZ are applied")
    if width != f.n:
        raise ArgumentError("g", f"oracle width {width} does not match polynomial width {f.n}")


def _phase_distribution(f: Gf2Polynomial, g_table: npt.NDArray[np.uint8], limits: Limits | None) -> DistributionTable:
    signs = sign_vector(f.truth_table(limits) ^ g_table)
    return DistributionTable(f.n, fwht(signs))


def boolean_phase_distribution(f: Gf2Polynomial, g: BooleanCircuit, limits: Limits | None = None) -> DistributionTable:
    """Distribution ``p_z = gap(g + f_z)^2 / 4^n`` of the Boolean-oracle construction.

    Args:
        f: Polynomial of degree at most 2
        g: Boolean circuit on f.n inputs
        limits: Resource limits (environment defaults when None)

    Returns:
        DistributionTable: Exact distribution

    Raises:
        ArgumentError: If f has degree above 2 or the widths differ
    """
    _check_phase_inputs(f, g.n)
    return _phase_distribution(f, g.evaluate_all(limits), limits)


class Literal(NamedTuple):
    """Variable index (0-based) with polarity."""

    var: int
    positive: bool = True

    def to_dimacs(self) -> int:
        """Signed 1-based DIMACS literal."""
        return self.var + 1 if self.positive else -(self.var + 1)

    @classmethod
    def from_dimacs(cls, value: int) -> "Literal":
        """Parse a signed 1-based DIMACS literal."""
        return cls(abs(value) - 1, value > 0)


Clause = tuple[Literal, Literal, Literal]


@dataclass(frozen=True)
class Cnf3:
    """3-CNF formula.

    Attributes:
        n: Variable count
        clauses: Clauses of exactly three literals
    """

    n: int
    clauses: tuple[Clause, ...]

    def __post_init__(self) -> None:
        """Check clause width, variable range and that at least one clause exists."""
        if self.n < 1:
            raise ArgumentError("n", f"must be positive, got {self.n}")
        if not self.clauses:
            raise ArgumentError("clauses", "a 3-CNF needs at least one clause")
        for clause in self.clauses:
            if len(clause) != 3:  # noqa: PLR2004
                raise ArgumentError("clauses", f"clause {clause} does not have exactly 3 literals")
            if any(not 0 <= literal.var < self.n for literal in clause):
                raise ArgumentError("clauses", f"clause {clause} uses a variable outside [0, {self.n})")

    @property
    def m(self) -> int:
        """Clause count."""
        return len(self.clauses)

    def evaluate(self, x: BitVector) -> int:
        """Evaluate clause by clause on one assignment."""
        if x.length != self.n:
            raise ArgumentError("x", f"length {x.length} does not match variable count {self.n}")
        return int(all(any(x[lit.var] == int(lit.positive) for lit in clause) for clause in self.clauses))

    def evaluate_all(self, limits: Limits | None = None) -> npt.NDArray[np.uint8]:
        """Truth table over every assignment."""
        check_enumerable(self.n, limits)
        indices = np.arange(1 << self.n, dtype=np.int64)
        result = np.ones(1 << self.n, dtype=np.uint8)
        for clause in self.clauses:
            satisfied = np.zeros(1 << self.n, dtype=np.uint8)
            for literal in clause:
                bit = ((indices >> literal.var) & 1).astype(np.uint8)
                satisfied |= bit if literal.positive else 1 - bit
            result &= satisfied
        return result

    def to_dimacs(self) -> str:
        """Render in DIMACS CNF format."""
        formula = CNF(from_clauses=[[literal.to_dimacs() for literal in clause] for clause in self.clauses])
        formula.nv = self.n
        buffer = io.StringIO()
        formula.to_fp(buffer)
        return buffer.getvalue()

    @classmethod
    def from_clauses(cls, n: int, clauses: list[list[int]]) -> "Cnf3":
        """Build from signed 1-based DIMACS literal lists."""
        parsed: list[Clause] = []
        for clause in clauses:
            if len(clause) != 3:  # noqa: PLR2004
                raise ArgumentError("clauses", f"clause {clause} does not have exactly 3 literals")
            first, second, third = (Literal.from_dimacs(v) for v in clause)
            parsed.append((first, second, third))
        return cls(n, tuple(parsed))


def _declared_variables(text: str, source: str | Path) -> int | None:
    """Variable count from the ``p cnf`` header, which the pysat reader skips."""
    for line in text.splitlines():
        fields = line.split()
        if fields and fields[0] == "p":
            if len(fields) != 4 or fields[1] != "cnf" or not fields[2].isdigit():  # noqa: PLR2004
                raise InputFormatError(source, f"malformed header {line.strip()!r}")
            return int(fields[2])
    return None


def parse_dimacs(text: str, source: str | Path = "<string>") -> Cnf3:
    """Parse DIMACS text into a 3-CNF.

    Args:
        text: DIMACS content
        source: Where the text came from, for error messages

    Returns:
        Cnf3: Parsed formula

    Raises:
        InputFormatError: If the text is malformed or a clause does not have exactly 3 literals
    """
    declared = _declared_variables(text, source)
    try:
        formula = CNF(from_string=text)
    except (ValueError, IndexError) as error:
        raise InputFormatError(source, f"malformed DIMACS ({error})") from error
    if not formula.clauses:
        raise InputFormatError(source, "no clauses")
    for index, clause in enumerate(formula.clauses):
        if len(clause) != 3 or 0 in clause:  # noqa: PLR2004
            raise InputFormatError(source, f"clause {index} has {len(clause)} literals, exactly 3 are required")
    n = declared if declared is not None else formula.nv
    try:
        return Cnf3.from_clauses(n, formula.clauses)
    except ArgumentError as error:
        raise InputFormatError(source, error.detail) from error


def read_dimacs(path: str | Path) -> Cnf3:
    """Read a DIMACS file; see :func:`parse_dimacs`."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as error:
        raise InputFormatError(path, f"unreadable DIMACS file ({error})") from error
    return parse_dimacs(text, source=path)


def cnf_phase_distribution(f: Gf2Polynomial, g: Cnf3, limits: Limits | None = None) -> DistributionTable:
    """Distribution of the Clifford+T construction; same contract as :func:`boolean_phase_distribution`."""
    _check_phase_inputs(f, g.n)
    return _phase_distribution(f, g.evaluate_all(limits), limits)


class ReversibleKind(enum.Enum):
    """Reversible gate set."""

    X = "X"
    CNOT = "CNOT"
    TOFFOLI = "TOFFOLI"


_REVERSIBLE_ARITY = {ReversibleKind.X: 1, ReversibleKind.CNOT: 2, ReversibleKind.TOFFOLI: 3}


@dataclass(frozen=True)
class ReversibleGate:
    """Gate on the listed wires; the last wire is the target."""

    kind: ReversibleKind
    wires: tuple[int, ...]


@dataclass(frozen=True)
class ReversibleCircuit:
    """Classical reversible circuit on n input wires followed by ancilla wires.

    Attributes:
        n: Input width (wires 0..n-1)
        ancillas: Ancilla count (wires n..n+ancillas-1, initially zero)
        gates: Gate sequence
        output: Wire carrying g(x) after the sequence
    """

    n: int
    ancillas: int
    gates: tuple[ReversibleGate, ...]
    output: int

    def __post_init__(self) -> None:
        """Check gate arity and wire ranges."""
        for gate in self.gates:
            if len(gate.wires) != _REVERSIBLE_ARITY[gate.kind]:
                raise ArgumentError("gates", f"{gate.kind.value} on {gate.wires} has the wrong arity")
            if len(set(gate.wires)) != len(gate.wires) or any(not 0 <= w < self.width for w in gate.wires):
                raise ArgumentError("gates", f"{gate.kind.value} on {gate.wires} addresses invalid wires")
        if not 0 <= self.output < self.width:
            raise ArgumentError("output", f"wire {self.output} does not exist")

    @property
    def width(self) -> int:
        """Total wire count."""
        return self.n + self.ancillas

    @property
    def toffoli_count(self) -> int:
        """Number of Toffoli gates."""
        return sum(gate.kind is ReversibleKind.TOFFOLI for gate in self.gates)

    def _apply(self, states: Any, gate: ReversibleGate) -> Any:  # noqa: ANN401
        target = gate.wires[-1]
        fire = 1
        for control in gate.wires[:-1]:
            fire = fire & (states >> control) & 1
        return states ^ (fire << target)

    def run(self, x: int) -> int:
        """All wire values after the sequence on input x with zero ancillas."""
        state = x
        for gate in self.gates:
            state = self._apply(state, gate)
        return state

    def run_all(self, limits: Limits | None = None) -> npt.NDArray[np.int64]:
        """Final wire states for every input, ancillas starting at zero."""
        check_enumerable(self.n, limits)
        states = np.arange(1 << self.n, dtype=np.int64)
        for gate in self.gates:
            states = self._apply(states, gate)
        return states

    def output_table(self, limits: Limits | None = None) -> npt.NDArray[np.uint8]:
        """Value of the output wire for every input."""
        return ((self.run_all(limits) >> self.output) & 1).astype(np.uint8)


def _or_gates(a: Literal, b: Literal, target: int) -> list[ReversibleGate]:
    """``target ^= a OR b`` as one Toffoli: NOT(NOT a AND NOT b) with X conjugation."""
    flips = [ReversibleGate(ReversibleKind.X, (lit.var,)) for lit in (a, b) if lit.positive]
    return [
        *flips,
        ReversibleGate(ReversibleKind.TOFFOLI, (a.var, b.var, target)),
        ReversibleGate(ReversibleKind.X, (target,)),
        *flips,
    ]


def compile_cnf(g: Cnf3) -> ReversibleCircuit:
    """Compile a 3-CNF into 3m-1 Toffoli gates on 3m-1 ancillas.

    Clause j uses ancillas ``o1 = n+2j`` (first OR) and ``o2 = n+2j+1`` (clause value).
    The AND chain over clause values follows on ancillas ``n+2m ...``. When the first two
    literals of a clause share a variable, the variable is CNOT-copied into the still-clean
    ``o2`` so the Toffoli controls stay distinct, and the copy is removed again.

    Args:
        g: Formula with m >= 1 clauses

    Returns:
        ReversibleCircuit: Circuit whose output wire holds g(x)
    """
    n, m = g.n, g.m
    gates: list[ReversibleGate] = []
    clause_wires: list[int] = []
    for j, (first, second, third) in enumerate(g.clauses):
        o1, o2 = n + 2 * j, n + 2 * j + 1
        if first.var == second.var:
            copy = ReversibleGate(ReversibleKind.CNOT, (second.var, o2))
            gates += [copy, *_or_gates(first, Literal(o2, second.positive), o1), copy]
        else:
            gates += _or_gates(first, second, o1)
        gates += _or_gates(Literal(o1), third, o2)
        clause_wires.append(o2)

    output = clause_wires[0]
    for t, clause_wire in enumerate(clause_wires[1:]):
        target = n + 2 * m + t
        gates.append(ReversibleGate(ReversibleKind.TOFFOLI, (output, clause_wire, target)))
        output = target

    circuit = ReversibleCircuit(n, 3 * m - 1, tuple(gates), output)
    logger.debug("Compiled %d clauses into %d gates (%d Toffoli)", m, len(gates), circuit.toffoli_count)
    return circuit


def t_count(g: Cnf3) -> int:
    """T gates of the construction: 7 per Toffoli, in both U and its inverse."""
    return 2 * T_GATES_PER_TOFFOLI * (3 * g.m - 1)


def _sandwich(
    f: Gf2Polynomial,
    state: Statevector,
    compute: Callable[[Statevector], None],
    uncompute: Callable[[Statevector], None],
    output_wire: int,
) -> npt.NDArray[np.float64]:
    n = f.n
    for qubit in range(n):
        state.h(qubit)
    compute(state)
    state.z(output_wire)
    uncompute(state)
    for monomial in f.sorted_monomials():
        state.phase_flip_all_ones(monomial)
    for qubit in range(n):
        state.h(qubit)
    return state.marginal_probabilities(n)


def _apply_reversible(state: Statevector, gates: Iterable[ReversibleGate]) -> None:
    for gate in gates:
        if gate.kind is ReversibleKind.X:
            state.x(*gate.wires)
        elif gate.kind is ReversibleKind.CNOT:
            state.cnot(*gate.wires)
        else:
            state.toffoli(*gate.wires)


def _negated(phase: PhaseFunction) -> PhaseFunction:
    return lambda wires: -phase(wires)


def simulate_boolean_construction(
    f: Gf2Polynomial,
    g: BooleanCircuit,
    phase: PhaseFunction | None = None,
    limits: Limits | None = None,
) -> npt.NDArray[np.float64]:
    """Run the Boolean-oracle construction on n+1 qubits and return the outcome marginal.

    U maps ``|x, a>`` to ``e^{i h(x, a XOR g(x))} |x, a XOR g(x)>``, where h is ``phase`` (or
    zero) evaluated on the packed value of all n+1 wires, output wire included. U^-1 undoes
    both, so no choice of h changes the marginal.

    Args:
        f: Polynomial of degree at most 2
        g: Boolean circuit on f.n inputs
        phase: Optional phase function h over packed wire values
        limits: Resource limits (environment defaults when None)

    Returns:
        npt.NDArray[np.float64]: Probability of every z on the first n qubits
    """
    _check_phase_inputs(f, g.n)
    table = g.evaluate_all(limits).astype(np.int64)
    state = Statevector(f.n + 1, limits)
    condition = table[state.register_values(f.n)]

    def compute(target: Statevector) -> None:
        target.controlled_flip(f.n, condition)
        if phase is not None:
            target.phase_on_register(target.num_qubits, phase)

    def uncompute(target: Statevector) -> None:
        if phase is not None:
            target.phase_on_register(target.num_qubits, _negated(phase))
        target.controlled_flip(f.n, condition)

    return _sandwich(f, state, compute, uncompute, f.n)


def simulate_cnf_construction(
    f: Gf2Polynomial,
    g: Cnf3,
    phase: PhaseFunction | None = None,
    limits: Limits | None = None,
    phase_after: int | None = None,
) -> npt.NDArray[np.float64]:
    """Run the compiled 3-CNF construction on n + 3m - 1 qubits and return the outcome marginal.

    The phase h reads every wire, ancillas included, and is applied after the first
    ``phase_after`` gates of U (all of them by default). U^-1 runs the remaining gates
    backwards, removes h, then undoes the first part.

    Args:
        f: Polynomial of degree at most 2
        g: Formula on f.n variables
        phase: Optional phase function h over packed wire values
        limits: Resource limits (environment defaults when None)
        phase_after: Gates of U executed before h is applied

    Returns:
        npt.NDArray[np.float64]: Probability of every z on the first n qubits

    Raises:
        ArgumentError: If ``phase_after`` is outside ``[0, len(gates)]``
    """
    _check_phase_inputs(f, g.n)
    circuit = compile_cnf(g)
    split = len(circuit.gates) if phase_after is None else phase_after
    if not 0 <= split <= len(circuit.gates):
        raise ArgumentError("phase_after", f"must lie in [0, {len(circuit.gates)}], got {split}")
    head, tail = circuit.gates[:split], circuit.gates[split:]
    state = Statevector(circuit.width, limits)

    def compute(target: Statevector) -> None:
        _apply_reversible(target, head)
        if phase is not None:
            target.phase_on_register(target.num_qubits, phase)
        _apply_reversible(target, tail)

    def uncompute(target: Statevector) -> None:
        _apply_reversible(target, reversed(tail))
        if phase is not None:
            target.phase_on_register(target.num_qubits, _negated(phase))
        _apply_reversible(target, reversed(head))

    return _sandwich(f, state, compute, uncompute, circuit.output)
