"""Multilinear polynomials over F2 and their gap sums.

A polynomial is a set of monomials, each a strictly increasing tuple of 0-based variable
indices; a coefficient is 1 exactly when its tuple is present. ``gap(f)`` is the signed sum
``sum_x (-1)^f(x)`` and ``gap_spectrum(f)`` gives ``gap(f_z)`` for every linear shift ``z`` at
once through a Walsh-Hadamard transform of the sign vector.
"""

import itertools
import json
import logging
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt

from finegrained.utils.bits import BitVector, fwht, mobius_transform
from finegrained.utils.config import Limits, resolve_limits
from finegrained.utils.errors import ArgumentError, InputFormatError, ResourceLimitError

logger = logging.getLogger(__name__)

DEFAULT_MAX_DEGREE = 3

Monomial = tuple[int, ...]


@dataclass(frozen=True)
class Gf2Polynomial:
    """Multilinear polynomial over F2 in n variables.

    Attributes:
        n: Number of variables
        monomials: Set of strictly increasing index tuples (no constant term)
        max_degree: Largest monomial size accepted by this instance
    """

    n: int
    monomials: frozenset[Monomial] = field(default_factory=frozenset)
    max_degree: int = DEFAULT_MAX_DEGREE

    def __post_init__(self) -> None:
        """Validate the type invariants."""
        if self.n < 1:
            raise ArgumentError("n", f"must be positive, got {self.n}")
        if self.max_degree < 1:
            raise ArgumentError("max_degree", f"must be positive, got {self.max_degree}")
        object.__setattr__(self, "monomials", frozenset(tuple(m) for m in self.monomials))
        for monomial in self.monomials:
            problem = _monomial_problem(monomial, self.n, self.max_degree)
            if problem:
                raise ArgumentError("monomials", problem)

    @property
    def degree(self) -> int:
        """Largest monomial size, 0 for the zero polynomial."""
        return max((len(m) for m in self.monomials), default=0)

    @cached_property
    def monomial_masks(self) -> tuple[int, ...]:
        """Monomials as packed variable masks, in canonical order."""
        return tuple(sum(1 << i for i in monomial) for monomial in sorted(self.monomials))

    def sorted_monomials(self) -> list[Monomial]:
        """Monomials ordered by size, then lexicographically."""
        return sorted(self.monomials, key=lambda m: (len(m), m))

    def __xor__(self, other: "Gf2Polynomial") -> "Gf2Polynomial":
        """Polynomial addition over F2 (symmetric difference of monomials)."""
        if other.n != self.n:
            raise ArgumentError("other", f"variable count {other.n} differs from {self.n}")
        return Gf2Polynomial(self.n, self.monomials ^ other.monomials, max(self.max_degree, other.max_degree))

    def evaluate(self, x: BitVector) -> int:
        """Evaluate at one assignment; see :func:`evaluate`."""
        return evaluate(self, x)

    def truth_table(self, limits: Limits | None = None) -> npt.NDArray[np.uint8]:
        """Values of f on every assignment, indexed by the packed assignment.

        Args:
            limits: Resource limits (environment defaults when None)

        Returns:
            npt.NDArray[np.uint8]: Array of length 2^n with entries 0 or 1
        """
        check_enumerable(self.n, limits)
        coefficients = np.zeros(1 << self.n, dtype=np.uint8)
        for mask in self.monomial_masks:
            coefficients[mask] = 1
        return mobius_transform(coefficients)

    def to_json(self) -> dict[str, Any]:
        """Serializable form ``{"n": ..., "monomials": [[...], ...]}``."""
        return {"n": self.n, "monomials": [list(m) for m in self.sorted_monomials()]}

    @classmethod
    def from_json(
        cls,
        data: Any,  # noqa: ANN401
        source: str | Path = "<data>",
        max_degree: int = DEFAULT_MAX_DEGREE,
    ) -> "Gf2Polynomial":
        """Build a polynomial from its JSON form, rejecting invariant violations.

        Args:
            data: Parsed JSON value
            source: Where the data came from, for error messages
            max_degree: Largest monomial size accepted

        Returns:
            Gf2Polynomial: Validated polynomial

        Raises:
            InputFormatError: If the data does not describe a valid polynomial
        """
        if not isinstance(data, dict) or "n" not in data or "monomials" not in data:
            raise InputFormatError(source, "expected an object with keys 'n' and 'monomials'")
        n = data["n"]
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise InputFormatError(source, f"'n' must be a positive integer, got {n!r}")
        raw = data["monomials"]
        if not isinstance(raw, list):
            raise InputFormatError(source, "'monomials' must be a list of index lists")
        monomials: list[Monomial] = []
        for entry in raw:
            if not isinstance(entry, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in entry):
                raise InputFormatError(source, f"monomial {entry!r} is not a list of integers")
            monomials.append(tuple(entry))
        if len(set(monomials)) != len(monomials):
            raise InputFormatError(source, "duplicate monomials")
        if max_degree < 1:
            raise ArgumentError("max_degree", f"must be positive, got {max_degree}")
        for monomial in monomials:
            problem = _monomial_problem(monomial, n, max_degree)
            if problem:
                raise InputFormatError(source, problem)
        return cls(n, frozenset(monomials), max_degree)


def _monomial_problem(monomial: Monomial, n: int, max_degree: int) -> str | None:
    if not monomial:
        return "empty monomial (constant term) is not allowed"
    if len(monomial) > max_degree:
        return f"monomial {list(monomial)} exceeds degree {max_degree}"
    if any(i < 0 or i >= n for i in monomial):
        return f"monomial {list(monomial)} has an index outside [0, {n})"
    if any(a >= b for a, b in itertools.pairwise(monomial)):
        return f"monomial {list(monomial)} is not strictly increasing"
    return None


def check_enumerable(n: int, limits: Limits | None = None) -> None:
    """Raise if 2^n assignments exceed the enumeration budget.

    Args:
        n: Number of variables
        limits: Resource limits (environment defaults when None)

    Raises:
        ResourceLimitError: If n is above ``limits.max_enum_bits``
    """
    limit = resolve_limits(limits).max_enum_bits
    if n > limit:
        raise ResourceLimitError("enumeration", n, limit)


def _check_length(f: Gf2Polynomial, x: BitVector, name: str) -> None:
    if x.length != f.n:
        raise ArgumentError(name, f"length {x.length} does not match variable count {f.n}")


def evaluate(f: Gf2Polynomial, x: BitVector) -> int:
    """Evaluate f at x: XOR over monomials of the AND of their variables.

    Args:
        f: Polynomial
        x: Assignment of length f.n

    Returns:
        int: 0 or 1

    Raises:
        ArgumentError: If x has the wrong length
    """
    _check_length(f, x, "x")
    value = 0
    for mask in f.monomial_masks:
        value ^= int(x.bits & mask == mask)
    return value


def candidate_monomials(n: int, degree: int) -> list[Monomial]:
    """All monomials of size 1..degree over n variables, in canonical order."""
    return [m for size in range(1, degree + 1) for m in itertools.combinations(range(n), size)]


def random_polynomial(
    n: int,
    degree: int = DEFAULT_MAX_DEGREE,
    rng: np.random.Generator | None = None,
) -> Gf2Polynomial:
    """Draw a polynomial with every coefficient of size <= degree uniform and independent.

    Args:
        n: Number of variables
        degree: Largest monomial size
        rng: Seeded generator; a fresh unseeded one when None

    Returns:
        Gf2Polynomial: Random polynomial with ``max_degree = max(degree, 3)``
    """
    if n < 1:
        raise ArgumentError("n", f"must be positive, got {n}")
    if degree < 1:
        raise ArgumentError("degree", f"must be positive, got {degree}")
    rng = rng if rng is not None else np.random.default_rng()
    candidates = candidate_monomials(n, degree)
    keep = rng.integers(0, 2, size=len(candidates))
    chosen = frozenset(m for m, bit in zip(candidates, keep, strict=True) if bit)
    return Gf2Polynomial(n, chosen, max(degree, DEFAULT_MAX_DEGREE))


def all_polynomials(n: int, degree: int = DEFAULT_MAX_DEGREE) -> Iterator[Gf2Polynomial]:
    """Enumerate every polynomial of size <= degree over n variables (2^slots of them).

    Args:
        n: Number of variables
        degree: Largest monomial size

    Yields:
        Gf2Polynomial: Each polynomial exactly once
    """
    candidates = candidate_monomials(n, degree)
    for selection in range(1 << len(candidates)):
        chosen = frozenset(m for k, m in enumerate(candidates) if selection >> k & 1)
        yield Gf2Polynomial(n, chosen, max(degree, DEFAULT_MAX_DEGREE))


def shift_by_z(f: Gf2Polynomial, z: BitVector) -> Gf2Polynomial:
    """Return ``f_z = f + sum_i z_i x_i`` by toggling linear monomials.

    Args:
        f: Polynomial
        z: Shift of length f.n

    Returns:
        Gf2Polynomial: Shifted polynomial

    Raises:
        ArgumentError: If z has the wrong length
    """
    _check_length(f, z, "z")
    linear = frozenset((i,) for i in range(f.n) if z[i])
    return Gf2Polynomial(f.n, f.monomials ^ linear, f.max_degree)


def gap(f: Gf2Polynomial, limits: Limits | None = None) -> int:
    """Exact ``sum_x (-1)^f(x)``, computed as ``2^n - 2 * #{x : f(x) = 1}``.

    Args:
        f: Polynomial
        limits: Resource limits (environment defaults when None)

    Returns:
        int: Signed gap

    Raises:
        ResourceLimitError: If n exceeds the enumeration limit
    """
    ones = int(np.count_nonzero(f.truth_table(limits)))
    return (1 << f.n) - 2 * ones


def sign_vector(truth_table: npt.NDArray[np.uint8]) -> npt.NDArray[np.int64]:
    """Map a 0/1 truth table to the +1/-1 vector ``(-1)^f(x)``."""
    return 1 - 2 * truth_table.astype(np.int64)


def gap_spectrum(f: Gf2Polynomial, limits: Limits | None = None) -> npt.NDArray[np.int64]:
    """All shifted gaps at once: entry z equals ``gap(shift_by_z(f, z))``.

    Args:
        f: Polynomial
        limits: Resource limits (environment defaults when None)

    Returns:
        npt.NDArray[np.int64]: Array of length 2^n indexed by packed z
    """
    return fwht(sign_vector(f.truth_table(limits)))


def read_polynomial(path: str | Path, max_degree: int = DEFAULT_MAX_DEGREE) -> Gf2Polynomial:
    """Read a polynomial JSON file.

    Args:
        path: File path
        max_degree: Largest monomial size accepted (the degree-3 family by default)

    Returns:
        Gf2Polynomial: Validated polynomial

    Raises:
        InputFormatError: If the file is unreadable or invalid
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as error:
        raise InputFormatError(path, f"unreadable polynomial file ({error})") from error
    return Gf2Polynomial.from_json(data, source=path, max_degree=max_degree)


def write_polynomial(f: Gf2Polynomial, path: str | Path) -> None:
    """Write a polynomial in the JSON file format."""
    Path(path).write_text(json.dumps(f.to_json()) + "\n")


def polynomial_from_monomials(
    n: int,
    monomials: Iterable[Iterable[int]],
    max_degree: int = DEFAULT_MAX_DEGREE,
) -> Gf2Polynomial:
    """Convenience constructor from nested index lists."""
    return Gf2Polynomial(n, frozenset(tuple(m) for m in monomials), max_degree)
