"""Resource limits for the exhaustive kernels.

Limits are read from the environment so that CI and desk runs can be tuned without code
changes. All values are expressed in bits (log2 of the enumerated size).
"""

import os
from dataclasses import dataclass

from finegrained.utils.errors import ConfigurationError

ENV_MAX_ENUM_BITS = "FINEGRAINED_MAX_ENUM_BITS"
ENV_MAX_STATEVECTOR_QUBITS = "FINEGRAINED_MAX_STATEVECTOR_QUBITS"
ENV_ORACLE_BUDGET_BITS = "FINEGRAINED_ORACLE_BUDGET_BITS"
ENV_MAX_EXHAUSTIVE_BITS = "FINEGRAINED_MAX_EXHAUSTIVE_BITS"

DEFAULT_MAX_ENUM_BITS = 28
DEFAULT_MAX_STATEVECTOR_QUBITS = 20
DEFAULT_ORACLE_BUDGET_BITS = 24
DEFAULT_MAX_EXHAUSTIVE_BITS = 24


@dataclass(frozen=True)
class Limits:
    """Budgets for every exhaustive computation in the package.

    Attributes:
        max_enum_bits: Largest n for which 2^n assignments are enumerated
        max_statevector_qubits: Largest register simulated as a dense statevector
        oracle_budget_bits: log2 of the largest table the counting oracle builds for one hashed query
        max_exhaustive_bits: log2 of the largest family enumerated exhaustively (hashers or polynomials)
    """

    max_enum_bits: int = DEFAULT_MAX_ENUM_BITS
    max_statevector_qubits: int = DEFAULT_MAX_STATEVECTOR_QUBITS
    oracle_budget_bits: int = DEFAULT_ORACLE_BUDGET_BITS
    max_exhaustive_bits: int = DEFAULT_MAX_EXHAUSTIVE_BITS

    @classmethod
    def from_env(cls) -> "Limits":
        """Build limits from FINEGRAINED_* environment variables, falling back to defaults.

        Returns:
            Limits: The configured limits

        Raises:
            ConfigurationError: If a variable is set but is not a positive integer
        """
        return cls(
            max_enum_bits=_read_bits(ENV_MAX_ENUM_BITS, DEFAULT_MAX_ENUM_BITS),
            max_statevector_qubits=_read_bits(ENV_MAX_STATEVECTOR_QUBITS, DEFAULT_MAX_STATEVECTOR_QUBITS),
            oracle_budget_bits=_read_bits(ENV_ORACLE_BUDGET_BITS, DEFAULT_ORACLE_BUDGET_BITS),
            max_exhaustive_bits=_read_bits(ENV_MAX_EXHAUSTIVE_BITS, DEFAULT_MAX_EXHAUSTIVE_BITS),
        )


def _read_bits(variable: str, default: int) -> int:
    raw = os.environ.get(variable)
    if raw is None or not raw.strip():
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"{variable} must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigurationError(f"{variable} must be positive, got {value}")
    return value


def resolve_limits(limits: Limits | None) -> Limits:
    """Return the given limits, or the environment-derived ones when None.

    Args:
        limits: Explicit limits or None

    Returns:
        Limits: Limits to use
    """
    return limits if limits is not None else Limits.from_env()
