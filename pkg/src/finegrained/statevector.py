"""Dense statevector simulator for the small gate set the constructions need.

Qubit q is bit q of the amplitude index. Diagonal and permutation gates are applied through
index arithmetic on the whole vector; single-qubit gates through a (high, 2, low) reshape.
"""

import logging
from collections.abc import Callable
from math import sqrt

import numpy as np
import numpy.typing as npt

from finegrained.utils.config import Limits, resolve_limits
from finegrained.utils.errors import ArgumentError, ResourceLimitError

logger = logging.getLogger(__name__)

_SQRT2_INV = 1 / sqrt(2)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=np.complex128) * _SQRT2_INV
PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)

Amplitudes = npt.NDArray[np.complex128]


class Statevector:
    """Mutable n-qubit register initialised to the all-zero basis state.

    Args:
        num_qubits: Register width
        limits: Resource limits (environment defaults when None)

    Raises:
        ResourceLimitError: If the register exceeds ``limits.max_statevector_qubits``
    """

    def __init__(self, num_qubits: int, limits: Limits | None = None) -> None:
        """Allocate |0...0>."""
        limit = resolve_limits(limits).max_statevector_qubits
        if num_qubits > limit:
            raise ResourceLimitError("statevector qubits", num_qubits, limit)
        if num_qubits < 1:
            raise ArgumentError("num_qubits", f"must be positive, got {num_qubits}")
        self.num_qubits = num_qubits
        self.amplitudes: Amplitudes = np.zeros(1 << num_qubits, dtype=np.complex128)
        self.amplitudes[0] = 1.0
        self._indices = np.arange(1 << num_qubits, dtype=np.int64)

    def _check(self, *qubits: int) -> None:
        if len(set(qubits)) != len(qubits):
            raise ArgumentError("qubits", f"gate wires must be distinct, got {qubits}")
        for qubit in qubits:
            if not 0 <= qubit < self.num_qubits:
                raise ArgumentError("qubits", f"wire {qubit} outside register of {self.num_qubits}")

    def _bit(self, qubit: int) -> npt.NDArray[np.int64]:
        return (self._indices >> qubit) & 1

    def apply_matrix(self, matrix: npt.NDArray[np.complex128], qubit: int) -> None:
        """Apply a 2x2 unitary to one qubit."""
        self._check(qubit)
        low = 1 << qubit
        view = self.amplitudes.reshape(-1, 2, low)
        self.amplitudes = np.einsum("ij,ajb->aib", matrix, view).reshape(-1)

    def h(self, qubit: int) -> None:
        """Hadamard."""
        self.apply_matrix(HADAMARD, qubit)

    def x(self, qubit: int) -> None:
        """Bit flip."""
        self._check(qubit)
        self.amplitudes = self.amplitudes[self._indices ^ (1 << qubit)]

    def z(self, qubit: int) -> None:
        """Phase flip."""
        self.phase_flip_all_ones((qubit,))

    def phase_flip_all_ones(self, qubits: tuple[int, ...]) -> None:
        """Multiply by -1 every basis state whose listed qubits are all 1 (Z, CZ, CCZ)."""
        self._check(*qubits)
        mask = sum(1 << q for q in qubits)
        flip = (self._indices & mask) == mask
        self.amplitudes[flip] *= -1

    def cnot(self, control: int, target: int) -> None:
        """Controlled NOT."""
        self._check(control, target)
        self.amplitudes = self.amplitudes[self._indices ^ (self._bit(control) << target)]

    def toffoli(self, control_a: int, control_b: int, target: int) -> None:
        """Doubly controlled NOT."""
        self._check(control_a, control_b, target)
        fire = self._bit(control_a) & self._bit(control_b)
        self.amplitudes = self.amplitudes[self._indices ^ (fire << target)]

    def diagonal(self, phases: Amplitudes) -> None:
        """Multiply amplitude i by ``phases[i]``."""
        self.amplitudes = self.amplitudes * phases

    def phase_on_register(self, width: int, phase: Callable[[npt.NDArray[np.int64]], npt.NDArray[np.float64]]) -> None:
        """Multiply by ``exp(i * phase(x))`` where x is the value of the low ``width`` qubits."""
        register = self._indices & ((1 << width) - 1)
        self.amplitudes = self.amplitudes * np.exp(1j * phase(register))

    def probabilities(self) -> npt.NDArray[np.float64]:
        """Born-rule probabilities of every basis state."""
        return np.abs(self.amplitudes) ** 2

    def marginal_probabilities(self, width: int) -> npt.NDArray[np.float64]:
        """Outcome distribution of the low ``width`` qubits, other qubits traced out."""
        return self.probabilities().reshape(-1, 1 << width).sum(axis=0)

    def controlled_flip(self, target: int, condition: npt.NDArray[np.int64]) -> None:
        """Flip ``target`` on every basis state i with ``condition[i] == 1``.

        ``condition`` must not depend on the target qubit, which makes the map an involution.
        """
        self._check(target)
        self.amplitudes = self.amplitudes[self._indices ^ (condition.astype(np.int64) << target)]

    def register_values(self, width: int) -> npt.NDArray[np.int64]:
        """Value of the low ``width`` qubits for every basis index."""
        return self._indices & ((1 << width) - 1)
