"""Bit-level primitives: packed bit vectors and the two butterfly transforms.

Coordinates are little-endian throughout: coordinate i of a vector is bit i of its packed
integer, and the index of a truth-table or amplitude entry is the packed integer itself.
"""

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from finegrained.utils.errors import ArgumentError

WORD_BITS = 64

ERR_NOT_POWER_OF_TWO = "length must be a power of two"


@dataclass(frozen=True)
class BitVector:
    """Fixed-length vector over F2 packed into a Python integer.

    Attributes:
        length: Number of coordinates
        bits: Packed value; coordinate i is bit i, bits beyond length are zero
    """

    length: int
    bits: int = 0

    def __post_init__(self) -> None:
        """Check that the packed value fits the declared length."""
        if self.length < 0:
            raise ArgumentError("length", f"BitVector length must be non-negative, got {self.length}")
        if self.bits < 0 or self.bits >> self.length:
            raise ArgumentError("bits", f"BitVector value {self.bits} does not fit in {self.length} bits")

    @classmethod
    def from_string(cls, text: str) -> "BitVector":
        """Parse a string such as "110" where the first character is coordinate 0.

        Args:
            text: String of '0' and '1' characters

        Returns:
            BitVector: Parsed vector
        """
        if any(char not in "01" for char in text):
            raise ArgumentError("text", f"BitVector string may only contain 0 and 1, got {text!r}")
        return cls(len(text), sum(1 << i for i, char in enumerate(text) if char == "1"))

    @classmethod
    def from_bits(cls, values: list[int] | tuple[int, ...]) -> "BitVector":
        """Build a vector from a coordinate list.

        Args:
            values: Coordinates, each 0 or 1

        Returns:
            BitVector: Packed vector
        """
        return cls.from_string("".join(str(int(value)) for value in values))

    @classmethod
    def zeros(cls, length: int) -> "BitVector":
        """Return the all-zero vector of the given length."""
        return cls(length, 0)

    def __getitem__(self, index: int) -> int:
        """Return coordinate ``index``."""
        if not 0 <= index < self.length:
            raise IndexError(f"coordinate {index} out of range for length {self.length}")
        return (self.bits >> index) & 1

    def __xor__(self, other: "BitVector") -> "BitVector":
        """Coordinate-wise addition over F2."""
        if other.length != self.length:
            raise ArgumentError("other", f"length mismatch: {self.length} vs {other.length}")
        return BitVector(self.length, self.bits ^ other.bits)

    def dot(self, other: "BitVector") -> int:
        """F2 inner product."""
        if other.length != self.length:
            raise ArgumentError("other", f"length mismatch: {self.length} vs {other.length}")
        return (self.bits & other.bits).bit_count() & 1

    def weight(self) -> int:
        """Hamming weight."""
        return self.bits.bit_count()

    def to_list(self) -> list[int]:
        """Coordinates as a list, coordinate 0 first."""
        return [(self.bits >> i) & 1 for i in range(self.length)]

    def __str__(self) -> str:
        """Render coordinate 0 first, matching ``from_string``."""
        return "".join(str(bit) for bit in self.to_list())


def log2_length(values: npt.NDArray[np.generic]) -> int:
    """Return n for an array of length 2^n.

    Args:
        values: One-dimensional array

    Returns:
        int: Number of index bits

    Raises:
        ArgumentError: If the length is not a power of two
    """
    size = values.shape[0]
    if size < 1 or size & (size - 1):
        raise ArgumentError("values", ERR_NOT_POWER_OF_TWO)
    return size.bit_length() - 1


def fwht(values: npt.NDArray[np.int64] | npt.NDArray[np.float64]) -> npt.NDArray[np.int64] | npt.NDArray[np.float64]:
    """Unnormalized fast Walsh-Hadamard transform.

    ``out[z] = sum_x (-1)^(popcount(x & z)) * values[x]``, computed with n butterfly passes.
    Integer input stays integer so sign-vector transforms are exact.

    Args:
        values: Array of length 2^n

    Returns:
        npt.NDArray: Transformed copy, same dtype as the input
    """
    n = log2_length(values)
    out = np.array(values, copy=True)
    for i in range(n):
        half = 1 << i
        view = out.reshape(-1, 2, half)
        top = view[:, 0, :].copy()
        view[:, 0, :] += view[:, 1, :]
        view[:, 1, :] = top - view[:, 1, :]
    return out


def mobius_transform(coefficients: npt.NDArray[np.uint8]) -> npt.NDArray[np.uint8]:
    """Algebraic-normal-form to truth-table transform over F2.

    ``out[x]`` is the XOR of ``coefficients[s]`` over every mask ``s`` contained in ``x``.

    Args:
        coefficients: 0/1 array of length 2^n indexed by monomial mask

    Returns:
        npt.NDArray[np.uint8]: Truth table indexed by assignment
    """
    n = log2_length(coefficients)
    out = np.array(coefficients, dtype=np.uint8, copy=True)
    for i in range(n):
        view = out.reshape(-1, 2, 1 << i)
        view[:, 1, :] ^= view[:, 0, :]
    return out


def int_to_words(value: int, width: int) -> npt.NDArray[np.uint64]:
    """Pack a non-negative integer of ``width`` bits into little-endian uint64 words.

    Args:
        value: Integer to pack
        width: Bit width (determines the word count)

    Returns:
        npt.NDArray[np.uint64]: ceil(width / 64) words, at least one
    """
    count = max(1, -(-width // WORD_BITS))
    mask = (1 << WORD_BITS) - 1
    return np.array([(value >> (WORD_BITS * k)) & mask for k in range(count)], dtype=np.uint64)
