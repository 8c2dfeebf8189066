"""Toeplitz hash family ``h(x) = A x + b`` over F2 and its statistical checks.

The m x n matrix A is constant along diagonals: ``A[i][j] = diag bit (i - j + n - 1)``, so
n + m - 1 bits define it and n + 2m - 1 bits define a hasher.
"""

import logging
import math
from collections.abc import Collection, Iterator
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import numpy.typing as npt
from tqdm import tqdm

from finegrained.utils.bits import WORD_BITS, BitVector, int_to_words
from finegrained.utils.config import Limits, resolve_limits
from finegrained.utils.errors import ArgumentError, ResourceLimitError

logger = logging.getLogger(__name__)

MAX_FAMILY_BITS = 22
MAX_REPORTED_VIOLATIONS = 20

ERR_WORD_INPUT = "vectorized hashing needs n <= 64 and m <= 64"


def _pack_bits(bits: npt.NDArray[np.integer]) -> int:
    return sum(int(bit) << i for i, bit in enumerate(bits))


@dataclass(frozen=True)
class ToeplitzHasher:
    """Affine map ``x -> A x + b`` from n to m bits with Toeplitz A.

    Attributes:
        n: Input bits
        m: Output bits
        diag: n + m - 1 packed diagonal bits of A
        offset: m packed bits of b
    """

    n: int
    m: int
    diag: int
    offset: int

    def __post_init__(self) -> None:
        """Check dimensions and field widths."""
        if self.n < 1 or self.m < 1:
            raise ArgumentError("n, m", f"both must be positive, got n={self.n}, m={self.m}")
        if not 0 <= self.diag < 1 << (self.n + self.m - 1):
            raise ArgumentError("diag", f"must fit in {self.n + self.m - 1} bits")
        if not 0 <= self.offset < 1 << self.m:
            raise ArgumentError("offset", f"must fit in {self.m} bits")

    def entry(self, i: int, j: int) -> int:
        """Matrix entry A[i][j]."""
        return (self.diag >> (i - j + self.n - 1)) & 1

    def matrix(self) -> npt.NDArray[np.uint8]:
        """Explicit m x n 0/1 matrix."""
        return np.array([[self.entry(i, j) for j in range(self.n)] for i in range(self.m)], dtype=np.uint8)

    @cached_property
    def row_masks(self) -> tuple[int, ...]:
        """Row i packed over input coordinates j."""
        return tuple(sum(self.entry(i, j) << j for j in range(self.n)) for i in range(self.m))

    @cached_property
    def column_masks(self) -> tuple[int, ...]:
        """Column j packed over output coordinates i."""
        low = (1 << self.m) - 1
        return tuple((self.diag >> (self.n - 1 - j)) & low for j in range(self.n))

    def linear(self, x: int) -> int:
        """Packed ``A x`` for a packed input."""
        return sum(((row & x).bit_count() & 1) << i for i, row in enumerate(self.row_masks))

    def hash(self, x: BitVector) -> BitVector:
        """Apply the hasher to one vector.

        Args:
            x: Input of length n

        Returns:
            BitVector: ``A x + b`` of length m

        Raises:
            ArgumentError: If x has the wrong length
        """
        if x.length != self.n:
            raise ArgumentError("x", f"length {x.length} does not match hasher input width {self.n}")
        return BitVector(self.m, self.linear(x.bits) ^ self.offset)

    def hash_many(self, xs: npt.NDArray[np.uint64]) -> npt.NDArray[np.uint64]:
        """Vectorized hashing of packed inputs (n and m at most 64)."""
        if self.n > WORD_BITS or self.m > WORD_BITS:
            raise ArgumentError("xs", ERR_WORD_INPUT)
        out = self.block_images(0, self.n, xs)[:, 0]
        return out ^ np.uint64(self.offset)

    def block_images(self, start: int, width: int, members: npt.NDArray[np.uint64]) -> npt.NDArray[np.uint64]:
        """Images ``A[:, start:start+width] x`` of packed width-bit vectors.

        Used to hash concatenations block by block: the image of a concatenation is the
        XOR of the images of its blocks.

        Args:
            start: First input column of the block
            width: Block width (at most 64)
            members: Packed block values

        Returns:
            npt.NDArray[np.uint64]: Array of shape (len(members), ceil(m / 64)) of image words
        """
        if width > WORD_BITS or start + width > self.n:
            raise ArgumentError("width", f"block [{start}, {start + width}) does not fit input width {self.n}")
        members = np.asarray(members, dtype=np.uint64)
        words = int_to_words(0, self.m).shape[0]
        images = np.zeros((members.shape[0], words), dtype=np.uint64)
        for j in range(width):
            column = int_to_words(self.column_masks[start + j], self.m)
            bit = (members >> np.uint64(j)) & np.uint64(1)
            images ^= bit[:, None] * column[None, :]
        return images


def sample_hasher(n: int, m: int, rng: np.random.Generator) -> ToeplitzHasher:
    """Draw a hasher with all n + 2m - 1 defining bits uniform and independent.

    Args:
        n: Input bits
        m: Output bits
        rng: Seeded generator

    Returns:
        ToeplitzHasher: Random hasher
    """
    if n < 1 or m < 1:
        raise ArgumentError("n, m", f"both must be positive, got n={n}, m={m}")
    bits = rng.integers(0, 2, size=n + 2 * m - 1)
    return ToeplitzHasher(n, m, _pack_bits(bits[: n + m - 1]), _pack_bits(bits[n + m - 1 :]))


def family_size(n: int, m: int) -> int:
    """Number of hashers, ``2^(n + 2m - 1)``."""
    return 1 << (n + 2 * m - 1)


def enumerate_hashers(n: int, m: int) -> Iterator[ToeplitzHasher]:
    """Yield every hasher of the family once."""
    for diag in range(1 << (n + m - 1)):
        for offset in range(1 << m):
            yield ToeplitzHasher(n, m, diag, offset)


@dataclass
class PairwiseReport:
    """Exact joint-image counts over the whole hash family.

    Attributes:
        n: Input bits
        m: Output bits
        family_size: Number of hashers enumerated
        expected: Count every (x1, y1, x2, y2) cell must have, ``family_size / 4^m``
        cells_checked: Cells with x1 != x2
        min_count: Smallest observed cell count
        max_count: Largest observed cell count
        violations: Up to 20 offending cells as (x1, x2, y1, y2, count)
    """

    n: int
    m: int
    family_size: int
    expected: int
    cells_checked: int
    min_count: int
    max_count: int
    violations: list[tuple[int, int, int, int, int]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        """Whether every cell count equals the expected count."""
        return self.min_count == self.expected == self.max_count


def pairwise_independence_exhaustive(n: int, m: int, limits: Limits | None = None) -> PairwiseReport:
    """Count, over the whole family, the hashers sending x1 to y1 and x2 to y2.

    Args:
        n: Input bits
        m: Output bits
        limits: Resource limits (environment defaults when None)

    Returns:
        PairwiseReport: Exact counts and any cells that differ from the expected value

    Raises:
        ResourceLimitError: If the family or the count table exceeds its budget
    """
    if n < 1 or m < 1:
        raise ArgumentError("n, m", f"both must be positive, got n={n}, m={m}")
    if n + 2 * m - 1 > MAX_FAMILY_BITS:
        raise ResourceLimitError("hash family", n + 2 * m - 1, MAX_FAMILY_BITS)
    table_bits = 2 * n + 2 * m
    limit = resolve_limits(limits).max_exhaustive_bits
    if table_bits > limit:
        raise ResourceLimitError("pairwise count table", table_bits, limit)

    xs = np.arange(1 << n, dtype=np.uint64)
    offsets = np.arange(1 << m, dtype=np.uint64)[:, None]
    x1, x2 = np.meshgrid(np.arange(1 << n), np.arange(1 << n), indexing="ij")
    pair_index = (x1 * (1 << n) + x2).astype(np.int64)[None, :, :]
    counts = np.zeros(1 << table_bits, dtype=np.int64)
    for diag in tqdm(range(1 << (n + m - 1)), desc="Toeplitz matrices", leave=False, disable=None):
        images = ToeplitzHasher(n, m, diag, 0).hash_many(xs)[None, :] ^ offsets
        images = images.astype(np.int64)
        y1 = images[:, :, None]
        y2 = images[:, None, :]
        cells = (pair_index << (2 * m)) | (y1 << m) | y2
        counts += np.bincount(cells.ravel(), minlength=1 << table_bits)

    grid = counts.reshape(1 << n, 1 << n, 1 << m, 1 << m)
    off_diagonal = ~np.eye(1 << n, dtype=bool)
    checked = grid[off_diagonal]
    expected = family_size(n, m) >> (2 * m)
    bad = np.argwhere((grid != expected) & off_diagonal[:, :, None, None])
    violations = [
        (int(a), int(b), int(c), int(d), int(grid[a, b, c, d])) for a, b, c, d in bad[:MAX_REPORTED_VIOLATIONS]
    ]
    if violations:
        logger.warning("Pairwise independence violated in %d cells for n=%d, m=%d", len(bad), n, m)
    return PairwiseReport(
        n=n,
        m=m,
        family_size=family_size(n, m),
        expected=expected,
        cells_checked=int(checked.size),
        min_count=int(checked.min()),
        max_count=int(checked.max()),
        violations=violations,
    )


@dataclass
class LeftoverReport:
    """Monte-Carlo estimate of how often a hashed preimage count strays from its mean.

    Attributes:
        set_size: |S|
        m: Output bits
        eps: Relative deviation threshold
        trials: Hashers sampled
        deviations: Hashers whose count deviated by at least ``eps * |S| / 2^m``
        empirical: ``deviations / trials``
        bound: ``2^m / (eps^2 |S|)``
        stderr: Binomial standard error at the (clipped) bound
    """

    set_size: int
    m: int
    eps: float
    trials: int
    deviations: int
    empirical: float
    bound: float
    stderr: float

    @property
    def passed(self) -> bool:
        """Whether the empirical rate is within three standard errors of the bound."""
        return self.empirical <= self.bound + 3 * self.stderr


Members = Collection[BitVector] | npt.NDArray[np.uint64]


def _as_members(members: Members, n: int | None) -> tuple[npt.NDArray[np.uint64], int]:
    if isinstance(members, np.ndarray):
        if n is None:
            raise ArgumentError("n", "required when the set is given as packed integers")
        return np.unique(members.astype(np.uint64)), n
    vectors = list(members)
    if not vectors:
        raise ArgumentError("members", "the set must be nonempty")
    lengths = {v.length for v in vectors}
    if len(lengths) != 1:
        raise ArgumentError("members", f"vectors have mixed lengths {sorted(lengths)}")
    return np.unique(np.array([v.bits for v in vectors], dtype=np.uint64)), lengths.pop()


def random_subset(n: int, size: int, rng: np.random.Generator) -> npt.NDArray[np.uint64]:
    """Uniform random subset of {0,1}^n of the given size, as sorted packed integers."""
    if not 0 < size <= 1 << n:
        raise ArgumentError("size", f"must be in [1, 2^{n}], got {size}")
    return np.sort(rng.choice(1 << n, size=size, replace=False).astype(np.uint64))


def leftover_deviation_probability(
    members: Members,
    m: int,
    eps: float,
    trials: int,
    rng: np.random.Generator,
    n: int | None = None,
) -> LeftoverReport:
    """Estimate ``Pr[| |{x in S : h(x) = 0^m}| - |S|/2^m | >= eps |S|/2^m]`` over random hashers.

    Args:
        members: The set S, as bit vectors or packed integers (then ``n`` is required)
        m: Output bits
        eps: Relative deviation threshold
        trials: Number of hashers to sample
        rng: Seeded generator
        n: Input width for packed members

    Returns:
        LeftoverReport: Empirical rate, analytical bound and standard error

    Raises:
        ArgumentError: If S is empty, eps is not positive or trials is not positive
    """
    xs, width = _as_members(members, n)
    if xs.size == 0:
        raise ArgumentError("members", "the set must be nonempty")
    if eps <= 0:
        raise ArgumentError("eps", f"must be positive, got {eps}")
    if trials < 1:
        raise ArgumentError("trials", f"must be positive, got {trials}")
    size = int(xs.size)
    mean = size / (1 << m)
    deviations = 0
    for _ in tqdm(range(trials), desc="Leftover hash trials", leave=False, disable=None):
        hasher = sample_hasher(width, m, rng)
        count = int(np.count_nonzero(hasher.hash_many(xs) == 0))
        deviations += abs(count - mean) >= eps * mean
    bound = (1 << m) / (eps * eps * size)
    clipped = min(bound, 1.0)
    return LeftoverReport(
        set_size=size,
        m=m,
        eps=eps,
        trials=trials,
        deviations=deviations,
        empirical=deviations / trials,
        bound=bound,
        stderr=math.sqrt(clipped * (1 - clipped) / trials),
    )

