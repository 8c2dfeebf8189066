"""Tests for the shared utilities: bit vectors, transforms, limits, seeds and reports."""

import dataclasses
import enum
import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from finegrained.utils.bits import BitVector, fwht, int_to_words, log2_length, mobius_transform
from finegrained.utils.config import (
    ENV_MAX_ENUM_BITS,
    ENV_MAX_EXHAUSTIVE_BITS,
    ENV_ORACLE_BUDGET_BITS,
    Limits,
    resolve_limits,
)
from finegrained.utils.errors import (
    ArgumentError,
    ConfigurationError,
    FineGrainedError,
    InputFormatError,
    ResourceLimitError,
    UnsupportedGateError,
)
from finegrained.utils.seeding import derive_rng, derive_seed_sequence, label_key
from finegrained.utils.shared import sanitize_for_json, serialize_report, write_output


@pytest.mark.parametrize(
    "text,bits",
    [
        ("110", 0b011),
        ("001", 0b100),
        ("0000", 0),
        ("1", 1),
    ],
)
def test_bitvector_from_string_is_little_endian(text: str, bits: int) -> None:
    """Character i is coordinate i, which is bit i of the packed value."""
    vector = BitVector.from_string(text)
    assert vector.bits == bits
    assert vector.length == len(text)
    assert str(vector) == text


def test_bitvector_operations() -> None:
    """XOR, dot product, weight and indexing."""
    a = BitVector.from_string("1101")
    b = BitVector.from_string("0111")
    assert str(a ^ b) == "1010"
    assert a.dot(b) == 0  # overlap at coordinates 1 and 3
    assert a.weight() == 3
    assert [a[i] for i in range(4)] == [1, 1, 0, 1]
    assert BitVector.from_bits([1, 0, 1]) == BitVector.from_string("101")
    assert BitVector.zeros(5).to_list() == [0] * 5


@pytest.mark.parametrize(
    "length,bits",
    [
        (-1, 0),
        (2, 4),
        (3, -1),
    ],
)
def test_bitvector_rejects_invalid_values(length: int, bits: int) -> None:
    """Values must fit the declared length."""
    with pytest.raises(ArgumentError, match="BitVector"):
        BitVector(length, bits)


@pytest.mark.parametrize("text", ["1x0", "01 1", "2"])
def test_bitvector_rejects_non_binary_strings(text: str) -> None:
    """Only '0' and '1' are valid characters."""
    with pytest.raises(ArgumentError, match="only contain 0 and 1"):
        BitVector.from_string(text)


def test_bitvector_length_mismatch() -> None:
    """Binary operations require equal lengths."""
    with pytest.raises(ArgumentError, match="length mismatch"):
        BitVector.from_string("10") ^ BitVector.from_string("100")


def test_fwht_of_product_sign_vector() -> None:
    """Signs of x0*x1 transform to (2, 2, 2, -2)."""
    assert fwht(np.array([1, 1, 1, -1], dtype=np.int64)).tolist() == [2, 2, 2, -2]


def test_fwht_matches_definition() -> None:
    """Butterfly output equals the direct character sum."""
    rng = np.random.default_rng(3)
    values = rng.integers(-5, 6, size=32).astype(np.int64)
    expected = [sum(int(values[x]) * (-1) ** (x & z).bit_count() for x in range(32)) for z in range(32)]
    assert fwht(values).tolist() == expected


def test_fwht_is_an_involution_up_to_scale() -> None:
    """Applying the unnormalized transform twice multiplies by 2^n."""
    values = np.arange(16, dtype=np.int64)
    assert (fwht(fwht(values)) == 16 * values).all()


def test_fwht_does_not_modify_input() -> None:
    """The transform works on a copy."""
    values = np.array([1, -1, 1, 1], dtype=np.int64)
    fwht(values)
    assert values.tolist() == [1, -1, 1, 1]


def test_log2_length_rejects_non_power_of_two() -> None:
    """Transforms need power-of-two lengths."""
    with pytest.raises(ArgumentError, match="power of two"):
        log2_length(np.zeros(6))


def test_mobius_transform_single_monomial() -> None:
    """The coefficient of x0*x1 yields the AND truth table."""
    coefficients = np.array([0, 0, 0, 1], dtype=np.uint8)
    assert mobius_transform(coefficients).tolist() == [0, 0, 0, 1]


def test_mobius_transform_linear_terms() -> None:
    """x0 + x1 is XOR."""
    coefficients = np.array([0, 1, 1, 0], dtype=np.uint8)
    assert mobius_transform(coefficients).tolist() == [0, 1, 1, 0]


def test_int_to_words_is_little_endian() -> None:
    """Integers are packed into little-endian 64-bit words."""
    packed = int_to_words((1 << 64) + 5, 70)
    assert packed.tolist() == [5, 1]
    assert int_to_words(0, 1).tolist() == [0]


def test_limits_from_env(monkeypatch: pytest.MonkeyPatch) -> None:
    """Environment variables override the defaults."""
    monkeypatch.setenv(ENV_MAX_ENUM_BITS, "12")
    monkeypatch.setenv(ENV_ORACLE_BUDGET_BITS, "16")
    monkeypatch.setenv(ENV_MAX_EXHAUSTIVE_BITS, "18")
    limits = Limits.from_env()
    assert limits.max_enum_bits == 12
    assert limits.oracle_budget_bits == 16
    assert limits.max_exhaustive_bits == 18
    assert limits.max_statevector_qubits == Limits().max_statevector_qubits


@pytest.mark.parametrize("raw", ["abc", "0", "-3"])
def test_limits_from_env_rejects_bad_values(monkeypatch: pytest.MonkeyPatch, raw: str) -> None:
    """Malformed limits are configuration errors."""
    monkeypatch.setenv(ENV_MAX_ENUM_BITS, raw)
    with pytest.raises(ConfigurationError, match=ENV_MAX_ENUM_BITS):
        Limits.from_env()


def test_resolve_limits_prefers_explicit() -> None:
    """Explicit limits are returned unchanged."""
    limits = Limits(max_enum_bits=5)
    assert resolve_limits(limits) is limits


def test_error_hierarchy() -> None:
    """Every error derives from the package base class and keeps its fields."""
    unsupported = UnsupportedGateError(4, 3)
    assert isinstance(unsupported, ArgumentError)
    assert isinstance(unsupported, ValueError)
    assert unsupported.degree == 4
    resource = ResourceLimitError("enumeration", 30, 28)
    assert isinstance(resource, FineGrainedError)
    assert "30" in str(resource)
    assert "28" in str(resource)
    bad_input = InputFormatError("poly.json", "duplicate monomials")
    assert isinstance(bad_input, ArgumentError)
    assert str(bad_input) == "poly.json: duplicate monomials"


def test_derive_rng_is_deterministic_and_label_sensitive() -> None:
    """Same seed and labels give the same stream; different labels differ."""
    first = derive_rng(7, "chain", 1).integers(0, 2**32, size=4)
    again = derive_rng(7, "chain", 1).integers(0, 2**32, size=4)
    other = derive_rng(7, "chain", 2).integers(0, 2**32, size=4)
    assert first.tolist() == again.tolist()
    assert first.tolist() != other.tolist()
    assert label_key(5) == 5
    assert derive_seed_sequence(1, "a").spawn_key == (label_key("a"),)


class _Color(enum.Enum):
    RED = "red"


@dataclasses.dataclass
class _Row:
    value: np.int64
    ratio: Fraction


def test_sanitize_for_json_handles_report_types() -> None:
    """numpy values, fractions, enums, paths, sets and dataclasses become plain JSON."""
    data = {
        "array": np.array([1, 2]),
        "float": np.float64(0.5),
        "flag": np.bool_(True),  # noqa: FBT003
        "fraction": Fraction(1, 8),
        "color": _Color.RED,
        "path": Path("a/b"),
        "set": {3, 1, 2},
        "row": _Row(np.int64(4), Fraction(3, 4)),
        "tuple": (1, None),
    }
    assert sanitize_for_json(data) == {
        "array": [1, 2],
        "float": 0.5,
        "flag": True,
        "fraction": "1/8",
        "color": "red",
        "path": "a/b",
        "set": [1, 2, 3],
        "row": {"value": 4, "ratio": "3/4"},
        "tuple": [1, None],
    }


def test_serialize_report_is_deterministic() -> None:
    """Key order does not affect the output."""
    first = serialize_report({"b": 1, "a": [np.int64(2)]})
    second = serialize_report({"a": [2], "b": 1})
    assert first == second
    assert first.endswith("\n")
    assert json.loads(first) == {"a": [2], "b": 1}


def test_write_output(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    """Text goes to the file when a path is given, to stdout otherwise."""
    target = tmp_path / "nested" / "report.json"
    write_output("{}\n", target)
    assert target.read_text() == "{}\n"
    write_output("hello\n", None)
    assert capsys.readouterr().out == "hello\n"
