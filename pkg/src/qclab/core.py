"""Partial Boolean functions, subcubes, and input distributions.

Conventions used throughout the package:

* Input variables are 0-based.  Variable 0 is the first input bit and the
  most significant bit of a truth-table index, so the input bitstring
  ``x_0 x_1 ... x_{m-1}`` is stored at index ``int(x, 2)``.
* Probabilities are ``fractions.Fraction`` in exact mode and ``float`` in
  float mode.  Every derived quantity (conditioning, marginals, DP values)
  stays in the arithmetic mode of its inputs.
* All value types here are immutable and hashable; they can be shared
  freely across parallel workers.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

from .errors import ParseError, SplitError, ZeroMassError

Number = Union[Fraction, float]

MAX_BITS = 20


def bit_of(index: int, j: int, m: int) -> int:
    """Bit j of the m-bit input encoded by a truth-table index."""
    return (index >> (m - 1 - j)) & 1


def index_of_bits(bits: Sequence[int]) -> int:
    """Truth-table index of an explicit bit sequence (bit 0 first)."""
    value = 0
    for b in bits:
        value = (value << 1) | (b & 1)
    return value


def bits_of_index(index: int, m: int) -> tuple[int, ...]:
    return tuple(bit_of(index, j, m) for j in range(m))


def parse_number(text: object) -> Number:
    """Parse a probability literal.

    Strings are exact: ``"1/3"`` becomes ``Fraction(1, 3)`` and ``"0.25"``
    becomes ``Fraction(1, 4)``.  Python ints are exact; floats stay floats
    and switch the containing distribution to float mode.
    """
    if isinstance(text, bool):
        raise ParseError(f"not a probability literal: {text!r}")
    if isinstance(text, int):
        return Fraction(text)
    if isinstance(text, float):
        return text
    if isinstance(text, Fraction):
        return text
    if isinstance(text, str):
        try:
            return Fraction(text)
        except (ValueError, ZeroDivisionError) as exc:
            raise ParseError(f"not a probability literal: {text!r}") from exc
    raise ParseError(f"not a probability literal: {text!r}")


def format_number(value: Number) -> object:
    """JSON-friendly form: Fractions as 'p/q' strings, floats unchanged."""
    if isinstance(value, Fraction):
        return str(value)
    return value


@dataclass(frozen=True)
class PartialFn:
    """Truth table of a partial Boolean function on ``m`` bits.

    ``values[i]`` is 0, 1, or None (input i undefined / invalid).  At least
    one entry must be defined.  Functions that are constant on their valid
    inputs are representable but most conflict-complexity operations reject
    them; see :func:`load_partial_fn`.
    """

    m: int
    values: tuple[int | None, ...]

    def __post_init__(self) -> None:
        if not 1 <= self.m <= MAX_BITS:
            raise ParseError(f"m must be in 1..{MAX_BITS}, got {self.m}")
        if len(self.values) != 1 << self.m:
            raise ParseError(
                f"truth table needs {1 << self.m} entries, got {len(self.values)}"
            )
        if all(v is None for v in self.values):
            raise ParseError("truth table has no defined entries")
        for v in self.values:
            if v not in (0, 1, None):
                raise ParseError(f"truth table entry must be 0, 1 or undefined: {v!r}")

    @classmethod
    def from_string(cls, m: int, table: str) -> "PartialFn":
        """Build from a {0,1,*} string of length 2^m, index order as above."""
        if len(table) != 1 << m:
            raise ParseError(
                f"values string must have length {1 << m}, got {len(table)}"
            )
        mapping = {"0": 0, "1": 1, "*": None}
        try:
            vals = tuple(mapping[c] for c in table)
        except KeyError as exc:
            raise ParseError(f"values string may only contain 0/1/*: {table!r}") from exc
        return cls(m, vals)

    def to_string(self) -> str:
        return "".join("*" if v is None else str(v) for v in self.values)

    def value(self, x: int) -> int | None:
        return self.values[x]

    def is_valid(self, x: int) -> bool:
        return self.values[x] is not None

    def preimage(self, b: int) -> tuple[int, ...]:
        return tuple(x for x, v in enumerate(self.values) if v == b)

    def valid_inputs(self) -> tuple[int, ...]:
        return tuple(x for x, v in enumerate(self.values) if v is not None)

    @property
    def two_sided(self) -> bool:
        return bool(self.preimage(0)) and bool(self.preimage(1))

    def values_on(self, members: Iterable[int]) -> set[int]:
        """Set of defined function values attained on the given inputs."""
        return {self.values[x] for x in members if self.values[x] is not None}

    def to_json(self) -> dict:
        return {"m": self.m, "values": self.to_string()}

    @classmethod
    def from_json(cls, obj: dict) -> "PartialFn":
        if not isinstance(obj, dict) or "m" not in obj or "values" not in obj:
            raise ParseError("function file must be an object with 'm' and 'values'")
        if not isinstance(obj["m"], int):
            raise ParseError(f"'m' must be an integer, got {obj['m']!r}")
        return cls.from_string(obj["m"], str(obj["values"]))


def load_partial_fn(source: Union[str, dict]) -> PartialFn:
    """Load a partial function from a JSON file path or a parsed object.

    Emits a UserWarning when the table is constant on its valid inputs,
    since conflict complexity is undefined for such functions; downstream
    split/conflict operations raise on them.
    """
    if isinstance(source, str):
        try:
            with open(source, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read function file {source!r}: {exc}") from exc
    else:
        obj = source
    fn = PartialFn.from_json(obj)
    if not fn.two_sided:
        warnings.warn(
            "function is constant on its valid inputs; "
            "conflict complexity is undefined for it",
            UserWarning,
            stacklevel=2,
        )
    return fn


@dataclass(frozen=True)
class Subcube:
    """Inputs consistent with a partial assignment of variables.

    ``fixed`` maps variable index to its forced bit, stored as a sorted
    tuple so subcubes hash and compare by value.  The co-dimension is the
    number of fixed variables.
    """

    m: int
    fixed: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        seen = set()
        for j, b in self.fixed:
            if not 0 <= j < self.m:
                raise ParseError(f"fixed variable {j} out of range for m={self.m}")
            if b not in (0, 1):
                raise ParseError(f"fixed value must be a bit: {b!r}")
            if j in seen:
                raise ParseError(f"variable {j} fixed twice")
            seen.add(j)
        object.__setattr__(self, "fixed", tuple(sorted(self.fixed)))

    @classmethod
    def full(cls, m: int) -> "Subcube":
        return cls(m, ())

    @property
    def codim(self) -> int:
        return len(self.fixed)

    def fixed_value(self, j: int) -> int | None:
        for k, b in self.fixed:
            if k == j:
                return b
        return None

    def free_vars(self) -> tuple[int, ...]:
        taken = {j for j, _ in self.fixed}
        return tuple(j for j in range(self.m) if j not in taken)

    def contains(self, x: int) -> bool:
        return all(bit_of(x, j, self.m) == b for j, b in self.fixed)

    def members(self) -> tuple[int, ...]:
        return tuple(x for x in range(1 << self.m) if self.contains(x))

    def child(self, j: int, b: int) -> "Subcube":
        if self.fixed_value(j) is not None:
            raise ParseError(f"variable {j} already fixed in {self}")
        return Subcube(self.m, self.fixed + ((j, b),))

    def to_string(self) -> str:
        chars = ["*"] * self.m
        for j, b in self.fixed:
            chars[j] = str(b)
        return "".join(chars)

    @classmethod
    def from_string(cls, pattern: str) -> "Subcube":
        fixed = tuple(
            (j, int(c)) for j, c in enumerate(pattern) if c in "01"
        )
        if any(c not in "01*" for c in pattern):
            raise ParseError(f"subcube pattern may only contain 0/1/*: {pattern!r}")
        return cls(len(pattern), fixed)

    def __str__(self) -> str:  # pragma: no cover - repr convenience
        return self.to_string()


@dataclass(frozen=True)
class InputDistribution:
    """Probability vector over ``{0,1}^bits``.

    Exact mode (all masses Fractions) requires the masses to sum to exactly
    1; float mode tolerates 1e-9.  The same type serves distributions over
    inner-function inputs and over outer-relation inputs.
    """

    bits: int
    mass: tuple[Number, ...]

    def __post_init__(self) -> None:
        if not 1 <= self.bits <= MAX_BITS:
            raise ParseError(f"bits must be in 1..{MAX_BITS}, got {self.bits}")
        if len(self.mass) != 1 << self.bits:
            raise ParseError(
                f"mass vector needs {1 << self.bits} entries, got {len(self.mass)}"
            )
        if any(p < 0 for p in self.mass):
            raise ParseError("mass entries must be nonnegative")
        total = sum(self.mass)
        if self.exact:
            if total != 1:
                raise ParseError(f"exact masses must sum to 1, got {total}")
        elif abs(total - 1.0) > 1e-9:
            raise ParseError(f"float masses must sum to 1 within 1e-9, got {total}")

    @property
    def exact(self) -> bool:
        return all(isinstance(p, (Fraction, int)) for p in self.mass)

    @property
    def mode(self) -> str:
        return "exact" if self.exact else "float"

    @classmethod
    def uniform(cls, bits: int, support: Sequence[int] | None = None) -> "InputDistribution":
        size = 1 << bits
        if support is None:
            support = range(size)
        support = sorted(set(support))
        if not support:
            raise ZeroMassError("uniform distribution needs a nonempty support")
        w = Fraction(1, len(support))
        mass = [Fraction(0)] * size
        for x in support:
            mass[x] = w
        return cls(bits, tuple(mass))

    @classmethod
    def point(cls, bits: int, atom: int) -> "InputDistribution":
        mass = [Fraction(0)] * (1 << bits)
        mass[atom] = Fraction(1)
        return cls(bits, tuple(mass))

    @classmethod
    def from_weights(cls, bits: int, weights: dict[int, Number]) -> "InputDistribution":
        """Normalize arbitrary nonnegative weights on atom indices."""
        total = sum(weights.values())
        if total == 0:
            raise ZeroMassError("weights sum to zero")
        mass = [Fraction(0)] * (1 << bits)
        for x, w in weights.items():
            mass[x] = Fraction(w) / total if isinstance(w, (int, Fraction)) else w / total
        return cls(bits, tuple(mass))

    def support(self) -> tuple[int, ...]:
        return tuple(x for x, p in enumerate(self.mass) if p > 0)

    def prob(self, event: "Subcube | Iterable[int]") -> Number:
        members = event.members() if isinstance(event, Subcube) else event
        return sum((self.mass[x] for x in members), start=Fraction(0))

    def to_json(self) -> dict:
        return {"bits": self.bits, "mass": [format_number(p) for p in self.mass]}

    @classmethod
    def from_json(cls, obj: dict) -> "InputDistribution":
        if not isinstance(obj, dict) or "bits" not in obj or "mass" not in obj:
            raise ParseError("distribution file must be an object with 'bits' and 'mass'")
        if not isinstance(obj["bits"], int):
            raise ParseError(f"'bits' must be an integer, got {obj['bits']!r}")
        mass = tuple(parse_number(p) for p in obj["mass"])
        return cls(obj["bits"], mass)


def load_distribution(source: Union[str, dict]) -> InputDistribution:
    if isinstance(source, str):
        try:
            with open(source, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read distribution file {source!r}: {exc}") from exc
    else:
        obj = source
    return InputDistribution.from_json(obj)


def condition(mu: InputDistribution, event: Subcube | Iterable[int]) -> InputDistribution:
    """Distribution of x ~ mu given that x lies in the event.

    The event may be a subcube or any iterable of atom indices.  Raises
    ZeroMassError when the event has zero probability.
    """
    members = set(event.members() if isinstance(event, Subcube) else event)
    total = sum((mu.mass[x] for x in members), start=Fraction(0))
    if total == 0:
        raise ZeroMassError("conditioning on a zero-probability event")
    zero = Fraction(0) if mu.exact else 0.0
    mass = tuple(
        mu.mass[x] / total if x in members else zero for x in range(len(mu.mass))
    )
    return InputDistribution(mu.bits, mass)


def split_by_value(mu: InputDistribution, g: PartialFn) -> tuple[InputDistribution, InputDistribution]:
    """Condition mu on each function value, returning (mu|g=0, mu|g=1).

    Requires mu to put positive mass on both preimages; the error message
    names the empty side.
    """
    if mu.bits != g.m:
        raise ParseError(f"distribution is over {mu.bits} bits but g has m={g.m}")
    parts = []
    for b in (0, 1):
        pre = g.preimage(b)
        if sum((mu.mass[x] for x in pre), start=Fraction(0)) == 0:
            raise SplitError(f"distribution has no mass on the {b}-side of g")
        parts.append(condition(mu, pre))
    return parts[0], parts[1]


def marginal_bit(mu: InputDistribution, j: int, cube: Subcube) -> Number:
    """Pr[x_j = 0] when x ~ mu conditioned on the subcube.

    If j is fixed by the subcube the forced value decides: returns 1 when
    fixed to 0 and 0 when fixed to 1.
    """
    if not 0 <= j < mu.bits:
        raise ParseError(f"variable {j} out of range for {mu.bits} bits")
    forced = cube.fixed_value(j)
    if forced is not None:
        return Fraction(1) if forced == 0 else Fraction(0)
    total = Fraction(0)
    zeros = Fraction(0)
    for x in cube.members():
        p = mu.mass[x]
        total += p
        if bit_of(x, j, mu.bits) == 0:
            zeros += p
    if total == 0:
        raise ZeroMassError("marginal over a zero-mass subcube")
    return zeros / total
