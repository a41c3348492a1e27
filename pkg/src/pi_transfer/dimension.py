"""Dimensional algebra over mass-length-time and Pi-group transforms.

A quantity ``q`` with dimension ``[q] = M^a L^b T^c`` is made dimensionless
with a basis of three quantities ``q_b`` whose dimensions span M-L-T::

    q~ = q * prod(q_b ** m_b)

where the exponents ``m_b`` solve ``[q] + sum(m_b [q_b]) = 0``.
"""
from __future__ import annotations

import hashlib
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    NonPositiveBasisValue,
    SchemaMismatch,
    SingularBasis,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DIM_ATOL = 1e-9
SINGULAR_DET_TOL = 1e-12
CONTEXT_SCHEMA_VERSION = 1


@dataclass(frozen=True, eq=False)
class Dimension:
    """Exponent triple over (M, L, T)."""

    mass_exp: float = 0.0
    length_exp: float = 0.0
    time_exp: float = 0.0

    def __post_init__(self):
        for name in ("mass_exp", "length_exp", "time_exp"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def dimensionless(cls) -> Dimension:
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_vector(cls, vec: Iterable[float]) -> Dimension:
        a, b, c = vec
        return cls(a, b, c)

    def as_vector(self) -> np.ndarray:
        return np.array([self.mass_exp, self.length_exp, self.time_exp])

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.mass_exp, self.length_exp, self.time_exp)

    @property
    def is_dimensionless(self) -> bool:
        return self == Dimension.dimensionless()

    # dimension of a product of quantities
    def __add__(self, other: Dimension) -> Dimension:
        return Dimension(self.mass_exp + other.mass_exp,
                         self.length_exp + other.length_exp,
                         self.time_exp + other.time_exp)

    def __neg__(self) -> Dimension:
        return Dimension(-self.mass_exp, -self.length_exp, -self.time_exp)

    def __sub__(self, other: Dimension) -> Dimension:
        return self + (-other)

    def __mul__(self, power: float) -> Dimension:
        return Dimension(self.mass_exp * power, self.length_exp * power,
                         self.time_exp * power)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dimension):
            return NotImplemented
        return all(abs(x - y) <= DIM_ATOL
                   for x, y in zip(self.as_tuple(), other.as_tuple()))

    __hash__ = None

    def __repr__(self) -> str:
        return f"Dimension({self.mass_exp:g}, {self.length_exp:g}, {self.time_exp:g})"


DIMENSIONLESS = Dimension.dimensionless()


@dataclass(frozen=True)
class Quantity:
    value: float
    dim: Dimension = DIMENSIONLESS
    name: str = ""

    def __post_init__(self):
        value = float(self.value)
        if not math.isfinite(value):
            raise ValueError(f"quantity {self.name!r} must be finite, got {value}")
        object.__setattr__(self, "value", value)

    def __add__(self, other: Quantity) -> Quantity:
        if self.dim != other.dim:
            raise DimensionMismatch(f"cannot add {self.dim} and {other.dim}")
        return Quantity(self.value + other.value, self.dim)

    def __sub__(self, other: Quantity) -> Quantity:
        if self.dim != other.dim:
            raise DimensionMismatch(f"cannot subtract {other.dim} from {self.dim}")
        return Quantity(self.value - other.value, self.dim)

    def __mul__(self, other):
        if isinstance(other, Quantity):
            return Quantity(self.value * other.value, self.dim + other.dim)
        return Quantity(self.value * other, self.dim, self.name)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Quantity):
            return Quantity(self.value / other.value, self.dim - other.dim)
        return Quantity(self.value / other, self.dim, self.name)

    def __pow__(self, power: float) -> Quantity:
        return Quantity(self.value ** power, self.dim * power)

    def with_value(self, value: float) -> Quantity:
        return Quantity(value, self.dim, self.name)


@dataclass(frozen=True)
class Basis:
    """Three quantities whose dimensions span M-L-T."""

    quantities: tuple[Quantity, Quantity, Quantity]

    def __post_init__(self):
        quantities = tuple(self.quantities)
        if len(quantities) != 3:
            raise SingularBasis(f"a basis needs exactly 3 quantities, got {len(quantities)}")
        object.__setattr__(self, "quantities", quantities)
        det = np.linalg.det(self.matrix)
        if abs(det) < SINGULAR_DET_TOL:
            raise SingularBasis(
                f"basis {self.names} has singular dimension matrix (det={det:.3g})")
        for q in quantities:
            if not q.value > 0:
                raise NonPositiveBasisValue(
                    f"basis member {q.name!r} must be strictly positive, got {q.value}")

    @property
    def matrix(self) -> np.ndarray:
        """3x3 matrix whose columns are the members' dimension vectors."""
        return np.column_stack([q.dim.as_vector() for q in self.quantities])

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(q.name for q in self.quantities)

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(q.value for q in self.quantities)


def _snap(x: float) -> float:
    # Physical exponents are small rationals; snap away solver round-off.
    frac = Fraction(x).limit_denominator(64)
    return float(frac) if abs(float(frac) - x) < 1e-12 else x


def pi_exponents(target: Dimension, basis: Basis) -> tuple[float, float, float]:
    """Exponents ``m_b`` such that ``target + sum(m_b * [q_b]) == 0``."""
    m = np.linalg.solve(basis.matrix, -target.as_vector())
    a, b, c = (_snap(float(v)) + 0.0 for v in m)
    return (a, b, c)


def _power_product(values: Sequence[float], exponents: Sequence[float]) -> float:
    # numerator / denominator split keeps q_b * q_b**-1 == 1 exactly
    num = 1.0
    den = 1.0
    for v, e in zip(values, exponents):
        if e > 0:
            num *= v ** e
        elif e < 0:
            den *= v ** -e
    return num / den


def scale_factor(dim: Dimension, basis: Basis) -> float:
    """Factor ``prod(q_b ** m_b)`` mapping a value of dimension ``dim`` to its pi group."""
    return _power_product(basis.values, pi_exponents(dim, basis))


def to_dimensionless(q: Quantity, basis: Basis) -> float:
    exps = pi_exponents(q.dim, basis)
    num = q.value
    den = 1.0
    for v, e in zip(basis.values, exps):
        if e > 0:
            num *= v ** e
        elif e < 0:
            den *= v ** -e
    return num / den


def from_dimensionless(value: float, target_dim: Dimension, basis: Basis,
                       name: str = "") -> Quantity:
    exps = pi_exponents(target_dim, basis)
    num = float(value)
    den = 1.0
    for v, e in zip(basis.values, exps):
        if e < 0:
            num *= v ** -e
        elif e > 0:
            den *= v ** e
    return Quantity(num / den, target_dim, name)


@dataclass(frozen=True, eq=False)
class Context:
    """Ordered set of named quantities plus the names of its basis members."""

    entries: Mapping[str, Quantity]
    basis_names: tuple[str, str, str]
    name: str = ""

    def __post_init__(self):
        entries = {}
        for key, q in dict(self.entries).items():
            entries[key] = q if q.name == key else Quantity(q.value, q.dim, key)
        object.__setattr__(self, "entries", MappingProxyType(entries))
        object.__setattr__(self, "basis_names", tuple(self.basis_names))
        missing = [n for n in self.basis_names if n not in entries]
        if missing:
            raise SchemaMismatch(f"basis names {missing} not found in context entries")
        # raises SingularBasis / NonPositiveBasisValue
        object.__setattr__(self, "_basis", Basis(tuple(entries[n] for n in self.basis_names)))

    @classmethod
    def from_values(cls, values: Mapping[str, float], dims: Mapping[str, Dimension],
                    basis_names: Sequence[str], name: str = "") -> Context:
        entries = {k: Quantity(values[k], dims[k], k) for k in dims}
        return cls(entries, tuple(basis_names), name)

    @property
    def basis(self) -> Basis:
        return self._basis

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.entries)

    def __getitem__(self, key: str) -> float:
        return self.entries[key].value

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def values(self) -> dict[str, float]:
        return {k: q.value for k, q in self.entries.items()}

    def dims(self) -> dict[str, Dimension]:
        return {k: q.dim for k, q in self.entries.items()}

    def replace(self, name: str | None = None, **values: float) -> Context:
        unknown = set(values) - set(self.entries)
        if unknown:
            raise SchemaMismatch(f"unknown context entries {sorted(unknown)}")
        entries = {k: q.with_value(values.get(k, q.value)) for k, q in self.entries.items()}
        return Context(entries, self.basis_names, self.name if name is None else name)

    def schema(self) -> tuple:
        return (self.names, self.basis_names)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Context):
            return NotImplemented
        return (self.schema() == other.schema()
                and all(self.entries[k].value == other.entries[k].value
                        and self.entries[k].dim == other.entries[k].dim
                        for k in self.names))

    __hash__ = None

    def __repr__(self) -> str:
        body = ", ".join(f"{k}={v:g}" for k, v in self.values().items())
        return f"Context({self.name!r}: {body}; basis={list(self.basis_names)})"


@dataclass(frozen=True)
class PiSignature:
    """Basis exponents for every context entry and extra (observation/action) channel."""

    basis_names: tuple[str, str, str]
    exponents: Mapping[str, tuple[float, float, float]] = field(default_factory=dict)

    @classmethod
    def for_context(cls, ctx: Context,
                    channels: Mapping[str, Dimension] | None = None) -> PiSignature:
        dims = ctx.dims()
        dims.update(channels or {})
        exps = {k: pi_exponents(d, ctx.basis) for k, d in dims.items()}
        return cls(ctx.basis_names, MappingProxyType(exps))

    def factor(self, name: str, ctx: Context) -> float:
        return _power_product(ctx.basis.values, self.exponents[name])

    def apply(self, ctx: Context) -> np.ndarray:
        return np.array([ctx[k] * self.factor(k, ctx) if k not in ctx.basis_names else 1.0
                         for k in ctx.names])


def context_to_dimensionless(ctx: Context) -> np.ndarray:
    """Dimensionless context vector in entry order; basis members map to 1."""
    basis = ctx.basis
    return np.array([1.0 if k in ctx.basis_names else to_dimensionless(q, basis)
                     for k, q in ctx.entries.items()])


def check_same_schema(c1: Context, c2: Context):
    if c1.names != c2.names or c1.basis_names != c2.basis_names:
        raise SchemaMismatch(
            f"context schemas differ: {c1.names}/{c1.basis_names} vs {c2.names}/{c2.basis_names}")
    for k in c1.names:
        if c1.entries[k].dim != c2.entries[k].dim:
            raise SchemaMismatch(f"entry {k!r} has dimension {c1.entries[k].dim} "
                                 f"vs {c2.entries[k].dim}")


def dimensionless_difference(c1: Context, c2: Context) -> np.ndarray:
    check_same_schema(c1, c2)
    return context_to_dimensionless(c2) - context_to_dimensionless(c1)


def context_distance(c1: Context, c2: Context) -> float:
    """Euclidean distance between the dimensionless vectors of two contexts."""
    return float(np.linalg.norm(dimensionless_difference(c1, c2)))


def generate_similar_context(original: Context,
                             basis_values: Mapping[str, float] | None = None,
                             non_similar: Mapping[str, float] | None = None,
                             name: str | None = None) -> Context:
    """Context with the given basis values and every other pi group preserved.

    Entries in ``non_similar`` are set to their raw value afterwards, breaking
    similarity along those coordinates.
    """
    basis_values = dict(basis_values or {})
    non_similar = dict(non_similar or {})
    not_basis = set(basis_values) - set(original.basis_names)
    if not_basis:
        raise SchemaMismatch(f"{sorted(not_basis)} are not basis members; "
                             "pass them as non_similar overrides")
    unknown = set(non_similar) - set(original.names)
    if unknown:
        raise SchemaMismatch(f"unknown context entries {sorted(unknown)}")
    for k, v in basis_values.items():
        if not v > 0:
            raise NonPositiveBasisValue(f"basis value {k}={v} must be strictly positive")

    old_basis = original.basis
    new_basis = Basis(tuple(q.with_value(basis_values.get(q.name, q.value))
                            for q in old_basis.quantities))
    entries = {}
    for k, q in original.entries.items():
        if k in non_similar:
            entries[k] = q.with_value(non_similar[k])
        elif k in original.basis_names:
            entries[k] = q.with_value(basis_values.get(k, q.value))
        elif not basis_values:
            entries[k] = q
        else:
            entries[k] = from_dimensionless(to_dimensionless(q, old_basis), q.dim, new_basis, k)
    return Context(entries, original.basis_names, original.name if name is None else name)


def context_fingerprint(ctx: Context) -> str:
    """Stable hash of a context's schema and values."""
    h = hashlib.sha256()
    h.update(",".join(ctx.basis_names).encode())
    for k, q in sorted(ctx.entries.items()):
        h.update(f"|{k}={q.value!r}@{q.dim.as_tuple()!r}".encode())
    return h.hexdigest()


# --- serialization -----------------------------------------------------------

def _fmt_number(x: float) -> str:
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _fmt_float(x: float) -> str:
    s = repr(float(x))
    return s if ("." in s or "e" in s or "n" in s) else s + ".0"


def context_to_toml(ctx: Context) -> str:
    lines = [
        f"schema = {CONTEXT_SCHEMA_VERSION}",
        f'name = "{ctx.name}"',
        "basis = [" + ", ".join(f'"{n}"' for n in ctx.basis_names) + "]",
        "",
        "[quantities]",
    ]
    for k, q in ctx.entries.items():
        dim = ", ".join(_fmt_number(e) for e in q.dim.as_tuple())
        lines.append(f"{k} = {{ value = {_fmt_float(q.value)}, dim = [{dim}] }}")
    return "\n".join(lines) + "\n"


def context_from_dict(doc: Mapping) -> Context:
    version = doc.get("schema")
    if version != CONTEXT_SCHEMA_VERSION:
        raise SchemaMismatch(f"unsupported context schema version {version!r}")
    try:
        quantities = doc["quantities"]
        basis = doc["basis"]
    except KeyError as exc:
        raise SchemaMismatch(f"context document missing field {exc}") from None
    entries = {k: Quantity(v["value"], Dimension.from_vector(v["dim"]), k)
               for k, v in quantities.items()}
    return Context(entries, tuple(basis), doc.get("name", ""))


def context_from_toml(text: str) -> Context:
    return context_from_dict(tomllib.loads(text))


def load_context(path) -> Context:
    with open(path, "rb") as fh:
        return context_from_dict(tomllib.load(fh))


def save_context(ctx: Context, path) -> None:
    Path(path).write_text(context_to_toml(ctx))
