"""Arithmetic in the prime field GF(p).

Two layers live here. ``FieldPrime`` exposes fast int-level operations
(values are plain Python ints in ``[0, p)``) which the threshold scheme uses
in its hot loops. ``FieldElement``, ``Polynomial`` and ``SharePoint`` wrap
those ints with their field so mixing fields is caught.

The default modulus is the Mersenne prime 2^61 - 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

M61 = (1 << 61) - 1

# Deterministic Miller-Rabin witnesses for every n < 2^64.
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


class FieldMismatchError(ValueError):
    pass


class InterpolationError(ValueError):
    pass


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    for b in _MR_BASES:
        if n % b == 0:
            return n == b
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class FieldPrime:
    """The field GF(p) for a prime ``p < 2^64``."""

    p: int = M61

    def __post_init__(self) -> None:
        if not isinstance(self.p, int) or self.p < 2:
            raise ValueError(f"field modulus must be an integer >= 2, got {self.p!r}")
        if self.p >= 1 << 64:
            raise ValueError("primes >= 2^64 are not supported")
        if not is_prime(self.p):
            raise ValueError(f"{self.p} is not prime")

    def __call__(self, value: int) -> FieldElement:
        return FieldElement(value % self.p, self)

    # int-level operations; inputs are assumed already reduced

    def add(self, a: int, b: int) -> int:
        s = a + b
        return s - self.p if s >= self.p else s

    def sub(self, a: int, b: int) -> int:
        s = a - b
        return s + self.p if s < 0 else s

    def mul(self, a: int, b: int) -> int:
        return a * b % self.p

    def inv(self, a: int) -> int:
        if a % self.p == 0:
            raise ZeroDivisionError("no inverse of zero")
        # extended Euclid
        t, new_t = 0, 1
        r, new_r = self.p, a % self.p
        while new_r:
            q = r // new_r
            t, new_t = new_t, t - q * new_t
            r, new_r = new_r, r - q * new_r
        return t % self.p

    def random(self, rng) -> int:
        """Uniform element drawn from ``rng.randbelow``."""
        return rng.randbelow(self.p)

    def horner(self, coefficients: Sequence[int], x: int) -> int:
        """Evaluate ``sum(c_i * x^i)``; coefficients are lowest degree first."""
        acc = 0
        p = self.p
        for c in reversed(coefficients):
            acc = (acc * x + c) % p
        return acc

    def lagrange_weights(self, xs: Sequence[int], at: int = 0) -> tuple[int, ...]:
        """Basis weights ``w_j`` such that ``q(at) = sum(w_j * y_j)``."""
        return _lagrange_weights(self.p, tuple(xs), at)

    def interpolate(self, xs: Sequence[int], ys: Sequence[int], at: int = 0) -> int:
        w = self.lagrange_weights(xs, at)
        return sum(wj * yj for wj, yj in zip(w, ys)) % self.p

    def element_bytes(self, value: int) -> bytes:
        return value.to_bytes(8, "big")


@lru_cache(maxsize=4096)
def _lagrange_weights(p: int, xs: tuple[int, ...], at: int) -> tuple[int, ...]:
    if not xs:
        raise InterpolationError("need at least one point")
    if len(set(x % p for x in xs)) != len(xs):
        raise InterpolationError("degenerate interpolation: duplicate x")
    weights = []
    for j, xj in enumerate(xs):
        num, den = 1, 1
        for m, xm in enumerate(xs):
            if m != j:
                num = num * (at - xm) % p
                den = den * (xj - xm) % p
        weights.append(num * pow(den, -1, p) % p)
    return tuple(weights)


DEFAULT_FIELD = FieldPrime(M61)


@dataclass(frozen=True)
class FieldElement:
    value: int
    field: FieldPrime = DEFAULT_FIELD

    def __post_init__(self) -> None:
        if not 0 <= self.value < self.field.p:
            raise ValueError(f"{self.value} is not in GF({self.field.p})")

    def _check(self, other: FieldElement) -> None:
        if self.field != other.field:
            raise FieldMismatchError(
                f"GF({self.field.p}) element combined with GF({other.field.p}) element"
            )

    def __add__(self, other: FieldElement) -> FieldElement:
        return fp_add(self, other)

    def __sub__(self, other: FieldElement) -> FieldElement:
        self._check(other)
        return FieldElement(self.field.sub(self.value, other.value), self.field)

    def __neg__(self) -> FieldElement:
        return FieldElement(self.field.sub(0, self.value), self.field)

    def __mul__(self, other: FieldElement) -> FieldElement:
        return fp_mul(self, other)

    def __truediv__(self, other: FieldElement) -> FieldElement:
        return fp_mul(self, fp_inv(other))

    def inverse(self) -> FieldElement:
        return fp_inv(self)

    def to_bytes(self) -> bytes:
        """Fixed-width 8-byte big-endian form."""
        return self.value.to_bytes(8, "big")

    @classmethod
    def from_bytes(cls, raw: bytes, field: FieldPrime = DEFAULT_FIELD) -> FieldElement:
        if len(raw) != 8:
            raise ValueError("field elements serialize to exactly 8 bytes")
        return cls(int.from_bytes(raw, "big"), field)

    def hex(self) -> str:
        return f"{self.value:016x}"

    @classmethod
    def from_hex(cls, text: str, field: FieldPrime = DEFAULT_FIELD) -> FieldElement:
        if len(text) != 16:
            raise ValueError("field element hex form is 16 digits")
        return cls(int(text, 16), field)

    def __int__(self) -> int:
        return self.value

    def __repr__(self) -> str:
        return f"FieldElement({self.value}, p={self.field.p})"


def fp_add(a: FieldElement, b: FieldElement) -> FieldElement:
    a._check(b)
    return FieldElement(a.field.add(a.value, b.value), a.field)


def fp_mul(a: FieldElement, b: FieldElement) -> FieldElement:
    a._check(b)
    return FieldElement(a.field.mul(a.value, b.value), a.field)


def fp_inv(a: FieldElement) -> FieldElement:
    return FieldElement(a.field.inv(a.value), a.field)


@dataclass(frozen=True)
class Polynomial:
    """Coefficients lowest degree first, so ``coefficients[0]`` is q(0)."""

    coefficients: tuple[FieldElement, ...]

    def __post_init__(self) -> None:
        if not self.coefficients:
            raise ValueError("polynomial needs at least one coefficient")
        f = self.coefficients[0].field
        if any(c.field != f for c in self.coefficients):
            raise FieldMismatchError("coefficients from different fields")

    @classmethod
    def from_ints(cls, coefficients: Iterable[int], field: FieldPrime = DEFAULT_FIELD) -> Polynomial:
        return cls(tuple(field(c) for c in coefficients))

    @property
    def field(self) -> FieldPrime:
        return self.coefficients[0].field

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, x: FieldElement) -> FieldElement:
        return poly_eval(self, x)


def poly_eval(q: Polynomial, x: FieldElement) -> FieldElement:
    if x.field != q.field:
        raise FieldMismatchError("evaluation point is in a different field")
    f = q.field
    return FieldElement(f.horner([c.value for c in q.coefficients], x.value), f)


@dataclass(frozen=True)
class SharePoint:
    x: FieldElement
    y: FieldElement

    def __post_init__(self) -> None:
        if self.x.field != self.y.field:
            raise FieldMismatchError("share coordinates from different fields")
        # q(0) is the secret itself
        if self.x.value == 0:
            raise ValueError("share x-coordinate must be nonzero")


def lagrange_at_zero(points: Sequence[SharePoint]) -> FieldElement:
    """Value at zero of the unique polynomial of degree < len(points) through them."""
    if not points:
        raise InterpolationError("need at least one point")
    f = points[0].x.field
    if any(pt.x.field != f for pt in points):
        raise FieldMismatchError("points from different fields")
    xs = [pt.x.value for pt in points]
    ys = [pt.y.value for pt in points]
    return FieldElement(f.interpolate(xs, ys, 0), f)
