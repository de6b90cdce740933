"""Sound compact-interval arithmetic and box utilities.

Every arithmetic endpoint is rounded outward by one ulp (``math.nextafter``
toward the appropriate infinity), so the exact real result set is always
contained in the returned interval despite float rounding.  Operations whose
float evaluation is exact (negation, relu, min/max hulls of given data) are
not widened.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.special import expit


class DivisionByZeroInterval(ArithmeticError):
    """Denominator interval contains zero."""


class DegenerateBox(ValueError):
    """Bisection requested on a zero-width box."""


class DimensionMismatch(ValueError):
    """Operands have incompatible dimensions."""


class EmptyList(ValueError):
    """A hull of nothing is undefined."""


_INF = math.inf


def _dn(x: float) -> float:
    return math.nextafter(x, -_INF)


def _up(x: float) -> float:
    return math.nextafter(x, _INF)


@dataclass(frozen=True)
class Interval:
    """Compact real interval [lo, hi] with finite endpoints."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError(f"endpoints must be finite, got [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise ValueError(f"lower endpoint exceeds upper: [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, v: float) -> "Interval":
        return cls(v, v)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, v: float) -> bool:
        return self.lo <= v <= self.hi

    def issubset(self, other: "Interval") -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def __add__(self, other: "Interval") -> "Interval":
        return iv_add(self, _as_interval(other))

    def __radd__(self, other) -> "Interval":
        return iv_add(_as_interval(other), self)

    def __sub__(self, other) -> "Interval":
        return iv_sub(self, _as_interval(other))

    def __rsub__(self, other) -> "Interval":
        return iv_sub(_as_interval(other), self)

    def __mul__(self, other) -> "Interval":
        return iv_mul(self, _as_interval(other))

    def __rmul__(self, other) -> "Interval":
        return iv_mul(_as_interval(other), self)

    def __truediv__(self, other) -> "Interval":
        return iv_div(self, _as_interval(other))

    def __rtruediv__(self, other) -> "Interval":
        return iv_div(_as_interval(other), self)

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __repr__(self) -> str:
        return f"[{self.lo!r}, {self.hi!r}]"


def _as_interval(v) -> Interval:
    if isinstance(v, Interval):
        return v
    return Interval(float(v), float(v))


def iv_add(x: Interval, y: Interval) -> Interval:
    return Interval(_dn(x.lo + y.lo), _up(x.hi + y.hi))


def iv_sub(x: Interval, y: Interval) -> Interval:
    return Interval(_dn(x.lo - y.hi), _up(x.hi - y.lo))


def iv_mul(x: Interval, y: Interval) -> Interval:
    p = (x.lo * y.lo, x.lo * y.hi, x.hi * y.lo, x.hi * y.hi)
    return Interval(_dn(min(p)), _up(max(p)))


def iv_div(x: Interval, y: Interval) -> Interval:
    if y.lo <= 0.0 <= y.hi:
        raise DivisionByZeroInterval(f"denominator {y} contains zero")
    q = (x.lo / y.lo, x.lo / y.hi, x.hi / y.lo, x.hi / y.hi)
    return Interval(_dn(min(q)), _up(max(q)))


_ARITH = {"add": iv_add, "sub": iv_sub, "mul": iv_mul, "div": iv_div}


def iv_arith(op: str, x: Interval, y: Interval) -> Interval:
    """Dispatch one of the four basic operations by tag."""
    try:
        fn = _ARITH[op]
    except KeyError:
        raise ValueError(f"unknown arithmetic op {op!r}") from None
    return fn(x, y)


def _iv_monotone(f, x: Interval) -> Interval:
    return Interval(_dn(f(x.lo)), _up(f(x.hi)))


def iv_sqr(x: Interval) -> Interval:
    a, b = abs(x.lo), abs(x.hi)
    m = max(a, b)
    hi = _up(m * m)
    if x.lo <= 0.0 <= x.hi:
        return Interval(0.0, hi)
    s = min(a, b)
    return Interval(_dn(s * s), hi)


_HALF_PI = math.pi / 2.0


def _trig_hull(f, x: Interval, max_residue: int, min_residue: int) -> Interval:
    # Endpoint hull plus saturation to exactly +/-1 at any interior critical
    # point k*(pi/2); the k-range test is padded so float division error can
    # only add saturation, never miss it.
    lo = min(f(x.lo), f(x.hi))
    hi = max(f(x.lo), f(x.hi))
    lo, hi = _dn(lo), _up(hi)
    k_min = math.ceil(x.lo / _HALF_PI - 1e-9)
    k_max = math.floor(x.hi / _HALF_PI + 1e-9)
    for k in range(k_min, k_max + 1):
        r = k % 4
        if r == max_residue:
            hi = 1.0  # true maximum, exactly representable
        elif r == min_residue:
            lo = -1.0
    return Interval(lo, hi)


def iv_sin(x: Interval) -> Interval:
    return _trig_hull(math.sin, x, max_residue=1, min_residue=3)


def iv_cos(x: Interval) -> Interval:
    return _trig_hull(math.cos, x, max_residue=0, min_residue=2)


_FUNC = {
    "tanh": lambda x: _iv_monotone(math.tanh, x),
    "logistic": lambda x: _iv_monotone(lambda v: float(expit(v)), x),
    "relu": lambda x: Interval(max(x.lo, 0.0), max(x.hi, 0.0)),
    "exp": lambda x: _iv_monotone(math.exp, x),
    "identity": lambda x: x,
    "sqr": iv_sqr,
    "sin": iv_sin,
    "cos": iv_cos,
}


def iv_func_ext(fn: str, x: Interval) -> Interval:
    """Interval extension of a named scalar function."""
    try:
        f = _FUNC[fn]
    except KeyError:
        raise ValueError(f"unknown function {fn!r}") from None
    return f(x)


BoxLike = Union["Box", Sequence[float], np.ndarray]


class Box:
    """Interval vector: an axis-aligned box, immutable after construction."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        lo = np.asarray(lo, dtype=float).copy()
        hi = np.asarray(hi, dtype=float).copy()
        if lo.ndim != 1 or hi.shape != lo.shape or lo.size < 1:
            raise DimensionMismatch(f"need matching 1-d endpoint arrays, got {lo.shape} and {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box endpoints must be finite")
        if np.any(lo > hi):
            raise ValueError("box has a component with lo > hi")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __setattr__(self, name, value):
        raise AttributeError("Box is immutable")

    @classmethod
    def from_intervals(cls, dims: Iterable[Interval]) -> "Box":
        dims = list(dims)
        if not dims:
            raise EmptyList("box needs at least one component")
        return cls([d.lo for d in dims], [d.hi for d in dims])

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "Box":
        pairs = [tuple(p) for p in pairs]
        if not pairs:
            raise EmptyList("box needs at least one component")
        return cls([p[0] for p in pairs], [p[1] for p in pairs])

    @classmethod
    def point(cls, p) -> "Box":
        p = np.asarray(p, dtype=float)
        return cls(p, p)

    @property
    def dims(self) -> tuple:
        return tuple(Interval(float(l), float(h)) for l, h in zip(self.lo, self.hi))

    def __len__(self) -> int:
        return self.lo.size

    def __getitem__(self, i: int) -> Interval:
        return Interval(float(self.lo[i]), float(self.hi[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Box):
            return NotImplemented
        return self.lo.shape == other.lo.shape and bool(
            np.all(self.lo == other.lo) and np.all(self.hi == other.hi)
        )

    def __hash__(self):
        return hash((self.lo.tobytes(), self.hi.tobytes()))

    def __repr__(self) -> str:
        parts = ", ".join(f"[{l!r}, {h!r}]" for l, h in zip(self.lo, self.hi))
        return f"Box({parts})"

    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    def width(self) -> float:
        """Largest component width (max norm of the width vector)."""
        return float(np.max(self.hi - self.lo))

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains_point(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        if p.shape != self.lo.shape:
            raise DimensionMismatch(f"point has {p.size} coords, box has {len(self)}")
        return bool(np.all(self.lo <= p) and np.all(p <= self.hi))

    def issubset(self, other: "Box") -> bool:
        if len(self) != len(other):
            raise DimensionMismatch(f"{len(self)}-d box vs {len(other)}-d box")
        return bool(np.all(other.lo <= self.lo) and np.all(self.hi <= other.hi))

    def bisect(self) -> tuple:
        """Split the widest component (ties to lowest index) at its midpoint.

        The two halves tile the box exactly: they share the splitting
        hyperplane and their hull is the original box.
        """
        w = self.hi - self.lo
        if float(np.max(w)) == 0.0:
            raise DegenerateBox("cannot bisect a zero-width box")
        i = int(np.argmax(w))
        mid = 0.5 * (self.lo[i] + self.hi[i])
        mid = min(max(mid, self.lo[i]), self.hi[i])
        left_hi = self.hi.copy()
        left_hi[i] = mid
        right_lo = self.lo.copy()
        right_lo[i] = mid
        return Box(self.lo, left_hi), Box(right_lo, self.hi)

    @classmethod
    def hull(cls, items: Iterable) -> "Box":
        """Componentwise min/max envelope of points and/or boxes."""
        los, his = [], []
        for item in items:
            if isinstance(item, Box):
                los.append(item.lo)
                his.append(item.hi)
            else:
                p = np.asarray(item, dtype=float)
                los.append(p)
                his.append(p)
        if not los:
            raise EmptyList("hull of an empty collection")
        n = los[0].size
        if any(a.size != n for a in los):
            raise DimensionMismatch("hull inputs have mixed dimensions")
        return cls(np.min(np.stack(los), axis=0), np.max(np.stack(his), axis=0))
