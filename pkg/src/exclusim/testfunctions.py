"""Compactly supported C^(1,2) test functions with hand-coded derivatives.

The canonical family is built from polynomial bump atoms (1 - z^2)^3 (which
are exactly C^2 across the support edge), combined into per-axis products
with optional polynomial time factors.  Pairs (minus, plus) glued along the
last coordinate represent functions allowed to jump at the hyperplane; the
Neumann subfamily additionally has vanishing normal derivative on both sides.

No symbolic machinery: every derivative here is written out by hand, which
keeps operator sums exact and fast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TimePoly",
    "PolyBump",
    "ProductTerm",
    "SeparableFunction",
    "TestFunctionPair",
    "smooth_pair",
    "neumann_pair",
    "discontinuous_pair",
    "zero_function",
]


@dataclass(frozen=True)
class TimePoly:
    """Polynomial time factor phi(s) = sum_k coeffs[k] * s^k with exact calculus."""

    coeffs: tuple[float, ...] = (1.0,)

    def value(self, s: float) -> float:
        acc = 0.0
        for c in reversed(self.coeffs):
            acc = acc * s + c
        return acc

    def deriv(self, s: float) -> float:
        acc = 0.0
        for k in range(len(self.coeffs) - 1, 0, -1):
            acc = acc * s + k * self.coeffs[k]
        return acc

    def antideriv(self, s: float) -> float:
        acc = 0.0
        for k in range(len(self.coeffs) - 1, -1, -1):
            acc = acc * s + self.coeffs[k] / (k + 1)
        return acc * s

    @property
    def is_constant(self) -> bool:
        return all(c == 0.0 for c in self.coeffs[1:])

    def max_abs_on(self, t0: float, t1: float, points: int = 17) -> float:
        grid = np.linspace(t0, t1, points)
        return float(np.max(np.abs([self.value(s) for s in grid])))


@dataclass(frozen=True)
class PolyBump:
    """1-d atom (1 - z^2)^3 with z = (x - center)/width, zero for |z| >= 1."""

    center: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if self.width <= 0.0:
            raise ValueError("width must be positive")

    def _z(self, x):
        return (np.asarray(x, dtype=np.float64) - self.center) / self.width

    def value(self, x):
        z = self._z(x)
        inside = np.abs(z) < 1.0
        z2 = z * z
        return np.where(inside, (1.0 - z2) ** 3, 0.0)

    def d1(self, x):
        z = self._z(x)
        inside = np.abs(z) < 1.0
        z2 = z * z
        return np.where(inside, -6.0 * z * (1.0 - z2) ** 2 / self.width, 0.0)

    def d2(self, x):
        z = self._z(x)
        inside = np.abs(z) < 1.0
        z2 = z * z
        return np.where(inside, 6.0 * (1.0 - z2) * (5.0 * z2 - 1.0) / self.width**2, 0.0)

    @property
    def support_radius(self) -> float:
        return abs(self.center) + self.width


@dataclass(frozen=True)
class ProductTerm:
    """coefficient * phi(s) * prod_j factor_j(u_j)."""

    factors: tuple[PolyBump, ...]
    time: TimePoly = TimePoly()
    coefficient: float = 1.0

    @property
    def d(self) -> int:
        return len(self.factors)

    @property
    def support_radius(self) -> float:
        return max(f.support_radius for f in self.factors)


class SeparableFunction:
    """Sum of separable product terms; the workhorse smooth component.

    All evaluators accept points of shape (N, d) (or (d,)) and a scalar
    time, and return shape (N,) (or a scalar).
    """

    def __init__(self, terms):
        terms = tuple(terms)
        if not terms:
            raise ValueError("need at least one term")
        d = terms[0].d
        if any(t.d != d for t in terms):
            raise ValueError("all terms must share the dimension")
        self.terms = terms
        self.d = d
        self.support_radius = max(t.support_radius for t in terms)

    @staticmethod
    def _points(u, d):
        pts = np.asarray(u, dtype=np.float64)
        scalar = pts.ndim == 1
        if scalar:
            pts = pts[None, :]
        if pts.shape[1] != d:
            raise ValueError(f"points must have {d} coordinates")
        return pts, scalar

    def _combine(self, s, u, which):
        pts, scalar = self._points(u, self.d)
        out = np.zeros(len(pts))
        for t in self.terms:
            out += which(t, s, pts)
        return float(out[0]) if scalar else out

    def value(self, s, u):
        def term(t, s, pts):
            acc = np.full(len(pts), t.coefficient * t.time.value(s))
            for j, f in enumerate(t.factors):
                acc *= f.value(pts[:, j])
            return acc

        return self._combine(s, u, term)

    def dt(self, s, u):
        def term(t, s, pts):
            acc = np.full(len(pts), t.coefficient * t.time.deriv(s))
            for j, f in enumerate(t.factors):
                acc *= f.value(pts[:, j])
            return acc

        return self._combine(s, u, term)

    def d1(self, s, u, axis: int):
        def term(t, s, pts):
            acc = np.full(len(pts), t.coefficient * t.time.value(s))
            for j, f in enumerate(t.factors):
                acc *= f.d1(pts[:, j]) if j == axis else f.value(pts[:, j])
            return acc

        return self._combine(s, u, term)

    def d2(self, s, u, axis: int):
        def term(t, s, pts):
            acc = np.full(len(pts), t.coefficient * t.time.value(s))
            for j, f in enumerate(t.factors):
                acc *= f.d2(pts[:, j]) if j == axis else f.value(pts[:, j])
            return acc

        return self._combine(s, u, term)

    def scaled(self, a: float) -> "SeparableFunction":
        return SeparableFunction(
            ProductTerm(t.factors, t.time, t.coefficient * a) for t in self.terms
        )

    def __add__(self, other: "SeparableFunction") -> "SeparableFunction":
        return SeparableFunction(self.terms + other.terms)


_ZERO_ATOM = ProductTerm(factors=(PolyBump(0.0, 1.0),), coefficient=0.0)


def zero_function(d: int) -> SeparableFunction:
    return SeparableFunction([ProductTerm(factors=(PolyBump(0.0, 1.0),) * d, coefficient=0.0)])


class TestFunctionPair:
    """A pair (minus, plus) glued along the last coordinate.

    The glued function takes the minus branch for u_d < 0 and the plus
    branch for u_d >= 0; choosing identical branches embeds the smooth
    family.  `neumann` certifies that both branches have vanishing normal
    derivative on the hyperplane (checked numerically at construction).
    """

    __test__ = False  # not a pytest case despite the name

    def __init__(self, minus: SeparableFunction, plus: SeparableFunction, name: str = "", neumann: bool | None = None):
        if minus.d != plus.d:
            raise ValueError("branches must share the dimension")
        self.minus = minus
        self.plus = plus
        self.d = minus.d
        self.name = name
        self.support_radius = max(minus.support_radius, plus.support_radius)
        self.is_smooth = minus is plus
        detected = self._check_neumann()
        if neumann is None:
            self.neumann = detected
        else:
            if neumann and not detected:
                raise ValueError("declared Neumann but a branch has nonzero normal slope at the hyperplane")
            self.neumann = neumann

    def _check_neumann(self, samples: int = 7, tol: float = 1e-12) -> bool:
        rng = np.random.default_rng(7)
        times = np.linspace(0.0, 1.0, 3)
        b = self.support_radius
        pts = np.zeros((samples, self.d))
        if self.d > 1:
            pts[:, :-1] = rng.uniform(-b, b, size=(samples, self.d - 1))
        for s in times:
            for branch in (self.minus, self.plus):
                if np.max(np.abs(branch.d1(s, pts, self.d - 1))) > tol:
                    return False
        return True

    def branch(self, side: str) -> SeparableFunction:
        if side == "minus":
            return self.minus
        if side == "plus":
            return self.plus
        raise ValueError("side must be 'minus' or 'plus'")

    def value(self, s, u):
        pts, scalar = SeparableFunction._points(u, self.d)
        neg = pts[:, -1] < 0.0
        out = np.where(neg, self.minus.value(s, pts), self.plus.value(s, pts))
        return float(out[0]) if scalar else out

    def dt(self, s, u):
        pts, scalar = SeparableFunction._points(u, self.d)
        neg = pts[:, -1] < 0.0
        out = np.where(neg, self.minus.dt(s, pts), self.plus.dt(s, pts))
        return float(out[0]) if scalar else out

    def common_time_factor(self) -> TimePoly | None:
        """The shared polynomial time factor, if every term carries the same one."""
        terms = self.minus.terms + self.plus.terms
        t0 = terms[0].time
        if all(t.time == t0 for t in terms):
            return t0
        return None

    def __repr__(self):
        kind = "smooth" if self.is_smooth else ("neumann" if self.neumann else "disc")
        return f"TestFunctionPair({self.name or kind}, d={self.d}, b={self.support_radius:g})"


def smooth_pair(
    centers=None, widths=None, d: int = 1, time: TimePoly = TimePoly(), scale: float = 1.0, name: str = ""
) -> TestFunctionPair:
    """A smooth product bump, embedded as a pair with identical branches."""
    centers = [0.0] * d if centers is None else list(centers)
    widths = [1.0] * d if widths is None else list(widths)
    if len(centers) != d or len(widths) != d:
        raise ValueError("centers and widths must have length d")
    factors = tuple(PolyBump(c, w) for c, w in zip(centers, widths))
    f = SeparableFunction([ProductTerm(factors=factors, time=time, coefficient=scale)])
    return TestFunctionPair(f, f, name=name or "smooth")


def _even_last_axis(d: int, width: float, lateral_width: float, scale: float, time: TimePoly) -> SeparableFunction:
    factors = tuple(PolyBump(0.0, lateral_width) for _ in range(d - 1)) + (PolyBump(0.0, width),)
    return SeparableFunction([ProductTerm(factors=factors, time=time, coefficient=scale)])


def neumann_pair(
    d: int = 1,
    minus_scale: float = 1.0,
    plus_scale: float = 0.5,
    minus_width: float = 1.0,
    plus_width: float = 0.75,
    lateral_width: float = 1.0,
    time: TimePoly = TimePoly(),
    name: str = "",
) -> TestFunctionPair:
    """A pair that may jump at the hyperplane but has flat normal slope there.

    Each branch uses an even (centered) bump in the last coordinate, which
    makes the normal derivative vanish identically on the hyperplane.
    """
    minus = _even_last_axis(d, minus_width, lateral_width, minus_scale, time)
    plus = _even_last_axis(d, plus_width, lateral_width, plus_scale, time)
    return TestFunctionPair(minus, plus, name=name or "neumann", neumann=True)


def discontinuous_pair(
    d: int = 1,
    minus_center: float = -0.4,
    plus_center: float = 0.3,
    minus_width: float = 0.9,
    plus_width: float = 0.8,
    minus_scale: float = 1.0,
    plus_scale: float = -0.7,
    lateral_width: float = 1.0,
    time: TimePoly = TimePoly(),
    name: str = "",
) -> TestFunctionPair:
    """A generic glued pair: jumps at the hyperplane and has nonzero slopes there."""
    lateral = tuple(PolyBump(0.0, lateral_width) for _ in range(d - 1))
    minus = SeparableFunction(
        [ProductTerm(factors=lateral + (PolyBump(minus_center, minus_width),), time=time, coefficient=minus_scale)]
    )
    plus = SeparableFunction(
        [ProductTerm(factors=lateral + (PolyBump(plus_center, plus_width),), time=time, coefficient=plus_scale)]
    )
    return TestFunctionPair(minus, plus, name=name or "disc")
