"""Hydrodynamic PDE selection, analytic reference solutions and weak residuals.

The limiting equation is always a heat equation with diffusivity
kappa_gamma; what changes with (alpha, beta, gamma, d) is whether the
hyperplane decouples the two half spaces (Neumann behavior) and which space
of test functions certifies the weak formulation.  Solutions are produced in
closed form (error functions and truncated Gaussian moments of polynomial
bumps), so judging Monte Carlo output never stacks a second discretization
error on top of the sampling noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import integrate

from .model import in_region_R0, kappa_gamma
from .testfunctions import PolyBump, TestFunctionPair

__all__ = [
    "Equation",
    "PDESelector",
    "UnsupportedRegimeError",
    "select_hydrodynamic_pde",
    "Profile",
    "heat_solution_free",
    "heat_solution_neumann",
    "AnalyticSolution",
    "WeakResidual",
    "weak_residual_dif",
    "weak_residual_neu",
    "QuadratureAccuracyError",
]


class Equation(Enum):
    FREE_HEAT = "free_heat"
    NEUMANN_HYPERPLANE = "neumann_hyperplane"
    NEUMANN_WITH_TRACE = "neumann_with_trace"
    UNSUPPORTED = "unsupported"


_TEST_SPACE = {
    Equation.FREE_HEAT: "smooth",
    Equation.NEUMANN_HYPERPLANE: "neumann",
    Equation.NEUMANN_WITH_TRACE: "glued",
}

# machine-checkable refusal codes with their human explanations
REFUSAL_BETA_ONE = (
    "unsupported-beta1-gamma-gt2",
    "beta = 1 with gamma > 2 sits between the diffusive and decoupled regimes "
    "and has no limiting equation in this toolkit",
)
REFUSAL_NO_ENTROPY = (
    "unsupported-without-entropy-bound",
    "without an entropy-bounded initial state the limit is only available for "
    "(alpha, beta) = (1, 0) [free heat equation] or (beta, gamma) in "
    "R0 = ([1,inf) x {2}) U ((1,inf) x (2,inf)) [Neumann decoupling]",
)
REFUSAL_WITH_ENTROPY = (
    "unsupported-with-entropy-bound",
    "with an entropy-bounded initial state the limit requires beta in [0,1) "
    "[free heat equation], (beta, gamma) in R0 [Neumann decoupling], or "
    "beta > 1, gamma > 2, d = 1 [Neumann decoupling with boundary traces]",
)


class UnsupportedRegimeError(ValueError):
    """Raised by the harness when a parameter point has no limiting equation."""

    def __init__(self, code: str, message: str):
        super().__init__(f"[{code}] {message}")
        self.code = code
        self.refusal_message = message


@dataclass(frozen=True)
class PDESelector:
    """Which equation governs the hydrodynamic limit at a parameter point."""

    equation: Equation
    kappa: float
    test_space: str | None
    refusal_code: str | None = None
    refusal_message: str | None = None

    def require_supported(self) -> "PDESelector":
        if self.equation is Equation.UNSUPPORTED:
            raise UnsupportedRegimeError(self.refusal_code, self.refusal_message)
        return self

    def as_dict(self) -> dict:
        return {
            "equation": self.equation.value,
            "kappa": self.kappa,
            "test_space": self.test_space,
            "refusal_code": self.refusal_code,
            "refusal_message": self.refusal_message,
        }


def select_hydrodynamic_pde(alpha: float, beta: float, gamma: float, d: int, entropy_bound: bool) -> PDESelector:
    """Case table of the limit theorems.

    Without an entropy bound: the free heat equation exactly at
    (alpha, beta) = (1, 0), Neumann decoupling for (beta, gamma) in R0,
    nothing else.  With an entropy bound the free equation extends to all
    beta in [0, 1); Neumann decoupling holds on R0 for d >= 2 and for
    gamma = 2 in d = 1, while gamma > 2, beta > 1, d = 1 upgrades to the
    trace form.  beta = 1 with gamma > 2 stays out of reach either way.
    """
    if alpha <= 0 or beta < 0 or gamma < 2 or d < 1:
        raise ValueError("require alpha > 0, beta >= 0, gamma >= 2, d >= 1")
    kap = kappa_gamma(gamma, d)

    def unsupported(code_msg):
        code, msg = code_msg
        return PDESelector(Equation.UNSUPPORTED, kap, None, code, msg)

    if not entropy_bound:
        if (alpha, beta) == (1.0, 0.0):
            return PDESelector(Equation.FREE_HEAT, kap, _TEST_SPACE[Equation.FREE_HEAT])
        if in_region_R0(beta, gamma):
            return PDESelector(Equation.NEUMANN_HYPERPLANE, kap, _TEST_SPACE[Equation.NEUMANN_HYPERPLANE])
        if beta == 1.0 and gamma > 2.0:
            return unsupported(REFUSAL_BETA_ONE)
        return unsupported(REFUSAL_NO_ENTROPY)

    if beta < 1.0:
        return PDESelector(Equation.FREE_HEAT, kap, _TEST_SPACE[Equation.FREE_HEAT])
    if in_region_R0(beta, gamma):
        if gamma > 2.0 and d == 1:
            return PDESelector(Equation.NEUMANN_WITH_TRACE, kap, _TEST_SPACE[Equation.NEUMANN_WITH_TRACE])
        return PDESelector(Equation.NEUMANN_HYPERPLANE, kap, _TEST_SPACE[Equation.NEUMANN_HYPERPLANE])
    if beta == 1.0 and gamma > 2.0:
        return unsupported(REFUSAL_BETA_ONE)
    return unsupported(REFUSAL_WITH_ENTROPY)


# ---------------------------------------------------------------------------
# Initial profiles and closed-form heat solutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Profile:
    """Initial density profile g taking values in [0, 1].

    Every supported profile depends on the last coordinate only (a constant
    trivially so), which is exactly what the hyperplane geometry calls for:
    the heat evolution then also depends on the last coordinate only, in any
    dimension.  Descriptors: "constant", "step" (left/right of the
    hyperplane), "bump" (constant background plus a polynomial bump), and
    "custom" (an arbitrary callable of u_d, integrated numerically).
    """

    kind: str
    left: float = 0.0
    right: float = 0.0
    base: float = 0.0
    amplitude: float = 0.0
    center: float = 0.0
    width: float = 1.0
    fn: object = None
    fn_support: tuple[float, float] = (-1.0, 1.0)
    fn_background: tuple[float, float] = (0.0, 0.0)

    @staticmethod
    def constant(c: float) -> "Profile":
        if not 0.0 <= c <= 1.0:
            raise ValueError("profile values must lie in [0, 1]")
        return Profile(kind="constant", left=c, right=c)

    @staticmethod
    def step(left: float, right: float) -> "Profile":
        if not (0.0 <= left <= 1.0 and 0.0 <= right <= 1.0):
            raise ValueError("profile values must lie in [0, 1]")
        return Profile(kind="step", left=left, right=right)

    @staticmethod
    def bump(base: float, amplitude: float, center: float = 0.0, width: float = 1.0) -> "Profile":
        lo, hi = sorted((base, base + amplitude))
        if not (0.0 <= lo and hi <= 1.0):
            raise ValueError("profile values must lie in [0, 1]")
        return Profile(kind="bump", base=base, amplitude=amplitude, center=center, width=width)

    @staticmethod
    def custom(fn, support: tuple[float, float], background: tuple[float, float] = (0.0, 0.0)) -> "Profile":
        """Callable of the last coordinate; equals background (left, right)
        outside the support interval."""
        return Profile(kind="custom", fn=fn, fn_support=tuple(support), fn_background=tuple(background))

    def last_axis_value(self, v):
        v = np.asarray(v, dtype=np.float64)
        if self.kind == "constant":
            return np.full_like(v, self.left)
        if self.kind == "step":
            return np.where(v < 0.0, self.left, self.right)
        if self.kind == "bump":
            return self.base + self.amplitude * PolyBump(self.center, self.width).value(v)
        if self.kind == "custom":
            lo, hi = self.fn_support
            bg = np.where(v < 0.0, self.fn_background[0], self.fn_background[1])
            inside = (v >= lo) & (v <= hi)
            out = np.array(bg, dtype=np.float64, copy=True)
            if np.any(inside):
                out[inside] = self.fn(v[inside])
            return out
        raise ValueError(f"unknown profile kind {self.kind}")

    def __call__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[None, :]
        vals = self.last_axis_value(pts[:, -1])
        if np.any(vals < -1e-12) or np.any(vals > 1.0 + 1e-12):
            raise ValueError("profile returned values outside [0, 1]")
        return vals

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.kind in ("constant", "step"):
            d.update(left=self.left, right=self.right)
        elif self.kind == "bump":
            d.update(base=self.base, amplitude=self.amplitude, center=self.center, width=self.width)
        else:
            d.update(support=list(self.fn_support), background=list(self.fn_background))
        return d


from scipy.special import erf as _erf  # noqa: E402


def _phi(z):
    """Standard normal pdf."""
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _Phi(z):
    """Standard normal cdf."""
    return 0.5 * (1.0 + _erf(z / math.sqrt(2.0)))


def _truncated_gaussian_poly(coeffs, mean, var, lo, hi):
    """integral over [lo, hi] of poly(v) * N(mean, var) dv, exact.

    Uses the moment recurrence M_k = mean*M_{k-1} + var*(k-1)*M_{k-2}
    - var*[v^{k-1} pdf(v)] evaluated at the endpoints.  Vectorized over
    `mean`.
    """
    mean = np.asarray(mean, dtype=np.float64)
    sd = math.sqrt(var)
    a = (lo - mean) / sd
    b = (hi - mean) / sd
    pa, pb = _phi(a), _phi(b)
    Mk_2 = _Phi(b) - _Phi(a)  # M_0
    out = coeffs[0] * Mk_2 if len(coeffs) > 0 else 0.0
    if len(coeffs) == 1:
        return out
    Mk_1 = mean * Mk_2 - sd * (pb - pa)  # M_1 (since E[V 1] with V = mean + sd Z)
    out = out + coeffs[1] * Mk_1
    lo_pow, hi_pow = lo, hi
    for k in range(2, len(coeffs)):
        Mk = mean * Mk_1 + var * (k - 1) * Mk_2 - var * (hi_pow * pb - lo_pow * pa) / sd
        out = out + coeffs[k] * Mk
        Mk_2, Mk_1 = Mk_1, Mk
        lo_pow *= lo
        hi_pow *= hi
    return out


def _bump_coeffs(center: float, width: float) -> np.ndarray:
    """(1 - ((v - c)/w)^2)^3 expanded in powers of v."""
    z = np.polynomial.polynomial.Polynomial([-center / width, 1.0 / width])
    p = (1.0 - z**2) ** 3
    return p.coef


def _free_last_axis(profile: Profile, kappa: float, t: float, v):
    """1-d free heat evolution of the last-axis profile, closed form."""
    v = np.asarray(v, dtype=np.float64)
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    if t == 0.0 or profile.kind == "constant":
        return profile.last_axis_value(v)
    var = 2.0 * kappa * t  # Gaussian kernel variance
    sd = math.sqrt(var)
    if profile.kind == "step":
        return profile.right + (profile.left - profile.right) * _Phi(-v / sd)
    if profile.kind == "bump":
        coeffs = _bump_coeffs(profile.center, profile.width)
        lo, hi = profile.center - profile.width, profile.center + profile.width
        return profile.base + profile.amplitude * _truncated_gaussian_poly(coeffs, v, var, lo, hi)
    if profile.kind == "custom":
        lo, hi = profile.fn_support
        bl, br = profile.fn_background
        # background step + compact correction integrated adaptively
        bg = br + (bl - br) * _Phi(-v / sd)
        flat = np.ravel(v)
        corr = np.empty_like(flat)
        for i, u in enumerate(flat):
            corr[i] = integrate.quad(
                lambda w: (profile.fn(np.array([w]))[0] - (bl if w < 0 else br))
                * math.exp(-((u - w) ** 2) / (2.0 * var))
                / (sd * math.sqrt(2.0 * math.pi)),
                lo,
                hi,
                limit=200,
            )[0]
        return bg + corr.reshape(np.shape(v))
    raise ValueError(f"unknown profile kind {profile.kind}")


def _neumann_last_axis(profile: Profile, kappa: float, t: float, v):
    """1-d half-line heat evolution with reflecting hyperplane, closed form.

    Each side evolves independently with the even reflection of its own
    data (method of images), which realizes zero normal derivative at 0
    and zero flux across it.
    """
    v = np.asarray(v, dtype=np.float64)
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    if t == 0.0 or profile.kind == "constant":
        return profile.last_axis_value(v)
    if profile.kind == "step":
        return profile.last_axis_value(v)  # constant on each side stays put
    var = 2.0 * kappa * t
    sd = math.sqrt(var)

    def side_value(u, side):
        # integral over the side of [k(u - w) + k(u + w)] f(w) dw
        if profile.kind == "bump":
            coeffs = _bump_coeffs(profile.center, profile.width)
            lo = profile.center - profile.width
            hi = profile.center + profile.width
            base = profile.base
            if side == "plus":
                lo_s, hi_s = max(lo, 0.0), max(hi, 0.0)
            else:
                lo_s, hi_s = min(lo, 0.0), min(hi, 0.0)
            out = np.full_like(u, base)
            if hi_s > lo_s:
                out = out + profile.amplitude * (
                    _truncated_gaussian_poly(coeffs, u, var, lo_s, hi_s)
                    + _truncated_gaussian_poly(coeffs, -u, var, lo_s, hi_s)
                )
            return out
        if profile.kind == "custom":
            lo, hi = profile.fn_support
            bl, br = profile.fn_background
            bg = bl if side == "minus" else br
            if side == "plus":
                lo_s, hi_s = max(lo, 0.0), hi
            else:
                lo_s, hi_s = lo, min(hi, 0.0)
            flat = np.ravel(u)
            corr = np.zeros_like(flat)
            if hi_s > lo_s:
                for i, uu in enumerate(flat):
                    corr[i] = integrate.quad(
                        lambda w: (profile.fn(np.array([w]))[0] - bg)
                        * (
                            math.exp(-((uu - w) ** 2) / (2.0 * var))
                            + math.exp(-((uu + w) ** 2) / (2.0 * var))
                        )
                        / (sd * math.sqrt(2.0 * math.pi)),
                        lo_s,
                        hi_s,
                        limit=200,
                    )[0]
            return bg + corr.reshape(np.shape(u))
        raise ValueError(f"unknown profile kind {profile.kind}")

    plus = side_value(v, "plus")
    minus = side_value(v, "minus")
    return np.where(v < 0.0, minus, plus)


def heat_solution_free(g: Profile, kappa: float, t: float, points):
    """Heat evolution of g on all of R^d (Gaussian convolution, closed form)."""
    pts = np.asarray(points, dtype=np.float64)
    scalar = pts.ndim == 1
    if scalar:
        pts = pts[None, :]
    out = _free_last_axis(g, kappa, t, pts[:, -1])
    return float(out[0]) if scalar else out


def heat_solution_neumann(g: Profile, kappa: float, t: float, points):
    """Heat evolution of g with reflecting (zero-flux) hyperplane, closed form."""
    pts = np.asarray(points, dtype=np.float64)
    scalar = pts.ndim == 1
    if scalar:
        pts = pts[None, :]
    out = _neumann_last_axis(g, kappa, t, pts[:, -1])
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class AnalyticSolution:
    """A (s, points) evaluator around one of the closed-form solutions."""

    g: Profile
    kappa: float
    equation: Equation

    def value(self, s: float, points):
        if self.equation is Equation.FREE_HEAT:
            return heat_solution_free(self.g, self.kappa, s, points)
        return heat_solution_neumann(self.g, self.kappa, s, points)

    def trace(self, side: str, s: float) -> float:
        """One-sided value at the hyperplane (d = 1 boundary trace)."""
        probe = -1e-300 if side == "left" else 0.0  # sign selects the branch
        out = _neumann_last_axis(self.g, self.kappa, s, np.array([probe]))
        return float(out[0])

    def __call__(self, s, points):
        return self.value(s, points)


def solution_for(selector: PDESelector, g: Profile) -> AnalyticSolution:
    selector.require_supported()
    eq = selector.equation
    if eq is Equation.NEUMANN_WITH_TRACE:
        eq = Equation.NEUMANN_HYPERPLANE  # same solution, richer test space
    return AnalyticSolution(g=g, kappa=selector.kappa, equation=eq)


# ---------------------------------------------------------------------------
# Weak-formulation residuals
# ---------------------------------------------------------------------------


class QuadratureAccuracyError(RuntimeError):
    def __init__(self, achieved: float, requested: float):
        super().__init__(
            f"quadrature did not reach the requested tolerance: achieved {achieved:.3e} > {requested:.3e}"
        )
        self.achieved = achieved
        self.requested = requested


@dataclass(frozen=True)
class WeakResidual:
    value: float
    quad_estimate: float

    def __float__(self):
        return self.value


def _gl_nodes(pieces, order):
    """Gauss-Legendre nodes/weights on a union of intervals."""
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for lo, hi in pieces:
        if hi <= lo:
            continue
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        nodes.append(mid + half * x)
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


def _axis_pieces(tf: TestFunctionPair, axis: int) -> list[tuple[float, float]]:
    b = tf.support_radius
    cuts = {-b, b}
    for branch in (tf.minus, tf.plus):
        for term in branch.terms:
            f = term.factors[axis]
            cuts.add(max(-b, f.center - f.width))
            cuts.add(min(b, f.center + f.width))
    if axis == tf.d - 1:
        cuts.add(0.0)
    cc = sorted(c for c in cuts if -b <= c <= b)
    return list(zip(cc[:-1], cc[1:]))


def _space_grid(tf: TestFunctionPair, order: int):
    axes = [_gl_nodes(_axis_pieces(tf, j), order) for j in range(tf.d)]
    mesh = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    wmesh = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    w = wmesh[0].ravel().copy()
    for m in wmesh[1:]:
        w = w * m.ravel()
    return pts, w


def _as_rho_fn(rho):
    if isinstance(rho, AnalyticSolution):
        return rho.value
    if callable(rho):
        return rho
    # gridded density field with an interpolating adapter
    from .observables import DensityField  # late import to avoid a cycle

    if isinstance(rho, DensityField):
        return rho.interpolator()
    raise TypeError("rho must be an AnalyticSolution, a callable (s, points), or a DensityField")


def _space_integrals(rho_fn, tf, g, kappa, t, order):
    from .operators import ContinuumOp, continuum_apply

    pts, w = _space_grid(tf, order)

    def bulk(s):
        lap = continuum_apply(ContinuumOp.BRANCH_LAPLACIAN, tf, s, pts)
        return float(np.sum(w * rho_fn(s, pts) * (kappa * lap + tf.dt(s, pts))))

    final = float(np.sum(w * rho_fn(t, pts) * tf.value(t, pts)))
    initial = float(np.sum(w * g(pts) * tf.value(0.0, pts)))
    return final, initial, bulk


def _time_integral(fn, t, order):
    """integral of fn over [0, t] via the substitution s = tau^2.

    The substitution removes the sqrt(s) behavior that rough initial data
    produce near s = 0.
    """
    if t <= 0.0:
        return 0.0
    x, w = np.polynomial.legendre.leggauss(order)
    root = math.sqrt(t)
    tau = 0.5 * root * (x + 1.0)
    ww = 0.5 * root * w * 2.0 * tau
    return float(sum(wi * fn(ti * ti) for ti, wi in zip(tau, ww)))


def _residual(rho, tf, g, kappa, t, boundary=None, space_order=24, time_order=24, tol=5e-5, max_refine=2, adaptive=True):
    rho_fn = _as_rho_fn(rho)

    def evaluate(so, to):
        final, initial, bulk = _space_integrals(rho_fn, tf, g, kappa, t, so)
        val = final - initial - _time_integral(bulk, t, to)
        if boundary is not None:
            val = val + kappa * _time_integral(boundary, t, to)
        return val

    if not adaptive:
        return WeakResidual(value=evaluate(space_order, time_order), quad_estimate=float("nan"))

    coarse = evaluate(space_order, time_order)
    for _ in range(max_refine + 1):
        fine = evaluate(space_order * 2, time_order * 2)
        est = abs(fine - coarse)
        if est <= tol:
            return WeakResidual(value=fine, quad_estimate=est)
        coarse = fine
        space_order *= 2
        time_order *= 2
    raise QuadratureAccuracyError(achieved=est, requested=tol)


def weak_residual_dif(rho, tf: TestFunctionPair, g: Profile, kappa: float, t: float, **kw) -> WeakResidual:
    """Weak-formulation functional for the heat equation without boundary terms.

    Vanishes (up to quadrature) when rho solves the free equation and the
    pair is smooth, or when rho solves the reflected equation and the pair
    is Neumann.
    """
    return _residual(rho, tf, g, kappa, t, boundary=None, **kw)


def weak_residual_neu(rho, tf: TestFunctionPair, g: Profile, kappa: float, t: float, traces=None, **kw) -> WeakResidual:
    """Weak-formulation functional with explicit one-sided boundary traces (d = 1).

    `traces` maps a time s to the pair (rho(0-, s), rho(0+, s)); for an
    AnalyticSolution of the reflected equation it defaults to the exact
    one-sided values.
    """
    if tf.d != 1:
        raise ValueError("boundary traces are defined for d = 1 only")
    if traces is None:
        if isinstance(rho, AnalyticSolution) and rho.equation is not Equation.FREE_HEAT:
            traces = lambda s: (rho.trace("left", s), rho.trace("right", s))
        else:
            raise ValueError("boundary traces must be supplied unless rho is an analytic reflected solution")

    def boundary(s):
        left, right = traces(s)
        grad_left = float(tf.minus.d1(s, np.zeros((1, 1)), 0)[0])
        grad_right = float(tf.plus.d1(s, np.zeros((1, 1)), 0)[0])
        return grad_left * float(np.asarray(left).reshape(-1)[0]) - grad_right * float(
            np.asarray(right).reshape(-1)[0]
        )

    return _residual(rho, tf, g, kappa, t, boundary=boundary, **kw)
