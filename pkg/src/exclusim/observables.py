"""Everything measured on configurations and trajectories.

Covers the empirical pairing n^-d sum_x eta(x) G(x/n), coarse-grained
density fields, one-sided window averages at the hyperplane, relative
entropy of product initializations, the generator pairing and its exact
decomposition, the compensated-pairing martingale and its quadratic
variation, and the epsilon-window boundary-value estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LatticeBox
from .operators import axis_weights, crossing_difference, full_difference
from .simulation import Configuration, ExclusionModel, HookSpec, Trajectory
from .testfunctions import TestFunctionPair

__all__ = [
    "ObservableSeries",
    "DensityField",
    "Mesh",
    "pair_empirical",
    "coarse_density",
    "boundary_average",
    "relative_entropy_product",
    "generator_pairing",
    "inbox_difference_weights",
    "pairing_weights",
    "window_indicator_weights",
    "pairing_hook",
    "generator_hook",
    "martingale_hooks",
    "dynkin_martingale",
    "quadratic_variation_integrand",
    "boundary_value_estimate",
]


@dataclass
class ObservableSeries:
    """Replica-resolved time series with aggregate mean and standard error."""

    name: str
    times: np.ndarray
    values: np.ndarray  # shape (replicas, snapshots)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))

    @property
    def replicas(self) -> int:
        return self.values.shape[0]

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    def se(self) -> np.ndarray:
        r = self.replicas
        if r < 2:
            return np.full(self.values.shape[1], np.nan)
        return self.values.std(axis=0, ddof=1) / np.sqrt(r)


def _particle_points(cfg: Configuration) -> np.ndarray:
    return cfg.box.coords_of_many(cfg.particles).astype(np.float64) / cfg.box.n


def pair_empirical(cfg: Configuration, n: int, G, t: float = 0.0) -> float:
    """n^-d sum over occupied sites of G(t, x/n).

    `G` is a TestFunctionPair or any callable (t, points) -> values; sites
    outside the support radius contribute nothing and are skipped.
    """
    if cfg.particle_count == 0:
        return 0.0
    pts = _particle_points(cfg)
    if isinstance(G, TestFunctionPair):
        keep = np.max(np.abs(pts), axis=1) <= G.support_radius
        if not np.any(keep):
            return 0.0
        vals = G.value(t, pts[keep])
    else:
        vals = np.asarray(G(t, pts), dtype=np.float64)
    return float(np.sum(vals)) / n**cfg.box.d


@dataclass(frozen=True)
class Mesh:
    """Partition of a site-coordinate window into congruent cells.

    `lo` and `hi` bound the window (half-open, in site units); `shape`
    gives the number of cells per axis.  Every cell must contain at least
    one lattice site.
    """

    lo: tuple[int, ...]
    hi: tuple[int, ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        lo, hi, shape = map(np.asarray, (self.lo, self.hi, self.shape))
        if not (len(lo) == len(hi) == len(shape)):
            raise ValueError("lo, hi and shape must share the dimension")
        if np.any(hi <= lo) or np.any(shape < 1):
            raise ValueError("window must be nonempty with at least one cell per axis")
        if np.any((hi - lo) < shape):
            raise ValueError("every mesh cell must contain at least one site")

    @property
    def d(self) -> int:
        return len(self.shape)

    def edges(self, axis: int) -> np.ndarray:
        return self.lo[axis] + np.round(
            np.linspace(0, self.hi[axis] - self.lo[axis], self.shape[axis] + 1)
        ).astype(np.int64)


@dataclass
class DensityField:
    """Gridded density values rho(t, cell), from simulation or a PDE solution.

    `times` has length S; `values` has shape (S, *cells); `edges` lists the
    cell boundaries per axis in macroscopic coordinates.
    """

    times: np.ndarray
    edges: list[np.ndarray]
    values: np.ndarray

    def __post_init__(self):
        self.times = np.atleast_1d(np.asarray(self.times, dtype=np.float64))
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape[0] != len(self.times):
            raise ValueError("values must have one leading slot per time")
        if np.any(self.values < -1e-9) or np.any(self.values > 1 + 1e-9):
            raise ValueError("density values must lie in [0, 1]")

    @property
    def d(self) -> int:
        return len(self.edges)

    def interpolator(self):
        """(s, points) evaluator: nearest cell in space, linear in time."""

        def fn(s, points):
            pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
            idx = []
            for j, e in enumerate(self.edges):
                k = np.clip(np.searchsorted(e, pts[:, j], side="right") - 1, 0, len(e) - 2)
                idx.append(k)
            if len(self.times) == 1:
                return self.values[0][tuple(idx)]
            s = float(s)
            if s < self.times[0] - 1e-12 or s > self.times[-1] + 1e-12:
                raise ValueError(f"time {s} outside the field's snapshot range")
            k = int(np.clip(np.searchsorted(self.times, s, side="right") - 1, 0, len(self.times) - 2))
            w = (s - self.times[k]) / (self.times[k + 1] - self.times[k])
            a = self.values[k][tuple(idx)]
            b = self.values[k + 1][tuple(idx)]
            return (1.0 - w) * a + w * b

        return fn


def coarse_density(cfg: Configuration, n: int, mesh: Mesh) -> DensityField:
    """Per-cell occupied fraction over the mesh window."""
    box = cfg.box
    if mesh.d != box.d:
        raise ValueError("mesh dimension must match the box")
    occ = cfg.occupancy.reshape([box.side] * box.d)
    edge_list = [mesh.edges(j) for j in range(mesh.d)]
    counts = np.empty(mesh.shape, dtype=np.float64)
    sizes = np.empty(mesh.shape, dtype=np.float64)
    for cell in np.ndindex(*mesh.shape):
        slices = []
        total = 1
        for j, c in enumerate(cell):
            a, b = edge_list[j][c], edge_list[j][c + 1]
            if a < -box.radius or b > box.radius:
                raise ValueError("mesh window reaches outside the box")
            slices.append(slice(a + box.radius, b + box.radius))
            total *= b - a
        if total == 0:
            raise ValueError(f"mesh cell {cell} contains no site")
        counts[cell] = float(occ[tuple(slices)].sum())
        sizes[cell] = total
    values = counts / sizes
    macro_edges = [e.astype(np.float64) / n for e in edge_list]
    return DensityField(times=np.zeros(1), edges=macro_edges, values=values[None, ...])


def boundary_average(cfg: Configuration, ell: int, side: str) -> float:
    """Window average of the occupancy on sites 1..ell (right) or -ell..-1 (left).

    Defined for d = 1 only, mirroring the one-sided boundary boxes used to
    extract hyperplane traces.
    """
    box = cfg.box
    if box.d != 1:
        raise ValueError("boundary averages are defined for d = 1 only")
    if ell < 1 or ell > box.radius:
        raise ValueError(f"window size must lie in 1..{box.radius}")
    occ = cfg.occupancy
    if side == "right":
        sites = np.arange(1, ell + 1)
    elif side == "left":
        sites = np.arange(-ell, 0)
    else:
        raise ValueError("side must be 'left' or 'right'")
    return float(occ[sites + box.radius].mean())


def relative_entropy_product(q, h, box: LatticeBox, n: int) -> float:
    """Relative entropy between site-product Bernoulli measures with marginals
    q(x/n) and h(x/n), summed over the box.

    Conventions: 0 log 0 = 0, so q may touch {0, 1}; if h touches {0, 1}
    where q disagrees the entropy is infinite and +inf is returned.
    """
    coords = box.coordinate_grid().astype(np.float64) / n
    qv = np.asarray(q(coords), dtype=np.float64).reshape(box.site_count)
    hv = np.asarray(h(coords), dtype=np.float64).reshape(box.site_count)
    if np.any((qv < 0) | (qv > 1)) or np.any((hv < 0) | (hv > 1)):
        raise ValueError("profiles must take values in [0, 1]")
    bad = ((hv == 0.0) & (qv > 0.0)) | ((hv == 1.0) & (qv < 1.0))
    if np.any(bad):
        return float("inf")
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(qv > 0.0, qv * (np.log(qv) - np.log(hv)), 0.0)
        b = np.where(qv < 1.0, (1.0 - qv) * (np.log1p(-qv) - np.log1p(-hv)), 0.0)
    return float(np.sum(a + b))


# ---------------------------------------------------------------------------
# Generator pairing, martingale bookkeeping, quadratic variation
# ---------------------------------------------------------------------------


def generator_pairing(cfg: Configuration, tf: TestFunctionPair, model: ExclusionModel, t: float) -> float:
    """Accelerated generator applied to the empirical pairing.

    theta(n)/n^d times the sum over occupied sites of
    [full - (1 - alpha n^-beta) * crossing] difference operators at x/n;
    the lattice sums are the kernel-truncated operator definitions.
    """
    box, kern = model.box, model.kernel
    if cfg.particle_count == 0:
        return 0.0
    coords = box.coords_of_many(cfg.particles)
    keep = np.max(np.abs(coords), axis=1) <= int(np.ceil(tf.support_radius * box.n)) + kern.r_max
    total = 0.0
    slow = model.slow_probability
    for site in coords[keep]:
        kb = full_difference(tf, box.n, site, t, kern.gamma, kern.r_max)
        ks = crossing_difference(tf, box.n, site, t, kern.gamma, kern.r_max)
        total += kb - (1.0 - slow) * ks
    return model.theta_n * total / box.n**box.d


def inbox_difference_weights(values: np.ndarray, box: LatticeBox, gamma: float, slow_factor: float = 1.0, crossing_only: bool = False) -> np.ndarray:
    """W(x) = sum over in-box axis-aligned y of q(|y-x|) * rfac * (values[y] - values[x]).

    `rfac` is `slow_factor` on hyperplane-crossing bonds and 1 elsewhere;
    with `crossing_only` the non-crossing bonds are dropped instead.  These
    are the exact per-site weights of the simulated (box-truncated) process,
    which is what makes the compensated pairing an exact martingale.
    """
    d, side, radius = box.d, box.side, box.radius
    vals = np.asarray(values, dtype=np.float64).reshape([side] * d)
    q = axis_weights(gamma, d, side - 1)
    out = np.zeros_like(vals)
    for axis in range(d):
        for r in range(1, side):
            qr = q[r - 1]
            lo = [slice(None)] * d
            hi = [slice(None)] * d
            lo[axis] = slice(0, side - r)
            hi[axis] = slice(r, side)
            lo_t, hi_t = tuple(lo), tuple(hi)
            diff = vals[hi_t] - vals[lo_t]
            if axis == d - 1:
                # pair (i, i + r) crosses iff i < radius <= i + r
                i0 = np.arange(side - r)
                w = np.where((i0 < radius) & (i0 + r >= radius), qr * slow_factor, 0.0 if crossing_only else qr)
                shape = [1] * d
                shape[axis] = side - r
                w = w.reshape(shape)
            else:
                if crossing_only:
                    continue
                w = qr
            out[lo_t] += w * diff
            out[hi_t] -= w * diff
    return out.reshape(box.site_count)


def spatial_values(tf: TestFunctionPair, box: LatticeBox) -> np.ndarray:
    """Time-stripped glued values G(x/n) over the box sites."""
    coords = box.coordinate_grid().astype(np.float64) / box.n
    return np.asarray(_spatial_part(tf).value(0.0, coords), dtype=np.float64)


def pairing_weights(tf_spatial, box: LatticeBox, t: float = 0.0) -> np.ndarray:
    """G(x/n)/n^d over the box sites for the spatial part of a pair."""
    coords = box.coordinate_grid().astype(np.float64) / box.n
    return np.asarray(tf_spatial.value(t, coords), dtype=np.float64) / box.n**box.d


def _phi_coeffs(tf: TestFunctionPair) -> tuple[float, float, float]:
    shared = tf.common_time_factor()
    if shared is None:
        raise ValueError("event-exact hooks need a common polynomial time factor")
    c = tuple(shared.coeffs) + (0.0, 0.0, 0.0)
    if any(abs(x) > 0 for x in c[3:]):
        raise ValueError("event-exact hooks support time factors up to degree 2")
    return c[0], c[1], c[2]


def pairing_hook(tf: TestFunctionPair, model: ExclusionModel) -> HookSpec:
    """Hook tracking the empirical pairing: weights G(x/n)/n^d, shared time factor."""
    name = tf.name or "pair"
    return HookSpec(
        name=f"{name}:pairing",
        weights=pairing_weights(_spatial_part(tf), model.box),
        phi=_phi_coeffs(tf),
    )


def generator_hook(tf: TestFunctionPair, model: ExclusionModel) -> HookSpec:
    """Hook tracking the accelerated generator pairing of the simulated chain.

    Weights are theta(n)/n^d times the in-box kernel difference sums with
    the slow factor on crossing bonds: exactly the drift of the pairing
    under the box-truncated dynamics.
    """
    box = model.box
    base = pairing_weights(_spatial_part(tf), box)
    gen = model.theta_n * inbox_difference_weights(
        base, box, model.gamma, slow_factor=model.slow_probability
    )
    name = tf.name or "pair"
    return HookSpec(name=f"{name}:generator", weights=gen, phi=_phi_coeffs(tf))


def martingale_hooks(tf: TestFunctionPair, model: ExclusionModel) -> tuple[HookSpec, HookSpec]:
    """The two hooks needed to assemble the compensated pairing exactly."""
    return pairing_hook(tf, model), generator_hook(tf, model)


class _SpatialView:
    """The pair at time factor 1: value(t, .) ignoring the time polynomial."""

    def __init__(self, tf: TestFunctionPair):
        self._tf = tf

    def value(self, t, points):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        neg = pts[:, -1] < 0.0
        out = np.zeros(len(pts))
        for branch, mask in ((self._tf.minus, neg), (self._tf.plus, ~neg)):
            if np.any(mask):
                acc = np.zeros(mask.sum())
                for term in branch.terms:
                    block = np.full(mask.sum(), term.coefficient)
                    for j, f in enumerate(term.factors):
                        block *= f.value(pts[mask, j])
                    acc += block
                out[mask] = acc
        return out


def _spatial_part(tf: TestFunctionPair) -> _SpatialView:
    return _SpatialView(tf)


def dynkin_martingale(traj: Trajectory, tf: TestFunctionPair, model: ExclusionModel) -> ObservableSeries:
    """The compensated pairing M_t at the trajectory's snapshot times.

    M_t = phi(t) P(t) - phi(0) P(0) - int_0^t phi'(s) P(s) ds
          - int_0^t phi(s) A(s) ds,

    with P the raw pairing sum and A the in-box generator sum; both
    integrals were accumulated event-exactly by the registered hooks.
    Falls back to trapezoidal quadrature over stored occupancy snapshots
    when the hooks are absent (raises if neither is available).
    """
    name = tf.name or "pair"
    try:
        ip = traj.hook_index(f"{name}:pairing")
        ig = traj.hook_index(f"{name}:generator")
    except KeyError:
        M = _dynkin_from_snapshots(traj, tf, model)
        return ObservableSeries(name=f"martingale:{name}", times=traj.times, values=M[None, :])
    phi = traj.hook_phi[ip]

    def phi_at(t):
        return phi[0] + t * (phi[1] + t * phi[2])

    times = traj.times
    P = traj.snap_P[:, ip]
    M = phi_at(times) * P - phi_at(times[0]) * P[0] - traj.snap_I1[:, ip] - traj.snap_I2[:, ig]
    return ObservableSeries(name=f"martingale:{name}", times=times, values=M[None, :])


def _dynkin_from_snapshots(traj: Trajectory, tf: TestFunctionPair, model: ExclusionModel) -> np.ndarray:
    if traj.occupancies is None:
        raise ValueError(
            "martingale evaluation needs either registered hooks or stored "
            "occupancy snapshots; re-run simulate() with hooks or snapshots"
        )
    if len(traj.times) < 3:
        raise ValueError("too few snapshots to resolve the time integrals")
    box = model.box
    times = traj.times
    pair_t = np.empty(len(times))
    dt_t = np.empty(len(times))
    gen_t = np.empty(len(times))
    base = pairing_weights(_spatial_part(tf), box)
    gen_w = model.theta_n * inbox_difference_weights(
        base, box, model.gamma, slow_factor=model.slow_probability
    )
    phi = _phi_coeffs(tf)
    for k, t in enumerate(times):
        occ = traj.occupancies[k].astype(np.float64)
        raw = float(base @ occ)
        ph = phi[0] + t * (phi[1] + t * phi[2])
        dph = phi[1] + 2.0 * t * phi[2]
        pair_t[k] = ph * raw
        dt_t[k] = dph * raw
        gen_t[k] = ph * float(gen_w @ occ)
    from scipy.integrate import cumulative_trapezoid

    i1 = np.concatenate(([0.0], cumulative_trapezoid(dt_t, times)))
    i2 = np.concatenate(([0.0], cumulative_trapezoid(gen_t, times)))
    return pair_t - pair_t[0] - i1 - i2


def quadratic_variation_integrand(cfg: Configuration, tf: TestFunctionPair, model: ExclusionModel, t: float) -> float:
    """Instantaneous variance rate of the compensated pairing.

    theta(n)/n^2d times the sum over in-box bonds of
    q r (eta(x) - eta(y))^2 (G(y/n) - G(x/n))^2; nonnegative by
    construction and evaluated by a direct bond sum.
    """
    box = model.box
    d, side = box.d, box.side
    occ = cfg.occupancy.reshape([side] * d).astype(np.float64)
    coords = box.coordinate_grid().astype(np.float64) / box.n
    gvals = np.asarray(tf.value(t, coords), dtype=np.float64).reshape([side] * d)
    q = axis_weights(model.gamma, d, side - 1)
    slow = model.slow_probability
    total = 0.0
    for axis in range(d):
        for r in range(1, side):
            lo = [slice(None)] * d
            hi = [slice(None)] * d
            lo[axis] = slice(0, side - r)
            hi[axis] = slice(r, side)
            lo_t, hi_t = tuple(lo), tuple(hi)
            dg = gvals[hi_t] - gvals[lo_t]
            if not np.any(dg):
                continue
            de = occ[hi_t] - occ[lo_t]
            contrib = de * de * dg * dg
            if axis == d - 1:
                i0 = np.arange(side - r)
                w = np.where((i0 < box.radius) & (i0 + r >= box.radius), q[r - 1] * slow, q[r - 1])
                shape = [1] * d
                shape[axis] = side - r
                total += float(np.sum(contrib * w.reshape(shape)))
            else:
                total += q[r - 1] * float(np.sum(contrib))
    return model.theta_n * total / box.n ** (2 * d)


def boundary_value_estimate(field: DensityField, eps: float, side: str) -> float:
    """Normalized window average (1/eps) * integral of the density over
    (-eps, 0) or (0, eps); the epsilon -> 0 limit estimates the one-sided
    boundary value.  d = 1 fields only.
    """
    if field.d != 1:
        raise ValueError("boundary-value estimation is defined for d = 1 fields")
    if len(field.times) != 1:
        raise ValueError("pass a single-time field (one snapshot)")
    edges = field.edges[0]
    vals = field.values[0]
    widths = np.diff(edges)
    if eps < widths.min() - 1e-12:
        raise ValueError(f"window eps={eps:g} is below the mesh resolution {widths.min():g}")
    lo, hi = (-eps, 0.0) if side == "left" else (0.0, eps)
    if lo < edges[0] - 1e-12 or hi > edges[-1] + 1e-12:
        raise ValueError("window reaches outside the field")
    overlap = np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo)
    overlap = np.clip(overlap, 0.0, None)
    return float(np.sum(vals * overlap) / eps)


def window_indicator_weights(box: LatticeBox, lo: int, hi: int, axis: int | None = None) -> np.ndarray:
    """Normalized indicator of a coordinate slab lo <= x_axis < hi (site units).

    Useful as a hook: the hook sum is then the window occupancy fraction.
    """
    axis = box.d - 1 if axis is None else axis
    coords = box.coordinate_grid()
    mask = (coords[:, axis] >= lo) & (coords[:, axis] < hi)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("window contains no site")
    return mask.astype(np.float64) / count
