import numpy as np
import pytest

from exclusim.model import kappa_gamma, normalization_constant, power_tail_sum, theta
from exclusim.operators import (
    ContinuumOp,
    L1Result,
    axis_difference,
    boundary_drift,
    continuum_apply,
    crossing_difference,
    decoupled_difference,
    full_difference,
    halfspace_difference,
    l1_convergence_error,
    one_sided_lambda,
    operator_ladder,
)
from exclusim.testfunctions import (
    TestFunctionPair,
    TimePoly,
    discontinuous_pair,
    neumann_pair,
    smooth_pair,
    zero_function,
)

KAPPA3 = kappa_gamma(3.0, 1)


def glued_zero(d=1):
    z = zero_function(d)
    return TestFunctionPair(z, z)


def test_axis_difference_zero_function():
    tf = glued_zero()
    assert axis_difference(tf, 50, 0, [3], 0.0, 3.0, 1000) == 0.0
    assert full_difference(tf, 50, [3], 0.0, 3.0, 1000) == 0.0
    assert crossing_difference(tf, 50, [3], 0.0, 3.0, 1000) == 0.0
    assert halfspace_difference(tf, 50, [3], 0.0, 3.0, 1000) == 0.0


def test_axis_difference_second_derivative_limit():
    # frozen ladder: direct sums at the origin approach kappa * G''(0) = -6 kappa
    tf = smooth_pair(d=1)
    target = KAPPA3 * (-6.0)
    errs = []
    for n in (100, 200, 400):
        v = theta(n, 3.0) * axis_difference(tf, n, 0, [0], 0.0, 3.0, 400 * n)
        errs.append(abs(v - target))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.015


def test_axis_difference_antisymmetric_center():
    odd = smooth_pair(d=1, centers=[0.4], widths=[0.3]).plus + smooth_pair(
        d=1, centers=[-0.4], widths=[0.3]
    ).plus.scaled(-1.0)
    tf = TestFunctionPair(odd, odd)
    v = axis_difference(tf, 64, 0, [0], 0.0, 3.0, 5000)
    assert abs(v) < 1e-15


def test_full_difference_separable_2d():
    tf = smooth_pair(d=2, centers=[0.1, -0.2], widths=[0.9, 1.1])
    site = np.array([7, -5])
    n, g, rmax = 40, 2.5, 3000
    both = full_difference(tf, n, site, 0.0, g, rmax)
    # separable identity: per-axis one-dimensional sums weighted by the other factor
    f1, f2 = tf.plus.terms[0].factors
    v1 = float(f1.value(np.array([site[0] / n]))[0])
    v2 = float(f2.value(np.array([site[1] / n]))[0])
    q = normalization_constant(g) / 2.0

    def k1d(f, x):
        r = np.arange(1, rmax + 1, dtype=np.float64)
        w = q * r ** (-g - 1.0)
        c = float(f.value(np.array([x / n]))[0])
        return float(np.sum((f.value((x + r) / n) - c) * w) + np.sum((f.value((x - r) / n) - c) * w))

    expected = v2 * k1d(f1, site[0]) + v1 * k1d(f2, site[1])
    assert both == pytest.approx(expected, abs=1e-12)


def test_crossing_bound_vanishes_in_R0():
    # accelerated and slowed crossing mass (Theta/n^(1+beta)) sum |K_S G| -> 0
    tf = discontinuous_pair(d=1)
    beta = 2.0
    vals = []
    for n in (64, 128, 256):
        rmax = 40 * n
        sites = np.arange(-3 * n, 3 * n + 1)
        total = sum(abs(crossing_difference(tf, n, [x], 0.0, 3.0, rmax)) for x in sites)
        vals.append(theta(n, 3.0) / n ** (1 + beta) * total)
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 0.05


def test_crossing_far_from_support():
    tf = discontinuous_pair(d=2)
    b_sites = int(np.ceil(tf.support_radius * 30))
    v = crossing_difference(tf, 30, [b_sites + 50, 2], 0.0, 3.0, 40)
    assert v == 0.0


def test_boundary_drift_neumann_vanishes():
    tf = neumann_pair(d=2)
    rng = np.random.default_rng(1)
    for _ in range(10):
        site = rng.integers(-40, 40, size=2)
        s = rng.uniform(0, 1)
        assert boundary_drift(tf, 32, site, s, 2.5) == 0.0


def test_boundary_drift_value_and_scaling():
    # at the boundary site the drift equals slope * c_gamma * zeta(gamma) / n
    tf = discontinuous_pair(d=1)
    slope = float(tf.plus.d1(0.0, np.zeros((1, 1)), 0)[0])
    c3 = normalization_constant(3.0)
    for n in (50, 100):
        v = boundary_drift(tf, n, [0], 0.0, 3.0)
        assert v == pytest.approx(slope * c3 * power_tail_sum(3.0) / n, rel=1e-12)
    # fixed site: explicit 1/n scaling
    assert boundary_drift(tf, 100, [7], 0.0, 3.0) == pytest.approx(
        boundary_drift(tf, 50, [7], 0.0, 3.0) / 2.0, rel=1e-12
    )


def test_one_sided_lambda_mirror():
    lam = one_sided_lambda(3.0, 1, np.array([0, 3, -1, -4]))
    assert lam[0] == pytest.approx(-lam[2], rel=1e-14)
    assert lam[1] == pytest.approx(-lam[3], rel=1e-14)


def test_halfspace_convergence_frozen_ladder():
    # plus branch only: accelerated halfspace sums at x = n/2 approach
    # kappa * G_plus''(1/2) = kappa * 1.125 (frozen oracle ladder)
    plus = smooth_pair(d=1).plus
    tf = TestFunctionPair(zero_function(1), plus)
    target = KAPPA3 * 1.125
    vals = []
    for n in (100, 200, 400):
        vals.append(theta(n, 3.0) * halfspace_difference(tf, n, [n // 2], 0.0, 3.0, 400 * n))
    errs = [abs(v - target) for v in vals]
    assert errs[0] > errs[1] > errs[2]
    # first-order decay: halving n halves the error (within slack)
    assert errs[2] < 0.6 * errs[1] < 0.36 * errs[0]


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("gamma", [2.0, 2.5, 3.0])
def test_decomposition_identity(d, gamma):
    rng = np.random.default_rng(int(10 * gamma) + d)
    tf = discontinuous_pair(d=d, time=TimePoly((1.0, 0.3)))
    for _ in range(5):
        n = int(rng.integers(8, 40))
        site = rng.integers(-2 * n, 2 * n, size=d)
        s = float(rng.uniform(0, 1))
        rmax = 30 * n
        full = full_difference(tf, n, site, s, gamma, rmax)
        parts = (
            decoupled_difference(tf, n, site, s, gamma, rmax)
            + boundary_drift(tf, n, site, s, gamma)
            + crossing_difference(tf, n, site, s, gamma, rmax)
        )
        assert full == pytest.approx(parts, abs=1e-12)


def test_operator_linearity():
    rng = np.random.default_rng(5)
    a = discontinuous_pair(d=1)
    b = neumann_pair(d=1)
    aa, bb = 1.7, -0.6
    combo = TestFunctionPair(
        a.minus.scaled(aa) + b.minus.scaled(bb), a.plus.scaled(aa) + b.plus.scaled(bb)
    )
    for op in (full_difference, crossing_difference, halfspace_difference, decoupled_difference):
        for _ in range(4):
            site = rng.integers(-30, 30, size=1)
            s = float(rng.uniform(0, 1))
            lhs = op(combo, 20, site, s, 2.5, 500)
            rhs = aa * op(a, 20, site, s, 2.5, 500) + bb * op(b, 20, site, s, 2.5, 500)
            assert lhs == pytest.approx(rhs, abs=1e-12)


def test_continuum_apply():
    tf = smooth_pair(d=2)
    pts = np.random.default_rng(2).uniform(-1.2, 1.2, size=(100, 2))
    lap = continuum_apply(ContinuumOp.LAPLACIAN, tf, 0.0, pts)
    branch = continuum_apply(ContinuumOp.BRANCH_LAPLACIAN, tf, 0.0, pts)
    np.testing.assert_allclose(lap, branch, atol=1e-12)
    # glued pair: branch operators live on the hyperplane, the Laplacian refuses
    disc = discontinuous_pair(d=1)
    v0 = continuum_apply(ContinuumOp.BRANCH_DD_LAST, disc, 0.0, [0.0])
    plus_dd = float(disc.plus.d2(0.0, np.zeros((1, 1)), 0)[0])
    assert v0 == pytest.approx(plus_dd)
    with pytest.raises(ValueError):
        continuum_apply(ContinuumOp.LAPLACIAN, disc, 0.0, [0.0])
    assert continuum_apply(ContinuumOp.BRANCH_LAPLACIAN, glued_zero(), 0.0, [0.3]) == 0.0


def test_l1_fast_path_matches_direct_sum():
    tf = smooth_pair(d=1, time=TimePoly((1.0, 0.5)))
    n, gamma = 10, 2.5
    res = l1_convergence_error(tf, n, gamma, operator="full", t_max=1.0, r_factor=64)
    rmax = max(64 * n, 1024)
    th, kap = theta(n, gamma), kappa_gamma(gamma, 1)
    b = int(np.ceil(tf.support_radius * n))
    phimax = max(abs(1.0), abs(1.5))
    direct = 0.0
    for x in range(-3 * b, 3 * b + 1):
        ddg = float(tf.plus.d2(0.0, np.array([[x / n]]), 0)[0])
        v = th * axis_difference(tf, n, 0, [x], 0.0, gamma, rmax) - kap * ddg
        direct += phimax * abs(v)
    assert res.lattice_sum == pytest.approx(direct / n, rel=1e-9)


def test_l1_ladders_decrease():
    ns = (50, 100, 200)
    smooth = smooth_pair(d=1)
    for gamma in (2.0, 2.5, 3.0):
        errs = [r.error for r in operator_ladder(smooth, gamma, ns, operator="full")]
        assert errs[0] > errs[1] > errs[2], (gamma, errs)
    neu = neumann_pair(d=1)
    errs = [r.error for r in operator_ladder(neu, 2.0, ns, operator="decoupled")]
    assert errs[0] > errs[1] > errs[2]
    disc = discontinuous_pair(d=1)
    errs = [r.error for r in operator_ladder(disc, 3.0, ns, operator="decoupled")]
    assert errs[0] > errs[1] > errs[2]


def test_l1_gamma2_requires_log_correction():
    # negative control: the plain diffusive clock diverges at gamma = 2
    tf = smooth_pair(d=1)
    wrong = [
        l1_convergence_error(tf, n, 2.0, operator="full", theta_override=float(n * n)).error
        for n in (50, 100, 200)
    ]
    assert wrong[0] < wrong[1] < wrong[2]


def test_l1_preconditions():
    with pytest.raises(ValueError):
        l1_convergence_error(discontinuous_pair(d=1), 50, 3.0, operator="full")
    with pytest.raises(ValueError):
        l1_convergence_error(discontinuous_pair(d=1), 50, 2.0, operator="decoupled")
    # gamma = 2 with a Neumann pair is the allowed hypothesis
    res = l1_convergence_error(neumann_pair(d=1), 50, 2.0, operator="decoupled")
    assert isinstance(res, L1Result) and res.error > 0


def test_l1_zero_function():
    res = l1_convergence_error(glued_zero(), 50, 3.0, operator="decoupled")
    assert res.lattice_sum == 0.0


def test_l1_decoupled_fast_path_matches_direct_sum():
    # reconstruct the d=2 lattice sum from pointwise operators (static time factor)
    tf = neumann_pair(d=2)
    n, gamma = 8, 2.0
    res = l1_convergence_error(tf, n, gamma, operator="decoupled", r_factor=64)
    th, kap = theta(n, gamma), kappa_gamma(gamma, 2)
    r_max = max(64 * n, 1024)
    b = int(np.ceil(tf.support_radius * n))
    total = 0.0
    for x1 in range(-3 * b, 3 * b + 1):
        for x2 in range(-3 * b, 3 * b + 1):
            v = th * decoupled_difference(tf, n, [x1, x2], 0.0, gamma, r_max) - kap * continuum_apply(
                ContinuumOp.BRANCH_LAPLACIAN, tf, 0.0, [x1 / n, x2 / n]
            )
            total += abs(v)
    assert res.lattice_sum == pytest.approx(total / n**2, rel=1e-9)


def test_decoupled_equals_halfspace_in_1d():
    tf = discontinuous_pair(d=1)
    rng = np.random.default_rng(9)
    for _ in range(5):
        site = rng.integers(-40, 40, size=1)
        s = float(rng.uniform(0, 1))
        assert decoupled_difference(tf, 20, site, s, 3.0, 600) == halfspace_difference(
            tf, 20, site, s, 3.0, 600
        )
