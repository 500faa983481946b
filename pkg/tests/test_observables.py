import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from exclusim.model import BarrierSpec, JumpKernel, LatticeBox
from exclusim.observables import (
    DensityField,
    Mesh,
    boundary_average,
    boundary_value_estimate,
    coarse_density,
    dynkin_martingale,
    generator_pairing,
    inbox_difference_weights,
    martingale_hooks,
    pair_empirical,
    quadratic_variation_integrand,
    relative_entropy_product,
    spatial_values,
    window_indicator_weights,
)
from exclusim.operators import (
    boundary_drift,
    crossing_difference,
    decoupled_difference,
    full_difference,
)
from exclusim.sampling import replica_rng
from exclusim.simulation import Configuration, ExclusionModel, init_from_profile, simulate
from exclusim.testfunctions import TestFunctionPair, TimePoly, discontinuous_pair, smooth_pair, zero_function

BUMP_INTEGRAL = 32.0 / 35.0  # integral of (1 - u^2)^3 over [-1, 1]


def make_model(d=1, n=32, L=4, gamma=3.0, alpha=1.0, beta=0.0):
    box = LatticeBox(d=d, n=n, half_side=L)
    return ExclusionModel(
        kernel=JumpKernel(d=d, gamma=gamma, r_max=box.side),
        barrier=BarrierSpec(alpha=alpha, beta=beta),
        box=box,
    )


def bernoulli_config(model, p, seed=0, rep=0):
    return init_from_profile(lambda pts: np.full(len(pts), p), model.box, replica_rng(seed, rep))


def test_pair_empirical_trivial_cases():
    model = make_model(n=16, L=2)
    tf = smooth_pair(d=1)
    empty = Configuration(model.box, np.zeros(model.box.site_count, dtype=np.uint8))
    assert pair_empirical(empty, 16, tf) == 0.0
    occ = np.zeros(model.box.site_count, dtype=np.uint8)
    occ[model.box.index_of([5])] = 1
    single = Configuration(model.box, occ)
    assert pair_empirical(single, 16, tf) == pytest.approx(tf.value(0.0, np.array([5 / 16])) / 16)


@pytest.mark.parametrize("n", [64, 128, 256])
def test_pair_empirical_full_occupancy_quadrature(n):
    model = make_model(n=n, L=2)
    full = Configuration(model.box, np.ones(model.box.site_count, dtype=np.uint8))
    tf = smooth_pair(d=1)
    err = abs(pair_empirical(full, n, tf) - BUMP_INTEGRAL)
    assert err < 2.0 / n


def test_pair_empirical_bound_and_additivity():
    model = make_model(n=16, L=2)
    tf = smooth_pair(d=1, centers=[0.2])
    rng = replica_rng(3, 1)
    occ = (rng.random(model.box.site_count) < 0.5).astype(np.uint8)
    cfg = Configuration(model.box, occ)
    coords = model.box.coordinate_grid().astype(float) / 16
    bound = float(np.sum(np.abs(tf.value(0.0, coords)))) / 16
    assert abs(pair_empirical(cfg, 16, tf)) <= bound + 1e-15
    # additivity over a disjoint split of the particles
    occ_a = occ.copy()
    occ_a[: len(occ) // 2] = 0
    occ_b = occ - occ_a
    va = pair_empirical(Configuration(model.box, occ_a), 16, tf)
    vb = pair_empirical(Configuration(model.box, occ_b), 16, tf)
    assert va + vb == pytest.approx(pair_empirical(cfg, 16, tf), abs=1e-14)


@given(st.integers(min_value=0, max_value=2**16 - 1))
@settings(max_examples=30, deadline=None)
def test_pair_empirical_monotone_in_occupancy(bits):
    box = LatticeBox(d=1, n=8, half_side=1)
    occ = np.array([(bits >> i) & 1 for i in range(box.site_count)], dtype=np.uint8)
    tf = smooth_pair(d=1)  # nonnegative bump
    more = occ.copy()
    empty_sites = np.flatnonzero(more == 0)
    if len(empty_sites):
        more[empty_sites[0]] = 1
    v1 = pair_empirical(Configuration(box, occ), 8, tf)
    v2 = pair_empirical(Configuration(box, more), 8, tf)
    assert v2 >= v1 - 1e-15


def test_coarse_density_values():
    model = make_model(n=16, L=2)
    full = Configuration(model.box, np.ones(model.box.site_count, dtype=np.uint8))
    mesh = Mesh(lo=(-16,), hi=(16,), shape=(4,))
    field = coarse_density(full, 16, mesh)
    np.testing.assert_allclose(field.values, 1.0)
    # checkerboard over even-sized cells
    occ = np.zeros(model.box.site_count, dtype=np.uint8)
    occ[::2] = 1
    field = coarse_density(Configuration(model.box, occ), 16, mesh)
    np.testing.assert_allclose(field.values, 0.5)


def test_coarse_density_binomial_ci():
    box = LatticeBox(d=1, n=1000, half_side=4)
    cfg = init_from_profile(lambda p: np.full(len(p), 0.3), box, replica_rng(17, 0))
    mesh = Mesh(lo=(-4000,), hi=(4000,), shape=(8,))  # cells of 10^3 sites
    field = coarse_density(cfg, 1000, mesh)
    assert np.all(np.abs(field.values - 0.3) < 4 * math.sqrt(0.21 / 1000))


def test_coarse_density_empty_cell_error():
    model = make_model(n=4, L=1)
    cfg = bernoulli_config(model, 0.5)
    with pytest.raises(ValueError):
        Mesh(lo=(-4,), hi=(4,), shape=(16,))  # sub-site cells
    with pytest.raises(ValueError):
        coarse_density(cfg, 4, Mesh(lo=(-8,), hi=(8,), shape=(2,)))  # beyond the box


def test_boundary_average():
    model = make_model(n=8, L=2)
    ones = Configuration(model.box, np.ones(model.box.site_count, dtype=np.uint8))
    assert boundary_average(ones, 5, "right") == 1.0
    empty = Configuration(model.box, np.zeros(model.box.site_count, dtype=np.uint8))
    assert boundary_average(empty, 5, "left") == 0.0
    occ = np.zeros(model.box.site_count, dtype=np.uint8)
    occ[model.box.radius + 1 :: 2] = 1  # alternate starting at coordinate 1
    alt = Configuration(model.box, occ)
    assert boundary_average(alt, 6, "right") == 0.5
    with pytest.raises(ValueError):
        boundary_average(ones, model.box.radius + 1, "right")
    model2 = make_model(d=2, n=4, L=1)
    cfg2 = bernoulli_config(model2, 0.5)
    with pytest.raises(ValueError):
        boundary_average(cfg2, 2, "left")


def test_relative_entropy_identical_profiles():
    box = LatticeBox(d=1, n=16, half_side=2)
    q = lambda p: np.full(len(p), 0.5)
    assert relative_entropy_product(q, q, box, 16) == 0.0


def test_relative_entropy_per_site_value():
    # per-site divergence of Bernoulli(1/2) against Bernoulli(1/4)
    box = LatticeBox(d=1, n=4, half_side=1)
    q = lambda p: np.full(len(p), 0.5)
    h = lambda p: np.full(len(p), 0.25)
    per_site = 0.5 * math.log(2.0) + 0.5 * math.log(2.0 / 3.0)
    total = relative_entropy_product(q, h, box, 4)
    assert total == pytest.approx(box.site_count * per_site, rel=1e-12)
    assert per_site == pytest.approx(0.143841036225890, abs=1e-12)


def test_relative_entropy_infinite_flag_and_degenerate_q():
    box = LatticeBox(d=1, n=4, half_side=1)
    q = lambda p: np.full(len(p), 0.3)
    h_bad = lambda p: np.zeros(len(p))
    assert relative_entropy_product(q, h_bad, box, 4) == float("inf")
    # q touching {0, 1} is fine against interior h
    q_step = lambda p: np.where(p[:, -1] < 0, 1.0, 0.0)
    h = lambda p: np.full(len(p), 0.5)
    v = relative_entropy_product(q_step, h, box, 4)
    assert np.isfinite(v) and v == pytest.approx(box.site_count * math.log(2.0), rel=1e-12)


@pytest.mark.parametrize("n", [16, 32, 64, 128])
def test_relative_entropy_volume_bound(n):
    box = LatticeBox(d=1, n=n, half_side=4)
    from exclusim.pde import Profile

    g = Profile.bump(0.5, 0.3)
    h = Profile.constant(0.5)
    v = relative_entropy_product(g, h, box, n)
    # product-vs-product entropy grows like the volume: bounded per site
    assert v / box.site_count < math.log(2.0)
    assert v / n**box.d < 8.0 * math.log(2.0)


def test_generator_pairing_zero_function():
    model = make_model(n=16, L=2)
    cfg = bernoulli_config(model, 0.5)
    z = zero_function(1)
    assert generator_pairing(cfg, TestFunctionPair(z, z), model, 0.0) == 0.0


def test_generator_pairing_decompositions_agree():
    # the raw form (full - (1 - a n^-b) crossing) and the rearranged form
    # (decoupled + a n^-b crossing + drift) must coincide
    rng = np.random.default_rng(12)
    for _ in range(100):
        n = int(rng.integers(8, 16))
        beta = float(rng.choice([0.0, 0.5, 2.0]))
        alpha = float(rng.uniform(0.3, 1.0))
        gamma = float(rng.choice([2.0, 2.5, 3.0]))
        model = make_model(n=n, L=2, gamma=gamma, alpha=alpha, beta=beta)
        cfg = bernoulli_config(model, float(rng.uniform(0.2, 0.8)), seed=int(rng.integers(1e6)))
        tf = (
            discontinuous_pair(d=1, time=TimePoly((1.0, 0.2)))
            if rng.random() < 0.5
            else smooth_pair(d=1, centers=[float(rng.uniform(-0.3, 0.3))])
        )
        s = float(rng.uniform(0, 1))
        a = generator_pairing(cfg, tf, model, s)
        slow = model.slow_probability
        kern = model.kernel
        total = 0.0
        for site in model.box.coords_of_many(cfg.particles):
            total += (
                decoupled_difference(tf, n, site, s, gamma, kern.r_max)
                + boundary_drift(tf, n, site, s, gamma)
                + slow * crossing_difference(tf, n, site, s, gamma, kern.r_max)
            )
        b = model.theta_n * total / n
        assert a == pytest.approx(b, abs=1e-9)


def test_generator_pairing_uniformly_bounded():
    tf = smooth_pair(d=1)
    sups = []
    for n in (32, 64, 128):
        model = make_model(n=n, L=4)
        vals = [
            abs(generator_pairing(bernoulli_config(model, 0.5, seed=n, rep=r), tf, model, 0.0))
            for r in range(3)
        ]
        sups.append(max(vals))
    assert sups[-1] <= 1.5 * sups[0] + 0.1
    assert max(sups) < 10.0


def test_inbox_weights_match_operator_in_the_bulk():
    # far from the box edge the in-box sums equal the kernel-truncated operator
    model = make_model(n=16, L=4, beta=0.0)
    tf = smooth_pair(d=1)
    vals = spatial_values(tf, model.box)
    w = inbox_difference_weights(vals, model.box, model.gamma, slow_factor=1.0)
    for site in (-20, -3, 0, 7, 18):
        direct = full_difference(tf, 16, [site], 0.0, model.gamma, model.kernel.r_max)
        idx = model.box.index_of([site])
        # in-box sums lack only the out-of-box targets, where the bump vanishes
        assert w[idx] == pytest.approx(direct, abs=5e-6)


def test_martingale_zero_mean_and_quadrature_fallback():
    model = make_model(n=48, L=3, beta=0.5)
    roster = [
        smooth_pair(d=1, name="mart-a", time=TimePoly((1.0, 0.3))),
        smooth_pair(d=1, centers=[0.3], name="mart-b"),
        smooth_pair(d=1, widths=[1.5], name="mart-c"),
    ]
    hooks = tuple(h for tf in roster for h in martingale_hooks(tf, model))
    profile = lambda p: np.full(len(p), 0.4)
    finals = {tf.name: [] for tf in roster}
    for rep in range(24):
        cfg = init_from_profile(profile, model.box, replica_rng(91, rep))
        traj = simulate(cfg, model, T=0.04, snapshot_times=np.linspace(0.008, 0.04, 5),
                        hooks=hooks, seed_key=(91, rep), store_occupancy=False)
        for tf in roster:
            series = dynkin_martingale(traj, tf, model)
            assert series.values[0][0] == 0.0
            finals[tf.name].append(series.values[0])
    for name, rows in finals.items():
        arr = np.array(rows)
        m = arr.mean(axis=0)
        se = arr.std(axis=0, ddof=1) / math.sqrt(len(arr))
        assert np.all(np.abs(m[1:]) <= 4 * se[1:]), name
        # zero-mean t-test at significance 1e-3, at every snapshot
        for k in range(1, arr.shape[1]):
            _, p = stats.ttest_1samp(arr[:, k], 0.0)
            assert p > 1e-3, (name, k, p)

    # quadrature fallback on dense snapshots approximates the exact hooks
    tf = roster[0]
    cfg = init_from_profile(profile, model.box, replica_rng(91, 0))
    dense = simulate(cfg, model, T=0.04, snapshot_times=np.linspace(0, 0.04, 81),
                     hooks=hooks, seed_key=(91, 0))
    exact = dynkin_martingale(dense, tf, model).values[0]
    no_hook = dynkin_martingale(
        simulate(init_from_profile(profile, model.box, replica_rng(91, 0)), model,
                 T=0.04, snapshot_times=np.linspace(0, 0.04, 81), seed_key=(91, 0)),
        tf, model,
    ).values[0]
    assert np.max(np.abs(exact - no_hook)) < 5e-3


def test_martingale_requires_hooks_or_snapshots():
    model = make_model(n=16, L=1)
    tf = smooth_pair(d=1, name="nohook")
    cfg = bernoulli_config(model, 0.5)
    traj = simulate(cfg, model, T=0.01, snapshot_times=[0.01], seed_key=(0, 0), store_occupancy=False)
    with pytest.raises(ValueError):
        dynkin_martingale(traj, tf, model)


def test_quadratic_variation_properties():
    model = make_model(n=32, L=2, beta=1.0, gamma=2.0)
    z = zero_function(1)
    cfg = bernoulli_config(model, 0.5)
    assert quadratic_variation_integrand(cfg, TestFunctionPair(z, z), model, 0.0) == 0.0
    tf = smooth_pair(d=1)
    for rep in range(5):
        c = bernoulli_config(model, 0.5, seed=5, rep=rep)
        assert quadratic_variation_integrand(c, tf, model, 0.0) >= 0.0


def test_quadratic_variation_log_decay_gamma2():
    tf = smooth_pair(d=1)
    vals = []
    for n in (64, 128, 256):
        model = make_model(n=n, L=2, gamma=2.0, beta=0.0)
        cfg = bernoulli_config(model, 0.5, seed=77, rep=n)
        vals.append(quadratic_variation_integrand(cfg, tf, model, 0.0))
    consts = [v * math.log(n) for v, n in zip(vals, (64, 128, 256))]
    assert max(consts) <= 1.5 * consts[0] + 0.05
    assert vals[0] > vals[-1]


def test_boundary_value_estimate():
    const = DensityField(times=[0.0], edges=[np.linspace(-1, 1, 41)], values=0.7 * np.ones((1, 40)))
    for eps in (0.2, 0.5):
        assert boundary_value_estimate(const, eps, "left") == pytest.approx(0.7)
        assert boundary_value_estimate(const, eps, "right") == pytest.approx(0.7)
    # image solution of step data: piecewise constant sides
    stepf = DensityField(
        times=[0.0],
        edges=[np.linspace(-1, 1, 81)],
        values=np.where(np.linspace(-1, 1, 81)[:-1] < 0, 1.0, 0.0)[None, :],
    )
    assert boundary_value_estimate(stepf, 0.25, "left") == pytest.approx(1.0)
    assert boundary_value_estimate(stepf, 0.25, "right") == pytest.approx(0.0)
    # linear density on (0, eps): the window average is eps/2
    edges = np.linspace(0, 1, 2001)
    mids = 0.5 * (edges[:-1] + edges[1:])
    lin = DensityField(times=[0.0], edges=[edges], values=mids[None, :])
    eps = 0.4
    assert boundary_value_estimate(lin, eps, "right") == pytest.approx(eps / 2, abs=1e-6)
    with pytest.raises(ValueError):
        boundary_value_estimate(lin, 1e-5, "right")  # below mesh resolution


def test_window_indicator_weights():
    box = LatticeBox(d=1, n=8, half_side=2)
    w = window_indicator_weights(box, -4, 4)
    assert w.sum() == pytest.approx(1.0)
    assert np.count_nonzero(w) == 8
    with pytest.raises(ValueError):
        window_indicator_weights(box, 40, 50)
