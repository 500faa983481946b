import numpy as np
import pytest
from scipy import stats

from exclusim.model import JumpKernel
from exclusim.sampling import (
    TAIL_OVERFLOW,
    build_displacement_table,
    build_alias_table,
    replica_rng,
    sample_displacement,
    sample_displacements,
)

# zeta(4) partial-sum oracle: conditional P(r=1) for gamma=3 and large r_max
P_R1_G3 = 0.92393840292159017  # 1/zeta(4)


def test_alias_table_reproduces_weights():
    rng = np.random.default_rng(3)
    w = rng.random(17) + 0.01
    thresh, alias = build_alias_table(w)
    # exact outcome probabilities from the table structure
    k = len(w)
    prob = thresh.copy() / k
    for i in range(k):
        prob[alias[i]] += (1.0 - thresh[i]) / k
    np.testing.assert_allclose(prob, w / w.sum(), atol=1e-12)


def test_construction_identity():
    table = build_displacement_table(JumpKernel(d=1, gamma=3.0, r_max=10**6))
    assert abs(table.stored_mass + table.tail_mass - 1.0) < 1e-12


def test_conditional_magnitude_law():
    table = build_displacement_table(JumpKernel(d=2, gamma=3.0, r_max=10**5))
    law = table.conditional_magnitude_law()
    assert law[0] == pytest.approx(P_R1_G3, abs=1e-6)
    assert abs(law.sum() - 1.0) < 1e-12


def test_tail_mass_bound_gamma2():
    table = build_displacement_table(JumpKernel(d=1, gamma=2.0, r_max=10**4))
    # integral bound: sum_{r > R} r^-3 <= R^-2 / 2, scaled by 2 c_2 < 1
    assert table.tail_mass <= 5e-9


def test_empirical_frequencies():
    table = build_displacement_table(JumpKernel(d=3, gamma=3.0, r_max=1000))
    rng = replica_rng(2024, 0)
    N = 10**6
    direction, sign, mag = sample_displacements(table, rng, N)
    kept = mag > 0
    n_kept = int(kept.sum())
    # directions uniform over d
    for j in range(3):
        freq = np.mean(direction[kept] == j)
        se = np.sqrt((1 / 3) * (2 / 3) / n_kept)
        assert abs(freq - 1 / 3) < 4 * se
    # signs uniform
    fplus = np.mean(sign[kept] == 1)
    assert abs(fplus - 0.5) < 4 * np.sqrt(0.25 / n_kept)
    # P(r = 1) within a 4-sigma binomial interval
    p1 = table.conditional_magnitude_law()[0]
    f1 = np.mean(mag[kept] == 1)
    assert abs(f1 - p1) < 4 * np.sqrt(p1 * (1 - p1) / n_kept)


@pytest.mark.parametrize("gamma", [2.0, 2.5, 3.0, 4.0])
def test_chi_squared_goodness_of_fit(gamma):
    table = build_displacement_table(JumpKernel(d=1, gamma=gamma, r_max=10**5))
    rng = replica_rng(90210, int(gamma * 10))
    N = 10**6
    _, _, mag = sample_displacements(table, rng, N)
    mag = mag[mag > 0]
    # bins r = 1..99 plus one overflow bucket
    law = table.conditional_magnitude_law()
    expected = np.concatenate([law[:99], [law[99:].sum()]]) * len(mag)
    counts = np.bincount(np.minimum(mag, 100), minlength=101)[1:]
    counts = np.concatenate([counts[:99], [counts[99:].sum()]])
    keep = expected >= 5
    chi2, p = stats.chisquare(counts[keep], expected[keep] * counts[keep].sum() / expected[keep].sum())
    assert p > 1e-3, f"chi-square GOF rejected at gamma={gamma}: p={p:g}"


def test_single_draw_api():
    table = build_displacement_table(JumpKernel(d=2, gamma=2.5, r_max=50))
    rng = replica_rng(5, 0)
    outcomes = [sample_displacement(table, rng) for _ in range(200)]
    real = [o for o in outcomes if o is not TAIL_OVERFLOW]
    assert all(1 <= o.magnitude <= 50 and o.direction in (0, 1) and o.sign in (-1, 1) for o in real)
    v = real[0].vector(2)
    assert np.count_nonzero(v) == 1


def test_determinism_across_replica_counts():
    table = build_displacement_table(JumpKernel(d=1, gamma=3.0, r_max=100))
    a = sample_displacements(table, replica_rng(7, 1), 1000)
    # replica 1's stream is the same whether or not replica 0 was consumed
    _ = sample_displacements(table, replica_rng(7, 0), 12345)
    b = sample_displacements(table, replica_rng(7, 1), 1000)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_invalid_construction():
    with pytest.raises(ValueError):
        build_alias_table(np.array([]))
    with pytest.raises(ValueError):
        build_alias_table(np.array([-1.0, 2.0]))
    with pytest.raises(ValueError):
        JumpKernel(d=1, gamma=3.0, r_max=0)
