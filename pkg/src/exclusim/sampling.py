"""Exact O(1) sampling of jump displacements from the truncated heavy-tailed kernel.

An alias table is built over jump magnitudes only (not over full displacement
vectors): the kernel factorizes into a uniform direction, a uniform sign and
a magnitude law proportional to r^(-gamma-1).  Outcome 0 of the table stands
for the analytic tail beyond r_max and is reported as TAIL_OVERFLOW; callers
treat it as a rejected attempt so the per-attempt law stays exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import JumpKernel

__all__ = [
    "TAIL_OVERFLOW",
    "Displacement",
    "DisplacementTable",
    "build_displacement_table",
    "sample_displacement",
    "build_alias_table",
    "replica_rng",
]

TAIL_OVERFLOW = 0  # alias-table outcome standing for magnitudes beyond r_max


def build_alias_table(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Walker alias table for an unnormalized weight vector.

    Returns (threshold, alias): draw u ~ U[0,1), set v = u * K, k = floor(v);
    the outcome is k if v - k < threshold[k], else alias[k].
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or len(w) == 0:
        raise ValueError("weights must be a nonempty 1-d array")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    total = float(np.sum(w))
    if total <= 0.0:
        raise ValueError("weights must have positive total mass")
    k = len(w)
    scaled = w * (k / total)
    threshold = np.ones(k, dtype=np.float64)
    alias = np.arange(k, dtype=np.int64)
    small = [i for i in range(k) if scaled[i] < 1.0]
    large = [i for i in range(k) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        l = large.pop()
        threshold[s] = scaled[s]
        alias[s] = l
        scaled[l] -= 1.0 - scaled[s]
        (small if scaled[l] < 1.0 else large).append(l)
    # leftovers are 1 up to roundoff
    return threshold, alias


@dataclass(frozen=True)
class Displacement:
    direction: int  # axis index in 0..d-1
    sign: int  # +1 or -1
    magnitude: int  # >= 1

    def vector(self, d: int) -> np.ndarray:
        v = np.zeros(d, dtype=np.int64)
        v[self.direction] = self.sign * self.magnitude
        return v


class DisplacementTable:
    """Alias structure over magnitudes 1..r_max plus the explicit tail outcome.

    Outcome probabilities are proportional to r^(-gamma-1); the stored mass
    plus `tail_mass` equals 1, and a single uniform drives each magnitude
    draw.  Construction is O(r_max), sampling O(1).
    """

    def __init__(self, kernel: JumpKernel):
        if kernel.r_max < 1:
            raise ValueError("kernel truncation radius must be >= 1")
        self.kernel = kernel
        self.tail_mass = kernel.tail_mass
        weights = np.concatenate(([self.tail_mass], kernel.magnitude_weights()))
        self.threshold, self.alias = build_alias_table(weights)
        self._stored_mass = float(np.sum(weights[1:]))

    @property
    def d(self) -> int:
        return self.kernel.d

    @property
    def r_max(self) -> int:
        return self.kernel.r_max

    @property
    def stored_mass(self) -> float:
        return self._stored_mass

    def conditional_magnitude_law(self) -> np.ndarray:
        """P(magnitude = r | no overflow), r = 1..r_max."""
        w = self.kernel.magnitude_weights()
        return w / np.sum(w)

    def draw_magnitude(self, u: float) -> int:
        """Map one uniform to a magnitude (or TAIL_OVERFLOW) via the alias table."""
        v = u * len(self.threshold)
        k = int(v)
        if v - k >= self.threshold[k]:
            k = int(self.alias[k])
        return k


def build_displacement_table(kernel: JumpKernel) -> DisplacementTable:
    return DisplacementTable(kernel)


def sample_displacement(table: DisplacementTable, rng: np.random.Generator):
    """One draw from the kernel: Displacement, or TAIL_OVERFLOW for the analytic tail.

    Consumes exactly two uniforms per call (one for direction+sign, one for
    the magnitude) so parallel streams stay aligned whatever the outcome.
    """
    u_dir, u_mag = rng.random(2)
    r = table.draw_magnitude(u_mag)
    if r == TAIL_OVERFLOW:
        return TAIL_OVERFLOW
    ds = int(u_dir * 2 * table.d)
    return Displacement(direction=ds >> 1, sign=1 if ds & 1 else -1, magnitude=r)


def sample_displacements(table: DisplacementTable, rng: np.random.Generator, count: int):
    """Vectorized draws: arrays (direction, sign, magnitude); magnitude 0 is tail overflow.

    Same per-draw law and uniform consumption pattern as sample_displacement.
    """
    u = rng.random((count, 2))
    k = len(table.threshold)
    v = u[:, 1] * k
    idx = np.minimum(v.astype(np.int64), k - 1)
    take_alias = (v - idx) >= table.threshold[idx]
    mag = np.where(take_alias, table.alias[idx], idx)
    ds = np.minimum((u[:, 0] * 2 * table.d).astype(np.int64), 2 * table.d - 1)
    return ds >> 1, np.where(ds & 1, 1, -1), mag


def replica_rng(master_seed: int, replica: int) -> np.random.Generator:
    """Independent, reproducible stream for one trajectory.

    Streams are keyed by (master_seed, replica) through SeedSequence, so a
    replica's draws do not depend on how many replicas run or in which
    order.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((master_seed, replica))))
