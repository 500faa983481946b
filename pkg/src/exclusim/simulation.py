"""Exact event-driven simulation of the accelerated exclusion process.

One trajectory is a continuous-time Markov chain on the finite box: every
particle attempts a jump at rate theta(n) (macroscopic clock), the attempt
draws a displacement from the full kernel law, and the move is applied iff
the target is inside the box, empty, and - when the bond crosses the
hyperplane - an independent uniform falls below alpha * n^(-beta).  Rejected
attempts consume time; this thinning realizes the generator rates exactly on
in-box bonds.

Observable hooks are linear site statistics sum_x eta(x) w(x) with a
polynomial time factor; the kernel maintains them exactly between events,
which is what makes the martingale checks sharp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .model import BarrierSpec, JumpKernel, LatticeBox, theta
from .sampling import DisplacementTable, replica_rng

__all__ = [
    "ExclusionModel",
    "Configuration",
    "HookSpec",
    "Trajectory",
    "init_from_profile",
    "step",
    "simulate",
    "SNAPSHOT_OCC_LIMIT",
]

SNAPSHOT_OCC_LIMIT = 1 << 24  # above this many sites, snapshots stream observables only
_BATCH = 1 << 16  # fixed batch size: part of the deterministic stream layout


@dataclass(frozen=True)
class ExclusionModel:
    """Bundle of kernel, barrier and box defining one finite-n process."""

    kernel: JumpKernel
    barrier: BarrierSpec
    box: LatticeBox

    def __post_init__(self):
        if self.kernel.d != self.box.d:
            raise ValueError("kernel and box dimensions disagree")
        if self.slow_probability > 1.0:
            raise ValueError(
                f"alpha * n^-beta = {self.slow_probability:g} exceeds 1; the "
                "constant-rate thinning construction requires it within [0, 1]"
            )

    @property
    def d(self) -> int:
        return self.box.d

    @property
    def n(self) -> int:
        return self.box.n

    @property
    def gamma(self) -> float:
        return self.kernel.gamma

    @property
    def theta_n(self) -> float:
        return theta(self.box.n, self.kernel.gamma)

    @property
    def slow_probability(self) -> float:
        return self.barrier.slow_factor(self.box.n)


class Configuration:
    """Occupancy of the box plus a particle index.

    Invariants: occupancy values are 0/1 and agree with the particle list;
    `slot_of_site` is the reverse index (-1 on empty sites).
    """

    def __init__(self, box: LatticeBox, occupancy: np.ndarray):
        occ = np.ascontiguousarray(occupancy, dtype=np.uint8)
        if occ.shape != (box.site_count,):
            raise ValueError("occupancy must be a flat array over the box sites")
        if occ.max(initial=0) > 1:
            raise ValueError("occupancy values must be 0 or 1")
        self.box = box
        self.occupancy = occ
        self.particles = np.flatnonzero(occ).astype(np.int64)
        self.slot_of_site = np.full(box.site_count, -1, dtype=np.int64)
        self.slot_of_site[self.particles] = np.arange(len(self.particles), dtype=np.int64)

    @property
    def particle_count(self) -> int:
        return len(self.particles)

    def copy(self) -> "Configuration":
        return Configuration(self.box, self.occupancy.copy())

    def validate(self):
        occ = self.occupancy
        assert occ.max(initial=0) <= 1
        assert int(occ.sum()) == len(self.particles)
        assert np.all(occ[self.particles] == 1)
        for slot, site in enumerate(self.particles):
            assert self.slot_of_site[site] == slot
        return True


def init_from_profile(g, box: LatticeBox, rng: np.random.Generator) -> Configuration:
    """Product-measure initialization: site x occupied with probability g(x/n).

    `g` is any callable mapping points of shape (N, d) into [0, 1].
    """
    coords = box.coordinate_grid().astype(np.float64) / box.n
    probs = np.asarray(g(coords), dtype=np.float64).reshape(box.site_count)
    if np.any(probs < -1e-12) or np.any(probs > 1.0 + 1e-12):
        raise ValueError("initial profile must take values in [0, 1]")
    occ = (rng.random(box.site_count) < probs).astype(np.uint8)
    return Configuration(box, occ)


@dataclass(frozen=True)
class HookSpec:
    """Observable hook sum_x eta_t(x) w(x) with polynomial time factor phi.

    The trajectory records, at every snapshot time, the raw sum P(t) plus
    the exact time integrals of phi'(s) P(s) and phi(s) P(s).
    """

    name: str
    weights: np.ndarray
    phi: tuple[float, float, float] = (1.0, 0.0, 0.0)


@dataclass
class Trajectory:
    """Snapshot record of one simulated trajectory."""

    model: ExclusionModel
    times: np.ndarray
    hook_names: list[str]
    hook_phi: np.ndarray  # (H, 3)
    snap_P: np.ndarray  # (S, H)
    snap_I1: np.ndarray  # (S, H) integral of phi' P
    snap_I2: np.ndarray  # (S, H) integral of phi  P
    occupancies: np.ndarray | None  # (S, sites) uint8, or None if streamed
    counters: dict
    particle_count: int
    seed_key: tuple | None
    final: Configuration = field(repr=False, default=None)

    def hook_index(self, name: str) -> int:
        try:
            return self.hook_names.index(name)
        except ValueError:
            raise KeyError(f"no hook named {name!r} was registered with simulate()") from None

    def configuration_at(self, k: int) -> Configuration:
        if self.occupancies is None:
            raise ValueError("occupancy snapshots were not stored for this trajectory")
        return Configuration(self.model.box, self.occupancies[k])


def _attempt_outcome(cfg: Configuration, model: ExclusionModel, table: DisplacementTable, u4) -> tuple[str, int, int]:
    """Shared single-attempt decision logic (reference implementation).

    Returns (outcome, src, dst); outcome in {"accepted", "occupied",
    "off-box", "slow-thinned", "tail"}; src/dst are -1 when not applicable.
    """
    u_part, u_dirsign, u_mag, u_thin = u4
    box = model.box
    k = table.draw_magnitude(u_mag)
    if k == 0:
        return "tail", -1, -1
    ip = min(int(u_part * cfg.particle_count), cfg.particle_count - 1)
    src = int(cfg.particles[ip])
    ds = min(int(u_dirsign * 2 * box.d), 2 * box.d - 1)
    axis, sign = ds >> 1, (1 if ds & 1 else -1)
    stride = int(box.strides[axis])
    cj = (src // stride) % box.side - box.radius
    cj2 = cj + sign * k
    if cj2 < -box.radius or cj2 >= box.radius:
        return "off-box", src, -1
    dst = src + sign * k * stride
    if cfg.occupancy[dst]:
        return "occupied", src, dst
    if axis == box.d - 1 and (cj < 0) != (cj2 < 0):
        if u_thin >= model.slow_probability:
            return "slow-thinned", src, dst
    return "accepted", src, dst


def step(cfg: Configuration, model: ExclusionModel, rng: np.random.Generator, table: DisplacementTable | None = None):
    """One attempt of the thinned dynamics, applied in place.

    Returns (dt, outcome).  The waiting time is exponential with rate
    theta(n) * particle count in macroscopic units; the outcome is
    "accepted" or one of the rejection causes.  Mainly a readable reference
    for the batch kernel; simulate() is the fast path.
    """
    if cfg.particle_count == 0:
        raise ValueError("no particles: the empty configuration has no events")
    if table is None:
        table = DisplacementTable(model.kernel)
    rate = model.theta_n * cfg.particle_count
    u = rng.random(5)
    dt = -math.log1p(-u[0]) / rate
    outcome, src, dst = _attempt_outcome(cfg, model, table, u[1:])
    if outcome == "accepted":
        ip = cfg.slot_of_site[src]
        cfg.occupancy[src] = 0
        cfg.occupancy[dst] = 1
        cfg.particles[ip] = dst
        cfg.slot_of_site[dst] = ip
        cfg.slot_of_site[src] = -1
    return dt, outcome


_COUNTER_NAMES = [
    "attempts",
    "accepted",
    "rejected_occupied",
    "rejected_offbox",
    "rejected_slow_thinned",
    "rejected_tail",
    "crossing_trials",
    "crossing_accepted",
    "crossing_up",
    "crossing_down",
]


def simulate(
    cfg: Configuration,
    model: ExclusionModel,
    T: float,
    snapshot_times,
    hooks: tuple[HookSpec, ...] = (),
    rng: np.random.Generator | None = None,
    seed_key: tuple | None = None,
    store_occupancy: bool | None = None,
) -> Trajectory:
    """Evolve the configuration to macroscopic time T, exactly event by event.

    `snapshot_times` must be sorted inside [0, T]; T is always recorded as
    the final snapshot.  The input configuration is consumed (evolved in
    place); the trajectory keeps the final state.
    """
    if T < 0:
        raise ValueError("the time horizon must be nonnegative")
    snaps = np.asarray(sorted(set(float(s) for s in snapshot_times) | {0.0, float(T)}))
    if snaps[0] < 0 or snaps[-1] > T:
        raise ValueError("snapshot times must lie within [0, T]")
    if cfg.particle_count == 0 and T > 0:
        raise ValueError("no particles: the empty configuration has no events")
    if rng is None:
        if seed_key is None:
            raise ValueError("pass an rng or a (master_seed, replica) seed key")
        rng = replica_rng(*seed_key)

    box = model.box
    table = DisplacementTable(model.kernel)
    nh = len(hooks)
    hook_w = (
        np.ascontiguousarray(np.stack([h.weights for h in hooks]))
        if nh
        else np.zeros((0, box.site_count))
    )
    if nh and hook_w.shape != (nh, box.site_count):
        raise ValueError("hook weights must be flat arrays over the box sites")
    hook_phi = np.array([h.phi for h in hooks], dtype=np.float64).reshape(nh, 3)
    hook_P = hook_w @ cfg.occupancy.astype(np.float64) if nh else np.zeros(0)
    hook_I1 = np.zeros(nh)
    hook_I2 = np.zeros(nh)

    if store_occupancy is None:
        store_occupancy = box.site_count <= SNAPSHOT_OCC_LIMIT
    S = len(snaps)
    snap_P = np.zeros((S, nh))
    snap_I1 = np.zeros((S, nh))
    snap_I2 = np.zeros((S, nh))
    occ_snaps = np.zeros((S if store_occupancy else 0, box.site_count if store_occupancy else 0), dtype=np.uint8)

    counters = np.zeros(_kernels.N_COUNTERS, dtype=np.int64)
    rate = model.theta_n * cfg.particle_count
    t_now, isnap, done = 0.0, 0, False
    if T == 0:
        # only the t = 0 snapshot: record directly
        snap_P[0] = hook_P
        if store_occupancy:
            occ_snaps[0] = cfg.occupancy
        done, isnap = True, 1
    while not done:
        variates = rng.random((_BATCH, 5))
        used, t_now, isnap, done = _kernels.run_batch(
            cfg.occupancy,
            cfg.particles,
            cfg.slot_of_site,
            box.d,
            box.side,
            box.radius,
            box.strides,
            model.slow_probability,
            table.threshold,
            table.alias,
            variates,
            rate,
            t_now,
            snaps,
            isnap,
            hook_w,
            hook_P,
            hook_I1,
            hook_I2,
            hook_phi,
            snap_P,
            snap_I1,
            snap_I2,
            occ_snaps,
            store_occupancy,
            counters,
        )

    return Trajectory(
        model=model,
        times=snaps,
        hook_names=[h.name for h in hooks],
        hook_phi=hook_phi,
        snap_P=snap_P,
        snap_I1=snap_I1,
        snap_I2=snap_I2,
        occupancies=occ_snaps if store_occupancy else None,
        counters={name: int(v) for name, v in zip(_COUNTER_NAMES, counters)},
        particle_count=cfg.particle_count,
        seed_key=seed_key,
        final=cfg,
    )
