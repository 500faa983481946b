"""Compiled inner loops for the event-driven simulation.

The batch kernel consumes pre-drawn random variates (one row of five
uniforms per attempt), so the random stream layout is owned entirely by the
Python driver and the compiled code stays deterministic and replayable.
Tests exercise the event logic by feeding hand-built variate arrays.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


# counter slots
ATTEMPTS = 0
ACCEPTED = 1
REJ_OCCUPIED = 2
REJ_OFFBOX = 3
REJ_THIN = 4
REJ_TAIL = 5
CROSS_TRIALS = 6
CROSS_ACCEPTED = 7
CROSS_UP = 8  # accepted crossings with increasing last coordinate
CROSS_DOWN = 9
N_COUNTERS = 10


@njit(cache=True)
def _poly(c0, c1, c2, t):
    return c0 + t * (c1 + t * c2)


@njit(cache=True)
def _poly_prim(c0, c1, c2, t):
    # antiderivative of c0 + c1 t + c2 t^2
    return t * (c0 + t * (c1 / 2.0 + t * c2 / 3.0))


@njit(cache=True)
def run_batch(
    occ,
    particles,
    slot_of_site,
    d,
    side,
    radius,
    strides,
    thin_slow,
    alias_thresh,
    alias_idx,
    variates,
    rate,
    t_now,
    snap_times,
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
    store_occ,
    counters,
):
    """Process one batch of attempts; returns (events_used, t_now, isnap, done).

    State arrays (occupancy, particle list, reverse index, hook accumulators,
    counters, snapshot outputs) are mutated in place.  Each attempt consumes
    exactly one row of `variates`: (u_exp, u_particle, u_dirsign, u_magnitude,
    u_thinning), whatever the outcome.
    """
    n_batch = variates.shape[0]
    n_hooks = hook_w.shape[0]
    n_snaps = snap_times.shape[0]
    n_outcomes = alias_thresh.shape[0]
    kcount = particles.shape[0]
    last = d - 1

    for ev in range(n_batch):
        dt = -np.log1p(-variates[ev, 0]) / rate
        t_next = t_now + dt

        # settle snapshots that fall inside (t_now, t_next]
        while isnap < n_snaps and snap_times[isnap] <= t_next:
            ts = snap_times[isnap]
            for h in range(n_hooks):
                a, b, c = hook_phi[h, 0], hook_phi[h, 1], hook_phi[h, 2]
                hook_I1[h] += hook_P[h] * (_poly(a, b, c, ts) - _poly(a, b, c, t_now))
                hook_I2[h] += hook_P[h] * (_poly_prim(a, b, c, ts) - _poly_prim(a, b, c, t_now))
                snap_P[isnap, h] = hook_P[h]
                snap_I1[isnap, h] = hook_I1[h]
                snap_I2[isnap, h] = hook_I2[h]
            if store_occ:
                for i in range(occ.shape[0]):
                    occ_snaps[isnap, i] = occ[i]
            t_now = ts
            isnap += 1
        if isnap >= n_snaps:
            return ev, t_now, isnap, True

        # advance the exact integrals to the event time with the old state
        for h in range(n_hooks):
            a, b, c = hook_phi[h, 0], hook_phi[h, 1], hook_phi[h, 2]
            hook_I1[h] += hook_P[h] * (_poly(a, b, c, t_next) - _poly(a, b, c, t_now))
            hook_I2[h] += hook_P[h] * (_poly_prim(a, b, c, t_next) - _poly_prim(a, b, c, t_now))
        t_now = t_next

        counters[ATTEMPTS] += 1

        # magnitude (outcome 0 = analytic tail beyond r_max)
        v = variates[ev, 3] * n_outcomes
        k = int(v)
        if k >= n_outcomes:
            k = n_outcomes - 1
        if v - k >= alias_thresh[k]:
            k = alias_idx[k]
        if k == 0:
            counters[REJ_TAIL] += 1
            continue
        r = k

        # particle and direction
        ip = int(variates[ev, 1] * kcount)
        if ip >= kcount:
            ip = kcount - 1
        src = particles[ip]
        ds = int(variates[ev, 2] * 2 * d)
        if ds >= 2 * d:
            ds = 2 * d - 1
        axis = ds >> 1
        sign = 1 if (ds & 1) == 1 else -1

        cj = (src // strides[axis]) % side - radius
        cj2 = cj + sign * r
        if cj2 < -radius or cj2 >= radius:
            counters[REJ_OFFBOX] += 1
            continue
        target = src + sign * r * strides[axis]
        if occ[target] == 1:
            counters[REJ_OCCUPIED] += 1
            continue

        crossing = axis == last and ((cj < 0) != (cj2 < 0))
        if crossing:
            counters[CROSS_TRIALS] += 1
            if variates[ev, 4] >= thin_slow:
                counters[REJ_THIN] += 1
                continue
            counters[CROSS_ACCEPTED] += 1
            if cj2 > cj:
                counters[CROSS_UP] += 1
            else:
                counters[CROSS_DOWN] += 1

        counters[ACCEPTED] += 1
        occ[src] = 0
        occ[target] = 1
        particles[ip] = target
        slot_of_site[target] = ip
        slot_of_site[src] = -1
        for h in range(n_hooks):
            hook_P[h] += hook_w[h, target] - hook_w[h, src]

    return n_batch, t_now, isnap, False


