"""Compiled per-lane update loops.

These mirror the scalar operations in `traffic` (same formulas, same
evaluation order) so one simulation step costs microseconds instead of
milliseconds; tests assert bit-equality against the pure-Python versions.
Falls back to interpreted execution when numba is unavailable.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(func):
            return func

        return deco


BAR_GREEN = 0
BAR_YELLOW = 1
BAR_STOP = 2


@njit(cache=True)
def advance_lane(
    pos,
    vel,
    queued,
    n,
    dt,
    v0,
    a,
    b,
    T,
    s0,
    bar_code,
    wall_active,
    wall_pos,
    wall_crawl,
    q_enter,
    q_leave,
    q_slack,
    q_anchor,
):
    """Advance one lane by dt and refresh its queue-counter state.

    Arrays are ordered front (index 0, nearest the stop point) to back.
    Accelerations come from start-of-step states; the jam spacing acts as an
    impenetrable shell (no gap may drop below s0 within a step), so a stopping
    head parks exactly at the stop point and standing queues pack at exactly
    one footprint per vehicle.  `wall_active` marks a standing obstruction at
    `wall_pos` (spillback from a full turn bay): traffic still upstream of it
    filters past at no more than `wall_crawl`, which meters the lane's flow
    through the blockage.  Returns the anchored queue extent in feet.
    """
    sq2ab = 2.0 * math.sqrt(a * b)
    prev_old_p = 0.0
    prev_old_v = 0.0
    prev_new_p = -1.0e18

    for i in range(n):
        p = pos[i]
        v = vel[i]
        free = (v / v0) ** 4
        acc = a * (1.0 - free)
        max_adv = 1.0e18

        if i > 0:
            gap = p - prev_old_p
            adv = gap - s0
            if adv < max_adv:
                max_adv = adv
            if gap <= 0.05:
                acc = -1.0e12
            else:
                dyn = v * T + v * (v - prev_old_v) / sq2ab
                if dyn < 0.0:
                    dyn = 0.0
                term = (s0 + dyn) / gap
                one = a * (1.0 - free - term * term)
                if one < acc:
                    acc = one

        if p >= 0.0 and bar_code != BAR_GREEN:
            active = bar_code == BAR_STOP
            if bar_code == BAR_YELLOW:
                active = v * v <= 2.0 * b * p
            if active:
                if p < max_adv:
                    max_adv = p
                gap = p + s0
                dyn = v * T + v * v / sq2ab
                if dyn < 0.0:
                    dyn = 0.0
                term = (s0 + dyn) / gap
                one = a * (1.0 - free - term * term)
                if one < acc:
                    acc = one

        crawl_capped = wall_active and wall_pos <= p <= wall_pos + s0

        new_v = v + acc * dt
        if new_v < 0.0:
            new_v = 0.0
        elif new_v > v0:
            new_v = v0
        if crawl_capped and new_v > wall_crawl:
            new_v = wall_crawl
        advance = new_v * dt
        if advance > max_adv:
            advance = max_adv if max_adv > 0.0 else 0.0
            new_v = advance / dt
        new_p = p - advance
        if i > 0 and new_p < prev_new_p:
            new_p = prev_new_p
            new_v = (p - new_p) / dt
            if new_v < 0.0:
                new_v = 0.0

        prev_old_p = p
        prev_old_v = v
        prev_new_p = new_p
        pos[i] = new_p
        vel[i] = new_v

    # queue counter: join needs low speed and contiguity with the chain from
    # the anchor; membership then persists until the leave speed is exceeded
    qlen = 0.0
    chain_alive = True
    for i in range(n):
        v = vel[i]
        if queued[i]:
            if v > q_leave:
                queued[i] = False
        elif chain_alive and v < q_enter and pos[i] >= q_anchor:
            front_gap = pos[i] - q_anchor if i == 0 else pos[i] - pos[i - 1]
            if front_gap <= q_slack:
                queued[i] = True
        if queued[i]:
            ext = pos[i] + s0 - q_anchor
            if ext > qlen:
                qlen = ext
        else:
            chain_alive = False
    return qlen


@njit(cache=True)
def min_conflict_eta(pos, vel, mov, n, mov_code, min_speed):
    """Smallest projected arrival time (s) of moving vehicles of one movement."""
    best = 1.0e12
    for i in range(n):
        if mov[i] == mov_code and vel[i] > min_speed and pos[i] >= 0.0:
            eta = pos[i] / vel[i]
            if eta < best:
                best = eta
    return best


@njit(cache=True)
def any_standing_in(pos, vel, n, lo, hi, speed_limit):
    """True when some vehicle stands (speed below limit) with lo <= pos < hi."""
    for i in range(n):
        if lo <= pos[i] < hi and vel[i] < speed_limit:
            return True
    return False


def warmup() -> None:
    """Force JIT compilation with tiny arrays (first call in a fresh process)."""
    pos = np.array([10.0, 40.0], dtype=np.float64)
    vel = np.array([5.0, 5.0], dtype=np.float64)
    queued = np.array([False, False])
    advance_lane(
        pos, vel, queued, 2, 0.1, 50.0, 6.0, 9.0, 1.2, 22.4,
        BAR_STOP, True, 212.24, 2.0, 7.0, 14.0, 32.4, 0.0,
    )
    mov = np.array([1, 1], dtype=np.int8)
    min_conflict_eta(pos, vel, mov, 2, 1, 2.0)
    any_standing_in(pos, vel, 2, 0.0, 212.24, 2.0)
