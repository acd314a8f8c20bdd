"""numba-accelerated samplers for translation-invariant lattice kernels.

The hot acceptance runs (orbit probability generating functions at 1e7
samples, reservoir pairs at 1e6, survival curves over 1e4 steps) cannot be
done at pure-python speed.  This module reimplements the counter-based
stream arithmetic of rng.py and the per-edge ring revelation of stirring.py
in nopython numba; for any (seed, kernel, horizon) the python engine and
this one produce bit-identical orbits, which tests/test_fast.py asserts.

Everything here regenerates ring events from their (seed, edge, window)
keys instead of memoizing them: the counter-based construction makes the
event lists a pure function of the key, so overlapping traces stay
consistent with no shared state.  Sample streams are keyed by the absolute
sample index, so splitting a run into blocks across worker threads cannot
change any output.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numba import njit, uint64

from . import rng
from .graphs import Kernel, Lattice, LongRangeKernel, NearestNeighborKernel
from .schedule import Schedule

U64 = np.uint64
_GAMMA = U64(0x9E3779B97F4A7C15)
_C1 = U64(0xBF58476D1CE4E5B9)
_C2 = U64(0x94D049BB133111EB)
_S30 = U64(30)
_S27 = U64(27)
_S31 = U64(31)
_S11 = U64(11)
_INV53 = 1.0 / float(1 << 53)

_TAG_EDGE = U64(rng.TAG_EDGE)
_TAG_SAMPLE = U64(rng.TAG_SAMPLE)
_TAG_RETRY = U64(rng.TAG_RETRY)
_TAG_SHUFFLE = U64(rng.TAG_SHUFFLE)
_TAG_WALK = U64(rng.TAG_WALK)

BLOCK_SIZE = 8192
_workers = {"count": 1}


def set_workers(count: int) -> None:
    _workers["count"] = max(1, int(count))


def get_workers() -> int:
    return _workers["count"]


def _run_blocks(total: int, fn):
    """fn(start, count) per fixed-size block; results in block order.

    The block partition depends only on the total, so any worker count
    yields identical concatenated results.
    """
    blocks = [(s, min(BLOCK_SIZE, total - s)) for s in range(0, total, BLOCK_SIZE)]
    if not blocks:
        return []
    if _workers["count"] == 1 or len(blocks) == 1:
        return [fn(s, c) for s, c in blocks]
    with ThreadPoolExecutor(max_workers=_workers["count"]) as pool:
        futures = [pool.submit(fn, s, c) for s, c in blocks]
        return [f.result() for f in futures]


@njit(cache=True, inline="always")
def _sm64(z):
    z = (z ^ (z >> _S30)) * _C1
    z = (z ^ (z >> _S27)) * _C2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def _combine(h, v):
    return _sm64(h ^ _sm64(v + _GAMMA))


@njit(cache=True, inline="always")
def _zigzag(c):
    return uint64(c << 1) ^ uint64(c >> 63)


@njit(cache=True, inline="always")
def _next_u64(state):
    state = state + _GAMMA
    return state, _sm64(state)


@njit(cache=True, inline="always")
def _next_unit(state):
    state, out = _next_u64(state)
    return state, float(out >> _S11) * _INV53


@njit(cache=True)
def _poisson(state, lam):
    """Mirror of rng.poisson_draw on a raw stream state."""
    if lam <= 0.0:
        return state, 0
    if lam < 10.0:
        limit = math.exp(-lam)
        state, prod = _next_unit(state)
        k = 0
        while prod > limit:
            state, u = _next_unit(state)
            prod *= u
            k += 1
        return state, k
    b = 0.931 + 2.53 * math.sqrt(lam)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    log_lam = math.log(lam)
    while True:
        state, u = _next_unit(state)
        u -= 0.5
        state, v = _next_unit(state)
        if v == 0.0:
            continue
        us = 0.5 - abs(u)
        k = int(math.floor((2.0 * a / us + b) * u + lam + 0.43))
        if us >= 0.07 and v <= v_r:
            return state, k
        if k < 0 or (us < 0.013 and v > us):
            continue
        if (math.log(v) + math.log(inv_alpha) - math.log(a / (us * us) + b)
                <= k * log_lam - lam - math.lgamma(k + 1.0)):
            return state, k


@njit(cache=True, inline="always")
def _edge_key(seed, x, y, d, period, seg_idx):
    """Key of the (min(x,y), max(x,y), period, seg) stream; x, y coord arrays."""
    x_first = True
    for i in range(d):
        if x[i] < y[i]:
            break
        if x[i] > y[i]:
            x_first = False
            break
    h = _combine(seed, _TAG_EDGE)
    if x_first:
        for i in range(d):
            h = _combine(h, _zigzag(x[i]))
        for i in range(d):
            h = _combine(h, _zigzag(y[i]))
    else:
        for i in range(d):
            h = _combine(h, _zigzag(y[i]))
        for i in range(d):
            h = _combine(h, _zigzag(x[i]))
    h = _combine(h, uint64(period))
    h = _combine(h, uint64(seg_idx))
    return h


@njit(cache=True, inline="always")
def _latest_ring_before(seed, x, y, d, period, rate, t_cut):
    """Largest ring time of edge {x,y} in window [period, period+1) below t_cut."""
    if rate <= 0.0:
        return -1.0
    state = _edge_key(seed, x, y, d, period, 0)
    t = float(period)
    end = float(period + 1)
    best = -1.0
    while True:
        state, u = _next_unit(state)
        t += -math.log1p(-u) / rate
        if t >= end:
            break
        if t < t_cut:
            best = t
        else:
            break
    return best


@njit(cache=True, inline="always")
def _first_ring_after(seed, x, y, d, period, rate, t_cut):
    """Smallest ring time of edge {x,y} in window [period, period+1) above t_cut."""
    if rate <= 0.0:
        return -1.0
    state = _edge_key(seed, x, y, d, period, 0)
    t = float(period)
    end = float(period + 1)
    while True:
        state, u = _next_unit(state)
        t += -math.log1p(-u) / rate
        if t >= end:
            return -1.0
        if t > t_cut:
            return t


@njit(cache=True, nogil=True)
def _trace_window_back(seed, pos, d, disp, rates, period, t_from, y):
    """Backward walk across one window; pos is mutated to the time-`period` site.

    y is caller-owned scratch of length d.  Returns 0 on success, 1 on a
    simultaneous-ring tie (resample needed).
    """
    nk = disp.shape[0]
    t_cut = t_from
    while True:
        best = -1.0
        best_j = -1
        tie = False
        for j in range(nk):
            for i in range(d):
                y[i] = pos[i] + disp[j, i]
            s = _latest_ring_before(seed, pos, y, d, period, rates[j], t_cut)
            if s >= 0.0:
                if s > best:
                    best = s
                    best_j = j
                    tie = False
                elif s == best:
                    tie = True
        if best_j < 0:
            return 0
        if tie:
            return 1
        for i in range(d):
            pos[i] += disp[best_j, i]
        t_cut = best
    return 0


@njit(cache=True, nogil=True)
def _trace_window_fwd(seed, pos, d, disp, rates, period, t_from, t_to, y):
    """Forward walk across one window, rings in (t_from, t_to]; y is scratch."""
    nk = disp.shape[0]
    t_cut = t_from
    while True:
        best = -1.0
        best_j = -1
        tie = False
        for j in range(nk):
            for i in range(d):
                y[i] = pos[i] + disp[j, i]
            s = _first_ring_after(seed, pos, y, d, period, rates[j], t_cut)
            if s >= 0.0 and s <= t_to:
                if best_j < 0 or s < best:
                    best = s
                    best_j = j
                    tie = False
                elif s == best:
                    tie = True
        if best_j < 0:
            return 0
        if tie:
            return 1
        for i in range(d):
            pos[i] += disp[best_j, i]
        t_cut = best
    return 0


@njit(cache=True, nogil=True)
def _orbit_endpoints(seed, n, d, disp, rates, out, pos, y):
    """Backward-trace endpoints for horizons 0..n; returns 0 or 1 (tie).

    Trace k starts where trace k-1 did plus one more period, but positions
    diverge immediately, so each horizon walks its own path; pos and y are
    caller-owned scratch of length d.
    """
    for k in range(n + 1):
        for i in range(d):
            pos[i] = 0
        for period in range(k - 1, -1, -1):
            status = _trace_window_back(seed, pos, d, disp, rates, period, float(period + 1), y)
            if status != 0:
                return 1
        for i in range(d):
            out[k, i] = pos[i]
    return 0


@njit(cache=True, nogil=True)
def _count_distinct(points, count, d):
    total = 0
    for i in range(count):
        fresh = True
        for j in range(i):
            same = True
            for c in range(d):
                if points[i, c] != points[j, c]:
                    same = False
                    break
            if same:
                fresh = False
                break
        if fresh:
            total += 1
    return total


@njit(cache=True, nogil=True)
def _orbit_sizes_batch(run_seed, start, samples, n, d, disp, rates):
    sizes = np.empty(samples, dtype=np.int64)
    endpoints = np.empty((n + 1, d), dtype=np.int64)
    pos = np.empty(d, dtype=np.int64)
    y = np.empty(d, dtype=np.int64)
    for i in range(samples):
        base = _combine(_combine(run_seed, _TAG_SAMPLE), uint64(start + i))
        seed = base
        attempt = 0
        while True:
            status = _orbit_endpoints(seed, n, d, disp, rates, endpoints, pos, y)
            if status == 0:
                break
            attempt += 1
            seed = _combine(_combine(base, _TAG_RETRY), uint64(attempt))
        sizes[i] = _count_distinct(endpoints, n + 1, d)
    return sizes


@njit(cache=True, nogil=True)
def _continuous_orbit_batch(run_seed, start, samples, t, d, disp, rates):
    """Per sample: (|orbit over [0,t]|, |orbit at integers <= t|), shared rings."""
    n_floor = int(math.floor(t))
    cont = np.empty(samples, dtype=np.int64)
    disc = np.empty(samples, dtype=np.int64)
    rate_sum = 0.0
    for j in range(rates.shape[0]):
        rate_sum += rates[j]
    max_pts = n_floor + 2 + int(8.0 * (t + 4.0) * max(rate_sum, 1.0)) + 64
    pts = np.empty((max_pts, d), dtype=np.int64)
    endpoints = np.empty((n_floor + 1, d), dtype=np.int64)
    origin = np.zeros(d, dtype=np.int64)
    y = np.empty(d, dtype=np.int64)
    pos = np.empty(d, dtype=np.int64)
    scratch = np.empty(d, dtype=np.int64)
    for i in range(samples):
        base = _combine(_combine(run_seed, _TAG_SAMPLE), uint64(start + i))
        seed = base
        attempt = 0
        while True:
            ok = True
            npts = 0
            for c in range(d):
                pts[npts, c] = 0
            npts += 1
            for period in range(n_floor + 1):
                for j in range(disp.shape[0]):
                    if rates[j] <= 0.0:
                        continue
                    for c in range(d):
                        y[c] = disp[j, c]
                    state = _edge_key(seed, origin, y, d, period, 0)
                    s = float(period)
                    end = float(period + 1)
                    while True:
                        state, u = _next_unit(state)
                        s += -math.log1p(-u) / rates[j]
                        if s >= end or s > t:
                            break
                        for c in range(d):
                            pos[c] = y[c]
                        t_cut = s
                        for p2 in range(period, -1, -1):
                            status = _trace_window_back(
                                seed, pos, d, disp, rates, p2, t_cut, scratch
                            )
                            if status != 0:
                                ok = False
                                break
                            t_cut = float(p2)
                        if not ok:
                            break
                        if npts < max_pts:
                            for c in range(d):
                                pts[npts, c] = pos[c]
                            npts += 1
                    if not ok:
                        break
                if not ok:
                    break
            if ok:
                status = _orbit_endpoints(seed, n_floor, d, disp, rates, endpoints, pos, scratch)
                ok = status == 0
            if ok:
                break
            attempt += 1
            seed = _combine(_combine(base, _TAG_RETRY), uint64(attempt))
        cont[i] = _count_distinct(pts, npts, d)
        disc[i] = _count_distinct(endpoints, n_floor + 1, d)
    return cont, disc


# -- trace walks ---------------------------------------------------------------


@njit(cache=True, nogil=True)
def _walk_histogram(run_seed, start, samples, n_max, d, disp, cdf, lam):
    """counts[j] = #samples with min(T, n_max+1) == j+1 for transition kernels."""
    counts = np.zeros(n_max + 1, dtype=np.int64)
    pos = np.empty(d, dtype=np.int64)
    nk = disp.shape[0]
    total = cdf[nk - 1]
    for i in range(samples):
        state = _combine(_combine(run_seed, _TAG_WALK), uint64(start + i))
        for c in range(d):
            pos[c] = 0
        t_ret = n_max + 1
        for step in range(1, n_max + 1):
            state, jumps = _poisson(state, lam)
            for _ in range(jumps):
                state, u = _next_unit(state)
                target = u * total
                j = np.searchsorted(cdf, target, side="right")
                if j >= nk:
                    j = nk - 1
                for c in range(d):
                    pos[c] += disp[j, c]
            at_origin = True
            for c in range(d):
                if pos[c] != 0:
                    at_origin = False
                    break
            if at_origin:
                t_ret = step
                break
        counts[t_ret - 1] += 1
    return counts


# -- reservoir -----------------------------------------------------------------


@njit(cache=True, nogil=True)
def _reservoir_batch(run_seed, start, samples, n, big_n, d, disp, rates):
    """Coupled (A empty at n-hat, |O_n|) pairs plus J-interval update stats.

    Timeline: J_0, I_1, J_1, ..., I_n, J_n.  Lattice window of I_k maps to
    ring-store period k-1, so the orbit read off the same seed shares the
    rings exactly.  The reservoir holds big_n/2 - 1 marked particles at
    start; J-shuffles swap the origin occupant with a uniform reservoir
    vertex at aggregate rate big_n^2 over duration 1/big_n.
    """
    n_marked = big_n // 2 - 1
    a_empty = np.zeros(samples, dtype=np.uint8)
    orbit_sizes = np.empty(samples, dtype=np.int64)
    j_intervals = 0
    j_without_update = 0
    res_marked = np.empty(big_n, dtype=np.uint8)
    lattice_pos = np.empty((n + 2, d), dtype=np.int64)
    lattice_active = np.empty(n + 2, dtype=np.uint8)
    endpoints = np.empty((n + 1, d), dtype=np.int64)
    pos_scratch = np.empty(d, dtype=np.int64)
    y_scratch = np.empty(d, dtype=np.int64)
    rate_j = float(big_n) * float(big_n)
    dur_j = 1.0 / float(big_n)
    for i in range(samples):
        base = _combine(_combine(run_seed, _TAG_SAMPLE), uint64(start + i))
        seed = base
        attempt = 0
        while True:
            ok = True
            for r in range(big_n):
                res_marked[r] = 1 if r < n_marked else 0
            for r in range(n + 2):
                lattice_active[r] = 0
            intervals = 0
            zeros = 0
            for k in range(0, n + 1):
                sstate = _combine(_combine(seed, _TAG_SHUFFLE), uint64(k))
                t = 0.0
                events = 0
                origin_slot = -1
                for r in range(n + 2):
                    if lattice_active[r] == 1:
                        at0 = True
                        for c in range(d):
                            if lattice_pos[r, c] != 0:
                                at0 = False
                                break
                        if at0:
                            origin_slot = r
                            break
                while True:
                    sstate, u = _next_unit(sstate)
                    t += -math.log1p(-u) / rate_j
                    if t >= dur_j:
                        break
                    events += 1
                    sstate, u = _next_unit(sstate)
                    site = int(u * big_n)
                    if site >= big_n:
                        site = big_n - 1
                    m_res = res_marked[site]
                    if origin_slot >= 0 and m_res == 0:
                        res_marked[site] = 1
                        lattice_active[origin_slot] = 0
                        origin_slot = -1
                    elif origin_slot < 0 and m_res == 1:
                        res_marked[site] = 0
                        slot = -1
                        for r in range(n + 2):
                            if lattice_active[r] == 0:
                                slot = r
                                break
                        lattice_active[slot] = 1
                        for c in range(d):
                            lattice_pos[slot, c] = 0
                        origin_slot = slot
                intervals += 1
                if events == 0:
                    zeros += 1
                if k == n:
                    break
                for r in range(n + 2):
                    if lattice_active[r] == 1:
                        status = _trace_window_fwd(
                            seed,
                            lattice_pos[r],
                            d,
                            disp,
                            rates,
                            k,
                            float(k),
                            float(k + 1),
                            y_scratch,
                        )
                        if status != 0:
                            ok = False
                            break
                if not ok:
                    break
            if ok:
                status = _orbit_endpoints(seed, n, d, disp, rates, endpoints, pos_scratch, y_scratch)
                ok = status == 0
            if ok:
                break
            attempt += 1
            seed = _combine(_combine(base, _TAG_RETRY), uint64(attempt))
        j_intervals += intervals
        j_without_update += zeros
        marked_on_lattice = 0
        for r in range(n + 2):
            if lattice_active[r] == 1:
                marked_on_lattice += 1
        a_empty[i] = 1 if marked_on_lattice == 0 else 0
        orbit_sizes[i] = _count_distinct(endpoints, n + 1, d)
    return a_empty, orbit_sizes, j_intervals, j_without_update


# -- dispatch helpers ----------------------------------------------------------


def lattice_kernel_arrays(kernel: Kernel):
    """(displacements, weights) for translation-invariant lattice kernels."""
    if isinstance(kernel, NearestNeighborKernel):
        disp = np.array(kernel._disp, dtype=np.int64)
        wts = np.full(len(kernel._disp), kernel._w, dtype=np.float64)
        return disp, wts
    if isinstance(kernel, LongRangeKernel):
        disp = np.array([e for e, _ in kernel._disp], dtype=np.int64)
        wts = np.array([w for _, w in kernel._disp], dtype=np.float64)
        return disp, wts
    return None


def _single_segment_lattice(schedule: Schedule):
    if len(schedule.segments) != 1:
        return None
    seg = schedule.segments[0]
    if not isinstance(seg.kernel.graph, Lattice):
        return None
    arrays = lattice_kernel_arrays(seg.kernel)
    if arrays is None:
        return None
    disp, wts = arrays
    return disp, wts * seg.rate, seg.kernel.graph.d


def orbit_sizes(schedule: Schedule, n: int, samples: int, seed: int) -> np.ndarray:
    """|O_n| over independent ring stores; numba when the schedule allows."""
    fastable = None if rng.fault_active() else _single_segment_lattice(schedule)
    if fastable is not None:
        disp, rates, d = fastable
        key = U64(seed & rng.MASK64)
        parts = _run_blocks(
            samples, lambda s, c: _orbit_sizes_batch(key, s, c, n, d, disp, rates)
        )
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    from .stirring import resample_on_collision, sample_inverted_orbit_discrete

    sizes = np.empty(samples, dtype=np.int64)
    for i in range(samples):
        s = rng.derive_key(seed, rng.TAG_SAMPLE, i)
        sample = resample_on_collision(
            lambda sd: sample_inverted_orbit_discrete(schedule, n, seed=sd), s
        )
        sizes[i] = sample.size
    return sizes


def continuous_orbit_sizes(schedule: Schedule, t: float, samples: int, seed: int):
    """Paired (|orbit over [0,t]|, |orbit at integer times <= t|) arrays."""
    fastable = None if rng.fault_active() else _single_segment_lattice(schedule)
    if fastable is not None:
        disp, rates, d = fastable
        key = U64(seed & rng.MASK64)
        parts = _run_blocks(
            samples,
            lambda s, c: _continuous_orbit_batch(key, s, c, float(t), d, disp, rates),
        )
        cont = np.concatenate([p[0] for p in parts])
        disc = np.concatenate([p[1] for p in parts])
        return cont, disc
    from .stirring import (
        RingStore,
        resample_on_collision,
        sample_inverted_orbit_continuous,
        sample_inverted_orbit_discrete,
    )

    cont = np.empty(samples, dtype=np.int64)
    disc = np.empty(samples, dtype=np.int64)

    def one(sd):
        store = RingStore(schedule, sd)
        c = sample_inverted_orbit_continuous(schedule, t, store=store)
        dsc = sample_inverted_orbit_discrete(schedule, int(math.floor(t)), store=store)
        return c.size, dsc.size

    for i in range(samples):
        s = rng.derive_key(seed, rng.TAG_SAMPLE, i)
        cont[i], disc[i] = resample_on_collision(one, s)
    return cont, disc


def min_return_histogram(cfg, n_max: int, samples: int, seed: int) -> np.ndarray:
    """Histogram of min(T, n_max+1) over independent trace walks."""
    from .walks import TraceWalkConfig, walk_min_return

    assert isinstance(cfg, TraceWalkConfig)
    if cfg.schedule is None and not rng.fault_active():
        kernel = cfg.kernel
        if isinstance(kernel.graph, Lattice) and kernel.kind == "transition":
            arrays = lattice_kernel_arrays(kernel)
            if arrays is not None:
                disp, wts = arrays
                cdf = np.cumsum(wts)
                key = U64(seed & rng.MASK64)
                lam = float(cfg.lam)
                d = kernel.graph.d
                parts = _run_blocks(
                    samples,
                    lambda s, c: _walk_histogram(key, s, c, n_max, d, disp, cdf, lam),
                )
                return np.sum(parts, axis=0)
    counts = np.zeros(n_max + 1, dtype=np.int64)
    for i in range(samples):
        stream = rng.Stream(rng.derive_key(seed, rng.TAG_WALK, i))
        counts[walk_min_return(cfg, n_max, stream) - 1] += 1
    return counts


def reservoir_batch(kernel: Kernel, lam: float, n: int, big_n: int, samples: int, seed: int):
    """Dispatch for the coupled reservoir sampler; see constructions.py."""
    from .constructions import reservoir_batch_python
    from .schedule import single_segment

    schedule = single_segment(kernel, lam)
    fastable = None if rng.fault_active() else _single_segment_lattice(schedule)
    if fastable is not None:
        disp, rates, d = fastable
        key = U64(seed & rng.MASK64)
        parts = _run_blocks(
            samples,
            lambda s, c: _reservoir_batch(key, s, c, n, big_n, d, disp, rates),
        )
        a_empty = np.concatenate([p[0] for p in parts])
        sizes = np.concatenate([p[1] for p in parts])
        j_int = sum(p[2] for p in parts)
        j_zero = sum(p[3] for p in parts)
        return a_empty, sizes, j_int, j_zero
    return reservoir_batch_python(schedule, n, big_n, samples, seed)
