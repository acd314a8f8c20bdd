"""Graphical representation of the random stirring process.

Each unordered pair {x,y} with positive kernel weight carries a Poisson
clock; a ring transposes the pair's occupants.  The ring field is revealed
lazily: event times for an edge inside one schedule-segment window are a
pure function of (seed, edge, window), so any query can regenerate them and
query order does not matter.

Backward traces evaluate tau_s^{-1}(z) by walking rings in decreasing time
order; with one shared store, traces started at different horizons coalesce
exactly, which is what makes inverted-orbit sampling on the infinite
lattice exact rather than a box truncation.
"""

from __future__ import annotations

import sys
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

from . import rng
from .graphs import FiniteGraph, Kernel
from .schedule import Schedule

# Kernels with neighbor lists wider than this are probed per site (one
# aggregate stream, events attributed proportionally and committed per edge)
# instead of per edge; both give the same joint law, but only the per-edge
# route is independent of query order.
SITE_PROBE_THRESHOLD = 24

MAX_SIMULTANEITY_RETRIES = 8


class SimultaneousRingsError(RuntimeError):
    """Two ring events at exactly equal times touched one site."""


@dataclass
class OrbitSample:
    sites: frozenset
    horizon: float
    seed: int
    continuous: bool = False
    trajectories: list = field(default_factory=list, repr=False)

    @property
    def size(self) -> int:
        return len(self.sites)


def _encode_vertex(x) -> tuple[int, ...]:
    if isinstance(x, tuple):
        return tuple(rng.zigzag(c) for c in x)
    return (rng.zigzag(int(x)),)


class RingStore:
    """Memoized lazy revelation of the Poisson ring field."""

    def __init__(self, schedule: Schedule, seed: int):
        self.schedule = schedule
        self.seed = seed & rng.MASK64
        self._edge_windows: dict = {}  # (edge, period, idx) -> [times]
        self._site_windows: dict = {}  # (site, period, idx) -> ([times], [nbrs])

    # -- edge-level API ----------------------------------------------------

    def reveal(self, edge, t0: float, t1: float) -> list[float]:
        """All ring times of an edge in [t0, t1), revealing as needed."""
        if t0 >= t1:
            return []
        u, v = edge
        out: list[float] = []
        for period, idx, start, end in self.schedule.windows_overlapping(t0, t1):
            evs = self._edge_window(u, v, period, idx, start, end)
            lo = bisect_left(evs, t0)
            hi = bisect_left(evs, t1)
            out.extend(evs[lo:hi])
        return out

    def _edge_window(self, u, v, period: int, idx: int, start: float, end: float):
        a, b = (u, v) if u <= v else (v, u)
        key = (a, b, period, idx)
        cached = self._edge_windows.get(key)
        if cached is not None:
            return cached
        seg = self.schedule.segments[idx]
        rate = seg.rate * seg.kernel.weight(a, b)
        evs = self._generate_edge_events(a, b, period, idx, rate, start, end)
        self._edge_windows[key] = evs
        return evs

    def _generate_edge_events(self, a, b, period, idx, rate, start, end):
        if rate <= 0.0:
            return []
        comps = (
            (rng.TAG_EDGE,)
            + _encode_vertex(a)
            + _encode_vertex(b)
            + (period, idx)
        )
        stream = rng.Stream(rng.derive_key(self.seed, *comps))
        evs: list[float] = []
        t = start
        while True:
            t += stream.next_exp(rate)
            if t >= end:
                break
            evs.append(t)
        return evs

    # -- site-level API ----------------------------------------------------

    def incident_events(self, site, period: int, idx: int):
        """Merged (times, neighbors) of all rings touching a site in one window."""
        key = (site, period, idx)
        cached = self._site_windows.get(key)
        if cached is not None:
            return cached
        seg = self.schedule.segments[idx]
        nbrs = seg.kernel.neighbors(site)
        start, end = self.schedule.segment_bounds(period, idx)
        if len(nbrs) <= SITE_PROBE_THRESHOLD:
            merged = []
            for y, _w in nbrs:
                for t in self._edge_window(site, y, period, idx, start, end):
                    merged.append((t, y))
        else:
            merged = self._site_probe(site, nbrs, period, idx, start, end)
        merged.sort()
        times = [t for t, _ in merged]
        for i in range(1, len(times)):
            if times[i] == times[i - 1]:
                raise SimultaneousRingsError(
                    f"simultaneous rings at t={times[i]} touching {site}"
                )
        result = (times, [y for _, y in merged])
        self._site_windows[key] = result
        return result

    def _site_probe(self, site, nbrs, period, idx, start, end):
        """Aggregate sampling for wide kernels, committed per edge."""
        seg = self.schedule.segments[idx]
        merged: list[tuple[float, object]] = []
        fresh: list[tuple[object, float]] = []
        for y, w in nbrs:
            a, b = (site, y) if site <= y else (y, site)
            evs = self._edge_windows.get((a, b, period, idx))
            if evs is None:
                fresh.append((y, w))
            else:
                merged.extend((t, y) for t in evs)
        if fresh:
            total_w = sum(w for _, w in fresh)
            rate = seg.rate * total_w
            comps = (rng.TAG_SITE,) + _encode_vertex(site) + (period, idx)
            stream = rng.Stream(rng.derive_key(self.seed, *comps))
            attributed: dict = {y: [] for y, _ in fresh}
            t = start
            while True:
                t += stream.next_exp(rate)
                if t >= end:
                    break
                target = stream.next_unit() * total_w
                acc = 0.0
                pick = fresh[-1][0]
                for y, w in fresh:
                    acc += w
                    if target < acc:
                        pick = y
                        break
                attributed[pick].append(t)
                merged.append((t, pick))
            for y, _w in fresh:
                a, b = (site, y) if site <= y else (y, site)
                self._edge_windows[(a, b, period, idx)] = attributed[y]
        return merged


# -- traces ------------------------------------------------------------------


def backward_trace(store: RingStore, start, from_time: float):
    """Time-0 position of the particle occupying `start` at `from_time`.

    Rings strictly before from_time are followed in decreasing time order,
    so this evaluates tau_{from_time}^{-1}(start).
    """
    x = start
    t = float(from_time)
    while t > 0.0:
        period, idx, w_start, _w_end = store.schedule.window_at(t, backward=True)
        while True:
            times, nbrs = store.incident_events(x, period, idx)
            j = bisect_left(times, t) - 1
            if j < 0:
                break
            x = nbrs[j]
            t = times[j]
        t = w_start
    return x


def forward_trace(store: RingStore, start, t0: float, t1: float):
    """Position at t1 of the particle at `start` at time t0 (rings in (t0, t1])."""
    x = start
    t = float(t0)
    while t < t1:
        period, idx, _w_start, w_end = store.schedule.window_at(t)
        while True:
            times, nbrs = store.incident_events(x, period, idx)
            j = bisect_right(times, t)
            if j >= len(times) or times[j] > t1:
                break
            x = nbrs[j]
            t = times[j]
        t = w_end
    return x


def forward_stirring(graph: FiniteGraph, schedule: Schedule, t: float, seed=None, store=None):
    """Full permutation tau_t on a finite graph.

    Returns pos with pos[x] = tau_t(x).  Raises SimultaneousRingsError on
    exactly equal ring times (probability zero; callers resample).
    """
    if store is None:
        store = RingStore(schedule, seed)
    events: list[tuple[float, int, int]] = []
    for u, v in graph.edges:
        for s in store.reveal((u, v), 0.0, t):
            events.append((s, u, v))
    events.sort()
    for i in range(1, len(events)):
        if events[i][0] == events[i - 1][0]:
            raise SimultaneousRingsError(f"simultaneous rings at t={events[i][0]}")
    pos = list(range(graph.n))
    occ = list(range(graph.n))
    for _s, u, v in events:
        a, b = occ[u], occ[v]
        occ[u], occ[v] = b, a
        pos[a], pos[b] = v, u
    return pos


# -- orbit samplers -----------------------------------------------------------


def _trace_to_period_start(store, x, period):
    """Backward walk across the windows of one period, from its end to its start."""
    t = float(period + 1)
    nseg = len(store.schedule.segments)
    for idx in range(nseg - 1, -1, -1):
        w_start, _ = store.schedule.segment_bounds(period, idx)
        while True:
            times, nbrs = store.incident_events(x, period, idx)
            j = bisect_left(times, t) - 1
            if j < 0:
                break
            x = nbrs[j]
            t = times[j]
        t = w_start
    return x


def _endpoint_at_zero(store, x, p, memo):
    """Time-0 endpoint of the particle at site x at integer time p, memoized.

    Traces starting at different horizons coalesce: once two of them share a
    (site, integer time) pair they follow identical rings, so the memo is a
    pure lookup of that shared suffix.
    """
    pending = []
    while p > 0:
        hit = memo.get((x, p))
        if hit is not None:
            x = hit
            break
        pending.append((x, p))
        x = _trace_to_period_start(store, x, p - 1)
        p -= 1
    for sx, sp in pending:
        memo[(sx, sp)] = x
    return x


def sample_inverted_orbit_discrete(
    schedule: Schedule,
    n: int,
    seed=None,
    root=None,
    store=None,
    record_trajectories: bool = False,
) -> OrbitSample:
    """Inverted orbit at integer horizons 0..n with one shared ring store."""
    if n < 0:
        raise ValueError("horizon must be >= 0")
    if store is None:
        store = RingStore(schedule, seed)
    if root is None:
        root = schedule.segments[0].kernel.graph.origin
    sites = {root}
    trajectories = []
    memo: dict = {}
    for k in range(1, n + 1):
        if record_trajectories:
            x, path = _traced_backward(store, root, float(k))
            trajectories.append(path)
        else:
            x = _endpoint_at_zero(store, root, k, memo)
        sites.add(x)
    return OrbitSample(
        sites=frozenset(sites),
        horizon=float(n),
        seed=store.seed,
        continuous=False,
        trajectories=trajectories,
    )


def _traced_backward(store, start, from_time):
    """backward_trace that records every (time, site) visited."""
    x = start
    t = float(from_time)
    path = [(t, x)]
    while t > 0.0:
        period, idx, w_start, _ = store.schedule.window_at(t, backward=True)
        while True:
            times, nbrs = store.incident_events(x, period, idx)
            j = bisect_left(times, t) - 1
            if j < 0:
                break
            x = nbrs[j]
            t = times[j]
            path.append((t, x))
        t = w_start
    path.append((0.0, x))
    return x, path


def sample_inverted_orbit_continuous(
    schedule: Schedule, t: float, seed=None, root=None, store=None
) -> OrbitSample:
    """Inverted orbit over continuous time [0, t].

    tau_s^{-1}(root) changes only at rings touching root (the occupant of the
    root site changes exactly at such rings), so the orbit is root plus one
    backward trace per root-incident ring at time s <= t, started at the ring
    partner just before s.
    """
    if t < 0:
        raise ValueError("horizon must be >= 0")
    if store is None:
        store = RingStore(schedule, seed)
    if root is None:
        root = schedule.segments[0].kernel.graph.origin
    sites = {root}
    for period, idx, _start, _end in schedule.windows_overlapping(0.0, t + 1.0):
        times, nbrs = store.incident_events(root, period, idx)
        for s, y in zip(times, nbrs):
            if s <= t:
                sites.add(backward_trace(store, y, s))
    return OrbitSample(
        sites=frozenset(sites), horizon=float(t), seed=store.seed, continuous=True
    )


def resample_on_collision(fn, seed, *args, **kwargs):
    """Run fn(seed, ...) retrying with derived seeds on simultaneous rings."""
    attempt = 0
    while True:
        try:
            return fn(rng.derive_key(seed, rng.TAG_RETRY, attempt) if attempt else seed,
                      *args, **kwargs)
        except SimultaneousRingsError as exc:
            attempt += 1
            print(
                f"stir-orbits: resampling seed={seed:#x} attempt={attempt} "
                f"reason=simultaneous-rings detail={exc}",
                file=sys.stderr,
            )
            if attempt > MAX_SIMULTANEITY_RETRIES:
                raise
