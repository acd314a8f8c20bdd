"""Bounded-range cutoff schedules and the reservoir-coupled process.

Cutoffs confine one unit of stirring to bounded-diameter clusters: on Z^d,
thirds alternate between the two halves of the cube edge partition, so an
increment moves any site through at most three unit cubes (Euclidean range
ceil(3 sqrt(d)), graph-distance range 3d).  On a finite graph the edge set
splits into at most 2h-1 matchings run as a palindrome of 2N equal slices;
a site moves along at most one matching edge per slice, giving range 4h-2,
and the palindrome makes the one-step trace kernel symmetric.

The reservoir construction couples the plain stirring orbit O_n with a
marking process: a complete graph on N extra vertices hangs off the origin,
holding N/2 - 1 marked particles; stirring intervals I_k alternate with
origin shuffles J_k, and whether any mark remains on the lattice at the
final time is compared against E[(1/2)^|O_n|] from the same rings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import fast, rng
from .estimators import Estimate, SIGMA_LEVEL
from .graphs import (
    FiniteGraph,
    Kernel,
    Lattice,
    cube_edge_partition,
    FiniteKernel,
    greedy_matching_decomposition,
)
from .schedule import Schedule, Segment
from .stirring import (
    RingStore,
    forward_stirring,
    forward_trace,
    resample_on_collision,
    sample_inverted_orbit_discrete,
)


@dataclass
class CutoffSchedule:
    schedule: Schedule
    range_bound: int
    metric: str  # "euclidean" | "graph"
    source: str
    extra_bounds: dict = field(default_factory=dict)


def build_zd_cutoff(d: int) -> CutoffSchedule:
    """Thirds schedule p1, p2, p1 over the cube edge partition of Z^d."""
    p1, p2 = cube_edge_partition(d)
    third = Fraction(1, 3)
    schedule = Schedule(
        [Segment(p1, 1.0, third), Segment(p2, 1.0, third), Segment(p1, 1.0, third)]
    )
    return CutoffSchedule(
        schedule=schedule,
        range_bound=math.ceil(3.0 * math.sqrt(d)),
        metric="euclidean",
        source=f"zd-cubes({d})",
        extra_bounds={"graph_distance": 3 * d},
    )


def build_graph_cutoff(
    graph: FiniteGraph, edge_order=None
) -> CutoffSchedule:
    """Palindromic matching schedule on a finite bounded-degree graph."""
    deco = greedy_matching_decomposition(graph, edge_order)
    n_cls = deco.n_classes
    if n_cls == 0:
        raise ValueError("graph has no edges")
    kernels = [
        FiniteKernel(graph, {e: 1.0 for e in cls}) for cls in deco.classes
    ]
    slice_ = Fraction(1, 2 * n_cls)
    segments = [Segment(k, 1.0, slice_) for k in kernels]
    segments += [Segment(k, 1.0, slice_) for k in reversed(kernels)]
    schedule = Schedule(segments)
    h = graph.degree_bound
    return CutoffSchedule(
        schedule=schedule,
        range_bound=4 * h - 2,
        metric="graph",
        source=f"graph-matchings(h={h}, N={n_cls})",
        extra_bounds={"class_count": n_cls},
    )


@dataclass
class CutoffReport:
    samples: int
    max_range: float
    range_bound: int
    metric: str
    range_violations: int
    min_neighbor_count: int
    min_neighbor_pair: tuple
    neighbor_conductance_positive: bool
    kernel_symmetry_defect: float | None
    detail: dict = field(default_factory=dict)


def _lattice_box_graph(d: int, half: int):
    """Finite box [-half, half]^d with its nearest-neighbor edges."""
    import itertools

    sites = list(itertools.product(range(-half, half + 1), repeat=d))
    index = {x: i for i, x in enumerate(sites)}
    edges = []
    for x in sites:
        for i in range(d):
            y = list(x)
            y[i] += 1
            y = tuple(y)
            if y in index:
                edges.append((index[x], index[y]))
    return sites, index, edges


def verify_zd_cutoff(cutoff: CutoffSchedule, d: int, samples: int, seed: int,
                     window: int | None = None) -> CutoffReport:
    """Sample tau_1 increments on a finite box and measure ranges.

    The box must be at least 3r wide; cube components never straddle more
    than their own cube, so sites at distance >= r from the boundary see the
    exact infinite-lattice increment, and ranges are measured there.
    """
    r = cutoff.range_bound
    half = max((window or 3 * r) // 2, r + 2)
    sites, index, edges = _lattice_box_graph(d, half)
    coords = np.array(sites, dtype=np.int64)
    interior = np.array(
        [max(abs(c) for c in x) <= half - r for x in sites], dtype=bool
    )
    edge_u = np.array([u for u, _ in edges], dtype=np.int64)
    edge_v = np.array([v for _, v in edges], dtype=np.int64)
    # per-segment edge rates for the box restriction of the cutoff kernels
    seg_rates = []
    seg_durs = []
    for seg in cutoff.schedule.segments:
        rates = np.array(
            [seg.rate * seg.kernel.weight(sites[u], sites[v]) for u, v in edges]
        )
        seg_rates.append(rates)
        seg_durs.append(float(seg.duration))
    max_range = 0.0
    violations = 0
    pair_counts = np.zeros(len(edges), dtype=np.int64)
    per_third_ok = True
    nv = len(sites)
    for sample_idx in range(samples):
        np_rng = np.random.Generator(
            np.random.Philox(key=rng.derive_key(seed, rng.TAG_SAMPLE, sample_idx))
        )
        pos = np.arange(nv)
        start_of_third = pos.copy()
        for rates, dur in zip(seg_rates, seg_durs):
            counts = np_rng.poisson(rates * dur)
            total = int(counts.sum())
            if total:
                who = np.repeat(np.arange(len(edges)), counts)
                times = np_rng.random(total)
                order = np.argsort(times, kind="stable")
                occ = np.argsort(pos, kind="stable")
                for e_idx in who[order]:
                    u, v = edge_u[e_idx], edge_v[e_idx]
                    a, b = occ[u], occ[v]
                    occ[u], occ[v] = b, a
                    pos[a], pos[b] = v, u
            # within one third, interior motion stays inside one cube
            moved = coords[pos[interior]] - coords[start_of_third[interior]]
            if moved.size and np.abs(moved).max() > 1:
                per_third_ok = False
            start_of_third = pos.copy()
        disp = coords[pos[interior]] - coords[interior.nonzero()[0]]
        ranges = np.sqrt((disp.astype(float) ** 2).sum(axis=1))
        sample_max = float(ranges.max()) if ranges.size else 0.0
        max_range = max(max_range, sample_max)
        if sample_max > r + 1e-9:
            violations += 1
        # neighbor coincidence counts for the empirical conductance
        tau_of_u = pos[edge_u]
        tau_of_v = pos[edge_v]
        pair_counts += ((tau_of_u == edge_v) | (tau_of_v == edge_u)).astype(np.int64)
    interior_edges = interior[edge_u] & interior[edge_v]
    counts_int = pair_counts[interior_edges]
    min_idx = int(np.argmin(counts_int))
    min_count = int(counts_int[min_idx])
    p_hat = min_count / samples
    positive = (
        min_count > 0
        and p_hat - SIGMA_LEVEL * math.sqrt(p_hat * (1 - p_hat) / samples) > 0
    )
    return CutoffReport(
        samples=samples,
        max_range=max_range,
        range_bound=r,
        metric=cutoff.metric,
        range_violations=violations,
        min_neighbor_count=min_count,
        min_neighbor_pair=edges[int(np.nonzero(interior_edges)[0][min_idx])],
        neighbor_conductance_positive=positive,
        kernel_symmetry_defect=None,
        detail={"per_third_confined": per_third_ok, "box_half": half},
    )


def verify_graph_cutoff(cutoff: CutoffSchedule, graph: FiniteGraph,
                        samples: int, seed: int) -> CutoffReport:
    """Sample tau_1 on the graph itself; range measured in graph distance."""
    n = graph.n
    dist = np.zeros((n, n), dtype=np.int64)
    for u in range(n):
        for v in range(n):
            dist[u, v] = graph.graph_distance(u, v)
    max_range = 0
    violations = 0
    pair_counts = {e: 0 for e in graph.edges}
    for i in range(samples):
        s = rng.derive_key(seed, rng.TAG_SAMPLE, i)
        pos = resample_on_collision(
            lambda sd: forward_stirring(graph, cutoff.schedule, 1.0, seed=sd), s
        )
        sample_max = max(dist[x, pos[x]] for x in range(n))
        max_range = max(max_range, sample_max)
        if sample_max > cutoff.range_bound:
            violations += 1
        for u, v in graph.edges:
            if pos[u] == v or pos[v] == u:
                pair_counts[(u, v)] += 1
    min_pair = min(pair_counts, key=pair_counts.get)
    min_count = pair_counts[min_pair]
    p_hat = min_count / samples if samples else 0.0
    positive = bool(
        samples
        and min_count > 0
        and p_hat - SIGMA_LEVEL * math.sqrt(p_hat * (1 - p_hat) / samples) > 0
    )
    symmetry = None
    if math.factorial(n) <= 5040:
        from .oracle import single_particle_kernel

        mat = single_particle_kernel(graph, cutoff.schedule, 1.0)
        symmetry = float(np.abs(mat - mat.T).max())
    return CutoffReport(
        samples=samples,
        max_range=float(max_range),
        range_bound=cutoff.range_bound,
        metric=cutoff.metric,
        range_violations=violations,
        min_neighbor_count=min_count,
        min_neighbor_pair=min_pair,
        neighbor_conductance_positive=positive,
        kernel_symmetry_defect=symmetry,
    )


# -- reservoir ------------------------------------------------------------------


@dataclass
class ReservoirConfig:
    """K_N reservoir attached to the lattice origin.

    big_n is the reservoir size N (even, >= 4); the construction starts with
    N/2 - 1 marked particles inside the reservoir.  The marking is read off
    at n_hat = n (1 + 1/N) + 1/N, the end of the last shuffle interval.
    """

    kernel: Kernel
    lam: float
    n: int
    big_n: int

    def __post_init__(self):
        if self.big_n < 4 or self.big_n % 2 != 0:
            raise ValueError("reservoir size must be even and >= 4")
        if self.big_n // 2 - 1 < 1:
            raise ValueError("need at least one marked particle")
        if self.n < 0:
            raise ValueError("horizon must be >= 0")

    @property
    def n_hat(self) -> float:
        return self.n * (1.0 + 1.0 / self.big_n) + 1.0 / self.big_n

    @property
    def n_marked(self) -> int:
        return self.big_n // 2 - 1


def sample_reservoir(cfg: ReservoirConfig, seed: int) -> tuple[bool, int]:
    """One coupled draw: (marking empty at n_hat, |O_n| from the same rings)."""
    a_empty, sizes, _, _ = fast.reservoir_batch(
        cfg.kernel, cfg.lam, cfg.n, cfg.big_n, 1, seed
    )
    return bool(a_empty[0]), int(sizes[0])


def reservoir_batch_python(schedule: Schedule, n: int, big_n: int,
                           samples: int, seed: int):
    """Pure-python twin of fast._reservoir_batch (same streams, same results)."""
    lam_profile = schedule.segments[0]
    a_empty = np.zeros(samples, dtype=np.uint8)
    orbit_sizes = np.empty(samples, dtype=np.int64)
    j_intervals = 0
    j_without_update = 0
    n_marked = big_n // 2 - 1
    origin = lam_profile.kernel.graph.origin
    rate_j = float(big_n) * float(big_n)
    dur_j = 1.0 / float(big_n)
    for i in range(samples):
        base = rng.derive_key(seed, rng.TAG_SAMPLE, i)
        attempt = 0
        while True:
            store_seed = (
                base if attempt == 0 else rng.derive_key(base, rng.TAG_RETRY, attempt)
            )
            try:
                store = RingStore(schedule, store_seed)
                res_marked = [r < n_marked for r in range(big_n)]
                lattice: list = []  # positions of marked particles on the lattice
                zeros = 0
                intervals = 0
                for k in range(n + 1):
                    sstream = rng.Stream(
                        rng.derive_key(store_seed, rng.TAG_SHUFFLE, k)
                    )
                    t = 0.0
                    events = 0
                    while True:
                        t += sstream.next_exp(rate_j)
                        if t >= dur_j:
                            break
                        events += 1
                        site = sstream.randint(big_n)
                        origin_marked = origin in lattice
                        if origin_marked and not res_marked[site]:
                            res_marked[site] = True
                            lattice.remove(origin)
                        elif not origin_marked and res_marked[site]:
                            res_marked[site] = False
                            lattice.append(origin)
                    intervals += 1
                    if events == 0:
                        zeros += 1
                    if k == n:
                        break
                    lattice = [
                        forward_trace(store, x, float(k), float(k + 1))
                        for x in lattice
                    ]
                    assert len(lattice) + sum(res_marked) == n_marked
                orbit = sample_inverted_orbit_discrete(schedule, n, store=store)
                a_empty[i] = 1 if not lattice else 0
                orbit_sizes[i] = orbit.size
                j_intervals += intervals
                j_without_update += zeros
                break
            except Exception as exc:  # simultaneity: retry with derived seed
                from .stirring import SimultaneousRingsError

                if not isinstance(exc, SimultaneousRingsError):
                    raise
                attempt += 1
                if attempt > 8:
                    raise
    return a_empty, orbit_sizes, j_intervals, j_without_update


@dataclass
class SandwichReport:
    p_empty: Estimate
    pgf: Estimate
    lower_holds: bool
    upper_reference: float | None
    p_update: float
    p_update_expected: float
    j_intervals: int
    j_zero_events: int
    detail: dict = field(default_factory=dict)


def verify_sandwich(cfg: ReservoirConfig, samples: int, seed: int,
                    escape_lower: float | None = None) -> SandwichReport:
    """Paired test of P(A empty at n_hat) >= E[(1/2)^|O_n|] at 3 sigma.

    The upper reference exp(-(n+1)/2 escape) is a large-N limit; it is
    reported for the trend across N, never asserted at finite N.
    """
    if cfg.n > 8:
        raise ValueError("sandwich checks need n <= 8 to stay MC-estimable")
    a_empty, sizes, j_int, j_zero = fast.reservoir_batch(
        cfg.kernel, cfg.lam, cfg.n, cfg.big_n, samples, seed
    )
    p_empty = Estimate.from_values(a_empty.astype(np.float64), seed, {"N": cfg.big_n})
    pgf = Estimate.from_values(0.5 ** sizes.astype(np.float64), seed, {"n": cfg.n})
    sigma = math.hypot(p_empty.stderr, pgf.stderr)
    lower_holds = p_empty.mean >= pgf.mean - SIGMA_LEVEL * sigma
    upper = (
        math.exp(-(cfg.n + 1) / 2.0 * escape_lower)
        if escape_lower is not None
        else None
    )
    p_update = 1.0 - (j_zero / j_int if j_int else 0.0)
    return SandwichReport(
        p_empty=p_empty,
        pgf=pgf,
        lower_holds=lower_holds,
        upper_reference=upper,
        p_update=p_update,
        p_update_expected=-math.expm1(-cfg.big_n),
        j_intervals=j_int,
        j_zero_events=j_zero,
        detail={"n_hat": cfg.n_hat, "paired": True},
    )
