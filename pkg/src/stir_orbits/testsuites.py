"""Self-contained check suites used by the CLI (selftest, oracle-suite).

The selftest sticks to pure-python paths so a cold cache cannot push it
past its time budget; the heavier statistical criteria live in the pytest
acceptance module instead.
"""

from __future__ import annotations

import itertools
import math
import sys
from fractions import Fraction

import numpy as np

from . import rng
from .estimators import Estimate
from .graphs import (
    EdgelessKernel,
    FiniteGraph,
    cube_edge_partition,
    greedy_matching_decomposition,
    long_range_kernel,
    nearest_neighbor_kernel,
    unit_conductance_kernel,
)
from .oracle import (
    all_permutations,
    exact_orbit_pgf,
    exact_unit_distribution,
    lehmer_rank,
    verify_liggett,
)
from .schedule import Schedule, Segment, single_segment
from .stirring import (
    RingStore,
    backward_trace,
    forward_stirring,
    sample_inverted_orbit_continuous,
    sample_inverted_orbit_discrete,
)


def connected_graphs(max_vertices: int):
    """All labeled connected graphs with 2..max_vertices vertices."""
    for m in range(2, max_vertices + 1):
        pairs = list(itertools.combinations(range(m), 2))
        for bits in range(1, 1 << len(pairs)):
            edges = [pairs[i] for i in range(len(pairs)) if bits >> i & 1]
            try:
                yield FiniteGraph(m, edges)
            except ValueError:
                continue


def random_two_segment_schedule(graph: FiniteGraph, stream: rng.Stream) -> Schedule:
    """Two segments with random conductances, rates, and rational durations."""
    def random_kernel():
        weights = {e: 0.2 + 0.8 * stream.next_unit() for e in graph.edges}
        from .graphs import FiniteKernel

        return FiniteKernel(graph, weights)

    cut = 1 + stream.randint(14)  # duration split k/16, k in 1..14
    d1 = Fraction(cut, 16)
    return Schedule(
        [
            Segment(random_kernel(), 0.3 + 1.7 * stream.next_unit(), d1),
            Segment(random_kernel(), 0.3 + 1.7 * stream.next_unit(), 1 - d1),
        ]
    )


def liggett_sweep(max_vertices: int, n_schedules: int, seed: int):
    """Exhaustive stirred-vs-independent comparison on tiny graphs.

    Returns (worst lhs-rhs defect, number of cases); the inequality asserts
    lhs <= rhs + 1e-10 in every case.
    """
    stream = rng.Stream(rng.derive_key(seed, 0x11663377))
    worst = -math.inf
    cases = 0
    for graph in connected_graphs(max_vertices):
        m = graph.n
        schedules = [
            random_two_segment_schedule(graph, stream) for _ in range(n_schedules)
        ]
        tuples = [t for r in (2, 3) if r <= m for t in itertools.permutations(range(m), r)]
        subsets = [
            set(s)
            for size in range(1, m + 1)
            for s in itertools.combinations(range(m), size)
        ]
        for schedule in schedules:
            dist = exact_unit_distribution(graph, schedule)
            from .oracle import single_particle_kernel

            unit = single_particle_kernel(graph, schedule, 1.0)
            perms = all_permutations(m)
            probs = dist.probs
            for particles in tuples:
                for target in subsets:
                    lhs = sum(
                        probs[i]
                        for i, perm in enumerate(perms)
                        if all(perm[x] in target for x in particles)
                    )
                    rhs = 1.0
                    for x in particles:
                        rhs *= sum(unit[x, y] for y in target)
                    worst = max(worst, lhs - rhs)
                    cases += 1
    return worst, cases


def oracle_mc_smoke(samples: int, seed: int) -> float:
    """Total-variation distance between sampled and exact tau_1 on a 4-cycle."""
    graph = FiniteGraph(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
    from .graphs import FiniteKernel

    kernel = FiniteKernel(graph, {e: 0.5 for e in graph.edges})
    schedule = single_segment(kernel, 1.0)
    exact = exact_unit_distribution(graph, schedule)
    counts = np.zeros(24)
    for i in range(samples):
        pos = forward_stirring(graph, schedule, 1.0, seed=rng.derive_key(seed, i))
        counts[lehmer_rank(tuple(pos))] += 1
    empirical = counts / samples
    return 0.5 * float(np.abs(empirical - exact.probs).sum())


# -- selftest ------------------------------------------------------------------


class _Checker:
    def __init__(self):
        self.failures: list[str] = []

    def check(self, name: str, ok: bool, detail: str = ""):
        if ok:
            print(f"ok   {name}")
        else:
            print(f"FAIL {name} {detail}")
            self.failures.append(name)


def _check_ringstore_consistency(c: _Checker):
    """Regeneratability and query-order independence of revealed rings."""
    kernel = nearest_neighbor_kernel(2)
    schedule = single_segment(kernel, 1.0)
    edges = [
        ((0, 0), (1, 0)),
        ((0, 0), (0, 1)),
        ((1, 0), (1, 1)),
        ((-1, 0), (0, 0)),
    ]
    seed = 20260810
    store_a = RingStore(schedule, seed)
    store_b = RingStore(schedule, seed)
    lists_a = [store_a.reveal(e, 0.0, 3.0) for e in edges]
    lists_b = [store_b.reveal(e, 0.0, 3.0) for e in reversed(edges)]
    lists_b.reverse()
    ok = lists_a == lists_b
    # re-query must be byte-identical to the first answer
    requeried = [store_a.reveal(e, 0.0, 3.0) for e in edges]
    ok = ok and requeried == lists_a
    # piecewise queries agree with the whole-window query
    split = [store_b.reveal(edges[0], 0.0, 1.3) + store_b.reveal(edges[0], 1.3, 3.0)]
    ok = ok and split[0] == lists_a[0]
    c.check("ringstore-consistency", ok)


def selftest() -> int:
    c = _Checker()
    # kernels
    nn3 = nearest_neighbor_kernel(3)
    c.check("nn-weight", nn3.weight((0, 0, 0), (1, 0, 0)) == 1.0 / 6.0)
    c.check("nn-no-self-loop", nn3.weight((0, 0, 0), (0, 0, 0)) == 0.0)
    nn1 = nearest_neighbor_kernel(1)
    c.check("nn-total-mass", abs(sum(w for _, w in nn1.neighbors((5,))) - 1.0) < 1e-12)
    lr = long_range_kernel(1, 1.0, 2)
    c.check("long-range-normalisation", abs(lr.weight((0,), (1,)) - 0.4) < 1e-12)
    p1, p2 = cube_edge_partition(1)
    c.check(
        "cube-partition-1d",
        p1.weight((0,), (1,)) == 1.0 and p1.weight((1,), (2,)) == 0.0
        and p2.weight((1,), (2,)) == 1.0,
    )
    stream = rng.Stream(7)
    xor_ok = True
    for _ in range(500):
        d = 1 + stream.randint(4)
        x = tuple(stream.randint(41) - 20 for _ in range(d))
        axis = stream.randint(d)
        y = tuple(cc + (1 if i == axis else 0) for i, cc in enumerate(x))
        q1, q2 = cube_edge_partition(d)
        xor_ok = xor_ok and (q1.weight(x, y) > 0) != (q2.weight(x, y) > 0)
    c.check("cube-partition-xor", xor_ok)
    # matching decomposition
    path = FiniteGraph(4, [(0, 1), (1, 2), (2, 3)])
    deco = greedy_matching_decomposition(path)
    c.check(
        "greedy-path",
        deco.classes == [[(0, 1), (2, 3)], [(1, 2)]] and deco.n_classes == 2,
    )
    tri = FiniteGraph(3, [(0, 1), (1, 2), (0, 2)])
    c.check("greedy-triangle", greedy_matching_decomposition(tri).n_classes == 3)
    single = FiniteGraph(2, [(0, 1)])
    c.check("greedy-single-edge", greedy_matching_decomposition(single).n_classes == 1)
    # ring store
    _check_ringstore_consistency(c)
    edgeless = single_segment(EdgelessKernel(nn1.graph), 1.0)
    store = RingStore(edgeless, 3)
    c.check("zero-rate-empty", store.reveal(((0,), (1,)), 0.0, 5.0) == [])
    # forward/backward duality on a small graph
    graph = FiniteGraph(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
    kernel = unit_conductance_kernel(graph)
    schedule = single_segment(kernel, 0.7)
    dual_ok = True
    for i in range(50):
        st = RingStore(schedule, rng.derive_key(99, i))
        pos = forward_stirring(graph, schedule, 2.0, store=st)
        inv = [0] * 4
        for x, y in enumerate(pos):
            inv[y] = x
        for z in range(4):
            if backward_trace(st, z, 2.0) != inv[z]:
                dual_ok = False
    c.check("backward-equals-forward-inverse", dual_ok)
    c.check(
        "identity-at-time-zero",
        forward_stirring(graph, schedule, 0.0, seed=5) == [0, 1, 2, 3],
    )
    # orbits
    orb0 = sample_inverted_orbit_discrete(schedule, 0, seed=11)
    c.check("orbit-n0", orb0.sites == frozenset({0}) and orb0.size == 1)
    econf = single_segment(EdgelessKernel(graph), 1.0)
    c.check(
        "orbit-edgeless", sample_inverted_orbit_discrete(econf, 9, seed=2).size == 1
    )
    incl_ok = True
    for i in range(30):
        st = RingStore(schedule, rng.derive_key(123, i))
        disc = sample_inverted_orbit_discrete(schedule, 3, store=st)
        cont = sample_inverted_orbit_continuous(schedule, 3.0, store=st)
        incl_ok = incl_ok and disc.sites <= cont.sites
    c.check("discrete-in-continuous", incl_ok)
    # exact oracle closed forms
    two = FiniteGraph(2, [(0, 1)])
    kern2 = unit_conductance_kernel(two)
    for rate in (0.5, 2.0):
        dist = exact_unit_distribution(two, single_segment(kern2, rate))
        want = 0.5 * -math.expm1(-2.0 * rate)
        if abs(dist.prob_of((1, 0)) - want) > 1e-12:
            c.check("two-vertex-exact-law", False, f"rate={rate}")
            break
    else:
        c.check("two-vertex-exact-law", True)
    zero = exact_unit_distribution(two, single_segment(kern2, 0.0))
    c.check("zero-rate-point-mass", zero.prob_of((0, 1)) == 1.0)
    c.check(
        "pgf-trivials",
        abs(exact_orbit_pgf(tri, single_segment(unit_conductance_kernel(tri), 1.0), 0, 0.25) - 0.75)
        < 1e-12
        and exact_orbit_pgf(tri, single_segment(unit_conductance_kernel(tri), 1.0), 5, 0.0)
        == 1.0,
    )
    lhs, rhs = verify_liggett(path, single_segment(unit_conductance_kernel(path), 1.0),
                              [0, 1], {0, 1}, 1.0)
    c.check("liggett-example", lhs <= rhs + 1e-10)
    # estimator merge
    vals = [float(i * i % 7) for i in range(25)]
    whole = Estimate.from_values(vals, 0)
    merged = Estimate.from_values(vals[:11], 0).merge(Estimate.from_values(vals[11:], 0))
    c.check(
        "estimate-merge-pooled",
        abs(whole.mean - merged.mean) < 1e-12 and abs(whole.stderr - merged.stderr) < 1e-12,
    )
    # reservoir arithmetic and small run
    from .constructions import ReservoirConfig, reservoir_batch_python

    rc = ReservoirConfig(kernel=nn3, lam=1.0, n=3, big_n=10)
    c.check("reservoir-nhat", abs(rc.n_hat - 3.4) < 1e-12)
    a_empty, sizes, j_int, j_zero = reservoir_batch_python(
        single_segment(nearest_neighbor_kernel(2), 1.0), 2, 16, 400, 17
    )
    zero_bound = 400 * 3 * math.exp(-16.0)
    c.check(
        "reservoir-p-update",
        j_int == 1200 and j_zero <= zero_bound + 3.0 * math.sqrt(zero_bound) + 3.0,
        f"zeros={j_zero}",
    )
    c.check("reservoir-orbit-sizes", bool((sizes >= 1).all() and (sizes <= 3).all()))
    # oracle vs MC smoke
    tv = oracle_mc_smoke(20000, 31)
    c.check("oracle-mc-smoke", tv < 0.03, f"tv={tv:.4f}")
    # determinism
    one = sample_inverted_orbit_discrete(schedule, 4, seed=77)
    two_ = sample_inverted_orbit_discrete(schedule, 4, seed=77)
    c.check("determinism-repeat", one.sites == two_.sites)
    if c.failures:
        print(f"selftest: FAILED ({', '.join(c.failures)})", file=sys.stderr)
        return 1
    print("selftest: all checks passed")
    return 0
