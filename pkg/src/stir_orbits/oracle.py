"""Exact computations on tiny graphs.

The stirring process on an m-vertex graph is a continuous-time Markov chain
on the m! permutations.  Because every weighted pair rings at a rate that
does not depend on the current permutation, the chain is uniformizable with
a constant total rate, and each segment's transition operator is a Poisson
mixture of powers of one doubly-stochastic step matrix.  All exponentials
here are computed that way (tail cut at 1e-14), never by series expansion.

Permutations are indexed by their lexicographic rank (equivalently the
Lehmer code), making state indexing deterministic.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .graphs import FiniteGraph
from .schedule import Schedule

MAX_PERM_STATES = 5040  # 7!
MAX_ORBIT_VERTICES = 5
MAX_ORBIT_HORIZON = 20
UNIFORMIZATION_TAIL = 1e-14


class OracleSizeError(ValueError):
    """Requested exact computation exceeds the documented size caps."""


def all_permutations(m: int) -> list[tuple[int, ...]]:
    """All permutations of 0..m-1 in lexicographic (Lehmer) order."""
    return list(itertools.permutations(range(m)))


def lehmer_rank(perm: tuple[int, ...]) -> int:
    m = len(perm)
    rank = 0
    for i in range(m):
        smaller = sum(1 for j in range(i + 1, m) if perm[j] < perm[i])
        rank = rank * (m - i) + smaller
    return rank


def lehmer_unrank(rank: int, m: int) -> tuple[int, ...]:
    digits = []
    for base in range(1, m + 1):
        digits.append(rank % base)
        rank //= base
    digits.reverse()
    pool = list(range(m))
    return tuple(pool.pop(d) for d in digits)


@dataclass
class PermutationDistribution:
    """Probability vector over all m! permutations, Lehmer-indexed."""

    m: int
    probs: np.ndarray
    time: float

    def prob_of(self, perm) -> float:
        return float(self.probs[lehmer_rank(tuple(perm))])

    def single_particle_marginal(self) -> np.ndarray:
        """P(tau_t(x) = y) as an m x m matrix."""
        perms = all_permutations(self.m)
        out = np.zeros((self.m, self.m))
        for idx, perm in enumerate(perms):
            p = self.probs[idx]
            if p:
                for x in range(self.m):
                    out[x, perm[x]] += p
        return out


def _segment_edge_rates(graph: FiniteGraph, segment) -> list[tuple[int, int, float]]:
    out = []
    for u, v in graph.edges:
        w = segment.kernel.weight(u, v)
        if w > 0:
            out.append((u, v, segment.rate * w))
    return out


def _poisson_weights(mean: float) -> list[float]:
    """Poisson pmf values until the remaining tail is below the cutoff."""
    if mean <= 0:
        return [1.0]
    weights = []
    term = math.exp(-mean)
    k = 0
    cumulative = 0.0
    while cumulative < 1.0 - UNIFORMIZATION_TAIL:
        if term > 0:
            weights.append(term)
            cumulative += term
        else:  # underflow guard for large means
            weights.append(0.0)
        k += 1
        term *= mean / k
        if k > 60 + 10 * mean:
            break
    return weights


def _apply_segment(graph: FiniteGraph, segment, duration: float, probs: np.ndarray) -> np.ndarray:
    """Advance a permutation distribution through one constant-rate stretch."""
    rates = _segment_edge_rates(graph, segment)
    total = sum(r for _, _, r in rates)
    if total <= 0 or duration <= 0:
        return probs
    m = graph.n
    perms = all_permutations(m)
    index = {p: i for i, p in enumerate(perms)}
    # For each ringing pair, the map pi -> T_uv o pi permutes the state space.
    maps = []
    for u, v, r in rates:
        arr = np.empty(len(perms), dtype=np.int64)
        for i, perm in enumerate(perms):
            swapped = tuple(v if a == u else u if a == v else a for a in perm)
            arr[i] = index[swapped]
        maps.append((arr, r / total))
    weights = _poisson_weights(total * duration)
    result = weights[0] * probs
    current = probs
    for w in weights[1:]:
        nxt = np.zeros_like(current)
        for arr, q in maps:
            np.add.at(nxt, arr, q * current)
        current = nxt
        result = result + w * current
    return result


def exact_unit_distribution(
    graph: FiniteGraph, schedule: Schedule, t: float = 1.0
) -> PermutationDistribution:
    """Exact law of tau_t on the m! permutation space."""
    m = graph.n
    if math.factorial(m) > MAX_PERM_STATES:
        raise OracleSizeError(
            f"permutation space {m}! exceeds cap {MAX_PERM_STATES}"
        )
    probs = np.zeros(math.factorial(m))
    probs[lehmer_rank(tuple(range(m)))] = 1.0
    remaining = t
    while remaining > 1e-15:
        for seg in schedule.segments:
            dur = min(float(seg.duration), remaining)
            probs = _apply_segment(graph, seg, dur, probs)
            remaining -= dur
            if remaining <= 1e-15:
                break
    total = probs.sum()
    if abs(total - 1.0) > 1e-12:
        raise ArithmeticError(f"distribution mass drifted to {total}")
    return PermutationDistribution(m=m, probs=probs, time=t)


def single_particle_kernel(graph: FiniteGraph, schedule: Schedule, t: float = 1.0) -> np.ndarray:
    """Exact m x m trace-walk kernel: product of segment exponentials.

    Uses the same uniformization as the permutation-space computation, on
    the single-particle generator (off-diagonal w(x,y), diagonal -w(x)).
    """
    m = graph.n
    mat = np.eye(m)
    remaining = t
    while remaining > 1e-15:
        for seg in schedule.segments:
            dur = min(float(seg.duration), remaining)
            mat = mat @ _single_particle_segment(graph, seg, dur)
            remaining -= dur
            if remaining <= 1e-15:
                break
    return mat


def _single_particle_segment(graph: FiniteGraph, segment, duration: float) -> np.ndarray:
    m = graph.n
    rates = np.zeros((m, m))
    for u, v, r in _segment_edge_rates(graph, segment):
        rates[u, v] += r
        rates[v, u] += r
    site = rates.sum(axis=1)
    total = site.max()
    if total <= 0 or duration <= 0:
        return np.eye(m)
    step = rates / total
    np.fill_diagonal(step, 1.0 - site / total)
    weights = _poisson_weights(total * duration)
    out = weights[0] * np.eye(m)
    power = np.eye(m)
    for w in weights[1:]:
        power = power @ step
        out += w * power
    return out


def exact_orbit_pgf(
    graph: FiniteGraph, schedule: Schedule, n: int, p: float
) -> float:
    """E[(1-p)^|O_n|] computed by dynamic programming, exactly.

    State = (permutation tau_k, orbit subset so far); the unit increment
    distribution is the exact tau_1 law, and tau_k = s_k o tau_{k-1} adds
    tau_k^{-1}(origin) to the orbit.
    """
    m = graph.n
    if m > MAX_ORBIT_VERTICES:
        raise OracleSizeError(f"orbit DP capped at {MAX_ORBIT_VERTICES} vertices")
    if n > MAX_ORBIT_HORIZON:
        raise OracleSizeError(f"orbit DP capped at horizon {MAX_ORBIT_HORIZON}")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if n < 0:
        raise ValueError("n must be >= 0")
    if p == 0.0:
        return 1.0  # every orbit weight is 1; skip the tail-truncated DP
    origin = graph.origin
    unit = exact_unit_distribution(graph, schedule)
    perms = all_permutations(m)
    nperm = len(perms)
    nmask = 1 << m
    # dist[tau_idx, mask]; origin always in the orbit mask
    dist = np.zeros((nperm, nmask))
    id_idx = lehmer_rank(tuple(range(m)))
    dist[id_idx, 1 << origin] = 1.0
    increments = [
        (idx, q) for idx, q in enumerate(unit.probs) if q > 0.0
    ]
    index = {perm: i for i, perm in enumerate(perms)}
    # Precompose: for increment s, tau' = s o tau and the newly added orbit
    # site is tau'^{-1}(origin).
    comp_tables = []
    for s_idx, q in increments:
        s = perms[s_idx]
        tau_map = np.empty(nperm, dtype=np.int64)
        site_added = np.empty(nperm, dtype=np.int64)
        for t_idx, tau in enumerate(perms):
            composed = tuple(s[tau[x]] for x in range(m))
            tau_map[t_idx] = index[composed]
            site_added[t_idx] = composed.index(origin)
        comp_tables.append((q, tau_map, site_added))
    for _ in range(n):
        nxt = np.zeros_like(dist)
        for q, tau_map, site_added in comp_tables:
            for t_idx in range(nperm):
                row = dist[t_idx]
                if not row.any():
                    continue
                new_t = tau_map[t_idx]
                bit = 1 << site_added[t_idx]
                for mask in range(nmask):
                    val = row[mask]
                    if val:
                        nxt[new_t, mask | bit] += q * val
        dist = nxt
    sizes = np.array([bin(mask).count("1") for mask in range(nmask)])
    weights = (1.0 - p) ** sizes if p < 1.0 else (sizes == 0).astype(float)
    return float((dist.sum(axis=0) * weights).sum())


def definitional_inverted_orbit(graph: FiniteGraph, schedule: Schedule, n: int, store) -> frozenset:
    """O_n computed from full forward permutations; the brute-force oracle."""
    from .stirring import forward_stirring

    origin = graph.origin
    sites = set()
    for k in range(n + 1):
        pos = forward_stirring(graph, schedule, float(k), store=store)
        inverse = [0] * graph.n
        for x, y in enumerate(pos):
            inverse[y] = x
        sites.add(inverse[origin])
    return frozenset(sites)


def verify_liggett(
    graph: FiniteGraph,
    schedule: Schedule,
    particles: list[int],
    target: set[int],
    t: float = 1.0,
) -> tuple[float, float]:
    """Exact (lhs, rhs) of the stirred-vs-independent comparison.

    lhs = P(tau_t(x_i) in A for all i) under stirring; rhs = product of the
    same probabilities for independent single-particle walks.  For distinct
    particles and indicator products the stirred side never exceeds the
    independent side (a positive-semidefinite FKG-type inequality).
    """
    if len(set(particles)) != len(particles):
        raise ValueError("particles must be distinct")
    if not particles:
        raise ValueError("need at least one particle")
    m = graph.n
    if math.factorial(m) > MAX_PERM_STATES:
        raise OracleSizeError(f"permutation space {m}! exceeds cap {MAX_PERM_STATES}")
    dist = exact_unit_distribution(graph, schedule, t)
    perms = all_permutations(m)
    target = set(target)
    lhs = 0.0
    for idx, perm in enumerate(perms):
        q = dist.probs[idx]
        if q and all(perm[x] in target for x in particles):
            lhs += q
    unit = single_particle_kernel(graph, schedule, t)
    rhs = 1.0
    for x in particles:
        rhs *= sum(unit[x, y] for y in target)
    return lhs, float(rhs)
