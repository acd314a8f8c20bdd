"""Graphs and symmetric kernels.

Two graph models: finite bounded-degree graphs with explicit adjacency, and
the lattice Z^d presented lazily (sites are d-tuples of signed ints, never
materialised).  Kernels are symmetric edge weights with neighbor enumeration
and inverse-CDF neighbor sampling; "transition" kernels have unit mass at
every site, "conductance" kernels allow any finite nonnegative mass.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

LatticeSite = tuple[int, ...]
COORD_LIMIT = 1 << 62  # signed coordinates beyond this raise, never wrap


class Lattice:
    """The graph Z^d with nearest-neighbor edges, origin at 0."""

    def __init__(self, d: int):
        if d < 1:
            raise ValueError("lattice dimension must be >= 1")
        self.d = d
        self.origin: LatticeSite = (0,) * d

    def graph_distance(self, x: LatticeSite, y: LatticeSite) -> int:
        return sum(abs(a - b) for a, b in zip(x, y))

    def euclidean_distance(self, x: LatticeSite, y: LatticeSite) -> float:
        return math.sqrt(sum((a - b) ** 2 for a, b in zip(x, y)))

    def __repr__(self):
        return f"Lattice(d={self.d})"


class FiniteGraph:
    """Connected finite graph, vertices 0..n-1, origin at vertex 0."""

    def __init__(self, n: int, edges: list[tuple[int, int]]):
        if n < 1:
            raise ValueError("graph needs at least one vertex")
        adj: list[list[int]] = [[] for _ in range(n)]
        seen = set()
        for u, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u},{v}) out of range for {n} vertices")
            if u == v:
                raise ValueError("self-loops are not supported")
            e = (min(u, v), max(u, v))
            if e in seen:
                raise ValueError(f"duplicate edge {e}")
            seen.add(e)
            adj[u].append(v)
            adj[v].append(u)
        self.n = n
        self.edges = sorted(seen)
        self.adj = [sorted(a) for a in adj]
        self.origin = 0
        if n > 1 and not self._connected():
            raise ValueError("graph must be connected")

    def _connected(self) -> bool:
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in self.adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.n

    @property
    def degree_bound(self) -> int:
        return max((len(a) for a in self.adj), default=0)

    def graph_distance(self, u: int, v: int) -> int:
        if u == v:
            return 0
        dist = {u: 0}
        queue = [u]
        for w in queue:
            for z in self.adj[w]:
                if z not in dist:
                    dist[z] = dist[w] + 1
                    if z == v:
                        return dist[z]
                    queue.append(z)
        return -1

    def __repr__(self):
        return f"FiniteGraph(n={self.n}, m={len(self.edges)})"


def load_edge_list(text_or_path) -> FiniteGraph:
    """Parse the plain-text edge-list format.

    First line ``vertices <n>``, then one ``u v`` pair per line (0-based);
    ``#`` starts a comment.  Accepts a path or the raw text itself.
    """
    if isinstance(text_or_path, str) and "\n" not in text_or_path:
        with open(text_or_path, "r", encoding="utf-8") as fh:
            text = fh.read()
    elif hasattr(text_or_path, "read"):
        text = text_or_path.read()
    else:
        text = str(text_or_path)
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    if not lines:
        raise ValueError("empty edge-list file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "vertices":
        raise ValueError("first line must be 'vertices <n>'")
    n = int(head[1])
    edges = []
    for line in lines[1:]:
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"bad edge line: {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return FiniteGraph(n, edges)


class Kernel:
    """Base class: symmetric weights w(x,y) with finite per-site mass."""

    kind = "conductance"  # or "transition"
    support_radius: float = math.inf
    metadata: dict = {}

    def neighbors(self, x):
        """Weighted neighbors [(y, w(x,y))] with w > 0, deterministic order."""
        raise NotImplementedError

    def weight(self, x, y) -> float:
        raise NotImplementedError

    def site_mass(self, x) -> float:
        return sum(w for _, w in self.neighbors(x))

    def sample_neighbor(self, x, u: float):
        """Inverse-CDF sample over the enumerated neighbor list.

        u is uniform in [0,1) *of the site mass*; returns x itself when the
        site has no neighbors (isolated for this kernel).
        """
        nbrs = self.neighbors(x)
        if not nbrs:
            return x
        target = u * self.site_mass(x)
        acc = 0.0
        for y, w in nbrs:
            acc += w
            if target < acc:
                return y
        return nbrs[-1][0]


class EdgelessKernel(Kernel):
    """Zero weights everywhere; the frozen dynamics."""

    kind = "conductance"
    support_radius = 0.0

    def __init__(self, graph):
        self.graph = graph

    def neighbors(self, x):
        return []

    def weight(self, x, y):
        return 0.0

    def site_mass(self, x):
        return 0.0


class NearestNeighborKernel(Kernel):
    """w(x,y) = 1/(2d) exactly when ||x-y||_2 = 1 on Z^d."""

    kind = "transition"

    def __init__(self, d: int):
        if d < 1:
            raise ValueError("dimension must be >= 1")
        self.graph = Lattice(d)
        self.d = d
        self.support_radius = 1.0
        self._w = 1.0 / (2 * d)
        self._disp = []
        for i in range(d):
            for s in (1, -1):
                e = [0] * d
                e[i] = s
                self._disp.append(tuple(e))

    def neighbors(self, x):
        return [(tuple(a + b for a, b in zip(x, e)), self._w) for e in self._disp]

    def weight(self, x, y):
        return self._w if sum((a - b) ** 2 for a, b in zip(x, y)) == 1 else 0.0

    def site_mass(self, x):
        return 1.0


class LongRangeKernel(Kernel):
    """w(x,y) proportional to ||x-y||_2^-(d+alpha), truncated at r_trunc.

    The normalisation is the exact finite sum over the truncated support, so
    this is a genuine transition kernel.  Truncation removes the farthest
    jumps, which biases the walk toward recurrence; the declared radius is
    recorded in metadata for every report that uses the kernel.
    """

    kind = "transition"

    def __init__(self, d: int, alpha: float, r_trunc: int):
        if d not in (1, 2):
            raise ValueError("long-range kernel supports d in {1, 2}")
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        if r_trunc < 2:
            raise ValueError("truncation radius must be >= 2")
        self.graph = Lattice(d)
        self.d = d
        self.alpha = alpha
        self.r_trunc = r_trunc
        self.support_radius = float(r_trunc)
        disp = []
        for delta in _ball_displacements(d, r_trunc):
            r2 = sum(c * c for c in delta)
            disp.append((delta, r2 ** (-(d + alpha) / 2.0)))
        z = math.fsum(w for _, w in disp)
        self._disp = [(delta, w / z) for delta, w in disp]
        self._wmap = {delta: w for delta, w in self._disp}
        self.metadata = {
            "truncation_radius": r_trunc,
            "truncation_bias": "removes far jumps; pushes toward recurrence",
        }

    def neighbors(self, x):
        return [(tuple(a + b for a, b in zip(x, e)), w) for e, w in self._disp]

    def weight(self, x, y):
        lo, hi = sorted((x, y))
        delta = tuple(a - b for a, b in zip(hi, lo))
        return self._wmap.get(delta, self._wmap.get(tuple(-c for c in delta), 0.0))

    def site_mass(self, x):
        return 1.0

    def tail_mass(self, beyond: float) -> float:
        return math.fsum(
            w for e, w in self._disp if sum(c * c for c in e) > beyond * beyond
        )


def _ball_displacements(d: int, r: int):
    rng = range(-r, r + 1)
    for delta in itertools.product(rng, repeat=d):
        r2 = sum(c * c for c in delta)
        if 0 < r2 <= r * r:
            yield delta


class CubePartitionKernel(Kernel):
    """One half of the cube edge partition of Z^d, weight 1/d per edge.

    A nearest-neighbor edge belongs to part 1 iff both endpoints lie in a
    common cube 2n + {0,1}^d, i.e. iff the smaller coordinate along the
    differing axis is even; part 2 is the complement.  Each part gives every
    site exactly d incident edges, so both halves are transition kernels.
    """

    kind = "transition"

    def __init__(self, d: int, part: int):
        if d < 1:
            raise ValueError("dimension must be >= 1")
        if part not in (1, 2):
            raise ValueError("part must be 1 or 2")
        self.graph = Lattice(d)
        self.d = d
        self.part = part
        self.support_radius = 1.0
        self._w = 1.0 / d

    def _owns(self, x, y) -> bool:
        axis = None
        for i, (a, b) in enumerate(zip(x, y)):
            if a != b:
                if abs(a - b) != 1 or axis is not None:
                    return False
                axis = i
        if axis is None:
            return False
        in_part1 = min(x[axis], y[axis]) % 2 == 0
        return in_part1 if self.part == 1 else not in_part1

    def neighbors(self, x):
        out = []
        for i in range(self.d):
            for s in (1, -1):
                y = list(x)
                y[i] += s
                y = tuple(y)
                if self._owns(x, y):
                    out.append((y, self._w))
        return out

    def weight(self, x, y):
        return self._w if self._owns(x, y) else 0.0

    def site_mass(self, x):
        return 1.0


class FiniteKernel(Kernel):
    """Symmetric weights on the edges of a finite graph.

    kind resolves to "transition" when every site mass is 1 (up to 1e-12
    accumulated rounding), otherwise "conductance".
    """

    def __init__(self, graph: FiniteGraph, weights: dict[tuple[int, int], float]):
        self.graph = graph
        self._w = {}
        for (u, v), w in weights.items():
            if w < 0:
                raise ValueError("weights must be nonnegative")
            if w > 0:
                self._w[(min(u, v), max(u, v))] = float(w)
        self._nbrs = [[] for _ in range(graph.n)]
        for (u, v), w in sorted(self._w.items()):
            self._nbrs[u].append((v, w))
            self._nbrs[v].append((u, w))
        self._mass = [math.fsum(w for _, w in nb) for nb in self._nbrs]
        self.kind = (
            "transition"
            if all(abs(m - 1.0) <= 1e-12 for m in self._mass)
            else "conductance"
        )
        self.support_radius = float(graph.n)

    def neighbors(self, x):
        return list(self._nbrs[x])

    def weight(self, x, y):
        return self._w.get((min(x, y), max(x, y)), 0.0)

    def site_mass(self, x):
        return self._mass[x]


def unit_conductance_kernel(graph: FiniteGraph) -> FiniteKernel:
    return FiniteKernel(graph, {e: 1.0 for e in graph.edges})


def cycle_transition_kernel(graph: FiniteGraph) -> FiniteKernel:
    """p = 1/deg on a regular graph; raises if that is not symmetric-stochastic."""
    h = graph.degree_bound
    if any(len(a) != h for a in graph.adj):
        raise ValueError("uniform transition kernel needs a regular graph")
    return FiniteKernel(graph, {e: 1.0 / h for e in graph.edges})


def nearest_neighbor_kernel(d: int) -> NearestNeighborKernel:
    return NearestNeighborKernel(d)


def long_range_kernel(d: int, alpha: float, r_trunc: int) -> LongRangeKernel:
    return LongRangeKernel(d, alpha, r_trunc)


def cube_edge_partition(d: int) -> tuple[CubePartitionKernel, CubePartitionKernel]:
    return CubePartitionKernel(d, 1), CubePartitionKernel(d, 2)


@dataclass
class MatchingDecomposition:
    """Edge classes E_1..E_N, each a matching, disjointly covering the edges."""

    classes: list[list[tuple[int, int]]]
    degree_bound: int
    edge_order: list[tuple[int, int]] = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def validate(self) -> None:
        seen = set()
        for cls in self.classes:
            touched = set()
            for u, v in cls:
                if u in touched or v in touched:
                    raise AssertionError("class is not a matching")
                touched.update((u, v))
                e = (min(u, v), max(u, v))
                if e in seen:
                    raise AssertionError("classes are not disjoint")
                seen.add(e)
        if seen != set(self.edge_order):
            raise AssertionError("classes do not cover the edge set")
        if self.degree_bound > 0 and self.n_classes > 2 * self.degree_bound - 1:
            raise AssertionError("class count exceeds 2h-1")


def greedy_matching_decomposition(
    graph: FiniteGraph, edge_order: list[tuple[int, int]] | None = None
) -> MatchingDecomposition:
    """Greedy pass-by-pass matching decomposition.

    Pass k scans the edges in order, adding an edge iff it is still unplaced
    and shares no vertex with edges already in the current class; at most
    2h-1 passes are needed for degree bound h.  The edge order defaults to
    lexicographic and is recorded for reproducibility.
    """
    order = [
        (min(u, v), max(u, v)) for u, v in (edge_order or graph.edges)
    ]
    if len(set(order)) != len(graph.edges) or set(order) != set(graph.edges):
        raise ValueError("edge_order must enumerate the graph's edges exactly once")
    placed: set[tuple[int, int]] = set()
    classes: list[list[tuple[int, int]]] = []
    while len(placed) < len(order):
        current: list[tuple[int, int]] = []
        touched: set[int] = set()
        for e in order:
            if e in placed:
                continue
            u, v = e
            if u in touched or v in touched:
                continue
            current.append(e)
            touched.update(e)
            placed.add(e)
        classes.append(current)
    deco = MatchingDecomposition(classes, graph.degree_bound, order)
    deco.validate()
    return deco
