"""
Metric-space plumbing shared by every experiment.

Points, polylines, weighted graphs with their shortest-path oracle, and the
`MetricSpace` contract the comparison machinery is written against.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from heapq import heappop, heappush
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

logger = logging.getLogger(__name__)

TOL = 1e-9
EXACT_TOL = 1e-12


class GeometryError(ValueError):
    """Base class for errors raised by the geometry modules."""


class DomainError(GeometryError):
    """Input outside the domain of an operation."""


class UnreachableError(GeometryError):
    """Two graph vertices lie in different components."""


class UnsupportedSpaceError(GeometryError):
    """The space lacks a capability the caller asked for."""


class InvariantViolation(GeometryError):
    """A checked mathematical invariant failed at run time."""


@dataclass(frozen=True)
class MetricPoint:
    space_tag: str
    coords: Tuple


@dataclass(frozen=True)
class Polyline:
    vertices: Tuple[MetricPoint, ...]

    def __post_init__(self):
        if len(self.vertices) < 2:
            raise DomainError("a polyline needs at least 2 vertices")
        tags = {v.space_tag for v in self.vertices}
        if len(tags) != 1:
            raise DomainError(f"mixed-space polyline: {sorted(tags)}")

    @property
    def space_tag(self) -> str:
        return self.vertices[0].space_tag


def fmt(value: float) -> str:
    """Float with 17 significant digits, as written to CSV tables."""
    return format(float(value), ".17g")


@dataclass
class MetricGraph:
    """Finite weighted graph used as a path-metric approximant.

    `points` holds one coordinate tuple per vertex (possibly empty),
    `edges` holds (i, j, length) triples with i != j and length > 0.
    """

    points: List[Tuple[float, ...]]
    edges: List[Tuple[int, int, float]] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.points)
        for i, j, length in self.edges:
            if not (0 <= i < n and 0 <= j < n):
                raise DomainError(f"edge ({i}, {j}) references a missing vertex")
            if i == j:
                raise DomainError(f"self-loop at vertex {i}")
            if not length > 0:
                raise DomainError(f"edge ({i}, {j}) has nonpositive length {length}")

    @property
    def n_vertices(self) -> int:
        return len(self.points)

    @property
    def resolution(self) -> float:
        return max((length for _, _, length in self.edges), default=0.0)

    @cached_property
    def adjacency(self) -> List[List[Tuple[int, float]]]:
        adj: List[List[Tuple[int, float]]] = [[] for _ in range(self.n_vertices)]
        for i, j, length in self.edges:
            adj[i].append((j, length))
            adj[j].append((i, length))
        for row in adj:
            row.sort()
        return adj

    @cached_property
    def csr(self) -> csr_matrix:
        n = self.n_vertices
        if not self.edges:
            return csr_matrix((n, n))
        arr = np.asarray(self.edges, dtype=float)
        a = arr[:, 0].astype(int)
        b = arr[:, 1].astype(int)
        i, j = np.minimum(a, b), np.maximum(a, b)
        w = arr[:, 2]
        # csr_matrix sums duplicates; keep the shortest parallel edge instead
        order = np.lexsort((w, j, i))
        i, j, w = i[order], j[order], w[order]
        keep = np.ones(len(i), dtype=bool)
        keep[1:] = (i[1:] != i[:-1]) | (j[1:] != j[:-1])
        i, j, w = i[keep], j[keep], w[keep]
        rows = np.concatenate([i, j])
        cols = np.concatenate([j, i])
        data = np.concatenate([w, w])
        return csr_matrix((data, (rows, cols)), shape=(n, n))

    def to_text(self) -> str:
        lines = []
        for vid, coords in enumerate(self.points):
            lines.append(" ".join(["v", str(vid)] + [fmt(c) for c in coords]))
        for i, j, length in self.edges:
            lines.append(f"e {i} {j} {fmt(length)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MetricGraph":
        points: Dict[int, Tuple[float, ...]] = {}
        edges = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            parts = raw.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "v":
                    points[int(parts[1])] = tuple(float(x) for x in parts[2:])
                elif parts[0] == "e":
                    edges.append((int(parts[1]), int(parts[2]), float(parts[3])))
                else:
                    raise DomainError(f"line {lineno}: unknown record '{parts[0]}'")
            except (IndexError, ValueError) as e:
                if isinstance(e, DomainError):
                    raise
                raise DomainError(f"line {lineno}: malformed record: {raw!r}") from e
        if sorted(points) != list(range(len(points))):
            raise DomainError("vertex ids must be 0..n-1")
        return cls([points[k] for k in range(len(points))], edges)


def is_connected(g: MetricGraph) -> bool:
    if g.n_vertices <= 1:
        return True
    n_comp, _ = connected_components(g.csr, directed=False)
    return n_comp == 1


def _label_setting(g: MetricGraph, source: int, target: Optional[int] = None):
    """Dijkstra with a heap keyed (distance, vertex id).

    Equal tentative distances pop the smaller vertex id first and a
    predecessor is only replaced by a strictly shorter label or by a
    smaller id at equal length, so paths are reproducible.
    """
    dist = {source: 0.0}
    pred: Dict[int, int] = {}
    done = set()
    heap = [(0.0, source)]
    adj = g.adjacency
    while heap:
        d, u = heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == target:
            break
        for v, w in adj[u]:
            if v in done:
                continue
            nd = d + w
            old = dist.get(v)
            if old is None or nd < old - EXACT_TOL:
                dist[v] = nd
                pred[v] = u
                heappush(heap, (nd, v))
            elif abs(nd - old) <= EXACT_TOL and u < pred.get(v, u + 1):
                pred[v] = u
    return dist, pred


def _check_vertex(g: MetricGraph, v: int):
    if not (0 <= v < g.n_vertices):
        raise DomainError(f"vertex {v} not in graph of {g.n_vertices} vertices")


def graph_distance(g: MetricGraph, u: int, v: int) -> float:
    _check_vertex(g, u)
    _check_vertex(g, v)
    if u == v:
        return 0.0
    dist, _ = _label_setting(g, u, v)
    if v not in dist:
        raise UnreachableError(f"vertices {u} and {v} are disconnected")
    return dist[v]


def shortest_path(g: MetricGraph, u: int, v: int) -> List[int]:
    """Vertex sequence of a shortest path from u to v."""
    _check_vertex(g, u)
    _check_vertex(g, v)
    if u == v:
        return [u]
    dist, pred = _label_setting(g, u, v)
    if v not in dist:
        raise UnreachableError(f"vertices {u} and {v} are disconnected")
    path = [v]
    while path[-1] != u:
        path.append(pred[path[-1]])
    return path[::-1]


def distance_rows(g: MetricGraph, sources: Sequence[int]) -> np.ndarray:
    """Single-source distances for many sources at once (rows may hold inf)."""
    for s in sources:
        _check_vertex(g, s)
    return np.atleast_2d(dijkstra(g.csr, directed=False, indices=list(sources)))


def refine_graph(g: MetricGraph, target_resolution: float) -> MetricGraph:
    if not target_resolution > 0:
        raise DomainError("target_resolution must be positive")
    points = list(g.points)
    edges = []
    for i, j, length in g.edges:
        pieces = max(1, math.ceil(length / target_resolution - EXACT_TOL))
        if pieces == 1:
            edges.append((i, j, length))
            continue
        step = length / pieces
        a = np.asarray(g.points[i], dtype=float)
        b = np.asarray(g.points[j], dtype=float)
        interpolate = a.shape == b.shape and a.size > 0
        prev = i
        for k in range(1, pieces):
            coords = tuple((a + (b - a) * k / pieces).tolist()) if interpolate else ()
            points.append(coords)
            cur = len(points) - 1
            edges.append((prev, cur, step))
            prev = cur
        edges.append((prev, j, step))
    return MetricGraph(points, edges)


def cycle_graph(n: int, length: float = 1.0) -> MetricGraph:
    pts = [(math.cos(2 * math.pi * k / n), math.sin(2 * math.pi * k / n)) for k in range(n)]
    return MetricGraph(pts, [(k, (k + 1) % n, length) for k in range(n)])


def path_graph(n: int, length: float = 1.0) -> MetricGraph:
    return MetricGraph([(float(k),) for k in range(n)], [(k, k + 1, length) for k in range(n - 1)])


def star_graph(legs: int, length: float = 1.0) -> MetricGraph:
    """Center 0 with `legs` tips 1..legs."""
    pts = [(0.0, 0.0)] + [
        (length * math.cos(2 * math.pi * k / legs), length * math.sin(2 * math.pi * k / legs))
        for k in range(legs)
    ]
    return MetricGraph(pts, [(0, k + 1, length) for k in range(legs)])


class MetricSpace:
    """Contract for the concrete spaces the experiments run on."""

    tag = "abstract"
    basepoint: MetricPoint

    def point(self, *coords) -> MetricPoint:
        return MetricPoint(self.tag, tuple(coords))

    def _own(self, p: MetricPoint):
        if p.space_tag != self.tag:
            raise DomainError(f"point of space '{p.space_tag}' used in space '{self.tag}'")

    def distance(self, p: MetricPoint, q: MetricPoint) -> float:
        raise NotImplementedError

    def pairwise(self, ps: Sequence[MetricPoint], qs: Sequence[MetricPoint]) -> np.ndarray:
        out = np.empty((len(ps), len(qs)))
        for a, p in enumerate(ps):
            for b, q in enumerate(qs):
                out[a, b] = self.distance(p, q)
        return out

    def side_samples(self, p: MetricPoint, q: MetricPoint, grid: int) -> List[Tuple[float, MetricPoint]]:
        raise UnsupportedSpaceError(f"space '{self.tag}' has no geodesic oracle")

    def sample_ball(self, rng: np.random.Generator, radius: float, count: int) -> List[MetricPoint]:
        raise UnsupportedSpaceError(f"space '{self.tag}' cannot sample balls")


def polyline_length(path: Polyline, space: MetricSpace) -> float:
    if path.space_tag != space.tag:
        raise DomainError(f"polyline of space '{path.space_tag}' measured in '{space.tag}'")
    v = path.vertices
    return float(sum(space.distance(v[k], v[k + 1]) for k in range(len(v) - 1)))


class EuclideanPlane(MetricSpace):
    tag = "euclidean"

    def __init__(self):
        self.basepoint = self.point(0.0, 0.0)

    def distance(self, p: MetricPoint, q: MetricPoint) -> float:
        self._own(p)
        self._own(q)
        return math.hypot(p.coords[0] - q.coords[0], p.coords[1] - q.coords[1])

    def pairwise(self, ps, qs) -> np.ndarray:
        a = np.array([p.coords for p in ps], dtype=float).reshape(-1, 2)
        b = np.array([q.coords for q in qs], dtype=float).reshape(-1, 2)
        return np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])

    def side_samples(self, p, q, grid):
        a = np.asarray(p.coords, dtype=float)
        b = np.asarray(q.coords, dtype=float)
        out = []
        for i in range(grid + 1):
            t = i / grid
            out.append((t, self.point(*(a + (b - a) * t).tolist())))
        return out

    def sample_ball(self, rng, radius, count):
        r = radius * np.sqrt(rng.random(count))
        phi = 2 * np.pi * rng.random(count)
        x0, y0 = self.basepoint.coords
        return [self.point(x0 + rr * math.cos(pp), y0 + rr * math.sin(pp)) for rr, pp in zip(r, phi)]


class GraphSpace(MetricSpace):
    """A MetricGraph seen as a metric space on its vertices."""

    def __init__(self, graph: MetricGraph, tag: str = "graph", basepoint: int = 0):
        if not is_connected(graph):
            raise DomainError("graph spaces must be connected")
        self.graph = graph
        self.tag = tag
        self.basepoint = self.point(basepoint)
        self._rows: Dict[int, np.ndarray] = {}

    def row(self, v: int) -> np.ndarray:
        if v not in self._rows:
            self._rows[v] = distance_rows(self.graph, [v])[0]
        return self._rows[v]

    def prefetch(self, vertices: Iterable[int]):
        missing = sorted({v for v in vertices if v not in self._rows})
        if missing:
            rows = distance_rows(self.graph, missing)
            for v, r in zip(missing, rows):
                self._rows[v] = r

    def distance(self, p, q) -> float:
        self._own(p)
        self._own(q)
        return float(self.row(p.coords[0])[q.coords[0]])

    def pairwise(self, ps, qs) -> np.ndarray:
        src = [p.coords[0] for p in ps]
        dst = np.array([q.coords[0] for q in qs], dtype=int)
        self.prefetch(src)
        return np.array([self.row(s)[dst] for s in src]).reshape(len(ps), len(qs))

    def side_samples(self, p, q, grid):
        u, v = p.coords[0], q.coords[0]
        path = shortest_path(self.graph, u, v)
        if len(path) == 1:
            return [(i / grid, p) for i in range(grid + 1)]
        adj = self.graph.adjacency
        steps = [min(l for n, l in adj[a] if n == b) for a, b in zip(path, path[1:])]
        cum = np.concatenate([[0.0], np.cumsum(steps)])
        frac = cum / cum[-1]
        picked = []
        for i in range(grid + 1):
            k = int(np.argmin(np.abs(frac - i / grid)))
            if not picked or picked[-1] != k:
                picked.append(k)
        return [(float(frac[k]), self.point(path[k])) for k in picked]

    def sample_ball(self, rng, radius, count):
        d0 = self.row(self.basepoint.coords[0])
        inside = np.flatnonzero(d0 <= radius + TOL)
        picks = rng.choice(inside, size=count, replace=True)
        return [self.point(int(v)) for v in picks]


class ScaledSpace(MetricSpace):
    """A space with every distance multiplied by `factor`."""

    def __init__(self, base: MetricSpace, factor: float):
        if not factor > 0:
            raise DomainError("scale factor must be positive")
        self.base = base
        self.factor = factor
        self.tag = base.tag
        self.basepoint = base.basepoint

    def distance(self, p, q):
        return self.factor * self.base.distance(p, q)

    def pairwise(self, ps, qs):
        return self.factor * self.base.pairwise(ps, qs)

    def side_samples(self, p, q, grid):
        return self.base.side_samples(p, q, grid)

    def sample_ball(self, rng, radius, count):
        return self.base.sample_ball(rng, radius / self.factor, count)
