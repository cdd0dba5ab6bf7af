"""
The plane with a wrinkled quadrant.

Strip k (k >= 2) of the first quadrant, between the lines x+y = k(k-1) and
x+y = k(k+1), is replaced by a roof of height 1 over its mid-line
x+y = k^2: two slanted trapezoids meeting at the ridge and two vertical
isosceles end caps standing on the axes. Everything else stays flat.

All faces are planar polygons in R^3, so distances inside a face are
straight-line distances. The mesh samples the interfaces between faces
(valley lines, ridges, end-cap edges, axis pieces). Inside a face each
sample is linked to a sparse subset of the samples on the face's other
sides: along an opposite side, the first sample of every bucket of the
detour function |t - t0| - |a X(t)| + dist(a, side) is kept, with buckets
`excess` wide. Reaching any other sample of that side by a link plus a walk
along the side then costs at most `excess` more than the straight chord.
"""

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial.distance import cdist

from config import Config
from .metric_core import (
    TOL,
    DomainError,
    InvariantViolation,
    MetricGraph,
    MetricPoint,
    MetricSpace,
    UnreachableError,
)

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)
_EPS = 1e-9


def diagonal_distance(n: int) -> float:
    """Length of the diagonal geodesic from the origin to w_n."""
    if n < 1:
        raise DomainError("n must be a positive integer")
    k = np.arange(2, n + 1, dtype=float)
    return math.fsum([SQRT2] + (2.0 * np.sqrt(1.0 + k * k / 2.0)).tolist())


def euclidean_diagonal_distance(n: int) -> float:
    if n < 1:
        raise DomainError("n must be a positive integer")
    return n * (n + 1) * SQRT2 / 2


def gap_summands(n: int) -> np.ndarray:
    # 2*sqrt(k^2/2 + 1) - sqrt(2)*k, rationalized
    k = np.arange(2, n + 1, dtype=float)
    return 4.0 / (np.sqrt(2 * k * k + 4) + k * SQRT2)


def divergence_gap(n: int) -> Tuple[float, float]:
    """(gap, lower_bound) between the wrinkled and flat diagonals."""
    if n < 2:
        raise DomainError("divergence_gap needs n >= 2")
    k = np.arange(2, n + 1, dtype=float)
    gap = math.fsum(gap_summands(n).tolist())
    lower = math.fsum((4.0 / (k * (SQRT2 + SQRT3))).tolist())
    return gap, lower


def harmonic_lower_bound(n: int) -> float:
    h = math.fsum(1.0 / k for k in range(1, n + 1))
    return 4.0 / (SQRT2 + SQRT3) * (h - 1.0)


def strip_width(k: int) -> float:
    """Slant width of one roof face of strip k."""
    return math.sqrt(k * k / 2.0 + 1.0)


def default_resolution(n_max: int) -> float:
    base = Config.WRINKLED_RESOLUTION
    return base if n_max <= 10 else base * n_max / 10


def covering_n_max(radius: float) -> int:
    """Smallest n_max whose wrinkles reach every point of B(origin, radius).

    Surface distances dominate planar ones, so the ball projects into
    x + y <= radius * sqrt(2).
    """
    if radius < 0:
        raise DomainError("radius must be nonnegative")
    n = 2
    while n * (n + 1) < radius * SQRT2:
        n += 1
    return n


@dataclass(frozen=True)
class Face:
    face_id: int
    kind: str
    k: int
    corners: Optional[np.ndarray]
    origin: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    segments: Tuple[int, ...]

    def to_local(self, xyz: np.ndarray) -> Tuple[float, float]:
        d = np.asarray(xyz, dtype=float) - self.origin
        return float(d @ self.e1), float(d @ self.e2)

    def to_xyz(self, local: Sequence[float]) -> np.ndarray:
        return self.origin + local[0] * self.e1 + local[1] * self.e2

    def contains_local(self, local: Sequence[float], tol: float = 1e-9) -> bool:
        poly = np.array([self.to_local(c) for c in self.corners])
        signs = []
        for a, b in zip(poly, np.roll(poly, -1, axis=0)):
            signs.append((b[0] - a[0]) * (local[1] - a[1]) - (b[1] - a[1]) * (local[0] - a[0]))
        signs = np.array(signs)
        return bool(np.all(signs >= -tol) or np.all(signs <= tol))


@dataclass(frozen=True)
class SurfacePoint:
    face_id: int
    local: Tuple[float, float]


@dataclass(frozen=True)
class Segment:
    start: np.ndarray
    end: np.ndarray
    nodes: np.ndarray


class _Site(NamedTuple):
    xyz: np.ndarray
    node: int  # -1 off the mesh


Where = Union[int, SurfacePoint]


@dataclass(eq=False)
class WrinkledSurface:
    n_max: int
    resolution: float
    box: float
    faces: List[Face]
    segments: List[Segment]
    points: np.ndarray
    links: np.ndarray
    lengths: np.ndarray
    node_face: np.ndarray
    origin_node: int = -1
    _node_index: Dict[Tuple[float, float, float], int] = field(default_factory=dict, repr=False)
    attached: Tuple[int, ...] = ()
    _rows: "OrderedDict" = field(default_factory=OrderedDict, repr=False)

    @property
    def outer_line(self) -> float:
        return float(self.n_max * (self.n_max + 1))

    @property
    def n_nodes(self) -> int:
        return len(self.points)

    def spacing(self, k: int) -> float:
        return _spacing(self.resolution, k)

    def node_xyz(self, v: int) -> np.ndarray:
        return self.points[v]

    def node_at(self, x: float, y: float, z: float = 0.0) -> Optional[int]:
        return self._node_index.get(_key((x, y, z)))

    @cached_property
    def csr(self) -> csr_matrix:
        n = self.n_nodes
        i, j, w = self.links[:, 0], self.links[:, 1], self.lengths
        return csr_matrix((np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                          shape=(n, n))

    @cached_property
    def mesh(self) -> MetricGraph:
        """The mesh as a plain MetricGraph, for small surfaces and exports."""
        pts = [tuple(float(c) for c in p) for p in self.points]
        edges = [(int(a), int(b), float(w)) for (a, b), w in zip(self.links, self.lengths)]
        return MetricGraph(pts, edges)

    # points -----------------------------------------------------------

    def lift(self, x: float, y: float) -> SurfacePoint:
        """The surface point directly above (x, y)."""
        if abs(x) > self.box or abs(y) > self.box:
            raise DomainError(f"({x}, {y}) outside the bounding box {self.box}")
        s = x + y
        if x < 0 or y < 0 or s <= 2 or s >= self.outer_line:
            return SurfacePoint(0, (float(x), float(y)))
        k = _strip_of(s)
        face = self._prism_face("inner" if s <= k * k else "outer", k)
        return SurfacePoint(face.face_id, face.to_local(np.array([x, y, _height(s, k)])))

    def xyz(self, p: SurfacePoint) -> np.ndarray:
        if not 0 <= p.face_id < len(self.faces):
            raise DomainError(f"unknown face {p.face_id}")
        return self.faces[p.face_id].to_xyz(p.local)

    def surface_point(self, v: int) -> SurfacePoint:
        face = self.faces[int(self.node_face[v])]
        return SurfacePoint(face.face_id, face.to_local(self.points[v]))

    def validate(self, p: SurfacePoint):
        face = self.faces[p.face_id] if 0 <= p.face_id < len(self.faces) else None
        if face is None:
            raise DomainError(f"unknown face {p.face_id}")
        if face.kind == "flat":
            x, y = p.local
            if abs(x) > self.box or abs(y) > self.box or _in_open_band(np.array([[x, y]]), self.outer_line)[0]:
                raise DomainError(f"{p.local} is not on the flat part")
        elif not face.contains_local(p.local):
            raise DomainError(f"{p.local} lies outside face {p.face_id}")

    def _prism_face(self, kind: str, k: int) -> Face:
        # faces: 0 = flat, then per strip inner, outer, cap_x, cap_y
        offset = {"inner": 0, "outer": 1, "cap_x": 2, "cap_y": 3}[kind]
        return self.faces[1 + 4 * (k - 2) + offset]

    def _site(self, p: Where) -> _Site:
        if isinstance(p, (int, np.integer)):
            if not 0 <= p < self.n_nodes:
                raise DomainError(f"unknown mesh node {p}")
            return _Site(self.points[int(p)], int(p))
        self.validate(p)
        xyz = self.xyz(p)
        v = self._node_index.get(_key(xyz))
        return _Site(xyz, -1 if v is None else v)

    # distances --------------------------------------------------------

    def with_points(self, points: Sequence[SurfacePoint]) -> Tuple["WrinkledSurface", List[int]]:
        """Copy of the surface whose mesh also contains `points`."""
        index = dict(self._node_index)
        attached = list(self.attached)
        extra_xyz: List[np.ndarray] = []
        extra_face: List[int] = []
        links: List[Tuple[int, int]] = []
        lengths: List[float] = []
        ids = []
        for p in points:
            self.validate(p)
            xyz = self.xyz(p)
            key = _key(xyz)
            if key in index:
                ids.append(index[key])
                continue
            new_id = self.n_nodes + len(extra_xyz)
            seen, near = self._visible_nodes(xyz)
            links.extend((int(v), new_id) for v in seen)
            lengths.extend(near.tolist())
            for other in attached[len(self.attached):]:
                other_xyz = extra_xyz[other - self.n_nodes]
                if self._mutually_visible(xyz, other_xyz):
                    links.append((other, new_id))
                    lengths.append(float(np.linalg.norm(xyz - other_xyz)))
            extra_xyz.append(xyz)
            extra_face.append(p.face_id)
            index[key] = new_id
            attached.append(new_id)
            ids.append(new_id)
        if not extra_xyz:
            return self, ids
        surface = WrinkledSurface(
            self.n_max, self.resolution, self.box, self.faces, self.segments,
            np.vstack([self.points, np.asarray(extra_xyz)]),
            np.vstack([self.links, np.asarray(links, dtype=np.int64).reshape(-1, 2)]),
            np.concatenate([self.lengths, np.asarray(lengths, dtype=float)]),
            np.concatenate([self.node_face, np.asarray(extra_face, dtype=np.int64)]),
            self.origin_node, index, tuple(attached))
        return surface, ids

    def distances(self, sources: Sequence[Where], targets: Sequence[Where]) -> np.ndarray:
        """Surface distance matrix; one shortest-path row per distinct source."""
        src = [self._site(p) for p in sources]
        dst = [self._site(q) for q in targets]
        out = np.empty((len(src), len(dst)))
        if not src or not dst:
            return out
        D = np.vstack([dist for dist, _ in self._source_rows(src)])
        free_src = [i for i, s in enumerate(src) if s.node < 0]
        for j, t in enumerate(dst):
            if t.node >= 0:
                out[:, j] = D[:, t.node]
                continue
            ids, offsets = self._visible_nodes(t.xyz)
            out[:, j] = (D[:, ids] + offsets).min(axis=1)
            for i in free_src:
                if self._mutually_visible(src[i].xyz, t.xyz):
                    out[i, j] = min(out[i, j], float(np.linalg.norm(src[i].xyz - t.xyz)))
        return out

    def distance(self, p: Where, q: Where) -> float:
        return float(self.distances([p], [q])[0, 0])

    def path(self, p: Where, q: Where) -> np.ndarray:
        """Corner points in R^3 of a shortest mesh path from p to q."""
        a, b = self._site(p), self._site(q)
        if np.array_equal(a.xyz, b.xyz):
            return np.vstack([a.xyz, b.xyz])
        (dist, pred), = self._source_rows([a])
        if b.node >= 0:
            end, best, tail = b.node, float(dist[b.node]), []
        else:
            ids, offsets = self._visible_nodes(b.xyz)
            k = int(np.argmin(dist[ids] + offsets))
            end, best, tail = int(ids[k]), float(dist[ids[k]] + offsets[k]), [b.xyz]
            if a.node < 0 and self._mutually_visible(a.xyz, b.xyz) \
                    and float(np.linalg.norm(a.xyz - b.xyz)) <= best:
                return np.vstack([a.xyz, b.xyz])
        if not math.isfinite(best):
            raise UnreachableError("no mesh path between the two points")
        chain = self._trace(pred, end)
        head = [] if a.node >= 0 else [a.xyz]
        return np.vstack(head + [self.points[v] for v in chain] + tail)

    def node_path(self, u: int, v: int) -> List[int]:
        (dist, pred), = self._source_rows([self._site(u)])
        if not math.isfinite(dist[v]):
            raise UnreachableError(f"node {v} is not reachable from {u}")
        return self._trace(pred, v)

    def _trace(self, pred: np.ndarray, end: int) -> List[int]:
        # predecessors stop at -9999 for a node source and at a virtual index past the mesh otherwise
        chain = [int(end)]
        while True:
            prev = int(pred[chain[-1]])
            if prev < 0 or prev >= self.n_nodes:
                break
            chain.append(prev)
        chain.reverse()
        return chain

    def _source_rows(self, sites: Sequence[_Site]) -> List[Tuple[np.ndarray, np.ndarray]]:
        """(distance, predecessor) rows, reusing cached ones.

        Points off the mesh become extra sources with out-links to every node
        they see, so they never shortcut paths between other points.
        """
        out: List = [None] * len(sites)
        nodes: Dict[int, List[int]] = {}
        free: Dict[Tuple, List[int]] = {}
        for i, s in enumerate(sites):
            key = s.node if s.node >= 0 else _key(s.xyz)
            if key in self._rows:
                self._rows.move_to_end(key)
                out[i] = self._rows[key]
            elif s.node >= 0:
                nodes.setdefault(key, []).append(i)
            else:
                free.setdefault(key, []).append(i)
        if nodes:
            keys = list(nodes)
            dist, pred = dijkstra(self.csr, directed=True, indices=keys, return_predecessors=True)
            self._store(keys, dist, pred, nodes, out)
        if free:
            keys = list(free)
            anchors = [self._visible_nodes(sites[free[k][0]].xyz) for k in keys]
            dist, pred = self._virtual_rows(anchors)
            self._store(keys, dist, pred, free, out)
        return out

    def _store(self, keys, dist, pred, slots, out):
        for r, key in enumerate(keys):
            row = (dist[r], pred[r])
            self._rows[key] = row
            for i in slots[key]:
                out[i] = row
        while len(self._rows) > Config.WRINKLED_ROW_CACHE:
            self._rows.popitem(last=False)

    def _virtual_rows(self, anchors: List[Tuple[np.ndarray, np.ndarray]]):
        n, m = self.n_nodes, len(anchors)
        base = self.csr
        counts = np.array([len(ids) for ids, _ in anchors], dtype=np.int64)
        indptr = np.concatenate([base.indptr, base.indptr[-1] + np.cumsum(counts)])
        indices = np.concatenate([base.indices] + [ids for ids, _ in anchors])
        data = np.concatenate([base.data] + [offsets for _, offsets in anchors])
        graph = csr_matrix((data, indices, indptr), shape=(n + m, n + m))
        dist, pred = dijkstra(graph, directed=True, indices=np.arange(n, n + m), return_predecessors=True)
        return dist[:, :n], pred[:, :n]

    def space(self) -> "WrinkledSpace":
        return WrinkledSpace(self)

    def _faces_touching(self, xyz: np.ndarray) -> List[Face]:
        out = []
        for face in self.faces:
            if face.kind == "flat":
                if abs(xyz[2]) <= _EPS and not _in_open_band(xyz[None, :2], self.outer_line)[0]:
                    out.append(face)
                continue
            lo, hi = face.k * (face.k - 1), face.k * (face.k + 1)
            if not lo - 1e-6 <= xyz[0] + xyz[1] <= hi + 1e-6:
                continue
            d = xyz - face.origin
            normal = np.cross(face.e1, face.e2)
            if abs(float(d @ normal)) <= _EPS and face.contains_local(face.to_local(xyz)):
                out.append(face)
        return out

    def _visible_nodes(self, xyz: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Nodes joined to xyz by a straight segment inside one face, with the lengths."""
        faces = self._faces_touching(xyz)
        cands = []
        for face in faces:
            cand = self._face_nodes[face.face_id]
            if face.kind == "flat":
                cand = cand[~_blocks(xyz[:2], self.points[cand, :2], self.outer_line)]
            cands.append(cand)
        cands.extend(np.array([v]) for v in self.attached
                     if self._mutually_visible(xyz, self.points[v], faces))
        ids = np.concatenate(cands) if cands else np.zeros(0, dtype=np.int64)
        lengths = np.linalg.norm(self.points[ids] - xyz, axis=1)
        keep = lengths > 0
        ids, first = np.unique(ids[keep], return_index=True)
        return ids, lengths[keep][first]

    def _mutually_visible(self, a: np.ndarray, b: np.ndarray, faces_a: Optional[List[Face]] = None) -> bool:
        fa = {f.face_id for f in (faces_a if faces_a is not None else self._faces_touching(a))}
        fb = {f.face_id for f in self._faces_touching(b)}
        shared = fa & fb
        if not shared:
            return False
        if shared != {0}:
            return True
        return not bool(_blocks(a[:2], b[None, :2], self.outer_line)[0])

    @cached_property
    def _face_nodes(self) -> List[np.ndarray]:
        return [np.unique(np.concatenate([self.segments[s].nodes for s in face.segments]))
                for face in self.faces]


class WrinkledSpace(MetricSpace):
    """The wrinkled surface as a metric space.

    Points carry coords (face_id, u, v, node) with node = -1 for points off
    the mesh; geodesic sides are sampled by arc length along mesh paths.
    """

    tag = "wrinkled"

    def __init__(self, surface: WrinkledSurface):
        self.surface = surface
        self.basepoint = self.node_point(surface.origin_node)

    def node_point(self, v: int) -> MetricPoint:
        sp = self.surface.surface_point(v)
        return self.point(sp.face_id, sp.local[0], sp.local[1], int(v))

    def lift(self, sp: SurfacePoint) -> MetricPoint:
        site = self.surface._site(sp)
        if site.node >= 0:
            return self.node_point(site.node)
        return self.point(sp.face_id, float(sp.local[0]), float(sp.local[1]), -1)

    def _where(self, p: MetricPoint) -> Where:
        self._own(p)
        face_id, u, v, node = p.coords
        return int(node) if node >= 0 else SurfacePoint(int(face_id), (float(u), float(v)))

    def distance(self, p, q) -> float:
        return self.surface.distance(self._where(p), self._where(q))

    def pairwise(self, ps, qs) -> np.ndarray:
        a = [self._where(p) for p in ps]
        b = [self._where(q) for q in qs]
        if len(set(b)) < len(set(a)):
            return self.surface.distances(b, a).T
        return self.surface.distances(a, b)

    def side_samples(self, p, q, grid):
        corners = self.surface.path(self._where(p), self._where(q))
        steps = np.linalg.norm(np.diff(corners, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(steps)])
        out = [(0.0, p)]
        for i in range(1, grid):
            t = i / grid
            if cum[-1] == 0:
                out.append((t, p))
                continue
            s = t * cum[-1]
            k = min(int(np.searchsorted(cum, s, side="right")) - 1, len(steps) - 1)
            frac = (s - cum[k]) / steps[k] if steps[k] > 0 else 0.0
            out.append((t, self._point_at(corners[k] + frac * (corners[k + 1] - corners[k]))))
        out.append((1.0, q))
        return out

    def _point_at(self, xyz: np.ndarray) -> MetricPoint:
        v = self.surface._node_index.get(_key(xyz))
        if v is not None:
            return self.node_point(v)
        faces = self.surface._faces_touching(xyz)
        if not faces:
            raise InvariantViolation(f"path sample {xyz.tolist()} is off the surface")
        u, w = faces[0].to_local(xyz)
        return self.point(faces[0].face_id, u, w, -1)

    def sample_ball(self, rng, radius, count):
        (d0, _), = self.surface._source_rows([self.surface._site(self.surface.origin_node)])
        inside = np.flatnonzero(d0 <= radius + TOL)
        picks = rng.choice(inside, size=count, replace=True)
        return [self.node_point(int(v)) for v in picks]


def _key(xyz) -> Tuple[float, float, float]:
    return tuple(round(float(c), 9) + 0.0 for c in xyz)


def _strip_of(s: float) -> int:
    # k with k(k-1) <= s <= k(k+1)
    k = int(math.floor(0.5 + math.sqrt(0.25 + s)))
    while k * (k - 1) > s:
        k -= 1
    while k * (k + 1) < s:
        k += 1
    return max(k, 2)


def _height(s: float, k: int) -> float:
    return max(0.0, 1.0 - abs(s - k * k) / k)


def _in_open_band(xy: np.ndarray, outer: float) -> np.ndarray:
    x, y = xy[:, 0], xy[:, 1]
    s = x + y
    return (x > _EPS) & (y > _EPS) & (s > 2 + _EPS) & (s < outer - _EPS)


def _blocks(p: np.ndarray, targets: np.ndarray, outer: float) -> np.ndarray:
    """Whether the segment from p to each target passes through the open band."""
    # half-planes n.X - c > 0 describing the open band
    normals = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, -1.0]])
    offsets = np.array([0.0, 0.0, 2.0, -outer])
    lo = np.zeros(len(targets))
    hi = np.ones(len(targets))
    for nrm, c in zip(normals, offsets):
        f0 = float(nrm @ p) - c - _EPS
        f1 = targets @ nrm - c - _EPS
        slope = f1 - f0
        with np.errstate(divide="ignore", invalid="ignore"):
            t_star = np.where(slope != 0, -f0 / slope, 0.0)
        rising = slope > 0
        falling = slope < 0
        flat = slope == 0
        lo = np.where(rising, np.maximum(lo, t_star), lo)
        hi = np.where(falling, np.minimum(hi, t_star), hi)
        if f0 <= 0:
            hi = np.where(flat, -1.0, hi)
    return hi - lo > 1e-12


def _spacing(resolution: float, k: int) -> float:
    """Sample spacing on the interfaces of strip k; coarsens with the strip width."""
    return resolution * max(1.0, strip_width(k) / strip_width(2))


def _frame(corners: np.ndarray):
    o = corners[0]
    e1 = corners[1] - o
    e1 = e1 / np.linalg.norm(e1)
    w = corners[-1] - o
    e2 = w - (w @ e1) * e1
    e2 = e2 / np.linalg.norm(e2)
    return o, e1, e2


def _sparse_links(a: np.ndarray, b: np.ndarray, excess: float):
    """Links from every sample in `a` to the bucket leaders among the ordered samples `b`.

    Returns (rows into a, rows into b, lengths).
    """
    start = b[0]
    span = b[-1] - start
    length = float(np.linalg.norm(span))
    direction = span / length
    tau = (b - start) @ direction
    t0 = np.clip((a - start) @ direction, 0.0, length)
    h = np.linalg.norm(a - (start + t0[:, None] * direction), axis=1)
    L = cdist(a, b)
    # detour of the chord to X(tau) against walking from the foot; grows away from the foot
    detour = np.maximum(np.abs(tau[None, :] - t0[:, None]) - L + h[:, None], 0.0)
    bucket = np.floor(detour / excess).astype(np.int64) + 1
    key = np.where(tau[None, :] >= t0[:, None], bucket, -bucket)
    edge = np.zeros((len(a), 1), dtype=np.int64)
    leads_forward = key != np.concatenate([edge, key[:, :-1]], axis=1)
    leads_backward = key != np.concatenate([key[:, 1:], edge], axis=1)
    pick = np.where(key > 0, leads_forward, leads_backward) & (L > 1e-12)
    ia, ib = np.nonzero(pick)
    return ia, ib, L[ia, ib]


def build_surface(n_max: int, resolution: Optional[float] = None, excess: Optional[float] = None) -> WrinkledSurface:
    """Build the wrinkled plane with prisms for strips 2..n_max.

    `resolution` is the sample spacing on strip 2 (coarser strips scale it
    by their width); `excess` bounds the extra length of an in-face detour
    and defaults to half the resolution.
    """
    if n_max < 2:
        raise DomainError("n_max must be at least 2")
    resolution = default_resolution(n_max) if resolution is None else resolution
    if not resolution > 0:
        raise DomainError("resolution must be positive")
    excess = resolution / 2 if excess is None else excess
    if not excess > 0:
        raise DomainError("excess must be positive")
    outer = float(n_max * (n_max + 1))
    box = 4.0 * n_max * n_max

    points: List[Tuple[float, float, float]] = []
    index: Dict[Tuple[float, float, float], int] = {}
    link_parts: List[np.ndarray] = []
    length_parts: List[np.ndarray] = []
    segments: List[Segment] = []

    def node(xyz) -> int:
        key = _key(xyz)
        if key not in index:
            index[key] = len(points)
            points.append(tuple(float(c) for c in xyz))
        return index[key]

    def segment(a, b, step: float) -> int:
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        length = float(np.linalg.norm(b - a))
        # even piece counts keep the diagonal points of valleys and ridges on the mesh
        pieces = 2 * max(1, math.ceil(length / (2 * step) - 1e-12))
        ids = np.array([node(a + (b - a) * i / pieces) for i in range(pieces + 1)])
        link_parts.append(np.column_stack([ids[:-1], ids[1:]]))
        length_parts.append(np.full(pieces, length / pieces))
        segments.append(Segment(a, b, ids))
        return len(segments) - 1

    lines = {}
    for k in range(2, n_max + 2):
        m = float(k * (k - 1))
        lines[k * (k - 1)] = segment((0.0, m, 0.0), (m, 0.0, 0.0), _spacing(resolution, max(2, k - 1)))

    faces: List[Face] = []
    flat_segments = [lines[2], lines[int(outer)]]
    strip_faces = []
    for k in range(2, n_max + 1):
        lo, mid, hi = float(k * (k - 1)), float(k * k), float(k * (k + 1))
        step = _spacing(resolution, k)
        ridge = segment((0.0, mid, 1.0), (mid, 0.0, 1.0), step)
        axis_x = segment((lo, 0.0, 0.0), (hi, 0.0, 0.0), step)
        axis_y = segment((0.0, lo, 0.0), (0.0, hi, 0.0), step)
        cap_x_in = segment((lo, 0.0, 0.0), (mid, 0.0, 1.0), step)
        cap_x_out = segment((mid, 0.0, 1.0), (hi, 0.0, 0.0), step)
        cap_y_in = segment((0.0, lo, 0.0), (0.0, mid, 1.0), step)
        cap_y_out = segment((0.0, mid, 1.0), (0.0, hi, 0.0), step)
        flat_segments += [axis_x, axis_y]
        strip_faces.append((k, [
            ("inner", [(lo, 0, 0), (mid, 0, 1), (0, mid, 1), (0, lo, 0)], (lines[k * (k - 1)], ridge, cap_x_in, cap_y_in)),
            ("outer", [(mid, 0, 1), (hi, 0, 0), (0, hi, 0), (0, mid, 1)], (ridge, lines[k * (k + 1)], cap_x_out, cap_y_out)),
            ("cap_x", [(lo, 0, 0), (hi, 0, 0), (mid, 0, 1)], (axis_x, cap_x_in, cap_x_out)),
            ("cap_y", [(0, lo, 0), (0, hi, 0), (0, mid, 1)], (axis_y, cap_y_in, cap_y_out)),
        ]))

    P = np.asarray(points, dtype=float)
    node_face = np.zeros(len(P), dtype=np.int64)
    faces.append(Face(0, "flat", 0, None, np.zeros(3), np.array([1.0, 0.0, 0.0]),
                      np.array([0.0, 1.0, 0.0]), tuple(flat_segments)))
    for k, specs in strip_faces:
        for kind, corners, segs in specs:
            corners = np.asarray(corners, dtype=float)
            o, e1, e2 = _frame(corners)
            face = Face(len(faces), kind, k, corners, o, e1, e2, segs)
            faces.append(face)
            for s in segs:
                node_face[segments[s].nodes] = face.face_id
            for i, s1 in enumerate(segs):
                for s2 in segs[i + 1:]:
                    for src, dst in ((s1, s2), (s2, s1)):
                        a, b = segments[src].nodes, segments[dst].nodes
                        ia, ib, lengths = _sparse_links(P[a], P[b], excess)
                        link_parts.append(np.column_stack([a[ia], b[ib]]))
                        length_parts.append(lengths)

    links = np.concatenate(link_parts).astype(np.int64)
    lengths = np.concatenate(length_parts)
    links = np.sort(links, axis=1)
    _, first = np.unique(links[:, 0] * len(P) + links[:, 1], return_index=True)
    surface = WrinkledSurface(n_max, resolution, box, faces, segments, P, links[first], lengths[first],
                              node_face, -1, index)
    surface, (origin,) = surface.with_points([SurfacePoint(0, (0.0, 0.0))])
    surface.origin_node = origin
    logger.info("wrinkled surface n_max=%d: %d faces, %d nodes, %d links",
                n_max, len(faces), surface.n_nodes, len(surface.links))
    return surface


def project(p: SurfacePoint, surface: WrinkledSurface) -> Tuple[float, float]:
    xyz = surface.xyz(p)
    return float(xyz[0]), float(xyz[1])


def wrinkles_crossed(surface: WrinkledSurface, a: Sequence[float], b: Sequence[float]) -> int:
    """Ridge bands (strips 2..n_max) entered by the planar segment a-b inside the quadrant."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    lo, hi = 0.0, 1.0
    for axis in range(2):
        if d[axis] == 0:
            if a[axis] < 0:
                return 0
            continue
        t = -a[axis] / d[axis]
        if d[axis] > 0:
            lo = max(lo, t)
        else:
            hi = min(hi, t)
    if hi < lo:
        return 0
    s1 = float((a + lo * d).sum())
    s2 = float((a + hi * d).sum())
    s_lo, s_hi = min(s1, s2), max(s1, s2)
    return sum(1 for k in range(2, surface.n_max + 1)
               if s_lo < k * (k + 1) and s_hi > k * (k - 1))


def projection_defect(surface: WrinkledSurface, p: SurfacePoint, q: SurfacePoint) -> Tuple[float, int]:
    d_mesh = surface.distance(p, q)
    pp, pq = project(p, surface), project(q, surface)
    planar = math.hypot(pp[0] - pq[0], pp[1] - pq[1])
    f = abs(d_mesh - planar)
    crossed = wrinkles_crossed(surface, pp, pq)
    allowance = 2 * crossed + 4 * surface.resolution * (crossed + 1)
    if f > allowance + TOL:
        raise InvariantViolation(
            f"projection defect {f:.6g} exceeds {allowance:.6g} for {crossed} wrinkles")
    return f, crossed


@dataclass(frozen=True)
class RidgeCrossing:
    crossings: int
    length: float
    lower_bound: float
    ok: bool


def ridge_crossing_check(surface: WrinkledSurface, u: int, v: int) -> RidgeCrossing:
    """Shortest mesh path u -> v against the lower bounds for crossing ridges."""
    xyz = surface.points[surface.node_path(u, v)]
    length = float(np.linalg.norm(np.diff(xyz, axis=0), axis=1).sum())
    sums = xyz[:, 0] + xyz[:, 1]
    s_lo, s_hi = float(sums.min()), float(sums.max())
    n = sum(1 for k in range(2, surface.n_max + 1) if s_lo < k * k - _EPS and s_hi > k * k + _EPS)
    bound = (s_hi - s_lo) / SQRT2
    if n >= 2:
        bound = max(bound, n * n / 2)
    return RidgeCrossing(n, length, bound, length >= bound - TOL)


def triangle_Tn(surface: WrinkledSurface, n: int) -> Tuple[int, int, int]:
    """Mesh nodes at the origin, (0, n(n+1)) and (n(n+1), 0)."""
    if not 1 <= n <= surface.n_max:
        raise DomainError(f"T_n needs 1 <= n <= n_max={surface.n_max}")
    m = float(n * (n + 1))
    ids = (surface.origin_node, surface.node_at(0.0, m), surface.node_at(m, 0.0))
    if None in ids:
        raise DomainError(f"corner nodes of T_{n} are missing from the mesh")
    return ids


def Tn_witness_bound(surface: WrinkledSurface, n: int) -> float:
    """Floor for the midpoint-witness defect of T_n on this mesh: gap(n) - 4 * resolution."""
    gap = divergence_gap(n)[0] if n >= 2 else 0.0
    return gap - 4.0 * surface.resolution


def fit_sqrt_law(distances: Sequence[float], defects: Sequence[float]) -> Tuple[float, float]:
    """Least-squares slope A, with B raised until every sample satisfies f <= A*sqrt(d) + B."""
    d = np.sqrt(np.asarray(distances, dtype=float))
    f = np.asarray(defects, dtype=float)
    if len(d) < 2:
        return 0.0, float(f.max(initial=0.0))
    A, B = np.polyfit(d, f, 1)
    B = B + float(np.max(f - (A * d + B)))
    return float(A), float(B)
