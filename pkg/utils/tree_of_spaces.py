"""
Trees of spaces: vertex-space blocks over a truncated tree, joined by
A x [0, 1] strips.

Blocks are laid out first (one copy per tree node, in node order), strips
after them, so two gluings over the same tree share block vertex ids.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .metric_core import (
    EXACT_TOL,
    TOL,
    DomainError,
    GraphSpace,
    MetricGraph,
    distance_rows,
    is_connected,
)

logger = logging.getLogger(__name__)


def _all_distances(g: MetricGraph) -> np.ndarray:
    if g.n_vertices == 0:
        return np.zeros((0, 0))
    return distance_rows(g, list(range(g.n_vertices)))


@dataclass
class GluingSpec:
    """Vertex spaces X1, X2, edge space A and the embeddings of A into them."""

    X1: MetricGraph
    X2: MetricGraph
    A: MetricGraph
    embed1: Sequence[int]
    embed2: Sequence[int]

    def validate(self, hnn: bool = False):
        target2 = self.X1 if hnn else self.X2
        dA = _all_distances(self.A)
        for name, emb, X in (("embed1", self.embed1, self.X1), ("embed2", self.embed2, target2)):
            if len(emb) != self.A.n_vertices:
                raise DomainError(f"{name} has {len(emb)} images for {self.A.n_vertices} vertices of A")
            if len(set(emb)) != len(emb):
                raise DomainError(f"{name} is not injective")
            if any(not 0 <= v < X.n_vertices for v in emb):
                raise DomainError(f"{name} maps outside its vertex space")
            dX = distance_rows(X, list(emb))[:, list(emb)] if len(emb) else np.zeros((0, 0))
            if dX.shape != dA.shape or np.any(np.abs(np.nan_to_num(dX - dA, nan=0.0)) > EXACT_TOL) \
                    or np.any(np.isinf(dX) != np.isinf(dA)):
                raise DomainError(f"{name} does not preserve distances of A")


@dataclass
class TreeBall:
    """Ball of radius `radius` in a tree with uniform branching; node 0 is the root."""

    parent: List[Optional[int]]
    depth: List[int]
    types: List[str]

    @property
    def n_nodes(self) -> int:
        return len(self.parent)

    @property
    def edges(self) -> List[Tuple[int, int]]:
        return [(p, c) for c, p in enumerate(self.parent) if p is not None]

    def path(self, u: int, v: int) -> List[int]:
        up, down = [u], [v]
        while up[-1] != down[-1]:
            if self.depth[up[-1]] >= self.depth[down[-1]]:
                up.append(self.parent[up[-1]])
            else:
                down.append(self.parent[down[-1]])
        return up + down[-2::-1]


def build_tree_ball(branching: int, radius: int, root_type: str = "X1", hnn: bool = False) -> TreeBall:
    if branching < 1 or radius < 0:
        raise DomainError("branching must be >= 1 and radius >= 0")
    if root_type not in ("X1", "X2"):
        raise DomainError(f"unknown root type '{root_type}'")
    if hnn:
        root_type = "X1"
    parent: List[Optional[int]] = [None]
    depth = [0]
    types = [root_type]
    frontier = [0]
    for d in range(1, radius + 1):
        nxt = []
        for p in frontier:
            for _ in range(branching):
                parent.append(p)
                depth.append(d)
                types.append("X1" if hnn else ("X2" if types[p] == "X1" else "X1"))
                nxt.append(len(parent) - 1)
        frontier = nxt
    return TreeBall(parent, depth, types)


@dataclass
class TreeOfSpaces:
    graph: MetricGraph
    tree: TreeBall
    blocks: List[np.ndarray]
    # edge (keyed by its child node) -> (node glued by embed1, node glued by embed2)
    ends: Dict[int, Tuple[int, int]]
    interfaces: Dict[int, Tuple[np.ndarray, np.ndarray]]
    strip_vertices: Dict[Tuple[int, int, int], int]
    X1: MetricGraph
    X2: MetricGraph
    A: MetricGraph
    embed1: Tuple[int, ...]
    embed2: Tuple[int, ...]
    strip_steps: int
    hnn: bool = False
    owner: np.ndarray = field(init=False, repr=False)
    _local: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.owner = np.full(self.graph.n_vertices, -1, dtype=int)
        self._local = np.full(self.graph.n_vertices, -1, dtype=int)
        for n, ids in enumerate(self.blocks):
            self.owner[ids] = n
            self._local[ids] = np.arange(len(ids))

    def block_of(self, v: int) -> Optional[int]:
        n = int(self.owner[v])
        return None if n < 0 else n

    def local_index(self, v: int) -> int:
        return int(self._local[v])

    def vertex_space(self, node: int) -> MetricGraph:
        return self.X1 if self.tree.types[node] == "X1" else self.X2

    def space(self, basepoint: int = 0) -> GraphSpace:
        return GraphSpace(self.graph, tag="tree_of_spaces", basepoint=basepoint)

    def block_map(self) -> Dict:
        nodes = []
        for n in range(self.tree.n_nodes):
            nodes.append({
                "node": n,
                "type": self.tree.types[n],
                "parent": self.tree.parent[n],
                "vertices": self.blocks[n].tolist(),
            })
        edges = [{
            "child": c,
            "end1": self.ends[c][0],
            "end2": self.ends[c][1],
            "interface1": self.interfaces[c][0].tolist(),
            "interface2": self.interfaces[c][1].tolist(),
        } for c in sorted(self.ends)]
        return {"hnn": self.hnn, "strip_steps": self.strip_steps, "nodes": nodes, "edges": edges}


def _glue(tree: TreeBall, X1: MetricGraph, X2: MetricGraph, A: MetricGraph, embed1: Sequence[int],
          embed2: Sequence[int], strip_steps: int, hnn: bool) -> TreeOfSpaces:
    points: List[Tuple[float, ...]] = []
    edges: List[Tuple[int, int, float]] = []
    blocks = []
    for n, kind in enumerate(tree.types):
        X = X1 if kind == "X1" else X2
        base = len(points)
        points.extend((float(n), float(v)) for v in range(X.n_vertices))
        edges.extend((base + i, base + j, w) for i, j, w in X.edges)
        blocks.append(np.arange(base, base + X.n_vertices))

    ends, interfaces, strip_vertices = {}, {}, {}
    m = A.n_vertices
    for p, c in tree.edges:
        if hnn or tree.types[p] == "X1":
            end1, end2 = p, c
        else:
            end1, end2 = c, p
        lo = blocks[end1][list(embed1)] if m else np.zeros(0, dtype=int)
        hi = blocks[end2][list(embed2)] if m else np.zeros(0, dtype=int)
        levels = [lo]
        for j in range(1, strip_steps):
            ids = []
            for a in range(m):
                points.append((float(c), float(a), j / strip_steps))
                ids.append(len(points) - 1)
                strip_vertices[(c, a, j)] = ids[-1]
            levels.append(np.array(ids, dtype=int))
        levels.append(hi)
        for level in levels[1:-1]:
            edges.extend((int(level[a]), int(level[b]), w) for a, b, w in A.edges)
        for j in range(strip_steps):
            for a in range(m):
                edges.append((int(levels[j][a]), int(levels[j + 1][a]), 1.0 / strip_steps))
        ends[c] = (end1, end2)
        interfaces[c] = (lo, hi)

    graph = MetricGraph(points, edges)
    logger.info("glued %d blocks and %d strips into %d vertices", tree.n_nodes, len(ends), graph.n_vertices)
    return TreeOfSpaces(graph, tree, blocks, ends, interfaces, strip_vertices, X1, X2, A,
                        tuple(embed1), tuple(embed2), strip_steps, hnn)


def build_amalgam_space(spec: GluingSpec, branching: int, radius: int, strip_steps: int = 1,
                        hnn: bool = False, root_type: str = "X1") -> TreeOfSpaces:
    """Tree of spaces for an amalgam (or, with `hnn`, an HNN extension).

    In HNN mode every block is a copy of X1 and both embeddings land in X1:
    embed1 on the parent side of each strip, embed2 on the child side.
    """
    if strip_steps < 1:
        raise DomainError("strip_steps must be >= 1")
    if spec.A.n_vertices == 0:
        raise DomainError("edge space A must be nonempty")
    spec.validate(hnn)
    tree = build_tree_ball(branching, radius, root_type, hnn)
    Z = _glue(tree, spec.X1, spec.X1 if hnn else spec.X2, spec.A, spec.embed1, spec.embed2, strip_steps, hnn)
    if not is_connected(Z.graph):
        raise DomainError("glued space is disconnected; vertex spaces must be connected")
    return Z


@dataclass
class DecompositionReport:
    dijkstra: float
    decomposition: float
    ok: bool
    tree_path: List[int]

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


def geodesic_decomposition_check(Z: TreeOfSpaces, p: int, q: int, tol: float = TOL) -> DecompositionReport:
    """Compare the graph distance with the best chain of block legs and strip crossings.

    Legs run inside the blocks along the tree path from p's block to q's;
    crossing a strip from a to b costs d_A(a, b) + 1.
    """
    np_, nq = Z.block_of(p), Z.block_of(q)
    if np_ is None or nq is None:
        raise DomainError("decomposition endpoints must be block vertices")
    dist = {"X1": _all_distances(Z.X1), "X2": _all_distances(Z.X2)}
    dA = _all_distances(Z.A)
    tree_path = Z.tree.path(np_, nq)
    cost = dist[Z.tree.types[np_]][Z.local_index(p)]
    for u, w in zip(tree_path, tree_path[1:]):
        edge = w if Z.tree.parent[w] == u else u
        if Z.ends[edge][0] == u:
            emb_u, emb_w = Z.embed1, Z.embed2
        else:
            emb_u, emb_w = Z.embed2, Z.embed1
        at_interface = cost[list(emb_u)]
        crossed = (at_interface[:, None] + dA + 1.0).min(axis=0)
        cost = (crossed[:, None] + dist[Z.tree.types[w]][list(emb_w)]).min(axis=0)
    decomposition = float(cost[Z.local_index(q)])
    exact = float(distance_rows(Z.graph, [p])[0][q])
    ok = abs(exact - decomposition) <= tol
    if not ok:
        logger.warning("decomposition %.12g differs from graph distance %.12g", decomposition, exact)
    return DecompositionReport(exact, decomposition, ok, tree_path)


def measure_distortion(Z: MetricGraph, Z_tilde: MetricGraph, mapping: Sequence[int]) -> float:
    """Exhaustive sup over vertex pairs of |d_Z(u, v) - d_Z~(f(u), f(v))|."""
    if len(mapping) != Z.n_vertices:
        raise DomainError("mapping must cover every vertex of Z")
    dz = _all_distances(Z)
    dt = _all_distances(Z_tilde)
    f = np.asarray(mapping, dtype=int)
    return float(np.max(np.abs(dz - dt[np.ix_(f, f)])))


@dataclass
class FiniteAmalgam:
    Z: TreeOfSpaces
    Z_tilde: TreeOfSpaces
    mapping: np.ndarray
    epsilon: float
    distortion: float

    def to_dict(self) -> Dict:
        return {"vertices": self.Z.graph.n_vertices, "epsilon": self.epsilon, "distortion": self.distortion}


def _orbit_diameter(X: MetricGraph, orbit: Sequence[int]) -> float:
    if len(set(orbit)) < 2:
        return 0.0
    return float(distance_rows(X, list(orbit))[:, list(orbit)].max())


def build_finite_edge_amalgam(X1: MetricGraph, X2: MetricGraph, orbit1: Sequence[int], orbit2: Sequence[int],
                              branching: int, radius: int, strip_steps: int = 2) -> FiniteAmalgam:
    """Glue unit intervals over the m orbit points, and compare with the one-point gluing.

    The comparison map is the identity on blocks and sends a strip point
    over orbit index c to the same height over index 0. Its distortion is
    measured exhaustively and reported next to the additive constant
    epsilon = 2 * max(diam orbit1, diam orbit2) + 2.
    """
    if len(orbit1) != len(orbit2) or not orbit1:
        raise DomainError("orbits must be nonempty and of equal size")
    for name, orbit, X in (("orbit1", orbit1, X1), ("orbit2", orbit2, X2)):
        if any(not 0 <= v < X.n_vertices for v in orbit):
            raise DomainError(f"{name} has a vertex outside its space")
    if strip_steps < 1:
        raise DomainError("strip_steps must be >= 1")
    tree = build_tree_ball(branching, radius)
    m = len(orbit1)
    discrete = MetricGraph([()] * m, [])
    Z = _glue(tree, X1, X2, discrete, orbit1, orbit2, strip_steps, False)
    Zt = _glue(tree, X1, X2, MetricGraph([()], []), orbit1[:1], orbit2[:1], strip_steps, False)
    for g in (Z.graph, Zt.graph):
        if not is_connected(g):
            raise DomainError("glued space is disconnected; vertex spaces must be connected")

    mapping = np.arange(Z.graph.n_vertices)
    for (c, a, j), v in Z.strip_vertices.items():
        mapping[v] = Zt.strip_vertices[(c, 0, j)]
    epsilon = 2.0 * max(_orbit_diameter(X1, orbit1), _orbit_diameter(X2, orbit2)) + 2.0
    distortion = measure_distortion(Z.graph, Zt.graph, mapping)
    if distortion > epsilon + TOL:
        logger.warning("measured distortion %.6g exceeds epsilon %.6g", distortion, epsilon)
    return FiniteAmalgam(Z, Zt, mapping, epsilon, distortion)


def metric_axiom_violation(Z: TreeOfSpaces, triples: int, seed: int = 0) -> float:
    """Largest triangle-inequality excess over random vertex triples."""
    rng = np.random.default_rng(seed)
    n = Z.graph.n_vertices
    picks = rng.integers(0, n, size=(triples, 3))
    sources = sorted(set(picks[:, :2].ravel().tolist()))
    rows = distance_rows(Z.graph, sources)
    index = {v: k for k, v in enumerate(sources)}
    worst = 0.0
    for x, y, z in picks:
        dxy = rows[index[x]][y]
        dxz = rows[index[x]][z]
        dyz = rows[index[y]][z]
        worst = max(worst, dxz - dxy - dyz, abs(dxy - rows[index[y]][x]))
    if not math.isfinite(worst):
        raise DomainError("glued space has infinite distances")
    return float(worst)
