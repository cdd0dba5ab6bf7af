"""
Euclidean comparison objects and the inequalities tested against them.

Comparison triangles and points, the sampled delta-CAT(0) defect, the
convex comparison quadrilateral with Alexandrov unbending, the four-point
test, the CN midpoint inequality, and the median / tail-extension algebra
used to show that tree-graded limits are CAT(0).
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .metric_core import TOL, EXACT_TOL, DomainError, MetricPoint, MetricSpace

logger = logging.getLogger(__name__)

SIDES = ("PQ", "QR", "PR")


@dataclass(frozen=True)
class TriangleSides:
    """a = |QR|, b = |PR|, c = |PQ|."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        a, b, c = self.a, self.b, self.c
        if min(a, b, c) < 0:
            raise DomainError(f"negative side length in {(a, b, c)}")
        if a > b + c + EXACT_TOL or b > a + c + EXACT_TOL or c > a + b + EXACT_TOL:
            raise DomainError(f"triangle inequality violated by {(a, b, c)}")


@dataclass(frozen=True)
class ComparisonTriangle:
    sides: TriangleSides
    P: Tuple[float, float]
    Q: Tuple[float, float]
    R: Tuple[float, float]

    def vertex(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)


@dataclass(frozen=True)
class ComparisonQuadrilateral:
    vertices: Tuple[Tuple[float, float], ...]
    convex: bool
    unbent: bool = False
    hinged_diagonals: Tuple[float, float] = (0.0, 0.0)

    def diagonal(self, i: int, j: int) -> float:
        a, b = self.vertices[i], self.vertices[j]
        return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass
class DefectReport:
    delta: float
    witness: Tuple[Tuple[str, float], Tuple[str, float]]
    samples: int
    grid: int = 0

    def to_dict(self) -> Dict:
        return {
            "delta": self.delta,
            "witness": [list(self.witness[0]), list(self.witness[1])],
            "samples": self.samples,
        }


def comparison_triangle(sides: TriangleSides) -> ComparisonTriangle:
    a, b, c = sides.a, sides.b, sides.c
    if c > 0:
        rx = (b * b + c * c - a * a) / (2 * c)
        ry = math.sqrt(max(b * b - rx * rx, 0.0))
    else:
        rx, ry = b, 0.0
    return ComparisonTriangle(sides, (0.0, 0.0), (c, 0.0), (rx, ry))


def comparison_point(tri: ComparisonTriangle, side: str, t: float) -> np.ndarray:
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"comparison parameter t={t} outside [0, 1]")
    if side not in SIDES:
        raise DomainError(f"unknown side '{side}'")
    start, end = tri.vertex(side[0]), tri.vertex(side[1])
    return start + (end - start) * t


def triangle_defect(space: MetricSpace, x: MetricPoint, y: MetricPoint, z: MetricPoint, grid: int = 64) -> DefectReport:
    """Largest sampled excess d(p, q) - |p̄ q̄| over points on two different sides.

    Sides are PQ = [x, y], QR = [y, z], PR = [x, z], each sampled at
    t = i / grid along a geodesic supplied by the space.
    """
    if grid < 1:
        raise DomainError("grid must be a positive integer")
    ends = {"PQ": (x, y), "QR": (y, z), "PR": (x, z)}
    d_xy, d_yz, d_xz = space.distance(x, y), space.distance(y, z), space.distance(x, z)
    tri = comparison_triangle(TriangleSides(a=d_yz, b=d_xz, c=d_xy))
    samples = {s: space.side_samples(*ends[s], grid) for s in SIDES}

    best, witness, n = 0.0, (("PQ", 0.0), ("QR", 0.0)), 0
    first = True
    for i, s1 in enumerate(SIDES):
        for s2 in SIDES[i + 1:]:
            ts1 = [t for t, _ in samples[s1]]
            ts2 = [t for t, _ in samples[s2]]
            actual = space.pairwise([p for _, p in samples[s1]], [q for _, q in samples[s2]])
            bar1 = np.array([comparison_point(tri, s1, t) for t in ts1])
            bar2 = np.array([comparison_point(tri, s2, t) for t in ts2])
            planar = np.hypot(bar1[:, None, 0] - bar2[None, :, 0], bar1[:, None, 1] - bar2[None, :, 1])
            excess = actual - planar
            n += excess.size
            k = np.unravel_index(int(np.argmax(excess)), excess.shape)
            if first or excess[k] > best:
                best = float(excess[k])
                witness = ((s1, ts1[k[0]]), (s2, ts2[k[1]]))
                first = False
    delta = max(best, 0.0)
    logger.debug("triangle defect %.3g on %s over %d samples", delta, space.tag, n)
    return DefectReport(delta=delta, witness=witness, samples=n, grid=grid)


def _place_apex(base_a: np.ndarray, base_b: np.ndarray, da: float, db: float, sign: float) -> np.ndarray:
    """Point at distance da from base_a and db from base_b, on the `sign` side of a->b."""
    L = float(np.linalg.norm(base_b - base_a))
    u = (base_b - base_a) / L
    n = np.array([-u[1], u[0]])
    along = (da * da + L * L - db * db) / (2 * L)
    h = math.sqrt(max(da * da - along * along, 0.0))
    return base_a + along * u + sign * h * n


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _is_convex(pts: Sequence[np.ndarray]) -> bool:
    signs = [_cross(pts[k], pts[(k + 1) % 4], pts[(k + 2) % 4]) for k in range(4)]
    scale = max(1.0, max(float(np.max(np.abs(p))) for p in pts)) ** 2
    return all(s >= -1e-9 * scale for s in signs) or all(s <= 1e-9 * scale for s in signs)


def _angle(at: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    u, v = a - at, b - at
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < EXACT_TOL or nv < EXACT_TOL:
        return 0.0
    return math.acos(max(-1.0, min(1.0, float(u @ v) / (nu * nv))))


def quadrilateral_comparison(d12: float, d23: float, d34: float, d41: float, d13: float) -> ComparisonQuadrilateral:
    TriangleSides(d23, d13, d12)
    TriangleSides(d34, d13, d41)
    x1 = np.array([0.0, 0.0])
    x3 = np.array([d13, 0.0])
    if d13 > 0:
        x2 = _place_apex(x1, x3, d12, d23, +1.0)
        x4 = _place_apex(x1, x3, d41, d34, -1.0)
    else:
        x2 = np.array([0.0, d12])
        x4 = np.array([0.0, -d41])
    hinged = (d13, float(np.linalg.norm(x2 - x4)))
    pts = [x1, x2, x3, x4]
    if _is_convex(pts):
        return ComparisonQuadrilateral(tuple(tuple(p.tolist()) for p in pts), True, False, hinged)

    # reflex hinge: straighten it so that the reflex vertex sits on the opposite diagonal
    reflex = 0 if _angle(x1, x2, x3) + _angle(x1, x3, x4) > _angle(x3, x2, x1) + _angle(x3, x1, x4) else 2
    if reflex == 0:
        span = d12 + d41
        y2 = np.array([0.0, 0.0])
        y4 = np.array([span, 0.0])
        y3 = _place_apex(y2, y4, d23, d34, +1.0) if span > 0 else np.array([0.0, d23])
        y1 = y2 + (y4 - y2) * (d12 / span if span > 0 else 0.0)
    else:
        span = d23 + d34
        y2 = np.array([0.0, 0.0])
        y4 = np.array([span, 0.0])
        y1 = _place_apex(y2, y4, d12, d41, -1.0) if span > 0 else np.array([0.0, -d12])
        y3 = y2 + (y4 - y2) * (d23 / span if span > 0 else 0.0)
    pts = [y1, y2, y3, y4]
    logger.debug("unbent reflex hinge at x%d", reflex + 1)
    return ComparisonQuadrilateral(tuple(tuple(p.tolist()) for p in pts), _is_convex(pts), True, hinged)


def _pair(d: Dict, i: int, j: int) -> float:
    return d[(i, j)] if (i, j) in d else d[(j, i)]


def _as_distance_dict(d) -> Dict[Tuple[int, int], float]:
    if isinstance(d, dict):
        return {tuple(k): float(v) for k, v in d.items()}
    d12, d13, d14, d23, d24, d34 = d
    return {(1, 2): d12, (1, 3): d13, (1, 4): d14, (2, 3): d23, (2, 4): d24, (3, 4): d34}


def four_point_defect(d, order: Tuple[int, int, int, int] = (1, 2, 3, 4)) -> float:
    """CAT(0) four-point excess for the cyclic order `order`.

    `d` is either a dict keyed by index pairs or the tuple
    (d12, d13, d14, d23, d24, d34).
    """
    dist = _as_distance_dict(d)
    a, b, c, e = order
    try:
        quad = quadrilateral_comparison(_pair(dist, a, b), _pair(dist, b, c), _pair(dist, c, e),
                                        _pair(dist, e, a), _pair(dist, a, c))
    except DomainError as err:
        raise DomainError(f"inconsistent distances for four-point test: {err}") from err
    excess = max(_pair(dist, a, c) - quad.diagonal(0, 2), _pair(dist, b, e) - quad.diagonal(1, 3))
    return max(excess, 0.0)


PAIRINGS = ((1, 2, 3, 4), (1, 3, 2, 4), (1, 2, 4, 3))


def four_point_all_pairings(d) -> List[float]:
    return [four_point_defect(d, order) for order in PAIRINGS]


def cn_inequality_residual(dpr: float, dqr: float, dmr: float, dpq: float) -> float:
    return dpr * dpr + dqr * dqr - 2 * dmr * dmr - dpq * dpq / 2


@dataclass(frozen=True)
class MedianCase:
    h: float
    h_prime: float
    gap: float
    closed_form: float


def median_case1(a: float, b: float, c: float, p: float, q: float) -> MedianCase:
    """Medians before and after attaching tails p, q to the base of a triangle.

    (a, b, c) are |A'B'|, |A'C'|, |B'C'|; the base is extended by p past B'
    and by q past C', and h, h' are the distances from the apex to the
    midpoint of the extended base in the two comparison figures.
    """
    TriangleSides(c, b, a)
    if p < 0 or q < 0:
        raise DomainError("tail lengths must be nonnegative")
    if c == 0:
        if p != q:
            raise DomainError("degenerate base with unequal tails")
        shift = 0.0
    else:
        if abs(q - p) > c + EXACT_TOL:
            raise DomainError(f"|q - p| = {abs(q - p)} exceeds base length {c}")
        shift = ((q - p) / 2) * ((b * b - a * a) / c)
    core = (2 * a * a + 2 * b * b - c * c) / 4 + (q - p) ** 2 / 4
    h_prime_sq = core + shift
    h_sq = core + (4 * a * p + 4 * b * q - 2 * p * c - 2 * c * q) / 4
    closed = 0.0 if c == 0 else (p * (b * b - (a - c) ** 2) + q * (a * a - (b - c) ** 2)) / (2 * c)
    gap = h_sq - h_prime_sq
    return MedianCase(math.sqrt(max(h_sq, 0.0)), math.sqrt(max(h_prime_sq, 0.0)), gap, closed)


def median_case1_oracle(a: float, b: float, c: float, p: float, q: float) -> Tuple[float, float]:
    """(h, h') from explicit planar constructions, independent of the algebra."""
    small = comparison_triangle(TriangleSides(a=c, b=b, c=a))
    # small: P = A', Q = B', R = C'
    x = (c + q - p) / 2
    m1 = small.vertex("Q") + (small.vertex("R") - small.vertex("Q")) * (x / c if c > 0 else 0.0)
    h_prime = float(np.linalg.norm(m1 - small.vertex("P")))
    big = comparison_triangle(TriangleSides(a=p + c + q, b=b + q, c=a + p))
    m = (big.vertex("Q") + big.vertex("R")) / 2
    h = float(np.linalg.norm(m - big.vertex("P")))
    return h, h_prime


@dataclass(frozen=True)
class TailCheck:
    h: float
    h_prime_plus_r: float
    ok: bool
    reduction: float


def tail_extension_check(alpha: float, beta: float, gamma: float, r: float) -> TailCheck:
    if min(alpha, beta, gamma) < 0 or r < 0:
        raise DomainError("lengths must be nonnegative")
    disc = 2 * alpha ** 2 + 2 * beta ** 2 - gamma ** 2
    if disc < -EXACT_TOL:
        raise DomainError(f"negative discriminant {disc}: triangle inequality fails")
    a2, b2 = alpha + r, beta + r
    h_prime_plus_r = math.sqrt(max(disc, 0.0) / 4) + r
    h = math.sqrt(max(2 * a2 ** 2 + 2 * b2 ** 2 - gamma ** 2, 0.0) / 4)
    reduction = (alpha - beta) ** 2 - gamma ** 2
    return TailCheck(h, h_prime_plus_r, h_prime_plus_r <= h + TOL, reduction)
