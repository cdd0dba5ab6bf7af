"""
Circumradii, approximate circumcenter sets and their iterated contraction.

On the Euclidean plane the minimal enclosing ball is computed exactly.
Elsewhere the center set C(Y) is the slack-fattened minimizer set over a
finite candidate list, which is never empty.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .metric_core import TOL, DomainError, EuclideanPlane, InvariantViolation, MetricPoint, MetricSpace

logger = logging.getLogger(__name__)

_EPS = 1 + 1e-14


@dataclass(frozen=True)
class BoundedSet:
    points: Tuple[MetricPoint, ...]

    def __post_init__(self):
        if not self.points:
            raise DomainError("bounded sets must be nonempty")
        tags = {p.space_tag for p in self.points}
        if len(tags) != 1:
            raise DomainError(f"mixed-space set: {sorted(tags)}")


@dataclass
class CenterResult:
    radius: float
    centers: List[MetricPoint]
    slack: float
    eccentricities: List[float] = field(default_factory=list)
    # filled in when iterate_barycenters is given a defect profile
    defect: Optional[float] = None
    diameter: Optional[float] = None
    diameter_bound: Optional[float] = None


# --- exact planar ball ----------------------------------------------------

Circle = Tuple[float, float, float]


def _diameter_circle(a, b) -> Circle:
    cx, cy = (a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0
    return cx, cy, max(math.hypot(cx - a[0], cy - a[1]), math.hypot(cx - b[0], cy - b[1]))


def _circumcircle(a, b, c) -> Optional[Circle]:
    ox = (min(a[0], b[0], c[0]) + max(a[0], b[0], c[0])) / 2.0
    oy = (min(a[1], b[1], c[1]) + max(a[1], b[1], c[1])) / 2.0
    ax, ay = a[0] - ox, a[1] - oy
    bx, by = b[0] - ox, b[1] - oy
    cx, cy = c[0] - ox, c[1] - oy
    d = (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by)) * 2.0
    if d == 0.0:
        return None
    x = ox + ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) + (cx * cx + cy * cy) * (ay - by)) / d
    y = oy + ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) + (cx * cx + cy * cy) * (bx - ax)) / d
    r = max(math.hypot(x - p[0], y - p[1]) for p in (a, b, c))
    return x, y, r


def _inside(c: Optional[Circle], p) -> bool:
    return c is not None and math.hypot(p[0] - c[0], p[1] - c[1]) <= c[2] * _EPS


def _cross(x0, y0, x1, y1, x2, y2) -> float:
    return (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)


def _circle_two(pts, p, q) -> Circle:
    circ = _diameter_circle(p, q)
    left = right = None
    for r in pts:
        if _inside(circ, r):
            continue
        cross = _cross(p[0], p[1], q[0], q[1], r[0], r[1])
        c = _circumcircle(p, q, r)
        if c is None:
            continue
        side = _cross(p[0], p[1], q[0], q[1], c[0], c[1])
        if cross > 0 and (left is None or side > _cross(p[0], p[1], q[0], q[1], left[0], left[1])):
            left = c
        elif cross < 0 and (right is None or side < _cross(p[0], p[1], q[0], q[1], right[0], right[1])):
            right = c
    if left is None and right is None:
        return circ
    if left is None:
        return right
    if right is None:
        return left
    return left if left[2] <= right[2] else right


def _circle_one(pts, p) -> Circle:
    c = (p[0], p[1], 0.0)
    for i, q in enumerate(pts):
        if not _inside(c, q):
            c = _diameter_circle(p, q) if c[2] == 0.0 else _circle_two(pts[: i + 1], p, q)
    return c


def minimal_enclosing_ball(points: Sequence[Sequence[float]], seed: int = 0) -> Tuple[np.ndarray, float]:
    """Welzl's randomized incremental construction, unrolled into loops."""
    if len(points) == 0:
        raise DomainError("minimal enclosing ball of an empty set")
    pts = [(float(p[0]), float(p[1])) for p in points]
    np.random.default_rng(seed).shuffle(pts)
    c: Optional[Circle] = None
    for i, p in enumerate(pts):
        if c is None or not _inside(c, p):
            c = _circle_one(pts[: i + 1], p)
    return np.array([c[0], c[1]]), float(c[2])


# --- center sets ----------------------------------------------------------


def circumradius(space: MetricSpace, Y: BoundedSet, candidates: Optional[Sequence[MetricPoint]] = None,
                 slack: float = TOL) -> CenterResult:
    """Radius of the smallest ball around a candidate containing Y, with its center set.

    Without candidates the space must be the Euclidean plane, where the
    exact ball is used and the center is unique.
    """
    if not slack > 0:
        raise DomainError("slack must be positive")
    if candidates is None:
        if not isinstance(space, EuclideanPlane):
            raise DomainError(f"space '{space.tag}' needs an explicit candidate set")
        center, radius = minimal_enclosing_ball([p.coords for p in Y.points])
        return CenterResult(radius, [space.point(float(center[0]), float(center[1]))], slack, [radius])
    if len(candidates) == 0:
        raise DomainError("empty candidate set")
    ecc = space.pairwise(list(candidates), list(Y.points)).max(axis=1)
    radius = float(ecc.min())
    centers = [c for c, e in zip(candidates, ecc) if e <= radius + slack]
    return CenterResult(radius, centers, slack, ecc.tolist())


def barycenter_diameter_bound(r: float, f_r: float) -> float:
    if f_r < 0 or r < 0:
        raise DomainError("radius and defect must be nonnegative")
    if f_r > r:
        raise DomainError(f"defect {f_r} exceeds radius {r}")
    return 2.0 * math.sqrt(max(0.0, 2.0 * r * f_r - f_r * f_r))


def fattened_diameter_bound(r: float, f_r: float, slack: float) -> float:
    """Diameter bound for a center set fattened by `slack`.

    Every center lies within r + slack of Y and is a (f_r + 2*slack)-barycenter
    at that radius, so the plain bound applies with both arguments shifted.
    It reduces to barycenter_diameter_bound(r, f_r) as slack goes to zero.
    """
    R = r + slack
    return barycenter_diameter_bound(R, min(f_r + 2.0 * slack, R))


def center_set_diameter(space: MetricSpace, result: CenterResult) -> float:
    if len(result.centers) < 2:
        return 0.0
    return float(space.pairwise(result.centers, result.centers).max())


def iterate_barycenters(space: MetricSpace, Y: BoundedSet, a: float,
                        candidates: Optional[Sequence[MetricPoint]] = None, slack: float = TOL,
                        defect: Optional[Callable[[float], float]] = None) -> List[CenterResult]:
    """Replace Y by its center set until the radius drops below `a`.

    The step cap is ceil(log4(r0 / a)) + 2. When `defect` (a measured defect
    profile) is given, every step is checked against it: the center set
    diameter must respect fattened_diameter_bound, and wherever f(r) < r/32
    above `a` the next radius must be at most r/4 + 2*slack. Exhausting the
    cap while the profile stays below r/32 is also a violation.
    """
    if not a > 0:
        raise DomainError("threshold a must be positive")
    history = [circumradius(space, Y, candidates, slack)]
    r0 = history[0].radius
    cap = math.ceil(math.log(r0 / a, 4)) + 2 if r0 >= a else 0
    while history[-1].radius >= a and len(history) - 1 < cap:
        nxt = BoundedSet(tuple(history[-1].centers))
        history.append(circumradius(space, nxt, candidates, slack))
        logger.debug("step %d radius %.6g centers %d", len(history) - 1, history[-1].radius,
                     len(history[-1].centers))
    if defect is not None:
        _check_against_profile(space, history, a, slack, defect)
        visited = [h for h in history if h.radius > a]
        if history[-1].radius >= a and visited and all(h.defect < h.radius / 32.0 for h in visited):
            raise InvariantViolation(
                f"radius {history[-1].radius:.6g} still above {a} after {cap} steps "
                f"although the defect profile is below r/32 on the visited radii"
            )
    return history


def _check_against_profile(space: MetricSpace, history: List[CenterResult], a: float, slack: float,
                           defect: Callable[[float], float]):
    for k, h in enumerate(history):
        h.defect = max(0.0, float(defect(h.radius)))
        h.diameter = center_set_diameter(space, h)
        h.diameter_bound = fattened_diameter_bound(h.radius, h.defect, slack)
        if h.diameter > h.diameter_bound + TOL:
            raise InvariantViolation(
                f"step {k}: center set diameter {h.diameter:.6g} exceeds {h.diameter_bound:.6g} "
                f"(radius {h.radius:.6g}, defect {h.defect:.6g})"
            )
        if k + 1 < len(history) and h.radius > a and h.defect < h.radius / 32.0:
            limit = h.radius / 4.0 + 2.0 * slack
            if history[k + 1].radius > limit + TOL:
                raise InvariantViolation(
                    f"step {k + 1}: radius {history[k + 1].radius:.6g} above r/4 + 2*slack = {limit:.6g} "
                    f"although the defect {h.defect:.6g} is below r/32"
                )
