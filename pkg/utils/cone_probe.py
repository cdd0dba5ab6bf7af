"""
Finite-scale stand-ins for asymptotic cones.

Limits along ultrafilters are replaced by deterministic scale schedules:
defect profiles f_hat(r), a slope-based sublinearity verdict, rescaled
four-point defects and the decay of quasi-isometry distortion with scale.
A SUBLINEAR verdict is evidence only, since f_hat under-samples the true
supremum; LINEARISH on an exhaustively sampled finite graph is conclusive.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Tuple, Union

import numpy as np

from config import Config
from .comparison import PAIRINGS, four_point_defect, triangle_defect
from .metric_core import DomainError, EuclideanPlane, MetricPoint, MetricSpace, cycle_graph, distance_rows
from .sasaki import HPoint, UTPoint, hyp_exp, product_distance, sasaki_distance
from .tree_of_spaces import FiniteAmalgam, build_finite_edge_amalgam

logger = logging.getLogger(__name__)

SpaceFamily = Union[MetricSpace, Callable[[float], MetricSpace]]


@dataclass(frozen=True)
class ScaleSchedule:
    scales: Tuple[float, ...]

    def __post_init__(self):
        s = tuple(float(x) for x in self.scales)
        if not s:
            raise DomainError("empty scale schedule")
        if s[0] < 1 or any(b <= a for a, b in zip(s, s[1:])):
            raise DomainError(f"scales must be strictly increasing and >= 1: {s}")
        object.__setattr__(self, "scales", s)

    @classmethod
    def doubling(cls, start: float, count: int) -> "ScaleSchedule":
        return cls(tuple(start * 2 ** k for k in range(count)))


@dataclass
class DefectProfile:
    rows: List[Tuple[float, float, int]]
    space_tag: str
    seed: int
    witnesses: List[Tuple[MetricPoint, MetricPoint, MetricPoint]] = field(default_factory=list, repr=False)

    @property
    def radii(self) -> np.ndarray:
        return np.array([r for r, _, _ in self.rows])

    @property
    def f_hat(self) -> np.ndarray:
        return np.array([f for _, f, _ in self.rows])

    def to_dict(self) -> Dict:
        return {"space": self.space_tag, "seed": self.seed,
                "rows": [{"r": r, "f_hat": f, "samples": n} for r, f, n in self.rows]}


def defect_profile(space: SpaceFamily, radii: ScaleSchedule, triangles_per_radius: int,
                   grid: int = None, seed: int = 0) -> DefectProfile:
    """Max sampled triangle defect inside B(basepoint, r) for each scheduled r.

    Triangles drawn for smaller radii are kept for the larger ones, so for a
    fixed space the profile is non-decreasing. `space` may also be a
    callable r -> space, in which case every kept triangle is re-measured in
    the space for the current r.
    """
    if triangles_per_radius < 1:
        raise DomainError("triangles_per_radius must be positive")
    grid = grid or Config.GRID
    family = callable(space) and not isinstance(space, MetricSpace)
    triangles: List[Tuple[MetricPoint, MetricPoint, MetricPoint]] = []
    known: List[float] = []
    rows, witnesses = [], []
    tag = None
    for i, r in enumerate(radii.scales):
        current = space(r) if family else space
        tag = current.tag
        rng = np.random.default_rng([seed, i])
        pts = current.sample_ball(rng, r, 3 * triangles_per_radius)
        triangles.extend(tuple(pts[3 * k: 3 * k + 3]) for k in range(triangles_per_radius))
        if family:
            known = [triangle_defect(current, *t, grid=grid).delta for t in triangles]
        else:
            known.extend(triangle_defect(current, *t, grid=grid).delta for t in triangles[len(known):])
        k = int(np.argmax(known))
        rows.append((float(r), float(known[k]), len(triangles)))
        witnesses.append(triangles[k])
        logger.info("r=%g f_hat=%.6g over %d triangles", r, known[k], len(triangles))
    return DefectProfile(rows, tag, seed, witnesses)


def measured_defect(space: MetricSpace, triangles: int = 8, grid: int = 2, seed: int = 0) -> Callable[[float], float]:
    """A defect profile r -> f_hat(r) measured on demand and memoized per radius.

    Each call samples `triangles` triangles in B(basepoint, r) and keeps the
    largest defect. Used to check the barycenter contraction step by step.
    """
    if triangles < 1:
        raise DomainError("triangles must be positive")
    cache: Dict[float, float] = {}

    def f(r: float) -> float:
        r = float(r)
        if r not in cache:
            rng = np.random.default_rng([seed, int(round(r * 1e6))])
            pts = space.sample_ball(rng, r, 3 * triangles)
            cache[r] = max(triangle_defect(space, *pts[3 * k: 3 * k + 3], grid=grid).delta
                           for k in range(triangles))
            logger.debug("measured defect at r=%g: %.6g", r, cache[r])
        return cache[r]

    return f


@dataclass
class Verdict:
    kind: str
    slope: float
    ratio_first: float
    ratio_last: float
    thresholds: Dict[str, float]

    def to_dict(self) -> Dict:
        return {"verdict": self.kind, "slope": self.slope, "ratio_first": self.ratio_first,
                "ratio_last": self.ratio_last, "thresholds": dict(self.thresholds)}


def sublinearity_verdict(profile: DefectProfile, slope_sublinear: float = None, slope_linear: float = None,
                         halving_ratio: float = None) -> Verdict:
    """Classify f_hat(r) by the log-log slope and the drop of f_hat(r)/r."""
    slope_sublinear = Config.SLOPE_SUBLINEAR if slope_sublinear is None else slope_sublinear
    slope_linear = Config.SLOPE_LINEAR if slope_linear is None else slope_linear
    halving_ratio = Config.HALVING_RATIO if halving_ratio is None else halving_ratio
    thresholds = {"slope_sublinear": slope_sublinear, "slope_linear": slope_linear, "halving_ratio": halving_ratio}
    if len(profile.rows) < 4:
        raise DomainError("a verdict needs at least 4 profile rows")
    r, f = profile.radii, profile.f_hat
    ratio_first, ratio_last = float(f[0] / r[0]), float(f[-1] / r[-1])
    positive = f > 0
    if not positive.any():
        return Verdict("SUBLINEAR", 0.0, ratio_first, ratio_last, thresholds)
    if positive.sum() < 2:
        return Verdict("INCONCLUSIVE", float("nan"), ratio_first, ratio_last, thresholds)
    slope = float(np.polyfit(np.log(r[positive]), np.log(f[positive]), 1)[0])
    if slope <= slope_sublinear and ratio_last <= halving_ratio * ratio_first:
        kind = "SUBLINEAR"
    elif slope >= slope_linear:
        kind = "LINEARISH"
    else:
        kind = "INCONCLUSIVE"
    return Verdict(kind, slope, ratio_first, ratio_last, thresholds)


def scaled_four_point(space: MetricSpace, scale: float, tuples: int, seed: int = 0) -> float:
    """Largest four-point defect over sampled 4-tuples of diameter <= scale, divided by scale."""
    if not scale > 0:
        raise DomainError("scale must be positive")
    rng = np.random.default_rng(seed)
    pts = space.sample_ball(rng, scale / 2.0, 4 * tuples)
    worst = 0.0
    for k in range(tuples):
        quad = pts[4 * k: 4 * k + 4]
        D = space.pairwise(quad, quad)
        d = {(i + 1, j + 1): float(D[i, j]) for i in range(4) for j in range(i + 1, 4)}
        worst = max(worst, max(four_point_defect(d, order) for order in PAIRINGS))
    return worst / scale


# --- quasi-isometry distortion ----------------------------------------------


def _identity_distortion(scale: float, pairs: int, rng: np.random.Generator) -> List[float]:
    plane = EuclideanPlane()
    pts = plane.sample_ball(rng, scale, 2 * pairs)
    return [abs(plane.distance(p, q) - plane.distance(p, q)) for p, q in zip(pts[::2], pts[1::2])]


def _sasaki_distortion(scale: float, pairs: int, rng: np.random.Generator) -> List[float]:
    lo = math.acos(min(1.0, Config.SASAKI_MAX_BASE_DISTANCE / scale))
    hi = math.asin(min(1.0, Config.SASAKI_MAX_FIBER_DISTANCE / scale))
    if lo > hi:
        raise DomainError(f"scale {scale} is outside the Sasaki solver envelope")
    out = []
    for _ in range(pairs):
        # product distance = scale, split between base and fiber within the solver envelope
        psi = rng.uniform(lo, hi)
        d, dtheta = scale * math.cos(psi), scale * math.sin(psi) * rng.choice([-1.0, 1.0])
        heading = rng.uniform(0, 2 * math.pi)
        p = HPoint(rng.uniform(-1, 1), math.exp(rng.uniform(-0.5, 0.5)))
        q = hyp_exp(p, heading, d)
        P = UTPoint(p, rng.uniform(-1, 1))
        Q = UTPoint(q, P.theta + dtheta)
        result = sasaki_distance(P, Q)
        if not result.converged:
            logger.warning("skipping unsolved pair at scale %g", scale)
            continue
        out.append(abs(result.L - product_distance(P, Q)))
    return out


@lru_cache(maxsize=8)
def _default_amalgam(radius: int) -> FiniteAmalgam:
    X = cycle_graph(6)
    return build_finite_edge_amalgam(X, X, [0, 3], [0, 3], branching=2, radius=radius)


def _amalgam_distortion(scale: float, pairs: int, rng: np.random.Generator) -> List[float]:
    fa = _default_amalgam(max(2, math.ceil(scale / 4) + 2))
    dz = distance_rows(fa.Z.graph, range(fa.Z.graph.n_vertices))
    dt = distance_rows(fa.Z_tilde.graph, range(fa.Z_tilde.graph.n_vertices))
    f = fa.mapping
    iu, ju = np.nonzero(np.abs(dz - scale) <= scale / 2)
    if len(iu) == 0:
        raise DomainError(f"no pairs at distance ~{scale} in the finite-edge amalgam")
    pick = rng.choice(len(iu), size=min(pairs, len(iu)), replace=False)
    return [abs(dz[iu[k], ju[k]] - dt[f[iu[k]], f[ju[k]]]) for k in pick]


MAP_TAGS = {
    "identity": _identity_distortion,
    "sasaki_to_product": _sasaki_distortion,
    "finite_amalgam_to_tilde": _amalgam_distortion,
}


def qi_distortion_decay(map_tag: str, scale: float, pairs: int, seed: int = 0) -> float:
    """sup |d(p, q) - d(f(p), f(q))| / scale over sampled pairs at distance about `scale`."""
    if map_tag not in MAP_TAGS:
        raise DomainError(f"unknown map tag '{map_tag}'; expected one of {sorted(MAP_TAGS)}")
    if not scale > 0 or pairs < 1:
        raise DomainError("scale must be positive and pairs >= 1")
    rng = np.random.default_rng([seed, int(round(scale * 1000))])
    values = MAP_TAGS[map_tag](scale, pairs, rng)
    if not values:
        raise DomainError(f"no usable pairs for '{map_tag}' at scale {scale}")
    return max(values) / scale


def qi_epsilon(map_tag: str) -> float:
    """Additive constant of each shipped (1, eps) map."""
    if map_tag == "identity":
        return 0.0
    if map_tag == "sasaki_to_product":
        return math.pi
    if map_tag == "finite_amalgam_to_tilde":
        return _default_amalgam(2).epsilon
    raise DomainError(f"unknown map tag '{map_tag}'")
