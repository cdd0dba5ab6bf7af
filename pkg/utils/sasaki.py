"""
Sasaki geometry of the unit tangent bundle of the hyperbolic plane.

Points of H^2 live in the upper half-plane. A unit tangent vector is stored
by its Euclidean frame angle phi (the vector is y * (cos phi, sin phi)).
Parallel transport changes phi by -dx/y, so along a geodesic arc of a
semicircle it changes by the swept polar angle and along a vertical line
it does not change at all.

Fiber coordinates of the universal cover are measured against the section
obtained by transporting a reference vector out of a basepoint along
geodesics; `UTPoint.theta` is that real-valued coordinate.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares

from config import Config
from .metric_core import DomainError, InvariantViolation

logger = logging.getLogger(__name__)

_VERTICAL_TOL = 1e-12


@dataclass(frozen=True)
class HPoint:
    x: float
    y: float

    def __post_init__(self):
        if not self.y > 0:
            raise DomainError(f"upper half-plane points need y > 0, got {self.y}")


@dataclass(frozen=True)
class UnitTangent:
    base: HPoint
    phi: float


@dataclass(frozen=True)
class UTPoint:
    base: HPoint
    theta: float


def hyp_distance(p: HPoint, q: HPoint) -> float:
    chord = math.hypot(p.x - q.x, p.y - q.y)
    return 2.0 * math.asinh(chord / (2.0 * math.sqrt(p.y * q.y)))


class _Arc(NamedTuple):
    vertical: bool
    center: float
    radius: float
    s0: float
    s1: float


def _arc(p: HPoint, q: HPoint) -> _Arc:
    if abs(q.x - p.x) <= _VERTICAL_TOL * max(1.0, abs(p.x), abs(q.x)):
        return _Arc(True, p.x, 0.0, 0.0, 0.0)
    c = ((q.x ** 2 + q.y ** 2) - (p.x ** 2 + p.y ** 2)) / (2.0 * (q.x - p.x))
    r = math.hypot(p.x - c, p.y)
    return _Arc(False, c, r, math.atan2(p.y, p.x - c), math.atan2(q.y, q.x - c))


def hyp_geodesic(p: HPoint, q: HPoint, t: float) -> HPoint:
    """Point at fraction t of the hyperbolic length from p to q."""
    if p == q:
        return p
    arc = _arc(p, q)
    if arc.vertical:
        return HPoint(p.x, p.y ** (1.0 - t) * q.y ** t)
    u0 = math.log(math.tan(arc.s0 / 2.0))
    u1 = math.log(math.tan(arc.s1 / 2.0))
    s = 2.0 * math.atan(math.exp((1.0 - t) * u0 + t * u1))
    return HPoint(arc.center + arc.radius * math.cos(s), arc.radius * math.sin(s))


def hyp_exp(p: HPoint, heading: float, length: float) -> HPoint:
    """Endpoint of the geodesic of `length` leaving p in chart direction `heading`."""
    # climb from i, rotate about i (elliptic map with derivative e^{i rot} there), then move i to p
    w = complex(0.0, math.exp(length))
    rot = heading - math.pi / 2
    c, s = math.cos(rot / 2), math.sin(rot / 2)
    w = (c * w + s) / (-s * w + c)
    return HPoint(p.x + p.y * w.real, p.y * w.imag)


def geodesic_transport(p: HPoint, q: HPoint) -> float:
    """Change of frame angle of a vector parallel-transported along [p, q]."""
    if p == q:
        return 0.0
    arc = _arc(p, q)
    return 0.0 if arc.vertical else arc.s1 - arc.s0


def geodesic_heading(p: HPoint, q: HPoint) -> float:
    """Euclidean direction angle of the geodesic [p, q] as it leaves p."""
    arc = _arc(p, q)
    if arc.vertical:
        return math.pi / 2 if q.y > p.y else -math.pi / 2
    return arc.s0 + (math.pi / 2 if arc.s1 > arc.s0 else -math.pi / 2)


class TransportResult(NamedTuple):
    angle: float
    coarse: bool


def parallel_transport_angle(path: Sequence[HPoint], max_spacing: float = 0.1) -> TransportResult:
    """Net frame rotation along the geodesic polygon through `path`.

    Each hop contributes its closed-form geodesic transport, so no
    connection coefficients are integrated and the result is exact for the
    polygon. For a closed polygon it is minus the enclosed signed area.
    `coarse` is set when a hop exceeds `max_spacing` in hyperbolic length,
    i.e. when the polygon is a poor stand-in for a smooth curve sampled at
    those points.
    """
    if len(path) < 2:
        raise DomainError("parallel transport needs at least 2 points")
    total = 0.0
    coarse = False
    for a, b in zip(path, path[1:]):
        total += geodesic_transport(a, b)
        coarse = coarse or hyp_distance(a, b) > max_spacing
    if coarse:
        logger.debug("transport path has hops longer than %.3g", max_spacing)
    return TransportResult(total, coarse)


def holonomy(loop: Sequence[HPoint]) -> float:
    """Rotation deficit around a closed loop; the enclosed area for counterclockwise loops."""
    pts = list(loop)
    if pts[0] != pts[-1]:
        pts.append(pts[0])
    return -parallel_transport_angle(pts, max_spacing=math.inf).angle


def _angle_between(u: float, v: float) -> float:
    d = (v - u) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def geodesic_triangle_angles(a: HPoint, b: HPoint, c: HPoint) -> Tuple[float, float, float]:
    return (
        _angle_between(geodesic_heading(a, b), geodesic_heading(a, c)),
        _angle_between(geodesic_heading(b, c), geodesic_heading(b, a)),
        _angle_between(geodesic_heading(c, a), geodesic_heading(c, b)),
    )


def triangle_area(a: HPoint, b: HPoint, c: HPoint) -> float:
    if a == b or b == c or a == c:
        return 0.0
    return max(0.0, math.pi - sum(geodesic_triangle_angles(a, b, c)))


@dataclass(frozen=True)
class Section:
    """Global section s(x): the reference vector at `basepoint` transported to x."""

    basepoint: HPoint = field(default_factory=lambda: HPoint(*Config.SASAKI_BASEPOINT))
    ref_angle: float = Config.SASAKI_REF_ANGLE

    def angle(self, x: HPoint) -> float:
        return section_angle(x, self.basepoint, self.ref_angle)

    def angles(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Vectorized `angle` over coordinate arrays."""
        bx, by = self.basepoint.x, self.basepoint.y
        dx = xs - bx
        vertical = np.abs(dx) <= _VERTICAL_TOL * np.maximum(1.0, np.abs(xs))
        safe = np.where(vertical, 1.0, dx)
        c = ((xs ** 2 + ys ** 2) - (bx ** 2 + by ** 2)) / (2.0 * safe)
        s0 = np.arctan2(by, bx - c)
        s1 = np.arctan2(ys, xs - c)
        return self.ref_angle + np.where(vertical, 0.0, s1 - s0)

    def phi_of(self, P: UTPoint) -> float:
        return self.angle(P.base) + P.theta

    def theta_of(self, v: UnitTangent) -> float:
        return v.phi - self.angle(v.base)


def section_angle(x: HPoint, basepoint: HPoint, ref_angle: float) -> float:
    if x == basepoint:
        return ref_angle
    return ref_angle + geodesic_transport(basepoint, x)


def section_holonomy(p: HPoint, q: HPoint, section: Optional[Section] = None, check: bool = True) -> float:
    """Correction angle hol with rotation-relative-to-transport = dtheta - hol along [p, q].

    Equals the signed area of the geodesic triangle (basepoint, p, q), so
    |hol| < pi; `check` re-derives the area from the triangle's angles.
    """
    section = section or Section()
    hol = geodesic_transport(p, q) + section.angle(p) - section.angle(q)
    if check:
        area = triangle_area(section.basepoint, p, q)
        if abs(abs(hol) - area) > 1e-7 or abs(hol) >= math.pi:
            raise InvariantViolation(f"section correction {hol:.9g} disagrees with triangle area {area:.9g}")
    return hol


# --- curves and lengths ---------------------------------------------------


@dataclass
class SasakiCurve:
    """Sampled curve in the unit tangent bundle.

    `states` rows are (x, y, u1, u2, phi) with (u1, u2) the coordinate
    velocity of the base; curves built from explicit samples carry zero
    velocities and `c = None`.
    """

    t: np.ndarray
    states: np.ndarray
    c: Optional[float] = None
    omega: float = 0.0
    theta: Optional[np.ndarray] = None
    error_estimate: float = 0.0

    @property
    def base(self) -> List[HPoint]:
        return [HPoint(float(x), float(y)) for x, y in self.states[:, :2]]

    @property
    def phi(self) -> np.ndarray:
        return self.states[:, 4]

    def rows(self) -> List[Tuple[float, float, float, float]]:
        return [(float(t), float(s[0]), float(s[1]), float(s[4])) for t, s in zip(self.t, self.states)]


def curve_from_samples(t: Sequence[float], samples: Sequence[Tuple[HPoint, float]]) -> SasakiCurve:
    states = np.array([[p.x, p.y, 0.0, 0.0, phi] for p, phi in samples], dtype=float)
    return SasakiCurve(np.asarray(t, dtype=float), states)


def sasaki_length(curve: SasakiCurve) -> float:
    """Length with base speed and covariant fiber speed as orthogonal parts."""
    total = 0.0
    pts = curve.base
    phi = curve.phi
    for i in range(len(pts) - 1):
        dl = hyp_distance(pts[i], pts[i + 1])
        dpsi = (phi[i + 1] - phi[i]) - geodesic_transport(pts[i], pts[i + 1])
        total += math.hypot(dl, dpsi)
    return total


def sample_curve(fn: Callable[[float], Tuple[HPoint, float]], t0: float, t1: float,
                 tol: float = 1e-8, start: int = 16, max_samples: int = 1 << 16) -> SasakiCurve:
    """Sample `fn` on [t0, t1], doubling until the Sasaki length settles within tol."""
    n = start
    prev = None
    while True:
        ts = np.linspace(t0, t1, n + 1)
        curve = curve_from_samples(ts, [fn(float(t)) for t in ts])
        length = sasaki_length(curve)
        if prev is not None and abs(length - prev) < tol:
            return curve
        if n >= max_samples:
            logger.warning("curve length did not settle: last change %.3g", abs(length - prev))
            return curve
        prev = length
        n *= 2


# --- geodesic ODE ---------------------------------------------------------


def _rhs(state: np.ndarray, omega) -> np.ndarray:
    """x'' = b V - a W and W = omega J V (so that the covariant W' = -c^2 V)."""
    y = state[..., 1]
    u1 = state[..., 2]
    u2 = state[..., 3]
    phi = state[..., 4]
    cp, sp = np.cos(phi), np.sin(phi)
    a = (u1 * cp + u2 * sp) / y
    b = omega * (u2 * cp - u1 * sp) / y
    acc1 = y * (b * cp + a * omega * sp)
    acc2 = y * (b * sp - a * omega * cp)
    du1 = acc1 + 2.0 * u1 * u2 / y
    du2 = acc2 + (u2 * u2 - u1 * u1) / y
    dphi = omega - u1 / y
    return np.stack([u1, u2, du1, du2, dphi], axis=-1)


def _rk4(state: np.ndarray, omega, h, steps: int) -> np.ndarray:
    """Fixed-step RK4 over a batch of states, one omega (and optionally one step size) per row."""
    s = state
    h = np.asarray(h, dtype=float)[..., None] if np.ndim(h) else h
    for _ in range(steps):
        k1 = _rhs(s, omega)
        k2 = _rhs(s + 0.5 * h * k1, omega)
        k3 = _rhs(s + 0.5 * h * k2, omega)
        k4 = _rhs(s + h * k3, omega)
        s = s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return s


def _integrate(s0: np.ndarray, omega: float, t: np.ndarray, rtol: float) -> np.ndarray:
    sol = solve_ivp(lambda _, s: _rhs(s, omega), (t[0], t[-1]), s0, method="DOP853", t_eval=t,
                    rtol=rtol, atol=rtol * 1e-2)
    if not sol.success:
        raise DomainError(f"geodesic integration failed: {sol.message}")
    return sol.y.T


def initial_state(start: UTPoint, heading: float, c: float, section: Section) -> np.ndarray:
    sigma = math.sqrt(max(0.0, 1.0 - c * c))
    y = start.base.y
    return np.array([start.base.x, y, sigma * y * math.cos(heading), sigma * y * math.sin(heading),
                     section.phi_of(start)])


def sasaki_geodesic_ode(start: UTPoint, direction_angle: float, c: float, length: float,
                        step: float = 0.01, sign: int = 1, tol: Optional[float] = None,
                        section: Optional[Section] = None) -> SasakiCurve:
    """Integrate the unit-speed Sasaki geodesic leaving `start`.

    The base starts in direction `direction_angle` (Euclidean angle in the
    chart) with hyperbolic speed sqrt(1 - c^2); the vector turns against
    parallel transport at rate c, counterclockwise for sign=+1.
    """
    if not 0.0 <= c <= 1.0:
        raise DomainError(f"rotation parameter c={c} outside [0, 1]")
    if not step > 0 or length < 0:
        raise DomainError("step must be positive and length nonnegative")
    tol = Config.ODE_TOL if tol is None else tol
    section = section or Section()
    omega = math.copysign(c, sign)
    s0 = initial_state(start, direction_angle, c, section)
    if length == 0:
        t, traj, err = np.zeros(1), s0[None, :], 0.0
    else:
        t = np.linspace(0.0, length, max(1, math.ceil(length / step)) + 1)
        traj = _integrate(s0, omega, t, tol * 1e-2)
        # error estimate against a run with ten times tighter tolerances
        err = float(np.max(np.abs(_integrate(s0, omega, t, tol * 1e-3)[-1] - traj[-1])))
        if err > tol * max(1.0, length):
            logger.warning("ODE error estimate %.3g above tolerance %.3g", err, tol)
    theta = traj[:, 4] - section.angles(traj[:, 0], traj[:, 1])
    theta = theta - theta[0] + start.theta
    return SasakiCurve(t, traj, c, omega, theta, err)


@dataclass
class CurvatureProfile:
    kappa: np.ndarray
    mean: float
    std: float
    relation_residual: float
    speed_drift: float


def geodesic_curvature(curve: SasakiCurve) -> CurvatureProfile:
    """Hyperbolic geodesic curvature of the projected curve along an ODE solution.

    Uses d(alpha)/ds_h = kappa - cos(alpha) with alpha the chart direction of
    the base velocity; derivatives come from the vector field itself.
    """
    s = curve.states
    deriv = _rhs(s, curve.omega)
    u1, u2, y = s[:, 2], s[:, 3], s[:, 1]
    speed_sq = (u1 * u1 + u2 * u2) / (y * y)
    c = curve.c if curve.c is not None else abs(curve.omega)
    drift = float(np.max(np.abs(speed_sq + c * c - 1.0)))
    sigma = np.sqrt(speed_sq)
    if float(sigma.max()) < 1e-12:
        kappa = np.full(len(s), np.nan)
        return CurvatureProfile(kappa, float("nan"), 0.0, 0.0, drift)
    alpha = np.arctan2(u2, u1)
    alpha_dot = (u1 * deriv[:, 3] - u2 * deriv[:, 2]) / (u1 * u1 + u2 * u2)
    kappa = np.abs(alpha_dot / sigma + np.cos(alpha))
    mean = float(kappa.mean())
    residual = float(np.max(np.abs((1.0 - c * c) * kappa ** 2 - c * c)))
    return CurvatureProfile(kappa, mean, float(kappa.std()), residual, drift)


def _fit_circle(xs: np.ndarray, ys: np.ndarray):
    """Algebraic circle fit; returns (cx, cy, r, residual) or None for collinear data."""
    A = np.column_stack([xs, ys, np.ones_like(xs)])
    rhs = -(xs ** 2 + ys ** 2)
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    cx, cy = -sol[0] / 2, -sol[1] / 2
    r2 = cx ** 2 + cy ** 2 - sol[2]
    if not np.isfinite(r2) or r2 <= 0:
        return None
    r = math.sqrt(r2)
    residual = float(np.max(np.abs(np.hypot(xs - cx, ys - cy) - r)))
    return cx, cy, r, residual


@dataclass
class Classification:
    kind: str
    kappa: float
    kappa_std: float
    relation_residual: float
    speed_drift: float
    fit_kind: str
    fit_residual: float

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


def classify_geodesic(curve: SasakiCurve, tol: float = 1e-6) -> Classification:
    """Label a Sasaki geodesic by c and cross-check its projection's shape."""
    c = curve.c if curve.c is not None else abs(curve.omega)
    prof = geodesic_curvature(curve)
    xs, ys = curve.states[:, 0], curve.states[:, 1]
    if c >= 1.0 - 1e-12:
        span = float(np.max(np.hypot(xs - xs[0], ys - ys[0])))
        return Classification("vertical", 0.0, 0.0, 0.0, prof.speed_drift, "point", span)
    if c <= 1e-12:
        kind = "horizontal"
    elif abs(prof.mean ** 2 - 1.0) <= tol:
        kind = "oblique-horocycle"
    elif prof.mean < 1.0:
        kind = "oblique-equidistant"
    else:
        kind = "oblique-circle"

    # projections are Euclidean circles or lines; their position against the
    # boundary line tells geodesic / equidistant / horocycle / circle apart
    centered_x, centered_y = xs - xs.mean(), ys - ys.mean()
    _, sv, vt = np.linalg.svd(np.column_stack([centered_x, centered_y]), full_matrices=False)
    line_residual = float(sv[-1] / math.sqrt(len(xs)))
    fit = _fit_circle(xs, ys)
    if fit is None or line_residual < 1e-9 or (fit[2] > 1e6 * max(1.0, float(np.ptp(xs)) + float(np.ptp(ys)))):
        direction = vt[0]
        if abs(direction[0]) < 1e-9:
            fit_kind = "geodesic"
        elif abs(direction[1]) < 1e-9:
            fit_kind = "horocycle"
        else:
            fit_kind = "equidistant"
        fit_residual = line_residual
    else:
        cx, cy, r, fit_residual = fit
        if abs(cy) <= 1e-6 * r:
            fit_kind = "geodesic"
        elif abs(r - cy) <= 1e-6 * r:
            fit_kind = "horocycle"
        elif r < cy:
            fit_kind = "circle"
        else:
            fit_kind = "equidistant"
    return Classification(kind, 0.0 if c <= 1e-12 else prof.mean, prof.std, prof.relation_residual,
                          prof.speed_drift, fit_kind, fit_residual)


# --- distances ------------------------------------------------------------


def qi_map(P: UTPoint) -> Tuple[HPoint, float]:
    return P.base, P.theta


def product_distance(P: UTPoint, Q: UTPoint) -> float:
    """The metric of H^2 x R evaluated on the section coordinates."""
    return math.hypot(hyp_distance(P.base, Q.base), Q.theta - P.theta)


@dataclass
class SasakiDistance:
    L: Optional[float]
    converged: bool
    certificate: Dict


def _shoot(P: UTPoint, Z: np.ndarray, section: Section, step: float) -> np.ndarray:
    """Endpoints (x, y, theta) of the trajectories whose (heading, signed c, length) are the rows of Z.

    All rows share one step count, so a batch of nearby starts is integrated
    consistently (the finite-difference Jacobian relies on this).
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    heading, length = Z[:, 0], np.maximum(Z[:, 2], 0.0)
    omega = np.clip(Z[:, 1], -1.0, 1.0)
    sig = np.sqrt(np.clip(1.0 - omega ** 2, 0.0, None))
    y0 = P.base.y
    phi0 = section.phi_of(P)
    s0 = np.column_stack([np.full_like(heading, P.base.x), np.full_like(heading, y0), sig * y0 * np.cos(heading),
                          sig * y0 * np.sin(heading), np.full_like(heading, phi0)])
    steps = max(8, math.ceil(float(length.max()) / step))
    end = _rk4(s0, omega, length / steps, steps)
    xs, ys = end[:, 0], end[:, 1]
    theta = P.theta + (end[:, 4] - phi0) - (section.angles(xs, np.maximum(ys, 1e-300)) - section.angle(P.base))
    return np.column_stack([xs, ys, theta])


def _coarse_scan(P: UTPoint, Q: UTPoint, section: Section, headings: int, rotations: int, span: float):
    """Integrate the whole (heading, signed c) grid at once and record each closest approach to Q."""
    hs = 2 * math.pi * np.arange(headings) / headings
    omegas = np.linspace(-1.0, 1.0, rotations)
    H, O = np.meshgrid(hs, omegas, indexing="ij")
    H, O = H.ravel(), O.ravel()
    sig = np.sqrt(np.clip(1.0 - O ** 2, 0.0, None))
    y0 = P.base.y
    phi0 = section.phi_of(P)
    state = np.column_stack([np.full_like(H, P.base.x), np.full_like(H, y0), sig * y0 * np.cos(H),
                             sig * y0 * np.sin(H), np.full_like(H, phi0)])
    n_steps = max(50, math.ceil(span / Config.SHOOTING_COARSE_STEP))
    h = span / n_steps
    best = np.full(len(H), np.inf)
    best_s = np.zeros(len(H))
    ref0 = section.angle(P.base)
    for k in range(1, n_steps + 1):
        state = _rk4(state, O, h, 1)
        xs, ys = state[:, 0], np.maximum(state[:, 1], 1e-300)
        chord = np.hypot(xs - Q.base.x, ys - Q.base.y)
        dh = 2.0 * np.arcsinh(chord / (2.0 * np.sqrt(ys * Q.base.y)))
        theta = P.theta + (state[:, 4] - phi0) - (section.angles(xs, ys) - ref0)
        mismatch = np.hypot(dh, theta - Q.theta)
        better = mismatch < best
        best = np.where(better, mismatch, best)
        best_s = np.where(better, k * h, best_s)
    return H, O, best, best_s


def sasaki_distance(P: UTPoint, Q: UTPoint, tol: float = 1e-6, section: Optional[Section] = None,
                    headings: Optional[int] = None, rotations: Optional[int] = None,
                    refine: int = 4) -> SasakiDistance:
    """Shooting solver for the Sasaki distance between two points of the universal cover.

    The first start follows the product geodesic: the hyperbolic heading
    towards Q, rotation rate (dtheta - hol) / upper and length upper. A
    coarse scan over (heading, signed c) then proposes further starts, and
    only those that could still beat the best solution are refined with
    least squares over (heading, signed c, length).
    """
    if tol < 1e-6:
        raise DomainError("tol below 1e-6 is not supported")
    section = section or Section()
    headings = headings or Config.SHOOTING_HEADINGS
    rotations = rotations or Config.SHOOTING_ROTATIONS
    d = hyp_distance(P.base, Q.base)
    dtheta = Q.theta - P.theta
    if d > Config.SASAKI_MAX_BASE_DISTANCE + tol or abs(dtheta) > Config.SASAKI_MAX_FIBER_DISTANCE + tol:
        raise DomainError(f"pair outside the solver envelope (d={d:.3g}, dtheta={dtheta:.3g})")
    hol = section_holonomy(P.base, Q.base, section)
    upper = math.hypot(d, dtheta - hol)
    cert = {"lower": d, "upper": upper, "holonomy": hol, "endpoint_err": 0.0}
    if d == 0 and dtheta == 0:
        return SasakiDistance(0.0, True, cert)

    span = upper + 0.5
    lower_bounds, upper_bounds = np.array([-np.inf, -1.0, 0.0]), np.array([np.inf, 1.0, span + 1.0])
    target = np.array([Q.base.x, Q.base.y, Q.theta])
    scale = np.array([Q.base.y, Q.base.y, 1.0])
    fine = Config.SHOOTING_FINE_STEP

    def residual(z):
        return (_shoot(P, z, section, fine)[0] - target) / scale

    def jacobian(z):
        dz = 1e-7 * np.maximum(1.0, np.abs(z))
        dz = np.where(z + dz > upper_bounds, -dz, dz)
        Z = np.vstack([z, z + np.diag(dz)])
        ends = (_shoot(P, Z, section, fine) - target) / scale
        return ((ends[1:] - ends[0]) / dz[:, None]).T

    def solve(z0) -> Dict:
        fit = least_squares(residual, z0, jac=jacobian, bounds=(lower_bounds, upper_bounds),
                            xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=60)
        x, y, theta = _shoot(P, fit.x, section, fine / 2)[0]
        err = hyp_distance(HPoint(x, y), Q.base) + abs(theta - Q.theta) if y > 0 else math.inf
        return {"heading": float(fit.x[0]), "omega": float(fit.x[1]), "length": float(fit.x[2]),
                "endpoint_err": float(err)}

    heading0 = geodesic_heading(P.base, Q.base) if d > 0 else 0.0
    seed = np.array([heading0, float(np.clip((dtheta - hol) / upper, -1.0, 1.0)), upper])
    tried = [solve(seed)]
    solutions = [t for t in tried if t["endpoint_err"] <= tol]

    H, O, best, best_s = _coarse_scan(P, Q, section, headings, rotations, span)
    order = np.argsort(best, kind="stable")
    shortest = min((s["length"] for s in solutions), default=math.inf)
    for idx in order[: max(1, refine)]:
        if best[idx] > 4.0 * best[order[0]] + 0.25:
            break
        if best_s[idx] - best[idx] >= shortest - tol:
            continue
        tried.append(solve(np.array([H[idx], O[idx], best_s[idx]])))
        if tried[-1]["endpoint_err"] <= tol:
            solutions.append(tried[-1])
            shortest = min(shortest, tried[-1]["length"])

    cert["starts"] = tried
    if not solutions:
        logger.warning("shooting failed: best endpoint error %.3g", min(t["endpoint_err"] for t in tried))
        cert["endpoint_err"] = min(t["endpoint_err"] for t in tried)
        return SasakiDistance(None, False, cert)
    sol = min(solutions, key=lambda s: s["length"])
    cert.update(endpoint_err=sol["endpoint_err"], heading=sol["heading"], omega=sol["omega"])
    if sol["length"] > upper + tol:
        logger.warning("shortest geodesic found (%.6g) exceeds the explicit bound %.6g", sol["length"], upper)
        return SasakiDistance(None, False, cert)
    return SasakiDistance(sol["length"], True, cert)


@dataclass
class QIReport:
    L: Optional[float]
    D: float
    ok_lower: bool
    ok_upper: bool
    ok_symmetric: bool
    holonomy: float
    # d <= L <= sqrt(d^2 + (dtheta - hol)^2) <= D + |hol|
    ok_corrected: bool
    endpoint_err: float
    converged: bool
    bracket: Tuple[float, float]

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


def qi_bounds_check(P: UTPoint, Q: UTPoint, tol: float = 1e-4, section: Optional[Section] = None,
                    solver_tol: float = 1e-6) -> QIReport:
    result = sasaki_distance(P, Q, tol=solver_tol, section=section)
    D = product_distance(P, Q)
    cert = result.certificate
    lo, hi = cert["lower"], cert["upper"]
    if result.converged:
        L = result.L
        ok_lower = L <= D + tol
        ok_upper = D <= L + math.pi + tol
        ok_sym = abs(L - D) <= math.pi + tol
        ok_corrected = lo - tol <= L <= min(hi, D + abs(cert["holonomy"])) + tol
    else:
        L = None
        ok_lower = lo <= D + tol
        ok_upper = D <= hi + math.pi + tol
        ok_sym = ok_upper and lo <= D + math.pi + tol
        ok_corrected = lo <= min(hi, D + abs(cert["holonomy"])) + tol
    return QIReport(L, D, ok_lower, ok_upper, ok_sym, cert["holonomy"], ok_corrected, cert["endpoint_err"],
                    result.converged, (lo, hi))
