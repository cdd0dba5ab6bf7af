import os
import csv
import json
import math
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from config import Config
from utils.metric_core import (
    EuclideanPlane,
    GeometryError,
    GraphSpace,
    InvariantViolation,
    cycle_graph,
    fmt,
    graph_distance,
    path_graph,
    refine_graph,
    shortest_path,
    star_graph,
)
from utils.comparison import (
    cn_inequality_residual,
    median_case1,
    median_case1_oracle,
    tail_extension_check,
    triangle_defect,
)
from utils.wrinkled_quadrant import (
    Tn_witness_bound,
    build_surface,
    covering_n_max,
    diagonal_distance,
    divergence_gap,
    euclidean_diagonal_distance,
    fit_sqrt_law,
    harmonic_lower_bound,
    triangle_Tn,
)
from utils.sasaki import (
    HPoint,
    UTPoint,
    classify_geodesic,
    hyp_exp,
    qi_bounds_check,
    sasaki_geodesic_ode,
)
from utils.circumcenter import BoundedSet, iterate_barycenters
from utils.tree_of_spaces import (
    GluingSpec,
    build_amalgam_space,
    build_finite_edge_amalgam,
    geodesic_decomposition_check,
    metric_axiom_violation,
)
from utils.cone_probe import (
    ScaleSchedule,
    defect_profile,
    measured_defect,
    qi_distortion_decay,
    qi_epsilon,
    scaled_four_point,
    sublinearity_verdict,
)


class UsageError(GeometryError):
    """Bad recipe name, missing or unknown parameter, malformed value."""


Row = Sequence[Any]


class ExperimentRunner:
    """Runs named experiment recipes and writes their CSV tables and JSON manifests."""

    # recipe -> (required keys, optional keys with defaults)
    RECIPES: Dict[str, Tuple[Tuple[str, ...], Dict]] = {
        "wrinkled-gap": (("n_max",), {"witnesses": False}),
        "wrinkled-profile": (("radii",), {"triangles": 200, "grid": 2, "resolution": None}),
        "sasaki-classify": (("c",), {"length": 5.0, "heading": 0.3, "dump_curves": False}),
        "sasaki-qi": (("pairs",), {"tol": 1e-4, "decay_scales": None, "decay_pairs": 20}),
        "cn-sweep": (("samples",), {}),
        "circum-iterate": (("a",), {"set": "euclidean", "points": 10, "slack": None}),
        "amalgam-build": (("radius",), {"branching": 2, "strip_steps": 1, "triples": 1000,
                                        "pairs": 200, "hnn": False}),
        "four-point": (("tuples",), {"space": "euclidean", "scales": [1.0, 2.0, 4.0, 8.0]}),
    }
    COMMON = {"seed": 0, "out_dir": None, "verbose": False}

    def __init__(self, out_dir: Optional[str] = None):
        """Initialize the runner and its output directory"""
        self.out_dir = Path(out_dir or Config.OUTPUT_DIR)
        self._setup_directories()

    def _setup_directories(self):
        os.makedirs(self.out_dir, exist_ok=True)

    # --- parameter handling -------------------------------------------------

    def resolve_params(self, recipe: str, params: Dict) -> Dict:
        """Check keys against the recipe and fill defaults"""
        if recipe not in self.RECIPES:
            raise UsageError(f"unknown recipe '{recipe}'; choose from {', '.join(sorted(self.RECIPES))}")
        required, optional = self.RECIPES[recipe]
        allowed = set(required) | set(optional) | set(self.COMMON)
        unknown = sorted(set(params) - allowed)
        if unknown:
            raise UsageError(f"unknown parameter(s) for {recipe}: {', '.join(unknown)}")
        missing = [k for k in required if k not in params]
        if missing:
            raise UsageError(f"missing parameter(s) for {recipe}: {', '.join(missing)}")
        resolved = {**self.COMMON, **optional, **params}
        return resolved

    # --- entry point --------------------------------------------------------

    def run(self, recipe: str, params: Dict) -> Dict:
        """
        Run one recipe

        Returns:
            Dictionary with success flag, written files, summary and exit code
        """
        try:
            resolved = self.resolve_params(recipe, params)
        except UsageError as e:
            print(f"❌ {e}")
            return {"success": False, "error": str(e), "exit_code": 2}

        out_dir = Path(resolved["out_dir"]) if resolved["out_dir"] else self.out_dir
        os.makedirs(out_dir, exist_ok=True)
        method = getattr(self, "_recipe_" + recipe.replace("-", "_"))

        print(f"🧪 Running {recipe}...")
        started = time.time()
        try:
            header, rows, summary, extra_files = method(resolved, out_dir)
        except InvariantViolation as e:
            print(f"❌ Invariant violated in {recipe}: {e}")
            record = {"recipe": recipe, "params": _jsonable(resolved), "error": str(e),
                      "kind": "InvariantViolation", "library_version": Config.LIBRARY_VERSION}
            error_path = out_dir / f"{recipe}.error.json"
            error_path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            return {"success": False, "error": str(e), "exit_code": 1, "error_record": str(error_path)}
        except GeometryError as e:
            print(f"❌ {recipe}: {e}")
            return {"success": False, "error": str(e), "exit_code": 2}

        csv_path = out_dir / f"{recipe}.csv"
        write_csv(csv_path, header, rows)
        manifest = {
            "recipe": recipe,
            "params": _jsonable(resolved),
            "seed": resolved["seed"],
            "library_version": Config.LIBRARY_VERSION,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "elapsed_seconds": round(time.time() - started, 3),
            "files": [csv_path.name] + [Path(f).name for f in extra_files],
            "summary": _jsonable(summary),
        }
        manifest_path = out_dir / f"{recipe}.json"
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")

        print(f"✅ {recipe} done: {len(rows)} rows -> {csv_path}")
        return {
            "success": True,
            "exit_code": 0,
            "csv_path": str(csv_path),
            "manifest_path": str(manifest_path),
            "files": [str(csv_path)] + list(extra_files),
            "summary": summary,
            "rows": rows,
        }

    def validate_setup(self) -> Dict:
        """Check configuration and output directory"""
        issues = list(Config.validate())

        if not os.path.isdir(self.out_dir):
            issues.append(f"Directory not found: {self.out_dir}")
        elif not os.access(self.out_dir, os.W_OK):
            issues.append(f"Directory not writable: {self.out_dir}")

        return {
            "valid": len(issues) == 0,
            "issues": issues,
            "recipes": sorted(self.RECIPES),
        }

    # --- recipes --------------------------------------------------------------

    def _recipe_wrinkled_gap(self, p: Dict, out_dir: Path):
        n_max = _as_int(p, "n_max", minimum=1)
        rows = []
        for n in range(1, n_max + 1):
            diag = diagonal_distance(n)
            flat = euclidean_diagonal_distance(n)
            gap, lower = divergence_gap(n) if n >= 2 else (diag - flat, 0.0)
            bound = harmonic_lower_bound(n)
            if gap < bound - 1e-9 * max(1.0, abs(bound)):
                raise InvariantViolation(f"divergence gap {gap} below harmonic bound {bound} at n={n}")
            rows.append((n, diag, flat, gap, lower, bound))
        summary = {"final_gap": rows[-1][3], "final_bound": rows[-1][5]}

        extra = []
        if p["witnesses"]:
            surface = build_surface(min(max(n_max, 2), 6))
            space = surface.space()
            witness_rows = []
            for n in range(1, surface.n_max + 1):
                o, a, b = (space.node_point(v) for v in triangle_Tn(surface, n))
                report = triangle_defect(space, o, a, b, grid=2)
                floor = Tn_witness_bound(surface, n)
                if n >= 2 and report.delta < floor - Config.TOL:
                    raise InvariantViolation(f"T_{n} midpoint witness {report.delta:.6g} below {floor:.6g}")
                witness_rows.append((n, report.delta, floor))
            path = out_dir / "wrinkled-gap-witnesses.csv"
            write_csv(path, ("n", "delta", "floor"), witness_rows)
            extra.append(str(path))
        return ("n", "d_n", "dbar_n", "gap", "lower_bound", "harmonic_bound"), \
            rows, summary, extra

    def _recipe_wrinkled_profile(self, p: Dict, out_dir: Path):
        radii = ScaleSchedule(tuple(_as_list(p, "radii")))
        r_max = radii.scales[-1]
        n_max = covering_n_max(r_max)
        surface = build_surface(n_max, p["resolution"] or Config.WRINKLED_PROFILE_RESOLUTION)
        profile = defect_profile(surface.space(), radii, _as_int(p, "triangles", minimum=1),
                                 grid=p["grid"], seed=int(p["seed"]))
        verdict = sublinearity_verdict(profile) if len(profile.rows) >= 4 else None
        A, B = fit_sqrt_law(profile.radii, profile.f_hat)
        summary = {"verdict": verdict.to_dict() if verdict else None, "sqrt_fit": {"A": A, "B": B},
                   "n_max": n_max, "mesh_vertices": surface.n_nodes,
                   "mesh_links": len(surface.links)}
        return ("r", "f_hat", "samples"), profile.rows, summary, []

    def _recipe_sasaki_classify(self, p: Dict, out_dir: Path):
        cs = _as_list(p, "c")
        start = UTPoint(HPoint(0.0, 1.0), 0.0)
        rows, extra = [], []
        for c in tqdm(cs, desc="c sweep", disable=len(cs) < 2):
            curve = sasaki_geodesic_ode(start, float(p["heading"]), float(c), float(p["length"]))
            cls = classify_geodesic(curve)
            rows.append((c, cls.kind, cls.kappa, cls.kappa_std, cls.relation_residual, cls.speed_drift,
                         cls.fit_kind, cls.fit_residual))
            if p["dump_curves"]:
                path = out_dir / f"sasaki-curve-c{fmt(c)}.csv"
                write_csv(path, ("t", "x", "y", "phi"), curve.rows())
                extra.append(str(path))
        worst = max(r[5] for r in rows)
        if worst > 1e-6:
            raise InvariantViolation(f"unit-speed drift {worst:.3g} along an integrated geodesic")
        header = ("c", "kind", "kappa", "kappa_std", "relation_residual", "speed_drift", "fit_kind", "fit_residual")
        return header, rows, {"max_speed_drift": worst}, extra

    def _recipe_sasaki_qi(self, p: Dict, out_dir: Path):
        pairs = _as_int(p, "pairs", minimum=1)
        tol = float(p["tol"])
        rows = []
        converged = 0
        for i in tqdm(range(pairs), desc="pairs"):
            rng = np.random.default_rng([int(p["seed"]), i])
            base = HPoint(rng.uniform(-1, 1), math.exp(rng.uniform(-1, 1)))
            d = rng.uniform(0, Config.SASAKI_MAX_BASE_DISTANCE)
            dtheta = rng.uniform(-Config.SASAKI_MAX_FIBER_DISTANCE, Config.SASAKI_MAX_FIBER_DISTANCE)
            P = UTPoint(base, rng.uniform(-1, 1))
            Q = UTPoint(hyp_exp(base, rng.uniform(0, 2 * math.pi), d), P.theta + dtheta)
            report = qi_bounds_check(P, Q, tol=tol)
            converged += report.converged
            if not (report.ok_upper and report.ok_symmetric):
                raise InvariantViolation(f"pair {i}: L={report.L} D={report.D} breaks the (1, pi) bounds")
            if not report.ok_corrected:
                raise InvariantViolation(f"pair {i}: L={report.L} outside [d, min(sqrt(d^2 + (dtheta - hol)^2), D + |hol|)]")
            rows.append((d, dtheta, report.L if report.L is not None else float("nan"), report.D,
                         report.ok_lower, report.ok_upper, report.ok_symmetric, report.ok_corrected,
                         report.endpoint_err))
        rate = converged / pairs
        if rate < 0.95:
            print(f"⚠️ solver converged on {rate:.1%} of pairs")
        summary = {"convergence_rate": rate}

        extra = []
        if p["decay_scales"] is not None:
            eps = qi_epsilon("sasaki_to_product")
            decay_rows = []
            for s in _as_list(p, "decay_scales"):
                value = qi_distortion_decay("sasaki_to_product", s, _as_int(p, "decay_pairs", minimum=1),
                                            seed=int(p["seed"]))
                decay_rows.append((s, value, eps / s))
            path = out_dir / "sasaki-qi-decay.csv"
            write_csv(path, ("scale", "distortion", "bound"), decay_rows)
            extra.append(str(path))
            summary["decay"] = [{"scale": s, "distortion": v} for s, v, _ in decay_rows]
        header = ("d", "dtheta", "L", "D", "ok_lower", "ok_upper", "ok_symmetric", "ok_corrected", "endpoint_err")
        return header, rows, summary, extra

    def _recipe_cn_sweep(self, p: Dict, out_dir: Path):
        n = _as_int(p, "samples", minimum=1)
        rng = np.random.default_rng(int(p["seed"]))
        rows = []

        worst_gap, worst_oracle, worst_closed = math.inf, 0.0, 0.0
        for _ in range(n):
            a, b = rng.uniform(0.1, 10, size=2)
            c = rng.uniform(abs(a - b), a + b)
            pt = rng.uniform(0, 5)
            qt = max(pt + rng.uniform(-c, c), 0.0)
            case = median_case1(a, b, c, pt, qt)
            h, h_prime = median_case1_oracle(a, b, c, pt, qt)
            worst_gap = min(worst_gap, case.gap)
            worst_closed = max(worst_closed, abs(case.gap - case.closed_form) / max(1.0, abs(case.closed_form)))
            worst_oracle = max(worst_oracle, abs(h - case.h), abs(h_prime - case.h_prime))
        rows.append(("median_case1_gap", n, worst_gap, worst_gap >= -1e-9))
        rows.append(("median_case1_closed_form", n, worst_closed, worst_closed <= 1e-9))
        rows.append(("median_case1_oracle", n, worst_oracle, worst_oracle <= 1e-7))

        tails_ok = 0
        for _ in range(n):
            alpha, beta = rng.uniform(0, 10, size=2)
            gamma = rng.uniform(abs(alpha - beta), alpha + beta)
            tails_ok += tail_extension_check(alpha, beta, gamma, rng.uniform(0, 10)).ok
        rows.append(("tail_extension", n, float(n - tails_ok), tails_ok == n))

        worst_e = math.inf
        for _ in range(n):
            xs = rng.normal(size=(3, 2)) * 5
            m = (xs[0] + xs[1]) / 2
            pr, qr, mr, pq = (float(np.linalg.norm(u - v)) for u, v in
                              ((xs[0], xs[2]), (xs[1], xs[2]), (m, xs[2]), (xs[0], xs[1])))
            worst_e = min(worst_e, cn_inequality_residual(pr, qr, mr, pq))
        rows.append(("cn_euclidean", n, worst_e, worst_e >= -1e-9))

        tree = refine_graph(star_graph(4, 3.0), 0.5)
        worst_t = math.inf
        for _ in range(n):
            u, v, w = (int(x) for x in rng.integers(0, tree.n_vertices, size=3))
            mid = _graph_midpoint(tree, u, v)
            if mid is None:
                continue
            worst_t = min(worst_t, cn_inequality_residual(
                graph_distance(tree, u, w), graph_distance(tree, v, w), graph_distance(tree, mid, w),
                graph_distance(tree, u, v)))
        rows.append(("cn_tree", n, worst_t, worst_t >= -1e-9))

        cycle = cycle_graph(6)
        witness = cn_inequality_residual(graph_distance(cycle, 0, 4), graph_distance(cycle, 2, 4),
                                         graph_distance(cycle, 1, 4), graph_distance(cycle, 0, 2))
        rows.append(("cn_six_cycle_witness", 1, witness, witness < 0))
        failed = [r[0] for r in rows if not r[3]]
        if failed:
            raise InvariantViolation(f"cn-sweep checks failed: {', '.join(failed)}")
        return ("check", "samples", "worst", "passed"), rows, {"checks": len(rows)}, []

    def _recipe_circum_iterate(self, p: Dict, out_dir: Path):
        a = float(p["a"])
        rng = np.random.default_rng(int(p["seed"]))
        count = _as_int(p, "points", minimum=1)
        kind = p["set"]
        candidates = None
        if kind == "euclidean":
            space = EuclideanPlane()
            Y = BoundedSet(tuple(space.point(*xy) for xy in rng.uniform(-10, 10, size=(count, 2)).tolist()))
            slack = float(p["slack"] or Config.TOL)
        elif kind == "tree":
            g = refine_graph(star_graph(3, 4.0), 0.25)
            space = GraphSpace(g, tag="tree")
            candidates = [space.point(v) for v in range(g.n_vertices)]
            Y = BoundedSet(tuple(space.point(int(v)) for v in rng.choice(g.n_vertices, size=count)))
            slack = float(p["slack"] or g.resolution / 2)
        elif kind == "wrinkled":
            surface = build_surface(4)
            space = surface.space()
            candidates = [space.node_point(v) for v in range(surface.n_nodes)]
            Y = BoundedSet(tuple(space.sample_ball(rng, 12.0, count)))
            slack = float(p["slack"] or 2 * surface.resolution)
        else:
            raise UsageError(f"set must be euclidean, tree or wrinkled, got '{kind}'")

        defect = measured_defect(space, seed=int(p["seed"]))
        history = iterate_barycenters(space, Y, a, candidates, slack, defect=defect)
        rows = [(k, h.radius, len(h.centers), h.defect, h.diameter, h.diameter_bound)
                for k, h in enumerate(history)]
        summary = {"steps": len(history) - 1, "final_radius": history[-1].radius, "slack": slack,
                   "measured_defect": [h.defect for h in history],
                   "center_diameters": [h.diameter for h in history],
                   "diameter_bounds": [h.diameter_bound for h in history]}
        return ("step", "radius", "center_count", "defect", "center_diameter", "diameter_bound"), rows, summary, []

    def _recipe_amalgam_build(self, p: Dict, out_dir: Path):
        X = cycle_graph(6)
        A = path_graph(2)
        spec = GluingSpec(X, X, A, (0, 1), (0, 1))
        Z = build_amalgam_space(spec, _as_int(p, "branching", minimum=1), _as_int(p, "radius", minimum=0),
                                _as_int(p, "strip_steps", minimum=1), hnn=bool(p["hnn"]))
        rows = []
        violation = metric_axiom_violation(Z, _as_int(p, "triples", minimum=1), seed=int(p["seed"]))
        rows.append(("metric_axioms", violation, violation <= 1e-9))

        rng = np.random.default_rng(int(p["seed"]))
        block_vertices = np.flatnonzero(Z.owner >= 0)
        worst = 0.0
        for _ in tqdm(range(_as_int(p, "pairs", minimum=1)), desc="decomposition"):
            u, v = (int(x) for x in rng.choice(block_vertices, size=2))
            report = geodesic_decomposition_check(Z, u, v)
            worst = max(worst, abs(report.dijkstra - report.decomposition))
        rows.append(("geodesic_decomposition", worst, worst <= 1e-9))

        finite = build_finite_edge_amalgam(X, X, [0, 3], [0, 3], branching=int(p["branching"]), radius=2)
        rows.append(("finite_edge_distortion", finite.distortion, finite.distortion <= finite.epsilon + 1e-9))

        graph_path = out_dir / "amalgam-build.graph.txt"
        graph_path.write_text(Z.graph.to_text(), encoding="utf-8")
        map_path = out_dir / "amalgam-build.blocks.json"
        map_path.write_text(json.dumps(Z.block_map(), indent=2) + "\n", encoding="utf-8")
        failed = [r[0] for r in rows if not r[2]]
        if failed:
            raise InvariantViolation(f"amalgam checks failed: {', '.join(failed)}")
        summary = {"vertices": Z.graph.n_vertices, "edges": len(Z.graph.edges), "epsilon": finite.epsilon}
        return ("check", "value", "passed"), rows, summary, [str(graph_path), str(map_path)]

    def _recipe_four_point(self, p: Dict, out_dir: Path):
        tuples = _as_int(p, "tuples", minimum=1)
        scales = _as_list(p, "scales")
        kind = p["space"]
        if kind == "euclidean":
            space = EuclideanPlane()
        elif kind == "cycle":
            space = GraphSpace(refine_graph(cycle_graph(6), 0.25), tag="cycle")
        elif kind == "wrinkled":
            r_max = max(scales)
            # tuples are drawn from B(origin, scale / 2)
            space = build_surface(covering_n_max(r_max / 2), Config.WRINKLED_PROFILE_RESOLUTION).space()
        else:
            raise UsageError(f"space must be euclidean, cycle or wrinkled, got '{kind}'")
        rows = []
        for i, s in enumerate(tqdm(scales, desc="scales")):
            rows.append((s, scaled_four_point(space, s, tuples, seed=int(p["seed"]) + i)))
        if kind == "euclidean":
            worst = max(v for _, v in rows)
            if worst > 1e-7:
                raise InvariantViolation(f"flat four-point defect {worst:.3g}")
        return ("scale", "max_defect"), rows, {"space": kind}, []


def _graph_midpoint(g, u: int, v: int) -> Optional[int]:
    path = shortest_path(g, u, v)
    total = graph_distance(g, u, v)
    for w in path:
        if abs(graph_distance(g, u, w) - total / 2) <= 1e-12:
            return w
    return None


def _as_int(p: Dict, key: str, minimum: Optional[int] = None) -> int:
    value = p[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise UsageError(f"{key} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise UsageError(f"{key} must be >= {minimum}, got {value}")
    return value


def _as_list(p: Dict, key: str) -> List[float]:
    value = p[key]
    values = value if isinstance(value, list) else [value]
    if not values or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in values):
        raise UsageError(f"{key} must be a number or comma-separated numbers, got {value!r}")
    return [float(v) for v in values]


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return fmt(value)
    return str(value)


def write_csv(path, header: Sequence[str], rows: List[Row]):
    """Comma-separated, header row, floats at 17 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj
