import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from utils.comparison import (
    PAIRINGS,
    TriangleSides,
    cn_inequality_residual,
    comparison_point,
    comparison_triangle,
    four_point_all_pairings,
    four_point_defect,
    median_case1,
    median_case1_oracle,
    quadrilateral_comparison,
    tail_extension_check,
    triangle_defect,
)
from utils.metric_core import DomainError, EuclideanPlane, GraphSpace, cycle_graph, graph_distance, refine_graph, star_graph

lengths = st.floats(0.1, 10.0, allow_nan=False)


@st.composite
def triangles(draw):
    a, b = draw(lengths), draw(lengths)
    u = draw(st.floats(0.01, 0.99))
    c = abs(a - b) + u * (a + b - abs(a - b))
    return a, b, c


class TestComparisonTriangle:
    def test_sides_reproduced(self):
        tri = comparison_triangle(TriangleSides(a=4.0, b=3.0, c=5.0))
        P, Q, R = tri.vertex("P"), tri.vertex("Q"), tri.vertex("R")
        assert np.linalg.norm(Q - P) == pytest.approx(5.0)
        assert np.linalg.norm(R - Q) == pytest.approx(4.0)
        assert np.linalg.norm(R - P) == pytest.approx(3.0)

    def test_invalid_sides(self):
        with pytest.raises(DomainError):
            TriangleSides(1.0, 1.0, 3.0)
        with pytest.raises(DomainError):
            TriangleSides(-1.0, 1.0, 1.0)

    def test_comparison_point_range(self):
        tri = comparison_triangle(TriangleSides(1.0, 1.0, 1.0))
        assert comparison_point(tri, "PQ", 0.5) == pytest.approx([0.5, 0.0])
        with pytest.raises(DomainError):
            comparison_point(tri, "PQ", 1.5)
        with pytest.raises(DomainError):
            comparison_point(tri, "XY", 0.5)

    @given(triangles())
    @settings(max_examples=100)
    def test_round_trip(self, sides):
        a, b, c = sides
        tri = comparison_triangle(TriangleSides(a, b, c))
        assert np.linalg.norm(tri.vertex("R") - tri.vertex("Q")) == pytest.approx(a, abs=1e-9)
        assert np.linalg.norm(tri.vertex("R") - tri.vertex("P")) == pytest.approx(b, abs=1e-9)
        assert np.linalg.norm(tri.vertex("Q") - tri.vertex("P")) == pytest.approx(c, abs=1e-9)


class TestTriangleDefect:
    @pytest.mark.parametrize("grid", [2, 8, 64])
    def test_flat_plane_has_no_defect(self, grid):
        E = EuclideanPlane()
        rng = np.random.default_rng(grid)
        for _ in range(5):
            x, y, z = E.sample_ball(rng, 10.0, 3)
            assert triangle_defect(E, x, y, z, grid=grid).delta == pytest.approx(0.0, abs=1e-9)

    def test_six_cycle_triangle(self):
        G = GraphSpace(cycle_graph(6), tag="cycle")
        report = triangle_defect(G, G.point(0), G.point(2), G.point(4), grid=2)
        # the midpoint of one side sits at distance 3 from the opposite corner
        assert report.delta == pytest.approx(3.0 - math.sqrt(3.0))
        assert report.samples > 0
        data = report.to_dict()
        assert set(data) == {"delta", "witness", "samples"}

    def test_tree_tripod_defect_is_zero(self):
        G = GraphSpace(refine_graph(star_graph(3, 2.0), 0.5), tag="tree")
        report = triangle_defect(G, G.point(1), G.point(2), G.point(3), grid=8)
        assert report.delta == pytest.approx(0.0, abs=1e-9)

    def test_grid_must_be_positive(self):
        E = EuclideanPlane()
        p = E.point(0.0, 0.0)
        with pytest.raises(DomainError):
            triangle_defect(E, p, p, p, grid=0)


class TestQuadrilateral:
    def test_unit_square(self):
        quad = quadrilateral_comparison(1.0, 1.0, 1.0, 1.0, math.sqrt(2.0))
        assert quad.convex and not quad.unbent
        assert quad.diagonal(0, 2) == pytest.approx(math.sqrt(2.0))
        assert quad.diagonal(1, 3) == pytest.approx(math.sqrt(2.0))

    def test_reflex_hinge_is_unbent(self):
        # x2 and x4 sit behind x1 as seen from x3, so the hinge at x1 is reflex
        quad = quadrilateral_comparison(1.0, 3.9, 3.9, 1.0, 3.0)
        assert quad.unbent
        assert quad.convex

    @given(st.lists(st.floats(0.5, 10.0), min_size=4, max_size=4), st.floats(0.1, 0.9))
    @settings(max_examples=100)
    def test_sides_reproduced(self, sides, u):
        d12, d23, d34, d41 = sides
        lo = max(abs(d12 - d23), abs(d34 - d41))
        hi = min(d12 + d23, d34 + d41)
        assume(hi - lo > 1e-3)
        d13 = lo + u * (hi - lo)
        quad = quadrilateral_comparison(d12, d23, d34, d41, d13)
        assume(not quad.unbent)
        v = [np.array(p) for p in quad.vertices]
        for (i, j), d in zip(((0, 1), (1, 2), (2, 3), (3, 0)), (d12, d23, d34, d41)):
            assert np.linalg.norm(v[i] - v[j]) == pytest.approx(d, abs=1e-9)
        assert quad.convex

    @given(st.floats(0.5, 3.0), st.floats(0.5, 3.0), st.floats(0.5, 5.0), st.floats(0.0, 0.05))
    @settings(max_examples=100)
    def test_unbending_lengthens_both_diagonals(self, d12, d41, extra, u):
        # d13 close to d23 - d12 = d34 - d41 folds both triangles back over x1
        d23, d34 = d12 + extra, d41 + extra
        d13 = extra + u * min(d12, d41)
        quad = quadrilateral_comparison(d12, d23, d34, d41, d13)
        assume(quad.unbent)
        v = [np.array(p) for p in quad.vertices]
        for (i, j), d in zip(((0, 1), (1, 2), (2, 3), (3, 0)), (d12, d23, d34, d41)):
            assert np.linalg.norm(v[i] - v[j]) == pytest.approx(d, abs=1e-9)
        hinged_13, hinged_24 = quad.hinged_diagonals
        assert quad.diagonal(0, 2) >= hinged_13 - 1e-9
        assert quad.diagonal(1, 3) >= hinged_24 - 1e-9


class TestFourPoint:
    def test_flat_tuples_pass_every_pairing(self):
        rng = np.random.default_rng(7)
        E = EuclideanPlane()
        worst = 0.0
        for _ in range(2000):
            pts = E.sample_ball(rng, 10.0, 4)
            D = E.pairwise(pts, pts)
            d = (D[0, 1], D[0, 2], D[0, 3], D[1, 2], D[1, 3], D[2, 3])
            worst = max(worst, max(four_point_all_pairings(d)))
        assert worst <= 1e-8

    def test_dict_and_tuple_forms_agree(self):
        d = (1.0, 1.5, 1.2, 1.1, 1.4, 0.9)
        keyed = {(1, 2): 1.0, (1, 3): 1.5, (1, 4): 1.2, (2, 3): 1.1, (2, 4): 1.4, (3, 4): 0.9}
        for order in PAIRINGS:
            assert four_point_defect(d, order) == four_point_defect(keyed, order)

    def test_six_cycle_quadruple_fails(self):
        # 0, 1, 3, 4 on the unit 6-cycle: both diagonals have length 3
        g = cycle_graph(6)
        ids = (0, 1, 3, 4)
        d = {(i + 1, j + 1): graph_distance(g, ids[i], ids[j]) for i in range(4) for j in range(i + 1, 4)}
        assert max(four_point_all_pairings(d)) > 0.5

    def test_inconsistent_distances(self):
        with pytest.raises(DomainError):
            four_point_defect((1.0, 5.0, 1.0, 1.0, 1.0, 1.0))


class TestCN:
    def test_euclidean_equality(self):
        assert cn_inequality_residual(math.sqrt(2), math.sqrt(2), 1.0, 2.0) == pytest.approx(0.0, abs=1e-12)

    def test_six_cycle_witness(self):
        g = cycle_graph(6)
        residual = cn_inequality_residual(graph_distance(g, 0, 4), graph_distance(g, 2, 4),
                                          graph_distance(g, 1, 4), graph_distance(g, 0, 2))
        assert residual == -12.0

    @given(st.lists(st.floats(-10, 10), min_size=6, max_size=6))
    @settings(max_examples=200)
    def test_euclidean_residual_nonnegative(self, xs):
        p, q, r = np.array(xs[:2]), np.array(xs[2:4]), np.array(xs[4:])
        m = (p + q) / 2
        residual = cn_inequality_residual(np.linalg.norm(p - r), np.linalg.norm(q - r),
                                          np.linalg.norm(m - r), np.linalg.norm(p - q))
        assert residual >= -1e-9


class TestMedianAlgebra:
    def test_closed_form_example(self):
        case = median_case1(3.0, 4.0, 5.0, 1.0, 0.0)
        assert case.gap == pytest.approx(1.2)
        assert case.closed_form == pytest.approx(1.2)

    @given(triangles(), st.floats(0.0, 5.0), st.floats(-1.0, 1.0))
    @settings(max_examples=300)
    def test_gap_matches_oracle(self, sides, p, v):
        a, b, c = sides
        q = max(0.0, p + v * c)
        case = median_case1(a, b, c, p, q)
        h, h_prime = median_case1_oracle(a, b, c, p, q)
        assert case.gap >= -1e-9
        assert case.gap == pytest.approx(case.closed_form, rel=1e-9, abs=1e-9)
        assert case.h == pytest.approx(h, rel=1e-9, abs=1e-9)
        assert case.h_prime == pytest.approx(h_prime, rel=1e-9, abs=1e-9)

    def test_tails_longer_than_base(self):
        with pytest.raises(DomainError):
            median_case1(3.0, 4.0, 5.0, 0.0, 6.0)

    @given(triangles(), st.floats(0.0, 10.0))
    @settings(max_examples=300)
    def test_tail_extension(self, sides, r):
        alpha, beta, gamma = sides
        check = tail_extension_check(alpha, beta, gamma, r)
        assert check.ok
        assert check.reduction <= 1e-9

    def test_tail_extension_needs_a_triangle(self):
        with pytest.raises(DomainError):
            tail_extension_check(1.0, 1.0, 3.0, 1.0)
