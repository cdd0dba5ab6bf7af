import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from utils.metric_core import (
    DomainError,
    EuclideanPlane,
    GraphSpace,
    MetricGraph,
    Polyline,
    ScaledSpace,
    UnreachableError,
    UnsupportedSpaceError,
    MetricSpace,
    cycle_graph,
    distance_rows,
    fmt,
    graph_distance,
    is_connected,
    path_graph,
    polyline_length,
    refine_graph,
    shortest_path,
    star_graph,
)


def _to_networkx(g: MetricGraph) -> nx.Graph:
    G = nx.Graph()
    G.add_nodes_from(range(g.n_vertices))
    for i, j, w in g.edges:
        if G.has_edge(i, j):
            w = min(w, G[i][j]["weight"])
        G.add_edge(i, j, weight=w)
    return G


@st.composite
def connected_graphs(draw, max_vertices=12):
    n = draw(st.integers(2, max_vertices))
    edges = [(k, draw(st.integers(0, k - 1)), draw(st.floats(0.1, 5.0))) for k in range(1, n)]
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1), st.floats(0.1, 5.0)),
                          max_size=2 * n))
    edges += [(i, j, w) for i, j, w in extra if i != j]
    return MetricGraph([()] * n, edges)


class TestMetricGraph:
    def test_rejects_bad_edges(self):
        with pytest.raises(DomainError):
            MetricGraph([(), ()], [(0, 0, 1.0)])
        with pytest.raises(DomainError):
            MetricGraph([(), ()], [(0, 1, 0.0)])
        with pytest.raises(DomainError):
            MetricGraph([(), ()], [(0, 2, 1.0)])

    def test_resolution_is_longest_edge(self):
        g = MetricGraph([(), (), ()], [(0, 1, 0.5), (1, 2, 2.0)])
        assert g.resolution == 2.0

    def test_text_round_trip(self):
        g = refine_graph(star_graph(3, 2.0), 0.5)
        h = MetricGraph.from_text(g.to_text())
        assert h.points == g.points
        assert h.edges == g.edges

    def test_text_format(self):
        text = path_graph(2).to_text()
        assert text == "v 0 0\nv 1 1\ne 0 1 1\n"

    def test_from_text_rejects_garbage(self):
        with pytest.raises(DomainError):
            MetricGraph.from_text("v 0\nx 1 2\n")
        with pytest.raises(DomainError):
            MetricGraph.from_text("v 0\nv 2\n")
        with pytest.raises(DomainError):
            MetricGraph.from_text("v 0\nv 1\ne 0 one 1\n")


class TestShortestPaths:
    def test_triangle_shortcut(self):
        g = MetricGraph([(), (), ()], [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)])
        assert graph_distance(g, 0, 2) == 2.0
        assert shortest_path(g, 0, 2) == [0, 1, 2]

    def test_same_vertex(self):
        g = path_graph(3)
        assert graph_distance(g, 1, 1) == 0.0
        assert shortest_path(g, 1, 1) == [1]

    def test_unreachable(self):
        g = MetricGraph([(), (), ()], [(0, 1, 1.0)])
        assert not is_connected(g)
        with pytest.raises(UnreachableError):
            graph_distance(g, 0, 2)
        with pytest.raises(UnreachableError):
            shortest_path(g, 0, 2)

    def test_missing_vertex(self):
        with pytest.raises(DomainError):
            graph_distance(path_graph(2), 0, 5)

    def test_ties_prefer_smaller_ids(self):
        # two equal routes 0-1-3 and 0-2-3
        g = MetricGraph([()] * 4, [(0, 2, 1.0), (2, 3, 1.0), (0, 1, 1.0), (1, 3, 1.0)])
        assert shortest_path(g, 0, 3) == [0, 1, 3]

    def test_six_cycle(self):
        g = cycle_graph(6)
        assert graph_distance(g, 0, 3) == 3.0
        assert graph_distance(g, 0, 5) == 1.0

    @given(connected_graphs(), st.data())
    @settings(max_examples=60, deadline=None)
    def test_matches_networkx(self, g, data):
        u = data.draw(st.integers(0, g.n_vertices - 1))
        v = data.draw(st.integers(0, g.n_vertices - 1))
        expected = nx.dijkstra_path_length(_to_networkx(g), u, v)
        assert graph_distance(g, u, v) == pytest.approx(expected, abs=1e-9)
        path = shortest_path(g, u, v)
        assert path[0] == u and path[-1] == v
        length = sum(min(w for a, w in g.adjacency[x] if a == y) for x, y in zip(path, path[1:]))
        assert length == pytest.approx(expected, abs=1e-9)

    @given(connected_graphs())
    @settings(max_examples=40, deadline=None)
    def test_distance_rows_agree_with_label_setting(self, g):
        rows = distance_rows(g, range(g.n_vertices))
        for u in range(g.n_vertices):
            for v in range(g.n_vertices):
                assert rows[u, v] == pytest.approx(graph_distance(g, u, v), abs=1e-9)

    @given(connected_graphs(), st.data())
    @settings(max_examples=40, deadline=None)
    def test_metric_axioms(self, g, data):
        D = distance_rows(g, range(g.n_vertices))
        assert np.allclose(D, D.T)
        assert np.all(np.diag(D) == 0)
        x, y, z = (data.draw(st.integers(0, g.n_vertices - 1)) for _ in range(3))
        assert D[x, z] <= D[x, y] + D[y, z] + 1e-9


class TestRefine:
    def test_refine_preserves_distances(self):
        g = star_graph(4, 3.0)
        fine = refine_graph(g, 0.5)
        assert fine.resolution <= 0.5 + 1e-12
        for u in range(g.n_vertices):
            for v in range(g.n_vertices):
                assert graph_distance(fine, u, v) == pytest.approx(graph_distance(g, u, v), abs=1e-9)

    def test_refine_interpolates_coordinates(self):
        fine = refine_graph(path_graph(2, 1.0), 0.25)
        assert fine.n_vertices == 5
        assert fine.points[2] == pytest.approx((0.25,))

    def test_refine_needs_positive_target(self):
        with pytest.raises(DomainError):
            refine_graph(path_graph(2), 0.0)


class TestSpaces:
    def test_euclidean_pythagoras(self):
        E = EuclideanPlane()
        assert E.distance(E.point(0.0, 0.0), E.point(3.0, 4.0)) == 5.0

    def test_foreign_point_rejected(self):
        E = EuclideanPlane()
        G = GraphSpace(path_graph(3))
        with pytest.raises(DomainError):
            E.distance(E.point(0.0, 0.0), G.point(1))

    def test_side_samples_are_arclength_fractions(self):
        E = EuclideanPlane()
        samples = E.side_samples(E.point(0.0, 0.0), E.point(4.0, 0.0), 4)
        assert [t for t, _ in samples] == [0.0, 0.25, 0.5, 0.75, 1.0]
        assert samples[2][1].coords == pytest.approx((2.0, 0.0))

    def test_graph_side_samples_follow_the_path(self):
        G = GraphSpace(path_graph(5))
        samples = G.side_samples(G.point(0), G.point(4), 4)
        assert [p.coords[0] for _, p in samples] == [0, 1, 2, 3, 4]

    def test_graph_space_needs_connected_graph(self):
        with pytest.raises(DomainError):
            GraphSpace(MetricGraph([(), ()], []))

    def test_pairwise_matches_distance(self):
        E = EuclideanPlane()
        rng = np.random.default_rng(3)
        pts = E.sample_ball(rng, 5.0, 6)
        D = E.pairwise(pts, pts)
        for a, p in enumerate(pts):
            for b, q in enumerate(pts):
                assert D[a, b] == pytest.approx(E.distance(p, q))

    def test_sample_ball_stays_inside(self):
        G = GraphSpace(refine_graph(cycle_graph(6), 0.25))
        rng = np.random.default_rng(0)
        for p in G.sample_ball(rng, 1.5, 50):
            assert G.distance(G.basepoint, p) <= 1.5 + 1e-9

    def test_scaled_space(self):
        E = EuclideanPlane()
        S = ScaledSpace(E, 3.0)
        assert S.distance(E.point(0.0, 0.0), E.point(1.0, 0.0)) == 3.0
        with pytest.raises(DomainError):
            ScaledSpace(E, 0.0)

    def test_base_class_capabilities(self):
        class Bare(MetricSpace):
            tag = "bare"

        with pytest.raises(UnsupportedSpaceError):
            Bare().side_samples(None, None, 4)
        with pytest.raises(UnsupportedSpaceError):
            Bare().sample_ball(np.random.default_rng(0), 1.0, 1)

    def test_polyline_length(self):
        E = EuclideanPlane()
        path = Polyline((E.point(0.0, 0.0), E.point(3.0, 0.0), E.point(3.0, 4.0)))
        assert polyline_length(path, E) == 7.0
        with pytest.raises(DomainError):
            Polyline((E.point(0.0, 0.0),))


def test_fmt_uses_17_significant_digits():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(2.0) == "2"
    assert float(fmt(math.pi)) == math.pi
