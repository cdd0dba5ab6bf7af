import math

import numpy as np
import pytest

from utils.cone_probe import (
    DefectProfile,
    ScaleSchedule,
    defect_profile,
    measured_defect,
    qi_distortion_decay,
    qi_epsilon,
    scaled_four_point,
    sublinearity_verdict,
)
from utils.metric_core import (
    DomainError,
    EuclideanPlane,
    GraphSpace,
    ScaledSpace,
    cycle_graph,
    refine_graph,
    star_graph,
)
from utils.wrinkled_quadrant import build_surface, covering_n_max


def _profile(radii, values):
    return DefectProfile([(float(r), float(f), 10) for r, f in zip(radii, values)], "synthetic", 0)


class TestScaleSchedule:
    def test_doubling(self):
        assert ScaleSchedule.doubling(1.0, 4).scales == (1.0, 2.0, 4.0, 8.0)

    @pytest.mark.parametrize("scales", [(), (0.5, 2.0), (2.0, 2.0), (4.0, 2.0)])
    def test_rejects_bad_schedules(self, scales):
        with pytest.raises(DomainError):
            ScaleSchedule(scales)


class TestDefectProfile:
    def test_flat_plane(self):
        profile = defect_profile(EuclideanPlane(), ScaleSchedule.doubling(1.0, 4), 10, grid=8, seed=1)
        assert np.all(profile.f_hat <= 1e-9)
        assert [n for _, _, n in profile.rows] == [10, 20, 30, 40]
        assert profile.space_tag == "euclidean"

    def test_profile_is_monotone_for_a_fixed_space(self):
        G = GraphSpace(refine_graph(cycle_graph(6), 0.25), tag="cycle")
        profile = defect_profile(G, ScaleSchedule((0.5, 1.0, 2.0, 3.0)), 15, grid=8, seed=2)
        assert np.all(np.diff(profile.f_hat) >= 0)
        assert len(profile.witnesses) == 4

    def test_tree_has_no_defect(self):
        G = GraphSpace(refine_graph(star_graph(4, 6.0), 0.5), tag="tree")
        profile = defect_profile(G, ScaleSchedule((1.0, 2.0, 4.0)), 10, grid=8)
        assert np.all(profile.f_hat <= 1e-9)

    def test_space_family(self):
        calls = []

        def family(r):
            calls.append(r)
            return EuclideanPlane()

        profile = defect_profile(family, ScaleSchedule((1.0, 2.0)), 5, grid=4)
        assert calls == [1.0, 2.0]
        assert profile.rows[-1][2] == 10

    def test_needs_triangles(self):
        with pytest.raises(DomainError):
            defect_profile(EuclideanPlane(), ScaleSchedule((1.0,)), 0)

    def test_to_dict(self):
        data = _profile([1, 2], [0.0, 0.5]).to_dict()
        assert data["rows"][1] == {"r": 2.0, "f_hat": 0.5, "samples": 10}


class TestVerdict:
    radii = [1.0, 4.0, 16.0, 64.0]

    def test_all_zero_is_sublinear(self):
        assert sublinearity_verdict(_profile(self.radii, [0.0] * 4)).kind == "SUBLINEAR"

    def test_square_root_is_sublinear(self):
        verdict = sublinearity_verdict(_profile(self.radii, np.sqrt(self.radii)))
        assert verdict.kind == "SUBLINEAR"
        assert verdict.slope == pytest.approx(0.5)
        assert verdict.ratio_last == pytest.approx(0.125)

    def test_linear_is_linearish(self):
        verdict = sublinearity_verdict(_profile(self.radii, [0.5 * r for r in self.radii]))
        assert verdict.kind == "LINEARISH"
        assert verdict.slope == pytest.approx(1.0)

    def test_between_thresholds_is_inconclusive(self):
        values = [r ** 0.92 for r in self.radii]
        assert sublinearity_verdict(_profile(self.radii, values)).kind == "INCONCLUSIVE"

    def test_single_positive_value_is_inconclusive(self):
        verdict = sublinearity_verdict(_profile(self.radii, [0.0, 0.0, 0.0, 1.0]))
        assert verdict.kind == "INCONCLUSIVE"
        assert math.isnan(verdict.slope)

    def test_custom_thresholds_are_reported(self):
        verdict = sublinearity_verdict(_profile(self.radii, np.sqrt(self.radii)), slope_sublinear=0.4)
        assert verdict.kind == "INCONCLUSIVE"
        assert verdict.to_dict()["thresholds"]["slope_sublinear"] == 0.4

    def test_needs_four_rows(self):
        with pytest.raises(DomainError):
            sublinearity_verdict(_profile([1.0, 2.0, 4.0], [0.0, 0.0, 0.0]))

    def test_scaled_six_cycle_is_linearish(self):
        G = GraphSpace(refine_graph(cycle_graph(6), 0.25), tag="cycle")
        profile = defect_profile(lambda r: ScaledSpace(G, r / 3.0), ScaleSchedule.doubling(3.0, 4), 40, grid=8, seed=5)
        assert profile.f_hat[0] > 0
        verdict = sublinearity_verdict(profile)
        assert verdict.kind == "LINEARISH"
        assert verdict.slope >= 1.0 - 1e-9


@pytest.fixture(scope="module")
def wrinkled():
    return build_surface(covering_n_max(256.0), resolution=0.3).space()


def test_wrinkled_quadrant_is_sublinear(wrinkled):
    profile = defect_profile(wrinkled, ScaleSchedule.doubling(8.0, 6), 40, grid=2, seed=0)
    verdict = sublinearity_verdict(profile)
    assert verdict.kind == "SUBLINEAR", verdict.to_dict()
    assert verdict.ratio_last <= 0.5 * verdict.ratio_first


class TestMeasuredDefect:
    def test_flat_plane(self):
        f = measured_defect(EuclideanPlane(), triangles=5)
        assert f(3.0) <= 1e-9

    def test_memoized_and_positive_on_the_cycle(self):
        f = measured_defect(GraphSpace(refine_graph(cycle_graph(6), 0.25), tag="cycle"), triangles=20, seed=3)
        assert f(3.0) > 0
        assert f(3.0) == f(3.0)

    def test_needs_triangles(self):
        with pytest.raises(DomainError):
            measured_defect(EuclideanPlane(), triangles=0)


class TestScaledFourPoint:
    @pytest.mark.parametrize("scale", [1.0, 8.0])
    def test_flat_plane(self, scale):
        assert scaled_four_point(EuclideanPlane(), scale, 200, seed=4) <= 1e-8

    def test_tree(self):
        G = GraphSpace(refine_graph(star_graph(4, 4.0), 0.5), tag="tree")
        assert scaled_four_point(G, 4.0, 100) == pytest.approx(0.0, abs=1e-9)

    def test_scale_must_be_positive(self):
        with pytest.raises(DomainError):
            scaled_four_point(EuclideanPlane(), 0.0, 10)

    def test_scaled_six_cycle_defect_is_constant(self):
        G = GraphSpace(refine_graph(cycle_graph(6), 0.25), tag="cycle")
        values = [scaled_four_point(ScaledSpace(G, s / 6.0), s, 50, seed=7) for s in (6.0, 12.0, 24.0, 48.0)]
        assert values[0] > 0
        assert values == pytest.approx([values[0]] * 4, rel=1e-9)


class TestQuasiIsometryDecay:
    def test_identity(self):
        assert qi_distortion_decay("identity", 4.0, 20) == 0.0
        assert qi_epsilon("identity") == 0.0

    @pytest.mark.parametrize("scale", [2.0, 4.0, 8.0])
    def test_finite_amalgam_within_epsilon(self, scale):
        eps = qi_epsilon("finite_amalgam_to_tilde")
        assert eps == 8.0
        assert qi_distortion_decay("finite_amalgam_to_tilde", scale, 50, seed=1) <= eps / scale + 1e-9

    def test_sasaki_envelope(self):
        assert qi_epsilon("sasaki_to_product") == math.pi
        with pytest.raises(DomainError):
            qi_distortion_decay("sasaki_to_product", 20.0, 1)

    @pytest.mark.parametrize("scale", [1.0, 2.0, 4.0, 8.0])
    def test_sasaki_within_epsilon(self, scale):
        value = qi_distortion_decay("sasaki_to_product", scale, 3, seed=2)
        assert 0.0 <= value <= math.pi / scale + 1e-6

    def test_unknown_map(self):
        with pytest.raises(DomainError):
            qi_distortion_decay("rotation", 1.0, 1)
        with pytest.raises(DomainError):
            qi_epsilon("rotation")
        with pytest.raises(DomainError):
            qi_distortion_decay("identity", 1.0, 0)
