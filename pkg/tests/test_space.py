"""有限度量测度空间：校验、直径、倍测度常数、局部 Lipschitz 常数与 Poincaré 检查"""

import numpy as np
import pytest

from bip_lab.exceptions import InputError
from bip_lab.models import FiniteMetricMeasureSpace, RealFunction
from bip_lab.services import space_service


class TestValidateSpace:
    """validate_space 报告每一项违例"""

    def test_two_point_space_passes(self):
        space = FiniteMetricMeasureSpace(dist=[[0, 1], [1, 0]], weight=[1, 1])
        assert space_service.validate_space(space).passed

    def test_triangle_violation_reports_triple(self):
        space = FiniteMetricMeasureSpace(
            dist=[[0, 1, 3], [1, 0, 1], [3, 1, 0]], weight=[1, 1, 1])
        report = space_service.validate_space(space)
        assert not report.passed
        triangles = report.of_kind("triangle")
        assert [v.indices for v in triangles] == [(0, 1, 2)]
        assert triangles[0].amount == pytest.approx(1.0)

    def test_edge_list_closure(self):
        space = FiniteMetricMeasureSpace.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)], [1, 1, 1])
        assert space.dist[0, 2] == pytest.approx(2.0)
        assert space_service.validate_space(space).passed

    def test_asymmetry_and_weights(self):
        space = FiniteMetricMeasureSpace(dist=[[0, 1], [2, 0]], weight=[1, -1])
        report = space_service.validate_space(space)
        assert report.of_kind("symmetry")
        assert [v.indices for v in report.of_kind("weight")] == [(1,)]

    def test_disconnected_graph_is_reported(self):
        space = FiniteMetricMeasureSpace.from_edges(3, [(0, 1, 1.0)], [1, 1, 1])
        report = space_service.validate_space(space)
        assert report.of_kind("finite")

    def test_require_valid_raises(self):
        space = FiniteMetricMeasureSpace(dist=[[0, 0], [0, 0]], weight=[1, 1])
        with pytest.raises(InputError):
            space_service.require_valid(space)

    @pytest.mark.parametrize("space", [
        space_service.line(6),
        space_service.weighted_line([1.0, 2.0, 0.5, 3.0]),
        space_service.cycle(7, 0.5),
        space_service.grid(3, 4),
        space_service.complete(4),
        space_service.pinched(3, 1e-3),
        space_service.two_cluster(3, 10.0),
        space_service.oscillating_line(8),
    ])
    def test_generators_are_valid(self, space):
        assert space_service.validate_space(space).passed


class TestDiameter:
    """子集直径"""

    def test_examples(self, line3):
        assert space_service.diameter(line3, [1]) == 0.0
        assert space_service.diameter(line3, range(3)) == pytest.approx(2.0)
        assert space_service.diameter(line3, [0, 1]) == pytest.approx(1.0)

    def test_empty_subset(self, line3):
        with pytest.raises(ValueError):
            space_service.diameter(line3, [])

    def test_monotone_under_inclusion(self, rng):
        space = space_service.grid(4, 4)
        for _ in range(50):
            b = rng.choice(space.n, size=6, replace=False)
            a = b[:3]
            assert space_service.diameter(space, a) <= space_service.diameter(space, b)


class TestDoublingConstant:
    """倍测度常数在断点 d 与 d/2 处取得上确界"""

    def test_single_point(self):
        space = FiniteMetricMeasureSpace(dist=[[0.0]], weight=[1.0])
        assert space_service.doubling_constant(space, 1.0) == 1.0

    def test_uniform_cycle(self, cycle4):
        # r = 1/2: m(B_1) / m(B_{1/2}) = 3 / 1
        assert space_service.doubling_constant(cycle4, 1.0) == pytest.approx(3.0)

    def test_heavy_endpoint(self):
        space = space_service.weighted_line([1.0, 1.0, 100.0])
        value = space_service.doubling_constant(space, 1.0)
        assert value >= 101 / 2
        assert value == pytest.approx(102.0)

    def test_rejects_nonpositive_radius(self, line3):
        with pytest.raises(ValueError):
            space_service.doubling_constant(line3, 0.0)


class TestLocalLip:
    """离散局部 Lipschitz 常数"""

    def test_constant_function(self, line5):
        lip = space_service.local_lip(line5, RealFunction(values=np.full(5, 3.0)), 1.0)
        np.testing.assert_allclose(lip, 0.0)

    def test_identity_on_line(self, line5):
        lip = space_service.local_lip(line5, RealFunction(values=np.arange(5.0)), 1.0)
        np.testing.assert_allclose(lip, 1.0)

    def test_neighbor_enumeration(self, line3):
        lip = space_service.local_lip(line3, RealFunction(values=[0.0, 2.0, 3.0]), 1.0)
        np.testing.assert_allclose(lip, [2.0, 2.0, 1.0])

    def test_far_points_are_ignored(self):
        space = space_service.two_cluster(2, 5.0)
        lip = space_service.local_lip(space, RealFunction(values=[0.0, 1.0, 4.0, 4.0]), 1.0)
        np.testing.assert_allclose(lip, [1.0, 1.0, 0.0, 0.0])

    def test_homogeneity(self, rng):
        space = space_service.grid(3, 3)
        f = RealFunction(values=rng.normal(size=9))
        base = space_service.local_lip(space, f)
        for c in (-2.5, 0.0, 0.3, 7.0):
            np.testing.assert_allclose(space_service.local_lip(space, f.scaled(c)),
                                       abs(c) * base, atol=1e-12)

    def test_rejects_nonpositive_radius(self, line3):
        with pytest.raises(ValueError):
            space_service.local_lip(line3, RealFunction(values=[0.0, 1.0, 2.0]), -1.0)


class TestPoincare:
    """弱局部 (1,1)-Poincaré 不等式"""

    def test_constant_function_holds(self, line5):
        report = space_service.poincare_check(line5, RealFunction(values=np.ones(5)),
                                              tau=1.0, Lambda=2.0, R=2.0)
        assert report.passed
        assert report.data["worst_ratio"] == 0.0

    def test_identity_reports_worst_ratio(self, line5):
        report = space_service.poincare_check(line5, RealFunction(values=np.arange(5.0)),
                                              tau=1.0, Lambda=2.0, R=2.0)
        # lip f ≡ 1，球上平均偏差不超过 r
        assert report.passed
        assert 0.0 < report.data["worst_ratio"] <= 1.0
        assert report.data["witness"] is not None

    def test_two_cluster_indicator_fails(self):
        space = space_service.two_cluster(3, 10.0)
        f = RealFunction(values=[0, 0, 0, 1, 1, 1])
        report = space_service.poincare_check(space, f, tau=1.0, Lambda=1.5, R=10.0)
        assert not report.passed
        assert report.data["worst_ratio"] == np.inf

    def test_median_never_exceeds_mean(self, rng):
        space = space_service.line(6)
        for _ in range(10):
            f = RealFunction(values=rng.normal(size=6))
            mean = space_service.poincare_check(space, f, tau=1.0, Lambda=2.0, R=3.0)
            median = space_service.poincare_check(space, f, tau=1.0, Lambda=2.0, R=3.0,
                                                  center="median")
            assert median.data["worst_ratio"] <= 2 * mean.data["worst_ratio"] + 1e-12

    def test_search_returns_smallest_tau(self, line5):
        f = RealFunction(values=np.arange(5.0))
        result = space_service.poincare_search(line5, f, None, 2.0, [0.1, 1.0, 10.0], [2.0])
        assert result[2.0] in (0.1, 1.0)
