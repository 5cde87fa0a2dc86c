"""曲率维数：畸变系数、熵、轮廓函数与 CD / MCP 检查器"""

import math

import numpy as np
import pytest

from bip_lab.exceptions import CurvatureDomainError, InputError
from bip_lab.models import CurvatureParams, ProbMeasure
from bip_lab.services import curvature_service, interpolation_service, space_service


@pytest.fixture
def line17():
    return space_service.line(17)


@pytest.fixture
def translation(line17):
    """{0..3} 上的均匀测度平移 8 格及其 3 层二进测地线"""
    mu0 = ProbMeasure.uniform_on(line17, range(0, 4))
    mu1 = ProbMeasure.uniform_on(line17, range(8, 12))
    geodesic = interpolation_service.dyadic_geodesic(line17, 2.0, mu0, mu1, K=0.0, levels=3)
    return mu0, mu1, geodesic


class TestSigma:
    """σ 的各分支"""

    @pytest.mark.parametrize("t", [0.0, 0.3, 1.0])
    def test_flat(self, t):
        assert curvature_service.sigma(0.0, 3.0, t, 2.0) == pytest.approx(t)

    def test_positive_curvature(self):
        assert curvature_service.sigma(3.0, 3.0, 0.5, 1.0) == pytest.approx(math.sin(0.5) / math.sin(1.0))

    def test_negative_curvature(self):
        assert curvature_service.sigma(-3.0, 3.0, 0.5, 1.0) == pytest.approx(math.sinh(0.5) / math.sinh(1.0))

    def test_infinite_branch_boundary(self):
        assert math.isinf(curvature_service.sigma(1.0, 1.0, 0.5, math.pi))
        assert math.isfinite(curvature_service.sigma(1.0, 1.0, 0.5, math.pi - 1e-6))

    def test_negative_dimension(self):
        # K/N > 0 时为三角分支，Kθ² ≤ Nπ² 时为 +∞
        assert curvature_service.sigma(-1.0, -1.0, 0.5, 1.0) == pytest.approx(math.sin(0.5) / math.sin(1.0))
        assert math.isinf(curvature_service.sigma(-1.0, -1.0, 0.5, math.pi))
        assert curvature_service.sigma(1.0, -1.0, 0.5, 1.0) == pytest.approx(math.sinh(0.5) / math.sinh(1.0))

    @pytest.mark.parametrize("K", [1e-9, -1e-9])
    def test_continuous_at_zero_curvature(self, K):
        assert curvature_service.sigma(K, 3.0, 0.3, 1.0) == pytest.approx(0.3, abs=1e-8)

    @pytest.mark.parametrize("N", [0.0, 0.5, math.inf])
    def test_domain(self, N):
        with pytest.raises(CurvatureDomainError):
            curvature_service.sigma(0.0, N, 0.5, 1.0)

    def test_argument_ranges(self):
        with pytest.raises(CurvatureDomainError):
            curvature_service.sigma(0.0, 3.0, 1.5, 1.0)
        with pytest.raises(CurvatureDomainError):
            curvature_service.sigma(0.0, 3.0, 0.5, -1.0)


class TestTau:
    """τ 的组合与约定"""

    def test_flat(self):
        assert curvature_service.tau(0.0, 3.0, 0.25, 1.0) == pytest.approx(0.25)

    def test_one_dimensional(self):
        assert curvature_service.tau(-1.0, 1.0, 0.4, 5.0) == 0.4
        assert math.isinf(curvature_service.tau(1.0, 1.0, 0.4, 5.0))

    def test_composition(self):
        expected = 0.5 ** (1 / 3) * (math.sin(0.5) / math.sin(1.0)) ** (2 / 3)
        assert curvature_service.tau(2.0, 3.0, 0.5, 1.0) == pytest.approx(expected)

    def test_infinity_propagates(self):
        assert math.isinf(curvature_service.tau(2.0, 3.0, 0.5, math.pi))

    def test_zero_time_negative_dimension(self):
        assert curvature_service.tau(-1.0, -2.0, 0.0, 1.0) == 0.0

    def test_parameter_bundle(self):
        values = curvature_service.coefficients(CurvatureParams(K=0.0, N=3.0, t=0.25, theta=1.0))
        assert values["sigma"] == pytest.approx(0.25)
        assert values["tau"] == pytest.approx(0.25)
        with pytest.raises(ValueError):
            CurvatureParams(K=0.0, N=0.5)


class TestEntropies:
    """Shannon 与 Rényi 熵"""

    def test_shannon(self, line5):
        uniform = ProbMeasure.uniform_on(line5, range(5))
        assert curvature_service.shannon_entropy(line5, uniform) == pytest.approx(-math.log(5))
        assert curvature_service.shannon_entropy(line5, ProbMeasure.dirac(5, 2)) == 0.0

    def test_renyi(self, line5):
        uniform = ProbMeasure.uniform_on(line5, range(5))
        assert curvature_service.renyi_entropy(line5, uniform, 2.0) == pytest.approx(-math.sqrt(5))
        assert curvature_service.renyi_entropy(line5, uniform, -1.0) == pytest.approx(0.2)
        with pytest.raises(CurvatureDomainError):
            curvature_service.renyi_entropy(line5, uniform, 0.5)


class TestProfiles:
    """闭式轮廓与二进常数"""

    def test_cd_infty(self):
        assert curvature_service.profile("cd_infty", -1.0, None, 2.0) == pytest.approx(math.exp(4 / 12))
        assert curvature_service.profile("cd_infty", 1.0, None, 2.0) == 1.0

    def test_mcp(self):
        assert curvature_service.profile("mcp", 0.0, 3.0, 5.0) == pytest.approx(8.0)
        assert curvature_service.profile("mcp", -1.0, 3.0, 1.0) == pytest.approx(8.0 * math.exp(math.sqrt(2)))
        with pytest.raises(CurvatureDomainError):
            curvature_service.profile("mcp", 0.0, None, 1.0)

    def test_cd_negative(self):
        assert curvature_service.profile("cd_negative", 0.0, -1.0, 3.0) == 1.0
        theta = 0.25 * math.sqrt(0.5)
        assert curvature_service.profile("cd_negative", -1.0, -1.0, 1.0) == pytest.approx(
            (theta / math.sin(theta)) ** 2)
        with pytest.raises(CurvatureDomainError):
            curvature_service.profile("cd_negative", -1.0, -1.0, math.pi * math.sqrt(2))

    def test_dyadic_product_limit(self):
        assert curvature_service.dyadic_product(2.0, -1.0, 1) == pytest.approx(math.exp(0.5))
        assert curvature_service.dyadic_product(2.0, -1.0, 40) == pytest.approx(math.exp(4 / 6))
        assert curvature_service.dyadic_product(2.0, 1.0, 5) == 1.0

    def test_spreading_bounds(self):
        assert curvature_service.spreading_bound(0.5, 0.25, 2.0, 0.0) == pytest.approx(2.0)
        assert curvature_service.spreading_bound(0.5, 0.5, 2.0, 3.0, -2.0) == pytest.approx(2 * math.exp(-3.0))
        assert curvature_service.spreading_bound(1.0, 1.0, 2.0, -2.0, -1.0) == pytest.approx(math.cos(1.0) ** 2)
        with pytest.raises(CurvatureDomainError):
            curvature_service.spreading_bound(1.0, 1.0, 10.0, -2.0, -1.0)


class TestCdInfty:
    """平移测地线上的熵凸性"""

    def test_flat_translation_is_tight(self, line17, translation):
        mu0, mu1, geodesic = translation
        report = curvature_service.cd_infty_check(line17, 2.0, 0.0, mu0, mu1, geodesic)
        assert report.passed
        assert abs(report.worst_margin) <= 1e-6

    def test_large_curvature_fails(self, line17, translation):
        mu0, mu1, geodesic = translation
        report = curvature_service.cd_infty_check(line17, 2.0, 10.0, mu0, mu1, geodesic)
        assert not report.passed
        # t = 1/2：(K/2)·t(1−t)·W² = 5·0.25·64
        assert report.worst_margin == pytest.approx(-80.0, abs=1e-5)

    def test_endpoint_mismatch(self, line17, translation):
        mu0, mu1, geodesic = translation
        with pytest.raises(InputError):
            curvature_service.cd_infty_check(line17, 2.0, 0.0, mu1, mu1, geodesic)


class TestMcp:
    """向中心点收缩的 MCP 检查"""

    @pytest.fixture
    def contraction(self):
        space = space_service.line(65)
        mu0 = ProbMeasure.uniform_on(space, [16, 32, 48, 64])
        geodesic = interpolation_service.dyadic_geodesic(
            space, 2.0, mu0, ProbMeasure.dirac(65, 0), levels=4)
        return space, mu0, geodesic

    def test_flat_line_passes(self, contraction):
        space, mu0, geodesic = contraction
        report = curvature_service.mcp_check(space, 2.0, 0.0, 3.0, mu0, 0, geodesic)
        assert report.passed
        density_rows = [c for c in report.checks if c.check_id.startswith("mcp/density")]
        assert len(density_rows) == 16
        assert density_rows[0].details["factor"] == pytest.approx(1.0)

    def test_domain(self, contraction):
        space, mu0, geodesic = contraction
        with pytest.raises(CurvatureDomainError):
            curvature_service.mcp_check(space, 2.0, 0.0, math.inf, mu0, 0, geodesic)
        with pytest.raises(InputError):
            curvature_service.mcp_check(space, 2.0, 0.0, 3.0, mu0, 99, geodesic)


class TestCdNegative:
    """负维数检查"""

    def test_flat_translation(self, line17, translation):
        mu0, mu1, geodesic = translation
        report = curvature_service.cd_negative_check(line17, 2.0, 0.0, -2.0, mu0, mu1, geodesic)
        assert report.passed
        assert report.data["dimension_grid"] == [-2.0, -1.0, -0.5]
        ids = {c.check_id for c in report.checks}
        assert {"cd_negative/density", "cd_negative/spreading"} <= ids

    def test_dimension_domain(self, line17, translation):
        mu0, mu1, geodesic = translation
        with pytest.raises(CurvatureDomainError):
            curvature_service.cd_negative_check(line17, 2.0, 0.0, 1.0, mu0, mu1, geodesic)
        with pytest.raises(CurvatureDomainError):
            curvature_service.cd_negative_check(line17, 2.0, 0.0, -2.0, mu0, mu1, geodesic,
                                                dimension_grid=[-3.0])

    def test_renyi_matches_transport_side(self, line17, translation):
        mu0, mu1, geodesic = translation
        report = curvature_service.cd_negative_check(line17, 2.0, 0.0, -2.0, mu0, mu1, geodesic,
                                                     dimension_grid=[-2.0])
        rows = [c for c in report.checks if c.check_id.startswith("cd_negative/N'")]
        assert len(rows) == 9
        for row in rows:
            np.testing.assert_allclose(row.lhs, row.rhs, rtol=1e-6)

    def test_uses_realized_coupling(self):
        """最优耦合不唯一时沿用测地线构造实际使用的耦合"""
        space = space_service.cycle(16)
        mu0 = ProbMeasure.uniform_on(space, [0, 8])
        mu1 = ProbMeasure.uniform_on(space, [4, 12])
        geodesic = interpolation_service.dyadic_geodesic(space, 2.0, mu0, mu1, levels=2)
        report = curvature_service.cd_negative_check(space, 2.0, 0.0, -2.0, mu0, mu1, geodesic,
                                                     dimension_grid=[-2.0])
        assert report.data["coupling"] == geodesic.coupling.pairs()
        start = next(c for c in report.checks if c.check_id == "cd_negative/N'=-2/t=0.000000")
        assert start.lhs == pytest.approx(start.rhs, rel=1e-9)
