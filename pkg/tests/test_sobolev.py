"""测试计划意义下的 Sobolev 理论：上梯度、最小梯度、计划族、主计划与 Clarkson 不等式"""

import math

import numpy as np
import pytest

from bip_lab.exceptions import CurveError, InputError, SolverConvergenceError
from bip_lab.models import DiscreteCurve, GradientCandidate, RealFunction, TestPlan
from bip_lab.services import sobolev_service, space_service
from bip_lab.services.gradient_solver import MinimalGradientSolver


def identity(space):
    return RealFunction(values=np.arange(space.n, dtype=float))


@pytest.fixture
def family5(line5):
    """5 点直线上的全部原子对（含反向）"""
    return sobolev_service.build_geod_family(line5, 2.0, 1, 20, include_reversed=True)


class TestGradientSolver:
    """凸规划求解器"""

    def test_projection(self):
        solver = MinimalGradientSolver(np.array([[1.0, 1.0]]), np.array([2.0]), np.ones(2), 2.0)
        G, objective, residual = solver.solve()
        np.testing.assert_allclose(G, [1.0, 1.0], atol=1e-8)
        assert objective == pytest.approx(2.0, abs=1e-7)
        assert residual <= 1e-9

    def test_dual_general_exponent(self):
        solver = MinimalGradientSolver(np.array([[1.0, 1.0]]), np.array([2.0]), np.ones(2), 3.0)
        G, objective, _ = solver.solve()
        np.testing.assert_allclose(G, [1.0, 1.0], atol=1e-5)
        assert objective == pytest.approx(2.0, abs=1e-4)

    def test_weights_shift_mass(self):
        solver = MinimalGradientSolver(np.array([[1.0, 1.0]]), np.array([3.0]),
                                       np.array([1.0, 2.0]), 2.0)
        G, _, _ = solver.solve()
        # 加权投影：G ∝ 1/w
        np.testing.assert_allclose(G, [2.0, 1.0], atol=1e-7)

    def test_no_active_constraint(self):
        solver = MinimalGradientSolver(np.array([[1.0, 0.0]]), np.array([0.0]), np.ones(2), 2.0)
        G, objective, residual = solver.solve()
        np.testing.assert_allclose(G, 0.0)
        assert objective == 0.0 and residual == 0.0

    def test_infeasible_row(self):
        solver = MinimalGradientSolver(np.array([[0.0, 0.0]]), np.array([1.0]), np.ones(2), 2.0)
        with pytest.raises(SolverConvergenceError):
            solver.solve()


class TestUpperGradient:
    """积分上梯度不等式"""

    def test_constraint_row(self, line3):
        plan = TestPlan(curves=(DiscreteCurve(nodes=(0, 1, 2)),), probs=[1.0])
        a, b = sobolev_service.constraint_row(line3, identity(line3), plan)
        np.testing.assert_allclose(a, [1, 1, 0])
        assert b == 2.0

    def test_lipschitz_bound_passes(self, line3):
        plan = TestPlan(curves=(DiscreteCurve(nodes=(0, 1, 2)),), probs=[1.0])
        report = sobolev_service.upper_gradient_check(
            line3, identity(line3), GradientCandidate.constant(3, 1.0), plan)
        assert report.passed
        assert report.data["lhs"] == pytest.approx(2.0)
        assert report.data["majorant_split"] == pytest.approx(2.0 * math.sqrt(3.0))

    def test_small_candidate_fails(self, line3):
        plan = TestPlan(curves=(DiscreteCurve(nodes=(0, 1, 2)),), probs=[1.0])
        report = sobolev_service.upper_gradient_check(
            line3, identity(line3), GradientCandidate.constant(3, 0.5), plan)
        assert not report.passed
        assert [c.check_id for c in report.failures] == ["ug/integrated"]

    def test_length_mismatch(self, line3):
        plan = TestPlan(curves=(DiscreteCurve(nodes=(0, 1)),), probs=[1.0])
        with pytest.raises(InputError):
            sobolev_service.constraint_row(line3, RealFunction(values=[0.0, 1.0]), plan)


class TestMinimalGradient:
    """最小弱上梯度"""

    @pytest.mark.parametrize("p, atol", [(1.5, 1e-4), (2.0, 1e-6), (3.0, 1e-4)])
    def test_identity_on_line(self, line9, p, atol):
        family = sobolev_service.build_geod_family(line9, 2.0, 1, 72, include_reversed=True)
        assert family.size == 72
        G = sobolev_service.minimal_weak_upper_gradient(line9, identity(line9), p, family)
        np.testing.assert_allclose(G.values, 1.0, atol=atol)
        assert G.max_residual <= 1e-6

    def test_constant_function(self, line5, family5):
        f = RealFunction(values=np.full(5, 3.0))
        G = sobolev_service.minimal_weak_upper_gradient(line5, f, 2.0, family5)
        np.testing.assert_allclose(G.values, 0.0)

    def test_scaling(self, line5, family5):
        f = RealFunction(values=[0.0, 2.0, 1.0, 1.0, 4.0])
        G1 = sobolev_service.minimal_weak_upper_gradient(line5, f, 2.0, family5)
        G2 = sobolev_service.minimal_weak_upper_gradient(line5, f.scaled(2.0), 2.0, family5)
        np.testing.assert_allclose(G2.values, 2.0 * G1.values, atol=1e-6)


class TestPlanFamily:
    """Geod 计划族的构造"""

    def test_default_steps(self, line9, line5):
        assert sobolev_service.default_steps(line9, 3) == 48
        assert sobolev_service.default_steps(line5, 1) == 4

    def test_measure_pairs(self, line5):
        pairs = sobolev_service.measure_pairs(line5, 100)
        labels = [label for _, _, label in pairs]
        assert len(pairs) == 13
        assert labels[0] == "atoms 0->1"
        assert labels[10:] == ["patches 0->3", "patches 0->4", "patches 1->4"]
        assert len(sobolev_service.measure_pairs(line5, 100, include_reversed=True)) == 23

    def test_restriction_closure(self, line5):
        family = sobolev_service.build_geod_family(line5, 2.0, 3, 2, T=12)
        assert family.size == 12
        parents = [tag.parent for tag in family.tags]
        assert parents[:6] == [None, 0, 0, 0, 0, 0]
        assert all(plan.T in (12, 6, 4) for plan in family.plans)

    def test_indivisible_grid(self, line5):
        with pytest.raises(CurveError):
            sobolev_service.build_geod_family(line5, 2.0, 2, 1, T=5)

    def test_invalid_budget(self, line5):
        with pytest.raises(InputError):
            sobolev_service.build_geod_family(line5, 2.0, 1, 0)


class TestMasterPlan:
    """主测试计划与计划族的等价性"""

    def test_weights(self, family5):
        weights = sobolev_service.master_weights(family5)
        for k, (w, tag) in enumerate(zip(weights, family5.tags)):
            assert w == pytest.approx(1.0 / (2 ** (k + 1) * max(tag.comp, tag.ke, 1.0)))

    def test_minimal_gradient_passes_both(self, line5):
        family = sobolev_service.build_geod_family(line5, 2.0, 2, 20, include_reversed=True)
        f = identity(line5)
        G = sobolev_service.minimal_weak_upper_gradient(line5, f, 2.0, family)
        master = sobolev_service.build_master_plan(family, 2.0)
        report = sobolev_service.master_plan_check(line5, f, G, master, family)
        assert report.passed
        assert report.data["master_pass"] and report.data["family_pass"]
        assert report.data["consistent"]

    def test_small_candidate_fails_both(self, line5, family5):
        f = identity(line5)
        master = sobolev_service.build_master_plan(family5, 2.0)
        report = sobolev_service.master_plan_check(
            line5, f, GradientCandidate.constant(5, 0.5), master, family5)
        assert not report.passed
        assert not report.data["master_pass"] and not report.data["family_pass"]
        assert report.data["consistent"]
        assert report.data["failing_curves"]


class TestPIndependence:
    """不同指数的最小梯度比较"""

    def test_line_agrees(self, line5, family5):
        report = sobolev_service.gradient_p_comparison(
            line5, identity(line5), 1.5, 2.0, family5, bip_certified=True)
        assert report.passed
        assert report.data["agree"]
        assert report.flags == ("p-independent on this space",)

    def test_order(self, line5, family5):
        with pytest.raises(InputError):
            sobolev_service.gradient_p_comparison(line5, identity(line5), 2.0, 2.0, family5)


class TestLeibniz:
    """Leibniz 法则"""

    def test_constant_factor(self, line5, family5):
        report = sobolev_service.leibniz_check(
            line5, identity(line5), RealFunction(values=np.full(5, 2.0)), 2.0, family5)
        assert report.passed
        assert len(report.checks) == 5
        assert report.data["min_margin"] == pytest.approx(0.0, abs=1e-5)


class TestClarkson:
    """Clarkson 不等式"""

    def test_random_vectors(self, rng):
        for _ in range(1000):
            n = int(rng.integers(2, 7))
            space = space_service.weighted_line(rng.uniform(0.1, 2.0, size=n))
            omega = rng.normal(size=(n, 3))
            eta = rng.normal(size=(n, 3))
            p = float(rng.uniform(1.1, 6.0))
            report = sobolev_service.clarkson_check(
                *sobolev_service.clarkson_inputs(omega, eta), p, space)
            assert report.passed

    def test_parallelogram_violation(self, line3):
        with pytest.raises(InputError):
            sobolev_service.clarkson_check([1, 1, 1], [1, 1, 1], [1, 1, 1], [1, 1, 1], 2.0, line3)


class TestDepthDiagnostic:
    """计划族深度诊断"""

    def test_rows(self, line5):
        report = sobolev_service.gradient_depth_diagnostic(line5, identity(line5), 2.0, 2.0, [2, 1])
        rows = report.data["depths"]
        assert [row["depth"] for row in rows] == [1, 2]
        assert rows[0]["change"] is None
        assert rows[1]["change"] == pytest.approx(0.0, abs=1e-6)
        assert report.flags == ("descriptive only",)

    def test_empty(self, line5):
        with pytest.raises(InputError):
            sobolev_service.gradient_depth_diagnostic(line5, identity(line5), 2.0, 2.0, [])
