"""最优运输：运输单纯形、暴力枚举对照、推前测度与 W_q 收敛"""

import numpy as np
import pytest
from scipy.optimize import linprog

from bip_lab.exceptions import InputError, TransportError
from bip_lab.models import FiniteMetricMeasureSpace, ProbMeasure
from bip_lab.services import space_service, transport_service
from bip_lab.services.simplex import TransportationSimplex, north_west_corner


def random_space(rng, n=6):
    """平面随机点的欧氏距离空间"""
    points = rng.uniform(0, 1, size=(n, 2))
    dist = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    return FiniteMetricMeasureSpace(dist=dist, weight=np.ones(n))


def random_measure(rng, n, max_support):
    k = int(rng.integers(1, max_support + 1))
    support = rng.choice(n, size=k, replace=False)
    mass = np.zeros(n)
    mass[support] = rng.uniform(0.1, 1.0, size=k)
    return ProbMeasure.from_weights(mass)


class TestWassersteinExamples:
    """闭式小例子"""

    def test_diracs(self, line3):
        result = transport_service.wasserstein(line3, 2.0, ProbMeasure.dirac(3, 0),
                                               ProbMeasure.dirac(3, 1))
        assert result.distance == pytest.approx(1.0)
        assert result.coupling.pairs() == [(0, 1, 1.0)]

    def test_identity(self, line3):
        mu = ProbMeasure(mass=[0.2, 0.3, 0.5])
        result = transport_service.wasserstein(line3, 2.0, mu, mu)
        assert result.cost == pytest.approx(0.0, abs=1e-15)
        np.testing.assert_allclose(result.coupling.plan, np.diag(mu.mass), atol=1e-15)

    def test_shift_on_line(self, line3):
        mu0 = ProbMeasure(mass=[0.5, 0.5, 0.0])
        mu1 = ProbMeasure(mass=[0.0, 0.5, 0.5])
        result = transport_service.wasserstein(line3, 2.0, mu0, mu1)
        # 两段单位平移优于一次长度 2 的运输
        assert result.cost == pytest.approx(1.0)
        assert result.distance == pytest.approx(1.0)
        oracle = transport_service.brute_force_wasserstein(line3, 2.0, mu0, mu1)
        assert oracle.cost == pytest.approx(result.cost, abs=1e-12)

    def test_unit_triangle(self):
        triangle = space_service.complete(3)
        uniform = ProbMeasure(mass=np.full(3, 1 / 3))
        other = ProbMeasure(mass=[0.5, 0.25, 0.25])
        same = transport_service.brute_force_wasserstein(triangle, 2.0, uniform, uniform)
        diff = transport_service.brute_force_wasserstein(triangle, 2.0, uniform, other)
        assert same.cost == pytest.approx(0.0, abs=1e-15)
        assert diff.cost > 0

    def test_exponent_out_of_range(self, line3):
        mu = ProbMeasure.dirac(3, 0)
        for q in (1.0, 0.5, np.inf):
            with pytest.raises(InputError):
                transport_service.wasserstein(line3, q, mu, mu)

    def test_disconnected_support(self):
        space = FiniteMetricMeasureSpace.from_edges(2, [], [1, 1])
        with pytest.raises(TransportError):
            transport_service.wasserstein(space, 2.0, ProbMeasure.dirac(2, 0),
                                          ProbMeasure.dirac(2, 1))

    def test_brute_force_size_limit(self):
        space = space_service.line(8)
        uniform = ProbMeasure(mass=np.full(8, 1 / 8))
        with pytest.raises(TransportError):
            transport_service.brute_force_wasserstein(space, 2.0, uniform, uniform)


class TestOracleEquivalence:
    """单纯形与暴力枚举在小支撑上一致"""

    def test_randomized_instances(self, rng):
        for _ in range(500):
            space = random_space(rng)
            q = float(rng.choice([1.5, 2.0, 3.0]))
            mu0 = random_measure(rng, space.n, 4)
            mu1 = random_measure(rng, space.n, 4)
            fast = transport_service.wasserstein(space, q, mu0, mu1)
            slow = transport_service.brute_force_wasserstein(space, q, mu0, mu1)
            assert fast.cost == pytest.approx(slow.cost, abs=1e-9)

    def test_against_linprog(self, rng):
        for _ in range(20):
            space = random_space(rng, 8)
            mu0 = random_measure(rng, 8, 8)
            mu1 = random_measure(rng, 8, 8)
            cost = space.dist ** 2
            A_eq = np.vstack([np.kron(np.eye(8), np.ones(8)), np.kron(np.ones(8), np.eye(8))])
            b_eq = np.concatenate([mu0.mass, mu1.mass])
            reference = linprog(cost.ravel(), A_eq=A_eq, b_eq=b_eq, method="highs")
            result = transport_service.wasserstein(space, 2.0, mu0, mu1)
            assert result.cost == pytest.approx(reference.fun, abs=1e-7)


class TestMetricAxioms:
    """W_q 的度量性质"""

    def test_symmetry_and_triangle(self, rng):
        for _ in range(50):
            space = random_space(rng)
            mus = [random_measure(rng, space.n, 4) for _ in range(3)]
            d01 = transport_service.wasserstein(space, 2.0, mus[0], mus[1]).distance
            d10 = transport_service.wasserstein(space, 2.0, mus[1], mus[0]).distance
            d12 = transport_service.wasserstein(space, 2.0, mus[1], mus[2]).distance
            d02 = transport_service.wasserstein(space, 2.0, mus[0], mus[2]).distance
            assert d01 == pytest.approx(d10, abs=1e-10)
            assert d02 <= d01 + d12 + 1e-9

    def test_monotone_in_q_on_small_diameter(self, rng):
        space = space_service.line(4, spacing=1 / 3)
        for _ in range(30):
            mu0 = random_measure(rng, 4, 4)
            mu1 = random_measure(rng, 4, 4)
            w = [transport_service.wasserstein(space, q, mu0, mu1).distance
                 for q in (1.5, 2.0, 3.0)]
            assert w[0] <= w[1] + 1e-12
            assert w[1] <= w[2] + 1e-12

    def test_coupling_marginals(self, rng):
        space = random_space(rng, 7)
        for _ in range(30):
            mu0 = random_measure(rng, 7, 7)
            mu1 = random_measure(rng, 7, 7)
            plan = transport_service.wasserstein(space, 2.0, mu0, mu1).coupling.plan
            np.testing.assert_allclose(plan.sum(axis=1), mu0.mass, atol=1e-10)
            np.testing.assert_allclose(plan.sum(axis=0), mu1.mass, atol=1e-10)


class TestSimplex:
    """运输单纯形的初始基与退化情形"""

    def test_north_west_corner_basis_size(self):
        flow, cells = north_west_corner(np.array([0.5, 0.5]), np.array([0.5, 0.5]))
        assert cells == [(0, 0), (1, 0), (1, 1)]
        np.testing.assert_allclose(flow, [[0.5, 0.0], [0.0, 0.5]])

    def test_degenerate_instance_terminates(self):
        supply = np.full(4, 0.25)
        demand = np.full(4, 0.25)
        cost = np.ones((4, 4)) - np.eye(4)[::-1]
        solver = TransportationSimplex(supply, demand, cost)
        flow = solver.solve()
        assert float((flow * cost).sum()) == pytest.approx(0.0, abs=1e-15)


class TestPushforward:
    """推前测度"""

    def test_identity(self):
        mu = ProbMeasure(mass=[0.3, 0.7])
        np.testing.assert_allclose(transport_service.pushforward([0, 1], mu).mass, mu.mass)

    def test_constant_map(self):
        mu = ProbMeasure(mass=[0.2, 0.3, 0.5])
        result = transport_service.pushforward([0, 0, 0], mu)
        np.testing.assert_allclose(result.mass, [1.0, 0.0, 0.0])

    def test_swap(self):
        result = transport_service.pushforward({0: 1, 1: 0}, ProbMeasure(mass=[0.3, 0.7]))
        np.testing.assert_allclose(result.mass, [0.7, 0.3])

    def test_undefined_on_support(self):
        with pytest.raises(InputError):
            transport_service.pushforward({0: 0}, ProbMeasure(mass=[0.5, 0.5]))

    def test_map_into_larger_space(self):
        result = transport_service.pushforward([2, 4], ProbMeasure(mass=[0.5, 0.5]), 5)
        np.testing.assert_allclose(result.mass, [0, 0, 0.5, 0, 0.5])


class TestConvergence:
    """W_q 收敛性检查"""

    def test_constant_sequence(self, line3):
        mu = ProbMeasure(mass=[0.2, 0.3, 0.5])
        report = transport_service.wq_convergence_check(line3, 2.0, [mu] * 4, mu, 0)
        assert report.passed
        np.testing.assert_allclose(report.data["distances"], 0.0, atol=1e-12)

    def test_vanishing_perturbation(self, line3):
        q = 2.0
        seq = [ProbMeasure(mass=[1 - 1 / n, 0.0, 1 / n]) for n in range(1, 40)]
        report = transport_service.wq_convergence_check(line3, q, seq,
                                                        ProbMeasure.dirac(3, 0), 0, tol=0.5)
        expected = [(1 / n) ** (1 / q) * 2.0 for n in range(1, 40)]
        np.testing.assert_allclose(report.data["distances"], expected, rtol=1e-9)
        assert report.data["distances"][-1] < report.data["distances"][0]

    def test_alternating_sequence(self, line3):
        seq = [ProbMeasure.dirac(3, k % 2) for k in range(6)]
        report = transport_service.wq_convergence_check(line3, 2.0, seq,
                                                        ProbMeasure.dirac(3, 0), 0)
        assert not report.passed

    def test_empty_sequence(self, line3):
        with pytest.raises(InputError):
            transport_service.wq_convergence_check(line3, 2.0, [], ProbMeasure.dirac(3, 0), 0)
