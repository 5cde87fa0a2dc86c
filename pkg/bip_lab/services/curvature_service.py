import math
from typing import List, Optional, Sequence

import numpy as np

from ..config import settings
from ..exceptions import CurvatureDomainError, InputError
from ..models import (
    CheckReport,
    CheckResult,
    CurvatureParams,
    DyadicGeodesic,
    ExtendedReal,
    FiniteMetricMeasureSpace,
    ProbMeasure,
    ProfileFunction,
    is_infinite,
)
from .base import BaseService
from .space_service import space_service
from .transport_service import check_exponent, transport_service

# Kθ² 分支边界的判定容差
BRANCH_TOL = 1e-14


def _check_dimension(N: float) -> None:
    if N == 0 or math.isnan(N):
        raise CurvatureDomainError("N 不能为 0")
    if math.isinf(N):
        raise CurvatureDomainError("σ/τ 不接受 N = ∞（仅 cd_infty_check 使用）")
    if 0 < N < 1:
        raise CurvatureDomainError(f"正的 N 必须 ≥ 1，实际为 {N}")


class CurvatureService(BaseService):
    """曲率维数服务类

    畸变系数 σ、τ（含负维数变体），Shannon / Rényi 熵，
    CD_q(K,∞)、MCP(K,N)、负维数 CD_q(K,N) 的检查器，以及闭式轮廓函数。
    """

    # ------------------------------------------------------------------
    # 畸变系数
    # ------------------------------------------------------------------

    def sigma(self, K: float, N: float, t: float, theta: float) -> ExtendedReal:
        """畸变系数 σ^{(t)}_{K,N}(θ)；N < 0 时为负维数变体

        N > 0 时 Kθ² ≥ Nπ² 为 +∞；N < 0 时 Kθ² ≤ Nπ² 为 +∞。
        分支边界按 Kθ² 的 1e-14 容差判定，等号归入 +∞ 分支。

        Args:
            K: 曲率下界
            N: 维数，N ≥ 1 或 N < 0
            t: 时间，t ∈ [0, 1]
            theta: 距离参数，θ ≥ 0

        Returns:
            ExtendedReal: 系数值或 math.inf

        Raises:
            CurvatureDomainError: N = 0、N = ∞ 或 0 < N < 1
        """
        _check_dimension(N)
        return self._sigma(K, N, t, theta)

    def _sigma(self, K: float, N: float, t: float, theta: float) -> ExtendedReal:
        if not 0.0 <= t <= 1.0:
            raise CurvatureDomainError(f"t 必须在 [0, 1] 内，实际为 {t}")
        if theta < 0:
            raise CurvatureDomainError(f"θ 必须非负，实际为 {theta}")
        kt2 = K * theta * theta
        limit = N * math.pi ** 2
        if N > 0:
            if kt2 >= limit - BRANCH_TOL:
                return math.inf
        elif kt2 <= limit + BRANCH_TOL:
            return math.inf
        if abs(kt2) <= BRANCH_TOL:
            return t
        ratio = K / N
        if ratio > 0:
            s = theta * math.sqrt(ratio)
            return math.sin(t * s) / math.sin(s)
        s = theta * math.sqrt(-ratio)
        return math.sinh(t * s) / math.sinh(s)

    def tau(self, K: float, N: float, t: float, theta: float) -> ExtendedReal:
        """畸变系数 τ^{(t)}_{K,N}(θ) = t^{1/N} σ^{(t)}_{K,N−1}(θ)^{1−1/N}

        N = 1 时 K ≤ 0 取 t，K > 0 取 +∞；N < 0 时由负维数 σ 组合，
        t = 0 按连续性取 0。+∞ 吸收传播。
        """
        _check_dimension(N)
        if N == 1:
            return t if K <= 0 else math.inf
        if t == 0:
            return 0.0
        inner = self._sigma(K, N - 1, t, theta)
        if is_infinite(inner):
            return math.inf
        return t ** (1.0 / N) * inner ** (1.0 - 1.0 / N)

    def coefficients(self, params: CurvatureParams) -> dict:
        """按参数包同时求 σ 与 τ"""
        return {
            "sigma": self.sigma(params.K, params.N, params.t, params.theta),
            "tau": self.tau(params.K, params.N, params.t, params.theta),
        }

    # ------------------------------------------------------------------
    # 熵泛函
    # ------------------------------------------------------------------

    def shannon_entropy(self, space: FiniteMetricMeasureSpace, mu: ProbMeasure) -> float:
        """Ent_m(μ) = ∑ ρ log ρ · weight，0·log 0 := 0"""
        rho = mu.density(space)
        pos = rho > 0
        return float((rho[pos] * np.log(rho[pos]) * space.weight[pos]).sum())

    def renyi_entropy(self, space: FiniteMetricMeasureSpace, mu: ProbMeasure,
                      N: float) -> float:
        """Rényi 熵：N ≥ 1 时 −∫ρ^{1−1/N} dm，N < 0 时 +∫ρ^{1−1/N} dm

        零原子按连续性贡献 0。
        """
        if N == 0 or 0 < N < 1:
            raise CurvatureDomainError(f"Rényi 熵要求 N ≥ 1 或 N < 0，实际为 {N}")
        rho = mu.density(space)
        pos = rho > 0
        exponent = 1.0 - 1.0 / N
        value = float((rho[pos] ** exponent * space.weight[pos]).sum())
        return value if N < 0 else -value

    # ------------------------------------------------------------------
    # 轮廓函数与常数
    # ------------------------------------------------------------------

    def profile(self, kind: str, K: float, N: Optional[float], D: float) -> float:
        """闭式轮廓函数 C(D)

        cd_infty: e^{K⁻D²/12}；mcp: 2^N e^{D√((N−1)K⁻)}；
        cd_negative: K ≥ 0 时为 1，K < 0 时为 (θ / sin θ)^{1−N}，θ = (D/4)√(K/(N−1))。

        Raises:
            CurvatureDomainError: 参数缺失或 cd_negative 越过 D < π√((N−1)/K)
        """
        k_minus = max(-K, 0.0)
        if kind == "cd_infty":
            return math.exp(k_minus * D * D / 12.0)
        if kind == "mcp":
            if N is None or N < 1 or math.isinf(N):
                raise CurvatureDomainError(f"mcp 轮廓需要 N ∈ [1, ∞)，实际为 {N}")
            return 2.0 ** N * math.exp(D * math.sqrt((N - 1) * k_minus))
        if kind == "cd_negative":
            if N is None or N >= 0:
                raise CurvatureDomainError(f"cd_negative 轮廓需要 N < 0，实际为 {N}")
            if K >= 0:
                return 1.0
            if D >= math.pi * math.sqrt((N - 1) / K):
                raise CurvatureDomainError(
                    f"D={D} 超出负维数轮廓的定义域 D < π√((N−1)/K) = "
                    f"{math.pi * math.sqrt((N - 1) / K):.6g}")
            if D == 0:
                return 1.0
            theta = D / 4.0 * math.sqrt(K / (N - 1))
            return (theta / math.sin(theta)) ** (1.0 - N)
        raise CurvatureDomainError(f"没有闭式的轮廓类型: {kind}")

    def profile_value(self, profile: ProfileFunction, D: float) -> float:
        """按 ProfileFunction 求 C(D)，结果不小于 1"""
        if profile.kind == "sampled":
            value = profile.sampled_value(D)
        else:
            value = self.profile(profile.kind, profile.K, profile.N, D)
        return max(1.0, value)

    def midpoint_factor(self, D: float, K: float) -> float:
        """单层中点因子 P(D, K) = e^{K⁻D²/8}"""
        return math.exp(max(-K, 0.0) * D * D / 8.0)

    def dyadic_product(self, D: float, K: float, levels: int) -> float:
        """∏_{i=1}^{levels} P(2^{−i+1}D, K)，levels → ∞ 时趋于 e^{K⁻D²/6}"""
        return math.prod(self.midpoint_factor(D * 2.0 ** (1 - i), K)
                         for i in range(1, levels + 1))

    def bip_constants(self, D: float, K: float) -> dict:
        """记录两个候选常数 e^{K⁻D²/12} 与 e^{K⁻D²/6}"""
        k_minus = max(-K, 0.0)
        return {
            "C_twelfth": math.exp(k_minus * D * D / 12.0),
            "C_sixth": math.exp(k_minus * D * D / 6.0),
        }

    def spreading_bound(self, norm0: float, norm1: float, D: float, K: float,
                        N: Optional[float] = None) -> float:
        """中点支撑质量下界 m({ρ_{1/2} > 0})

        N 缺省或为正时取 1/(P(D,K)·(‖ρ₀‖∨‖ρ₁‖))；N < 0 时：
        K ≥ 0 为 e^{−½√((1−N)K)D}/M，K < 0 为 cos^{1−N}(½D√(K/(N−1)))/M。

        Raises:
            CurvatureDomainError: 范数非正，或 K < 0 时 ½D√(K/(N−1)) ≥ π/2
        """
        if norm0 <= 0 or norm1 <= 0:
            raise CurvatureDomainError("密度范数必须为正")
        bound = max(norm0, norm1)
        if N is None or N > 0:
            return 1.0 / (self.midpoint_factor(D, K) * bound)
        if K >= 0:
            return math.exp(-0.5 * math.sqrt((1 - N) * K) * D) / bound
        angle = 0.5 * D * math.sqrt(K / (N - 1))
        if angle >= math.pi / 2:
            raise CurvatureDomainError(f"½D√(K/(N−1)) = {angle:.6g} 超出 [0, π/2)")
        return math.cos(angle) ** (1 - N) / bound

    # ------------------------------------------------------------------
    # 检查器
    # ------------------------------------------------------------------

    def _check_endpoints(self, geodesic: DyadicGeodesic, mu0: ProbMeasure,
                         mu1: Optional[ProbMeasure]) -> None:
        tol = settings.MARGINAL_TOL
        if np.abs(geodesic.start.mass - mu0.mass).max() > tol:
            raise InputError("测地线起点与 mu0 不一致")
        if mu1 is not None and np.abs(geodesic.end.mass - mu1.mass).max() > tol:
            raise InputError("测地线终点与 mu1 不一致")

    def cd_infty_check(self, space: FiniteMetricMeasureSpace, q: float, K: float,
                       mu0: ProbMeasure, mu1: ProbMeasure,
                       geodesic: DyadicGeodesic) -> CheckReport:
        """CD_q(K,∞) 熵凸性检查

        在每个二进时间 t 检查
        Ent(μ_t) ≤ (1−t)Ent(μ₀) + tEnt(μ₁) − (K/2)t(1−t)W_q²(μ₀,μ₁)。
        右端第一项使用 Ent(μ₀)。
        """
        check_exponent(q)
        self._check_endpoints(geodesic, mu0, mu1)
        W = transport_service.wasserstein(space, q, mu0, mu1).distance
        ent0 = self.shannon_entropy(space, mu0)
        ent1 = self.shannon_entropy(space, mu1)
        checks = []
        for t, mu_t in zip(geodesic.times, geodesic.measures):
            lhs = self.shannon_entropy(space, mu_t)
            rhs = (1 - t) * ent0 + t * ent1 - 0.5 * K * t * (1 - t) * W * W
            checks.append(CheckResult.inequality(
                f"cd_infty/t={t:.6f}",
                "Ent(mu_t) <= (1-t)Ent(mu_0) + t Ent(mu_1) - (K/2)t(1-t)W_q^2",
                lhs, rhs, slack=settings.CHECK_SLACK, details={"t": t}))
        report = CheckReport(name="cd_infty_check", checks=tuple(checks),
                             data={"K": K, "q": q, "W": W, "ent0": ent0, "ent1": ent1})
        self.logger.info(f"CD_q(K,∞) 检查: K={K}，最坏余量 {report.worst_margin:.6g}")
        return report

    def mcp_check(self, space: FiniteMetricMeasureSpace, q: float, K: float, N: float,
                  mu0: ProbMeasure, o: int, geodesic: DyadicGeodesic) -> CheckReport:
        """MCP(K,N) 检查

        对每个二进时间 t < 1 检查
        U_N(μ_t) ≤ −∫ τ^{(1−t)}_{K,N}(d(x,o)) ρ₀^{1−1/N} dm，
        并检查密度界 ‖ρ_t‖ ≤ (1−t)^{−N} e^{Dt√((N−1)K⁻)} ‖ρ₀‖。
        τ = +∞ 的情形按空真处理并记入 flags。
        """
        check_exponent(q)
        if not 1 <= N < math.inf:
            raise CurvatureDomainError(f"MCP 要求 N ∈ [1, ∞)，实际为 {N}")
        if not 0 <= o < space.n:
            raise InputError(f"中心点 {o} 越界")
        self._check_endpoints(geodesic, mu0, ProbMeasure.dirac(space.n, o))
        rho0 = mu0.density(space)
        support = mu0.support
        exponent = 1.0 - 1.0 / N
        D = space_service.diameter(space, list(support) + [o])
        norm0 = float(rho0.max())
        k_minus = max(-K, 0.0)
        checks, flags = [], []
        for t, mu_t in zip(geodesic.times, geodesic.measures):
            if t >= 1:
                continue
            taus = np.array([self.tau(K, N, 1 - t, space.dist[x, o]) for x in support])
            if np.any(np.isinf(taus)):
                rhs = math.inf
                flags.append(f"t={t:.6f}: τ = +∞，检查为空真")
            else:
                rhs = -float((taus * rho0[support] ** exponent * space.weight[support]).sum())
            lhs = self.renyi_entropy(space, mu_t, N)
            checks.append(CheckResult.inequality(
                f"mcp/renyi/t={t:.6f}",
                "U_N(mu_t) <= -int tau_{K,N}^{(1-t)}(d(x,o)) rho_0^{1-1/N} dm",
                lhs, rhs, slack=settings.CHECK_SLACK, details={"t": t}))
            factor = math.exp(D * t * math.sqrt((N - 1) * k_minus)) / (1 - t) ** N
            checks.append(CheckResult.inequality(
                f"mcp/density/t={t:.6f}",
                "||rho_t|| <= (1-t)^{-N} e^{Dt sqrt((N-1)K^-)} ||rho_0||",
                mu_t.sup_density(space), factor * norm0,
                slack=settings.DENSITY_SLACK, details={"t": t, "factor": factor}))
        return CheckReport(name="mcp_check", checks=tuple(checks),
                           data={"K": K, "N": N, "o": o, "D": D, "norm0": norm0},
                           flags=tuple(flags))

    def default_dimension_grid(self, N: float) -> List[float]:
        return [N, N / 2.0, N / 4.0]

    def cd_negative_check(self, space: FiniteMetricMeasureSpace, q: float, K: float,
                          N: float, mu0: ProbMeasure, mu1: ProbMeasure,
                          geodesic: DyadicGeodesic,
                          dimension_grid: Optional[Sequence[float]] = None) -> CheckReport:
        """负维数 CD_q(K,N) 检查

        对网格中每个 N′ ∈ [N, 0) 与每个二进时间 t，沿测地线实际实现的端点耦合检查
        ^-U_{N′}(μ_t) ≤ ∑_{ij} α_ij [^-τ^{(1−t)}_{K,N′}(d_ij) ρ₀(i)^{−1/N′}
        + ^-τ^{(t)}_{K,N′}(d_ij) ρ₁(j)^{−1/N′}]；
        另检查插值密度界与中点支撑质量下界。密度幂次随 N′ 取 −1/N′，与
        ^-U_{N′} 使用同一个维数参数。测地线未携带耦合时退回一次最优运输求解。

        Args:
            dimension_grid: N′ 网格，默认 (N, N/2, N/4)
        """
        check_exponent(q)
        if not N < 0:
            raise CurvatureDomainError(f"负维数检查要求 N < 0，实际为 {N}")
        self._check_endpoints(geodesic, mu0, mu1)
        grid = list(dimension_grid) if dimension_grid is not None else self.default_dimension_grid(N)
        for n_prime in grid:
            if not N <= n_prime < 0:
                raise CurvatureDomainError(f"N′={n_prime} 不在 [N, 0) = [{N}, 0) 内")
        coupling = geodesic.coupling
        if coupling is None:
            coupling = transport_service.wasserstein(space, q, mu0, mu1).coupling
        pairs = coupling.pairs()
        rho0, rho1 = mu0.density(space), mu1.density(space)
        checks, flags = [], []
        for n_prime in grid:
            power = -1.0 / n_prime
            for t, mu_t in zip(geodesic.times, geodesic.measures):
                rhs = 0.0
                for i, j, mass in pairs:
                    d = space.dist[i, j]
                    left = self.tau(K, n_prime, 1 - t, d)
                    right = self.tau(K, n_prime, t, d)
                    if is_infinite(left) or is_infinite(right):
                        rhs = math.inf
                        break
                    rhs += mass * (left * rho0[i] ** power + right * rho1[j] ** power)
                if is_infinite(rhs):
                    flags.append(f"N′={n_prime}, t={t:.6f}: ^-τ = +∞，检查为空真")
                checks.append(CheckResult.inequality(
                    f"cd_negative/N'={n_prime:g}/t={t:.6f}",
                    "-U_{N'}(mu_t) <= int -tau^{(1-t)} rho_0^{-1/N'} + -tau^{(t)} rho_1^{-1/N'} dpi",
                    self.renyi_entropy(space, mu_t, n_prime), rhs,
                    slack=settings.CHECK_SLACK, details={"t": t, "N_prime": n_prime}))

        norm0, norm1 = mu0.sup_density(space), mu1.sup_density(space)
        bound = max(norm0, norm1)
        D = space_service.diameter(space, np.union1d(mu0.support, mu1.support))
        data = {"K": K, "N": N, "D": D, "dimension_grid": grid, "coupling": pairs}
        try:
            factor = self.profile("cd_negative", K, N, D)
        except CurvatureDomainError as e:
            factor = math.inf
            flags.append(str(e))
        checks.append(CheckResult.inequality(
            "cd_negative/density", "sup_t ||rho_t|| <= C_neg(D) (||rho_0|| v ||rho_1||)",
            float(geodesic.sup_densities(space.weight).max()), factor * bound,
            slack=settings.DENSITY_SLACK))
        if geodesic.level >= 1:
            midpoint = geodesic.at(0.5)
            try:
                spread = self.spreading_bound(norm0, norm1, D, K, N)
                checks.append(CheckResult.inequality(
                    "cd_negative/spreading", "spreading bound <= m({rho_1/2 > 0})",
                    spread, midpoint.support_mass(space), slack=settings.FEASIBILITY_TOL))
            except CurvatureDomainError as e:
                flags.append(str(e))
        return CheckReport(name="cd_negative_check", checks=tuple(checks),
                           data=data, flags=tuple(flags))


# 创建单例实例
curvature_service = CurvatureService()
