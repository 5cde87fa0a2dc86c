import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..config import settings
from ..exceptions import InputError, InterpolationError
from ..models import (
    CheckReport,
    CheckResult,
    Coupling,
    DyadicGeodesic,
    FiniteMetricMeasureSpace,
    LevelTrace,
    ProbMeasure,
    ProfileFunction,
    TestPlan,
)
from ..utils.parallel import parallel_map
from .base import BaseService
from .curvature_service import curvature_service
from .curve_service import curve_service, grid_index
from .midpoint_lp import MidpointProgram
from .space_service import space_service
from .transport_service import check_exponent, transport_service

# 二进层级 i 与上一层上界 -> 本层密度上界
CapFunction = Callable[[int, float], float]

# 中点超额的可行性容差
EXCESS_TOL = 1e-8


def union_diameter(space: FiniteMetricMeasureSpace, mu0: ProbMeasure,
                   mu1: ProbMeasure) -> float:
    """D = diam(supp μ₀ ∪ supp μ₁)"""
    return space_service.diameter(space, np.union1d(mu0.support, mu1.support))


def compose_couplings(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """沿公共中间测度粘接两个耦合：α(x, z) = ∑_y α⁰(x, y) α¹(y, z) / μ(y)"""
    middle = first.sum(axis=0)
    inverse = np.divide(1.0, middle, out=np.zeros_like(middle), where=middle > 0)
    return first @ (inverse[:, None] * second)


def round_to_marginals(plan: np.ndarray, source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """把近似耦合修正为边缘分布恰为 (source, target) 的耦合

    先按行、再按列向下缩放，剩余亏量以外积补回；改动量与边缘误差同阶。
    """
    plan = np.clip(plan, 0.0, None)
    rows = plan.sum(axis=1)
    over = rows > source
    row_scale = np.ones_like(rows)
    row_scale[over] = source[over] / rows[over]
    plan = plan * row_scale[:, None]
    cols = plan.sum(axis=0)
    over = cols > target
    col_scale = np.ones_like(cols)
    col_scale[over] = target[over] / cols[over]
    plan = plan * col_scale[None, :]
    row_gap = source - plan.sum(axis=1)
    col_gap = target - plan.sum(axis=0)
    total = row_gap.sum()
    if total > 0:
        plan = plan + np.outer(row_gap, col_gap) / total
    return plan


class InterpolationService(BaseService):
    """有界插值服务类

    最优测地计划、t-中间测度集、中点超额质量线性规划、二进密度有界测地线、
    有界插值性质的验证与轮廓估计。
    """

    def optgeo_plan(self, space: FiniteMetricMeasureSpace, q: float,
                    mu0: ProbMeasure, mu1: ProbMeasure, T: int) -> TestPlan:
        """把最优耦合提升为最短路曲线上的测试计划

        每个正质量点对 (i, j) 取 shortest_path_curve(i, j, T)，权重为耦合质量。
        离散化误差见 geodesic_slack。

        Raises:
            CurveError: 点对不连通或空间没有边表
        """
        result = transport_service.wasserstein(space, q, mu0, mu1)
        curves, weights = [], []
        for i, j, mass in result.coupling.pairs():
            curves.append(curve_service.shortest_path_curve(space, i, j, T))
            weights.append(mass)
        return TestPlan.from_weights(curves, weights, q)

    def geodesic_slack(self, space: FiniteMetricMeasureSpace, q: float,
                       mu0: ProbMeasure, mu1: ProbMeasure, plan: TestPlan) -> float:
        """离散化误差 ε_T = |Ke_q(π) − W_q^q(μ₀, μ₁)|"""
        cost = transport_service.wasserstein(space, q, mu0, mu1).cost
        return abs(curve_service.plan_kinetic_energy(plan, space, q) - cost)

    def intermediate_feasibility(self, space: FiniteMetricMeasureSpace, q: float,
                                 mu0: ProbMeasure, mu1: ProbMeasure, mu: ProbMeasure,
                                 t: float, tol: Optional[float] = None) -> CheckReport:
        """检查 μ ∈ I_t^q(μ₀, μ₁)

        报告 |W_q(μ₀,μ) − tW| 与 |W_q(μ,μ₁) − (1−t)W|，两者都不超过
        tol·max(1, W) 时判为成员。

        Raises:
            InputError: t ∉ (0, 1)
        """
        if not 0.0 < t < 1.0:
            raise InputError(f"t 必须在 (0, 1) 内，实际为 {t}")
        tol = settings.FEASIBILITY_TOL if tol is None else tol
        W = transport_service.wasserstein(space, q, mu0, mu1).distance
        left = transport_service.wasserstein(space, q, mu0, mu).distance
        right = transport_service.wasserstein(space, q, mu, mu1).distance
        bound = tol * max(1.0, W)
        checks = (
            CheckResult.inequality("intermediate/left", "|W_q(mu_0, mu) - t W| <= tol",
                                   abs(left - t * W), bound),
            CheckResult.inequality("intermediate/right", "|W_q(mu, mu_1) - (1-t) W| <= tol",
                                   abs(right - (1 - t) * W), bound),
        )
        return CheckReport(name="intermediate_feasibility", checks=checks,
                           data={"t": t, "W": W, "W_left": left, "W_right": right})

    def midpoint_program(self, space: FiniteMetricMeasureSpace, q: float,
                         mu0: ProbMeasure, mu1: ProbMeasure) -> MidpointProgram:
        check_exponent(q)
        cost = transport_service.wasserstein(space, q, mu0, mu1).cost
        return MidpointProgram(space.dist, space.weight, q, mu0.mass, mu1.mass, cost)

    def midpoint_excess_min(self, space: FiniteMetricMeasureSpace, q: float,
                            mu0: ProbMeasure, mu1: ProbMeasure,
                            C: float) -> Tuple[ProbMeasure, float]:
        """在 I_{1/2}^q(μ₀, μ₁) 上最小化超额质量 ‖(ρ − C)⁺‖_{L¹(m)}

        Args:
            space: 空间
            q: 指数
            mu0: 起点测度
            mu1: 终点测度
            C: 密度上界，C ≥ 0

        Returns:
            Tuple[ProbMeasure, float]: 中点测度与最小超额

        Raises:
            InputError: C < 0
            InterpolationError: 离散中点不存在或求解器失败
        """
        if C < 0:
            raise InputError(f"C 必须非负，实际为 {C}")
        mass, excess = self.midpoint_program(space, q, mu0, mu1).solve(C)
        return ProbMeasure(mass=mass), excess

    def _midpoint_pieces(self, space: FiniteMetricMeasureSpace, q: float,
                         mu0: ProbMeasure, mu1: ProbMeasure, C: float
                         ) -> Tuple[ProbMeasure, float, np.ndarray, np.ndarray]:
        mass, excess, plan0, plan1 = self.midpoint_program(space, q, mu0, mu1).solve_with_plans(C)
        return ProbMeasure(mass=mass), excess, plan0, plan1

    def realized_coupling(self, mu0: ProbMeasure, mu1: ProbMeasure,
                          plans: Sequence[np.ndarray]) -> Coupling:
        """二进构造实际使用的端点耦合：逐段粘接相邻时间的线性规划耦合"""
        plan = plans[0]
        for piece in plans[1:]:
            plan = compose_couplings(plan, piece)
        return Coupling(plan=round_to_marginals(plan, mu0.mass, mu1.mass), source=mu0, target=mu1)

    def minimal_midpoint_density(self, space: FiniteMetricMeasureSpace, q: float,
                                 mu0: ProbMeasure, mu1: ProbMeasure,
                                 rel_tol: float = 1e-6) -> float:
        """二分 C 求中点可达的最小上确界密度"""
        program = self.midpoint_program(space, q, mu0, mu1)
        hi = 1.0 / float(space.weight.min())
        lo = 0.0
        while hi - lo > rel_tol * hi:
            mid = 0.5 * (lo + hi)
            _, excess = program.solve(mid)
            if excess <= EXCESS_TOL:
                hi = mid
            else:
                lo = mid
        return hi

    def redistribute(self, space: FiniteMetricMeasureSpace, plan: TestPlan,
                     f: Sequence[float], mu: ProbMeasure, t: float) -> ProbMeasure:
        """质量重分配 (e_t)_♯((1−f)π) + cμ，c = ∑ f_k·probs_k

        μ 须属于条件化端点 (e_0)_♯(fπ)/c、(e_1)_♯(fπ)/c 的 I_t^q；
        输出在 I_t^q((e_0)_♯π, (e_1)_♯π) 中的成员关系会被复核。

        Raises:
            InputError: f 形状或取值不合法，或 c ∉ (0, 1)
            InterpolationError: 前置或后置成员关系不成立
        """
        f = np.asarray(f, dtype=float)
        if f.shape != plan.probs.shape or f.min() < 0 or f.max() > 1:
            raise InputError("f 必须是与曲线数等长、取值在 [0, 1] 的向量")
        c = float((f * plan.probs).sum())
        if not 0.0 < c < 1.0:
            raise InputError(f"c = ∑ f·probs 必须在 (0, 1) 内，实际为 {c}")
        j = grid_index(t, plan.T)
        nodes = plan.node_matrix()
        n = space.n

        def marginal(column: int, weights: np.ndarray) -> np.ndarray:
            mass = np.zeros(n)
            np.add.at(mass, nodes[:, column], weights)
            return mass

        chosen = f * plan.probs
        start_c = ProbMeasure.from_weights(marginal(0, chosen))
        end_c = ProbMeasure.from_weights(marginal(plan.T, chosen))
        if not self.intermediate_feasibility(space, plan.q, start_c, end_c, mu, t).passed:
            raise InterpolationError("μ 不属于条件化端点的 t-中间测度集")
        mixed = ProbMeasure.from_weights(marginal(j, plan.probs - chosen) + c * mu.mass)
        start = ProbMeasure.from_weights(marginal(0, plan.probs))
        end = ProbMeasure.from_weights(marginal(plan.T, plan.probs))
        if not self.intermediate_feasibility(space, plan.q, start, end, mixed, t).passed:
            raise InterpolationError("重分配后的测度不属于 t-中间测度集")
        return mixed

    # ------------------------------------------------------------------
    # 二进构造
    # ------------------------------------------------------------------

    def _dyadic_fill(self, space: FiniteMetricMeasureSpace, q: float,
                     mu0: ProbMeasure, mu1: ProbMeasure, levels: int,
                     cap_fn: CapFunction, strict: bool
                     ) -> Tuple[List[ProbMeasure], List[LevelTrace], Optional[InterpolationError],
                                List[np.ndarray]]:
        """逐层以中点线性规划填充二进时间

        同层的中点互相独立，并行求解后按时间顺序合并。strict 时任何一层
        超额 > 1e-8 或中点不存在都会抛出带层级的 InterpolationError；
        否则在中点不存在的层停止，返回已完成的层与该错误。
        plans[k] 是线性规划给出的 measures[k] 到 measures[k+1] 的耦合，尚未细分时为空。
        """
        measures = [mu0, mu1]
        plans: List[np.ndarray] = []
        traces: List[LevelTrace] = []
        cap = max(mu0.sup_density(space), mu1.sup_density(space))
        for level in range(1, levels + 1):
            cap = cap_fn(level, cap)
            neighbours = list(zip(measures[:-1], measures[1:]))
            try:
                mids = parallel_map(
                    lambda pair: self._midpoint_pieces(space, q, pair[0], pair[1], cap),
                    neighbours)
            except InterpolationError as e:
                e.level = level
                if strict:
                    raise
                self.logger.warning(f"第 {level} 层没有离散中点，停止细分: {e}")
                return measures, traces, e, plans
            excess = max(m[1] for m in mids)
            achieved = max(m[0].sup_density(space) for m in mids)
            traces.append(LevelTrace(level=level, cap=cap, achieved=achieved, max_excess=excess))
            self.logger.debug(f"第 {level} 层: 上界 {cap:.6g}，达到 {achieved:.6g}，超额 {excess:.3e}")
            if strict and excess > EXCESS_TOL:
                raise InterpolationError(
                    f"第 {level} 层密度上界 {cap:.6g} 不可达，最小超额 {excess:.3e}",
                    level=level, excess=excess)
            merged, halves = [measures[0]], []
            for (mid, _, plan0, plan1), right in zip(mids, measures[1:]):
                merged.extend([mid, right])
                halves.extend([plan0, plan1])
            measures, plans = merged, halves
        return measures, traces, None, plans

    def dyadic_geodesic(self, space: FiniteMetricMeasureSpace, q: float,
                        mu0: ProbMeasure, mu1: ProbMeasure, K: float = 0.0,
                        levels: Optional[int] = None,
                        C_target: Optional[float] = None) -> DyadicGeodesic:
        """密度有界的二进测地线

        第 i 层上界为 P(2^{−i+1}D, K) 乘上一层上界，P(D,K) = e^{K⁻D²/8}，
        起始上界为 ‖ρ₀‖∨‖ρ₁‖。met_target 表示所有密度不超过
        C_target·(‖ρ₀‖∨‖ρ₁‖)·(1 + DENSITY_SLACK)，C_target 缺省取各层因子之积。

        Args:
            space: 空间
            q: 指数
            mu0: 起点测度
            mu1: 终点测度
            K: 曲率下界
            levels: 二进层数，默认 settings.DYADIC_LEVELS
            C_target: 目标常数

        Returns:
            DyadicGeodesic: 各二进时间的测度及逐层密度记录

        Raises:
            InterpolationError: 某层上界不可达（带层级与超额）
        """
        check_exponent(q)
        levels = settings.DYADIC_LEVELS if levels is None else levels
        if levels < 1:
            raise InputError(f"levels 必须 ≥ 1，实际为 {levels}")
        D = union_diameter(space, mu0, mu1)
        bound = max(mu0.sup_density(space), mu1.sup_density(space))
        self.logger.info(f"二进测地线: D={D:.6g}，K={K}，{levels} 层")

        def cap_fn(level: int, previous: float) -> float:
            return curvature_service.midpoint_factor(D * 2.0 ** (1 - level), K) * previous

        measures, traces, _, plans = self._dyadic_fill(space, q, mu0, mu1, levels, cap_fn,
                                                       strict=True)
        target = curvature_service.dyadic_product(D, K, levels) if C_target is None else C_target
        densities = [m.sup_density(space) for m in measures]
        met = max(densities) <= target * bound * (1 + settings.DENSITY_SLACK)
        coupling = self.realized_coupling(mu0, mu1, plans)
        return DyadicGeodesic(level=levels, q=q, measures=tuple(measures),
                              density_bound_trace=tuple(traces), input_bound=bound,
                              diameter=D, met_target=met, coupling=coupling)

    def level_caps(self, geodesic: DyadicGeodesic) -> List[float]:
        """每个二进时间所在层的密度上界，端点取输入上界"""
        caps_by_level = {t.level: t.cap for t in geodesic.density_bound_trace}
        steps = 2 ** geodesic.level
        caps = []
        for k in range(steps + 1):
            if k in (0, steps):
                caps.append(geodesic.input_bound)
                continue
            trailing = (k & -k).bit_length() - 1
            caps.append(caps_by_level.get(geodesic.level - trailing, math.nan))
        return caps

    def trace_rows(self, space: FiniteMetricMeasureSpace,
                   geodesic: DyadicGeodesic) -> List[Tuple[float, int, float, float, float]]:
        """trace.csv 行 (time, point, mass, density, level_cap)，只列正质量"""
        rows = []
        for t, mu, cap in zip(geodesic.times, geodesic.measures, self.level_caps(geodesic)):
            rho = mu.density(space)
            for i in mu.support:
                rows.append((t, int(i), float(mu.mass[i]), float(rho[i]), cap))
        return rows

    def geodesic_consistency(self, space: FiniteMetricMeasureSpace,
                             geodesic: DyadicGeodesic) -> CheckReport:
        """每个内部二进测度都是其同层相邻测度的中点"""
        checks = []
        for level in range(1, geodesic.level + 1):
            stride = 2 ** (geodesic.level - level)
            for k in range(stride, 2 ** geodesic.level, 2 * stride):
                sub = self.intermediate_feasibility(
                    space, geodesic.q, geodesic.measures[k - stride],
                    geodesic.measures[k + stride], geodesic.measures[k], 0.5)
                t = k / 2 ** geodesic.level
                for check in sub.checks:
                    checks.append(check.model_copy(
                        update={"check_id": f"{check.check_id}/t={t:.6f}"}))
        return CheckReport(name="geodesic_consistency", checks=tuple(checks))

    def dyadic_bound_report(self, space: FiniteMetricMeasureSpace, K: float,
                            geodesic: DyadicGeodesic) -> CheckReport:
        """记录 e^{K⁻D²/12}、e^{K⁻D²/6} 与实际达到的密度比

        实际比值须不超过 e^{K⁻D²/6}·(1 + DENSITY_SLACK)；两个常数孰为
        证明所支持的常数不在此判定。
        """
        constants = curvature_service.bip_constants(geodesic.diameter, K)
        ratio = float(geodesic.sup_densities(space.weight).max()) / geodesic.input_bound
        checks = (
            CheckResult.inequality("dyadic/ratio_vs_sixth",
                                   "achieved ratio <= e^{K^- D^2/6}",
                                   ratio, constants["C_sixth"], slack=settings.DENSITY_SLACK),
        )
        return CheckReport(
            name="dyadic_bound_report", checks=checks,
            data={**constants, "achieved_ratio": ratio, "D": geodesic.diameter, "K": K,
                  "trace": [t.model_dump() for t in geodesic.density_bound_trace]},
            flags=("C_twelfth vs C_sixth left undecided",),
        )

    # ------------------------------------------------------------------
    # 有界插值性质
    # ------------------------------------------------------------------

    def bip_verify(self, space: FiniteMetricMeasureSpace, q: float,
                   pairs: Sequence[Tuple[ProbMeasure, ProbMeasure]],
                   profile: ProfileFunction, levels: Optional[int] = None) -> CheckReport:
        """验证有界插值性质

        对每个测度对取 D = diam(supp μ₀ ∪ supp μ₁)，以常数上界 C(D)·(‖ρ₀‖∨‖ρ₁‖)
        逐层构造二进测地线，检查全部插值测度的密度。无法细分的层记为失败。
        失败是报告条目而不是异常。

        Returns:
            CheckReport: data 含 worst_ratio 与见证 (pair, time, point)
        """
        check_exponent(q)
        levels = settings.DYADIC_LEVELS if levels is None else levels
        checks, flags = [], []
        worst_ratio, witness = 0.0, None
        for index, (mu0, mu1) in enumerate(pairs):
            D = union_diameter(space, mu0, mu1)
            C = curvature_service.profile_value(profile, D)
            bound = max(mu0.sup_density(space), mu1.sup_density(space))
            measures, _, error, _ = self._dyadic_fill(
                space, q, mu0, mu1, levels, lambda level, previous: C * bound, strict=False)
            steps = len(measures) - 1
            best_density, best_time, best_point = 0.0, 0.0, 0
            for k, mu in enumerate(measures):
                rho = mu.density(space)
                point = int(np.argmax(rho))
                if rho[point] > best_density:
                    best_density, best_time, best_point = float(rho[point]), k / steps, point
            ratio = best_density / bound
            details = {"D": D, "C": C, "ratio": ratio, "time": best_time,
                       "point": best_point, "label": space.label(best_point)}
            checks.append(CheckResult.inequality(
                f"bip/pair_{index:04d}/density",
                "sup_t ||rho_t|| <= C(D) (||rho_0|| v ||rho_1||)",
                best_density, C * bound, slack=settings.DENSITY_SLACK, details=details))
            if error is not None:
                missing = levels - (error.level - 1)
                flags.append(f"pair {index}: 第 {error.level} 层没有离散中点")
                checks.append(CheckResult.inequality(
                    f"bip/pair_{index:04d}/resolved", "unresolved dyadic levels <= 0",
                    float(missing), 0.0))
            if ratio > worst_ratio:
                worst_ratio = ratio
                witness = {"pair": index, "time": best_time, "point": best_point,
                           "label": space.label(best_point)}
        report = CheckReport(name="bip_verify", checks=tuple(checks), flags=tuple(flags),
                             data={"worst_ratio": worst_ratio, "witness": witness,
                                   "profile": profile.to_dict(), "levels": levels})
        self.logger.info(f"BIP 验证: {len(pairs)} 对，最坏比值 {worst_ratio:.6g}，"
                         f"{'通过' if report.passed else '失败'}")
        return report

    def sample_pairs(self, space: FiniteMetricMeasureSpace, D: float, count: int,
                     rng: np.random.Generator) -> List[Tuple[ProbMeasure, ProbMeasure]]:
        """随机抽取支撑并集直径 ≤ D 的均匀小块测度对

        先取距离 ≤ D 的点对 (x, y)，再取半径 (D − d(x,y))/2 的球上的均匀测度。
        """
        close = np.argwhere(space.dist <= D + settings.STRUCTURE_TOL)
        pairs = []
        for _ in range(count):
            x, y = close[rng.integers(len(close))]
            radius = 0.5 * (D - space.dist[x, y])
            ball0 = np.flatnonzero(space.dist[x] <= radius + settings.STRUCTURE_TOL)
            ball1 = np.flatnonzero(space.dist[y] <= radius + settings.STRUCTURE_TOL)
            pairs.append((ProbMeasure.uniform_on(space, ball0),
                          ProbMeasure.uniform_on(space, ball1)))
        return pairs

    def bip_profile_estimate(self, space: FiniteMetricMeasureSpace, q: float,
                             D_grid: Sequence[float], sample_pairs_per_D: int,
                             seed: Optional[int] = None) -> ProfileFunction:
        """经验轮廓：每个 D 上抽样测度对的（最优中点密度 / 输入密度）最大值

        没有离散中点的样本被跳过；结果做单调包络。
        """
        if not D_grid:
            raise InputError("D_grid 不能为空")
        check_exponent(q)
        rng = np.random.default_rng(settings.BIPLAB_SEED if seed is None else seed)
        samples = []
        for D in sorted(D_grid):
            value = 1.0
            for mu0, mu1 in self.sample_pairs(space, D, sample_pairs_per_D, rng):
                try:
                    best = self.minimal_midpoint_density(space, q, mu0, mu1)
                except InterpolationError:
                    self.logger.debug(f"D={D}: 抽样对没有离散中点，跳过")
                    continue
                value = max(value, best / max(mu0.sup_density(space), mu1.sup_density(space)))
            samples.append((float(D), value))
        return ProfileFunction(kind="sampled", samples=tuple(samples))

    def cos_product(self, theta: float, n: int) -> float:
        """∏_{i=1}^n cos(2^{−i}θ)，n → ∞ 时趋于 sin θ / θ"""
        if n < 1:
            raise InputError(f"n 必须 ≥ 1，实际为 {n}")
        return math.prod(math.cos(theta * 2.0 ** -i) for i in range(1, n + 1))

    def spreading_check(self, space: FiniteMetricMeasureSpace, mu0: ProbMeasure,
                        mu1: ProbMeasure, midpoint: ProbMeasure, K: float,
                        N: Optional[float] = None) -> CheckReport:
        """中点支撑质量与扩散下界的比较"""
        D = union_diameter(space, mu0, mu1)
        bound = curvature_service.spreading_bound(
            mu0.sup_density(space), mu1.sup_density(space), D, K, N)
        mass = midpoint.support_mass(space)
        checks = (CheckResult.inequality(
            "spreading/midpoint", "spreading bound - 1e-8 <= m({rho_1/2 > 0})",
            bound - EXCESS_TOL, mass),)
        return CheckReport(name="spreading_check", checks=checks,
                           data={"D": D, "K": K, "N": N, "bound": bound, "support_mass": mass})


# 创建单例实例
interpolation_service = InterpolationService()
