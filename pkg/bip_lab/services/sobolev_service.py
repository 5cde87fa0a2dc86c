import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..config import settings
from ..exceptions import CurveError, InputError
from ..models import (
    CheckReport,
    CheckResult,
    FiniteMetricMeasureSpace,
    GradientCandidate,
    PlanFamily,
    PlanTag,
    ProbMeasure,
    RealFunction,
    TestPlan,
)
from ..utils.parallel import parallel_map
from .base import BaseService
from .curve_service import curve_service
from .gradient_solver import MinimalGradientSolver
from .interpolation_service import interpolation_service
from .transport_service import check_exponent


def conjugate(p: float) -> float:
    return p / (p - 1.0)


class SobolevService(BaseService):
    """测试计划意义下的弱上梯度服务类

    上梯度不等式检查、最小 p-弱上梯度、p 无关性比较、Leibniz 法则、
    Geod 计划族与主测试计划，以及 Clarkson 不等式。
    """

    def constraint_row(self, space: FiniteMetricMeasureSpace, f: RealFunction,
                       plan: TestPlan) -> Tuple[np.ndarray, float]:
        """计划的线性约束 a·G ≥ b

        a_x = ∑_k probs_k ∑_j [γ_j = x] d(γ_j, γ_{j+1})（左端点采样），
        b = ∑_k probs_k |f(γ_1) − f(γ_0)|。
        """
        curve_service.validate_plan(space, plan)
        if f.n != space.n:
            raise InputError(f"函数长度 {f.n} 与空间点数 {space.n} 不一致")
        nodes = plan.node_matrix()
        steps = space.dist[nodes[:, :-1], nodes[:, 1:]]
        a = np.zeros(space.n)
        np.add.at(a, nodes[:, :-1], plan.probs[:, None] * steps)
        b = float((plan.probs * np.abs(f.values[nodes[:, -1]] - f.values[nodes[:, 0]])).sum())
        return a, b

    def curve_sides(self, space: FiniteMetricMeasureSpace, f: RealFunction,
                    G: GradientCandidate, plan: TestPlan) -> Tuple[np.ndarray, np.ndarray]:
        """逐曲线的两端：|f(γ_1) − f(γ_0)| 与 ∑_j G(γ_j) d(γ_j, γ_{j+1})"""
        nodes = plan.node_matrix()
        steps = space.dist[nodes[:, :-1], nodes[:, 1:]]
        lhs = np.abs(f.values[nodes[:, -1]] - f.values[nodes[:, 0]])
        rhs = (G.values[nodes[:, :-1]] * steps).sum(axis=1)
        return lhs, rhs

    def upper_gradient_check(self, space: FiniteMetricMeasureSpace, f: RealFunction,
                             G: GradientCandidate, plan: TestPlan) -> CheckReport:
        """检查 ∫|f(γ_1) − f(γ_0)| dπ ≤ ∬ G(γ_t)|γ̇_t| dt dπ

        右端在网格上取左端点采样。另报告 Hölder 上界
        Comp(π)^{1/p}‖G‖_p Ke_{p′}(π)^{1/p′} 与 Comp(π)‖G‖_p Ke_{p′}(π)^{1/p′}，
        p′ 为 G.p 的共轭指数。
        """
        a, lhs = self.constraint_row(space, f, plan)
        rhs = float(a @ G.values)
        comp = curve_service.compression(space, plan)
        p_conj = conjugate(G.p)
        energy = curve_service.plan_kinetic_energy(plan, space, p_conj)
        g_norm = G.norm(space.weight)
        split = comp ** (1.0 / G.p) * g_norm * energy ** (1.0 / p_conj)
        checks = (
            CheckResult.inequality("ug/integrated",
                                   "int |f(g_1)-f(g_0)| dpi <= int int G(g_t)|g'_t| dt dpi",
                                   lhs, rhs, slack=settings.CHECK_SLACK),
            CheckResult.inequality("ug/holder",
                                   "int int G|g'| <= Comp^{1/p} ||G||_p Ke_{p'}^{1/p'}",
                                   rhs, split, slack=settings.CHECK_SLACK),
        )
        return CheckReport(name="upper_gradient_check", checks=checks,
                           data={"lhs": lhs, "rhs": rhs, "comp": comp, "ke": energy,
                                 "G_norm": g_norm, "majorant_split": split,
                                 "majorant_comp": comp * g_norm * energy ** (1.0 / p_conj)})

    def _constraints(self, space: FiniteMetricMeasureSpace, f: RealFunction,
                     family: PlanFamily) -> Tuple[np.ndarray, np.ndarray]:
        rows = parallel_map(lambda plan: self.constraint_row(space, f, plan), family.plans)
        return np.array([r[0] for r in rows]), np.array([r[1] for r in rows])

    def minimal_weak_upper_gradient(self, space: FiniteMetricMeasureSpace, f: RealFunction,
                                    p: float, family: PlanFamily) -> GradientCandidate:
        """最小 p-弱上梯度：在计划族约束下最小化 ‖G‖_p^p

        Raises:
            SolverConvergenceError: 迭代预算耗尽（附残差）
        """
        check_exponent(p, "p")
        A, b = self._constraints(space, f, family)
        solver = MinimalGradientSolver(A, b, space.weight, p)
        G, objective, residual = solver.solve()
        self.logger.info(f"最小 {p}-弱上梯度: {family.size} 个计划，目标 {objective:.10g}，"
                         f"残差 {residual:.3e}")
        return GradientCandidate(values=G, p=p, objective=objective,
                                 max_residual=residual, converged=True)

    def gradient_p_comparison(self, space: FiniteMetricMeasureSpace, f: RealFunction,
                              p1: float, p2: float, family: PlanFamily,
                              bip_certified: bool = False,
                              agree_tol: float = 2e-3) -> CheckReport:
        """同一计划族下 p1 与 p2 最小梯度的比较

        断言 G_{p2} 对 p1 规划可行且 ‖G_{p1}‖_{p1}^{p1} 不超过其 p1 目标值；
        逐点比较 ‖min(G_{p2} − G_{p1}, 0)‖_∞ 只作描述性报告。
        """
        if not p1 < p2:
            raise InputError(f"需要 p1 < p2，实际 p1={p1}, p2={p2}")
        G1 = self.minimal_weak_upper_gradient(space, f, p1, family)
        G2 = self.minimal_weak_upper_gradient(space, f, p2, family)
        A, b = self._constraints(space, f, family)
        solver = MinimalGradientSolver(A, b, space.weight, p1)
        residual2 = solver.residual(G2.values)
        gap = float(np.abs(np.minimum(G2.values - G1.values, 0.0)).max())
        difference = float(np.abs(G2.values - G1.values).max())
        scale = max(1.0, float(b.max()) if b.size else 1.0)
        checks = (
            CheckResult.inequality("pind/feasible", "G_{p2} feasible for the p1 program",
                                   residual2, settings.GRADIENT_RESIDUAL_TOL * scale),
            CheckResult.inequality("pind/objective", "||G_{p1}||_{p1}^{p1} <= ||G_{p2}||_{p1}^{p1}",
                                   solver.objective(G1.values), solver.objective(G2.values),
                                   slack=1e-6),
        )
        flags = []
        agree = difference <= agree_tol
        if bip_certified:
            flags.append("p-independent on this space" if agree
                         else f"gradients differ by {difference:.3e} on a BIP-certified space")
        return CheckReport(
            name="gradient_p_comparison", checks=checks, flags=tuple(flags),
            data={"p1": p1, "p2": p2, "negative_gap": gap, "max_difference": difference,
                  "agree": agree, "norm_p1": G1.norm(space.weight), "norm_p2": G2.norm(space.weight),
                  "G_p1": G1.values.tolist(), "G_p2": G2.values.tolist()})

    def leibniz_check(self, space: FiniteMetricMeasureSpace, f: RealFunction,
                      g: RealFunction, p: float, family: PlanFamily) -> CheckReport:
        """逐点检查 |D(fg)|_p ≤ |f||Dg|_p + |g||Df|_p"""
        product = RealFunction(values=f.values * g.values)
        G_fg = self.minimal_weak_upper_gradient(space, product, p, family).values
        G_f = self.minimal_weak_upper_gradient(space, f, p, family).values
        G_g = self.minimal_weak_upper_gradient(space, g, p, family).values
        bound = np.abs(f.values) * G_g + np.abs(g.values) * G_f
        margins = bound - G_fg
        checks = tuple(
            CheckResult.inequality(f"leibniz/x={x:04d}",
                                   "|D(fg)|_p <= |f||Dg|_p + |g||Df|_p",
                                   float(G_fg[x]), float(bound[x]), slack=1e-6)
            for x in range(space.n))
        return CheckReport(name="leibniz_check", checks=checks,
                           data={"margins": margins.tolist(), "min_margin": float(margins.min())})

    # ------------------------------------------------------------------
    # 计划族与主测试计划
    # ------------------------------------------------------------------

    def default_steps(self, space: FiniteMetricMeasureSpace, depth: int) -> int:
        """默认网格步数 lcm(1..depth)·⌈直径 / 最短边⌉"""
        finite = space.dist[np.isfinite(space.dist)]
        hops = max(1, int(math.ceil(finite.max() / space.min_positive_distance - 1e-9)))
        return math.lcm(*range(1, depth + 1)) * hops

    def measure_pairs(self, space: FiniteMetricMeasureSpace, pair_budget: int,
                      include_reversed: bool = False) -> List[Tuple[ProbMeasure, ProbMeasure, str]]:
        """确定性的测度对序列：先原子对 (i < j)，再最短边半径球上的均匀小块对"""
        pairs = []
        atoms = [(i, j) for i in range(space.n) for j in range(i + 1, space.n)]
        for i, j in atoms:
            pairs.append((ProbMeasure.dirac(space.n, i), ProbMeasure.dirac(space.n, j),
                          f"atoms {i}->{j}"))
            if include_reversed:
                pairs.append((ProbMeasure.dirac(space.n, j), ProbMeasure.dirac(space.n, i),
                              f"atoms {j}->{i}"))
        radius = space.min_positive_distance + settings.STRUCTURE_TOL
        for i, j in atoms:
            ball_i = np.flatnonzero(space.dist[i] <= radius)
            ball_j = np.flatnonzero(space.dist[j] <= radius)
            if np.intersect1d(ball_i, ball_j).size:
                continue
            pairs.append((ProbMeasure.uniform_on(space, ball_i),
                          ProbMeasure.uniform_on(space, ball_j), f"patches {i}->{j}"))
        return pairs[:pair_budget]

    def build_geod_family(self, space: FiniteMetricMeasureSpace, q: float, depth: int,
                          pair_budget: int, include_reversed: bool = False,
                          T: Optional[int] = None) -> PlanFamily:
        """Geod 计划族

        对确定性测度对生成最优测地计划，再对 k = 2..depth 加入限制
        (Restr_{(i−1)/k}^{i/k})_♯π，每个计划标注 Comp 与 Ke_q。

        Args:
            space: 图度量空间
            q: 指数
            depth: 限制闭包深度，≥ 1
            pair_budget: 测度对个数上限
            include_reversed: 原子对是否同时加入反向
            T: 网格步数，默认 default_steps

        Returns:
            PlanFamily: 按创建顺序排列的计划族
        """
        check_exponent(q)
        if depth < 1 or pair_budget < 1:
            raise InputError(f"depth 与 pair_budget 必须 ≥ 1，实际 {depth}, {pair_budget}")
        T = self.default_steps(space, depth) if T is None else T
        pairs = self.measure_pairs(space, pair_budget, include_reversed)
        geodesics = parallel_map(
            lambda pair: interpolation_service.optgeo_plan(space, q, pair[0], pair[1], T), pairs)
        plans, tags = [], []
        for (_, _, label), plan in zip(pairs, geodesics):
            parent = len(plans)
            plans.append(plan)
            tags.append(self._tag(space, plan, f"optgeo {label}", None))
            for k in range(2, depth + 1):
                if T % k:
                    raise CurveError(f"网格步数 T={T} 不能被限制数 k={k} 整除")
                for i in range(1, k + 1):
                    piece = curve_service.restrict_plan(plan, (i - 1) / k, i / k)
                    plans.append(piece)
                    tags.append(self._tag(space, piece, f"restrict k={k} i={i}", parent))
        self.logger.info(f"Geod 计划族: {len(pairs)} 个测度对，共 {len(plans)} 个计划")
        return PlanFamily(plans=tuple(plans), tags=tuple(tags))

    def _tag(self, space, plan: TestPlan, provenance: str, parent: Optional[int]) -> PlanTag:
        return PlanTag(provenance=provenance, comp=curve_service.compression(space, plan),
                       ke=curve_service.plan_kinetic_energy(plan, space), parent=parent)

    def master_weights(self, family: PlanFamily, space: Optional[FiniteMetricMeasureSpace] = None
                       ) -> np.ndarray:
        """未归一化权重 1 / (2^k max{Comp(π_k), Ke_q(π_k), 1})，k 从 1 起"""
        tags = family.tags
        if not tags:
            if space is None:
                raise InputError("计划族没有标签时需要提供空间")
            tags = tuple(self._tag(space, plan, "untagged", None) for plan in family.plans)
        return np.array([1.0 / (2.0 ** (k + 1) * max(tag.comp, tag.ke, 1.0))
                         for k, tag in enumerate(tags)])

    def build_master_plan(self, family: PlanFamily, q: float,
                          space: Optional[FiniteMetricMeasureSpace] = None) -> TestPlan:
        """主测试计划 η/η(C([0,1],X))

        各计划先加细到公共网格 lcm(T_k)（停留加细不改变曲线积分与原网格时间的边缘），
        再按 master_weights 混合。
        """
        check_exponent(q)
        weights = self.master_weights(family, space)
        common = math.lcm(*(plan.T for plan in family.plans))
        refined = [curve_service.refine_plan(plan, common // plan.T) for plan in family.plans]
        return curve_service.mixture(refined, weights, q)

    def master_plan_check(self, space: FiniteMetricMeasureSpace, f: RealFunction,
                          G: GradientCandidate, master: TestPlan,
                          family: PlanFamily) -> CheckReport:
        """主测试计划检查

        逐条检查主计划支撑曲线上的 |f(γ_1) − f(γ_0)| ≤ ∑ G(γ_j) d(γ_j, γ_{j+1})，
        并与族中每个计划的积分不等式交叉核对：逐曲线通过必须蕴含积分通过。
        """
        lhs, rhs = self.curve_sides(space, f, G, master)
        checks = [
            CheckResult.inequality(f"master/curve_{k:05d}",
                                   "|f(g_1)-f(g_0)| <= int G(g_t)|g'_t| dt",
                                   float(lhs[k]), float(rhs[k]), slack=settings.CHECK_SLACK)
            for k in range(master.size)
        ]
        master_pass = all(c.passed for c in checks)
        family_results = []
        for index, plan in enumerate(family.plans):
            result = self.upper_gradient_check(space, f, G, plan).checks[0]
            family_results.append(result.passed)
            checks.append(result.model_copy(update={"check_id": f"family/plan_{index:05d}"}))
        family_pass = all(family_results)
        consistent = family_pass or not master_pass
        flags = () if consistent else ("per-curve pass on master without integrated pass on family",)
        return CheckReport(name="master_plan_check", checks=tuple(checks), flags=flags,
                           data={"master_pass": master_pass, "family_pass": family_pass,
                                 "consistent": consistent,
                                 "failing_curves": [k for k in range(master.size)
                                                    if not checks[k].passed]})

    # ------------------------------------------------------------------
    # Clarkson 不等式
    # ------------------------------------------------------------------

    def clarkson_inputs(self, omega: np.ndarray, eta: np.ndarray
                        ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """由逐点向量（形状 (n, d)）构造欧氏逐点范数 |ω|、|η|、|ω+η|、|ω−η|"""
        omega = np.atleast_2d(np.asarray(omega, dtype=float))
        eta = np.atleast_2d(np.asarray(eta, dtype=float))
        return tuple(np.linalg.norm(v, axis=1) for v in (omega, eta, omega + eta, omega - eta))

    def clarkson_check(self, norm_omega: Sequence[float], norm_eta: Sequence[float],
                       norm_sum: Sequence[float], norm_diff: Sequence[float], p: float,
                       space: FiniteMetricMeasureSpace) -> CheckReport:
        """Clarkson 不等式（加权 L^p 范数）

        p ≥ 2: ‖(ω+η)/2‖^p + ‖(ω−η)/2‖^p ≤ ½‖ω‖^p + ½‖η‖^p；
        1 < p < 2: ‖(ω+η)/2‖^{p′} + ‖(ω−η)/2‖^{p′} ≤ (½‖ω‖^p + ½‖η‖^p)^{p′/p}。

        Raises:
            InputError: 逐点平行四边形恒等式不成立
        """
        check_exponent(p, "p")
        w, e, s, d = (np.asarray(v, dtype=float) for v in (norm_omega, norm_eta, norm_sum, norm_diff))
        if not all(v.shape == (space.n,) for v in (w, e, s, d)):
            raise InputError(f"逐点范数长度必须为 {space.n}")
        gap = np.abs(2 * e ** 2 + 2 * w ** 2 - s ** 2 - d ** 2)
        scale = np.maximum(1.0, 2 * e ** 2 + 2 * w ** 2)
        if np.any(gap > 1e-10 * scale):
            raise InputError(f"平行四边形恒等式不成立，最大偏差 {gap.max():.3e}")

        def lp(values: np.ndarray) -> float:
            return float((space.weight * values ** p).sum() ** (1.0 / p))

        if p >= 2:
            lhs = lp(s / 2) ** p + lp(d / 2) ** p
            rhs = 0.5 * lp(w) ** p + 0.5 * lp(e) ** p
            statement = "||(w+e)/2||^p + ||(w-e)/2||^p <= (||w||^p + ||e||^p)/2"
        else:
            p_conj = conjugate(p)
            lhs = lp(s / 2) ** p_conj + lp(d / 2) ** p_conj
            rhs = (0.5 * lp(w) ** p + 0.5 * lp(e) ** p) ** (p_conj / p)
            statement = "||(w+e)/2||^p' + ||(w-e)/2||^p' <= ((||w||^p + ||e||^p)/2)^{p'/p}"
        checks = (CheckResult.inequality(f"clarkson/p={p:g}", statement, lhs, rhs,
                                         slack=settings.CHECK_SLACK),)
        return CheckReport(name="clarkson_check", checks=checks, data={"p": p})

    def gradient_depth_diagnostic(self, space: FiniteMetricMeasureSpace, f: RealFunction,
                                  p: float, q: float, depths: Sequence[int],
                                  pair_budget: Optional[int] = None,
                                  include_reversed: bool = True) -> CheckReport:
        """随计划族深度增长的最小梯度变化（描述性，无判定）"""
        if not depths:
            raise InputError("depths 不能为空")
        budget = pair_budget or space.n * (space.n - 1)
        rows, previous = [], None
        T = self.default_steps(space, max(depths))
        for depth in sorted(depths):
            family = self.build_geod_family(space, q, depth, budget, include_reversed, T)
            G = self.minimal_weak_upper_gradient(space, f, p, family)
            change = None if previous is None else float(np.abs(G.values - previous).max())
            rows.append({"depth": depth, "plans": family.size, "norm": G.norm(space.weight),
                         "change": change, "G": G.values.tolist()})
            previous = G.values
        return CheckReport(name="gradient_depth_diagnostic", data={"depths": rows},
                           flags=("descriptive only",))


# 创建单例实例
sobolev_service = SobolevService()
