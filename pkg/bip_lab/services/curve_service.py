from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config import settings
from ..exceptions import CurveError
from ..models import (
    CheckReport,
    CheckResult,
    DiscreteCurve,
    FiniteMetricMeasureSpace,
    ProbMeasure,
    TestPlan,
)
from ..utils.parallel import parallel_map
from .base import BaseService
from .transport_service import check_exponent

# interpolator(space, q, mu0, mu1, T) -> TestPlan
Interpolator = Callable[[FiniteMetricMeasureSpace, float, ProbMeasure, ProbMeasure, int], TestPlan]


def grid_index(time: float, T: int) -> int:
    """把时间换算为网格下标，要求 time·T 为整数"""
    k = time * T
    if abs(k - round(k)) > 1e-9 or not 0 <= round(k) <= T:
        raise CurveError(f"时间 {time} 不在 1/{T} 网格上")
    return int(round(k))


class CurveService(BaseService):
    """离散曲线与测试计划服务类"""

    def validate_curve(self, space: FiniteMetricMeasureSpace, gamma: DiscreteCurve) -> None:
        if max(gamma.nodes) >= space.n:
            raise CurveError(f"曲线节点 {max(gamma.nodes)} 超出空间点数 {space.n}")

    def metric_speed(self, space: FiniteMetricMeasureSpace, gamma: DiscreteCurve) -> np.ndarray:
        """每步速度 T·d(γ_j, γ_{j+1})"""
        self.validate_curve(space, gamma)
        nodes = np.asarray(gamma.nodes)
        return gamma.T * space.dist[nodes[:-1], nodes[1:]]

    def kinetic_energy(self, space: FiniteMetricMeasureSpace, gamma: DiscreteCurve,
                       q: float) -> float:
        """Ke_q(γ) = (1/T) ∑_j speed_j^q"""
        check_exponent(q)
        speed = self.metric_speed(space, gamma)
        return float((speed ** q).sum() / gamma.T)

    def restrict_curve(self, gamma: DiscreteCurve, s: float, t: float) -> DiscreteCurve:
        """限制到 [s, t] 并重新参数化到 [0, 1]，步数变为 (t−s)·T

        Raises:
            CurveError: s ≥ t 或时间不在网格上
        """
        if s >= t:
            raise CurveError(f"需要 s < t，实际 s={s}, t={t}")
        js, jt = grid_index(s, gamma.T), grid_index(t, gamma.T)
        return DiscreteCurve(nodes=gamma.nodes[js:jt + 1])

    def shortest_path(self, space: FiniteMetricMeasureSpace, x: int, y: int) -> List[int]:
        """字典序最小的最短路径 x → y（每步取满足最短路条件的最小邻点）"""
        if not np.isfinite(space.dist[x, y]):
            raise CurveError(f"点 {x} 与 {y} 不连通")
        tol = 1e-9 * max(1.0, space.dist[x, y])
        path = [x]
        node = x
        while node != y:
            for nb, length in space.neighbors[node]:
                if abs(length + space.dist[nb, y] - space.dist[node, y]) <= tol:
                    node = nb
                    break
            else:
                raise CurveError(f"无法沿边表恢复 {x} → {y} 的最短路径")
            path.append(node)
        return path

    def shortest_path_curve(self, space: FiniteMetricMeasureSpace, x: int, y: int,
                            T: int) -> DiscreteCurve:
        """最短路径按近似常速重采样为 T+1 个节点

        第 j 个节点取路径上使 |弧长 − (j/T)·d(x,y)| 最小的点，并列取索引较小者。

        Raises:
            CurveError: 点对不连通或空间没有边表
        """
        if T < 1:
            raise CurveError(f"T 必须 ≥ 1，实际为 {T}")
        if not space.has_graph:
            raise CurveError("shortest_path_curve 需要带边表的图度量")
        if x == y:
            return DiscreteCurve.constant(x, T)
        path = np.array(self.shortest_path(space, x, y))
        arc = space.dist[x, path]
        total = space.dist[x, y]
        nodes = []
        for j in range(T + 1):
            gap = np.abs(arc - j * total / T)
            best = gap.min()
            tied = path[gap <= best + 1e-12 * max(1.0, total)]
            nodes.append(int(tied.min()))
        nodes[0], nodes[-1] = x, y
        return DiscreteCurve(nodes=nodes)

    # ------------------------------------------------------------------
    # 测试计划
    # ------------------------------------------------------------------

    def validate_plan(self, space: FiniteMetricMeasureSpace, plan: TestPlan) -> None:
        top = int(plan.node_matrix().max())
        if top >= space.n:
            raise CurveError(f"测试计划节点 {top} 超出空间点数 {space.n}")

    def time_marginal(self, plan: TestPlan, j: int, n: int) -> np.ndarray:
        """网格时间 t_j 的边缘分布 (e_{t_j})_♯π"""
        mass = np.zeros(n)
        np.add.at(mass, plan.node_matrix()[:, j], plan.probs)
        return mass

    def time_marginals(self, plan: TestPlan, n: int) -> np.ndarray:
        """全部网格时间的边缘分布，形状 (T+1, n)"""
        nodes = plan.node_matrix()
        marginals = np.zeros((plan.T + 1, n))
        for j in range(plan.T + 1):
            np.add.at(marginals[j], nodes[:, j], plan.probs)
        return marginals

    def marginal_at(self, plan: TestPlan, time: float, n: int) -> ProbMeasure:
        return ProbMeasure.from_weights(self.time_marginal(plan, grid_index(time, plan.T), n))

    def marginal_rows(self, plan: TestPlan, n: int) -> List[Tuple[float, int, float]]:
        """CSV 行 (time, point, mass)，只列正质量"""
        rows = []
        marginals = self.time_marginals(plan, n)
        for j in range(plan.T + 1):
            for i in np.flatnonzero(marginals[j] > 0):
                rows.append((j / plan.T, int(i), float(marginals[j, i])))
        return rows

    def compression(self, space: FiniteMetricMeasureSpace, plan: TestPlan) -> float:
        """Comp(π) = max_{j, i} ((e_{t_j})_♯π)(i) / weight(i)"""
        self.validate_plan(space, plan)
        marginals = self.time_marginals(plan, space.n)
        return float((marginals / space.weight[None, :]).max())

    def plan_kinetic_energy(self, plan: TestPlan, space: FiniteMetricMeasureSpace,
                            q: Optional[float] = None) -> float:
        """‖Ke_q‖_{L¹(π)} = ∑_k probs_k · Ke_q(γ_k)"""
        q = plan.q if q is None else q
        check_exponent(q)
        self.validate_plan(space, plan)
        nodes = plan.node_matrix()
        speed = plan.T * space.dist[nodes[:, :-1], nodes[:, 1:]]
        per_curve = (speed ** q).sum(axis=1) / plan.T
        return float((plan.probs * per_curve).sum())

    def max_speed(self, space: FiniteMetricMeasureSpace, plan: TestPlan) -> float:
        """支撑曲线的最大网格速度（等 Lipschitz 界的离散替代量）"""
        nodes = plan.node_matrix()
        speed = plan.T * space.dist[nodes[:, :-1], nodes[:, 1:]]
        return float(speed[plan.probs > 0].max())

    def rescale_plan(self, plan: TestPlan, subset: Sequence[int]) -> TestPlan:
        """条件化 π|_Γ / π(Γ)

        Raises:
            CurveError: 子集质量为零
        """
        idx = sorted(set(int(k) for k in subset))
        weight = float(plan.probs[idx].sum()) if idx else 0.0
        if weight <= 0:
            raise CurveError("子集质量为零，无法条件化")
        return TestPlan(curves=tuple(plan.curves[k] for k in idx),
                        probs=plan.probs[idx] / weight, q=plan.q)

    def restrict_plan(self, plan: TestPlan, s: float, t: float) -> TestPlan:
        """每条曲线限制到 [s, t]，权重不变"""
        curves = tuple(self.restrict_curve(c, s, t) for c in plan.curves)
        return TestPlan(curves=curves, probs=plan.probs, q=plan.q)

    def reverse_plan(self, plan: TestPlan) -> TestPlan:
        """时间反演"""
        return TestPlan(curves=tuple(c.reversed() for c in plan.curves),
                        probs=plan.probs, q=plan.q)

    def refine_plan(self, plan: TestPlan, factor: int) -> TestPlan:
        """把网格加细 factor 倍：每个节点停留 factor 步后再跳到下一节点

        曲线积分 ∑ G(γ_j) d(γ_j, γ_{j+1}) 与各原网格时间的边缘分布保持不变。
        """
        if factor < 1:
            raise CurveError(f"加细倍数必须 ≥ 1，实际为 {factor}")
        if factor == 1:
            return plan
        curves = []
        for curve in plan.curves:
            nodes = [v for v in curve.nodes[:-1] for _ in range(factor)]
            curves.append(DiscreteCurve(nodes=nodes + [curve.end]))
        return TestPlan(curves=tuple(curves), probs=plan.probs, q=plan.q)

    def mixture(self, plans: Sequence[TestPlan], weights: Sequence[float],
                q: Optional[float] = None) -> TestPlan:
        """测试计划的凸组合（同一网格）"""
        curves, probs = [], []
        for plan, w in zip(plans, weights):
            curves.extend(plan.curves)
            probs.extend(w * plan.probs)
        return TestPlan.from_weights(curves, probs, q if q is not None else plans[0].q)

    def glue_plans(self, plan_first: TestPlan, plan_second: TestPlan,
                   matching: Optional[np.ndarray] = None) -> TestPlan:
        """拼接两个测试计划

        要求 (e₁)_♯plan_first = (e₀)_♯plan_second。默认在每个拼接点 x 上按
        乘积分解 p_k r_l / μ(x) 配对；也可给出曲线间的耦合矩阵 matching
        （行和为 plan_first.probs，列和为 plan_second.probs，只在端点相同处为正）。
        拼接后曲线有 T₁ + T₂ 步。

        Raises:
            CurveError: 拼接边缘不匹配或 matching 不合法
        """
        n = int(max(plan_first.node_matrix().max(), plan_second.node_matrix().max())) + 1
        end = self.time_marginal(plan_first, plan_first.T, n)
        start = self.time_marginal(plan_second, 0, n)
        gap = float(np.abs(end - start).max())
        if gap > settings.MARGINAL_TOL:
            raise CurveError(f"拼接点边缘分布不匹配，最大偏差 {gap:.3e}")

        curves, weights = [], []
        if matching is None:
            for k, first in enumerate(plan_first.curves):
                x = first.end
                for l, second in enumerate(plan_second.curves):
                    if second.start != x or end[x] <= 0:
                        continue
                    curves.append(DiscreteCurve(nodes=first.nodes + second.nodes[1:]))
                    weights.append(plan_first.probs[k] * plan_second.probs[l] / end[x])
        else:
            matching = np.asarray(matching, dtype=float)
            if matching.shape != (plan_first.size, plan_second.size):
                raise CurveError(f"matching 形状 {matching.shape} 不正确")
            if (np.abs(matching.sum(axis=1) - plan_first.probs).max() > settings.MARGINAL_TOL
                    or np.abs(matching.sum(axis=0) - plan_second.probs).max() > settings.MARGINAL_TOL):
                raise CurveError("matching 的边缘与两个计划的概率不一致")
            for k, l in zip(*np.nonzero(matching > 0)):
                first, second = plan_first.curves[k], plan_second.curves[l]
                if first.end != second.start:
                    raise CurveError(f"matching 配对了端点不同的曲线 ({k}, {l})")
                curves.append(DiscreteCurve(nodes=first.nodes + second.nodes[1:]))
                weights.append(matching[k, l])
        return TestPlan.from_weights(curves, weights, plan_first.q)

    def sup_distance(self, space: FiniteMetricMeasureSpace, a: DiscreteCurve,
                     b: DiscreteCurve) -> float:
        """max_j d(a_j, b_j)"""
        return float(space.dist[np.asarray(a.nodes), np.asarray(b.nodes)].max())

    def partition_cells(self, space: FiniteMetricMeasureSpace, plan: TestPlan,
                        diameter: float) -> List[List[int]]:
        """贪心 sup-度量聚类：按曲线下标依次放入第一个直径仍 ≤ diameter 的单元"""
        cells: List[List[int]] = []
        tol = settings.STRUCTURE_TOL
        for k, curve in enumerate(plan.curves):
            for cell in cells:
                if all(self.sup_distance(space, curve, plan.curves[o]) <= diameter + tol
                       for o in cell):
                    cell.append(k)
                    break
            else:
                cells.append([k])
        return cells

    def polygonal_approximation(self, space: FiniteMetricMeasureSpace, plan: TestPlan,
                                n: int, m: int,
                                interpolator: Optional[Interpolator] = None) -> TestPlan:
        """折线化近似

        曲线按 sup-距离聚成直径 ≤ 1/n 的单元；每个单元在每个时间段
        [j/m, (j+1)/m] 上替换为两端边缘之间的最优测地计划，再依次拼接。
        若离散重采样使某段的测地计划能量高于原计划该段，保留原段。

        Args:
            space: 图度量空间
            plan: 测试计划
            n: 单元直径尺度（直径 ≤ 1/n）
            m: 时间细分数，须整除 T
            interpolator: 最优测地计划构造器，默认 interpolation_service.optgeo_plan

        Returns:
            TestPlan: 网格不变的折线化计划
        """
        if n < 1 or m < 1:
            raise CurveError(f"n, m 必须 ≥ 1，实际 n={n}, m={m}")
        if plan.T % m:
            raise CurveError(f"时间细分数 m={m} 必须整除 T={plan.T}")
        if interpolator is None:
            from .interpolation_service import interpolation_service
            interpolator = interpolation_service.optgeo_plan
        self.validate_plan(space, plan)
        cells = self.partition_cells(space, plan, 1.0 / n)
        self.logger.info(f"折线化近似: {len(cells)} 个单元，m={m}")

        def approximate(cell: List[int]) -> TestPlan:
            local = self.rescale_plan(plan, cell)
            glued = None
            for j in range(m):
                s, t = j / m, (j + 1) / m
                original = self.restrict_plan(local, s, t)
                a = self.marginal_at(local, s, space.n)
                b = self.marginal_at(local, t, space.n)
                piece = interpolator(space, plan.q, a, b, plan.T // m)
                if (self.plan_kinetic_energy(piece, space)
                        > self.plan_kinetic_energy(original, space) + 1e-12):
                    piece = original
                glued = piece if glued is None else self.glue_plans(glued, piece)
            return glued

        pieces = parallel_map(approximate, cells)
        weights = [float(plan.probs[cell].sum()) for cell in cells]
        return self.mixture(pieces, weights, plan.q)

    def energy_lsc_check(self, space: FiniteMetricMeasureSpace,
                         curves: Sequence[DiscreteCurve], limit: DiscreteCurve,
                         q: float) -> CheckReport:
        """能量下半连续性（离散替代）

        有限空间上逐点收敛即最终相等：取序列从某项起与极限逐点一致的尾部，
        检查 Ke_q(极限) ≤ 尾部最小能量 + 1e-9。
        """
        energies = [self.kinetic_energy(space, c, q) for c in curves]
        limit_energy = self.kinetic_energy(space, limit, q)
        start = len(curves)
        for k in range(len(curves) - 1, -1, -1):
            if curves[k].nodes != limit.nodes:
                break
            start = k
        converged = start < len(curves)
        tail_min = min(energies[start:]) if converged else np.inf
        checks = (CheckResult.inequality("curves/energy_lsc",
                                         "Ke_q(limit) <= liminf Ke_q(gamma_n)",
                                         limit_energy, tail_min, slack=1e-9),)
        return CheckReport(
            name="energy_lsc_check", checks=checks,
            data={"energies": energies, "limit_energy": limit_energy,
                  "converged_from": start if converged else None},
            flags=() if converged else ("sequence does not reach the limit",),
            passed_override=None if converged else False,
        )


# 创建单例实例
curve_service = CurveService()
