from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import shortest_path

from ..config import settings
from ..exceptions import InputError
from ..models import (
    CheckReport,
    CheckResult,
    FiniteMetricMeasureSpace,
    RealFunction,
    ValidationReport,
    Violation,
)
from ..models.space import adjacency_matrix
from .base import BaseService


class SpaceService(BaseService):
    """有限度量测度空间服务类

    负责空间校验、直径、倍测度常数、局部 Lipschitz 常数与 Poincaré 不等式检查，
    并提供标准空间生成器。
    """

    def validate_space(self, space: FiniteMetricMeasureSpace,
                       tol: Optional[float] = None) -> ValidationReport:
        """校验空间不变量

        逐项报告：对角为零、对称、非对角为正、有限性、三角不等式、
        权重为正、边表最短路闭包一致。

        Args:
            space: 待校验空间
            tol: 绝对容差，默认 settings.STRUCTURE_TOL

        Returns:
            ValidationReport: 违例列表为空即通过
        """
        tol = settings.STRUCTURE_TOL if tol is None else tol
        d = space.dist
        n = space.n
        violations: List[Violation] = []

        finite = np.isfinite(d)
        for i, j in zip(*np.nonzero(~finite)):
            if i < j:
                violations.append(Violation(kind="finite", indices=(int(i), int(j)),
                                            message=f"dist[{i}][{j}] 非有限（不连通？）"))
        for i in np.flatnonzero(np.abs(np.diag(d)) > tol):
            violations.append(Violation(kind="diagonal", indices=(int(i),),
                                        message=f"dist[{i}][{i}] = {d[i, i]} ≠ 0",
                                        amount=float(abs(d[i, i]))))
        asym = np.abs(np.where(finite & finite.T, d - d.T, 0.0))
        for i, j in zip(*np.nonzero(asym > tol)):
            if i < j:
                violations.append(Violation(kind="symmetry", indices=(int(i), int(j)),
                                            message=f"dist[{i}][{j}] ≠ dist[{j}][{i}]",
                                            amount=float(asym[i, j])))
        off = ~np.eye(n, dtype=bool)
        for i, j in zip(*np.nonzero(off & (d <= 0))):
            violations.append(Violation(kind="positivity", indices=(int(i), int(j)),
                                        message=f"dist[{i}][{j}] = {d[i, j]} ≤ 0"))

        # 三角不等式 dist[i][k] ≤ dist[i][j] + dist[j][k]，仅报告 i < k
        finite_d = np.where(finite, d, np.inf)
        for j in range(n):
            through = finite_d[:, j, None] + finite_d[None, j, :]
            gap = finite_d - through
            bad = np.argwhere(np.isfinite(gap) & (gap > tol))
            for i, k in bad:
                if i < k and i != j and k != j:
                    violations.append(Violation(
                        kind="triangle", indices=(int(i), int(j), int(k)),
                        message=f"dist[{i}][{k}] > dist[{i}][{j}] + dist[{j}][{k}]",
                        amount=float(gap[i, k])))

        bad_weight = ~np.isfinite(space.weight) | (space.weight <= 0)
        for i in np.flatnonzero(bad_weight):
            violations.append(Violation(kind="weight", indices=(int(i),),
                                        message=f"weight[{i}] = {space.weight[i]} 不是正数"))

        if space.edges is not None:
            closure = shortest_path(adjacency_matrix(n, space.edges), method="D", directed=False)
            both = np.isfinite(closure) & finite
            gap = np.where(both, np.abs(closure - d), 0.0)
            mismatch = (gap > tol) | (np.isfinite(closure) != finite)
            for i, j in zip(*np.nonzero(mismatch)):
                if i < j:
                    violations.append(Violation(kind="edge_closure", indices=(int(i), int(j)),
                                                message=f"dist[{i}][{j}] 与边表最短路不一致",
                                                amount=float(gap[i, j])))

        report = ValidationReport(violations=tuple(violations))
        if report.passed:
            self.logger.debug(f"空间校验通过: n={n}")
        else:
            self.logger.info(f"空间校验失败: {len(violations)} 项违例")
        return report

    def require_valid(self, space: FiniteMetricMeasureSpace) -> None:
        """校验失败时抛出 InputError"""
        report = self.validate_space(space)
        if not report.passed:
            first = report.violations[0]
            raise InputError(f"空间不满足不变量: {first.message} 等 {len(report.violations)} 项")

    def diameter(self, space: FiniteMetricMeasureSpace, subset: Iterable[int]) -> float:
        """子集直径

        Raises:
            ValueError: 子集为空
        """
        idx = np.unique(np.asarray(list(subset), dtype=int))
        if idx.size == 0:
            raise ValueError("子集不能为空")
        return float(space.dist[np.ix_(idx, idx)].max())

    def ball_mass(self, space: FiniteMetricMeasureSpace, x: int, r: float) -> float:
        """闭球质量 m(B_r(x))"""
        return float(space.weight[space.dist[x] <= r + settings.STRUCTURE_TOL].sum())

    def doubling_constant(self, space: FiniteMetricMeasureSpace, R: float) -> float:
        """倍测度常数 sup m(B_{2r}(x)) / m(B_r(x))，r ∈ (0, R]

        比值关于 r 分段常数，断点为距离值 d 与 d/2；在断点处取值即得精确上确界。
        """
        if R <= 0:
            raise ValueError(f"R 必须为正，实际为 {R}")
        d = space.dist[np.isfinite(space.dist)]
        positive = np.unique(d[d > 0])
        radii = np.unique(np.concatenate([positive, positive / 2.0]))
        radii = radii[radii <= R + settings.STRUCTURE_TOL]
        best = 1.0
        for x in range(space.n):
            for r in radii:
                ratio = self.ball_mass(space, x, 2 * r) / self.ball_mass(space, x, r)
                best = max(best, ratio)
        return best

    def local_lip(self, space: FiniteMetricMeasureSpace, f: RealFunction,
                  r0: Optional[float] = None) -> np.ndarray:
        """离散局部 Lipschitz 常数

        lip f(x) = max_{0 < d(x,y) ≤ r0} |f(y) − f(x)| / d(x,y)，无邻点时为 0。

        Args:
            space: 空间
            f: 函数
            r0: 邻域半径，默认最小正距离

        Returns:
            np.ndarray: 长度 n 的向量
        """
        r0 = space.min_positive_distance if r0 is None else r0
        if r0 <= 0:
            raise ValueError(f"r0 必须为正，实际为 {r0}")
        d = space.dist
        near = (d > 0) & (d <= r0 + settings.STRUCTURE_TOL)
        diff = np.abs(f.values[None, :] - f.values[:, None])
        with np.errstate(divide="ignore", invalid="ignore"):
            slopes = np.where(near, diff / np.where(near, d, 1.0), 0.0)
        return slopes.max(axis=1)

    def _ball_mean(self, values: np.ndarray, weight: np.ndarray, mask: np.ndarray) -> float:
        return float((values[mask] * weight[mask]).sum() / weight[mask].sum())

    def _weighted_median(self, values: np.ndarray, weight: np.ndarray) -> float:
        order = np.argsort(values, kind="stable")
        cum = np.cumsum(weight[order])
        k = int(np.searchsorted(cum, cum[-1] / 2.0))
        return float(values[order][min(k, len(order) - 1)])

    def poincare_check(self, space: FiniteMetricMeasureSpace, f: RealFunction,
                       r0: Optional[float] = None, tau: float = 1.0,
                       Lambda: float = 2.0, R: float = 1.0,
                       center: str = "mean") -> CheckReport:
        """弱局部 (1,1)-Poincaré 不等式检查

        对所有 x 与所有不超过 R 的距离值 r 检查
        ⨍_{B_r(x)} |f − c| dm ≤ τ r ⨍_{B_{Λr}(x)} lip f dm，
        c 为球上均值（center="median" 时取加权中位数）。

        Returns:
            CheckReport: data 含 worst_ratio 与 witness (x, r)
        """
        for name, value in (("tau", tau), ("Lambda", Lambda), ("R", R)):
            if value <= 0:
                raise ValueError(f"{name} 必须为正，实际为 {value}")
        lip = self.local_lip(space, f, r0)
        d = space.dist
        w = space.weight
        positive = np.unique(d[np.isfinite(d) & (d > 0)])
        radii = positive[positive <= R + settings.STRUCTURE_TOL]
        tol = settings.STRUCTURE_TOL

        checks = []
        worst_ratio = 0.0
        witness = None
        for x in range(space.n):
            for r in radii:
                ball = d[x] <= r + tol
                values = f.values[ball]
                if center == "median":
                    c = self._weighted_median(values, w[ball])
                else:
                    c = self._ball_mean(f.values, w, ball)
                lhs = self._ball_mean(np.abs(f.values - c), w, ball)
                rhs = tau * r * self._ball_mean(lip, w, d[x] <= Lambda * r + tol)
                if lhs <= tol:
                    ratio = 0.0
                elif rhs <= 0:
                    ratio = np.inf
                else:
                    ratio = lhs / rhs
                if ratio > worst_ratio or witness is None:
                    worst_ratio, witness = max(worst_ratio, ratio), (x, float(r))
                checks.append(CheckResult.inequality(
                    check_id=f"poincare/x={x}/r={r:.6g}",
                    statement="mean_{B_r(x)}|f - f_B| <= tau r mean_{B_{Lambda r}(x)} lip f",
                    lhs=lhs, rhs=rhs, slack=settings.CHECK_SLACK,
                ))
        report = CheckReport(
            name="poincare_check",
            checks=tuple(checks),
            data={"worst_ratio": worst_ratio, "witness": witness,
                  "tau": tau, "Lambda": Lambda, "R": R, "center": center},
        )
        self.logger.info(f"Poincaré 检查完成: 最坏比值 {worst_ratio:.6g}，见证 {witness}")
        return report

    def poincare_search(self, space: FiniteMetricMeasureSpace, f: RealFunction,
                        r0: Optional[float], R: float,
                        tau_grid: Sequence[float], lambda_grid: Sequence[float]) -> dict:
        """粗网格搜索：对每个 Λ 返回通过检查的最小 τ（无则为 None）"""
        result = {}
        for Lambda in lambda_grid:
            result[float(Lambda)] = None
            for tau in sorted(tau_grid):
                if self.poincare_check(space, f, r0, tau, Lambda, R).passed:
                    result[float(Lambda)] = float(tau)
                    break
        return result

    # ------------------------------------------------------------------
    # 空间生成器
    # ------------------------------------------------------------------

    def line(self, n: int, spacing: float = 1.0,
             weights: Optional[Sequence[float]] = None) -> FiniteMetricMeasureSpace:
        """n 点直线，相邻间距 spacing"""
        edges = [(i, i + 1, spacing) for i in range(n - 1)]
        return FiniteMetricMeasureSpace.from_edges(
            n, edges, np.ones(n) if weights is None else weights)

    def weighted_line(self, weights: Sequence[float], spacing: float = 1.0) -> FiniteMetricMeasureSpace:
        return self.line(len(weights), spacing, weights)

    def cycle(self, n: int, edge: float = 1.0,
              weights: Optional[Sequence[float]] = None) -> FiniteMetricMeasureSpace:
        """n 点环，边长 edge"""
        edges = [(i, (i + 1) % n, edge) for i in range(n)]
        return FiniteMetricMeasureSpace.from_edges(
            n, edges, np.ones(n) if weights is None else weights)

    def grid(self, rows: int, cols: int, spacing: float = 1.0) -> FiniteMetricMeasureSpace:
        """rows × cols 网格图（4-邻接），点 (r, c) 的索引为 r·cols + c"""
        edges = []
        for r in range(rows):
            for c in range(cols):
                k = r * cols + c
                if c + 1 < cols:
                    edges.append((k, k + 1, spacing))
                if r + 1 < rows:
                    edges.append((k, k + cols, spacing))
        return FiniteMetricMeasureSpace.from_edges(rows * cols, edges, np.ones(rows * cols))

    def complete(self, n: int, length: float = 1.0) -> FiniteMetricMeasureSpace:
        """完全图，所有点对距离为 length"""
        edges = [(i, j, length) for i in range(n) for j in range(i + 1, n)]
        return FiniteMetricMeasureSpace.from_edges(n, edges, np.ones(n))

    def pinched(self, k: int, eps: float) -> FiniteMetricMeasureSpace:
        """收缩空间：两个单位权重 k-团经由一个权重 eps 的桥点相连

        团 A 为 0..k-1，桥点为 k，团 B 为 k+1..2k；所有边长为 1。
        """
        bridge = k
        group_a = list(range(k))
        group_b = list(range(k + 1, 2 * k + 1))
        edges = []
        for group in (group_a, group_b):
            for a in range(len(group)):
                for b in range(a + 1, len(group)):
                    edges.append((group[a], group[b], 1.0))
            edges.extend((v, bridge, 1.0) for v in group)
        weights = np.ones(2 * k + 1)
        weights[bridge] = eps
        return FiniteMetricMeasureSpace.from_edges(2 * k + 1, edges, weights)

    def two_cluster(self, k: int, gap: float) -> FiniteMetricMeasureSpace:
        """两簇空间：两条 k 点单位直线，由一条长度 gap 的边相连"""
        edges = [(i, i + 1, 1.0) for i in range(k - 1)]
        edges += [(k + i, k + i + 1, 1.0) for i in range(k - 1)]
        edges.append((k - 1, k, gap))
        return FiniteMetricMeasureSpace.from_edges(2 * k, edges, np.ones(2 * k))

    def oscillating_line(self, n: int, amplitude: float = 0.9,
                         period: int = 2) -> FiniteMetricMeasureSpace:
        """权重振荡的直线（反例画廊）：w_i = 1 + amplitude·cos(2π i / period)"""
        if not 0 <= amplitude < 1:
            raise ValueError("amplitude 必须在 [0, 1) 内以保证权重为正")
        weights = 1.0 + amplitude * np.cos(2 * np.pi * np.arange(n) / period)
        return self.line(n, 1.0, weights)


# 创建单例实例
space_service = SpaceService()
