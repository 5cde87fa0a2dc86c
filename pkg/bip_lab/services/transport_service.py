from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from ..config import settings
from ..exceptions import InputError, TransportError
from ..models import (
    CheckReport,
    CheckResult,
    Coupling,
    FiniteMetricMeasureSpace,
    ProbMeasure,
    TransportResult,
)
from ..utils.logger import solver_logger
from .base import BaseService
from .simplex import TransportationSimplex, enumerate_basic_solutions


def check_exponent(q: float, name: str = "q") -> None:
    if not 1.0 < q < np.inf:
        raise InputError(f"{name} 必须在 (1, ∞) 内，实际为 {q}")


class TransportService(BaseService):
    """最优运输服务类

    q-Wasserstein 距离与最优耦合（运输单纯形），暴力枚举对照，
    推前测度以及 W_q 收敛性检查。
    """

    def _prepare(self, space: FiniteMetricMeasureSpace, q: float,
                 mu0: ProbMeasure, mu1: ProbMeasure):
        check_exponent(q)
        if mu0.n != space.n or mu1.n != space.n:
            raise InputError(f"测度长度 ({mu0.n}, {mu1.n}) 与空间点数 {space.n} 不一致")
        rows = mu0.support
        cols = mu1.support
        cost = space.dist[np.ix_(rows, cols)] ** q
        if not np.all(np.isfinite(cost)):
            raise TransportError("支撑点之间存在无穷距离（空间不连通）")
        supply = mu0.mass[rows]
        demand = mu1.mass[cols]
        demand = demand * (supply.sum() / demand.sum())
        return rows, cols, cost, supply, demand

    def _result(self, space, q, mu0, mu1, rows, cols, flow, cost) -> TransportResult:
        plan = np.zeros((space.n, space.n))
        plan[np.ix_(rows, cols)] = flow
        total = float((flow * cost).sum())
        return TransportResult(
            q=q,
            distance=total ** (1.0 / q),
            cost=total,
            coupling=Coupling(plan=plan, source=mu0, target=mu1),
        )

    def wasserstein(self, space: FiniteMetricMeasureSpace, q: float,
                    mu0: ProbMeasure, mu1: ProbMeasure) -> TransportResult:
        """q-Wasserstein 距离与最优耦合

        零质量的行列先剔除，求解后以零行列补回。

        Args:
            space: 空间
            q: 指数，q ∈ (1, ∞)
            mu0: 源测度
            mu1: 目标测度

        Returns:
            TransportResult: distance = W_q，cost = W_q^q，coupling 为最优耦合

        Raises:
            InputError: q 越界或测度长度不符
            TransportError: 内部错误
        """
        rows, cols, cost, supply, demand = self._prepare(space, q, mu0, mu1)
        solver = TransportationSimplex(supply, demand, cost)
        flow = solver.solve()
        result = self._result(space, q, mu0, mu1, rows, cols, flow, cost)
        self.logger.debug(
            f"W_{q} = {result.distance:.12g}（支撑 {len(rows)}×{len(cols)}，{solver.iterations} 次转轴）"
        )
        return result

    def brute_force_wasserstein(self, space: FiniteMetricMeasureSpace, q: float,
                                mu0: ProbMeasure, mu1: ProbMeasure) -> TransportResult:
        """暴力枚举全部基可行耦合取最小值（仅用于测试对照）

        Raises:
            TransportError: 支撑规模超过 settings.BRUTE_FORCE_MAX_SUPPORT
        """
        rows, cols, cost, supply, demand = self._prepare(space, q, mu0, mu1)
        limit = settings.BRUTE_FORCE_MAX_SUPPORT
        if len(rows) > limit or len(cols) > limit:
            raise TransportError(f"实例过大: 支撑规模 {len(rows)}×{len(cols)} 超过 {limit}")
        best_flow = None
        best_cost = np.inf
        for flow in enumerate_basic_solutions(supply, demand):
            value = float((flow * cost).sum())
            if value < best_cost:
                best_cost, best_flow = value, flow
        return self._result(space, q, mu0, mu1, rows, cols, best_flow, cost)

    def pushforward(self, space_map: Union[Sequence[int], Mapping[int, int]],
                    mu: ProbMeasure, n_target: Optional[int] = None) -> ProbMeasure:
        """推前测度 φ_♯μ

        Args:
            space_map: 索引映射（序列或字典），须在 supp μ 上有定义
            mu: 测度
            n_target: 目标空间点数，默认与源相同

        Raises:
            InputError: 映射在某个支撑点上无定义
        """
        lookup: Dict[int, int] = (dict(space_map) if isinstance(space_map, Mapping)
                                  else dict(enumerate(space_map)))
        n_target = mu.n if n_target is None else n_target
        mass = np.zeros(n_target)
        for i in mu.support:
            target = lookup.get(int(i))
            if target is None or not 0 <= target < n_target:
                raise InputError(f"映射在支撑点 {int(i)} 上无定义")
            mass[target] += mu.mass[i]
        return ProbMeasure(mass=mass)

    def moment(self, space: FiniteMetricMeasureSpace, q: float,
               mu: ProbMeasure, x0: int) -> float:
        """∫ d^q(x, x0) dμ"""
        return float((space.dist[:, x0] ** q * mu.mass).sum())

    def wq_convergence_check(self, space: FiniteMetricMeasureSpace, q: float,
                             seq: List[ProbMeasure], limit: ProbMeasure, x0: int,
                             tol: float = 1e-6, tail: Optional[int] = None) -> CheckReport:
        """W_q 收敛性检查

        报告每项的 W_q(μ_n, μ) 与矩 ∫ d^q(·, x0) dμ_n；当尾部（默认后一半）
        的距离与矩偏差都不超过 tol 时判为收敛。
        """
        if not seq:
            raise InputError("测度序列不能为空")
        distances = [self.wasserstein(space, q, mu, limit).distance for mu in seq]
        moments = [self.moment(space, q, mu, x0) for mu in seq]
        limit_moment = self.moment(space, q, limit, x0)
        tail = tail or max(1, len(seq) // 2)
        tail_dist = max(distances[-tail:])
        tail_moment = max(abs(m - limit_moment) for m in moments[-tail:])
        checks = (
            CheckResult.inequality("wq/tail_distance", "sup_tail W_q(mu_n, mu) <= tol",
                                   tail_dist, tol),
            CheckResult.inequality("wq/tail_moment",
                                   "sup_tail |int d^q(x,x0) dmu_n - int d^q(x,x0) dmu| <= tol",
                                   tail_moment, tol),
        )
        return CheckReport(
            name="wq_convergence_check",
            checks=checks,
            data={"distances": distances, "moments": moments,
                  "limit_moment": limit_moment, "tail": tail},
        )


# 创建单例实例
transport_service = TransportService(solver_logger)
