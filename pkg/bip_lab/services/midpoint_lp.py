from typing import Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from ..config import settings
from ..exceptions import InterpolationError
from ..utils.logger import solver_logger

# linprog 的不可行状态码
STATUS_INFEASIBLE = 2


class MidpointProgram:
    """中点超额质量线性规划

    变量依次为 α⁰（supp μ₀ × X）、α¹（X × supp μ₁）、μ（X）与松弛 s（X）：

        min ∑ s
        s.t. α⁰ ∈ Π(μ₀, μ)，α¹ ∈ Π(μ, μ₁)
             ∑ α⁰ d^q ≤ cap，∑ α¹ d^q ≤ cap
             μ − s ≤ C·weight，全部变量 ≥ 0

    cap = (W/2)^q·(1 + 1e-9) + 1e-12。只有右端项依赖 C，矩阵构造一次可反复求解。
    """

    def __init__(self, dist: np.ndarray, weight: np.ndarray, q: float,
                 mass0: np.ndarray, mass1: np.ndarray, cost: float):
        n = weight.shape[0]
        rows0 = np.flatnonzero(mass0 > 0)
        cols1 = np.flatnonzero(mass1 > 0)
        r0, r1 = rows0.size, cols1.size
        supply = mass0[rows0]
        demand = mass1[cols1] * (supply.sum() / mass1[cols1].sum())

        self.n = n
        self.weight = weight
        self.rows0, self.cols1 = rows0, cols1
        self.offset_mu = r0 * n + n * r1
        self.offset_s = self.offset_mu + n
        size = self.offset_s + n

        i0, j0 = np.meshgrid(np.arange(r0), np.arange(n), indexing="ij")
        var0 = (i0 * n + j0).ravel()
        j1, k1 = np.meshgrid(np.arange(n), np.arange(r1), indexing="ij")
        var1 = r0 * n + (j1 * r1 + k1).ravel()
        mu_var = self.offset_mu + np.arange(n)
        s_var = self.offset_s + np.arange(n)
        ones0 = np.ones(var0.size)
        ones1 = np.ones(var1.size)

        # 等式：α⁰ 行和、α⁰ 列和 − μ、α¹ 行和 − μ、α¹ 列和
        eq_rows = np.concatenate([
            i0.ravel(), r0 + j0.ravel(), r0 + np.arange(n),
            r0 + n + j1.ravel(), r0 + n + np.arange(n),
            r0 + 2 * n + k1.ravel(),
        ])
        eq_cols = np.concatenate([var0, var0, mu_var, var1, mu_var, var1])
        eq_vals = np.concatenate([ones0, ones0, -np.ones(n), ones1, -np.ones(n), ones1])
        self.A_eq = coo_matrix((eq_vals, (eq_rows, eq_cols)),
                               shape=(r0 + 2 * n + r1, size)).tocsr()
        self.b_eq = np.concatenate([supply, np.zeros(2 * n), demand])

        cap = cost / 2.0 ** q * (1 + 1e-9) + 1e-12
        cost0 = (dist[rows0, :] ** q).ravel()
        cost1 = (dist[:, cols1] ** q).ravel()
        ub_rows = np.concatenate([np.zeros(var0.size), np.ones(var1.size),
                                  2 + np.arange(n), 2 + np.arange(n)])
        ub_cols = np.concatenate([var0, var1, mu_var, s_var])
        ub_vals = np.concatenate([cost0, cost1, np.ones(n), -np.ones(n)])
        self.A_ub = coo_matrix((ub_vals, (ub_rows, ub_cols)), shape=(2 + n, size)).tocsr()
        self.cap = cap

        self.c = np.zeros(size)
        self.c[self.offset_s:] = 1.0

    def solve(self, C: float) -> Tuple[np.ndarray, float]:
        """求解给定密度上界 C 的最小超额

        Returns:
            Tuple[np.ndarray, float]: 中点质量向量与超额 ∑(μ − C·weight)⁺

        Raises:
            InterpolationError: 不存在离散中点或求解器失败
        """
        mass, excess, _, _ = self.solve_with_plans(C)
        return mass, excess

    def solve_with_plans(self, C: float
                         ) -> Tuple[np.ndarray, float, np.ndarray, np.ndarray]:
        """同 solve，另返回 n×n 的半程耦合 α⁰ ∈ Π(μ₀, μ) 与 α¹ ∈ Π(μ, μ₁)"""
        b_ub = np.concatenate([[self.cap, self.cap], C * self.weight])
        result = linprog(
            self.c, A_ub=self.A_ub, b_ub=b_ub, A_eq=self.A_eq, b_eq=self.b_eq,
            bounds=(0, None), method=settings.LP_METHOD,
            options={"primal_feasibility_tolerance": settings.LP_TOL,
                     "dual_feasibility_tolerance": settings.LP_TOL},
        )
        if result.status == STATUS_INFEASIBLE:
            raise InterpolationError("空间上不存在满足 I_{1/2} 约束的离散中点")
        if result.status != 0:
            raise InterpolationError(f"中点线性规划求解失败: {result.message}")
        mass = np.clip(result.x[self.offset_mu:self.offset_s], 0.0, None)
        mass[mass < 1e-14] = 0.0
        mass = mass / mass.sum()
        excess = float(np.clip(mass - C * self.weight, 0.0, None).sum())
        solver_logger.debug(f"中点 LP: C={C:.6g}，超额 {excess:.3e}")
        n, r0, r1 = self.n, self.rows0.size, self.cols1.size
        plan0 = np.zeros((n, n))
        plan0[self.rows0, :] = np.clip(result.x[:r0 * n], 0.0, None).reshape(r0, n)
        plan1 = np.zeros((n, n))
        plan1[:, self.cols1] = np.clip(result.x[r0 * n:self.offset_mu], 0.0, None).reshape(n, r1)
        return mass, excess, plan0, plan1
