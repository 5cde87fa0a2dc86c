from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from ..config import settings
from ..exceptions import SolverConvergenceError
from ..utils.logger import solver_logger


class MinimalGradientSolver:
    """最小 p-弱上梯度的凸规划

        min ∑ w_x G_x^p   s.t.  A G ≥ b，G ≥ 0

    A 的每一行对应一个测试计划（左端点采样的曲线积分系数），b 为 f 的端点差。
    p = 2 时在加权范数下用 Dykstra 交替投影求 0 到可行集的投影；
    一般 p 时用 L-BFGS-B 求解对偶问题（λ ≥ 0），取多个确定性初值中的最优者。
    """

    def __init__(self, A: np.ndarray, b: np.ndarray, weight: np.ndarray, p: float,
                 max_iter: Optional[int] = None, restarts: Optional[int] = None,
                 tol: Optional[float] = None):
        active = b > 0
        self.A = np.asarray(A, dtype=float)[active]
        self.b = np.asarray(b, dtype=float)[active]
        self.weight = np.asarray(weight, dtype=float)
        self.p = p
        self.max_iter = max_iter or settings.GRADIENT_MAX_ITER
        self.restarts = restarts or settings.GRADIENT_RESTARTS
        self.tol = settings.GRADIENT_RESIDUAL_TOL if tol is None else tol
        self.logger = solver_logger

    def objective(self, G: np.ndarray) -> float:
        return float((self.weight * G ** self.p).sum())

    def residual(self, G: np.ndarray) -> float:
        """最大约束违反量 max (b − A G)⁺"""
        if self.b.size == 0:
            return 0.0
        return float(np.clip(self.b - self.A @ G, 0.0, None).max())

    def repair(self, G: np.ndarray) -> np.ndarray:
        """按 max_k b_k / (a_k·G) 放大 G 以恢复可行性"""
        if self.b.size == 0:
            return G
        lhs = self.A @ G
        with np.errstate(divide="ignore"):
            ratios = np.where(lhs > 0, self.b / np.where(lhs > 0, lhs, 1.0), np.inf)
        scale = float(ratios.max())
        if 1.0 < scale < np.inf:
            return G * scale
        return G

    def solve(self) -> Tuple[np.ndarray, float, float]:
        """求解

        Returns:
            Tuple[np.ndarray, float, float]: (G, 目标值 ∑wG^p, 最大残差)

        Raises:
            SolverConvergenceError: 迭代预算耗尽后残差仍超过容差
        """
        n = self.weight.shape[0]
        if self.b.size == 0:
            return np.zeros(n), 0.0, 0.0
        if np.any((self.A.sum(axis=1) <= 0) & (self.b > 0)):
            raise SolverConvergenceError("存在系数全为零但右端为正的约束，规划不可行")
        if self.p == 2.0:
            G = self._dykstra()
            if G is None:
                self.logger.warning("Dykstra 投影未在迭代预算内收敛，改用对偶求解")
                G = self._dual()
        else:
            G = self._dual()
        G = self.repair(G)
        residual = self.residual(G)
        if residual > self.tol * max(1.0, float(self.b.max())):
            raise SolverConvergenceError(f"最小梯度求解未收敛，最大残差 {residual:.3e}",
                                         residuals=np.clip(self.b - self.A @ G, 0.0, None))
        return G, self.objective(G), residual

    def _dykstra(self) -> Optional[np.ndarray]:
        m, n = self.A.shape
        w = self.weight
        scaled = self.A / w[None, :]
        norms = (self.A * scaled).sum(axis=1)
        x = np.zeros(n)
        increments = np.zeros((m + 1, n))
        for sweep in range(self.max_iter):
            previous = x.copy()
            for k in range(m):
                z = x + increments[k]
                gap = self.b[k] - self.A[k] @ z
                x = z + (gap / norms[k]) * scaled[k] if gap > 0 else z
                increments[k] = z - x
            z = x + increments[m]
            x = np.clip(z, 0.0, None)
            increments[m] = z - x
            change = float(np.abs(x - previous).max())
            if change <= 1e-11 and self.residual(x) <= self.tol:
                self.logger.debug(f"Dykstra 在第 {sweep + 1} 轮收敛")
                return x
        return None

    def _primal(self, lam: np.ndarray) -> np.ndarray:
        c = np.clip(self.A.T @ lam, 0.0, None)
        return (c / (self.p * self.weight)) ** (1.0 / (self.p - 1.0))

    def _negative_dual(self, lam: np.ndarray) -> Tuple[float, np.ndarray]:
        G = self._primal(lam)
        c = np.clip(self.A.T @ lam, 0.0, None)
        value = lam @ self.b - (1.0 - 1.0 / self.p) * float((c * G).sum())
        gradient = self.b - self.A @ G
        return -value, -gradient

    def _starts(self) -> List[np.ndarray]:
        m = self.b.size
        rng = np.random.default_rng(settings.BIPLAB_SEED)
        scales = [0.0, 0.1, 1.0, 10.0]
        starts = [np.full(m, s) for s in scales]
        while len(starts) < self.restarts:
            starts.append(rng.uniform(0.0, 1.0, size=m))
        return starts[:self.restarts]

    def _dual(self) -> np.ndarray:
        best, best_value = None, np.inf
        for index, start in enumerate(self._starts()):
            result = minimize(self._negative_dual, start, jac=True, method="L-BFGS-B",
                              bounds=[(0.0, None)] * self.b.size,
                              options={"maxiter": self.max_iter, "gtol": 1e-12, "ftol": 1e-15})
            G = self.repair(self._primal(result.x))
            value = self.objective(G)
            self.logger.debug(f"对偶初值 {index}: 目标 {value:.10g}，{result.nit} 次迭代")
            if value < best_value:
                best, best_value = G, value
        return best
