from typing import Any, Dict, List

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from ..config import settings
from .arrays import readonly_array
from .space import FiniteMetricMeasureSpace


class ProbMeasure(BaseModel):
    """有限空间上的概率测度 μ

    mass[i] ≥ 0 且总和为 1。相对参考测度的密度 ρ = mass / weight
    需要空间信息，通过 density(space) 取得。
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    mass: np.ndarray

    @field_validator("mass", mode="before")
    @classmethod
    def _check_mass(cls, value: Any) -> np.ndarray:
        array = np.array(value, dtype=float, copy=True)
        if array.ndim != 1 or array.size == 0:
            raise ValueError("mass 必须是非空一维数组")
        if not np.all(np.isfinite(array)):
            raise ValueError("mass 含非有限值")
        if array.min() < -settings.STRUCTURE_TOL:
            raise ValueError(f"mass 含负值: {array.min():.3e}")
        array = np.clip(array, 0.0, None)
        total = array.sum()
        if abs(total - 1.0) > settings.STRUCTURE_TOL * max(1, array.size):
            raise ValueError(f"mass 总和必须为 1，实际为 {total:.15g}")
        return readonly_array(array, 1, "mass")

    @classmethod
    def from_weights(cls, values: Any) -> "ProbMeasure":
        """由非负权重归一化构造（截断数值负零）"""
        array = np.clip(np.asarray(values, dtype=float), 0.0, None)
        total = array.sum()
        if total <= 0:
            raise ValueError("权重总和必须为正")
        return cls(mass=array / total)

    @classmethod
    def dirac(cls, n: int, i: int) -> "ProbMeasure":
        mass = np.zeros(n)
        mass[i] = 1.0
        return cls(mass=mass)

    @classmethod
    def uniform_on(cls, space: FiniteMetricMeasureSpace, subset) -> "ProbMeasure":
        """子集上按参考测度归一化的测度（密度在子集上为常数）"""
        mass = np.zeros(space.n)
        idx = np.asarray(list(subset), dtype=int)
        if idx.size == 0:
            raise ValueError("子集不能为空")
        mass[idx] = space.weight[idx]
        return cls.from_weights(mass)

    @property
    def n(self) -> int:
        return int(self.mass.shape[0])

    @property
    def support(self) -> np.ndarray:
        """支撑集 {i : mass[i] > 0}"""
        return np.flatnonzero(self.mass > 0)

    def density(self, space: FiniteMetricMeasureSpace) -> np.ndarray:
        """密度 ρ_i = mass_i / weight_i"""
        return self.mass / space.weight

    def sup_density(self, space: FiniteMetricMeasureSpace) -> float:
        """‖ρ‖_∞"""
        return float(self.density(space).max())

    def support_mass(self, space: FiniteMetricMeasureSpace) -> float:
        """m(supp μ)"""
        return float(space.weight[self.support].sum())

    def to_dict(self) -> List[float]:
        return self.mass.tolist()

    @classmethod
    def from_dict(cls, data: Any) -> "ProbMeasure":
        if isinstance(data, dict):
            data = data["mass"]
        return cls(mass=data)


class Coupling(BaseModel):
    """耦合 α ∈ Π(μ₀, μ₁)，行和为源测度，列和为目标测度"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    plan: np.ndarray
    source: ProbMeasure
    target: ProbMeasure

    @field_validator("plan", mode="before")
    @classmethod
    def _check_plan(cls, value: Any) -> np.ndarray:
        array = np.clip(np.array(value, dtype=float, copy=True), 0.0, None)
        return readonly_array(array, 2, "plan")

    @model_validator(mode="after")
    def _check_marginals(self) -> "Coupling":
        tol = settings.MARGINAL_TOL
        if self.plan.shape != (self.source.n, self.target.n):
            raise ValueError(f"plan 形状 {self.plan.shape} 与边缘分布不一致")
        row_gap = np.abs(self.plan.sum(axis=1) - self.source.mass).max()
        col_gap = np.abs(self.plan.sum(axis=0) - self.target.mass).max()
        if row_gap > tol or col_gap > tol:
            raise ValueError(f"边缘分布不匹配: 行 {row_gap:.3e}, 列 {col_gap:.3e}")
        return self

    def cost(self, cost_matrix: np.ndarray) -> float:
        """∑ α_ij c_ij"""
        return float((self.plan * cost_matrix).sum())

    def pairs(self) -> List[tuple]:
        """正质量的 (i, j, mass) 列表，按 (i, j) 排序"""
        rows, cols = np.nonzero(self.plan > 0)
        return [(int(i), int(j), float(self.plan[i, j])) for i, j in zip(rows, cols)]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "plan": self.plan.tolist(),
            "source": self.source.to_dict(),
            "target": self.target.to_dict(),
        }


class TransportResult(BaseModel):
    """最优运输结果：W_q、W_q^q 与最优耦合"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    q: float
    distance: float
    cost: float
    coupling: Coupling

    def to_dict(self) -> Dict[str, Any]:
        return {
            "q": self.q,
            "distance": self.distance,
            "cost": self.cost,
            "coupling": self.coupling.to_dict(),
        }
