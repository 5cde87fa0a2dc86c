from typing import Any, Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .arrays import readonly_array
from .curve import TestPlan


class GradientCandidate(BaseModel):
    """p-弱上梯度候选 G ≥ 0"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    p: float = 2.0
    objective: Optional[float] = None
    max_residual: Optional[float] = None
    converged: bool = True

    @field_validator("values", mode="before")
    @classmethod
    def _check_values(cls, value: Any) -> np.ndarray:
        array = np.array(value, dtype=float, copy=True)
        if array.ndim != 1:
            raise ValueError("values 必须是一维数组")
        if array.size and array.min() < -1e-12:
            raise ValueError(f"梯度候选必须非负，最小值 {array.min():.3e}")
        return readonly_array(np.clip(array, 0.0, None), 1, "values")

    @field_validator("p")
    @classmethod
    def _check_p(cls, value: float) -> float:
        if not 1.0 < value < np.inf:
            raise ValueError(f"p 必须在 (1, ∞) 内，实际为 {value}")
        return value

    @classmethod
    def constant(cls, n: int, value: float, p: float = 2.0) -> "GradientCandidate":
        return cls(values=np.full(n, float(value)), p=p)

    def norm(self, weight: np.ndarray) -> float:
        """加权 L^p 范数 (∑ w G^p)^{1/p}"""
        return float((weight * self.values ** self.p).sum() ** (1.0 / self.p))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "values": self.values.tolist(),
            "p": self.p,
            "objective": self.objective,
            "max_residual": self.max_residual,
            "converged": self.converged,
        }


class PlanTag(BaseModel):
    """计划族成员的来源标签"""

    model_config = ConfigDict(frozen=True)

    provenance: str
    comp: float
    ke: float
    parent: Optional[int] = None


class PlanFamily(BaseModel):
    """共享空间的有限测试计划族（按创建顺序保存）"""

    model_config = ConfigDict(frozen=True)

    plans: Tuple[TestPlan, ...]
    tags: Tuple[PlanTag, ...] = Field(default_factory=tuple)

    @model_validator(mode="after")
    def _check(self) -> "PlanFamily":
        if not self.plans:
            raise ValueError("计划族不能为空")
        if self.tags and len(self.tags) != len(self.plans):
            raise ValueError("tags 与 plans 长度不一致")
        return self

    @property
    def size(self) -> int:
        return len(self.plans)

    def with_plans(self, plans, tags) -> "PlanFamily":
        return PlanFamily(plans=tuple(plans), tags=tuple(tags))
