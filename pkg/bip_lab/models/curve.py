from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from ..config import settings
from .arrays import readonly_array


class DiscreteCurve(BaseModel):
    """均匀时间网格 t_j = j/T 上的离散曲线"""

    model_config = ConfigDict(frozen=True)

    nodes: Tuple[int, ...]

    @field_validator("nodes", mode="before")
    @classmethod
    def _check_nodes(cls, value: Any) -> Tuple[int, ...]:
        nodes = tuple(int(i) for i in value)
        if len(nodes) < 2:
            raise ValueError("曲线至少需要两个节点 (T ≥ 1)")
        if min(nodes) < 0:
            raise ValueError("节点索引不能为负")
        return nodes

    @property
    def T(self) -> int:
        """时间步数"""
        return len(self.nodes) - 1

    @property
    def start(self) -> int:
        return self.nodes[0]

    @property
    def end(self) -> int:
        return self.nodes[-1]

    @property
    def is_constant(self) -> bool:
        return len(set(self.nodes)) == 1

    def at_step(self, j: int) -> int:
        return self.nodes[j]

    def reversed(self) -> "DiscreteCurve":
        return DiscreteCurve(nodes=self.nodes[::-1])

    @classmethod
    def constant(cls, point: int, T: int) -> "DiscreteCurve":
        return cls(nodes=(point,) * (T + 1))


class TestPlan(BaseModel):
    """q-测试计划：共享网格的有限曲线族及其概率"""

    __test__ = False  # 不是 pytest 测试类

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    curves: Tuple[DiscreteCurve, ...]
    probs: np.ndarray
    q: float = 2.0

    @field_validator("probs", mode="before")
    @classmethod
    def _check_probs(cls, value: Any) -> np.ndarray:
        array = np.array(value, dtype=float, copy=True)
        if array.ndim != 1:
            raise ValueError("probs 必须是一维数组")
        if array.size and array.min() < -settings.STRUCTURE_TOL:
            raise ValueError("probs 含负值")
        array = np.clip(array, 0.0, None)
        if abs(array.sum() - 1.0) > settings.STRUCTURE_TOL * max(1, array.size):
            raise ValueError(f"probs 总和必须为 1，实际为 {array.sum():.15g}")
        return readonly_array(array, 1, "probs")

    @model_validator(mode="after")
    def _check_grid(self) -> "TestPlan":
        if not self.curves:
            raise ValueError("测试计划不能为空")
        if len(self.curves) != self.probs.shape[0]:
            raise ValueError("curves 与 probs 长度不一致")
        steps = {c.T for c in self.curves}
        if len(steps) != 1:
            raise ValueError(f"曲线必须共享时间网格，实际 T 取值 {sorted(steps)}")
        if not 1.0 < self.q < np.inf:
            raise ValueError(f"q 必须在 (1, ∞) 内，实际为 {self.q}")
        return self

    @classmethod
    def from_weights(cls, curves: Sequence[DiscreteCurve], weights: Sequence[float],
                     q: float) -> "TestPlan":
        """由非负权重归一化构造，并合并相同曲线"""
        merged: Dict[Tuple[int, ...], float] = {}
        for curve, w in zip(curves, weights):
            if w > 0:
                merged[curve.nodes] = merged.get(curve.nodes, 0.0) + float(w)
        if not merged:
            raise ValueError("权重总和必须为正")
        total = sum(merged.values())
        return cls(
            curves=tuple(DiscreteCurve(nodes=k) for k in merged),
            probs=np.array([w / total for w in merged.values()]),
            q=q,
        )

    @property
    def T(self) -> int:
        """共享的时间步数"""
        return self.curves[0].T

    @property
    def size(self) -> int:
        return len(self.curves)

    def node_matrix(self) -> np.ndarray:
        """形状 (曲线数, T+1) 的节点矩阵"""
        return np.array([c.nodes for c in self.curves], dtype=int)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "curves": [list(c.nodes) for c in self.curves],
            "probs": self.probs.tolist(),
            "T": self.T,
            "q": self.q,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TestPlan":
        curves = tuple(DiscreteCurve(nodes=c) for c in data["curves"])
        plan = cls(curves=curves, probs=data["probs"], q=float(data.get("q", 2.0)))
        if "T" in data and int(data["T"]) != plan.T:
            raise ValueError(f"T={data['T']} 与曲线长度 {plan.T} 不一致")
        return plan

    def curve_list(self) -> List[DiscreteCurve]:
        return list(self.curves)
