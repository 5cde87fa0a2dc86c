from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .arrays import readonly_array

Edge = Tuple[int, int, float]


class FiniteMetricMeasureSpace(BaseModel):
    """有限度量测度空间 (X, d, m)

    dist 为稠密距离矩阵，weight 为严格正的原子质量。若给出 edges，
    dist 由边表的全源最短路闭包得到，且可以恢复最短路径。
    度量公理不在构造时强制，由 space_service.validate_space 报告。
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    dist: np.ndarray
    weight: np.ndarray
    edges: Optional[Tuple[Edge, ...]] = None
    labels: Optional[Tuple[str, ...]] = None

    @field_validator("dist", mode="before")
    @classmethod
    def _check_dist(cls, value: Any) -> np.ndarray:
        array = readonly_array(value, 2, "dist")
        if array.shape[0] != array.shape[1]:
            raise ValueError(f"dist 必须是方阵，实际形状 {array.shape}")
        return array

    @field_validator("weight", mode="before")
    @classmethod
    def _check_weight(cls, value: Any) -> np.ndarray:
        return readonly_array(value, 1, "weight")

    @model_validator(mode="after")
    def _check_shapes(self) -> "FiniteMetricMeasureSpace":
        n = self.dist.shape[0]
        if n == 0:
            raise ValueError("空间至少需要一个点")
        if self.weight.shape[0] != n:
            raise ValueError(f"weight 长度 {self.weight.shape[0]} 与点数 {n} 不一致")
        if self.labels is not None and len(self.labels) != n:
            raise ValueError(f"labels 长度 {len(self.labels)} 与点数 {n} 不一致")
        if self.edges is not None:
            for k, (i, j, _) in enumerate(self.edges):
                if not (0 <= i < n and 0 <= j < n):
                    raise ValueError(f"第 {k} 条边的端点越界: ({i}, {j})")
        return self

    @classmethod
    def from_edges(cls, n: int, edges: Sequence[Sequence[float]],
                   weight: Sequence[float],
                   labels: Optional[Sequence[str]] = None) -> "FiniteMetricMeasureSpace":
        """由边表构造图度量空间

        Args:
            n: 点数
            edges: (i, j, length) 列表
            weight: 原子质量
            labels: 可选标签

        Returns:
            FiniteMetricMeasureSpace: dist 为最短路闭包的空间
        """
        edge_tuple = tuple((int(i), int(j), float(length)) for i, j, length in edges)
        dist = shortest_path(adjacency_matrix(n, edge_tuple), method="D", directed=False)
        return cls(
            dist=dist,
            weight=weight,
            edges=edge_tuple,
            labels=tuple(labels) if labels is not None else None,
        )

    @property
    def n(self) -> int:
        """点数"""
        return int(self.dist.shape[0])

    @property
    def total_mass(self) -> float:
        """总质量 m(X)"""
        return float(self.weight.sum())

    @property
    def has_graph(self) -> bool:
        """是否带有边表（可恢复最短路径）"""
        return self.edges is not None

    @property
    def min_positive_distance(self) -> float:
        """最小正距离，作为离散尺度的默认值"""
        positive = self.dist[self.dist > 0]
        return float(positive.min()) if positive.size else 1.0

    @cached_property
    def neighbors(self) -> Tuple[Tuple[Tuple[int, float], ...], ...]:
        """邻接表：每个点的 (邻点, 边长)，按邻点索引升序"""
        if self.edges is None:
            raise ValueError("空间没有边表，无法恢复最短路径")
        lists: List[Dict[int, float]] = [dict() for _ in range(self.n)]
        for i, j, length in self.edges:
            for a, b in ((i, j), (j, i)):
                if a != b and (b not in lists[a] or length < lists[a][b]):
                    lists[a][b] = length
        return tuple(tuple(sorted(d.items())) for d in lists)

    def label(self, i: int) -> str:
        return self.labels[i] if self.labels is not None else str(i)

    def to_dict(self) -> Dict[str, Any]:
        """转换为 JSON 空间文件格式"""
        data: Dict[str, Any] = {"points": self.n, "weights": self.weight.tolist()}
        if self.edges is not None:
            data["edges"] = [[i, j, length] for i, j, length in self.edges]
        else:
            data["dist"] = self.dist.tolist()
        if self.labels is not None:
            data["labels"] = list(self.labels)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FiniteMetricMeasureSpace":
        if "edges" in data:
            return cls.from_edges(int(data["points"]), data["edges"],
                                  data["weights"], data.get("labels"))
        labels = data.get("labels")
        return cls(dist=data["dist"], weight=data["weights"],
                   labels=tuple(labels) if labels is not None else None)


def adjacency_matrix(n: int, edges: Tuple[Edge, ...]) -> csr_matrix:
    rows, cols, vals = [], [], []
    best: Dict[Tuple[int, int], float] = {}
    for i, j, length in edges:
        key = (min(i, j), max(i, j))
        if key not in best or length < best[key]:
            best[key] = length
    for (i, j), length in best.items():
        rows.append(i)
        cols.append(j)
        vals.append(length)
    return csr_matrix((vals, (rows, cols)), shape=(n, n))


class RealFunction(BaseModel):
    """空间上的实函数 f(x_i)"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _check_values(cls, value: Any) -> np.ndarray:
        array = readonly_array(value, 1, "values")
        if not np.all(np.isfinite(array)):
            raise ValueError("函数值必须全部有限")
        return array

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    def scaled(self, c: float) -> "RealFunction":
        return RealFunction(values=c * self.values)

    def to_dict(self) -> List[float]:
        return self.values.tolist()


class Violation(BaseModel):
    """一条不变量违例记录"""

    model_config = ConfigDict(frozen=True)

    kind: str
    indices: Tuple[int, ...]
    message: str
    amount: float = 0.0


class ValidationReport(BaseModel):
    """validate_space 的结果"""

    model_config = ConfigDict(frozen=True)

    violations: Tuple[Violation, ...] = Field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        """全部不变量成立时为 True"""
        return not self.violations

    def of_kind(self, kind: str) -> List[Violation]:
        return [v for v in self.violations if v.kind == kind]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "violations": [v.model_dump() for v in self.violations],
        }
