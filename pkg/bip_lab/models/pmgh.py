from typing import Any, Dict, Tuple

from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from .measure import ProbMeasure
from .space import FiniteMetricMeasureSpace


class EmbeddedSpace(BaseModel):
    """嵌入公共环境空间的有限空间

    embedding[i] 为第 i 个点在环境空间中的索引，要求单射。
    """

    model_config = ConfigDict(frozen=True)

    space: FiniteMetricMeasureSpace
    embedding: Tuple[int, ...]

    @field_validator("embedding", mode="before")
    @classmethod
    def _check_embedding(cls, value: Any) -> Tuple[int, ...]:
        embedding = tuple(int(i) for i in value)
        if len(set(embedding)) != len(embedding):
            raise ValueError("嵌入映射必须是单射")
        return embedding

    @model_validator(mode="after")
    def _check_length(self) -> "EmbeddedSpace":
        if len(self.embedding) != self.space.n:
            raise ValueError(f"嵌入长度 {len(self.embedding)} 与点数 {self.space.n} 不一致")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {"space": self.space.to_dict(), "embedding": list(self.embedding)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EmbeddedSpace":
        return cls(space=FiniteMetricMeasureSpace.from_dict(data["space"]),
                   embedding=data["embedding"])


class TransferResult(BaseModel):
    """pmGH 测度转移结果

    bound_factor = z_∞ / z_n，转移后密度满足
    ‖ρ_n‖ ≤ bound_factor · ‖ρ_∞‖。
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    measure: ProbMeasure
    sup_density: float
    input_sup_density: float
    z_limit: float
    z_target: float
    distance: float

    @property
    def bound_factor(self) -> float:
        return self.z_limit / self.z_target

    def to_dict(self) -> Dict[str, Any]:
        return {
            "measure": self.measure.to_dict(),
            "sup_density": self.sup_density,
            "input_sup_density": self.input_sup_density,
            "z_limit": self.z_limit,
            "z_target": self.z_target,
            "bound_factor": self.bound_factor,
            "distance": self.distance,
        }
