from typing import Any, ClassVar, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .measure import Coupling, ProbMeasure


class ProfileFunction(BaseModel):
    """轮廓函数 D ↦ C(D) ≥ 1

    kind 取 cd_infty / mcp / cd_negative（闭式，参数 K、N），或
    sampled（分段线性插值采样点，超出范围取端点值）。
    采样点在构造时做单调包络并截断到 ≥ 1。
    """

    model_config = ConfigDict(frozen=True)

    KINDS: ClassVar[Tuple[str, ...]] = ("cd_infty", "mcp", "cd_negative", "sampled")

    kind: str
    K: float = 0.0
    N: Optional[float] = None
    samples: Optional[Tuple[Tuple[float, float], ...]] = None

    @field_validator("kind")
    @classmethod
    def _check_kind(cls, value: str) -> str:
        if value not in cls.KINDS:
            raise ValueError(f"未知的轮廓类型: {value}，可选 {cls.KINDS}")
        return value

    @field_validator("samples", mode="before")
    @classmethod
    def _envelope(cls, value: Any) -> Optional[Tuple[Tuple[float, float], ...]]:
        if value is None:
            return None
        pairs = sorted((float(d), float(c)) for d, c in value)
        if not pairs:
            raise ValueError("sampled 轮廓至少需要一个采样点")
        running = 1.0
        envelope = []
        for d, c in pairs:
            running = max(running, c)
            envelope.append((d, running))
        return tuple(envelope)

    @model_validator(mode="after")
    def _check_params(self) -> "ProfileFunction":
        if self.kind == "sampled" and self.samples is None:
            raise ValueError("sampled 轮廓需要 samples")
        if self.kind in ("mcp", "cd_negative") and self.N is None:
            raise ValueError(f"{self.kind} 轮廓需要参数 N")
        return self

    @classmethod
    def constant(cls, value: float = 1.0) -> "ProfileFunction":
        """常数轮廓 C ≡ value"""
        return cls(kind="sampled", samples=((0.0, value),))

    def sampled_value(self, D: float) -> float:
        ds = np.array([d for d, _ in self.samples])
        cs = np.array([c for _, c in self.samples])
        return float(np.interp(D, ds, cs))

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": self.kind, "K": self.K}
        if self.N is not None:
            data["N"] = self.N
        if self.samples is not None:
            data["samples"] = [list(s) for s in self.samples]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ProfileFunction":
        return cls(kind=data["kind"], K=float(data.get("K", 0.0)),
                   N=data.get("N"), samples=data.get("samples"))


class LevelTrace(BaseModel):
    """二进迭代中一层的密度记录"""

    model_config = ConfigDict(frozen=True)

    level: int
    cap: float
    achieved: float
    max_excess: float

    @property
    def met(self) -> bool:
        return self.achieved <= self.cap * (1 + 1e-9) + 1e-12


class DyadicGeodesic(BaseModel):
    """二进时间 k·2^{-n} 上的插值测度

    measures[k] 对应时间 k / 2^level，首尾等于输入测度。
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    level: int
    q: float
    measures: Tuple[ProbMeasure, ...]
    density_bound_trace: Tuple[LevelTrace, ...] = Field(default_factory=tuple)
    input_bound: float = 0.0
    diameter: float = 0.0
    met_target: Optional[bool] = None
    coupling: Optional[Coupling] = None  # 二进构造实际使用的端点耦合

    @model_validator(mode="after")
    def _check_length(self) -> "DyadicGeodesic":
        if len(self.measures) != 2 ** self.level + 1:
            raise ValueError(f"第 {self.level} 层需要 {2 ** self.level + 1} 个测度，"
                             f"实际 {len(self.measures)} 个")
        return self

    @property
    def times(self) -> List[float]:
        """二进时间序列"""
        steps = 2 ** self.level
        return [k / steps for k in range(steps + 1)]

    @property
    def start(self) -> ProbMeasure:
        return self.measures[0]

    @property
    def end(self) -> ProbMeasure:
        return self.measures[-1]

    def at(self, t: float) -> ProbMeasure:
        """取二进时间 t 处的测度"""
        k = t * 2 ** self.level
        if abs(k - round(k)) > 1e-12 or not 0 <= round(k) <= 2 ** self.level:
            raise ValueError(f"t={t} 不是第 {self.level} 层的二进时间")
        return self.measures[int(round(k))]

    def sup_densities(self, weight: np.ndarray) -> np.ndarray:
        return np.array([float((m.mass / weight).max()) for m in self.measures])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "level": self.level,
            "q": self.q,
            "times": self.times,
            "measures": [m.to_dict() for m in self.measures],
            "density_bound_trace": [t.model_dump() for t in self.density_bound_trace],
            "input_bound": self.input_bound,
            "diameter": self.diameter,
            "met_target": self.met_target,
        }
