import math
from pydantic import BaseModel, ConfigDict, model_validator

# 有限实数或 math.inf 哨兵值
ExtendedReal = float


def is_infinite(value: ExtendedReal) -> bool:
    return math.isinf(value) and value > 0


class CurvatureParams(BaseModel):
    """畸变系数与熵凸性检查的参数 (K, N, q, t, θ)"""

    model_config = ConfigDict(frozen=True)

    K: float
    N: float = math.inf
    q: float = 2.0
    t: float = 0.5
    theta: float = 0.0

    @model_validator(mode="after")
    def _check(self) -> "CurvatureParams":
        if self.N == 0:
            raise ValueError("N 不能为 0")
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"t 必须在 [0, 1] 内，实际为 {self.t}")
        if self.theta < 0:
            raise ValueError(f"θ 必须非负，实际为 {self.theta}")
        if 0 < self.N < 1:
            raise ValueError(f"正的 N 必须 ≥ 1，实际为 {self.N}")
        return self

    @property
    def K_minus(self) -> float:
        """K⁻ := max(−K, 0)"""
        return max(-self.K, 0.0)
