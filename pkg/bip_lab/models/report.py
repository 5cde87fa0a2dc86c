import math
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field


def _json_number(value: Optional[float]) -> Any:
    if value is None:
        return None
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        return "nan"
    return value


# 检查族 -> 所检验的结论
REFERENCES: Dict[str, str] = {
    "validate": "metric measure space axioms",
    "wasserstein": "Kantorovich problem marginals",
    "wq": "W_q convergence: distance and q-th moments",
    "poincare": "local Poincaré inequality",
    "intermediate": "W_q geodesic intermediate points",
    "dyadic": "dyadic density growth e^{K^- D^2/6}",
    "bip": "bounded interpolation property",
    "geodesic": "bounded interpolation property",
    "spreading": "midpoint spreading bound",
    "cd_infty": "entropy convexity CD_q with N = ∞",
    "mcp": "measure contraction property MCP_q",
    "cd_negative": "curvature-dimension CD_q with negative N",
    "ug": "upper gradient inequality along test plans",
    "pind": "independence of minimal weak upper gradients from p",
    "leibniz": "Leibniz rule for weak upper gradients",
    "master": "q-test plan for weak upper gradients",
    "family": "q-test plan for weak upper gradients",
    "clarkson": "Clarkson inequality",
    "curves": "lower semicontinuity of kinetic energy",
    "pmgh": "pmGH stability of bounded interpolation",
}


def reference_for(check_id: str) -> str:
    """按 check_id 中第一个已登记的分段查结论名，查不到时为空串"""
    for segment in check_id.split("/"):
        if segment in REFERENCES:
            return REFERENCES[segment]
    return ""


class CheckResult(BaseModel):
    """一行检查结果：lhs ≤ rhs 型不等式及其余量"""

    model_config = ConfigDict(frozen=True)

    check_id: str
    paper_ref: str = ""
    statement: str
    lhs: float
    rhs: float
    margin: float
    passed: bool
    vacuous: bool = False
    details: Dict[str, Any] = Field(default_factory=dict)

    @classmethod
    def inequality(cls, check_id: str, statement: str, lhs: float, rhs: float,
                   slack: float = 0.0, details: Optional[Dict[str, Any]] = None,
                   paper_ref: Optional[str] = None) -> "CheckResult":
        """构造 lhs ≤ rhs 的检查行

        rhs 为 +∞ 时视为空真（vacuous），仍判为通过。

        Args:
            check_id: 检查编号
            statement: 不等式说明
            lhs: 左端
            rhs: 右端
            slack: 相对松弛，通过条件为 lhs ≤ rhs + slack·max(1, |rhs|)
            details: 附加数据
            paper_ref: 所检验的结论名，默认按 check_id 从 REFERENCES 查
        """
        vacuous = math.isinf(rhs) and rhs > 0
        margin = rhs - lhs
        if vacuous:
            passed = True
        else:
            passed = lhs <= rhs + slack * max(1.0, abs(rhs))
        return cls(check_id=check_id,
                   paper_ref=reference_for(check_id) if paper_ref is None else paper_ref,
                   statement=statement, lhs=lhs, rhs=rhs,
                   margin=margin, passed=passed, vacuous=vacuous,
                   details=details or {})

    def row(self) -> List[Any]:
        """CSV 行：check_id, paper_ref, lhs, rhs, margin, pass, statement"""
        return [self.check_id, self.paper_ref, _json_number(self.lhs),
                _json_number(self.rhs), _json_number(self.margin),
                "true" if self.passed else "false", self.statement]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "check_id": self.check_id,
            "paper_ref": self.paper_ref,
            "statement": self.statement,
            "lhs": _json_number(self.lhs),
            "rhs": _json_number(self.rhs),
            "margin": _json_number(self.margin),
            "pass": self.passed,
            "vacuous": self.vacuous,
            "details": self.details,
        }


class CheckReport(BaseModel):
    """一次操作的机器可读报告

    checks 为逐条检查；data 存放操作特有的数值结果（最坏比值、见证点等）；
    flags 记录需要注意的情况（空真分支、无法判定的开放问题等）。
    """

    model_config = ConfigDict(frozen=True)

    name: str
    checks: Tuple[CheckResult, ...] = Field(default_factory=tuple)
    data: Dict[str, Any] = Field(default_factory=dict)
    flags: Tuple[str, ...] = Field(default_factory=tuple)
    passed_override: Optional[bool] = None

    @property
    def passed(self) -> bool:
        """全部检查通过（或由操作显式给出的判定）"""
        if self.passed_override is not None:
            return self.passed_override
        return all(c.passed for c in self.checks)

    @property
    def worst_margin(self) -> float:
        """最小余量，无检查时为 +∞"""
        finite = [c.margin for c in self.checks if not c.vacuous]
        return min(finite) if finite else math.inf

    @property
    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "pass": self.passed,
            "worst_margin": _json_number(self.worst_margin),
            "flags": list(self.flags),
            "data": self.data,
            "checks": [c.to_dict() for c in self.checks],
        }
