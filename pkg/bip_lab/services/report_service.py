import math
from typing import Any, Dict, List, Sequence

import numpy as np

from ..exceptions import ReportError
from ..models import CheckReport, CheckResult
from ..utils.io import write_csv, write_json
from .base import BaseService

REPORT_HEADER = ("check_id", "paper_ref", "lhs", "rhs", "margin", "pass", "statement")


def jsonable(value: Any) -> Any:
    """递归转换为可写入 JSON 的值（numpy 标量转为内置类型，±∞/NaN 转为字符串）"""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and (math.isinf(value) or math.isnan(value)):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


class ReportService(BaseService):
    """报告输出服务类"""

    def rows(self, results: Sequence[CheckReport]) -> List[List[Any]]:
        """全部检查行，按 check_id 排序"""
        checks: List[CheckResult] = [c for report in results for c in report.checks]
        return [c.row() for c in sorted(checks, key=lambda c: c.check_id)]

    def document(self, results: Sequence[CheckReport]) -> Dict[str, Any]:
        return jsonable({
            "pass": all(r.passed for r in results),
            "reports": [r.to_dict() for r in results],
        })

    def emit_report(self, results: Sequence[CheckReport], format: str, path: str) -> None:
        """写出报告

        Args:
            results: 各操作的检查报告
            format: json（嵌套）或 csv（每个检查一行）
            path: 输出路径

        Raises:
            ReportError: 格式未知或路径不可写
        """
        if format == "json":
            write_json(path, self.document(results))
        elif format == "csv":
            write_csv(path, REPORT_HEADER, self.rows(results))
        else:
            raise ReportError(f"未知的报告格式: {format}")
        self.logger.info(f"报告已写出: {path} ({format})")

    def merge(self, name: str, reports: Sequence[CheckReport]) -> CheckReport:
        """合并多个报告（批处理），检查编号加上子报告序号前缀"""
        checks, flags = [], []
        for index, report in enumerate(reports):
            prefix = f"{index:03d}/{report.name}"
            checks.extend(c.model_copy(update={"check_id": f"{prefix}/{c.check_id}"})
                          for c in report.checks)
            flags.extend(f"{prefix}: {flag}" for flag in report.flags)
        return CheckReport(
            name=name, checks=tuple(checks), flags=tuple(flags),
            data={"children": [{"name": r.name, "pass": r.passed} for r in reports]},
            passed_override=all(r.passed for r in reports),
        )


# 创建单例实例
report_service = ReportService()
