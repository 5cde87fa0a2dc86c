import csv
import json
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple

from pydantic import ValidationError

from ..exceptions import InputError, ReportError, SpaceValidationError
from ..models import (
    EmbeddedSpace,
    FiniteMetricMeasureSpace,
    ProbMeasure,
    ProfileFunction,
    RealFunction,
    TestPlan,
)


def read_json_file(file_path: str, config_name: str) -> Any:
    """读取 JSON 文件

    Args:
        file_path: 文件路径
        config_name: 文件用途（用于错误信息）

    Returns:
        Any: 解析后的 JSON 数据

    Raises:
        InputError: 文件不存在或 JSON 格式错误（附带行列号）
    """
    if not file_path:
        raise InputError(f"{config_name}文件路径为空")
    if not os.path.exists(file_path):
        raise InputError(f"{config_name}文件不存在: {file_path}")
    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise InputError(
            f"{config_name}JSON格式错误: {file_path}: 第 {e.lineno} 行第 {e.colno} 列: {e.msg}"
        ) from e


def _field(data: Dict[str, Any], key: str, source: str) -> Any:
    if key not in data:
        raise InputError(f"{source}: 缺少必要字段 '{key}'")
    return data[key]


def _wrap(error: ValidationError, source: str) -> SpaceValidationError:
    problems = "; ".join(
        f"{'.'.join(str(p) for p in item['loc']) or '<root>'}: {item['msg']}"
        for item in error.errors()
    )
    return SpaceValidationError(f"{source}: {problems}")


def parse_space(data: Any, source: str = "space") -> FiniteMetricMeasureSpace:
    """把空间 JSON 对象解析为 FiniteMetricMeasureSpace

    格式: {"points": n, "dist": [[...]] 或 "edges": [[i, j, len], ...],
    "weights": [...], "labels": [...可选]}
    """
    if not isinstance(data, dict):
        raise InputError(f"{source}: 空间文件必须是 JSON 对象")
    n = _field(data, "points", source)
    weights = _field(data, "weights", source)
    if not isinstance(n, int) or n <= 0:
        raise InputError(f"{source}: 字段 'points' 必须是正整数，实际为 {n!r}")
    if not isinstance(weights, list) or len(weights) != n:
        raise InputError(f"{source}: 字段 'weights' 必须是长度 {n} 的数组")
    for i, w in enumerate(weights):
        if not isinstance(w, (int, float)) or isinstance(w, bool):
            raise InputError(f"{source}: weights[{i}] 不是数值: {w!r}")
    if "edges" in data:
        edges = data["edges"]
        if not isinstance(edges, list):
            raise InputError(f"{source}: 字段 'edges' 必须是数组")
        for k, edge in enumerate(edges):
            if not (isinstance(edge, list) and len(edge) == 3):
                raise InputError(f"{source}: edges[{k}] 必须是 [i, j, length]")
            i, j, length = edge
            if not (isinstance(i, int) and isinstance(j, int)) or not 0 <= i < n or not 0 <= j < n:
                raise InputError(f"{source}: edges[{k}] 端点越界或不是整数: {edge!r}")
            if not isinstance(length, (int, float)) or length <= 0:
                raise InputError(f"{source}: edges[{k}] 长度必须为正: {length!r}")
    elif "dist" in data:
        dist = data["dist"]
        if not isinstance(dist, list) or len(dist) != n:
            raise InputError(f"{source}: 字段 'dist' 必须是 {n} 行的矩阵")
        for i, row in enumerate(dist):
            if not isinstance(row, list) or len(row) != n:
                raise InputError(f"{source}: dist[{i}] 必须是长度 {n} 的数组")
    else:
        raise InputError(f"{source}: 必须提供 'dist' 或 'edges' 字段之一")
    try:
        return FiniteMetricMeasureSpace.from_dict(data)
    except ValidationError as e:
        raise _wrap(e, source) from e


def load_space(file_path: str) -> FiniteMetricMeasureSpace:
    """读取空间文件"""
    return parse_space(read_json_file(file_path, "空间"), source=file_path)


def parse_measure(data: Any, n: int, source: str = "measure") -> ProbMeasure:
    """解析测度：数组或 {"mass": [...]}，长度必须为 n"""
    if isinstance(data, dict):
        data = _field(data, "mass", source)
    if not isinstance(data, list) or len(data) != n:
        raise InputError(f"{source}: 测度必须是长度 {n} 的数组")
    try:
        return ProbMeasure(mass=data)
    except ValidationError as e:
        raise _wrap(e, source) from e


def load_measure(file_path: str, n: int) -> ProbMeasure:
    return parse_measure(read_json_file(file_path, "测度"), n, source=file_path)


def parse_pairs(data: Any, n: int, source: str = "pairs") -> List[Tuple[ProbMeasure, ProbMeasure]]:
    """解析测度对列表：[{"mu0": [...], "mu1": [...]}, ...] 或 [[mu0, mu1], ...]"""
    if not isinstance(data, list) or not data:
        raise InputError(f"{source}: 测度对文件必须是非空数组")
    pairs = []
    for k, item in enumerate(data):
        where = f"{source}[{k}]"
        if isinstance(item, dict):
            mu0, mu1 = _field(item, "mu0", where), _field(item, "mu1", where)
        elif isinstance(item, list) and len(item) == 2:
            mu0, mu1 = item
        else:
            raise InputError(f"{where}: 必须是 {{mu0, mu1}} 对象或二元数组")
        pairs.append((parse_measure(mu0, n, f"{where}.mu0"),
                      parse_measure(mu1, n, f"{where}.mu1")))
    return pairs


def load_pairs(file_path: str, n: int) -> List[Tuple[ProbMeasure, ProbMeasure]]:
    return parse_pairs(read_json_file(file_path, "测度对"), n, source=file_path)


def load_function(file_path: str, n: int) -> RealFunction:
    """读取函数文件：长度 n 的数组或 {"values": [...]}"""
    data = read_json_file(file_path, "函数")
    if isinstance(data, dict):
        data = _field(data, "values", file_path)
    if not isinstance(data, list) or len(data) != n:
        raise InputError(f"{file_path}: 函数必须是长度 {n} 的数组")
    try:
        return RealFunction(values=data)
    except ValidationError as e:
        raise _wrap(e, file_path) from e


def load_plan(file_path: str) -> TestPlan:
    """读取测试计划 {curves: [[...]], probs: [...], T, q}"""
    data = read_json_file(file_path, "测试计划")
    if not isinstance(data, dict):
        raise InputError(f"{file_path}: 测试计划必须是 JSON 对象")
    for key in ("curves", "probs"):
        _field(data, key, file_path)
    try:
        return TestPlan.from_dict(data)
    except (ValidationError, ValueError) as e:
        if isinstance(e, ValidationError):
            raise _wrap(e, file_path) from e
        raise InputError(f"{file_path}: {e}") from e


def parse_profile(text: str) -> ProfileFunction:
    """解析轮廓函数：JSON 字符串或 JSON 文件路径"""
    source = "profile"
    if text and os.path.exists(text):
        data = read_json_file(text, "轮廓")
        source = text
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise InputError(f"轮廓参数不是合法 JSON: 第 {e.colno} 列: {e.msg}") from e
    return parse_profile_data(data, source)


def parse_profile_data(data: Any, source: str = "profile") -> ProfileFunction:
    if not isinstance(data, dict):
        raise InputError(f"{source}: 轮廓必须是 JSON 对象")
    _field(data, "kind", source)
    try:
        return ProfileFunction.from_dict(data)
    except ValidationError as e:
        raise _wrap(e, source) from e


def parse_embedded(data: Any, source: str) -> EmbeddedSpace:
    if not isinstance(data, dict):
        raise InputError(f"{source}: 嵌入空间必须是 JSON 对象")
    space = parse_space(_field(data, "space", source), f"{source}.space")
    try:
        return EmbeddedSpace(space=space, embedding=_field(data, "embedding", source))
    except ValidationError as e:
        raise _wrap(e, source) from e


def write_json(file_path: str, data: Any) -> None:
    """写出 JSON（确定性：固定缩进、保持键顺序）"""
    try:
        path = Path(file_path)
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2, ensure_ascii=False)
            f.write("\n")
    except OSError as e:
        raise ReportError(f"无法写出文件: {file_path}: {e}") from e


def write_csv(file_path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """写出 CSV（首行为表头）"""
    try:
        path = Path(file_path)
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(list(header))
            for row in rows:
                writer.writerow(list(row))
    except OSError as e:
        raise ReportError(f"无法写出文件: {file_path}: {e}") from e


def read_csv(file_path: str) -> Tuple[List[str], List[List[str]]]:
    """读取 CSV，返回 (表头, 数据行)"""
    with open(file_path, 'r', encoding='utf-8', newline='') as f:
        rows = list(csv.reader(f))
    if not rows:
        return [], []
    return rows[0], rows[1:]
