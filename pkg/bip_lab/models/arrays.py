from typing import Any

import numpy as np


def readonly_array(value: Any, ndim: int, name: str, dtype=float) -> np.ndarray:
    """把输入转换为只读 numpy 数组并检查维数

    Args:
        value: 列表或数组
        ndim: 期望维数
        name: 字段名（用于错误信息）
        dtype: 元素类型

    Returns:
        np.ndarray: 只读副本

    Raises:
        ValueError: 维数不符或含非有限值（整数数组除外）
    """
    array = np.array(value, dtype=dtype, copy=True)
    if array.ndim != ndim:
        raise ValueError(f"{name} 必须是 {ndim} 维数组，实际为 {array.ndim} 维")
    array.setflags(write=False)
    return array
