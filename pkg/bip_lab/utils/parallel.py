from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from bip_lab.config import settings

T = TypeVar("T")
R = TypeVar("R")


def resolve_threads(threads: Optional[int] = None) -> int:
    """返回实际使用的线程数（至少为 1，受 BIPLAB_THREADS 限制）"""
    cap = max(1, settings.BIPLAB_THREADS)
    if threads is None:
        return cap
    return max(1, min(threads, cap))


def parallel_map(func: Callable[[T], R], items: Iterable[T],
                 threads: Optional[int] = None) -> List[R]:
    """并行映射，结果按输入顺序返回

    单线程时直接顺序执行，异常原样抛出。

    Args:
        func: 作用于每个元素的函数
        items: 输入元素
        threads: 线程数上限，默认取 settings.BIPLAB_THREADS

    Returns:
        List: 与输入同序的结果
    """
    items = list(items)
    workers = resolve_threads(threads)
    if workers == 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as executor:
        return list(executor.map(func, items))
