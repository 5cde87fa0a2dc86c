"""运输单纯形

在供需二部图的生成树基上迭代：西北角法给出初始基，树上求对偶变量，
按 Bland 规则选进基格（字典序第一个负检验数），沿基回路确定步长，
并列出基格取字典序最小者。
"""
from collections import deque
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from ..config import settings
from ..exceptions import SolverConvergenceError, TransportError
from ..utils.logger import solver_logger

Cell = Tuple[int, int]


class BasisTree:
    """基格构成的生成树（行节点 0..m-1，列节点 m..m+n-1）"""

    def __init__(self, m: int, n: int, cells: Sequence[Cell]):
        self.m = m
        self.n = n
        self.cells: Set[Cell] = set()
        self.adj: List[Set[int]] = [set() for _ in range(m + n)]
        for cell in cells:
            self.add(cell)

    def add(self, cell: Cell) -> None:
        i, j = cell
        self.cells.add(cell)
        self.adj[i].add(self.m + j)
        self.adj[self.m + j].add(i)

    def remove(self, cell: Cell) -> None:
        i, j = cell
        self.cells.discard(cell)
        self.adj[i].discard(self.m + j)
        self.adj[self.m + j].discard(i)

    def copy(self) -> "BasisTree":
        return BasisTree(self.m, self.n, sorted(self.cells))

    def _cell(self, a: int, b: int) -> Cell:
        return (a, b - self.m) if a < self.m else (b, a - self.m)

    def _path(self, src: int, dst: int) -> List[int]:
        parent: Dict[int, int] = {src: src}
        queue = deque([src])
        while queue:
            node = queue.popleft()
            if node == dst:
                break
            for nb in sorted(self.adj[node]):
                if nb not in parent:
                    parent[nb] = node
                    queue.append(nb)
        if dst not in parent:
            raise TransportError("基不是连通生成树")
        path = [dst]
        while path[-1] != src:
            path.append(parent[path[-1]])
        return path[::-1]

    def cycle(self, entering: Cell) -> Tuple[List[Cell], List[Cell]]:
        """进基格形成的回路，返回 (加格, 减格)；进基格为第一个加格"""
        i, j = entering
        nodes = self._path(self.m + j, i)
        path_cells = [self._cell(a, b) for a, b in zip(nodes, nodes[1:])]
        minus = path_cells[0::2]
        plus = [entering] + path_cells[1::2]
        return plus, minus

    def duals(self, cost: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """求 u_i + v_j = c_ij（基格），取 u_0 = 0"""
        u = np.zeros(self.m)
        v = np.zeros(self.n)
        seen = {0}
        queue = deque([0])
        while queue:
            node = queue.popleft()
            for nb in self.adj[node]:
                if nb in seen:
                    continue
                seen.add(nb)
                if node < self.m:
                    v[nb - self.m] = cost[node, nb - self.m] - u[node]
                else:
                    u[nb] = cost[nb, node - self.m] - v[node - self.m]
                queue.append(nb)
        if len(seen) != self.m + self.n:
            raise TransportError("基不是连通生成树")
        return u, v


def north_west_corner(supply: np.ndarray, demand: np.ndarray) -> Tuple[np.ndarray, List[Cell]]:
    """西北角法初始基

    供需同时耗尽时只推进行下标，保证基恰好含 m+n-1 个格。

    Returns:
        (流量矩阵, 基格列表)
    """
    m, n = len(supply), len(demand)
    rest_a = supply.astype(float).copy()
    rest_b = demand.astype(float).copy()
    flow = np.zeros((m, n))
    cells: List[Cell] = []
    i = j = 0
    while True:
        f = min(rest_a[i], rest_b[j])
        flow[i, j] = f
        cells.append((i, j))
        rest_a[i] -= f
        rest_b[j] -= f
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif rest_a[i] <= 0.0:
            i += 1
        else:
            j += 1
    return flow, cells


class TransportationSimplex:
    """运输问题 min ∑ c_ij x_ij, x ∈ Π(a, b) 的精确单纯形求解器"""

    def __init__(self, supply: np.ndarray, demand: np.ndarray, cost: np.ndarray,
                 max_iter: Optional[int] = None):
        """初始化求解器

        Args:
            supply: 供给向量 a（正）
            demand: 需求向量 b（正，总量与 a 相同）
            cost: 代价矩阵 c，形状 (len(a), len(b))
            max_iter: 迭代上限，默认 settings.SIMPLEX_MAX_ITER
        """
        self.supply = np.asarray(supply, dtype=float)
        self.demand = np.asarray(demand, dtype=float)
        self.cost = np.asarray(cost, dtype=float)
        self.max_iter = max_iter or settings.SIMPLEX_MAX_ITER
        self.eps = 1e-12 * max(1.0, float(np.abs(self.cost).max(initial=0.0)))
        self.iterations = 0
        self.logger = solver_logger

    def solve(self) -> np.ndarray:
        """返回最优流量矩阵

        Raises:
            SolverConvergenceError: 超过迭代上限
        """
        flow, cells = north_west_corner(self.supply, self.demand)
        tree = BasisTree(len(self.supply), len(self.demand), cells)
        for it in range(self.max_iter):
            u, v = tree.duals(self.cost)
            reduced = self.cost - u[:, None] - v[None, :]
            entering = self._entering(reduced, tree)
            if entering is None:
                self.iterations = it
                self.logger.debug(f"单纯形收敛: {it} 次迭代，规模 {self.cost.shape}")
                return flow
            self._pivot(flow, tree, entering)
        raise SolverConvergenceError(f"运输单纯形超过迭代上限 {self.max_iter}")

    def _entering(self, reduced: np.ndarray, tree: BasisTree) -> Optional[Cell]:
        # Bland: 字典序第一个负检验数的非基格
        for i, j in np.argwhere(reduced < -self.eps):
            cell = (int(i), int(j))
            if cell not in tree.cells:
                return cell
        return None

    @staticmethod
    def _pivot(flow: np.ndarray, tree: BasisTree, entering: Cell) -> Cell:
        plus, minus = tree.cycle(entering)
        theta = min(flow[c] for c in minus)
        tied = [c for c in minus if flow[c] <= theta + 1e-15]
        leaving = min(tied)
        for c in plus:
            flow[c] += theta
        for c in minus:
            flow[c] = max(flow[c] - theta, 0.0)
        flow[leaving] = 0.0
        tree.remove(leaving)
        tree.add(entering)
        return leaving


def enumerate_basic_solutions(supply: np.ndarray, demand: np.ndarray,
                              max_bases: Optional[int] = None) -> List[np.ndarray]:
    """枚举全部基可行解（从西北角基出发，沿所有可行转轴做广度优先搜索）

    Raises:
        TransportError: 基的数量超过 max_bases
    """
    max_bases = max_bases or settings.BRUTE_FORCE_MAX_BASES
    flow0, cells = north_west_corner(np.asarray(supply, float), np.asarray(demand, float))
    m, n = len(supply), len(demand)
    start = BasisTree(m, n, cells)
    seen = {frozenset(start.cells)}
    queue = deque([(start, flow0)])
    solutions = [flow0]
    all_cells = [(i, j) for i in range(m) for j in range(n)]
    while queue:
        tree, flow = queue.popleft()
        for entering in all_cells:
            if entering in tree.cells:
                continue
            plus, minus = tree.cycle(entering)
            theta = min(flow[c] for c in minus)
            for leaving in [c for c in minus if flow[c] <= theta + 1e-15]:
                key = frozenset(tree.cells - {leaving} | {entering})
                if key in seen:
                    continue
                seen.add(key)
                if len(seen) > max_bases:
                    raise TransportError(f"实例过大: 基的数量超过 {max_bases}")
                new_flow = flow.copy()
                for c in plus:
                    new_flow[c] += theta
                for c in minus:
                    new_flow[c] = max(new_flow[c] - theta, 0.0)
                new_flow[leaving] = 0.0
                new_tree = tree.copy()
                new_tree.remove(leaving)
                new_tree.add(entering)
                queue.append((new_tree, new_flow))
                solutions.append(new_flow)
    return solutions
