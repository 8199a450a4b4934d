"""DAG structures over feature nodes: naive Bayes, TAN (Chow-Liu style tree) and BAN from file."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .data import Dataset, assign_bins, equal_frequency_bins


class StructureError(ValueError):
    pass


@dataclass(frozen=True)
class DagStructure:
    n: int
    parents: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.n < 1:
            raise StructureError("a structure needs at least one node")
        if len(self.parents) != self.n:
            raise StructureError("one parent set per node required")
        norm = []
        for i, ps in enumerate(self.parents):
            ps = tuple(sorted(set(int(j) for j in ps)))
            for j in ps:
                if not 0 <= j < self.n or j == i:
                    raise StructureError(f"invalid parent {j} for node {i}")
            norm.append(ps)
        object.__setattr__(self, "parents", tuple(norm))
        self.topological_order()

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "DagStructure":
        ps = [set() for _ in range(n)]
        for j, k in edges:
            if not (0 <= j < n and 0 <= k < n):
                raise StructureError(f"edge ({j}, {k}) out of range for n={n}")
            ps[k].add(j)
        return cls(n, tuple(tuple(p) for p in ps))

    @property
    def edges(self) -> frozenset[tuple[int, int]]:
        return frozenset((j, i) for i, ps in enumerate(self.parents) for j in ps)

    @property
    def n_edges(self) -> int:
        return sum(len(ps) for ps in self.parents)

    def topological_order(self) -> list[int]:
        """Kahn's algorithm; smallest ready index first so the order is deterministic."""
        indeg = [len(ps) for ps in self.parents]
        children = [[] for _ in range(self.n)]
        for i, ps in enumerate(self.parents):
            for j in ps:
                children[j].append(i)
        ready = sorted(i for i in range(self.n) if indeg[i] == 0)
        order = []
        while ready:
            i = ready.pop(0)
            order.append(i)
            for k in children[i]:
                indeg[k] -= 1
                if indeg[k] == 0:
                    ready.append(k)
            ready.sort()
        if len(order) != self.n:
            raise StructureError("cycle detected")
        return order

    def summary(self) -> str:
        return f"{self.n} nodes, {self.n_edges} edges"


def structure_nb(n: int) -> DagStructure:
    if n < 1:
        raise StructureError("n must be >= 1")
    return DagStructure(n, tuple(() for _ in range(n)))


def _mutual_information(a: np.ndarray, b: np.ndarray) -> float:
    """Plug-in MI of two discrete samples, 0 log 0 := 0."""
    ka, kb = a.max() + 1, b.max() + 1
    joint = np.zeros((ka, kb))
    np.add.at(joint, (a, b), 1.0)
    joint /= joint.sum()
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log(joint[nz] / (pa @ pb)[nz])))


def conditional_mutual_information(ds: Dataset, bins: int = 5) -> np.ndarray:
    """Prior-weighted class-conditional MI matrix, sum_c P(Y=c) I(X_j; X_k | Y=c).

    Each feature is discretized per class with equal-frequency bins.
    """
    n = ds.n_features
    priors = ds.priors()
    cmi = np.zeros((n, n))
    for c in (0, 1):
        Xc = ds.class_rows(c)
        codes = np.column_stack(
            [assign_bins(Xc[:, j], equal_frequency_bins(Xc[:, j], bins)) for j in range(n)]
        )
        for j in range(n):
            for k in range(j + 1, n):
                cmi[j, k] += priors[c] * _mutual_information(codes[:, j], codes[:, k])
    return cmi + cmi.T


def maximum_spanning_tree(weights: np.ndarray) -> list[tuple[int, int]]:
    """Kruskal on the complete graph; ties go to the lexicographically smaller (min, max) pair."""
    n = weights.shape[0]
    cand = sorted(
        ((j, k) for j in range(n) for k in range(j + 1, n)),
        key=lambda e: (-weights[e[0], e[1]], e[0], e[1]),
    )
    root = list(range(n))

    def find(u):
        while root[u] != u:
            root[u] = root[root[u]]
            u = root[u]
        return u

    tree = []
    for j, k in cand:
        rj, rk = find(j), find(k)
        if rj != rk:
            root[max(rj, rk)] = min(rj, rk)
            tree.append((j, k))
            if len(tree) == n - 1:
                break
    return tree


def _orient(n: int, undirected: list[tuple[int, int]]) -> list[tuple[int, int]]:
    adj = [[] for _ in range(n)]
    for j, k in undirected:
        adj[j].append(k)
        adj[k].append(j)
    seen = [False] * n
    directed = []
    for r in range(n):
        if seen[r]:
            continue
        seen[r] = True
        queue = deque([r])
        while queue:
            u = queue.popleft()
            for v in sorted(adj[u]):
                if not seen[v]:
                    seen[v] = True
                    directed.append((u, v))
                    queue.append(v)
    return directed


def structure_tan(ds: Dataset, bins: int = 5) -> DagStructure:
    n = ds.n_features
    if n < 2:
        raise StructureError("TAN needs at least two features")
    if bins < 2:
        raise StructureError("bins must be >= 2")
    tree = maximum_spanning_tree(conditional_mutual_information(ds, bins))
    return DagStructure.from_edges(n, _orient(n, tree))


def read_weighted_edges(path) -> list[tuple[int, int, float]]:
    path = Path(path)
    if not path.is_file():
        raise StructureError(f"no such file: {path}")
    out = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise StructureError(f"{path}:{lineno}: expected 'parent child weight'")
        try:
            out.append((int(parts[0]), int(parts[1]), float(parts[2])))
        except ValueError:
            raise StructureError(f"{path}:{lineno}: malformed edge {line!r}") from None
    return out


def cap_in_degree(
    edges: list[tuple[int, int, float]], max_in_degree: int
) -> list[tuple[int, int, float]]:
    """Keep, per child, the ``max_in_degree`` incoming edges of largest |weight|."""
    by_child: dict[int, list[tuple[int, int, float]]] = {}
    for e in edges:
        by_child.setdefault(e[1], []).append(e)
    kept = []
    for child in sorted(by_child):
        ranked = sorted(by_child[child], key=lambda e: (-abs(e[2]), e[0]))
        kept.extend(ranked[:max_in_degree])
    return kept


def structure_ban_from_file(path, n: int, max_in_degree: Optional[int] = None) -> DagStructure:
    edges = read_weighted_edges(path)
    for j, k, _ in edges:
        if not (0 <= j < n and 0 <= k < n) or j == k:
            raise StructureError(f"edge {j} -> {k} out of range for n={n}")
    if max_in_degree is not None:
        if max_in_degree < 0:
            raise StructureError("max_in_degree must be non-negative")
        edges = cap_in_degree(edges, max_in_degree)
    return DagStructure.from_edges(n, [(j, k) for j, k, _ in edges])
