"""Exact rational linear feasibility and max-flow.

Both routines run entirely over `fractions.Fraction`: the decision procedures
built on top (relation lifting, weak combined transitions) sit on boundary
cases where floating point would flip answers.
"""

from __future__ import annotations

from collections import deque
from fractions import Fraction
from typing import Hashable, Mapping, Sequence

Row = Sequence[Fraction]


def feasible(rows: Sequence[Row], rhs: Sequence[Fraction]) -> bool:
    """Is there x >= 0 with A x = b?  Phase-1 simplex, Bland's rule."""
    m = len(rows)
    n = len(rows[0]) if m else 0
    if m == 0:
        return True
    # tableau: n structural columns, m artificial columns, rhs; b normalized >= 0
    tab: list[list[Fraction]] = []
    for i in range(m):
        row = [Fraction(v) for v in rows[i]]
        b = Fraction(rhs[i])
        if b < 0:
            row = [-v for v in row]
            b = -b
        row.extend(Fraction(1) if j == i else Fraction(0) for j in range(m))
        row.append(b)
        tab.append(row)
    basis = [n + i for i in range(m)]
    width = n + m + 1
    # reduced costs for minimizing the artificial sum: z[j] = sum of rows
    z = [sum(tab[i][j] for i in range(m)) for j in range(width)]

    while True:
        enter = -1
        for j in range(n):  # artificials may never re-enter
            if j in basis:
                continue
            if z[j] > 0:
                enter = j
                break
        if enter < 0:
            return z[-1] == 0
        leave = -1
        best: Fraction | None = None
        for i in range(m):
            if tab[i][enter] > 0:
                ratio = tab[i][-1] / tab[i][enter]
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best = ratio
                    leave = i
        if leave < 0:
            # unbounded in phase 1 cannot happen (objective bounded below by 0)
            return z[-1] == 0
        pivot = tab[leave][enter]
        tab[leave] = [v / pivot for v in tab[leave]]
        for i in range(m):
            if i != leave and tab[i][enter] != 0:
                factor = tab[i][enter]
                tab[i] = [a - factor * b for a, b in zip(tab[i], tab[leave])]
        factor = z[enter]
        z = [a - factor * b for a, b in zip(z, tab[leave])]
        basis[leave] = enter


class LinearSystem:
    """Equality-constraint builder keyed by arbitrary variable names."""

    def __init__(self) -> None:
        self._vars: dict[Hashable, int] = {}
        self._rows: list[dict[int, Fraction]] = []
        self._rhs: list[Fraction] = []

    def var(self, key: Hashable) -> int:
        idx = self._vars.get(key)
        if idx is None:
            idx = len(self._vars)
            self._vars[key] = idx
        return idx

    def add_equation(self, coeffs: Mapping[Hashable, Fraction], rhs: Fraction) -> None:
        row: dict[int, Fraction] = {}
        for key, c in coeffs.items():
            if c == 0:
                continue
            idx = self.var(key)
            row[idx] = row.get(idx, Fraction(0)) + Fraction(c)
        self._rows.append(row)
        self._rhs.append(Fraction(rhs))

    def is_feasible(self) -> bool:
        n = len(self._vars)
        dense = []
        for row in self._rows:
            vec = [Fraction(0)] * n
            for idx, c in row.items():
                vec[idx] = c
            dense.append(vec)
        return feasible(dense, self._rhs)


def max_flow(
    num_nodes: int,
    edges: Sequence[tuple[int, int, Fraction]],
    source: int,
    sink: int,
) -> Fraction:
    """Edmonds-Karp over exact rationals; edge list may repeat arcs."""
    cap: list[dict[int, Fraction]] = [dict() for _ in range(num_nodes)]
    for u, v, c in edges:
        if c < 0:
            raise ValueError("negative capacity")
        cap[u][v] = cap[u].get(v, Fraction(0)) + Fraction(c)
        cap[v].setdefault(u, Fraction(0))

    flow = Fraction(0)
    while True:
        parent: list[int] = [-1] * num_nodes
        parent[source] = source
        queue = deque([source])
        while queue and parent[sink] < 0:
            u = queue.popleft()
            for v, c in cap[u].items():
                if c > 0 and parent[v] < 0:
                    parent[v] = u
                    queue.append(v)
        if parent[sink] < 0:
            return flow
        bottleneck: Fraction | None = None
        v = sink
        while v != source:
            u = parent[v]
            c = cap[u][v]
            bottleneck = c if bottleneck is None or c < bottleneck else bottleneck
            v = u
        assert bottleneck is not None and bottleneck > 0
        v = sink
        while v != source:
            u = parent[v]
            cap[u][v] -= bottleneck
            cap[v][u] += bottleneck
            v = u
        flow += bottleneck
