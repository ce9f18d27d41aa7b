"""Brute-force reference implementations for tests and acceptance runs.

Everything here is deliberately independent of the production formulas:
exhaustive enumeration, breadth-first search, and direct summation only.
Hard size caps guard against factorial blowup.
"""
from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .perm_core import Permutation


MAX_ENUM_N = 8
MAX_POSTERIOR_N = 4
MAX_BFS_N = 6


@dataclass
class ExactTable:
    """Log-probabilities over all of S_n (or a tagged discrete space)."""

    n: int
    descriptor: str
    entries: dict[tuple, float] = field(default_factory=dict)

    def prob(self, key) -> float:
        return math.exp(self.entries[key])

    def check_normalized(self, tol: float = 1e-10) -> float:
        total = sum(math.exp(v) for v in self.entries.values())
        if abs(total - 1.0) > tol:
            raise AssertionError(f"{self.descriptor}: probabilities sum to {total}")
        return total


def enumerate_permutations(n: int) -> list[Permutation]:
    """All n! permutations in lexicographic one-line order."""
    if n > MAX_ENUM_N:
        raise ValueError(f"n={n} exceeds enumeration cap {MAX_ENUM_N}")
    return [Permutation(word) for word in itertools.permutations(range(1, n + 1))]


def exact_prior_table(family, n: int) -> ExactTable:
    """Tabulate the permutation prior over S_n and assert normalization."""
    if n > 7:
        raise ValueError(f"n={n} exceeds prior-table cap 7")
    from .eperpf import log_eperpf

    table = ExactTable(n, f"prior {family} n={n}")
    for pi in enumerate_permutations(n):
        table.entries[pi.one_line] = log_eperpf(family, pi)
    table.check_normalized()
    return table


def _parent_iter(n: int):
    """All symmetric binary matrices with zero diagonal, as numpy arrays."""
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    for bits in itertools.product((0, 1), repeat=len(pairs)):
        y = np.zeros((n, n), dtype=np.uint8)
        for (u, v), b in zip(pairs, bits):
            y[u, v] = y[v, u] = b
        yield bits, y


def exact_posterior_table(graphs, hyper, family) -> ExactTable:
    """Exact posterior over pi given both graphs, parent matrix summed out."""
    if graphs.n > MAX_POSTERIOR_N:
        raise ValueError(f"n={graphs.n} exceeds posterior cap {MAX_POSTERIOR_N}")
    from .csbm import ParentMatrix, log_joint

    n = graphs.n
    logs: dict[tuple, float] = {}
    for pi in enumerate_permutations(n):
        terms = [
            log_joint(pi, ParentMatrix(y), graphs, hyper, family)
            for _, y in _parent_iter(n)
        ]
        m = max(terms)
        logs[pi.one_line] = m + math.log(sum(math.exp(t - m) for t in terms))
    norm = max(logs.values()) + math.log(
        sum(math.exp(v - max(logs.values())) for v in logs.values())
    )
    table = ExactTable(n, f"posterior n={n}")
    table.entries = {key: v - norm for key, v in logs.items()}
    table.check_normalized()
    return table


def exact_state_posterior_table(graphs, hyper, family) -> ExactTable:
    """Exact posterior over (pi, parent upper-triangle bits) jointly."""
    if graphs.n > MAX_POSTERIOR_N:
        raise ValueError(f"n={graphs.n} exceeds posterior cap {MAX_POSTERIOR_N}")
    from .csbm import ParentMatrix, log_joint

    n = graphs.n
    logs: dict[tuple, float] = {}
    for pi in enumerate_permutations(n):
        for bits, y in _parent_iter(n):
            logs[(pi.one_line, bits)] = log_joint(
                pi, ParentMatrix(y), graphs, hyper, family
            )
    top = max(logs.values())
    norm = top + math.log(sum(math.exp(v - top) for v in logs.values()))
    table = ExactTable(n, f"state posterior n={n}")
    table.entries = {key: v - norm for key, v in logs.items()}
    table.check_normalized()
    return table


def cayley_bfs(pi: Permutation, sigma: Permutation) -> int:
    """Shortest path from pi to sigma in the transposition Cayley graph."""
    if pi.n != sigma.n:
        raise ValueError("size mismatch")
    if pi.n > MAX_BFS_N:
        raise ValueError(f"n={pi.n} exceeds BFS cap {MAX_BFS_N}")
    n = pi.n
    start, goal = pi.one_line, sigma.one_line
    if start == goal:
        return 0
    dist = {start: 0}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        d = dist[cur]
        for i in range(n):
            for j in range(i + 1, n):
                word = list(cur)
                word[i], word[j] = word[j], word[i]
                nxt = tuple(word)
                if nxt == goal:
                    return d + 1
                if nxt not in dist:
                    dist[nxt] = d + 1
                    queue.append(nxt)
    raise RuntimeError("unreachable: S_n is connected under transpositions")
