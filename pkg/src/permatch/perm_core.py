"""Permutation arithmetic in one-line and canonical cycle form.

Conventions used throughout the package:

- Elements are 1-based.  A permutation of {1..n} is stored in one-line
  form as a tuple ``one_line`` with ``one_line[i-1]`` the image of ``i``.
- Canonical cycle form: every cycle starts with its least element and
  cycles are ordered by their first elements, so the cycle labels of the
  allocation vector follow the order of appearance.
- Composition is "left first": ``compose(sigma, pi)(i) == pi(sigma(i))``.

Permutations of a subset of {1..n} (needed for node-wise deletion and
re-insertion moves) are represented by :class:`NodeSubsetPermutation`,
which keeps a full-length map plus a support set so that deletions and
insertions never reindex the remaining nodes.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class Permutation:
    """A bijection of {1..n} in one-line form: ``one_line[i-1] = pi(i)``."""

    one_line: tuple[int, ...]

    def __post_init__(self):
        word = tuple(int(x) for x in self.one_line)
        object.__setattr__(self, "one_line", word)
        if sorted(word) != list(range(1, len(word) + 1)):
            raise ValueError(f"not a bijection of 1..{len(word)}: {word}")

    @property
    def n(self) -> int:
        return len(self.one_line)

    def __call__(self, i: int) -> int:
        return self.one_line[i - 1]

    def __len__(self) -> int:
        return len(self.one_line)

    def __str__(self) -> str:
        return cycle_string(self)

    def to_text(self) -> str:
        """One-line text format: whitespace-separated images."""
        return " ".join(str(x) for x in self.one_line)

    @classmethod
    def from_text(cls, text: str) -> "Permutation":
        return cls(tuple(int(t) for t in text.split()))


@dataclass(frozen=True)
class CycleDecomposition:
    """Canonical cycles of a permutation plus the derived summaries.

    ``cycles``  cycles in canonical order, each starting at its least element
    ``z``       allocation vector, ``z[i-1]`` = ordinal of the cycle holding i
    ``t``       cycle type, ``t[m-1]`` = number of cycles of length m
    ``c``       cycle lengths in canonical order
    ``k``       number of cycles
    """

    cycles: tuple[tuple[int, ...], ...]
    z: tuple[int, ...]
    t: tuple[int, ...]
    c: tuple[int, ...]
    k: int


@dataclass(frozen=True)
class NodeSubsetPermutation:
    """A bijection of ``support`` onto itself inside an ambient {1..n}.

    The map is stored full length; entries off the support are 0 so that
    accidental use fails loudly.
    """

    n: int
    support: frozenset[int]
    map: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "support", frozenset(self.support))
        object.__setattr__(self, "map", tuple(int(x) for x in self.map))
        if len(self.map) != self.n:
            raise ValueError("map must have ambient length n")
        images = sorted(self.map[i - 1] for i in self.support)
        if images != sorted(self.support):
            raise ValueError("map restricted to support is not a bijection")

    def __call__(self, i: int) -> int:
        if i not in self.support:
            raise KeyError(f"{i} not in support")
        return self.map[i - 1]

    @property
    def size(self) -> int:
        return len(self.support)

    def inverse(self) -> "NodeSubsetPermutation":
        inv = [0] * self.n
        for i in self.support:
            inv[self.map[i - 1] - 1] = i
        return NodeSubsetPermutation(self.n, self.support, tuple(inv))

    def to_permutation(self) -> Permutation:
        """Read the map as an element of S_size (support must be {1..size})."""
        if self.support != frozenset(range(1, self.size + 1)):
            raise ValueError("support is not contiguous from 1; cannot reindex")
        return Permutation(self.map[: self.size])

    @classmethod
    def from_permutation(cls, pi: Permutation, n: int | None = None) -> "NodeSubsetPermutation":
        n = pi.n if n is None else n
        if n < pi.n:
            raise ValueError("ambient size smaller than the permutation")
        word = pi.one_line + tuple(0 for _ in range(n - pi.n))
        return cls(n, frozenset(range(1, pi.n + 1)), word)


def identity(n: int) -> Permutation:
    return Permutation(tuple(range(1, n + 1)))


def compose(sigma: Permutation, pi: Permutation) -> Permutation:
    """Left-first composition: ``compose(sigma, pi)(i) = pi(sigma(i))``."""
    if sigma.n != pi.n:
        raise ValueError(f"size mismatch: {sigma.n} vs {pi.n}")
    return Permutation(tuple(pi.one_line[s - 1] for s in sigma.one_line))


def inverse(pi: Permutation) -> Permutation:
    inv = [0] * pi.n
    for i, image in enumerate(pi.one_line, start=1):
        inv[image - 1] = i
    return Permutation(tuple(inv))


def conjugate(pi: Permutation, sigma: Permutation) -> Permutation:
    """Relabel the elements of ``pi`` by ``sigma``: returns sigma^-1 . pi . sigma.

    The result maps sigma(i) to sigma(pi(i)), so its cycle representation is
    the one of ``pi`` with every element label replaced through ``sigma``.
    Cycle type is preserved.
    """
    if pi.n != sigma.n:
        raise ValueError(f"size mismatch: {pi.n} vs {sigma.n}")
    out = [0] * pi.n
    for i in range(1, pi.n + 1):
        out[sigma.one_line[i - 1] - 1] = sigma.one_line[pi.one_line[i - 1] - 1]
    return Permutation(tuple(out))


def _cycles_of_map(apply, members: Sequence[int]) -> list[tuple[int, ...]]:
    """Cycles of a bijection over ``members``: least element first per cycle,
    cycles ordered by first element (``members`` must be sorted ascending)."""
    seen: set[int] = set()
    cycles = []
    for start in members:
        if start in seen:
            continue
        cyc = [start]
        seen.add(start)
        nxt = apply(start)
        while nxt != start:
            cyc.append(nxt)
            seen.add(nxt)
            nxt = apply(nxt)
        cycles.append(tuple(cyc))
    return cycles


def canonical_cycles(pi: Permutation) -> CycleDecomposition:
    """Canonical cycle decomposition (least element first, cycles ordered).

    >>> canonical_cycles(Permutation((4, 1, 3, 2))).cycles
    ((1, 4, 2), (3,))
    >>> canonical_cycles(Permutation((4, 1, 3, 2))).z
    (1, 1, 2, 1)
    """
    cycles = tuple(_cycles_of_map(pi, range(1, pi.n + 1)))
    z = [0] * pi.n
    t = [0] * pi.n
    c = []
    for j, cyc in enumerate(cycles, start=1):
        for i in cyc:
            z[i - 1] = j
        t[len(cyc) - 1] += 1
        c.append(len(cyc))
    return CycleDecomposition(cycles, tuple(z), tuple(t), tuple(c), len(cycles))


def subset_cycles(sigma: NodeSubsetPermutation) -> list[tuple[int, ...]]:
    """Canonical cycles of a subset permutation (same rules as full ones)."""
    return _cycles_of_map(sigma, sorted(sigma.support))


def delete_last(sigma: Permutation) -> Permutation:
    """Remove the largest element n from the cycle representation of sigma in S_n.

    >>> delete_last(parse_cycles("(143)(25)")).to_text()
    '4 2 1 3'
    """
    n = sigma.n
    if n <= 1:
        raise ValueError("cannot delete from a permutation of a single element")
    word = list(sigma.one_line)
    pred = word.index(n) + 1  # sigma^{-1}(n)
    out = word[: n - 1]
    if pred != n:
        out[pred - 1] = word[n - 1]
    return Permutation(tuple(out))


def delete_node(pi: Permutation | NodeSubsetPermutation, v: int) -> NodeSubsetPermutation:
    """Remove node v from the cycle representation, keeping original labels."""
    if isinstance(pi, Permutation):
        pi = NodeSubsetPermutation.from_permutation(pi)
    if v not in pi.support:
        raise ValueError(f"node {v} not in support")
    word = list(pi.map)
    succ = word[v - 1]
    new_support = pi.support - {v}
    if succ != v:
        pred = pi.map.index(v) + 1
        word[pred - 1] = succ
    word[v - 1] = 0
    return NodeSubsetPermutation(pi.n, new_support, tuple(word))


def delete_nodes(pi: Permutation | NodeSubsetPermutation, nodes: Iterable[int]) -> NodeSubsetPermutation:
    """Apply :func:`delete_node` for each node in turn."""
    out = NodeSubsetPermutation.from_permutation(pi) if isinstance(pi, Permutation) else pi
    for v in nodes:
        out = delete_node(out, v)
    return out


@dataclass(frozen=True)
class InsertionCandidate:
    """One element of an insertion set, tagged for predictive weighting.

    ``u_star`` is the image the inserted node takes (``u_star == v`` for the
    new singleton cycle); ``cycle_ordinal`` is the canonical ordinal of the
    host cycle in the base permutation, ``k + 1`` for the new cycle.  The
    inverse map is built alongside so callers never re-invert.
    """

    subset: NodeSubsetPermutation
    cycle_ordinal: int
    u_star: int
    inverse: NodeSubsetPermutation

    @property
    def permutation(self) -> Permutation:
        return self.subset.to_permutation()


def insertion_set(sigma: NodeSubsetPermutation, v: int) -> list[InsertionCandidate]:
    """All ways of adding node v to the cycle representation of ``sigma``.

    Returns exactly ``size + 1`` candidates: v can take the seat of any
    current member u_star (then ``pi*(v) = u_star`` and the old preimage of
    u_star maps to v) or open a new singleton cycle.  Deterministic order:
    u_star ascending, the new cycle last.
    """
    if v < 1 or v > sigma.n:
        raise ValueError(f"node {v} outside ambient range 1..{sigma.n}")
    if v in sigma.support:
        raise ValueError(f"node {v} already in support")
    members = sorted(sigma.support)
    cycles = subset_cycles(sigma)
    ordinal = {}
    for j, cyc in enumerate(cycles, start=1):
        for i in cyc:
            ordinal[i] = j
    inv_map = list(sigma.inverse().map)
    support = sigma.support | {v}
    out = []
    for u_star in members:
        word = list(sigma.map)
        pred = inv_map[u_star - 1]
        word[pred - 1] = v
        word[v - 1] = u_star
        inv = list(inv_map)
        inv[u_star - 1] = v
        inv[v - 1] = pred
        out.append(
            InsertionCandidate(
                NodeSubsetPermutation(sigma.n, support, tuple(word)),
                ordinal[u_star],
                u_star,
                NodeSubsetPermutation(sigma.n, support, tuple(inv)),
            )
        )
    word = list(sigma.map)
    word[v - 1] = v
    inv = list(inv_map)
    inv[v - 1] = v
    out.append(
        InsertionCandidate(
            NodeSubsetPermutation(sigma.n, support, tuple(word)),
            len(cycles) + 1,
            v,
            NodeSubsetPermutation(sigma.n, support, tuple(inv)),
        )
    )
    return out


def insertion_set_append(pi: Permutation) -> list[InsertionCandidate]:
    """Insertion set for the next element n+1, lifting pi into S_{n+1}."""
    lifted = NodeSubsetPermutation.from_permutation(pi, pi.n + 1)
    return insertion_set(lifted, pi.n + 1)


def cycle_count(pi: Permutation) -> int:
    word = pi.one_line
    seen = [False] * len(word)
    k = 0
    for i in range(len(word)):
        if seen[i]:
            continue
        k += 1
        j = i
        while not seen[j]:
            seen[j] = True
            j = word[j] - 1
    return k


def cayley_distance(pi: Permutation, sigma: Permutation) -> int:
    """Minimum number of transpositions from sigma to pi: n - k(sigma^-1 . pi)."""
    if pi.n != sigma.n:
        raise ValueError(f"size mismatch: {pi.n} vs {sigma.n}")
    # k(sigma^-1 . pi) counts the cycles of i -> pi(sigma^-1(i)); traversing
    # j -> sigma(pi^-1-free walk) below visits exactly those orbits.
    word_pi = pi.one_line
    word_sig = sigma.one_line
    n = pi.n
    seen = [False] * n
    k = 0
    inv_pi = [0] * n
    for i, image in enumerate(word_pi):
        inv_pi[image - 1] = i
    for i in range(n):
        if seen[i]:
            continue
        k += 1
        j = i
        while not seen[j]:
            seen[j] = True
            j = word_sig[inv_pi[j]] - 1
    return n - k


def subset_cayley(a: NodeSubsetPermutation, b: NodeSubsetPermutation) -> int:
    """Cayley distance between two permutations of the same support."""
    if a.support != b.support or a.n != b.n:
        raise ValueError("supports differ")
    members = sorted(a.support)
    b_inv = b.inverse()
    comp = {i: b_inv.map[a.map[i - 1] - 1] for i in members}
    return len(members) - len(_cycles_of_map(lambda i: comp[i], members))


def hamming_distance(pi: Permutation, sigma: Permutation) -> int:
    """Number of positions where the two maps disagree."""
    if pi.n != sigma.n:
        raise ValueError(f"size mismatch: {pi.n} vs {sigma.n}")
    return sum(1 for a, b in zip(pi.one_line, sigma.one_line) if a != b)


def parse_cycles(text: str, n: int | None = None) -> Permutation:
    """Parse cycle notation like ``"(143)(2)"`` or ``"(1 4 3)(2)"``.

    Single-character elements may be juxtaposed; otherwise separate them
    with spaces or commas.  Fixed points may be omitted when n is given.

    >>> parse_cycles("(143)(2)").to_text()
    '4 2 1 3'
    """
    body = text.strip()
    if not body.startswith("(") or not body.endswith(")"):
        raise ValueError(f"malformed cycle notation: {text!r}")
    groups = [g for g in body[1:-1].split(")(")]
    cycles = []
    for g in groups:
        g = g.strip()
        if "," in g or " " in g:
            elems = [int(t) for t in g.replace(",", " ").split()]
        else:
            elems = [int(ch) for ch in g]
        if not elems:
            raise ValueError(f"empty cycle in {text!r}")
        cycles.append(elems)
    flat = [i for cyc in cycles for i in cyc]
    if len(set(flat)) != len(flat):
        raise ValueError(f"repeated element in {text!r}")
    size = max(flat) if n is None else n
    word = list(range(1, size + 1))
    for cyc in cycles:
        for pos, i in enumerate(cyc):
            word[i - 1] = cyc[(pos + 1) % len(cyc)]
    return Permutation(tuple(word))


def cycle_string(pi: Permutation | NodeSubsetPermutation) -> str:
    """Canonical cycle notation, e.g. ``"(143)(2)"``.

    Elements are juxtaposed when every label is a single digit, otherwise
    space separated.
    """
    if isinstance(pi, Permutation):
        cycles = canonical_cycles(pi).cycles
    else:
        cycles = subset_cycles(pi)
    sep = "" if (pi.n <= 9) else " "
    return "".join("(" + sep.join(str(i) for i in cyc) + ")" for cyc in cycles)


def all_permutations(n: int) -> list[Permutation]:
    """All of S_n in lexicographic one-line order (small n only)."""
    return [Permutation(word) for word in itertools.permutations(range(1, n + 1))]
