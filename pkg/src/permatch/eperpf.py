"""Permutation priors driven by exchangeable partition probability functions.

Four families are provided: Dirichlet, normalized stable, Pitman-Yor and
Gnedin.  Each exposes the partition-level EPPF, the induced permutation
pmf (EPPF divided by the count of cyclic arrangements), and the seating
probabilities of the position-aware restaurant construction in which a new
element either takes the seat to the left of an existing element or opens
a new cycle.

All probability arithmetic is in log space; the closed-form seating
probabilities are the production path and the generic EPPF ratio is kept
as a slow reference used by the tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .perm_core import (
    Permutation,
    canonical_cycles,
    insertion_set_append,
)

_lgamma = math.lgamma


@dataclass(frozen=True)
class EperpfFamily:
    """Base for the prior families; subclasses hold their own parameters."""

    def log_eppf(self, lengths: Sequence[int]) -> float:
        raise NotImplementedError

    def log_pred(self, lengths: Sequence[int]) -> "PredictiveWeights":
        """Closed-form seating log-probabilities given current cycle lengths."""
        raise NotImplementedError


@dataclass(frozen=True)
class Dirichlet(EperpfFamily):
    theta: float

    def __post_init__(self):
        if not self.theta > 0.0:
            raise ValueError(f"theta must be positive, got {self.theta}")

    def log_eppf(self, lengths):
        n = sum(lengths)
        k = len(lengths)
        return (
            _lgamma(self.theta) - _lgamma(self.theta + n)
            + k * math.log(self.theta)
            + sum(_lgamma(m) for m in lengths)
        )

    def log_pred(self, lengths):
        n = sum(lengths)
        denom = math.log(n + self.theta)
        per_cycle = tuple(-denom for _ in lengths)
        return PredictiveWeights(per_cycle, math.log(self.theta) - denom, tuple(lengths))


@dataclass(frozen=True)
class NormalizedStable(EperpfFamily):
    discount: float

    def __post_init__(self):
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {self.discount}")

    def log_eppf(self, lengths):
        n = sum(lengths)
        k = len(lengths)
        a = self.discount
        return (
            (k - 1) * math.log(a) + _lgamma(k) - _lgamma(n)
            + sum(_lgamma(m - a) - _lgamma(1.0 - a) for m in lengths)
        )

    def log_pred(self, lengths):
        n = sum(lengths)
        k = len(lengths)
        a = self.discount
        if n == 0:
            return PredictiveWeights((), 0.0, ())
        log_n = math.log(n)
        per_cycle = tuple(math.log(m - a) - math.log(m) - log_n for m in lengths)
        return PredictiveWeights(per_cycle, math.log(k * a) - log_n, tuple(lengths))


@dataclass(frozen=True)
class PitmanYor(EperpfFamily):
    theta: float
    discount: float

    def __post_init__(self):
        if not self.theta > 0.0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {self.discount}")

    def log_eppf(self, lengths):
        n = sum(lengths)
        a = self.discount
        out = _lgamma(self.theta) - _lgamma(self.theta + n)
        for i, m in enumerate(lengths):
            out += math.log(self.theta + i * a)
            out += _lgamma(m - a) - _lgamma(1.0 - a)
        return out

    def log_pred(self, lengths):
        n = sum(lengths)
        k = len(lengths)
        a = self.discount
        denom = math.log(n + self.theta)
        per_cycle = tuple(math.log(m - a) - math.log(m) - denom for m in lengths)
        return PredictiveWeights(per_cycle, math.log(self.theta + k * a) - denom, tuple(lengths))


@dataclass(frozen=True)
class Gnedin(EperpfFamily):
    gamma: float

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")

    def log_eppf(self, lengths):
        n = sum(lengths)
        k = len(lengths)
        g = self.gamma
        return (
            math.log(g) + _lgamma(k) + _lgamma(k - g) + _lgamma(n - k + g)
            - _lgamma(1.0 - g) - _lgamma(n) - _lgamma(n + g)
            + sum(_lgamma(m + 1) for m in lengths)
        )

    def log_pred(self, lengths):
        n = sum(lengths)
        k = len(lengths)
        g = self.gamma
        if n == 0:
            return PredictiveWeights((), 0.0, ())
        denom = math.log(n) + math.log(n + g)
        per_cycle = tuple(
            math.log(m + 1) - math.log(m) + math.log(n - k + g) - denom
            for m in lengths
        )
        return PredictiveWeights(per_cycle, math.log(k) + math.log(k - g) - denom, tuple(lengths))


@dataclass(frozen=True)
class PredictiveWeights:
    """Seating log-probabilities: one per existing cycle (per seat) plus new.

    ``per_cycle[j]`` is the log-probability of each of the ``lengths[j]``
    seats in cycle j; ``new_cycle`` opens cycle k+1.  The seat probabilities
    weighted by cycle lengths plus the new-cycle mass sum to one.
    """

    per_cycle: tuple[float, ...]
    new_cycle: float
    lengths: tuple[int, ...]

    def total_mass(self) -> float:
        return sum(
            m * math.exp(w) for m, w in zip(self.lengths, self.per_cycle)
        ) + math.exp(self.new_cycle)


def _check_lengths(lengths) -> tuple[int, ...]:
    out = tuple(int(m) for m in lengths)
    if not out or any(m < 1 for m in out):
        raise ValueError(f"cycle lengths must be a non-empty list of positives: {lengths}")
    return out


def log_eppf(family: EperpfFamily, lengths: Sequence[int]) -> float:
    """log EPPF of a partition with the given block sizes (symmetric)."""
    return family.log_eppf(_check_lengths(lengths))


def log_eperpf(family: EperpfFamily, pi: Permutation) -> float:
    """log pmf of the permutation: EPPF over the cyclic-arrangement count."""
    lengths = canonical_cycles(pi).c
    return family.log_eppf(lengths) - sum(_lgamma(m) for m in lengths)


def predictive_weights(family: EperpfFamily, lengths: Sequence[int]) -> PredictiveWeights:
    """Seating probabilities for the next element given current cycle lengths.

    ``lengths`` may be empty (first element opens a cycle with probability 1).
    """
    lengths = tuple(int(m) for m in lengths)
    if any(m < 1 for m in lengths):
        raise ValueError(f"cycle lengths must be positive: {lengths}")
    return family.log_pred(lengths)


def predictive_weights_generic(family: EperpfFamily, lengths: Sequence[int]) -> PredictiveWeights:
    """Reference seating probabilities via the EPPF ratio (tests only)."""
    lengths = tuple(int(m) for m in lengths)
    if not lengths:
        return PredictiveWeights((), 0.0, ())
    base = family.log_eppf(lengths)
    per_cycle = tuple(
        family.log_eppf(lengths[:j] + (lengths[j] + 1,) + lengths[j + 1:])
        - base - math.log(lengths[j])
        for j in range(len(lengths))
    )
    new_cycle = family.log_eppf(lengths + (1,)) - base
    return PredictiveWeights(per_cycle, new_cycle, lengths)


def log_partition_pred(family: EperpfFamily, sizes: Sequence[int]) -> tuple[np.ndarray, float]:
    """Block-level predictive: per-block log-mass (seat value times block size).

    Used by the collapsed partition sampler that initializes the chain.
    """
    w = predictive_weights(family, sizes)
    per_block = np.array(
        [lw + math.log(m) for lw, m in zip(w.per_cycle, w.lengths)], dtype=float
    )
    return per_block, w.new_cycle


def sample_pa_gcrp(family: EperpfFamily, n: int, rng) -> Permutation:
    """Draw a permutation of {1..n} by sequential seating.

    Element m+1 either takes the seat to the left of one of the m already
    placed elements (equiprobably within a cycle) or opens a new cycle,
    with probabilities from :func:`predictive_weights`.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    word = [0] * n
    inv = [0] * n
    word[0] = 1
    inv[0] = 1
    cycles = [[1]]
    lengths = [1]
    for v in range(2, n + 1):
        w = family.log_pred(tuple(lengths))
        probs = [m * math.exp(lw) for m, lw in zip(lengths, w.per_cycle)]
        probs.append(math.exp(w.new_cycle))
        u = rng.random() * sum(probs)
        acc = 0.0
        choice = len(probs) - 1
        for j, p in enumerate(probs):
            acc += p
            if u < acc:
                choice = j
                break
        if choice == len(lengths):
            word[v - 1] = v
            inv[v - 1] = v
            cycles.append([v])
            lengths.append(1)
        else:
            members = cycles[choice]
            u_star = members[rng.integers(len(members))]
            pred = inv[u_star - 1]
            word[pred - 1] = v
            word[v - 1] = u_star
            inv[v - 1] = pred
            inv[u_star - 1] = v
            members.append(v)
            lengths[choice] += 1
    return Permutation(tuple(word))


def sample_pa_gcrp_many(family: EperpfFamily, n: int, size: int, rng) -> np.ndarray:
    """Vectorized batch of forward draws for small n (frequency tests).

    The sequential construction is run on the enumerated state space of
    S_m for m < n, with transition probabilities built from
    :func:`predictive_weights` and :func:`perm_core.insertion_set`, so the
    batch follows exactly the same law as :func:`sample_pa_gcrp`.

    Returns an array of shape (size, n) of one-line rows (1-based).
    """
    if n > 6:
        raise ValueError("batch sampler enumerates S_m, keep n <= 6")
    from .perm_core import all_permutations

    state = np.zeros(size, dtype=np.int64)
    for m in range(1, n):
        perms = all_permutations(m)
        index_of = {p.one_line: i for i, p in enumerate(all_permutations(m + 1))}
        n_states = len(perms)
        trans = np.zeros((n_states, m + 1))
        child = np.zeros((n_states, m + 1), dtype=np.int64)
        for i, pi in enumerate(perms):
            w = family.log_pred(canonical_cycles(pi).c)
            for col, cand in enumerate(insertion_set_append(pi)):
                j = cand.cycle_ordinal
                lw = w.new_cycle if j == len(w.per_cycle) + 1 else w.per_cycle[j - 1]
                trans[i, col] = math.exp(lw)
                child[i, col] = index_of[cand.permutation.one_line]
        cum = np.cumsum(trans, axis=1)
        cum /= cum[:, -1:]
        u = rng.random(size)
        pick = (u[:, None] > cum[state]).sum(axis=1)
        state = child[state, pick]
    finals = np.array([p.one_line for p in all_permutations(n)], dtype=np.int64)
    return finals[state]


def uniform_given_partition(z: Sequence[int], rng) -> Permutation:
    """Uniform draw among the permutations whose cycle structure equals z.

    ``z`` must use order-of-appearance labels.  Within each block the least
    element is fixed first and the remaining members are arranged uniformly,
    which makes every cyclic arrangement equally likely.
    """
    z = [int(t) for t in z]
    n = len(z)
    seen: list[int] = []
    for label in z:
        if label not in seen:
            if label != len(seen) + 1:
                raise ValueError(f"labels not in order of appearance: {z}")
            seen.append(label)
    word = [0] * n
    for label in seen:
        members = [i for i in range(1, n + 1) if z[i - 1] == label]
        rest = members[1:]
        order = [members[0]] + [rest[i] for i in rng.permutation(len(rest))]
        for pos, i in enumerate(order):
            word[i - 1] = order[(pos + 1) % len(order)]
    return Permutation(tuple(word))


def family_from_spec(name: str, **params) -> EperpfFamily:
    """Build a family from a config-style name plus parameters."""
    key = name.strip().lower().replace("-", "_")
    if key == "dirichlet":
        return Dirichlet(theta=float(params["theta"]))
    if key in ("normalized_stable", "stable"):
        return NormalizedStable(discount=float(params["discount"]))
    if key in ("pitman_yor", "py"):
        return PitmanYor(theta=float(params["theta"]), discount=float(params["discount"]))
    if key == "gnedin":
        return Gnedin(gamma=float(params["gamma"]))
    raise ValueError(f"unknown family {name!r}")
