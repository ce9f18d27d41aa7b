"""The correlated stochastic block model: generative sampling and likelihood factors.

Two symmetric binary networks are modeled as independent noisy copies of a
latent parent network, the second observed through an unknown permutation.
The parent follows an SBM whose blocks are the cycles of that permutation.
Only the upper triangle of each adjacency matrix is modeled; storage is a
dense 0/1 matrix with the lower triangle mirrored and zero diagonal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln

from .eperpf import EperpfFamily, log_eperpf, sample_pa_gcrp
from .perm_core import Permutation, canonical_cycles
from .special import log_beta, log_inc_beta, sample_truncated_beta  # noqa: F401 (re-export)


def _check_adjacency(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.uint8)
    if y.ndim != 2 or y.shape[0] != y.shape[1]:
        raise ValueError(f"adjacency matrix must be square, got {y.shape}")
    if not np.array_equal(y, y.T):
        raise ValueError("adjacency matrix must be symmetric")
    if np.any(np.diag(y) != 0):
        raise ValueError("diagonal must be zero")
    if y.max(initial=0) > 1:
        raise ValueError("entries must be 0/1")
    return y


@dataclass(frozen=True)
class Graphs:
    """The observed pair of networks on a common node set."""

    y1: np.ndarray
    y2: np.ndarray

    def __post_init__(self):
        y1 = _check_adjacency(self.y1)
        y2 = _check_adjacency(self.y2)
        if y1.shape != y2.shape:
            raise ValueError("the two networks must share the node set")
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y2", y2)

    @property
    def n(self) -> int:
        return self.y1.shape[0]


@dataclass(frozen=True)
class ParentMatrix:
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", _check_adjacency(self.y))

    @property
    def n(self) -> int:
        return self.y.shape[0]


@dataclass(frozen=True)
class NoiseRates:
    """Spurious-edge and dropped-edge probabilities, each in (0, 1/2)."""

    alpha_noise: float
    beta_noise: float

    def __post_init__(self):
        for name, val in (("alpha_noise", self.alpha_noise), ("beta_noise", self.beta_noise)):
            if not 0.0 < val < 0.5:
                raise ValueError(f"{name} must lie in (0, 1/2), got {val}")


@dataclass(frozen=True)
class Hyperparams:
    """Beta hyperparameters: (a0, b0) spurious rate, (a1, b1) drop rate,
    (a_xi, b_xi) block connection probabilities."""

    a0: float = 1.0
    b0: float = 1.0
    a1: float = 1.0
    b1: float = 1.0
    a_xi: float = 1.0
    b_xi: float = 1.0


@dataclass(frozen=True)
class BlockCounts:
    """Edge and non-edge counts of the parent between cycle pairs.

    Stored as full symmetric k x k integer matrices; the upper triangle
    (j <= h) is the authoritative set of unordered block pairs, with the
    diagonal holding within-cycle pairs counted once.
    """

    m: np.ndarray
    m_bar: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.int64)
        m_bar = np.asarray(self.m_bar, dtype=np.int64)
        if m.shape != m_bar.shape:
            raise ValueError("m and m_bar must share shape")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "m_bar", m_bar)

    @property
    def k(self) -> int:
        return self.m.shape[0]


@dataclass(frozen=True)
class ExponentTally:
    """Concordant/discordant pair counts e[q, l], e_bar[q, l].

    Rows are indexed by the parent bit q in {0, 1}; columns by the observed
    network l in {1, 2} (stored at l - 1).
    """

    e: np.ndarray
    e_bar: np.ndarray

    def totals(self, q: int) -> tuple[int, int]:
        """(discordant, concordant) sums over both networks for parent bit q."""
        return int(self.e_bar[q].sum()), int(self.e[q].sum())


def _concordance(y: np.ndarray, obs: np.ndarray, iu) -> tuple[int, int, int, int]:
    """e1, ebar1, e0, ebar0 over the upper-triangle pairs."""
    a = y[iu].astype(np.int64)
    b = obs[iu].astype(np.int64)
    both = int((a & b).sum())
    a_sum = int(a.sum())
    b_sum = int(b.sum())
    total = a.size
    e1 = both
    ebar1 = a_sum - both
    ebar0 = b_sum - both
    e0 = total - a_sum - b_sum + both
    return e1, ebar1, e0, ebar0


def edge_exponents(parent: ParentMatrix, graphs: Graphs, sigma: Permutation) -> ExponentTally:
    """All eight concordance counts: network 1 against the identity alignment,
    network 2 against ``sigma``."""
    n = parent.n
    if graphs.n != n or sigma.n != n:
        raise ValueError("size mismatch")
    iu = np.triu_indices(n, k=1)
    s0 = np.asarray(sigma.one_line, dtype=np.int64) - 1
    y2s = graphs.y2[np.ix_(s0, s0)]
    e1_1, ebar1_1, e0_1, ebar0_1 = _concordance(parent.y, graphs.y1, iu)
    e1_2, ebar1_2, e0_2, ebar0_2 = _concordance(parent.y, y2s, iu)
    e = np.array([[e0_1, e0_2], [e1_1, e1_2]], dtype=np.int64)
    e_bar = np.array([[ebar0_1, ebar0_2], [ebar1_1, ebar1_2]], dtype=np.int64)
    return ExponentTally(e, e_bar)


def block_counts(parent: ParentMatrix, z) -> BlockCounts:
    """Count parent edges and non-edges between every pair of cycles."""
    z = np.asarray(z, dtype=np.int64)
    if z.shape[0] != parent.n:
        raise ValueError("size mismatch")
    labels = np.unique(z)
    k = labels.size
    if not np.array_equal(labels, np.arange(1, k + 1)) and not np.array_equal(
        labels, np.arange(k)
    ):
        raise ValueError("labels must be contiguous (0- or 1-based)")
    z0 = z - z.min()
    ind = np.zeros((parent.n, k), dtype=np.int64)
    ind[np.arange(parent.n), z0] = 1
    m = ind.T @ parent.y.astype(np.int64) @ ind
    np.fill_diagonal(m, np.diag(m) // 2)  # within-cycle edges were counted twice
    sizes = ind.sum(axis=0)
    pairs = np.outer(sizes, sizes)
    np.fill_diagonal(pairs, sizes * (sizes - 1) // 2)
    return BlockCounts(m, pairs - m)


def log_marginal_sbm(counts: BlockCounts, a_xi: float, b_xi: float) -> float:
    """Beta-binomial marginal likelihood of the parent given the blocks."""
    iu = np.triu_indices(counts.k)
    m = counts.m[iu]
    mb = counts.m_bar[iu]
    return float(np.sum(betaln(a_xi + m, b_xi + mb) - betaln(a_xi, b_xi)))


def log_noise_marginal(tally: ExponentTally, hyper: Hyperparams) -> float:
    """Noise rates integrated out against their truncated beta priors."""
    out = 0.0
    for q, (a, b) in ((0, (hyper.a0, hyper.b0)), (1, (hyper.a1, hyper.b1))):
        disc, conc = tally.totals(q)
        out += log_inc_beta(0.5, a + disc, b + conc) - log_inc_beta(0.5, a, b)
    return out


def log_joint(
    pi: Permutation,
    parent: ParentMatrix,
    graphs: Graphs,
    hyper: Hyperparams,
    family: EperpfFamily,
) -> float:
    """Exact log of the joint over (graphs, parent, permutation).

    Noise rates are marginalized through truncated-beta conjugacy and the
    block probabilities through the beta-binomial marginal, so the value is
    directly comparable across every discrete configuration.
    """
    tally = edge_exponents(parent, graphs, pi)
    counts = block_counts(parent, canonical_cycles(pi).z)
    return (
        log_noise_marginal(tally, hyper)
        + log_marginal_sbm(counts, hyper.a_xi, hyper.b_xi)
        + log_eperpf(family, pi)
    )


def pair_marginal_prob(y: int, y_prime: int, xi: float, noise: NoiseRates) -> float:
    """Joint law of one aligned observation pair with the parent bit summed out."""
    a = noise.alpha_noise
    b = noise.beta_noise
    s = y + y_prime
    return (1.0 - b) ** s * b ** (2 - s) * xi + a**s * (1.0 - a) ** (2 - s) * (1.0 - xi)


def _flip(y: np.ndarray, alpha: float, beta: float, rng) -> np.ndarray:
    """Independent noisy copy: edges survive w.p. 1-beta, non-edges appear w.p. alpha."""
    n = y.shape[0]
    iu = np.triu_indices(n, k=1)
    bits = y[iu]
    u = rng.random(bits.size)
    flipped = np.where(bits == 1, (u < 1.0 - beta), (u < alpha)).astype(np.uint8)
    out = np.zeros_like(y)
    out[iu] = flipped
    return out + out.T


def simulate(
    n: int,
    rng,
    *,
    family: EperpfFamily | None = None,
    pi: Permutation | None = None,
    a_xi: float = 1.0,
    b_xi: float = 1.0,
    xi: np.ndarray | None = None,
    alpha: float = 0.05,
    beta: float = 0.05,
) -> tuple[Permutation, ParentMatrix, Graphs]:
    """Generate (permutation, parent, observed pair) from the model.

    The permutation is drawn from ``family`` unless supplied; block
    probabilities are iid Beta(a_xi, b_xi) unless a fixed matrix ``xi``
    (k x k, indexed by cycle ordinals) is supplied.  The first network is a
    noisy copy of the parent; the second is an independent noisy copy read
    through the permutation, i.e. y2[pi(u), pi(v)] flips parent pair (u, v).
    """
    if (family is None) == (pi is None):
        raise ValueError("supply exactly one of family or pi")
    if not (0.0 <= alpha < 1.0 and 0.0 <= beta < 1.0 and alpha < 1.0 - beta):
        raise ValueError(f"need 0 <= alpha, beta and alpha < 1 - beta, got {alpha}, {beta}")
    if pi is None:
        pi = sample_pa_gcrp(family, n, rng)
    if pi.n != n:
        raise ValueError("permutation size does not match n")
    dec = canonical_cycles(pi)
    k = dec.k
    if xi is None:
        xi = rng.beta(a_xi, b_xi, size=(k, k))
        xi = np.triu(xi) + np.triu(xi, k=1).T
    else:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (k, k):
            raise ValueError(f"xi must be {k}x{k} for this permutation")
    z0 = np.asarray(dec.z, dtype=np.int64) - 1
    probs = xi[np.ix_(z0, z0)]
    iu = np.triu_indices(n, k=1)
    y = np.zeros((n, n), dtype=np.uint8)
    y[iu] = (rng.random(iu[0].size) < probs[iu]).astype(np.uint8)
    y = y + y.T
    y1 = _flip(y, alpha, beta, rng)
    copy2 = _flip(y, alpha, beta, rng)
    p0 = np.asarray(pi.one_line, dtype=np.int64) - 1
    y2 = np.zeros_like(copy2)
    y2[np.ix_(p0, p0)] = copy2
    return pi, ParentMatrix(y), Graphs(y1, y2)
