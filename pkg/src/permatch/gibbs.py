"""Node-wise blocked Gibbs sampler for graph matching under the correlated SBM.

Each sweep visits the nodes in a fresh random order.  Visiting node v first
resamples the permutation inside the insertion set of "the current state
with v removed" (n candidates, one per seat), then refreshes v's row of the
latent parent network bit by bit; after the node loop the noise rates are
redrawn from their truncated-beta conditionals and, for the Dirichlet
family, the concentration parameter via the usual beta augmentation.

State is kept in plain numpy arrays owned by a single chain: the
permutation and its inverse as 0-based maps, the parent adjacency, the
cycle labels, and the block edge/non-edge counts which are maintained
incrementally (a from-scratch recomputation is asserted every
``check_every`` sweeps).  Tiny chains (n <= 6) run on plain-list mirrors
of that state with scalar arithmetic straight from the pair-likelihood
definitions; the vectorized path is checked against the scalar one, and
both against enumeration.
"""
from __future__ import annotations

import hashlib
import math
import time
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.special import betaln

from .csbm import (
    BlockCounts,
    ExponentTally,
    Graphs,
    Hyperparams,
    NoiseRates,
    ParentMatrix,
)
from .eperpf import (
    Dirichlet,
    EperpfFamily,
    log_partition_pred,
    sample_pa_gcrp,
    uniform_given_partition,
)
from .perm_core import Permutation
from .special import log_beta, log_inc_beta, sample_truncated_beta_fast

_SMALL_N = 6
_LGAMMA = math.lgamma


def _lbeta(a: float, b: float) -> float:
    return _LGAMMA(a) + _LGAMMA(b) - _LGAMMA(a + b)


@dataclass
class SamplerConfig:
    n_iter: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    family: EperpfFamily = field(default_factory=lambda: Dirichlet(theta=1.0))
    hyper: Hyperparams = field(default_factory=Hyperparams)
    update_theta: bool = True
    theta_shape: float = 1.0
    theta_rate: float = 1.0
    check_every: int = 50
    init: str = "sbm"
    init_sweeps: int = 200
    init_split: int = 3
    store_parent: bool = False
    row_update: str = "lower"  # "lower": u < v at v's visit; "full": all u != v

    def __post_init__(self):
        if self.n_iter < 1 or self.burn_in < 0 or self.thin < 1:
            raise ValueError("need n_iter >= 1, burn_in >= 0, thin >= 1")
        if self.burn_in >= self.n_iter:
            raise ValueError("burn_in must be smaller than n_iter")
        if self.init not in ("sbm", "sbm_split", "pa_gcrp", "identity"):
            raise ValueError(f"unknown init mode {self.init!r}")
        if self.row_update not in ("full", "lower"):
            raise ValueError(f"unknown row_update mode {self.row_update!r}")

    def echo(self) -> dict:
        fam = self.family
        d = {
            "n_iter": self.n_iter,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "seed": self.seed,
            "family": type(fam).__name__.lower(),
        }
        for key, val in vars(fam).items():
            d[f"family_{key}"] = val
        for key, val in vars(self.hyper).items():
            d[key] = val
        d.update(
            update_theta=self.update_theta,
            theta_shape=self.theta_shape,
            theta_rate=self.theta_rate,
            check_every=self.check_every,
            init=self.init,
            init_sweeps=self.init_sweeps,
            init_split=self.init_split,
            store_parent=self.store_parent,
            row_update=self.row_update,
        )
        return d

    def config_hash(self) -> str:
        blob = ";".join(f"{k}={v!r}" for k, v in sorted(self.echo().items()))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


class ChainState:
    """Mutable state of one chain; owned by a single sequential executor.

    For n <= 6 the authoritative copies are plain lists (``_pil``, ``_ml``,
    ...) and the numpy views are refreshed by :func:`_sync_arrays`; larger
    chains keep the numpy arrays authoritative.
    """

    def __init__(self, graphs: Graphs, config: SamplerConfig):
        self.graphs = graphs
        self.config = config
        self.family = config.family
        self.hyper = config.hyper
        n = graphs.n
        self.n = n
        self.tiny = n <= _SMALL_N
        self.y1 = graphs.y1
        self.y2 = graphs.y2
        self.y2f = graphs.y2.astype(np.float64)
        self._y1_list = graphs.y1.tolist()
        self._y2_list = graphs.y2.tolist()
        self._iu = np.triu_indices(n, k=1)
        hyp = config.hyper
        self._lden_alpha = log_inc_beta(0.5, hyp.a0, hyp.b0)
        self._lden_beta = log_inc_beta(0.5, hyp.a1, hyp.b1)
        self._lbeta_xi = log_beta(hyp.a_xi, hyp.b_xi)
        self._pred_cache: dict = {}
        # filled by the initializer
        self.pi0 = np.arange(n, dtype=np.int64)
        self.pi0_inv = np.arange(n, dtype=np.int64)
        self.parent = np.zeros((n, n), dtype=np.uint8)
        self.parentf = np.zeros((n, n), dtype=np.float64)
        self.z0 = np.zeros(n, dtype=np.int64)
        self.sizes = np.array([n], dtype=np.int64)
        self.m = np.zeros((1, 1), dtype=np.int64)
        self.mbar = np.zeros((1, 1), dtype=np.int64)
        self.alpha = 0.1
        self.beta = 0.1
        self._noise_logs()
        self.e = np.zeros((2, 2), dtype=np.int64)
        self.e_bar = np.zeros((2, 2), dtype=np.int64)
        self.log_joint = -math.inf
        if self.tiny:
            _make_mirrors(self)

    # -- spec-facing views -------------------------------------------------
    @property
    def pi(self) -> Permutation:
        return Permutation(tuple(int(x) + 1 for x in self.pi0))

    @property
    def pi_inv(self) -> Permutation:
        return Permutation(tuple(int(x) + 1 for x in self.pi0_inv))

    @property
    def parent_matrix(self) -> ParentMatrix:
        return ParentMatrix(self.parent.copy())

    @property
    def noise(self) -> NoiseRates:
        return NoiseRates(self.alpha, self.beta)

    @property
    def counts(self) -> BlockCounts:
        return BlockCounts(self.m.copy(), self.mbar.copy())

    @property
    def tallies(self) -> ExponentTally:
        return ExponentTally(self.e.copy(), self.e_bar.copy())

    @property
    def theta(self) -> float:
        return getattr(self.family, "theta", math.nan)

    @property
    def n_cycles(self) -> int:
        return len(self._sizes_l) if self.tiny else self.sizes.shape[0]

    def copy(self) -> "ChainState":
        other = ChainState.__new__(ChainState)
        other.__dict__.update(self.__dict__)
        for name in (
            "pi0",
            "pi0_inv",
            "parent",
            "parentf",
            "z0",
            "sizes",
            "m",
            "mbar",
            "e",
            "e_bar",
        ):
            setattr(other, name, getattr(self, name).copy())
        other._pred_cache = dict(self._pred_cache)
        if self.tiny:
            other._pil = list(self._pil)
            other._pinv = list(self._pinv)
            other._zl = list(self._zl)
            other._sizes_l = list(self._sizes_l)
            other._ml = [row[:] for row in self._ml]
            other._mbl = [row[:] for row in self._mbl]
            other._parent_l = [row[:] for row in self._parent_l]
        return other

    def _noise_logs(self):
        self.l11 = math.log1p(-self.beta)
        self.l10 = math.log(self.beta)
        self.l01 = math.log(self.alpha)
        self.l00 = math.log1p(-self.alpha)

    def _pred(self, sizes_tuple):
        w = self._pred_cache.get(sizes_tuple)
        if w is None:
            w = self.family.log_pred(sizes_tuple)
            self._pred_cache[sizes_tuple] = w
        return w


def _make_mirrors(state: ChainState):
    state._pil = state.pi0.tolist()
    state._pinv = state.pi0_inv.tolist()
    state._zl = state.z0.tolist()
    state._sizes_l = state.sizes.tolist()
    state._ml = state.m.tolist()
    state._mbl = state.mbar.tolist()
    state._parent_l = state.parent.tolist()


def _sync_arrays(state: ChainState):
    """Refresh the numpy views of a tiny chain from its list mirrors."""
    state.pi0 = np.asarray(state._pil, dtype=np.int64)
    state.pi0_inv = np.asarray(state._pinv, dtype=np.int64)
    state.z0 = np.asarray(state._zl, dtype=np.int64)
    state.sizes = np.asarray(state._sizes_l, dtype=np.int64)
    state.m = np.asarray(state._ml, dtype=np.int64)
    state.mbar = np.asarray(state._mbl, dtype=np.int64)
    state.parent = np.asarray(state._parent_l, dtype=np.uint8)
    state.parentf = state.parent.astype(np.float64)


def _z_canonical(pi0) -> np.ndarray:
    """Order-of-appearance cycle labels (1-based) of a 0-based map."""
    n = len(pi0)
    z = [0] * n
    label = 0
    for start in range(n):
        if z[start]:
            continue
        label += 1
        j = start
        while z[j] == 0:
            z[j] = label
            j = int(pi0[j])
    return np.asarray(z, dtype=np.int64)


def _counts_from_scratch(parent: np.ndarray, z0: np.ndarray, k: int):
    n = parent.shape[0]
    ind = np.zeros((n, k), dtype=np.int64)
    ind[np.arange(n), z0] = 1
    m = ind.T @ parent.astype(np.int64) @ ind
    np.fill_diagonal(m, np.diag(m) // 2)
    sizes = ind.sum(axis=0)
    pairs = np.outer(sizes, sizes)
    np.fill_diagonal(pairs, sizes * (sizes - 1) // 2)
    return sizes, m, pairs - m


def integrity_check(state: ChainState):
    """Cached block counts must equal a from-scratch recomputation exactly."""
    if state.tiny:
        _sync_arrays(state)
    k = state.sizes.shape[0]
    sizes, m, mbar = _counts_from_scratch(state.parent, state.z0, k)
    if not (
        np.array_equal(sizes, state.sizes)
        and np.array_equal(m, state.m)
        and np.array_equal(mbar, state.mbar)
    ):
        raise RuntimeError("incremental block counts drifted from recomputation")
    if not np.array_equal(state.pi0_inv[state.pi0], np.arange(state.n)):
        raise RuntimeError("permutation inverse out of sync")
    if not np.array_equal(state.parent, state.parentf.astype(np.uint8)) or np.any(
        np.diag(state.parent) != 0
    ):
        raise RuntimeError("parent copies out of sync")
    zc = _z_canonical(state.pi0)
    for lab in range(k):
        members = np.flatnonzero(state.z0 == lab)
        if np.unique(zc[members]).size != 1:
            raise RuntimeError("cycle labels out of sync with the permutation")


def _recompute_tallies(state: ChainState):
    n = state.n
    if state.tiny:
        parent = state._parent_l
        y1 = state._y1_list
        y2 = state._y2_list
        pi = state._pil
        e00 = e01 = e10 = e11 = 0
        b00 = b01 = b10 = b11 = 0
        for u in range(n):
            prow = parent[u]
            y1row = y1[u]
            y2row_p = y2[pi[u]]
            for w in range(u + 1, n):
                q = prow[w]
                o1 = y1row[w]
                o2 = y2row_p[pi[w]]
                if q:
                    e10 += o1
                    b10 += 1 - o1
                    e11 += o2
                    b11 += 1 - o2
                else:
                    e00 += 1 - o1
                    b00 += o1
                    e01 += 1 - o2
                    b01 += o2
        state.e = np.array([[e00, e01], [e10, e11]], dtype=np.int64)
        state.e_bar = np.array([[b00, b01], [b10, b11]], dtype=np.int64)
        return state.e, state.e_bar
    iu = state._iu
    gpi = state.y2[np.ix_(state.pi0, state.pi0)]
    yu = state.parent[iu].astype(np.int64)
    g1 = state.y1[iu].astype(np.int64)
    g2 = gpi[iu].astype(np.int64)
    total = yu.size
    ysum = int(yu.sum())
    for col, g in ((0, g1), (1, g2)):
        both = int((yu & g).sum())
        gsum = int(g.sum())
        state.e[1, col] = both
        state.e_bar[1, col] = ysum - both
        state.e_bar[0, col] = gsum - both
        state.e[0, col] = total - ysum - gsum + both
    return state.e, state.e_bar


@lru_cache(maxsize=65536)
def _linc_half(a: float, b: float) -> float:
    return log_inc_beta(0.5, a, b)


def _log_joint_cached(state: ChainState) -> float:
    hyper = state.hyper
    out = _linc_half(hyper.a0 + int(state.e_bar[0].sum()), hyper.b0 + int(state.e[0].sum()))
    out += _linc_half(hyper.a1 + int(state.e_bar[1].sum()), hyper.b1 + int(state.e[1].sum()))
    out -= state._lden_alpha + state._lden_beta
    if state.tiny:
        ml, mbl = state._ml, state._mbl
        k = len(state._sizes_l)
        a_xi, b_xi = hyper.a_xi, hyper.b_xi
        for j in range(k):
            mj = ml[j]
            mbj = mbl[j]
            for h in range(j, k):
                out += _lbeta(a_xi + mj[h], b_xi + mbj[h]) - state._lbeta_xi
        lengths = tuple(state._sizes_l)
    else:
        k = state.sizes.shape[0]
        vals = betaln(hyper.a_xi + state.m, hyper.b_xi + state.mbar)
        out += 0.5 * (float(vals.sum()) + float(np.trace(vals)))
        out -= (k * (k + 1) // 2) * state._lbeta_xi
        lengths = tuple(int(s) for s in state.sizes)
    out += state.family.log_eppf(lengths) - sum(_LGAMMA(s) for s in lengths)
    return out


# ---------------------------------------------------------------------------
# node move, vectorized path (n > 6)


def _detach_node(state: ChainState, v0: int):
    """Remove v from the permutation and the block counts.

    Returns (r, rbar) with r[h] the parent edges from v into cycle h of the
    reduced state.  Afterwards ``state.pi0`` encodes the reduced permutation
    (entries at v0 are dangling) and ``state.z0[v0]`` is -1.
    """
    jold = int(state.z0[v0])
    k = state.sizes.shape[0]
    yrow = state.parent[v0].astype(np.int64)
    r = np.bincount(state.z0, weights=yrow, minlength=k).astype(np.int64)
    cnt = state.sizes.copy()
    cnt[jold] -= 1
    rbar = cnt - r
    state.m[jold, :] -= r
    state.m[:, jold] -= r
    state.m[jold, jold] += r[jold]
    state.mbar[jold, :] -= rbar
    state.mbar[:, jold] -= rbar
    state.mbar[jold, jold] += rbar[jold]
    state.sizes[jold] -= 1
    state.z0[v0] = -1
    if state.sizes[jold] == 0:
        keep = np.arange(k) != jold
        state.sizes = state.sizes[keep]
        state.m = state.m[np.ix_(keep, keep)]
        state.mbar = state.mbar[np.ix_(keep, keep)]
        state.z0 = np.where(state.z0 > jold, state.z0 - 1, state.z0)
        r = r[keep]
        rbar = rbar[keep]
    pred = int(state.pi0_inv[v0])
    succ = int(state.pi0[v0])
    if pred != v0:
        state.pi0[pred] = succ
        state.pi0_inv[succ] = pred
    return r, rbar


def _attach_node(state: ChainState, v0: int, u_star: int, r, rbar):
    """Insert v taking the seat of u_star (u_star == v0 opens a new cycle)."""
    if u_star == v0:
        j = state.sizes.shape[0]
        state.z0[v0] = j
        state.sizes = np.append(state.sizes, 1)
        k_new = j + 1
        m = np.zeros((k_new, k_new), dtype=np.int64)
        mbar = np.zeros_like(m)
        m[:j, :j] = state.m
        mbar[:j, :j] = state.mbar
        m[j, :j] = r
        m[:j, j] = r
        mbar[j, :j] = rbar
        mbar[:j, j] = rbar
        state.m = m
        state.mbar = mbar
        state.pi0[v0] = v0
        state.pi0_inv[v0] = v0
        return
    j = int(state.z0[u_star])
    state.z0[v0] = j
    state.sizes[j] += 1
    state.m[j, :] += r
    state.m[:, j] += r
    state.m[j, j] -= r[j]
    state.mbar[j, :] += rbar
    state.mbar[:, j] += rbar
    state.mbar[j, j] -= rbar[j]
    w = int(state.pi0_inv[u_star])
    state.pi0[w] = v0
    state.pi0_inv[v0] = w
    state.pi0[v0] = u_star
    state.pi0_inv[u_star] = v0


def _candidate_log_weights(state: ChainState, v0: int):
    """Detach v and score all n insertion candidates (vectorized).

    After summing the likelihood contributions of the pairs that change when
    v takes the seat of c (with w the seat's current occupant), every term
    that is constant across candidates is dropped; what survives is

        score(c) = c11 * (Ma[c] + Yd[w] - cross[c] + g2[c, v] * parent[v, w])
                 + cY * (sum_d + g2[c, v] - g2[v, c])

    with c11 = l11 - l10 - l01 + l00 and cY = l01 - l00, plus the SBM and
    seating factors of the cycle joined.  Returns (logw, r, rbar) and leaves
    the state detached; the caller re-attaches.
    """
    r, rbar = _detach_node(state, v0)
    l11, l10, l01, l00 = state.l11, state.l10, state.l01, state.l00
    c11 = l11 - l10 - l01 + l00
    c_y = l01 - l00

    sigma_img = state.pi0.copy()
    sigma_img[v0] = v0
    M = state.y2f[:, sigma_img]
    M[:, v0] = 0.0
    a = state.parentf[v0]  # zero at v0 by the empty diagonal
    d = M[v0]
    sum_d = float(d.sum())

    Ma = M @ a
    Yd = state.parentf @ d
    w_idx = state.pi0_inv.copy()
    w_idx[v0] = v0
    cross = np.einsum("ij,ij->i", state.parentf[w_idx], M)
    gv_col = state.y2f[:, v0]
    gv_row = state.y2f[v0]

    logw = c11 * (Ma + Yd[w_idx] - cross + gv_col * a[w_idx]) + c_y * (
        sum_d + gv_col - gv_row
    )

    hyper = state.hyper
    base = betaln(hyper.a_xi + state.m, hyper.b_xi + state.mbar)
    joined = betaln(
        hyper.a_xi + state.m + r[None, :], hyper.b_xi + state.mbar + rbar[None, :]
    )
    f2 = (joined - base).sum(axis=1)
    f2_new = float(
        np.sum(betaln(hyper.a_xi + r, hyper.b_xi + rbar)) - r.shape[0] * state._lbeta_xi
    )
    pred = state._pred(tuple(int(s) for s in state.sizes))
    seat = np.asarray(pred.per_cycle, dtype=np.float64)
    cyc = state.z0.copy()
    cyc[v0] = 0
    logw += f2[cyc] + seat[cyc]
    logw[v0] = c11 * Ma[v0] + c_y * sum_d + f2_new + pred.new_cycle
    return logw, r, rbar


# ---------------------------------------------------------------------------
# node move, scalar path for tiny chains (list mirrors are authoritative)


def _detach_tiny(state: ChainState, v0: int):
    zl = state._zl
    sizes = state._sizes_l
    ml = state._ml
    mbl = state._mbl
    yrow = state._parent_l[v0]
    jold = zl[v0]
    k = len(sizes)
    r = [0] * k
    cnt = [0] * k
    n = state.n
    for u in range(n):
        if u == v0:
            continue
        h = zl[u]
        cnt[h] += 1
        r[h] += yrow[u]
    for h in range(k):
        rb = cnt[h] - r[h]
        if h == jold:
            ml[jold][jold] -= r[h]
            mbl[jold][jold] -= rb
        else:
            ml[jold][h] -= r[h]
            ml[h][jold] -= r[h]
            mbl[jold][h] -= rb
            mbl[h][jold] -= rb
    sizes[jold] -= 1
    zl[v0] = -1
    if sizes[jold] == 0:
        del sizes[jold]
        del ml[jold]
        del mbl[jold]
        for row in ml:
            del row[jold]
        for row in mbl:
            del row[jold]
        for u in range(n):
            if zl[u] > jold:
                zl[u] -= 1
        del r[jold]
        del cnt[jold]
    pil = state._pil
    pinv = state._pinv
    pred = pinv[v0]
    succ = pil[v0]
    if pred != v0:
        pil[pred] = succ
        pinv[succ] = pred
    rbar = [c - x for c, x in zip(cnt, r)]
    return r, rbar


def _attach_tiny(state: ChainState, v0: int, u_star: int, r, rbar):
    zl = state._zl
    sizes = state._sizes_l
    ml = state._ml
    mbl = state._mbl
    pil = state._pil
    pinv = state._pinv
    k = len(sizes)
    if u_star == v0:
        zl[v0] = k
        sizes.append(1)
        for h in range(k):
            ml[h].append(r[h])
            mbl[h].append(rbar[h])
        ml.append(r + [0])
        mbl.append(rbar + [0])
        pil[v0] = v0
        pinv[v0] = v0
        return
    j = zl[u_star]
    zl[v0] = j
    sizes[j] += 1
    for h in range(k):
        if h == j:
            ml[j][j] += r[j]
            mbl[j][j] += rbar[j]
        else:
            ml[j][h] += r[h]
            ml[h][j] += r[h]
            mbl[j][h] += rbar[h]
            mbl[h][j] += rbar[h]
    w = pinv[u_star]
    pil[w] = v0
    pinv[v0] = w
    pil[v0] = u_star
    pinv[u_star] = v0


def _candidate_log_weights_tiny(state: ChainState, v0: int):
    """Scalar twin of :func:`_candidate_log_weights` for tiny chains.

    Works straight from the pair likelihood definition instead of the
    aggregated count algebra, which doubles as a cross-check of the
    vectorized path (the two must agree after normalization).
    """
    n = state.n
    r, rbar = _detach_tiny(state, v0)
    k = len(r)
    l11, l10, l01, l00 = state.l11, state.l10, state.l01, state.l00
    hyper = state.hyper
    a_xi, b_xi = hyper.a_xi, hyper.b_xi

    pil = state._pil
    pinv = state._pinv
    zl = state._zl
    ml = state._ml
    mbl = state._mbl
    Y = state._parent_l
    G = state._y2_list
    others = [u for u in range(n) if u != v0]

    f2 = [0.0] * k
    for j in range(k):
        mj = ml[j]
        mbj = mbl[j]
        tot = 0.0
        for h in range(k):
            tot += _lbeta(a_xi + mj[h] + r[h], b_xi + mbj[h] + rbar[h])
            tot -= _lbeta(a_xi + mj[h], b_xi + mbj[h])
        f2[j] = tot
    f2_new = 0.0
    for h in range(k):
        f2_new += _lbeta(a_xi + r[h], b_xi + rbar[h]) - state._lbeta_xi

    pred = state._pred(tuple(state._sizes_l))

    def phi(x, y):
        if x:
            return l11 if y else l10
        return l01 if y else l00

    logw = [0.0] * n
    yv = Y[v0]
    gv = G[v0]
    for c in others:
        w = pinv[c]
        gc = G[c]
        yw = Y[w]
        s = phi(yv[w], gc[v0])
        for u in others:
            if u == w:
                continue
            img = pil[u]
            s += phi(yv[u], gc[img])
            s += phi(yw[u], gv[img]) - phi(yw[u], gc[img])
        j = zl[c]
        logw[c] = s + f2[j] + pred.per_cycle[j]
    s = 0.0
    for u in others:
        s += phi(yv[u], gv[pil[u]])
    logw[v0] = s + f2_new + pred.new_cycle
    return logw, r, rbar


def _node_move_tiny(state: ChainState, v0: int, rng):
    logw, r, rbar = _candidate_log_weights_tiny(state, v0)
    top = max(logw)
    probs = [math.exp(x - top) for x in logw]
    u = rng.random() * sum(probs)
    acc = 0.0
    u_star = state.n - 1
    for c, p in enumerate(probs):
        acc += p
        if u < acc:
            u_star = c
            break
    _attach_tiny(state, v0, u_star, r, rbar)


def node_move(state: ChainState, v: int, rng, sync: bool = True) -> ChainState:
    """Gibbs-resample the permutation over the insertion set of node v."""
    v0 = v - 1
    if state.tiny:
        _node_move_tiny(state, v0, rng)
        if sync:
            _sync_arrays(state)
        return state
    logw, r, rbar = _candidate_log_weights(state, v0)
    logw -= logw.max()
    probs = np.exp(logw)
    cum = np.cumsum(probs)
    u_star = int(np.searchsorted(cum, rng.random() * cum[-1]))
    u_star = min(u_star, state.n - 1)
    _attach_node(state, v0, u_star, r, rbar)
    return state


def node_move_probabilities(state: ChainState, v: int):
    """Per-candidate probabilities of the node move (diagnostics and tests).

    Returns (u_stars, probs) with 1-based seat owners; the candidate equal
    to v is the new singleton cycle.  The chain state is not modified.
    """
    probe = state.copy()
    if state.tiny:
        logw, _, _ = _candidate_log_weights_tiny(probe, v - 1)
        logw = np.asarray(logw)
    else:
        logw, _, _ = _candidate_log_weights(probe, v - 1)
    logw -= logw.max()
    p = np.exp(logw)
    p /= p.sum()
    return np.arange(1, state.n + 1), p


# ---------------------------------------------------------------------------
# parent row and scalar updates


def _parent_row_tiny(state: ChainState, v0: int, rng, upto: int):
    zl = state._zl
    jv = zl[v0]
    sizes = state._sizes_l
    ml = state._ml
    mbl = state._mbl
    parent_l = state._parent_l
    yrow = parent_l[v0]
    k = len(sizes)
    r = [0] * k
    cnt = [0] * k
    for u in range(upto):
        if u == v0:
            continue
        h = zl[u]
        cnt[h] += 1
        r[h] += yrow[u]
    mrow = [ml[jv][h] - r[h] for h in range(k)]
    mbrow = [mbl[jv][h] - (cnt[h] - r[h]) for h in range(k)]

    pil = state._pil
    y1row = state._y1_list[v0]
    y2row = state._y2_list[pil[v0]]
    d11 = state.l11 - state.l01
    d10 = state.l10 - state.l00
    a_xi, b_xi = state.hyper.a_xi, state.hyper.b_xi
    rand = rng.random(upto).tolist() if upto else []
    log = math.log
    exp = math.exp
    for u0 in range(upto):
        if u0 == v0:
            continue
        h = zl[u0]
        s = y1row[u0] + y2row[pil[u0]]
        logit = s * d11 + (2 - s) * d10 + log(a_xi + mrow[h]) - log(b_xi + mbrow[h])
        if rand[u0] * (1.0 + exp(-logit)) < 1.0:
            bit = 1
            mrow[h] += 1
        else:
            bit = 0
            mbrow[h] += 1
        yrow[u0] = bit
        parent_l[u0][v0] = bit
    for h in range(k):
        ml[jv][h] = mrow[h]
        ml[h][jv] = mrow[h]
        mbl[jv][h] = mbrow[h]
        mbl[h][jv] = mbrow[h]


def parent_row_update(
    state: ChainState, v: int, rng, sync: bool = True, upto: int | None = None
) -> ChainState:
    """Resample the latent parent bits y[v, u] for u < upto, ascending in u.

    Each bit's conditional uses the block counts with the interactions of v
    against the not-yet-visited u' removed, so earlier bits in the row feed
    the later ones; bits at u >= upto stay fixed and conditioned on.  The
    default refreshes the whole row (upto = n).
    """
    v0 = v - 1
    if upto is None:
        upto = state.n
    if state.tiny:
        _parent_row_tiny(state, v0, rng, upto)
        if sync:
            _sync_arrays(state)
        return state
    jv = int(state.z0[v0])
    k = state.sizes.shape[0]
    yrow = state.parent[v0].astype(np.int64)
    r = np.bincount(state.z0[:upto], weights=yrow[:upto], minlength=k)
    cnt = np.bincount(state.z0[:upto], minlength=k).astype(np.float64)
    if v0 < upto:
        cnt[jv] -= 1.0
    rbar = cnt - r
    mrow = (state.m[jv] - r).tolist()
    mbrow = (state.mbar[jv] - rbar).tolist()

    s = state.y1[v0].astype(np.float64) + state.y2f[state.pi0[v0], state.pi0]
    ln_diff = (
        s * (state.l11 - state.l01) + (2.0 - s) * (state.l10 - state.l00)
    ).tolist()
    zl = state.z0.tolist()
    rand = rng.random(upto).tolist() if upto else []
    bits = yrow.tolist()
    a_xi, b_xi = state.hyper.a_xi, state.hyper.b_xi
    log = math.log
    exp = math.exp
    for u0 in range(upto):
        if u0 == v0:
            continue
        h = zl[u0]
        logit = ln_diff[u0] + log(a_xi + mrow[h]) - log(b_xi + mbrow[h])
        if rand[u0] * (1.0 + exp(-logit)) < 1.0:
            bits[u0] = 1
            mrow[h] += 1.0
        else:
            bits[u0] = 0
            mbrow[h] += 1.0
    row = np.asarray(bits, dtype=np.int64)
    state.m[jv, :] = mrow
    state.m[:, jv] = mrow
    state.mbar[jv, :] = mbrow
    state.mbar[:, jv] = mbrow
    state.parent[v0, :] = row
    state.parent[:, v0] = row
    state.parentf[v0, :] = row
    state.parentf[:, v0] = row
    return state


def noise_update(state: ChainState, rng) -> ChainState:
    """Redraw the noise rates from their truncated-beta full conditionals."""
    hyper = state.hyper
    _recompute_tallies(state)
    disc0 = int(state.e_bar[0].sum())
    conc0 = int(state.e[0].sum())
    disc1 = int(state.e_bar[1].sum())
    conc1 = int(state.e[1].sum())
    state.alpha = sample_truncated_beta_fast(hyper.a0 + disc0, hyper.b0 + conc0, rng)
    state.beta = sample_truncated_beta_fast(hyper.a1 + disc1, hyper.b1 + conc1, rng)
    state._noise_logs()
    return state


def theta_update(state: ChainState, rng) -> ChainState:
    """Beta-augmented Gibbs step for the Dirichlet concentration parameter."""
    if not isinstance(state.family, Dirichlet):
        warnings.warn(
            "theta_update applies to the Dirichlet family only; skipping",
            stacklevel=2,
        )
        return state
    n = state.n
    k = state.n_cycles
    shape, rate = state.config.theta_shape, state.config.theta_rate
    theta = state.family.theta
    eta = rng.beta(theta + 1.0, n)
    rate_post = rate - math.log(eta)
    odds = (shape + k - 1.0) / (n * rate_post)
    if rng.random() < odds / (1.0 + odds):
        theta = rng.gamma(shape + k, 1.0 / rate_post)
    else:
        theta = rng.gamma(shape + k - 1.0, 1.0 / rate_post)
    state.family = replace(state.family, theta=theta)
    state._pred_cache.clear()
    return state


# ---------------------------------------------------------------------------
# initialization


def _collapsed_sbm_partition(
    y: np.ndarray, family: EperpfFamily, hyper: Hyperparams, sweeps: int, rng
) -> np.ndarray:
    """Collapsed Gibbs over partitions for a plain SBM on one network.

    Beta-binomial marginal likelihood, block predictive from the same
    partition law that drives the permutation prior.  Returns 1-based
    order-of-appearance labels of the last state.
    """
    n = y.shape[0]
    yf = y.astype(np.float64)
    z = np.full(n, -1, dtype=np.int64)
    sizes: list[int] = []
    m = np.zeros((0, 0), dtype=np.float64)
    mbar = np.zeros((0, 0), dtype=np.float64)
    a_xi, b_xi = hyper.a_xi, hyper.b_xi
    lbeta_xi = _lbeta(a_xi, b_xi)

    def links_to_blocks(u0):
        k = len(sizes)
        live = z >= 0
        live[u0] = False
        r = np.bincount(z[live], weights=yf[u0, live], minlength=k)
        cnt = np.bincount(z[live], minlength=k).astype(np.float64)
        return r, cnt - r

    def weights_for(u0):
        k = len(sizes)
        r, rbar = links_to_blocks(u0)
        per_block, new_block = log_partition_pred(family, sizes or ())
        lw = np.empty(k + 1)
        if k:
            joined = betaln(a_xi + m + r[None, :], b_xi + mbar + rbar[None, :])
            base = betaln(a_xi + m, b_xi + mbar)
            lw[:k] = per_block + (joined - base).sum(axis=1)
        lw[k] = new_block + float(np.sum(betaln(a_xi + r, b_xi + rbar)) - k * lbeta_xi)
        return lw, r, rbar

    def attach(u0, j, r, rbar):
        nonlocal m, mbar
        k = len(sizes)
        if j == k:
            sizes.append(0)
            m2 = np.zeros((k + 1, k + 1))
            mb2 = np.zeros_like(m2)
            m2[:k, :k] = m
            mb2[:k, :k] = mbar
            m2[k, :k] = r
            m2[:k, k] = r
            mb2[k, :k] = rbar
            mb2[:k, k] = rbar
            m, mbar = m2, mb2
        else:
            m[j, :] += r
            m[:, j] += r
            m[j, j] -= r[j]
            mbar[j, :] += rbar
            mbar[:, j] += rbar
            mbar[j, j] -= rbar[j]
        sizes[j] += 1
        z[u0] = j

    def detach(u0):
        nonlocal m, mbar
        j = int(z[u0])
        r, rbar = links_to_blocks(u0)
        m[j, :] -= r
        m[:, j] -= r
        m[j, j] += r[j]
        mbar[j, :] -= rbar
        mbar[:, j] -= rbar
        mbar[j, j] += rbar[j]
        sizes[j] -= 1
        z[u0] = -1
        if sizes[j] == 0:
            k = len(sizes)
            keep = [h for h in range(k) if h != j]
            m = m[np.ix_(keep, keep)]
            mbar = mbar[np.ix_(keep, keep)]
            del sizes[j]
            z[z > j] -= 1

    def gibbs_pick(u0):
        lw, r, rbar = weights_for(u0)
        lw -= lw.max()
        p = np.exp(lw)
        cum = np.cumsum(p)
        j = int(np.searchsorted(cum, rng.random() * cum[-1]))
        attach(u0, min(j, len(sizes)), r, rbar)

    for u0 in range(n):
        gibbs_pick(u0)
    for _ in range(sweeps):
        for u0 in rng.permutation(n):
            detach(int(u0))
            gibbs_pick(int(u0))
    # greedy polish: argmax reassignments plus block merges until a full
    # round changes nothing, so the returned partition is a local mode
    # rather than a random draw
    def canon(labels):
        remap: dict[int, int] = {}
        return tuple(remap.setdefault(int(t), len(remap)) for t in labels)

    def score(mat, mbat, szs):
        k = len(szs)
        vals = betaln(a_xi + mat, b_xi + mbat)
        tri = 0.5 * (float(vals.sum()) + float(np.trace(vals)))
        return tri - (k * (k + 1) // 2) * lbeta_xi + family.log_eppf(tuple(szs))

    def merge_pass():
        nonlocal m, mbar
        merged_any = False
        while len(sizes) > 1:
            k = len(sizes)
            base = score(m, mbar, sizes)
            best = (1e-9, None)
            for a in range(k):
                for b in range(a + 1, k):
                    m2 = m.copy()
                    mb2 = mbar.copy()
                    for mat in (m2, mb2):
                        aa, bb, ab = mat[a, a], mat[b, b], mat[a, b]
                        mat[a, :] += mat[b, :]
                        mat[:, a] += mat[:, b]
                        mat[a, a] = aa + bb + ab
                    keep = [h for h in range(k) if h != b]
                    m2 = m2[np.ix_(keep, keep)]
                    mb2 = mb2[np.ix_(keep, keep)]
                    s2 = sizes[:a] + [sizes[a] + sizes[b]] + sizes[a + 1 :]
                    del s2[b]
                    delta = score(m2, mb2, s2) - base
                    if delta > best[0]:
                        best = (delta, (a, b, m2, mb2, s2))
            if best[1] is None:
                break
            a, b, m2, mb2, s2 = best[1]
            m, mbar = m2, mb2
            sizes[:] = s2
            z[z == b] = a
            z[z > b] -= 1
            merged_any = True
        return merged_any

    for _ in range(50):
        prev = canon(z)
        for u0 in rng.permutation(n):
            u0 = int(u0)
            detach(u0)
            lw, r, rbar = weights_for(u0)
            attach(u0, int(np.argmax(lw)), r, rbar)
        if not merge_pass() and canon(z) == prev:
            break
    remap: dict[int, int] = {}
    out = np.empty(n, dtype=np.int64)
    for i, lab in enumerate(z):
        out[i] = remap.setdefault(int(lab), len(remap) + 1)
    return out


def _split_blocks(z: np.ndarray, max_size: int, rng) -> np.ndarray:
    """Refine a partition by chopping each block into pieces of bounded size.

    Starting the chain from small cycles inside the fitted blocks lets the
    alignment coalesce bottom-up instead of having to rearrange one large
    randomly seated cycle per block.
    """
    n = z.shape[0]
    out = np.zeros(n, dtype=np.int64)
    next_label = 1
    for lab in range(1, int(z.max()) + 1):
        members = np.flatnonzero(z == lab)
        members = members[rng.permutation(members.size)]
        for start in range(0, members.size, max_size):
            for u in members[start : start + max_size]:
                out[u] = next_label
            next_label += 1
    remap: dict[int, int] = {}
    return np.asarray(
        [remap.setdefault(int(t), len(remap) + 1) for t in out], dtype=np.int64
    )


def init_state(graphs: Graphs, config: SamplerConfig, rng) -> ChainState:
    """Initialize the chain: partition fit on the first network, a uniform
    permutation over it, parent bits from the averaged observations, and
    noise rates from their priors."""
    state = ChainState(graphs, config)
    n = graphs.n
    if config.init == "identity":
        pi = Permutation(tuple(range(1, n + 1)))
    elif config.init == "pa_gcrp":
        pi = sample_pa_gcrp(config.family, n, rng)
    else:
        z = _collapsed_sbm_partition(
            graphs.y1, config.family, config.hyper, config.init_sweeps, rng
        )
        if config.init == "sbm_split":
            z = _split_blocks(z, config.init_split, rng)
        pi = uniform_given_partition(tuple(int(t) for t in z), rng)
    state.pi0 = np.asarray(pi.one_line, dtype=np.int64) - 1
    inv = np.empty(n, dtype=np.int64)
    inv[state.pi0] = np.arange(n)
    state.pi0_inv = inv

    y2_aligned = graphs.y2[np.ix_(state.pi0, state.pi0)]
    probs = (graphs.y1.astype(np.float64) + y2_aligned) / 2.0
    iu = state._iu
    bits = (rng.random(iu[0].size) < probs[iu]).astype(np.uint8)
    parent = np.zeros((n, n), dtype=np.uint8)
    parent[iu] = bits
    state.parent = parent + parent.T
    state.parentf = state.parent.astype(np.float64)

    state.alpha = sample_truncated_beta_fast(config.hyper.a0, config.hyper.b0, rng)
    state.beta = sample_truncated_beta_fast(config.hyper.a1, config.hyper.b1, rng)
    state._noise_logs()

    state.z0 = _z_canonical(state.pi0) - 1
    k = int(state.z0.max()) + 1
    state.sizes, state.m, state.mbar = _counts_from_scratch(state.parent, state.z0, k)
    if state.tiny:
        _make_mirrors(state)
    _recompute_tallies(state)
    state.log_joint = _log_joint_cached(state)
    return state


# ---------------------------------------------------------------------------
# archive and driver


@dataclass
class DrawArchive:
    """Thinned posterior draws plus the per-sweep scalar trace."""

    n: int
    pi: np.ndarray  # (S, n) one-line rows, 1-based
    z: np.ndarray  # (S, n) order-of-appearance labels
    alpha: np.ndarray
    beta: np.ndarray
    theta: np.ndarray
    log_joint: np.ndarray
    parent_bits: Optional[np.ndarray]  # (S, n(n-1)/2) upper triangle or None
    trace: dict
    seed: int
    config_echo: dict
    config_hash: str
    wall_time: float

    @property
    def n_draws(self) -> int:
        return self.pi.shape[0]

    def save(self, out_dir):
        import os

        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "pi.draws"), "w") as fh:
            for row in self.pi:
                fh.write(" ".join(str(int(x)) for x in row) + "\n")
        with open(os.path.join(out_dir, "scalars.csv"), "w") as fh:
            fh.write("iter,alpha,beta,theta,log_joint,k\n")
            tr = self.trace
            for i in range(len(tr["alpha"])):
                fh.write(
                    f"{i + 1},{float(tr['alpha'][i])!r},{float(tr['beta'][i])!r},"
                    f"{float(tr['theta'][i])!r},{float(tr['log_joint'][i])!r},"
                    f"{int(tr['k'][i])}\n"
                )
        if self.parent_bits is not None:
            with open(os.path.join(out_dir, "parent.draws"), "w") as fh:
                for row in self.parent_bits:
                    fh.write("".join(str(int(b)) for b in row) + "\n")
        with open(os.path.join(out_dir, "meta"), "w") as fh:
            fh.write(f"seed = {self.seed}\n")
            fh.write(f"config_hash = {self.config_hash}\n")
            fh.write(f"n = {self.n}\n")
            fh.write(f"n_draws = {self.n_draws}\n")
            for key, val in sorted(self.config_echo.items()):
                fh.write(f"config.{key} = {val!r}\n")
        # wall time is run-dependent; kept out of the reproducible archive
        with open(os.path.join(out_dir, "timing"), "w") as fh:
            fh.write(f"wall_time_seconds = {self.wall_time:.3f}\n")

    @staticmethod
    def load_pi_draws(path) -> np.ndarray:
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rows.append([int(t) for t in line.split()])
        if not rows:
            raise ValueError(f"no draws found in {path}")
        return np.asarray(rows, dtype=np.int64)


def run(graphs: Graphs, config: SamplerConfig, rng=None) -> DrawArchive:
    """Run the full sampler and archive the thinned post-burn-in draws."""
    t0 = time.perf_counter()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    state = init_state(graphs, config, rng)
    n = graphs.n
    n_draws = (config.n_iter - config.burn_in) // config.thin
    iu = state._iu
    draws_pi = np.zeros((n_draws, n), dtype=np.int64)
    draws_z = np.zeros((n_draws, n), dtype=np.int64)
    draws_alpha = np.zeros(n_draws)
    draws_beta = np.zeros(n_draws)
    draws_theta = np.zeros(n_draws)
    draws_lj = np.zeros(n_draws)
    parent_bits = (
        np.zeros((n_draws, iu[0].size), dtype=np.uint8) if config.store_parent else None
    )
    trace = {
        key: np.zeros(config.n_iter) for key in ("alpha", "beta", "theta", "log_joint")
    }
    trace["k"] = np.zeros(config.n_iter, dtype=np.int64)
    update_theta = config.update_theta and isinstance(state.family, Dirichlet)
    tiny = state.tiny

    lower = config.row_update == "lower"
    d = 0
    for sweep in range(1, config.n_iter + 1):
        for v0 in rng.permutation(n):
            v = int(v0) + 1
            node_move(state, v, rng, sync=False)
            parent_row_update(state, v, rng, sync=False, upto=v - 1 if lower else None)
        noise_update(state, rng)
        if update_theta:
            theta_update(state, rng)
        lj = _log_joint_cached(state)
        state.log_joint = lj
        if not math.isfinite(lj):
            raise RuntimeError(f"log joint not finite at sweep {sweep}")
        trace["alpha"][sweep - 1] = state.alpha
        trace["beta"][sweep - 1] = state.beta
        trace["theta"][sweep - 1] = state.theta
        trace["log_joint"][sweep - 1] = lj
        trace["k"][sweep - 1] = state.n_cycles
        if sweep % config.check_every == 0:
            integrity_check(state)
        if sweep > config.burn_in and (sweep - config.burn_in) % config.thin == 0:
            if tiny:
                pil = state._pil
                draws_pi[d] = [x + 1 for x in pil]
                draws_z[d] = _z_canonical(pil)
                if parent_bits is not None:
                    parent_bits[d] = [
                        state._parent_l[u][w] for u, w in zip(*iu)
                    ]
            else:
                draws_pi[d] = state.pi0 + 1
                draws_z[d] = _z_canonical(state.pi0)
                if parent_bits is not None:
                    parent_bits[d] = state.parent[iu]
            draws_alpha[d] = state.alpha
            draws_beta[d] = state.beta
            draws_theta[d] = state.theta
            draws_lj[d] = lj
            d += 1
    integrity_check(state)
    return DrawArchive(
        n=n,
        pi=draws_pi,
        z=draws_z,
        alpha=draws_alpha,
        beta=draws_beta,
        theta=draws_theta,
        log_joint=draws_lj,
        parent_bits=parent_bits,
        trace=trace,
        seed=config.seed,
        config_echo=config.echo(),
        config_hash=config.config_hash(),
        wall_time=time.perf_counter() - t0,
    )
