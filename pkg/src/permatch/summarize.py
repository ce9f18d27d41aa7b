"""Posterior point estimation over permutations and evaluation metrics.

The point estimator greedily minimizes the sample-averaged Cayley distance
in three phases: sequential initialization against pruned draws, node-wise
sweetening passes, and zealous cycle rebuilds.  Moves are accepted only on
strict improvement; candidates are checked most-frequent match first.

Two candidate evaluation strategies produce identical decisions: a "scan"
that walks the draws one by one (optionally stopping early once the running
sum can no longer win) and a vectorized "batch" path that updates the
composed cycle count of every candidate in O(1) per draw from the cycle
labels of the detached composition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .csbm import Graphs, ParentMatrix
from .perm_core import Permutation


class PosteriorPermSample:
    """A sample of permutations of common size, stored as one-line rows."""

    def __init__(self, draws):
        if isinstance(draws, np.ndarray):
            rows = np.asarray(draws, dtype=np.int64)
        else:
            draws = list(draws)
            if not draws:
                raise ValueError("empty posterior sample")
            if isinstance(draws[0], Permutation):
                rows = np.asarray([p.one_line for p in draws], dtype=np.int64)
            else:
                rows = np.asarray(draws, dtype=np.int64)
        if rows.ndim != 2 or rows.shape[0] == 0:
            raise ValueError("draws must be a non-empty (S, n) array")
        n = rows.shape[1]
        if not np.all(np.sort(rows, axis=1) == np.arange(1, n + 1)):
            raise ValueError("every draw must be a permutation of 1..n")
        self.rows = rows
        self.n = n
        self.size = rows.shape[0]
        self.images0 = rows - 1
        inv = np.empty_like(self.images0)
        np.put_along_axis(inv, self.images0, np.arange(n)[None, :], axis=1)
        self.inverses0 = inv

    def permutations(self) -> list[Permutation]:
        return [Permutation(tuple(int(x) for x in row)) for row in self.rows]


@dataclass
class SummaryConfig:
    n_zeal: int = 10
    n_runs: int = 8
    seed: int = 0
    fast_mode: bool = False
    early_stopping: bool = True
    eval_mode: str = "batch"  # "batch" or "scan"

    def __post_init__(self):
        if self.n_zeal < 0 or self.n_runs < 1:
            raise ValueError("need n_zeal >= 0 and n_runs >= 1")
        if self.eval_mode not in ("batch", "scan"):
            raise ValueError(f"unknown eval_mode {self.eval_mode!r}")


def expected_cayley(
    sample: PosteriorPermSample, sigma: Permutation, budget: Optional[float] = None
) -> float:
    """Average Cayley distance from the draws to sigma.

    With a budget, returns inf as soon as the running sum exceeds
    S * budget (the candidate can no longer beat the incumbent).
    """
    if sigma.n != sample.n:
        raise ValueError(f"size mismatch: {sigma.n} vs {sample.n}")
    n = sample.n
    sig_inv = np.empty(n, dtype=np.int64)
    sig_inv[np.asarray(sigma.one_line) - 1] = np.arange(n)
    cap = None if budget is None else budget * sample.size
    running = 0
    for s in range(sample.size):
        row = sample.images0[s]
        seen = 0
        k = 0
        for start in range(n):
            if seen >> start & 1:
                continue
            k += 1
            j = start
            while not seen >> j & 1:
                seen |= 1 << j
                j = sig_inv[row[j]]
        running += n - k
        if cap is not None and running > cap:
            return math.inf
    return running / sample.size


# ---------------------------------------------------------------------------
# search machinery


class _SampleView:
    """The draws as successor/predecessor maps supporting node pruning."""

    def __init__(self, sample: PosteriorPermSample):
        self.succ = sample.images0.copy()
        self.pred = sample.inverses0.copy()
        self.alive = np.ones(sample.n, dtype=bool)
        self.size = sample.size
        self.n = sample.n
        self._rows = np.arange(sample.size)
        self._log: list[tuple[int, np.ndarray, np.ndarray]] = []

    def delete(self, w: int):
        p = self.pred[:, w].copy()
        q = self.succ[:, w].copy()
        self.succ[self._rows, p] = q
        self.pred[self._rows, q] = p
        self.alive[w] = False
        self._log.append((w, p, q))

    def undo(self):
        w, p, q = self._log.pop()
        self.succ[self._rows, p] = w
        self.pred[self._rows, q] = w
        self.succ[:, w] = q
        self.pred[:, w] = p
        self.alive[w] = True
        return w


class _Estimate:
    """The working point estimate as a successor map on a support mask."""

    def __init__(self, n: int):
        self.succ = np.arange(n, dtype=np.int64)
        self.pred = np.arange(n, dtype=np.int64)
        self.alive = np.zeros(n, dtype=bool)

    def copy(self):
        other = _Estimate(self.succ.shape[0])
        other.succ = self.succ.copy()
        other.pred = self.pred.copy()
        other.alive = self.alive.copy()
        return other

    def add_fixed(self, w: int):
        self.succ[w] = w
        self.pred[w] = w
        self.alive[w] = True

    def insert(self, v: int, u_star: int):
        if u_star == v:
            self.add_fixed(v)
            return
        w = self.pred[u_star]
        self.succ[w] = v
        self.pred[v] = w
        self.succ[v] = u_star
        self.pred[u_star] = v
        self.alive[v] = True

    def delete(self, v: int):
        p = self.pred[v]
        q = self.succ[v]
        self.succ[p] = q
        self.pred[q] = p
        self.alive[v] = False

    def cycles(self) -> list[list[int]]:
        seen = np.zeros(self.succ.shape[0], dtype=bool)
        out = []
        for start in np.flatnonzero(self.alive):
            if seen[start]:
                continue
            cyc = []
            j = int(start)
            while not seen[j]:
                seen[j] = True
                cyc.append(j)
                j = int(self.succ[j])
            out.append(cyc)
        return out

    def to_permutation(self) -> Permutation:
        if not self.alive.all():
            raise ValueError("estimate does not cover every node")
        return Permutation(tuple(int(x) + 1 for x in self.succ))


def _cycle_labels(succ: np.ndarray, alive: np.ndarray) -> np.ndarray:
    """Minimum-element labels of each row's cycles via pointer doubling."""
    S, n = succ.shape
    f = np.where(alive[None, :], succ, np.arange(n)[None, :])
    lab = np.broadcast_to(np.arange(n), (S, n)).copy()
    rounds = max(1, int(math.ceil(math.log2(max(n, 2)))) + 1)
    for _ in range(rounds):
        lab = np.minimum(lab, np.take_along_axis(lab, f, axis=1))
        f = np.take_along_axis(f, f, axis=1)
    return lab


def _batch_candidate_f(view: _SampleView, est: _Estimate, v: int, cands: np.ndarray):
    """Expected pruned Cayley distance of every insertion candidate.

    ``view`` must hold the draws pruned to est's support plus v; ``est``
    holds the estimate without v.  For each draw the composed cycle count
    of a candidate differs from that of the detached composition by at most
    one, decided by cycle co-membership of two tracked positions.
    """
    t = int(est.alive.sum()) + 1
    a = view.pred[:, v].copy()  # draw preimage of v (may be v itself)
    sv = view.succ[:, v].copy()  # draw image of v
    pred_cands = view.pred[:, cands]  # (S, C) draw preimages of each seat
    view.delete(v)
    alive_wo_v = view.alive.copy()
    msucc = est.pred[view.succ]
    lab = _cycle_labels(msucc, alive_wo_v)
    k_m = (
        (lab == np.arange(view.n)[None, :]) & alive_wo_v[None, :]
    ).sum(axis=1, dtype=np.int64)
    view.undo()

    rows = np.arange(view.size)
    lab_a = lab[rows, a]
    fixed_in_draw = a == v  # draw fixes v: splice, count unchanged
    out = np.empty(cands.shape[0])
    for idx, u_star in enumerate(cands):
        if u_star == v:
            k_c = k_m + (sv == v)
        else:
            b = pred_cands[:, idx]
            delta = np.where(lab_a == lab[rows, b], 1, -1)
            k_c = k_m + np.where(fixed_in_draw, 0, np.where(b == v, 1, delta))
        out[idx] = (t * view.size - int(k_c.sum())) / view.size
    return out


def _scan_candidate_f(
    view: _SampleView,
    est: _Estimate,
    v: int,
    cands: np.ndarray,
    budget: float,
    early_stopping: bool,
):
    """Literal per-draw evaluation of each candidate, mirroring the batch path.

    Maintains its own running budget: after any candidate improves, later
    ones are cut short against the new best value.
    """
    members = np.flatnonzero(view.alive)
    t = members.shape[0]
    pos = {int(w): i for i, w in enumerate(members)}
    out = np.empty(cands.shape[0])
    best = budget
    for idx, u_star in enumerate(cands):
        # candidate successor map on the support
        cand_succ = est.succ.copy()
        if u_star == v:
            cand_succ[v] = v
        else:
            w = est.pred[u_star]
            cand_succ[w] = v
            cand_succ[v] = u_star
        cand_inv = np.empty_like(cand_succ)
        cand_inv[cand_succ[members]] = members
        cap = None if (not early_stopping or math.isinf(best)) else best * view.size
        running = 0
        exceeded = False
        for s in range(view.size):
            row = view.succ[s]
            seen = np.zeros(t, dtype=bool)
            k = 0
            for i in range(t):
                if seen[i]:
                    continue
                k += 1
                j = int(members[i])
                while not seen[pos[j]]:
                    seen[pos[j]] = True
                    j = int(cand_inv[row[j]])
            running += t - k
            if cap is not None and running > cap:
                exceeded = True
                break
        out[idx] = math.inf if exceeded else running / view.size
        if out[idx] < best:
            best = out[idx]
    return out


def _expected_full(view: _SampleView, est: _Estimate) -> float:
    comp = est.pred[view.succ]
    lab = _cycle_labels(comp, view.alive)
    k = ((lab == np.arange(view.n)[None, :]) & view.alive[None, :]).sum(
        axis=1, dtype=np.int64
    )
    t = int(view.alive.sum())
    return (t * view.size - int(k.sum())) / view.size


def _order_candidates(view: _SampleView, v: int, cands: list[int]) -> np.ndarray:
    """Most frequent draw image of v first; ties keep seat order (v last)."""
    freq = np.bincount(view.succ[:, v], minlength=view.n)
    arr = np.asarray(cands, dtype=np.int64)
    order = np.argsort(-freq[arr], kind="stable")
    return arr[order]


def _candidates_unconstrained(est: _Estimate, v: int) -> list[int]:
    return [int(w) for w in np.flatnonzero(est.alive)] + [v]


def _make_block_filter(z_hat: np.ndarray) -> Callable[[_Estimate, int], list[int]]:
    def candidates(est: _Estimate, v: int) -> list[int]:
        mates = np.flatnonzero((z_hat == z_hat[v]) & est.alive)
        if mates.size == 0:
            return [v]
        return [int(w) for w in mates]

    return candidates


class _Searcher:
    def __init__(self, sample, config: SummaryConfig, candidates_for, trace=None):
        self.sample = sample
        self.config = config
        self.candidates_for = candidates_for
        self.trace = trace

    def _eval(self, view, est, v, cands, budget):
        if self.config.eval_mode == "batch":
            return _batch_candidate_f(view, est, v, cands)
        return _scan_candidate_f(view, est, v, cands, budget, self.config.early_stopping)

    def _best_insert(self, view, est, v, budget, phase):
        """Insert v at the best seat strictly beating the budget; returns new best."""
        cands = _order_candidates(view, v, self.candidates_for(est, v))
        f_vals = self._eval(view, est, v, cands, budget)
        idx = int(np.argmin(f_vals))
        if f_vals[idx] < budget:
            chosen = int(cands[idx])
            best = float(f_vals[idx])
        else:
            chosen = None
            best = budget
        if chosen is not None:
            est.insert(v, chosen)
            if self.trace is not None:
                self.trace.append((phase, v + 1, chosen + 1, best))
        return chosen, best

    def _sequential_build(self, view, est, order, phase):
        """Add ``order`` (reversed) one node at a time against pruned draws."""
        for w in order[:-1]:
            view.delete(int(w))
        est.add_fixed(int(order[-1]))
        if self.trace is not None:
            self.trace.append((phase, int(order[-1]) + 1, int(order[-1]) + 1, 0.0))
        for i in range(len(order) - 2, -1, -1):
            w = int(order[i])
            view.undo()
            chosen, _ = self._best_insert(view, est, w, math.inf, phase)
            if chosen is None:  # strict search against inf always accepts one
                raise AssertionError("sequential build failed to place a node")

    def run_once(self, rng) -> tuple[Permutation, float]:
        n = self.sample.n
        view = _SampleView(self.sample)
        est = _Estimate(n)

        rho = rng.permutation(n)
        self._sequential_build(view, est, list(rho), phase=1)

        f_cur = _expected_full(view, est)
        while True:
            f_start = f_cur
            for v in rng.permutation(n):
                v = int(v)
                old_seat = int(est.succ[v])
                est.delete(v)
                chosen, f_cur = self._best_insert(view, est, v, f_cur, phase=2)
                if chosen is None:
                    est.insert(v, old_seat)
            if not f_cur < f_start:
                break

        for _ in range(self.config.n_zeal):
            cycles = est.cycles()
            j = int(rng.integers(len(cycles)))
            members = cycles[j]
            rho_j = [members[int(i)] for i in rng.permutation(len(members))]
            snapshot = est.copy()
            for w in rho_j[:-1]:
                est.delete(w)
                view.delete(w)
            # the survivor becomes a fixed point of the estimate
            est.delete(rho_j[-1])
            est.add_fixed(rho_j[-1])
            for i in range(len(rho_j) - 2, -1, -1):
                w = rho_j[i]
                view.undo()
                self._best_insert(view, est, w, math.inf, phase=3)
            f_new = _expected_full(view, est)
            if f_new < f_cur:
                f_cur = f_new
                if self.trace is not None:
                    self.trace.append((3, 0, 0, f_cur))
            else:
                est = snapshot
        return est.to_permutation(), f_cur


def _search(sample, config, rng, candidates_for, trace=None):
    if rng is None:
        rng = np.random.default_rng(config.seed)
    best: tuple[float, tuple, Permutation] | None = None
    for child in rng.spawn(config.n_runs):
        searcher = _Searcher(sample, config, candidates_for, trace=trace)
        pi_hat, f_hat = searcher.run_once(child)
        key = (f_hat, pi_hat.one_line)
        if best is None or key < (best[0], best[1]):
            best = (f_hat, pi_hat.one_line, pi_hat)
    assert best is not None
    return best[2], best[0]


def persalso(sample, config: SummaryConfig | None = None, rng=None, trace=None):
    """Greedy minimizer of the posterior expected Cayley distance.

    Returns (point estimate, achieved average distance).  Restarts are
    independent; the reported estimate is the best across restarts, ties
    broken by lexicographic one-line order.
    """
    if not isinstance(sample, PosteriorPermSample):
        sample = PosteriorPermSample(sample)
    config = config or SummaryConfig()
    return _search(sample, config, rng, _candidates_unconstrained, trace=trace)


def fast_persalso(sample, z_hat, config: SummaryConfig | None = None, rng=None):
    """perSALSO constrained to permutations whose cycle structure is z_hat.

    Every insertion is limited to the candidate's own block, so sweetening
    checks block-size many seats instead of n.
    """
    if not isinstance(sample, PosteriorPermSample):
        sample = PosteriorPermSample(sample)
    config = config or SummaryConfig()
    z_hat = np.asarray(z_hat, dtype=np.int64)
    if z_hat.shape[0] != sample.n:
        raise ValueError("z_hat length must match the draws")
    return _search(sample, config, rng, _make_block_filter(z_hat))


# ---------------------------------------------------------------------------
# partitions and metrics


def binder_loss(z, coclustering: np.ndarray) -> float:
    """Pairwise disagreement against a draw-averaged co-clustering matrix."""
    z = np.asarray(z)
    same = z[:, None] == z[None, :]
    iu = np.triu_indices(z.shape[0], k=1)
    q = coclustering[iu]
    s = same[iu]
    return float(np.where(s, 1.0 - q, q).sum())


def coclustering_matrix(z_draws: np.ndarray) -> np.ndarray:
    z_draws = np.asarray(z_draws, dtype=np.int64)
    S, n = z_draws.shape
    q = np.zeros((n, n))
    for s in range(S):
        q += z_draws[s][:, None] == z_draws[s][None, :]
    return q / S


def _canonical_labels(z: np.ndarray) -> np.ndarray:
    remap: dict[int, int] = {}
    return np.asarray([remap.setdefault(int(t), len(remap) + 1) for t in z], dtype=np.int64)


def partition_point_estimate(z_draws, rng=None, n_runs: int = 8) -> np.ndarray:
    """Greedy Binder-loss minimizer over the co-clustering of the draws.

    Sequential allocation in random order followed by sweetening passes;
    the best of ``n_runs`` restarts is returned with order-of-appearance
    labels.
    """
    z_draws = np.asarray(z_draws, dtype=np.int64)
    if z_draws.ndim != 2 or z_draws.shape[0] == 0:
        raise ValueError("z_draws must be a non-empty (S, n) array")
    if rng is None:
        rng = np.random.default_rng(0)
    n = z_draws.shape[1]
    q = coclustering_matrix(z_draws)
    cost = 1.0 - 2.0 * q  # per-pair marginal cost of co-clustering

    best_z = None
    best_loss = math.inf
    for child in rng.spawn(n_runs):
        z = np.full(n, -1, dtype=np.int64)
        k = 0
        for u in child.permutation(n):
            u = int(u)
            gains = np.full(k + 1, 0.0)
            for g in range(k):
                members = np.flatnonzero(z == g)
                gains[g] = cost[u, members].sum()
            g_star = int(np.argmin(gains))
            z[u] = g_star
            k = max(k, g_star + 1)
        improved = True
        while improved:
            improved = False
            for u in child.permutation(n):
                u = int(u)
                cur = int(z[u])
                z[u] = -1
                stay = cost[u, np.flatnonzero(z == cur)].sum()  # 0.0 for a singleton
                labels = np.unique(z[z >= 0])
                gains = np.empty(labels.shape[0] + 1)
                for i, g in enumerate(labels):
                    gains[i] = cost[u, np.flatnonzero(z == g)].sum()
                gains[-1] = 0.0  # open a new cluster
                i_star = int(np.argmin(gains))
                if gains[i_star] < stay - 1e-12:
                    z[u] = labels[i_star] if i_star < labels.shape[0] else int(z.max()) + 1
                    improved = True
                else:
                    z[u] = cur
        loss = binder_loss(z, q)
        if loss < best_loss - 1e-12:
            best_loss = loss
            best_z = _canonical_labels(z)
    return best_z


def nmi(z1, z2) -> float:
    """Normalized mutual information (arithmetic-mean normalization)."""
    z1 = np.asarray(z1)
    z2 = np.asarray(z2)
    if z1.shape != z2.shape:
        raise ValueError("partitions must cover the same nodes")
    n = z1.shape[0]
    _, i1 = np.unique(z1, return_inverse=True)
    _, i2 = np.unique(z2, return_inverse=True)
    k1 = i1.max() + 1
    k2 = i2.max() + 1
    joint = np.zeros((k1, k2))
    np.add.at(joint, (i1, i2), 1.0)
    joint /= n
    p1 = joint.sum(axis=1)
    p2 = joint.sum(axis=0)
    h1 = -np.sum(p1 * np.log(p1, where=p1 > 0, out=np.zeros_like(p1)))
    h2 = -np.sum(p2 * np.log(p2, where=p2 > 0, out=np.zeros_like(p2)))
    if h1 + h2 == 0.0:
        return 1.0
    mask = joint > 0
    mi = float(np.sum(joint[mask] * np.log(joint[mask] / np.outer(p1, p2)[mask])))
    return float(mi / ((h1 + h2) / 2.0))


def frobenius_discrepancy(graphs: Graphs, pi: Permutation) -> float:
    """Frobenius norm of y1 minus the pi-aligned y2."""
    if pi.n != graphs.n:
        raise ValueError("size mismatch")
    p0 = np.asarray(pi.one_line, dtype=np.int64) - 1
    aligned = graphs.y2[np.ix_(p0, p0)].astype(np.float64)
    diff = graphs.y1.astype(np.float64) - aligned
    return float(np.sqrt((diff * diff).sum()))


def auc_parent(parent_draws, truth: ParentMatrix) -> float:
    """Area under the ROC curve of posterior edge frequencies against truth.

    ``parent_draws`` is either a list of ParentMatrix or an (S, n_pairs)
    array of upper-triangle bits.  Returns nan when the truth has no edges
    or no non-edges (the curve is undefined).
    """
    n = truth.n
    iu = np.triu_indices(n, k=1)
    if isinstance(parent_draws, np.ndarray):
        bits = np.asarray(parent_draws, dtype=np.float64)
        if bits.ndim != 2 or bits.shape[1] != iu[0].size:
            raise ValueError("bit rows must have n(n-1)/2 columns")
    else:
        bits = np.asarray([pm.y[iu] for pm in parent_draws], dtype=np.float64)
    freq = bits.mean(axis=0)
    labels = truth.y[iu].astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return math.nan
    ranks = rankdata(freq)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))
