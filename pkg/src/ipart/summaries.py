"""Posterior summaries computed from a draws archive.

Every summary depends on the draws only through label-invariant quantities.
"""
from __future__ import annotations

import csv
import json
import warnings
from pathlib import Path

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform
from scipy.special import logsumexp

from .metrics import adjusted_rand_index
from .partition import Partition, canonicalize
from .temporal import coclustering_tensor, lagged_ari_matrix

N_RESTARTS = 16


def _labels(archive) -> np.ndarray:
    labels = archive.labels if hasattr(archive, "labels") else np.asarray(archive)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim == 2:
        labels = labels[:, None, :]
    if labels.shape[0] == 0:
        raise ValueError("archive holds no draws")
    return labels


def _loglik(archive) -> np.ndarray:
    ll = archive.loglik if hasattr(archive, "loglik") else np.asarray(archive, dtype=np.float64)
    ll = np.asarray(ll, dtype=np.float64)
    if ll.shape[0] == 0:
        raise ValueError("archive holds no draws")
    return ll.reshape(ll.shape[0], -1)


def coclustering(archive) -> np.ndarray:
    """(T, m, m) posterior probabilities that two units share a cluster."""
    return coclustering_tensor(_labels(archive))


def expected_ari(archive, ref) -> np.ndarray:
    """Posterior mean of ARI(rho_t, ref) for each t."""
    labels = _labels(archive)
    ref = ref.as_array() if isinstance(ref, Partition) else np.asarray(ref)
    return np.array([np.mean([adjusted_rand_index(d, ref) for d in labels[:, t]]) for t in range(labels.shape[1])])


def posterior_lagged_ari(archive) -> np.ndarray:
    labels = _labels(archive)
    if labels.shape[1] < 2:
        raise ValueError("lagged ARI needs at least two time points")
    return lagged_ari_matrix(labels)[0]


# --------------------------------------------------------------- model fit

def lpml(archive, return_flagged: bool = False):
    """Sum of log conditional predictive ordinates (harmonic-mean CPO in log space).

    Observations whose CPO is not finite are dropped from the sum with a warning;
    their flat indices are returned when ``return_flagged`` is set.
    """
    ll = _loglik(archive)
    B = ll.shape[0]
    with np.errstate(over="ignore", invalid="ignore"):
        log_cpo = np.log(B) - logsumexp(-ll, axis=0)
    bad = ~np.isfinite(log_cpo)
    if bad.any():
        warnings.warn(f"CPO underflow for {int(bad.sum())} observation(s); excluded from LPML", RuntimeWarning)
    value = float(log_cpo[~bad].sum())
    if return_flagged:
        return value, np.flatnonzero(bad)
    return value


def waic(archive) -> float:
    """-2 (lppd - p_waic) with p_waic the summed posterior variance of log densities."""
    ll = _loglik(archive)
    B = ll.shape[0]
    lppd = logsumexp(ll, axis=0) - np.log(B)
    p_waic = ll.var(axis=0, ddof=1) if B > 1 else np.zeros(ll.shape[1])
    return float(-2.0 * (lppd.sum() - p_waic.sum()))


# ------------------------------------------------------------ point estimate

def _xlogx(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)


def expected_vi(candidate, draws: np.ndarray) -> float:
    """Mean VI (bits) between ``candidate`` and each row of ``draws``."""
    c = np.asarray(candidate.labels if isinstance(candidate, Partition) else candidate, dtype=np.int64)
    draws = np.asarray(draws, dtype=np.int64)
    m = c.size
    tot = 0.0
    hc = _xlogx(np.bincount(c)).sum()
    for d in draws:
        cross = np.bincount(c * (d.max() + 1) + d)
        tot += hc + _xlogx(np.bincount(d)).sum() - 2.0 * _xlogx(cross).sum()
    return tot / (m * len(draws) * np.log(2.0))


class _VILoss:
    """Incremental form of B*m*ln2*E[VI] up to a constant that does not depend on the candidate."""

    def __init__(self, draws: np.ndarray):
        self.draws = draws - draws.min()
        self.B, self.m = draws.shape

    def total(self, c: np.ndarray) -> float:
        tot = self.B * _xlogx(np.bincount(c)).sum()
        for d in self.draws:
            tot -= 2.0 * _xlogx(np.bincount(c * (d.max() + 1) + d)).sum()
        return float(tot)

    def move_costs(self, i: int, c: np.ndarray, members: np.ndarray, K: int) -> np.ndarray:
        """Loss change from adding unit i to each of clusters 0..K-1 and to a new cluster.

        ``members`` marks the units currently placed (unit i excluded).
        """
        same = (self.draws == self.draws[:, [i]]) & members[None, :]  # B x m
        onehot = np.zeros((self.m, K + 1))
        idx = np.flatnonzero(members)
        onehot[idx, c[idx]] = 1.0
        nk = onehot.sum(axis=0)
        nkb = same @ onehot  # B x (K+1)
        return self.B * (_xlogx(nk + 1) - _xlogx(nk)) - 2.0 * (_xlogx(nkb + 1) - _xlogx(nkb)).sum(axis=0)


def _compact(c: np.ndarray) -> np.ndarray:
    return np.asarray(canonicalize(c).labels, dtype=np.int64) - 1


def _sweep(loss: _VILoss, c: np.ndarray, max_sweeps: int = 100) -> np.ndarray:
    c = c.copy()
    m = c.size
    for _ in range(max_sweeps):
        changed = False
        for i in range(m):
            members = np.ones(m, dtype=bool)
            members[i] = False
            K = c.max() + 1
            costs = loss.move_costs(i, c, members, K)
            if not np.any(c[members] == c[i]):
                costs[c[i]] = costs[K]  # i alone: its own slot is the same as a new cluster
            best = int(np.argmin(costs))
            if costs[best] < costs[c[i]] - 1e-9 * (1.0 + abs(costs[c[i]])):
                c[i] = best
                c = _compact(c)
                changed = True
        if not changed:
            break
    return _compact(c)


def _refine(loss: _VILoss, c: np.ndarray) -> np.ndarray:
    """Alternate single-unit sweeps with the best improving merge of two clusters."""
    c = _sweep(loss, c)
    while True:
        cur = loss.total(c)
        K = c.max() + 1
        best, best_c = cur - 1e-9 * (1.0 + abs(cur)), None
        for a in range(K):
            for b in range(a + 1, K):
                trial = np.where(c == b, a, c)
                v = loss.total(trial)
                if v < best:
                    best, best_c = v, trial
        if best_c is None:
            return c
        c = _sweep(loss, _compact(best_c))


def _greedy(loss: _VILoss, order: np.ndarray) -> np.ndarray:
    m = order.size
    c = np.zeros(m, dtype=np.int64)
    members = np.zeros(m, dtype=bool)
    K = 0
    for i in order:
        costs = loss.move_costs(i, c, members, K)
        j = int(np.argmin(costs))
        c[i] = j
        members[i] = True
        K = max(K, j + 1)
    return _compact(c)


def _linkage_cuts(draws: np.ndarray, max_k: int = 30) -> list[np.ndarray]:
    """Average-linkage cuts of 1 - (co-clustering matrix) at every cluster count up to ``max_k``."""
    m = draws.shape[1]
    if m < 2:
        return []
    dist = 1.0 - coclustering_tensor(draws[:, None, :])[0]
    tree = linkage(squareform(dist, checks=False), method="average")
    return [fcluster(tree, k, criterion="maxclust") - 1 for k in range(1, min(m, max_k) + 1)]


def point_estimate_vi(archive, t: int = 0, seed: int = 0, restarts: int = N_RESTARTS) -> Partition:
    """Approximate minimizer of the posterior expected VI loss at time ``t``.

    Candidates are the distinct draws plus greedy sequential allocations over
    random unit orders, random coarse partitions and average-linkage cuts of the
    co-clustering matrix, each refined by single-unit sweeps and cluster merges. Ties
    go to the lexicographically smallest canonical labels.
    """
    draws = _labels(archive)[:, t, :]
    loss = _VILoss(draws)
    rng = np.random.default_rng(seed)
    cands = {tuple(r) for r in np.unique(draws, axis=0).tolist()}
    starts = [_greedy(loss, np.arange(loss.m))]
    starts += [_greedy(loss, rng.permutation(loss.m)) for _ in range(restarts - 1)]
    uniq, counts = np.unique(draws, axis=0, return_counts=True)
    starts.append(uniq[np.argmax(counts)] - 1)
    starts.append(np.zeros(loss.m, dtype=np.int64))
    starts += _linkage_cuts(draws)
    # random few-cluster starts, as sweeps rarely open clusters from a coarse partition
    starts += [rng.integers(0, rng.integers(1, 5), loss.m) for _ in range(restarts)]
    for s in starts:
        cands.add(tuple((_refine(loss, s) + 1).tolist()))
    scored = sorted((loss.total(np.array(c) - 1), c) for c in cands)
    best = scored[0][0]
    tol = 1e-9 * (1.0 + abs(best))
    winner = min(c for v, c in scored if v <= best + tol)
    return Partition(winner)


# ------------------------------------------------------------------- reports

def fit_report(archive, rho0: Partition | None = None, refs: dict[str, Partition] | None = None,
               seed: int = 0) -> dict:
    refs = dict(refs or {})
    if rho0 is not None:
        refs.setdefault("rho0", rho0)
    lp, flagged = lpml(archive, return_flagged=True)
    report = {
        "draws": int(archive.B),
        "lpml": lp,
        "lpml_flagged": flagged.tolist(),
        "waic": waic(archive),
        "expected_ari": {name: expected_ari(archive, ref).tolist() for name, ref in refs.items()},
        "point_estimate": [list(point_estimate_vi(archive, t, seed).labels) for t in range(archive.T)],
        "mean_clusters": _labels(archive).max(axis=2).mean(axis=0).tolist(),
    }
    if archive.alpha.shape[1]:
        report["alpha_mean"] = dict(zip(archive.alpha_names, archive.alpha.mean(axis=0).tolist()))
    return report


def _write_matrix(path: Path, mat: np.ndarray, header: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in mat:
            w.writerow([repr(float(v)) for v in row])


def write_report(archive, out: str | Path, rho0: Partition | None = None,
                 refs: dict[str, Partition] | None = None, seed: int = 0) -> dict:
    """Write summary.json, co-clustering and lagged-ARI CSVs and point estimates into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = fit_report(archive, rho0, refs, seed)
    with open(out / "summary.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    cc = coclustering(archive)
    units = [f"u{i + 1}" for i in range(archive.m)]
    for t in range(archive.T):
        _write_matrix(out / f"coclustering_t{t + 1}.csv", cc[t], units)
    if archive.T > 1:
        _write_matrix(out / "lagged_ari.csv", posterior_lagged_ari(archive), [f"t{t + 1}" for t in range(archive.T)])
    with open(out / "point_estimate.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *units])
        for t, labs in enumerate(report["point_estimate"]):
            w.writerow([t + 1, *labs])
    return report
