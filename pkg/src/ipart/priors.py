"""Partition priors: CRP, informed CRP (iCRP), centered partition process (CPP), location-scale partition (LSP).

Everything is computed in log space. The iCRP conditional law given the
reallocation indicators has a closed-form normalizer: by consistency of the
CRP under marginalization, the CRP mass of all partitions whose restriction to
the fixed units equals ``rho0`` restricted to them is just the CRP EPPF of
that restriction. Sequential seating of the free units after the fixed ones
is therefore an exact sampler for every ``m``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from math import lgamma, log
from typing import Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .metrics import variation_of_information
from .partition import ENUMERATION_CAP, Partition, PartitionError, canonicalize, enumerate_partitions

GAMMA_ENUMERATION_CAP = 20
REGIMES = ("global", "time-local", "unit-local", "time-unit-local")


# --------------------------------------------------------------------------- CRP

def crp_log_eppf(p: Partition | Sequence[int], M: float) -> float:
    """log of M^k prod_j (|S_j|-1)! / prod_{i=1}^m (M+i-1)."""
    if M <= 0:
        raise ValueError("M must be positive")
    labels = p.labels if isinstance(p, Partition) else tuple(p)
    m = len(labels)
    counts: dict = {}
    for c in labels:
        counts[c] = counts.get(c, 0) + 1
    k = len(counts)
    val = k * log(M) + sum(lgamma(n) for n in counts.values())
    val -= sum(log(M + i) for i in range(m))
    return val


def crp_sample(m: int, M: float, rng: np.random.Generator) -> Partition:
    labels = np.empty(m, dtype=np.int64)
    sizes: list[int] = []
    for i in range(m):
        w = np.array(sizes + [M], dtype=np.float64)
        j = int(rng.choice(len(w), p=w / w.sum()))
        if j == len(sizes):
            sizes.append(0)
        sizes[j] += 1
        labels[i] = j
    return canonicalize(labels)


# ------------------------------------------------------------------ gamma / alpha

def as_gamma(g, m: int) -> np.ndarray:
    arr = np.asarray(g, dtype=np.int64)
    if arr.shape != (m,):
        raise PartitionError(f"gamma must have length {m}")
    if np.any((arr != 0) & (arr != 1)):
        raise PartitionError("gamma entries must be 0 or 1")
    return arr


def _xlogy(x, y):
    return 0.0 if x == 0 else x * log(y) if y > 0 else -np.inf


def gamma_log_prob(g: Sequence[int], alphas: Sequence[float]) -> float:
    """Independent-Bernoulli log mass of a reallocation-indicator vector (0 log 0 = 0)."""
    g = np.asarray(g, dtype=np.int64)
    a = np.asarray(alphas, dtype=np.float64)
    if g.shape != a.shape:
        raise PartitionError("gamma and alpha lengths differ")
    return float(sum(_xlogy(gi, ai) + _xlogy(1 - gi, 1.0 - ai) for gi, ai in zip(g, a)))


@dataclass
class AlphaModel:
    """Adherence probabilities alpha_{ti} tied according to one of four regimes.

    ``a``, ``b`` and ``values`` are stored per tied block: a single block for the
    global regime, one per time point (time-local), one per unit (unit-local) or
    one per (t, i) cell (time-unit-local, row-major in t).
    """

    regime: str
    T: int
    m: int
    a: np.ndarray
    b: np.ndarray
    values: np.ndarray
    fixed: bool = False

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown alpha regime {self.regime!r}; expected one of {REGIMES}")
        n = self.n_blocks
        self.a = _broadcast(self.a, n, "a")
        self.b = _broadcast(self.b, n, "b")
        self.values = _broadcast(self.values, n, "alpha value")
        if np.any(self.a <= 0) or np.any(self.b <= 0):
            raise ValueError("beta hyperparameters must be positive")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise ValueError("alpha values must lie in [0, 1]")

    @property
    def n_blocks(self) -> int:
        return {"global": 1, "time-local": self.T, "unit-local": self.m, "time-unit-local": self.T * self.m}[self.regime]

    def block_index(self) -> np.ndarray:
        t, i = np.meshgrid(np.arange(self.T), np.arange(self.m), indexing="ij")
        if self.regime == "global":
            return np.zeros((self.T, self.m), dtype=np.int64)
        if self.regime == "time-local":
            return t.astype(np.int64)
        if self.regime == "unit-local":
            return i.astype(np.int64)
        return (t * self.m + i).astype(np.int64)

    def matrix(self) -> np.ndarray:
        """alpha_{ti} as a T x m array."""
        return self.values[self.block_index()]

    def block_names(self) -> list[str]:
        if self.regime == "global":
            return ["alpha"]
        if self.regime == "time-local":
            return [f"alpha_t{t + 1}" for t in range(self.T)]
        if self.regime == "unit-local":
            return [f"alpha_i{i + 1}" for i in range(self.m)]
        return [f"alpha_t{t + 1}_i{i + 1}" for t in range(self.T) for i in range(self.m)]

    @classmethod
    def constant(cls, value: float, T: int, m: int) -> "AlphaModel":
        return cls("global", T, m, a=1.0, b=1.0, values=value, fixed=True)


def _broadcast(x, n: int, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).ravel()
    if arr.size == 1:
        return np.full(n, float(arr[0]))
    if arr.size != n:
        raise ValueError(f"{what} has {arr.size} entries, expected 1 or {n}")
    return arr.copy()


def alpha_conjugate_update(am: AlphaModel, gammas: np.ndarray, rng: np.random.Generator,
                           mask: np.ndarray | None = None) -> AlphaModel:
    """Redraw each tied alpha block from Be(a + sum gamma, b + n - sum gamma).

    ``mask`` (T x m booleans) marks which gamma cells carry information; cells
    outside it are ignored, e.g. the first row of a model with no initial partition.
    """
    if am.fixed:
        return am
    gammas = np.asarray(gammas, dtype=np.int64).reshape(am.T, am.m)
    if mask is None:
        mask = np.ones_like(gammas, dtype=bool)
    idx = am.block_index()[mask]
    succ = np.bincount(idx, weights=gammas[mask], minlength=am.n_blocks)
    n = np.bincount(idx, minlength=am.n_blocks)
    values = rng.beta(am.a + succ, am.b + n - succ)
    return replace(am, values=values)


# ------------------------------------------------------------------------- iCRP

def _icrp_gamma_sum(p: tuple[int, ...], rho0: tuple[int, ...], alphas: np.ndarray, M: float) -> float:
    """log sum over compatible gamma of Pr(gamma) / CRP_{|R|}(rho0 restricted to R).

    Depth-first over units; a unit may join the fixed set R only if ``p`` and
    ``rho0`` agree on its grouping with the units already in R.
    """
    m = len(p)
    la = np.log(alphas, where=alphas > 0, out=np.full(m, -np.inf))
    l1a = np.log1p(-alphas, where=alphas < 1, out=np.full(m, -np.inf))
    leaves: list[float] = []
    fwd: dict[int, int] = {}
    bwd: dict[int, int] = {}
    size0: dict[int, int] = {}

    def visit(i: int, r: int, acc: float):
        if i == m:
            leaves.append(acc)
            return
        if l1a[i] > -np.inf:
            visit(i + 1, r, acc + l1a[i])
        if la[i] > -np.inf:
            c, c0 = p[i], rho0[i]
            f, b = fwd.get(c), bwd.get(c0)
            if f is None and b is None:
                fwd[c], bwd[c0], size0[c0] = c0, c, 1
                visit(i + 1, r + 1, acc + la[i] - log(M / (M + r)))
                del fwd[c], bwd[c0], size0[c0]
            elif f == c0 and b == c:
                n = size0[c0]
                size0[c0] = n + 1
                visit(i + 1, r + 1, acc + la[i] - log(n / (M + r)))
                size0[c0] = n

    visit(0, 0, 0.0)
    return float(logsumexp(leaves)) if leaves else -np.inf


def _alpha_vector(alphas, m: int) -> np.ndarray:
    a = np.asarray(alphas, dtype=np.float64)
    if a.ndim == 0:
        a = np.full(m, float(a))
    if a.shape != (m,):
        raise PartitionError(f"alpha must be a scalar or have length {m}")
    if np.any(a < 0) or np.any(a > 1):
        raise ValueError("alpha values must lie in [0, 1]")
    return a


def icrp_exact_log_prob(p: Partition, rho0: Partition, alphas, M: float) -> float:
    """Exact log Pr(rho = p | rho0) under iCRP(rho0, alpha, M), summing over all gamma."""
    if p.m != rho0.m:
        raise PartitionError("p and rho0 have different numbers of units")
    if p.m > GAMMA_ENUMERATION_CAP:
        raise PartitionError(f"m={p.m} exceeds the exact-path cap of {GAMMA_ENUMERATION_CAP}")
    a = _alpha_vector(alphas, p.m)
    return crp_log_eppf(p, M) + _icrp_gamma_sum(p.labels, rho0.labels, a, M)


def icrp_sample(rho0: Partition, alphas, M: float, rng: np.random.Generator) -> tuple[Partition, np.ndarray]:
    """Draw gamma ~ Bern(alpha), seat the fixed units as in rho0, then seat free units by CRP predictive."""
    m = rho0.m
    a = _alpha_vector(alphas, m)
    gamma = (rng.random(m) < a).astype(np.int64)
    return seat_given_gamma(rho0, gamma, M, rng), gamma


def seat_given_gamma(center: Partition, gamma: np.ndarray, M: float, rng: np.random.Generator) -> Partition:
    m = center.m
    labels = np.full(m, -1, dtype=np.int64)
    sizes: list[int] = []
    block_of: dict[int, int] = {}
    for i in range(m):
        if gamma[i]:
            c0 = center.labels[i]
            if c0 not in block_of:
                block_of[c0] = len(sizes)
                sizes.append(0)
            labels[i] = block_of[c0]
            sizes[labels[i]] += 1
    free = np.flatnonzero(gamma == 0)
    u = rng.random(free.size)
    for i, ui in zip(free, u):
        total = sum(sizes) + M
        acc, j = 0.0, len(sizes)
        thresh = ui * total
        for jj, n in enumerate(sizes):
            acc += n
            if thresh < acc:
                j = jj
                break
        if j == len(sizes):
            sizes.append(0)
        sizes[j] += 1
        labels[i] = j
    return canonicalize(labels)


# -------------------------------------------------------------------------- CPP

def _vi_table(rho0: tuple[int, ...], m: int) -> tuple[list[Partition], np.ndarray]:
    parts = list(enumerate_partitions(m))
    vi = np.array([variation_of_information(q.labels, rho0) for q in parts])
    return parts, vi


@lru_cache(maxsize=64)
def _cpp_log_norm(rho0: tuple[int, ...], psi: float, M: float) -> float:
    parts, vi = _vi_table(rho0, len(rho0))
    logw = np.array([crp_log_eppf(q, M) for q in parts]) - psi * vi
    return float(logsumexp(logw))


def cpp_log_prob(p: Partition, rho0: Partition, psi: float, M: float) -> float:
    """log[ CRP(p) exp(-psi VI(p, rho0)) / Z ], Z by enumeration; VI in bits."""
    if psi < 0:
        raise ValueError("psi must be nonnegative")
    if p.m != rho0.m:
        raise PartitionError("p and rho0 have different numbers of units")
    if p.m > ENUMERATION_CAP:
        raise PartitionError(f"m={p.m} exceeds the enumeration cap of {ENUMERATION_CAP}")
    return (crp_log_eppf(p, M) - psi * variation_of_information(p, rho0)
            - _cpp_log_norm(rho0.labels, float(psi), float(M)))


# -------------------------------------------------------------------------- LSP

def lsp_conditional(prefix: Sequence[int], rho0: Partition, nu: float) -> np.ndarray:
    """Probabilities for the label of unit ``len(prefix)`` given the labels before it.

    Entry k-1 is for existing cluster k; the last entry opens a new cluster.
    ``prefix`` must be canonical.
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    i = len(prefix)
    if i == 0:
        return np.array([1.0])
    c0 = rho0.labels
    K = max(prefix)
    K0 = max(c0[:i])
    w = np.empty(K + 1)
    for k in range(1, K + 1):
        nk = sum(1 for c in prefix if c == k)
        same = sum(1 for l, c in enumerate(prefix) if c == k and c0[l] == c0[i])
        w[k - 1] = (nu + same) / (nu * K0 + nu + nk)
    # new-cluster numerator rewards units that open a new block of rho0
    w[K] = (nu + (1.0 if c0[i] == K0 + 1 else 0.0)) / (nu * K0 + nu + 1.0)
    return w / w.sum()


def lsp_log_prob(p: Partition, rho0: Partition, nu: float) -> float:
    """Sequential-product log mass of ``p`` in natural unit order."""
    if p.m != rho0.m:
        raise PartitionError("p and rho0 have different numbers of units")
    total = 0.0
    for i in range(1, p.m):
        probs = lsp_conditional(p.labels[:i], rho0, nu)
        total += log(probs[p.labels[i] - 1])
    return total


# ------------------------------------------------------------------ prior specs

@dataclass(frozen=True)
class CRPPrior:
    M: float = 1.0
    type: str = field(default="crp", init=False)

    def log_prob(self, p: Partition) -> float:
        return crp_log_eppf(p, self.M)


@dataclass(frozen=True)
class ICRPPrior:
    rho0: Partition
    alpha: AlphaModel
    M: float = 1.0
    type: str = field(default="icrp", init=False)

    def log_prob(self, p: Partition) -> float:
        """Log probability given the current alpha values (not integrated over their beta prior)."""
        return icrp_exact_log_prob(p, self.rho0, self.alpha.matrix()[0], self.M)


@dataclass(frozen=True)
class CPPPrior:
    rho0: Partition
    psi: float
    M: float = 1.0
    type: str = field(default="cpp", init=False)

    def log_prob(self, p: Partition) -> float:
        return cpp_log_prob(p, self.rho0, self.psi, self.M)


@dataclass(frozen=True)
class LSPPrior:
    rho0: Partition
    nu: float
    type: str = field(default="lsp", init=False)

    def log_prob(self, p: Partition) -> float:
        return lsp_log_prob(p, self.rho0, self.nu)


PriorSpec = Union[CRPPrior, ICRPPrior, CPPPrior, LSPPrior]


def prior_table(prior: PriorSpec, m: int) -> tuple[list[Partition], np.ndarray]:
    """Exact probabilities of every partition of ``m`` units."""
    parts = list(enumerate_partitions(m))
    logp = np.array([prior.log_prob(q) for q in parts])
    return parts, np.exp(logp)


def parse_prior_spec(block: dict, T: int = 1, m: int | None = None) -> PriorSpec:
    """Build a prior from its JSON config block."""
    from .config import PriorConfig

    return PriorConfig.model_validate(block).build(T=T, m=m)
