"""Joint priors over partition sequences anchored at an initial partition."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import adjusted_rand_index
from .partition import Partition, PartitionError
from .priors import AlphaModel, crp_log_eppf, crp_sample, icrp_exact_log_prob, seat_given_gamma

DEPENDENCE = ("conditionally-independent", "markovian")


@dataclass(frozen=True)
class PartitionSequence:
    partitions: tuple[Partition, ...]

    def __post_init__(self):
        parts = tuple(self.partitions)
        if not parts:
            raise PartitionError("a partition sequence needs at least one time point")
        if len({p.m for p in parts}) != 1:
            raise PartitionError("all partitions in a sequence must cover the same units")
        object.__setattr__(self, "partitions", parts)

    @property
    def T(self) -> int:
        return len(self.partitions)

    @property
    def m(self) -> int:
        return self.partitions[0].m

    def __getitem__(self, t):
        return self.partitions[t]

    def __iter__(self):
        return iter(self.partitions)

    def as_array(self) -> np.ndarray:
        return np.array([p.labels for p in self.partitions], dtype=np.int64)


@dataclass
class SequenceModel:
    """Prior over (rho_1..rho_T). ``rho0=None`` is the baseline model with no initial partition."""

    dependence: str
    rho0: Partition | None
    alpha: AlphaModel
    M: float = 1.0

    def __post_init__(self):
        if self.dependence not in DEPENDENCE:
            raise ValueError(f"dependence must be one of {DEPENDENCE}")
        if self.M <= 0:
            raise ValueError("M must be positive")
        if self.rho0 is not None and self.rho0.m != self.alpha.m:
            raise PartitionError(f"rho0 covers {self.rho0.m} units but alpha is sized for {self.alpha.m}")

    @property
    def T(self) -> int:
        return self.alpha.T

    @property
    def m(self) -> int:
        return self.alpha.m

    @property
    def markovian(self) -> bool:
        return self.dependence == "markovian"

    @property
    def informed(self) -> bool:
        return self.rho0 is not None

    def gamma_mask(self) -> np.ndarray:
        """Which (t, i) indicators exist in the model."""
        mask = np.ones((self.T, self.m), dtype=bool)
        if not self.informed:
            if self.markovian:
                mask[0] = False
            else:
                mask[:] = False
        return mask


def sequence_log_prior(seq: PartitionSequence, model: SequenceModel) -> float:
    """Exact log p(rho_1..rho_T | rho0) at the model's current alpha values."""
    if seq.T != model.T or seq.m != model.m:
        raise PartitionError("sequence dimensions do not match the model")
    alpha = model.alpha.matrix()
    mask = model.gamma_mask()
    total = 0.0
    for t, p in enumerate(seq):
        if not mask[t].any():
            total += crp_log_eppf(p, model.M)
            continue
        center = seq[t - 1] if (model.markovian and t > 0) else model.rho0
        total += icrp_exact_log_prob(p, center, alpha[t], model.M)
    return total


def simulate_sequence(model: SequenceModel, rng: np.random.Generator) -> tuple[PartitionSequence, np.ndarray]:
    """Forward-simulate one sequence and its T x m reallocation indicators.

    Non-fixed alpha values are drawn once from their beta priors.
    """
    am = model.alpha
    values = am.values if am.fixed else rng.beta(am.a, am.b)
    alpha = values[am.block_index()]
    mask = model.gamma_mask()
    parts: list[Partition] = []
    gammas = np.zeros((model.T, model.m), dtype=np.int64)
    for t in range(model.T):
        if not mask[t].any():
            parts.append(crp_sample(model.m, model.M, rng))
            continue
        center = parts[t - 1] if (model.markovian and t > 0) else model.rho0
        g = (rng.random(model.m) < alpha[t]).astype(np.int64)
        gammas[t] = g
        parts.append(seat_given_gamma(center, g, model.M, rng))
    return PartitionSequence(tuple(parts)), gammas


def _simulate_chunk(args):
    model, children = args
    out = [simulate_sequence(model, np.random.default_rng(c)) for c in children]
    return np.array([s.as_array() for s, _ in out]), np.array([g for _, g in out])


def simulate_many(model: SequenceModel, n: int, seed: int, threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """``n`` independent replicates as (n, T, m) label and indicator arrays.

    Replicate r uses its own child stream of ``seed``, so results do not depend on
    how replicates are split across workers.
    """
    if n < 1:
        raise ValueError("need at least one replicate")
    children = np.random.SeedSequence(seed).spawn(n)
    if threads > 1 and n > 1:
        from concurrent.futures import ProcessPoolExecutor

        chunks = [children[i::threads] for i in range(threads) if children[i::threads]]
        with ProcessPoolExecutor(max_workers=len(chunks)) as ex:
            parts = list(ex.map(_simulate_chunk, [(model, c) for c in chunks]))
        labels = np.empty((n, model.T, model.m), dtype=np.int64)
        gammas = np.empty((n, model.T, model.m), dtype=np.int64)
        for i, (lab, gam) in enumerate(parts):
            labels[i::threads] = lab
            gammas[i::threads] = gam
        return labels, gammas
    labels, gammas = _simulate_chunk((model, children))
    return labels.astype(np.int64), gammas.astype(np.int64)


def coclustering_tensor(labels: np.ndarray) -> np.ndarray:
    """(n, T, m) draws -> (T, m, m) Monte Carlo pairwise co-clustering probabilities."""
    labels = np.asarray(labels)
    if labels.ndim == 2:
        labels = labels[:, None, :]
    n, T, m = labels.shape
    out = np.empty((T, m, m))
    for t in range(T):
        lt = labels[:, t, :]
        out[t] = (lt[:, :, None] == lt[:, None, :]).mean(axis=0)
    return out


def ari_traces(labels: np.ndarray, rho0: Partition | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """Per-draw lagged ARI (n, T, T) and ARI against rho0 (n, T)."""
    labels = np.asarray(labels)
    n, T, _ = labels.shape
    lag = np.ones((n, T, T))
    for r in range(n):
        for t in range(T):
            for s in range(t + 1, T):
                lag[r, t, s] = lag[r, s, t] = adjusted_rand_index(labels[r, t], labels[r, s])
    vs0 = None
    if rho0 is not None:
        ref = rho0.as_array()
        vs0 = np.array([[adjusted_rand_index(labels[r, t], ref) for t in range(T)] for r in range(n)])
    return lag, vs0


def lagged_ari_matrix(draws, rho0: Partition | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """Monte Carlo means of ARI(rho_t, rho_t') and ARI(rho_t, rho0)."""
    if isinstance(draws, np.ndarray):
        labels = draws
    else:
        draws = list(draws)
        if not draws:
            raise ValueError("no draws supplied")
        labels = np.array([d.as_array() for d in draws])
    if labels.shape[0] == 0:
        raise ValueError("no draws supplied")
    lag, vs0 = ari_traces(labels, rho0)
    return lag.mean(axis=0), None if vs0 is None else vs0.mean(axis=0)
