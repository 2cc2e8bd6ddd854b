"""Synthetic data generators and replicated simulation studies.

``mixture_dataset`` is the four-cluster design with means (-h, 0, h, 2h):
m units in four equal clusters, Gaussian noise with standard deviation ``sd``
(0.5 for the hierarchical-model study, 1 for the known-variance prior comparison).
``spatial_panel`` is a stand-in for a monitoring-network panel: stations on a grid
grouped into spatially coherent regions whose levels drift month to month.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .likelihood import Dataset, Hyperparams
from .metrics import adjusted_rand_index
from .partition import Partition, canonicalize
from .summaries import expected_ari, lpml, waic

RHO0_KINDS = ("true", "merge", "split")


def rho_true(m: int = 100, n_clusters: int = 4) -> Partition:
    if m % n_clusters:
        raise ValueError("m must be divisible by the number of clusters")
    return Partition(tuple(np.repeat(np.arange(1, n_clusters + 1), m // n_clusters).tolist()))


def rho_merge(m: int = 100) -> Partition:
    """Two halves: clusters 1+2 and 3+4 of the four-cluster truth."""
    return Partition(tuple(np.repeat([1, 2], m // 2).tolist()))


def rho_split(rng: np.random.Generator, m: int = 100, n_clusters: int = 4) -> Partition:
    """Each true cluster split at random into two halves (sizes differ by one when odd)."""
    size = m // n_clusters
    labels = np.empty(m, dtype=np.int64)
    for j in range(n_clusters):
        idx = np.arange(j * size, (j + 1) * size)
        half = rng.permutation(idx)
        labels[half[: size // 2]] = 2 * j
        labels[half[size // 2:]] = 2 * j + 1
    return canonicalize(labels)


def reference_partition(kind: str, m: int, rng: np.random.Generator) -> Partition:
    if kind == "true":
        return rho_true(m)
    if kind == "merge":
        return rho_merge(m)
    if kind == "split":
        return rho_split(rng, m)
    raise ValueError(f"unknown reference partition {kind!r}; expected one of {RHO0_KINDS}")


def mixture_dataset(h: float, rng: np.random.Generator, m: int = 100, sd: float = 0.5) -> Dataset:
    truth = rho_true(m).as_array() - 1
    means = np.array([-h, 0.0, h, 2.0 * h])
    return Dataset(means[truth] + sd * rng.standard_normal(m))


def spatial_panel(rng: np.random.Generator, m: int = 60, T: int = 12, regions: int = 9,
                  noise: float = 1.0, together: tuple[tuple[int, int], ...] = ()) -> tuple[Dataset, Partition]:
    """(data, regional partition). Regional levels follow a seasonal curve plus a random walk.

    ``together`` lists 0-based station pairs whose second member is moved into the
    first member's region.
    """
    side = int(np.ceil(np.sqrt(regions)))
    xy = rng.random((m, 2))
    labels = (np.minimum((xy[:, 0] * side).astype(int), side - 1) * side
              + np.minimum((xy[:, 1] * side).astype(int), side - 1)) % regions
    for i, j in together:
        labels[j] = labels[i]
    rho0 = canonicalize(labels)
    region = np.asarray(rho0.labels) - 1
    k = rho0.k
    base = rng.normal(20.0, 4.0, k)
    season = 4.0 * np.cos(2 * np.pi * np.arange(T) / 12.0)
    walk = np.cumsum(rng.normal(0.0, 1.5, (T, k)), axis=0)
    level = base[None, :] + season[:, None] + walk
    y = level[:, region] + noise * rng.standard_normal((T, m))
    return Dataset(y, [f"s{i + 1}" for i in range(m)], [f"{t + 1}" for t in range(T)]), rho0


# -------------------------------------------------------------- replicate study

@dataclass(frozen=True)
class StudyCell:
    prior: str
    value: float
    rho0: str
    h: float
    replicate: int


def _cell_seed(seed: int, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, *[int(k) for k in keys]])


def build_prior(kind: str, value: float, rho0: Partition, M: float = 1.0):
    from .priors import AlphaModel, CPPPrior, CRPPrior, ICRPPrior, LSPPrior

    m = rho0.m
    if kind == "icrp":
        return ICRPPrior(rho0, AlphaModel.constant(value, 1, m), M)
    if kind == "cpp":
        return CPPPrior(rho0, value, M)
    if kind == "lsp":
        return LSPPrior(rho0, value)
    if kind == "crp":
        return CRPPrior(M)
    raise ValueError(f"unknown prior kind {kind!r}")


def _study_task(args):
    from .mcmc import fit

    cells, seed, m, sd, hp, mcmc = args
    rows = []
    first = cells[0]
    data_rng = np.random.default_rng(_cell_seed(seed, 1, round(first.h * 1000), first.replicate))
    data = mixture_dataset(first.h, data_rng, m, sd)
    split = rho_split(data_rng, m)
    truth = rho_true(m)
    for c in cells:
        rho0 = split if c.rho0 == "split" else reference_partition(c.rho0, m, data_rng)
        prior = build_prior(c.prior, c.value, rho0)
        # the chain seed depends on (h, replicate, rho0) only, so tuning values share random numbers
        chain_seed = int(_cell_seed(seed, 2, round(c.h * 1000), c.replicate, RHO0_KINDS.index(c.rho0))
                         .generate_state(1)[0] & 0x7FFFFFFF)
        arch = fit(data, prior, hp, replace(mcmc, seed=chain_seed, chains=1))
        rows.append({
            "prior": c.prior, "value": c.value, "rho0": c.rho0, "h": c.h, "replicate": c.replicate,
            "ari_rho0": float(expected_ari(arch, rho0)[0]),
            "ari_true": float(expected_ari(arch, truth)[0]),
            "ari_rho0_true": adjusted_rand_index(rho0, truth),
            "lpml": lpml(arch), "waic": waic(arch),
        })
    return rows


def replicate_study(priors: list[tuple[str, list[float]]], rho0_kinds: list[str], hs: list[float],
                    replicates: int, mcmc, hp: Hyperparams, seed: int = 0, m: int = 100, sd: float = 0.5,
                    threads: int = 1) -> list[dict]:
    """Fit every (prior, value, rho0, h, replicate) cell; one row of metrics per cell.

    Datasets depend only on (seed, h, replicate), so every prior and tuning value
    sees the same replicated data.
    """
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    for k in rho0_kinds:
        if k not in RHO0_KINDS:
            raise ValueError(f"unknown reference partition {k!r}")
    groups = []
    for h in hs:
        for r in range(replicates):
            cells = [StudyCell(kind, float(v), k, float(h), r) for k in rho0_kinds for kind, vals in priors for v in vals]
            groups.append((cells, seed, m, sd, hp, mcmc))
    if threads > 1 and len(groups) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_study_task, groups))
    else:
        results = [_study_task(g) for g in groups]
    rows = [row for chunk in results for row in chunk]
    order = {(kind, float(v)): n for n, (kind, vals) in enumerate((k, vs) for k, vs in priors) for v in vals}
    rows.sort(key=lambda r: (RHO0_KINDS.index(r["rho0"]), r["h"], order[(r["prior"], r["value"])], r["value"], r["replicate"]))
    return rows


def summarize_study(rows: list[dict]) -> list[dict]:
    """Average each metric over replicates within (prior, value, rho0, h)."""
    keys = []
    groups: dict = {}
    for r in rows:
        key = (r["prior"], r["value"], r["rho0"], r["h"])
        if key not in groups:
            keys.append(key)
            groups[key] = []
        groups[key].append(r)
    out = []
    for key in keys:
        g = groups[key]
        rec = dict(zip(("prior", "value", "rho0", "h"), key))
        rec["replicates"] = len(g)
        for metric in ("ari_rho0", "ari_true", "ari_rho0_true", "lpml", "waic"):
            vals = np.array([x[metric] for x in g])
            rec[metric] = float(vals.mean())
            rec[metric + "_se"] = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
        out.append(rec)
    return out
