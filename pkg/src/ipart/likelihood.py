"""Gaussian hierarchical observation models and dataset ingestion.

Single time point::

    y_i | c, mu*, sigma*  ~ N(mu*_{c_i}, sigma*_{c_i}^2)
    mu*_j ~ N(theta, tau^2),  sigma*_j ~ U(0, A_sigma)
    theta ~ N(m0, s0^2),      tau ~ U(0, A_tau)

With T > 1 time points each slice gets its own (theta_t, tau_t) drawn from
N(phi0, lambda^2) x U(0, A_tau), and (phi0, lambda) ~ N(m0, s0^2) x U(0, A_lambda).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Malformed input data; the message carries the offending line number when known."""


@dataclass
class Dataset:
    y: np.ndarray  # T x m
    unit_ids: list[str] = field(default_factory=list)
    time_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        if y.ndim == 1:
            y = y[None, :]
        if y.ndim != 2 or y.size == 0:
            raise DataError("observations must form a nonempty T x m matrix")
        if not np.all(np.isfinite(y)):
            raise DataError("observations must be finite; missing values are not supported")
        self.y = y
        if not self.unit_ids:
            self.unit_ids = [str(i + 1) for i in range(y.shape[1])]
        if not self.time_ids:
            self.time_ids = [str(t + 1) for t in range(y.shape[0])]
        if len(self.unit_ids) != y.shape[1] or len(self.time_ids) != y.shape[0]:
            raise DataError("unit/time ids do not match the data dimensions")

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def m(self) -> int:
        return self.y.shape[1]


@dataclass
class Hyperparams:
    """Hyperparameters of the Gaussian hierarchy.

    ``A_sigma=None`` means sd(Y)/2. Setting ``sigma`` fixes every cluster scale
    (known-variance model); ``theta``/``tau2`` fix the cluster-mean prior.
    ``likelihood="flat"`` replaces the data model by a constant, which turns any
    sampler into a prior sampler.
    """

    A_sigma: float | None = None
    A_tau: float = 100.0
    A_lambda: float = 5.0
    m0: float = 0.0
    s02: float = 100.0 ** 2
    sigma: float | None = None
    theta: float | None = None
    tau2: float | None = None
    likelihood: str = "gaussian"

    def __post_init__(self):
        for name in ("A_sigma", "A_tau", "A_lambda", "s02", "sigma", "tau2"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if self.likelihood not in ("gaussian", "flat"):
            raise ValueError("likelihood must be 'gaussian' or 'flat'")
        if (self.theta is None) != (self.tau2 is None):
            raise ValueError("theta and tau2 must be fixed together")

    def resolved_A_sigma(self, data: Dataset) -> float:
        if self.A_sigma is not None:
            return float(self.A_sigma)
        sd = float(np.std(data.y, ddof=1)) if data.y.size > 1 else 1.0
        return sd / 2.0 if sd > 0 else 1.0


@dataclass
class ClusterParams:
    mu: list[np.ndarray]  # per t, length k_t
    sigma: list[np.ndarray]
    theta: np.ndarray
    tau: np.ndarray
    phi0: float = 0.0
    lam: float = 1.0


def _norm_logpdf(x, mu, s):
    return -0.5 * math.log(2 * math.pi) - np.log(s) - 0.5 * ((x - mu) / s) ** 2


def pointwise_log_likelihood(data: Dataset, seq, params: ClusterParams) -> np.ndarray:
    """T x m array of log N(y_ti | mu*_{c_ti t}, sigma*_{c_ti t})."""
    from .temporal import PartitionSequence

    parts = seq.partitions if isinstance(seq, PartitionSequence) else list(seq)
    if len(parts) != data.T:
        raise IndexError(f"sequence has {len(parts)} partitions but data has {data.T} time points")
    out = np.empty_like(data.y)
    for t, p in enumerate(parts):
        c = np.asarray(p.labels if hasattr(p, "labels") else p, dtype=np.int64) - 1
        mu, sg = np.asarray(params.mu[t]), np.asarray(params.sigma[t])
        if c.size != data.m:
            raise IndexError("partition size does not match the number of units")
        if c.max() >= mu.size or c.max() >= sg.size:
            raise IndexError(f"time {t + 1}: cluster label {c.max() + 1} has no parameters")
        out[t] = _norm_logpdf(data.y[t], mu[c], sg[c])
    return out


def log_likelihood(data: Dataset, seq, params: ClusterParams) -> float:
    return float(pointwise_log_likelihood(data, seq, params).sum())


def gibbs_update_cluster_params(data: Dataset, seq, params: ClusterParams, hp: Hyperparams,
                                rng: np.random.Generator) -> ClusterParams:
    """One conjugate/slice sweep over (mu*, sigma*, theta, tau, phi0, lambda) given the partitions."""
    from . import _kernels as K
    from .mcmc import _pack_params, _unpack_params, _hp_config

    parts = seq.partitions if hasattr(seq, "partitions") else list(seq)
    lab = np.array([np.asarray(p.labels) - 1 for p in parts], dtype=np.int64)
    k, cnt, mu, sig, theta, tau, glob = _pack_params(lab, params, data.m + 8)
    icfg, fcfg = _hp_config(data, hp, n_aux=1)
    K.seed(int(rng.integers(2 ** 31 - 1)))
    K.param_pass(data.y, lab, k, cnt, mu, sig, theta, tau, glob, icfg, fcfg)
    return _unpack_params(k, mu, sig, theta, tau, glob)


# ---------------------------------------------------------------------- ingestion

def _parse_float(text: str, lineno: int, what: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"line {lineno}: {what} {text!r} is not a number") from None
    if not math.isfinite(v):
        raise DataError(f"line {lineno}: {what} must be finite")
    return v


def read_long_csv(path: str | Path) -> Dataset:
    """Read ``unit,time,value`` rows (header required); every (unit, time) cell exactly once."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise DataError("line 1: empty file") from None
        if header != ["unit", "time", "value"]:
            raise DataError(f"line 1: expected header unit,time,value, got {','.join(header)}")
        cells: dict[tuple[str, str], float] = {}
        units: list[str] = []
        times: list[str] = []
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DataError(f"line {lineno}: expected 3 fields, got {len(row)}")
            u, t, v = (c.strip() for c in row)
            if not u or not t:
                raise DataError(f"line {lineno}: unit and time must be nonempty")
            if (u, t) in cells:
                raise DataError(f"line {lineno}: duplicate observation for unit {u} at time {t}")
            cells[(u, t)] = _parse_float(v, lineno, "value")
            if u not in units:
                units.append(u)
            if t not in times:
                times.append(t)
    if not cells:
        raise DataError("no observations found")
    times = _sorted_ids(times)
    units = _sorted_ids(units)
    y = np.empty((len(times), len(units)))
    for a, t in enumerate(times):
        for b, u in enumerate(units):
            if (u, t) not in cells:
                raise DataError(f"missing observation for unit {u} at time {t}")
            y[a, b] = cells[(u, t)]
    return Dataset(y, units, times)


def _sorted_ids(ids: list[str]) -> list[str]:
    try:
        return sorted(ids, key=float)
    except ValueError:
        return ids


def read_wide_csv(path: str | Path) -> Dataset:
    """Read a matrix with one row per time point; the header row names the units.

    A leading column named ``time`` is taken as time ids.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("line 1: empty file") from None
        has_time = header[0].lower() == "time"
        units = header[1:] if has_time else header
        if not units or any(not u for u in units):
            raise DataError("line 1: header must name every unit column")
        rows, times = [], []
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            if has_time:
                times.append(row[0].strip())
                row = row[1:]
            rows.append([_parse_float(c.strip(), lineno, "value") for c in row])
    if not rows:
        raise DataError("no observations found")
    return Dataset(np.array(rows), units, times if has_time else [])


def read_dataset(path: str | Path, fmt: str = "auto") -> Dataset:
    if fmt == "auto":
        with open(path, newline="") as fh:
            first = fh.readline().strip().lower().replace(" ", "")
        fmt = "long" if first == "unit,time,value" else "wide"
    if fmt == "long":
        return read_long_csv(path)
    if fmt == "wide":
        return read_wide_csv(path)
    raise ValueError(f"unknown data format {fmt!r}")


def write_long_csv(data: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit", "time", "value"])
        for a, t in enumerate(data.time_ids):
            for b, u in enumerate(data.unit_ids):
                w.writerow([u, t, repr(float(data.y[a, b]))])
