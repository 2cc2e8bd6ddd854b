"""Agreement and distance between partitions: adjusted Rand index and variation of information.

VI is reported in bits. Multiply by ``ln 2`` to convert to nats.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .partition import Partition, PartitionError


def _labels(p) -> np.ndarray:
    if isinstance(p, Partition):
        return p.as_array()
    return np.asarray(p, dtype=np.int64)


@dataclass(frozen=True)
class ContingencyTable:
    table: np.ndarray  # k1 x k2 co-membership counts

    @property
    def rows(self) -> np.ndarray:
        return self.table.sum(axis=1)

    @property
    def cols(self) -> np.ndarray:
        return self.table.sum(axis=0)

    @property
    def m(self) -> int:
        return int(self.table.sum())

    @classmethod
    def from_partitions(cls, p, q) -> "ContingencyTable":
        a, b = _labels(p), _labels(q)
        if a.shape != b.shape:
            raise PartitionError(f"partitions have different sizes ({a.size} vs {b.size})")
        _, ia = np.unique(a, return_inverse=True)
        _, ib = np.unique(b, return_inverse=True)
        k1, k2 = ia.max() + 1, ib.max() + 1
        table = np.bincount(ia * k2 + ib, minlength=k1 * k2).reshape(k1, k2)
        return cls(table)


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1.0) / 2.0


def adjusted_rand_index(p, q) -> float:
    """Hubert-Arabie adjusted Rand index."""
    ct = ContingencyTable.from_partitions(p, q)
    n = ct.m
    sum_ij = _comb2(ct.table).sum()
    sum_a = _comb2(ct.rows).sum()
    sum_b = _comb2(ct.cols).sum()
    total = n * (n - 1) / 2.0
    if total == 0:
        return 1.0
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions trivial (all singletons or one block) in the same way
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def _xlog2x(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log2(x[pos])
    return out


def variation_of_information(p, q) -> float:
    """VI(p, q) = H(p) + H(q) - 2 I(p, q), in bits."""
    ct = ContingencyTable.from_partitions(p, q)
    n = ct.m
    val = (_xlog2x(ct.rows).sum() + _xlog2x(ct.cols).sum() - 2.0 * _xlog2x(ct.table).sum()) / n
    return float(max(val, 0.0))


def entropy(p) -> float:
    a = _labels(p)
    counts = np.bincount(np.unique(a, return_inverse=True)[1])
    n = a.size
    return float(np.log2(n) - _xlog2x(counts).sum() / n)


def ari_many(draws: np.ndarray, ref) -> np.ndarray:
    """ARI of each row of ``draws`` (B x m integer labels) against one reference partition."""
    draws = np.asarray(draws, dtype=np.int64)
    ref = _labels(ref)
    return np.array([adjusted_rand_index(row, ref) for row in draws])
