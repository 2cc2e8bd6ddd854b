"""Canonical set partitions: representation, enumeration, reduction and compatibility.

Partitions are stored as restricted-growth strings with 1-based cluster labels,
so ``(1, 1, 2)`` groups units 0 and 1 together and leaves unit 2 alone. Unit
indices in this API are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Iterable, Iterator, Sequence

import numpy as np

ENUMERATION_CAP = 13


class PartitionError(ValueError):
    pass


def _relabel(raw: Iterable) -> tuple[int, ...]:
    seen: dict = {}
    out = []
    for x in raw:
        if x not in seen:
            seen[x] = len(seen) + 1
        out.append(seen[x])
    return tuple(out)


@dataclass(frozen=True)
class Partition:
    """A partition of ``m`` units in canonical restricted-growth form."""

    labels: tuple[int, ...]

    def __post_init__(self):
        labels = tuple(int(c) for c in self.labels)
        if labels != _relabel(labels) and labels:
            raise PartitionError(f"labels {labels} are not in canonical restricted-growth form")
        object.__setattr__(self, "labels", labels)

    @property
    def m(self) -> int:
        return len(self.labels)

    @property
    def k(self) -> int:
        return max(self.labels) if self.labels else 0

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __getitem__(self, i):
        return self.labels[i]

    def sizes(self) -> list[int]:
        counts = [0] * self.k
        for c in self.labels:
            counts[c - 1] += 1
        return counts

    def blocks(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.k)]
        for i, c in enumerate(self.labels):
            out[c - 1].append(i)
        return out

    def as_array(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=np.int64)

    def to_string(self) -> str:
        return ",".join(str(c) for c in self.labels)

    @classmethod
    def from_string(cls, text: str) -> "Partition":
        parts = [s for s in text.replace(" ", "").split(",") if s]
        return canonicalize([int(s) for s in parts])

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[int]], m: int | None = None) -> "Partition":
        m = m if m is not None else sum(len(b) for b in blocks)
        raw = [-1] * m
        for j, block in enumerate(blocks):
            for i in block:
                raw[i] = j
        if -1 in raw:
            raise PartitionError("blocks do not cover every unit")
        return canonicalize(raw)

    def __str__(self) -> str:
        return "{" + ",".join("{" + ",".join(str(i + 1) for i in b) + "}" for b in self.blocks()) + "}"


def canonicalize(raw_labels: Iterable) -> Partition:
    """Relabel arbitrary cluster labels by order of first appearance."""
    labels = _relabel(np.asarray(raw_labels).tolist() if isinstance(raw_labels, np.ndarray) else raw_labels)
    if not labels:
        raise PartitionError("cannot canonicalize an empty label sequence")
    return Partition(labels)


def bell_number(n: int) -> int:
    bells = [1]
    for k in range(n):
        bells.append(sum(comb(k, j) * bells[j] for j in range(k + 1)))
    return bells[n]


def enumerate_partitions(m: int, cap: int = ENUMERATION_CAP) -> Iterator[Partition]:
    """Yield every partition of ``m`` units once, in lexicographic restricted-growth order."""
    if m < 1:
        raise PartitionError("m must be positive")
    if m > cap:
        raise PartitionError(f"m={m} exceeds the enumeration cap of {cap}")
    labels = [1] * m
    maxes = [1] * m  # maxes[i] = max(labels[:i+1])
    while True:
        yield _trusted(tuple(labels))
        # find the rightmost position that can be incremented
        i = m - 1
        while i > 0 and labels[i] > maxes[i - 1]:
            i -= 1
        if i == 0:
            return
        labels[i] += 1
        maxes[i] = max(maxes[i - 1], labels[i])
        for j in range(i + 1, m):
            labels[j] = 1
            maxes[j] = maxes[i]


def _trusted(labels: tuple[int, ...]) -> Partition:
    # skips validation; only for labels already known to be canonical
    p = object.__new__(Partition)
    object.__setattr__(p, "labels", labels)
    return p


@dataclass(frozen=True)
class ReducedPartition:
    """A partition restricted to the retained units (0-based, increasing)."""

    labels: tuple[int, ...]
    retained: tuple[int, ...]

    def __eq__(self, other):
        # two empty reductions are equal whatever m they came from
        if not isinstance(other, ReducedPartition):
            return NotImplemented
        if not self.labels and not other.labels:
            return True
        return self.labels == other.labels and self.retained == other.retained

    def __hash__(self):
        return hash((self.labels, self.retained)) if self.labels else hash(())


def reduce(p: Partition, removed: Iterable[int]) -> ReducedPartition:
    removed = set(removed)
    retained = tuple(i for i in range(p.m) if i not in removed)
    return ReducedPartition(_relabel(p.labels[i] for i in retained), retained)


def _check_gamma(gamma, m: int) -> tuple[int, ...]:
    g = tuple(int(x) for x in gamma)
    if len(g) != m:
        raise PartitionError(f"gamma has length {len(g)}, expected {m}")
    if any(x not in (0, 1) for x in g):
        raise PartitionError("gamma entries must be 0 or 1")
    return g


def is_compatible(rho: Partition, rho0: Partition, gamma: Sequence[int]) -> bool:
    """True when units with gamma=1 are grouped among themselves exactly as in ``rho0``.

    Units with gamma=0 are free to move and do not enter the comparison.
    """
    if rho.m != rho0.m:
        raise PartitionError("partitions have different numbers of units")
    g = _check_gamma(gamma, rho.m)
    free = [i for i, x in enumerate(g) if x == 0]
    return reduce(rho, free) == reduce(rho0, free)


def compatible_set(rho0: Partition, gamma: Sequence[int], cap: int = ENUMERATION_CAP) -> Iterator[Partition]:
    g = _check_gamma(gamma, rho0.m)
    fixed = [i for i, x in enumerate(g) if x == 1]
    target = _relabel(rho0.labels[i] for i in fixed)
    for p in enumerate_partitions(rho0.m, cap):
        if _relabel(p.labels[i] for i in fixed) == target:
            yield p
