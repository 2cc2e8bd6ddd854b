import numpy as np
import pytest
from conftest import brute_partitions

from ipart.partition import (
    Partition, PartitionError, ReducedPartition, bell_number, canonicalize, compatible_set,
    enumerate_partitions, is_compatible, reduce,
)


def test_canonical_form_enforced():
    assert Partition((1, 1, 2)).k == 2
    with pytest.raises(PartitionError):
        Partition((2, 1, 1))
    assert canonicalize([7, 7, 3, 7]).labels == (1, 1, 2, 1)
    assert canonicalize(np.array([5, 0, 5])).labels == (1, 2, 1)


def test_string_and_blocks_round_trip():
    p = Partition((1, 2, 1, 3))
    assert Partition.from_string(p.to_string()) == p
    assert Partition.from_blocks(p.blocks()) == p
    assert str(p) == "{{1,3},{2},{4}}"
    assert p.sizes() == [2, 1, 1]


def test_from_blocks_must_cover():
    with pytest.raises(PartitionError):
        Partition.from_blocks([[0, 1]], m=3)


@pytest.mark.parametrize("m", range(1, 8))
def test_enumeration_matches_brute_force(m):
    parts = list(enumerate_partitions(m))
    assert len(parts) == bell_number(m)
    assert parts == brute_partitions(m)
    assert parts == sorted(parts, key=lambda p: p.labels)


def test_bell_numbers():
    assert [bell_number(n) for n in range(8)] == [1, 1, 2, 5, 15, 52, 203, 877]


def test_enumeration_cap():
    with pytest.raises(PartitionError):
        next(enumerate_partitions(14))
    with pytest.raises(PartitionError):
        next(enumerate_partitions(0))


def test_reduce_relabels_retained_units():
    p = Partition((1, 2, 2, 3, 1))
    r = reduce(p, {0})
    assert r.labels == (1, 1, 2, 3) and r.retained == (1, 2, 3, 4)
    assert reduce(p, range(5)) == reduce(Partition((1,)), {0})
    assert isinstance(r, ReducedPartition)


def test_compatibility_examples():
    rho0 = Partition((1, 1, 2, 2, 2))
    assert is_compatible(rho0, rho0, [1] * 5)
    assert is_compatible(Partition((1, 2, 3, 4, 5)), rho0, [0] * 5)
    # units 0 and 1 fixed together in rho0 but split in rho
    assert not is_compatible(Partition((1, 2, 2, 2, 2)), rho0, [1, 1, 0, 0, 0])
    # only one fixed unit: every partition is compatible
    assert is_compatible(Partition((1, 2, 2, 2, 2)), rho0, [1, 0, 0, 0, 0])
    with pytest.raises(PartitionError):
        is_compatible(rho0, rho0, [1, 0])
    with pytest.raises(PartitionError):
        is_compatible(rho0, rho0, [2, 0, 0, 0, 0])


def test_compatible_set_brute_force(rng):
    for _ in range(20):
        m = int(rng.integers(2, 7))
        rho0 = canonicalize(rng.integers(0, 3, m))
        g = rng.integers(0, 2, m)
        fixed = np.flatnonzero(g)
        expected = []
        for p in brute_partitions(m):
            ok = all((p.labels[i] == p.labels[j]) == (rho0.labels[i] == rho0.labels[j]) for i in fixed for j in fixed)
            if ok:
                expected.append(p)
        assert list(compatible_set(rho0, g)) == expected


def test_compatible_set_size_all_fixed_and_all_free():
    rho0 = Partition((1, 1, 2, 2, 2))
    assert list(compatible_set(rho0, [1] * 5)) == [rho0]
    assert len(list(compatible_set(rho0, [0] * 5))) == 52
