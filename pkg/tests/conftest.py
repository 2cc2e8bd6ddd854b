import itertools

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from ipart.partition import Partition, enumerate_partitions


def brute_partitions(m):
    """All set partitions of range(m) by brute force over label tuples (independent of RGS enumeration)."""
    seen = set()
    for labs in itertools.product(range(m), repeat=m):
        blocks = frozenset(frozenset(i for i in range(m) if labs[i] == c) for c in set(labs))
        seen.add(blocks)
    out = []
    for blocks in seen:
        labels = [0] * m
        for n, b in enumerate(sorted(blocks, key=min)):
            for i in b:
                labels[i] = n + 1
        out.append(Partition(tuple(labels)))
    return sorted(out, key=lambda p: p.labels)


def conjugate_log_marginal(y, blocks, sigma, theta, tau2):
    """log p(y | partition) with known sigma and mu* ~ N(theta, tau2), by multivariate normal densities."""
    tot = 0.0
    for b in blocks:
        n = len(b)
        cov = sigma ** 2 * np.eye(n) + tau2 * np.ones((n, n))
        tot += multivariate_normal(np.full(n, theta), cov).logpdf(np.asarray(y)[list(b)])
    return tot


def exact_posterior(prior, y, sigma=1.0, theta=0.0, tau2=10.0):
    parts = list(enumerate_partitions(len(y)))
    logp = np.array([prior.log_prob(p) + conjugate_log_marginal(y, p.blocks(), sigma, theta, tau2) for p in parts])
    w = np.exp(logp - logp.max())
    return parts, w / w.sum()


def empirical(parts, labels):
    idx = {p.labels: j for j, p in enumerate(parts)}
    counts = np.bincount([idx[tuple(r)] for r in np.asarray(labels).tolist()], minlength=len(parts))
    return counts / counts.sum()


def tv(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
