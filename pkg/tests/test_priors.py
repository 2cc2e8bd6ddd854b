import itertools
import math

import numpy as np
import pytest
from conftest import tv

from ipart.metrics import variation_of_information
from ipart.partition import Partition, PartitionError, canonicalize, compatible_set, enumerate_partitions, is_compatible
from ipart.priors import (
    AlphaModel, CPPPrior, CRPPrior, ICRPPrior, LSPPrior, alpha_conjugate_update, cpp_log_prob, crp_log_eppf,
    crp_sample, gamma_log_prob, icrp_exact_log_prob, icrp_sample, lsp_conditional, lsp_log_prob,
    parse_prior_spec, prior_table,
)

RHO0 = Partition((1, 1, 2, 2, 2))
PARTS5 = list(enumerate_partitions(5))


def icrp_brute(p, rho0, alphas, M):
    """Sum over all 2^m gamma vectors with the normalizer found by enumerating the compatible set."""
    m = p.m
    total = 0.0
    for g in itertools.product((0, 1), repeat=m):
        if not is_compatible(p, rho0, g):
            continue
        pg = math.prod(a if x else 1 - a for a, x in zip(alphas, g))
        if pg == 0:
            continue
        z = sum(math.exp(crp_log_eppf(q, M)) for q in compatible_set(rho0, g))
        total += pg * math.exp(crp_log_eppf(p, M)) / z
    return total


def test_crp_eppf_known_value():
    # M=1, m=3, {{1,2},{3}}: 1 * 1 * 1! * 0! / (1*2*3)
    assert math.exp(crp_log_eppf((1, 1, 2), 1.0)) == pytest.approx(1 / 6)
    total = sum(math.exp(crp_log_eppf(p, 2.5)) for p in PARTS5)
    assert total == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        crp_log_eppf((1,), 0.0)


def test_crp_sample_law(rng):
    draws = [crp_sample(4, 1.5, rng).labels for _ in range(20000)]
    parts = list(enumerate_partitions(4))
    emp = np.array([sum(d == p.labels for d in draws) for p in parts]) / len(draws)
    exact = np.exp([crp_log_eppf(p, 1.5) for p in parts])
    assert tv(emp, exact) < 0.02


@pytest.mark.parametrize("alpha", [0.0, 0.3, 0.75, 1.0])
def test_icrp_matches_brute_force(alpha):
    for p in PARTS5:
        exact = math.exp(icrp_exact_log_prob(p, RHO0, alpha, 1.0))
        assert exact == pytest.approx(icrp_brute(p, RHO0, [alpha] * 5, 1.0), abs=1e-14)


def test_icrp_unit_specific_alpha_brute_force(rng):
    for _ in range(5):
        m = 4
        rho0 = canonicalize(rng.integers(0, 3, m))
        a = rng.random(m)
        M = float(rng.uniform(0.3, 3))
        for p in enumerate_partitions(m):
            assert math.exp(icrp_exact_log_prob(p, rho0, a, M)) == pytest.approx(icrp_brute(p, rho0, a, M), abs=1e-14)


def test_icrp_endpoints():
    crp = np.exp([crp_log_eppf(p, 1.0) for p in PARTS5])
    at0 = np.exp([icrp_exact_log_prob(p, RHO0, 0.0, 1.0) for p in PARTS5])
    at1 = np.exp([icrp_exact_log_prob(p, RHO0, 1.0, 1.0) for p in PARTS5])
    assert np.max(np.abs(at0 - crp)) <= 1e-12
    assert at1[PARTS5.index(RHO0)] == pytest.approx(1.0, abs=1e-12)


def test_icrp_sampler_law(rng):
    a = np.array([0.9, 0.2, 0.6, 0.4, 0.8])
    exact = np.exp([icrp_exact_log_prob(p, RHO0, a, 1.3) for p in PARTS5])
    idx = {p.labels: j for j, p in enumerate(PARTS5)}
    counts = np.zeros(52)
    for _ in range(40000):
        p, g = icrp_sample(RHO0, a, 1.3, rng)
        assert is_compatible(p, RHO0, g)
        counts[idx[p.labels]] += 1
    assert tv(counts / counts.sum(), exact) < 0.02


def test_icrp_rejects_bad_input():
    with pytest.raises(ValueError):
        icrp_exact_log_prob(RHO0, RHO0, 1.5, 1.0)
    with pytest.raises(PartitionError):
        icrp_exact_log_prob(Partition((1, 1)), RHO0, 0.5, 1.0)
    with pytest.raises(PartitionError):
        icrp_exact_log_prob(RHO0, RHO0, [0.5, 0.5], 1.0)


def test_cpp_brute_force_and_limits():
    def oracle(p, psi):
        w = [math.exp(crp_log_eppf(q, 1.0) - psi * variation_of_information(q, RHO0)) for q in PARTS5]
        return math.exp(crp_log_eppf(p, 1.0) - psi * variation_of_information(p, RHO0)) / sum(w)

    for psi in (0.0, 2.0, 15.0):
        probs = np.exp([cpp_log_prob(p, RHO0, psi, 1.0) for p in PARTS5])
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert probs == pytest.approx([oracle(p, psi) for p in PARTS5], abs=1e-14)
    crp = np.exp([crp_log_eppf(p, 1.0) for p in PARTS5])
    assert np.exp([cpp_log_prob(p, RHO0, 0.0, 1.0) for p in PARTS5]) == pytest.approx(crp, abs=1e-14)
    # frozen derived value: VI in bits, psi = 15
    assert math.exp(cpp_log_prob(RHO0, RHO0, 15.0, 1.0)) == pytest.approx(0.997135, abs=1e-6)
    with pytest.raises(ValueError):
        cpp_log_prob(RHO0, RHO0, -1.0, 1.0)


def test_lsp_normalized_and_concentrates():
    for nu in (100.0, 1.0, 0.05):
        probs = np.exp([lsp_log_prob(p, RHO0, nu) for p in PARTS5])
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
    p_small = math.exp(lsp_log_prob(RHO0, RHO0, 1e-4))
    assert p_small > 0.999
    # the mass at rho0 grows as nu shrinks
    vals = [math.exp(lsp_log_prob(RHO0, RHO0, nu)) for nu in (10.0, 1.0, 0.1, 0.01)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_lsp_conditional_hand_value():
    # unit 2 (0-based) given prefix (1, 1); rho0 opens block 2 at unit 2, K0 = 1
    w = lsp_conditional((1, 1), RHO0, 1.0)
    raw = np.array([(1 + 0) / (1 + 1 + 2), (1 + 1) / (1 + 1 + 1)])
    assert w == pytest.approx(raw / raw.sum())
    assert lsp_conditional((), RHO0, 1.0).tolist() == [1.0]
    with pytest.raises(ValueError):
        lsp_conditional((1,), RHO0, 0.0)


def test_gamma_log_prob():
    assert gamma_log_prob([1, 0, 1], [0.5, 0.25, 0.8]) == pytest.approx(math.log(0.5 * 0.75 * 0.8))
    assert gamma_log_prob([1], [0.0]) == -np.inf


def test_alpha_model_regimes():
    for regime, n in (("global", 1), ("time-local", 3), ("unit-local", 4), ("time-unit-local", 12)):
        am = AlphaModel(regime, 3, 4, 1.0, 1.0, 0.5)
        assert am.n_blocks == n
        assert am.block_index().max() == n - 1
        assert len(am.block_names()) == n
        assert am.matrix().shape == (3, 4)
    with pytest.raises(ValueError):
        AlphaModel("local", 1, 2, 1, 1, 0.5)
    with pytest.raises(ValueError):
        AlphaModel("global", 1, 2, 0, 1, 0.5)
    with pytest.raises(ValueError):
        AlphaModel("unit-local", 1, 3, 1, 1, [0.5, 0.5])


def test_alpha_conjugate_update_law(rng):
    am = AlphaModel("global", 2, 5, 2.0, 3.0, 0.5)
    g = np.ones((2, 5), dtype=int)
    mask = np.ones((2, 5), dtype=bool)
    mask[0] = False
    draws = np.array([alpha_conjugate_update(am, g, rng, mask).values[0] for _ in range(20000)])
    a, b = 2 + 5, 3
    assert draws.mean() == pytest.approx(a / (a + b), abs=0.005)
    fixed = AlphaModel.constant(0.3, 2, 5)
    assert alpha_conjugate_update(fixed, g, rng) is fixed


def test_prior_specs_and_table():
    for prior in (CRPPrior(2.0), ICRPPrior(RHO0, AlphaModel.constant(0.4, 1, 5)), CPPPrior(RHO0, 3.0),
                  LSPPrior(RHO0, 0.5)):
        parts, probs = prior_table(prior, 5)
        assert len(parts) == 52
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_parse_prior_spec():
    p = parse_prior_spec({"type": "icrp", "rho0": [1, 1, 2], "alpha": {"value": 0.3, "fixed": True}})
    assert isinstance(p, ICRPPrior) and p.alpha.values[0] == 0.3
    assert isinstance(parse_prior_spec({"type": "cpp", "rho0": [1, 2], "psi": 2}), CPPPrior)
    with pytest.raises(ValueError):
        parse_prior_spec({"type": "lsp", "rho0": [1, 2]})
    with pytest.raises(ValueError):
        parse_prior_spec({"type": "crp", "bogus": 1})
