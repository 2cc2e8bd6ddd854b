"""Acceptance criteria, one printed PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` to see the verdict lines.
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from conftest import brute_partitions, empirical, exact_posterior, tv
from scipy import integrate
from scipy.stats import beta
from test_metrics import ari_pairs, vi_entropy

from ipart import AlphaModel, CPPPrior, CRPPrior, Dataset, Hyperparams, ICRPPrior, LSPPrior, McmcConfig, Partition
from ipart import cli
from ipart.config import load_config
from ipart.mcmc import default_threads, fit
from ipart.metrics import adjusted_rand_index, variation_of_information
from ipart.partition import canonicalize
from ipart.priors import crp_log_eppf, icrp_exact_log_prob, prior_table
from ipart.summaries import expected_vi, point_estimate_vi
from ipart.synth import replicate_study, summarize_study
from ipart.temporal import SequenceModel, ari_traces, coclustering_tensor, simulate_many

RHO0 = Partition((1, 1, 2, 2, 2))
PARTS = brute_partitions(5)
PRESETS = Path(cli.__file__).parent / "presets"


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail, seconds):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({seconds:.1f} s) {detail}")
        assert ok, detail
    return emit


def test_criterion_1_enumeration(verdict):
    t0 = time.perf_counter()
    grid = np.linspace(0, 1, 20)
    sums = [np.exp([icrp_exact_log_prob(p, RHO0, a, 1.0) for p in PARTS]).sum() for a in grid]
    crp = np.exp([crp_log_eppf(p, 1.0) for p in PARTS])
    at0 = np.exp([icrp_exact_log_prob(p, RHO0, 0.0, 1.0) for p in PARTS])
    at1 = math.exp(icrp_exact_log_prob(RHO0, RHO0, 1.0, 1.0))
    secs = time.perf_counter() - t0
    err_sum, err_crp = max(abs(s - 1) for s in sums), np.abs(at0 - crp).max()
    ok = err_sum < 1e-10 and err_crp <= 1e-12 and abs(at1 - 1) < 1e-12 and secs < 1
    verdict(1, ok, f"max|sum-1|={err_sum:.1e} max|a0-crp|={err_crp:.1e} P1(rho0)={at1:.12f}", secs)


def test_criterion_2_cpp_calibration(verdict):
    t0 = time.perf_counter()
    parts, probs = prior_table(CPPPrior(RHO0, 15.0, 1.0), 5)
    p = probs[parts.index(RHO0)]
    secs = time.perf_counter() - t0
    verdict(2, 0.985 <= p <= 0.995 and secs < 1, f"Pr(rho0 | psi=15)={p:.6f}, target [0.985, 0.995]", secs)


def test_criterion_3_prior_simulation(verdict):
    t0 = time.perf_counter()
    rho0 = Partition(tuple(np.repeat([1, 2, 3, 4], 5).tolist()))
    values = np.repeat([0.25, 0.5, 0.75, 0.95], 5)
    res = {}
    for dep in ("markovian", "conditionally-independent"):
        am = AlphaModel("unit-local", 9, 20, 1, 1, values, fixed=True)
        labels, _ = simulate_many(SequenceModel(dep, rho0, am, 1.0), 5000, seed=1, threads=default_threads())
        res[dep] = labels
    cc = coclustering_tensor(res["markovian"][:, -1])[0]
    block = cc[15:, 15:][~np.eye(5, dtype=bool)]
    _, ari_m = ari_traces(res["markovian"], rho0)
    d = np.diff(ari_m, axis=1)
    z = d.mean(axis=0) / (d.std(axis=0, ddof=1) / np.sqrt(len(d)))
    _, ari_c = ari_traces(res["conditionally-independent"], rho0)
    t = np.arange(9)
    slopes = ((ari_c - ari_c.mean(axis=1, keepdims=True)) @ (t - t.mean())) / ((t - t.mean()) ** 2).sum()
    se = slopes.std(ddof=1) / np.sqrt(len(slopes))
    lo, hi = slopes.mean() - 1.96 * se, slopes.mean() + 1.96 * se
    secs = time.perf_counter() - t0
    ok = block.min() > 0.5 and np.all(z < -2) and lo <= 0 <= hi and secs < 120
    verdict(3, ok, f"(a) min co-clustering 0.95 block={block.min():.3f}; (b) max z of ARI steps={z.max():.2f}; "
                   f"(c) slope CI=[{lo:.5f}, {hi:.5f}]", secs)


def test_criterion_4_posterior_vs_enumeration(verdict):
    y = np.array([-1.2, -0.6, 0.9, 1.6, 1.1])
    hp = Hyperparams(sigma=1.0, theta=0.0, tau2=10.0)
    priors = [ICRPPrior(RHO0, AlphaModel.constant(a, 1, 5)) for a in (0.0, 0.5, 0.9)]
    priors += [CPPPrior(RHO0, 0.0), CPPPrior(RHO0, 10.0), LSPPrior(RHO0, 1.0), LSPPrior(RHO0, 0.05)]
    names = ["icrp a=0", "icrp a=0.5", "icrp a=0.9", "cpp psi=0", "cpp psi=10", "lsp nu=1", "lsp nu=0.05"]
    t0 = time.perf_counter()
    dists = []
    for n, prior in enumerate(priors):
        parts, post = exact_posterior(prior, y, 1.0, 0.0, 10.0)
        arch = fit(Dataset(y), prior, hp, McmcConfig(iters=202000, burnin=2000, thin=1, seed=11 + n))
        dists.append(tv(empirical(parts, arch.labels[:, 0]), post))
    secs = time.perf_counter() - t0
    detail = ", ".join(f"{k}: {d:.4f}" for k, d in zip(names, dists))
    verdict(4, max(dists) < 0.02 and secs < 300, f"TV {detail}", secs)


def _alpha_marginal(p, a, b):
    f = lambda x: math.exp(icrp_exact_log_prob(p, RHO0, x, 1.0)) * beta(a, b).pdf(x)
    return integrate.quad(f, 0, 1)[0]


def test_criterion_5_prior_recovery(verdict):
    flat = Hyperparams(likelihood="flat", sigma=1.0, theta=0.0, tau2=1.0)
    cases = {
        "crp": (CRPPrior(1.0), None),
        "icrp fixed": (ICRPPrior(RHO0, AlphaModel("unit-local", 1, 5, 1, 1, [0.9, 0.1, 0.5, 0.7, 0.3], fixed=True)),
                       None),
        "icrp Be(2,3)": (ICRPPrior(RHO0, AlphaModel("global", 1, 5, 2.0, 3.0, 0.5)),
                         np.array([_alpha_marginal(p, 2.0, 3.0) for p in PARTS])),
        "cpp": (CPPPrior(RHO0, 2.0), None),
        "lsp": (LSPPrior(RHO0, 0.5), None),
    }
    t0 = time.perf_counter()
    dists = {}
    for n, (name, (prior, exact)) in enumerate(cases.items()):
        if exact is None:
            exact = prior_table(prior, 5)[1]
        arch = fit(Dataset(np.zeros((1, 5))), prior, flat, McmcConfig(iters=201000, burnin=1000, thin=1, seed=40 + n))
        dists[name] = tv(empirical(PARTS, arch.labels[:, 0]), exact)
    secs = time.perf_counter() - t0
    detail = ", ".join(f"{k}: {d:.4f}" for k, d in dists.items())
    verdict(5, max(dists.values()) < 0.02 and secs < 180, f"TV {detail}", secs)


def test_criterion_6_replicated_study(verdict):
    cfg = json.loads((PRESETS / "mixture_study.json").read_text())
    study = load_config("compare-priors", cfg)
    t0 = time.perf_counter()
    rows = replicate_study([(g.type, g.numeric(study.m)) for g in study.priors], study.rho0, study.h,
                           study.replicates, study.mcmc.build(study.seed), study.hyper.build(), study.seed,
                           study.m, study.sd, default_threads())
    table = summarize_study(rows)
    secs = time.perf_counter() - t0
    cell = {(r["rho0"], r["h"], r["value"]): r for r in table}
    alphas = sorted({r["value"] for r in table})
    worst_step, low_top = np.inf, []
    for rho0 in study.rho0:
        for h in study.h:
            means = [cell[(rho0, h, a)]["ari_rho0"] for a in alphas]
            worst_step = min(worst_step, np.diff(means).min())
            if means[-1] <= 0.95:
                low_top.append(f"{rho0}/h={h:g}:{means[-1]:.3f}")
    top = max(alphas)
    w_merge, w_true = cell[("merge", 3.0, top)]["waic"], cell[("true", 3.0, top)]["waic"]
    ok = worst_step >= 0 and not low_top and w_merge > w_true and secs < 1800
    verdict(6, ok, f"min step in mean ARI(rho, rho0) over alpha={worst_step:.4f}; cells with ARI<=0.95 at "
                   f"alpha={top}: {low_top or 'none'}; WAIC merge={w_merge:.1f} true={w_true:.1f}", secs)


def test_criterion_7_metric_oracles(verdict):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    err = 0.0
    for _ in range(100):
        m = int(rng.integers(2, 13))
        a = rng.integers(0, rng.integers(1, m + 1), m).tolist()
        b = rng.integers(0, rng.integers(1, m + 1), m).tolist()
        err = max(err, abs(adjusted_rand_index(a, b) - ari_pairs(a, b)), abs(variation_of_information(a, b) - vi_entropy(a, b)))
    matches = 0
    for _ in range(50):
        draws = np.array([canonicalize(rng.integers(0, rng.integers(1, 5), 5)).labels for _ in range(int(rng.integers(3, 30)))])
        scores = np.array([expected_vi(p, draws) for p in PARTS])
        best = min(p.labels for p, s in zip(PARTS, scores) if s <= scores.min() + 1e-9)
        matches += point_estimate_vi(draws).labels == best
    secs = time.perf_counter() - t0
    verdict(7, err <= 1e-12 and matches == 50, f"max oracle error={err:.1e}; VI estimate exact on {matches}/50", secs)


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_8_determinism(verdict, tmp_path):
    configs = {
        "enumerate": json.loads((PRESETS / "enumerate_lsp.json").read_text()),
        "prior-sim": {**json.loads((PRESETS / "prior_sim_markovian.json").read_text()), "replicates": 200},
        "fit": json.loads((PRESETS / "panel_single_unit_local.json").read_text()),
        "compare-priors": {**json.loads((PRESETS / "prior_comparison.json").read_text()), "replicates": 1,
                           "h": [2], "m": 40},
    }
    configs["fit"]["data"]["path"] = str(PRESETS / configs["fit"]["data"]["path"])
    configs["fit"]["mcmc"].update(iters=600, burnin=100, thin=5)
    configs["compare-priors"]["mcmc"].update(iters=300, burnin=100, thin=5)
    t0 = time.perf_counter()
    differing = []
    for name, cfg in configs.items():
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(cfg))
        trees = []
        for run in ("a", "b"):
            out = tmp_path / name / run
            assert cli.main([name, "--config", str(path), "--out", str(out), "--quiet", "--seed", "5"]) == 0
            trees.append(_tree(out))
        if trees[0] != trees[1]:
            differing.append(name)
    secs = time.perf_counter() - t0
    verdict(8, not differing, f"subcommands with differing bytes: {differing or 'none'}", secs)
