import json
import math
import warnings

import numpy as np
import pytest
from conftest import brute_partitions

from ipart.metrics import variation_of_information
from ipart.mcmc import DrawsArchive
from ipart.partition import Partition, canonicalize
from ipart.summaries import (
    coclustering, expected_ari, expected_vi, lpml, point_estimate_vi, posterior_lagged_ari, waic, write_report,
)


def archive(labels, loglik=None):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim == 2:
        labels = labels[:, None, :]
    B, T, m = labels.shape
    ll = np.zeros((B, T, m)) if loglik is None else np.asarray(loglik, dtype=float).reshape(B, T, m)
    return DrawsArchive(labels, np.zeros((B, 0)), [], ll, np.zeros(B), np.zeros((B, T), dtype=np.int64),
                        np.arange(1, B + 1), np.zeros(B, dtype=np.int64), {})


def test_coclustering_two_draws():
    cc = coclustering(archive([[1, 1, 2], [1, 2, 2]]))[0]
    assert cc.tolist() == [[1.0, 0.5, 0.0], [0.5, 1.0, 0.5], [0.0, 0.5, 1.0]]


def test_expected_ari_against_reference():
    a = archive([[1, 1, 2, 2], [1, 1, 1, 1]])
    assert expected_ari(a, Partition((1, 1, 2, 2))).tolist() == [0.5]


def test_lpml_hand_value():
    # densities 1/2 and 1/4: harmonic mean 1/3
    ll = np.log([[0.5], [0.25]])
    assert lpml(ll) == pytest.approx(math.log(1 / 3), abs=1e-12)
    assert lpml(np.array([[-1.5, -2.0]])) == pytest.approx(-3.5)


def test_waic_single_and_two_draws():
    assert waic(np.array([[-1.5, -2.0]])) == pytest.approx(7.0)
    ll = np.array([[-1.0, -2.0], [-3.0, -0.5]])
    lppd = sum(math.log((math.exp(ll[0, i]) + math.exp(ll[1, i])) / 2) for i in range(2))
    pw = sum(np.var(ll[:, i], ddof=1) for i in range(2))
    assert waic(ll) == pytest.approx(-2 * (lppd - pw), abs=1e-12)


def test_log_space_stability(rng):
    small = rng.normal(-1, 0.5, size=(40, 6))
    shift = -2000.0
    assert lpml(small + shift) == pytest.approx(lpml(small) + 6 * shift, abs=1e-10 * 12000)
    assert waic(small + shift) == pytest.approx(waic(small) - 12 * shift, abs=1e-10 * 24000)


def test_non_finite_cpo_flagged():
    ll = np.array([[-1.0, -np.inf], [-2.0, -1.0]])
    with pytest.warns(RuntimeWarning):
        value, flagged = lpml(ll, return_flagged=True)
    assert flagged.tolist() == [1]
    assert value == pytest.approx(-math.log(0.5 * (math.e + math.e ** 2)))


def test_noisy_observation_raises_waic(rng):
    ll = rng.normal(-1, 0.1, size=(200, 5))
    noisy = np.column_stack([ll, rng.normal(-6, 2, size=200)])
    assert waic(noisy) > waic(ll)
    assert lpml(noisy) < lpml(ll)


def test_expected_vi_matches_direct():
    draws = np.array([[1, 1, 2], [1, 2, 3], [1, 1, 1]])
    c = Partition((1, 2, 2))
    assert expected_vi(c, draws) == pytest.approx(np.mean([variation_of_information(c, d) for d in draws]))


def test_point_estimate_matches_exhaustive_search(rng):
    parts = brute_partitions(5)
    for _ in range(50):
        B = int(rng.integers(3, 30))
        draws = np.array([canonicalize(rng.integers(0, rng.integers(1, 5), 5)).labels for _ in range(B)])
        scores = np.array([expected_vi(p, draws) for p in parts])
        best = scores.min()
        exact = min(p.labels for p, s in zip(parts, scores) if s <= best + 1e-9)
        assert point_estimate_vi(archive(draws)).labels == exact


def test_tie_goes_to_smallest_labels():
    assert point_estimate_vi(archive([[1, 1], [1, 2]])).labels == (1, 1)


def test_point_estimate_invariant_to_labels_and_order(rng):
    draws = np.array([canonicalize(rng.integers(0, 3, 8)).labels for _ in range(25)])
    base = point_estimate_vi(archive(draws))
    perm = np.array([7, 3, 5])[draws - 1]
    assert point_estimate_vi(archive(perm[rng.permutation(25)])) == base


def test_lagged_ari_needs_two_slices():
    with pytest.raises(ValueError):
        posterior_lagged_ari(archive([[1, 1, 2]]))
    lag = posterior_lagged_ari(archive([[[1, 1, 2], [1, 2, 2]]]))
    assert lag.shape == (2, 2) and lag[0, 0] == 1.0


def test_empty_archive_rejected():
    with pytest.raises(ValueError):
        lpml(np.zeros((0, 3)))


def test_write_report(tmp_path, rng):
    labels = np.array([[[1, 1, 2], [1, 2, 2]], [[1, 1, 1], [1, 2, 2]]])
    a = archive(labels, rng.normal(-1, 0.2, size=(2, 2, 3)))
    rep = write_report(a, tmp_path, rho0=Partition((1, 1, 2)))
    assert {p.name for p in tmp_path.iterdir()} == {
        "summary.json", "coclustering_t1.csv", "coclustering_t2.csv", "lagged_ari.csv", "point_estimate.csv"}
    assert json.loads((tmp_path / "summary.json").read_text())["point_estimate"] == rep["point_estimate"]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert rep["lpml_flagged"] == []
