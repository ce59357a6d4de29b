import json

import numpy as np
import pytest

from conftest import random_model
from salbm.datasets import Dataset, gen_3spin
from salbm.evaluation import (
    TaskReport,
    classify,
    classify_many,
    conditional_generate,
    model_kl,
    overlap_histogram,
    reconstruct,
    reconstruction_error,
    sampling_accuracy,
)
from salbm.model import (
    ModelParams,
    all_states,
    empirical_distribution,
    exact_boltzmann,
    kl_divergence,
    marginal_visible,
)
from salbm.samplers import LsbConfig, SampleSet, exact_sample, lsb_sample


def test_sampling_accuracy_point_mass_vs_uniform():
    u = ModelParams.zeros(4, 0, "FBM")
    s = SampleSet(np.ones((100, 4)), 4)
    assert sampling_accuracy(s, u, 1.0) == pytest.approx(np.log(16), abs=1e-12)


def test_sampling_accuracy_exact_frequencies():
    u = random_model(3, 0, "FBM", seed=1)
    # a sample set whose empirical frequencies equal uniform, scored against beta = 0
    s = SampleSet(np.tile(all_states(3), (4, 1)), 3)
    assert sampling_accuracy(s, u, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_model_kl_properties():
    u = ModelParams.zeros(3, 2)
    uniform = Dataset(np.tile(all_states(3), (3, 1)))
    assert model_kl(u, 1.0, uniform) == pytest.approx(0.0, abs=1e-12)
    w = random_model(8, 2, seed=2, std=0.3)
    data = Dataset(exact_sample(w, 1.0, 100_000, seed=1).samples[:, :8])
    kl = model_kl(w, 1.0, data)
    assert 0 <= kl < 0.02
    assert kl == kl_divergence(empirical_distribution(data.vectors, 8), marginal_visible(w, 1.0))


# -- overlaps ------------------------------------------------------------------------------

def test_overlap_identical_vectors():
    h = overlap_histogram(np.ones((5, 6)), bins=10)
    assert h.counts[-1] == 10 and h.counts.sum() == 10 and h.n_pairs == 10


def test_overlap_plus_minus_pairs():
    v = np.array([[1, -1, 1, 1]] * 3 + [[-1, 1, -1, -1]] * 3)
    h = overlap_histogram(v, bins=8)
    assert h.counts[0] + h.counts[-1] == h.n_pairs == 15


def test_overlap_pair_cap_and_determinism():
    v = np.where(np.random.default_rng(0).random((2000, 10)) < 0.5, 1, -1)
    a = overlap_histogram(v, bins=11, pair_cap=5000, seed=3)
    b = overlap_histogram(v, bins=11, pair_cap=5000, seed=3)
    assert a.n_pairs == 5000 and np.array_equal(a.counts, b.counts)
    full = overlap_histogram(v[:100], bins=11)
    assert full.n_pairs == 100 * 99 // 2


def test_overlap_3spin_is_glassy():
    _, data = gen_3spin(10, 2.0, 9600, seed=1)
    h = overlap_histogram(data, bins=21)
    dens = h.density()
    centre = len(dens) // 2
    # not paramagnetic: substantial mass far from q = 0
    assert dens[np.abs(h.centers) > 0.5].sum() > 0.2
    # not a ferromagnet: substantial mass at intermediate overlaps
    assert dens[np.abs(h.centers) < 0.5].sum() > 0.3
    assert dens[centre] < 0.5


# -- reconstruction ---------------------------------------------------------------------------

def test_reconstruct_empty_mask_is_identity():
    u = random_model(6, 3, seed=1)
    img = np.array([1, -1, 1, 1, -1, 1], dtype=np.int8)
    assert np.array_equal(reconstruct(u, img, [], LsbConfig(n_chains=10)), img)


def test_reconstruct_untrained_is_random():
    u = ModelParams.zeros(42, 21)
    imgs = np.where(np.random.default_rng(1).random((40, 42)) < 0.5, 1, -1)
    err = reconstruction_error(u, imgs, np.arange(10, 30), LsbConfig(n_chains=96, m_iters=20))
    assert abs(err.mean() - 0.5) < 0.06


def test_reconstruct_uses_couplings():
    # strong ferromagnetic visible couplings: masked pixels copy the intact ones
    n = 6
    V = 2.0 * (np.ones((n, n)) - np.eye(n))
    u = ModelParams.from_blocks(V=V, W=np.zeros((n, 1)), b=np.zeros(n), c=[0.0])
    img = -np.ones(n, dtype=np.int8)
    out = reconstruct(u, img, [0, 1], LsbConfig(sigma=0.5, n_chains=50, m_iters=30))
    assert np.array_equal(out, img)


def test_reconstruct_errors():
    u = random_model(3, 1, seed=0)
    with pytest.raises(ValueError):
        reconstruct(u, np.ones(3), [0, 1, 2], LsbConfig(n_chains=2))
    with pytest.raises(IndexError):
        reconstruct(u, np.ones(3), [5], LsbConfig(n_chains=2))


# -- generation and classification -------------------------------------------------------------

def test_conditional_generate_empty_condition_is_lsb():
    u = random_model(4, 2, seed=3)
    cfg = LsbConfig(n_chains=30, m_iters=10, seed=4)
    s = conditional_generate(u, {}, cfg)
    assert np.array_equal(s.samples, lsb_sample(u, cfg).visible)


def test_conditional_generate_respects_fixed():
    u = random_model(5, 2, seed=3)
    s = conditional_generate(u, {0: 1, 4: -1}, LsbConfig(n_chains=50, m_iters=10))
    assert np.all(s.samples[:, 0] == 1) and np.all(s.samples[:, 4] == -1)


def test_classify_tie_goes_to_lowest_class():
    # with only label spins strongly pinned to -1 the label means are all -1
    u = ModelParams.from_blocks(V=np.zeros((6, 6)), W=np.zeros((6, 1)),
                                b=np.r_[np.zeros(2), -20 * np.ones(4)], c=[0.0])
    assert classify(u, np.ones(2), LsbConfig(sigma=0.1, n_chains=20, m_iters=5), n_classes=4) == 0


def test_classify_reads_biased_label():
    b = np.r_[np.zeros(3), -5.0, -5.0, 5.0, -5.0]
    u = ModelParams.from_blocks(V=np.zeros((7, 7)), W=np.zeros((7, 1)), b=b, c=[0.0])
    assert classify(u, np.ones(3), LsbConfig(sigma=0.5, n_chains=40, m_iters=10), n_classes=4) == 2


def test_classify_many_deterministic():
    u = random_model(6, 3, seed=4)
    imgs = np.where(np.random.default_rng(2).random((8, 3)) < 0.5, 1, -1)
    cfg = LsbConfig(n_chains=20, m_iters=10, seed=5)
    a = classify_many(u, imgs, cfg, n_classes=3)
    assert np.array_equal(a, classify_many(u, imgs, cfg, n_classes=3))
    assert a.min() >= 0 and a.max() <= 2


def test_task_report_io(tmp_path):
    rep = TaskReport("classify", {"accuracy": 0.5}, [{"index": 0, "label": 1, "predicted": 1}])
    rep.to_json(tmp_path / "r.json", {"seed": 1})
    rep.to_csv(tmp_path / "r.csv", ["seed=1"])
    assert json.loads((tmp_path / "r.json").read_text())["metrics"]["accuracy"] == 0.5
    assert (tmp_path / "r.csv").read_text().splitlines()[1] == "index,label,predicted"
    with pytest.raises(ValueError):
        TaskReport("x", {"bad": float("nan")})
