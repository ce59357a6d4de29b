import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model
from salbm.datasets import Dataset, stratified_batches
from salbm.model import ModelParams, all_states, exact_boltzmann, kl_divergence, marginal_visible
from salbm.model import empirical_distribution
from salbm.samplers import LsbConfig, exact_sample
from salbm.training import (
    GradientSet,
    MomentumStep,
    TrainConfig,
    TrainHistory,
    cd_train_rbm,
    dmfi_cd_train_srbm,
    init_params,
    load_checkpoint,
    sal_gradient,
    sal_train,
)


def kl_data_model(data, u, beta):
    return kl_divergence(empirical_distribution(data, u.n_v), marginal_visible(u, beta))


def perturbed(u, i, j, h):
    """Shift one coupling pair (i != j) or one bias (i == j) by ``h``."""
    J, f = u.J.copy(), u.f.copy()
    if i == j:
        f[i] += h
    else:
        J[i, j] += h
        J[j, i] += h
    return u.replace(J=J, f=f)


# -- gradient oracles ------------------------------------------------------------------------

@pytest.mark.parametrize("beta", [0.6, 1.0, 1.7])
def test_gradient_matches_finite_differences(beta):
    u = random_model(4, 2, seed=3, std=0.5)
    data = exact_sample(random_model(4, 0, "FBM", seed=8), 1.0, 300, seed=1).samples
    states = all_states(u.N)
    g = sal_gradient(data, states, beta, u, neg_weights=exact_boltzmann(u, beta).probabilities)
    dJ, df = g.to_full()
    h = 1e-4
    mask = u.mask()
    for i in range(u.N):
        for j in range(i, u.N):
            if i != j and not mask[i, j]:
                continue
            fd = (kl_data_model(data, perturbed(u, i, j, h), beta)
                  - kl_data_model(data, perturbed(u, i, j, -h), beta)) / (2 * h) / beta
            got = df[i] if i == j else dJ[i, j]
            assert abs(got - fd) <= 1e-3 * abs(fd) + 1e-9, (i, j, got, fd)


def test_gradient_fbm_reduces_to_visible_moments():
    u = random_model(5, 0, "FBM", seed=1)
    rng = np.random.default_rng(0)
    data = np.where(rng.random((40, 5)) < 0.6, 1, -1)
    neg = np.where(rng.random((70, 5)) < 0.4, 1, -1)
    g = sal_gradient(data, neg, 1.0, u)
    want = neg.T @ neg / 70 - data.T @ data / 40
    np.fill_diagonal(want, 0.0)
    assert np.allclose(g.dV, want, atol=1e-14)
    assert g.dW.shape == (5, 0) and g.dc.shape == (0,)
    assert np.allclose(g.db, neg.mean(0) - data.mean(0), atol=1e-14)


def test_gradient_vanishes_at_moment_matching():
    u = random_model(3, 3, seed=4, std=0.5)
    D = L = 400_000
    data = exact_sample(u, 1.0, D, seed=1).samples[:, :3]
    neg = exact_sample(u, 1.0, L, seed=2)
    g = sal_gradient(data, neg, 1.0, u)
    tol = 3 * np.sqrt(1 / D + 1 / L)
    for block in (g.dV, g.dW, g.db, g.dc):
        assert np.all(np.abs(block) < tol)


def test_gradient_is_row_order_invariant():
    u = random_model(4, 2, seed=5)
    rng = np.random.default_rng(1)
    data = np.where(rng.random((97, 4)) < 0.5, 1, -1)
    neg = np.where(rng.random((131, 6)) < 0.5, 1, -1)
    a = sal_gradient(data, neg, 0.9, u)
    b = sal_gradient(data[rng.permutation(97)], neg[rng.permutation(131)], 0.9, u)
    for x, y in zip((a.dV, a.dW, a.db, a.dc), (b.dV, b.dW, b.db, b.dc)):
        assert np.array_equal(x, y)


def test_gradient_validation():
    u = random_model(3, 2, seed=1)
    with pytest.raises(ValueError):
        sal_gradient(np.zeros((0, 3)), np.ones((2, 5)), 1.0, u)
    with pytest.raises(ValueError):
        sal_gradient(np.ones((2, 3)), np.zeros((0, 5)), 1.0, u)
    with pytest.raises(ValueError):
        sal_gradient(np.ones((2, 3)), np.ones((2, 5)), 0.0, u)


# -- update rule ---------------------------------------------------------------------------------

@given(st.integers(0, 2 ** 31), st.sampled_from(["FBM", "RBM", "SRBM"]))
@settings(max_examples=30, deadline=None)
def test_updates_keep_structure(seed, structure):
    n_h = 0 if structure == "FBM" else 3
    u = random_model(4, n_h, structure, seed=seed)
    step = MomentumStep(u, 0.1, 0.5, 1e-3)
    rng = np.random.default_rng(seed)
    for _ in range(3):
        dV = rng.normal(size=(4, 4))
        g = GradientSet(dV + dV.T, rng.normal(size=(4, n_h)), rng.normal(size=4),
                        rng.normal(size=n_h))
        u = step(u, g)  # ModelParams validates symmetry, diagonal and blocks
    assert np.all(u.J[~u.mask()] == 0.0)


def test_l2_acts_on_couplings_only():
    u = random_model(3, 2, seed=2)
    eta, lam = 0.1, 0.01
    step = MomentumStep(u, eta, 0.0, lam)
    zero = GradientSet(np.zeros((3, 3)), np.zeros((3, 2)), np.zeros(3), np.zeros(2))
    u2 = step(u, zero)
    assert np.array_equal(u2.f, u.f)
    assert np.allclose(u2.J, u.J * (1 - eta * lam), atol=1e-15)


def test_descent_direction():
    # one step moves b toward the data mean when the model mean is lower
    u = ModelParams.zeros(2, 0, "FBM")
    g = sal_gradient(np.ones((4, 2)), -np.ones((4, 2)), 1.0, u)
    u2 = MomentumStep(u, 0.1, 0.0, 0.0)(u, g)
    assert np.all(u2.f > 0)


def test_init_params():
    u = init_params(10, 5, "SRBM", seed=1)
    off = u.J[u.mask()]
    assert np.all(off != 0) and abs(off.std() - 1e-4) < 2e-5
    assert np.all(u.f == 0)
    assert np.all(init_params(10, 5, "RBM", seed=1).V == 0)


# -- SAL loop --------------------------------------------------------------------------------------

def small_cfg(**kw):
    base = dict(eta=0.05, epochs=4, lsb=LsbConfig(sigma=1.0, m_iters=30, n_chains=2000),
                seed=3)
    base.update(kw)
    return TrainConfig(**base)


def test_sal_fixed_point_is_stationary():
    data = Dataset(np.tile(all_states(4), (50, 1)))
    u0 = ModelParams.zeros(4, 0, "FBM")
    u, hist = sal_train(u0, data, small_cfg(epochs=10, lsb=LsbConfig(n_chains=10_000, m_iters=10)))
    assert np.max(np.abs(u.J)) < 0.05 and np.max(np.abs(u.f)) < 0.05
    assert np.all(hist.column("kl_exact") < 1e-2)


def test_sal_lowers_kl_on_structured_data():
    target = random_model(6, 0, "FBM", seed=4, std=0.8)
    data = Dataset(exact_sample(target, 1.0, 3000, seed=2).samples)
    u, hist = sal_train(init_params(6, 3, "SRBM", seed=1), data, small_cfg(epochs=40))
    kl = hist.column("kl_exact")
    assert kl[-1] < 0.6 * kl[0]


def test_sal_bit_reproducible_and_resumable(tmp_path):
    data = Dataset(exact_sample(random_model(5, 0, "FBM", seed=1), 1.0, 500, seed=1).samples)
    u0 = init_params(5, 2, "SRBM", seed=2)
    cfg = small_cfg(epochs=4, checkpoint_every=2, out_dir=str(tmp_path))
    a, ha = sal_train(u0, data, cfg)
    b, hb = sal_train(u0, data, cfg)
    assert np.array_equal(a.J, b.J) and np.array_equal(a.f, b.f)
    assert np.array_equal(ha.column("beta_eff"), hb.column("beta_eff"))
    u_mid, state = load_checkpoint(tmp_path / "sal_epoch00002.json")
    assert state["epoch"] == 2
    c, hc = sal_train(u0, data, cfg, resume=(u_mid, state))
    assert np.array_equal(a.J, c.J) and np.array_equal(a.f, c.f)
    assert list(hc.column("epoch")) == [3, 4]
    assert np.array_equal(ha.column("kl_exact")[2:], hc.column("kl_exact"))


def test_sal_cem_fallback_on_first_epoch():
    data = Dataset(np.ones((10, 3), dtype=np.int8))
    u0 = ModelParams.zeros(3, 2)
    _, hist = sal_train(u0, data, small_cfg(epochs=1))
    assert hist.records[0].beta_eff == 1.0
    assert hist.records[0].estimator.endswith("fallback")


def test_sal_fbm_skips_estimation():
    data = Dataset(np.ones((10, 3), dtype=np.int8))
    _, hist = sal_train(ModelParams.zeros(3, 0, "FBM"), data, small_cfg(epochs=2))
    assert set(hist.records[i].estimator for i in range(2)) == {"none"}


def test_sal_minibatch_counts_and_history_csv(tmp_path):
    labels = np.repeat(np.arange(3), 20)
    vecs = np.where(np.random.default_rng(0).random((60, 4)) < 0.5, 1, -1)
    data = Dataset(vecs, labels)
    seen = []
    cfg = small_cfg(epochs=2, batch_size=20, stratify=True, eval_every=1)
    _, hist = sal_train(init_params(4, 2, "SRBM", 0), data, cfg,
                        callback=lambda e, u: seen.append(e))
    assert seen == [1, 2]
    p = tmp_path / "h.csv"
    hist.to_csv(p, ["seed=3"])
    lines = p.read_text().splitlines()
    assert lines[1] == "epoch,beta_eff,estimator,kl_exact,grad_norm,seconds"
    back = TrainHistory.from_csv(p)
    assert np.array_equal(back.column("kl_exact"), hist.column("kl_exact"))


def test_stratified_batches_balance_classes():
    labels = np.repeat(np.arange(10), [380, 390, 385, 389, 387, 376, 377, 387, 380, 382])
    batches = stratified_batches(labels, 382, seed=1)
    assert len(batches) == 10
    assert sorted(np.concatenate(batches).tolist()) == list(range(len(labels)))
    for b in batches:
        counts = np.bincount(labels[b], minlength=10)
        assert counts.max() - counts.min() <= 2


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(eta=0.0)
    with pytest.raises(ValueError):
        TrainConfig(alpha=1.0)
    with pytest.raises(ValueError):
        TrainConfig(beta_estimator="magic")
    cfg = small_cfg()
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


# -- CD baselines -------------------------------------------------------------------------------------

def test_cd_first_step_moves_visible_bias_only():
    rng = np.random.default_rng(1)
    D = 4000
    data = Dataset(np.where(rng.random((D, 5)) < 0.8, 1, -1))
    u0 = ModelParams.zeros(5, 3, "RBM")
    eta = 0.1
    u, _ = cd_train_rbm(u0, data, 1, small_cfg(eta=eta, epochs=1, l2=0.0))
    assert np.all(u.W == 0) and np.all(u.c == 0)
    assert np.allclose(u.b, eta * data.vectors.mean(0), atol=4 * eta / np.sqrt(D))


def test_cd_requires_rbm():
    with pytest.raises(ValueError):
        cd_train_rbm(random_model(3, 2, seed=0), Dataset(np.ones((2, 3))), 1, small_cfg())


def test_cd_improves_fit():
    target = random_model(5, 0, "FBM", seed=6, std=0.8)
    data = Dataset(exact_sample(target, 1.0, 3000, seed=3).samples)
    u, hist = cd_train_rbm(init_params(5, 4, "RBM", 1), data, 10, small_cfg(epochs=60, eta=0.1))
    kl = hist.column("kl_exact")
    assert kl[-1] < 0.6 * kl[0]


def test_dmfi_with_full_step_equals_meanfield_cd():
    data = Dataset(exact_sample(random_model(4, 0, "FBM", seed=2), 1.0, 300, seed=1).samples)
    u0 = init_params(4, 2, "RBM", 5)
    cfg = small_cfg(epochs=5)
    a, ha = cd_train_rbm(u0, data, 2, cfg, visible="meanfield")
    b, hb = dmfi_cd_train_srbm(u0, data, 2, cfg, iters=1, damping=1.0)
    assert np.array_equal(a.J, b.J) and np.array_equal(a.f, b.f)


def test_dmfi_without_visible_couplings_tracks_meanfield_cd():
    data = Dataset(exact_sample(random_model(3, 0, "FBM", seed=3, std=1.0), 1.0, 2000,
                                seed=1).samples)
    u0 = init_params(3, 2, "RBM", 2)
    cfg = small_cfg(epochs=30, eta=0.05)
    a, ha = cd_train_rbm(u0, data, 1, cfg, visible="meanfield")
    b, hb = dmfi_cd_train_srbm(u0, data, 1, cfg)
    assert np.max(np.abs(ha.column("kl_exact") - hb.column("kl_exact"))) < 0.1 * ha.column(
        "kl_exact").max()
    assert np.max(np.abs(a.J - b.J)) < 0.1 * np.max(np.abs(a.J))


def test_dmfi_trains_visible_couplings():
    data = Dataset(exact_sample(random_model(4, 0, "FBM", seed=2, std=1.0), 1.0, 1000,
                                seed=1).samples)
    u, _ = dmfi_cd_train_srbm(init_params(4, 2, "SRBM", 1), data, 1, small_cfg(epochs=5))
    assert np.any(np.abs(u.V) > 1e-3)
