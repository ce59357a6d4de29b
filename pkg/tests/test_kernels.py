"""RNG streams and the numba/numpy kernel twins against plain-Python loops."""

import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import random_model
from salbm import kernels
from salbm._jit import HAVE_NUMBA
from salbm.rng import (
    chain_keys,
    derive_seed,
    normal_at,
    normal_np,
    uniform_at,
    uniform_np,
)

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba disabled")


def test_uniform_twins_agree():
    keys = chain_keys(3, 4)
    ctr = np.arange(50, dtype=np.uint64)
    got = uniform_np(keys[:, None], ctr[None, :])
    want = np.array([[uniform_at(k, int(c)) for c in ctr] for k in keys])
    assert np.array_equal(got, want)


def test_normal_twins_agree():
    key = chain_keys(9, 1)[0]
    idx = np.arange(41, dtype=np.uint64)
    assert np.allclose(normal_np(key, idx), [normal_at(key, int(i)) for i in idx], atol=1e-15)


def test_stream_statistics():
    key = chain_keys(1, 1)[0]
    u = uniform_np(key, np.arange(200_000, dtype=np.uint64))
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.005 and abs(u.var() - 1 / 12) < 0.002
    z = normal_np(key, np.arange(200_000, dtype=np.uint64))
    assert abs(z.mean()) < 0.01 and abs(z.std() - 1.0) < 0.01
    assert abs(np.mean(z ** 4) - 3.0) < 0.1


def test_chain_keys_depend_on_index_only():
    a = chain_keys(5, 10)
    b = chain_keys(5, 4, offset=6)
    assert np.array_equal(a[6:], b)
    assert len(set(a.tolist())) == 10
    assert not np.array_equal(chain_keys(6, 10), a)


def test_derive_seed_distinguishes_tags():
    seeds = {derive_seed(1, t, e) for t in range(5) for e in range(50)}
    assert len(seeds) == 250
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)


# -- plain-Python reference chains ---------------------------------------------------

def ref_lsb_chain(J, f, delta, sigma, m_iters, key, clip=False):
    N = len(f)
    P = (N + 1) // 2
    sgn = lambda a: 1.0 if a >= 0 else -1.0  # noqa: E731
    x = [1.0 if uniform_at(key, i) < 0.5 else -1.0 for i in range(N)]
    y = [sigma * normal_at(key, i) for i in range(N)]
    for k in range(m_iters):
        s = [sgn(xi) for xi in x]
        for i in range(N):
            y[i] += (sum(J[i][j] * s[j] for j in range(N)) + f[i]) * delta
        for i in range(N):
            xi = x[i] + y[i] * delta
            x[i] = min(1.0, max(-1.0, xi)) if clip else sgn(xi)
        y = [sigma * normal_at(key, 2 * (k + 1) * P + i) for i in range(N)]
    return [int(sgn(xi)) for xi in x]


def ref_gibbs_chain(J, f, beta, sweeps, key):
    N = len(f)
    s = [1.0 if uniform_at(key, i) < 0.5 else -1.0 for i in range(N)]
    for t in range(sweeps):
        for i in range(N):
            h = sum(J[i][j] * s[j] for j in range(N)) + f[i]
            p = 1.0 / (1.0 + np.exp(-2.0 * beta * h))
            s[i] = 1.0 if uniform_at(key, N + t * N + i) < p else -1.0
    return [int(v) for v in s]


@pytest.mark.parametrize("clip", [False, True])
def test_lsb_matches_reference_loop(clip):
    u = random_model(3, 2, seed=1)
    keys = chain_keys(4, 6)
    want = np.array([ref_lsb_chain(u.J.tolist(), u.f.tolist(), 0.7, 0.9, 12, k, clip)
                     for k in keys])
    got_np = kernels.lsb_numpy(u.J, u.f, 0.7, 0.9, 12, keys, clip)
    assert np.array_equal(got_np, want)
    if HAVE_NUMBA:
        assert np.array_equal(kernels.lsb_numba(u.J, u.f, 0.7, 0.9, 12, keys, clip), want)


def test_gibbs_matches_reference_loop():
    u = random_model(4, 1, seed=2)
    keys = chain_keys(8, 5)
    want = np.array([ref_gibbs_chain(u.J.tolist(), u.f.tolist(), 0.8, 7, k) for k in keys])
    assert np.array_equal(kernels.gibbs_numpy(u.J, u.f, 0.8, 7, keys), want)
    if HAVE_NUMBA:
        assert np.array_equal(kernels.gibbs_numba(u.J, u.f, 0.8, 7, keys), want)


@needs_numba
def test_blocked_gibbs_backends_agree():
    u = random_model(6, 4, "RBM", seed=3)
    keys = chain_keys(2, 300)
    v0 = np.where(np.random.default_rng(0).random((300, 6)) < 0.5, 1.0, -1.0)
    a = kernels.blocked_gibbs_numpy(u.W, u.b, u.c, 1.0, 20, v0, keys)
    b = kernels.blocked_gibbs_numba(u.W, u.b, u.c, 1.0, 20, v0, keys)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


@needs_numba
@pytest.mark.parametrize("variant", ["aSB", "bSB", "dSB"])
def test_sb_backends_agree(variant):
    u = random_model(8, 0, "FBM", seed=4, std=0.3)
    keys = chain_keys(5, 400)
    v = kernels.SB_VARIANTS[variant]
    a = kernels.sb_numpy(u.J, u.f, v, 1.0, 1.0, 1.0, 50, keys)
    b = kernels.sb_numba(u.J, u.f, v, 1.0, 1.0, 1.0, 50, keys)
    # bSB/dSB trajectories are chaotic, so allow rare summation-order flips
    assert np.mean(a == b) > 0.99


def test_env_flag_selects_numpy_with_same_samples():
    code = (
        "import numpy as np, sys\n"
        "from salbm._jit import HAVE_NUMBA\n"
        "from salbm.samplers import LsbConfig, lsb_sample, random_srbm\n"
        "u = random_srbm(5, 3, 0.5, 1)\n"
        "s = lsb_sample(u, LsbConfig(sigma=0.8, m_iters=20, n_chains=50, seed=3))\n"
        "sys.stdout.write(str(int(HAVE_NUMBA)) + ':' + ''.join('1' if x > 0 else '0' "
        "for x in s.samples.ravel()))\n"
    )
    env = dict(os.environ, SALBM_DISABLE_NUMBA="1")
    off = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True).stdout
    env["SALBM_DISABLE_NUMBA"] = "0"
    on = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                        text=True, check=True).stdout
    assert off.startswith("0:")
    assert off.split(":")[1] == on.split(":")[1]
