"""Hot sampling loops, each in a numba and a numpy flavour.

The public functions (:func:`lsb`, :func:`gibbs`, :func:`blocked_gibbs`,
:func:`sb`) dispatch to numba when it is available and enabled, and to the
vectorised numpy twin otherwise.  Both flavours consume the counter-based
streams of :mod:`salbm.rng` with the same counter layout, so they produce the
same samples up to floating-point summation order.

Counter layout per chain (``N`` spins, ``P = (N + 1) // 2``):

* LSB / cLSB: initial spins use uniforms ``0..N-1``.  Momentum draw ``k``
  (``k = 0`` is the initial draw, ``k >= 1`` the redraw closing iteration
  ``k``) uses normals ``2kP + i``.
* Gibbs: initial spins use uniforms ``0..N-1``; site ``i`` of sweep ``t``
  uses uniform ``N + t * N + i``.
* blocked Gibbs (``n_v + n_h = N``): the hidden draw of step ``t`` uses
  uniforms ``t * N + n_v + j``; the visible draw of step ``t >= 1`` uses
  ``t * N + i``.
* aSB / bSB / dSB: ``x`` starts at ``0.1 * (2u - 1)`` from uniforms ``0..N-1``
  and ``y`` likewise from uniforms ``N..2N-1``.

Each numba kernel is a ``prange`` over chains calling a serial per-chain
routine; chains share nothing, so the thread count never changes results.
"""

import numpy as np

from ._jit import HAVE_NUMBA, njit, prange
from .rng import normal_np, normal_pair_at, uniform_at, uniform_np

SB_VARIANTS = {"aSB": 0, "bSB": 1, "dSB": 2}


# -- LSB ----------------------------------------------------------------------

@njit
def _draw_momenta(key, step, sigma, y):
    N = y.shape[0]
    P = (N + 1) // 2
    base = step * P
    for q in range(P):
        z0, z1 = normal_pair_at(key, base + q)
        y[2 * q] = sigma * z0
        if 2 * q + 1 < N:
            y[2 * q + 1] = sigma * z1


@njit
def _lsb_chain(J, f, delta, sigma, m_iters, key, clip, out):
    N = f.shape[0]
    x = np.empty(N)
    y = np.empty(N)
    s = np.empty(N)
    for i in range(N):
        x[i] = 1.0 if uniform_at(key, i) < 0.5 else -1.0
    _draw_momenta(key, 0, sigma, y)
    for k in range(m_iters):
        for i in range(N):
            s[i] = 1.0 if x[i] >= 0.0 else -1.0
        for i in range(N):
            acc = 0.0
            for j in range(N):
                acc += J[i, j] * s[j]
            y[i] += (acc + f[i]) * delta
        for i in range(N):
            xi = x[i] + y[i] * delta
            if clip:
                if xi > 1.0:
                    xi = 1.0
                elif xi < -1.0:
                    xi = -1.0
            else:
                xi = 1.0 if xi >= 0.0 else -1.0
            x[i] = xi
        _draw_momenta(key, k + 1, sigma, y)
    for i in range(N):
        out[i] = 1 if x[i] >= 0.0 else -1


@njit(parallel=True)
def lsb_numba(J, f, delta, sigma, m_iters, keys, clip):
    L = keys.shape[0]
    out = np.empty((L, f.shape[0]), np.int8)
    for l in prange(L):
        _lsb_chain(J, f, delta, sigma, m_iters, keys[l], clip, out[l])
    return out


def lsb_numpy(J, f, delta, sigma, m_iters, keys, clip):
    N = f.shape[0]
    stride = 2 * ((N + 1) // 2)
    k2 = np.asarray(keys, dtype=np.uint64)[:, None]
    idx = np.arange(N, dtype=np.uint64)[None, :]
    x = np.where(uniform_np(k2, idx) < 0.5, 1.0, -1.0)
    y = sigma * normal_np(k2, idx)
    for k in range(m_iters):
        s = np.where(x >= 0.0, 1.0, -1.0)
        # J is symmetric, so s @ J gives sum_j J_ij s_j per row
        y += (s @ J + f) * delta
        x = x + y * delta
        x = np.clip(x, -1.0, 1.0) if clip else np.where(x >= 0.0, 1.0, -1.0)
        y = sigma * normal_np(k2, np.uint64((k + 1) * stride) + idx)
    return np.where(x >= 0.0, 1, -1).astype(np.int8)


# -- sequential Gibbs -----------------------------------------------------------

@njit
def _gibbs_chain(J, f, beta, sweeps, key, out):
    N = f.shape[0]
    s = np.empty(N)
    for i in range(N):
        s[i] = 1.0 if uniform_at(key, i) < 0.5 else -1.0
    for t in range(sweeps):
        base = N + t * N
        for i in range(N):
            acc = 0.0
            for j in range(N):
                acc += J[i, j] * s[j]
            p = 1.0 / (1.0 + np.exp(-2.0 * beta * (acc + f[i])))
            s[i] = 1.0 if uniform_at(key, base + i) < p else -1.0
    for i in range(N):
        out[i] = 1 if s[i] > 0.0 else -1


@njit(parallel=True)
def gibbs_numba(J, f, beta, sweeps, keys):
    L = keys.shape[0]
    out = np.empty((L, f.shape[0]), np.int8)
    for l in prange(L):
        _gibbs_chain(J, f, beta, sweeps, keys[l], out[l])
    return out


def gibbs_numpy(J, f, beta, sweeps, keys):
    N = f.shape[0]
    keys = np.asarray(keys, dtype=np.uint64)
    s = np.where(uniform_np(keys[:, None], np.arange(N, dtype=np.uint64)[None, :]) < 0.5, 1.0, -1.0)
    with np.errstate(over="ignore"):
        for t in range(sweeps):
            base = N + t * N
            for i in range(N):
                h = s @ J[:, i] + f[i]
                p = 1.0 / (1.0 + np.exp(-2.0 * beta * h))
                s[:, i] = np.where(uniform_np(keys, np.uint64(base + i)) < p, 1.0, -1.0)
    return s.astype(np.int8)


# -- blocked Gibbs for bipartite models ----------------------------------------

@njit
def _blocked_chain(W, b, c, beta, k, v0, key, v_out, h_out):
    n_v = b.shape[0]
    n_h = c.shape[0]
    N = n_v + n_h
    v = v0.copy()
    h = np.empty(n_h)
    for t in range(k + 1):
        if t > 0:
            for i in range(n_v):
                acc = b[i]
                for j in range(n_h):
                    acc += W[i, j] * h[j]
                p = 1.0 / (1.0 + np.exp(-2.0 * beta * acc))
                v[i] = 1.0 if uniform_at(key, t * N + i) < p else -1.0
        for j in range(n_h):
            acc = c[j]
            for i in range(n_v):
                acc += W[i, j] * v[i]
            p = 1.0 / (1.0 + np.exp(-2.0 * beta * acc))
            h[j] = 1.0 if uniform_at(key, t * N + n_v + j) < p else -1.0
    for i in range(n_v):
        v_out[i] = 1 if v[i] > 0.0 else -1
    for j in range(n_h):
        h_out[j] = 1 if h[j] > 0.0 else -1


@njit(parallel=True)
def blocked_gibbs_numba(W, b, c, beta, k, init_v, keys):
    L = keys.shape[0]
    v_out = np.empty((L, b.shape[0]), np.int8)
    h_out = np.empty((L, c.shape[0]), np.int8)
    for l in prange(L):
        _blocked_chain(W, b, c, beta, k, init_v[l], keys[l], v_out[l], h_out[l])
    return v_out, h_out


def blocked_gibbs_numpy(W, b, c, beta, k, init_v, keys):
    n_v = b.shape[0]
    n_h = c.shape[0]
    N = n_v + n_h
    k2 = np.asarray(keys, dtype=np.uint64)[:, None]
    iv = np.arange(n_v, dtype=np.uint64)[None, :]
    jh = np.arange(n_h, dtype=np.uint64)[None, :]
    v = np.asarray(init_v, dtype=np.float64).copy()
    h = np.empty((v.shape[0], n_h))
    with np.errstate(over="ignore"):
        for t in range(k + 1):
            if t > 0:
                p = 1.0 / (1.0 + np.exp(-2.0 * beta * (h @ W.T + b)))
                v = np.where(uniform_np(k2, np.uint64(t * N) + iv) < p, 1.0, -1.0)
            p = 1.0 / (1.0 + np.exp(-2.0 * beta * (v @ W + c)))
            h = np.where(uniform_np(k2, np.uint64(t * N + n_v) + jh) < p, 1.0, -1.0)
    return v.astype(np.int8), h.astype(np.int8)


# -- conventional simulated bifurcation -----------------------------------------

@njit
def _sb_chain(J, f, variant, dt, a0, c0_fixed, m_iters, key, out):
    N = f.shape[0]
    x = np.empty(N)
    y = np.empty(N)
    s = np.empty(N)
    g = np.empty(N)
    for i in range(N):
        x[i] = 0.1 * (2.0 * uniform_at(key, i) - 1.0)
        y[i] = 0.1 * (2.0 * uniform_at(key, N + i) - 1.0)
    for _ in range(m_iters):
        for i in range(N):
            if variant == 2:
                s[i] = 1.0 if x[i] >= 0.0 else -1.0
            else:
                s[i] = x[i]
        den = 0.0
        for i in range(N):
            acc = 0.0
            for j in range(N):
                acc += J[i, j] * s[j]
            g[i] = acc
            den += acc * acc
        c0 = c0_fixed
        if variant == 1 and den > 0.0:
            num = 0.0
            for i in range(N):
                num += x[i] * x[i]
            c0 = np.sqrt(num / den)
        elif variant == 2 and den > 0.0:
            c0 = np.sqrt(N / den)
        for i in range(N):
            if variant == 0:
                y[i] += (-(x[i] * x[i] + a0) * x[i] + c0 * (g[i] + f[i])) * dt
                x[i] += a0 * y[i] * dt
            else:
                y[i] += (-a0 * x[i] + c0 * (g[i] + f[i])) * dt
                x[i] += a0 * y[i] * dt
                if x[i] > 1.0:
                    x[i] = 1.0
                    y[i] = 0.0
                elif x[i] < -1.0:
                    x[i] = -1.0
                    y[i] = 0.0
    for i in range(N):
        out[i] = 1 if x[i] >= 0.0 else -1


@njit(parallel=True)
def sb_numba(J, f, variant, dt, a0, c0_fixed, m_iters, keys):
    L = keys.shape[0]
    out = np.empty((L, f.shape[0]), np.int8)
    for l in prange(L):
        _sb_chain(J, f, variant, dt, a0, c0_fixed, m_iters, keys[l], out[l])
    return out


def sb_numpy(J, f, variant, dt, a0, c0_fixed, m_iters, keys):
    N = f.shape[0]
    k2 = np.asarray(keys, dtype=np.uint64)[:, None]
    idx = np.arange(N, dtype=np.uint64)[None, :]
    x = 0.1 * (2.0 * uniform_np(k2, idx) - 1.0)
    y = 0.1 * (2.0 * uniform_np(k2, np.uint64(N) + idx) - 1.0)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(m_iters):
            s = np.where(x >= 0.0, 1.0, -1.0) if variant == 2 else x
            g = s @ J
            den = np.sum(g * g, axis=1, keepdims=True)
            safe = np.where(den > 0.0, den, 1.0)
            if variant == 1:
                c0 = np.where(den > 0.0, np.sqrt(np.sum(x * x, axis=1, keepdims=True) / safe), c0_fixed)
            elif variant == 2:
                c0 = np.where(den > 0.0, np.sqrt(N / safe), c0_fixed)
            else:
                c0 = c0_fixed
            if variant == 0:
                y = y + (-(x * x + a0) * x + c0 * (g + f)) * dt
                x = x + a0 * y * dt
            else:
                y = y + (-a0 * x + c0 * (g + f)) * dt
                x = x + a0 * y * dt
                wall = np.abs(x) > 1.0
                x = np.where(wall, np.sign(x), x)
                y = np.where(wall, 0.0, y)
    return np.where(x >= 0.0, 1, -1).astype(np.int8)


# -- dispatch -------------------------------------------------------------------

def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _keys(keys):
    return np.ascontiguousarray(keys, dtype=np.uint64)


def lsb(J, f, delta, sigma, m_iters, keys, clip=False):
    args = (_f64(J), _f64(f), float(delta), float(sigma), int(m_iters), _keys(keys), bool(clip))
    return lsb_numba(*args) if HAVE_NUMBA else lsb_numpy(*args)


def gibbs(J, f, beta, sweeps, keys):
    args = (_f64(J), _f64(f), float(beta), int(sweeps), _keys(keys))
    return gibbs_numba(*args) if HAVE_NUMBA else gibbs_numpy(*args)


def blocked_gibbs(W, b, c, beta, k, init_v, keys):
    args = (_f64(W), _f64(b), _f64(c), float(beta), int(k), _f64(init_v), _keys(keys))
    return blocked_gibbs_numba(*args) if HAVE_NUMBA else blocked_gibbs_numpy(*args)


def sb(J, f, variant, dt, a0, c0_fixed, m_iters, keys):
    args = (_f64(J), _f64(f), int(SB_VARIANTS[variant]), float(dt), float(a0), float(c0_fixed),
            int(m_iters), _keys(keys))
    return sb_numba(*args) if HAVE_NUMBA else sb_numpy(*args)
