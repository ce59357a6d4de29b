"""Samplers: LSB and its clipped variant, conventional SB, Gibbs, blocked
Gibbs, damped mean-field visibles, and an exact enumeration sampler.

Every stochastic sampler draws chain ``l`` from the stream keyed by
``(seed, l)`` (see :mod:`salbm.rng`), so results are bit-reproducible and a
chain's output never depends on how many chains run beside it.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import ModelParams, exact_boltzmann, index_to_states, structure_mask
from .rng import chain_keys

SB_KINDS = ("aSB", "bSB", "dSB", "cLSB")


@dataclass(frozen=True)
class LsbConfig:
    """LSB hyperparameters: step ``delta``, momentum noise ``sigma``,
    iterations ``m_iters``, chains ``n_chains``."""

    delta: float = 1.0
    sigma: float = 1.0
    m_iters: int = 100
    n_chains: int = 1000
    seed: int = 0

    def __post_init__(self):
        for name in ("delta", "sigma"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v}")
        if self.m_iters < 1 or self.n_chains < 1:
            raise ValueError("m_iters and n_chains must be >= 1")

    @classmethod
    def from_inverse_variance(cls, inv_sigma2, **kw):
        """Build from ``sigma**-2``, the parametrisation used for tuning grids."""
        return cls(sigma=float(inv_sigma2) ** -0.5, **kw)


@dataclass(frozen=True)
class SbConfig:
    """Conventional SB (``aSB``/``bSB``/``dSB``) or clipped LSB (``cLSB``).

    ``c0`` is only used by aSB; bSB and dSB recompute it from the state every
    step.  ``sigma`` is only used by cLSB (``dt`` plays the role of LSB's
    step).  The pump is held at ``a(t) = 0``.
    """

    variant: str = "bSB"
    dt: float = 1.0
    a0: float = 1.0
    c0: float = 1.0
    m_iters: int = 100
    n_chains: int = 1000
    seed: int = 0
    sigma: float = 1.0

    def __post_init__(self):
        if self.variant not in SB_KINDS:
            raise ValueError(f"unknown SB variant {self.variant!r}")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError("dt must be positive")
        if self.m_iters < 1 or self.n_chains < 1:
            raise ValueError("m_iters and n_chains must be >= 1")
        if self.variant == "cLSB" and not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError("cLSB needs a positive sigma")


@dataclass
class SampleSet:
    """``samples`` is an ``(L, N)`` int8 array of spins; visible spins first."""

    samples: np.ndarray
    n_v: int
    n_h: int = 0
    source: str = ""
    seed: int = 0
    wall_time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.int8)
        if s.ndim != 2 or s.shape[1] != self.n_v + self.n_h:
            raise ValueError("samples must be an (L, n_v + n_h) array")
        if not np.all(np.abs(s) == 1):
            raise ValueError("samples must be +-1")
        self.samples = s

    def __len__(self):
        return self.samples.shape[0]

    @property
    def visible(self):
        return self.samples[:, : self.n_v]

    @property
    def hidden(self):
        return self.samples[:, self.n_v:]

    def to_csv(self, path, extra_header=None):
        header = f"# n_v={self.n_v} n_h={self.n_h} sampler={self.source} seed={self.seed}"
        lines = [header]
        if extra_header:
            lines += [f"# {line}" for line in extra_header]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
            np.savetxt(fh, self.samples, fmt="%d", delimiter=",")

    @classmethod
    def from_csv(cls, path):
        meta = {}
        with open(path) as fh:
            first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing '# n_v=.. n_h=..' header")
        for tok in first[1:].split():
            if "=" in tok:
                k, v = tok.split("=", 1)
                meta[k] = v
        data = np.loadtxt(path, comments="#", delimiter=",", dtype=np.int64, ndmin=2)
        n_v, n_h = int(meta["n_v"]), int(meta["n_h"])
        if data.size == 0:
            data = np.zeros((0, n_v + n_h), dtype=np.int64)
        return cls(data, n_v, n_h, meta.get("sampler", ""), int(meta.get("seed", 0)))


def _check_finite(u):
    if not (np.all(np.isfinite(u.J)) and np.all(np.isfinite(u.f))):
        raise ValueError("non-finite model parameters")


def lsb_sample(u, cfg, chain_offset=0):
    """Langevin simulated bifurcation.

    Per chain: spins start uniform on {-1, +1} and momenta at N(0, sigma).
    Each of ``m_iters`` iterations does, for all spins at once,

        y += (J sgn(x) + f) * delta
        x += y * delta
        x <- sgn(x)          (sgn(0) = +1)
        y <- N(0, sigma)

    and the final ``x`` is the sample.
    """
    _check_finite(u)
    t0 = time.perf_counter()
    keys = chain_keys(cfg.seed, cfg.n_chains, chain_offset)
    s = kernels.lsb(u.J, u.f, cfg.delta, cfg.sigma, cfg.m_iters, keys)
    return SampleSet(s, u.n_v, u.n_h, "LSB", cfg.seed, time.perf_counter() - t0,
                     {"sigma": cfg.sigma, "delta": cfg.delta, "m_iters": cfg.m_iters})


def sb_sample(u, cfg):
    """cLSB or a conventional simulated-bifurcation sampler.

    cLSB is LSB with ``x`` clamped to [-1, 1] instead of discretised.  For
    aSB/bSB/dSB one step is

        y += (-(K x^2 + a0) x + c0 (J z + f)) dt     (K = 1 for aSB, else 0)
        x += a0 y dt

    with ``z = x`` (aSB, bSB) or ``sgn(x)`` (dSB), and the inelastic wall
    ``|x| > 1 -> x = sgn(x), y = 0`` for bSB and dSB.  bSB uses
    ``c0 = sqrt(|x|^2 / |J x|^2)`` and dSB ``c0 = sqrt(N / |J sgn(x)|^2)``,
    both re-evaluated each step.
    """
    _check_finite(u)
    t0 = time.perf_counter()
    keys = chain_keys(cfg.seed, cfg.n_chains)
    if cfg.variant == "cLSB":
        s = kernels.lsb(u.J, u.f, cfg.dt, cfg.sigma, cfg.m_iters, keys, clip=True)
    else:
        s = kernels.sb(u.J, u.f, cfg.variant, cfg.dt, cfg.a0, cfg.c0, cfg.m_iters, keys)
    return SampleSet(s, u.n_v, u.n_h, cfg.variant, cfg.seed, time.perf_counter() - t0)


def gibbs_sample(u, beta, sweeps, n_chains, seed):
    """Sequential single-site Gibbs from uniform random starts.

    Site ``i`` is set to +1 with probability ``logistic(2 beta (J s + f)_i)``.
    """
    if sweeps < 1 or n_chains < 1:
        raise ValueError("sweeps and n_chains must be >= 1")
    _check_finite(u)
    t0 = time.perf_counter()
    s = kernels.gibbs(u.J, u.f, beta, sweeps, chain_keys(seed, n_chains))
    return SampleSet(s, u.n_v, u.n_h, "Gibbs", seed, time.perf_counter() - t0,
                     {"beta": float(beta), "sweeps": sweeps})


def blocked_gibbs_chain(u, beta, k, init_v, seed):
    """``k`` rounds of alternating block updates for a bipartite model.

    ``h`` is drawn from ``init_v`` first; each of the ``k`` rounds then draws
    ``v | h`` followed by ``h | v``.  ``init_v`` may be one vector or a batch
    (one chain per row).  Returns ``(v_k, h_k)`` as int8 arrays.
    """
    if u.structure != "RBM":
        raise ValueError("blocked Gibbs needs an RBM-structured model")
    if k < 0:
        raise ValueError("k must be >= 0")
    v0 = np.asarray(init_v)
    single = v0.ndim == 1
    v0 = np.atleast_2d(v0)
    if v0.shape[1] != u.n_v:
        raise ValueError("init_v has the wrong length")
    keys = chain_keys(seed, v0.shape[0])
    v, h = kernels.blocked_gibbs(u.W, u.b, u.c, beta, k, v0, keys)
    return (v[0], h[0]) if single else (v, h)


def dmfi_visible(u, h, v0, iters=5, damping=0.5):
    """Damped mean-field visibles: ``v <- (1 - g) v + g tanh(V v + W h + b)``."""
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    v = np.asarray(v0, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if v.shape[-1] != u.n_v or h.shape[-1] != u.n_h:
        raise ValueError("dimension mismatch")
    drive = h @ u.W.T + u.b
    for _ in range(int(iters)):
        v = (1.0 - damping) * v + damping * np.tanh(v @ u.V + drive)
    return v


def exact_sample(u, beta, n_samples, seed, dist=None):
    """Independent draws from the enumerated Boltzmann distribution."""
    dist = exact_boltzmann(u, beta) if dist is None else dist
    rng = np.random.default_rng(seed)
    idx = rng.choice(dist.probabilities.size, size=n_samples, p=dist.probabilities)
    return SampleSet(index_to_states(idx, dist.n), u.n_v, u.n_h if dist.n == u.N else 0,
                     "exact", seed)


def random_srbm(n_v, n_h, std, seed, structure="SRBM"):
    """Benchmark instance: Gaussian couplings with standard deviation ``std``
    on every allowed edge, zero biases."""
    rng = np.random.default_rng(seed)
    N = n_v + n_h
    J = np.triu(rng.normal(0.0, std, size=(N, N)), 1)
    J = J + J.T
    J = np.where(structure_mask(n_v, n_h, structure), J, 0.0)
    return ModelParams(n_v, n_h, J, np.zeros(N), structure)
