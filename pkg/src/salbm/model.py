"""Boltzmann-machine parameters, energies and exact (enumerated) distributions.

State indexing: bit ``i`` of an integer index ``x`` encodes spin ``i`` as
``2 * bit - 1``.  Visible spins come first, so an index over ``N = n_v + n_h``
spins factors as ``x = x_v + 2**n_v * x_h``.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

STRUCTURES = ("FBM", "RBM", "SRBM")
MAX_ENUM_SPINS = 25
_CHUNK_BITS = 16


class EnumerationError(ValueError):
    """Raised when exact enumeration would exceed the memory guard."""


def _readonly(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ModelParams:
    """Couplings ``J`` (symmetric, zero diagonal) and biases ``f``.

    The structural view ``(V, W, b, c)`` is read off the blocks of ``J`` and
    ``f``.  ``structure`` fixes which blocks may be nonzero:

    * ``FBM``: no hidden units.
    * ``RBM``: visible-visible and hidden-hidden blocks are zero.
    * ``SRBM``: hidden-hidden block is zero.
    """

    n_v: int
    n_h: int
    J: np.ndarray
    f: np.ndarray
    structure: str = "SRBM"

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure {self.structure!r}")
        n_v, n_h = int(self.n_v), int(self.n_h)
        if n_v < 0 or n_h < 0 or n_v + n_h == 0:
            raise ValueError("model needs at least one spin")
        if self.structure == "FBM" and n_h != 0:
            raise ValueError("FBM has no hidden units")
        N = n_v + n_h
        J = np.array(self.J, dtype=np.float64)
        f = np.array(self.f, dtype=np.float64).reshape(-1)
        if J.shape != (N, N) or f.shape != (N,):
            raise ValueError(f"expected J {(N, N)} and f {(N,)}, got {J.shape} and {f.shape}")
        if not (np.all(np.isfinite(J)) and np.all(np.isfinite(f))):
            raise ValueError("non-finite parameters")
        if not np.allclose(J, J.T, rtol=0.0, atol=1e-12):
            raise ValueError("J must be symmetric")
        if np.any(np.diag(J) != 0.0):
            raise ValueError("diag(J) must be zero")
        forbidden = ~structure_mask(n_v, n_h, self.structure)
        if np.any(J[forbidden] != 0.0):
            raise ValueError(f"couplings outside the {self.structure} pattern")
        object.__setattr__(self, "n_v", n_v)
        object.__setattr__(self, "n_h", n_h)
        object.__setattr__(self, "J", _readonly(0.5 * (J + J.T)))
        object.__setattr__(self, "f", _readonly(f))

    @classmethod
    def from_blocks(cls, V=None, W=None, b=None, c=None, structure="SRBM"):
        """Assemble ``J`` and ``f`` from ``(V, W, b, c)``; missing blocks are zero."""
        if b is not None:
            n_v = len(b)
        elif V is not None:
            n_v = np.shape(V)[0]
        else:
            n_v = np.shape(W)[0]
        if c is not None:
            n_h = len(c)
        elif W is not None:
            n_h = np.shape(W)[1]
        else:
            n_h = 0
        N = n_v + n_h
        J = np.zeros((N, N))
        if V is not None:
            J[:n_v, :n_v] = V
        if W is not None and n_h:
            J[:n_v, n_v:] = W
            J[n_v:, :n_v] = np.asarray(W).T
        f = np.zeros(N)
        if b is not None:
            f[:n_v] = b
        if c is not None and n_h:
            f[n_v:] = c
        return cls(n_v, n_h, J, f, structure)

    @classmethod
    def zeros(cls, n_v, n_h=0, structure="SRBM"):
        N = n_v + n_h
        return cls(n_v, n_h, np.zeros((N, N)), np.zeros(N), structure)

    @property
    def N(self):
        return self.n_v + self.n_h

    @property
    def V(self):
        return self.J[: self.n_v, : self.n_v]

    @property
    def W(self):
        return self.J[: self.n_v, self.n_v:]

    @property
    def b(self):
        return self.f[: self.n_v]

    @property
    def c(self):
        return self.f[self.n_v:]

    def replace(self, J=None, f=None):
        return ModelParams(self.n_v, self.n_h, self.J if J is None else J,
                           self.f if f is None else f, self.structure)

    def scaled(self, kappa):
        return self.replace(self.J * kappa, self.f * kappa)

    def mask(self):
        return structure_mask(self.n_v, self.n_h, self.structure)

    # -- serialisation -------------------------------------------------------

    def to_dict(self):
        return {
            "n_v": self.n_v,
            "n_h": self.n_h,
            "structure": self.structure,
            "V": self.V.reshape(-1).tolist(),
            "W": self.W.reshape(-1).tolist(),
            "b": self.b.tolist(),
            "c": self.c.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            n_v, n_h, structure = int(d["n_v"]), int(d["n_h"]), d["structure"]
            V = np.asarray(d.get("V", []), dtype=np.float64).reshape(n_v, n_v)
            W = np.asarray(d.get("W", []), dtype=np.float64).reshape(n_v, n_h)
            b = np.asarray(d["b"], dtype=np.float64).reshape(n_v)
            c = np.asarray(d.get("c", []), dtype=np.float64).reshape(n_h)
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"malformed model description: {exc}") from exc
        N = n_v + n_h
        J = np.zeros((N, N))
        J[:n_v, :n_v] = V
        J[:n_v, n_v:] = W
        J[n_v:, :n_v] = W.T
        return cls(n_v, n_h, J, np.concatenate([b, c]), structure)


def structure_mask(n_v, n_h, structure):
    """Boolean ``N x N`` mask of couplings allowed by ``structure``."""
    N = n_v + n_h
    m = np.ones((N, N), dtype=bool)
    np.fill_diagonal(m, False)
    m[n_v:, n_v:] = False
    if structure == "RBM":
        m[:n_v, :n_v] = False
    return m


def save_model(u, path, extra=None):
    d = u.to_dict()
    if extra:
        d.update(extra)
    with open(path, "w") as fh:
        json.dump(d, fh)


def load_model(path):
    with open(path) as fh:
        return ModelParams.from_dict(json.load(fh))


# -- energies -------------------------------------------------------------------

def energy(s, u):
    """``-1/2 s^T J s - f.s`` for one state or a batch of states (rows)."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape[-1] != u.N:
        raise ValueError(f"state length {s.shape[-1]} does not match N={u.N}")
    return -0.5 * np.einsum("...i,ij,...j->...", s, u.J, s) - s @ u.f


def energy_blocks(v, h, V, W, b, c):
    """SRBM energy written block-wise: ``-1/2 v'Vv - v'Wh - b.v - c.h``."""
    v = np.asarray(v, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    return (-0.5 * np.einsum("...i,ij,...j->...", v, V, v)
            - np.einsum("...i,ij,...j->...", v, W, h) - v @ b - h @ c)


def index_to_states(idx, n):
    """Spins (int8 rows) for integer state indices."""
    idx = np.asarray(idx, dtype=np.int64)
    bits = (idx[..., None] >> np.arange(n, dtype=np.int64)) & 1
    return (2 * bits - 1).astype(np.int8)


def states_to_index(s):
    s = np.asarray(s)
    bits = (s > 0).astype(np.int64)
    return bits @ (np.int64(1) << np.arange(s.shape[-1], dtype=np.int64))


def all_states(n):
    _guard(n)
    return index_to_states(np.arange(2 ** n), n)


def _guard(n):
    if n > MAX_ENUM_SPINS:
        raise EnumerationError(f"enumeration over {n} spins exceeds the limit of {MAX_ENUM_SPINS}")


def all_energies(u):
    """Energies of all ``2**N`` states in index order (chunked for large N)."""
    N = u.N
    _guard(N)
    total = 2 ** N
    chunk = 2 ** min(N, _CHUNK_BITS)
    out = np.empty(total)
    for start in range(0, total, chunk):
        s = index_to_states(np.arange(start, start + chunk), N).astype(np.float64)
        out[start:start + chunk] = -0.5 * np.einsum("ki,ki->k", s @ u.J, s) - s @ u.f
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite energies")
    return out


# -- distributions --------------------------------------------------------------

@dataclass(frozen=True)
class ExactDistribution:
    """Probabilities over ``2**n`` states in the documented index order."""

    probabilities: np.ndarray
    n: int
    log_probabilities: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.shape != (2 ** self.n,):
            raise ValueError("probability vector has the wrong length")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("not a probability vector")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    def states(self):
        return all_states(self.n)


def _check_beta(beta):
    beta = float(beta)
    if not np.isfinite(beta) or beta < 0:
        raise ValueError(f"inverse temperature must be finite and >= 0, got {beta}")
    return beta


def boltzmann_from_energies(E, beta):
    """Normalised log-probabilities ``-beta E - log Z`` (log-sum-exp stable)."""
    a = -_check_beta(beta) * np.asarray(E)
    return a - logsumexp(a)


def exact_boltzmann(u, beta):
    n = u.N
    _guard(n)
    logp = boltzmann_from_energies(all_energies(u), beta)
    p = np.exp(logp)
    p /= p.sum()
    return ExactDistribution(p, n, logp)


def marginal_visible(u, beta):
    """Visible marginal: sum of the joint over all hidden configurations."""
    joint = exact_boltzmann(u, beta)
    if u.n_h == 0:
        return joint
    logp = logsumexp(joint.log_probabilities.reshape(2 ** u.n_h, 2 ** u.n_v), axis=0)
    p = np.exp(logp)
    p /= p.sum()
    return ExactDistribution(p, u.n_v, logp)


def kl_divergence(p, q):
    """``sum p log(p/q)`` with ``0 log 0 = 0``; ``inf`` where ``p > 0 = q``."""
    p = np.asarray(getattr(p, "probabilities", p), dtype=np.float64)
    q = np.asarray(getattr(q, "probabilities", q), dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distributions differ in size")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("negative probability")
    support = p > 0
    if np.any(q[support] == 0):
        return float("inf")
    return float(max(np.sum(p[support] * (np.log(p[support]) - np.log(q[support]))), 0.0))


def empirical_distribution(states, n=None):
    """Empirical distribution of ``states`` (rows of spins) over ``2**n`` states."""
    states = np.asarray(states)
    n = states.shape[1] if n is None else n
    _guard(n)
    counts = np.bincount(states_to_index(states), minlength=2 ** n).astype(np.float64)
    return counts / counts.sum()


# -- conditioning -----------------------------------------------------------------

@dataclass(frozen=True)
class Embedding:
    """Maps states of a conditioned model back into the full model."""

    N: int
    free: np.ndarray
    fixed: np.ndarray
    values: np.ndarray
    constant: float

    def embed(self, s_reduced):
        s_reduced = np.asarray(s_reduced)
        out = np.empty(s_reduced.shape[:-1] + (self.N,), dtype=np.int8)
        out[..., self.free] = s_reduced
        out[..., self.fixed] = self.values
        return out


def _normalise_fixed(fixed, n_v):
    if fixed is None:
        return {}
    items = fixed.items() if isinstance(fixed, dict) else fixed
    out = {}
    for i, val in items:
        i = int(i)
        val = int(val)
        if not 0 <= i < n_v:
            raise IndexError(f"fixed index {i} is not a visible index")
        if val not in (-1, 1):
            raise ValueError(f"fixed value {val} is not a spin")
        if out.get(i, val) != val:
            raise ValueError(f"conflicting assignments for index {i}")
        out[i] = val
    return out


def condition(u, fixed):
    """Clamp a subset of visible spins and return the reduced model.

    Returns ``(u_reduced, embedding)``.  The reduced model lives on the free
    visible spins followed by all hidden spins; its couplings are the free
    block of ``J`` and its biases absorb the clamped spins.  For every
    compatible state, ``E(s|u) = E(s'|u') + embedding.constant``.
    """
    fx = _normalise_fixed(fixed, u.n_v)
    fixed_idx = np.array(sorted(fx), dtype=np.int64)
    values = np.array([fx[i] for i in fixed_idx], dtype=np.int8)
    free = np.array([i for i in range(u.N) if i not in fx], dtype=np.int64)
    if free.size == 0:
        raise ValueError("conditioning would leave no free spins")
    vf = values.astype(np.float64)
    J_ff = u.J[np.ix_(fixed_idx, fixed_idx)]
    J_rf = u.J[np.ix_(free, fixed_idx)]
    J_red = u.J[np.ix_(free, free)]
    f_red = u.f[free] + J_rf @ vf
    constant = float(-0.5 * vf @ J_ff @ vf - u.f[fixed_idx] @ vf)
    n_v_red = u.n_v - len(fixed_idx)
    structure = u.structure
    if n_v_red == 0 and structure == "SRBM":
        structure = "RBM"
    u_red = ModelParams(n_v_red, u.n_h, J_red, f_red, structure)
    return u_red, Embedding(u.N, free, fixed_idx, values, constant)
