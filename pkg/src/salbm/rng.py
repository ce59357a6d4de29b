"""Counter-based random streams shared by the numba and numpy kernels.

Every random number used by a sampler is a pure function of
``(chain_key, counter)``, where ``chain_key = chain_key(seed, chain)``.
The generator is SplitMix64 evaluated at an arbitrary position:

    bits(key, n) = mix64(key + n * GOLDEN)

so chain ``l`` draws the same numbers no matter how many chains run next to
it or which thread executes it.  Uniforms take the top 53 bits.  Normals come
from Box-Muller on two uniforms drawn from a counter range disjoint from the
one used for plain uniforms: normals ``2p`` and ``2p + 1`` are the cosine
and sine branches of pair ``p``.
"""

import numpy as np

from ._jit import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO53_INV = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * np.pi

# normal pair p consumes counters NORMAL_BASE + 2p and NORMAL_BASE + 2p + 1
NORMAL_BASE = np.uint64(1 << 40)
_MASK64 = (1 << 64) - 1


@njit
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit
def uniform_at(key, ctr):
    """Uniform double in [0, 1) at position ``ctr`` of stream ``key``."""
    b = mix64(key + np.uint64(ctr) * GOLDEN)
    return np.float64(b >> _S11) * _TWO53_INV


@njit
def normal_pair_at(key, pair):
    """Standard normals ``2 * pair`` and ``2 * pair + 1`` of stream ``key``."""
    c = NORMAL_BASE + np.uint64(2) * np.uint64(pair)
    u1 = uniform_at(key, c)
    u2 = uniform_at(key, c + np.uint64(1))
    r = np.sqrt(-2.0 * np.log(1.0 - u1))
    return r * np.cos(_TWO_PI * u2), r * np.sin(_TWO_PI * u2)


@njit
def normal_at(key, idx):
    """Standard normal number ``idx`` of stream ``key``."""
    z0, z1 = normal_pair_at(key, idx // 2)
    return z0 if idx % 2 == 0 else z1


# -- vectorised numpy twins ---------------------------------------------------

def mix64_np(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def uniform_np(keys, ctrs):
    """Broadcasting version of :func:`uniform_at`."""
    keys = np.asarray(keys, dtype=np.uint64)
    ctrs = np.asarray(ctrs, dtype=np.uint64)
    with np.errstate(over="ignore"):
        b = mix64_np(keys + ctrs * GOLDEN)
    return (b >> _S11).astype(np.float64) * _TWO53_INV


def normal_np(keys, idx):
    """Broadcasting version of :func:`normal_at`."""
    idx = np.asarray(idx, dtype=np.uint64)
    with np.errstate(over="ignore"):
        c = NORMAL_BASE + np.uint64(2) * (idx >> np.uint64(1))
    u1 = uniform_np(keys, c)
    u2 = uniform_np(keys, c + np.uint64(1))
    angle = _TWO_PI * u2
    r = np.sqrt(-2.0 * np.log(1.0 - u1))
    return r * np.where((idx & np.uint64(1)) == 0, np.cos(angle), np.sin(angle))


# -- seeds and chain keys -----------------------------------------------------

def _mix_int(x):
    return int(mix64_np(np.uint64(x & _MASK64)))


def derive_seed(seed, *tags):
    """Deterministically fold integer ``tags`` into ``seed``.

    Used to give every (purpose, epoch, batch) its own independent stream
    family while keeping the whole run a function of one master seed.
    """
    h = _mix_int(int(seed) + int(GOLDEN))
    for t in tags:
        h = _mix_int((h ^ _mix_int(int(t) + 0x632BE59BD9B4E019)) + int(GOLDEN))
    return h


def chain_keys(seed, n_chains, offset=0):
    """Stream keys for chains ``offset .. offset + n_chains - 1``.

    The key of chain ``l`` depends on ``(seed, l)`` only.
    """
    base = np.uint64(_mix_int(int(seed) & _MASK64))
    idx = np.arange(offset, offset + n_chains, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64_np(base + idx * GOLDEN + np.uint64(1))
