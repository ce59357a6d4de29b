"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--chains 9600] [--repeat 3]

Both backends are called directly, so one process covers both.  The first
numba call is a warm-up (JIT compilation or cache load) and is not timed.
Each row also reports whether the two backends agree bit for bit.
"""

import argparse
import time

import numpy as np

from salbm import kernels
from salbm._jit import HAVE_NUMBA
from salbm.rng import chain_keys
from salbm.samplers import random_srbm


def _best(fn, args, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t)
    return best, out


def _same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def cases(n_chains, n_v, n_h, iters):
    u = random_srbm(n_v, n_h, 2 / np.sqrt(n_v + n_h), seed=1)
    rbm = random_srbm(n_v, n_h, 2 / np.sqrt(n_v + n_h), seed=1, structure="RBM")
    keys = chain_keys(7, n_chains)
    J, f = np.ascontiguousarray(u.J), np.ascontiguousarray(u.f)
    v0 = np.where(np.random.default_rng(0).random((n_chains, n_v)) < 0.5, 1.0, -1.0)
    W, b, c = (np.ascontiguousarray(a) for a in (rbm.W, rbm.b, rbm.c))
    sb_id = kernels.SB_VARIANTS["bSB"]
    return {
        "LSB": (kernels.lsb_numba, kernels.lsb_numpy, (J, f, 1.0, 1.0, iters, keys, False)),
        "cLSB": (kernels.lsb_numba, kernels.lsb_numpy, (J, f, 1.0, 1.0, iters, keys, True)),
        "Gibbs": (kernels.gibbs_numba, kernels.gibbs_numpy, (J, f, 1.0, iters, keys)),
        "blocked Gibbs": (kernels.blocked_gibbs_numba, kernels.blocked_gibbs_numpy,
                          (W, b, c, 1.0, iters, v0, keys)),
        "bSB": (kernels.sb_numba, kernels.sb_numpy, (J, f, sb_id, 1.0, 1.0, 0.0, iters, keys)),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--chains", type=int, default=9600)
    p.add_argument("--nv", type=int, default=10)
    p.add_argument("--nh", type=int, default=5)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--repeat", type=int, default=3)
    a = p.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba unavailable or disabled; only numpy timings are meaningful")
    print(f"{'kernel':<14}{'numba s':>10}{'numpy s':>10}{'speedup':>9}  identical")
    for name, (fast, slow, args) in cases(a.chains, a.nv, a.nh, a.iters).items():
        fast(*args)  # warm-up
        tf, of = _best(fast, args, a.repeat)
        ts, os_ = _best(slow, args, a.repeat)
        print(f"{name:<14}{tf:>10.4f}{ts:>10.4f}{ts / tf:>9.1f}  {_same(of, os_)}")


if __name__ == "__main__":
    main()
