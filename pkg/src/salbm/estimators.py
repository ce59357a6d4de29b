"""Effective inverse temperature of a sampler's output.

* :func:`estimate_beta_kl` -- reference: minimise D_KL(P_S || B_beta) by
  enumeration.
* :func:`cem_estimate` / :func:`cem_n_estimate` -- conditional expectation
  matching: fit ``tanh(beta * (c + W^T r))`` to hidden means sampled with the
  visibles clamped to ``r``.
* :func:`mlpl_estimate` -- maximum log-pseudo-likelihood baseline.

All searches run over ``[0, beta_max]`` with :func:`bounded_argmin`.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .model import all_energies, condition, empirical_distribution
from .samplers import lsb_sample

BETA_MAX = 50.0
XATOL = 1e-6
MAX_EVALS = 200


@dataclass(frozen=True)
class BetaEstimate:
    beta: float
    method: str
    objective_value: float
    converged: bool


def bounded_argmin(fn, beta_max=BETA_MAX, init=1.0, xatol=XATOL, max_evals=MAX_EVALS):
    """Minimise a scalar function of beta on ``[0, beta_max]``.

    A coarse scan (always containing 0, ``init`` and ``beta_max``) picks the
    best bracket, which bounded Brent then refines.  The returned point is
    never worse than any scanned point, in particular the endpoints and the
    initial guess.  Returns ``(beta, value, hit_upper_bound)``.
    """
    grid = np.unique(np.concatenate([[0.0, init, beta_max],
                                     np.geomspace(1e-3, beta_max, 28)]))
    grid = grid[(grid >= 0.0) & (grid <= beta_max)]
    vals = np.array([fn(b) for b in grid])
    vals = np.where(np.isfinite(vals), vals, np.inf)
    i = int(np.argmin(vals))
    best_b, best_v = float(grid[i]), float(vals[i])
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    if hi > lo:
        res = minimize_scalar(fn, bounds=(lo, hi), method="bounded",
                              options={"xatol": xatol, "maxiter": max_evals - len(grid)})
        if np.isfinite(res.fun) and res.fun <= best_v:
            best_b, best_v = float(res.x), float(res.fun)
    return best_b, best_v, best_b >= beta_max - 10 * xatol


def estimate_beta_kl(samples, u, beta_max=BETA_MAX, energies=None):
    """``argmin_beta D_KL(P_S || B_beta)`` over full states (needs N <= 25)."""
    if samples.samples.shape[1] != u.N:
        raise ValueError("samples do not match the model size")
    E = all_energies(u) if energies is None else energies
    p = empirical_distribution(samples.samples, u.N)
    nz = p > 0
    neg_entropy = float(np.sum(p[nz] * np.log(p[nz])))
    mean_e = float(p[nz] @ E[nz])

    def kl(beta):
        return neg_entropy + beta * mean_e + logsumexp(-beta * E)

    beta, val, at_max = bounded_argmin(kl, beta_max)
    return BetaEstimate(beta, "KL", max(val, 0.0), bool(np.isfinite(val) and not at_max))


def conditional_hidden_mean_analytic(r, W, c, beta):
    """``<h_j>`` with the visibles clamped to ``r``: ``tanh(beta (c + W^T r))``."""
    return np.tanh(beta * (np.asarray(c, dtype=np.float64) + np.asarray(r, dtype=np.float64) @ W))


def _cem_objective(pairs, W, c):
    means = np.array([np.asarray(m, dtype=np.float64) for m, _ in pairs])
    fields = np.array([np.asarray(c, dtype=np.float64) + np.asarray(r, dtype=np.float64) @ W
                       for _, r in pairs])
    if np.any(np.abs(means) > 1.0 + 1e-12):
        raise ValueError("conditional means must lie in [-1, 1]")

    def F(beta):
        return float(np.sum((means - np.tanh(beta * fields)) ** 2))

    return F, bool(np.all(fields == 0.0))


def cem_n_estimate(pairs, W, c, n=None, beta_max=BETA_MAX):
    """CEM over several conditions: minimise ``sum_m F_{r_m}(beta)``.

    ``pairs`` holds ``(cond_means, r)`` tuples; ``n`` (if given) must not
    exceed their number and selects the first ``n``.
    """
    pairs = list(pairs)
    n = len(pairs) if n is None else int(n)
    if n < 1 or n > len(pairs):
        raise ValueError("need 1 <= n <= number of conditions")
    F, degenerate = _cem_objective(pairs[:n], W, c)
    method = "CEM" if n == 1 else "CEMn"
    if degenerate:
        return BetaEstimate(1.0, method, F(1.0), False)
    beta, val, at_max = bounded_argmin(F, beta_max)
    return BetaEstimate(beta, method, val, not at_max)


def cem_estimate(cond_means, r, W, c, beta_max=BETA_MAX):
    """Single-condition CEM.  All effective fields zero -> non-converged."""
    return cem_n_estimate([(cond_means, r)], W, c, 1, beta_max)


def mlpl_estimate(samples, u, beta_max=BETA_MAX):
    """Maximise ``sum_l sum_i log logistic(2 beta s_i (J s + f)_i)``."""
    s = samples.samples.astype(np.float64)
    if s.shape[0] < 1:
        raise ValueError("need at least one sample")
    a = (s * (s @ u.J + u.f)).reshape(-1)
    if np.all(a == 0.0):
        return BetaEstimate(1.0, "MLPL", float(np.log(2.0)), False)

    def nll(beta):
        return float(np.mean(np.logaddexp(0.0, -2.0 * beta * a)))

    beta, val, at_max = bounded_argmin(nll, beta_max)
    return BetaEstimate(beta, "MLPL", val, not at_max)


def cem_conditional_means(u, r, lsb_cfg):
    """Hidden means from LSB run on the model with all visibles clamped to ``r``.

    Uses the same LSB hyperparameters and chain count as the caller's
    negative-phase sampling.
    """
    if u.n_h == 0:
        raise ValueError("CEM needs hidden units")
    r = np.asarray(r)
    if r.shape != (u.n_v,):
        raise ValueError("condition vector has the wrong length")
    u_red, _ = condition(u, {i: int(r[i]) for i in range(u.n_v)})
    s = lsb_sample(u_red, lsb_cfg)
    return s.samples.mean(axis=0)
