"""Benchmark drivers shared by the command line and the acceptance tests."""

import time
from dataclasses import replace

import numpy as np

from .datasets import gen_sk
from .estimators import (
    cem_conditional_means,
    cem_estimate,
    cem_n_estimate,
    estimate_beta_kl,
    mlpl_estimate,
)
from .model import all_energies
from .rng import derive_seed
from .samplers import LsbConfig, SbConfig, gibbs_sample, lsb_sample, random_srbm, sb_sample

INV_SIGMA2_GRID = tuple(np.round(np.arange(0.5, 2.0001, 0.1), 1))
BENCH_FIELDS = ("instance", "sampler", "inv_sigma2", "kl", "beta_kl", "beta_cem",
                "beta_mlpl", "seconds")


def tune_lsb(u, base_cfg, inv_grid=INV_SIGMA2_GRID, energies=None, clip=False, seed=0):
    """Pick ``sigma**-2`` from ``inv_grid`` minimising ``D_KL(P_S || B_beta_eff)``.

    Returns ``(inv_sigma2, estimate, cfg, samples)`` for the best grid point.
    """
    E = all_energies(u) if energies is None else energies
    best = None
    for k, inv in enumerate(inv_grid):
        cfg = replace(base_cfg, sigma=float(inv) ** -0.5, seed=derive_seed(seed, k))
        if clip:
            s = sb_sample(u, SbConfig("cLSB", dt=cfg.delta, m_iters=cfg.m_iters,
                                      n_chains=cfg.n_chains, seed=cfg.seed, sigma=cfg.sigma))
        else:
            s = lsb_sample(u, cfg)
        est = estimate_beta_kl(s, u, energies=E)
        if best is None or est.objective_value < best[1].objective_value:
            best = (float(inv), est, cfg, s)
    return best


def _row(instance, sampler, inv, est, t, beta_cem=float("nan"), beta_mlpl=float("nan")):
    return {"instance": instance, "sampler": sampler, "inv_sigma2": inv,
            "kl": est.objective_value, "beta_kl": est.beta, "beta_cem": beta_cem,
            "beta_mlpl": beta_mlpl, "seconds": t}


def srbm_sampler_benchmark(n_instances=10, n_v=10, n_h=5, std=None, m_iters=100,
                           n_chains=9600, inv_grid=INV_SIGMA2_GRID, gibbs_sweeps=100,
                           seed=0, cem_n=(1,)):
    """LSB (tuned per instance) against Gibbs at beta = 1 on random SRBMs.

    For the tuned LSB run the inverse temperature is also estimated by CEM
    (condition vectors uniform on +-1) and by MLPL.  With several entries in
    ``cem_n`` the extra keys ``beta_cem{n}`` hold CEM-n estimates.
    """
    std = 2.0 / np.sqrt(n_v + n_h) if std is None else std
    rows = []
    for inst in range(n_instances):
        u = random_srbm(n_v, n_h, std, derive_seed(seed, 1, inst))
        E = all_energies(u)
        t0 = time.perf_counter()
        base = LsbConfig(delta=1.0, m_iters=m_iters, n_chains=n_chains)
        inv, est, cfg, s = tune_lsb(u, base, inv_grid, E, seed=derive_seed(seed, 2, inst))
        rng = np.random.default_rng(derive_seed(seed, 3, inst))
        n_max = max(cem_n)
        pairs = []
        for m in range(n_max):
            r = np.where(rng.random(n_v) < 0.5, 1, -1).astype(np.int8)
            means = cem_conditional_means(u, r, replace(cfg, seed=derive_seed(seed, 4, inst, m)))
            pairs.append((means, r))
        cem = cem_estimate(pairs[0][0], pairs[0][1], u.W, u.c)
        mlpl = mlpl_estimate(s, u)
        row = _row(inst, "LSB", inv, est, time.perf_counter() - t0, cem.beta, mlpl.beta)
        for n in cem_n:
            if n > 1:
                row[f"beta_cem{n}"] = cem_n_estimate(pairs, u.W, u.c, n).beta
        rows.append(row)
        t0 = time.perf_counter()
        g = gibbs_sample(u, 1.0, gibbs_sweeps, n_chains, derive_seed(seed, 5, inst))
        rows.append(_row(inst, "Gibbs", float("nan"), estimate_beta_kl(g, u, energies=E),
                         time.perf_counter() - t0, beta_mlpl=mlpl_estimate(g, u).beta))
    return rows


SK_SAMPLERS = ("LSB", "cLSB", "aSB", "bSB", "dSB", "Gibbs")


def sk_sampler_benchmark(n_instances=5, n=15, zeta=2.0, samplers=SK_SAMPLERS, m_iters=100,
                         n_chains=9600, inv_grid=INV_SIGMA2_GRID, gibbs_sweeps=100, seed=0):
    """Sampling accuracy of LSB, cLSB, the SB family and Gibbs on SK instances.

    LSB and cLSB are tuned over ``inv_grid`` per instance; aSB/bSB/dSB use
    ``dt = 1``, ``a0 = 1``, zero pump.
    """
    unknown = set(samplers) - set(SK_SAMPLERS)
    if unknown:
        raise ValueError(f"unknown samplers {sorted(unknown)}")
    rows = []
    for inst in range(n_instances):
        u = gen_sk(n, zeta, derive_seed(seed, 1, inst))
        E = all_energies(u)
        for k, name in enumerate(samplers):
            t0 = time.perf_counter()
            sseed = derive_seed(seed, 10 + k, inst)
            inv = float("nan")
            if name in ("LSB", "cLSB"):
                base = LsbConfig(delta=1.0, m_iters=m_iters, n_chains=n_chains)
                inv, est, _, s = tune_lsb(u, base, inv_grid, E, clip=name == "cLSB", seed=sseed)
            elif name == "Gibbs":
                s = gibbs_sample(u, 1.0, gibbs_sweeps, n_chains, sseed)
                est = estimate_beta_kl(s, u, energies=E)
            else:
                s = sb_sample(u, SbConfig(name, dt=1.0, a0=1.0, c0=1.0, m_iters=m_iters,
                                          n_chains=n_chains, seed=sseed))
                est = estimate_beta_kl(s, u, energies=E)
            rows.append(_row(inst, name, inv, est, time.perf_counter() - t0,
                             beta_mlpl=mlpl_estimate(s, u).beta))
    return rows


def summarize(rows, key="kl"):
    """Mean and standard error of ``key`` per sampler."""
    out = {}
    for name in dict.fromkeys(r["sampler"] for r in rows):
        x = np.array([r[key] for r in rows if r["sampler"] == name], dtype=np.float64)
        se = x.std(ddof=1) / np.sqrt(len(x)) if len(x) > 1 else float("nan")
        out[name] = (float(x.mean()), float(se))
    return out


def relative_errors(rows, key):
    """Signed relative error of ``key`` against ``beta_kl`` on the LSB rows."""
    lsb = [r for r in rows if r["sampler"] == "LSB"]
    return np.array([(r[key] - r["beta_kl"]) / r["beta_kl"] for r in lsb])
