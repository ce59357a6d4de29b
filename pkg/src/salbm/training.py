"""Training loops: sampler-adaptive learning (SAL) for FBM/RBM/SRBM, and the
CD-k (RBM) and DMFI-CD (SRBM) baselines.

Sign convention
---------------
``GradientSet`` holds ``(1 / beta) * dD_KL/du``, i.e. model moments minus
data moments, for every parameter block.  Every loop performs descent:

    velocity <- alpha * velocity - eta * (grad + l2 * weights)
    params   <- params + velocity

with the L2 term on couplings only.  After each step the structure mask is
reapplied, so forbidden couplings stay exactly zero.
"""

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .datasets import stratified_batches
from .estimators import (
    cem_conditional_means,
    cem_estimate,
    estimate_beta_kl,
    mlpl_estimate,
)
from .model import ModelParams, all_energies, kl_divergence, marginal_visible, structure_mask
from .model import MAX_ENUM_SPINS, empirical_distribution
from .rng import chain_keys, derive_seed, uniform_np
from .samplers import LsbConfig, blocked_gibbs_chain, dmfi_visible, lsb_sample

ESTIMATORS = ("cem", "mlpl", "kl", "fixed")
HISTORY_FIELDS = ("epoch", "beta_eff", "estimator", "kl_exact", "grad_norm", "seconds")

# purpose tags for derive_seed
_TAG_NEG, _TAG_CEM, _TAG_COND, _TAG_SHUFFLE, _TAG_INIT, _TAG_CD = 1, 2, 3, 4, 5, 6


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by SAL and the CD baselines.

    ``batch_size=None`` means full-batch.  ``beta_estimator`` picks how SAL
    obtains the inverse temperature that enters the hidden positive phase.
    ``eval_every`` controls how often ``kl_exact`` is computed (0 disables).
    ``eval_beta`` is ``"kl"`` (fit beta to the epoch's samples by KL) or
    ``"train"`` (reuse the training estimate).
    """

    eta: float = 0.05
    alpha: float = 0.5
    l2: float = 1e-5
    epochs: int = 100
    batch_size: int = None
    lsb: LsbConfig = field(default_factory=LsbConfig)
    beta_estimator: str = "cem"
    fixed_beta: float = 1.0
    seed: int = 0
    eval_every: int = 1
    eval_beta: str = "kl"
    beta_per_batch: bool = True
    stratify: bool = False
    checkpoint_every: int = 0
    out_dir: str = None

    def __post_init__(self):
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError("eta must be positive")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.beta_estimator not in ESTIMATORS:
            raise ValueError(f"beta_estimator must be one of {ESTIMATORS}")
        if self.eval_beta not in ("kl", "train"):
            raise ValueError("eval_beta must be 'kl' or 'train'")
        if self.checkpoint_every and not self.out_dir:
            raise ValueError("checkpoints need out_dir")

    def to_dict(self):
        d = asdict(self)
        d["lsb"] = asdict(self.lsb)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "lsb" in d and isinstance(d["lsb"], dict):
            d["lsb"] = LsbConfig(**d["lsb"])
        return cls(**d)


@dataclass(frozen=True)
class GradientSet:
    """Per-block gradients; ``dV`` is symmetric with a zero diagonal."""

    dV: np.ndarray
    dW: np.ndarray
    db: np.ndarray
    dc: np.ndarray

    def to_full(self):
        """``(dJ, df)`` laid out like ``ModelParams.J`` and ``.f``."""
        n_v, n_h = self.dW.shape
        N = n_v + n_h
        dJ = np.zeros((N, N))
        dJ[:n_v, :n_v] = self.dV
        dJ[:n_v, n_v:] = self.dW
        dJ[n_v:, :n_v] = self.dW.T
        return dJ, np.concatenate([self.db, self.dc])

    def norm(self):
        return float(np.sqrt(np.sum(np.triu(self.dV, 1) ** 2) + np.sum(self.dW ** 2)
                             + np.sum(self.db ** 2) + np.sum(self.dc ** 2)))


@dataclass
class HistoryRecord:
    epoch: int
    beta_eff: float
    estimator: str
    kl_exact: float
    grad_norm: float
    seconds: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def append(self, rec):
        if self.records and rec.epoch <= self.records[-1].epoch:
            raise ValueError("epochs must increase")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(HISTORY_FIELDS)
            for r in self.records:
                w.writerow([r.epoch, repr(r.beta_eff), r.estimator, repr(r.kl_exact),
                            repr(r.grad_norm), f"{r.seconds:.6f}"])

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
        h = cls()
        for r in rows:
            h.append(HistoryRecord(int(r["epoch"]), float(r["beta_eff"]), r["estimator"],
                                   float(r["kl_exact"]), float(r["grad_norm"]),
                                   float(r["seconds"])))
        return h


# -- gradients ----------------------------------------------------------------------

def _moments(v, h, weights=None):
    """Second moments of a batch: ``(vv, vh, v, h)`` with zero-diagonal ``vv``.

    Rows are summed in a canonical (sorted) order so the result does not
    depend on how the batch happens to be ordered, bit for bit.
    """
    if weights is None:
        order = np.lexsort(np.hstack([v, h]).T)
        v, h = v[order], h[order]
        w = np.full(v.shape[0], 1.0 / v.shape[0])
    else:
        w = np.asarray(weights, dtype=np.float64)
    vw = v * w[:, None]
    vv = vw.T @ v
    np.fill_diagonal(vv, 0.0)
    return vv, vw.T @ h, w @ v, w @ h


def _grad_from_moments(pos, neg):
    return GradientSet(*(n - p for p, n in zip(pos, neg)))


def sal_gradient(batch, neg_samples, beta_eff, u, neg_weights=None):
    """``(1 / beta_eff) * grad D_KL(P_D || Q_beta_eff)`` for a batch.

    Parameters
    ----------
    batch : array (D, n_v)
        Data vectors.
    neg_samples : SampleSet or array (L, N)
        Full-state samples of the current model (the negative phase).
    beta_eff : float
        Inverse temperature for the hidden-unit data expectations.
    u : ModelParams
    neg_weights : array (L,), optional
        Probabilities of the negative-phase states, e.g. all ``2**N`` states
        weighted by the exact distribution.  Uniform when omitted.

    Returns
    -------
    GradientSet
        Model (negative phase) moments minus data (positive phase) moments.
    """
    v = np.asarray(batch, dtype=np.float64)
    s = np.asarray(getattr(neg_samples, "samples", neg_samples), dtype=np.float64)
    if v.ndim != 2 or v.shape[0] == 0:
        raise ValueError("empty batch")
    if s.ndim != 2 or s.shape[0] == 0:
        raise ValueError("empty negative-phase sample set")
    if v.shape[1] != u.n_v or s.shape[1] != u.N:
        raise ValueError("dimension mismatch")
    if not beta_eff > 0:
        raise ValueError("beta_eff must be positive")
    h_data = np.tanh(beta_eff * (u.c + v @ u.W))
    pos = _moments(v, h_data)
    if neg_weights is not None and len(neg_weights) != s.shape[0]:
        raise ValueError("neg_weights does not match the samples")
    neg = _moments(s[:, : u.n_v], s[:, u.n_v:], neg_weights)
    return _grad_from_moments(pos, neg)


def init_params(n_v, n_h, structure, seed, std=1e-4):
    """Allowed couplings ~ N(0, std), biases zero."""
    N = n_v + n_h
    rng = np.random.default_rng(derive_seed(seed, _TAG_INIT))
    J = np.triu(rng.normal(0.0, std, size=(N, N)), 1)
    J = np.where(structure_mask(n_v, n_h, structure), J + J.T, 0.0)
    return ModelParams(n_v, n_h, J, np.zeros(N), structure)


class MomentumStep:
    """Momentum update in the ``(J, f)`` layout with the structure mask enforced."""

    def __init__(self, u, eta, alpha, l2, vel_J=None, vel_f=None):
        self.eta, self.alpha, self.l2 = eta, alpha, l2
        self.mask = u.mask()
        self.vel_J = np.zeros_like(u.J) if vel_J is None else np.array(vel_J, dtype=np.float64)
        self.vel_f = np.zeros_like(u.f) if vel_f is None else np.array(vel_f, dtype=np.float64)

    def __call__(self, u, grad):
        dJ, df = grad.to_full()
        self.vel_J = self.alpha * self.vel_J - self.eta * (dJ + self.l2 * u.J)
        self.vel_f = self.alpha * self.vel_f - self.eta * df
        self.vel_J = np.where(self.mask, self.vel_J, 0.0)
        J = np.where(self.mask, u.J + self.vel_J, 0.0)
        return u.replace(J=J, f=u.f + self.vel_f)


# -- evaluation helper ------------------------------------------------------------------

class _KLEvaluator:
    """Exact ``D_KL(P_D || Q_beta)`` for small models, reused across epochs."""

    def __init__(self, data_vectors, n_v):
        self.p_data = empirical_distribution(data_vectors, n_v)

    def __call__(self, u, beta):
        return kl_divergence(self.p_data, marginal_visible(u, beta))


def _can_enumerate(u):
    return u.N <= MAX_ENUM_SPINS


# -- checkpoints ----------------------------------------------------------------------------

def save_checkpoint(path, u, step, epoch, beta_prev, cfg):
    from .model import save_model

    save_model(u, path, extra={
        "checkpoint": {
            "epoch": epoch,
            "beta_prev": beta_prev,
            "vel_J": step.vel_J.reshape(-1).tolist(),
            "vel_f": step.vel_f.tolist(),
            "config": cfg.to_dict(),
        }
    })


def load_checkpoint(path):
    """Returns ``(u, state)`` with ``state`` holding epoch, beta and velocities."""
    with open(path) as fh:
        d = json.load(fh)
    u = ModelParams.from_dict(d)
    ck = d.get("checkpoint")
    if ck is None:
        raise ValueError(f"{path} is a model file without training state")
    state = {
        "epoch": int(ck["epoch"]),
        "beta_prev": float(ck["beta_prev"]),
        "vel_J": np.asarray(ck["vel_J"], dtype=np.float64).reshape(u.N, u.N),
        "vel_f": np.asarray(ck["vel_f"], dtype=np.float64),
    }
    return u, state


def _batches(data, cfg, epoch):
    D = len(data)
    if cfg.batch_size is None or cfg.batch_size >= D:
        return [np.arange(D)]
    seed = derive_seed(cfg.seed, _TAG_SHUFFLE, epoch)
    if cfg.stratify and data.labels is not None:
        return stratified_batches(data.labels, cfg.batch_size, seed)
    perm = np.random.default_rng(seed).permutation(D)
    n_batches = max(1, D // cfg.batch_size)
    return [np.sort(perm[b::n_batches]) for b in range(n_batches)]


def _resume(u0, cfg, resume):
    if resume is None:
        return u0, MomentumStep(u0, cfg.eta, cfg.alpha, cfg.l2), 1, None
    u, st = resume if isinstance(resume, tuple) else load_checkpoint(resume)
    step = MomentumStep(u, cfg.eta, cfg.alpha, cfg.l2, st["vel_J"], st["vel_f"])
    return u, step, st["epoch"] + 1, st["beta_prev"]


def _maybe_checkpoint(cfg, u, step, epoch, beta_prev, name):
    if cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
        os.makedirs(cfg.out_dir, exist_ok=True)
        save_checkpoint(os.path.join(cfg.out_dir, f"{name}_epoch{epoch:05d}.json"),
                        u, step, epoch, beta_prev, cfg)


# -- SAL --------------------------------------------------------------------------------------

def _estimate_beta(u, data, neg, cfg, epoch, b_idx, beta_prev, energies):
    """Returns ``(beta, label)``; falls back to the previous value (or 1)
    whenever the estimator does not converge."""
    fallback = 1.0 if beta_prev is None else beta_prev
    kind = cfg.beta_estimator
    if kind == "fixed":
        return cfg.fixed_beta, "fixed"
    if u.n_h == 0:
        # no hidden units: the update does not depend on beta
        return fallback, "none"
    if kind == "cem":
        rng = np.random.default_rng(derive_seed(cfg.seed, _TAG_COND, epoch, b_idx))
        r = data.vectors[rng.integers(len(data))]
        cem_cfg = replace(cfg.lsb, seed=derive_seed(cfg.seed, _TAG_CEM, epoch, b_idx))
        means = cem_conditional_means(u, r, cem_cfg)
        est = cem_estimate(means, r, u.W, u.c)
    elif kind == "mlpl":
        est = mlpl_estimate(neg, u)
    else:
        est = estimate_beta_kl(neg, u, energies=energies)
    if est.converged and est.beta > 0:
        return est.beta, est.method
    return fallback, est.method + "-fallback"


def sal_train(u0, data, cfg, resume=None, callback=None, name="sal"):
    """Sampler-adaptive learning.

    Each epoch (or mini-batch) draws the negative phase with LSB on the
    current model, estimates the sampler's inverse temperature (CEM by
    default, skipped when there are no hidden units), and takes one momentum
    step along :func:`sal_gradient`.

    Parameters
    ----------
    u0 : ModelParams
        Initial model; its structure tag fixes which couplings are trained.
    data : Dataset
    cfg : TrainConfig
    resume : path or (ModelParams, state), optional
        Checkpoint to continue from; epochs continue at ``epoch + 1``.
    callback : callable, optional
        ``callback(epoch, u)`` after each epoch's update.

    Returns
    -------
    (ModelParams, TrainHistory)
        ``kl_exact`` in the history is measured on the model *before* the
        epoch's update, using that epoch's negative-phase samples to fix beta.
    """
    if data.n_v != u0.n_v:
        raise ValueError("data width does not match the model")
    u, step, first, beta_prev = _resume(u0, cfg, resume)
    hist = TrainHistory()
    evaluate = _KLEvaluator(data.vectors, data.n_v) if _can_enumerate(u) else None
    for epoch in range(first, cfg.epochs + 1):
        t0 = time.perf_counter()
        do_eval = evaluate is not None and cfg.eval_every and epoch % cfg.eval_every == 0
        kl_val, grad_norms, beta_epoch, label = float("nan"), [], beta_prev, "none"
        for b_idx, idx in enumerate(_batches(data, cfg, epoch)):
            lsb_cfg = replace(cfg.lsb, seed=derive_seed(cfg.seed, _TAG_NEG, epoch, b_idx))
            neg = lsb_sample(u, lsb_cfg)
            energies = all_energies(u) if (do_eval and b_idx == 0) or (
                cfg.beta_estimator == "kl" and _can_enumerate(u)) else None
            if b_idx == 0 or cfg.beta_per_batch:
                beta_epoch, label = _estimate_beta(u, data, neg, cfg, epoch, b_idx,
                                                   beta_prev, energies)
                beta_prev = beta_epoch
            if do_eval and b_idx == 0:
                beta_eval = beta_epoch
                if cfg.eval_beta == "kl":
                    beta_eval = estimate_beta_kl(neg, u, energies=energies).beta
                kl_val = evaluate(u, beta_eval)
            grad = sal_gradient(data.vectors[idx], neg, beta_epoch, u)
            grad_norms.append(grad.norm())
            u = step(u, grad)
        hist.append(HistoryRecord(epoch, float(beta_epoch), label, float(kl_val),
                                  float(np.mean(grad_norms)), time.perf_counter() - t0))
        _maybe_checkpoint(cfg, u, step, epoch, beta_prev, name)
        if callback is not None:
            callback(epoch, u)
    return u, hist


# -- CD baselines --------------------------------------------------------------------------------

def _hidden_draw(p_mean, keys, counter):
    """``+1`` with probability ``(1 + mean) / 2``, one stream per row."""
    u01 = uniform_np(keys[:, None], counter + np.arange(p_mean.shape[1], dtype=np.uint64))
    return np.where(u01 < 0.5 * (1.0 + p_mean), 1.0, -1.0)


def _cd_run(u0, data, cfg, k, reconstruct, name, resume, callback):
    """Shared CD-k loop.  ``reconstruct(u, v, epoch, b_idx) -> v_neg`` returns
    the negative-phase visibles; hidden statistics on both sides use the
    analytic ``tanh`` means at beta = 1."""
    if data.n_v != u0.n_v:
        raise ValueError("data width does not match the model")
    u, step, first, _ = _resume(u0, cfg, resume)
    hist = TrainHistory()
    evaluate = _KLEvaluator(data.vectors, data.n_v) if _can_enumerate(u) else None
    for epoch in range(first, cfg.epochs + 1):
        t0 = time.perf_counter()
        kl_val = float("nan")
        if evaluate is not None and cfg.eval_every and epoch % cfg.eval_every == 0:
            kl_val = evaluate(u, 1.0)
        norms = []
        for b_idx, idx in enumerate(_batches(data, cfg, epoch)):
            v = data.vectors[idx].astype(np.float64)
            v_neg = reconstruct(u, v, epoch, b_idx)
            pos = _moments(v, np.tanh(u.c + v @ u.W))
            neg = _moments(v_neg, np.tanh(u.c + v_neg @ u.W))
            grad = _grad_from_moments(pos, neg)
            norms.append(grad.norm())
            u = step(u, grad)
        hist.append(HistoryRecord(epoch, 1.0, f"CD-{k}", float(kl_val),
                                  float(np.mean(norms)), time.perf_counter() - t0))
        _maybe_checkpoint(cfg, u, step, epoch, 1.0, name)
        if callback is not None:
            callback(epoch, u)
    return u, hist


def _meanfield_rounds(u, v, k, keys, visible_update):
    """``k`` rounds of: sample ``h | v``, then ``v <- visible_update(h, v)``."""
    for t in range(k):
        h = _hidden_draw(np.tanh(u.c + v @ u.W), keys, np.uint64(t * u.n_h))
        v = visible_update(h, v)
    return v


def cd_train_rbm(u0, data, k, cfg, visible="sample", resume=None, callback=None):
    """CD-k for an RBM at beta = 1.

    One chain per batch vector starts at that vector and runs ``k`` blocked
    Gibbs rounds.  ``visible="meanfield"`` replaces the visible draw by
    ``tanh(W h + b)``.
    """
    if u0.structure != "RBM":
        raise ValueError("cd_train_rbm needs an RBM-structured model")
    if visible not in ("sample", "meanfield"):
        raise ValueError("visible must be 'sample' or 'meanfield'")

    def reconstruct(u, v, epoch, b_idx):
        seed = derive_seed(cfg.seed, _TAG_CD, epoch, b_idx)
        if visible == "sample":
            v_k, _ = blocked_gibbs_chain(u, 1.0, k, v.astype(np.int8), seed)
            return v_k.astype(np.float64)
        keys = chain_keys(seed, v.shape[0])
        return _meanfield_rounds(u, v, k, keys, lambda h, _v: np.tanh(h @ u.W.T + u.b))

    return _cd_run(u0, data, cfg, k, reconstruct, f"cd{k}", resume, callback)


def dmfi_cd_train_srbm(u0, data, k, cfg, iters=5, damping=0.5, resume=None, callback=None):
    """CD-k for an SRBM with damped mean-field visible reconstruction.

    Each round samples ``h | v`` and then relaxes the visibles with
    :func:`dmfi_visible`, starting from the current visibles.  An
    RBM-structured ``u0`` is accepted too (its ``V`` block stays zero).
    """
    if u0.structure not in ("SRBM", "RBM"):
        raise ValueError("DMFI-CD needs a model with hidden units")

    def reconstruct(u, v, epoch, b_idx):
        keys = chain_keys(derive_seed(cfg.seed, _TAG_CD, epoch, b_idx), v.shape[0])
        return _meanfield_rounds(u, v, k, keys,
                                 lambda h, v_cur: dmfi_visible(u, h, v_cur, iters, damping))

    return _cd_run(u0, data, cfg, k, reconstruct, f"dmfi{k}", resume, callback)
