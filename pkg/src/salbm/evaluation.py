"""Metrics and downstream tasks: sampling accuracy, model KL, overlap
histograms, masked-image reconstruction, conditional generation and
classification by conditional LSB sampling."""

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .model import (
    condition,
    empirical_distribution,
    exact_boltzmann,
    kl_divergence,
    marginal_visible,
)
from .rng import derive_seed
from .samplers import SampleSet, lsb_sample

OVERLAP_PAIR_CAP = 1_000_000


def sampling_accuracy(samples, u, beta):
    """``D_KL(P_S || B_beta)`` over full states."""
    if samples.samples.shape[1] != u.N:
        raise ValueError("samples do not match the model size")
    return kl_divergence(empirical_distribution(samples.samples, u.N), exact_boltzmann(u, beta))


def model_kl(u, beta, data):
    """``D_KL(P_D || Q_beta)`` with ``Q_beta`` the visible marginal."""
    vectors = getattr(data, "vectors", data)
    return kl_divergence(empirical_distribution(vectors, u.n_v), marginal_visible(u, beta))


# -- overlaps ------------------------------------------------------------------------

@dataclass(frozen=True)
class OverlapHistogram:
    edges: np.ndarray
    counts: np.ndarray
    n_pairs: int

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def density(self):
        return self.counts / max(self.n_pairs, 1)

    def to_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write(f"# n_pairs={self.n_pairs}\n")
            w = csv.writer(fh)
            w.writerow(["bin_lo", "bin_hi", "count"])
            for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c)])


def overlap_histogram(data, bins=21, pair_cap=OVERLAP_PAIR_CAP, seed=0):
    """Histogram of ``q = v_a . v_b / n_v`` over unordered pairs ``a < b``.

    Above ``pair_cap`` pairs, ``pair_cap`` distinct pairs are drawn without
    replacement with a seeded generator.
    """
    v = np.asarray(getattr(data, "vectors", data), dtype=np.float64)
    D, n = v.shape
    if D < 2:
        raise ValueError("need at least two vectors")
    total = D * (D - 1) // 2
    edges = np.linspace(-1.0, 1.0, bins + 1)
    if total <= pair_cap:
        a, b = np.triu_indices(D, 1)
    else:
        rng = np.random.default_rng(seed)
        flat = rng.choice(total, size=pair_cap, replace=False)
        a, b = _unrank_pairs(flat, D)
    counts = np.zeros(bins, dtype=np.int64)
    chunk = 1 << 20
    for s in range(0, len(a), chunk):
        q = np.einsum("ij,ij->i", v[a[s:s + chunk]], v[b[s:s + chunk]]) / n
        counts += np.histogram(q, bins=edges)[0]
    return OverlapHistogram(edges, counts, int(len(a)))


def _unrank_pairs(k, D):
    """Inverse of the row-major ranking of pairs ``(a, b)``, ``a < b``."""
    k = np.asarray(k, dtype=np.int64)
    # row a starts at a*D - a*(a+1)/2
    a = (D - 2 - np.floor(np.sqrt(-8.0 * k + 4.0 * D * (D - 1) - 7) / 2.0 - 0.5)).astype(np.int64)
    start = a * D - a * (a + 1) // 2
    b = k - start + a + 1
    return a, b


# -- conditional tasks --------------------------------------------------------------------

def _clamped_sample(u, fixed, lsb_cfg):
    u_red, emb = condition(u, fixed)
    s = lsb_sample(u_red, lsb_cfg)
    return emb.embed(s.samples)


def conditional_generate(u, fixed, lsb_cfg):
    """LSB samples with ``fixed`` visibles clamped; returns full visible vectors."""
    if not fixed:
        s = lsb_sample(u, lsb_cfg)
        return SampleSet(s.visible, u.n_v, 0, "LSB", lsb_cfg.seed, s.wall_time)
    full = _clamped_sample(u, fixed, lsb_cfg)
    return SampleSet(full[:, : u.n_v], u.n_v, 0, "LSB-conditional", lsb_cfg.seed)


def reconstruct(u, image, mask, lsb_cfg):
    """Fill in the pixels listed in ``mask`` by conditional LSB.

    All other visible spins are clamped to ``image``; each masked pixel is
    the majority vote over the chains, with ties resolved to +1.
    """
    image = np.asarray(image, dtype=np.int8)
    mask = np.unique(np.asarray(mask, dtype=np.int64))
    if image.shape != (u.n_v,):
        raise ValueError("image length does not match n_v")
    if mask.size == 0:
        return image.copy()
    if mask.min() < 0 or mask.max() >= u.n_v:
        raise IndexError("mask index outside the visible range")
    if mask.size == u.n_v:
        raise ValueError("mask covers every pixel")
    keep = np.setdiff1d(np.arange(u.n_v), mask)
    full = _clamped_sample(u, {int(i): int(image[i]) for i in keep}, lsb_cfg)
    out = image.copy()
    out[mask] = np.where(full[:, mask].sum(axis=0) >= 0, 1, -1)
    return out


def reconstruction_error(u, images, mask, lsb_cfg):
    """Fraction of wrongly restored masked pixels, per image."""
    images = np.asarray(getattr(images, "vectors", images), dtype=np.int8)
    mask = np.asarray(mask, dtype=np.int64)
    errs = np.empty(len(images))
    for i, img in enumerate(images):
        cfg = replace(lsb_cfg, seed=derive_seed(lsb_cfg.seed, i))
        rec = reconstruct(u, img, mask, cfg)
        errs[i] = np.mean(rec[mask] != img[mask])
    return errs


def classify(u, image, lsb_cfg, n_classes=10):
    """Clamp the image part of the visibles, sample the label spins, average
    them over chains and return the argmax (ties go to the lowest class)."""
    image = np.asarray(image, dtype=np.int8)
    n_img = u.n_v - n_classes
    if image.shape[-1] != n_img:
        raise ValueError(f"expected {n_img} image pixels")
    full = _clamped_sample(u, {i: int(image[i]) for i in range(n_img)}, lsb_cfg)
    means = full[:, n_img:u.n_v].mean(axis=0)
    return int(np.argmax(means))


def classify_many(u, images, lsb_cfg, n_classes=10):
    images = np.asarray(images, dtype=np.int8)
    return np.array([classify(u, img, replace(lsb_cfg, seed=derive_seed(lsb_cfg.seed, i)),
                              n_classes) for i, img in enumerate(images)], dtype=np.int64)


# -- reports ----------------------------------------------------------------------------------

@dataclass
class TaskReport:
    kind: str
    metrics: dict
    details: list = field(default_factory=list)

    def __post_init__(self):
        for k, v in self.metrics.items():
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ValueError(f"metric {k} is not a finite number")

    def to_json(self, path, header=None):
        d = {"kind": self.kind, "metrics": self.metrics}
        if header:
            d["provenance"] = header
        with open(path, "w") as fh:
            json.dump(d, fh, indent=2)

    def to_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            if not self.details:
                return
            cols = list(self.details[0])
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            w.writerows(self.details)
