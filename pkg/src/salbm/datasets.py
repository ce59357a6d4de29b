"""Benchmark data: 3-spin spin glass, SK couplings, bars-and-stripes, OptDigits."""

import csv
import gzip
import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.special import logsumexp

from .model import ModelParams, all_states

MAX_3SPIN_VISIBLE = 20


@dataclass
class Dataset:
    """``vectors`` is a ``(D, n_v)`` int8 array of spins."""

    vectors: np.ndarray
    labels: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.int8)
        if v.ndim != 2:
            raise ValueError("vectors must be a 2-d array")
        if v.size and not np.all(np.abs(v) == 1):
            raise ValueError("vectors must be +-1")
        self.vectors = v
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (v.shape[0],):
                raise ValueError("labels do not match vectors")

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def n_v(self):
        return self.vectors.shape[1]

    def subset(self, idx):
        lab = None if self.labels is None else self.labels[idx]
        return Dataset(self.vectors[idx], lab, dict(self.meta))

    def empirical(self):
        from .model import empirical_distribution

        return empirical_distribution(self.vectors, self.n_v)

    def to_csv(self, path, header_lines=()):
        with open(path, "w") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            meta = " ".join(f"{k}={v}" for k, v in self.meta.items())
            fh.write(f"# n_v={self.n_v} labels={int(self.labels is not None)} {meta}\n")
            rows = self.vectors.astype(np.int64)
            if self.labels is not None:
                rows = np.column_stack([rows, self.labels])
            np.savetxt(fh, rows, fmt="%d", delimiter=",")

    @classmethod
    def from_csv(cls, path):
        labelled = False
        n_v = None
        with open(path) as fh:
            for line in fh:
                if not line.startswith("#"):
                    break
                for tok in line[1:].split():
                    if tok.startswith("labels="):
                        labelled = tok.split("=", 1)[1] == "1"
                    elif tok.startswith("n_v="):
                        n_v = int(tok.split("=", 1)[1])
        rows = np.loadtxt(path, comments="#", delimiter=",", dtype=np.int64, ndmin=2)
        if rows.size == 0:
            return cls(np.zeros((0, n_v or 0), dtype=np.int8))
        if labelled:
            return cls(rows[:, :-1], rows[:, -1])
        return cls(rows)


# -- 3-spin model -----------------------------------------------------------------

@dataclass(frozen=True)
class ThreeSpinInstance:
    """Couplings ``T[t]`` on strictly increasing index triples ``triples[t]``."""

    n_v: int
    zeta: float
    triples: np.ndarray
    T: np.ndarray

    def energies(self, states):
        s = np.asarray(states, dtype=np.float64)
        prod = s[:, self.triples[:, 0]] * s[:, self.triples[:, 1]] * s[:, self.triples[:, 2]]
        return -(prod @ self.T)

    def exact_distribution(self):
        logw = -self.energies(all_states(self.n_v))
        return np.exp(logw - logsumexp(logw))

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump({"kind": "3spin", "n_v": self.n_v, "zeta": self.zeta,
                       "triples": self.triples.tolist(), "T": self.T.tolist()}, fh)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            d = json.load(fh)
        return cls(int(d["n_v"]), float(d["zeta"]), np.asarray(d["triples"], dtype=np.int64),
                   np.asarray(d["T"], dtype=np.float64))


def gen_3spin(n_v, zeta, D, seed):
    """Random 3-spin instance and ``D`` exact Boltzmann samples at beta = 1.

    ``T_ijk ~ N(0, sqrt(3) zeta / n_v)`` (standard deviation) for i < j < k.
    """
    if n_v > MAX_3SPIN_VISIBLE:
        raise ValueError(f"n_v={n_v} exceeds the enumeration limit {MAX_3SPIN_VISIBLE}")
    if n_v < 3:
        raise ValueError("3-spin model needs n_v >= 3")
    rng = np.random.default_rng(seed)
    triples = np.array(list(combinations(range(n_v), 3)), dtype=np.int64)
    T = rng.normal(0.0, np.sqrt(3.0) * zeta / n_v, size=len(triples))
    inst = ThreeSpinInstance(n_v, float(zeta), triples, T)
    p = inst.exact_distribution()
    idx = rng.choice(p.size, size=D, p=p)
    from .model import index_to_states

    data = Dataset(index_to_states(idx, n_v), meta={"generator": "3spin", "seed": seed, "zeta": zeta})
    return inst, data


# -- SK model ---------------------------------------------------------------------

def gen_sk(n, zeta, seed):
    """SK couplings ``J_ij ~ N(0, zeta / sqrt(n))`` (standard deviation), f = 0."""
    if n < 2:
        raise ValueError("SK model needs n >= 2")
    rng = np.random.default_rng(seed)
    J = np.triu(rng.normal(0.0, zeta / np.sqrt(n), size=(n, n)), 1)
    return ModelParams(n, 0, J + J.T, np.zeros(n), "FBM")


def save_sk(u, path, zeta=None, seed=None):
    iu = np.triu_indices(u.N, 1)
    with open(path, "w") as fh:
        json.dump({"kind": "sk", "n": u.N, "zeta": zeta, "seed": seed,
                   "pairs": np.column_stack(iu).tolist(), "J": u.J[iu].tolist()}, fh)


def load_sk(path):
    with open(path) as fh:
        d = json.load(fh)
    n = int(d["n"])
    J = np.zeros((n, n))
    pairs = np.asarray(d["pairs"], dtype=np.int64).reshape(-1, 2)
    J[pairs[:, 0], pairs[:, 1]] = d["J"]
    return ModelParams(n, 0, J + J.T, np.zeros(n), "FBM")


# -- bars and stripes -----------------------------------------------------------------

def bas_patterns(rows, cols, dedup=False):
    """All bar images (rows constant) then all stripe images (columns constant).

    Without ``dedup`` the two uniform images appear once in each family, so
    there are ``2**rows + 2**cols`` patterns.  Images are flattened row-major.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    pats = []
    for code in range(2 ** rows):
        rv = np.array([1 if (code >> r) & 1 else -1 for r in range(rows)], dtype=np.int8)
        pats.append(np.repeat(rv, cols))
    for code in range(2 ** cols):
        cv = np.array([1 if (code >> c) & 1 else -1 for c in range(cols)], dtype=np.int8)
        pats.append(np.tile(cv, rows))
    pats = np.array(pats, dtype=np.int8)
    if dedup:
        _, first = np.unique(pats, axis=0, return_index=True)
        pats = pats[np.sort(first)]
    return pats


def gen_bas(rows, cols, seed, dedup=False):
    """Shuffled BAS pattern list and its equal-halves (train, test) split."""
    pats = bas_patterns(rows, cols, dedup)
    perm = np.random.default_rng(seed).permutation(len(pats))
    pats = pats[perm]
    meta = {"generator": "bas", "rows": rows, "cols": cols, "seed": seed}
    half = len(pats) // 2
    full = Dataset(pats, meta=dict(meta))
    return full, Dataset(pats[:half], meta=dict(meta)), Dataset(pats[half:], meta=dict(meta))


def is_bas(images, rows, cols):
    """Row-wise flag: image has all rows constant or all columns constant."""
    img = np.asarray(images).reshape(-1, rows, cols)
    bars = np.all(img == img[:, :, :1], axis=(1, 2))
    stripes = np.all(img == img[:, :1, :], axis=(1, 2))
    return bars | stripes


def central_mask(rows, cols, mrows, mcols):
    """Flat indices of a centred ``mrows x mcols`` block."""
    r0 = (rows - mrows) // 2
    c0 = (cols - mcols) // 2
    return np.array([r * cols + c for r in range(r0, r0 + mrows) for c in range(c0, c0 + mcols)])


# -- OptDigits ---------------------------------------------------------------------------

OPTDIGITS_PIXELS = 64
OPTDIGITS_CLASSES = 10
OPTDIGITS_MAX = 16
OPTDIGITS_THRESHOLD = 8


def read_optdigits(path):
    """Parse the upstream comma-separated format: 64 pixels then the class.

    Files ending in ``.gz`` are decompressed on the fly.
    """
    X, y = [], []
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != OPTDIGITS_PIXELS + 1:
                raise ValueError(f"{path}:{lineno}: expected 65 fields, got {len(row)}")
            try:
                vals = [int(t) for t in row]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            px, cls = vals[:-1], vals[-1]
            if min(px) < 0 or max(px) > OPTDIGITS_MAX:
                raise ValueError(f"{path}:{lineno}: pixel out of range 0..{OPTDIGITS_MAX}")
            if not 0 <= cls < OPTDIGITS_CLASSES:
                raise ValueError(f"{path}:{lineno}: class {cls} outside 0..9")
            X.append(px)
            y.append(cls)
    return np.asarray(X, dtype=np.int64).reshape(-1, OPTDIGITS_PIXELS), np.asarray(y, dtype=np.int64)


def encode_optdigits(pixels, labels):
    """Binarise pixels (``>= 8`` -> +1) and append the +-1 one-hot class."""
    img = np.where(np.asarray(pixels) >= OPTDIGITS_THRESHOLD, 1, -1).astype(np.int8)
    onehot = -np.ones((len(labels), OPTDIGITS_CLASSES), dtype=np.int8)
    onehot[np.arange(len(labels)), labels] = 1
    return Dataset(np.hstack([img, onehot]), labels, {"generator": "optdigits"})


def ingest_optdigits(train_path, test_path):
    return tuple(encode_optdigits(*read_optdigits(p)) for p in (train_path, test_path))


def stratified_batches(labels, batch_size, seed):
    """Shuffle once and deal each class round-robin into ``D // batch_size``
    batches, so every batch holds roughly equal class proportions."""
    labels = np.asarray(labels)
    D = len(labels)
    n_batches = max(1, D // batch_size)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(D)
    order = perm[np.argsort(labels[perm], kind="stable")]
    return [np.sort(order[b::n_batches]) for b in range(n_batches)]


def stratified_split(data, test_fraction, seed):
    """Split a labelled dataset into (train, test) with per-class proportions kept."""
    if data.labels is None:
        raise ValueError("stratified split needs labels")
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    test = []
    for cls in np.unique(data.labels):
        idx = rng.permutation(np.flatnonzero(data.labels == cls))
        test.extend(idx[: int(round(test_fraction * len(idx)))])
    mask = np.zeros(len(data), dtype=bool)
    mask[test] = True
    return data.subset(np.flatnonzero(~mask)), data.subset(np.flatnonzero(mask))
