"""Synthetic designs, noise, outlier contamination and MOM block partitions.

All randomness goes through :func:`make_rng`, a counter-based Philox stream
keyed by ``(seed, *keys)`` so any experiment cell can be regenerated on its
own, independent of scheduling.
"""
import csv
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np


def make_rng(seed, *keys):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class DesignSpec:
    """Row law of the design: ``gaussian_iso``, ``student`` (unit-variance
    coordinates) or ``uniform`` on ``[0, 1]^p`` (kernel experiments)."""
    kind: str = "gaussian_iso"
    nu: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("gaussian_iso", "student", "uniform"):
            raise ValueError(f"unknown design {self.kind!r}")
        if self.kind == "student" and (self.nu is None or not self.nu > 2):
            raise ValueError("student design needs nu > 2 for the unit-variance rescaling")

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d["kind"], nu=d.get("nu"))


@dataclass(frozen=True)
class NoiseSpec:
    """Symmetric noise law: ``gaussian(sigma)``, ``student(nu)``, ``cauchy``
    (standard) or ``uniform(a)`` on ``[-a, a]``."""
    kind: str = "gaussian"
    sigma: Optional[float] = None
    nu: Optional[float] = None
    a: Optional[float] = None

    def __post_init__(self):
        k = self.kind
        if k not in ("gaussian", "student", "cauchy", "uniform"):
            raise ValueError(f"unknown noise law {k!r}")
        if k == "gaussian" and (self.sigma is None or self.sigma < 0):
            raise ValueError("gaussian noise needs sigma >= 0")
        if k == "student" and (self.nu is None or not self.nu > 0):
            raise ValueError("student noise needs nu > 0")
        if k == "uniform" and (self.a is None or not self.a > 0):
            raise ValueError("uniform noise needs a > 0")

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d["kind"], sigma=d.get("sigma"), nu=d.get("nu"), a=d.get("a"))


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    truth: Any = None
    outliers: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs[:, None]
        self.targets = np.asarray(self.targets, dtype=float)
        self.outliers = np.asarray(self.outliers, dtype=np.int64)
        n = self.inputs.shape[0]
        if self.targets.shape != (n,):
            raise ValueError("targets must have one entry per input row")
        if self.outliers.size >= max(n, 1) and n > 0:
            raise ValueError("outlier set must be a strict subset of the rows")
        if np.unique(self.outliers).size != self.outliers.size:
            raise ValueError("outlier indices must be unique")
        if self.outliers.size and (self.outliers.min() < 0 or self.outliers.max() >= n):
            raise ValueError("outlier index out of range")

    @property
    def n(self):
        return self.inputs.shape[0]

    @property
    def p(self):
        return self.inputs.shape[1]

    @property
    def outlier_mask(self):
        mask = np.zeros(self.n, dtype=bool)
        mask[self.outliers] = True
        return mask


@dataclass(frozen=True)
class BlockPartition:
    """``blocks`` is an ``S x floor(N/S)`` index matrix; ``dropped`` holds the
    ``N mod S`` left-over indices."""
    blocks: np.ndarray
    dropped: np.ndarray

    @property
    def n_blocks(self):
        return self.blocks.shape[0]

    @property
    def block_size(self):
        return self.blocks.shape[1]


def generate_design(design, n, p, seed):
    if n < 1 or p < 1:
        raise ValueError("design needs N >= 1 and p >= 1")
    if isinstance(design, dict):
        design = DesignSpec.from_dict(design)
    rng = make_rng(seed, 1)
    if design.kind == "gaussian_iso":
        return rng.standard_normal((n, p))
    if design.kind == "student":
        nu = design.nu
        return rng.standard_t(nu, size=(n, p)) / np.sqrt(nu / (nu - 2.0))
    return rng.uniform(0.0, 1.0, size=(n, p))


def generate_noise(noise, n, seed):
    if n < 1:
        raise ValueError("noise needs N >= 1")
    if isinstance(noise, dict):
        noise = NoiseSpec.from_dict(noise)
    rng = make_rng(seed, 2)
    if noise.kind == "gaussian":
        return noise.sigma * rng.standard_normal(n)
    if noise.kind == "student":
        return rng.standard_t(noise.nu, size=n)
    if noise.kind == "cauchy":
        return rng.standard_cauchy(n)
    return rng.uniform(-noise.a, noise.a, size=n)


def make_regression_dataset(design, noise, truth, n, seed, p=None):
    """``Y = <X, t*> + W`` for a coefficient vector ``truth``, or
    ``Y = f*(X) + W`` when ``truth`` is callable (``p`` then defaults to 1)."""
    if callable(truth):
        X = generate_design(design, n, p or 1, seed)
        signal = np.asarray(truth(X[:, 0] if X.shape[1] == 1 else X), dtype=float)
    else:
        truth = np.asarray(truth, dtype=float)
        if p is not None and p != truth.shape[0]:
            raise ValueError(f"truth has dimension {truth.shape[0]} but design has p={p}")
        X = generate_design(design, n, truth.shape[0], seed)
        signal = X @ truth
    y = signal + generate_noise(noise, n, seed)
    return Dataset(inputs=X, targets=y, truth=truth)


def contaminate(data, frac, magnitude, mode="both", seed=0):
    """Replace ``floor(frac * N)`` random rows by adversarial ones.

    ``x_only`` rows get entries of size ``magnitude`` with random signs;
    ``y_only`` rows get targets ``+-magnitude`` alternating along the
    outlier list; ``both`` does both.
    """
    if not 0.0 <= frac < 1.0:
        raise ValueError("contamination fraction must lie in [0, 1)")
    if not magnitude > 0:
        raise ValueError("magnitude must be positive")
    if mode not in ("x_only", "y_only", "both"):
        raise ValueError(f"unknown contamination mode {mode!r}")
    n_out = int(np.floor(frac * data.n))
    if n_out == 0:
        return replace(data, inputs=data.inputs.copy(), targets=data.targets.copy())
    rng = make_rng(seed, 3)
    idx = np.sort(rng.choice(data.n, size=n_out, replace=False))
    X = data.inputs.copy()
    y = data.targets.copy()
    alternating = np.where(np.arange(n_out) % 2 == 0, 1.0, -1.0)
    if mode in ("x_only", "both"):
        signs = rng.choice(np.array([-1.0, 1.0]), size=(n_out, data.p))
        X[idx] = magnitude * signs
    if mode in ("y_only", "both"):
        y[idx] = magnitude * alternating
    merged = np.union1d(data.outliers, idx)
    return Dataset(inputs=X, targets=y, truth=data.truth, outliers=merged)


def partition_blocks(n, n_blocks, seed):
    if not 1 <= n_blocks <= n:
        raise ValueError(f"need 1 <= S <= N, got S={n_blocks}, N={n}")
    perm = make_rng(seed, 4).permutation(n)
    size = n // n_blocks
    used = n_blocks * size
    return BlockPartition(blocks=perm[:used].reshape(n_blocks, size), dropped=np.sort(perm[used:]))


def write_csv(data, path):
    """Header ``x_1..x_p,y,is_outlier``; floats written round-trip exact."""
    mask = data.outlier_mask
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x_{j + 1}" for j in range(data.p)] + ["y", "is_outlier"])
        for i in range(data.n):
            w.writerow([repr(float(v)) for v in data.inputs[i]]
                       + [repr(float(data.targets[i])), int(mask[i])])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    p = len(header) - 2
    if header[:p] != [f"x_{j + 1}" for j in range(p)] or header[p:] != ["y", "is_outlier"]:
        raise ValueError(f"unexpected dataset header {header}")
    arr = np.array([[float(v) for v in r[:p + 1]] for r in body]).reshape(len(body), p + 1)
    flags = np.array([int(r[p + 1]) for r in body], dtype=np.int64)
    return Dataset(inputs=arr[:, :p], targets=arr[:, p], outliers=np.flatnonzero(flags))
