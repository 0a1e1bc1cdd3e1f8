"""Kernels, Gram matrices and kernel models in representer form.

``synthetic_mercer`` is the finite-rank kernel
``K(x, x') = sum_{k <= k_max} lambda_k e_k(x) e_k(x')`` on ``[0, 1]`` with
``e_k(x) = sqrt(2) cos(pi k x)`` (orthonormal under the uniform law) and
``lambda_k = beta * k^(-1/p)``, so the eigendecay is an input.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    bandwidth: Optional[float] = None
    beta: Optional[float] = None
    p_decay: Optional[float] = None
    k_max: int = 10_000

    def __post_init__(self):
        if self.kind == "rbf":
            if self.bandwidth is None or not self.bandwidth > 0:
                raise ValueError("rbf kernel needs bandwidth > 0")
        elif self.kind == "synthetic_mercer":
            if self.beta is None or not self.beta > 0:
                raise ValueError("synthetic_mercer needs beta > 0")
            if self.p_decay is None or not 0 < self.p_decay < 1:
                raise ValueError("synthetic_mercer needs p_decay in (0, 1)")
            if self.k_max < 1:
                raise ValueError("k_max must be >= 1")
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    @cached_property
    def eigenvalues(self):
        if self.kind != "synthetic_mercer":
            raise ValueError("eigenvalues are only explicit for synthetic_mercer")
        k = np.arange(1, self.k_max + 1, dtype=float)
        return self.beta * k ** (-1.0 / self.p_decay)

    @cached_property
    def bounded_sup(self):
        """``||K||_inf = sup_x K(x, x)``."""
        if self.kind == "rbf":
            return 1.0
        # cos^2 terms all reach 1 at x = 0
        return float(2.0 * self.eigenvalues.sum())

    @property
    def has_features(self):
        return self.kind == "synthetic_mercer"

    def to_dict(self):
        if self.kind == "rbf":
            return {"kind": "rbf", "bandwidth": self.bandwidth}
        return {"kind": self.kind, "beta": self.beta, "p_decay": self.p_decay, "k_max": self.k_max}

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d["kind"], bandwidth=d.get("bandwidth"), beta=d.get("beta"),
                   p_decay=d.get("p_decay"), k_max=int(d.get("k_max", 10_000)))


def _points(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None, None]
    elif x.ndim == 1:
        x = x[:, None]
    return x


def _unit_interval(x):
    if x.shape[1] != 1:
        raise ValueError("synthetic_mercer is defined on [0, 1] (one input column)")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("synthetic_mercer inputs must lie in [0, 1]")
    return x[:, 0]


def mercer_features(spec, x):
    """``Psi[i, k] = sqrt(lambda_k) e_k(x_i)`` so that ``K = Psi Psi^T``."""
    t = _unit_interval(_points(x))
    k = np.arange(1, spec.k_max + 1, dtype=float)
    return np.sqrt(2.0 * spec.eigenvalues) * np.cos(np.pi * np.outer(t, k))


def mercer_eigenfunctions(spec, x, k_upto=None):
    t = _unit_interval(_points(x))
    k = np.arange(1, (k_upto or spec.k_max) + 1, dtype=float)
    return np.sqrt(2.0) * np.cos(np.pi * np.outer(t, k))


def kernel_eval(spec, x, x2):
    return float(gram_matrix(spec, _points(x)[:1], _points(x2)[:1])[0, 0])


def gram_matrix(spec, points, others=None):
    """``G[i, j] = K(points_i, others_j)``; square and symmetric when
    ``others`` is omitted."""
    a = _points(points)
    b = a if others is None else _points(others)
    if spec.kind == "rbf":
        sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
        G = np.exp(-np.maximum(sq, 0.0) / (2.0 * spec.bandwidth ** 2))
    else:
        Pa = mercer_features(spec, a)
        Pb = Pa if others is None else mercer_features(spec, b)
        G = Pa @ Pb.T
    if others is None:
        G = 0.5 * (G + G.T)
    return G


@dataclass
class KernelModel:
    """``f(x) = sum_i a_i K(x_i, x)``."""
    coefficients: np.ndarray
    training_inputs: np.ndarray
    spec: KernelSpec

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        self.training_inputs = _points(self.training_inputs)
        if self.coefficients.shape != (self.training_inputs.shape[0],):
            raise ValueError("one coefficient per training input is required")
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("kernel model coefficients must be finite")

    @cached_property
    def feature_weights(self):
        """``theta = Psi^T a``: the model in eigen-coordinates
        (``synthetic_mercer`` only); ``f = sum_k theta_k sqrt(lambda_k) e_k``."""
        return mercer_features(self.spec, self.training_inputs).T @ self.coefficients


def rkhs_norm_sq(model, gram):
    gram = np.asarray(gram, dtype=float)
    a = model.coefficients
    if gram.shape != (a.size, a.size):
        raise ValueError(f"Gram shape {gram.shape} does not match {a.size} coefficients")
    return float(max(a @ gram @ a, 0.0))


def predict_kernel(model, query):
    q = _points(query)
    if model.spec.has_features:
        return mercer_features(model.spec, q) @ model.feature_weights
    return gram_matrix(model.spec, q, model.training_inputs) @ model.coefficients


def sup_bound_from_rkhs_ball(spec, rho_norm):
    """``sup_x |f(x)|`` over ``||f||_H <= rho_norm`` via the reproducing property."""
    if rho_norm < 0:
        raise ValueError("RKHS radius must be nonnegative")
    return float(rho_norm * np.sqrt(spec.bounded_sup))
