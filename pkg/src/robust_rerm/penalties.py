"""Even convex penalties and their proximal operators."""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

KINDS = ("elastic_net", "squared_hilbert_norm")
_JITTER = 1e-10


@dataclass(frozen=True)
class PenaltySpec:
    kind: str
    alpha: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if self.kind == "elastic_net":
            if self.alpha is None or not 0.0 <= self.alpha <= 1.0:
                raise ValueError("elastic_net needs alpha in [0, 1]")
        elif self.alpha is not None:
            raise ValueError("alpha is only used by elastic_net")

    def check_estimator_use(self):
        """Estimators take the open interval only; alpha in {0, 1} is lasso/ridge."""
        if self.kind == "elastic_net" and not 0.0 < self.alpha < 1.0:
            raise ValueError("estimators require elastic-net alpha strictly inside (0, 1)")

    def to_dict(self):
        out = {"kind": self.kind}
        if self.alpha is not None:
            out["alpha"] = float(self.alpha)
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d["kind"], alpha=d.get("alpha"))


def _gram(gram, n):
    if gram is None:
        raise ValueError("squared_hilbert_norm needs the Gram matrix")
    gram = np.asarray(gram, dtype=float)
    if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
        raise ValueError(f"Gram matrix must be square, got shape {gram.shape}")
    if gram.shape[0] != n:
        raise ValueError(f"Gram matrix is {gram.shape[0]}x{gram.shape[0]} but got {n} coefficients")
    return gram


def elastic_net_value(t, alpha):
    t = np.asarray(t, dtype=float)
    return float((1.0 - alpha) * np.abs(t).sum() + alpha * (t @ t))


def penalty_eval(spec, coeffs, gram=None):
    """phi(coeffs). For the RKHS norm ``coeffs`` are representer weights."""
    t = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if spec.kind == "elastic_net":
        return elastic_net_value(t, spec.alpha)
    K = _gram(gram, t.shape[0])
    return float(max(t @ K @ t, 0.0))


def soft_threshold(v, thr):
    return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)


def elastic_net_prox(v, step, alpha):
    """argmin_t 0.5||t - v||^2 + step*((1-alpha)||t||_1 + alpha||t||_2^2)."""
    return soft_threshold(v, step * (1.0 - alpha)) / (1.0 + 2.0 * step * alpha)


def penalty_prox(spec, v, step, gram=None):
    """argmin_t 0.5||t - v||^2 + step * phi(t)."""
    if not step > 0:
        raise ValueError("prox step must be positive")
    scalar = np.ndim(v) == 0
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if spec.kind == "elastic_net":
        out = elastic_net_prox(v, step, spec.alpha)
    else:
        K = _gram(gram, v.shape[0])
        shifted = np.eye(K.shape[0]) + 2.0 * step * K
        try:
            factor = cho_factor(shifted)
        except np.linalg.LinAlgError:
            # float Gram matrices can be marginally indefinite
            factor = cho_factor(shifted + _JITTER * np.eye(K.shape[0]))
        out = cho_solve(factor, v)
    return float(out[0]) if scalar else out


def eta_constant(spec):
    """Quasi-triangle constant: phi(f + g) <= eta (phi(f) + phi(g))."""
    return 2.0
