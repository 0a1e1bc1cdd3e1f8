"""Lipschitz convex losses ``lbar(u, y)`` and their subgradients in ``u``."""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

KINDS = ("logistic", "hinge_classification", "huber", "quantile", "hinge_regression")
CLASSIFICATION = ("logistic", "hinge_classification")
SMOOTH = ("logistic", "huber")


class DomainError(ValueError):
    """Raised for inputs outside a loss's domain."""


@dataclass(frozen=True)
class LossSpec:
    kind: str
    delta: Optional[float] = None
    tau: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "huber":
            if self.delta is None or not self.delta > 0:
                raise ValueError("huber loss needs delta > 0")
        elif self.delta is not None:
            raise ValueError(f"delta is only used by huber, not {self.kind}")
        if self.kind == "quantile":
            if self.tau is None or not 0 < self.tau < 1:
                raise ValueError("quantile loss needs tau in (0, 1)")
        elif self.tau is not None:
            raise ValueError(f"tau is only used by quantile, not {self.kind}")

    @property
    def smooth(self):
        return self.kind in SMOOTH

    @property
    def curvature(self):
        """Bound on the second derivative in ``u`` (smooth kinds only)."""
        if self.kind == "huber":
            return 1.0
        if self.kind == "logistic":
            return 0.25
        raise ValueError(f"{self.kind} loss is not differentiable")

    def to_dict(self):
        out = {"kind": self.kind}
        if self.delta is not None:
            out["delta"] = float(self.delta)
        if self.tau is not None:
            out["tau"] = float(self.tau)
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d["kind"], delta=d.get("delta"), tau=d.get("tau"))


def _check(spec, u, y):
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
        raise DomainError("loss inputs must be finite")
    if spec.kind in CLASSIFICATION and not np.all(np.abs(y) == 1):
        raise DomainError(f"{spec.kind} loss needs targets in {{-1, +1}}")
    return u, y


def _scalar(x, *inputs):
    if all(np.ndim(a) == 0 for a in inputs):
        return float(x)
    return x


def loss_eval(spec, u, y):
    """Pointwise loss; broadcasts over arrays."""
    u_, y_ = _check(spec, u, y)
    kind = spec.kind
    if kind == "logistic":
        val = np.logaddexp(0.0, -y_ * u_)
    elif kind == "hinge_classification":
        val = np.maximum(1.0 - u_ * y_, 0.0)
    elif kind == "huber":
        d = spec.delta
        r = np.abs(y_ - u_)
        val = np.where(r <= d, 0.5 * r * r, d * r - 0.5 * d * d)
    elif kind == "quantile":
        z = u_ - y_
        val = z * (spec.tau - (z <= 0))
    else:
        val = np.maximum(y_ - u_, 0.0)
    return _scalar(val, u, y)


def loss_subgradient(spec, u, y):
    """An element of the subdifferential of ``u -> lbar(u, y)``.

    Kink conventions: quantile returns ``tau - 1/2`` at ``u == y``; both hinge
    losses return 0 at their kink.
    """
    u_, y_ = _check(spec, u, y)
    kind = spec.kind
    if kind == "logistic":
        g = -y_ * expit(-y_ * u_)
    elif kind == "hinge_classification":
        g = np.where(u_ * y_ < 1.0, -y_, 0.0)
    elif kind == "huber":
        g = np.clip(u_ - y_, -spec.delta, spec.delta)
    elif kind == "quantile":
        z = u_ - y_
        g = np.where(z > 0, spec.tau, np.where(z < 0, spec.tau - 1.0, spec.tau - 0.5))
    else:
        g = np.where(y_ > u_, -1.0, 0.0)
    return _scalar(g, u, y)


def lipschitz_constant(spec):
    return float(spec.delta) if spec.kind == "huber" else 1.0


def empirical_risk(spec, predictions, targets):
    """``P_N l_f``: mean pointwise loss."""
    predictions = np.asarray(predictions, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if predictions.shape != targets.shape:
        raise ValueError(
            f"length mismatch: {predictions.shape} predictions vs {targets.shape} targets"
        )
    if predictions.size == 0:
        raise ValueError("empirical risk needs at least one point")
    return float(np.mean(loss_eval(spec, predictions, targets)))
