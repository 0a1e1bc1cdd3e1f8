import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robust_rerm.losses import (DomainError, LossSpec, empirical_risk, lipschitz_constant,
                                loss_eval, loss_subgradient)

LOSSES = [LossSpec("logistic"), LossSpec("hinge_classification"), LossSpec("huber", delta=1.5),
          LossSpec("quantile", tau=0.3), LossSpec("hinge_regression")]
reals = st.floats(-50, 50, allow_nan=False)


def _target(spec, y):
    return np.sign(y) + (y == 0) if spec.kind in ("logistic", "hinge_classification") else y


def test_catalogue_values():
    assert loss_eval(LossSpec("logistic"), 0.0, 1.0) == pytest.approx(np.log(2.0))
    assert loss_eval(LossSpec("hinge_classification"), 0.25, -1.0) == 1.25
    h = LossSpec("huber", delta=2.0)
    assert loss_eval(h, 1.0, 0.0) == 0.5
    assert loss_eval(h, 5.0, 0.0) == 2.0 * 5.0 - 2.0
    q = LossSpec("quantile", tau=0.25)
    assert loss_eval(q, 2.0, 0.0) == 0.5
    assert loss_eval(q, -2.0, 0.0) == 1.5
    assert loss_eval(LossSpec("hinge_regression"), 1.0, 3.0) == 2.0
    assert loss_eval(LossSpec("hinge_regression"), 3.0, 1.0) == 0.0


def test_kink_conventions():
    assert loss_subgradient(LossSpec("quantile", tau=0.3), 1.0, 1.0) == pytest.approx(-0.2)
    assert loss_subgradient(LossSpec("hinge_classification"), 1.0, 1.0) == 0.0
    assert loss_subgradient(LossSpec("hinge_regression"), 2.0, 2.0) == 0.0


def test_lipschitz_constants():
    assert lipschitz_constant(LossSpec("huber", delta=3.0)) == 3.0
    assert all(lipschitz_constant(s) == 1.0 for s in LOSSES if s.kind != "huber")


@pytest.mark.parametrize("kw", [dict(kind="huber"), dict(kind="huber", delta=0.0),
                                dict(kind="quantile", tau=1.0), dict(kind="logistic", tau=0.5),
                                dict(kind="absolute")])
def test_invalid_specs(kw):
    with pytest.raises(ValueError):
        LossSpec(**kw)


def test_domain_errors():
    with pytest.raises(DomainError):
        loss_eval(LossSpec("logistic"), 0.0, 0.5)
    with pytest.raises(DomainError):
        loss_eval(LossSpec("huber", delta=1.0), np.nan, 0.0)
    with pytest.raises(ValueError, match="length"):
        empirical_risk(LossSpec("hinge_regression"), np.zeros(3), np.zeros(2))
    with pytest.raises(ValueError):
        empirical_risk(LossSpec("hinge_regression"), np.zeros(0), np.zeros(0))


def test_roundtrip_dict():
    for s in LOSSES:
        assert LossSpec.from_dict(s.to_dict()) == s


def test_logistic_large_margin_is_finite():
    assert loss_eval(LossSpec("logistic"), -800.0, 1.0) == pytest.approx(800.0)


@pytest.mark.parametrize("spec", LOSSES, ids=lambda s: s.kind)
@given(u=reals, v=reals, y=reals)
def test_lipschitz(spec, u, v, y):
    y = _target(spec, y)
    assert abs(loss_eval(spec, u, y) - loss_eval(spec, v, y)) <= lipschitz_constant(spec) * abs(u - v) + 1e-9


@pytest.mark.parametrize("spec", LOSSES, ids=lambda s: s.kind)
@given(u=reals, v=reals, y=reals, w=st.floats(0, 1))
def test_convex_and_subgradient(spec, u, v, y, w):
    y = _target(spec, y)
    m = w * u + (1 - w) * v
    assert loss_eval(spec, m, y) <= w * loss_eval(spec, u, y) + (1 - w) * loss_eval(spec, v, y) + 1e-9
    g = loss_subgradient(spec, u, y)
    assert loss_eval(spec, v, y) >= loss_eval(spec, u, y) + g * (v - u) - 1e-9


def test_smooth_gradient_matches_finite_difference(rng):
    for spec in (LossSpec("logistic"), LossSpec("huber", delta=0.7)):
        u = rng.normal(size=200) * 3
        y = np.sign(rng.normal(size=200)) if spec.kind == "logistic" else rng.normal(size=200)
        h = 1e-6
        fd = (loss_eval(spec, u + h, y) - loss_eval(spec, u - h, y)) / (2 * h)
        np.testing.assert_allclose(loss_subgradient(spec, u, y), fd, atol=1e-6)
