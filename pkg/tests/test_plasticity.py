import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snnstdp.plasticity import (
    Conventional,
    Cos,
    LearningParams,
    NGauss,
    Sin,
    rule_from_dict,
    rule_to_dict,
    weight_update,
)
from snnstdp.synapse import SynapseModel, SynapseState, apply_delta


def test_conventional_values():
    r = Conventional()
    assert r(5.0) == pytest.approx(0.8 * math.exp(-1), rel=1e-15)
    assert r(5.0) == pytest.approx(0.294304, abs=1e-6)
    assert r(-5.0) == pytest.approx(-0.3 * math.exp(-1), rel=1e-15)
    assert r(0.0) == 0.0


def test_cos_values():
    r = Cos()
    assert r(0.0) == 1.0
    assert r(1.5) == pytest.approx(0.0, abs=1e-15)
    x = 3.0 - 1.5
    assert r(3.0) == pytest.approx(-4 * (math.exp(-0.2 * x) - math.exp(-0.4 * x)), rel=1e-14)


def test_cos_symmetry_and_strict_variant():
    r = Cos()
    dt = np.linspace(-25, 25, 501)
    np.testing.assert_array_equal(r(dt), r(-dt))
    strict = Cos(strict_formula=True)
    assert strict(3.0) == r(3.0)
    # raw dt in the outer branch turns late pre spikes into strong potentiation
    assert strict(-10.0) > 0 > r(-10.0)


def test_sin_values():
    r = Sin()
    assert r(0.0) == 0.0
    assert r(5.0) == pytest.approx(1.0)
    assert r(10.0) == pytest.approx(0.0, abs=1e-15)
    assert r(-3.0) == pytest.approx(-4 * (math.exp(-0.6) - math.exp(-1.2)), rel=1e-14)
    assert r(14.0) == pytest.approx(-4 * (math.exp(-0.8) - math.exp(-1.6)), rel=1e-14)


def test_ngauss_values():
    r = NGauss()
    assert r(0.0) == -1.0
    assert r(5.0) == pytest.approx(-math.exp(-0.5))
    assert np.all(r(np.linspace(-100, 100, 1001)) <= 0)


def test_scalar_and_array_shapes():
    for r in (Conventional(), Cos(), Sin(), NGauss()):
        assert isinstance(r(1.0), float)
        assert r(np.zeros((2, 3))).shape == (2, 3)


def test_rule_validation():
    with pytest.raises(ValueError):
        Conventional(a_up=-1)
    with pytest.raises(ValueError):
        Cos(alpha1=0.5, alpha2=0.4)
    with pytest.raises(ValueError):
        NGauss(sigma=0)
    with pytest.raises(ValueError):
        rule_from_dict({"kind": "hebbian"})


def test_rule_dict_round_trip():
    for r in (Conventional(), Cos(strict_formula=True), Sin(tau_window=4.0), NGauss(a=0.2)):
        assert rule_from_dict(rule_to_dict(r)) == r


def test_weight_update_soft_bounds():
    p = LearningParams(eta=0.1, gamma=0.9)
    assert weight_update(1.0, 0.8, p) == 0.0
    assert weight_update(p.w_min, -0.3, p) == 0.0
    assert weight_update(0.5, 0.0, p) == 0.0
    assert weight_update(0.5, 1.0, p) == pytest.approx(0.1 * 0.5**0.9)
    assert weight_update(0.5, -1.0, p) == pytest.approx(-0.1 * (0.5 - 0.001) ** 0.9)


def test_weight_update_checks_range():
    p = LearningParams()
    with pytest.raises(ValueError):
        weight_update(1.5, 1.0, p)
    assert weight_update(1.5, 1.0, p, check=False) == 0.0


def test_learning_params_validation():
    with pytest.raises(ValueError):
        LearningParams(eta=0)
    with pytest.raises(ValueError):
        LearningParams(gamma=1.5)


@settings(max_examples=200, deadline=None)
@given(w=st.floats(1e-3, 1.0), f=st.floats(-5.0, 5.0), eta=st.floats(1e-3, 1.0))
def test_update_direction_and_clamped_result(w, f, eta):
    # gamma < 1 lets a raw step overshoot a bound; the synapse clamp restores it
    p = LearningParams(eta=eta)
    dw = weight_update(w, f, p)
    assert np.sign(dw) in (0.0, np.sign(f))
    out = apply_delta(SynapseModel.ideal(), SynapseState(np.array([w])), np.array([dw])).weight[0]
    assert p.w_min <= out <= p.w_max


@settings(max_examples=100, deadline=None)
@given(dt=st.floats(-25, 25))
def test_curve_signs(dt):
    assert NGauss()(dt) < 0
    c = Conventional()(dt)
    assert (c > 0) == (dt > 0) and (c < 0) == (dt < 0)
