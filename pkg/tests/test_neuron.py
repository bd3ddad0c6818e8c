import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snnstdp.neuron import (
    NeuronParams,
    NeuronState,
    analytic_membrane,
    euler_trajectory,
    fire_and_reset,
    step_membrane,
    step_threshold,
)

P = NeuronParams()


def test_defaults_and_tau():
    assert P.tau_m == pytest.approx(10.0)
    s = NeuronState.rest(P)
    assert s.v == -70.0 and s.v_th == -55.0


def test_rest_is_fixed_point():
    s = step_membrane(NeuronState.rest(P), P, 0.0, 1.0)
    assert s.v == -70.0


def test_single_euler_step_value():
    # dv = dt/C * (-g (v - E) + I) = 1/8 * 8 = 1 mV
    s = step_membrane(NeuronState.rest(P), P, 8.0, 1.0)
    assert s.v == pytest.approx(-69.0, abs=1e-12)


def test_threshold_decays_toward_base():
    s = NeuronState(v=-70.0, v_th=-45.0)
    s1 = step_threshold(s, P, 1.0)
    assert s1.v_th == pytest.approx(-45.0 - 10.0 / 15.0)
    s_base = step_threshold(NeuronState.rest(P), P, 1.0)
    assert s_base.v_th == -55.0


def test_fire_and_reset_scalar():
    s, spiked = fire_and_reset(NeuronState(v=-54.0, v_th=-55.0), P, now=3.0)
    assert spiked and s.v == -90.0 and s.v_th == -50.0 and s.last_spike_time == 3.0
    s, spiked = fire_and_reset(NeuronState(v=-56.0, v_th=-55.0), P, now=3.0)
    assert not spiked and s.v == -56.0


def test_fire_exactly_at_threshold():
    _, spiked = fire_and_reset(NeuronState(v=-55.0, v_th=-55.0), P, now=0.0)
    assert spiked


def test_fire_and_reset_array_with_mask():
    s = NeuronState(v=np.array([-50.0, -50.0, -60.0]), v_th=np.full(3, -55.0))
    s2, spiked = fire_and_reset(s, P, now=1.0, mask=np.array([False, True, True]))
    assert spiked.tolist() == [False, True, False]
    assert s2.v.tolist() == [-50.0, -90.0, -60.0]
    assert s2.v_th.tolist() == [-55.0, -50.0, -55.0]


def test_invalid_inputs():
    with pytest.raises(ValueError):
        step_membrane(NeuronState.rest(P), P, 1.0, 0.0)
    with pytest.raises(ValueError):
        step_membrane(NeuronState.rest(P), P, float("nan"), 1.0)
    with pytest.raises(ValueError):
        step_threshold(NeuronState.rest(P), P, -1.0)
    with pytest.raises(ValueError):
        NeuronParams(c_m=0.0)
    with pytest.raises(ValueError):
        NeuronParams(v_reset=-60.0)


def test_constant_current_spike_threshold():
    # steady state E_L + I/g crosses -55 mV iff I > 12 pA
    assert analytic_membrane(-70.0, P, 11.9, 1e6) < -55.0
    assert analytic_membrane(-70.0, P, 12.1, 1e6) > -55.0


def test_trajectory_matches_closed_form_recurrence():
    # Euler recurrence: v_k - v_inf = (v0 - v_inf) (1 - dt/tau)^k
    traj = euler_trajectory(-70.0, P, 10.0, 5.0, 0.5)
    v_inf = -70.0 + 10.0 / 0.8
    k = np.arange(len(traj))
    expected = v_inf + (-70.0 - v_inf) * (1 - 0.5 / 10.0) ** k
    np.testing.assert_allclose(traj, expected, rtol=0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(v=st.floats(-100, 0), i=st.floats(-50, 50), dt=st.floats(0.01, 2.0))
def test_membrane_step_moves_toward_steady_state(v, i, dt):
    v_inf = P.e_leak + i / P.g_leak
    s = step_membrane(NeuronState(v=v, v_th=-55.0), P, i, dt)
    # dt < tau_m: no overshoot past v_inf
    assert abs(s.v - v_inf) <= abs(v - v_inf) + 1e-9


@settings(max_examples=50, deadline=None)
@given(th=st.floats(-55, 20), dt=st.floats(0.01, 5.0))
def test_threshold_never_undershoots_base(th, dt):
    s = step_threshold(NeuronState(v=-70.0, v_th=th), P, dt)
    assert -55.0 <= s.v_th <= th + 1e-12


def test_analytic_membrane_limits():
    assert analytic_membrane(-70.0, P, 5.0, 0.0) == -70.0
    assert math.isclose(analytic_membrane(-70.0, P, 5.0, 1e4), -70.0 + 5.0 / 0.8)
