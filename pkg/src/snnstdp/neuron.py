"""Leaky integrate-and-fire neuron with an adaptive threshold.

All step functions are elementwise: the fields of :class:`NeuronState` may be
Python floats (one neuron) or numpy arrays (a population). The network module
uses the array form; tests use both.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class NeuronParams:
    c_m: float = 8.0  # pF
    g_leak: float = 0.8  # nS
    e_leak: float = -70.0  # mV
    v_reset: float = -90.0  # mV
    v_th_base: float = -55.0  # mV
    tau_th_decay: float = 15.0  # ms
    theta_bump: float = 5.0  # mV added to the threshold on every spike

    def __post_init__(self):
        if not (self.c_m > 0 and self.g_leak > 0 and self.tau_th_decay > 0):
            raise ValueError("c_m, g_leak and tau_th_decay must be positive")
        if not (self.v_reset < self.e_leak < self.v_th_base):
            raise ValueError("require v_reset < e_leak < v_th_base")
        if self.theta_bump < 0:
            raise ValueError("theta_bump must be >= 0")

    @property
    def tau_m(self) -> float:
        """Membrane time constant in ms (pF / nS)."""
        return self.c_m / self.g_leak


@dataclass
class NeuronState:
    v: float | np.ndarray
    v_th: float | np.ndarray
    spiked_last_step: bool | np.ndarray = False
    last_spike_time: float | np.ndarray | None = None

    @classmethod
    def rest(cls, params: NeuronParams, n: int | None = None) -> "NeuronState":
        """State at rest; ``n`` gives a population of that size."""
        if n is None:
            return cls(v=params.e_leak, v_th=params.v_th_base)
        return cls(
            v=np.full(n, params.e_leak),
            v_th=np.full(n, params.v_th_base),
            spiked_last_step=np.zeros(n, dtype=bool),
            last_spike_time=np.full(n, -np.inf),
        )


def _check_dt(dt):
    if not (math.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be a positive finite number, got {dt!r}")


def step_membrane(state: NeuronState, params: NeuronParams, input_current, dt: float) -> NeuronState:
    """One explicit Euler step of C dV/dt = -g (V - E_L) + I.

    Units: pA / pF * ms = mV, and nS * mV = pA. Spikes are not handled here.
    """
    _check_dt(dt)
    if not np.all(np.isfinite(input_current)):
        raise ValueError("input_current must be finite")
    dv = (dt / params.c_m) * (-params.g_leak * (state.v - params.e_leak) + input_current)
    return replace(state, v=state.v + dv)


def step_threshold(state: NeuronState, params: NeuronParams, dt: float) -> NeuronState:
    """Euler step of the threshold relaxing toward its baseline."""
    _check_dt(dt)
    v_th = state.v_th - dt * (state.v_th - params.v_th_base) / params.tau_th_decay
    return replace(state, v_th=v_th)


def fire_and_reset(state: NeuronState, params: NeuronParams, now: float, mask=None):
    """Spike where ``v >= v_th`` (restricted to ``mask`` if given) and reset.

    Returns ``(new_state, spiked)``. Spiking neurons go to ``v_reset`` and
    their threshold rises by ``theta_bump``.
    """
    spiked = np.asarray(state.v >= state.v_th)
    if mask is not None:
        spiked = spiked & mask
    if spiked.ndim == 0:
        if not spiked:
            return replace(state, spiked_last_step=False), False
        return (
            NeuronState(
                v=params.v_reset,
                v_th=state.v_th + params.theta_bump,
                spiked_last_step=True,
                last_spike_time=now,
            ),
            True,
        )
    v = np.where(spiked, params.v_reset, state.v)
    v_th = np.where(spiked, state.v_th + params.theta_bump, state.v_th)
    last = state.last_spike_time
    if last is None:
        last = np.full(spiked.shape, -np.inf)
    last = np.where(spiked, now, last)
    return NeuronState(v=v, v_th=v_th, spiked_last_step=spiked, last_spike_time=last), spiked


def analytic_membrane(v0: float, params: NeuronParams, input_current: float, t: float) -> float:
    """Closed-form membrane potential under a constant current (no spiking)."""
    v_inf = params.e_leak + input_current / params.g_leak
    return v_inf + (v0 - v_inf) * math.exp(-t * params.g_leak / params.c_m)


def euler_trajectory(v0: float, params: NeuronParams, input_current: float, t_end: float, dt: float) -> np.ndarray:
    """Membrane trajectory sampled at ``k * dt`` for k = 0..round(t_end/dt)."""
    n = int(round(t_end / dt))
    out = np.empty(n + 1)
    state = NeuronState(v=v0, v_th=params.v_th_base)
    out[0] = v0
    for k in range(1, n + 1):
        state = step_membrane(state, params, input_current, dt)
        out[k] = state.v
    return out
