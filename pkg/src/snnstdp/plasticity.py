"""STDP curves F(dt) and the soft-bound weight update.

``dt = t_post - t_pre`` in milliseconds. Every curve accepts scalars or
arrays and returns the same shape (a float for scalar input).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Union

import numpy as np

from .synapse import W_MAX, W_MIN


def _out(x, scalar):
    return float(x) if scalar else x


@dataclass(frozen=True)
class Conventional:
    a_up: float = 0.8
    a_down: float = -0.3
    tau_up: float = 5.0
    tau_down: float = 5.0

    name = "conventional"

    def __post_init__(self):
        if not (self.a_up > 0 and self.a_down < 0 and self.tau_up > 0 and self.tau_down > 0):
            raise ValueError("Conventional STDP needs a_up > 0, a_down < 0, positive taus")

    def __call__(self, delta_t):
        return f_conventional(self, delta_t)


@dataclass(frozen=True)
class Cos:
    tau_window: float = 1.5
    a_in: float = 1.0
    a_out: float = 4.0
    alpha1: float = 0.2
    alpha2: float = 0.4
    # evaluate the outer branch on dt itself instead of |dt| (diverges for dt << 0)
    strict_formula: bool = False

    name = "cos"

    def __post_init__(self):
        _check_window_rule(self)

    def __call__(self, delta_t):
        return f_cos(self, delta_t)


@dataclass(frozen=True)
class Sin:
    tau_window: float = 5.0
    a_in: float = 1.0
    a_out: float = 4.0
    alpha1: float = 0.2
    alpha2: float = 0.4

    name = "sin"

    def __post_init__(self):
        _check_window_rule(self)

    def __call__(self, delta_t):
        return f_sin(self, delta_t)


@dataclass(frozen=True)
class NGauss:
    a: float = 1.0
    sigma: float = 5.0

    name = "ngauss"

    def __post_init__(self):
        if not (self.a > 0 and self.sigma > 0):
            raise ValueError("nGauss STDP needs a > 0 and sigma > 0")

    def __call__(self, delta_t):
        return f_ngauss(self, delta_t)


StdpRule = Union[Conventional, Cos, Sin, NGauss]
RULES = {cls.name: cls for cls in (Conventional, Cos, Sin, NGauss)}


def _check_window_rule(rule):
    if not (rule.tau_window > 0 and rule.a_in > 0 and rule.a_out > 0):
        raise ValueError(f"{rule.name} STDP needs positive tau_window, a_in, a_out")
    if not (0 < rule.alpha1 < rule.alpha2):
        raise ValueError(f"{rule.name} STDP needs 0 < alpha1 < alpha2")


def rule_from_dict(d: dict) -> StdpRule:
    d = dict(d)
    kind = d.pop("kind")
    try:
        cls = RULES[kind]
    except KeyError:
        raise ValueError(f"unknown STDP rule {kind!r}; expected one of {sorted(RULES)}") from None
    return cls(**d)


def rule_to_dict(rule: StdpRule) -> dict:
    return {"kind": rule.name, **asdict(rule)}


def _double_exp(rule, x):
    return -rule.a_out * (np.exp(-rule.alpha1 * x) - np.exp(-rule.alpha2 * x))


def f_conventional(rule: Conventional, delta_t):
    """Exponential potentiation for dt > 0, depression for dt < 0; 0 at dt = 0."""
    scalar = np.ndim(delta_t) == 0
    dt = np.asarray(delta_t, dtype=float)
    up = rule.a_up * np.exp(-np.maximum(dt, 0.0) / rule.tau_up)
    down = rule.a_down * np.exp(np.minimum(dt, 0.0) / rule.tau_down)
    out = np.where(dt > 0, up, np.where(dt < 0, down, 0.0))
    return _out(out, scalar)


def f_cos(rule: Cos, delta_t):
    scalar = np.ndim(delta_t) == 0
    dt = np.asarray(delta_t, dtype=float)
    adt = np.abs(dt)
    tau = rule.tau_window
    inner = rule.a_in * np.cos(np.pi * dt / (2.0 * tau))
    outer_arg = (dt - tau) if rule.strict_formula else (adt - tau)
    with np.errstate(over="ignore"):
        outer = _double_exp(rule, outer_arg)
    out = np.where(adt <= tau, inner, outer)
    return _out(out, scalar)


def f_sin(rule: Sin, delta_t):
    scalar = np.ndim(delta_t) == 0
    dt = np.asarray(delta_t, dtype=float)
    two_tau = 2.0 * rule.tau_window
    neg = -rule.a_out * (np.exp(rule.alpha1 * np.minimum(dt, 0.0)) - np.exp(rule.alpha2 * np.minimum(dt, 0.0)))
    mid = rule.a_in * np.sin(np.pi * dt / two_tau)
    late = _double_exp(rule, np.maximum(dt - two_tau, 0.0))
    out = np.where(dt < 0, neg, np.where(dt <= two_tau, mid, late))
    return _out(out, scalar)


def f_ngauss(rule: NGauss, delta_t):
    scalar = np.ndim(delta_t) == 0
    dt = np.asarray(delta_t, dtype=float)
    out = -rule.a * np.exp(-(dt * dt) / (2.0 * rule.sigma**2))
    return _out(out, scalar)


@dataclass(frozen=True)
class LearningParams:
    eta: float = 0.03
    gamma: float = 0.9
    w_min: float = W_MIN
    w_max: float = W_MAX

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")


def weight_update(w, f_value, params: LearningParams, *, check: bool = True):
    """Soft-bound weight change for curve value ``f_value`` at weight ``w``.

    Depression scales with ``(w - w_min)**gamma`` and potentiation with
    ``(w_max - w)**gamma``, so the change vanishes at the bound it approaches.
    """
    scalar = np.ndim(w) == 0 and np.ndim(f_value) == 0
    w = np.asarray(w, dtype=float)
    f = np.asarray(f_value, dtype=float)
    if check and (np.any(w < params.w_min) or np.any(w > params.w_max)):
        raise ValueError(f"weight outside [{params.w_min}, {params.w_max}]")
    room_down = np.maximum(w - params.w_min, 0.0) ** params.gamma
    room_up = np.maximum(params.w_max - w, 0.0) ** params.gamma
    dw = np.where(f < 0, params.eta * f * room_down, np.where(f > 0, params.eta * f * room_up, 0.0))
    return _out(dw, scalar)
