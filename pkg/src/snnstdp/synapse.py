"""Synapse weight models: ideal (continuous), linear and non-linear finite-state.

Weights live in ``[W_MIN, W_MAX]``. Finite-state models keep an ascending
table of admissible weights and every update snaps to a table entry.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

W_MIN = 1e-3
W_MAX = 1.0

# Measured PCMO RRAM conductance levels (state, conductance in uS).
RRAM_CONDUCTANCE_US = (
    (1, 316.228),
    (2, 199.526),
    (3, 125.893),
    (4, 63.096),
    (5, 25.119),
    (6, 12.589),
    (7, 5.754),
    (8, 3.981),
)


class SynapseKind(str, Enum):
    IDEAL = "ideal"
    LINEAR = "linear"
    NONLINEAR = "nonlinear"


class DegenerateRangeError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


def nonlinear_weight(i, n: int, nu: float, w_min: float = W_MIN, w_max: float = W_MAX):
    """Weight of state ``i`` out of ``0..n`` on the exponential device curve."""
    i = np.asarray(i, dtype=float)
    scale = (w_max - w_min) / (1.0 - math.exp(-nu))
    return w_max - scale * (1.0 - np.exp(-nu * (1.0 - i / n)))


def build_state_table(kind, n_states: int | None = None, nu: float | None = None,
                      w_min: float = W_MIN, w_max: float = W_MAX) -> np.ndarray:
    kind = SynapseKind(kind)
    if kind is SynapseKind.IDEAL:
        return np.empty(0)
    if n_states is None or n_states < 2:
        raise ValueError(f"finite-state synapse needs n_states >= 2, got {n_states!r}")
    idx = np.arange(n_states)
    n = n_states - 1
    if kind is SynapseKind.LINEAR:
        table = w_min + idx * (w_max - w_min) / n
    else:
        if nu is None or not nu > 0:
            raise ValueError(f"non-linear synapse needs nu > 0, got {nu!r}")
        table = nonlinear_weight(idx, n, nu, w_min, w_max)
    # pin the endpoints against rounding
    table[0] = w_min
    table[-1] = w_max
    return table


@dataclass(frozen=True)
class SynapseModel:
    kind: SynapseKind = SynapseKind.IDEAL
    n_states: int | None = None
    nu: float | None = None
    w_min: float = W_MIN
    w_max: float = W_MAX
    state_weights: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", SynapseKind(self.kind))
        if self.kind is SynapseKind.IDEAL:
            object.__setattr__(self, "n_states", None)
            object.__setattr__(self, "nu", None)
        table = build_state_table(self.kind, self.n_states, self.nu, self.w_min, self.w_max)
        table.setflags(write=False)
        object.__setattr__(self, "state_weights", table)

    @classmethod
    def ideal(cls):
        return cls(SynapseKind.IDEAL)

    @classmethod
    def linear(cls, n_states: int):
        return cls(SynapseKind.LINEAR, n_states)

    @classmethod
    def nonlinear(cls, n_states: int, nu: float = 3.6):
        return cls(SynapseKind.NONLINEAR, n_states, nu)

    @property
    def finite(self) -> bool:
        return self.kind is not SynapseKind.IDEAL

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "n_states": self.n_states, "nu": self.nu}

    @classmethod
    def from_dict(cls, d: dict) -> "SynapseModel":
        return cls(SynapseKind(d["kind"]), d.get("n_states"), d.get("nu"))

    def label(self) -> str:
        if not self.finite:
            return "ideal"
        return f"{self.kind.value}{self.n_states}"


@dataclass
class SynapseState:
    """Weights (and state indices for finite-state models) of a synapse array."""

    weight: np.ndarray
    state_index: np.ndarray | None = None


def initial_state(model: SynapseModel, shape, rng: np.random.Generator | None = None) -> SynapseState:
    """All synapses at ``w_max``, or uniformly random when ``rng`` is given."""
    if model.finite:
        n = model.n_states
        if rng is None:
            idx = np.full(shape, n - 1, dtype=np.int16)
        else:
            idx = rng.integers(0, n, size=shape).astype(np.int16)
        return SynapseState(model.state_weights[idx], idx)
    if rng is None:
        return SynapseState(np.full(shape, model.w_max))
    return SynapseState(rng.uniform(model.w_min, model.w_max, size=shape))


def snap_to_states(table: np.ndarray, target, current_index):
    """Index of the table entry nearest to ``target``.

    Equidistant targets keep ``current_index`` when it is one of the two
    candidates, otherwise take the lower entry.
    """
    target = np.asarray(target, dtype=float)
    current_index = np.asarray(current_index)
    hi = np.clip(np.searchsorted(table, target), 1, len(table) - 1)
    lo = hi - 1
    d_lo = target - table[lo]
    d_hi = table[hi] - target
    idx = np.where(d_hi < d_lo, hi, lo)
    tie = d_hi == d_lo
    if np.any(tie):
        keep = tie & ((current_index == lo) | (current_index == hi))
        idx = np.where(keep, current_index, idx)
    return idx.astype(current_index.dtype)


def apply_delta(model: SynapseModel, state: SynapseState, delta_w) -> SynapseState:
    """Apply a weight change, clamped to the bounds and snapped for finite models."""
    target = np.clip(state.weight + delta_w, model.w_min, model.w_max)
    if not model.finite:
        return SynapseState(target)
    idx = snap_to_states(model.state_weights, target, state.state_index)
    return SynapseState(model.state_weights[idx], idx)


def normalize_conductances(g_values) -> np.ndarray:
    """Affine map of conductances onto ``[W_MIN, W_MAX]`` (order preserving)."""
    g = np.asarray(g_values, dtype=float)
    if g.size == 0:
        raise ValueError("no conductance values")
    if np.any(g <= 0):
        raise ValueError("conductances must be positive")
    g_min, g_max = g.min(), g.max()
    if g_max == g_min:
        raise DegenerateRangeError("all conductance values are equal")
    w = W_MIN + (g - g_min) * (W_MAX - W_MIN) / (g_max - g_min)
    w[g == g_max] = W_MAX
    w[g == g_min] = W_MIN
    return w


def _nu_loss(nu, w, n, loss):
    r = nonlinear_weight(np.arange(n + 1), n, nu) - w
    if loss == "l1":
        return float(np.abs(r).sum())
    return float((r * r).sum())


def fit_nu(normalized_weights, n_states: int | None = None, *, loss: str = "l1",
           bounds=(0.5, 10.0), full_output: bool = False):
    """Fit the non-linear device shape parameter to measured weights.

    The data may be ordered either way; it is sorted ascending and placed on
    evenly spaced state indices. ``loss`` is ``"l1"`` (sum of absolute
    residuals) or ``"sse"`` (sum of squares). The search is a coarse grid
    over ``bounds`` followed by two zoomed grids, for a final resolution
    of 1e-6. With ``full_output`` returns ``(nu, residual)``.
    """
    w = np.sort(np.asarray(normalized_weights, dtype=float))
    if w.size < 3:
        raise InsufficientDataError(f"need at least 3 points to fit nu, got {w.size}")
    if n_states is not None and n_states != w.size:
        raise ValueError(f"n_states={n_states} does not match {w.size} data points")
    if loss not in ("l1", "sse"):
        raise ValueError(f"unknown loss {loss!r}")
    n = w.size - 1
    lo, hi = bounds
    step = 0.01
    best = lo
    for _ in range(3):
        grid = np.arange(lo, hi + step / 2, step)
        vals = [_nu_loss(x, w, n, loss) for x in grid]
        best = float(grid[int(np.argmin(vals))])
        lo, hi = max(bounds[0], best - step), min(bounds[1], best + step)
        step /= 100
    if full_output:
        return best, _nu_loss(best, w, n, loss)
    return best


def read_device_csv(path) -> tuple[list[int], list[float]]:
    """Read a two-column ``state,conductance_uS`` CSV (header optional)."""
    states, g = [], []
    with open(Path(path), newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            try:
                s, val = int(row[0]), float(row[1])
            except ValueError:
                if not states:
                    continue  # header
                raise ValueError(f"{path}: malformed row {row!r}") from None
            states.append(s)
            g.append(val)
    if not g:
        raise ValueError(f"{path}: no data rows")
    return states, g
