"""Two-layer spiking network: 784 rate-coded inputs onto a competing LIF layer.

Per 1 ms tick the simulation does, in order:

1. input current ``I_j = i_unit * gain_j * sum_i s_i(t) w_ij``;
2. membrane Euler step, threshold relaxation;
3. winner selection among neurons at or above threshold (largest overshoot,
   lowest index on ties); the winner fires and resets, every other neuron
   is hyperpolarized by the inhibition drop;
4. STDP events (training only), nearest-spike pairing within
   ``stdp_window``: an input spike pairs with each output's latest earlier
   spike (dt < 0); an output spike pairs with each input's latest spike at
   or before it (dt >= 0). Inputs with no spike inside the window when an
   output fires receive ``unpaired_f``.

``gain_j`` is 1 without normalization, else ``sqrt(n_inputs) * w_max /
||w_j||`` so an all-``w_max`` column has unit gain. A slow homeostatic
offset ``theta_j`` adds to each neuron's threshold; it grows with every
training spike and decays with ``homeostasis_tau``. At inference it is
frozen, and ignored unless ``inference_homeostasis`` is set.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .neuron import NeuronParams, NeuronState, fire_and_reset, step_membrane, step_threshold
from .plasticity import (
    Conventional,
    LearningParams,
    NGauss,
    StdpRule,
    rule_from_dict,
    rule_to_dict,
    weight_update,
)
from .synapse import SynapseModel, SynapseState, apply_delta, initial_state

log = logging.getLogger(__name__)

SCHEMA = "snnstdp.trained-network"
SCHEMA_VERSION = 1
N_LABELS = 10
UNASSIGNED = -1


class UntrainedModelError(RuntimeError):
    pass


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class UnlearnConfig:
    """Brief depression-only phase on a random sample of each epoch's images."""

    enabled: bool = False
    fraction: float = 0.1
    rule: StdpRule = NGauss(a=0.2, sigma=5.0)
    eta: float = 0.01

    def to_dict(self):
        return {"enabled": self.enabled, "fraction": self.fraction,
                "rule": rule_to_dict(self.rule), "eta": self.eta}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "rule" in d:
            d["rule"] = rule_from_dict(d["rule"])
        return cls(**d)


@dataclass(frozen=True)
class NetworkConfig:
    n_inputs: int = 784
    n_outputs: int = 80
    synapse: SynapseModel = field(default_factory=SynapseModel.ideal)
    rule: StdpRule = field(default_factory=Conventional)
    learning: LearningParams = field(default_factory=lambda: LearningParams(eta=0.1))
    neuron: NeuronParams = field(default_factory=NeuronParams)
    i_unit: float = 3.0  # pA per input spike at unit weight
    inhibition_drop: float = 100.0  # mV, training
    inference_inhibition_drop: float | None = 20.0  # mV; None reuses inhibition_drop
    winner_take_all: bool = True
    stdp_window: float = 25.0  # ms
    unpaired_f: float = -1.0
    drive_normalization: str = "l2"  # "l2" or "none"
    homeostasis_plus: float = 0.5  # mV per training spike
    homeostasis_tau: float = 1e5  # ms
    inference_homeostasis: bool = False  # apply the learned offsets at inference
    random_init: bool = False
    duration: float = 100.0  # ms
    dt: float = 1.0  # ms
    seed: int = 0

    def __post_init__(self):
        if self.n_outputs < 1 or self.n_inputs < 1:
            raise ValueError("layer sizes must be positive")
        if not self.i_unit > 0:
            raise ValueError("i_unit must be > 0")
        if self.inhibition_drop < 0 or (self.inference_inhibition_drop or 0) < 0:
            raise ValueError("inhibition drops must be >= 0")
        if not self.stdp_window > 0:
            raise ValueError("stdp_window must be > 0")
        if self.drive_normalization not in ("l2", "none"):
            raise ValueError(f"unknown drive_normalization {self.drive_normalization!r}")
        if self.homeostasis_plus < 0 or not self.homeostasis_tau > 0:
            raise ValueError("homeostasis_plus must be >= 0 and homeostasis_tau > 0")
        if self.unpaired_f > 0:
            raise ValueError("unpaired_f must be <= 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def test_inhibition(self) -> float:
        if self.inference_inhibition_drop is None:
            return self.inhibition_drop
        return self.inference_inhibition_drop

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["synapse"] = self.synapse.to_dict()
        d["rule"] = rule_to_dict(self.rule)
        d["learning"] = asdict(self.learning)
        d["neuron"] = asdict(self.neuron)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        d = dict(d)
        if "synapse" in d:
            d["synapse"] = SynapseModel.from_dict(d["synapse"])
        if "rule" in d:
            d["rule"] = rule_from_dict(d["rule"])
        if "learning" in d:
            d["learning"] = LearningParams(**d["learning"])
        if "neuron" in d:
            d["neuron"] = NeuronParams(**d["neuron"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown network config keys: {sorted(unknown)}")
        return cls(**d)


def _gain(cfg: NetworkConfig, weights: np.ndarray) -> np.ndarray:
    if cfg.drive_normalization == "none":
        return np.ones(weights.shape[1])
    norm = np.sqrt(np.einsum("ij,ij->j", weights, weights))
    return np.sqrt(cfg.n_inputs) * cfg.synapse.w_max / norm


def _check_spikes(cfg: NetworkConfig, spikes: np.ndarray) -> np.ndarray:
    spikes = np.asarray(spikes)
    if spikes.ndim == 2:
        spikes = spikes[None]
    if spikes.ndim != 3 or spikes.shape[1:] != (cfg.n_inputs, cfg.n_steps):
        raise ValueError(
            f"spike matrix shape {spikes.shape} does not match ({cfg.n_inputs}, {cfg.n_steps})"
        )
    return spikes


@dataclass
class _Plasticity:
    model: SynapseModel
    rule: StdpRule
    learning: LearningParams
    unpaired_f: float
    window: float


def _simulate(cfg: NetworkConfig, syn: SynapseState, theta: np.ndarray, spikes: np.ndarray,
              inhibition: float, plasticity: _Plasticity | None = None,
              raster: list | None = None) -> np.ndarray:
    """Run presentations; returns spike counts of shape (B, n_outputs).

    ``spikes`` is (B, n_inputs, T). With ``plasticity`` (B must be 1) the
    synapse arrays in ``syn`` and the homeostatic offsets ``theta`` are
    updated in place.
    """
    B, _, T = spikes.shape
    M = cfg.n_outputs
    dt = cfg.dt
    nrn = cfg.neuron
    state = NeuronState.rest(nrn, M)
    state.v = np.broadcast_to(state.v, (B, M)).copy()
    state.v_th = np.broadcast_to(state.v_th, (B, M)).copy()
    state.last_spike_time = np.full((B, M), -np.inf)
    counts = np.zeros((B, M), dtype=np.int64)
    rows = np.arange(B)
    gain = _gain(cfg, syn.weight)
    learning = plasticity is not None
    if learning:
        if B != 1:
            raise ValueError("plastic presentations run one image at a time")
        last_pre = np.full(cfg.n_inputs, -np.inf)
        last_post = np.full(M, -np.inf)
        decay = np.exp(-dt / cfg.homeostasis_tau)
    x = np.ascontiguousarray(spikes.transpose(2, 0, 1), dtype=np.float64)  # (T, B, n_inputs)
    for step in range(T):
        t = step * dt
        current = cfg.i_unit * (x[step] @ syn.weight) * gain
        state = step_membrane(state, nrn, current, dt)
        state = step_threshold(state, nrn, dt)
        if learning and cfg.homeostasis_plus:
            theta *= decay
        overshoot = state.v - (state.v_th + theta)
        crossing = overshoot >= 0
        if cfg.winner_take_all:
            fire = np.zeros_like(crossing)
            any_row = crossing.any(axis=1)
            if any_row.any():
                win = np.argmax(np.where(crossing, overshoot, -np.inf), axis=1)
                fire[rows[any_row], win[any_row]] = True
        else:
            fire = crossing
        state, spiked = fire_and_reset(state, nrn, t, mask=fire)
        fired_rows = spiked.any(axis=1)
        if fired_rows.any():
            counts += spiked
            inhibited = fired_rows[:, None] & ~spiked
            state.v = np.where(inhibited, state.v - inhibition, state.v)
            if raster is not None:
                raster.extend((step, j) for j in np.flatnonzero(spiked[0]))
        if learning:
            changed = _stdp_tick(plasticity, syn, x[step, 0], spiked[0], t, last_pre, last_post)
            if spiked[0].any():
                theta[spiked[0]] += cfg.homeostasis_plus
            if changed and cfg.drive_normalization != "none":
                gain = _gain(cfg, syn.weight)
    return counts


def _apply_block(p: _Plasticity, syn: SynapseState, rows, cols, f):
    """Soft-bound update of the synapse block ``rows x cols`` with curve values ``f``."""
    ix = np.ix_(rows, cols)
    w = syn.weight[ix]
    dw = weight_update(w, f, p.learning, check=False)
    idx = syn.state_index[ix] if syn.state_index is not None else None
    new = apply_delta(p.model, SynapseState(w, idx), dw)
    syn.weight[ix] = new.weight
    if idx is not None:
        syn.state_index[ix] = new.state_index


def _stdp_tick(p: _Plasticity, syn, pre_spikes, post_spikes, t, last_pre, last_post) -> bool:
    changed = False
    pre = np.flatnonzero(pre_spikes)
    if pre.size:
        recent = np.flatnonzero(t - last_post <= p.window)
        if recent.size:
            f = p.rule(last_post[recent] - t)
            _apply_block(p, syn, pre, recent, np.broadcast_to(f, (pre.size, recent.size)))
            changed = True
        last_pre[pre] = t
    for j in np.flatnonzero(post_spikes):
        since = t - last_pre
        paired = since <= p.window
        f = np.where(paired, p.rule(np.where(paired, since, 0.0)), p.unpaired_f)
        _apply_block(p, syn, np.arange(len(last_pre)), [j], f[:, None])
        last_post[j] = t
        changed = True
    return changed


def assign_labels(spike_stats) -> np.ndarray:
    """Class with the most credited spikes per neuron; ties to the lower class.

    Neurons with no credited spikes are ``UNASSIGNED`` (-1).
    """
    stats = np.asarray(spike_stats)
    labels = np.argmax(stats, axis=1)
    labels[stats.sum(axis=1) == 0] = UNASSIGNED
    return labels


@dataclass
class TrainingLog:
    """Weight snapshots taken every ``snapshot_stride`` presentations."""

    snapshot_stride: int = 1
    max_epochs: int | None = 2
    times: list = field(default_factory=list)  # ms of simulated training time
    snapshots: list = field(default_factory=list)

    def record(self, time_ms: float, weights: np.ndarray):
        self.times.append(time_ms)
        self.snapshots.append(weights.astype(np.float32))


class Network:
    """A network under training. ``train`` returns a :class:`TrainedNetwork`."""

    def __init__(self, config: NetworkConfig):
        self.config = config
        shape = (config.n_inputs, config.n_outputs)
        rng = np.random.default_rng([config.seed, 7]) if config.random_init else None
        self.synapses = initial_state(config.synapse, shape, rng)
        self.theta = np.zeros(config.n_outputs)
        self.spike_stats = np.zeros((config.n_outputs, N_LABELS), dtype=np.int64)
        self.activity = np.zeros(config.n_outputs, dtype=np.int64)
        self.class_counts = np.zeros(N_LABELS, dtype=np.int64)
        self.time_ms = 0.0

    @property
    def weights(self) -> np.ndarray:
        return self.synapses.weight

    def _plasticity(self, rule=None, eta=None) -> _Plasticity:
        cfg = self.config
        learning = cfg.learning if eta is None else replace(cfg.learning, eta=eta)
        return _Plasticity(cfg.synapse, rule or cfg.rule, learning, cfg.unpaired_f, cfg.stdp_window)

    def present_image(self, spikes, plasticity_on: bool, *, rule=None, eta=None, raster=None) -> np.ndarray:
        """Present one spike matrix; returns per-output spike counts."""
        cfg = self.config
        spikes = _check_spikes(cfg, spikes)
        if spikes.shape[0] != 1:
            raise ValueError("present_image takes a single spike matrix")
        if plasticity_on:
            counts = _simulate(cfg, self.synapses, self.theta, spikes, cfg.inhibition_drop,
                               self._plasticity(rule, eta), raster)
            self.time_ms += cfg.duration
        else:
            theta = self.theta.copy() if cfg.inference_homeostasis else np.zeros(cfg.n_outputs)
            counts = _simulate(cfg, self.synapses, theta, spikes, cfg.test_inhibition, None, raster)
        return counts[0]

    def train(self, spikes, labels, epochs: int, unlearn: UnlearnConfig = UnlearnConfig(),
              log_to: TrainingLog | None = None, on_epoch_end=None) -> "TrainedNetwork":
        """Present every training image once per epoch with plasticity on.

        Per image the most active neuron (lowest index on ties) has its spike
        count credited to the image's class. ``on_epoch_end(epoch, trained)``
        is called after each epoch with a snapshot of the network.
        """
        spikes = np.asarray(spikes)
        labels = np.asarray(labels, dtype=np.int64)
        if len(labels) == 0:
            raise ValueError("empty training set")
        if len(spikes) != len(labels):
            raise ValueError("spike trains and labels differ in length")
        if epochs < 0:
            raise ValueError("epochs must be >= 0")
        cfg = self.config
        self.class_counts += np.bincount(labels, minlength=N_LABELS)
        n = 0
        for epoch in range(epochs):
            for k in range(len(labels)):
                counts = self.present_image(spikes[k], True)
                self.activity += counts
                if counts.max() > 0:
                    j = int(np.argmax(counts))
                    self.spike_stats[j, labels[k]] += counts[j]
                n += 1
                if log_to is not None and (log_to.max_epochs is None or epoch < log_to.max_epochs):
                    if n % log_to.snapshot_stride == 0:
                        log_to.record(self.time_ms, self.weights)
            if unlearn.enabled:
                rng = np.random.default_rng([cfg.seed, 11, epoch])
                k_un = max(1, int(round(unlearn.fraction * len(labels))))
                for k in np.sort(rng.choice(len(labels), size=k_un, replace=False)):
                    self.present_image(spikes[k], True, rule=unlearn.rule, eta=unlearn.eta)
            log.debug("epoch %d done, %d neurons labelled", epoch + 1,
                      int((assign_labels(self.spike_stats) >= 0).sum()))
            if on_epoch_end is not None:
                on_epoch_end(epoch, self.snapshot())
        return self.snapshot()

    def snapshot(self) -> "TrainedNetwork":
        syn = self.synapses
        return TrainedNetwork(
            config=self.config,
            weights=syn.weight.copy(),
            state_index=None if syn.state_index is None else syn.state_index.copy(),
            theta=self.theta.copy(),
            spike_stats=self.spike_stats.copy(),
            activity=self.activity.copy(),
            class_counts=self.class_counts.copy(),
        )


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # rows = true class
    classes: list
    predictions: np.ndarray


@dataclass
class TrainedNetwork:
    config: NetworkConfig
    weights: np.ndarray
    state_index: np.ndarray | None
    theta: np.ndarray
    spike_stats: np.ndarray
    activity: np.ndarray
    class_counts: np.ndarray
    label_map: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.label_map is None:
            self.label_map = assign_labels(self.spike_stats)

    @property
    def fallback_class(self) -> int:
        """Most frequent training class (lowest on ties); used for silent presentations."""
        return int(np.argmax(self.class_counts))

    def output_counts(self, spikes, batch_size: int = 250) -> np.ndarray:
        """Inference spike counts, shape (N, n_outputs). Weights are read-only here."""
        cfg = self.config
        spikes = _check_spikes(cfg, spikes)
        syn = SynapseState(self.weights)
        theta = self.theta.copy() if cfg.inference_homeostasis else np.zeros(cfg.n_outputs)
        out = [
            _simulate(cfg, syn, theta, spikes[s:s + batch_size], cfg.test_inhibition)
            for s in range(0, len(spikes), batch_size)
        ]
        return np.concatenate(out) if out else np.zeros((0, cfg.n_outputs), dtype=np.int64)

    def predict_from_counts(self, counts) -> np.ndarray:
        assigned = self.label_map >= 0
        if not assigned.any():
            raise UntrainedModelError("no output neuron has a label; train the network first")
        counts = np.atleast_2d(counts)
        masked = np.where(assigned, counts, -1)
        best = np.argmax(masked, axis=1)
        pred = self.label_map[best]
        silent = masked.max(axis=1) <= 0
        pred[silent] = self.fallback_class
        return pred

    def infer(self, spikes) -> int:
        if not (self.label_map >= 0).any():
            raise UntrainedModelError("no output neuron has a label; train the network first")
        return int(self.predict_from_counts(self.output_counts(spikes))[0])

    def evaluate(self, spikes, labels, classes=None) -> EvalResult:
        labels = np.asarray(labels, dtype=np.int64)
        if len(labels) == 0:
            raise ValueError("empty test set")
        if classes is None:
            classes = sorted(set(labels.tolist()) | set(int(c) for c in self.label_map if c >= 0))
        pred = self.predict_from_counts(self.output_counts(spikes))
        pos = {c: i for i, c in enumerate(classes)}
        conf = np.zeros((len(classes), len(classes)), dtype=np.int64)
        for t, p in zip(labels, pred):
            conf[pos[int(t)], pos[int(p)]] += 1
        return EvalResult(float(np.mean(pred == labels)), conf, list(classes), pred)

    # persistence

    def to_dict(self) -> dict:
        d = {
            "schema": SCHEMA,
            "version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "label_map": self.label_map.tolist(),
            "spike_stats": self.spike_stats.tolist(),
            "activity": self.activity.tolist(),
            "class_counts": self.class_counts.tolist(),
            "theta": self.theta.tolist(),
        }
        if self.state_index is not None:
            d["state_index"] = self.state_index.tolist()
        else:
            d["weights"] = self.weights.tolist()
        return d

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedNetwork":
        if d.get("schema") != SCHEMA:
            raise ValueError(f"not a trained-network document (schema={d.get('schema')!r})")
        if d.get("version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        cfg = NetworkConfig.from_dict(d["config"])
        if "state_index" in d:
            idx = np.asarray(d["state_index"], dtype=np.int16)
            weights = cfg.synapse.state_weights[idx]
        else:
            idx = None
            weights = np.asarray(d["weights"], dtype=np.float64)
        return cls(
            config=cfg,
            weights=weights,
            state_index=idx,
            theta=np.asarray(d["theta"], dtype=np.float64),
            spike_stats=np.asarray(d["spike_stats"], dtype=np.int64),
            activity=np.asarray(d["activity"], dtype=np.int64),
            class_counts=np.asarray(d["class_counts"], dtype=np.int64),
            label_map=np.asarray(d["label_map"], dtype=np.int64),
        )

    @classmethod
    def load(cls, path) -> "TrainedNetwork":
        return cls.from_dict(json.loads(Path(path).read_text()))


def isolated_rate(cfg: NetworkConfig, spikes, i_unit: float) -> float:
    """Mean firing rate (Hz) of one output neuron with every weight at w_max,
    without lateral inhibition or homeostasis."""
    spikes = _check_spikes(cfg, spikes)
    one = replace(cfg, n_outputs=1, i_unit=i_unit, winner_take_all=False,
                  inhibition_drop=0.0, inference_inhibition_drop=0.0)
    syn = SynapseState(np.full((cfg.n_inputs, 1), cfg.synapse.w_max))
    counts = _simulate(one, syn, np.zeros(1), spikes, 0.0)
    return float(counts.mean() * 1000.0 / cfg.duration)


def calibrate_i_unit(cfg: NetworkConfig, sample_spikes, band=(20.0, 100.0),
                     bounds=(0.05, 50.0), max_iter: int = 60) -> float:
    """Geometric bisection for an ``i_unit`` whose isolated rate lies in ``band``.

    Returns the lower search bound if it already qualifies. Raises
    :class:`CalibrationError` when the band is out of reach or the measured
    rate is not monotone in ``i_unit``.
    """
    lo_band, hi_band = band
    lo, hi = bounds
    seen = []

    def rate(i):
        r = isolated_rate(cfg, sample_spikes, i)
        seen.append((i, r))
        ordered = sorted(seen)
        if any(b[1] < a[1] for a, b in zip(ordered, ordered[1:])):
            raise CalibrationError(f"firing rate not monotone in i_unit: {ordered}")
        return r

    r_lo = rate(lo)
    if lo_band <= r_lo <= hi_band:
        return lo
    if r_lo > hi_band:
        raise CalibrationError(f"rate {r_lo:.1f} Hz at i_unit={lo} already exceeds band {band}")
    r_hi = rate(hi)
    if r_hi < lo_band:
        raise CalibrationError(f"rate {r_hi:.1f} Hz at i_unit={hi} stays below band {band}")
    if lo_band <= r_hi <= hi_band and r_hi == r_lo:
        return hi
    for _ in range(max_iter):
        mid = float(np.sqrt(lo * hi))
        r = rate(mid)
        if lo_band <= r <= hi_band:
            return mid
        if r < lo_band:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(f"no i_unit in {bounds} reached band {band}; tried {sorted(seen)}")
