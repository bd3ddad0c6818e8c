"""Experiment recipes, artifact export and the ``snnstdp`` command line."""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .encoding import (
    EncodingParams,
    IdxFormatError,
    InsufficientSamplesError,
    encode_image,
    encode_split,
    load_idx,
    select_subset,
)
from .network import (
    CalibrationError,
    Network,
    NetworkConfig,
    TrainedNetwork,
    TrainingLog,
    UnlearnConfig,
    UntrainedModelError,
    calibrate_i_unit,
)
from .neuron import NeuronParams
from .plasticity import RULES, Conventional, LearningParams, StdpRule, rule_from_dict, rule_to_dict
from .synapse import (
    RRAM_CONDUCTANCE_US,
    SynapseKind,
    SynapseModel,
    fit_nu,
    normalize_conductances,
    read_device_csv,
)

log = logging.getLogger("snnstdp")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4

# Output-layer sizes per (number of classes, synapse kind).
OUTPUT_NEURONS = {
    5: {"ideal": 80, "linear": 80, "nonlinear": 60},
    6: {"ideal": 160, "linear": 140, "nonlinear": 140},
    7: {"ideal": 160, "linear": 140, "nonlinear": 140},
    8: {"ideal": 160, "linear": 140, "nonlinear": 140},
    10: {"ideal": 160, "linear": 160, "nonlinear": 120},
}
DEFAULT_ETA = {"ideal": 0.1, "linear": 0.1, "nonlinear": 0.13}
N_BINS = 6


class ConfigError(ValueError):
    pass


class DataError(RuntimeError):
    pass


def default_output_neurons(n_classes: int, kind: str) -> int:
    """Table lookup; class counts between rows use the next larger row."""
    kind = SynapseKind(kind).value
    keys = sorted(OUTPUT_NEURONS)
    row = next((k for k in keys if k >= n_classes), keys[-1])
    return max(OUTPUT_NEURONS[row][kind], n_classes)


def default_n_train(n_classes: int) -> int:
    return 100 if n_classes <= 5 else 200


# ---------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    images: str | None = None
    labels: str | None = None
    classes: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    n_train: int = 100
    n_test: int = 1500
    epochs: int = 2
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    out_dir: str = "runs"
    encoding: EncodingParams = field(default_factory=EncodingParams)
    synapse: SynapseModel = field(default_factory=SynapseModel.ideal)
    rule: StdpRule = field(default_factory=Conventional)
    eta: float | None = None  # None: eta_by_synapse[synapse.kind]
    eta_by_synapse: dict = field(default_factory=lambda: dict(DEFAULT_ETA))
    gamma: float = 0.9
    n_outputs: int | None = None  # None: table default for (classes, synapse)
    network: dict = field(default_factory=dict)  # remaining NetworkConfig knobs
    neuron: NeuronParams = field(default_factory=NeuronParams)
    unlearn: UnlearnConfig = field(default_factory=UnlearnConfig)
    sweep_kinds: list = field(default_factory=lambda: ["nonlinear"])
    sweep_states: list = field(default_factory=lambda: [5, 12, 16, 25])
    compare_rules: list = field(default_factory=lambda: ["conventional", "sin", "cos"])
    compare_class_counts: list = field(default_factory=lambda: [5])
    epoch_trace: bool = True
    evolution: bool = True
    snapshot_stride: int = 1
    snapshot_epochs: int = 2
    heatmaps: bool = True
    calibration_band: list = field(default_factory=lambda: [20.0, 100.0])
    calibration_bounds: list = field(default_factory=lambda: [0.05, 50.0])
    calibration_samples: int = 10

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if not self.classes or len(set(self.classes)) != len(self.classes):
            raise ConfigError(f"classes must be distinct and non-empty: {self.classes}")
        if any(not 0 <= int(c) <= 9 for c in self.classes):
            raise ConfigError("classes must be digits 0-9")
        if self.n_train < 1 or self.n_test < 1 or self.epochs < 0:
            raise ConfigError("n_train, n_test must be >= 1 and epochs >= 0")
        if self.snapshot_stride < 1:
            raise ConfigError("snapshot_stride must be >= 1")
        unknown = set(self.network) - set(NetworkConfig.__dataclass_fields__)
        reserved = {"synapse", "rule", "learning", "neuron", "seed", "n_outputs", "n_inputs", "duration", "dt"}
        if unknown or reserved & set(self.network):
            raise ConfigError(f"invalid network keys: {sorted(unknown | (reserved & set(self.network)))}")

    def learning_rate(self) -> float:
        return self.eta if self.eta is not None else float(self.eta_by_synapse[self.synapse.kind.value])

    def output_neurons(self) -> int:
        if self.n_outputs is not None:
            return self.n_outputs
        return default_output_neurons(len(self.classes), self.synapse.kind.value)

    def network_config(self, seed: int) -> NetworkConfig:
        try:
            return NetworkConfig(
                n_outputs=self.output_neurons(),
                synapse=self.synapse,
                rule=self.rule,
                learning=LearningParams(eta=self.learning_rate(), gamma=self.gamma),
                neuron=self.neuron,
                duration=self.encoding.duration,
                dt=self.encoding.dt,
                seed=int(seed),
                **self.network,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid network settings: {exc}") from exc

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            d[f.name] = getattr(self, f.name)
        d["encoding"] = asdict(self.encoding)
        d["synapse"] = self.synapse.to_dict()
        d["rule"] = rule_to_dict(self.rule)
        d["neuron"] = asdict(self.neuron)
        d["unlearn"] = self.unlearn.to_dict()
        d["network"] = dict(self.network)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d or {})
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "encoding" in d:
                d["encoding"] = EncodingParams(**d["encoding"])
            if "synapse" in d:
                d["synapse"] = SynapseModel.from_dict(d["synapse"])
            if "rule" in d:
                d["rule"] = rule_from_dict(d["rule"])
            if "neuron" in d:
                d["neuron"] = NeuronParams(**d["neuron"])
            if "unlearn" in d:
                d["unlearn"] = UnlearnConfig.from_dict(d["unlearn"])
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc


def reference_config() -> dict:
    """Every default, including the network knobs, as a nested mapping."""
    d = ExperimentConfig().to_dict()
    net = NetworkConfig().to_dict()
    for k in ("synapse", "rule", "learning", "neuron", "seed", "n_outputs", "n_inputs", "duration", "dt"):
        net.pop(k)
    d["network"] = net
    return d


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return ExperimentConfig.from_dict(data)


def dump_config(cfg: ExperimentConfig | dict, path):
    d = cfg.to_dict() if isinstance(cfg, ExperimentConfig) else cfg
    Path(path).write_text(yaml.safe_dump(d, sort_keys=False))


# ---------------------------------------------------------------- CSV / PGM


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_pgm(path, pixels: np.ndarray):
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    if tokens[0] != "P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    pos += 1
    return np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos).reshape(h, w)


def weights_to_pixels(w, w_min, w_max) -> np.ndarray:
    return np.rint(255.0 * (np.asarray(w) - w_min) / (w_max - w_min)).astype(np.uint8)


def pixels_to_weights(px, w_min, w_max) -> np.ndarray:
    return w_min + np.asarray(px, dtype=float) * (w_max - w_min) / 255.0


def export_heatmaps(trained: TrainedNetwork, out_dir) -> list[Path]:
    """One 28x28 PGM per output neuron: neuron_<idx>_class_<label>.pgm."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    syn = trained.config.synapse
    paths = []
    for j in range(trained.weights.shape[1]):
        label = int(trained.label_map[j])
        name = f"neuron_{j}_class_{label if label >= 0 else 'none'}.pgm"
        px = weights_to_pixels(trained.weights[:, j], syn.w_min, syn.w_max).reshape(28, 28)
        write_pgm(out_dir / name, px)
        paths.append(out_dir / name)
    return paths


def weight_evolution_rows(training_log: TrainingLog, w_min: float, w_max: float):
    """Mean weight per final-weight bin (6 equal-width bins) at every snapshot."""
    if not training_log.snapshots:
        raise ValueError("empty training log: no weight snapshots")
    final = training_log.snapshots[-1].astype(np.float64).ravel()
    edges = np.linspace(w_min, w_max, N_BINS + 1)
    bins = np.clip(np.searchsorted(edges, final, side="right") - 1, 0, N_BINS - 1)
    members = [np.flatnonzero(bins == b) for b in range(N_BINS)]
    rows = []
    for t, snap in zip(training_log.times, training_log.snapshots):
        flat = snap.astype(np.float64).ravel()
        rows.append([t] + [repr(float(flat[m].mean())) if m.size else "" for m in members])
    return rows


def export_weight_evolution(training_log: TrainingLog, path, w_min: float = 1e-3, w_max: float = 1.0):
    rows = weight_evolution_rows(training_log, w_min, w_max)
    write_csv(path, ["time_ms"] + [f"bin_{b + 1}_mean" for b in range(N_BINS)], rows)


def dump_stdp_curves(rules, path=None, lo: float = -25.0, hi: float = 25.0, step: float = 0.1) -> str:
    """Sample F(dt) on a uniform grid; returns the CSV text (and writes ``path``)."""
    if not rules:
        raise ConfigError("no STDP rules given")
    if not hi > lo or not step > 0:
        raise ConfigError("curve range needs hi > lo and step > 0")
    rules = [RULES[r]() if isinstance(r, str) else r for r in rules]
    n = int(round((hi - lo) / step))
    grid = lo + step * np.arange(n + 1)
    grid = np.round(grid, 10)
    cols = [r(grid) for r in rules]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["delta_t"] + [r.name for r in rules])
    for k, t in enumerate(grid):
        w.writerow([repr(float(t))] + [repr(float(c[k])) for c in cols])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


# ---------------------------------------------------------------- runs


@dataclass
class SeedResult:
    seed: int
    accuracy: float
    confusion: np.ndarray
    classes: list
    epoch_accuracy: list
    train_seconds: float
    eval_seconds: float


@dataclass
class RunReport:
    label: str
    results: list

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([r.accuracy for r in self.results])

    @property
    def mean(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std(self) -> float:
        # population std; 0 for a single seed
        return float(self.accuracies.std())

    @property
    def confusion(self) -> np.ndarray:
        return np.sum([r.confusion for r in self.results], axis=0)


def _dataset(cfg: ExperimentConfig):
    if not cfg.images or not cfg.labels:
        raise ConfigError("dataset paths (images, labels) are required")
    for p in (cfg.images, cfg.labels):
        if not Path(p).is_file():
            raise ConfigError(f"dataset file not found: {p}")
    try:
        return load_idx(cfg.images, cfg.labels)
    except (IdxFormatError, OSError) as exc:
        raise DataError(str(exc)) from exc


def _splits(cfg: ExperimentConfig, seed: int, dataset=None):
    ds = dataset if dataset is not None else _dataset(cfg)
    try:
        tr, te = select_subset(ds, cfg.classes, cfg.n_train, cfg.n_test, seed)
    except InsufficientSamplesError as exc:
        raise DataError(str(exc)) from exc
    return tr, te


def run_seed(cfg: ExperimentConfig, seed: int, out_dir) -> SeedResult:
    """select subset -> encode -> train -> evaluate, writing the seed's artifacts."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tr, te = _splits(cfg, seed)
    x_tr = encode_split(tr, cfg.encoding, seed)
    x_te = encode_split(te, cfg.encoding, seed)
    net_cfg = cfg.network_config(seed)
    net = Network(net_cfg)
    trace = []

    def on_epoch(epoch, snap):
        if cfg.epoch_trace and epoch < cfg.epochs - 1 and (snap.label_map >= 0).any():
            trace.append(snap.evaluate(x_te, te.labels, cfg.classes).accuracy)

    tlog = TrainingLog(cfg.snapshot_stride, cfg.snapshot_epochs) if cfg.evolution else None
    t0 = time.perf_counter()
    trained = net.train(x_tr, tr.labels, cfg.epochs, cfg.unlearn, tlog, on_epoch)
    t1 = time.perf_counter()
    try:
        res = trained.evaluate(x_te, te.labels, cfg.classes)
    except UntrainedModelError:
        res = None
    t2 = time.perf_counter()
    acc = res.accuracy if res else 0.0
    conf = res.confusion if res else np.zeros((len(cfg.classes),) * 2, dtype=np.int64)
    if cfg.epochs:
        trace.append(acc)
    trained.save(out_dir / "model.json")
    write_csv(out_dir / "confusion.csv", ["true"] + [f"pred_{c}" for c in cfg.classes],
              [[c] + list(map(int, row)) for c, row in zip(cfg.classes, conf)])
    write_csv(out_dir / "epoch_accuracy.csv", ["epoch", "accuracy"],
              [[k + 1, repr(a)] for k, a in enumerate(trace)])
    if tlog is not None and tlog.snapshots:
        export_weight_evolution(tlog, out_dir / "evolution.csv", net_cfg.synapse.w_min, net_cfg.synapse.w_max)
    if cfg.heatmaps:
        export_heatmaps(trained, out_dir / "heatmaps")
    log.info("%s seed %d: accuracy %.4f (train %.1fs, eval %.1fs)",
             out_dir.parent.name, seed, acc, t1 - t0, t2 - t1)
    return SeedResult(seed, acc, conf, list(cfg.classes), trace, t1 - t0, t2 - t1)


def _run_job(args):
    cfg, seed, out_dir = args
    return run_seed(cfg, seed, out_dir)


def _map(jobs, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run_job, jobs))


def write_report(report: RunReport, out_dir):
    out_dir = Path(out_dir)
    res = report.results
    write_csv(out_dir / "metrics.csv", ["seed", "accuracy"], [[r.seed, repr(r.accuracy)] for r in res])
    write_csv(out_dir / "summary.csv", ["label", "n_seeds", "mean_accuracy", "std_accuracy"],
              [[report.label, len(res), repr(report.mean), repr(report.std)]])
    classes = res[0].classes
    write_csv(out_dir / "confusion.csv", ["true"] + [f"pred_{c}" for c in classes],
              [[c] + list(map(int, row)) for c, row in zip(classes, report.confusion)])
    # wall-clock timings are the only non-reproducible output
    write_csv(out_dir / "timings.csv", ["seed", "train_seconds", "eval_seconds"],
              [[r.seed, f"{r.train_seconds:.3f}", f"{r.eval_seconds:.3f}"] for r in res])


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads: int = 1, label: str | None = None) -> RunReport:
    out_dir = Path(out_dir or cfg.out_dir)
    _dataset(cfg)  # fail fast on missing or malformed data
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out_dir / "config.yaml")
    dump_stdp_curves([cfg.rule], out_dir / "curves.csv")
    jobs = [(cfg, s, out_dir / f"seed_{s}") for s in cfg.seeds]
    report = RunReport(label or cfg.synapse.label(), _map(jobs, threads))
    write_report(report, out_dir)
    return report


def sweep_states(cfg: ExperimentConfig, out_dir=None, threads: int = 1) -> list[RunReport]:
    """One run per (finite-state kind, state count, seed)."""
    out_dir = Path(out_dir or cfg.out_dir)
    if not cfg.sweep_states or not cfg.sweep_kinds:
        raise ConfigError("sweep needs at least one state count and one synapse kind")
    _dataset(cfg)
    points = []
    for kind in cfg.sweep_kinds:
        if SynapseKind(kind) is SynapseKind.IDEAL:
            raise ConfigError("state sweeps need a finite-state synapse kind")
        for n in cfg.sweep_states:
            nu = cfg.synapse.nu if cfg.synapse.nu is not None else 3.6
            syn = SynapseModel(SynapseKind(kind), int(n), nu if kind == "nonlinear" else None)
            points.append(replace(cfg, synapse=syn))
    jobs = [(p, s, out_dir / p.synapse.label() / f"seed_{s}") for p in points for s in p.seeds]
    results = _map(jobs, threads)
    reports, rows, k = [], [], 0
    for p in points:
        rep = RunReport(p.synapse.label(), results[k:k + len(p.seeds)])
        k += len(p.seeds)
        write_report(rep, out_dir / p.synapse.label())
        reports.append(rep)
        rows += [[p.synapse.kind.value, p.synapse.n_states, r.seed, repr(r.accuracy)] for r in rep.results]
    write_csv(out_dir / "sweep.csv", ["model", "n_states", "seed", "accuracy"], rows)
    return reports


def compare_stdp(cfg: ExperimentConfig, out_dir=None, threads: int = 1) -> dict:
    """Accuracy per (class count, rule). Cos runs use random initial weights."""
    out_dir = Path(out_dir or cfg.out_dir)
    if not cfg.compare_rules:
        raise ConfigError("no STDP rules to compare")
    bad = set(cfg.compare_rules) - {"conventional", "cos", "sin"}
    if bad:
        raise ConfigError(f"unsupported rules for comparison: {sorted(bad)}")
    _dataset(cfg)
    points = []
    for k in cfg.compare_class_counts:
        for name in cfg.compare_rules:
            net = dict(cfg.network)
            if name == "cos":
                net["random_init"] = True
            p = replace(cfg, classes=list(range(k)), n_train=default_n_train(k), rule=RULES[name](),
                        network=net)
            points.append((k, name, p))
    jobs = [(p, s, out_dir / f"{k}class_{name}" / f"seed_{s}") for k, name, p in points for s in p.seeds]
    results = _map(jobs, threads)
    table, rows, i = {}, [], 0
    for k, name, p in points:
        rep = RunReport(f"{k}class_{name}", results[i:i + len(p.seeds)])
        i += len(p.seeds)
        write_report(rep, out_dir / rep.label)
        table[(k, name)] = rep
    for k in cfg.compare_class_counts:
        rows.append([k] + [f"{100 * table[(k, n)].mean:.2f}" for n in cfg.compare_rules])
    write_csv(out_dir / "stdp_comparison.csv", ["classes"] + [f"{n}_pct" for n in cfg.compare_rules], rows)
    return table


def calibrate(cfg: ExperimentConfig, seed: int) -> float:
    tr, _ = _splits(cfg, seed)
    k = min(cfg.calibration_samples, len(tr))
    spikes = np.stack([encode_image(tr.images[i], cfg.encoding, seed, tr.indices[i]) for i in range(k)])
    return calibrate_i_unit(cfg.network_config(seed), spikes, tuple(cfg.calibration_band),
                            tuple(cfg.calibration_bounds))


# ---------------------------------------------------------------- CLI


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--seed", type=int, action="append", dest="seeds",
                        help="seed (repeatable); overrides the config's seed list")
    common.add_argument("--seeds", type=lambda s: [int(x) for x in s.split(",")], dest="seed_list",
                        help="comma-separated seed list")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="parallel seed/sweep jobs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="snnstdp", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train one model per seed")
    ev = sub.add_parser("eval", parents=[common], help="evaluate a saved model on its seed's test split")
    ev.add_argument("--model", required=True)
    sub.add_parser("run", parents=[common], help="train and evaluate every seed, aggregate a report")
    sw = sub.add_parser("sweep-states", parents=[common], help="accuracy versus number of synapse states")
    sw.add_argument("--states", type=lambda s: [int(x) for x in s.split(",")])
    sw.add_argument("--kinds", type=lambda s: s.split(","))
    cs = sub.add_parser("compare-stdp", parents=[common], help="accuracy per STDP rule")
    cs.add_argument("--rules", type=lambda s: s.split(","))
    cs.add_argument("--class-counts", type=lambda s: [int(x) for x in s.split(",")])
    dc = sub.add_parser("dump-curves", parents=[common], help="sample STDP curves to CSV")
    dc.add_argument("--rules", type=lambda s: s.split(","), default=["conventional", "cos", "sin", "ngauss"])
    dc.add_argument("--range", nargs=2, type=float, default=[-25.0, 25.0], metavar=("LO", "HI"))
    dc.add_argument("--step", type=float, default=0.1)
    hm = sub.add_parser("export-heatmaps", parents=[common], help="write per-neuron weight PGMs")
    hm.add_argument("--model", required=True)
    ep = sub.add_parser("encode-preview", parents=[common], help="dump one image's spike matrix as CSV")
    ep.add_argument("--index", type=int, default=0, help="position in the dataset")
    sub.add_parser("calibrate", parents=[common], help="search i_unit for the target firing band")
    fn = sub.add_parser("fit-nu", parents=[common], help="fit the non-linear device parameter")
    fn.add_argument("--csv", help="device CSV (state,conductance_uS); default: built-in table")
    fn.add_argument("--loss", choices=["l1", "sse"], default="l1")
    sub.add_parser("reference-config", parents=[common], help="print the full default config")
    return p


def _config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    seeds = (args.seeds or []) + (args.seed_list or [])
    if seeds:
        cfg = replace(cfg, seeds=seeds)
    if args.out_dir:
        cfg = replace(cfg, out_dir=args.out_dir)
    return cfg


def _print_report(rep: RunReport):
    print(f"{rep.label}: mean {100 * rep.mean:.2f}% std {100 * rep.std:.2f}% over {len(rep.results)} seed(s)")


def _dispatch(args) -> int:
    if args.command == "reference-config":
        sys.stdout.write(yaml.safe_dump(reference_config(), sort_keys=False))
        return EXIT_OK
    if args.command == "dump-curves":
        unknown = set(args.rules) - set(RULES)
        if unknown:
            raise ConfigError(f"unknown rules {sorted(unknown)}")
        path = None
        if args.out_dir:
            Path(args.out_dir).mkdir(parents=True, exist_ok=True)
            path = Path(args.out_dir) / "curves.csv"
        text = dump_stdp_curves(args.rules, path, args.range[0], args.range[1], args.step)
        if path is None:
            sys.stdout.write(text)
        return EXIT_OK
    if args.command == "fit-nu":
        if args.csv:
            _, g = read_device_csv(args.csv)
        else:
            g = [c for _, c in RRAM_CONDUCTANCE_US]
        nu, resid = fit_nu(normalize_conductances(g), loss=args.loss, full_output=True)
        print(f"nu={nu:.6f} loss={args.loss} residual={resid:.6g}")
        return EXIT_OK

    cfg = _config_from_args(args)
    out = Path(cfg.out_dir)
    if args.command == "run":
        _print_report(run_experiment(cfg, out, args.threads))
    elif args.command == "train":
        _dataset(cfg)
        cfg = replace(cfg, heatmaps=False)
        for r in _map([(cfg, s, out / f"seed_{s}") for s in cfg.seeds], args.threads):
            print(f"seed {r.seed}: model written to {out / f'seed_{r.seed}' / 'model.json'}")
    elif args.command == "eval":
        trained = TrainedNetwork.load(args.model)
        _, te = _splits(cfg, trained.config.seed)
        x_te = encode_split(te, cfg.encoding, trained.config.seed)
        res = trained.evaluate(x_te, te.labels, cfg.classes)
        print(f"accuracy {100 * res.accuracy:.2f}%")
        print("confusion (rows = true class):")
        print(res.confusion)
    elif args.command == "sweep-states":
        if args.states:
            cfg = replace(cfg, sweep_states=args.states)
        if args.kinds:
            cfg = replace(cfg, sweep_kinds=args.kinds)
        for rep in sweep_states(cfg, out, args.threads):
            _print_report(rep)
    elif args.command == "compare-stdp":
        if args.rules is not None:
            cfg = replace(cfg, compare_rules=args.rules)
        if args.class_counts:
            cfg = replace(cfg, compare_class_counts=args.class_counts)
        for rep in compare_stdp(cfg, out, args.threads).values():
            _print_report(rep)
    elif args.command == "export-heatmaps":
        paths = export_heatmaps(TrainedNetwork.load(args.model), out / "heatmaps")
        print(f"wrote {len(paths)} heatmaps to {out / 'heatmaps'}")
    elif args.command == "encode-preview":
        ds = _dataset(cfg)
        if not 0 <= args.index < len(ds):
            raise ConfigError(f"index {args.index} out of range 0..{len(ds) - 1}")
        bits = encode_image(ds.images[args.index], cfg.encoding, cfg.seeds[0], args.index)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"spikes_{args.index}.csv"
        write_csv(path, ["pixel"] + [f"t{k}" for k in range(bits.shape[1])],
                  [[i] + row.astype(int).tolist() for i, row in enumerate(bits)])
        print(f"wrote {path}")
    elif args.command == "calibrate":
        print(f"i_unit={calibrate(cfg, cfg.seeds[0]):.6g}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, IdxFormatError, InsufficientSamplesError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (CalibrationError, UntrainedModelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
