"""Datasets, training strategies, PFA/PM evaluation and SNR sweeps.

Randomness is keyed rather than threaded: every dataset, calibration run
and training run draws from its own Philox stream derived from the
master seed and a tuple of labels (:func:`stream`). Results therefore do
not depend on the order in which sweep points are computed.

Training strategies:

* TS-1 trains one network per SNR bin. At sensing time each frame is
  routed to the bin nearest to the SNR implied by the receiver's
  *estimated* noise power, so noise uncertainty can pick the wrong net.
* TS-2 trains a single network on data pooled across all SNRs and never
  looks at the noise estimate.
"""

from __future__ import annotations

import csv
import io
import math
import zlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import baselines
from . import features as feat
from . import neuralnet as nn
from .signal import H0, H1, SIGNAL_POWER, FrameBatch, ImpairmentScenario, OfdmConfig, synthesize_batch

METHODS = ("ed", "cp", "cm", "sae-ss", "sae-tf", "sae-ss-af", "sae-tf-af")
DEFAULT_SNRS = (-20.0, -18.0, -16.0, -14.0, -12.0, -10.0, -8.0)

RESULT_COLUMNS = ("method", "variant", "strategy", "scenario", "eta_db", "fq", "delta_mode",
                  "snr_db", "trials", "pfa", "pm", "threshold", "seed")


# -- random streams ------------------------------------------------------


def _key(token) -> int:
    if isinstance(token, (int, np.integer)) and not isinstance(token, bool):
        return int(token) & 0xFFFFFFFF
    return zlib.crc32(repr(token).encode())


def stream(seed: int, *keys) -> np.random.Generator:
    """Independent counter-based generator for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed) & (2 ** 64 - 1), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def scenario_name(sc: ImpairmentScenario) -> str:
    parts = []
    if sc.eta_db > 0:
        parts.append("noise-uncertainty")
    if sc.delta_mode == "uniform" or sc.delta > 0:
        parts.append("random-delay" if sc.delta_mode == "uniform" else "fixed-delay")
    if sc.f_q > 0:
        parts.append("cfo")
    if not parts:
        return "perfect"
    return parts[0] if len(parts) == 1 else "combined"


def _scenario_key(cfg: OfdmConfig, sc: ImpairmentScenario) -> tuple:
    return (cfg.n_d, cfg.n_c, cfg.m, cfg.l_p, sc.delta, sc.f_q, sc.delta_mode)


# -- datasets --------------------------------------------------------------


def gen_dataset(cfg: OfdmConfig, scenario: ImpairmentScenario, n: int,
                rng: np.random.Generator) -> FrameBatch:
    """``n/2`` noise-only frames followed by ``n/2`` signal-present frames."""
    if n < 2 or n % 2:
        raise ValueError(f"dataset size must be a positive even number, got {n}")
    labels = np.r_[np.full(n // 2, H0), np.full(n // 2, H1)]
    return synthesize_batch(cfg, scenario, labels, rng)


def pooled_dataset(cfg: OfdmConfig, scenario: ImpairmentScenario, snrs: Sequence[float], n: int,
                   seed: int, tag: str, h0_only: bool = False) -> FrameBatch:
    """Equal shares of ``n`` frames at every SNR, each share balanced across hypotheses."""
    share = max(2, (n // len(snrs)) // 2 * 2)
    parts = []
    for snr in snrs:
        rng = stream(seed, tag, *_scenario_key(cfg, scenario), float(snr))
        sc = scenario.with_snr(snr)
        if h0_only:
            parts.append(synthesize_batch(cfg, sc, np.zeros(share), rng))
        else:
            parts.append(gen_dataset(cfg, sc, share, rng))
    return FrameBatch.concat(parts)


# -- detectors -------------------------------------------------------------


@dataclass
class Metrics:
    method: str
    snr_db: float
    scenario: str
    pfa: float
    pm: float
    trials: int
    threshold: float
    variant: str = ""
    strategy: str = ""
    eta_db: float = 0.0
    fq: float = 0.0
    delta_mode: str = "fixed"
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.pfa <= 1.0 and 0.0 <= self.pm <= 1.0):
            raise ValueError("pfa and pm must lie in [0, 1]")

    def row(self) -> dict:
        return {c: getattr(self, c) for c in RESULT_COLUMNS}


@dataclass
class BaselineDetector:
    """ED/CP/CM with thresholds calibrated per assumed SNR (only CP depends on it)."""

    name: str
    cfg: OfdmConfig
    thresholds: dict = field(default_factory=dict)

    def calibrate(self, scenario: ImpairmentScenario, snr_db: float, pfa: float, trials: int,
                  seed: int) -> baselines.DetectorThreshold:
        key = float(snr_db) if self.name == "cp" else None
        if key not in self.thresholds:
            rng = stream(seed, "calib", self.name, *_scenario_key(self.cfg, scenario), pfa, trials, key)
            self.thresholds[key] = baselines.calibrate_baseline(
                self.name, self.cfg, scenario, pfa, trials, rng, assumed_snr_db=key)
        return self.thresholds[key]

    def threshold_for(self, snr_db: float) -> baselines.DetectorThreshold:
        return self.thresholds[float(snr_db) if self.name == "cp" else None]

    def decide(self, batch: FrameBatch) -> np.ndarray:
        out = np.empty(len(batch), dtype=np.int8)
        for snr in np.unique(batch.snr_db):
            sel = batch.snr_db == snr
            thr = self.threshold_for(snr)
            stats = baselines.statistic_fn(self.name, self.cfg, thr.assumed_snr_db)(batch.samples[sel])
            out[sel] = baselines.decide(stats, thr, batch.est_noise_var[sel])
        return out


@dataclass
class ModelBank:
    """SNR-indexed networks (TS-1) or one pooled network (TS-2)."""

    models: dict
    strategy: str
    variant: str

    def __post_init__(self):
        if self.strategy not in ("ts1", "ts2"):
            raise ValueError(f"unknown training strategy {self.strategy!r}")
        if self.strategy == "ts2" and len(self.models) != 1:
            raise ValueError("a TS-2 bank holds exactly one model")

    def __len__(self) -> int:
        return len(self.models)

    @property
    def bins(self) -> np.ndarray:
        return np.array(sorted(self.models), dtype=float)

    def select(self, est_noise_var) -> np.ndarray:
        """Nearest SNR bin to 10 log10(sigma_s^2 / estimated noise power)."""
        est = 10.0 * np.log10(SIGNAL_POWER / np.asarray(est_noise_var, dtype=float))
        bins = self.bins
        return bins[np.argmin(np.abs(est[..., None] - bins), axis=-1)]

    def decide_features(self, x: np.ndarray, est_noise_var=None, mode: str = "pfa_calibrated") -> np.ndarray:
        """Decisions for raw (unscaled) feature rows.

        TS-1 needs ``est_noise_var`` to route frames; TS-2 ignores it.
        """
        if self.strategy == "ts2":
            model = next(iter(self.models.values()))
            return nn.decide(model, model.scale(x), mode)
        if est_noise_var is None:
            raise ValueError("TS-1 needs the estimated noise power to select a network")
        chosen = self.select(est_noise_var)
        out = np.empty(len(x), dtype=np.int8)
        for b in np.unique(chosen):
            sel = chosen == b
            model = self.models[float(b)]
            out[sel] = nn.decide(model, model.scale(x[sel]), mode)
        return out

    def decide(self, batch: FrameBatch, mode: str = "pfa_calibrated") -> np.ndarray:
        x = feat.extract(batch, self.variant)
        est = batch.est_noise_var if self.strategy == "ts1" else None
        return self.decide_features(x, est, mode)

    def threshold_for(self, snr_db: float) -> float:
        if self.strategy == "ts2":
            return next(iter(self.models.values())).decision_threshold
        return self.models[float(self.select(SIGNAL_POWER / 10.0 ** (snr_db / 10.0)))].decision_threshold


# -- training --------------------------------------------------------------


@dataclass
class TrainingSetup:
    """Everything needed to turn labelled frames into a calibrated network."""

    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    hidden: tuple = nn.DEFAULT_HIDDEN
    n_train: int = 20_000
    n_val: int = 10_000
    pfa: float = 0.05


def fit_network(train_set: FrameBatch, h0_val: FrameBatch, variant: str, setup: TrainingSetup,
                snr_bin: float | None = None) -> nn.SaeModel:
    """Scale, pretrain, fine-tune and PFA-calibrate one network."""
    x = feat.extract(train_set, variant)
    model = nn.train(x, train_set.labels, setup.train, setup.hidden, variant, snr_bin)
    nn.calibrate_decision_threshold(model, model.scale(feat.extract(h0_val, variant)), setup.pfa)
    return model


def train_ts1(cfg: OfdmConfig, scenario: ImpairmentScenario, snrs: Sequence[float], variant: str,
              setup: TrainingSetup, seed: int) -> ModelBank:
    models = {}
    key = _scenario_key(cfg, scenario)
    for snr in snrs:
        sc = scenario.with_snr(snr)
        tr = gen_dataset(cfg, sc, setup.n_train, stream(seed, "train", *key, float(snr), setup.n_train))
        val = synthesize_batch(cfg, sc, np.zeros(setup.n_val), stream(seed, "val", *key, float(snr)))
        s = replace(setup, train=replace(setup.train, seed=_key(("net", seed, variant, float(snr)))))
        models[float(snr)] = fit_network(tr, val, variant, s, snr_bin=float(snr))
    return ModelBank(models, "ts1", variant)


def train_ts2(cfg: OfdmConfig, scenario: ImpairmentScenario, snrs: Sequence[float], variant: str,
              setup: TrainingSetup, seed: int) -> ModelBank:
    tr = pooled_dataset(cfg, scenario, snrs, setup.n_train, seed, "train-pooled")
    val = pooled_dataset(cfg, scenario, snrs, setup.n_val, seed, "val-pooled", h0_only=True)
    s = replace(setup, train=replace(setup.train, seed=_key(("net-pooled", seed, variant))))
    return ModelBank({None: fit_network(tr, val, variant, s)}, "ts2", variant)


def save_bank(bank: ModelBank, directory) -> None:
    """One model file per bin plus a small manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = []
    for snr, model in sorted(bank.models.items(), key=lambda kv: (kv[0] is None, kv[0] or 0.0)):
        name = "pooled.model" if snr is None else f"snr{snr:+g}.model"
        nn.save_model(model, d / name)
        names.append(name)
    (d / "bank.txt").write_text(f"strategy={bank.strategy}\nvariant={bank.variant}\n"
                                f"models={' '.join(names)}\n")


def load_bank(directory) -> ModelBank:
    d = Path(directory)
    meta = dict(line.split("=", 1) for line in (d / "bank.txt").read_text().splitlines() if line)
    models = {}
    for name in meta["models"].split():
        model = nn.load_model(d / name)
        models[model.snr_bin] = model
    return ModelBank(models, meta["strategy"], meta["variant"])


# -- evaluation ------------------------------------------------------------


def evaluate(detector, test: FrameBatch, method: str = "", threshold: float = float("nan"),
             **meta) -> Metrics:
    """Empirical PFA over the H0 rows and PM over the H1 rows of ``test``.

    ``detector`` is anything with ``decide(batch)`` or a plain callable
    mapping a batch to 0/1 decisions.
    """
    decide = detector.decide if hasattr(detector, "decide") else detector
    d = np.asarray(decide(test)).astype(int).reshape(-1)
    h0, h1 = test.labels == H0, test.labels == H1
    if not h0.any() or not h1.any():
        raise ValueError("evaluation needs both H0 and H1 frames")
    sc = test.scenario
    snr = float(test.snr_db[0]) if np.unique(test.snr_db).size == 1 else float("nan")
    base = dict(method=method, snr_db=snr, scenario=scenario_name(sc), pfa=float(d[h0].mean()),
                pm=float(1.0 - d[h1].mean()), trials=len(test), threshold=float(threshold),
                eta_db=sc.eta_db, fq=sc.f_q, delta_mode=sc.delta_mode)
    base.update(meta)
    return Metrics(**base)


# -- sweeps ----------------------------------------------------------------


@dataclass
class SweepSpec:
    snrs: tuple = DEFAULT_SNRS
    scenario: ImpairmentScenario = field(default_factory=ImpairmentScenario)
    methods: tuple = ("ed", "cp", "cm", "sae-ss", "sae-tf")
    strategy: str = "ts1"
    n_test: int = 20_000
    n_calib: int = 10_000
    cfg: OfdmConfig = field(default_factory=OfdmConfig)
    setup: TrainingSetup = field(default_factory=TrainingSetup)

    def __post_init__(self):
        if not self.snrs or not self.methods:
            raise ValueError("sweep needs at least one SNR and one method")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown method(s): {', '.join(unknown)}")
        if self.n_test < 1000:
            raise ValueError("n_test must be at least 1000")
        if self.strategy not in ("ts1", "ts2"):
            raise ValueError(f"unknown training strategy {self.strategy!r}")


def make_test_set(cfg: OfdmConfig, scenario: ImpairmentScenario, snr_db: float, n: int, seed: int) -> FrameBatch:
    """Sweep-point test data; shared by every method evaluated at that point."""
    return gen_dataset(cfg, scenario.with_snr(snr_db), n,
                       stream(seed, "test", *_scenario_key(cfg, scenario), float(snr_db), n))


def train_bank(spec: SweepSpec, variant: str, seed: int) -> ModelBank:
    fn = train_ts1 if spec.strategy == "ts1" else train_ts2
    return fn(spec.cfg, spec.scenario, spec.snrs, variant, spec.setup, seed)


def sweep(spec: SweepSpec, seed: int = 0, banks: dict | None = None,
          progress: Callable[[str], None] | None = None) -> list:
    """Every (method, SNR) point of ``spec``, ordered by method then SNR.

    ``banks`` may supply pre-trained model banks keyed by variant; any
    missing variant is trained here and added to that dict.
    """
    banks = {} if banks is None else banks
    tests = {snr: make_test_set(spec.cfg, spec.scenario, snr, spec.n_test, seed) for snr in spec.snrs}
    sc = spec.scenario
    rows = []
    for method in spec.methods:
        if method.startswith("sae-"):
            variant = method[4:]
            if variant not in banks:
                if progress:
                    progress(f"training {method} ({spec.strategy})")
                banks[variant] = train_bank(spec, variant, seed)
            bank = banks[variant]
            for snr in spec.snrs:
                rows.append(evaluate(bank, tests[snr], method, bank.threshold_for(snr),
                                     variant=variant, strategy=spec.strategy, seed=seed))
        else:
            det = BaselineDetector(method, spec.cfg)
            for snr in spec.snrs:
                thr = det.calibrate(sc, snr, spec.setup.pfa, spec.n_calib, seed)
                rows.append(evaluate(det, tests[snr], method, thr.unit_threshold, seed=seed))
        if progress:
            progress(f"{method}: " + " ".join(f"{r.pm:.3f}" for r in rows[-len(spec.snrs):]))
    return rows


@dataclass(frozen=True)
class FigureCase:
    """One curve family of a figure: scenario/config overrides and the methods shown."""

    label: str
    scenario: dict
    cfg: dict
    methods: tuple
    snrs: tuple | None = None


_FIG_METHODS = ("ed", "cp", "cm", "sae-ss", "sae-tf")

FIGURES = {
    "fig7_perfect": (FigureCase("perfect", {}, {}, _FIG_METHODS),),
    "fig8_noise_uncertainty": tuple(FigureCase(f"eta={e:g}", {"eta_db": e}, {}, _FIG_METHODS)
                                    for e in (0.5, 1.0)),
    "fig9_delay": (FigureCase("uniform-delay", {"delta_mode": "uniform"}, {}, _FIG_METHODS),),
    "fig10_cfo": tuple(FigureCase(f"fq={f:g}", {"f_q": f}, {}, _FIG_METHODS) for f in (0.5, 1.0)),
    "tab4_cp_length": tuple(FigureCase(f"n_c={n}", {}, {"n_c": n}, ("sae-ss", "sae-tf"), (-12.0,))
                            for n in (0, 8, 16)),
    "fig15_af": (FigureCase("perfect", {}, {}, ("sae-ss", "sae-ss-af", "sae-tf", "sae-tf-af")),),
}


def run_figure(name: str, base: SweepSpec, seed: int, cache: dict | None = None,
               progress: Callable[[str], None] | None = None) -> list:
    """All cases of one entry of :data:`FIGURES` as ``(case label, Metrics)`` pairs.

    ``cache`` holds trained banks across calls. Banks are keyed by
    everything that shapes their training data, so e.g. the noise
    uncertainty cases reuse the perfect-condition networks (the noise
    estimate never enters the features).
    """
    if name not in FIGURES:
        raise ValueError(f"unknown figure {name!r}; choose from {', '.join(FIGURES)}")
    cache = {} if cache is None else cache
    out = []
    for case in FIGURES[name]:
        cfg = replace(base.cfg, **case.cfg)
        sc = replace(base.scenario, **case.scenario)
        spec = replace(base, cfg=cfg, scenario=sc, methods=case.methods, snrs=case.snrs or base.snrs)
        ident = (spec.strategy, _scenario_key(cfg, sc), tuple(spec.snrs), repr(spec.setup))
        banks = {v: b for (v, *rest), b in cache.items() if tuple(rest) == ident}
        if progress:
            progress(f"{name} [{case.label}]")
        rows = sweep(spec, seed, banks, progress)
        for v, b in banks.items():
            cache[(v, *ident)] = b
        out.extend((case.label, r) for r in rows)
    return out


def figure_csv(pairs: Iterable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("case",) + RESULT_COLUMNS)
    for label, r in pairs:
        w.writerow([label] + [repr(v) if isinstance(v, float) else v for v in r.row().values()])
    return buf.getvalue()


def results_csv(rows: Iterable[Metrics]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=RESULT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.row().items()})
    return buf.getvalue()


def write_results(rows: Iterable[Metrics], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(results_csv(rows))


def read_results(path) -> list:
    types = {f.name: f.type for f in fields(Metrics)}
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            kw = {}
            for k, v in rec.items():
                t = types[k]
                kw[k] = int(v) if t in ("int", int) else float(v) if t in ("float", float) else v
            out.append(Metrics(**kw))
    return out


# -- online complexity -----------------------------------------------------


@dataclass(frozen=True)
class ComplexityParams:
    n_c: int = 8
    n_d: int = 64
    m: int = 2
    hidden: tuple = (100, 50)
    n_s: int = 7
    n_w: int = 10
    n_x: int = 4
    n_y: int = 4
    n_ch: int = 5


COMPLEXITY_METHODS = ("cp", "cm", "ann", "cnn", "sae-ss", "sae-tf")


def _stack_mults(hidden: Sequence[int]) -> int:
    # sum over l >= 2 of K_l * P_l (P_l = K_{l-1}) plus the K_L head inputs
    return sum(k * p for p, k in zip(hidden, hidden[1:])) + hidden[-1]


def complexity_counts(method: str, p: ComplexityParams) -> tuple:
    """(complex multiplications, real multiplications) of one online decision."""
    T = p.n_c + p.n_d
    K = tuple(p.hidden)
    if not K:
        raise ValueError("hidden layer sizes are required")
    if method == "cp":
        if p.n_c < 1:
            raise ValueError("n_c = 0 is invalid for the CP detector")
        return T * (p.m + p.n_s + 1) + p.m * T ** 2, 2 * T * (T - p.n_s)
    if method == "cm":
        return p.m * p.n_d * math.log2(p.n_d / 2) + p.m * p.n_d ** 2, 2 * (p.n_d ** 2 - p.n_d)
    if method == "ann":
        return 2 * p.m * T, 4 * K[0] + _stack_mults(K)
    if method == "cnn":
        return 4 * p.m * T * (1 + math.log2(T)), 2 * p.n_w * p.n_x * p.n_y * p.n_ch + K[-1]
    if method == "sae-ss":
        return 0, 2 * p.m * K[0] * T + _stack_mults(K)
    if method == "sae-tf":
        return p.m * T * math.log2(T), 4 * p.m * K[0] * T + _stack_mults(K)
    raise ValueError(f"unknown method {method!r}")


def complexity_real_mults(method: str, params: ComplexityParams | None = None) -> int:
    """Total real multiplications, one complex multiplication counting as four.

    The complex count is rounded to an integer before the factor of four
    is applied.
    """
    cplx, real = complexity_counts(method, params or ComplexityParams())
    return 4 * int(round(cplx)) + int(round(real))
