"""Command-line entry point: ``python3 -m saesense <command> [options]``.

Every option lives in one flat :class:`RunConfig`. A value can come from
the built-in default, a ``key=value`` file given with ``--config``, or a
command-line flag named after the key (``n_train`` -> ``--n-train``);
flags win over the file, the file wins over defaults. Each command
writes the effective configuration next to its outputs as
``config.txt``, which can be fed back through ``--config``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import baselines
from . import experiment as ex
from . import neuralnet as nn
from .features import VARIANTS
from .signal import FrameBatch, ImpairmentScenario, OfdmConfig, synthesize_batch

log = logging.getLogger("saesense")

COMMANDS = ("gen", "train", "eval", "sweep", "complexity", "calibrate")


@dataclass(frozen=True)
class RunConfig:
    # waveform and channel
    n_d: int = 64
    n_c: int = 8
    m: int = 2
    l_p: int = 4
    # impairments; snr_db is the single-point SNR used by gen and calibrate
    snr_db: float = -10.0
    delta: int = 0
    f_q: float = 0.0
    eta_db: float = 0.0
    delta_mode: str = "fixed"
    # sweep
    snrs: tuple = ex.DEFAULT_SNRS
    methods: tuple = ("ed", "cp", "cm", "sae-ss", "sae-tf")
    strategy: str = "ts1"
    variant: str = "ss"
    pfa: float = 0.05
    n: int = 20_000
    n_train: int = 20_000
    n_val: int = 10_000
    n_test: int = 20_000
    n_calib: int = 10_000
    # network
    hidden: tuple = nn.DEFAULT_HIDDEN
    n_pr: int = nn.TrainConfig.n_pr
    n_f: int = nn.TrainConfig.n_f
    lr_pretrain: float = nn.TrainConfig.lr_pretrain
    lr_finetune: float = nn.TrainConfig.lr_finetune
    batch_size: int = nn.TrainConfig.batch_size
    init_gain: float = nn.TrainConfig.init_gain
    # complexity table extras
    n_s: int = 7
    n_w: int = 10
    n_x: int = 4
    n_y: int = 4
    n_ch: int = 5
    # run
    seed: int = 0
    out: str = "out"
    threads: int = 1

    def __post_init__(self):
        unknown = [mth for mth in self.methods if mth not in ex.METHODS]
        if unknown:
            raise ValueError(f"unknown method(s): {', '.join(unknown)} (choose from {', '.join(ex.METHODS)})")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r} (choose from {', '.join(VARIANTS)})")
        if self.strategy not in ("ts1", "ts2"):
            raise ValueError(f"unknown strategy {self.strategy!r} (ts1 or ts2)")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        # surface invalid physical parameters at parse time
        self.ofdm()
        self.scenario().check(self.ofdm())
        self.train_config()

    def ofdm(self) -> OfdmConfig:
        return OfdmConfig(self.n_d, self.n_c, self.m, self.l_p)

    def scenario(self) -> ImpairmentScenario:
        return ImpairmentScenario(self.snr_db, self.delta, self.f_q, self.eta_db, self.delta_mode)

    def train_config(self) -> nn.TrainConfig:
        return nn.TrainConfig(self.n_pr, self.n_f, self.lr_pretrain, self.lr_finetune, self.batch_size,
                              self.seed, self.init_gain)

    def setup(self) -> ex.TrainingSetup:
        return ex.TrainingSetup(self.train_config(), tuple(self.hidden), self.n_train, self.n_val, self.pfa)

    def sweep_spec(self, methods=None) -> ex.SweepSpec:
        return ex.SweepSpec(tuple(self.snrs), self.scenario(), tuple(methods or self.methods), self.strategy,
                            self.n_test, self.n_calib, self.ofdm(), self.setup())

    def complexity_params(self) -> ex.ComplexityParams:
        return ex.ComplexityParams(self.n_c, self.n_d, self.m, tuple(self.hidden), self.n_s, self.n_w,
                                   self.n_x, self.n_y, self.n_ch)

    def dumps(self) -> str:
        return "".join(f"{f.name}={_format(getattr(self, f.name))}\n" for f in fields(self))


_DEFAULTS = RunConfig()


def _format(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_format(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def _convert(key: str, text: str):
    default = getattr(_DEFAULTS, key)
    text = text.strip()
    if isinstance(default, tuple):
        kind = type(default[0])
        return tuple(kind(t) for t in text.split(",") if t.strip())
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes")
    return type(default)(text)


def parse_config(text: str) -> dict:
    """``key=value`` lines (``#`` comments allowed) into typed overrides."""
    names = {f.name for f in fields(RunConfig)}
    out = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in names:
            raise ValueError(f"config line {no}: unknown or malformed entry {raw!r}")
        out[key] = _convert(key, value)
    return out


def loads_config(text: str) -> RunConfig:
    return RunConfig(**parse_config(text))


def build_config(config_path: str | None, flags: dict) -> RunConfig:
    """Defaults, then the config file, then command-line flags."""
    values = {}
    if config_path:
        values.update(parse_config(Path(config_path).read_text()))
    values.update({k: _convert(k, v) for k, v in flags.items()})
    return RunConfig(**values)


# -- argument parsing ------------------------------------------------------


def _config_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("configuration (flag > --config file > default)")
    g.add_argument("--config", default=argparse.SUPPRESS, help="key=value configuration file")
    g.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="only print results and errors")
    for f in fields(RunConfig):
        g.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, default=argparse.SUPPRESS,
                       metavar=f.name.upper(), help=f"default: {_format(f.default)}")
    return p


def make_parser() -> argparse.ArgumentParser:
    common = _config_flags()
    parser = argparse.ArgumentParser(prog="saesense", parents=[common],
                                     description="OFDM spectrum sensing with stacked autoencoders and baselines")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="synthesise a labelled dataset file")
    p.add_argument("--output", help="dataset path (default OUT/frames.bin)")
    p.add_argument("--csv", action="store_true", help="also write the frames as CSV")

    p = sub.add_parser("train", parents=[common], help="train an SAE model bank (TS-1 or TS-2)")
    p.add_argument("--data", nargs="*", default=[],
                   help="dataset files from `gen`; without them training data is generated")

    p = sub.add_parser("eval", parents=[common], help="evaluate baselines and trained banks")
    p.add_argument("--models", nargs="*", default=[], help="model bank directories written by `train`")

    p = sub.add_parser("sweep", parents=[common], help="train and evaluate across SNRs")
    p.add_argument("--figure", nargs="*", default=[], choices=list(ex.FIGURES) + ["all"],
                   help="reproduce these figure/table data files instead of the configured sweep")

    p = sub.add_parser("complexity", parents=[common], help="online complexity table")
    p.add_argument("names", nargs="*", metavar="METHOD",
                   help=f"subset of {', '.join(ex.COMPLEXITY_METHODS)}")

    p = sub.add_parser("calibrate", parents=[common], help="Monte-Carlo threshold for a baseline")
    p.add_argument("detector", choices=baselines.BASELINES)
    return parser


# -- commands --------------------------------------------------------------


def _outdir(cfg: RunConfig) -> Path:
    d = Path(cfg.out)
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.txt").write_text(cfg.dumps())
    return d


def cmd_gen(cfg: RunConfig, args) -> int:
    out = _outdir(cfg)
    path = Path(args.output) if args.output else out / "frames.bin"
    sc = cfg.scenario()
    batch = ex.gen_dataset(cfg.ofdm(), sc, cfg.n, ex.stream(cfg.seed, "gen", sc.snr_db, cfg.n))
    batch.save(path)
    if args.csv:
        batch.to_csv(path.with_suffix(".csv"))
    print(f"wrote {len(batch)} frames to {path}: {ex.scenario_name(sc)}, snr={sc.snr_db:g} dB, "
          f"delta={sc.delta} ({sc.delta_mode}), f_q={sc.f_q:g}, eta={sc.eta_db:g} dB")
    return 0


def _loss_csv(model: nn.SaeModel) -> str:
    lines = ["phase,layer,step,loss"]
    for i, curve in enumerate(model.history.get("pretrain", [])):
        lines += [f"pretrain,{i},{t},{float(v)!r}" for t, v in enumerate(curve)]
    lines += [f"finetune,,{t},{float(v)!r}" for t, v in enumerate(model.history.get("finetune", []))]
    return "\n".join(lines) + "\n"


def _train_from_files(cfg: RunConfig, paths) -> ex.ModelBank:
    setup = cfg.setup()
    batches = [FrameBatch.load(p) for p in paths]
    for p, b in zip(paths, batches):
        if b.cfg.frame_len != cfg.ofdm().frame_len:
            raise ValueError(f"{p}: frames of length {b.cfg.frame_len} do not match the configured "
                             f"length {cfg.ofdm().frame_len} for the {cfg.variant} input")
    key = lambda b: (b.cfg.n_d, b.cfg.n_c, b.cfg.m, b.cfg.l_p, b.scenario.delta, b.scenario.f_q)
    if cfg.strategy == "ts1":
        models = {}
        for b in batches:
            snr = float(b.scenario.snr_db)
            val = synthesize_batch(b.cfg, b.scenario, np.zeros(setup.n_val),
                                   ex.stream(cfg.seed, "val", *key(b), snr))
            s = replace(setup, train=replace(setup.train, seed=ex._key(("net", cfg.seed, cfg.variant, snr))))
            models[snr] = ex.fit_network(b, val, cfg.variant, s, snr_bin=snr)
        return ex.ModelBank(models, "ts1", cfg.variant)
    pooled = FrameBatch.concat(batches)
    val = FrameBatch.concat([synthesize_batch(b.cfg, b.scenario, np.zeros(max(2, setup.n_val // len(batches))),
                                              ex.stream(cfg.seed, "val", *key(b), float(b.scenario.snr_db)))
                             for b in batches])
    s = replace(setup, train=replace(setup.train, seed=ex._key(("net-pooled", cfg.seed, cfg.variant))))
    return ex.ModelBank({None: ex.fit_network(pooled, val, cfg.variant, s)}, "ts2", cfg.variant)


def cmd_train(cfg: RunConfig, args) -> int:
    out = _outdir(cfg)
    if args.data:
        bank = _train_from_files(cfg, args.data)
    else:
        fn = ex.train_ts1 if cfg.strategy == "ts1" else ex.train_ts2
        bank = fn(cfg.ofdm(), cfg.scenario(), cfg.snrs, cfg.variant, cfg.setup(), cfg.seed)
    d = out / "models" / f"{cfg.variant}-{bank.strategy}"
    ex.save_bank(bank, d)
    for snr, model in bank.models.items():
        tag = "pooled" if snr is None else f"snr{snr:+g}"
        (d / f"loss_{tag}.csv").write_text(_loss_csv(model))
        pre = ", ".join(f"{c[-1]:.4f}" for c in model.history.get("pretrain", []))
        ft = model.history.get("finetune")
        log.info("%s: input %d, final reconstruction loss per layer [%s], fine-tune NLL %.4f, threshold %.4f",
                 tag, model.n_input, pre, ft[-1] if ft is not None and len(ft) else float("nan"),
                 model.decision_threshold)
    print(f"wrote {len(bank)} model(s) to {d}")
    return 0


def _write_rows(out: Path, rows, name="results.csv") -> Path:
    path = out / name
    ex.write_results(rows, path)
    return path


def _print_rows(rows) -> None:
    for r in rows:
        print(f"{r.method:10s} {r.strategy or '-':4s} snr={r.snr_db:+6.1f} dB  pfa={r.pfa:.4f}  pm={r.pm:.4f}")


def cmd_eval(cfg: RunConfig, args) -> int:
    out = _outdir(cfg)
    banks = {}
    for d in args.models:
        bank = ex.load_bank(d)
        banks[bank.variant] = bank
    for method in cfg.methods:
        if not method.startswith("sae-"):
            continue
        bank = banks.get(method[4:])
        if bank is None:
            raise LookupError(f"no trained model bank for {method}; pass its directory with --models")
        if bank.strategy == "ts1":
            missing = [s for s in cfg.snrs if float(s) not in bank.models]
            if missing:
                raise LookupError(f"no {method} model for SNR(s) {', '.join(f'{s:g}' for s in missing)} dB")
    strategies = {b.strategy for b in banks.values()}
    spec = cfg.sweep_spec()
    if len(strategies) == 1:
        spec = replace(spec, strategy=strategies.pop())
    rows = ex.sweep(spec, cfg.seed, banks)
    path = _write_rows(out, rows)
    _print_rows(rows)
    print(f"wrote {len(rows)} rows to {path}")
    return 0


def cmd_sweep(cfg: RunConfig, args) -> int:
    out = _outdir(cfg)
    progress = log.info
    if not args.figure:
        rows = ex.sweep(cfg.sweep_spec(), cfg.seed, progress=progress)
        path = _write_rows(out, rows)
        _print_rows(rows)
        print(f"wrote {len(rows)} rows to {path}")
        return 0
    names = list(ex.FIGURES) if "all" in args.figure else list(dict.fromkeys(args.figure))
    cache, rows = {}, []
    for name in names:
        pairs = ex.run_figure(name, cfg.sweep_spec(), cfg.seed, cache, progress)
        (out / f"{name}.csv").write_text(ex.figure_csv(pairs))
        rows.extend(r for _, r in pairs)
        print(f"wrote {len(pairs)} rows to {out / (name + '.csv')}")
    _write_rows(out, rows)
    return 0


def cmd_complexity(cfg: RunConfig, args) -> int:
    params = cfg.complexity_params()
    names = args.names or ex.COMPLEXITY_METHODS
    failed = False
    print(f"{'method':8s} {'complex':>10s} {'real':>10s} {'total real':>12s}")
    for name in names:
        try:
            cplx, real = ex.complexity_counts(name, params)
        except ValueError as err:
            print(f"{name:8s} rejected: {err}")
            failed = failed or bool(args.names)
            continue
        print(f"{name:8s} {cplx:10.2f} {real:10d} {ex.complexity_real_mults(name, params):12d}")
    return 1 if failed else 0


def cmd_calibrate(cfg: RunConfig, args) -> int:
    out = _outdir(cfg)
    det = ex.BaselineDetector(args.detector, cfg.ofdm())
    thr = det.calibrate(cfg.scenario(), cfg.snr_db, cfg.pfa, cfg.n_calib, cfg.seed)
    suffix = f"_snr{cfg.snr_db:+g}" if args.detector == "cp" else ""
    path = out / f"threshold_{args.detector}{suffix}.txt"
    thr.save(path)
    print(f"{args.detector}: unit threshold {thr.unit_threshold:.6g} at PFA {thr.target_pfa} "
          f"({thr.trials} trials), wrote {path}")
    return 0


HANDLERS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep,
            "complexity": cmd_complexity, "calibrate": cmd_calibrate}


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    ns = vars(args)
    flags = {k[4:]: v for k, v in ns.items() if k.startswith("cfg_")}
    if args.command == "complexity":
        unknown = [n for n in args.names if n not in ex.COMPLEXITY_METHODS]
        if unknown:
            parser.error(f"unknown method(s): {', '.join(unknown)} "
                         f"(choose from {', '.join(ex.COMPLEXITY_METHODS)})")
    try:
        cfg = build_config(ns.get("config"), flags)
    except (ValueError, OSError) as err:
        parser.error(str(err))
    logging.basicConfig(level=logging.WARNING if ns.get("quiet") else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    try:
        return HANDLERS[args.command](cfg, args)
    except (ValueError, LookupError, OSError) as err:
        print(f"saesense {args.command}: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
