"""Conventional OFDM detectors and Monte-Carlo threshold calibration.

Three test statistics are provided, each vectorised over a stack of
frames (last axis = time):

* energy (ED): mean power of the frame;
* cyclic-prefix (CP): the largest, over candidate block offsets, of a
  CP-pair log-likelihood surrogate;
* covariance (CM): normalised L1 mass of the off-diagonal entries of the
  post-CP frequency-domain sample covariance.

Thresholds are empirical quantiles of the statistic over noise-only
frames at unit noise power and are rescaled by the receiver's estimated
noise power at decision time. That rescaling is where noise uncertainty
enters.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .dft import dft
from .signal import H0, H1, FrameBatch, ImpairmentScenario, OfdmConfig, ReceivedFrame, synthesize_batch

BASELINES = ("ed", "cp", "cm")

_CM_CHUNK = 2048


def _samples(frames) -> np.ndarray:
    if isinstance(frames, (FrameBatch, ReceivedFrame)):
        return frames.samples
    return np.asarray(frames, dtype=complex)


def ed_statistic(frames):
    """Average received power; a float for one frame, an array for a stack."""
    y = _samples(frames)
    if y.shape[-1] == 0:
        raise ValueError("empty frame")
    out = np.mean(y.real ** 2 + y.imag ** 2, axis=-1)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class _CpLayout:
    mask: np.ndarray  # (block_len, frame_len - n_d) pair positions per candidate offset
    scale: np.ndarray  # m*n_c / valid pair count, inf where no pair fits


def _cp_layout(cfg: OfdmConfig) -> _CpLayout:
    T, L = cfg.block_len, cfg.frame_len
    n = np.arange(L - cfg.n_d)
    d = np.arange(T)
    mask = ((n[None, :] - d[:, None]) % T) < cfg.n_c
    counts = mask.sum(axis=1)
    with np.errstate(divide="ignore"):
        scale = np.where(counts > 0, cfg.m * cfg.n_c / np.maximum(counts, 1), np.inf)
    return _CpLayout(mask.astype(float), scale)


def cp_statistic(frames, cfg: OfdmConfig, assumed_snr):
    """CP-autocorrelation statistic maximised over the block offset.

    For a candidate offset ``d`` every sample ``n`` with ``(n - d) mod
    (n_c + n_d) < n_c`` is paired with ``n + n_d`` and contributes

        2 rho Re{y(n) y*(n + n_d)} - rho^2 (|y(n)|^2 + |y(n + n_d)|^2),

    with ``rho = snr / (snr + 1)`` from the assumed linear SNR. Pairs that
    would run past the frame are dropped and the sum is rescaled to the
    nominal ``m * n_c`` pairs so offsets compete on equal terms.
    ``assumed_snr`` may be a scalar or one value per frame.
    """
    if cfg.n_c < 1:
        raise ValueError("CP statistic is undefined without a cyclic prefix (n_c = 0)")
    y = _samples(frames)
    single = y.ndim == 1
    y = np.atleast_2d(y)
    snr = np.asarray(assumed_snr, dtype=float)
    rho = (snr / (snr + 1.0)).reshape(-1, 1) if snr.ndim else snr / (snr + 1.0)
    a, b = y[:, :-cfg.n_d], y[:, cfg.n_d:]
    corr = a.real * b.real + a.imag * b.imag
    energy = a.real ** 2 + a.imag ** 2 + b.real ** 2 + b.imag ** 2
    layout = _cp_layout(cfg)
    per_offset = (2.0 * rho * corr - rho ** 2 * energy) @ layout.mask.T
    with np.errstate(invalid="ignore"):
        per_offset = np.where(np.isfinite(layout.scale), per_offset * layout.scale, -np.inf)
    out = per_offset.max(axis=1)
    return float(out[0]) if single else out


def cm_statistic(frames, cfg: OfdmConfig):
    """Off-diagonal L1 norm of the post-CP frequency-domain covariance over sqrt(n_d^2 - n_d).

    The covariance is the biased estimate (1/m) sum_k X_k X_k^H over the m
    blocks, without mean removal.
    """
    y = _samples(frames)
    single = y.ndim == 1
    y = np.atleast_2d(y)
    n = y.shape[0]
    X = dft(y.reshape(n, cfg.m, cfg.block_len)[:, :, cfg.n_c:])
    denom = np.sqrt(cfg.n_d ** 2 - cfg.n_d) if cfg.n_d > 1 else 1.0
    out = np.empty(n)
    for lo in range(0, n, _CM_CHUNK):
        Xc = X[lo:lo + _CM_CHUNK]
        R = np.einsum("fki,fkj->fij", Xc, Xc.conj()) / cfg.m
        absR = np.abs(R)
        off = absR.sum(axis=(1, 2)) - np.trace(absR, axis1=1, axis2=2)
        out[lo:lo + _CM_CHUNK] = off / denom
    return float(out[0]) if single else out


def statistic_fn(name: str, cfg: OfdmConfig, assumed_snr_db: float | None = None) -> Callable:
    """Batch statistic for a named baseline; CP needs the assumed SNR in dB."""
    if name == "ed":
        return ed_statistic
    if name == "cm":
        return lambda frames: cm_statistic(frames, cfg)
    if name == "cp":
        if cfg.n_c < 1:
            raise ValueError("n_c = 0 is invalid for the CP detector")
        if assumed_snr_db is None:
            raise ValueError("CP detector needs an assumed SNR")
        snr = 10.0 ** (assumed_snr_db / 10.0)
        return lambda frames: cp_statistic(frames, cfg, snr)
    raise ValueError(f"unknown baseline detector {name!r}")


@dataclass
class DetectorThreshold:
    unit_threshold: float
    scaling: str = "linear"
    target_pfa: float = 0.05
    trials: int = 10_000
    detector: str = ""
    assumed_snr_db: float | None = None

    def __post_init__(self):
        if not 0.0 < self.target_pfa < 1.0:
            raise ValueError("target_pfa must lie in (0, 1)")
        if self.trials < 1000:
            raise ValueError("calibration needs at least 1000 trials")
        if self.scaling not in ("none", "linear"):
            raise ValueError(f"unknown scaling {self.scaling!r}")

    def effective(self, est_noise_var):
        if self.scaling == "linear":
            return self.unit_threshold * np.asarray(est_noise_var, dtype=float)
        return np.full(np.shape(est_noise_var), self.unit_threshold)

    def dumps(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            lines.append(f"{k}={'' if v is None else (repr(v) if isinstance(v, float) else v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "DetectorThreshold":
        raw = dict(line.split("=", 1) for line in text.splitlines() if line.strip())
        return cls(unit_threshold=float(raw["unit_threshold"]), scaling=raw["scaling"],
                   target_pfa=float(raw["target_pfa"]), trials=int(raw["trials"]),
                   detector=raw.get("detector", ""),
                   assumed_snr_db=float(raw["assumed_snr_db"]) if raw.get("assumed_snr_db") else None)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "DetectorThreshold":
        return cls.loads(Path(path).read_text())


@dataclass(frozen=True)
class DetectionReport:
    statistic: float
    threshold: float
    decision: int


def calibrate_threshold(statistic_fn: Callable, cfg: OfdmConfig, h0_scenario: ImpairmentScenario,
                        target_pfa: float, trials: int, rng: np.random.Generator,
                        scaling: str = "linear", detector: str = "",
                        assumed_snr_db: float | None = None) -> DetectorThreshold:
    """Empirical (1 - target_pfa) quantile over ``trials`` unit-power H0 frames.

    The frames carry the scenario's noise-estimate error, and with linear
    scaling the quantile is taken of statistic / estimated noise power,
    i.e. of exactly the quantity :func:`detect` compares against the unit
    threshold. The false-alarm target therefore holds under noise
    uncertainty too, and the price is paid in missed detections.
    """
    if trials < 1000:
        raise ValueError("calibration needs at least 1000 trials")
    frames = synthesize_batch(cfg, h0_scenario.with_snr(0.0), np.full(trials, H0), rng)
    stats = np.asarray(statistic_fn(frames), dtype=float)
    if scaling == "linear":
        stats = stats / frames.est_noise_var
    return DetectorThreshold(float(np.quantile(stats, 1.0 - target_pfa)), scaling, target_pfa,
                             trials, detector, assumed_snr_db)


def calibrate_baseline(name: str, cfg: OfdmConfig, h0_scenario: ImpairmentScenario,
                       target_pfa: float, trials: int, rng: np.random.Generator,
                       assumed_snr_db: float | None = None) -> DetectorThreshold:
    """Calibrate one of ED/CP/CM. All three are quadratic in the samples, hence linear scaling."""
    fn = statistic_fn(name, cfg, assumed_snr_db)
    return calibrate_threshold(fn, cfg, h0_scenario, target_pfa, trials, rng, "linear", name,
                               assumed_snr_db if name == "cp" else None)


def detect(statistic: float, thr: DetectorThreshold, est_noise_var: float) -> DetectionReport:
    eff = float(thr.effective(est_noise_var))
    return DetectionReport(float(statistic), eff, H1 if statistic > eff else H0)


def decide(statistics, thr: DetectorThreshold, est_noise_var) -> np.ndarray:
    """Vectorised :func:`detect`: 1 where the statistic exceeds the effective threshold."""
    return (np.asarray(statistics) > thr.effective(est_noise_var)).astype(np.int8)
