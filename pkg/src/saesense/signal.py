"""Received OFDM signal synthesis under both hypotheses.

The received frame follows

    H0: y(n) = w(n)
    H1: y(n) = exp(-j 2 pi f_q (n - delta) / N_d) * sum_l h_l s(n - delta - l) + w(n)

with BPSK-modulated OFDM blocks s, a frequency-selective Rayleigh channel
h that stays fixed over the frame, an integer timing delay, a normalised
carrier frequency offset and circular complex AWGN. Noise power is set
from the drawn taps so the per-realisation SNR is exact, and the
receiver's noise-power estimate carries a uniform dB error of at most
``eta_db``.

Everything is vectorised over frames: :func:`synthesize_batch` is the
workhorse and :func:`synthesize_frame` is the one-frame view of it.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .dft import idft

H0 = 0
H1 = 1

SIGNAL_POWER = 1.0  # sigma_s^2 of unit-power BPSK through a unitary IDFT
PDP_DECAY = 2.0  # exponential power-delay profile p_l ~ exp(-l / PDP_DECAY)

FRAME_MAGIC = b"SAEFRM\x00\x01"
FRAME_VERSION = 1

DeltaMode = Literal["fixed", "uniform"]


def _record_dtype(frame_len: int) -> np.dtype:
    return np.dtype([("label", "u1"), ("noise_var", "<f8"), ("est_noise_var", "<f8"),
                     ("iq", "<f8", (2 * frame_len,))])


@dataclass(frozen=True)
class OfdmConfig:
    n_d: int = 64
    n_c: int = 8
    m: int = 2
    l_p: int = 4

    def __post_init__(self):
        if self.n_d < 1:
            raise ValueError(f"n_d must be >= 1, got {self.n_d}")
        if not 0 <= self.n_c <= self.n_d:
            raise ValueError(f"n_c must lie in [0, n_d], got {self.n_c}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if not 1 <= self.l_p <= self.n_c + self.n_d:
            raise ValueError(f"l_p must lie in [1, n_c + n_d], got {self.l_p}")

    @property
    def block_len(self) -> int:
        return self.n_c + self.n_d

    @property
    def frame_len(self) -> int:
        return self.m * self.block_len


@dataclass(frozen=True)
class ImpairmentScenario:
    snr_db: float = 0.0
    delta: int = 0
    f_q: float = 0.0
    eta_db: float = 0.0
    delta_mode: DeltaMode = "fixed"

    def __post_init__(self):
        if not 0.0 <= self.f_q <= 1.0:
            raise ValueError(f"f_q must lie in [0, 1], got {self.f_q}")
        if self.eta_db < 0:
            raise ValueError(f"eta_db must be >= 0, got {self.eta_db}")
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if self.delta_mode not in ("fixed", "uniform"):
            raise ValueError(f"unknown delta_mode {self.delta_mode!r}")

    def check(self, cfg: OfdmConfig) -> None:
        if self.delta > cfg.block_len - 1:
            raise ValueError(
                f"delta={self.delta} outside [0, {cfg.block_len - 1}] for this config")

    def with_snr(self, snr_db: float) -> "ImpairmentScenario":
        return replace(self, snr_db=float(snr_db))


@dataclass(frozen=True)
class ChannelTaps:
    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=complex).reshape(-1)
        if taps.size < 1:
            raise ValueError("channel needs at least one tap")
        if not np.all(np.isfinite(taps)):
            raise ValueError("channel taps must be finite")
        object.__setattr__(self, "taps", taps)

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.taps) ** 2))


@dataclass
class ReceivedFrame:
    samples: np.ndarray
    label: int
    noise_var: float
    est_noise_var: float
    scenario: ImpairmentScenario


@dataclass
class FrameBatch:
    """A stack of received frames sharing one OFDM configuration.

    ``samples`` has shape (n_frames, frame_len). ``snr_db`` is kept per
    frame so that batches pooled over several SNRs stay self-describing.
    """

    cfg: OfdmConfig
    scenario: ImpairmentScenario
    samples: np.ndarray
    labels: np.ndarray
    noise_var: np.ndarray
    est_noise_var: np.ndarray
    snr_db: np.ndarray = field(default=None)
    delta: np.ndarray = field(default=None)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=complex))
        n = self.samples.shape[0]
        self.labels = np.asarray(self.labels, dtype=np.int8).reshape(n)
        self.noise_var = np.asarray(self.noise_var, dtype=float).reshape(n)
        self.est_noise_var = np.asarray(self.est_noise_var, dtype=float).reshape(n)
        if self.snr_db is None:
            self.snr_db = np.full(n, float(self.scenario.snr_db))
        self.snr_db = np.asarray(self.snr_db, dtype=float).reshape(n)
        if self.delta is None:
            self.delta = np.full(n, int(self.scenario.delta))
        self.delta = np.asarray(self.delta, dtype=np.int64).reshape(n)
        if self.samples.shape[1] != self.cfg.frame_len:
            raise ValueError(
                f"frame length {self.samples.shape[1]} != m(n_c+n_d) = {self.cfg.frame_len}")
        if not np.all(np.isin(self.labels, (H0, H1))):
            raise ValueError("labels must be 0 (H0) or 1 (H1)")
        if np.any(self.noise_var <= 0):
            raise ValueError("noise_var must be positive")

    def __len__(self) -> int:
        return self.samples.shape[0]

    def __getitem__(self, idx) -> "FrameBatch":
        if isinstance(idx, (int, np.integer)):
            idx = [idx]
        return FrameBatch(self.cfg, self.scenario, self.samples[idx], self.labels[idx],
                          self.noise_var[idx], self.est_noise_var[idx],
                          self.snr_db[idx], self.delta[idx])

    def frame(self, i: int) -> ReceivedFrame:
        return ReceivedFrame(self.samples[i].copy(), int(self.labels[i]),
                             float(self.noise_var[i]), float(self.est_noise_var[i]),
                             self.scenario.with_snr(self.snr_db[i]))

    @classmethod
    def concat(cls, batches: Sequence["FrameBatch"]) -> "FrameBatch":
        if not batches:
            raise ValueError("nothing to concatenate")
        cfg = batches[0].cfg
        if any(b.cfg != cfg for b in batches):
            raise ValueError("cannot concatenate batches with different OFDM configs")
        cat = lambda name: np.concatenate([getattr(b, name) for b in batches])
        return cls(cfg, batches[0].scenario, cat("samples"), cat("labels"), cat("noise_var"),
                   cat("est_noise_var"), cat("snr_db"), cat("delta"))

    # -- persistence ----------------------------------------------------

    def to_bytes(self) -> bytes:
        if np.unique(self.snr_db).size > 1:
            raise ValueError("a frame file holds one scenario; save pooled batches per SNR")
        sc = self.scenario
        header = FRAME_MAGIC + struct.pack(
            "<HIIIIdidd B Q", FRAME_VERSION, self.cfg.n_d, self.cfg.n_c, self.cfg.m,
            self.cfg.l_p, float(sc.snr_db), int(sc.delta), float(sc.f_q), float(sc.eta_db),
            0 if sc.delta_mode == "fixed" else 1, len(self))
        rec = np.empty(len(self), dtype=_record_dtype(self.cfg.frame_len))
        rec["label"] = self.labels
        rec["noise_var"] = self.noise_var
        rec["est_noise_var"] = self.est_noise_var
        rec["iq"] = np.stack([self.samples.real, self.samples.imag], axis=-1).reshape(len(self), -1)
        return header + rec.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "FrameBatch":
        if not data.startswith(FRAME_MAGIC):
            raise ValueError("not a frame file (bad magic)")
        fmt = "<HIIIIdidd B Q"
        off = len(FRAME_MAGIC)
        (version, n_d, n_c, m, l_p, snr_db, delta, f_q, eta_db, mode,
         count) = struct.unpack_from(fmt, data, off)
        if version != FRAME_VERSION:
            raise ValueError(f"unsupported frame file version {version}")
        off += struct.calcsize(fmt)
        cfg = OfdmConfig(n_d=n_d, n_c=n_c, m=m, l_p=l_p)
        scenario = ImpairmentScenario(snr_db=snr_db, delta=delta, f_q=f_q, eta_db=eta_db,
                                      delta_mode="fixed" if mode == 0 else "uniform")
        rec = np.frombuffer(data, dtype=_record_dtype(cfg.frame_len), count=count, offset=off)
        iq = rec["iq"].reshape(count, -1, 2)
        return cls(cfg, scenario, iq[..., 0] + 1j * iq[..., 1], rec["label"],
                   rec["noise_var"], rec["est_noise_var"])

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "FrameBatch":
        return cls.from_bytes(Path(path).read_bytes())

    def to_csv(self, path) -> None:
        """Debug mirror of the binary file: one row per frame."""
        n = self.cfg.frame_len
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label", "noise_var", "est_noise_var"]
                       + [f"{p}{i}" for i in range(n) for p in ("re", "im")])
            for i in range(len(self)):
                iq = np.stack([self.samples[i].real, self.samples[i].imag], -1).reshape(-1)
                w.writerow([int(self.labels[i]), repr(float(self.noise_var[i])),
                            repr(float(self.est_noise_var[i]))] + [repr(float(v)) for v in iq])


# -- generators ----------------------------------------------------------


def _bpsk_ofdm_blocks(cfg: OfdmConfig, shape: tuple, rng: np.random.Generator,
                      symbols: np.ndarray | None = None) -> np.ndarray:
    """OFDM blocks with cyclic prefix, shape ``shape + (n_c + n_d,)``."""
    if symbols is None:
        symbols = 2.0 * rng.integers(0, 2, size=shape + (cfg.n_d,)) - 1.0
    body = idft(symbols)
    return np.concatenate([body[..., cfg.n_d - cfg.n_c:], body], axis=-1)


def gen_bpsk_ofdm_stream(cfg: OfdmConfig, n_blocks: int, rng: np.random.Generator) -> np.ndarray:
    """Contiguous BPSK-OFDM sample stream of ``n_blocks`` CP-prefixed blocks."""
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    return _bpsk_ofdm_blocks(cfg, (n_blocks,), rng).reshape(-1)


def power_delay_profile(l_p: int) -> np.ndarray:
    p = np.exp(-np.arange(l_p) / PDP_DECAY)
    return p / p.sum()


def _draw_taps(l_p: int, n: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((n, l_p, 2))
    return np.sqrt(power_delay_profile(l_p) / 2.0) * (g[..., 0] + 1j * g[..., 1])


def gen_channel(cfg: OfdmConfig, rng: np.random.Generator) -> ChannelTaps:
    """Rayleigh taps with an exponential power-delay profile summing to one."""
    return ChannelTaps(_draw_taps(cfg.l_p, 1, rng)[0])


def synthesize_batch(cfg: OfdmConfig, scenario: ImpairmentScenario, labels,
                     rng: np.random.Generator, taps: np.ndarray | None = None,
                     normalize_taps: bool = True) -> FrameBatch:
    """Draw one received frame per entry of ``labels``.

    Random draws happen in the same order and amount whatever the
    hypothesis, delay mode, CFO or noise-uncertainty bound, so two calls
    with identically seeded generators share their data symbols, taps
    and noise realisations.

    ``taps`` (shape (l_p,) or (n, l_p)) overrides the drawn channel.
    With ``normalize_taps`` each realisation is scaled to unit total
    power, which pins the noise floor at sigma_s^2 / SNR for both
    hypotheses.
    """
    scenario.check(cfg)
    labels = np.asarray(labels, dtype=np.int8).reshape(-1)
    n = labels.size
    T, L = cfg.block_len, cfg.frame_len

    blocks = _bpsk_ofdm_blocks(cfg, (n, cfg.m + 1), rng)
    stream = blocks.reshape(n, -1)
    h = _draw_taps(cfg.l_p, n, rng)
    delta_draw = rng.integers(0, T, size=n)
    g = rng.standard_normal((n, L, 2))
    eps = rng.uniform(-scenario.eta_db, scenario.eta_db, size=n)

    if taps is not None:
        h = np.broadcast_to(np.asarray(taps, dtype=complex), (n, cfg.l_p)).copy()
        if not np.all(np.isfinite(h)):
            raise ValueError("channel taps must be finite")
    if normalize_taps:
        h = h / np.sqrt(np.sum(np.abs(h) ** 2, axis=1, keepdims=True))
    tap_power = np.sum(np.abs(h) ** 2, axis=1)

    delta = delta_draw if scenario.delta_mode == "uniform" else np.full(n, scenario.delta)

    conv = np.zeros_like(stream)
    for l in range(cfg.l_p):
        conv[:, l:] += h[:, l:l + 1] * stream[:, :stream.shape[1] - l]
    # y(i) = s(i - delta) with the window opening at the second block
    idx = (T - delta)[:, None] + np.arange(L)[None, :]
    sig = np.take_along_axis(conv, idx, axis=1)
    if scenario.f_q != 0.0:
        n_rel = np.arange(L)[None, :] - delta[:, None]
        sig = sig * np.exp(-2j * np.pi * scenario.f_q * n_rel / cfg.n_d)

    snr = 10.0 ** (scenario.snr_db / 10.0)
    noise_var = tap_power * SIGNAL_POWER / snr
    noise = np.sqrt(noise_var / 2.0)[:, None] * (g[..., 0] + 1j * g[..., 1])
    samples = np.where(labels[:, None] == H1, sig, 0.0) + noise
    est_noise_var = noise_var * 10.0 ** (eps / 10.0)
    return FrameBatch(cfg, scenario, samples, labels, noise_var, est_noise_var,
                      np.full(n, float(scenario.snr_db)), delta)


def synthesize_frame(cfg: OfdmConfig, scenario: ImpairmentScenario, hypothesis: int,
                     rng: np.random.Generator, taps: ChannelTaps | None = None,
                     normalize_taps: bool = True) -> ReceivedFrame:
    if hypothesis not in (H0, H1):
        raise ValueError("hypothesis must be H0 or H1")
    t = None if taps is None else taps.taps
    return synthesize_batch(cfg, scenario, [hypothesis], rng, taps=t,
                            normalize_taps=normalize_taps).frame(0)


def signal_component(cfg: OfdmConfig, scenario: ImpairmentScenario, n: int,
                     rng: np.random.Generator, **kw) -> np.ndarray:
    """Noise-free H1 samples matching :func:`synthesize_batch`'s draws."""
    huge = replace(scenario, snr_db=400.0)
    return synthesize_batch(cfg, huge, np.ones(n), rng, **kw).samples
