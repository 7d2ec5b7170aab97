"""Real-valued network inputs built from received frames.

Variants:

``ss``     time-domain samples, real/imag interleaved (length 2M(N_c+N_d))
``tf``     the ``ss`` vector followed by the interleaved unitary DFT of the
           whole frame (length 4M(N_c+N_d))
``ss-af``, ``tf-af``
           the base vector with [ED, CP, CM] test statistics appended
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import baselines
from .dft import dft
from .signal import FrameBatch, OfdmConfig, ReceivedFrame

__all__ = ["VARIANTS", "interleave_time", "deinterleave", "build_tf_input", "augment",
           "extract", "feature_length", "Scaler", "fit_scaler", "apply_scaler", "dft",
           "export_csv"]

VARIANTS = ("ss", "tf", "ss-af", "tf-af")


def _samples(frame) -> np.ndarray:
    if isinstance(frame, (FrameBatch, ReceivedFrame)):
        return frame.samples
    return np.asarray(frame, dtype=complex)


def interleave(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return np.stack([z.real, z.imag], axis=-1).reshape(*z.shape[:-1], 2 * z.shape[-1])


def deinterleave(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    pairs = v.reshape(*v.shape[:-1], v.shape[-1] // 2, 2)
    return pairs[..., 0] + 1j * pairs[..., 1]


def interleave_time(frame) -> np.ndarray:
    """Re, Im of every sample in block order."""
    return interleave(_samples(frame))


def build_tf_input(frame, per_block: bool = False, cfg: OfdmConfig | None = None) -> np.ndarray:
    """Time vector followed by the interleaved spectrum of the frame.

    By default one DFT spans the whole M-block frame. ``per_block=True``
    transforms each (CP-inclusive) block separately instead and needs ``cfg``.
    """
    y = _samples(frame)
    if per_block:
        if cfg is None:
            raise ValueError("per-block transform needs the OFDM config")
        Y = dft(y.reshape(*y.shape[:-1], cfg.m, cfg.block_len)).reshape(y.shape)
    else:
        Y = dft(y)
    return np.concatenate([interleave(y), interleave(Y)], axis=-1)


def augment(frame, base: np.ndarray, cfg: OfdmConfig, assumed_snr) -> np.ndarray:
    """Append the ED, CP and CM statistics of ``frame`` to ``base``."""
    y = _samples(frame)
    extra = np.stack([
        np.atleast_1d(baselines.ed_statistic(y)),
        np.atleast_1d(baselines.cp_statistic(y, cfg, assumed_snr)),
        np.atleast_1d(baselines.cm_statistic(y, cfg)),
    ], axis=-1)
    if y.ndim == 1:
        extra = extra[0]
    return np.concatenate([np.asarray(base, dtype=float), extra], axis=-1)


def feature_length(variant: str, cfg: OfdmConfig) -> int:
    base = {"ss": 2, "tf": 4}[variant.split("-")[0]] * cfg.frame_len
    return base + 3 if variant.endswith("-af") else base


def extract(batch: FrameBatch, variant: str) -> np.ndarray:
    """Feature matrix (n_frames, feature_length) for a batch.

    The augmented variants evaluate the CP statistic at each frame's
    nominal SNR, the same prior knowledge the CP baseline is granted.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown feature variant {variant!r}")
    base = variant.split("-")[0]
    x = interleave_time(batch) if base == "ss" else build_tf_input(batch)
    if variant.endswith("-af"):
        x = augment(batch, x, batch.cfg, 10.0 ** (batch.snr_db / 10.0))
    return x


@dataclass
class Scaler:
    """Per-dimension min-max map onto [0, 1], clamped outside the fitted range."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if self.lo.shape != self.hi.shape:
            raise ValueError("scaler bounds differ in shape")
        if np.any(self.hi < self.lo):
            raise ValueError("scaler max below min")

    @property
    def dim(self) -> int:
        return self.lo.size

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return apply_scaler(self, v)


def fit_scaler(features) -> Scaler:
    x = np.atleast_2d(np.asarray(features, dtype=float))
    if x.shape[0] == 0:
        raise ValueError("cannot fit a scaler on an empty training set")
    return Scaler(x.min(axis=0), x.max(axis=0))


def apply_scaler(scaler: Scaler, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != scaler.dim:
        raise ValueError(f"feature length {v.shape[-1]} does not match scaler ({scaler.dim})")
    span = scaler.hi - scaler.lo
    flat = span == 0
    out = (v - scaler.lo) / np.where(flat, 1.0, span)
    out = np.where(flat, 0.5, out)
    return np.clip(out, 0.0, 1.0)


def export_csv(path, features: np.ndarray, labels) -> None:
    """One row per feature vector with the label as the last column."""
    features = np.atleast_2d(features)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i}" for i in range(features.shape[1])] + ["label"])
        for row, lab in zip(features, np.asarray(labels).reshape(-1)):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])
