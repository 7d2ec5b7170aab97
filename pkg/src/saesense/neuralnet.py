"""Tied-weight stacked autoencoder with a softmax head, in plain numpy.

Training follows the usual two phases:

1. greedy layer-wise pretraining, each autoencoder minimising the binary
   cross-entropy between its input and its sigmoid reconstruction, with
   the decoder weights tied to the transpose of the encoder weights;
2. supervised fine-tuning of the whole encoder stack plus a two-class
   softmax (logistic-regression) head by back-propagating the negative
   log-likelihood.

Both phases use plain mini-batch gradient descent. Inputs must already
be min-max scaled to [0, 1] (see :mod:`saesense.features`).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .features import Scaler, apply_scaler
from .signal import H0, H1

MODEL_FORMAT = "saesense-model"
MODEL_VERSION = 1
DEFAULT_HIDDEN = (100, 50)


def sigmoid(x):
    """Logistic function, overflow-free for large |x|."""
    out = expit(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


@dataclass
class AeLayer:
    """Encoder weights ``W`` (K x P), hidden bias ``b`` (K) and reconstruction bias ``b_rec`` (P).

    The decoder is ``W.T`` by construction; there is no separate decoder
    matrix that could drift.
    """

    W: np.ndarray
    b: np.ndarray
    b_rec: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.b_rec = np.asarray(self.b_rec, dtype=float).reshape(-1)
        K, P = self.W.shape
        if self.b.size != K or self.b_rec.size != P:
            raise ValueError(f"bias sizes {self.b.size}/{self.b_rec.size} do not fit W {self.W.shape}")

    @classmethod
    def init(cls, n_in: int, n_hidden: int, rng: np.random.Generator,
             gain: float = 1.0) -> "AeLayer":
        r = gain * np.sqrt(6.0 / (n_in + n_hidden))
        return cls(rng.uniform(-r, r, size=(n_hidden, n_in)), np.zeros(n_hidden), np.zeros(n_in))

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.W.shape[0]

    @property
    def decoder(self) -> np.ndarray:
        return self.W.T

    def encode(self, v: np.ndarray) -> np.ndarray:
        return sigmoid(v @ self.W.T + self.b)

    def copy(self) -> "AeLayer":
        return AeLayer(self.W.copy(), self.b.copy(), self.b_rec.copy())


def _check_dim(v: np.ndarray, n: int) -> None:
    if v.shape[-1] != n:
        raise ValueError(f"input has {v.shape[-1]} features, layer expects {n}")


def ae_forward(layer: AeLayer, v: np.ndarray):
    """Hidden activations and tied-weight reconstruction of ``v``."""
    v = np.asarray(v, dtype=float)
    _check_dim(v, layer.n_in)
    hidden = layer.encode(v)
    return hidden, sigmoid(hidden @ layer.W + layer.b_rec)


def ae_loss(v: np.ndarray, r: np.ndarray) -> float:
    """Binary cross-entropy summed over features, averaged over rows for a batch.

    Minimised at ``r == v``; the sign makes the loss non-negative.
    """
    v = np.asarray(v, dtype=float)
    r = np.asarray(r, dtype=float)
    per_row = -np.sum(v * np.log(r) + (1.0 - v) * np.log1p(-r), axis=-1)
    return float(np.mean(per_row))


def ae_gradients(layer: AeLayer, batch: np.ndarray):
    """Mean reconstruction loss over ``batch`` and its gradients (dW, db, db_rec)."""
    V = np.atleast_2d(np.asarray(batch, dtype=float))
    H, R = ae_forward(layer, V)
    loss = ae_loss(V, R)
    dZr = (R - V) / V.shape[0]
    dH = dZr @ layer.W.T
    dZh = dH * H * (1.0 - H)
    # tied weights: decoder path (H^T dZr) plus encoder path (dZh^T V)
    dW = H.T @ dZr + dZh.T @ V
    return loss, dW, dZh.sum(axis=0), dZr.sum(axis=0)


def ae_pretrain_step(layer: AeLayer, batch: np.ndarray, lr: float):
    """One gradient-descent update of ``layer`` in place; returns (layer, batch loss before the step)."""
    if len(batch) == 0:
        raise ValueError("empty pretraining batch")
    loss, dW, db, db_rec = ae_gradients(layer, batch)
    if not (np.isfinite(loss) and np.all(np.isfinite(dW))):
        raise FloatingPointError(f"non-finite pretraining gradient (loss={loss})")
    layer.W -= lr * dW
    layer.b -= lr * db
    layer.b_rec -= lr * db_rec
    return layer, loss


@dataclass
class TrainConfig:
    n_pr: int = 5000
    n_f: int = 5000
    lr_pretrain: float = 0.01
    lr_finetune: float = 0.3
    batch_size: int = 100
    seed: int = 0
    init_gain: float = 8.0

    def __post_init__(self):
        for name in ("n_pr", "n_f", "batch_size"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.lr_pretrain < 0 or self.lr_finetune < 0:
            raise ValueError("learning rates must be non-negative")


class _Batches:
    """Endless reshuffled mini-batch index stream."""

    def __init__(self, n: int, size: int, rng: np.random.Generator):
        self.n, self.size, self.rng = n, min(size, n), rng
        self._perm, self._pos = rng.permutation(n), 0

    def next(self) -> np.ndarray:
        if self._pos + self.size > self.n:
            self._perm, self._pos = self.rng.permutation(self.n), 0
        idx = self._perm[self._pos:self._pos + self.size]
        self._pos += self.size
        return idx


@dataclass
class SaeModel:
    layers: list
    head_w: np.ndarray
    head_b: np.ndarray
    scaler: Scaler | None = None
    variant: str = "ss"
    snr_bin: float | None = None
    decision_threshold: float = 0.5
    history: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.head_w = np.asarray(self.head_w, dtype=float)
        self.head_b = np.asarray(self.head_b, dtype=float).reshape(-1)
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.n_in != prev.n_hidden:
                raise ValueError("layer dimensions do not chain")
        if self.head_w.shape != (2, self.layers[-1].n_hidden) or self.head_b.size != 2:
            raise ValueError("head must map the last hidden layer to two classes")
        if self.scaler is not None and self.scaler.dim != self.n_input:
            raise ValueError("scaler dimension does not match the first layer")
        if not 0.0 < self.decision_threshold < 1.0:
            raise ValueError("decision_threshold must lie in (0, 1)")

    @property
    def n_input(self) -> int:
        return self.layers[0].n_in

    @property
    def dims(self) -> list:
        return [self.n_input] + [l.n_hidden for l in self.layers]

    def copy(self) -> "SaeModel":
        return replace(self, layers=[l.copy() for l in self.layers], head_w=self.head_w.copy(),
                       head_b=self.head_b.copy(), history={})

    def scale(self, features: np.ndarray) -> np.ndarray:
        if self.scaler is None:
            raise ValueError("model has no fitted scaler")
        return apply_scaler(self.scaler, features)


def build_model(n_input: int, hidden: Sequence[int] = DEFAULT_HIDDEN,
                rng: np.random.Generator | None = None, init_gain: float = 1.0, **kw) -> SaeModel:
    """Freshly initialised network (encoder weights random, biases and head zero)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    dims = [n_input, *hidden]
    layers = [AeLayer.init(p, k, rng, init_gain) for p, k in zip(dims, dims[1:])]
    return SaeModel(layers, np.zeros((2, dims[-1])), np.zeros(2), **kw)


def pretrain(model: SaeModel, features: np.ndarray, cfg: TrainConfig,
             rng: np.random.Generator | None = None) -> list:
    """Greedy layer-wise pretraining; each layer trains on the previous layer's codes.

    Updates ``model.layers`` in place and also returns them. Per-layer
    loss curves land in ``model.history['pretrain']``.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    h = np.asarray(features, dtype=float)
    curves = []
    for layer in model.layers:
        _check_dim(h, layer.n_in)
        batches = _Batches(len(h), cfg.batch_size, rng)
        losses = np.empty(cfg.n_pr)
        for t in range(cfg.n_pr):
            _, losses[t] = ae_pretrain_step(layer, h[batches.next()], cfg.lr_pretrain)
        curves.append(losses)
        h = layer.encode(h)
    model.history["pretrain"] = curves
    return model.layers


def encode(model: SaeModel, x: np.ndarray) -> np.ndarray:
    """Final hidden-layer activations for scaled inputs."""
    h = np.asarray(x, dtype=float)
    _check_dim(h, model.n_input)
    for layer in model.layers:
        h = layer.encode(h)
    return h


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def posterior(model: SaeModel, x: np.ndarray) -> np.ndarray:
    """Class probabilities (p_H0, p_H1) for scaled input(s)."""
    x = np.asarray(x, dtype=float)
    return _softmax(encode(model, x) @ model.head_w.T + model.head_b)


def finetune_gradients(model: SaeModel, x: np.ndarray, labels: np.ndarray):
    """Mean negative log-likelihood and gradients for every layer and the head.

    Returns ``(loss, [(dW, db) per layer], dW_head, db_head)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(labels).astype(int).reshape(-1)
    acts = [x]
    for layer in model.layers:
        acts.append(layer.encode(acts[-1]))
    z = acts[-1] @ model.head_w.T + model.head_b
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = x.shape[0]
    loss = float(-logp[np.arange(n), y].mean())
    dz = np.exp(logp)
    dz[np.arange(n), y] -= 1.0
    dz /= n
    dW_head = dz.T @ acts[-1]
    db_head = dz.sum(axis=0)
    grads = []
    delta = dz @ model.head_w
    for i in range(len(model.layers) - 1, -1, -1):
        h = acts[i + 1]
        dpre = delta * h * (1.0 - h)
        grads.append((dpre.T @ acts[i], dpre.sum(axis=0)))
        delta = dpre @ model.layers[i].W
    grads.reverse()
    return loss, grads, dW_head, db_head


def fine_tune(model: SaeModel, features: np.ndarray, labels, cfg: TrainConfig,
              rng: np.random.Generator | None = None) -> SaeModel:
    """Supervised back-propagation through the head and every encoder layer, in place."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed + 1)
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels).astype(int).reshape(-1)
    if not np.all(np.isin(y, (H0, H1))):
        raise ValueError("labels must be 0 (H0) or 1 (H1)")
    batches = _Batches(len(x), cfg.batch_size, rng)
    lr = cfg.lr_finetune
    losses = np.empty(cfg.n_f)
    for t in range(cfg.n_f):
        idx = batches.next()
        loss, grads, dWh, dbh = finetune_gradients(model, x[idx], y[idx])
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite fine-tuning loss at step {t}")
        for layer, (dW, db) in zip(model.layers, grads):
            layer.W -= lr * dW
            layer.b -= lr * db
        model.head_w -= lr * dWh
        model.head_b -= lr * dbh
        losses[t] = loss
    model.history["finetune"] = losses
    return model


def train(features: np.ndarray, labels, cfg: TrainConfig, hidden: Sequence[int] = DEFAULT_HIDDEN,
          variant: str = "ss", snr_bin: float | None = None) -> SaeModel:
    """Fit a scaler on raw ``features``, then pretrain and fine-tune a fresh network."""
    from .features import fit_scaler

    rng = np.random.default_rng(cfg.seed)
    scaler = fit_scaler(features)
    x = apply_scaler(scaler, features)
    model = build_model(x.shape[1], hidden, rng, cfg.init_gain, scaler=scaler, variant=variant, snr_bin=snr_bin)
    pretrain(model, x, cfg, rng)
    fine_tune(model, x, labels, cfg, rng)
    return model


def _require_scaled(x: np.ndarray) -> None:
    if x.size and (np.min(x) < 0.0 or np.max(x) > 1.0 or not np.all(np.isfinite(x))):
        raise ValueError("classifier input must be scaled to [0, 1]; apply the model's scaler first")


def calibrate_decision_threshold(model: SaeModel, h0_features: np.ndarray, target_pfa: float) -> float:
    """Set the model's posterior threshold to the (1 - PFA) quantile of p_H1 over scaled H0 inputs."""
    if not 0.0 < target_pfa < 1.0:
        raise ValueError("target_pfa must lie in (0, 1)")
    _require_scaled(np.asarray(h0_features))
    p1 = posterior(model, h0_features)[:, 1]
    thr = float(np.quantile(p1, 1.0 - target_pfa))
    tiny = np.finfo(float).eps
    model.decision_threshold = min(max(thr, tiny), 1.0 - tiny)
    return model.decision_threshold


def decide(model: SaeModel, x: np.ndarray, mode: str = "pfa_calibrated") -> np.ndarray:
    """Vectorised decisions (0 = H0, 1 = H1) for scaled inputs.

    ``argmax`` declares H1 when p_H1 >= 0.5 (ties go to H1);
    ``pfa_calibrated`` when p_H1 exceeds the calibrated threshold.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _require_scaled(x)
    p1 = posterior(model, x)[:, 1]
    if mode == "argmax":
        return (p1 >= 0.5).astype(np.int8)
    if mode == "pfa_calibrated":
        return (p1 > model.decision_threshold).astype(np.int8)
    raise ValueError(f"unknown classification mode {mode!r}")


def classify(model: SaeModel, x: np.ndarray, mode: str = "pfa_calibrated"):
    """Decision report for one scaled feature vector."""
    from .baselines import DetectionReport

    x = np.asarray(x, dtype=float)
    p1 = float(posterior(model, np.atleast_2d(x))[0, 1])
    thr = 0.5 if mode == "argmax" else model.decision_threshold
    return DetectionReport(p1, thr, int(decide(model, x, mode)[0]))


def export_hidden(model: SaeModel, features: np.ndarray) -> np.ndarray:
    """Last-hidden-layer activations, one row per scaled input."""
    return encode(model, np.atleast_2d(features))


# -- persistence ----------------------------------------------------------


def _fmt(a: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(a).reshape(-1))


def dumps_model(model: SaeModel) -> str:
    out = [
        f"format={MODEL_FORMAT}",
        f"version={MODEL_VERSION}",
        f"variant={model.variant}",
        f"dims={' '.join(str(d) for d in model.dims)}",
        f"snr_bin={'' if model.snr_bin is None else repr(float(model.snr_bin))}",
        f"decision_threshold={model.decision_threshold!r}",
        f"scaler_min={_fmt(model.scaler.lo) if model.scaler is not None else ''}",
        f"scaler_max={_fmt(model.scaler.hi) if model.scaler is not None else ''}",
    ]
    for i, layer in enumerate(model.layers):
        out += [f"[layer {i}]", f"W={_fmt(layer.W)}", f"b={_fmt(layer.b)}", f"b_rec={_fmt(layer.b_rec)}"]
    out += ["[head]", f"W={_fmt(model.head_w)}", f"b={_fmt(model.head_b)}"]
    return "\n".join(out) + "\n"


def loads_model(text: str) -> SaeModel:
    header, sections, current = {}, [], None
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("["):
            current = {}
            sections.append((line.strip("[]"), current))
            continue
        key, _, val = line.partition("=")
        (header if current is None else current)[key] = val
    if header.get("format") != MODEL_FORMAT:
        raise ValueError("not a model file")
    if int(header["version"]) != MODEL_VERSION:
        raise ValueError(f"unsupported model file version {header['version']}")
    dims = [int(d) for d in header["dims"].split()]
    arr = lambda s: np.array([float(v) for v in s.split()])
    layers = []
    head = None
    for name, sec in sections:
        if name.startswith("layer"):
            i = len(layers)
            layers.append(AeLayer(arr(sec["W"]).reshape(dims[i + 1], dims[i]), arr(sec["b"]),
                                  arr(sec["b_rec"])))
        elif name == "head":
            head = (arr(sec["W"]).reshape(2, dims[-1]), arr(sec["b"]))
    scaler = Scaler(arr(header["scaler_min"]), arr(header["scaler_max"])) if header["scaler_min"] else None
    return SaeModel(layers, head[0], head[1], scaler=scaler, variant=header["variant"],
                    snr_bin=float(header["snr_bin"]) if header["snr_bin"] else None,
                    decision_threshold=float(header["decision_threshold"]))


def save_model(model: SaeModel, path) -> None:
    Path(path).write_text(dumps_model(model))


def load_model(path) -> SaeModel:
    return loads_model(Path(path).read_text())
