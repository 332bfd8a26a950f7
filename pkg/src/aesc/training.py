"""Losses, training loops and compression-ratio accounting."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .data import BatchIterator, Dataset, batches
from .models import (
    IMAGE_SHAPES,
    AutoencoderSpec,
    Classifier,
    build_autoencoder,
    build_classifier,
    classify,
    penultimate_features,
)
from .nn import Adam, ParamSet

log = logging.getLogger(__name__)

BCE_CLAMP = 1e-12


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, what: str = "loss"):
        super().__init__(f"training diverged at epoch {epoch}: non-finite {what}")
        self.epoch = epoch


@dataclass(frozen=True)
class LossConfig:
    gamma: float
    reconstruction: str = "mse"  # "mse" | "bce"

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.reconstruction not in ("mse", "bce"):
            raise ValueError(f"unknown reconstruction loss {self.reconstruction!r}")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0


DEFAULT_LOSS = {"mnist": LossConfig(0.5, "bce"), "cifar10": LossConfig(0.1, "mse")}
DEFAULT_TRAIN = {
    "mnist": TrainConfig(lr=1e-3, batch_size=256, max_epochs=100),
    "cifar10": TrainConfig(lr=1e-3, batch_size=128, max_epochs=150),
}


# ------------------------------------------------------------------ losses


def _same_shape(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def loss_mse(s, s_hat) -> float:
    s, s_hat = _same_shape(s, s_hat)
    return float(np.mean((s.astype(np.float64) - s_hat) ** 2))


def loss_bce(s, s_hat) -> float:
    """Mean binary cross-entropy; log arguments clamped at 1e-12."""
    s, s_hat = _same_shape(s, s_hat)
    if np.any(s_hat < 0) or np.any(s_hat > 1):
        raise ValueError("BCE needs reconstructions inside [0, 1]")
    p = np.clip(s_hat.astype(np.float64), BCE_CLAMP, 1 - BCE_CLAMP)
    s = s.astype(np.float64)
    return float(-np.mean(s * np.log(p) + (1 - s) * np.log1p(-p)))


def reconstruction_loss(s, s_hat, kind: str) -> float:
    return loss_bce(s, s_hat) if kind == "bce" else loss_mse(s, s_hat)


def semantic_loss_and_grad(feat_s: np.ndarray, s_hat: np.ndarray, clf: Classifier, need_grad: bool = True):
    """MSE between precomputed M(S) and M(S_hat), plus d/dS_hat (classifier frozen)."""
    if not clf.trained:
        raise RuntimeError("semantic loss needs a trained classifier")
    net, k = clf.network, clf.penultimate_index
    if need_grad:
        feat_hat, cache = net.forward(clf.params, s_hat, keep=True, upto=k)
    else:
        feat_hat = net.forward(clf.params, s_hat, upto=k)
    diff = feat_hat.astype(np.float64) - feat_s
    loss = float(np.mean(diff**2))
    if not need_grad:
        return loss, None
    dfeat = (2.0 / diff.size) * diff
    d_s_hat, _ = net.backward(clf.params, cache, dfeat.astype(s_hat.dtype), need_param_grads=False)
    return loss, d_s_hat


def loss_semantic(s, s_hat, clf: Classifier) -> float:
    s, s_hat = _same_shape(s, s_hat)
    return semantic_loss_and_grad(penultimate_features(s, clf), s_hat, clf, need_grad=False)[0]


def loss_combined(s, s_hat, config: LossConfig, clf: Classifier) -> float:
    """gamma * L_SE + (1 - gamma) * L_recon."""
    rec = reconstruction_loss(s, s_hat, config.reconstruction)
    if config.gamma == 0.0:
        return rec
    return config.gamma * loss_semantic(s, s_hat, clf) + (1 - config.gamma) * rec


def combined_grads(s, s_hat, config: LossConfig, clf: Classifier, feat_s=None):
    """Per-term gradients w.r.t. S_hat: returns dict(recon=..., semantic=..., total=...)."""
    s, s_hat = _same_shape(s, s_hat)
    n = s.size
    if config.reconstruction == "bce":
        p = np.clip(s_hat.astype(np.float64), BCE_CLAMP, 1 - BCE_CLAMP)
        g_rec = (p - s) / (p * (1 - p)) / n
    else:
        g_rec = 2.0 * (s_hat.astype(np.float64) - s) / n
    if feat_s is None:
        feat_s = penultimate_features(s, clf)
    _, g_sem = semantic_loss_and_grad(feat_s, s_hat, clf)
    g_sem = g_sem.astype(np.float64)
    return {"recon": g_rec, "semantic": g_sem, "total": config.gamma * g_sem + (1 - config.gamma) * g_rec}


# Ratios usually quoted next to the CIFAR-10 code sizes. They do not follow from
# the pixel/code count (which gives 2.67, 7.11, 10.67); outputs always carry the
# computed value and this table is kept only to flag the mismatch.
CIFAR_NOMINAL_RATIOS = {32: 3.0, 12: 6.0, 8: 12.0}


def compression_ratio(dataset: str, z_dims: int) -> float:
    """Pixel count over semantic-code scalar count."""
    c, h, w = IMAGE_SHAPES[dataset]
    if dataset == "mnist":
        return c * h * w / z_dims
    return c * h * w / (z_dims * 6 * 6)


# --------------------------------------------------------------- train log


@dataclass
class TrainLog:
    rows: list[tuple[int, float, float, float, float]] = field(default_factory=list)
    best_epoch: int = 0

    COLUMNS = ("epoch", "train_recon", "train_sem", "val_recon", "val_sem")

    def add(self, epoch, train_recon, train_sem, val_recon, val_sem):
        vals = (train_recon, train_sem, val_recon, val_sem)
        if not all(math.isfinite(v) for v in vals):
            raise TrainingDiverged(epoch)
        self.rows.append((epoch, *vals))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for r in self.rows:
                w.writerow([r[0]] + [repr(float(v)) for v in r[1:]])

    @classmethod
    def from_csv(cls, path) -> "TrainLog":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if tuple(rows[0]) != cls.COLUMNS:
            raise ValueError(f"{path}: unexpected header {rows[0]}")
        return cls([(int(r[0]), *map(float, r[1:])) for r in rows[1:]])

    def val_combined(self, gamma: float) -> list[float]:
        return [gamma * r[4] + (1 - gamma) * r[3] for r in self.rows]


# ---------------------------------------------------------- autoencoders


def _ae_step_grads(enc_net, dec_net, params, x, feat_x, cfg: LossConfig, clf):
    """Forward/backward for one batch; returns (recon loss, semantic loss, grads)."""
    enc_p, dec_p = params.strip("enc."), params.strip("dec.")
    code, enc_cache = enc_net.forward(enc_p, x, keep=True)
    s_hat, dec_cache = dec_net.forward(dec_p, code, keep=True)
    n = x.size
    s64 = x.astype(np.float64)
    p = s_hat.astype(np.float64)
    sig_prime = p * (1 - p)
    if cfg.reconstruction == "bce":
        rec = loss_bce(x, s_hat)
        # fused sigmoid + BCE: gradient w.r.t. the pre-activation
        d_logits = (1 - cfg.gamma) * (p - s64) / n
    else:
        rec = loss_mse(x, s_hat)
        d_logits = (1 - cfg.gamma) * 2.0 * (p - s64) / n * sig_prime
    sem = 0.0
    if clf is not None:
        sem, d_sem = semantic_loss_and_grad(feat_x, s_hat, clf, need_grad=cfg.gamma > 0)
        if cfg.gamma > 0:
            d_logits = d_logits + cfg.gamma * d_sem.astype(np.float64) * sig_prime
    d_code, g_dec = dec_net.backward(dec_p, dec_cache, d_logits.astype(s_hat.dtype), skip_last_activation=True)
    _, g_enc = enc_net.backward(enc_p, enc_cache, d_code, need_input_grad=False)
    return rec, sem, ParamSet(list(g_enc.prefixed("enc.").items()) + list(g_dec.prefixed("dec.").items()))


def evaluate_autoencoder(spec: AutoencoderSpec, enc, dec, ds: Dataset, cfg: LossConfig, clf, feats=None, batch_size=500):
    """Mean (reconstruction, semantic) loss over a split."""
    rec_sum = sem_sum = 0.0
    for i in range(0, len(ds), batch_size):
        x = ds.images[i : i + batch_size]
        s_hat = spec.decoder.forward(dec, spec.encoder.forward(enc, x))
        w = len(x) / len(ds)
        rec_sum += w * reconstruction_loss(x, s_hat, cfg.reconstruction)
        if clf is not None:
            f = feats[i : i + batch_size] if feats is not None else penultimate_features(x, clf)
            sem_sum += w * semantic_loss_and_grad(f, s_hat, clf, need_grad=False)[0]
    return rec_sum, sem_sum


def train_autoencoder(
    train: Dataset,
    val: Dataset,
    z_dims: int,
    clf: Classifier | None,
    loss_cfg: LossConfig,
    train_cfg: TrainConfig,
    log_path=None,
    on_epoch: Callable[[int, tuple], None] | None = None,
):
    """Adam training with patience early stopping on the validation combined loss.

    Returns (encoder params, decoder params, spec, TrainLog) with the
    best-epoch parameters.
    """
    if loss_cfg.gamma > 0 and (clf is None or not clf.trained):
        raise RuntimeError("a trained classifier is required when gamma > 0")
    enc, dec, spec = build_autoencoder(train.name, z_dims, train_cfg.seed)
    params = ParamSet(list(enc.prefixed("enc.").items()) + list(dec.prefixed("dec.").items()))
    opt = Adam(lr=train_cfg.lr)
    it = BatchIterator(train_cfg.batch_size, seed=train_cfg.seed)
    feats_train = penultimate_features(train.images, clf).astype(np.float64) if clf is not None else None
    feats_val = penultimate_features(val.images, clf).astype(np.float64) if clf is not None else None

    tlog = TrainLog()
    best, best_loss, since = params.copy(), math.inf, 0
    for epoch in range(1, train_cfg.max_epochs + 1):
        rec_acc = sem_acc = 0.0
        order = it.epoch_order(len(train), epoch)
        for start in range(0, len(train), it.batch_size):
            bidx = order[start : start + it.batch_size]
            x = train.images[bidx]
            f = feats_train[bidx] if feats_train is not None else None
            rec, sem, grads = _ae_step_grads(spec.encoder, spec.decoder, params, x, f, loss_cfg, clf)
            if not (math.isfinite(rec) and math.isfinite(sem)):
                raise TrainingDiverged(epoch)
            try:
                opt.step(params, grads)
            except FloatingPointError:
                raise TrainingDiverged(epoch, "gradient") from None
            rec_acc += rec * len(x)
            sem_acc += sem * len(x)
        v_rec, v_sem = evaluate_autoencoder(
            spec, params.strip("enc."), params.strip("dec."), val, loss_cfg, clf, feats_val
        )
        row = (rec_acc / len(train), sem_acc / len(train), v_rec, v_sem)
        tlog.add(epoch, *row)
        if on_epoch:
            on_epoch(epoch, row)
        log.info("epoch %d recon %.5f sem %.5f | val recon %.5f sem %.5f", epoch, *row)
        v_total = loss_cfg.gamma * v_sem + (1 - loss_cfg.gamma) * v_rec
        if v_total < best_loss:
            best_loss, best, since = v_total, params.copy(), 0
            tlog.best_epoch = epoch
        else:
            since += 1
            if since >= train_cfg.patience:
                break
    if log_path is not None:
        tlog.to_csv(log_path)
    return best.strip("enc."), best.strip("dec."), spec, tlog


# ------------------------------------------------------------- classifier


def _softmax_xent(logit, labels):
    z = logit.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -float(np.mean(logp[np.arange(len(labels)), labels]))
    grad = np.exp(logp)
    grad[np.arange(len(labels)), labels] -= 1.0
    return loss, grad / len(labels)


def _mean_xent(net, params, ds: Dataset, batch_size: int = 500) -> float:
    total = 0.0
    for i in range(0, len(ds), batch_size):
        y = ds.labels[i : i + batch_size]
        total += _softmax_xent(net.forward(params, ds.images[i : i + batch_size]), y)[0] * len(y)
    return total / len(ds)


def accuracy(clf: Classifier, ds: Dataset) -> float:
    return float(np.mean(classify(ds.images, clf) == ds.labels))


def train_classifier(train: Dataset, val: Dataset, test: Dataset, cfg: TrainConfig, on_epoch=None):
    """Cross-entropy training, early-stopped on validation loss; returns (classifier, test accuracy)."""
    clf = build_classifier(train.name, cfg.seed)
    net, params = clf.network, clf.params
    opt = Adam(lr=cfg.lr)
    it = BatchIterator(cfg.batch_size, seed=cfg.seed + 7)
    best, best_loss, since = params.copy(), math.inf, 0
    for epoch in range(1, cfg.max_epochs + 1):
        for x, y in batches(train, it, epoch):
            out, cache = net.forward(params, x, keep=True)
            loss, g = _softmax_xent(out, y)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch)
            _, grads = net.backward(params, cache, g.astype(np.float32), need_input_grad=False)
            try:
                opt.step(params, grads)
            except FloatingPointError:
                raise TrainingDiverged(epoch, "gradient") from None
        vloss = _mean_xent(net, params, val)
        if on_epoch:
            on_epoch(epoch, vloss)
        log.info("classifier epoch %d val xent %.4f", epoch, vloss)
        if vloss < best_loss:
            best_loss, best, since = vloss, params.copy(), 0
        else:
            since += 1
            if since >= cfg.patience:
                break
    clf.params = best
    clf.trained = True
    return clf, accuracy(clf, test)
