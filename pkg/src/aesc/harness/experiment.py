"""Training and SNR-sweep experiments behind the CLI."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from ..data import DataError, load_dataset
from ..metrics import evaluate
from ..models import (AutoencoderSpec, MODEL_IDS, autoencoder_spec, decode, encode, file_checksum,
                      load_autoencoder, load_classifier, save_autoencoder, save_classifier)
from ..nn import ParamSet
from ..phy.channel import ChannelConfig
from ..phy.ldpc import make_code
from ..phy.link import transmit
from ..training import (TrainConfig, compression_ratio, train_autoencoder, train_classifier)
from .baselines import CodecUnavailable, ExternalCodec, baseline_direct, baseline_external_codec
from .config import ExperimentConfig

log = logging.getLogger(__name__)

SCHEME_IDS = {"aesc_i": 1, "direct": 2, "external_codec": 3}


class ModelError(RuntimeError):
    """Trained models missing or inconsistent with the configuration."""


@dataclass
class ResultRow:
    dataset: str
    z_dims: int  # 0 for schemes without a semantic code
    compression_ratio: float
    channel: str
    snr_db: float
    scheme: str
    psnr: float
    ssim: float
    rr_ratio: float
    ss_index: float
    outage_rate: float
    pre_ber: float
    post_ber: float
    bits_per_image: float  # everything on the air before channel coding, headers included

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return f"{v:.6g}"
    return str(v)


def rows_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ResultRow.columns())
    for r in rows:
        w.writerow([fmt(v) for v in astuple(r)])
    return buf.getvalue()


def read_results(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def classifier_path(model_dir, dataset: str) -> Path:
    return Path(model_dir) / f"{dataset}_classifier.aesm"


# ------------------------------------------------------------------- train


def cmd_train(cfg: ExperimentConfig, retrain_classifier: bool = False) -> dict:
    """Train (or reuse) the classifier, then one autoencoder per z_dims; returns file checksums."""
    model_dir = Path(cfg.model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    train = load_dataset(cfg.dataset, cfg.data_dir, "train", seed=cfg.seed)
    val = load_dataset(cfg.dataset, cfg.data_dir, "val", seed=cfg.seed)
    if cfg.train.train_subset:
        train = train.subset(cfg.train.train_subset)
    for z in cfg.z_dims:
        autoencoder_spec(cfg.dataset, z)  # reject bad z before spending time on training

    sums: dict[str, str] = {}
    cpath = classifier_path(model_dir, cfg.dataset)
    if cpath.exists() and not retrain_classifier:
        clf = load_classifier(cpath)
        log.info("reusing classifier %s", cpath)
    else:
        test = load_dataset(cfg.dataset, cfg.data_dir, "test", seed=cfg.seed)
        ccfg = TrainConfig(lr=cfg.train.lr, batch_size=cfg.train.classifier_batch_size,
                           max_epochs=cfg.train.classifier_epochs, patience=cfg.train.classifier_patience,
                           seed=cfg.seed)
        clf, acc = train_classifier(train, val, test, ccfg)
        log.info("classifier test accuracy %.4f", acc)
        save_classifier(cpath, clf, acc)
    sums[cpath.name] = file_checksum(cpath)

    loss_cfg, train_cfg = cfg.loss_config(), cfg.train_config()
    for z in cfg.z_dims:
        log.info("training %s autoencoder z=%d (Cr %.2f)", cfg.dataset, z, compression_ratio(cfg.dataset, z))
        enc, dec, spec, tlog = train_autoencoder(
            train, val, z, clf, loss_cfg, train_cfg, log_path=model_dir / f"{cfg.dataset}_z{z}_trainlog.csv"
        )
        log.info("z=%d best epoch %s", z, tlog.best_epoch)
        sums.update(save_autoencoder(model_dir, spec, enc, dec))
    (model_dir / "checksums.json").write_text(json.dumps(sums, indent=2, sort_keys=True) + "\n")
    return sums


# --------------------------------------------------------------------- run


def receiver_decode(l_hat: np.ndarray, beta_hat: np.ndarray, spec: AutoencoderSpec) -> np.ndarray:
    """Receiver side: the decoder is rebuilt from the received parameters only."""
    params = spec.decoder.param_template().with_flat(beta_hat)
    return decode(np.asarray(l_hat).reshape(spec.code_shape), params, spec)


def frame_rng(seed: int, scheme: str, z_index: int, snr_index: int, frame: int) -> np.random.Generator:
    return np.random.default_rng([seed, SCHEME_IDS[scheme], z_index, snr_index, frame])


@dataclass
class PointResult:
    recon: np.ndarray
    failed: np.ndarray
    pre_ber: float
    post_ber: float
    bits_per_image: float
    ratio: float


def run_aesc_point(images, codes, dec_params: ParamSet, spec: AutoencoderSpec, chan: ChannelConfig,
                   cfg: ExperimentConfig, z_index: int, snr_index: int) -> PointResult:
    beta = dec_params.flat()
    ldpc = make_code(1024, 512, cfg.ldpc_seed)
    recon = np.zeros_like(images)
    failed = np.zeros(len(images), dtype=bool)
    pre, post, bits = [], [], []
    beta_rx = None  # decoder held by the receiver in amortized mode
    for i, code in enumerate(codes):
        send_beta = not cfg.amortize_decoder or beta_rx is None
        res = transmit(code.ravel(), beta if send_beta else None, chan,
                       frame_rng(cfg.seed, "aesc_i", z_index, snr_index, i), model_id=spec.model_id,
                       z_dims=spec.z_dims, code_bits=cfg.code_bits, param_bits=cfg.resolved_param_bits, ldpc=ldpc)
        rep = res.report
        pre.append(rep.pre_ber)
        post.append(rep.post_ber)
        bits.append(rep.frame_bits)
        if rep.outage:
            failed[i] = True
            continue
        if send_beta:
            beta_rx = res.params
        recon[i] = receiver_decode(res.code, beta_rx, spec)
    return PointResult(recon, failed, float(np.mean(pre)), float(np.mean(post)), float(np.mean(bits)),
                       compression_ratio(spec.dataset, spec.z_dims))


def run_direct_point(images, chan, cfg, snr_index) -> PointResult:
    ldpc = make_code(1024, 512, cfg.ldpc_seed)
    recon = np.zeros_like(images)
    pre, post = [], []
    for i, img in enumerate(images):
        recon[i], rep = baseline_direct(img, chan, frame_rng(cfg.seed, "direct", 0, snr_index, i), ldpc)
        pre.append(rep.pre_ber)
        post.append(rep.post_ber)
    nbits = 8 * images[0].size
    return PointResult(recon, np.zeros(len(images), dtype=bool), float(np.mean(pre)), float(np.mean(post)),
                       float(nbits), 1.0)


def run_codec_point(images, codec: ExternalCodec, chan, cfg, snr_index) -> PointResult:
    ldpc = make_code(1024, 512, cfg.ldpc_seed)
    recon = np.zeros_like(images)
    failed = np.zeros(len(images), dtype=bool)
    pre, post, sizes = [], [], []
    for i, img in enumerate(images):
        out, rep, nbytes = baseline_external_codec(img, codec, chan, frame_rng(cfg.seed, "external_codec", 0, snr_index, i), ldpc)
        pre.append(rep.pre_ber)
        post.append(rep.post_ber)
        sizes.append(nbytes)
        if out is None:
            failed[i] = True
        else:
            recon[i] = out
    raw = images[0].size
    return PointResult(recon, failed, float(np.mean(pre)), float(np.mean(post)), 8.0 * float(np.mean(sizes)),
                       raw / float(np.mean(sizes)))


def channel_for(cfg: ExperimentConfig, snr: float) -> ChannelConfig:
    taps = tuple(cfg.tap_list) if cfg.channel == "multipath_tdl" else ((1.0, 0),)
    return ChannelConfig(cfg.channel, float(snr), taps=taps, fading_taps=cfg.fading_taps, seed=cfg.seed)


def cmd_run(cfg: ExperimentConfig, out_dir=None) -> list[ResultRow]:
    """Sweep every (z_dims, SNR) point for each scheme; writes results.csv and samples.npz."""
    out = Path(out_dir or cfg.out)
    test = load_dataset(cfg.dataset, cfg.data_dir, "test", seed=cfg.seed)
    if cfg.frames_per_point > len(test):
        raise DataError(f"frames_per_point={cfg.frames_per_point} exceeds the {len(test)} test images")
    test = test.subset(cfg.frames_per_point)
    images, labels = test.images, test.labels

    cpath = classifier_path(cfg.model_dir, cfg.dataset)
    if not cpath.exists():
        raise ModelError(f"no classifier at {cpath}; run `train` first")
    clf = load_classifier(cpath)
    models = {}
    for z in cfg.z_dims:
        try:
            enc, dec, spec = load_autoencoder(cfg.model_dir, cfg.dataset, z)
        except FileNotFoundError:
            raise ModelError(f"no {cfg.dataset} z={z} autoencoder in {cfg.model_dir}; run `train` first") from None
        except ValueError as e:
            raise ModelError(str(e)) from None
        if spec.model_id != MODEL_IDS[cfg.dataset]:
            raise ModelError("model id does not match the dataset")
        models[z] = (encode(images, enc, spec), dec, spec)

    codec = None
    if "external_codec" in cfg.baselines:
        codec = ExternalCodec(list(cfg.codec.command), cfg.codec.quality)
        try:
            codec.check()
        except CodecUnavailable as e:
            log.warning("%s; skipping the external_codec scheme", e)
            codec = None

    k = min(cfg.samples_per_point, len(images))
    samples = {"original": images[:k], "labels": labels[:k]}
    rows: list[ResultRow] = []

    def add(scheme, z, snr, pr: PointResult):
        m = evaluate(images, pr.recon, labels, clf, pr.failed)
        rows.append(ResultRow(cfg.dataset, z, pr.ratio, cfg.channel, float(snr), scheme, m.psnr_db, m.ssim,
                              m.rr_ratio, m.ss_index, float(pr.failed.mean()), pr.pre_ber, pr.post_ber,
                              pr.bits_per_image))
        samples[f"{scheme}/z{z}/snr{snr:g}"] = pr.recon[:k]
        log.info("%s z=%d snr=%g: rr %.3f ssim %.3f outage %.3f post-BER %.2e", scheme, z, snr,
                 m.rr_ratio, m.ssim, pr.failed.mean(), pr.post_ber)

    t0 = time.time()
    for si, snr in enumerate(cfg.snr_db):
        chan = channel_for(cfg, snr)
        for zi, z in enumerate(cfg.z_dims):
            codes, dec, spec = models[z]
            add("aesc_i", z, snr, run_aesc_point(images, codes, dec, spec, chan, cfg, zi, si))
        if "direct" in cfg.baselines:
            add("direct", 0, snr, run_direct_point(images, chan, cfg, si))
        if codec is not None:
            add("external_codec", 0, snr, run_codec_point(images, codec, chan, cfg, si))
    log.info("sweep finished in %.1f s", time.time() - t0)

    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(rows_to_csv(rows))
    np.savez_compressed(out / "samples.npz", **samples)
    return rows
