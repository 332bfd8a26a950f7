"""Reconstruction and semantic fidelity metrics: PSNR, SSIM, recognition-rate ratio, SS index."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .models import Classifier, classify

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03


@dataclass
class MetricRecord:
    psnr_db: float  # math.inf when the images are identical
    ssim: float
    rr_ratio: float
    ss_index: float
    outage: bool = False


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def psnr(s, s_hat) -> float:
    """10 log10(1 / MSE) for images in [0, 1]; identical inputs give +inf."""
    a, b = _pair(s, s_hat)
    mse = float(np.mean((a - b) ** 2))
    return math.inf if mse == 0 else 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    w = np.exp(-(r**2) / (2 * sigma**2))
    return w / w.sum()


def _filter_valid(img: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Separable 'valid' filtering of the last two axes."""
    k = len(w)
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=-2) @ w
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=-1) @ w


def ssim_map(s, s_hat, data_range: float = 1.0) -> np.ndarray:
    a, b = _pair(s, s_hat)
    if a.shape[-1] < SSIM_WINDOW or a.shape[-2] < SSIM_WINDOW:
        raise ValueError(f"image {a.shape[-2:]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    w = gaussian_window()
    mu_a, mu_b = _filter_valid(a, w), _filter_valid(b, w)
    va = _filter_valid(a * a, w) - mu_a**2
    vb = _filter_valid(b * b, w) - mu_b**2
    cov = _filter_valid(a * b, w) - mu_a * mu_b
    c1, c2 = (K1 * data_range) ** 2, (K2 * data_range) ** 2
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2))


def ssim(s, s_hat, data_range: float = 1.0) -> float:
    """Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5).

    Accepts (H, W) or channel-first (C, H, W); the map is averaged over
    windows and channels.
    """
    return float(ssim_map(s, s_hat, data_range).mean())


def batch_psnr(originals, recon) -> float:
    vals = [psnr(a, b) for a, b in zip(originals, recon)]
    return float(np.mean(vals)) if vals else math.nan


def batch_ssim(originals, recon) -> float:
    vals = [ssim(a, b) for a, b in zip(originals, recon)]
    return float(np.mean(vals)) if vals else math.nan


Predictor = Union[Classifier, Callable[[np.ndarray], np.ndarray]]


def _predict(clf: Predictor, images) -> np.ndarray:
    return classify(images, clf) if isinstance(clf, Classifier) else np.asarray(clf(images))


def recognition_rate_ratio(originals, reconstructions, labels, clf: Predictor, failed=None) -> float:
    """acc(classifier on reconstructions) / acc(classifier on originals).

    ``failed`` marks images lost to an outage; they count as misclassified.
    ``clf`` may be a trained Classifier or any images -> labels callable.
    """
    labels = np.asarray(labels)
    acc_orig = float(np.mean(_predict(clf, originals) == labels))
    if acc_orig == 0:
        raise ValueError("classifier gets no original image right; ratio undefined")
    hit = _predict(clf, reconstructions) == labels
    if failed is not None:
        hit &= ~np.asarray(failed, dtype=bool)
    return float(np.mean(hit)) / acc_orig


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


MAPPINGS = {"identity": lambda x: x, "sigmoid": _sigmoid}


def semantic_service(st_original: float, st_reconstructed: float, mapping: str = "identity") -> float:
    """SS = map(ST(S_hat)) / map(ST(S)), clamped to [0, 1]."""
    if mapping not in MAPPINGS:
        raise ValueError(f"unknown mapping {mapping!r}")
    f = MAPPINGS[mapping]
    den = f(st_original)
    if den == 0:
        raise ValueError("mapped ST(S) is zero")
    return min(1.0, max(0.0, f(st_reconstructed) / den))


def evaluate(originals, recon, labels, clf: Predictor, failed=None, mapping: str = "identity") -> MetricRecord:
    """Metrics for one batch of reconstructions; ST is classifier accuracy.

    Unlike :func:`recognition_rate_ratio`, a classifier that misses every
    original yields NaN for the two semantic metrics instead of raising, so a
    sweep can finish and record the point.
    """
    labels = np.asarray(labels)
    failed_arr = np.zeros(len(labels), dtype=bool) if failed is None else np.asarray(failed, dtype=bool)
    acc_orig = float(np.mean(_predict(clf, originals) == labels))
    acc_rec = float(np.mean((_predict(clf, recon) == labels) & ~failed_arr))
    if acc_orig == 0:
        rr = ss = math.nan
    else:
        rr = acc_rec / acc_orig
        ss = semantic_service(acc_orig, acc_rec, mapping)
    return MetricRecord(
        psnr_db=batch_psnr(originals, recon),
        ssim=batch_ssim(originals, recon),
        rr_ratio=rr,
        ss_index=ss,
        outage=bool(failed_arr.any()),
    )
