"""SVG charts and image mosaics from a finished run."""

from __future__ import annotations

import math
import re
from collections import defaultdict
from pathlib import Path

import numpy as np

from .experiment import ResultRow, read_results

METRICS = ("psnr", "ssim", "rr_ratio", "ss_index", "outage_rate", "post_ber")
LABELS = {
    "psnr": "PSNR (dB)",
    "ssim": "SSIM",
    "rr_ratio": "Recognition rate ratio",
    "ss_index": "Semantic service index",
    "outage_rate": "Outage rate",
    "post_ber": "Post-decoding BER",
}


class ReportError(ValueError):
    pass


def _num(text: str) -> float:
    return float(text)  # float() already understands "inf" and "nan"


def load_rows(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise ReportError(f"{path} not found")
    rows = read_results(path)
    if not rows:
        raise ReportError(f"{path} has no result rows")
    want = ResultRow.columns()
    if list(rows[0].keys()) != want:
        raise ReportError(f"{path}: columns {list(rows[0].keys())} != {want}")
    try:
        for r in rows:
            for c in want:
                if c not in ("dataset", "channel", "scheme"):
                    r[c] = _num(r[c])
            r["z_dims"] = int(r["z_dims"])
    except (TypeError, ValueError) as e:
        raise ReportError(f"{path}: malformed value ({e})") from None
    return rows


def _series_label(r) -> str:
    return f"aesc_i z={r['z_dims']} (Cr {r['compression_ratio']:.3g})" if r["scheme"] == "aesc_i" else r["scheme"]


def _finite(v):
    return v if math.isfinite(v) else np.nan


def _save(fig, path):
    import matplotlib

    matplotlib.rcParams["svg.hashsalt"] = "aesc"
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_vs_snr(rows, metric, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = defaultdict(list)
    for r in rows:
        series[_series_label(r)].append((r["snr_db"], _finite(r[metric])))
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, pts in series.items():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel(LABELS[metric])
    if metric == "post_ber":
        ax.set_yscale("symlog", linthresh=1e-6)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title(f"{rows[0]['dataset']} / {rows[0]['channel']}")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def plot_vs_ratio(rows, metric, path) -> bool:
    """Metric against compression ratio, one line per SNR (aesc_i rows only)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = defaultdict(list)
    for r in rows:
        if r["scheme"] == "aesc_i":
            series[r["snr_db"]].append((r["compression_ratio"], _finite(r[metric])))
    if not series or max(len(v) for v in series.values()) < 2:
        return False
    fig, ax = plt.subplots(figsize=(6, 4))
    for snr in sorted(series):
        pts = sorted(series[snr])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="s", label=f"{snr:g} dB")
    ax.set_xlabel("Compression ratio")
    ax.set_ylabel(LABELS[metric])
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)
    return True


def write_pnm(path, image: np.ndarray) -> None:
    """Binary PGM for (1, H, W) or (H, W), PPM for (3, H, W); values in [0, 1]."""
    img = np.asarray(image)
    if img.ndim == 3 and img.shape[0] == 1:
        img = img[0]
    px = np.clip(np.floor(img * 255 + 0.5), 0, 255).astype(np.uint8)
    if px.ndim == 2:
        head, data = f"P5\n{px.shape[1]} {px.shape[0]}\n255\n", px.tobytes()
    elif px.ndim == 3 and px.shape[0] == 3:
        head, data = f"P6\n{px.shape[2]} {px.shape[1]}\n255\n", px.transpose(1, 2, 0).tobytes()
    else:
        raise ValueError(f"cannot write image of shape {image.shape}")
    Path(path).write_bytes(head.encode("ascii") + data)


def read_pnm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    m = re.match(rb"(P[56])\s+(\d+)\s+(\d+)\s+255\s", blob)
    if m is None:
        raise ValueError(f"{path}: not a binary PGM/PPM file")
    magic, w, h = m.group(1), int(m.group(2)), int(m.group(3))
    data = np.frombuffer(blob[m.end():], dtype=np.uint8)
    if magic == b"P5":
        return data.reshape(1, h, w) / 255.0
    return data.reshape(h, w, 3).transpose(2, 0, 1) / 255.0


def mosaic(tiles: list[list[np.ndarray | None]], pad: int = 2) -> np.ndarray:
    """Grid of equally sized (C, H, W) tiles; None leaves a blank (outage) cell."""
    ref = next(t for row in tiles for t in row if t is not None)
    c, h, w = ref.shape
    n_rows, n_cols = len(tiles), max(len(r) for r in tiles)
    out = np.ones((c, n_rows * (h + pad) + pad, n_cols * (w + pad) + pad), dtype=np.float32)
    for i, row in enumerate(tiles):
        for j, t in enumerate(row):
            y, x = pad + i * (h + pad), pad + j * (w + pad)
            out[:, y : y + h, x : x + w] = 0.0 if t is None else t
    return out


def sample_grids(samples_path, out_dir) -> list[Path]:
    """One mosaic per sample image: rows are SNR points, columns original | schemes."""
    data = np.load(samples_path)
    originals = data["original"]
    keys = [k for k in data.files if "/" in k]
    schemes = sorted({k.rsplit("/", 1)[0] for k in keys}, key=lambda s: (not s.startswith("aesc_i"), s))
    snrs = sorted({float(k.rsplit("snr", 1)[1]) for k in keys})
    ext = "pgm" if originals.shape[1] == 1 else "ppm"
    written = []
    for n in range(len(originals)):
        tiles = []
        for snr in snrs:
            row = [originals[n]]
            for s in schemes:
                key = f"{s}/snr{snr:g}"
                row.append(data[key][n] if key in data.files else None)
            tiles.append(row)
        path = Path(out_dir) / f"grid_{n}.{ext}"
        write_pnm(path, mosaic(tiles))
        written.append(path)
    return written


def cmd_report(results_path, out_dir=None) -> list[Path]:
    results_path = Path(results_path)
    rows = load_rows(results_path)
    out = Path(out_dir) if out_dir else results_path.parent
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in METRICS:
        p = out / f"{metric}_vs_snr.svg"
        plot_vs_snr(rows, metric, p)
        written.append(p)
        p = out / f"{metric}_vs_ratio.svg"
        if plot_vs_ratio(rows, metric, p):
            written.append(p)
    samples = results_path.parent / "samples.npz"
    if samples.exists():
        written += sample_grids(samples, out)
    return written
