"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Trained MNIST models are taken from ``models/`` when present (they are produced
by ``aesc train --config configs/mnist_awgn.toml``); otherwise the classifier
and the z=40 autoencoder are trained into a temporary directory first, which
takes roughly half an hour on one CPU core.
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from aesc.data import load_dataset
from aesc.harness import cli
from aesc.harness.config import load_config, with_overrides
from aesc.harness.experiment import classifier_path, cmd_run, cmd_train, receiver_decode
from aesc.metrics import psnr, recognition_rate_ratio, semantic_service, ssim
from aesc.models import autoencoder_spec, build_autoencoder, decode, encode, load_autoencoder, load_classifier
from aesc.phy import ChannelConfig, channel, make_code, modulate_bpsk, noise_var, roundtrip, transmit
from aesc.training import CIFAR_NOMINAL_RATIOS, TrainLog, compression_ratio

from test_metrics import fixture_pairs, sk_ssim

ROOT = Path(__file__).resolve().parents[1]
MNIST_DIR = ROOT / "data" / "mnist"
CIFAR_DIR = ROOT / "data" / "cifar10"
MODELS = ROOT / "models"

pytestmark = pytest.mark.slow


def _have_models(d: Path) -> bool:
    names = ["mnist_classifier.aesm", "mnist_z40_encoder.aesm", "mnist_z40_decoder.aesm", "mnist_z40_trainlog.csv"]
    return all((d / n).exists() for n in names)


@pytest.fixture(scope="session")
def mnist_models(tmp_path_factory) -> Path:
    if _have_models(MODELS):
        return MODELS
    out = tmp_path_factory.mktemp("models")
    cfg = load_config(ROOT / "configs" / "mnist_awgn.toml")
    cfg = with_overrides(cfg, z_dims=[40], model_dir=str(out), data_dir=str(MNIST_DIR))
    cmd_train(cfg)
    return out


def _sweep_config(models: Path, out: Path, **kw):
    cfg = load_config(ROOT / "configs" / "mnist_awgn.toml")
    base = dict(z_dims=[40], model_dir=str(models), data_dir=str(MNIST_DIR), out=str(out), baselines=["direct"])
    base.update(kw)
    return with_overrides(cfg, **base)


# ---------------------------------------------------------------------- 1


def test_criterion_1_gradient_suite(verdict):
    t0 = time.time()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           str(ROOT / "tests" / "test_nn.py"), "-k", "gradient or adjoint"],
                          capture_output=True, text=True, cwd=ROOT)
    dt = time.time() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    verdict("1", proc.returncode == 0 and dt < 60, f"{tail} ({dt:.1f} s, limit 60 s)")


# ---------------------------------------------------------------------- 2


def test_criterion_2_shapes(verdict):
    problems = []
    for z in (196, 98, 40):
        spec = autoencoder_spec("mnist", z)
        enc, _, _ = build_autoencoder("mnist", z)
        code = encode(np.zeros((2, 1, 28, 28), np.float32), enc, spec)
        if code.shape != (2, z) or int(np.prod(spec.encoder.shapes[-2])) != 64:
            problems.append(f"mnist z={z}: {code.shape}, pre-linear {spec.encoder.shapes[-2]}")
    for z in (32, 12, 8):
        spec = autoencoder_spec("cifar10", z)
        enc, _, _ = build_autoencoder("cifar10", z)
        code = encode(np.zeros((2, 3, 32, 32), np.float32), enc, spec)
        if code.shape != (2, z, 6, 6):
            problems.append(f"cifar10 z={z}: {code.shape}")
    verdict("2", not problems, "; ".join(problems) or "mnist -> (z,), flat 64; cifar10 -> (z, 6, 6)")


# ---------------------------------------------------------------------- 3


def _best_val_recon_epoch(log: TrainLog) -> int:
    vals = [r[3] for r in log.rows]
    return 1 + int(np.argmin(vals))


def test_criterion_3a_mnist_convergence(verdict, mnist_models):
    log = TrainLog.from_csv(mnist_models / "mnist_z40_trainlog.csv")
    best = _best_val_recon_epoch(log)
    rows = log.rows
    last = rows[-1][3]
    at50 = rows[min(49, len(rows) - 1)][3]
    limit = 50 + 10
    verdict("3a", best <= limit,
            f"MNIST z=40 best validation BCE epoch {best} (limit {limit}); "
            f"val BCE at epoch 50 {at50:.4f}, final {last:.4f} after {len(rows)} epochs")


def test_criterion_3b_cifar_convergence(verdict, tmp_path):
    if not (CIFAR_DIR / "data_batch_1.bin").exists():
        verdict("3b", False, f"CIFAR-10 binaries not found in {CIFAR_DIR}; convergence not measured")
    cfg = load_config(ROOT / "configs" / "cifar10_awgn.toml")
    cfg = with_overrides(cfg, z_dims=[32], model_dir=str(tmp_path), data_dir=str(CIFAR_DIR))
    cmd_train(cfg)
    log = TrainLog.from_csv(tmp_path / "cifar10_z32_trainlog.csv")
    best = _best_val_recon_epoch(log)
    verdict("3b", best <= 110, f"CIFAR-10 z=32 best validation MSE epoch {best} (limit 110)")


# ---------------------------------------------------------------------- 4


def test_criterion_4_transparent_channel(verdict, mnist_models):
    test = load_dataset("mnist", MNIST_DIR, "test").subset(500)
    clf = load_classifier(classifier_path(mnist_models, "mnist"))
    enc, dec, spec = load_autoencoder(mnist_models, "mnist", 40)
    codes = encode(test.images, enc, spec)
    beta = dec.flat()
    beta_q = roundtrip(beta, 8)
    dec_q = spec.decoder.param_template().with_flat(beta_q)
    chan = ChannelConfig("awgn", 100.0)
    ldpc = make_code()
    recon = np.zeros_like(test.images)
    exact = True
    post_ber = 0.0
    for i, code in enumerate(codes):
        res = transmit(code, beta, chan, np.random.default_rng([4, i]), model_id=spec.model_id, z_dims=40, ldpc=ldpc)
        post_ber = max(post_ber, res.report.post_ber)
        if res.report.outage:
            exact = False
            continue
        l_q = roundtrip(code, 8)
        exact &= res.code.tobytes() == l_q.tobytes() and res.params.tobytes() == beta_q.tobytes()
        recon[i] = receiver_decode(res.code, res.params, spec)
        exact &= recon[i].tobytes() == decode(l_q, dec_q, spec).tobytes()
    rr = recognition_rate_ratio(test.images, recon, test.labels, clf)
    target, tol = 0.95, 0.02
    verdict("4", exact and post_ber == 0 and rr >= target - tol,
            f"bit-exact (l, beta) and local decode: {exact}; max post-BER {post_ber:g}; "
            f"RR ratio {rr:.4f} over 500 images (target {target} +/- {tol})")


# ---------------------------------------------------------------------- 5


def test_criterion_5_cliff_effect(verdict, mnist_models, tmp_path):
    cfg = _sweep_config(mnist_models, tmp_path, snr_db=[0.0, 2.0, 4.0, 6.0, 8.0, 10.0], frames_per_point=100)
    t0 = time.time()
    rows = cmd_run(cfg)
    dt = time.time() - t0
    aesc = sorted((r for r in rows if r.scheme == "aesc_i"), key=lambda r: r.snr_db)
    direct = {r.snr_db: r for r in rows if r.scheme == "direct"}
    low, high = aesc[0], aesc[-1]
    bers = [r.post_ber for r in aesc]
    monotone = all(b <= a for a, b in zip(bers, bers[1:]))
    ok = low.rr_ratio <= 0.3 and high.rr_ratio >= 0.9 * direct[high.snr_db].rr_ratio and monotone and dt < 1800
    verdict("5", ok,
            f"RR {low.rr_ratio:.3f} at {low.snr_db:g} dB (limit 0.3), {high.rr_ratio:.3f} at {high.snr_db:g} dB "
            f"vs 0.9 x direct {direct[high.snr_db].rr_ratio:.3f}; post-BER {['%.2g' % b for b in bers]} "
            f"monotone={monotone}; {dt:.0f} s (limit 1800 s)")


# ---------------------------------------------------------------------- 6


def test_criterion_6_ldpc_waterfall(verdict):
    code = make_code()
    rng = np.random.default_rng(6)
    n_words = -(-1_000_000 // code.k)
    s2 = noise_var(3.0)  # rate 1/2 BPSK: Eb/N0 equals the per-dimension SNR used here
    errors = 0
    noiseless_ok = True
    t0 = time.time()
    for start in range(0, n_words, 200):
        info = rng.integers(0, 2, (min(200, n_words - start), code.k), dtype=np.uint8)
        cw = code.encode(info)
        x = modulate_bpsk(cw).real
        res = code.decode(2 * (x + np.sqrt(s2) * rng.standard_normal(x.shape)) / s2)
        errors += int(np.count_nonzero(res.info_bits != info))
        if start == 0:
            clean = code.decode(2 * x / 1e-3)
            noiseless_ok = bool(clean.success.all()) and np.array_equal(clean.info_bits, info)
    dt = time.time() - t0
    bits = n_words * code.k
    ber = errors / bits
    verdict("6", ber < 1e-4 and noiseless_ok and dt < 300,
            f"post-decoding BER {ber:.2e} at 3 dB over {bits} info bits; noiseless exact {noiseless_ok}; {dt:.0f} s")


# ---------------------------------------------------------------------- 7


def test_criterion_7_channel_statistics(verdict):
    notes = []
    x = np.ones(1_000_000, dtype=complex)
    worst = 0.0
    for snr in (0.0, 5.0, 10.0):
        y, _ = channel(x, ChannelConfig("awgn", snr), np.random.default_rng(7))
        n = y - x
        for part in (n.real, n.imag):
            worst = max(worst, abs(np.var(part) / noise_var(snr) - 1))
    notes.append(f"noise variance max rel. error {worst:.4f}")
    frame = modulate_bpsk(np.random.default_rng(0).integers(0, 2, 2048))
    cfg = ChannelConfig("slow_rayleigh", 100.0)
    hs, const = [], True
    for k in range(20):
        y, st = channel(frame, cfg, np.random.default_rng([7, k]))
        const &= bool(np.allclose(y, st.h * frame, atol=1e-3))
        hs.append(st.h)
    varies = len({complex(np.round(h, 12)) for h in hs}) == len(hs)
    notes.append(f"h constant within frame {const}, distinct across 20 frames {varies}")
    a, _ = channel(frame, ChannelConfig("awgn", 3.0), np.random.default_rng(77))
    b, _ = channel(frame, ChannelConfig("multipath_tdl", 3.0, taps=((1.0, 0),)), np.random.default_rng(77))
    same = a.tobytes() == b.tobytes()
    notes.append(f"K=1 multipath == AWGN bit-exact {same}")
    verdict("7", worst < 0.01 and const and varies and same, "; ".join(notes))


# ---------------------------------------------------------------------- 8


def test_criterion_8_metric_oracles(verdict):
    diffs = [abs(ssim(a, b) - sk_ssim(a, b)) for a, b in fixture_pairs()]
    z = np.zeros((8, 8))
    psnr_ok = psnr(z, z) == math.inf and psnr(z, np.full((8, 8), 0.1)) == pytest.approx(20, abs=1e-12) \
        and psnr(z, np.ones((8, 8))) == 0.0
    ss_ok = semantic_service(0.9, 0.9) == 1.0 and semantic_service(0.9, 0.0) == 0.0
    verdict("8", max(diffs) <= 1e-4 and psnr_ok and ss_ok,
            f"SSIM max |diff| vs reference {max(diffs):.2e} over {len(diffs)} fixtures; "
            f"PSNR closed forms {psnr_ok}; SS identity/zero {ss_ok}")


# ---------------------------------------------------------------------- 9


def test_criterion_9_compression_accounting(verdict):
    mnist = [compression_ratio("mnist", z) for z in (196, 98, 40)]
    cifar = [round(compression_ratio("cifar10", z), 2) for z in (32, 12, 8)]
    flagged = all(round(compression_ratio("cifar10", z), 2) != r for z, r in CIFAR_NOMINAL_RATIOS.items())
    ok = mnist == [4.0, 8.0, 19.6] and cifar == [2.67, 7.11, 10.67] and flagged
    verdict("9", ok, f"mnist {mnist}; cifar10 {cifar} (nominal {list(CIFAR_NOMINAL_RATIOS.values())} flagged)")


# ---------------------------------------------------------------------- 10


def test_criterion_10_reproducibility(verdict, mnist_models, tmp_path):
    toml = tmp_path / "repro.toml"
    toml.write_text(
        f'dataset = "mnist"\ndata_dir = "{MNIST_DIR}"\nmodel_dir = "{mnist_models}"\n'
        f'z_dims = [40]\nsnr_db = [0.0, 3.0, 100.0]\nframes_per_point = 20\nseed = 3\n'
        f'baselines = ["direct", "external_codec"]\n\n[codec]\n'
        f'command = ["{sys.executable}", "{ROOT / "scripts" / "pil_codec.py"}"]\nquality = 60\n'
    )
    codes = [cli.main(["run", "--config", str(toml), "--out", str(tmp_path / name)]) for name in ("a", "b")]
    a, b = (tmp_path / "a" / "results.csv").read_bytes(), (tmp_path / "b" / "results.csv").read_bytes()
    n_rows = a.count(b"\n") - 1
    verdict("10", codes == [0, 0] and a == b, f"exit codes {codes}; {n_rows} rows; identical bytes {a == b}")
