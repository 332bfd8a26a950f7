import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aesc.data import Dataset
from aesc.models import build_autoencoder, build_classifier, penultimate_features
from aesc.nn import ParamSet
from aesc.training import (DEFAULT_LOSS, DEFAULT_TRAIN, LossConfig, TrainConfig, TrainingDiverged, TrainLog,
                           _ae_step_grads, combined_grads, compression_ratio, loss_bce, loss_combined, loss_mse,
                           loss_semantic, semantic_loss_and_grad, train_autoencoder)


def fake_classifier(dtype=np.float32, seed=0):
    clf = build_classifier("mnist", seed=seed)
    clf.params = clf.params.astype(dtype)
    clf.trained = True
    return clf


# ------------------------------------------------------------------ losses


def test_mse_examples():
    assert loss_mse(np.zeros(4), np.zeros(4)) == 0
    assert loss_mse(np.zeros(4), np.ones(4)) == 1
    assert loss_mse(np.array([0.0, 0.5]), np.array([1.0, 0.5])) == 0.5


def test_bce_examples():
    s = np.random.default_rng(0).random(50)
    assert abs(loss_bce(s, np.full(50, 0.5)) - math.log(2)) < 1e-12
    assert loss_bce(np.ones(3), np.full(3, 1 - 1e-13)) < 1e-11
    assert abs(loss_bce(np.array([1.0, 0.0]), np.array([0.9, 0.1])) - 0.1053605) < 1e-6


def test_bce_rejects_out_of_range():
    with pytest.raises(ValueError):
        loss_bce(np.zeros(2), np.array([0.5, 1.5]))
    with pytest.raises(ValueError, match="shape"):
        loss_mse(np.zeros(2), np.zeros(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_losses_nonnegative_and_zero_at_identity(seed):
    rng = np.random.default_rng(seed)
    s = rng.random((2, 1, 28, 28))
    s_hat = rng.uniform(0.01, 0.99, s.shape)
    assert loss_mse(s, s_hat) >= 0 and loss_mse(s, s) == 0
    b = (s > 0.5).astype(float)
    assert loss_bce(s, s_hat) >= 0 and loss_bce(b, b) < 1e-10


def test_semantic_loss_zero_at_identity_and_nonnegative():
    clf = fake_classifier()
    x = np.random.default_rng(1).random((3, 1, 28, 28)).astype(np.float32)
    assert loss_semantic(x, x, clf) == 0
    assert loss_semantic(x, x[::-1].copy(), clf) > 0


def test_semantic_loss_requires_trained_classifier():
    clf = build_classifier("mnist")
    x = np.zeros((1, 1, 28, 28), dtype=np.float32)
    with pytest.raises(RuntimeError):
        semantic_loss_and_grad(np.zeros((1, 128)), x, clf)


def test_semantic_gradient_finite_difference():
    clf = fake_classifier(np.float64)
    rng = np.random.default_rng(2)
    s = rng.random((2, 1, 28, 28))
    s_hat = rng.random((2, 1, 28, 28))
    feat = penultimate_features(s, clf)
    _, g = semantic_loss_and_grad(feat, s_hat, clf)
    h = 1e-5
    for idx in [(0, 0, 10, 10), (1, 0, 14, 3), (0, 0, 20, 21), (1, 0, 5, 17)]:
        old = s_hat[idx]
        s_hat[idx] = old + h
        fp = semantic_loss_and_grad(feat, s_hat, clf, need_grad=False)[0]
        s_hat[idx] = old - h
        fm = semantic_loss_and_grad(feat, s_hat, clf, need_grad=False)[0]
        s_hat[idx] = old
        num = (fp - fm) / (2 * h)
        assert abs(num - g[idx]) <= 1e-4 * max(abs(num), abs(g[idx]), 1e-8), idx


def test_combined_example_and_limits():
    # affine combination
    assert abs(0.5 * 0.2 + 0.5 * 0.4 - 0.3) < 1e-15
    clf = fake_classifier()
    rng = np.random.default_rng(3)
    s = rng.random((2, 1, 28, 28)).astype(np.float32)
    s_hat = rng.uniform(0.05, 0.95, s.shape).astype(np.float32)
    cfg = LossConfig(0.5, "bce")
    want = 0.5 * loss_semantic(s, s_hat, clf) + 0.5 * loss_bce(s, s_hat)
    assert abs(loss_combined(s, s_hat, cfg, clf) - want) < 1e-12
    assert loss_combined(s, s_hat, LossConfig(0.0, "mse"), clf) == loss_mse(s, s_hat)


def test_combined_gradient_is_linear():
    clf = fake_classifier()
    rng = np.random.default_rng(4)
    s = rng.random((2, 1, 28, 28)).astype(np.float32)
    s_hat = rng.uniform(0.05, 0.95, s.shape).astype(np.float32)
    for cfg in (LossConfig(0.5, "bce"), LossConfig(0.1, "mse")):
        g = combined_grads(s, s_hat, cfg, clf)
        np.testing.assert_array_equal(g["total"], cfg.gamma * g["semantic"] + (1 - cfg.gamma) * g["recon"])


def test_gamma_range():
    with pytest.raises(ValueError):
        LossConfig(1.0)
    with pytest.raises(ValueError):
        LossConfig(-0.1)


def test_default_recipes():
    assert DEFAULT_LOSS["mnist"] == LossConfig(0.5, "bce")
    assert DEFAULT_LOSS["cifar10"] == LossConfig(0.1, "mse")
    assert (DEFAULT_TRAIN["mnist"].lr, DEFAULT_TRAIN["mnist"].batch_size) == (0.001, 256)
    assert (DEFAULT_TRAIN["cifar10"].lr, DEFAULT_TRAIN["cifar10"].batch_size) == (0.001, 128)


@pytest.mark.parametrize("reconstruction,gamma", [("bce", 0.5), ("mse", 0.1), ("bce", 0.0)])
def test_autoencoder_step_gradient(reconstruction, gamma):
    """Fused sigmoid/BCE gradient through decoder and encoder vs finite differences (64-bit)."""
    clf = fake_classifier(np.float64)
    enc, dec, spec = build_autoencoder("mnist", 6, seed=1)
    rng = np.random.default_rng(5)
    params = ParamSet(list(enc.astype(np.float64).prefixed("enc.").items())
                      + list(dec.astype(np.float64).prefixed("dec.").items()))
    for k in params:
        if k.endswith("bias"):
            params[k] = rng.uniform(0.05, 0.2, params[k].shape)
    x = rng.random((2, 1, 28, 28))
    feat = penultimate_features(x, clf)
    cfg = LossConfig(gamma, reconstruction)

    def total():
        rec, sem, _ = _ae_step_grads(spec.encoder, spec.decoder, params, x, feat, cfg, clf)
        return gamma * sem + (1 - gamma) * rec

    _, _, grads = _ae_step_grads(spec.encoder, spec.decoder, params, x, feat, cfg, clf)
    h = 1e-6
    for name, idx in [("dec.3.bias", (0,)), ("dec.0.weight", (5, 2)), ("enc.3.weight", (1, 7)),
                      ("enc.0.weight", (3, 0, 1, 1)), ("dec.1.weight", (2, 4, 1, 0))]:
        p = params[name]
        old = p[idx]
        p[idx] = old + h
        fp = total()
        p[idx] = old - h
        fm = total()
        p[idx] = old
        num = (fp - fm) / (2 * h)
        ana = grads[name][idx]
        assert abs(num - ana) <= 1e-4 * max(abs(num), abs(ana), 1e-9), (name, num, ana)


def test_compression_ratios():
    assert compression_ratio("mnist", 196) == 4
    assert compression_ratio("mnist", 98) == 8
    assert compression_ratio("mnist", 40) == 19.6
    assert compression_ratio("mnist", 784) == 1
    got = [round(compression_ratio("cifar10", z), 2) for z in (32, 12, 8)]
    assert got == [2.67, 7.11, 10.67]


def test_trainlog_csv_roundtrip(tmp_path):
    log = TrainLog()
    log.add(1, 0.5, 0.25, 0.4, 0.3)
    log.add(2, 0.1 + 0.2, 1 / 3, 0.2, 0.1)
    log.to_csv(tmp_path / "log.csv")
    assert (tmp_path / "log.csv").read_text().splitlines()[0] == "epoch,train_recon,train_sem,val_recon,val_sem"
    assert TrainLog.from_csv(tmp_path / "log.csv").rows == log.rows


def test_trainlog_rejects_nonfinite():
    with pytest.raises(TrainingDiverged) as e:
        TrainLog().add(7, 0.1, float("nan"), 0.1, 0.1)
    assert e.value.epoch == 7


def _tiny_split(n, seed):
    rng = np.random.default_rng(seed)
    images = (rng.random((n, 1, 28, 28)) < 0.2).astype(np.float32)
    return Dataset("mnist", "train", images, np.arange(n) % 10)


def test_training_is_deterministic_and_returns_best_epoch():
    tr, va = _tiny_split(64, 0), _tiny_split(16, 1)
    clf = fake_classifier()
    cfg = TrainConfig(lr=1e-3, batch_size=32, max_epochs=3, patience=10, seed=4)
    a = train_autoencoder(tr, va, 8, clf, LossConfig(0.5, "bce"), cfg)
    b = train_autoencoder(tr, va, 8, clf, LossConfig(0.5, "bce"), cfg)
    assert a[3].rows == b[3].rows
    assert all(a[1][k].tobytes() == b[1][k].tobytes() for k in a[1])
    log = a[3]
    vals = log.val_combined(0.5)
    assert log.best_epoch == 1 + int(np.argmin(vals))


def test_training_divergence_reports_epoch():
    tr, va = _tiny_split(32, 0), _tiny_split(8, 1)
    bad = Dataset("mnist", "train", tr.images.copy(), tr.labels)
    bad.images[0, 0, 0, 0] = np.nan
    cfg = TrainConfig(lr=1e-3, batch_size=32, max_epochs=2, seed=0)
    with pytest.raises(TrainingDiverged) as e:
        train_autoencoder(bad, va, 8, None, LossConfig(0.0, "mse"), cfg)
    assert e.value.epoch == 1


def test_gamma_positive_needs_trained_classifier():
    tr = _tiny_split(8, 0)
    with pytest.raises(RuntimeError):
        train_autoencoder(tr, tr, 8, build_classifier("mnist"), LossConfig(0.5), TrainConfig(max_epochs=1))


@pytest.mark.slow
def test_semantic_term_does_not_wreck_reconstruction():
    """Reconstruction-only val MSE stays within 1.2x of the combined-loss run's val MSE."""
    from pathlib import Path

    from aesc.data import load_mnist
    from aesc.models import decode, encode, load_classifier

    root = Path(__file__).resolve().parents[1]
    clf_path = root / "models" / "mnist_classifier.aesm"
    if not clf_path.exists():
        pytest.skip("trained MNIST classifier not present")
    clf = load_classifier(clf_path)
    tr = load_mnist(root / "data" / "mnist", "train").subset(1024)
    va = load_mnist(root / "data" / "mnist", "val")
    cfg = TrainConfig(lr=1e-3, batch_size=64, max_epochs=6, patience=10, seed=0)
    mse = {}
    for gamma in (0.0, 0.5):
        enc, dec, spec, _ = train_autoencoder(tr, va, 40, clf, LossConfig(gamma, "bce"), cfg)
        mse[gamma] = loss_mse(va.images, decode(encode(va.images, enc, spec), dec, spec))
    print(f"val MSE gamma=0: {mse[0.0]:.5f}, gamma=0.5: {mse[0.5]:.5f}")
    assert mse[0.0] <= 1.2 * mse[0.5], mse
