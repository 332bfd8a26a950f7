"""Semantic encoder/decoder architectures and the frozen feature classifier.

Padding and output-padding choices that the architecture tables leave open:

* MNIST convs use padding 0 (28 -> 13 -> 6 -> 2); the decoder's transpose
  convs use output_padding (1, 0, 1) to walk 2 -> 6 -> 13 -> 28.
* MNIST encoder linear takes 16*2*2 = 64 inputs (the table prints 16), and
  the decoder reshapes its 64 outputs to a [16, 2, 2] map, so the first
  transpose conv has 16 input channels (the table prints 64).
* CIFAR 3x3 stride-1 convs use padding 1, 4x4 stride-2 convs padding 0,
  giving a Z x 6 x 6 code; decoder transpose convs use output_padding 1 then 0.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .nn import LayerSpec, Network, ParamSet, deserialize_params, serialize_params

IMAGE_SHAPES = {"mnist": (1, 28, 28), "cifar10": (3, 32, 32)}
MODEL_IDS = {"mnist": 1, "cifar10": 2}
DATASETS_BY_ID = {v: k for k, v in MODEL_IDS.items()}


def _conv(cin, cout, k, s, p=0, act="relu"):
    return LayerSpec("conv2d", cin, cout, kernel=k, stride=s, padding=p, activation=act)


def _convt(cin, cout, k, s, op, act="relu"):
    return LayerSpec("convtranspose2d", cin, cout, kernel=k, stride=s, output_padding=op, activation=act)


def autoencoder_layers(dataset: str, z_dims: int) -> tuple[list[LayerSpec], list[LayerSpec]]:
    if z_dims < 1:
        raise ValueError(f"z_dims must be >= 1, got {z_dims}")
    if dataset == "mnist":
        enc = [
            _conv(1, 16, 3, 2),
            _conv(16, 16, 3, 2),
            _conv(16, 16, 3, 2),
            LayerSpec("linear", 64, z_dims, activation="relu"),
        ]
        dec = [
            LayerSpec("linear", z_dims, 64, activation="relu", reshape=(16, 2, 2)),
            _convt(16, 16, 3, 2, 1),
            _convt(16, 16, 3, 2, 0),
            _convt(16, 1, 3, 2, 1, act="sigmoid"),
        ]
    elif dataset == "cifar10":
        enc = [
            _conv(3, 32, 4, 2),
            _conv(32, 64, 3, 1, 1),
            _conv(64, 128, 3, 1, 1),
            _conv(128, 256, 3, 1, 1),
            _conv(256, 128, 4, 2),
            _conv(128, 64, 3, 1, 1),
            _conv(64, 32, 3, 1, 1),
            _conv(32, z_dims, 3, 1, 1),
        ]
        dec = [
            _convt(z_dims, 64, 4, 2, 1),
            _conv(64, 128, 3, 1, 1),
            _conv(128, 128, 3, 1, 1),
            _convt(128, 128, 4, 2, 0),
            _conv(128, 64, 3, 1, 1),
            _conv(64, 32, 3, 1, 1),
            _conv(32, 3, 3, 1, 1, act="sigmoid"),
        ]
    else:
        raise ValueError(f"unknown dataset {dataset!r}")
    return enc, dec


def classifier_layers(dataset: str) -> list[LayerSpec]:
    pool = lambda c: LayerSpec("maxpool2d", c, c, kernel=2, stride=2)  # noqa: E731
    if dataset == "mnist":
        return [
            _conv(1, 32, 3, 1, 1),
            pool(32),
            _conv(32, 64, 3, 1, 1),
            pool(64),
            LayerSpec("linear", 64 * 7 * 7, 128, activation="relu"),
            LayerSpec("linear", 128, 10),
        ]
    if dataset == "cifar10":
        return [
            _conv(3, 32, 3, 1, 1),
            pool(32),
            _conv(32, 64, 3, 1, 1),
            pool(64),
            _conv(64, 128, 3, 1, 1),
            pool(128),
            LayerSpec("linear", 128 * 4 * 4, 256, activation="relu"),
            LayerSpec("linear", 256, 10),
        ]
    raise ValueError(f"unknown dataset {dataset!r}")


@dataclass(frozen=True)
class AutoencoderSpec:
    dataset: str
    z_dims: int
    encoder: Network
    decoder: Network

    @property
    def code_shape(self) -> tuple[int, ...]:
        return self.encoder.output_shape

    @property
    def model_id(self) -> int:
        return MODEL_IDS[self.dataset]


@dataclass(frozen=True)
class SemanticCode:
    values: np.ndarray  # unbatched code, flat (z,) or (z, 6, 6)
    model_id: int
    z_dims: int


def autoencoder_spec(dataset: str, z_dims: int) -> AutoencoderSpec:
    enc_layers, dec_layers = autoencoder_layers(dataset, z_dims)
    try:
        enc = Network(f"{dataset}-encoder", IMAGE_SHAPES[dataset], enc_layers)
        dec = Network(f"{dataset}-decoder", enc.output_shape, dec_layers)
    except ValueError as exc:
        raise ValueError(f"z_dims={z_dims} breaks shape inference: {exc}") from None
    if dec.output_shape != IMAGE_SHAPES[dataset]:
        raise ValueError(f"decoder output {dec.output_shape} != image shape {IMAGE_SHAPES[dataset]}")
    return AutoencoderSpec(dataset, z_dims, enc, dec)


def build_autoencoder(dataset: str, z_dims: int, seed: int = 0):
    """Returns (encoder params, decoder params, spec); initialisation fixed by ``seed``."""
    spec = autoencoder_spec(dataset, z_dims)
    rng = np.random.default_rng([seed, MODEL_IDS[dataset], z_dims])
    return spec.encoder.init_params(rng), spec.decoder.init_params(rng), spec


def _batched(x, shape):
    x = np.asarray(x, dtype=np.float32)
    if x.shape == tuple(shape):
        return x[None], True
    if x.shape[1:] != tuple(shape):
        raise ValueError(f"expected shape {tuple(shape)} or a batch of it, got {x.shape}")
    return x, False


def encode(images, enc_params: ParamSet, spec: AutoencoderSpec) -> np.ndarray:
    """Semantic code l = E(S) for one image or a batch."""
    x, single = _batched(images, spec.encoder.input_shape)
    out = spec.encoder.forward(enc_params, x)
    return out[0] if single else out


def semantic_code(image, enc_params: ParamSet, spec: AutoencoderSpec) -> SemanticCode:
    return SemanticCode(encode(image, enc_params, spec), spec.model_id, spec.z_dims)


def decode(codes, dec_params: ParamSet, spec: AutoencoderSpec) -> np.ndarray:
    """Reconstruction D(l) for one code or a batch; pixels in (0, 1)."""
    x, single = _batched(codes, spec.decoder.input_shape)
    out = spec.decoder.forward(dec_params, x)
    return out[0] if single else out


# -------------------------------------------------------------- classifier


@dataclass
class Classifier:
    dataset: str
    network: Network
    params: ParamSet
    trained: bool = False

    @property
    def penultimate_dim(self) -> int:
        return int(np.prod(self.network.shapes[-2]))

    @property
    def penultimate_index(self) -> int:
        return len(self.network.layers) - 1


def build_classifier(dataset: str, seed: int = 0) -> Classifier:
    net = Network(f"{dataset}-classifier", IMAGE_SHAPES[dataset], classifier_layers(dataset))
    return Classifier(dataset, net, net.init_params(np.random.default_rng([seed, 99, MODEL_IDS[dataset]])))


def _require_trained(clf: Classifier):
    if not clf.trained:
        raise RuntimeError(f"{clf.network.name} is not trained; it cannot serve as the feature map")


def logits(images, clf: Classifier, batch_size: int = 500) -> np.ndarray:
    x, single = _batched(images, clf.network.input_shape)
    out = np.concatenate([clf.network.forward(clf.params, x[i : i + batch_size]) for i in range(0, len(x), batch_size)])
    return out[0] if single else out


def penultimate_features(images, clf: Classifier, batch_size: int = 500) -> np.ndarray:
    """The classifier's penultimate activations, used as the semantic feature map."""
    _require_trained(clf)
    x, single = _batched(images, clf.network.input_shape)
    k = clf.penultimate_index
    out = np.concatenate(
        [clf.network.forward(clf.params, x[i : i + batch_size], upto=k) for i in range(0, len(x), batch_size)]
    )
    return out[0] if single else out


def classify(images, clf: Classifier) -> np.ndarray:
    """Argmax label; ties resolve to the lowest class index."""
    return np.argmax(logits(images, clf), axis=-1)


# ---------------------------------------------------------- architecture audit


def render_table(net: Network) -> str:
    """One line per layer, for byte comparison against the checked-in tables."""
    lines = [f"{net.name} input={list(net.input_shape)}"]
    for i, (s, shape) in enumerate(zip(net.layers, net.shapes[1:])):
        if s.kind == "linear":
            row = f"{i}: linear in={s.in_ch} out={s.out_ch} act={s.activation}"
            if s.reshape:
                row += f" reshape={list(s.reshape)}"
        elif s.kind == "maxpool2d":
            row = f"{i}: maxpool2d k={s.kernel[0]}x{s.kernel[1]} s={s.stride[0]}"
        else:
            row = (
                f"{i}: {s.kind} in={s.in_ch} out={s.out_ch} k={s.kernel[0]}x{s.kernel[1]} "
                f"s={s.stride[0]} p={s.padding[0]}"
            )
            if s.kind == "convtranspose2d":
                row += f" op={s.output_padding[0]}"
            row += f" act={s.activation}"
        lines.append(f"{row} -> {list(shape)}")
    return "\n".join(lines) + "\n"


def reference_table(dataset: str, z_dims: int) -> str:
    """Checked-in rendering of the encoder+decoder table with Z_dims filled in."""
    text = resources.files("aesc").joinpath(f"arch/{dataset}_autoencoder.txt").read_text()
    return text.replace("{Z}", str(z_dims))


def render_autoencoder(spec: AutoencoderSpec) -> str:
    return render_table(spec.encoder) + render_table(spec.decoder)


# ------------------------------------------------------------- model files

MODEL_MAGIC = b"AESM"


def model_bytes(network: Network, params: ParamSet, meta: dict) -> bytes:
    """Model file: magic, u32 descriptor length, JSON descriptor, parameter payload."""
    desc = dict(meta)
    desc["name"] = network.name
    desc["input_shape"] = list(network.input_shape)
    desc["layers"] = network.describe()
    raw = json.dumps(desc, sort_keys=True, separators=(",", ":")).encode()
    return MODEL_MAGIC + struct.pack("<I", len(raw)) + raw + serialize_params(params)


def parse_model(blob: bytes) -> tuple[Network, ParamSet, dict]:
    if blob[:4] != MODEL_MAGIC:
        raise ValueError("not a model file (bad magic)")
    (n,) = struct.unpack_from("<I", blob, 4)
    desc = json.loads(blob[8 : 8 + n].decode())
    net = Network.from_description(desc["name"], desc["input_shape"], desc["layers"])
    return net, deserialize_params(blob[8 + n :], net), desc


def save_model(path, network: Network, params: ParamSet, meta: dict) -> str:
    blob = model_bytes(network, params, meta)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load_model(path) -> tuple[Network, ParamSet, dict]:
    return parse_model(Path(path).read_bytes())


def file_checksum(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_autoencoder(out_dir, spec: AutoencoderSpec, enc: ParamSet, dec: ParamSet) -> dict[str, str]:
    out_dir = Path(out_dir)
    meta = {"dataset": spec.dataset, "z_dims": spec.z_dims}
    stem = f"{spec.dataset}_z{spec.z_dims}"
    return {
        f"{stem}_encoder.aesm": save_model(out_dir / f"{stem}_encoder.aesm", spec.encoder, enc, {**meta, "role": "encoder"}),
        f"{stem}_decoder.aesm": save_model(out_dir / f"{stem}_decoder.aesm", spec.decoder, dec, {**meta, "role": "decoder"}),
    }


def load_autoencoder(model_dir, dataset: str, z_dims: int):
    model_dir = Path(model_dir)
    stem = f"{dataset}_z{z_dims}"
    spec = autoencoder_spec(dataset, z_dims)
    out = []
    for role, net in (("encoder", spec.encoder), ("decoder", spec.decoder)):
        got, params, desc = load_model(model_dir / f"{stem}_{role}.aesm")
        if desc.get("dataset") != dataset or desc.get("z_dims") != z_dims or got.describe() != net.describe():
            raise ValueError(f"{stem}_{role}.aesm does not match the {dataset} z={z_dims} architecture")
        out.append(params)
    return out[0], out[1], spec


def save_classifier(path, clf: Classifier, accuracy: float) -> str:
    return save_model(path, clf.network, clf.params, {"dataset": clf.dataset, "role": "classifier", "accuracy": accuracy})


def load_classifier(path) -> Classifier:
    net, params, desc = load_model(path)
    if desc.get("role") != "classifier":
        raise ValueError(f"{path} is not a classifier model")
    return Classifier(desc["dataset"], net, params, trained=True)
