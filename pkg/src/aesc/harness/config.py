"""Experiment configuration, read from a single TOML document."""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from ..models import IMAGE_SHAPES
from ..phy.channel import FAMILIES
from ..training import DEFAULT_LOSS, DEFAULT_TRAIN

SCHEMES = ("aesc_i", "direct", "external_codec")
BASELINES = ("direct", "external_codec")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (a usage error)."""


@dataclass
class CodecConfig:
    command: list[str] = field(default_factory=lambda: [sys.executable, "scripts/pil_codec.py"])
    quality: int = 60


@dataclass
class TrainSection:
    lr: float = 1e-3
    batch_size: int | None = None  # None -> dataset default
    max_epochs: int | None = None
    patience: int = 10
    gamma: float | None = None
    reconstruction: str | None = None
    classifier_epochs: int = 40
    classifier_patience: int = 5
    classifier_batch_size: int = 128
    train_subset: int | None = None  # cap on training images (desk-scale CIFAR runs)


@dataclass
class ExperimentConfig:
    dataset: str = "mnist"
    z_dims: list[int] = field(default_factory=lambda: [40])
    channel: str = "awgn"
    snr_db: list[float] = field(default_factory=lambda: [0.0, 2.0, 4.0, 6.0, 8.0, 10.0])
    frames_per_point: int = 200
    seed: int = 0
    baselines: list[str] = field(default_factory=lambda: ["direct", "external_codec"])
    data_dir: str = "data/mnist"
    model_dir: str = "models"
    out: str = "results"
    code_bits: int = 8
    param_bits: int | None = None  # None -> 8 for MNIST, 16 for CIFAR-10
    amortize_decoder: bool = False
    ldpc_seed: int = 0
    taps: list[list[float]] = field(default_factory=lambda: [[1.0, 0.0, 0]])  # [re, im, delay]
    fading_taps: bool = False
    samples_per_point: int = 4  # images kept for the report mosaics
    codec: CodecConfig = field(default_factory=CodecConfig)
    train: TrainSection = field(default_factory=TrainSection)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.dataset not in IMAGE_SHAPES:
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if not self.z_dims or any(int(z) != z or z < 1 for z in self.z_dims):
            raise ConfigError(f"z_dims must be positive integers, got {self.z_dims}")
        if self.channel not in FAMILIES:
            raise ConfigError(f"unknown channel family {self.channel!r}")
        if not self.snr_db:
            raise ConfigError("snr_db list is empty")
        if self.frames_per_point < 1:
            raise ConfigError("frames_per_point must be >= 1")
        bad = [b for b in self.baselines if b not in BASELINES]
        if bad:
            raise ConfigError(f"unknown baselines {bad}")
        if self.code_bits not in (8, 16) or self.resolved_param_bits not in (8, 16):
            raise ConfigError("quantization widths must be 8 or 16")

    @property
    def resolved_param_bits(self) -> int:
        if self.param_bits is not None:
            return self.param_bits
        return 16 if self.dataset == "cifar10" else 8

    @property
    def tap_list(self) -> list[tuple[complex, int]]:
        return [(complex(re, im), int(d)) for re, im, d in self.taps]

    def loss_config(self):
        base = DEFAULT_LOSS[self.dataset]
        t = self.train
        return replace(
            base,
            gamma=base.gamma if t.gamma is None else t.gamma,
            reconstruction=base.reconstruction if t.reconstruction is None else t.reconstruction,
        )

    def train_config(self):
        base = DEFAULT_TRAIN[self.dataset]
        t = self.train
        return replace(
            base,
            lr=t.lr,
            batch_size=t.batch_size or base.batch_size,
            max_epochs=t.max_epochs or base.max_epochs,
            patience=t.patience,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return data


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(_build(ExperimentConfig, data, "config"))
    if "codec" in data:
        data["codec"] = CodecConfig(**_build(CodecConfig, data["codec"], "[codec]"))
    if "train" in data:
        data["train"] = TrainSection(**_build(TrainSection, data["train"], "[train]"))
    try:
        return ExperimentConfig(**data)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    return config_from_dict(data)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    """Apply CLI overrides (None values are ignored) and revalidate."""
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw) if kw else cfg


def resolve(path: str, base: Path | None) -> Path:
    p = Path(path)
    return p if p.is_absolute() or base is None else base / p
