"""Reference schemes: direct 8-bit pixel transmission and an external image codec.

External codec contract: ``command + ["encode", "--quality", Q, "--shape", "C,H,W"]``
reads raw uint8 pixels (channel-first) on stdin and writes the compressed
stream on stdout; ``command + ["decode", "--shape", "C,H,W"]`` is the inverse.
A non-zero exit status or a wrong-sized output on decode is an outage.
"""

from __future__ import annotations

import logging
import shutil
import subprocess
from dataclasses import dataclass, field

import numpy as np

from ..phy.channel import ChannelConfig
from ..phy.ldpc import LdpcCode
from ..phy.link import LinkReport, transmit_bytes

log = logging.getLogger(__name__)


def to_bytes(image: np.ndarray) -> bytes:
    """8-bit pixel quantization of a [0, 1] image."""
    return np.clip(np.floor(np.asarray(image, dtype=np.float64) * 255 + 0.5), 0, 255).astype(np.uint8).tobytes()


def from_bytes(data: bytes, shape) -> np.ndarray:
    return (np.frombuffer(data, dtype=np.uint8).reshape(shape) / 255.0).astype(np.float32)


def baseline_direct(image, cfg: ChannelConfig, rng: np.random.Generator,
                    ldpc: LdpcCode | None = None) -> tuple[np.ndarray, LinkReport]:
    """Raw pixels through the coded link; bit errors show up as corrupted pixels, never an outage."""
    image = np.asarray(image)
    received, report = transmit_bytes(to_bytes(image), cfg, rng, ldpc)
    return from_bytes(received, image.shape), report


class CodecUnavailable(RuntimeError):
    pass


@dataclass
class ExternalCodec:
    command: list[str]
    quality: int = 60
    timeout: float = 30.0
    _encoded: dict = field(default_factory=dict, repr=False)
    _decoded: dict = field(default_factory=dict, repr=False)

    def check(self) -> None:
        if not self.command or shutil.which(self.command[0]) is None:
            raise CodecUnavailable(f"codec executable {self.command[:1]} not found")

    def _call(self, args, data: bytes) -> subprocess.CompletedProcess:
        try:
            return subprocess.run(self.command + args, input=data, capture_output=True, timeout=self.timeout)
        except FileNotFoundError:
            raise CodecUnavailable(f"codec executable {self.command[:1]} not found") from None

    @staticmethod
    def _shape_arg(shape) -> str:
        return ",".join(str(int(s)) for s in shape)

    def encode(self, image: np.ndarray) -> bytes:
        raw = to_bytes(image)
        key = (raw, tuple(image.shape))
        if key not in self._encoded:
            proc = self._call(["encode", "--quality", str(self.quality), "--shape", self._shape_arg(image.shape)], raw)
            if proc.returncode != 0:
                raise RuntimeError(f"codec failed to encode: {proc.stderr.decode(errors='replace').strip()}")
            self._encoded[key] = proc.stdout
        return self._encoded[key]

    def decode(self, data: bytes, shape) -> np.ndarray | None:
        """None when the stream cannot be decoded (the codec's cliff)."""
        key = (data, tuple(shape))
        if key not in self._decoded:
            proc = self._call(["decode", "--shape", self._shape_arg(shape)], data)
            ok = proc.returncode == 0 and len(proc.stdout) == int(np.prod(shape))
            self._decoded[key] = from_bytes(proc.stdout, shape) if ok else None
        return self._decoded[key]


def baseline_external_codec(image, codec: ExternalCodec, cfg: ChannelConfig, rng: np.random.Generator,
                            ldpc: LdpcCode | None = None) -> tuple[np.ndarray | None, LinkReport, int]:
    """Compressed bytes through the coded link; returns (image or None on outage, report, compressed size)."""
    image = np.asarray(image)
    payload = codec.encode(image)
    received, report = transmit_bytes(payload, cfg, rng, ldpc)
    out = codec.decode(received, image.shape)
    report.crc_ok = out is not None
    report.frame_bits = 8 * len(payload)
    return out, report, len(payload)
