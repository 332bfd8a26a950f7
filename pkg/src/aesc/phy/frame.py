"""Splicing of the quantized semantic code and decoder parameters into one frame.

Wire layout (little-endian)::

    "SFRM" | version u16 | model_id u16 | z_dims u32 | code_bits u8 | param_bits u8
    | code min f32 | code max f32 | param min f32 | param max f32
    | code_len u32 | param_len u32 | code payload | param payload | CRC32 u32

Lengths are payload byte counts; the CRC (IEEE 802.3, zlib.crc32) covers
everything before it.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .quant import QuantSpec, dequantize, quantize

MAGIC = b"SFRM"
VERSION = 1
_HEADER = struct.Struct("<4sHHIBBffffII")
HEADER_BYTES = _HEADER.size
CRC_BYTES = 4
U32_MAX = 0xFFFFFFFF


class FrameError(ValueError):
    """Frame could not be parsed or failed its integrity check (an outage)."""


@dataclass(frozen=True)
class Frame:
    model_id: int
    z_dims: int
    code_spec: QuantSpec
    param_spec: QuantSpec
    code_payload: bytes
    param_payload: bytes

    def to_bytes(self) -> bytes:
        if len(self.code_payload) > U32_MAX or len(self.param_payload) > U32_MAX:
            raise ValueError("payload too large for a u32 length field")
        head = _HEADER.pack(
            MAGIC,
            VERSION,
            self.model_id,
            self.z_dims,
            self.code_spec.bits,
            self.param_spec.bits,
            self.code_spec.min_val,
            self.code_spec.max_val,
            self.param_spec.min_val,
            self.param_spec.max_val,
            len(self.code_payload),
            len(self.param_payload),
        )
        body = head + self.code_payload + self.param_payload
        return body + struct.pack("<I", zlib.crc32(body))

    @property
    def n_bits(self) -> int:
        return 8 * (HEADER_BYTES + len(self.code_payload) + len(self.param_payload) + CRC_BYTES)

    def code_values(self) -> np.ndarray:
        return dequantize(np.frombuffer(self.code_payload, dtype=self.code_spec.code_dtype), self.code_spec)

    def param_values(self) -> np.ndarray:
        return dequantize(np.frombuffer(self.param_payload, dtype=self.param_spec.code_dtype), self.param_spec)


def build_frame(code: np.ndarray | None, params_flat: np.ndarray | None, model_id: int, z_dims: int,
                code_bits: int = 8, param_bits: int = 8) -> Frame:
    """Quantize both payloads; either may be empty (amortized decoder or code-only frames)."""
    code = np.zeros(0) if code is None else np.asarray(code)
    params_flat = np.zeros(0) if params_flat is None else np.asarray(params_flat)
    cq, cspec = quantize(code, code_bits)
    pq, pspec = quantize(params_flat, param_bits)
    return Frame(model_id, z_dims, cspec, pspec, cq.tobytes(), pq.tobytes())


def splice(code: np.ndarray, params_flat: np.ndarray, model_id: int, z_dims: int,
           code_bits: int = 8, param_bits: int = 8) -> bytes:
    """X = SR(l, beta): the frame bytes for one semantic code plus decoder parameters."""
    return build_frame(code, params_flat, model_id, z_dims, code_bits, param_bits).to_bytes()


def frame_length(prefix: bytes) -> int:
    """Total frame size declared by a header (needed to strip channel-code padding)."""
    if len(prefix) < HEADER_BYTES:
        raise FrameError("stream shorter than a frame header")
    f = _HEADER.unpack_from(prefix)
    return HEADER_BYTES + f[10] + f[11] + CRC_BYTES


def parse_frame(data: bytes) -> Frame:
    """Inverse of :meth:`Frame.to_bytes`; raises FrameError on any inconsistency."""
    if len(data) < HEADER_BYTES + CRC_BYTES:
        raise FrameError(f"stream of {len(data)} bytes is shorter than an empty frame")
    (magic, version, model_id, z_dims, cbits, pbits, cmin, cmax, pmin, pmax, clen, plen) = _HEADER.unpack_from(data)
    total = HEADER_BYTES + clen + plen + CRC_BYTES
    if len(data) < total:
        raise FrameError(f"frame declares {total} bytes, stream has {len(data)}")
    body, (crc,) = data[: total - CRC_BYTES], struct.unpack_from("<I", data, total - CRC_BYTES)
    if zlib.crc32(body) != crc:
        raise FrameError("CRC mismatch")
    if magic != MAGIC or version != VERSION:
        raise FrameError(f"bad magic/version {magic!r}/{version}")
    if cbits not in (8, 16) or pbits not in (8, 16):
        raise FrameError(f"bad quantization widths {cbits}/{pbits}")
    cspec, pspec = QuantSpec(cbits, cmin, cmax), QuantSpec(pbits, pmin, pmax)
    if clen % cspec.code_dtype.itemsize or plen % pspec.code_dtype.itemsize:
        raise FrameError("payload length not a whole number of codes")
    code = data[HEADER_BYTES : HEADER_BYTES + clen]
    params = data[HEADER_BYTES + clen : HEADER_BYTES + clen + plen]
    return Frame(model_id, z_dims, cspec, pspec, bytes(code), bytes(params))


def unsplice(data: bytes) -> tuple[np.ndarray, np.ndarray, Frame]:
    """[beta_hat, l_hat] = SR^-1(X): dequantized code, dequantized parameters and the frame."""
    frame = parse_frame(data)
    return frame.code_values(), frame.param_values(), frame
