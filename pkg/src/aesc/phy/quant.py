"""Uniform min-max quantization of real tensors to 8- or 16-bit codes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SUPPORTED_BITS = (8, 16)


@dataclass(frozen=True)
class QuantSpec:
    bits: int
    min_val: float
    max_val: float

    @property
    def levels(self) -> int:
        return (1 << self.bits) - 1

    @property
    def step(self) -> float:
        return (self.max_val - self.min_val) / self.levels

    @property
    def code_dtype(self):
        return np.dtype("<u1") if self.bits == 8 else np.dtype("<u2")


def _check_bits(bits):
    if bits not in SUPPORTED_BITS:
        raise ValueError(f"unsupported quantization width {bits}; use one of {SUPPORTED_BITS}")


def quantize(values, bits: int) -> tuple[np.ndarray, QuantSpec]:
    """q = round((v - min) / (max - min) * (2**bits - 1)), range taken over the whole tensor.

    The range is stored as float32 (that is what the frame carries), so the
    sender and receiver dequantize identically.
    """
    _check_bits(bits)
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size and not np.all(np.isfinite(v)):
        raise ValueError("cannot quantize non-finite values")
    lo = float(np.float32(v.min())) if v.size else 0.0
    hi = float(np.float32(v.max())) if v.size else 0.0
    spec = QuantSpec(bits, lo, hi)
    if hi <= lo:
        return np.zeros(v.size, dtype=spec.code_dtype), QuantSpec(bits, lo, lo)
    q = np.floor((v - lo) / (hi - lo) * spec.levels + 0.5)
    return np.clip(q, 0, spec.levels).astype(spec.code_dtype), spec


def dequantize(codes, spec: QuantSpec, dtype=np.float32) -> np.ndarray:
    _check_bits(spec.bits)
    q = np.asarray(codes, dtype=np.float64)
    if spec.max_val <= spec.min_val:
        return np.full(q.shape, spec.min_val, dtype=dtype)
    return (spec.min_val + q * ((spec.max_val - spec.min_val) / spec.levels)).astype(dtype)


def roundtrip(values, bits: int) -> np.ndarray:
    """What a receiver sees after an error-free link: dequantize(quantize(v))."""
    codes, spec = quantize(values, bits)
    return dequantize(codes, spec).reshape(np.shape(values))
