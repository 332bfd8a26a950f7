"""Physical layer: quantization, framing, LDPC, modulation and channels."""

from .channel import ChannelConfig, ChannelState, channel, demod_llr, equalize_mmse, modulate_bpsk, noise_var
from .frame import Frame, FrameError, build_frame, frame_length, parse_frame, splice, unsplice
from .ldpc import DecodeResult, LdpcCode, gf2_rank, has_four_cycle, make_code
from .link import LinkReport, TransmitResult, send_bits, transmit, transmit_bytes
from .quant import QuantSpec, dequantize, quantize, roundtrip

__all__ = [
    "ChannelConfig", "ChannelState", "channel", "demod_llr", "equalize_mmse", "modulate_bpsk", "noise_var",
    "Frame", "FrameError", "build_frame", "frame_length", "parse_frame", "splice", "unsplice",
    "DecodeResult", "LdpcCode", "gf2_rank", "has_four_cycle", "make_code",
    "LinkReport", "TransmitResult", "send_bits", "transmit", "transmit_bytes",
    "QuantSpec", "dequantize", "quantize", "roundtrip",
]
