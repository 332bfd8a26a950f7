"""End-to-end link: bytes -> LDPC -> BPSK -> channel -> (equalizer) -> LLR -> LDPC decode -> bytes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelConfig, channel, demod_llr, equalize_mmse, modulate_bpsk
from .frame import FrameError, unsplice, build_frame
from .ldpc import LdpcCode, make_code


@dataclass
class LinkReport:
    payload_bits: int
    n_codewords: int
    pre_ber: float  # coded bits, hard decisions on channel LLRs
    post_ber: float  # payload bits after LDPC decoding
    decoder_failures: int  # codewords whose syndrome never cleared
    crc_ok: bool | None = None  # None for raw byte transfers without a frame
    param_mse: float | None = None  # received vs original decoder parameters (None on outage)
    frame_bits: int = 0

    @property
    def outage(self) -> bool:
        return self.crc_ok is False


@dataclass
class TransmitResult:
    code: np.ndarray | None  # l_hat, None on outage
    params: np.ndarray | None  # beta_hat, None on outage or when no parameters were sent
    report: LinkReport


def default_code() -> LdpcCode:
    return make_code(1024, 512, 0)


def _llrs(y, state, n_symbols):
    if state.family == "multipath_tdl":
        x_hat, v = equalize_mmse(y, state.impulse, state.noise_var, n_symbols=n_symbols)
        return demod_llr(x_hat, 1.0, v)
    return demod_llr(y, state.h, state.noise_var)


def send_bits(bits: np.ndarray, cfg: ChannelConfig, rng: np.random.Generator,
              code: LdpcCode | None = None) -> tuple[np.ndarray, LinkReport]:
    """Carry a bit vector over one frame of channel uses; zero-pads to whole codewords."""
    code = code or default_code()
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    n_cw = max(1, -(-bits.size // code.k))
    info = np.zeros(n_cw * code.k, dtype=np.uint8)
    info[: bits.size] = bits
    cw = code.encode(info.reshape(n_cw, code.k))
    x = modulate_bpsk(cw.ravel())
    y, state = channel(x, cfg, rng)
    llr = _llrs(y, state, x.size).reshape(n_cw, code.n)
    pre_ber = float(np.mean((llr < 0) != cw.astype(bool)))
    res = code.decode(llr)
    out = res.info_bits.ravel()[: bits.size]
    post_ber = float(np.mean(out != bits)) if bits.size else 0.0
    report = LinkReport(bits.size, n_cw, pre_ber, post_ber, int((~res.success).sum()))
    return out, report


def transmit_bytes(payload: bytes, cfg: ChannelConfig, rng: np.random.Generator,
                   code: LdpcCode | None = None) -> tuple[bytes, LinkReport]:
    """Raw byte transfer (baselines); the receiver is assumed to know the length."""
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))
    out, report = send_bits(bits, cfg, rng, code)
    return np.packbits(out).tobytes(), report


def transmit(code_values, params_flat, cfg: ChannelConfig, rng: np.random.Generator | None = None, *,
             model_id: int = 0, z_dims: int = 0, code_bits: int = 8, param_bits: int = 8,
             ldpc: LdpcCode | None = None) -> TransmitResult:
    """Splice (l, beta) into a frame, send it, and unsplice what arrives.

    ``params_flat`` may be None when the decoder is not part of this frame.
    A CRC or parse failure is reported as an outage rather than raised.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    frame = build_frame(code_values, params_flat, model_id, z_dims, code_bits, param_bits)
    data = frame.to_bytes()
    received, report = transmit_bytes(data, cfg, rng, ldpc)
    report.frame_bits = frame.n_bits
    try:
        l_hat, beta_hat, _ = unsplice(received)
    except FrameError:
        report.crc_ok = False
        return TransmitResult(None, None, report)
    report.crc_ok = True
    if params_flat is not None and np.size(params_flat):
        report.param_mse = float(np.mean((beta_hat.astype(np.float64) - np.asarray(params_flat, dtype=np.float64).ravel()) ** 2))
    else:
        beta_hat = None
    return TransmitResult(l_hat, beta_hat, report)
