"""BPSK modulation, AWGN / slow Rayleigh / tapped-delay-line channels, LLRs and MMSE equalization.

Noise convention: ``noise_var`` is the variance per real dimension,
n = sqrt(noise_var) * (g_re + j g_im) with g ~ N(0, 1). With unit-energy BPSK
symbols this makes the coherent LLR 2 Re(conj(h) y) / noise_var exact, and
for a rate-1/2 code Eb/N0 equals the configured SNR.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("awgn", "slow_rayleigh", "multipath_tdl", "identity")
MAX_SNR_DB = 100.0  # guard for the noiseless limit
MIN_EQ_LENGTH = 16  # 4x memory alone leaves visible ISI on short channels


@dataclass(frozen=True)
class ChannelConfig:
    """``identity`` bypasses the channel entirely (used to check the link is lossless)."""

    family: str = "awgn"
    snr_db: float = 10.0
    taps: tuple = ((1.0, 0),)  # (complex gain, integer delay in symbols)
    fading_taps: bool = False  # multipath only: scale each tap by a fresh CN(0,1) draw per frame
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown channel family {self.family!r}")
        if self.family == "multipath_tdl":
            if len(self.taps) == 0:
                raise ValueError("multipath channel needs at least one tap")
            taps = tuple((complex(a), int(d)) for a, d in self.taps)
            if any(d < 0 for _, d in taps):
                raise ValueError("tap delays must be non-negative")
            power = sum(abs(a) ** 2 for a, _ in taps)
            if not np.isclose(power, 1.0, rtol=1e-9, atol=1e-12):
                raise ValueError(f"tap powers sum to {power}, expected 1")
            object.__setattr__(self, "taps", taps)

    @property
    def noise_var(self) -> float:
        return noise_var(self.snr_db)

    @property
    def memory(self) -> int:
        return max(d for _, d in self.taps) if self.family == "multipath_tdl" else 0


def noise_var(snr_db: float) -> float:
    """sigma^2 = 10^(-SNR/10), per real dimension; SNR is capped at 100 dB."""
    return 10.0 ** (-min(float(snr_db), MAX_SNR_DB) / 10.0)


@dataclass
class ChannelState:
    """What the receiver is assumed to know about one frame's channel."""

    family: str
    noise_var: float
    h: complex = 1.0 + 0j  # flat gain
    impulse: np.ndarray = field(default_factory=lambda: np.ones(1, dtype=np.complex128))


def modulate_bpsk(bits) -> np.ndarray:
    """Bit 0 -> +1, bit 1 -> -1."""
    return 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)


def demod_llr(y, h=1.0, noise_var: float = 1.0) -> np.ndarray:
    """LLR = 2 Re(conj(h) y) / sigma^2; positive means bit 0."""
    if noise_var <= 0:
        raise ValueError("noise variance must be positive")
    return 2.0 * np.real(np.conj(h) * np.asarray(y)) / noise_var


def _complex_normal(rng, size):
    g = rng.standard_normal((2,) + tuple(np.atleast_1d(size)))
    return (g[0] + 1j * g[1]) / np.sqrt(2.0)


def impulse_response(taps) -> np.ndarray:
    taps = list(taps)
    memory = max(d for _, d in taps)
    h = np.zeros(memory + 1, dtype=np.complex128)
    for a, d in taps:
        h[d] += a
    return h


def channel(x, cfg: ChannelConfig, rng: np.random.Generator) -> tuple[np.ndarray, ChannelState]:
    """Pass one frame of symbols through the channel.

    Channel draws (fading gains) come from ``rng`` before the noise, so a
    fixed-gain channel consumes exactly the same random numbers as AWGN.
    Multipath output has len(x) + memory samples.
    """
    x = np.asarray(x, dtype=np.complex128)
    s2 = cfg.noise_var
    if cfg.family == "identity":
        return x.copy(), ChannelState("identity", noise_var(MAX_SNR_DB))
    if cfg.family == "awgn":
        clean, state = x, ChannelState("awgn", s2)
    elif cfg.family == "slow_rayleigh":
        h = complex(_complex_normal(rng, 1)[0])
        clean, state = h * x, ChannelState("slow_rayleigh", s2, h=h)
    else:
        gains = np.array([a for a, _ in cfg.taps], dtype=np.complex128)
        if cfg.fading_taps:
            gains = gains * _complex_normal(rng, len(gains))
        delays = [d for _, d in cfg.taps]
        clean = np.zeros(len(x) + max(delays), dtype=np.complex128)
        for a, d in zip(gains, delays):
            clean[d : d + len(x)] += a * x
        state = ChannelState("multipath_tdl", s2, impulse=impulse_response(zip(gains, delays)))
    g = rng.standard_normal((2, len(clean)))
    return clean + np.sqrt(s2) * (g[0] + 1j * g[1]), state


def mmse_filter(impulse, noise_var: float, length: int | None = None, delay: int | None = None,
                ridge: float = 1e-9) -> tuple[np.ndarray, int, float]:
    """Linear MMSE FIR equalizer for a known impulse response.

    Returns (taps g, decision delay, bias mu) where the estimate of x[t - delay]
    is sum_i conj(g[i]) r[t - i] and mu = g^H H e_delay is its gain on the wanted symbol.
    """
    h = np.asarray(impulse, dtype=np.complex128)
    memory = len(h) - 1
    L = max(MIN_EQ_LENGTH, 4 * memory) if length is None else length
    D = L // 2 if delay is None else delay
    # rows: r[t - i], columns: x[t - j] for j in [0, L + memory)
    Hc = np.zeros((L, L + memory), dtype=np.complex128)
    for i in range(L):
        Hc[i, i : i + memory + 1] = h
    R = Hc @ Hc.conj().T + (2.0 * noise_var + ridge) * np.eye(L)
    p = Hc[:, D]
    g = np.linalg.solve(R, p)
    mu = float(np.real(np.vdot(g, p)))
    return g, D, mu


def equalize_mmse(y, taps_or_impulse, noise_var: float, n_symbols: int | None = None,
                  length: int | None = None) -> tuple[np.ndarray, float]:
    """Equalize a multipath frame; returns (unbiased symbol estimates, per-dimension noise variance).

    ``taps_or_impulse`` is either a list of (gain, delay) pairs or the impulse
    response array. The noise estimate (1 - mu) / (2 mu) is what the unbiased
    MMSE output leaves as residual error, split over two real dimensions.
    """
    if isinstance(taps_or_impulse, np.ndarray):
        h = taps_or_impulse
    else:
        taps = list(taps_or_impulse)
        if not taps:
            raise ValueError("empty tap list")
        h = impulse_response(taps)
    y = np.asarray(y, dtype=np.complex128)
    n = len(y) - (len(h) - 1) if n_symbols is None else n_symbols
    g, D, mu = mmse_filter(h, noise_var, length=length)
    z = np.convolve(y, np.conj(g))
    x_hat = z[D : D + n] / mu
    resid = max((1.0 - mu) / (2.0 * mu), 1e-12)
    return x_hat, resid
