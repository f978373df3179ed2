"""Clean baseband modulators for the eleven modulation classes.

Digital payloads are whitened pseudorandom bits; analog payloads are a
seeded audio-like waveform (band-limited noise plus two tones).  Every
signal leaves :func:`generate_signal` at unit mean power.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import IntEnum
from functools import lru_cache

import numpy as np
from scipy import signal as sps_signal

from .iqcore import STREAM_SOURCE, STREAM_START, as_seed, normalize_power, rng


class ModClass(IntEnum):
    BPSK = 0
    QPSK = 1
    PSK8 = 2
    QAM16 = 3
    QAM64 = 4
    GFSK_BFSK = 5
    CPFSK = 6
    PAM4 = 7
    WBFM = 8
    AM_SSB = 9
    AM_DSB = 10


LFSR_PERIOD = 32767
N_CLASSES = len(ModClass)
CLASS_NAMES = [c.name for c in ModClass]

LINEAR_CLASSES = (ModClass.BPSK, ModClass.QPSK, ModClass.PSK8, ModClass.QAM16,
                  ModClass.QAM64, ModClass.PAM4)
FSK_CLASSES = (ModClass.GFSK_BFSK, ModClass.CPFSK)
ANALOG_CLASSES = (ModClass.WBFM, ModClass.AM_SSB, ModClass.AM_DSB)

BITS_PER_SYMBOL = {
    ModClass.BPSK: 1, ModClass.QPSK: 2, ModClass.PSK8: 3, ModClass.QAM16: 4,
    ModClass.QAM64: 6, ModClass.PAM4: 2, ModClass.GFSK_BFSK: 1, ModClass.CPFSK: 1,
}


@dataclass(frozen=True)
class ModemConfig:
    sps: int = 8
    rrc_beta: float = 0.35
    rrc_span: int = 40
    fsk_mod_index: float = 0.5
    fm_deviation: float = 0.375  # fraction of Nyquist
    am_depth: float = 0.8
    hilbert_taps: int = 129
    silence_duty: float = 0.1

    def __post_init__(self):
        if self.sps < 2:
            raise ValueError("sps must be >= 2")
        if not 0.0 <= self.rrc_beta <= 1.0:
            raise ValueError("rrc_beta must lie in [0, 1]")
        if self.rrc_span < 4:
            raise ValueError("rrc_span must be >= 4 symbols")
        if self.hilbert_taps % 2 == 0:
            raise ValueError("hilbert_taps must be odd")
        if not 0.0 <= self.silence_duty < 1.0:
            raise ValueError("silence_duty must lie in [0, 1)")

    def as_dict(self):
        return asdict(self)


def _cls(cls) -> ModClass:
    if isinstance(cls, str):
        return ModClass[cls]
    return ModClass(int(cls))


# -- payload -----------------------------------------------------------------

@lru_cache(maxsize=1)
def _lfsr_period() -> np.ndarray:
    out = np.empty(LFSR_PERIOD, dtype=np.uint8)
    s = 0x7FFF
    for i in range(LFSR_PERIOD):
        bit = ((s >> 14) ^ (s >> 13)) & 1
        out[i] = bit
        s = ((s << 1) | bit) & 0x7FFF
    out.setflags(write=False)
    return out


def lfsr_sequence(n: int, phase: int = 0) -> np.ndarray:
    """``n`` bits of the x^15 + x^14 + 1 m-sequence starting at ``phase``."""
    period = _lfsr_period()
    idx = (np.arange(n) + phase) % LFSR_PERIOD
    return period[idx]


def whiten_bits(bits, seed=None) -> np.ndarray:
    """XOR ``bits`` with the block-randomizer sequence.

    ``seed`` picks the randomizer phase (``None``: phase 0).  Applying twice
    with the same seed restores the input.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    phase = 0 if seed is None else int(rng(seed).integers(0, LFSR_PERIOD))
    return bits ^ lfsr_sequence(bits.size, phase)


def synth_source(kind: str, n: int, seed, silence_duty: float = 0.0) -> np.ndarray:
    """Deterministic stand-in for voice/text payloads.

    ``bits``: whitened pseudorandom bits.  ``audio_like``: band-passed noise
    plus two incommensurate tones, scaled into [-1, 1].  ``silence_duty`` > 0
    zeroes contiguous blocks (one per 2560 samples) covering that fraction of
    time, at a seeded phase.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    seed = as_seed(seed)
    g = rng(seed.child(STREAM_SOURCE))
    if kind == "bits":
        raw = g.integers(0, 2, n, dtype=np.uint8)
        return whiten_bits(raw, seed.child(STREAM_SOURCE + 100))
    if kind != "audio_like":
        raise ValueError(f"unknown source kind {kind!r}")

    pad = 512
    noise = g.standard_normal(n + 2 * pad)
    b, a = sps_signal.butter(4, [0.004, 0.05], btype="bandpass", fs=1.0)
    band = sps_signal.lfilter(b, a, noise)[pad:pad + n]
    band /= np.std(band) + 1e-300
    t = np.arange(n)
    f1 = 0.0071 * (1.0 + 0.2 * g.random())
    f2 = f1 * np.sqrt(2.0)
    ph = g.uniform(0, 2 * np.pi, 2)
    audio = 0.5 * band + 0.6 * np.sin(2 * np.pi * f1 * t + ph[0]) + 0.4 * np.sin(2 * np.pi * f2 * t + ph[1])
    audio /= np.max(np.abs(audio)) + 1e-300
    audio = np.clip(audio, -1.0, 1.0)

    if silence_duty > 0:
        period = 2560
        gap = int(round(silence_duty * period))
        start = int(g.integers(0, period))
        gate = ((t + start) % period) < gap
        audio[gate] = 0.0
    return audio


# -- linear digital -----------------------------------------------------------

def _gray(i):
    return i ^ (i >> 1)


def _gray_inverse_table(m: int) -> np.ndarray:
    """table[label] = position index whose Gray code is ``label``."""
    table = np.empty(m, dtype=np.int64)
    for pos in range(m):
        table[_gray(pos)] = pos
    return table


def _pam_levels(m: int) -> np.ndarray:
    # level position 0..m-1 -> -(m-1), ..., m-1
    return np.arange(m) * 2.0 - (m - 1)


def constellation(cls) -> np.ndarray:
    """Symbol alphabet indexed by bit label (MSB-first integer)."""
    cls = _cls(cls)
    if cls not in LINEAR_CLASSES:
        raise ValueError("not a symbol-mapped class")
    k = BITS_PER_SYMBOL[cls]
    m = 2**k
    labels = np.arange(m)
    if cls == ModClass.BPSK:
        return np.array([1.0 + 0j, -1.0 + 0j])
    if cls in (ModClass.QPSK, ModClass.PSK8):
        pos = _gray_inverse_table(m)[labels]
        return np.exp(1j * np.pi * (2 * pos + 1) / m)
    if cls == ModClass.PAM4:
        pos = _gray_inverse_table(m)[labels]
        return (_pam_levels(m)[pos] / np.sqrt(5.0)).astype(np.complex128)
    side = 2 ** (k // 2)
    inv = _gray_inverse_table(side)
    hi = labels >> (k // 2)
    lo = labels & (side - 1)
    lv = _pam_levels(side)
    pts = lv[inv[hi]] + 1j * lv[inv[lo]]
    return pts / np.sqrt(2.0 * (side**2 - 1) / 3.0)


def bits_to_labels(bits, k: int) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64).reshape(-1, k)
    weights = 1 << np.arange(k - 1, -1, -1)
    return bits @ weights


def map_symbols(cls, bits) -> np.ndarray:
    cls = _cls(cls)
    if cls not in LINEAR_CLASSES:
        raise ValueError("not a symbol-mapped class")
    k = BITS_PER_SYMBOL[cls]
    bits = np.asarray(bits)
    if bits.size % k:
        raise ValueError(f"bit count {bits.size} not divisible by {k} bits/symbol")
    return constellation(cls)[bits_to_labels(bits, k)]


def rrc_taps(beta: float, sps: int, span: int) -> np.ndarray:
    """Unit-energy root-raised-cosine taps, length ``span*sps + 1``."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"rrc beta must lie in [0, 1], got {beta}")
    if sps < 1 or span < 1:
        raise ValueError("sps and span must be positive")
    n = span * sps
    t = (np.arange(n + 1) - n / 2) / sps  # in symbol periods
    h = np.empty_like(t)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            h[i] = 1.0 - beta + 4.0 * beta / np.pi
        elif beta > 0 and abs(abs(ti) - 1.0 / (4.0 * beta)) < 1e-12:
            h[i] = (beta / np.sqrt(2.0)) * (
                (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
                + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta)))
        else:
            num = (np.sin(np.pi * ti * (1 - beta))
                   + 4 * beta * ti * np.cos(np.pi * ti * (1 + beta)))
            den = np.pi * ti * (1 - (4 * beta * ti) ** 2)
            h[i] = num / den
    return h / np.sqrt(np.sum(h**2))


def pulse_shape(symbols, cfg: ModemConfig = ModemConfig()) -> np.ndarray:
    """Zero-stuff by ``sps`` and filter with the RRC.

    Full convolution: length ``len(symbols)*sps + span*sps``.  Symbol ``k``
    peaks at sample ``k*sps + span*sps/2``.
    """
    symbols = np.asarray(symbols, dtype=np.complex128)
    if symbols.size == 0:
        raise ValueError("no symbols to shape")
    up = np.zeros(symbols.size * cfg.sps, dtype=np.complex128)
    up[::cfg.sps] = symbols
    taps = rrc_taps(cfg.rrc_beta, cfg.sps, cfg.rrc_span)
    return np.convolve(up, taps)


# -- frequency / analog --------------------------------------------------------

def modulate_fsk(cls, bits, cfg: ModemConfig = ModemConfig()) -> np.ndarray:
    """Binary FSK with tone offsets ``±h/(2*sps)`` cycles/sample.

    CPFSK integrates frequency so phase is continuous.  GFSK_BFSK switches
    between two free-running oscillators, so phase jumps at symbol edges.
    """
    cls = _cls(cls)
    if cls not in FSK_CLASSES:
        raise ValueError("not an FSK class")
    bits = np.asarray(bits, dtype=np.int64)
    dev = cfg.fsk_mod_index / (2.0 * cfg.sps)
    freq = np.repeat(np.where(bits > 0, dev, -dev), cfg.sps)
    if cls == ModClass.CPFSK:
        phase = 2 * np.pi * np.concatenate(([0.0], np.cumsum(freq)[:-1]))
    else:
        phase = 2 * np.pi * freq * np.arange(freq.size)
    return np.exp(1j * phase)


def hilbert_taps(n: int) -> np.ndarray:
    """Hamming-windowed odd-length Hilbert transformer."""
    if n % 2 == 0:
        raise ValueError("Hilbert filter length must be odd")
    k = np.arange(n) - (n - 1) // 2
    h = np.zeros(n)
    odd = k % 2 != 0
    h[odd] = 2.0 / (np.pi * k[odd])
    return h * np.hamming(n)


def modulate_analog(cls, audio, cfg: ModemConfig = ModemConfig()) -> np.ndarray:
    """Analog modulation of a real message in [-1, 1].

    AM_SSB output is delayed by ``(hilbert_taps-1)/2`` samples and has that
    many transient samples at each end.
    """
    cls = _cls(cls)
    audio = np.asarray(audio, dtype=np.float64)
    if cls not in ANALOG_CLASSES:
        raise ValueError("not an analog class")
    if audio.size and np.max(np.abs(audio)) > 1.0 + 1e-12:
        raise ValueError("audio must lie in [-1, 1]")
    if cls == ModClass.WBFM:
        dev = cfg.fm_deviation * 0.5
        phase = 2 * np.pi * dev * np.cumsum(audio)
        return np.exp(1j * phase)
    if cls == ModClass.AM_DSB:
        return (1.0 + cfg.am_depth * audio).astype(np.complex128)
    h = hilbert_taps(cfg.hilbert_taps)
    d = (cfg.hilbert_taps - 1) // 2
    quad = np.convolve(audio, h)[: audio.size]
    inphase = np.concatenate((np.zeros(d), audio))[: audio.size]
    return inphase + 1j * quad


# -- composition ---------------------------------------------------------------

def generate_signal(cls, n_samples: int, cfg: ModemConfig = ModemConfig(), seed=0) -> np.ndarray:
    """Clean unit-power baseband signal of exactly ``n_samples`` samples.

    Filter transients are trimmed and the start is offset by a seeded
    whole number of samples within one symbol.
    """
    cls = _cls(cls)
    if n_samples < 128:
        raise ValueError("n_samples must be >= 128")
    seed = as_seed(seed)
    offset = int(rng(seed.child(STREAM_START)).integers(0, cfg.sps))
    need = n_samples + offset

    if cls in LINEAR_CLASSES:
        k = BITS_PER_SYMBOL[cls]
        n_sym = -(-need // cfg.sps) + cfg.rrc_span + 1
        bits = synth_source("bits", n_sym * k, seed)
        x = pulse_shape(map_symbols(cls, bits), cfg)
        start = cfg.rrc_span * cfg.sps + offset
        out = x[start:start + n_samples]
    elif cls in FSK_CLASSES:
        n_sym = -(-need // cfg.sps)
        bits = synth_source("bits", n_sym, seed)
        out = modulate_fsk(cls, bits, cfg)[offset:offset + n_samples]
    else:
        silence = cfg.silence_duty if cls in (ModClass.WBFM, ModClass.AM_DSB) else 0.0
        trim = cfg.hilbert_taps - 1 if cls == ModClass.AM_SSB else 0
        audio = synth_source("audio_like", need + trim, seed, silence_duty=silence)
        out = modulate_analog(cls, audio, cfg)[trim + offset:trim + offset + n_samples]
    return normalize_power(out)
