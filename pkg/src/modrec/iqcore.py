"""Complex-sample primitives shared by every stage of the pipeline.

Signals are plain ``numpy`` complex arrays (complex128 internally).
Randomness always flows through :func:`rng`, which maps a
``(master_seed, stream_id, *sub)`` tuple onto an independent PCG64 stream
via ``numpy.random.SeedSequence``.  The same tuple yields the same stream
on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Fixed sub-stream offsets for per-effect randomness within one frame/signal.
STREAM_SOURCE = 1
STREAM_START = 2
STREAM_CLOCK = 11
STREAM_FADING = 12
STREAM_CFO = 13
STREAM_NOISE = 14
STREAM_SPLIT = 21
STREAM_SHUFFLE = 31
STREAM_INIT = 32
STREAM_DROPOUT = 33


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_id: int = 0
    sub: tuple = ()

    def __post_init__(self):
        for v in (self.master_seed, self.stream_id, *self.sub):
            if not 0 <= int(v) < 2**64:
                raise ValueError(f"seed components must be 64-bit unsigned, got {v}")

    def child(self, offset: int) -> "SeedSpec":
        """Sub-stream for one effect, keyed by a fixed offset."""
        return SeedSpec(self.master_seed, self.stream_id, self.sub + (offset,))


def as_seed(seed) -> SeedSpec:
    if isinstance(seed, SeedSpec):
        return seed
    return SeedSpec(int(seed), 0)


def rng(seed) -> np.random.Generator:
    seed = as_seed(seed)
    key = [seed.master_seed, seed.stream_id, *seed.sub]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def mean_power(x) -> float:
    x = np.asarray(x)
    if x.size == 0:
        raise ValueError("empty signal")
    return float(np.mean(x.real**2 + x.imag**2))


def normalize_power(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    p = mean_power(x)
    if p <= 0.0:
        raise ValueError("cannot normalize zero signal")
    out = x / np.sqrt(p)
    # one correction pass brings the rounding error of the scale well under 1e-12
    return out / np.sqrt(mean_power(out))


def gaussian_iq_noise(n: int, variance: float, seed) -> np.ndarray:
    """Circular complex white Gaussian noise with per-sample power ``variance``."""
    if variance < 0 or not np.isfinite(variance):
        raise ValueError(f"noise variance must be finite and >= 0, got {variance}")
    g = rng(seed)
    scale = np.sqrt(variance / 2.0)
    return scale * (g.standard_normal(n) + 1j * g.standard_normal(n))


def check_finite(x, what="signal"):
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{what} contains non-finite samples")
    return x


def to_iq_rows(frames) -> np.ndarray:
    """(N, L) complex -> (N, 1, 2, L) real with rows I and Q."""
    frames = np.asarray(frames)
    out = np.empty((frames.shape[0], 1, 2, frames.shape[-1]), dtype=np.float64)
    out[:, 0, 0, :] = frames.real
    out[:, 0, 1, :] = frames.imag
    return out
