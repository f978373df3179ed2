"""Channel impairments: clock drift, multipath fading, carrier drift, noise.

:func:`apply_channel` runs them in the order
clock drift -> fading -> carrier offset -> AWGN, each on its own seeded
sub-stream.  SNR is measured against the realized power of the faded
signal, so the label is exact per signal.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .iqcore import (STREAM_CFO, STREAM_CLOCK, STREAM_FADING, STREAM_NOISE,
                     as_seed, gaussian_iq_noise, mean_power, rng)

SNR_LEVELS = tuple(range(-20, 21, 2))
MAX_SNR_DB = 60.0
SINUSOIDS_PER_TAP = 16


@dataclass(frozen=True)
class ChannelParams:
    cfo_walk_std: float = 1e-4
    cfo_init_max: float = 0.01
    clk_walk_std: float = 1e-6
    clk_init_max: float = 5e-5
    n_taps: int = 4
    pdp_decay: float = 1.5
    max_doppler: float = 0.001
    snr_db: float = 10.0
    fading: bool = True

    def __post_init__(self):
        for name in ("cfo_walk_std", "cfo_init_max", "clk_walk_std", "clk_init_max",
                     "max_doppler"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.n_taps < 1:
            raise ValueError("n_taps must be >= 1")
        if self.pdp_decay <= 0:
            raise ValueError("pdp_decay must be > 0")

    @classmethod
    def ideal(cls, snr_db: float = MAX_SNR_DB) -> "ChannelParams":
        """No drift, no fading."""
        return cls(0.0, 0.0, 0.0, 0.0, 1, 1.0, 0.0, snr_db, fading=False)

    def with_snr(self, snr_db: float) -> "ChannelParams":
        return replace(self, snr_db=float(snr_db))

    def as_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def carrier_walk(n: int, p: ChannelParams, seed):
    """Carrier phase trajectory and the initial frequency (cycles/sample).

    Frequency starts uniform in ``±cfo_init_max`` and random-walks with
    per-sample steps of ``cfo_walk_std`` rad/sample; phase starts at 0.
    """
    g = rng(seed)
    f0 = g.uniform(-p.cfo_init_max, p.cfo_init_max) if p.cfo_init_max > 0 else 0.0
    omega = np.full(n, 2 * np.pi * f0)
    if p.cfo_walk_std > 0 and n > 1:
        omega[1:] += np.cumsum(g.normal(0.0, p.cfo_walk_std, n - 1))
    phase = np.concatenate(([0.0], np.cumsum(omega[:-1])))
    return phase, f0


def apply_cfo(x, p: ChannelParams, seed) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    phase, _ = carrier_walk(x.size, p, seed)
    return x * np.exp(1j * phase)


def resample_ratio(n: int, p: ChannelParams, seed) -> np.ndarray:
    g = rng(seed)
    r0 = g.uniform(-p.clk_init_max, p.clk_init_max) if p.clk_init_max > 0 else 0.0
    r = np.full(n, 1.0 + r0)
    if p.clk_walk_std > 0 and n > 1:
        r[1:] += np.cumsum(g.normal(0.0, p.clk_walk_std, n - 1))
    return r


def cubic_interp(x, pos) -> np.ndarray:
    """4-point Lagrange interpolation of ``x`` at fractional indices ``pos``.

    Exact for cubic polynomials.  Neighbours beyond either end are
    edge-replicated; ``pos`` must lie in ``[0, len(x) - 1]``.
    """
    x = np.asarray(x)
    pos = np.asarray(pos, dtype=np.float64)
    if pos.size and (pos.min() < 0 or pos.max() > x.size - 1):
        raise ValueError("insufficient input margin")
    i = np.floor(pos).astype(np.int64)
    mu = pos - i
    xp = np.concatenate((x[:1], x, x[-1:], x[-1:]))
    xm1, x0, x1, x2 = (xp[i + k] for k in range(4))
    w_m1 = -mu * (mu - 1) * (mu - 2) / 6.0
    w0 = (mu + 1) * (mu - 1) * (mu - 2) / 2.0
    w1 = -(mu + 1) * mu * (mu - 2) / 2.0
    w2 = (mu + 1) * mu * (mu - 1) / 6.0
    return w_m1 * xm1 + w0 * x0 + w1 * x1 + w2 * x2


def apply_clock_drift(x, p: ChannelParams, seed, n_out: int | None = None) -> np.ndarray:
    """Resample ``x`` along a random-walk sample clock.

    Output sample ``t`` is read at input position ``sum(r[:t])``, with ratio
    ``r`` walking around 1.0.
    """
    x = np.asarray(x, dtype=np.complex128)
    n_out = x.size if n_out is None else n_out
    r = resample_ratio(n_out, p, seed)
    pos = np.concatenate(([0.0], np.cumsum(r[:-1])))
    if pos[-1] > x.size - 1 + 1e-9:
        raise ValueError("insufficient input margin")
    pos = np.minimum(pos, x.size - 1)
    return cubic_interp(x, pos)


def tap_powers(p: ChannelParams) -> np.ndarray:
    w = np.exp(-np.arange(p.n_taps) / p.pdp_decay)
    return w / w.sum()


def fading_taps(n: int, p: ChannelParams, seed) -> np.ndarray:
    """Sum-of-sinusoids Rayleigh tap processes, shape ``(n_taps, n)``.

    Each tap sums 16 equal-power sinusoids with random arrival angles and
    phases, Doppler-limited to ``max_doppler`` cycles/sample.
    """
    g = rng(seed)
    m = SINUSOIDS_PER_TAP
    t = np.arange(n)
    powers = tap_powers(p)
    h = np.empty((p.n_taps, n), dtype=np.complex128)
    for k in range(p.n_taps):
        alpha = g.uniform(0, 2 * np.pi, m)
        phi = g.uniform(0, 2 * np.pi, m)
        fd = p.max_doppler * np.cos(alpha)
        h[k] = np.sqrt(powers[k] / m) * np.exp(1j * (2 * np.pi * np.outer(t, fd) + phi)).sum(axis=1)
    return h


def apply_fading(x, p: ChannelParams, seed, unit_gain: bool = False, valid: bool = False) -> np.ndarray:
    """Time-varying FIR channel ``y[t] = sum_k h_k[t] x[t-k]``.

    ``valid=False`` treats samples before the start as zero and returns
    ``len(x)`` samples; ``valid=True`` drops the first ``n_taps-1`` outputs.
    ``unit_gain`` rescales the realized taps to unit total power.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.size
    h = fading_taps(n, p, seed)
    if unit_gain:
        h /= np.sqrt(np.sum(np.mean(np.abs(h) ** 2, axis=1)))
    y = np.zeros(n, dtype=np.complex128)
    for k in range(p.n_taps):
        y[k:] += h[k, k:] * x[: n - k]
    if valid:
        return y[p.n_taps - 1:]
    return y


def add_awgn(x, snr_db: float, seed, return_noise: bool = False):
    """Add white noise at ``snr_db`` relative to the realized power of ``x``."""
    x = np.asarray(x, dtype=np.complex128)
    if not np.isfinite(snr_db) or snr_db > MAX_SNR_DB:
        raise ValueError(f"snr_db must be finite and <= {MAX_SNR_DB}, got {snr_db}")
    p = mean_power(x)
    if p <= 0:
        raise ValueError("cannot set SNR on a zero-power signal")
    noise = gaussian_iq_noise(x.size, p * 10.0 ** (-snr_db / 10.0), seed)
    if return_noise:
        return x + noise, noise
    return x + noise


def input_margin(n_out: int, p: ChannelParams) -> int:
    """Extra input samples :func:`apply_channel` needs beyond ``n_out``."""
    n = n_out + p.n_taps - 1
    drift = n * (p.clk_init_max + 6 * p.clk_walk_std * np.sqrt(n) + 1e-12)
    return int(np.ceil(drift)) + p.n_taps + 4


def apply_channel(x, p: ChannelParams, seed, n_out: int | None = None,
                  return_noise: bool = False):
    """Full impairment chain; returns ``n_out`` samples.

    ``x`` must carry at least :func:`input_margin` extra samples when
    ``n_out`` is given; by default ``n_out = len(x) - input_margin``.
    """
    x = np.asarray(x, dtype=np.complex128)
    seed = as_seed(seed)
    if n_out is None:
        n_out = x.size - input_margin(x.size, p)
        if n_out < 1:
            raise ValueError("insufficient input margin")
    y = apply_clock_drift(x, p, seed.child(STREAM_CLOCK), n_out + p.n_taps - 1)
    if p.fading:
        y = apply_fading(y, p, seed.child(STREAM_FADING), valid=True)
    else:
        y = y[p.n_taps - 1:]
    y = apply_cfo(y, p, seed.child(STREAM_CFO))
    return add_awgn(y, p.snr_db, seed.child(STREAM_NOISE), return_noise=return_noise)
