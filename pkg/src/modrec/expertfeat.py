"""Cyclic-moment expert features (32 per frame).

For each lag in (0, 8) the lag product ``x[t] * conj(x[t+lag])`` (the frame
itself for lag 0) is transformed four ways (complex, amplitude, phase,
absolute phase), raised to powers 1 and 2, and summarized by its mean and
central second moment.  Complex statistics are reduced by magnitude.
"""

from __future__ import annotations

import csv
from itertools import product

import numpy as np

LAGS = (0, 8)
TRANSFORMS = ("complex", "amplitude", "phase", "absphase")
POWERS = (1, 2)
MOMENTS = (1, 2)
N_FEATURES = len(LAGS) * len(TRANSFORMS) * len(POWERS) * len(MOMENTS)

FEATURE_NAMES = [f"lag{l}_{t}_p{p}_m{m}"
                 for l, t, p, m in product(LAGS, TRANSFORMS, POWERS, MOMENTS)]


def lag_product(x, lag: int) -> np.ndarray:
    """``x`` for lag 0, else ``x[t] * conj(x[t+lag])`` over the last axis."""
    x = np.asarray(x)
    n = x.shape[-1]
    if lag < 0 or lag >= n:
        raise ValueError(f"lag {lag} outside [0, {n})")
    if lag == 0:
        return x
    return x[..., : n - lag] * np.conj(x[..., lag:])


def principal_angle(y) -> np.ndarray:
    """arg in (-pi, pi]; arg(0) is 0."""
    a = np.angle(y)
    return np.where(a <= -np.pi, a + 2 * np.pi, a)


def moment_stats(y, power: int, moment: int) -> np.ndarray:
    """Four statistics (complex, amplitude, phase, abs-phase) along the last axis.

    ``moment`` 1 is the mean, 2 the central second moment ``E|z - mean|^2``;
    the complex mean is returned as its magnitude.
    """
    y = np.asarray(y)
    if y.shape[-1] == 0:
        raise ValueError("empty sequence")
    ang = principal_angle(y)
    series = (y**power, np.abs(y) ** power, ang**power, np.abs(ang) ** power)
    out = []
    for z in series:
        mu = z.mean(axis=-1)
        if moment == 1:
            out.append(np.abs(mu))
        elif moment == 2:
            d = z - mu[..., None]
            out.append((d.real**2 + d.imag**2).mean(axis=-1) if np.iscomplexobj(d)
                       else (d**2).mean(axis=-1))
        else:
            raise ValueError("moment must be 1 or 2")
    return np.stack(out, axis=-1)


def extract_features(frames) -> np.ndarray:
    """Feature vector(s) in ``FEATURE_NAMES`` order.

    Accepts one frame ``(L,)`` or a batch ``(N, L)``.
    """
    x = np.asarray(frames, dtype=np.complex128)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    cols = []
    for lag in LAGS:
        y = lag_product(x, lag)
        # (N, power, moment, transform)
        block = np.stack([np.stack([moment_stats(y, p, m) for m in MOMENTS], axis=1)
                          for p in POWERS], axis=1)
        cols.append(block.transpose(0, 3, 1, 2).reshape(x.shape[0], -1))
    feats = np.concatenate(cols, axis=1)
    return feats[0] if single else feats


class Standardizer:
    """Per-column z-scoring with statistics fit on one matrix only."""

    def __init__(self, mean=None, std=None):
        self.mean = None if mean is None else np.asarray(mean, dtype=np.float64)
        self.std = None if std is None else np.asarray(std, dtype=np.float64)

    def fit(self, X):
        X = np.asarray(X, dtype=np.float64)
        self.mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.std = np.where(std > 0, std, 1.0)
        return self

    def transform(self, X):
        if self.mean is None:
            raise RuntimeError("Standardizer used before fit")
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def fit_transform(self, X):
        return self.fit(X).transform(X)


def featurize_dataset(ds, standardizer: Standardizer | None = None, fit: bool = False):
    """Feature matrix and labels for a :class:`~modrec.dataset.Dataset`.

    Pass ``fit=True`` with a fresh standardizer on the training split, then
    reuse the same object (``fit=False``) for validation and test.
    """
    X = extract_features(ds.iq) if len(ds) else np.empty((0, N_FEATURES))
    if standardizer is not None:
        X = standardizer.fit_transform(X) if fit else standardizer.transform(X)
    return X, ds.labels.copy()


def write_csv(path, X, labels=None, snrs=None):
    header = list(FEATURE_NAMES)
    if labels is not None:
        header.append("label")
    if snrs is not None:
        header.append("snr")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, row in enumerate(np.asarray(X)):
            vals = [f"{v:.10g}" for v in row]
            if labels is not None:
                vals.append(str(int(labels[i])))
            if snrs is not None:
                vals.append(str(int(snrs[i])))
            w.writerow(vals)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[:N_FEATURES] != FEATURE_NAMES:
        raise ValueError("CSV header does not match the feature names")
    arr = np.array(body, dtype=np.float64).reshape(len(body), len(header))
    return header, arr
