"""Accuracy-vs-SNR curves, confusion matrices, timing, and report files."""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import SNR_LEVELS
from .modem import CLASS_NAMES, N_CLASSES


@dataclass
class ConfusionMatrix:
    counts: np.ndarray
    snr_filter: int | None = None

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else float("nan")

    def off_diagonal_ranking(self):
        """Off-diagonal cells as ``(count, true, pred)``, largest first."""
        cells = [(int(self.counts[t, p]), t, p) for t in range(self.counts.shape[0])
                 for p in range(self.counts.shape[1]) if t != p and self.counts[t, p] > 0]
        return sorted(cells, key=lambda c: (-c[0], c[1], c[2]))

    def normalized(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, self.counts / np.maximum(rows, 1), 0.0)


def confusion(preds, labels, snrs=None, snr_filter=None, n_classes: int = N_CLASSES) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ValueError("preds and labels must have equal length")
    for name, arr in (("label", labels), ("prediction", preds)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} out of range [0, {n_classes})")
    if snr_filter is not None:
        if snrs is None:
            raise ValueError("snr_filter needs per-example snrs")
        keep = np.asarray(snrs) == snr_filter
        preds, labels = preds[keep], labels[keep]
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    return ConfusionMatrix(counts, snr_filter)


@dataclass
class SnrCurve:
    snr: list
    accuracy: list     # None for unpopulated bins
    n: list

    def populated(self):
        return [(s, a, n) for s, a, n in zip(self.snr, self.accuracy, self.n) if n > 0]

    def overall(self) -> float:
        pop = self.populated()
        total = sum(n for _, _, n in pop)
        return sum(a * n for _, a, n in pop) / total if total else float("nan")


def accuracy_by_snr(preds, labels, snrs, levels=SNR_LEVELS) -> SnrCurve:
    preds, labels, snrs = (np.asarray(a) for a in (preds, labels, snrs))
    if not preds.shape == labels.shape == snrs.shape:
        raise ValueError("preds, labels and snrs must have equal length")
    acc, ns = [], []
    for s in levels:
        m = snrs == s
        n = int(m.sum())
        ns.append(n)
        acc.append(float(np.mean(preds[m] == labels[m])) if n else None)
    return SnrCurve(list(levels), acc, ns)


def binomial_ci(p: float, n: int, z: float = 3.0):
    """Normal-approximation interval ``p ± z*sqrt(p(1-p)/n)``."""
    half = z * np.sqrt(p * (1 - p) / n)
    return p - half, p + half


# -- timing --------------------------------------------------------------------------

def environment_note() -> str:
    return (f"python {platform.python_version()} numpy {np.__version__} "
            f"{platform.machine()} {platform.system()}")


@dataclass
class TimingReport:
    rows: list = field(default_factory=list)
    environment: str = field(default_factory=environment_note)

    def add(self, name, train_s, classify_s, n_train, n_classify):
        self.rows.append({
            "model": name,
            "train_seconds": list(train_s),
            "train_median": statistics.median(train_s) if train_s else None,
            "classify_seconds": list(classify_s),
            "classify_median": statistics.median(classify_s),
            "n_train": n_train,
            "n_classify": n_classify,
        })

    def as_dict(self):
        return {"environment": self.environment, "rows": self.rows}


def time_call(fn, repetitions: int = 5, warmup: bool = True):
    """Wall-clock seconds of ``repetitions`` calls, after one untimed warm-up."""
    if warmup:
        fn()
    out = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return out


def benchmark(models: dict, X_train, y_train, X_test, repetitions: int = 5,
              train_repetitions: int | None = None) -> TimingReport:
    """Time training and classification of each model.

    ``models`` maps a name to ``(fit, predict)`` where ``fit(X, y)`` returns a
    trained object and ``predict(obj, X)`` classifies.  Training is timed
    ``train_repetitions`` times (default ``repetitions``) without warm-up.
    """
    rep = TimingReport()
    for name, (fit, pred) in models.items():
        tr = []
        obj = None
        for _ in range(train_repetitions or repetitions):
            t0 = time.perf_counter()
            obj = fit(X_train[name] if isinstance(X_train, dict) else X_train, y_train)
            tr.append(time.perf_counter() - t0)
        Xt = X_test[name] if isinstance(X_test, dict) else X_test
        cl = time_call(lambda: pred(obj, Xt), repetitions)
        rep.add(name, tr, cl, len(y_train), len(Xt))
    return rep


# -- reports -------------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return None
    if isinstance(v, float):
        return float(f"{v:.6f}")
    return v


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def write_curve_svg(path, curves: dict, width=640, height=400):
    """Minimal line plot of accuracy vs SNR; one polyline per classifier."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"]
    x0, y0, x1, y1 = 60, 20, width - 20, height - 40

    def sx(s):
        return x0 + (s + 20) / 40 * (x1 - x0)

    def sy(a):
        return y1 - a * (y1 - y0)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" fill="none" stroke="#000"/>']
    for s in range(-20, 21, 10):
        parts.append(f'<text x="{sx(s):.1f}" y="{y1 + 16}" font-size="11" text-anchor="middle">{s}</text>')
    for a in (0.0, 0.5, 1.0):
        parts.append(f'<text x="{x0 - 6}" y="{sy(a) + 4:.1f}" font-size="11" text-anchor="end">{a:.1f}</text>')
    parts.append(f'<text x="{(x0 + x1) / 2:.0f}" y="{height - 6}" font-size="12" text-anchor="middle">SNR (dB)</text>')
    for i, (name, curve) in enumerate(sorted(curves.items())):
        pts = " ".join(f"{sx(s):.1f},{sy(a):.1f}" for s, a, _ in curve.populated())
        c = colors[i % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{c}" stroke-width="2" points="{pts}"/>')
        parts.append(f'<text x="{x0 + 8}" y="{y0 + 16 + 14 * i}" font-size="11" fill="{c}">{name}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def emit_report(out_dir, config: dict, model_name: str, preds, labels, snrs,
                confusion_snrs=(-6, 0, 18), timing: TimingReport | None = None,
                plot: bool = True) -> dict:
    """Write summary.json, accuracy_by_snr.csv, confusion_<snr>.csv (+ svg).

    Returns the summary dict.  Output is byte-identical for identical inputs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curve = accuracy_by_snr(preds, labels, snrs)
    cm_all = confusion(preds, labels)
    summary = {
        "model": model_name,
        "config": config,
        "config_hash": config_hash(config),
        "n_examples": int(len(labels)),
        "overall_accuracy": _fmt(cm_all.accuracy),
        "accuracy_by_snr": [{"snr": s, "accuracy": _fmt(a), "n": n}
                            for s, a, n in zip(curve.snr, curve.accuracy, curve.n)],
        "confusion_files": [],
        "timing": timing.as_dict() if timing else None,
    }
    with open(out / "accuracy_by_snr.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["snr", "accuracy", "n"])
        for s, a, n in curve.populated():
            w.writerow([s, f"{a:.6f}", n])
    for s in confusion_snrs:
        cm = confusion(preds, labels, snrs, snr_filter=s)
        if cm.total == 0:
            continue
        name = f"confusion_{s}.csv"
        write_confusion_csv(out / name, cm)
        summary["confusion_files"].append(name)
    write_confusion_csv(out / "confusion_all.csv", cm_all)
    summary["confusion_files"].append("confusion_all.csv")
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    if plot:
        write_curve_svg(out / "snr_curve.svg", {model_name: curve})
    return summary


def write_confusion_csv(path, cm: ConfusionMatrix):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\pred"] + CLASS_NAMES[: cm.counts.shape[1]])
        for i, row in enumerate(cm.counts):
            w.writerow([CLASS_NAMES[i]] + [int(v) for v in row])


def read_summary(path) -> dict:
    """Load and structurally validate a summary.json."""
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("model", "config", "config_hash", "overall_accuracy", "accuracy_by_snr"):
        if key not in d:
            raise ValueError(f"summary missing key {key!r}")
    if config_hash(d["config"]) != d["config_hash"]:
        raise ValueError("summary config hash does not match its config")
    return d
