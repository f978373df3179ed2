"""Labeled frame datasets: generation, binary storage, stratified splits.

Binary layout (little-endian)::

    "RMD1"            4 bytes magic
    version           u16   (FORMAT_VERSION)
    n_frames          u64
    frame_len         u32
    n_classes         u16
    n_frames records: class u16, snr i16, frame_len x (I f32, Q f32)
    crc32             u32   over every preceding byte

A UTF-8 JSON manifest with the same basename (``.json``) sits next to the
binary file and records the generation config.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import FRAME_LEN
from .channel import SNR_LEVELS, ChannelParams, apply_channel, input_margin
from .iqcore import STREAM_SPLIT, SeedSpec, normalize_power, rng
from .modem import CLASS_NAMES, N_CLASSES, ModClass, ModemConfig, generate_signal

MAGIC = b"RMD1"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHQIH")
RECORD_HEAD = struct.Struct("<Hh")


class DatasetFormatError(ValueError):
    """Raised when a dataset file fails a structural or integrity check."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None and "offset" not in message:
            message = f"{message} at offset {offset}"
        super().__init__(message)


def segment(stream, window: int = FRAME_LEN, step: int = 64) -> np.ndarray:
    """Rectangular windows of ``window`` samples every ``step`` samples."""
    stream = np.asarray(stream)
    if window < 1 or step < 1:
        raise ValueError("window and step must be positive")
    if stream.size < window:
        raise ValueError(f"stream of {stream.size} samples is shorter than window {window}")
    count = (stream.size - window) // step + 1
    idx = np.arange(count)[:, None] * step + np.arange(window)[None, :]
    return stream[idx]


@dataclass
class Dataset:
    iq: np.ndarray            # (N, FRAME_LEN) complex64
    labels: np.ndarray        # (N,) int64 class ids
    snrs: np.ndarray          # (N,) int64 dB
    groups: np.ndarray        # (N,) source-signal id; windows of one signal share it
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        self.iq = np.asarray(self.iq, dtype=np.complex64).reshape(-1, FRAME_LEN)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.snrs = np.asarray(self.snrs, dtype=np.int64)
        self.groups = np.asarray(self.groups, dtype=np.int64)
        n = self.iq.shape[0]
        if not (self.labels.shape == self.snrs.shape == self.groups.shape == (n,)):
            raise ValueError("frames, labels, snrs and groups must have equal length")

    def __len__(self):
        return self.iq.shape[0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        man = dict(self.manifest)
        man["counts"] = cell_counts(self.labels[idx], self.snrs[idx])
        return Dataset(self.iq[idx], self.labels[idx], self.snrs[idx], self.groups[idx], man)

    def where(self, classes=None, snrs=None) -> "Dataset":
        keep = np.ones(len(self), dtype=bool)
        if classes is not None:
            keep &= np.isin(self.labels, [int(ModClass[c]) if isinstance(c, str) else int(c)
                                          for c in classes])
        if snrs is not None:
            keep &= np.isin(self.snrs, list(snrs))
        return self.subset(np.flatnonzero(keep))

    def equals(self, other: "Dataset") -> bool:
        return (np.array_equal(self.iq.view(np.uint32), other.iq.view(np.uint32))
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.snrs, other.snrs))


def cell_counts(labels, snrs) -> dict:
    out = {}
    for c, s in zip(np.asarray(labels).tolist(), np.asarray(snrs).tolist()):
        key = f"{CLASS_NAMES[c]}@{s}"
        out[key] = out.get(key, 0) + 1
    return dict(sorted(out.items(), key=lambda kv: (ModClass[kv[0].split("@")[0]], int(kv[0].split("@")[1]))))


# -- generation ------------------------------------------------------------------

@dataclass(frozen=True)
class GenerationConfig:
    classes: tuple = tuple(CLASS_NAMES)
    snrs: tuple = SNR_LEVELS
    signals_per_cell: int = 200
    windows_per_signal: int = 20
    window: int = FRAME_LEN
    step: int = 64
    seed: int = 0
    channel: ChannelParams = ChannelParams()
    modem: ModemConfig = ModemConfig()
    workers: int = 1

    def __post_init__(self):
        for s in self.snrs:
            if int(s) not in SNR_LEVELS:
                raise ValueError(f"SNR {s} is not one of the 2 dB levels in [-20, 20]")
        for c in self.classes:
            ModClass[c] if isinstance(c, str) else ModClass(int(c))
        if self.signals_per_cell < 0 or self.windows_per_signal < 1:
            raise ValueError("signals_per_cell must be >= 0 and windows_per_signal >= 1")

    @property
    def signal_len(self) -> int:
        return self.window + (self.windows_per_signal - 1) * self.step

    def class_ids(self):
        return [int(ModClass[c]) if isinstance(c, str) else int(c) for c in self.classes]

    def as_dict(self):
        return {
            "classes": [CLASS_NAMES[c] for c in self.class_ids()],
            "snrs": [int(s) for s in self.snrs],
            "signals_per_cell": self.signals_per_cell,
            "windows_per_signal": self.windows_per_signal,
            "window": self.window,
            "step": self.step,
            "seed": self.seed,
            "channel": self.channel.as_dict(),
            "modem": self.modem.as_dict(),
        }


def signal_stream_id(cls_id: int, snr: int, index: int) -> int:
    """Stable stream id of one source signal; independent of cell sizes."""
    return ((cls_id * 64 + (snr + 20)) << 32) + index


def render_signal(cfg: GenerationConfig, cls_id: int, snr: int, index: int) -> np.ndarray:
    """Frames of one source signal: modulate, impair, window, renormalize."""
    seed = SeedSpec(cfg.seed, signal_stream_id(cls_id, snr, index))
    chan = cfg.channel.with_snr(snr)
    n_out = cfg.signal_len
    x = generate_signal(cls_id, n_out + input_margin(n_out, chan), cfg.modem, seed)
    y = apply_channel(x, chan, seed, n_out=n_out)
    frames = segment(y, cfg.window, cfg.step)
    return np.stack([normalize_power(f) for f in frames])


def _render_cell(args):
    cfg, cls_id, snr = args
    if cfg.signals_per_cell == 0:
        return np.empty((0, cfg.window), dtype=np.complex64)
    return np.concatenate([render_signal(cfg, cls_id, snr, j)
                           for j in range(cfg.signals_per_cell)]).astype(np.complex64)


def build_dataset(cfg: GenerationConfig) -> Dataset:
    """Generate every (class, snr) cell in class-major, SNR-minor order."""
    if cfg.window != FRAME_LEN:
        raise ValueError(f"frames must be {FRAME_LEN} samples")
    cells = [(cfg, c, int(s)) for c in cfg.class_ids() for s in cfg.snrs]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            blocks = list(pool.map(_render_cell, cells))
    else:
        blocks = [_render_cell(a) for a in cells]

    per_cell = cfg.signals_per_cell * cfg.windows_per_signal
    labels, snrs, groups = [], [], []
    for i, (_, c, s) in enumerate(cells):
        labels.append(np.full(per_cell, c))
        snrs.append(np.full(per_cell, s))
        groups.append(i * max(cfg.signals_per_cell, 1) + np.arange(per_cell) // cfg.windows_per_signal)
    iq = np.concatenate(blocks) if blocks else np.empty((0, FRAME_LEN), np.complex64)
    labels = np.concatenate(labels) if labels else np.empty(0, np.int64)
    snrs = np.concatenate(snrs) if snrs else np.empty(0, np.int64)
    groups = np.concatenate(groups) if groups else np.empty(0, np.int64)
    manifest = {
        "format_version": FORMAT_VERSION,
        "class_map": {name: i for i, name in enumerate(CLASS_NAMES)},
        "generation": cfg.as_dict(),
        "n_frames": int(iq.shape[0]),
        "counts": cell_counts(labels, snrs),
    }
    return Dataset(iq, labels, snrs, groups, manifest)


# -- serialization -----------------------------------------------------------------

def manifest_path(path) -> Path:
    return Path(path).with_suffix(".json")


def to_bytes(ds: Dataset) -> bytes:
    n = len(ds)
    rec = np.zeros(n, dtype=np.dtype([("cls", "<u2"), ("snr", "<i2"),
                                       ("iq", "<f4", (2 * FRAME_LEN,))]))
    rec["cls"] = ds.labels
    rec["snr"] = ds.snrs
    inter = np.empty((n, 2 * FRAME_LEN), dtype="<f4")
    inter[:, 0::2] = ds.iq.real
    inter[:, 1::2] = ds.iq.imag
    rec["iq"] = inter
    body = HEADER.pack(MAGIC, FORMAT_VERSION, n, FRAME_LEN, N_CLASSES) + rec.tobytes()
    return body + struct.pack("<I", zlib.crc32(body))


def save(ds: Dataset, path) -> str:
    """Write binary + JSON manifest; returns the binary file's sha256."""
    path = Path(path)
    blob = to_bytes(ds)
    path.write_bytes(blob)
    man = dict(ds.manifest)
    man["n_frames"] = len(ds)
    man["counts"] = cell_counts(ds.labels, ds.snrs)
    man["groups"] = _encode_groups(ds.groups)
    manifest_path(path).write_text(json.dumps(man, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return hashlib.sha256(blob).hexdigest()


def _encode_groups(groups):
    # run-length encoded source ids keep the sidecar small
    if groups.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(groups)) + 1
    starts = np.concatenate(([0], cuts))
    lengths = np.diff(np.concatenate((starts, [groups.size])))
    return [[int(groups[s]), int(l)] for s, l in zip(starts, lengths)]


def _decode_groups(runs, n):
    if not runs:
        return np.arange(n)
    g = np.concatenate([np.full(l, v) for v, l in runs])
    if g.size != n:
        raise DatasetFormatError("manifest group runs do not match frame count")
    return g


def from_bytes(blob: bytes, manifest: dict | None = None) -> Dataset:
    if len(blob) < HEADER.size:
        raise DatasetFormatError("unexpected end in header", len(blob))
    magic, version, n, frame_len, n_classes = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}", 0)
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported format version {version}", 4)
    if frame_len != FRAME_LEN:
        raise DatasetFormatError(f"frame length {frame_len} != {FRAME_LEN}", 14)
    if n_classes != N_CLASSES:
        raise DatasetFormatError(f"class count {n_classes} != {N_CLASSES}", 18)
    rec_size = RECORD_HEAD.size + 8 * frame_len
    body_end = HEADER.size + n * rec_size
    if body_end + 4 > len(blob):
        raise DatasetFormatError(f"unexpected end at offset {len(blob)} "
                                 f"(header declares {n} frames, {body_end + 4} bytes)", len(blob))
    if body_end + 4 < len(blob):
        raise DatasetFormatError(f"{len(blob) - body_end - 4} trailing bytes after body "
                                 f"(header count mismatch)", body_end + 4)
    (crc,) = struct.unpack_from("<I", blob, body_end)
    if zlib.crc32(blob[:body_end]) != crc:
        raise DatasetFormatError("checksum mismatch", body_end)
    rec = np.frombuffer(blob, dtype=np.dtype([("cls", "<u2"), ("snr", "<i2"),
                                               ("iq", "<f4", (2 * frame_len,))]),
                        count=n, offset=HEADER.size)
    labels = rec["cls"].astype(np.int64)
    snrs = rec["snr"].astype(np.int64)
    bad = np.flatnonzero(labels >= n_classes)
    if bad.size:
        raise DatasetFormatError(f"class id {labels[bad[0]]} out of range", HEADER.size + bad[0] * rec_size)
    bad = np.flatnonzero(~np.isin(snrs, SNR_LEVELS))
    if bad.size:
        raise DatasetFormatError(f"snr {snrs[bad[0]]} not a valid level", HEADER.size + bad[0] * rec_size + 2)
    inter = rec["iq"]
    if not np.all(np.isfinite(inter)):
        i = int(np.flatnonzero(~np.all(np.isfinite(inter), axis=1))[0])
        raise DatasetFormatError("non-finite sample", HEADER.size + i * rec_size + RECORD_HEAD.size)
    iq = np.empty((n, frame_len), dtype=np.complex64)
    iq.real = inter[:, 0::2]
    iq.imag = inter[:, 1::2]
    manifest = dict(manifest or {})
    groups = _decode_groups(manifest.pop("groups", None), n)
    return Dataset(iq, labels, snrs, groups, manifest)


def load(path) -> Dataset:
    path = Path(path)
    blob = path.read_bytes()
    mpath = manifest_path(path)
    manifest = None
    if mpath.exists():
        try:
            manifest = json.loads(mpath.read_text(encoding="utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise DatasetFormatError(f"unreadable manifest {mpath.name}: {e}") from None
    ds = from_bytes(blob, manifest)
    if manifest is not None and manifest.get("n_frames", len(ds)) != len(ds):
        raise DatasetFormatError("manifest frame count disagrees with file header")
    return ds


# -- splitting -------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if any(f < 0 for f in fr) or self.train_frac <= 0:
            raise ValueError("split fractions must be non-negative and train_frac > 0")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"split fractions sum to {sum(fr)}, not 1")


def _proportional(n: int, fracs) -> list[int]:
    raw = [f * n for f in fracs]
    out = [int(np.floor(r)) for r in raw]
    order = sorted(range(len(fracs)), key=lambda i: (-(raw[i] - out[i]), i))
    for i in order[: n - sum(out)]:
        out[i] += 1
    return out


def split(ds: Dataset, spec: SplitSpec = SplitSpec()):
    """Stratified (class, snr) split at source-signal granularity.

    Within each cell the source signals are shuffled with a seeded generator
    and cut in proportion; all windows of a signal land in the same split.
    """
    fracs = (spec.train_frac, spec.val_frac, spec.test_frac)
    parts = ([], [], [])
    cells = sorted(set(zip(ds.labels.tolist(), ds.snrs.tolist())))
    for c, s in cells:
        idx = np.flatnonzero((ds.labels == c) & (ds.snrs == s))
        gids = np.unique(ds.groups[idx])
        sizes = _proportional(gids.size, fracs)
        for f, k in zip(fracs, sizes):
            if f > 0 and k == 0:
                raise ValueError(f"cell {CLASS_NAMES[c]}@{s} has {gids.size} source signals; "
                                 f"too few for split {fracs}")
        g = rng(SeedSpec(spec.seed, STREAM_SPLIT, (c, s + 20)))
        perm = gids[g.permutation(gids.size)]
        bounds = np.cumsum([0] + sizes)
        for j in range(3):
            chosen = perm[bounds[j]:bounds[j + 1]]
            parts[j].append(idx[np.isin(ds.groups[idx], chosen)])
    return tuple(ds.subset(np.sort(np.concatenate(p)) if p else np.empty(0, np.int64))
                 for p in parts)
