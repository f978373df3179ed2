"""Versioned binary envelope for trained models (neural and classical).

Layout (little-endian)::

    "RMM1"        magic
    version       u16
    header_len    u32
    header        UTF-8 JSON: kind, meta, and an ordered array table
                  [{"name", "dtype", "shape"}, ...]
    arrays        raw little-endian bytes, concatenated in table order
    crc32         u32 over every preceding byte
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"RMM1"
VERSION = 1
_HEAD = struct.Struct("<4sHI")
_DTYPES = {"f8": "<f8", "f4": "<f4", "i8": "<i8", "u1": "|u1"}


class ContainerError(ValueError):
    pass


def _code(a: np.ndarray) -> str:
    if a.dtype.kind == "f":
        return "f8" if a.dtype.itemsize == 8 else "f4"
    if a.dtype.kind in "iub" and a.dtype.itemsize == 1 and a.dtype.kind != "i":
        return "u1"
    if a.dtype.kind in "iu":
        return "i8"
    raise ContainerError(f"unsupported array dtype {a.dtype}")


def dumps(kind: str, arrays: dict, meta: dict | None = None) -> bytes:
    table, chunks = [], []
    for name, a in arrays.items():
        a = np.asarray(a)
        code = _code(a)
        table.append({"name": name, "dtype": code, "shape": list(a.shape)})
        chunks.append(np.ascontiguousarray(a, dtype=_DTYPES[code]).tobytes())
    header = json.dumps({"kind": kind, "meta": meta or {}, "arrays": table},
                        sort_keys=True).encode("utf-8")
    body = _HEAD.pack(MAGIC, VERSION, len(header)) + header + b"".join(chunks)
    return body + struct.pack("<I", zlib.crc32(body))


def loads(blob: bytes):
    """Returns ``(kind, arrays, meta)``."""
    if len(blob) < _HEAD.size + 4:
        raise ContainerError(f"unexpected end at offset {len(blob)}")
    magic, version, hlen = _HEAD.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ContainerError(f"unsupported model container version {version}")
    (crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) != crc:
        raise ContainerError("checksum mismatch")
    try:
        header = json.loads(blob[_HEAD.size:_HEAD.size + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerError(f"corrupt header: {e}") from None
    off = _HEAD.size + hlen
    arrays = {}
    for entry in header["arrays"]:
        dt = np.dtype(_DTYPES[entry["dtype"]])
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * dt.itemsize
        if off + nbytes > len(blob) - 4:
            raise ContainerError(f"unexpected end at offset {len(blob) - 4}")
        arrays[entry["name"]] = np.frombuffer(blob, dtype=dt, count=count, offset=off) \
            .reshape(entry["shape"]).astype(dt.newbyteorder("="))
        off += nbytes
    if off != len(blob) - 4:
        raise ContainerError("trailing bytes after array data")
    return header["kind"], arrays, header["meta"]


def save(path, kind, arrays, meta=None):
    Path(path).write_bytes(dumps(kind, arrays, meta))


def load(path):
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"model file not found: {p}")
    return loads(p.read_bytes())


# -- model-level helpers ------------------------------------------------------------

def save_model(path, model, extra: dict | None = None):
    """Serialize a neural :class:`Model` or a classical classifier."""
    from .neuralnet.model import Model

    meta = dict(extra or {})
    if isinstance(model, Model):
        meta.update({"spec": model.spec.as_dict(), "dtype": model.dtype.name})
        arrays = {k: np.asarray(v, dtype=np.float64) for k, v in model.get_params().items()}
        save(path, "neural", arrays, meta)
    else:
        if hasattr(model, "meta"):
            meta["classifier"] = model.meta()
        save(path, model.kind, model.state(), meta)


def load_model(path):
    """Inverse of :func:`save_model`; returns ``(model, meta)``."""
    from .baselines import CLASSIFIERS
    from .neuralnet.model import Model, ModelSpec

    kind, arrays, meta = load(path)
    if kind == "neural":
        model = Model(ModelSpec.from_dict(meta["spec"]), dtype=meta.get("dtype", "float64"))
        model.set_params(arrays)
        return model, meta
    if kind not in CLASSIFIERS:
        raise ContainerError(f"unknown model kind {kind!r}")
    return CLASSIFIERS[kind].from_state(arrays, meta.get("classifier")), meta
