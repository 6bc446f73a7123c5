"""Versioned binary checkpoints with byte-exact round-trips.

Layout: an 8-byte magic, a little-endian uint64 header length, a JSON
header (sorted keys, no whitespace), then the raw little-endian float64
buffers of every parameter tensor in header order. No timestamps or
other ambient state are stored, so identical models serialize to
identical bytes, and save -> load -> save is the identity on files.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

MAGIC = b"TPEMBED1"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, model, vocab_hash, seed, extra=None):
    """Atomically write ``model`` (temp file + rename, same directory)."""
    names = sorted(model.param_arrays())
    tensors = []
    offset = 0
    buffers = []
    for name in names:
        arr = np.ascontiguousarray(model.param_arrays()[name], dtype="<f8")
        raw = arr.tobytes()
        tensors.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        )
        buffers.append(raw)
        offset += len(raw)
    header = {
        "format_version": FORMAT_VERSION,
        "mode": model.mode,
        "config": model.config.to_dict(),
        "vocab_hash": vocab_hash,
        "seed": seed,
        "extra": extra or {},
        "tensors": tensors,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            for raw in buffers:
                fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path):
    """Read a checkpoint: (header dict, name -> float64 array mapping).

    The header keeps mode/config/vocab_hash/seed/extra; rebuilding a model
    object from it is the caller's job (the bow and dense variants live in
    different modules).
    """
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {header.get('format_version')}"
            )
        payload = fh.read()
    arrays = {}
    for spec in header["tensors"]:
        start, n = spec["offset"], spec["nbytes"]
        arr = np.frombuffer(payload[start : start + n], dtype="<f8")
        arrays[spec["name"]] = arr.reshape(spec["shape"]).astype(np.float64)
    return header, arrays
