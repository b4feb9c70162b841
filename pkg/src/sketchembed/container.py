"""Manifest-plus-blob binary container used for model state on disk.

Layout, all little-endian:

    bytes 0-4   5-byte magic (varies by artifact kind)
    u32         manifest length, then that many UTF-8 bytes
    rest        contiguous float32 tensor data

The manifest is plain text, one record per line:

    meta.<key>=<value>
    tensor.<name>=<d0>x<d1>x...:<byte offset into the blob>

Tensor lines appear in blob order, so a load/save cycle reproduces the
file byte for byte.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np


class ContainerError(ValueError):
    """Raised for unreadable or malformed container files."""


def save_container(
    path: str | Path,
    magic: bytes,
    meta: dict[str, str],
    tensors: dict[str, np.ndarray],
) -> None:
    if len(magic) != 5:
        raise ContainerError("magic must be exactly 5 bytes")
    lines = []
    for key, value in meta.items():
        text = str(value)
        if "\n" in text or "=" in key:
            raise ContainerError(f"meta entry {key!r} has an unserializable value")
        lines.append(f"meta.{key}={text}")
    blobs, offset = [], 0
    for name, tensor in tensors.items():
        data = np.ascontiguousarray(tensor, dtype="<f4")
        shape = "x".join(str(d) for d in data.shape)
        lines.append(f"tensor.{name}={shape}:{offset}")
        blobs.append(data.tobytes())
        offset += len(blobs[-1])
    manifest = ("\n".join(lines) + "\n").encode("utf-8")
    with open(path, "wb") as fp:
        fp.write(magic)
        fp.write(struct.pack("<I", len(manifest)))
        fp.write(manifest)
        for blob in blobs:
            fp.write(blob)


def load_container(path: str | Path, magic: bytes) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ContainerError(f"cannot read {path}: {exc}") from exc
    if raw[:5] != magic:
        raise ContainerError(f"{path} lacks magic {magic.decode('ascii', 'replace')!r}")
    (manifest_len,) = struct.unpack_from("<I", raw, 5)
    manifest = raw[9 : 9 + manifest_len].decode("utf-8")
    blob = raw[9 + manifest_len :]
    meta: dict[str, str] = {}
    tensors: dict[str, np.ndarray] = {}
    for line in manifest.splitlines():
        if not line:
            continue
        key, _, value = line.partition("=")
        if key.startswith("meta."):
            meta[key[5:]] = value
        elif key.startswith("tensor."):
            shape_text, _, offset_text = value.rpartition(":")
            shape = tuple(int(d) for d in shape_text.split("x")) if shape_text else ()
            offset = int(offset_text)
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
            tensors[key[7:]] = arr.reshape(shape)
        else:
            raise ContainerError(f"unrecognized manifest line {line!r}")
    return meta, tensors
