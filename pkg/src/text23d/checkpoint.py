"""Checksummed binary checkpoint archive.

Single file: magic, manifest length, JSON manifest (tensor names, shapes,
dtypes, byte offsets, stage tag, config hash, blob sha256), then one blob
of little-endian 32-bit values.  Round trips are bit-exact; any blob
corruption or truncation fails loudly.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import ContractViolation, CorruptArchiveError

MAGIC = b"T23DCKPT1\n"


class ConfigMismatchError(ContractViolation):
    """Checkpoint was written under a different resolved configuration."""


def save_checkpoint(path: Path | str, stage: str, config_hash: str,
                    tensors: dict[str, np.ndarray],
                    extra: dict | None = None) -> None:
    """Write atomically (temp file + rename)."""
    path = Path(path)
    entries = []
    chunks = []
    offset = 0
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype="<f4")
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": "<f4",
            "offset": offset,
            "nbytes": arr.nbytes,
        })
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    blob = b"".join(chunks)
    manifest = {
        "stage": stage,
        "config_hash": config_hash,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "blob_nbytes": len(blob),
        "tensors": entries,
        "extra": extra or {},
    }
    payload = json.dumps(manifest, sort_keys=True).encode()
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path: Path | str, expect_config_hash: str | None = None,
                    allow_config_mismatch: bool = False):
    """Returns (stage, tensors, extra, config_hash); validates integrity."""
    path = Path(path)
    raw = path.read_bytes()
    if not raw.startswith(MAGIC):
        raise CorruptArchiveError(f"{path}: bad magic")
    head = len(MAGIC)
    if len(raw) < head + 8:
        raise CorruptArchiveError(f"{path}: truncated header at offset {len(raw)}")
    (manifest_len,) = struct.unpack("<Q", raw[head:head + 8])
    blob_start = head + 8 + manifest_len
    if len(raw) < blob_start:
        raise CorruptArchiveError(f"{path}: truncated manifest at offset {len(raw)}")
    manifest = json.loads(raw[head + 8:blob_start].decode())
    blob = raw[blob_start:]
    if len(blob) != manifest["blob_nbytes"]:
        raise CorruptArchiveError(
            f"{path}: truncated blob at offset {blob_start + len(blob)} "
            f"(expected {manifest['blob_nbytes']} bytes, got {len(blob)})")
    if hashlib.sha256(blob).hexdigest() != manifest["blob_sha256"]:
        raise CorruptArchiveError(f"{path}: blob checksum mismatch")
    if expect_config_hash is not None and manifest["config_hash"] != expect_config_hash:
        if not allow_config_mismatch:
            raise ConfigMismatchError(
                f"{path}: config hash {manifest['config_hash']} does not match "
                f"{expect_config_hash} (pass the override flag to load anyway)")
    tensors = {}
    for entry in manifest["tensors"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(blob):
            raise CorruptArchiveError(
                f"{path}: tensor {entry['name']} overruns blob at offset {start}")
        arr = np.frombuffer(blob[start:start + nbytes], dtype=entry["dtype"])
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return manifest["stage"], tensors, manifest["extra"], manifest["config_hash"]
