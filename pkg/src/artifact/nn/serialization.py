"""Weight file format: JSON manifest + little-endian float32 blobs + SHA-256.

Layout: UTF-8 JSON manifest, a ``\\n\\x00`` separator, then the parameter
blobs concatenated in manifest order. The manifest records the model kind,
profile, seed, operating threshold, format version and, per parameter, the
shape, byte offset and SHA-256 of its blob. Weight files are always 32-bit.

Round trips are bit-exact; any checksum or format-version mismatch refuses to
load rather than returning silently corrupted weights.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
_SEPARATOR = b"\n\x00"


class WeightFormatError(ValueError):
    """Unreadable, tampered or version-incompatible weight file."""


def save_weights(path, state: dict, meta: dict) -> None:
    """Write a state dict (name -> array) with metadata to `path`.

    `meta` must include model_kind; rng_seed, profile and operating_threshold
    are stored when present. Parameters are laid out in sorted-name order so
    identical state produces identical bytes.
    """
    if "model_kind" not in meta:
        raise ValueError("meta must include model_kind")
    names = sorted(state)
    blobs = []
    layers = []
    offset = 0
    for name in names:
        arr = np.ascontiguousarray(state[name], dtype="<f4")
        raw = arr.tobytes()
        layers.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(raw),
                "sha256": hashlib.sha256(raw).hexdigest(),
            }
        )
        blobs.append(raw)
        offset += len(raw)
    manifest = dict(meta)
    manifest["format_version"] = FORMAT_VERSION
    manifest["layers"] = layers
    header = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    Path(path).write_bytes(header + _SEPARATOR + b"".join(blobs))


def load_weights(path):
    """Read a weight file; returns (meta, state dict of float32 arrays).

    Raises WeightFormatError on a missing separator, unsupported
    format_version, or any per-parameter checksum mismatch.
    """
    raw = Path(path).read_bytes()
    sep = raw.find(_SEPARATOR)
    if sep < 0:
        raise WeightFormatError(f"{path}: not a weight file (missing separator)")
    try:
        manifest = json.loads(raw[:sep].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFormatError(f"{path}: corrupt manifest: {exc}") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise WeightFormatError(
            f"{path}: format_version {version} unsupported (expected {FORMAT_VERSION})"
        )
    body = raw[sep + len(_SEPARATOR) :]
    state = {}
    for layer in manifest["layers"]:
        chunk = body[layer["offset"] : layer["offset"] + layer["nbytes"]]
        if len(chunk) != layer["nbytes"]:
            raise WeightFormatError(f"{path}: truncated blob for {layer['name']}")
        digest = hashlib.sha256(chunk).hexdigest()
        if digest != layer["sha256"]:
            raise WeightFormatError(f"{path}: checksum mismatch for {layer['name']}")
        state[layer["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(layer["shape"]).copy()
    meta = {k: v for k, v in manifest.items() if k != "layers"}
    return meta, state
