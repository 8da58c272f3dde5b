"""File formats: recording ingestion, label/truth/stage files.

Two recording formats are supported:
  * headered CSV with columns ``t_s,uv``
  * a raw format: JSON sidecar ``{id, rate_hz, n_samples, scale_uv}`` plus a
    little-endian 32-bit float sample blob at ``<stem>.f32``

The raw format round-trips bit-exactly: reading a pair of files and writing
them back reproduces identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .signal import Recording


def _dump_json(obj) -> str:
    # Canonical serialization so equal content means equal bytes.
    return json.dumps(obj, sort_keys=True, separators=(", ", ": ")) + "\n"


# ---------------------------------------------------------------------------
# CSV recordings


def write_recording_csv(rec: Recording, path) -> None:
    path = Path(path)
    t = rec.start_offset_s + np.arange(rec.samples.size) / rec.rate_hz
    with path.open("w") as fh:
        fh.write("t_s,uv\n")
        for ti, v in zip(t, rec.samples):
            fh.write(f"{ti:.9f},{v:.9f}\n")


def read_recording_csv(path) -> Recording:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
        if header.split(",")[:2] != ["t_s", "uv"]:
            raise ValueError(f"{path}: expected header 't_s,uv', got {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        raise ValueError(f"{path}: no samples")
    t, uv = data[:, 0], data[:, 1]
    if t.size < 2:
        raise ValueError(f"{path}: need at least two samples to infer the rate")
    dt = np.diff(t)
    if np.max(dt) - np.min(dt) > 1e-6:
        raise ValueError(f"{path}: non-uniform sampling")
    rate = (t.size - 1) / (t[-1] - t[0])
    return Recording(uv, float(rate), id=path.stem, start_offset_s=float(t[0]))


# ---------------------------------------------------------------------------
# Raw recordings (JSON sidecar + f32 blob)


def raw_blob_path(sidecar_path) -> Path:
    return Path(sidecar_path).with_suffix(".f32")


def write_recording_raw(rec: Recording, sidecar_path, scale_uv: float = 1.0) -> None:
    """Write sidecar + blob. Stored values are microvolts divided by scale_uv."""
    sidecar_path = Path(sidecar_path)
    if not scale_uv > 0:
        raise ValueError("scale_uv must be positive")
    blob = (rec.samples / scale_uv).astype("<f4")
    sidecar = {
        "id": rec.id,
        "rate_hz": rec.rate_hz,
        "n_samples": int(rec.samples.size),
        "scale_uv": scale_uv,
    }
    sidecar_path.write_text(_dump_json(sidecar))
    blob.tofile(raw_blob_path(sidecar_path))


def read_recording_raw(sidecar_path) -> Recording:
    sidecar_path = Path(sidecar_path)
    meta = json.loads(sidecar_path.read_text())
    for key in ("id", "rate_hz", "n_samples", "scale_uv"):
        if key not in meta:
            raise ValueError(f"{sidecar_path}: sidecar missing field {key!r}")
    raw = np.fromfile(raw_blob_path(sidecar_path), dtype="<f4")
    if raw.size != meta["n_samples"]:
        raise ValueError(
            f"{sidecar_path}: blob holds {raw.size} samples, sidecar says {meta['n_samples']}"
        )
    samples = raw.astype(np.float64) * meta["scale_uv"]
    return Recording(samples, float(meta["rate_hz"]), id=meta["id"])


# ---------------------------------------------------------------------------
# Label / truth / stage files


def write_labels_jsonl(rows, path) -> None:
    """Rows: {recording_id, epoch_index, label, window_labels[5]}."""
    path = Path(path)
    with path.open("w") as fh:
        for row in rows:
            fh.write(_dump_json(row).rstrip("\n") + "\n")


def read_labels_jsonl(path) -> list:
    rows = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def write_truth_json(intervals, path) -> None:
    """Ground-truth intervals: list of {start_s, end_s, kind} in absolute time."""
    Path(path).write_text(_dump_json(list(intervals)))


def read_truth_json(path) -> list:
    return json.loads(Path(path).read_text())


def read_stages_jsonl(path) -> dict:
    """Stage file: JSON lines {epoch_index, stage in {W,N1,N2,N3,REM}}."""
    stages = {}
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            stages[int(row["epoch_index"])] = row["stage"]
    return stages


def write_stages_jsonl(stages: dict, path) -> None:
    with Path(path).open("w") as fh:
        for idx in sorted(stages):
            fh.write(_dump_json({"epoch_index": idx, "stage": stages[idx]}).rstrip("\n") + "\n")
