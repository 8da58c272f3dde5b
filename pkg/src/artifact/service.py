"""Local review service: browse epochs, re-threshold stored attention maps,
persist rater verdicts.

Single-researcher desk tool: local only, no auth. Attention maps are
precomputed at detect time; the service only re-thresholds them, so the
request path never runs model inference. Threshold re-localization is a pure
function of the stored map: equal thresholds return equal intervals.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import io as aio
from .data import recording_to_epochs
from .metrics import localize, window_flags_from_intervals
from .nn.attention import AttentionMap
from .pipeline import maps_path_for_report


class AnnotationIn(BaseModel):
    recording_id: str
    epoch_index: int
    window_index: int
    source: str = "rater"
    verdict: str
    threshold_at_decision: float = 0.0
    timestamp: str = ""


class AnnotationStore:
    """Append-only JSON-lines store with atomic whole-file replace on write.

    (recording_id, epoch_index, window_index, source) is unique; duplicates
    are rejected, so rater records can never overwrite model records and a
    crash mid-write never leaves a torn record.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._records = []
        self._keys = set()
        if self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    rec = json.loads(line)
                    self._records.append(rec)
                    self._keys.add(self._key(rec))

    @staticmethod
    def _key(rec: dict):
        return (rec["recording_id"], rec["epoch_index"], rec["window_index"], rec["source"])

    def append(self, record: dict) -> dict:
        with self._lock:
            key = self._key(record)
            if key in self._keys:
                raise KeyError(f"annotation already exists for {key}")
            if not record.get("timestamp"):
                record = dict(record)
                record["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
            tmp = self.path.with_suffix(".tmp")
            lines = [json.dumps(r, sort_keys=True) for r in self._records + [record]]
            tmp.write_text("\n".join(lines) + "\n")
            tmp.replace(self.path)
            self._records.append(record)
            self._keys.add(key)
            return record

    def for_recording(self, recording_id: str) -> list:
        with self._lock:
            return [r for r in self._records if r["recording_id"] == recording_id]


def decimate_minmax(values: np.ndarray, max_points: int = 2000) -> dict:
    """Min/max-pair envelope decimation so spikes stay visible at any width."""
    values = np.asarray(values, dtype=np.float64)
    n_buckets = max(1, min(values.size, max_points // 2))
    out_lo, out_hi, out_t = [], [], []
    for chunk_idx, chunk in enumerate(np.array_split(values, n_buckets)):
        out_lo.append(float(chunk.min()))
        out_hi.append(float(chunk.max()))
    bounds = np.linspace(0, values.size, n_buckets + 1)
    centers = (bounds[:-1] + bounds[1:]) / 2.0
    return {"lo": out_lo, "hi": out_hi, "center_index": [float(c) for c in centers]}


class ReviewData:
    """Lazy view over a data directory: recordings, reports, maps, labels."""

    def __init__(self, data_dir):
        self.data_dir = Path(data_dir)
        self.rec_dir = self.data_dir / "recordings"
        self.reports_dir = self.data_dir / "reports"
        self.labels_dir = self.data_dir / "labels"
        self._epoch_cache = {}
        self._maps_cache = {}

    def recording_ids(self) -> list:
        return sorted(p.stem for p in self.rec_dir.glob("*.json"))

    def epochs(self, rec_id: str):
        if rec_id not in self._epoch_cache:
            sidecar = self.rec_dir / f"{rec_id}.json"
            if not sidecar.exists():
                raise KeyError(f"unknown recording {rec_id!r}")
            rec = aio.read_recording_raw(sidecar)
            self._epoch_cache[rec_id] = recording_to_epochs(rec)
        return self._epoch_cache[rec_id]

    def maps(self, rec_id: str) -> dict:
        if rec_id not in self._maps_cache:
            path = maps_path_for_report(self.reports_dir / f"{rec_id}.report.jsonl")
            table = {}
            if path.exists():
                for d in json.loads(path.read_text()):
                    amap = AttentionMap.from_dict(d)
                    table[amap.epoch_index] = amap
            self._maps_cache[rec_id] = table
        return self._maps_cache[rec_id]

    def report(self, rec_id: str) -> list:
        path = self.reports_dir / f"{rec_id}.report.jsonl"
        if not path.exists():
            raise KeyError(f"no report for recording {rec_id!r}")
        return aio.read_labels_jsonl(path)

    def labels(self, rec_id: str) -> dict:
        path = self.labels_dir / f"{rec_id}.jsonl"
        if not path.exists():
            return {}
        return {r["epoch_index"]: r for r in aio.read_labels_jsonl(path)}


def create_app(data_dir) -> FastAPI:
    data = ReviewData(data_dir)
    store = AnnotationStore(Path(data_dir) / "annotations.jsonl")
    app = FastAPI(title="artifact review service")

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "malformed request",
                                                      "detail": exc.errors()})

    @app.get("/recordings")
    def recordings():
        out = []
        for rec_id in data.recording_ids():
            epochs = data.epochs(rec_id)
            out.append({"id": rec_id, "n_epochs": len(epochs),
                        "duration_s": len(epochs) * 20.0})
        return out

    @app.get("/epochs/{rec_id}/{epoch_index}")
    def epoch_view(rec_id: str, epoch_index: int, threshold: float = 0.5):
        if not 0 <= threshold <= 1:
            raise HTTPException(status_code=400, detail="threshold must lie in [0, 1]")
        try:
            epochs = data.epochs(rec_id)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        by_index = {ep.epoch_index: ep for ep in epochs}
        if epoch_index not in by_index:
            raise HTTPException(status_code=404, detail=f"no epoch {epoch_index}")
        ep = by_index[epoch_index]
        amap = data.maps(rec_id).get(epoch_index)
        intervals = localize(amap, threshold) if amap is not None else []
        flagged_windows = window_flags_from_intervals(intervals)
        label_row = data.labels(rec_id).get(epoch_index)
        return {
            "recording_id": rec_id,
            "epoch_index": epoch_index,
            "threshold": threshold,
            "trace": decimate_minmax(ep.values),
            "attention": amap.to_dict() if amap is not None else None,
            "intervals": [[s, e] for s, e in intervals],
            "flagged_windows": flagged_windows,
            "labels": label_row,
            "annotations": [a for a in store.for_recording(rec_id)
                            if a["epoch_index"] == epoch_index],
        }

    @app.get("/report/{rec_id}")
    def report(rec_id: str):
        try:
            return data.report(rec_id)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/annotations", status_code=201)
    def post_annotation(ann: AnnotationIn):
        if ann.verdict not in ("artifact", "clean"):
            raise HTTPException(status_code=400, detail="verdict must be artifact or clean")
        if ann.source not in ("rater", "model"):
            raise HTTPException(status_code=400, detail="source must be rater or model")
        if not 0 <= ann.window_index < 5:
            raise HTTPException(status_code=400, detail="window_index must be 0..4")
        try:
            return store.append(ann.model_dump())
        except KeyError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.get("/annotations/{rec_id}")
    def annotations(rec_id: str):
        return store.for_recording(rec_id)

    return app


def run_server(data_dir, host: str = "127.0.0.1", port: int = 8750):
    import uvicorn

    uvicorn.run(create_app(data_dir), host=host, port=port, log_level="info")
