"""End-to-end flows shared by the CLI and the service: dataset directories,
training with subject-wise splits and SMOTE balancing, detection reports,
localization, and evaluation report assembly.

Dataset directory layout:
    recordings/<id>.json + <id>.f32   raw recording format
    truth/<id>.json                   exact artifact intervals (synthetic)
    labels/<id>.jsonl                 per-epoch labels + window labels
    subjects.json                     recording id -> subject id
    reports/<id>.report.jsonl         per-epoch detection rows (detect)
    maps/<id>.maps.json               attention maps (detect, CBAM models)
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import io as aio
from .data import balance_with_smote, epochs_to_arrays, recording_to_epochs, split_by_subject
from .metrics import (
    confusion_from_flags,
    localize,
    roc_auc,
    sweep_localization_threshold,
)
from .models import attention_maps, build_model
from .nn.attention import AttentionMap
from .nn.serialization import load_weights, save_weights
from .nn.training import TrainConfig, train, train_dual_optimizer
from .synth import DatasetSpec, generate_dataset


def synth_dataset(dspec: DatasetSpec, out_dir) -> dict:
    """Generate a dataset directory from a DatasetSpec; returns a summary."""
    out_dir = Path(out_dir)
    for sub in ("recordings", "truth", "labels"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    subjects = {}
    n_epochs = 0
    n_artifacts = 0
    for subject_id, rec, truth in generate_dataset(dspec):
        subjects[rec.id] = subject_id
        aio.write_recording_raw(rec, out_dir / "recordings" / f"{rec.id}.json")
        aio.write_truth_json(
            [{"start_s": iv.start_s, "end_s": iv.end_s, "kind": iv.kind} for iv in truth],
            out_dir / "truth" / f"{rec.id}.json",
        )
        epochs = recording_to_epochs(rec, truth)
        rows = [
            {
                "recording_id": rec.id,
                "epoch_index": ep.epoch_index,
                "label": ep.label,
                "window_labels": list(ep.window_labels),
            }
            for ep in epochs
        ]
        aio.write_labels_jsonl(rows, out_dir / "labels" / f"{rec.id}.jsonl")
        n_epochs += len(epochs)
        n_artifacts += sum(1 for ep in epochs if ep.label == "artifact")
    (out_dir / "subjects.json").write_text(
        json.dumps(subjects, sort_keys=True, separators=(", ", ": ")) + "\n"
    )
    return {
        "recordings": len(subjects),
        "subjects": len(set(subjects.values())),
        "epochs": n_epochs,
        "artifact_epochs": n_artifacts,
    }


def load_dataset(data_dir):
    """Load (subject_id, recording_id, epochs) triples from a dataset directory.

    Epoch waveforms are rebuilt with the standard preprocessing; labels come
    from the label files (the interface of record), not from truth.
    """
    data_dir = Path(data_dir)
    subjects = json.loads((data_dir / "subjects.json").read_text())
    out = []
    for sidecar in sorted((data_dir / "recordings").glob("*.json")):
        rec = aio.read_recording_raw(sidecar)
        epochs = recording_to_epochs(rec)
        label_path = data_dir / "labels" / f"{rec.id}.jsonl"
        if label_path.exists():
            rows = {r["epoch_index"]: r for r in aio.read_labels_jsonl(label_path)}
            labeled = []
            for ep in epochs:
                row = rows.get(ep.epoch_index)
                if row is None:
                    labeled.append(ep)
                    continue
                from dataclasses import replace

                labeled.append(
                    replace(ep, label=row["label"], window_labels=tuple(row["window_labels"]))
                )
            epochs = labeled
        out.append((subjects[rec.id], rec.id, epochs))
    if not out:
        raise ValueError(f"no recordings found under {data_dir}")
    return out


def train_command(data_dir, arch: str, seed: int, out_path, profile: str = "toy",
                  lr: float = 1e-4, batch_size: int = 128, max_epochs: int = 100,
                  patience: int = 20, smote_k: int = 5,
                  split_fractions=(0.58, 0.17, 0.25)) -> dict:
    """Train one architecture on a dataset directory and save a weight file.

    The operating threshold stored in the weight manifest is the geometric
    mean optimum of the validation-set ROC. A history JSON lands next to the
    weight file.
    """
    triples = load_dataset(data_dir)
    per_subject = [(s, eps) for s, _, eps in triples]
    train_split, val_split, _ = split_by_subject(per_subject, split_fractions, seed=seed)
    x_train, y_train = epochs_to_arrays(train_split.epochs)
    x_val, y_val = epochs_to_arrays(val_split.epochs)
    x_train, y_train = balance_with_smote(x_train, y_train, k=smote_k, seed=seed + 1)
    x_val_bal, y_val_bal = balance_with_smote(x_val, y_val, k=smote_k, seed=seed + 2)

    model = build_model(arch, seed=seed, profile=profile)
    cfg = TrainConfig(batch_size=batch_size, max_epochs=max_epochs, patience=patience,
                      lr=lr, seed=seed)
    if arch == "heuristic_1dcnn":
        state, history = train_dual_optimizer(model, (x_train, y_train), (x_val_bal, y_val_bal), cfg)
    else:
        state, history = train(model, (x_train, y_train), (x_val_bal, y_val_bal), cfg)

    # operating threshold from the (unbalanced) validation split
    val_probs = model.predict_proba(x_val)[:, 1]
    if 0 < y_val.sum() < len(y_val):
        roc = roc_auc(val_probs, y_val.astype(bool))
        operating_threshold = roc.best[0]
    else:
        operating_threshold = 0.5
    meta = {
        "model_kind": arch,
        "profile": profile,
        "rng_seed": seed,
        "operating_threshold": operating_threshold,
        "train_config": {"batch_size": batch_size, "max_epochs": max_epochs,
                         "patience": patience, "lr": lr, "smote_k": smote_k},
    }
    out_path = Path(out_path)
    save_weights(out_path, model.state_dict(), meta)
    history_path = out_path.with_suffix(out_path.suffix + ".history.json")
    history_path.write_text(json.dumps(history, sort_keys=True, separators=(", ", ": ")) + "\n")
    return {"weights": str(out_path), "epochs_trained": len(history) if arch != "heuristic_1dcnn"
            else {k: len(v) for k, v in history.items()},
            "operating_threshold": operating_threshold}


def load_model_from_weights(weights_path, arch: str = None):
    """Rebuild a model from a weight file, verifying arch when requested."""
    meta, state = load_weights(weights_path)
    kind = meta["model_kind"]
    if arch is not None and arch != kind:
        raise ValueError(f"weight file holds {kind!r}, but {arch!r} was requested")
    model = build_model(kind, seed=int(meta.get("rng_seed", 0)), profile=meta.get("profile", "toy"))
    model.load_state_dict(state)
    return model, meta


def detect_command(weights_path, rec_path, out_path, maps_path=None, arch: str = None) -> dict:
    """Per-epoch detection report (JSON lines) plus attention maps if available.

    Degenerate (flatline) epochs are artifact candidates by definition and are
    flagged regardless of the model probability.
    """
    model, meta = load_model_from_weights(weights_path, arch)
    rec = aio.read_recording_raw(Path(rec_path))
    epochs = recording_to_epochs(rec)
    if not epochs:
        raise ValueError(f"{rec_path}: no full epochs after preprocessing")
    x = np.stack([ep.values for ep in epochs]).astype(np.float32)
    probs = model.predict_proba(x)[:, 1]
    threshold = float(meta.get("operating_threshold", 0.5))
    rows = []
    for ep, p in zip(epochs, probs):
        rows.append(
            {
                "recording_id": rec.id,
                "epoch_index": ep.epoch_index,
                "p_artifact": float(p),
                "flagged": bool(p >= threshold or ep.degenerate),
                "degenerate": bool(ep.degenerate),
                "threshold": threshold,
            }
        )
    aio.write_labels_jsonl(rows, out_path)  # same canonical JSONL writer
    n_maps = 0
    if getattr(model, "has_cbam", False):
        maps = attention_maps(model, x, epoch_indices=[ep.epoch_index for ep in epochs])
        if maps_path is None:
            maps_path = maps_path_for_report(out_path)
        Path(maps_path).write_text(
            json.dumps([m.to_dict() for m in maps], sort_keys=True) + "\n"
        )
        n_maps = len(maps)
    return {"epochs": len(rows), "flagged": int(sum(r["flagged"] for r in rows)),
            "maps": n_maps, "operating_threshold": threshold}


def localize_command(weights_path, rec_path, threshold: float, out_path, arch: str = None) -> dict:
    """Attention-map localization at a fixed threshold, one JSONL row per epoch."""
    model, meta = load_model_from_weights(weights_path, arch)
    if not getattr(model, "has_cbam", False):
        raise ValueError(f"model kind {meta['model_kind']!r} cannot localize (no CBAM)")
    rec = aio.read_recording_raw(Path(rec_path))
    epochs = recording_to_epochs(rec)
    if not epochs:
        raise ValueError(f"{rec_path}: no full epochs after preprocessing")
    x = np.stack([ep.values for ep in epochs]).astype(np.float32)
    maps = attention_maps(model, x, epoch_indices=[ep.epoch_index for ep in epochs])
    rows = []
    for amap in maps:
        intervals = localize(amap, threshold)
        rows.append(
            {
                "recording_id": rec.id,
                "epoch_index": amap.epoch_index,
                "threshold": threshold,
                "intervals": [[s, e] for s, e in intervals],
            }
        )
    aio.write_labels_jsonl(rows, out_path)
    return {"epochs": len(rows),
            "with_intervals": sum(1 for r in rows if r["intervals"])}


def maps_path_for_report(report_path) -> Path:
    """<name>.report.jsonl -> <name>.maps.json (same directory)."""
    report_path = Path(report_path)
    name = report_path.name
    if name.endswith(".report.jsonl"):
        return report_path.with_name(name[: -len(".report.jsonl")] + ".maps.json")
    return report_path.with_name(name + ".maps.json")


def read_report_jsonl(path) -> list:
    return aio.read_labels_jsonl(path)


def read_maps_json(path) -> list:
    return [AttentionMap.from_dict(d) for d in json.loads(Path(path).read_text())]


def eval_command(reports_dir, labels_dir, out_path, plots_dir=None, model_name: str = "") -> dict:
    """Assemble the evaluation report from detection reports and label files.

    Epoch-level grid ROC/AUC with the best operating point and its confusion
    matrix; when attention maps exist, the window-level localization sweep
    restricted to flagged (predicted-artifact) epochs. Optionally emits SVG
    plots: ROC curve(s) and example attention panels.
    """
    reports_dir = Path(reports_dir)
    labels_dir = Path(labels_dir)
    report_files = sorted(reports_dir.glob("*.report.jsonl"))
    if not report_files:
        raise ValueError(f"no *.report.jsonl files under {reports_dir}")

    probs, labels, flags = [], [], []
    candidates = []  # (rec_id, epoch_index, flagged, map or None, window_labels)
    for rpath in report_files:
        rows = read_report_jsonl(rpath)
        if not rows:
            continue
        rec_id = rows[0]["recording_id"]
        label_rows = {r["epoch_index"]: r for r in aio.read_labels_jsonl(labels_dir / f"{rec_id}.jsonl")}
        maps_path = maps_path_for_report(rpath)
        maps_by_epoch = {}
        if maps_path.exists():
            maps_by_epoch = {m.epoch_index: m for m in read_maps_json(maps_path)}
        for row in rows:
            lab = label_rows.get(row["epoch_index"])
            if lab is None or lab["label"] == "unlabeled":
                continue
            probs.append(row["p_artifact"])
            labels.append(lab["label"] == "artifact")
            flags.append(bool(row["flagged"]))
            candidates.append((rec_id, row["epoch_index"], bool(row["flagged"]),
                               maps_by_epoch.get(row["epoch_index"]),
                               tuple(lab["window_labels"])))

    probs = np.asarray(probs)
    labels = np.asarray(labels, dtype=bool)
    flags = np.asarray(flags, dtype=bool)
    roc = roc_auc(probs, labels)
    # Epochs the detector flagged (its stored validation-derived operating
    # threshold): these true and false positives form the localization pool.
    cm = confusion_from_flags(flags, labels)
    sel_maps, sel_window_labels, example_panels = [], [], []
    for rec_id, epoch_index, flagged, amap, window_labels in candidates:
        if flagged and amap is not None:
            sel_maps.append(amap)
            sel_window_labels.append(window_labels)
            if len(example_panels) < 6 and "artifact" in window_labels:
                example_panels.append((rec_id, epoch_index, amap, window_labels))
    report = {
        "model": model_name,
        "epochs_scored": int(labels.size),
        "auc": roc.auc,
        "auc_exact": roc.auc_exact,
        "best": {"threshold": roc.best[0], "se": roc.best[1], "sp": roc.best[2]},
        "flagged_confusion": cm.to_dict(),
        "roc_points": [[t, s, p] for t, s, p in roc.points],
    }
    loc_result = None
    if sel_maps:
        loc_result, loc_points = sweep_localization_threshold(sel_maps, sel_window_labels)
        report["localization"] = {
            "selected_epochs": len(sel_maps),
            "best_threshold": loc_result.threshold,
            "se": loc_result.se,
            "sp": loc_result.sp,
            "confusion": loc_result.confusion.to_dict(),
            "roc_points": [[t, s, p] for t, s, p in loc_points],
        }
    out_path = Path(out_path)
    out_path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")

    if plots_dir is not None:
        from . import plots

        plots_dir = Path(plots_dir)
        plots_dir.mkdir(parents=True, exist_ok=True)
        plots.plot_roc(roc.points, roc.auc, roc.best, plots_dir / "roc_epoch.svg",
                       title=f"Epoch-level ROC {model_name}".strip())
        if loc_result is not None:
            pts = report["localization"]["roc_points"][::-1]
            loc_auc = float(np.trapezoid([p[1] for p in pts], [1.0 - p[2] for p in pts]))
            plots.plot_roc(report["localization"]["roc_points"], loc_auc,
                           (loc_result.threshold, loc_result.se, loc_result.sp),
                           plots_dir / "roc_localization.svg",
                           title="Window-level localization ROC")
            for rec_id, epoch_index, amap, window_labels in example_panels:
                intervals = localize(amap, loc_result.threshold)
                plots.plot_attention_epoch(
                    amap, plots_dir / f"attention_{rec_id}_ep{epoch_index}.svg",
                    threshold=loc_result.threshold, window_labels=window_labels,
                    intervals=intervals, title=f"{rec_id} epoch {epoch_index}",
                )
    return report
