"""
On-disk formats: session directories, accuracy files, model and feature
files, and the run manifest written by every command.

A session directory holds recording.csv (header "sample,Fz,...,PO8",
microvolts), meta.json, events.jsonl and, for simulated sessions,
ground_truth.json. JSON is written with sorted keys and no timestamps so
re-runs produce identical bytes.
"""

import csv
import hashlib
import json
from pathlib import Path

import numpy as np
from loguru import logger

import graspdec
from graspdec.core.csp import CspModel, FeatureVector
from graspdec.core.errors import ValidationError
from graspdec.core.model import CHANNEL_LABELS, BandName, EventLog, Phase, Recording, standard_montage

RECORDING_FILE = "recording.csv"
META_FILE = "meta.json"
EVENTS_FILE = "events.jsonl"
GROUND_TRUTH_FILE = "ground_truth.json"
MANIFEST_FILE = "manifest.json"
ACCURACY_FILE = "accuracy.json"


def prepare_out_dir(path) -> Path:
    """Create `path` if needed; its parent must already exist."""
    path = Path(path)
    path.mkdir(exist_ok=True)
    return path


def write_text(path, text: str) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(text)
    return path


def write_json(path, data) -> Path:
    return write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: not valid JSON ({e})") from e


def file_digest(path) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            sha.update(chunk)
    return sha.hexdigest()


def write_recording(path, rec: Recording) -> Path:
    data = np.column_stack([np.arange(rec.n_samples), rec.samples.T])
    with open(path, "w", newline="", encoding="utf-8") as f:
        np.savetxt(
            f,
            data,
            fmt=["%d"] + ["%.6f"] * rec.n_channels,
            delimiter=",",
            header=",".join(("sample",) + tuple(rec.montage.labels)),
            comments="",
        )
    return Path(path)


def read_recording(session_dir) -> Recording:
    session_dir = Path(session_dir)
    meta = read_json(session_dir / META_FILE)
    path = session_dir / RECORDING_FILE
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip().split(",")
        expected = ["sample"] + list(CHANNEL_LABELS)
        if header != expected:
            raise ValidationError(f"{path}: header {header} differs from {expected}")
        try:
            data = np.loadtxt(f, delimiter=",", ndmin=2)
        except ValueError as e:
            raise ValidationError(f"{path}: {e}") from e

    if data.size == 0:
        data = np.empty((0, len(expected)))
    if data.shape[1] != len(expected):
        raise ValidationError(f"{path}: expected {len(expected)} columns, got {data.shape[1]}")
    if not np.array_equal(data[:, 0], np.arange(data.shape[0])):
        raise ValidationError(f"{path}: sample column must count 0, 1, 2, ...")
    try:
        subject_id = str(meta["subject_id"])
        sample_rate_hz = float(meta["sample_rate_hz"])
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"{session_dir / META_FILE}: missing or invalid field {e}") from e

    logger.debug(f"Read {path}: {data.shape[0]} samples x {data.shape[1] - 1} channels")
    return Recording(subject_id, sample_rate_hz, standard_montage(), data[:, 1:].T)


def read_events(session_dir, sample_rate_hz: float, n_samples: int | None = None) -> EventLog:
    path = Path(session_dir) / EVENTS_FILE
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        return EventLog.from_jsonl(text, sample_rate_hz, n_samples)
    except ValueError as e:
        raise ValidationError(f"{path}: {e}") from e


def read_session(session_dir) -> tuple[Recording, EventLog]:
    rec = read_recording(session_dir)
    return rec, read_events(session_dir, rec.sample_rate_hz, rec.n_samples)


def write_session(artifacts, out_dir) -> list[Path]:
    """recording.csv, meta.json, events.jsonl and ground_truth.json; returns the written paths."""
    out_dir = prepare_out_dir(out_dir)
    rec = artifacts.recording
    meta = {
        "subject_id": rec.subject_id,
        "sample_rate_hz": rec.sample_rate_hz,
        "n_samples": rec.n_samples,
        "channel_labels": list(rec.montage.labels),
    }
    written = [
        write_recording(out_dir / RECORDING_FILE, rec),
        write_json(out_dir / META_FILE, meta),
        write_text(out_dir / EVENTS_FILE, artifacts.events.to_jsonl()),
        write_json(out_dir / GROUND_TRUTH_FILE, artifacts.ground_truth.to_dict()),
    ]
    logger.info(f"Wrote session {rec.subject_id} to {out_dir}")
    return written


def build_manifest(command: str, seed: int | None, configuration: dict, inputs=(), outputs=(),
                   base_dir=None) -> dict:
    """
    Tool version, input and output digests, seed and the full configuration.

    Output names are relative to `base_dir`; inputs are named by their
    parent directory and file name.
    """
    base_dir = Path(base_dir) if base_dir else None

    def output_name(path: Path) -> str:
        return path.relative_to(base_dir).as_posix() if base_dir else path.name

    return {
        "tool": "graspdec",
        "version": graspdec.__version__,
        "command": command,
        "seed": seed,
        "configuration": configuration,
        "inputs": {f"{Path(p).parent.name}/{Path(p).name}": file_digest(p) for p in inputs},
        "outputs": {output_name(Path(p)): file_digest(p) for p in sorted(outputs, key=str)},
    }


def write_manifest(out_dir, manifest: dict) -> Path:
    return write_json(Path(out_dir) / MANIFEST_FILE, manifest)


def accuracy_document(subject_id: str, results: dict, evaluation: dict) -> dict:
    """`results` maps (Phase, BandName) to an EvaluationResult."""
    accuracies, n_test = {}, {}
    for (phase, band), result in results.items():
        accuracies.setdefault(phase.value, {})[band.value] = result.accuracy
        n_test.setdefault(phase.value, {})[band.value] = result.n_test
    return {"subject_id": subject_id, "accuracies": accuracies, "n_test": n_test, "evaluation": evaluation}


def read_accuracy(path) -> tuple[str, dict[tuple[Phase, BandName], float]]:
    data = read_json(path)
    try:
        subject_id = str(data["subject_id"])
        cells = {
            (Phase.parse(phase), BandName.parse(band)): float(value)
            for phase, bands in data["accuracies"].items()
            for band, value in bands.items()
        }
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise ValidationError(f"{path}: invalid accuracy document ({e})") from e
    return subject_id, cells


def read_csp_model(path) -> CspModel:
    return CspModel.from_dict(read_json(path))


def write_features(path, features: list[FeatureVector]) -> Path:
    n_values = len(features[0].values) if features else 0
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["trial_id", "grasp_class"] + [f"f{i}" for i in range(1, n_values + 1)])
        for fv in features:
            grasp = fv.grasp_class.value if fv.grasp_class else ""
            writer.writerow([fv.trial_id, grasp] + [repr(float(v)) for v in fv.values])
    return Path(path)
