"""
Domain types shared by every stage: montage, recordings, protocol events,
frequency bands and task phases.

Channel order is fixed to the acquisition listing (Fz, C3, Cz, C4, Pz, PO7,
Oz, PO8); every sample matrix uses this row order.
"""

import json
import math
from dataclasses import dataclass
from enum import Enum
from itertools import groupby

import numpy as np
from loguru import logger

ACQUISITION_RATE_HZ = 250.0
CHANNEL_LABELS = ("Fz", "C3", "Cz", "C4", "Pz", "PO7", "Oz", "PO8")

# 10-20 placement as (angle from vertex, azimuth from nasion toward the right ear), degrees.
# 10% of the nasion-inion arc is 18 degrees.
_ANGULAR_PLACEMENT = {
    "Fz": (36.0, 0.0),
    "C3": (36.0, -90.0),
    "Cz": (0.0, 0.0),
    "C4": (36.0, 90.0),
    "Pz": (36.0, 180.0),
    "PO7": (72.0, -144.0),
    "Oz": (72.0, 180.0),
    "PO8": (72.0, 144.0),
}


class StrEnumMixin(str, Enum):
    def __str__(self):
        return self.value


class BandName(StrEnumMixin):
    DELTA = "Delta"
    THETA = "Theta"
    ALPHA = "Alpha"
    BETA = "Beta"
    GAMMA = "Gamma"

    @classmethod
    def parse(cls, text: str) -> "BandName":
        for member in cls:
            if member.value.lower() == str(text).strip().lower():
                return member
        raise ValueError(f"Unknown band '{text}'. Valid bands: {', '.join(m.value.lower() for m in cls)}")


class Phase(StrEnumMixin):
    OBSERVATION = "Observation"
    MOVEMENT = "Movement"

    @classmethod
    def parse(cls, text: str) -> "Phase":
        for member in cls:
            if member.value.lower() == str(text).strip().lower():
                return member
        raise ValueError(f"Unknown phase '{text}'. Valid phases: observation, movement")


class GraspClass(StrEnumMixin):
    POWER = "Power"
    PRECISION = "Precision"

    @property
    def label(self) -> int:
        """SVM label: Power = +1, Precision = -1."""
        return 1 if self is GraspClass.POWER else -1

    @classmethod
    def from_label(cls, label: int) -> "GraspClass":
        return cls.POWER if label > 0 else cls.PRECISION


class ObjectKind(StrEnumMixin):
    POWER_OBJECT = "PowerObject"
    PRECISION_OBJECT = "PrecisionObject"
    NO_OBJECT = "NoObject"

    @property
    def grasp_class(self) -> GraspClass | None:
        return {
            ObjectKind.POWER_OBJECT: GraspClass.POWER,
            ObjectKind.PRECISION_OBJECT: GraspClass.PRECISION,
        }.get(self)


class EventKind(StrEnumMixin):
    ROTATION_START = "RotationStart"
    GLASSES_OPAQUE = "GlassesOpaque"
    GLASSES_TRANSPARENT = "GlassesTransparent"
    OBSERVATION_START = "ObservationStart"
    AUDIO_CUE = "AudioCue"
    MOVEMENT_END = "MovementEnd"
    BLOCK_START = "BlockStart"
    BLOCK_END = "BlockEnd"
    REST_START = "RestStart"
    REST_END = "RestEnd"


TRIAL_EVENT_ORDER = (
    EventKind.ROTATION_START,
    EventKind.GLASSES_OPAQUE,
    EventKind.GLASSES_TRANSPARENT,
    EventKind.OBSERVATION_START,
    EventKind.AUDIO_CUE,
    EventKind.MOVEMENT_END,
)
NO_TRIAL = -1


@dataclass(frozen=True)
class BandDefinition:
    name: BandName
    low_hz: float
    high_hz: float

    def __post_init__(self):
        if self.low_hz < 0 or self.high_hz <= self.low_hz:
            raise ValueError(f"Band {self.name}: need 0 <= low_hz < high_hz, got ({self.low_hz}, {self.high_hz})")

    @property
    def key(self) -> str:
        return self.name.value.lower()

    def fits(self, sample_rate_hz: float) -> bool:
        return self.high_hz <= sample_rate_hz / 2

    def to_dict(self) -> dict:
        return {"name": self.name.value, "low_hz": self.low_hz, "high_hz": self.high_hz}

    @classmethod
    def from_dict(cls, data: dict) -> "BandDefinition":
        return cls(BandName.parse(data["name"]), float(data["low_hz"]), float(data["high_hz"]))


_STANDARD_BANDS = (
    BandDefinition(BandName.DELTA, 0.0, 4.0),
    BandDefinition(BandName.THETA, 4.0, 8.0),
    BandDefinition(BandName.ALPHA, 8.0, 13.0),
    BandDefinition(BandName.BETA, 13.0, 30.0),
    BandDefinition(BandName.GAMMA, 30.0, 40.0),
)


def standard_bands() -> list[BandDefinition]:
    """The five analysis bands, delta through gamma."""
    return list(_STANDARD_BANDS)


def band_by_name(name: str | BandName) -> BandDefinition:
    wanted = name if isinstance(name, BandName) else BandName.parse(name)
    return next(b for b in _STANDARD_BANDS if b.name is wanted)


@dataclass(frozen=True, eq=False)
class Montage:
    labels: tuple[str, ...]
    positions: np.ndarray  # [n_channels x 2], unit head circle, +x right ear, +y nose

    def __post_init__(self):
        positions = np.array(self.positions, dtype=float)
        positions.setflags(write=False)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "positions", positions)

    @property
    def n_channels(self) -> int:
        return len(self.labels)

    def position(self, label: str) -> np.ndarray:
        return self.positions[self.labels.index(label)]

    def index(self, label: str) -> int:
        return self.labels.index(label)


def _project_azimuthal_equidistant(angle_deg: float, azimuth_deg: float) -> tuple[float, float]:
    # radius proportional to the angle from the vertex; the 90 degree ring lands on the unit circle
    radius = angle_deg / 90.0
    azimuth = math.radians(azimuth_deg)
    return radius * math.sin(azimuth), radius * math.cos(azimuth)


def standard_montage() -> Montage:
    """The 8-electrode layout on the unit disc (azimuthal-equidistant projection of 10-20 angles)."""
    positions = [_project_azimuthal_equidistant(*_ANGULAR_PLACEMENT[label]) for label in CHANNEL_LABELS]
    return Montage(CHANNEL_LABELS, np.array(positions))


@dataclass(frozen=True, eq=False)
class Recording:
    subject_id: str
    sample_rate_hz: float
    montage: Montage
    samples: np.ndarray  # [n_channels x n_samples], microvolts

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0] if self.samples.ndim == 2 else 0

    @property
    def n_samples(self) -> int:
        return self.samples.shape[-1] if self.samples.ndim >= 1 else 0

    def with_samples(self, samples: np.ndarray) -> "Recording":
        return Recording(self.subject_id, self.sample_rate_hz, self.montage, samples)


@dataclass(frozen=True)
class EventMarker:
    sample_index: int
    kind: EventKind
    trial_id: int
    object: ObjectKind

    def to_dict(self) -> dict:
        return {
            "sample_index": int(self.sample_index),
            "kind": self.kind.value,
            "trial_id": int(self.trial_id),
            "object": self.object.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EventMarker":
        return cls(
            sample_index=int(data["sample_index"]),
            kind=EventKind(data["kind"]),
            trial_id=int(data["trial_id"]),
            object=ObjectKind(data["object"]),
        )


@dataclass(frozen=True)
class EventLog:
    markers: tuple[EventMarker, ...] = ()
    sample_rate_hz: float = ACQUISITION_RATE_HZ
    n_samples: int | None = None  # session length when known

    def __post_init__(self):
        object.__setattr__(self, "markers", tuple(self.markers))

    def __iter__(self):
        return iter(self.markers)

    def __len__(self):
        return len(self.markers)

    def trials(self) -> dict[int, list[EventMarker]]:
        """Trial markers grouped by trial_id, in log order; block-level markers excluded."""
        trial_markers = sorted(
            (m for m in self.markers if m.trial_id != NO_TRIAL), key=lambda m: m.trial_id
        )
        return {tid: list(group) for tid, group in groupby(trial_markers, key=lambda m: m.trial_id)}

    def audio_cues(self) -> list[EventMarker]:
        return sorted((m for m in self.markers if m.kind is EventKind.AUDIO_CUE), key=lambda m: m.trial_id)

    def of_kind(self, kind: EventKind) -> list[EventMarker]:
        return [m for m in self.markers if m.kind is kind]

    def to_jsonl(self) -> str:
        """One JSON object per marker, in log order, keys sorted."""
        return "".join(json.dumps(m.to_dict(), sort_keys=True) + "\n" for m in self.markers)

    @classmethod
    def from_jsonl(cls, text: str, sample_rate_hz: float = ACQUISITION_RATE_HZ,
                   n_samples: int | None = None) -> "EventLog":
        markers = []
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                markers.append(EventMarker.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as e:
                raise ValueError(f"events line {number}: {e}") from e
        return cls(tuple(markers), sample_rate_hz, n_samples)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    severity: str = "error"  # "error" | "warning"

    def __str__(self):
        return f"[{self.severity}] {self.code}: {self.message}"


def validate_recording(rec: Recording) -> list[Violation]:
    """
    Every Recording invariant the input violates; an empty list means valid.

    A sample rate other than 250 Hz is reported with severity "warning": such
    recordings are accepted, but they do not match the acquisition rate.
    """
    report = []
    samples = rec.samples

    if samples.ndim != 2:
        report.append(Violation("shape", f"samples must be a 2-D [channels x samples] matrix, got {samples.ndim}-D"))
        return report

    n_channels, n_samples = samples.shape
    if n_channels != len(CHANNEL_LABELS):
        report.append(Violation("channel_count", f"expected {len(CHANNEL_LABELS)} channels, got {n_channels}"))
    if n_channels != rec.montage.n_channels:
        report.append(
            Violation("montage_mismatch", f"{n_channels} sample rows but montage has {rec.montage.n_channels} labels")
        )
    if tuple(rec.montage.labels) != CHANNEL_LABELS:
        report.append(
            Violation("montage_labels", f"montage labels {list(rec.montage.labels)} differ from {list(CHANNEL_LABELS)}")
        )
    if len(set(rec.montage.labels)) != len(rec.montage.labels):
        report.append(Violation("montage_labels", "montage labels are not unique"))
    if n_samples == 0:
        report.append(Violation("empty", "recording has no samples"))

    finite = np.isfinite(samples)
    if not finite.all():
        bad_channels, bad_samples = np.nonzero(~finite)
        channel, sample = int(bad_channels[0]), int(bad_samples[0])
        label = rec.montage.labels[channel] if channel < rec.montage.n_channels else f"#{channel}"
        report.append(
            Violation(
                "non_finite",
                f"{int((~finite).sum())} non-finite sample(s); first at channel {label} sample {sample}",
            )
        )

    if not (rec.sample_rate_hz > 0 and math.isfinite(rec.sample_rate_hz)):
        report.append(Violation("sample_rate", f"sample rate must be positive, got {rec.sample_rate_hz}"))
    elif rec.sample_rate_hz != ACQUISITION_RATE_HZ:
        report.append(
            Violation(
                "sample_rate",
                f"{rec.sample_rate_hz} Hz is not the {ACQUISITION_RATE_HZ:g} Hz acquisition rate",
                severity="warning",
            )
        )

    for violation in report:
        logger.debug(f"recording {rec.subject_id}: {violation}")
    return report


def errors_only(report: list[Violation]) -> list[Violation]:
    return [v for v in report if v.severity == "error"]
