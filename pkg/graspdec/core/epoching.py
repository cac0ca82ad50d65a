"""
Cue-aligned windows cut from continuous, already band-filtered signals.

Observation covers [cue - 2 s, cue), movement covers [cue, cue + 2 s); the
cue sample belongs to the movement window. No baseline correction and no
artifact rejection are applied.
"""

from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from graspdec.core.errors import EpochBoundaryError, ValidationError
from graspdec.core.model import BandDefinition, EventLog, GraspClass, Phase

WINDOW_S = 2.0


@dataclass(frozen=True, eq=False)
class Epoch:
    trial_id: int
    phase: Phase
    grasp_class: GraspClass
    data: np.ndarray  # [n_channels x n_window_samples], microvolts
    band: BandDefinition | None = None

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def label(self) -> int:
        return self.grasp_class.label


@dataclass
class EpochExtraction:
    epochs: list[Epoch] = field(default_factory=list)
    errors: list[EpochBoundaryError] = field(default_factory=list)

    def raise_for_errors(self):
        if self.errors:
            raise ValidationError(
                f"{len(self.errors)} trial(s) have windows outside the recording",
                violations=[str(e) for e in self.errors],
            )


def window_samples(sample_rate_hz: float, seconds: float = WINDOW_S) -> int:
    return int(round(seconds * sample_rate_hz))


def window_bounds(cue_sample: int, phase: Phase, n_window: int) -> tuple[int, int]:
    if phase is Phase.OBSERVATION:
        return cue_sample - n_window, cue_sample
    return cue_sample, cue_sample + n_window


def extract_epochs(signals: np.ndarray, events: EventLog, phase: Phase, sample_rate_hz: float,
                   band: BandDefinition | None = None) -> EpochExtraction:
    """
    One epoch per Power/Precision trial, ordered by trial_id.

    Trials whose window leaves the recording are reported in `errors`; the
    remaining trials are still returned.
    """
    signals = np.asarray(signals, dtype=float)
    n_total = signals.shape[-1]
    n_window = window_samples(sample_rate_hz)
    result = EpochExtraction()

    for cue in events.audio_cues():
        grasp_class = cue.object.grasp_class
        if grasp_class is None:
            continue
        start, stop = window_bounds(cue.sample_index, phase, n_window)
        if start < 0 or stop > n_total:
            result.errors.append(
                EpochBoundaryError(
                    cue.trial_id,
                    f"{phase.value.lower()} window [{start}, {stop}) outside recording of {n_total} samples",
                )
            )
            continue
        result.epochs.append(
            Epoch(
                trial_id=cue.trial_id,
                phase=phase,
                grasp_class=grasp_class,
                data=signals[:, start:stop].copy(),
                band=band,
            )
        )

    for error in result.errors:
        logger.warning(f"Skipping {error}")
    logger.debug(
        f"Extracted {len(result.epochs)} {phase.value.lower()} epochs"
        f"{f' ({band.name})' if band else ''}, {len(result.errors)} out of bounds"
    )
    return result


def epochs_by_class(epochs: list[Epoch]) -> tuple[list[Epoch], list[Epoch]]:
    """Stable split into (power, precision)."""
    power = [e for e in epochs if e.grasp_class is GraspClass.POWER]
    precision = [e for e in epochs if e.grasp_class is GraspClass.PRECISION]
    return power, precision
