"""
Seeded simulator of the turntable paradigm.

`run_protocol` walks the session state machine (blocks of trials separated
by rests) and emits the event log; `synthesize_eeg` produces an 8-channel
recording X = A S + noise whose latent sources carry class- and
phase-dependent band power inside each trial's observation and movement
periods. The ground truth behind the synthesis travels with the session.

Everything random flows from one seed through named sub-streams:
"schedule" for object order, "sources" for latent sources, "noise" for
sensor noise.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from loguru import logger

from graspdec.core.errors import ProtocolError, SimulationConfigError
from graspdec.core.model import (
    NO_TRIAL,
    ACQUISITION_RATE_HZ,
    TRIAL_EVENT_ORDER,
    BandName,
    EventKind,
    EventLog,
    EventMarker,
    GraspClass,
    Montage,
    ObjectKind,
    Phase,
    Recording,
    band_by_name,
    standard_montage,
)
from graspdec.core.preprocess import band_filter, filtfilt
from graspdec.core.utils import substream

GRASPABLE = (ObjectKind.POWER_OBJECT, ObjectKind.PRECISION_OBJECT)
TAIL_S = 2.0


class ObjectSchedule(str, Enum):
    BALANCED_RANDOM = "BalancedRandom"
    FIXED = "Fixed"


def _positive(name: str, value) -> None:
    if not value > 0:
        raise SimulationConfigError(f"{name} must be positive, got {value}")


@dataclass(frozen=True)
class ProtocolConfig:
    n_blocks: int = 5
    trials_per_block: int = 10
    observation_s: float = 2.0
    movement_s: float = 4.0
    rotation_s: float = 3.0
    rest_between_blocks_s: float = 30.0
    inter_trial_s: float = 2.0
    object_schedule: ObjectSchedule = ObjectSchedule.BALANCED_RANDOM
    fixed_objects: tuple[ObjectKind, ...] = ()
    sample_rate_hz: float = ACQUISITION_RATE_HZ
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "object_schedule", ObjectSchedule(self.object_schedule))
        object.__setattr__(self, "fixed_objects", tuple(ObjectKind(o) for o in self.fixed_objects))
        for name in ("n_blocks", "trials_per_block"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise SimulationConfigError(f"{name} must be a positive integer, got {value!r}")
        for name in ("observation_s", "movement_s", "rotation_s", "rest_between_blocks_s", "inter_trial_s",
                     "sample_rate_hz"):
            _positive(name, getattr(self, name))
        if self.object_schedule is ObjectSchedule.FIXED and not self.fixed_objects:
            raise SimulationConfigError("a Fixed object schedule needs at least one object")

    @property
    def n_trials(self) -> int:
        return self.n_blocks * self.trials_per_block

    def samples(self, seconds: float) -> int:
        return int(round(seconds * self.sample_rate_hz))

    def to_dict(self) -> dict:
        return {
            "n_blocks": self.n_blocks,
            "trials_per_block": self.trials_per_block,
            "observation_s": self.observation_s,
            "movement_s": self.movement_s,
            "rotation_s": self.rotation_s,
            "rest_between_blocks_s": self.rest_between_blocks_s,
            "inter_trial_s": self.inter_trial_s,
            "object_schedule": self.object_schedule.value,
            "fixed_objects": [o.value for o in self.fixed_objects],
            "sample_rate_hz": self.sample_rate_hz,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProtocolConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise SimulationConfigError(f"unknown protocol setting(s): {', '.join(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as e:
            raise SimulationConfigError(f"invalid protocol settings: {e}") from e


PROTOCOL_PRESETS = {
    "total-50": {"n_blocks": 5, "trials_per_block": 10},
    "per-object-50": {"n_blocks": 15, "trials_per_block": 10},
}


def protocol_preset(name: str, seed: int = 0) -> ProtocolConfig:
    """
    "total-50": 5 blocks of 10 trials, 50 trials in total.
    "per-object-50": 15 blocks of 10 trials, 50 per graspable object.
    """
    try:
        settings = PROTOCOL_PRESETS[name]
    except KeyError:
        raise SimulationConfigError(f"unknown preset '{name}'. Valid presets: {', '.join(PROTOCOL_PRESETS)}") from None
    return ProtocolConfig(seed=seed, **settings)


def object_sequence(config: ProtocolConfig) -> list[ObjectKind]:
    """Object per trial; Fixed schedules are cycled or truncated to the trial count."""
    n = config.n_trials
    if config.object_schedule is ObjectSchedule.FIXED:
        return [config.fixed_objects[i % len(config.fixed_objects)] for i in range(n)]

    rng = substream(config.seed, "schedule")
    conditions = list(ObjectKind)
    counts = [n // len(conditions)] * len(conditions)
    for extra in rng.choice(len(conditions), size=n % len(conditions), replace=False):
        counts[int(extra)] += 1
    objects = [kind for kind, count in zip(conditions, counts) for _ in range(count)]
    return [objects[i] for i in rng.permutation(n)]


def run_protocol(config: ProtocolConfig) -> EventLog:
    """
    Event log of one session.

    Block markers carry trial_id -1 and NoObject; trial ids count from 1.
    Per trial: RotationStart and GlassesOpaque together, GlassesTransparent
    and ObservationStart after the rotation, AudioCue after the observation
    period, MovementEnd after the movement period, then the inter-trial gap.
    Rests sit between blocks only.
    """
    objects = object_sequence(config)
    rotation = config.samples(config.rotation_s)
    observation = config.samples(config.observation_s)
    movement = config.samples(config.movement_s)
    gap = config.samples(config.inter_trial_s)
    rest = config.samples(config.rest_between_blocks_s)

    markers = []
    position = 0
    trial_id = 0

    def mark(kind, trial=NO_TRIAL, obj=ObjectKind.NO_OBJECT):
        markers.append(EventMarker(position, kind, trial, obj))

    for block in range(config.n_blocks):
        mark(EventKind.BLOCK_START)
        for _ in range(config.trials_per_block):
            trial_id += 1
            obj = objects[trial_id - 1]
            mark(EventKind.ROTATION_START, trial_id, obj)
            mark(EventKind.GLASSES_OPAQUE, trial_id, obj)
            position += rotation
            mark(EventKind.GLASSES_TRANSPARENT, trial_id, obj)
            mark(EventKind.OBSERVATION_START, trial_id, obj)
            position += observation
            mark(EventKind.AUDIO_CUE, trial_id, obj)
            position += movement
            mark(EventKind.MOVEMENT_END, trial_id, obj)
            position += gap
        mark(EventKind.BLOCK_END)
        if block < config.n_blocks - 1:
            mark(EventKind.REST_START)
            position += rest
            mark(EventKind.REST_END)

    n_samples = position + 1 + config.samples(TAIL_S)
    logger.debug(
        f"Protocol: {config.n_blocks} blocks x {config.trials_per_block} trials, "
        f"{n_samples} samples ({n_samples / config.sample_rate_hz:.0f} s)"
    )
    return EventLog(tuple(markers), config.sample_rate_hz, n_samples)


def _describe(index: int, marker: EventMarker) -> str:
    trial = f" (trial {marker.trial_id})" if marker.trial_id != NO_TRIAL else ""
    return f"event {index} {marker.kind.value}{trial} at sample {marker.sample_index}"


def validate_event_log(events: EventLog) -> list[str]:
    """
    Violations of the protocol automaton, in log order; empty means valid.

    Session: (BlockStart trial+ BlockEnd (RestStart RestEnd)?)* with rests
    only between blocks. Trial: RotationStart GlassesOpaque
    GlassesTransparent ObservationStart AudioCue MovementEnd sharing one
    trial_id and object. Sample indices never decrease.
    """
    violations = []
    state = "idle"  # idle | block_open | in_block | after_block | resting | after_rest
    step = 0  # position inside the current trial
    current = None
    seen_trials = set()
    previous_sample = None

    for index, marker in enumerate(events.markers):
        where = _describe(index, marker)
        if previous_sample is not None and marker.sample_index < previous_sample:
            violations.append(f"{where}: sample index decreases from {previous_sample}")
        previous_sample = marker.sample_index
        if marker.sample_index < 0 or (events.n_samples is not None and marker.sample_index >= events.n_samples):
            violations.append(f"{where}: outside the recording")

        if step:
            expected = TRIAL_EVENT_ORDER[step]
            same_trial = marker.trial_id == current.trial_id and marker.object is current.object
            if marker.kind is not expected or not same_trial:
                violations.append(f"{where}: expected {expected.value} of trial {current.trial_id}")
                step = 0
                state = "in_block"
                continue
            step = (step + 1) % len(TRIAL_EVENT_ORDER)
            continue

        kind = marker.kind
        if kind is EventKind.ROTATION_START:
            if state not in ("block_open", "in_block"):
                violations.append(f"{where}: trial outside a block")
            if marker.trial_id == NO_TRIAL or marker.trial_id in seen_trials:
                violations.append(f"{where}: trial id must be new and non-negative")
            seen_trials.add(marker.trial_id)
            current = marker
            step = 1
            state = "in_block"
        elif kind is EventKind.BLOCK_START:
            if state not in ("idle", "after_block", "after_rest"):
                violations.append(f"{where}: block opened inside another block")
            state = "block_open"
        elif kind is EventKind.BLOCK_END:
            if state != "in_block":
                violations.append(f"{where}: block closed without trials")
            state = "after_block"
        elif kind is EventKind.REST_START:
            if state != "after_block":
                violations.append(f"{where}: rest must follow a block")
            state = "resting"
        elif kind is EventKind.REST_END:
            if state != "resting":
                violations.append(f"{where}: rest ended without starting")
            state = "after_rest"
        else:
            violations.append(f"{where}: {kind.value} outside its trial sequence")

        if kind in (EventKind.BLOCK_START, EventKind.BLOCK_END, EventKind.REST_START, EventKind.REST_END):
            if marker.trial_id != NO_TRIAL:
                violations.append(f"{where}: block-level marker carries trial id {marker.trial_id}")

    if step:
        violations.append(f"trial {current.trial_id} is incomplete at end of log")
    if state in ("block_open", "in_block"):
        violations.append("last block is never closed")
    elif state in ("resting", "after_rest"):
        violations.append("rest after the final block")
    return violations


def label_trials(events: EventLog) -> list[tuple[int, ObjectKind]]:
    """(trial_id, object) per trial from the AudioCue markers of a valid log."""
    violations = validate_event_log(events)
    if violations:
        raise ProtocolError(f"malformed event log: {violations[0]}", violations=violations)
    return [(cue.trial_id, cue.object) for cue in events.audio_cues()]


def _multiplier_key(grasp_class, phase) -> tuple[GraspClass, Phase]:
    return GraspClass(grasp_class), Phase(phase)


@dataclass(frozen=True)
class SourceSpec:
    """
    One latent source: band-limited noise mixed onto the electrodes.

    The mixing column is either explicit or a Gaussian bump of width
    `spread` (unit-disc distance) centred on an electrode. `multipliers`
    scale source power per (grasp class, phase) inside the matching period;
    missing keys mean 1.
    """

    name: str
    band: BandName
    amplitude_uv: float = 10.0
    centre: str | None = None
    spread: float = 0.35
    mixing: tuple[float, ...] | None = None
    multipliers: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "band", BandName.parse(self.band))
        if self.mixing is not None:
            object.__setattr__(self, "mixing", tuple(float(v) for v in self.mixing))
        multipliers = {_multiplier_key(*key): float(value) for key, value in dict(self.multipliers).items()}
        object.__setattr__(self, "multipliers", multipliers)

    def multiplier(self, grasp_class: GraspClass, phase: Phase) -> float:
        return self.multipliers.get((grasp_class, phase), 1.0)

    def to_dict(self) -> dict:
        nested = {}
        for (grasp_class, phase), value in sorted(self.multipliers.items()):
            nested.setdefault(grasp_class.value, {})[phase.value] = value
        return {
            "name": self.name,
            "band": self.band.value,
            "amplitude_uv": self.amplitude_uv,
            "centre": self.centre,
            "spread": self.spread,
            "mixing": list(self.mixing) if self.mixing is not None else None,
            "multipliers": nested,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SourceSpec":
        multipliers = {
            (grasp_class, phase): value
            for grasp_class, phases in (data.get("multipliers") or {}).items()
            for phase, value in phases.items()
        }
        return cls(
            name=str(data["name"]),
            band=data["band"],
            amplitude_uv=float(data.get("amplitude_uv", 10.0)),
            centre=data.get("centre"),
            spread=float(data.get("spread", 0.35)),
            mixing=data.get("mixing"),
            multipliers=multipliers,
        )


@dataclass(frozen=True)
class SynthesisConfig:
    sources: tuple[SourceSpec, ...]
    noise_sigma_uv: float = 2.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))

    def to_dict(self) -> dict:
        return {
            "sources": [s.to_dict() for s in self.sources],
            "noise_sigma_uv": self.noise_sigma_uv,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict, seed: int = 0) -> "SynthesisConfig":
        """Either explicit {"sources": [...]} or {"contrast": r, "background": bool} for the planted-alpha layout."""
        try:
            noise = float(data.get("noise_sigma_uv", 2.0))
            seed = int(data.get("seed", seed))
            if "sources" in data:
                return cls(tuple(SourceSpec.from_dict(s) for s in data["sources"]), noise, seed)
            return planted_alpha_config(
                contrast=float(data.get("contrast", 4.0)),
                background=bool(data.get("background", True)),
                noise_sigma_uv=noise,
                seed=seed,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SimulationConfigError(f"invalid synthesis settings: {e}") from e


def planted_alpha_config(contrast: float = 4.0, background: bool = True, noise_sigma_uv: float = 2.0,
                         seed: int = 0) -> SynthesisConfig:
    """
    Occipital alpha stronger for Power grasps while observing, central alpha
    stronger for Power grasps while moving, both by `contrast` in power.
    Background sources, one per band at other electrodes, are not modulated.
    """
    sources = [
        SourceSpec("occipital_alpha", BandName.ALPHA, 10.0, centre="Oz",
                   multipliers={(GraspClass.POWER, Phase.OBSERVATION): contrast}),
        SourceSpec("central_alpha", BandName.ALPHA, 10.0, centre="Cz",
                   multipliers={(GraspClass.POWER, Phase.MOVEMENT): contrast}),
    ]
    if background:
        sources += [
            SourceSpec("frontal_delta", BandName.DELTA, 5.0, centre="Fz"),
            SourceSpec("parietal_theta", BandName.THETA, 5.0, centre="Pz"),
            SourceSpec("left_beta", BandName.BETA, 5.0, centre="C3"),
            SourceSpec("right_gamma", BandName.GAMMA, 5.0, centre="C4"),
        ]
    return SynthesisConfig(tuple(sources), noise_sigma_uv, seed)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """
    What a simulated session was built from.

    Each source is one stationary realization spanning the whole recording,
    so `source_seeds` holds one seed per source and it covers every trial;
    trials differ only by their class envelopes. Regenerating a source from
    its seed reproduces it sample for sample.
    """

    mixing_matrix: np.ndarray  # [n_channels x n_sources]
    sources: tuple[SourceSpec, ...]
    noise_sigma_uv: float
    source_seeds: tuple[int, ...]
    seed: int = 0

    def __post_init__(self):
        mixing = np.array(self.mixing_matrix, dtype=float)
        mixing.setflags(write=False)
        object.__setattr__(self, "mixing_matrix", mixing)
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "source_seeds", tuple(int(s) for s in self.source_seeds))

    def column(self, name: str) -> np.ndarray:
        names = [s.name for s in self.sources]
        return self.mixing_matrix[:, names.index(name)]

    def to_dict(self) -> dict:
        return {
            "mixing_matrix": self.mixing_matrix.tolist(),
            "sources": [
                {**source.to_dict(), "seed": seed} for source, seed in zip(self.sources, self.source_seeds)
            ],
            "noise_sigma_uv": self.noise_sigma_uv,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GroundTruth":
        return cls(
            mixing_matrix=np.array(data["mixing_matrix"], dtype=float),
            sources=tuple(SourceSpec.from_dict(s) for s in data["sources"]),
            noise_sigma_uv=float(data["noise_sigma_uv"]),
            source_seeds=tuple(int(s["seed"]) for s in data["sources"]),
            seed=int(data.get("seed", 0)),
        )


@dataclass(frozen=True)
class SessionArtifacts:
    recording: Recording
    events: EventLog
    ground_truth: GroundTruth


def mixing_matrix(config: SynthesisConfig, montage: Montage) -> np.ndarray:
    """[n_channels x n_sources]; must have full column rank."""
    if not config.sources:
        raise SimulationConfigError("synthesis needs at least one source")
    columns = []
    for source in config.sources:
        if source.mixing is not None:
            if len(source.mixing) != montage.n_channels:
                raise SimulationConfigError(
                    f"source {source.name}: mixing column has {len(source.mixing)} entries, "
                    f"montage has {montage.n_channels} electrodes"
                )
            columns.append(np.array(source.mixing, dtype=float))
            continue
        if source.centre not in montage.labels:
            raise SimulationConfigError(f"source {source.name}: centre '{source.centre}' is not a montage electrode")
        _positive(f"source {source.name} spread", source.spread)
        distance = np.linalg.norm(montage.positions - montage.position(source.centre), axis=1)
        columns.append(np.exp(-(distance**2) / (2 * source.spread**2)))

    mixing = np.column_stack(columns)
    if np.linalg.matrix_rank(mixing) < mixing.shape[1]:
        raise SimulationConfigError(
            f"mixing matrix [{mixing.shape[0]} x {mixing.shape[1]}] does not have full column rank"
        )
    return mixing


def _check_sources(config: SynthesisConfig, sample_rate_hz: float) -> None:
    if not config.noise_sigma_uv >= 0:
        raise SimulationConfigError(f"noise_sigma_uv must be non-negative, got {config.noise_sigma_uv}")
    names = [s.name for s in config.sources]
    if len(set(names)) != len(names):
        raise SimulationConfigError("source names must be unique")
    for source in config.sources:
        _positive(f"source {source.name} amplitude_uv", source.amplitude_uv)
        if not band_by_name(source.band).fits(sample_rate_hz):
            raise SimulationConfigError(
                f"source {source.name}: {source.band} band exceeds Nyquist at {sample_rate_hz} Hz"
            )
        for (grasp_class, phase), value in source.multipliers.items():
            if not value > 0:
                raise SimulationConfigError(
                    f"source {source.name}: multiplier for {grasp_class}/{phase} must be positive, got {value}"
                )


def synthesize_sources(config: SynthesisConfig, n_samples: int,
                       sample_rate_hz: float = ACQUISITION_RATE_HZ) -> tuple[np.ndarray, tuple[int, ...]]:
    """
    Stationary latent sources [n_sources x n_samples] and their seeds.

    Each source is white noise passed zero-phase through its band's filter,
    then scaled to an RMS of `amplitude_uv`. Power modulation is applied
    later by `synthesize_eeg`.
    """
    _check_sources(config, sample_rate_hz)
    rng = substream(config.seed, "sources")
    seeds = tuple(int(s) for s in rng.integers(0, 2**31 - 1, size=len(config.sources)))
    sources = np.empty((len(config.sources), n_samples))
    for row, (source, seed) in enumerate(zip(config.sources, seeds)):
        white = np.random.default_rng(seed).standard_normal(n_samples)
        limited = filtfilt(band_filter(band_by_name(source.band), sample_rate_hz), white)
        rms = np.sqrt(np.mean(limited**2))
        sources[row] = limited * (source.amplitude_uv / rms)
    return sources, seeds


def source_envelopes(events: EventLog, config: SynthesisConfig, n_samples: int) -> np.ndarray:
    """Amplitude gain per source and sample: sqrt(multiplier) inside each modulated period, else 1."""
    envelopes = np.ones((len(config.sources), n_samples))
    for markers in events.trials().values():
        by_kind = {m.kind: m.sample_index for m in markers}
        grasp_class = markers[0].object.grasp_class
        if grasp_class is None:
            continue
        spans = {
            Phase.OBSERVATION: (by_kind[EventKind.OBSERVATION_START], by_kind[EventKind.AUDIO_CUE]),
            Phase.MOVEMENT: (by_kind[EventKind.AUDIO_CUE], by_kind[EventKind.MOVEMENT_END]),
        }
        for row, source in enumerate(config.sources):
            for phase, (start, stop) in spans.items():
                gain = source.multiplier(grasp_class, phase)
                if gain != 1.0:
                    envelopes[row, start:stop] *= np.sqrt(gain)
    return envelopes


def synthesize_eeg(events: EventLog, config: SynthesisConfig, montage: Montage | None = None,
                   subject_id: str = "s1") -> SessionArtifacts:
    """X = A (envelope * S) + uncorrelated Gaussian sensor noise, in microvolts."""
    montage = montage or standard_montage()
    label_trials(events)
    fs = events.sample_rate_hz
    n_samples = events.n_samples
    if n_samples is None:
        last = max((m.sample_index for m in events.markers), default=0)
        n_samples = last + 1 + int(round(TAIL_S * fs))
        events = EventLog(events.markers, fs, n_samples)

    _check_sources(config, fs)
    mixing = mixing_matrix(config, montage)
    sources, seeds = synthesize_sources(config, n_samples, fs)
    modulated = sources * source_envelopes(events, config, n_samples)

    noise = substream(config.seed, "noise").normal(0.0, 1.0, size=(montage.n_channels, n_samples))
    samples = mixing @ modulated + config.noise_sigma_uv * noise
    logger.debug(
        f"Synthesized {subject_id}: {len(config.sources)} sources, noise {config.noise_sigma_uv} uV, "
        f"{n_samples} samples"
    )
    truth = GroundTruth(mixing, config.sources, config.noise_sigma_uv, seeds, config.seed)
    return SessionArtifacts(Recording(subject_id, fs, montage, samples), events, truth)


def simulate_session(protocol: ProtocolConfig, synthesis: SynthesisConfig, subject_id: str = "s1",
                     montage: Montage | None = None) -> SessionArtifacts:
    return synthesize_eeg(run_protocol(protocol), synthesis, montage, subject_id)
