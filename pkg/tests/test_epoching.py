import numpy as np
import pytest

from graspdec.core.epoching import epochs_by_class, extract_epochs, window_bounds, window_samples
from graspdec.core.errors import ValidationError
from graspdec.core.model import EventKind, EventLog, EventMarker, GraspClass, ObjectKind, Phase


def _cue_log(cues):
    return EventLog(tuple(EventMarker(sample, EventKind.AUDIO_CUE, tid, obj) for tid, sample, obj in cues))


def _ramp(n_channels=8, n_samples=3000):
    # value encodes (channel, sample) so slices are easy to check
    return np.arange(n_channels)[:, None] * 100000.0 + np.arange(n_samples)[None, :]


def test_window_is_two_seconds():
    assert window_samples(250.0) == 500
    assert window_bounds(1000, Phase.OBSERVATION, 500) == (500, 1000)
    assert window_bounds(1000, Phase.MOVEMENT, 500) == (1000, 1500)


def test_observation_window_ends_before_the_cue():
    signals = _ramp()
    events = _cue_log([(1, 1000, ObjectKind.POWER_OBJECT)])
    (epoch,) = extract_epochs(signals, events, Phase.OBSERVATION, 250.0).epochs
    assert epoch.data.shape == (8, 500)
    assert epoch.data[0, 0] == 500
    assert epoch.data[0, -1] == 999
    assert epoch.grasp_class is GraspClass.POWER


def test_movement_window_starts_at_the_cue():
    signals = _ramp()
    events = _cue_log([(1, 1000, ObjectKind.PRECISION_OBJECT)])
    (epoch,) = extract_epochs(signals, events, Phase.MOVEMENT, 250.0).epochs
    assert epoch.data[3, 0] == 3 * 100000 + 1000
    assert epoch.data[3, -1] == 3 * 100000 + 1499
    assert epoch.label == -1


def test_no_object_trials_are_skipped_and_order_follows_trial_id():
    events = _cue_log([
        (3, 2000, ObjectKind.POWER_OBJECT),
        (1, 800, ObjectKind.PRECISION_OBJECT),
        (2, 1400, ObjectKind.NO_OBJECT),
    ])
    result = extract_epochs(_ramp(), events, Phase.OBSERVATION, 250.0)
    assert [e.trial_id for e in result.epochs] == [1, 3]
    assert result.errors == []


@pytest.mark.parametrize("phase, cue", [(Phase.OBSERVATION, 499), (Phase.MOVEMENT, 2501)])
def test_out_of_bounds_trial_is_reported_not_fatal(phase, cue):
    events = _cue_log([(1, 1000, ObjectKind.POWER_OBJECT), (2, cue, ObjectKind.PRECISION_OBJECT)])
    result = extract_epochs(_ramp(), events, phase, 250.0)
    assert [e.trial_id for e in result.epochs] == [1]
    assert [e.trial_id for e in result.errors] == [2]
    with pytest.raises(ValidationError):
        result.raise_for_errors()


def test_window_may_touch_both_ends():
    events = _cue_log([(1, 500, ObjectKind.POWER_OBJECT), (2, 2500, ObjectKind.PRECISION_OBJECT)])
    assert len(extract_epochs(_ramp(), events, Phase.OBSERVATION, 250.0).epochs) == 2
    assert len(extract_epochs(_ramp(), events, Phase.MOVEMENT, 250.0).epochs) == 2


def test_epochs_are_copies():
    signals = _ramp()
    events = _cue_log([(1, 1000, ObjectKind.POWER_OBJECT)])
    (epoch,) = extract_epochs(signals, events, Phase.MOVEMENT, 250.0).epochs
    signals[:, 1000] = -1
    assert epoch.data[0, 0] == 1000
    assert not epoch.data.flags.writeable


def test_simulated_session_epochs(high_contrast_session):
    session = high_contrast_session
    epochs = extract_epochs(session.recording.samples, session.events, Phase.OBSERVATION, 250.0).epochs
    power, precision = epochs_by_class(epochs)
    assert len(power) == len(precision) == 50
    assert all(e.data.shape == (8, 500) for e in epochs)
