import numpy as np
import pytest
from scipy import linalg

from graspdec.core.csp import (
    CspModel,
    fit_csp,
    fit_csp_from_covariances,
    log_variance_features,
    project,
    selected_components,
    spatial_patterns,
    trial_covariance,
)
from graspdec.core.epoching import Epoch, epochs_by_class, extract_epochs
from graspdec.core.errors import DegenerateTrialError, InsufficientDataError, ValidationError
from graspdec.core.model import GraspClass, Phase, band_by_name
from graspdec.core.preprocess import apply_filter_bank, preprocess_recording
from graspdec.core.simulate import planted_alpha_config, protocol_preset, simulate_session


def jacobi_eigenvalues(m, sweeps=100, tol=1e-15):
    """Cyclic Jacobi rotations on a symmetric matrix; returns the diagonal."""
    a = np.array(m, dtype=float)
    n = a.shape[0]
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off < tol * np.linalg.norm(a):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta**2 + 1)) if theta != 0 else 1.0
                c = 1 / np.sqrt(t**2 + 1)
                s = t * c
                rotation = np.eye(n)
                rotation[p, p] = rotation[q, q] = c
                rotation[p, q] = s
                rotation[q, p] = -s
                a = rotation.T @ a @ rotation
    return np.diag(a)


def generalized_eigenvalues_oracle(c1, c2):
    lower = np.linalg.cholesky(c1 + c2)
    inverse = np.linalg.inv(lower)
    return np.sort(jacobi_eigenvalues(inverse @ c1 @ inverse.T))[::-1]


def test_simultaneous_diagonalization_against_jacobi_oracle(random_spd):
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(2, 9))
        c1, c2 = random_spd(n, rng), random_spd(n, rng)
        model = fit_csp_from_covariances(c1, c2)
        w = model.projection
        d1 = w @ c1 @ w.T
        d2 = w @ c2 @ w.T
        off_diagonal = ~np.eye(n, dtype=bool)

        assert np.abs(d1[off_diagonal]).max() <= 1e-8
        assert np.abs(d2[off_diagonal]).max() <= 1e-8
        np.testing.assert_allclose(np.diag(d1) + np.diag(d2), 1.0, atol=1e-8)
        np.testing.assert_allclose(np.diag(d1), model.eigenvalues, atol=1e-8)
        np.testing.assert_allclose(model.eigenvalues, generalized_eigenvalues_oracle(c1, c2), atol=1e-8)
        assert np.all(np.diff(model.eigenvalues) <= 0)
        assert not model.regularized


def test_patterns_invert_filters_and_signs_are_normalized(random_spd):
    rng = np.random.default_rng(1)
    model = fit_csp_from_covariances(random_spd(8, rng), random_spd(8, rng))
    np.testing.assert_allclose(model.patterns @ model.projection, np.eye(8), atol=1e-10)
    largest = model.projection[np.arange(8), np.argmax(np.abs(model.projection), axis=1)]
    assert np.all(largest > 0)


def test_identical_classes_give_half_eigenvalues(random_spd):
    c = random_spd(5, np.random.default_rng(2))
    model = fit_csp_from_covariances(c, c)
    np.testing.assert_allclose(model.eigenvalues, 0.5, atol=1e-12)


def test_singular_composite_is_regularized():
    c1 = np.diag([1.0, 0.0, 0.0])
    c2 = np.diag([0.0, 1.0, 0.0])
    model = fit_csp_from_covariances(c1, c2)
    assert model.regularized
    assert np.isfinite(model.projection).all()
    assert model.eigenvalues[0] == pytest.approx(1.0, abs=1e-6)
    assert model.eigenvalues[-1] == pytest.approx(0.0, abs=1e-6)


def test_mismatched_covariances_are_rejected():
    with pytest.raises(ValidationError):
        fit_csp_from_covariances(np.eye(3), np.eye(4))


def test_selected_components():
    assert selected_components(8) == (0, 1, 6, 7)
    assert selected_components(4) == (0, 1, 2, 3)
    assert selected_components(3) == (0, 1, 2)


def test_trial_covariance_is_trace_normalized(rng):
    x = rng.standard_normal((8, 500)) * np.arange(1, 9)[:, None]
    cov = trial_covariance(x)
    assert np.trace(cov) == pytest.approx(1.0)
    np.testing.assert_array_equal(cov, cov.T)
    np.testing.assert_allclose(trial_covariance(3 * x), cov, atol=1e-15)


def test_zero_energy_trial_is_degenerate():
    epoch = Epoch(9, Phase.MOVEMENT, GraspClass.POWER, np.zeros((8, 500)))
    with pytest.raises(DegenerateTrialError, match="trial 9"):
        trial_covariance(epoch)


def _epochs(rng, n, grasp_class, scales, phase=Phase.OBSERVATION):
    return [
        Epoch(i, phase, grasp_class, rng.standard_normal((len(scales), 500)) * np.asarray(scales)[:, None])
        for i in range(n)
    ]


def test_fit_needs_two_epochs_per_class(rng):
    with pytest.raises(InsufficientDataError):
        fit_csp(_epochs(rng, 1, GraspClass.POWER, [1, 1, 1]), _epochs(rng, 5, GraspClass.PRECISION, [1, 1, 1]))


def test_fit_rejects_mixed_phases(rng):
    power = _epochs(rng, 3, GraspClass.POWER, [1, 1, 1])
    precision = _epochs(rng, 3, GraspClass.PRECISION, [1, 1, 1], phase=Phase.MOVEMENT)
    with pytest.raises(ValidationError):
        fit_csp(power, precision)


def test_features_are_log_variance_fractions(rng):
    power = _epochs(rng, 20, GraspClass.POWER, [4, 1, 1, 1, 1, 1, 1, 1])
    precision = _epochs(rng, 20, GraspClass.PRECISION, [1, 1, 1, 1, 1, 1, 1, 4])
    model = fit_csp(power, precision)
    assert model.phase is Phase.OBSERVATION
    assert model.eigenvalues[0] > 0.7 > 0.3 > model.eigenvalues[-1]

    fv = log_variance_features(model, power[0])
    assert fv.values.shape == (4,)
    assert fv.grasp_class is GraspClass.POWER
    assert np.exp(fv.values).sum() == pytest.approx(1.0)
    assert np.all(fv.values < 0)
    assert fv.values[0] > fv.values[-1]


def test_swapping_classes_mirrors_the_eigenvalues(random_spd):
    rng = np.random.default_rng(17)
    for _ in range(20):
        n = int(rng.integers(4, 9))
        c1, c2 = random_spd(n, rng), random_spd(n, rng)
        model = fit_csp_from_covariances(c1, c2)
        swapped = fit_csp_from_covariances(c2, c1)
        np.testing.assert_allclose(swapped.eigenvalues, 1.0 - model.eigenvalues[::-1], atol=1e-10)
        assert swapped.selected_indices == model.selected_indices
        selected = list(model.selected_indices)
        angles = linalg.subspace_angles(model.projection[selected].T, swapped.projection[selected].T)
        assert np.max(angles) <= 1e-6


def test_features_ignore_a_global_scale(rng):
    power = _epochs(rng, 10, GraspClass.POWER, [3, 1, 1, 1, 1, 1, 1, 1])
    precision = _epochs(rng, 10, GraspClass.PRECISION, [1, 1, 1, 1, 1, 1, 2, 1])

    def scaled(epochs):
        return [Epoch(e.trial_id, e.phase, e.grasp_class, 37.5 * e.data) for e in epochs]

    model = fit_csp(power, precision)
    rescaled = fit_csp(scaled(power), scaled(precision))
    for epoch, big in zip(power + precision, scaled(power) + scaled(precision)):
        np.testing.assert_allclose(
            log_variance_features(rescaled, big).values, log_variance_features(model, epoch).values, atol=1e-9
        )


def test_silent_component_gives_finite_feature():
    model = CspModel(
        projection=np.eye(4),
        eigenvalues=[0.9, 0.6, 0.4, 0.1],
        selected_indices=(0, 1, 2, 3),
        patterns=np.eye(4),
        class_covariances=(np.eye(4), np.eye(4)),
    )
    data = np.vstack([np.zeros(100), np.random.default_rng(0).standard_normal((3, 100))])
    fv = log_variance_features(model, data)
    assert np.isfinite(fv.values).all()
    assert fv.trial_id == -1 and fv.grasp_class is None
    with pytest.raises(DegenerateTrialError):
        log_variance_features(model, np.zeros((4, 100)))


def test_projection_checks_channel_count(random_spd):
    model = fit_csp_from_covariances(random_spd(3, np.random.default_rng(4)), np.eye(3))
    with pytest.raises(ValidationError):
        project(model, np.ones((4, 10)))


def test_model_document_restores_the_model(random_spd):
    rng = np.random.default_rng(5)
    model = fit_csp_from_covariances(random_spd(8, rng), random_spd(8, rng), band_by_name("alpha"), Phase.MOVEMENT)
    restored = CspModel.from_dict(model.to_dict())
    np.testing.assert_array_equal(restored.projection, model.projection)
    np.testing.assert_array_equal(restored.patterns, model.patterns)
    assert restored.band == model.band and restored.phase is Phase.MOVEMENT
    assert restored.selected_indices == (0, 1, 6, 7)


@pytest.mark.parametrize("document", [{}, {"projection": [[1, 0], [0, 1]]}, "not a model"])
def test_bad_model_document(document):
    with pytest.raises(ValidationError):
        CspModel.from_dict(document)


def test_spatial_patterns_are_scaled(random_spd):
    rng = np.random.default_rng(6)
    patterns = spatial_patterns(fit_csp_from_covariances(random_spd(8, rng), random_spd(8, rng)))
    for scaled in patterns.scaled:
        assert np.abs(scaled).max() == pytest.approx(0.5)


def _alpha_epochs(session, phase):
    cleaned = preprocess_recording(session.recording)
    alpha = band_by_name("alpha")
    bank = apply_filter_bank(cleaned.samples, [alpha], 250.0)
    return extract_epochs(bank[alpha], session.events, phase, 250.0, alpha).epochs


@pytest.mark.parametrize("phase, source", [
    (Phase.OBSERVATION, "occipital_alpha"),
    (Phase.MOVEMENT, "central_alpha"),
])
def test_top_pattern_recovers_planted_source(high_contrast_session, phase, source):
    model = fit_csp(*epochs_by_class(_alpha_epochs(high_contrast_session, phase)))
    planted = high_contrast_session.ground_truth.column(source)
    top = model.patterns[:, 0]
    cosine = abs(top @ planted) / (np.linalg.norm(top) * np.linalg.norm(planted))
    assert cosine >= 0.95


@pytest.mark.parametrize("seed", [21, 22, 23])
def test_no_planted_contrast_gives_balanced_eigenvalues(seed):
    session = simulate_session(protocol_preset("per-object-50", seed=seed), planted_alpha_config(1.0, seed=seed))
    cleaned = preprocess_recording(session.recording)
    epochs = extract_epochs(cleaned.samples, session.events, Phase.OBSERVATION, 250.0).epochs
    model = fit_csp(*epochs_by_class(epochs))
    assert np.all(np.abs(model.eigenvalues - 0.5) <= 0.1)
