import numpy as np
import pytest

from graspdec.core.classify import (
    EvaluationConfig,
    SvmModel,
    accuracy_statistics,
    build_accuracy_table,
    evaluate,
    evaluate_epochs,
    evaluation_splits,
    phase_contrast,
    predict,
    predict_labels,
    train_svm,
)
from graspdec.core.epoching import extract_epochs
from graspdec.core.errors import ConfigError, InsufficientDataError, NumericalError, ValidationError
from graspdec.core.model import BandName, GraspClass, Phase, band_by_name
from graspdec.core.preprocess import apply_filter_bank, preprocess_recording

BANDS = list(BandName)

# Five-subject observation/movement accuracy table with its printed Mean row
REFERENCE_ROWS = {
    "s1": [45, 55, 80, 50, 60, 45, 50, 65, 45, 70],
    "s2": [75, 60, 70, 60, 50, 65, 40, 60, 50, 45],
    "s3": [80, 65, 70, 75, 65, 60, 65, 80, 80, 75],
    "s4": [80, 60, 85, 60, 70, 65, 75, 75, 65, 60],
    "s5": [60, 65, 65, 75, 55, 40, 65, 55, 55, 65],
}
REFERENCE_MEANS = [68, 61, 74, 64, 65, 55, 59, 67, 59, 63]
COLUMNS = [(phase, band) for phase in Phase for band in BANDS]


def reference_results():
    return {subject: dict(zip(COLUMNS, row)) for subject, row in REFERENCE_ROWS.items()}


def test_two_point_problem_is_solved_exactly():
    model = train_svm([[1.0], [-1.0]], [1, -1], c_parameter=10.0)
    assert model.weights[0] == pytest.approx(1.0, abs=1e-6)
    assert model.bias == pytest.approx(0.0, abs=1e-6)
    assert 2 / np.linalg.norm(model.weights) == pytest.approx(2.0, abs=1e-6)
    np.testing.assert_allclose(model.dual_coefficients, [0.5, 0.5], atol=1e-9)


def test_duplicated_training_set_gives_the_same_hyperplane():
    x = np.array([[1.0, 0.0], [1.0, 1.0], [-1.0, 0.0], [-1.0, 1.0]])
    y = np.array([1, 1, -1, -1])
    single = train_svm(x, y, c_parameter=10.0)
    doubled = train_svm(np.vstack([x, x]), np.concatenate([y, y]), c_parameter=10.0)
    np.testing.assert_allclose(single.weights, [1.0, 0.0], atol=1e-6)
    np.testing.assert_allclose(doubled.weights, single.weights, atol=1e-6)
    assert doubled.bias == pytest.approx(single.bias, abs=1e-6)


def test_kkt_residual_on_random_problems():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(6, 40))
        x = rng.standard_normal((n, 4))
        y = np.where(x[:, 0] + 0.8 * rng.standard_normal(n) > 0, 1, -1)
        y[:2] = [1, -1]
        model = train_svm(x, y, c_parameter=float(rng.uniform(0.1, 5.0)))
        assert model.kkt_residual <= 1e-6
        assert np.all(model.dual_coefficients >= 0)
        assert np.all(model.dual_coefficients <= model.c_parameter + 1e-12)
        assert model.dual_coefficients @ y == pytest.approx(0.0, abs=1e-9)


def test_weight_norm_grows_with_c_on_separable_data():
    rng = np.random.default_rng(3)
    x = np.vstack([rng.normal(2.0, 0.5, (15, 2)), rng.normal(-2.0, 0.5, (15, 2))])
    y = np.array([1] * 15 + [-1] * 15)
    norms = [np.linalg.norm(train_svm(x, y, c).weights) for c in (0.01, 0.1, 1.0, 10.0)]
    assert all(later >= earlier - 1e-6 for earlier, later in zip(norms, norms[1:]))
    assert np.mean(predict_labels(train_svm(x, y, 1.0), x) == y) == 1.0


def test_training_accuracy_does_not_drop_with_c():
    # nine Power points sit where the class-mean direction scores them negative
    x = np.array([[1.0, 4.0]] * 9 + [[1.0, -4.0]] + [[-1.0, 4.0]] * 10)
    y = np.array([1] * 10 + [-1] * 10)
    accuracies = [np.mean(predict_labels(train_svm(x, y, c), x) == y) for c in (0.01, 1.0, 100.0)]
    assert accuracies == sorted(accuracies)
    assert accuracies[-1] == 1.0


def test_large_c_converges_on_noisy_problems():
    rng = np.random.default_rng(60)
    for _ in range(60):
        n = int(rng.integers(10, 41))
        x = rng.standard_normal((n, 4))
        y = np.where(x[:, 0] + rng.standard_normal(n) > 0, 1, -1)
        y[:2] = [1, -1]
        model = train_svm(x, y, c_parameter=100.0)
        assert model.kkt_residual <= 1e-6
        assert np.all(model.dual_coefficients <= 100.0 + 1e-9)


def test_translation_leaves_training_predictions_unchanged():
    rng = np.random.default_rng(21)
    for _ in range(50):
        n = int(rng.integers(10, 40))
        x = rng.standard_normal((n, 4))
        y = np.where(x[:, 1] - x[:, 2] + 0.5 * rng.standard_normal(n) > 0, 1, -1)
        y[:2] = [1, -1]
        shift = rng.uniform(-5.0, 5.0, 4)
        model = train_svm(x, y)
        shifted = train_svm(x + shift, y)
        np.testing.assert_array_equal(predict_labels(shifted, x + shift), predict_labels(model, x))


def best_linear_accuracy(x, y):
    """Brute force over directions and thresholds between projected points."""
    best = 0.0
    for angle in np.linspace(0, 2 * np.pi, 720, endpoint=False):
        direction = np.array([np.cos(angle), np.sin(angle)])
        scores = x @ direction
        cuts = np.concatenate([[scores.min() - 1], (np.sort(scores)[:-1] + np.sort(scores)[1:]) / 2,
                               [scores.max() + 1]])
        for cut in cuts:
            best = max(best, np.mean(np.where(scores - cut >= 0, 1, -1) == y))
    return best


def test_xor_is_capped_at_three_quarters():
    x = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
    y = np.array([1, 1, -1, -1])
    model = train_svm(x, y, c_parameter=1.0)
    assert np.mean(predict_labels(model, x) == y) <= 0.75
    assert best_linear_accuracy(x, y) == pytest.approx(0.75)


def test_zero_score_predicts_power():
    model = SvmModel(weights=[0.0, 0.0], bias=0.0, c_parameter=1.0, dual_coefficients=[])
    assert predict(model, np.array([3.0, -1.0])) is GraspClass.POWER
    with pytest.raises(ValidationError):
        predict(model, np.array([1.0, 2.0, 3.0]))


def test_training_input_errors():
    with pytest.raises(InsufficientDataError):
        train_svm([[1.0], [2.0]], [1, 1])
    with pytest.raises(ValidationError):
        train_svm([[1.0], [2.0]], [1, -1, 1])
    with pytest.raises(ValidationError):
        train_svm([[1.0], [2.0]], [1, -1], c_parameter=0.0)
    with pytest.raises(ValidationError):
        train_svm([[np.nan], [2.0]], [1, -1])


def test_iteration_cap_raises_numerical_error():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((30, 3))
    y = np.where(rng.standard_normal(30) > 0, 1, -1)
    y[:2] = [1, -1]
    with pytest.raises(NumericalError):
        train_svm(x, y, max_iter=1)


def test_invalid_evaluation_config():
    with pytest.raises(ConfigError):
        EvaluationConfig(test_fraction=1.0)
    with pytest.raises(ConfigError):
        EvaluationConfig(scheme="kfold", k=1)
    with pytest.raises(ValueError):
        EvaluationConfig(scheme="loo")


def test_holdout_split_is_stratified_and_seeded():
    labels = [1] * 50 + [-1] * 50
    config = EvaluationConfig(seed=4)
    ((train, test),) = evaluation_splits(labels, config)
    assert len(test) == 20
    assert set(train).isdisjoint(test)
    assert sum(labels[i] > 0 for i in test) == 10
    ((_, again),) = evaluation_splits(labels, config)
    np.testing.assert_array_equal(test, again)
    ((_, other),) = evaluation_splits(labels, EvaluationConfig(seed=5))
    assert set(other) != set(test)


def test_kfold_tests_every_trial_once():
    labels = [1] * 12 + [-1] * 13
    splits = evaluation_splits(labels, EvaluationConfig(scheme="kfold", k=5))
    assert len(splits) == 5
    tested = np.concatenate([test for _, test in splits])
    assert sorted(tested.tolist()) == list(range(25))


def test_split_with_too_few_trials_per_class():
    with pytest.raises(InsufficientDataError):
        evaluation_splits([1, 1, 1, 1, -1], EvaluationConfig())


def test_evaluate_separable_features():
    rng = np.random.default_rng(8)
    x = np.vstack([rng.normal(3.0, 0.3, (25, 4)), rng.normal(-3.0, 0.3, (25, 4))])
    y = [1] * 25 + [-1] * 25
    result = evaluate(x, y, EvaluationConfig(scheme="kfold", k=5))
    assert result.accuracy == 100.0
    assert result.n_test == 50
    assert len(result.split_accuracies) == 5


def test_shuffled_labels_are_at_chance():
    rng = np.random.default_rng(40)
    x = np.vstack([rng.normal(1.0, 1.0, (50, 4)), rng.normal(-1.0, 1.0, (50, 4))])
    labels = [1] * 50 + [-1] * 50
    accuracies = [
        evaluate(x, rng.permutation(labels), EvaluationConfig(seed=seed)).accuracy for seed in range(20)
    ]
    assert all(a % 5 == 0 for a in accuracies)
    assert 40.0 <= np.mean(accuracies) <= 60.0


@pytest.mark.parametrize("phase", list(Phase))
def test_planted_alpha_contrast_is_decoded(high_contrast_session, phase):
    session = high_contrast_session
    alpha = band_by_name("alpha")
    cleaned = preprocess_recording(session.recording)
    bank = apply_filter_bank(cleaned.samples, [alpha], 250.0)
    epochs = extract_epochs(bank[alpha], session.events, phase, 250.0, alpha).epochs
    result = evaluate_epochs(epochs, EvaluationConfig(seed=1))
    assert result.n_test == 20
    assert result.accuracy % 5 == 0
    assert result.accuracy >= 90.0


def test_reference_table_means():
    table = build_accuracy_table(reference_results())
    means = [table.means[c] for c in COLUMNS]
    gamma_observation = COLUMNS.index((Phase.OBSERVATION, BandName.GAMMA))
    for index, (computed, printed) in enumerate(zip(means, REFERENCE_MEANS)):
        if index != gamma_observation:
            assert computed == printed
    # the printed 65 does not match its own rows
    assert means[gamma_observation] == 60
    assert table.best == {Phase.OBSERVATION: BandName.ALPHA, Phase.MOVEMENT: BandName.ALPHA}


def test_table_formats_carry_the_same_numbers():
    table = build_accuracy_table(reference_results())
    csv_text = table.to_csv()
    lines = csv_text.splitlines()
    assert lines[0].startswith("Subjects,Observation Delta,Observation Theta")
    assert lines[1] == "s1,45,55,80,50,60,45,50,65,45,70"
    assert lines[6] == "Mean,68,61,74,64,60,55,59,67,59,63"
    assert lines[7] == "Best,,,*,,,,,*,,"

    markdown = table.to_markdown()
    assert "| Observation Phase (%) |" in markdown
    assert "| Mean | 68 | 61 | **74** | 64 | 60 | 55 | 59 | **67** | 59 | 63 |" in markdown
    assert "| s3 | 80 | 65 | 70 | 75 | 65 | 60 | 65 | 80 | 80 | 75 |" in markdown


def test_single_subject_mean_equals_row():
    results = {"s1": reference_results()["s4"]}
    table = build_accuracy_table(results)
    assert [table.means[c] for c in COLUMNS] == REFERENCE_ROWS["s4"]


def test_half_means_round_away_from_zero():
    table = build_accuracy_table({
        "s1": {(Phase.OBSERVATION, BandName.ALPHA): 60.0},
        "s2": {(Phase.OBSERVATION, BandName.ALPHA): 65.0},
    })
    assert table.means[(Phase.OBSERVATION, BandName.ALPHA)] == 63
    assert table.columns == [(Phase.OBSERVATION, BandName.ALPHA)]


def test_column_mismatch_is_rejected():
    results = reference_results()
    del results["s2"][(Phase.MOVEMENT, BandName.BETA)]
    with pytest.raises(ValidationError, match="s2"):
        build_accuracy_table(results)


def test_out_of_range_accuracy_is_rejected():
    with pytest.raises(ValidationError):
        build_accuracy_table({"s1": {(Phase.OBSERVATION, BandName.ALPHA): 120.0}})


def test_statistics_and_phase_contrast():
    table = build_accuracy_table(reference_results())
    alpha = accuracy_statistics(table)[(Phase.OBSERVATION, BandName.ALPHA)]
    assert alpha == {"min": 65.0, "q1": 70.0, "median": 70.0, "q3": 80.0, "max": 85.0, "mean": 74.0}
    contrast = phase_contrast(table)
    assert contrast[BandName.ALPHA] == pytest.approx(7.0)
    assert contrast[BandName.DELTA] == pytest.approx(13.0)
    assert contrast[BandName.GAMMA] == pytest.approx(-3.0)


def test_stats_sections_are_appended():
    table = build_accuracy_table(reference_results())
    csv_text = table.to_csv(stats=True)
    assert "Statistic," in csv_text
    assert "Observation - Movement,13.00,2.00,7.00,5.00,-3.00" in csv_text
    assert "| Phase contrast |" in table.to_markdown(stats=True)

