"""
Linear soft-margin SVM, split-based evaluation and subject-by-column accuracy tables.

Labels: Power = +1, Precision = -1. The dual is solved by sequential
minimal optimisation. The first index of each pair is the maximal
violator; the second maximises the second-order gain gap^2 / curvature.
Ties go to the first index.
"""

import csv
import io
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np
from loguru import logger
from sklearn.model_selection import KFold, ShuffleSplit, StratifiedKFold, StratifiedShuffleSplit

from graspdec.core.csp import FeatureVector, fit_csp, log_variance_features
from graspdec.core.epoching import Epoch, epochs_by_class
from graspdec.core.errors import ConfigError, InsufficientDataError, NumericalError, ValidationError
from graspdec.core.model import BandName, GraspClass, Phase, standard_bands
from graspdec.core.utils import round_half_away, substream_int

KKT_TOLERANCE = 1e-6
DEFAULT_C = 1.0
_MIN_CURVATURE = 1e-12


@dataclass(frozen=True, eq=False)
class SvmModel:
    weights: np.ndarray
    bias: float
    c_parameter: float
    dual_coefficients: np.ndarray  # alpha_i in [0, C], training order
    kkt_residual: float = 0.0
    n_iterations: int = 0

    def __post_init__(self):
        for name in ("weights", "dual_coefficients"):
            value = np.array(getattr(self, name), dtype=float)
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def decision_function(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_features:
            raise ValidationError(f"expected {self.n_features}-dimensional features, got {x.shape[1]}")
        return x @ self.weights + self.bias

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "c_parameter": self.c_parameter,
            "dual_coefficients": self.dual_coefficients.tolist(),
            "kkt_residual": self.kkt_residual,
            "n_iterations": self.n_iterations,
        }


def _feature_matrix(features) -> np.ndarray:
    if len(features) and isinstance(features[0], FeatureVector):
        x = np.array([f.values for f in features], dtype=float)
    else:
        x = np.atleast_2d(np.asarray(features, dtype=float))
    if x.ndim != 2:
        raise ValidationError(f"features must form a 2-D matrix, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValidationError("features contain non-finite values")
    return x


def _label_vector(labels) -> np.ndarray:
    values = [lab.label if isinstance(lab, GraspClass) else int(np.sign(lab)) for lab in labels]
    y = np.array(values, dtype=float)
    if np.any(y == 0):
        raise ValidationError("labels must be GraspClass values or signed integers")
    return y


def _violation(yg: np.ndarray, up: np.ndarray, low: np.ndarray) -> tuple[int, int, float]:
    i = int(np.argmax(np.where(up, yg, -np.inf)))
    j = int(np.argmin(np.where(low, yg, np.inf)))
    return i, j, float(yg[i] - yg[j])


def _second_order_partner(i: int, yg: np.ndarray, low: np.ndarray, gram: np.ndarray, diag: np.ndarray) -> int:
    gain = yg[i] - yg
    curvature = np.maximum(diag[i] + diag - 2 * gram[i], _MIN_CURVATURE)
    candidates = low & (gain > 0)
    return int(np.argmax(np.where(candidates, gain * gain / curvature, -np.inf)))


def train_svm(features, labels, c_parameter: float = DEFAULT_C, tol: float = 1e-7,
              max_iter: int | None = None) -> SvmModel:
    """
    Solve max sum(a) - 1/2 sum_ij a_i a_j y_i y_j <x_i, x_j>, 0 <= a_i <= C, sum a_i y_i = 0.

    `features` is a list of FeatureVector or an [n x d] array; `labels` are
    GraspClass values or +1/-1. Stops when the maximal KKT violation is
    below `tol`.
    """
    x = _feature_matrix(features)
    y = _label_vector(labels)
    if x.shape[0] != y.shape[0]:
        raise ValidationError(f"{x.shape[0]} feature vectors but {y.shape[0]} labels")
    if c_parameter <= 0:
        raise ValidationError(f"C must be positive, got {c_parameter}")
    if np.all(y > 0) or np.all(y < 0):
        raise InsufficientDataError("SVM training needs at least one sample of each class")

    n = y.shape[0]
    max_iter = max_iter or max(100_000, 200 * n)
    gram = x @ x.T
    diag = np.diag(gram)
    upper = np.where(y > 0, c_parameter, 0.0)
    lower = np.where(y > 0, 0.0, -c_parameter)
    ya = np.zeros(n)  # y_i * alpha_i
    g = np.ones(n)

    for iteration in range(max_iter):
        yg = y * g
        low = ya > lower
        i, _, gap = _violation(yg, ya < upper, low)
        if gap <= tol:
            break
        j = _second_order_partner(i, yg, low, gram, diag)
        pair_gap = yg[i] - yg[j]
        curvature = max(diag[i] + diag[j] - 2 * gram[i, j], _MIN_CURVATURE)
        step = min(upper[i] - ya[i], ya[j] - lower[j], pair_gap / curvature)
        g += step * y * (gram[j] - gram[i])
        ya[i] += step
        ya[j] -= step
    else:
        raise NumericalError(f"SVM solver did not converge in {max_iter} iterations (KKT gap {gap:.3e})")

    ya = np.clip(ya, lower, upper)
    alpha = y * ya
    weights = x.T @ ya

    # residual from a freshly computed gradient
    g = 1.0 - y * (gram @ ya)
    _, _, residual = _violation(y * g, ya < upper, ya > lower)
    residual = max(residual, 0.0)

    bias = _bias(x, y, alpha, weights, c_parameter)
    logger.trace(f"SVM converged in {iteration} iterations, KKT residual {residual:.2e}, bias {bias:.4f}")
    return SvmModel(weights, bias, float(c_parameter), alpha, residual, iteration)


def _bias(x, y, alpha, weights, c_parameter) -> float:
    bound_tol = 1e-9 * c_parameter
    residual = y - x @ weights
    free = (alpha > bound_tol) & (alpha < c_parameter - bound_tol)
    if free.any():
        return float(np.mean(residual[free]))
    at_upper = alpha >= c_parameter - bound_tol
    # b >= r on these, b <= r on the rest
    lower_set = ((y > 0) & ~at_upper) | ((y < 0) & at_upper)
    upper_set = ~lower_set
    lo = residual[lower_set].max() if lower_set.any() else None
    hi = residual[upper_set].min() if upper_set.any() else None
    if lo is None:
        return float(hi)
    if hi is None:
        return float(lo)
    return float((lo + hi) / 2)


def predict(model: SvmModel, feature_vector) -> GraspClass:
    """sign(w.x + b); a score of exactly 0 is Power."""
    values = feature_vector.values if isinstance(feature_vector, FeatureVector) else feature_vector
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.shape[0] != model.n_features:
        raise ValidationError(f"expected a {model.n_features}-dimensional feature vector, got shape {values.shape}")
    score = float(model.decision_function(values)[0])
    return GraspClass.POWER if score >= 0 else GraspClass.PRECISION


def predict_labels(model: SvmModel, features) -> np.ndarray:
    scores = model.decision_function(_feature_matrix(features))
    return np.where(scores >= 0, 1, -1)


class Scheme(str, Enum):
    HOLDOUT = "holdout"
    KFOLD = "kfold"


@dataclass(frozen=True)
class EvaluationConfig:
    scheme: Scheme = Scheme.HOLDOUT
    test_fraction: float = 0.2
    k: int = 5
    stratified: bool = True
    seed: int = 0
    c_parameter: float = DEFAULT_C

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")
        if self.c_parameter <= 0:
            raise ConfigError(f"C must be positive, got {self.c_parameter}")

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "test_fraction": self.test_fraction,
            "k": self.k,
            "stratified": self.stratified,
            "seed": self.seed,
            "c_parameter": self.c_parameter,
        }


@dataclass
class EvaluationResult:
    accuracy: float  # percent over all held-out trials
    n_test: int
    n_correct: int
    split_accuracies: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "n_test": self.n_test,
            "n_correct": self.n_correct,
            "split_accuracies": self.split_accuracies,
        }


def evaluation_splits(labels, config: EvaluationConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """(train, test) index arrays; every training part must hold both classes."""
    y = _label_vector(labels)
    random_state = substream_int(config.seed, "split")
    placeholder = np.zeros((y.shape[0], 1))

    if config.scheme is Scheme.HOLDOUT:
        splitter_cls = StratifiedShuffleSplit if config.stratified else ShuffleSplit
        splitter = splitter_cls(n_splits=1, test_size=config.test_fraction, random_state=random_state)
    else:
        splitter_cls = StratifiedKFold if config.stratified else KFold
        splitter = splitter_cls(n_splits=config.k, shuffle=True, random_state=random_state)

    try:
        splits = list(splitter.split(placeholder, y))
    except ValueError as e:
        raise InsufficientDataError(f"cannot split {y.shape[0]} trials with {config.scheme.value}: {e}") from e

    for number, (train, _) in enumerate(splits):
        if np.unique(y[train]).size < 2:
            raise InsufficientDataError(f"split {number} has a single class in its training part")
    return splits


def _score_split(model: SvmModel, features, y_test: np.ndarray) -> int:
    return int(np.sum(predict_labels(model, features) == y_test))


def _result(correct: list[int], sizes: list[int]) -> EvaluationResult:
    n_test = int(sum(sizes))
    n_correct = int(sum(correct))
    return EvaluationResult(
        accuracy=100.0 * n_correct / n_test,
        n_test=n_test,
        n_correct=n_correct,
        split_accuracies=[100.0 * c / s for c, s in zip(correct, sizes)],
    )


def evaluate(features, labels, config: EvaluationConfig) -> EvaluationResult:
    """Accuracy of the SVM on held-out parts of precomputed features."""
    x = _feature_matrix(features)
    y = _label_vector(labels)
    correct, sizes = [], []
    for train, test in evaluation_splits(y, config):
        model = train_svm(x[train], y[train], config.c_parameter)
        correct.append(_score_split(model, x[test], y[test]))
        sizes.append(len(test))
    return _result(correct, sizes)


def evaluate_epochs(epochs: list[Epoch], config: EvaluationConfig) -> EvaluationResult:
    """
    Leakage-safe evaluation: CSP and SVM see training epochs only.

    For each split the CSP model is fitted on the training epochs, both
    parts are projected with it, the SVM is trained on training features and
    scored on the test features.
    """
    if not epochs:
        raise InsufficientDataError("no epochs to evaluate")
    y = np.array([e.label for e in epochs], dtype=float)
    correct, sizes = [], []
    for train, test in evaluation_splits(y, config):
        train_epochs = [epochs[i] for i in train]
        test_epochs = [epochs[i] for i in test]
        csp_model = fit_csp(*epochs_by_class(train_epochs))
        train_features = [log_variance_features(csp_model, e) for e in train_epochs]
        test_features = [log_variance_features(csp_model, e) for e in test_epochs]
        svm = train_svm(train_features, y[train], config.c_parameter)
        correct.append(_score_split(svm, test_features, y[test]))
        sizes.append(len(test))
    result = _result(correct, sizes)
    first = epochs[0]
    logger.debug(
        f"{first.band.name if first.band else 'broadband'}/{first.phase.value}: "
        f"{result.n_correct}/{result.n_test} correct ({result.accuracy:.1f}%)"
    )
    return result


def table_columns(phases=None, bands=None) -> list[tuple[Phase, BandName]]:
    """(phase, band) columns in report order: observation block first, bands delta to gamma."""
    phases = list(phases) if phases is not None else list(Phase)
    wanted = set(bands) if bands is not None else {b.name for b in standard_bands()}
    return [(phase, band.name) for phase in Phase if phase in phases
            for band in standard_bands() if band.name in wanted]


def column_label(column: tuple[Phase, BandName]) -> str:
    phase, band = column
    return f"{phase.value} {band.value}"


def _format_cell(value) -> str:
    value = float(value)
    return str(int(value)) if value.is_integer() else f"{value:.1f}"


@dataclass
class AccuracyTable:
    columns: list[tuple[Phase, BandName]]
    rows: dict[str, dict[tuple[Phase, BandName], float]]
    means: dict[tuple[Phase, BandName], int]
    exact_means: dict[tuple[Phase, BandName], Fraction]
    best: dict[Phase, BandName]  # per-phase column with the highest mean

    @property
    def subjects(self) -> list[str]:
        return list(self.rows)

    def column_values(self, column) -> list[float]:
        return [self.rows[s][column] for s in self.rows]

    def to_csv(self, stats: bool = False) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["Subjects"] + [column_label(c) for c in self.columns])
        for subject, cells in self.rows.items():
            writer.writerow([subject] + [_format_cell(cells[c]) for c in self.columns])
        writer.writerow(["Mean"] + [str(self.means[c]) for c in self.columns])
        writer.writerow(["Best"] + ["*" if self.best.get(c[0]) is c[1] else "" for c in self.columns])
        if stats:
            writer.writerow([])
            statistics = accuracy_statistics(self)
            writer.writerow(["Statistic"] + [column_label(c) for c in self.columns])
            for name in STATISTIC_NAMES:
                writer.writerow([name] + [f"{statistics[c][name]:.2f}" for c in self.columns])
            writer.writerow([])
            contrast = phase_contrast(self)
            writer.writerow(["Phase contrast"] + [band.value for band in contrast])
            writer.writerow(["Observation - Movement"] + [f"{v:.2f}" for v in contrast.values()])
        return buffer.getvalue()

    def to_markdown(self, stats: bool = False) -> str:
        def bold_mean(column):
            text = str(self.means[column])
            return f"**{text}**" if self.best.get(column[0]) is column[1] else text

        phases = [p for p in Phase if any(c[0] is p for c in self.columns)]
        phase_header = ["Subjects"]
        for phase in phases:
            width = sum(1 for c in self.columns if c[0] is phase)
            phase_header += [f"{phase.value} Phase (%)"] + [""] * (width - 1)
        lines = [
            "| " + " | ".join(phase_header) + " |",
            "|" + "---|" + "---:|" * len(self.columns),
            "|  | " + " | ".join(c[1].value for c in self.columns) + " |",
        ]
        for subject, cells in self.rows.items():
            lines.append(f"| {subject} | " + " | ".join(_format_cell(cells[c]) for c in self.columns) + " |")
        lines.append("| Mean | " + " | ".join(bold_mean(c) for c in self.columns) + " |")

        if stats:
            statistics = accuracy_statistics(self)
            lines += ["", "| Statistic | " + " | ".join(column_label(c) for c in self.columns) + " |",
                      "|---|" + "---:|" * len(self.columns)]
            for name in STATISTIC_NAMES:
                lines.append(f"| {name} | " + " | ".join(f"{statistics[c][name]:.2f}" for c in self.columns) + " |")
            contrast = phase_contrast(self)
            lines += ["", "| Phase contrast | " + " | ".join(b.value for b in contrast) + " |",
                      "|---|" + "---:|" * len(contrast),
                      "| Observation - Movement | " + " | ".join(f"{v:.2f}" for v in contrast.values()) + " |"]
        return "\n".join(lines) + "\n"


def build_accuracy_table(per_subject_results: Mapping[str, Mapping[tuple[Phase, BandName], float]]) -> AccuracyTable:
    """
    Subject rows plus a Mean row (arithmetic mean, nearest integer, ties away from zero).

    Every subject must cover the same (phase, band) columns.
    """
    if not per_subject_results:
        raise ValidationError("accuracy table needs at least one subject")

    subjects = list(per_subject_results)
    reference = set(per_subject_results[subjects[0]])
    for subject in subjects[1:]:
        present = set(per_subject_results[subject])
        if present != reference:
            missing = sorted(column_label(c) for c in reference - present)
            extra = sorted(column_label(c) for c in present - reference)
            raise ValidationError(
                f"subject {subject} has inconsistent columns (missing: {missing}, extra: {extra})"
            )

    columns = [c for c in table_columns() if c in reference]
    rows = {}
    for subject in subjects:
        cells = {}
        for column in columns:
            value = float(per_subject_results[subject][column])
            if not 0.0 <= value <= 100.0:
                raise ValidationError(f"{subject} {column_label(column)} accuracy {value} outside [0, 100]")
            cells[column] = value
        rows[subject] = cells

    exact_means = {c: sum(Fraction(rows[s][c]) for s in subjects) / len(subjects) for c in columns}
    means = {c: round_half_away(m) for c, m in exact_means.items()}

    best = {}
    for phase in Phase:
        phase_columns = [c for c in columns if c[0] is phase]
        if phase_columns:
            # first column wins ties
            best[phase] = max(phase_columns, key=lambda c: (exact_means[c], -columns.index(c)))[1]

    return AccuracyTable(columns, rows, means, exact_means, best)


STATISTIC_NAMES = ("min", "q1", "median", "q3", "max", "mean")


def accuracy_statistics(table: AccuracyTable) -> dict:
    """Five-number summary plus mean per (phase, band) column."""
    result = {}
    for column in table.columns:
        values = np.array(table.column_values(column), dtype=float)
        q1, median, q3 = np.percentile(values, [25, 50, 75])
        result[column] = {
            "min": float(values.min()),
            "q1": float(q1),
            "median": float(median),
            "q3": float(q3),
            "max": float(values.max()),
            "mean": float(table.exact_means[column]),
        }
    return result


def phase_contrast(table: AccuracyTable) -> dict[BandName, float]:
    """Observation mean minus movement mean, for bands present in both phases."""
    contrast = {}
    for band in (b.name for b in standard_bands()):
        obs, mov = (Phase.OBSERVATION, band), (Phase.MOVEMENT, band)
        if obs in table.exact_means and mov in table.exact_means:
            contrast[band] = float(table.exact_means[obs] - table.exact_means[mov])
    return contrast
