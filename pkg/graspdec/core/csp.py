"""
Two-class Common Spatial Patterns.

One model is fitted per (band, phase) on Power-vs-Precision epochs. The
mean trace-normalized class covariances C1 (Power) and C2 (Precision) are
simultaneously diagonalized: the composite C1 + C2 is whitened, whitened C1
is eigendecomposed, and the rows of W are the spatial filters sorted by
the Power variance fraction (eigenvalue) in descending order.
"""

from dataclasses import dataclass

import numpy as np
from loguru import logger
from scipy import linalg

from graspdec.core.epoching import Epoch
from graspdec.core.errors import DegenerateTrialError, InsufficientDataError, NumericalError, ValidationError
from graspdec.core.model import BandDefinition, GraspClass, Phase

CONDITION_LIMIT = 1e10
RIDGE_SCALE = 1e-8
N_SELECTED_PER_END = 2


@dataclass(frozen=True, eq=False)
class CspModel:
    projection: np.ndarray  # W [n_components x n_channels], rows are filters
    eigenvalues: np.ndarray  # descending, each in [0, 1]
    selected_indices: tuple[int, ...]
    patterns: np.ndarray  # A = W^-1 [n_channels x n_components], columns are patterns
    class_covariances: tuple[np.ndarray, np.ndarray]  # (C1, C2) actually diagonalized
    band: BandDefinition | None = None
    phase: Phase | None = None
    regularized: bool = False

    def __post_init__(self):
        for name in ("projection", "eigenvalues", "patterns"):
            value = np.array(getattr(self, name), dtype=float)
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        covs = tuple(np.array(c, dtype=float) for c in self.class_covariances)
        object.__setattr__(self, "class_covariances", covs)
        object.__setattr__(self, "selected_indices", tuple(int(i) for i in self.selected_indices))

    @property
    def n_channels(self) -> int:
        return self.projection.shape[1]

    @property
    def n_components(self) -> int:
        return self.projection.shape[0]

    def to_dict(self) -> dict:
        return {
            "band": self.band.to_dict() if self.band else None,
            "phase": self.phase.value if self.phase else None,
            "projection": self.projection.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "selected_indices": list(self.selected_indices),
            "patterns": self.patterns.tolist(),
            "class_covariances": [c.tolist() for c in self.class_covariances],
            "regularized": self.regularized,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CspModel":
        try:
            projection = np.array(data["projection"], dtype=float)
            model = cls(
                projection=projection,
                eigenvalues=np.array(data["eigenvalues"], dtype=float),
                selected_indices=tuple(data["selected_indices"]),
                patterns=np.array(data["patterns"], dtype=float),
                class_covariances=tuple(np.array(c, dtype=float) for c in data["class_covariances"]),
                band=BandDefinition.from_dict(data["band"]) if data.get("band") else None,
                phase=Phase.parse(data["phase"]) if data.get("phase") else None,
                regularized=bool(data.get("regularized", False)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"Invalid CSP model document: {e}") from e
        n = model.n_channels
        if projection.ndim != 2 or projection.shape != (n, n) or model.patterns.shape != (n, n):
            raise ValidationError(f"CSP model matrices must be square and matching, got W {projection.shape}")
        if model.eigenvalues.shape != (n,):
            raise ValidationError(f"expected {n} eigenvalues, got {model.eigenvalues.shape}")
        return model


@dataclass(frozen=True, eq=False)
class FeatureVector:
    trial_id: int
    band: BandDefinition | None
    phase: Phase | None
    grasp_class: GraspClass | None
    values: np.ndarray  # log normalized variances, one per selected component

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def _as_matrix(epoch_or_data) -> np.ndarray:
    data = epoch_or_data.data if isinstance(epoch_or_data, Epoch) else epoch_or_data
    return np.asarray(data, dtype=float)


def trial_covariance(epoch) -> np.ndarray:
    """C = X X^T / trace(X X^T); accepts an Epoch or a [channels x samples] array."""
    x = _as_matrix(epoch)
    cov = x @ x.T
    trace = np.trace(cov)
    if not trace > 0:
        trial = f" (trial {epoch.trial_id})" if isinstance(epoch, Epoch) else ""
        raise DegenerateTrialError(f"zero-energy trial{trial}: covariance trace is {trace}")
    cov = cov / trace
    return (cov + cov.T) / 2


def selected_components(n: int) -> tuple[int, ...]:
    """First two and last two components; every component when fewer than four exist."""
    if n < 2 * N_SELECTED_PER_END:
        return tuple(range(n))
    return tuple(range(N_SELECTED_PER_END)) + tuple(range(n - N_SELECTED_PER_END, n))


def _sign_normalize(w: np.ndarray) -> np.ndarray:
    """Flip each row so its largest-magnitude entry is positive."""
    signs = np.sign(w[np.arange(w.shape[0]), np.argmax(np.abs(w), axis=1)])
    signs[signs == 0] = 1.0
    return signs


def fit_csp_from_covariances(c1: np.ndarray, c2: np.ndarray, band: BandDefinition | None = None,
                             phase: Phase | None = None) -> CspModel:
    """
    Simultaneous diagonalization of two SPD matrices.

    W (C1 + C2) W^T = I and W C1 W^T = diag(eigenvalues). When the composite
    condition number exceeds 1e10 a ridge of 1e-8 * trace / n is split
    evenly between the two classes.
    """
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    if c1.ndim != 2 or c1.shape[0] != c1.shape[1] or c1.shape != c2.shape:
        raise ValidationError(f"class covariances must be equal square matrices, got {c1.shape} and {c2.shape}")
    n = c1.shape[0]
    c1 = (c1 + c1.T) / 2
    c2 = (c2 + c2.T) / 2
    composite = c1 + c2

    regularized = False
    if np.linalg.cond(composite) > CONDITION_LIMIT:
        ridge = RIDGE_SCALE * np.trace(composite) / n
        logger.warning(f"Composite covariance ill-conditioned; adding ridge {ridge:.3e}")
        c1 = c1 + np.eye(n) * ridge / 2
        c2 = c2 + np.eye(n) * ridge / 2
        composite = c1 + c2
        regularized = True

    d, u = linalg.eigh(composite)
    if np.any(d <= 0):
        raise NumericalError("composite covariance is not positive definite after regularization")
    whitening = (u / np.sqrt(d)).T  # P = D^-1/2 U^T

    s1 = whitening @ c1 @ whitening.T
    s1 = (s1 + s1.T) / 2
    lam, v = linalg.eigh(s1)
    order = np.argsort(lam)[::-1]
    lam, v = lam[order], v[:, order]

    w = v.T @ whitening
    # A = W^-1 = U D^1/2 V
    a = (u * np.sqrt(d)) @ v

    signs = _sign_normalize(w)
    w = w * signs[:, None]
    a = a * signs[None, :]

    model = CspModel(
        projection=w,
        eigenvalues=np.clip(lam, 0.0, 1.0),
        selected_indices=selected_components(n),
        patterns=a,
        class_covariances=(c1, c2),
        band=band,
        phase=phase,
        regularized=regularized,
    )
    logger.debug(
        f"CSP fit{f' {band.name}' if band else ''}{f'/{phase.value}' if phase else ''}: "
        f"eigenvalues {np.round(model.eigenvalues, 3).tolist()}"
    )
    return model


def mean_covariance(epochs: list[Epoch]) -> np.ndarray:
    return np.mean([trial_covariance(e) for e in epochs], axis=0)


def fit_csp(class1_epochs: list[Epoch], class2_epochs: list[Epoch]) -> CspModel:
    """Fit on Power (class 1) versus Precision (class 2) epochs of one band and phase."""
    if len(class1_epochs) < 2 or len(class2_epochs) < 2:
        raise InsufficientDataError(
            f"CSP needs at least 2 epochs per class, got {len(class1_epochs)} and {len(class2_epochs)}"
        )
    everything = list(class1_epochs) + list(class2_epochs)
    first = everything[0]
    for epoch in everything[1:]:
        if epoch.data.shape != first.data.shape:
            raise ValidationError(f"epoch shapes differ: {epoch.data.shape} vs {first.data.shape}")
        if epoch.band != first.band or epoch.phase != first.phase:
            raise ValidationError("all epochs must share band and phase")

    return fit_csp_from_covariances(
        mean_covariance(class1_epochs), mean_covariance(class2_epochs), band=first.band, phase=first.phase
    )


def _check_compatible(model: CspModel, epoch) -> np.ndarray:
    x = _as_matrix(epoch)
    if x.ndim != 2 or x.shape[0] != model.n_channels:
        raise ValidationError(f"epoch with shape {x.shape} does not fit a {model.n_channels}-channel model")
    if isinstance(epoch, Epoch):
        if model.band is not None and epoch.band is not None and epoch.band != model.band:
            raise ValidationError(f"epoch band {epoch.band.name} differs from model band {model.band.name}")
        if model.phase is not None and epoch.phase is not model.phase:
            raise ValidationError(f"epoch phase {epoch.phase} differs from model phase {model.phase}")
    return x


def project(model: CspModel, epoch) -> np.ndarray:
    """Z = W X."""
    return model.projection @ _check_compatible(model, epoch)


def log_variance_features(model: CspModel, epoch) -> FeatureVector:
    """
    f_j = log(var(z_j) / sum of selected variances), for j in selected order.

    Individual variances are floored at machine epsilon times the selected
    total so a silent component yields a finite feature.
    """
    z = project(model, epoch)[list(model.selected_indices)]
    variances = np.var(z, axis=1)
    total = variances.sum()
    if not total > 0:
        trial = f" (trial {epoch.trial_id})" if isinstance(epoch, Epoch) else ""
        raise DegenerateTrialError(f"all selected CSP components have zero variance{trial}")
    variances = np.maximum(variances, np.finfo(float).eps * total)
    values = np.log(variances / variances.sum())

    if isinstance(epoch, Epoch):
        return FeatureVector(epoch.trial_id, epoch.band, epoch.phase, epoch.grasp_class, values)
    return FeatureVector(-1, model.band, model.phase, None, values)


@dataclass(frozen=True, eq=False)
class SpatialPatterns:
    patterns: np.ndarray  # A, columns are patterns
    scaled: list[np.ndarray]  # per component, max |value| == 0.5


def spatial_patterns(model: CspModel) -> SpatialPatterns:
    from graspdec.core.topomap import scale_pattern

    a = model.patterns
    if not np.allclose(a @ model.projection, np.eye(model.n_channels), atol=1e-6):
        raise NumericalError("stored patterns are not the inverse of the projection matrix")
    return SpatialPatterns(patterns=a, scaled=[scale_pattern(a[:, j]) for j in range(a.shape[1])])
