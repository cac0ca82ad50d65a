"""
Scalp-map grids for CSP patterns over the 8-electrode montage.

Maps are data, not images: an N x N grid over the unit head disc, values
interpolated from the electrodes by inverse-distance weighting (power 2)
and scaled to [-0.5, +0.5]. Cells outside the disc are absent (NaN in
memory, empty in CSV, null in JSON).
"""

import csv
import io
from dataclasses import dataclass

import numpy as np
from loguru import logger

from graspdec.core.errors import ValidationError
from graspdec.core.model import Montage

MIN_RESOLUTION = 8
DEFAULT_RESOLUTION = 64
SCALE_LIMIT = 0.5
IDW_POWER = 2
_TIE_TOLERANCE = 1e-9


def scale_pattern(pattern) -> np.ndarray:
    """pattern * (0.5 / max|pattern|); signs are preserved."""
    pattern = np.asarray(pattern, dtype=float)
    if pattern.ndim != 1 or pattern.size == 0:
        raise ValidationError(f"pattern must be a non-empty vector, got shape {pattern.shape}")
    if not np.isfinite(pattern).all():
        raise ValidationError("pattern contains non-finite values")
    peak = np.max(np.abs(pattern))
    if peak == 0:
        raise ValidationError("cannot scale an all-zero pattern")
    return pattern * (SCALE_LIMIT / peak)


@dataclass(frozen=True)
class ElectrodeValue:
    label: str
    x: float
    y: float
    value: float

    def to_dict(self) -> dict:
        return {"label": self.label, "x": self.x, "y": self.y, "value": self.value}


@dataclass(frozen=True, eq=False)
class ScalpGrid:
    resolution: int
    values: np.ndarray  # [N x N]; row 0 at the nose side, column 0 at the left ear; NaN outside the disc
    electrode_overlay: tuple[ElectrodeValue, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "electrode_overlay", tuple(self.electrode_overlay))

    @property
    def in_disc(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def rows(self) -> list[list[float | None]]:
        """Values with absent cells as None, ready for JSON."""
        return [[None if np.isnan(v) else float(v) for v in row] for row in self.values]


def cell_centres(resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """(x, y) of every cell centre as [N x N] arrays; x grows to the right, y toward the nose."""
    steps = -1.0 + (2.0 * np.arange(resolution) + 1.0) / resolution
    x, y = np.meshgrid(steps, -steps)
    return x, y


def nearest_cells(resolution: int, point) -> list[tuple[int, int]]:
    """Every (row, column) whose centre is nearest to `point`, ties within 1e-9 included."""
    x, y = cell_centres(resolution)
    distance = np.hypot(x - point[0], y - point[1])
    rows, cols = np.nonzero(distance <= distance.min() + _TIE_TOLERANCE)
    return list(zip(rows.tolist(), cols.tolist()))


def interpolate_scalp(scaled, montage: Montage, resolution: int = DEFAULT_RESOLUTION) -> ScalpGrid:
    """
    Inverse-distance-weighted map of per-electrode values over the unit disc.

    The cells nearest each electrode take that electrode's value exactly.
    Electrodes are visited in (x, y) order so the grid does not depend on
    the order of the montage labels.
    """
    values = np.asarray(scaled, dtype=float)
    if resolution < MIN_RESOLUTION:
        raise ValidationError(f"resolution must be at least {MIN_RESOLUTION}, got {resolution}")
    if values.shape != (montage.n_channels,):
        raise ValidationError(f"expected {montage.n_channels} electrode values, got shape {values.shape}")
    if not np.isfinite(values).all():
        raise ValidationError("electrode values must be finite")

    positions = np.asarray(montage.positions, dtype=float)
    order = np.lexsort((positions[:, 1], positions[:, 0]))
    positions, ordered_values = positions[order], values[order]

    x, y = cell_centres(resolution)
    disc = x**2 + y**2 <= 1.0
    dx = x[..., None] - positions[:, 0]
    dy = y[..., None] - positions[:, 1]
    squared = np.maximum(dx**2 + dy**2, np.finfo(float).tiny)
    weights = squared ** (-IDW_POWER / 2)
    grid = (weights * ordered_values).sum(axis=-1) / weights.sum(axis=-1)

    for point, value in zip(positions, ordered_values):
        for row, col in nearest_cells(resolution, point):
            grid[row, col] = value

    grid = np.clip(grid, -SCALE_LIMIT, SCALE_LIMIT)
    grid[~disc] = np.nan
    overlay = tuple(
        ElectrodeValue(label, float(pos[0]), float(pos[1]), float(value))
        for label, pos, value in zip(montage.labels, montage.positions, values)
    )
    return ScalpGrid(resolution, grid, overlay)


@dataclass(frozen=True, eq=False)
class ComponentMap:
    rank: int  # 1-based eigenvalue rank, 1 = largest
    eigenvalue: float
    selected: bool
    label: str | None  # "CSP #1".."CSP #4" for selected components
    kind: str  # "pattern" (column of A) or "filter" (row of W)
    grid: ScalpGrid

    def metadata(self) -> dict:
        return {
            "rank": self.rank,
            "eigenvalue": self.eigenvalue,
            "selected": self.selected,
            "label": self.label,
            "kind": self.kind,
            "resolution": self.grid.resolution,
        }


def export_csp_maps(model, montage: Montage, resolution: int = DEFAULT_RESOLUTION,
                    use_filters: bool = False) -> list[ComponentMap]:
    """
    One map per CSP component in eigenvalue-rank order.

    Patterns (columns of A = W^-1) are mapped by default; `use_filters` maps
    the rows of W instead. The selected components are labelled CSP #1 to
    CSP #4 in selection order: two highest, then two lowest eigenvalues.
    """
    if montage.n_channels != model.n_channels:
        raise ValidationError(f"montage has {montage.n_channels} electrodes but the model {model.n_channels} channels")
    kind = "filter" if use_filters else "pattern"
    vectors = model.projection if use_filters else model.patterns.T
    labels = {index: f"CSP #{number}" for number, index in enumerate(model.selected_indices, start=1)}

    maps = []
    for index in range(model.n_components):
        grid = interpolate_scalp(scale_pattern(vectors[index]), montage, resolution)
        maps.append(
            ComponentMap(
                rank=index + 1,
                eigenvalue=float(model.eigenvalues[index]),
                selected=index in labels,
                label=labels.get(index),
                kind=kind,
                grid=grid,
            )
        )
    logger.debug(f"Exported {len(maps)} {kind} maps at {resolution}x{resolution}")
    return maps


def _cell(value: float) -> str:
    return "" if np.isnan(value) else f"{value:.12g}"


def grid_to_csv(component: ComponentMap, band: str | None = None, phase: str | None = None) -> str:
    """First row carries resolution and component metadata; then N rows of N cells."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([
        "resolution", component.grid.resolution,
        "rank", component.rank,
        "eigenvalue", f"{component.eigenvalue:.12g}",
        "selected", "true" if component.selected else "false",
        "label", component.label or "",
        "kind", component.kind,
        "band", band or "",
        "phase", phase or "",
    ])
    for row in component.grid.values:
        writer.writerow([_cell(v) for v in row])
    return buffer.getvalue()


def maps_document(maps: list[ComponentMap], band: str | None = None, phase: str | None = None,
                  include_values: bool = True) -> dict:
    """JSON form of an export; without values it is the metadata sidecar of a CSV export."""
    components = []
    for component in maps:
        entry = component.metadata()
        entry["electrodes"] = [e.to_dict() for e in component.grid.electrode_overlay]
        if include_values:
            entry["values"] = component.grid.rows()
        components.append(entry)
    return {
        "band": band,
        "phase": phase,
        "resolution": maps[0].grid.resolution if maps else None,
        "selected": [c.rank for c in maps if c.selected],
        "components": components,
    }


def grid_file_name(component: ComponentMap) -> str:
    return f"{component.kind}_{component.rank}.csv"
