"""Registration-quality diagnostics: Dice overlap, determinant statistics,
relative mismatch, and label transport."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .distance import dist_value
from .fields import Grid, ScalarField, VectorField
from .interp import fractional_index, sample_values
from .transport import compose_trajectory, solve_deformation_tensor, solve_state

__all__ = [
    "LabelVolume",
    "DiceResult",
    "dice",
    "transport_labels",
    "detgrad_stats",
    "MismatchResult",
    "relative_mismatch",
    "write_dice_csv",
]


@dataclass
class LabelVolume:
    """Integer label per voxel; 0 is background."""

    grid: Grid
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.shape != self.grid.n:
            raise ValueError(f"label shape {labels.shape} does not match grid {self.grid.n}")
        if labels.dtype != np.int32:
            labels = labels.astype(np.int32)
        if labels.min() < 0:
            raise ValueError("labels must be nonnegative")
        self.labels = labels

    def id_set(self) -> list[int]:
        ids = np.unique(self.labels)
        return [int(i) for i in ids if i != 0]


class DiceResult(NamedTuple):
    per_id: dict[int, float]
    union: float
    empty_ids: tuple[int, ...]


def dice(a: LabelVolume, b: LabelVolume, ids: Sequence[int] | None = None) -> DiceResult:
    """Per-id Dice 2|A^B|/(|A|+|B|) plus the merged-foreground union score.

    Ids empty in both volumes score 1 and are flagged so they cannot skew
    aggregate statistics.
    """
    if a.grid != b.grid:
        raise ValueError("label volumes live on different grids")
    if ids is None:
        ids = sorted(set(a.id_set()) | set(b.id_set()))
    per_id: dict[int, float] = {}
    empty: list[int] = []
    for i in ids:
        if i == 0:
            continue
        in_a = a.labels == i
        in_b = b.labels == i
        size = int(in_a.sum()) + int(in_b.sum())
        if size == 0:
            per_id[int(i)] = 1.0
            empty.append(int(i))
            continue
        inter = int(np.logical_and(in_a, in_b).sum())
        per_id[int(i)] = 2.0 * inter / size
    fg_a = a.labels > 0
    fg_b = b.labels > 0
    denom = int(fg_a.sum()) + int(fg_b.sum())
    if denom == 0:
        union = 1.0
    else:
        union = 2.0 * int(np.logical_and(fg_a, fg_b).sum()) / denom
    return DiceResult(per_id, union, tuple(empty))


def transport_labels(labels: LabelVolume, v: VectorField, method: str = "cubic") -> LabelVolume:
    """Deform a label volume: nearest-neighbor pull-back along the composed
    departure map (labels are categorical, so no blending).

    Only the geometry has to agree; labels carry no working precision, so
    the velocity's float width is irrelevant.
    """
    grid = labels.grid
    if v.grid.n != grid.n or v.grid.n_t != grid.n_t:
        raise ValueError("labels and velocity live on different grids")
    points = compose_trajectory(v, method=method)
    qs = fractional_index(grid, points.data)
    out = sample_values(labels.labels, qs, "nearest").reshape(grid.n)
    return LabelVolume(grid, out)


def detgrad_stats(v: VectorField, method: str = "cubic", scheme: str = "fd8"):
    """(min, mean, max) of the deformation-tensor determinant at t=1."""
    det = solve_deformation_tensor(v, method=method, scheme=scheme).determinant().values
    return float(det.min()), float(det.mean()), float(det.max())


class MismatchResult(NamedTuple):
    value: float
    degenerate: bool


def relative_mismatch(
    m0: ScalarField,
    m1: ScalarField,
    v: VectorField,
    distance: str = "ssd",
    method: str = "cubic",
) -> MismatchResult:
    """dist(m(1), m1) / dist(m0, m1); 0 with a flag when the images agree."""
    before = dist_value(m0, m1, distance)
    if before == 0.0:
        return MismatchResult(0.0, True)
    deformed = solve_state(m0, v, method=method).final()
    return MismatchResult(dist_value(deformed, m1, distance) / before, False)


_CSV_COLUMNS = ("label_id", "mean", "stdev", "min", "max", "median", "q25", "q75")


def write_dice_csv(path, scores: Mapping[int, Iterable[float]]) -> None:
    """Per-label score statistics as CSV (one row per label id)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_CSV_COLUMNS)
        for label_id in sorted(scores):
            vals = np.asarray(list(scores[label_id]), dtype=float)
            if vals.size == 0:
                continue
            w.writerow(
                [
                    label_id,
                    f"{vals.mean():.6e}",
                    f"{vals.std(ddof=0):.6e}",
                    f"{vals.min():.6e}",
                    f"{vals.max():.6e}",
                    f"{np.median(vals):.6e}",
                    f"{np.percentile(vals, 25):.6e}",
                    f"{np.percentile(vals, 75):.6e}",
                ]
            )
