"""Editing evaluation metric over contour voxel sets.

Distances live on contours only: the edit term weights the CAS-to-prediction
distance by the vicinity map A, the preservation term weights the symmetric
initial-vs-prediction contour distance by (1 - A) / 2.  Points pool across
frames; near / far regions split at A >= 0.5; statistics are nearest-rank
p95 and mean, converted to millimeters at reporting time only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .geometry import extract_plane_contour
from .grids import BinaryMask, ScalarField, VoxelSet, manhattan_distance_transform, percentile
from .interaction import EditRecord
from .phantom import CaseBundle


class MetricError(ValueError):
    """Metric preconditions violated (empty contours etc.)."""


CSV_HEADER = ("engine", "region", "p95_mm", "mean_mm", "n_points")


@dataclass(frozen=True)
class MetricReport:
    """Distance statistics in millimeters; near/far fields are None when no
    edit exists (the no-editing baseline) or a region holds no points."""

    overall_p95_mm: float
    overall_mean_mm: float
    near_p95_mm: float | None
    near_mean_mm: float | None
    far_p95_mm: float | None
    far_mean_mm: float | None
    n_points_near: int | None
    n_points_far: int | None
    n_points: int

    def to_json(self) -> dict:
        return {
            "overall_p95_mm": self.overall_p95_mm,
            "overall_mean_mm": self.overall_mean_mm,
            "near_p95_mm": self.near_p95_mm,
            "near_mean_mm": self.near_mean_mm,
            "far_p95_mm": self.far_p95_mm,
            "far_mean_mm": self.far_mean_mm,
            "n_points_near": self.n_points_near,
            "n_points_far": self.n_points_far,
            "n_points": self.n_points,
        }

    @staticmethod
    def from_json(obj: dict) -> "MetricReport":
        return MetricReport(**obj)

    def csv_rows(self, engine: str) -> list[tuple]:
        rows = [(engine, "overall", self.overall_p95_mm, self.overall_mean_mm, self.n_points)]
        if self.n_points_near is not None:
            rows.append((engine, "near", self.near_p95_mm, self.near_mean_mm, self.n_points_near))
            rows.append((engine, "far", self.far_p95_mm, self.far_mean_mm, self.n_points_far))
        return rows

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


# ---------------------------------------------------------------------------
# Distance terms
# ---------------------------------------------------------------------------

def _edit_values(y_cas: VoxelSet, dt_pred: np.ndarray, a: np.ndarray, weighted: bool):
    pts = y_cas.points
    d = dt_pred[tuple(pts.T)]
    w = a[tuple(pts.T)]
    vals = w * d if weighted else d
    return pts, vals, w


def d_edit(y_cas: VoxelSet, y_hat_contour: VoxelSet, a: ScalarField, weighted: bool = True):
    """Per CAS point: A-weighted minimum Manhattan distance to the predicted
    contour set; returns [(point, value), ...] in voxel units."""
    if len(y_hat_contour) == 0:
        raise MetricError("no predicted surface")
    if len(y_cas) == 0:
        raise MetricError("empty CAS contour")
    dt = manhattan_distance_transform(y_hat_contour).data
    pts, vals, _ = _edit_values(y_cas, dt, a.data, weighted)
    return [(tuple(int(c) for c in p), float(v)) for p, v in zip(pts, vals)]


def _preserve_values(
    y_init_contour: VoxelSet, y_hat_contour: VoxelSet, a: np.ndarray, weighted: bool
):
    dt_pred = manhattan_distance_transform(y_hat_contour).data
    dt_init = manhattan_distance_transform(y_init_contour).data
    out_pts, out_vals, out_w = [], [], []
    for pts, dt in ((y_init_contour.points, dt_pred), (y_hat_contour.points, dt_init)):
        d = dt[tuple(pts.T)]
        w = a[tuple(pts.T)]
        vals = (1.0 - w) / 2.0 * d if weighted else d
        out_pts.append(pts)
        out_vals.append(vals)
        out_w.append(w)
    return (
        np.concatenate(out_pts),
        np.concatenate(out_vals),
        np.concatenate(out_w),
    )


def d_preserve(
    y_init_contour: VoxelSet, y_hat_contour: VoxelSet, a: ScalarField, weighted: bool = True
):
    """Symmetric contour distance between the initial segmentation and the
    prediction, weighted by (1 - A) / 2; both directions returned."""
    if len(y_init_contour) == 0 or len(y_hat_contour) == 0:
        raise MetricError("empty contour in preservation term")
    pts, vals, _ = _preserve_values(y_init_contour, y_hat_contour, a.data, weighted)
    return [(tuple(int(c) for c in p), float(v)) for p, v in zip(pts, vals)]


# ---------------------------------------------------------------------------
# Case-level evaluation
# ---------------------------------------------------------------------------

def _pooled_contours(mask: BinaryMask, frames) -> VoxelSet:
    parts = [extract_plane_contour(mask, pose).points for pose in frames.poses]
    parts = [p for p in parts if p.size] or [np.zeros((0, 3), dtype=np.int64)]
    return VoxelSet(mask.meta, np.concatenate(parts))


def _pooled_cas_points(case: CaseBundle) -> np.ndarray:
    # frames pooled in frame_id order; each contour is already in canonical
    # lexicographic order, so enumeration order cannot matter
    order = np.argsort([p.frame_id for p in case.frames.poses])
    parts = [case.cas_contours[i].points for i in order if len(case.cas_contours[i])]
    if not parts:
        raise MetricError("case has no CAS contour points")
    return np.concatenate(parts)


def _stats_mm(values: np.ndarray, spacing: float) -> tuple[float, float]:
    # summing in sorted order keeps the mean exactly invariant to how the
    # contours were enumerated
    ordered = np.sort(np.asarray(values, dtype=np.float64))
    return (
        percentile(ordered, 95.0) * spacing,
        float(ordered.mean()) * spacing,
    )


def pooled_values(
    case: CaseBundle,
    y_hat: BinaryMask,
    edit: EditRecord,
    weighted: bool = True,
    y_init: BinaryMask | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(values, vicinity weights) of every pooled metric point, voxel units:
    the CAS-to-prediction term followed by both preservation directions."""
    init_mask = case.y_init if y_init is None else y_init
    pred_set = _pooled_contours(y_hat, case.frames)
    init_set = _pooled_contours(init_mask, case.frames)
    if len(pred_set) == 0:
        raise MetricError("no predicted surface")
    if len(init_set) == 0:
        raise MetricError("initial segmentation has no contour")
    a = edit.A.data

    cas_pts = _pooled_cas_points(case)
    dt_pred = manhattan_distance_transform(pred_set).data
    cas_d = dt_pred[tuple(cas_pts.T)]
    cas_w = a[tuple(cas_pts.T)]
    edit_vals = cas_w * cas_d if weighted else cas_d

    _, pres_vals, pres_w = _preserve_values(init_set, pred_set, a, weighted)
    return (
        np.concatenate([edit_vals, pres_vals]),
        np.concatenate([cas_w, pres_w]),
    )


def evaluate(
    case: CaseBundle,
    y_hat: BinaryMask,
    edit: EditRecord,
    weighted: bool = True,
    y_init: BinaryMask | None = None,
) -> MetricReport:
    """Pool edit and preservation distances over all frames and report
    overall / near / far statistics in millimeters.

    `y_init` overrides the case's initial segmentation during sequential
    editing, where the previous prediction plays that role.  `weighted=False`
    reports raw (unweighted) distances within the same near/far split.
    """
    values, weights = pooled_values(case, y_hat, edit, weighted, y_init)
    near = weights >= 0.5
    spacing = case.meta.spacing_mm

    overall_p95, overall_mean = _stats_mm(values, spacing)
    near_p95 = near_mean = far_p95 = far_mean = None
    if near.any():
        near_p95, near_mean = _stats_mm(values[near], spacing)
    if (~near).any():
        far_p95, far_mean = _stats_mm(values[~near], spacing)
    return MetricReport(
        overall_p95_mm=overall_p95,
        overall_mean_mm=overall_mean,
        near_p95_mm=near_p95,
        near_mean_mm=near_mean,
        far_p95_mm=far_p95,
        far_mean_mm=far_mean,
        n_points_near=int(near.sum()),
        n_points_far=int((~near).sum()),
        n_points=int(values.size),
    )


def no_edit_baseline(case: CaseBundle) -> MetricReport:
    """Unweighted distance from every CAS point to the initial segmentation's
    contour; the error upper bound when no edit is applied."""
    init_set = _pooled_contours(case.y_init, case.frames)
    if len(init_set) == 0:
        raise MetricError("initial segmentation has no contour")
    cas_pts = _pooled_cas_points(case)
    dt_init = manhattan_distance_transform(init_set).data
    values = dt_init[tuple(cas_pts.T)]
    spacing = case.meta.spacing_mm
    p95, mean = _stats_mm(values, spacing)
    return MetricReport(
        overall_p95_mm=p95,
        overall_mean_mm=mean,
        near_p95_mm=None,
        near_mean_mm=None,
        far_p95_mm=None,
        far_mean_mm=None,
        n_points_near=None,
        n_points_far=None,
        n_points=int(values.size),
    )


def cas_to_prediction_values(case: CaseBundle, y_hat: BinaryMask) -> np.ndarray:
    """Raw Manhattan distances (voxel units) from every CAS point to the
    predicted contours; the sequential-editing progress quantity."""
    pred_set = _pooled_contours(y_hat, case.frames)
    if len(pred_set) == 0:
        raise MetricError("no predicted surface")
    cas_pts = _pooled_cas_points(case)
    dt = manhattan_distance_transform(pred_set).data
    return dt[tuple(cas_pts.T)]
