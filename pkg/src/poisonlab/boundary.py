"""Rasterised 2-D decision regions and how far poisoning moves them."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import UnsupportedOperation, ValidationError
from .learners import TrainedModel
from .mixture import Dataset
from .subgroups import Subgroup

BBox = tuple[float, float, float, float]


@dataclass(frozen=True, eq=False)
class RasterGrid:
    """``labels[i, j]`` is the prediction at the centre of column ``i`` (x), row ``j`` (y)."""

    bbox: BBox
    resolution: tuple[int, int]
    labels: np.ndarray

    def __post_init__(self):
        x0, x1, y0, y1 = self.bbox
        if not (x0 < x1 and y0 < y1):
            raise ValidationError(f"bbox {self.bbox} is not well ordered")
        if self.labels.shape != tuple(self.resolution):
            raise ValidationError("label matrix does not match resolution")
        self.labels.setflags(write=False)

    def centres(self) -> tuple[np.ndarray, np.ndarray]:
        return cell_centres(self.bbox, self.resolution)


def cell_centres(bbox: BBox, resolution: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    x0, x1, y0, y1 = bbox
    nx, ny = resolution
    xs = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
    ys = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
    return xs, ys


def data_bbox(points: np.ndarray, pad_fraction: float = 0.1) -> BBox:
    """Extent of ``points`` padded by ``pad_fraction`` of the range per axis."""
    lo, hi = points.min(axis=0), points.max(axis=0)
    pad = pad_fraction * (hi - lo)
    return (float(lo[0] - pad[0]), float(hi[0] + pad[0]), float(lo[1] - pad[1]), float(hi[1] + pad[1]))


def rasterize(model: TrainedModel, bbox: BBox, resolution: tuple[int, int] = (400, 400),
              subpop_id: int | None = None) -> RasterGrid:
    if model.feature_dim != 2:
        raise UnsupportedOperation(f"rasterize needs 2-D inputs, model has {model.feature_dim}")
    nx, ny = (int(r) for r in resolution)
    if nx < 1 or ny < 1:
        raise ValidationError("resolution must be positive")
    xs, ys = cell_centres(bbox, (nx, ny))
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    ids = None if subpop_id is None else np.full(len(pts), subpop_id)
    labels = model.predict(pts, ids).reshape(nx, ny).astype(np.uint8)
    return RasterGrid(tuple(float(v) for v in bbox), (nx, ny), labels)


def target_region(dataset: Dataset, subgroup: Subgroup, pad: float | None = None) -> BBox:
    """Bounding box of the subgroup's training points, padded by ``pad``.

    ``pad`` defaults to the mean per-axis standard deviation of those points.
    """
    pts = dataset.features[subgroup.member_indices]
    if pts.shape[1] != 2:
        raise UnsupportedOperation("target regions are defined for 2-D data only")
    if pad is None:
        pad = float(pts.std(axis=0).mean()) if len(pts) > 1 else 0.0
    lo, hi = pts.min(axis=0) - pad, pts.max(axis=0) + pad
    return (float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))


def region_mask(grid: RasterGrid, region) -> np.ndarray:
    """Cells inside ``region``: a bbox tuple, or an (m, 2) point set (cells containing a point)."""
    xs, ys = grid.centres()
    if isinstance(region, tuple) and len(region) == 4:
        rx0, rx1, ry0, ry1 = region
        return ((xs >= rx0) & (xs <= rx1))[:, None] & ((ys >= ry0) & (ys <= ry1))[None, :]
    pts = np.asarray(region, dtype=np.float64).reshape(-1, 2)
    x0, x1, y0, y1 = grid.bbox
    nx, ny = grid.resolution
    i = np.floor((pts[:, 0] - x0) / (x1 - x0) * nx).astype(np.int64)
    j = np.floor((pts[:, 1] - y0) / (y1 - y0) * ny).astype(np.int64)
    keep = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
    mask = np.zeros((nx, ny), dtype=bool)
    mask[i[keep], j[keep]] = True
    return mask


@dataclass(frozen=True)
class ShiftReport:
    total: float
    inside: float
    outside: float
    inside_cells: int
    outside_cells: int


def boundary_shift(clean_grid: RasterGrid, poisoned_grid: RasterGrid, target) -> ShiftReport:
    """Fractions of cells whose label changed: overall, inside and outside ``target``.

    An empty side reports a fraction of 0.
    """
    if clean_grid.bbox != poisoned_grid.bbox or clean_grid.resolution != poisoned_grid.resolution:
        raise ValidationError("grids differ in bbox or resolution")
    diff = clean_grid.labels != poisoned_grid.labels
    inside = region_mask(clean_grid, target)
    n_in, n_out = int(inside.sum()), int((~inside).sum())
    return ShiftReport(
        float(diff.mean()),
        float(diff[inside].mean()) if n_in else 0.0,
        float(diff[~inside].mean()) if n_out else 0.0,
        n_in, n_out)


def write_grid_csv(grid: RasterGrid, path: str | Path) -> None:
    """CSV matrix: line ``j`` holds the cells of y-index ``j``, one column per x-index."""
    x0, x1, y0, y1 = grid.bbox
    with open(path, "w", newline="") as fh:
        fh.write(f"# bbox={x0!r},{x1!r},{y0!r},{y1!r} resolution={grid.resolution[0]}x{grid.resolution[1]}\n")
        w = csv.writer(fh, lineterminator="\n")
        for j in range(grid.resolution[1]):
            w.writerow(grid.labels[:, j].tolist())


def read_grid_csv(path: str | Path) -> RasterGrid:
    bbox = res = None
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("# bbox="):
                b, r = line[2:].split()
                bbox = tuple(float(v) for v in b.split("=")[1].split(","))
                res = tuple(int(v) for v in r.split("=")[1].split("x"))
            elif not line.startswith("#") and line.strip():
                rows.append([int(v) for v in line.strip().split(",")])
    if bbox is None:
        raise ValidationError(f"{path}: missing bbox header")
    return RasterGrid(bbox, res, np.asarray(rows, dtype=np.uint8).T.copy())


def write_shift_csv(rows: Sequence[tuple[int, str, ShiftReport]], path: str | Path) -> None:
    """One row per (target subgroup, model)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subgroup_id", "model_tag", "total", "inside", "outside",
                    "inside_cells", "outside_cells"])
        for gid, tag, r in rows:
            w.writerow([gid, tag, repr(r.total), repr(r.inside), repr(r.outside),
                        r.inside_cells, r.outside_cells])
