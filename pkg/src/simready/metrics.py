"""Geometry and scale metrics.

Chamfer distance and F-score run on point sets; PSNR compares binary
orthographic silhouettes (six axis-aligned views, 256x256 each).
Chamfer is not a metric: no triangle inequality is assumed anywhere.
"""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .mesh_io import TriMesh
from .spatial import nearest, nearest_bruteforce
from .voxel import VoxelGrid

PSNR_CAP = 99.0
VIEW_SIZE = 256
CD_SAMPLES = 10_000
FSCORE_TAU_FRACTION = 0.05


class MetricError(ValueError):
    pass


def _points(a) -> np.ndarray:
    p = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    if len(p) == 0:
        raise MetricError("point set is empty")
    return p


def _nn_dist(q, p, brute: bool) -> np.ndarray:
    d2, _ = (nearest_bruteforce if brute else nearest)(q, p)
    return np.sqrt(d2)


def chamfer(a, b, brute_force: bool = False) -> float:
    """mean_a min_b |a-b| + mean_b min_a |a-b|."""
    a, b = _points(a), _points(b)
    return float(_nn_dist(a, b, brute_force).mean() + _nn_dist(b, a, brute_force).mean())


def fscore(pred, gt, tau: float, brute_force: bool = False) -> float:
    """F-score (percent) with a point counted as matched when within ``tau``."""
    if not tau > 0:
        raise MetricError(f"tau must be positive, got {tau}")
    pred, gt = _points(pred), _points(gt)
    precision = float((_nn_dist(pred, gt, brute_force) <= tau).mean())
    recall = float((_nn_dist(gt, pred, brute_force) <= tau).mean())
    if precision + recall == 0:
        return 0.0
    return 200.0 * precision * recall / (precision + recall)


def default_tau(points) -> float:
    p = _points(points)
    return FSCORE_TAU_FRACTION * float(np.linalg.norm(p.max(0) - p.min(0)))


# --- projections -----------------------------------------------------------------

# view axis -> (depth axis, image u axis, image v axis, mirror u)
_VIEWS = [(0, 1, 2, False), (0, 1, 2, True), (1, 0, 2, False), (1, 0, 2, True), (2, 0, 1, False), (2, 0, 1, True)]


def _grid_views(grid: VoxelGrid, size: int) -> np.ndarray:
    occ = grid.dense()
    R = grid.resolution
    pix = (np.arange(size) + 0.5) * R / size
    sample = np.floor(pix).astype(np.int64)
    views = []
    for depth, u, v, mirror in _VIEWS:
        sil = occ.any(axis=depth)  # indexed by the remaining two axes in order
        img = sil[np.ix_(sample, sample)].astype(np.float64)
        views.append(img[::-1] if mirror else img)
    return np.stack(views)


def _mesh_views(mesh: TriMesh, size: int) -> np.ndarray:
    """Rasterize triangle silhouettes; a pixel is set if its center is covered."""
    tri = mesh.triangles()
    views = []
    centers = (np.arange(size) + 0.5) / size
    for depth, u, v, mirror in _VIEWS:
        t = tri[:, :, [u, v]]
        img = np.zeros((size, size), dtype=bool)
        lo = np.clip(np.ceil(t.min(1) * size - 0.5).astype(np.int64), 0, size - 1)
        hi = np.clip(np.floor(t.max(1) * size - 0.5).astype(np.int64), 0, size - 1)
        span = np.maximum(hi - lo + 1, 0)
        span[(t.max(1) * size - 0.5 < 0).any(1) | (t.min(1) * size - 0.5 > size - 1).any(1)] = 0
        counts = span[:, 0] * span[:, 1]
        if counts.sum():
            owner = np.repeat(np.arange(len(t)), counts)
            local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
            pu = lo[owner, 0] + local % span[owner, 0]
            pv = lo[owner, 1] + local // span[owner, 0]
            p = np.stack([centers[pu], centers[pv]], axis=1)
            a, b, c = t[owner, 0], t[owner, 1], t[owner, 2]

            def edge(p0, p1, q):
                return (p1[:, 0] - p0[:, 0]) * (q[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (q[:, 0] - p0[:, 0])

            e0, e1, e2 = edge(a, b, p), edge(b, c, p), edge(c, a, p)
            inside = ((e0 >= 0) & (e1 >= 0) & (e2 >= 0)) | ((e0 <= 0) & (e1 <= 0) & (e2 <= 0))
            area = edge(a, b, c) != 0
            hit = inside & area
            img[pu[hit], pv[hit]] = True
        img = img.astype(np.float64)
        views.append(img[::-1] if mirror else img)
    return np.stack(views)


def render_views(geometry, size: int = VIEW_SIZE) -> np.ndarray:
    """(6, size, size) occupancy images in [0,1] of geometry in the unit cube."""
    if isinstance(geometry, VoxelGrid):
        return _grid_views(geometry, size)
    if isinstance(geometry, TriMesh):
        return _mesh_views(geometry, size)
    raise MetricError(f"cannot render {type(geometry).__name__}")


def psnr_from_views(pred_views, gt_views) -> float:
    """PSNR over the pooled MSE of all views, capped at 99 dB."""
    p = np.asarray(pred_views, dtype=np.float64)
    g = np.asarray(gt_views, dtype=np.float64)
    if p.shape != g.shape:
        raise MetricError(f"view shapes differ: {p.shape} vs {g.shape}")
    mse = float(((p - g) ** 2).mean())
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def _is_empty(geometry) -> bool:
    return len(geometry) == 0 if isinstance(geometry, VoxelGrid) else geometry.is_empty()


def projection_psnr(pred, gt, size: int = VIEW_SIZE) -> float:
    if _is_empty(gt):
        raise MetricError("ground-truth geometry is empty")
    if _is_empty(pred):
        return psnr_from_views(np.zeros((6, size, size)), render_views(gt, size))
    return psnr_from_views(render_views(pred, size), render_views(gt, size))


# --- scalar metrics -------------------------------------------------------------

def scale_error(pred_extents, gt_extents) -> float:
    """Mean relative L1 error over the three axes."""
    p = np.asarray(pred_extents, dtype=np.float64).reshape(3)
    g = np.asarray(gt_extents, dtype=np.float64).reshape(3)
    if (g <= 0).any():
        raise MetricError(f"ground-truth extents must be positive, got {g.tolist()}")
    if (p <= 0).any():
        raise MetricError(f"predicted extents must be positive, got {p.tolist()}")
    return float(np.mean(np.abs(p - g) / g))


def voxel_iou(a: VoxelGrid, b: VoxelGrid) -> float:
    if a.resolution != b.resolution:
        raise MetricError(f"resolution mismatch: {a.resolution} vs {b.resolution}")
    union = len(np.union1d(a.indices, b.indices))
    if union == 0:
        return 1.0
    return len(np.intersect1d(a.indices, b.indices)) / union


# --- reports ----------------------------------------------------------------------

METRIC_KEYS = ("psnr", "cd", "fscore", "scale_error", "iou")


def mesh_metrics(pred: TriMesh, gt: TriMesh, n_samples: int = CD_SAMPLES, seed: int = 0,
                 tau: float | None = None) -> dict[str, float]:
    """PSNR, Chamfer and F-score between two meshes in the same unit frame.

    Both surfaces are sampled with the same seed, so identical meshes give
    identical point sets (Chamfer 0, F-score 100).
    """
    pp = pred.sample_surface(n_samples, seed)
    gp = gt.sample_surface(n_samples, seed)
    tau = default_tau(gp) if tau is None else tau
    return {
        "psnr": projection_psnr(pred, gt),
        "cd": chamfer(pp, gp),
        "fscore": fscore(pp, gp, tau),
    }


def report_json(values: dict) -> str:
    return json.dumps({k: values.get(k) for k in METRIC_KEYS}, indent=2) + "\n"


def report_csv(values: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value"])
    for k in METRIC_KEYS:
        v = values.get(k)
        w.writerow([k, "" if v is None else repr(float(v))])
    return buf.getvalue()
