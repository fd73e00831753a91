"""Nearest-neighbor transfer of coarse part labels onto fine geometry."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .mesh_io import TriMesh
from .spatial import nearest, nearest_bruteforce
from .voxel import PartLabeledGrid, VoxelError, VoxelGrid

log = logging.getLogger(__name__)


class SegmentationError(ValueError):
    pass


def _assign(queries: np.ndarray, labels: PartLabeledGrid, brute: bool) -> np.ndarray:
    if len(labels) == 0:
        raise SegmentationError("label grid is empty")
    centers = labels.centers()
    find = nearest_bruteforce if brute else nearest
    _, idx = find(queries, centers, labels.labels)
    return labels.labels[idx]


def segment_mesh(mesh: TriMesh, labels: PartLabeledGrid, brute_force: bool = False) -> TriMesh:
    """Label every face with the part of the voxel center nearest its centroid.

    The mesh must be in the [0,1]^3 grid frame. Ties go to the lower part id.
    """
    if mesh.is_empty():
        return mesh.with_labels(np.zeros(0, dtype=np.int64))
    face_labels = _assign(mesh.centroids() * labels.resolution, labels, brute_force)
    counts = np.bincount(face_labels, minlength=labels.n_parts)
    for pid in np.nonzero(counts == 0)[0]:
        log.warning("part %d received no faces", pid)
    return mesh.with_labels(face_labels)


@dataclass
class PartMesh:
    part_id: int
    mesh: TriMesh
    warnings: list[str] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return self.mesh.is_empty()


def split_parts(mesh: TriMesh, n_parts: int | None = None) -> list[PartMesh]:
    """One compact mesh per part id; vertices shared across parts are duplicated."""
    if mesh.part_labels is None:
        raise SegmentationError("mesh carries no part labels")
    labels = mesh.part_labels
    if n_parts is None:
        n_parts = int(labels.max()) + 1 if len(labels) else 0
    out = []
    for pid in range(n_parts):
        sel = mesh.faces[labels == pid]
        used, inverse = np.unique(sel, return_inverse=True)
        sub = TriMesh(mesh.vertices[used], inverse.reshape(-1, 3), np.full(len(sel), pid))
        warn = []
        if len(sel) == 0:
            warn.append(f"part {pid} has no faces")
            log.warning("part %d has no faces", pid)
        out.append(PartMesh(pid, sub, warn))
    return out


def upsample_labels(labels: PartLabeledGrid, fine: VoxelGrid, brute_force: bool = False) -> PartLabeledGrid:
    """Give each occupied fine cell the label of the nearest labeled coarse cell."""
    if fine.resolution % labels.resolution:
        raise VoxelError(f"fine resolution {fine.resolution} is not a multiple of {labels.resolution}")
    if len(fine) == 0:
        return PartLabeledGrid(fine.resolution, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    f = fine.resolution // labels.resolution
    assigned = _assign(fine.centers() / f, labels, brute_force)
    # relabel to keep ids contiguous if some coarse part claimed no fine cell
    used = np.unique(assigned)
    remap = np.full(labels.n_parts, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    if len(used) != labels.n_parts:
        log.warning("parts %s lost all cells at fine resolution", sorted(set(range(labels.n_parts)) - set(used.tolist())))
    return PartLabeledGrid(fine.resolution, fine.indices, remap[assigned])
