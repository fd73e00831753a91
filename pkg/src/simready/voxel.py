"""Binary and part-labeled voxel grids.

Cells are addressed by integer coordinates ``(x, y, z)`` in ``[0, R)``. The
linear index is x-fastest: ``x + R*y + R*R*z``. Grids store their occupied
cells as a sorted array of unique linear indices, so set semantics come for
free and the token codec can read runs straight off the array.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .mesh_io import TriMesh, merge_meshes

DEFAULT_RESOLUTION = 32
MAX_RESOLUTION = 128


class VoxelError(ValueError):
    pass


class CoordinateOutOfRange(VoxelError):
    pass


class EmptyPartError(VoxelError):
    pass


def _check_resolution(R: int) -> int:
    R = int(R)
    if R < 1 or R > MAX_RESOLUTION:
        raise VoxelError(f"resolution must be in [1, {MAX_RESOLUTION}], got {R}")
    return R


def linear_index(cell, R: int = DEFAULT_RESOLUTION):
    """Map cell coordinates (shape (3,) or (N, 3)) to linear indices."""
    c = np.asarray(cell, dtype=np.int64)
    if c.shape[-1] != 3:
        raise VoxelError(f"cells must have 3 coordinates, got shape {c.shape}")
    if c.size and (c.min() < 0 or c.max() >= R):
        raise CoordinateOutOfRange(f"coordinate outside [0, {R}) in {c.reshape(-1, 3)[((c < 0) | (c >= R)).reshape(-1, 3).any(1)][0].tolist()}")
    idx = c[..., 0] + R * c[..., 1] + R * R * c[..., 2]
    return int(idx) if idx.ndim == 0 else idx


def delinearize(index, R: int = DEFAULT_RESOLUTION):
    """Inverse of :func:`linear_index`."""
    i = np.asarray(index, dtype=np.int64)
    if i.size and (i.min() < 0 or i.max() >= R**3):
        raise CoordinateOutOfRange(f"linear index outside [0, {R**3})")
    out = np.stack([i % R, (i // R) % R, i // (R * R)], axis=-1)
    return tuple(int(v) for v in out) if out.ndim == 1 else out


class VoxelGrid:
    """Set of occupied cells at resolution R."""

    __slots__ = ("resolution", "indices")

    def __init__(self, resolution: int, indices=()):
        R = _check_resolution(resolution)
        idx = np.unique(np.asarray(indices, dtype=np.int64).reshape(-1))
        if idx.size and (idx[0] < 0 or idx[-1] >= R**3):
            raise CoordinateOutOfRange(f"linear index outside [0, {R**3})")
        idx.setflags(write=False)
        self.resolution = R
        self.indices = idx

    @classmethod
    def from_cells(cls, resolution: int, cells) -> "VoxelGrid":
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
        return cls(resolution, linear_index(cells, resolution))

    @classmethod
    def from_dense(cls, occupancy) -> "VoxelGrid":
        occ = np.asarray(occupancy, dtype=bool)
        if occ.ndim != 3 or len(set(occ.shape)) != 1:
            raise VoxelError(f"dense occupancy must be a cube, got shape {occ.shape}")
        R = occ.shape[0]
        x, y, z = np.nonzero(occ)
        return cls(R, x + R * y + R * R * z)

    @classmethod
    def full(cls, resolution: int) -> "VoxelGrid":
        return cls(resolution, np.arange(resolution**3))

    @property
    def cells(self) -> np.ndarray:
        R = self.resolution
        i = self.indices
        return np.stack([i % R, (i // R) % R, i // (R * R)], axis=-1)

    def dense(self) -> np.ndarray:
        """Boolean array indexed ``[x, y, z]``."""
        R = self.resolution
        occ = np.zeros(R**3, dtype=bool)
        occ[self.indices] = True
        # linear index is x-fastest, i.e. C-order over (z, y, x)
        return occ.reshape(R, R, R).transpose(2, 1, 0)

    def centers(self) -> np.ndarray:
        """Cell centers in voxel units."""
        return self.cells + 0.5

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, cell) -> bool:
        i = linear_index(cell, self.resolution)
        k = np.searchsorted(self.indices, i)
        return bool(k < len(self.indices) and self.indices[k] == i)

    def __eq__(self, other) -> bool:
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return self.resolution == other.resolution and np.array_equal(self.indices, other.indices)

    def __hash__(self):
        return hash((self.resolution, self.indices.tobytes()))

    def __repr__(self) -> str:
        return f"VoxelGrid(R={self.resolution}, occupied={len(self)})"

    def issubset(self, other: "VoxelGrid") -> bool:
        return self.resolution == other.resolution and bool(np.isin(self.indices, other.indices).all())

    def union(self, other: "VoxelGrid") -> "VoxelGrid":
        return VoxelGrid(self.resolution, np.union1d(self.indices, other.indices))

    def intersection(self, other: "VoxelGrid") -> "VoxelGrid":
        return VoxelGrid(self.resolution, np.intersect1d(self.indices, other.indices))


@dataclass(frozen=True, eq=False)
class PartLabeledGrid:
    """Occupied cells with exactly one part id each; ids are 0..P-1, all used."""

    resolution: int
    indices: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        R = _check_resolution(self.resolution)
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        lab = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if idx.shape != lab.shape:
            raise VoxelError("indices and labels differ in length")
        order = np.argsort(idx, kind="stable")
        idx, lab = idx[order], lab[order]
        if idx.size and (np.diff(idx) == 0).any():
            raise VoxelError("a cell carries more than one part id")
        if idx.size and (idx[0] < 0 or idx[-1] >= R**3):
            raise CoordinateOutOfRange(f"linear index outside [0, {R**3})")
        if lab.size:
            used = np.unique(lab)
            if used[0] != 0 or not np.array_equal(used, np.arange(len(used))):
                raise VoxelError(f"part ids must be contiguous from 0, got {used.tolist()}")
        idx.setflags(write=False)
        lab.setflags(write=False)
        object.__setattr__(self, "resolution", R)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "labels", lab)

    @property
    def n_parts(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def cells(self) -> np.ndarray:
        return VoxelGrid(self.resolution, self.indices).cells

    def centers(self) -> np.ndarray:
        return self.cells + 0.5

    def part(self, pid: int) -> VoxelGrid:
        return VoxelGrid(self.resolution, self.indices[self.labels == pid])

    def occupancy(self) -> VoxelGrid:
        return VoxelGrid(self.resolution, self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PartLabeledGrid):
            return NotImplemented
        return (
            self.resolution == other.resolution
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.labels, other.labels)
        )


def label_parts(grids) -> PartLabeledGrid:
    """Assemble per-part grids; a cell claimed twice goes to the lower part id."""
    grids = list(grids)
    if not grids:
        raise VoxelError("no parts given")
    R = grids[0].resolution
    for pid, g in enumerate(grids):
        if g.resolution != R:
            raise VoxelError(f"part {pid} has resolution {g.resolution}, expected {R}")
        if len(g) == 0:
            raise EmptyPartError(f"part {pid} has no voxels")
    idx = np.concatenate([g.indices for g in grids])
    lab = np.concatenate([np.full(len(g), pid, dtype=np.int64) for pid, g in enumerate(grids)])
    # grids are concatenated in part order, so the first occurrence is the lowest id
    uniq, first = np.unique(idx, return_index=True)
    lab = lab[first]
    used = np.unique(lab)
    if len(used) != len(grids):
        lost = sorted(set(range(len(grids))) - set(used.tolist()))
        raise EmptyPartError(f"part {lost[0]} has no voxels after overlap resolution")
    return PartLabeledGrid(R, uniq, lab)


# --- voxelization -----------------------------------------------------------

def _tri_box_overlap(tri: np.ndarray, centers: np.ndarray, half: float = 0.5) -> np.ndarray:
    """Vectorized separating-axis test.

    ``tri`` is (N, 3, 3) and ``centers`` (N, 3); each row pairs a triangle with
    an axis-aligned cube of half-size ``half``. Touching counts as overlap.
    """
    v = tri - centers[:, None, :]
    v0, v1, v2 = v[:, 0], v[:, 1], v[:, 2]
    edges = (v1 - v0, v2 - v1, v0 - v2)
    ok = np.ones(len(v), dtype=bool)

    # box face normals
    mins = v.min(axis=1)
    maxs = v.max(axis=1)
    ok &= ~((mins > half) | (maxs < -half)).any(axis=1)

    # triangle normal
    n = np.cross(edges[0], edges[1])
    d = np.einsum("ij,ij->i", n, v0)
    r = half * np.abs(n).sum(axis=1)
    ok &= np.abs(d) <= r

    # nine edge cross products e_k x axis_j
    for e in edges:
        for j in range(3):
            axis = np.zeros_like(e)
            # cross(unit_j, e)
            a, b = (j + 1) % 3, (j + 2) % 3
            axis[:, a] = -e[:, b]
            axis[:, b] = e[:, a]
            p0 = np.einsum("ij,ij->i", axis, v0)
            p1 = np.einsum("ij,ij->i", axis, v1)
            p2 = np.einsum("ij,ij->i", axis, v2)
            lo = np.minimum(np.minimum(p0, p1), p2)
            hi = np.maximum(np.maximum(p0, p1), p2)
            r = half * np.abs(axis).sum(axis=1)
            ok &= ~((lo > r) | (hi < -r))
    return ok


def _surface_cells(tri: np.ndarray, R: int, chunk: int = 200_000) -> np.ndarray:
    """Linear indices of all cells whose box touches any triangle (voxel units)."""
    lo = np.clip(np.floor(tri.min(axis=1)).astype(np.int64), 0, R - 1)
    hi = np.clip(np.floor(tri.max(axis=1)).astype(np.int64), 0, R - 1)
    # a vertex exactly on an interior cell boundary touches the lower cell too
    lo = np.clip(np.where(tri.min(axis=1) == lo, lo - 1, lo), 0, R - 1)
    span = hi - lo + 1
    counts = span.prod(axis=1)
    hits = []
    starts = np.concatenate([[0], np.cumsum(counts)])
    t0 = 0
    while t0 < len(tri):
        # batch triangles so the candidate array stays bounded
        t1 = int(np.searchsorted(starts, starts[t0] + chunk, side="right")) - 1
        t1 = max(t1, t0 + 1)
        t1 = min(t1, len(tri))
        c = counts[t0:t1]
        owner = np.repeat(np.arange(t0, t1), c)
        local = np.arange(c.sum()) - np.repeat(starts[t0:t1] - starts[t0], c)
        sx, sy = span[owner, 0], span[owner, 1]
        off = np.stack([local % sx, (local // sx) % sy, local // (sx * sy)], axis=1)
        cell = lo[owner] + off
        keep = _tri_box_overlap(tri[owner], cell + 0.5)
        cell = cell[keep]
        hits.append(cell[:, 0] + R * cell[:, 1] + R * R * cell[:, 2])
        t0 = t1
    return np.unique(np.concatenate(hits)) if hits else np.zeros(0, dtype=np.int64)


def fill_interior(grid: VoxelGrid) -> VoxelGrid:
    """Complement of the empty region 6-connected to the outside."""
    filled = ndimage.binary_fill_holes(grid.dense())
    return VoxelGrid.from_dense(filled)


def voxelize(mesh: TriMesh, R: int = DEFAULT_RESOLUTION, mode: str = "surface") -> VoxelGrid:
    """Voxelize a mesh living in [0,1]^3.

    ``surface`` marks every cell whose closed box intersects a triangle;
    ``solid`` additionally fills cells not reachable from outside.
    """
    R = _check_resolution(R)
    if mode not in ("surface", "solid"):
        raise VoxelError(f"unknown voxelization mode {mode!r}")
    if mesh.is_empty():
        raise VoxelError("cannot voxelize an empty mesh")
    tri = mesh.triangles() * R
    grid = VoxelGrid(R, _surface_cells(tri, R))
    if mode == "solid":
        grid = fill_interior(grid)
    return grid


def downsample(grid: VoxelGrid, factor: int) -> VoxelGrid:
    """Coarse cell is occupied iff any of its ``factor**3`` children is."""
    factor = int(factor)
    if factor < 1 or factor & (factor - 1):
        raise VoxelError(f"factor must be a power of two, got {factor}")
    if grid.resolution % factor:
        raise VoxelError(f"factor {factor} does not divide resolution {grid.resolution}")
    Rc = grid.resolution // factor
    return VoxelGrid.from_cells(Rc, grid.cells // factor) if len(grid) else VoxelGrid(Rc)


def upsample(grid: VoxelGrid, factor: int) -> VoxelGrid:
    """Each coarse cell becomes a ``factor**3`` block."""
    factor = int(factor)
    if factor < 1:
        raise VoxelError("factor must be positive")
    occ = grid.dense()
    return VoxelGrid.from_dense(occ.repeat(factor, 0).repeat(factor, 1).repeat(factor, 2))


# --- grid to mesh -------------------------------------------------------------

_FACE_QUADS = {
    # axis, side -> corner offsets (counter-clockwise seen from outside)
    (0, 0): [(0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 0)],
    (0, 1): [(1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1)],
    (1, 0): [(0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)],
    (1, 1): [(0, 1, 0), (0, 1, 1), (1, 1, 1), (1, 1, 0)],
    (2, 0): [(0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 0)],
    (2, 1): [(0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)],
}


def voxels_to_mesh(grid: VoxelGrid | PartLabeledGrid) -> TriMesh:
    """Triangulate every cell face not shared with another occupied cell.

    Output lives in [0,1]^3. For a labeled grid, faces carry the label of the
    cell that produced them and faces between different parts are kept.
    """
    R = grid.resolution
    cells = grid.cells
    if isinstance(grid, PartLabeledGrid):
        labels = grid.labels
    else:
        labels = np.zeros(len(cells), dtype=np.int64)
    lookup = np.full(R**3, -1, dtype=np.int64)
    lookup[grid.indices] = labels
    verts, faces, face_labels = [], [], []
    nv = 0
    for (axis, side), quad in _FACE_QUADS.items():
        nb = cells.copy()
        nb[:, axis] += 1 if side else -1
        inside = (nb[:, axis] >= 0) & (nb[:, axis] < R)
        nb_label = np.full(len(cells), -1, dtype=np.int64)
        nb_label[inside] = lookup[nb[inside, 0] + R * nb[inside, 1] + R * R * nb[inside, 2]]
        exposed = nb_label != labels
        c = cells[exposed]
        if not len(c):
            continue
        q = np.asarray(quad, dtype=np.float64)
        v = (c[:, None, :] + q[None]).reshape(-1, 3)
        base = nv + 4 * np.arange(len(c))[:, None]
        f = np.concatenate([base + [0, 1, 2], base + [0, 2, 3]], axis=1).reshape(-1, 3)
        verts.append(v)
        faces.append(f)
        face_labels.append(np.repeat(labels[exposed], 2))
        nv += len(v)
    if not verts:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64))
    return TriMesh(np.concatenate(verts) / R, np.concatenate(faces), np.concatenate(face_labels))


def greedy_boxes(grid: VoxelGrid) -> list[tuple[tuple[int, int, int], tuple[int, int, int]]]:
    """Cover the occupied cells with disjoint boxes by greedy merging.

    Boxes are ``(lo, hi)`` with exclusive ``hi``, found in linear-index order by
    growing along x, then y, then z as far as the rows stay fully occupied.
    """
    occ = grid.dense().copy()
    R = grid.resolution
    boxes = []
    for i in grid.indices:
        x, y, z = int(i % R), int((i // R) % R), int(i // (R * R))
        if not occ[x, y, z]:
            continue
        x1 = x + 1
        while x1 < R and occ[x1, y, z]:
            x1 += 1
        y1 = y + 1
        while y1 < R and occ[x:x1, y1, z].all():
            y1 += 1
        z1 = z + 1
        while z1 < R and occ[x:x1, y:y1, z1].all():
            z1 += 1
        occ[x:x1, y:y1, z:z1] = False
        boxes.append(((x, y, z), (x1, y1, z1)))
    return boxes


def cuboid_mesh(grid: VoxelGrid) -> TriMesh:
    """Mesh of the greedy box cover, in [0,1]^3."""
    from .mesh_io import box_mesh

    R = grid.resolution
    boxes = [box_mesh(np.array(lo) / R, np.array(hi) / R) for lo, hi in greedy_boxes(grid)]
    return merge_meshes(boxes)


# --- JSON interchange -----------------------------------------------------------

def grid_to_json(grid: VoxelGrid) -> str:
    """``{"resolution": R, "occupied": [[x, y, z], ...]}`` in linear-index order."""
    doc = {"resolution": grid.resolution, "occupied": grid.cells.tolist()}
    return json.dumps(doc, separators=(",", ":")) + "\n"


def grid_from_json(text: str) -> VoxelGrid:
    doc = json.loads(text)
    if not isinstance(doc, dict) or "resolution" not in doc or "occupied" not in doc:
        raise VoxelError("grid JSON needs 'resolution' and 'occupied'")
    cells = np.asarray(doc["occupied"], dtype=np.int64).reshape(-1, 3)
    return VoxelGrid.from_cells(int(doc["resolution"]), cells)
