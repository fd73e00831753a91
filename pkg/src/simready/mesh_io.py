"""Triangle meshes: OBJ-subset reading/writing and frame normalization.

Only ``v`` and ``f`` records are understood. Face entries may carry
``v/vt/vn`` references; anything after the first slash is ignored. Polygons
with more than three corners are fan-triangulated. Files ending in ``.gz``
are transparently (de)compressed.
"""

from __future__ import annotations

import gzip
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Base class for mesh construction and parsing failures."""


class MeshParseError(MeshError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IndexOutOfRange(MeshError):
    pass


class DegenerateFaceError(MeshError):
    def __init__(self, faces):
        self.faces = [int(f) for f in faces]
        shown = ", ".join(map(str, self.faces[:20]))
        more = "" if len(self.faces) <= 20 else f" (+{len(self.faces) - 20} more)"
        super().__init__(f"degenerate faces: {shown}{more}")


class DegenerateGeometryError(MeshError):
    pass


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle mesh.

    ``part_labels`` optionally holds one small integer per face.
    """

    vertices: np.ndarray
    faces: np.ndarray
    part_labels: np.ndarray | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            bad = np.nonzero((f < 0).any(1) | (f >= len(v)).any(1))[0]
            raise IndexOutOfRange(
                f"face {int(bad[0])} references vertex index "
                f"{int(f[bad[0]].max())} but mesh has {len(v)} vertices"
            )
        degenerate = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        if degenerate.any():
            raise DegenerateFaceError(np.nonzero(degenerate)[0])
        labels = self.part_labels
        if labels is not None:
            labels = np.ascontiguousarray(labels, dtype=np.int64).reshape(-1)
            if len(labels) != len(f):
                raise MeshError(f"{len(labels)} part labels for {len(f)} faces")
            labels.setflags(write=False)
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "part_labels", labels)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def is_empty(self) -> bool:
        return self.n_faces == 0

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n_vertices == 0:
            raise DegenerateGeometryError("mesh has no vertices")
        return self.vertices.min(0), self.vertices.max(0)

    def triangles(self) -> np.ndarray:
        """(F, 3, 3) array of corner coordinates."""
        return self.vertices[self.faces]

    def centroids(self) -> np.ndarray:
        return self.triangles().mean(axis=1)

    def face_areas(self) -> np.ndarray:
        tri = self.triangles()
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    def with_labels(self, labels) -> "TriMesh":
        return TriMesh(self.vertices, self.faces, labels)

    def transformed(self, scale, offset) -> "TriMesh":
        """Return the mesh with ``v * scale + offset`` applied (component-wise)."""
        v = self.vertices * np.asarray(scale, dtype=np.float64) + np.asarray(offset, dtype=np.float64)
        return TriMesh(v, self.faces, self.part_labels)

    def sample_surface(self, n: int, seed: int = 0) -> np.ndarray:
        """Area-weighted uniform samples on the surface."""
        if self.is_empty():
            raise DegenerateGeometryError("cannot sample an empty mesh")
        rng = np.random.default_rng(seed)
        areas = self.face_areas()
        total = areas.sum()
        if total <= 0:
            raise DegenerateGeometryError("mesh has zero surface area")
        idx = rng.choice(len(areas), size=n, p=areas / total)
        u = rng.random((n, 2))
        flip = u.sum(1) > 1
        u[flip] = 1 - u[flip]
        tri = self.triangles()[idx]
        return tri[:, 0] + u[:, :1] * (tri[:, 1] - tri[:, 0]) + u[:, 1:] * (tri[:, 2] - tri[:, 0])


def merge_meshes(meshes, labels=None) -> TriMesh:
    """Concatenate meshes; if ``labels`` is given each mesh's faces get that label."""
    verts, faces, lab = [], [], []
    offset = 0
    for i, m in enumerate(meshes):
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += m.n_vertices
        if labels is not None:
            lab.append(np.full(m.n_faces, labels[i], dtype=np.int64))
    if not verts:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    return TriMesh(
        np.concatenate(verts),
        np.concatenate(faces),
        np.concatenate(lab) if labels is not None else None,
    )


def _open_text(path: Path, mode: str):
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8", newline="\n")


def parse_obj(text: str, groups: bool = False) -> TriMesh:
    """Parse OBJ-subset text into a mesh.

    With ``groups`` set, ``g part_<k>`` records label the faces that follow
    with part ``k``; every face must then sit inside such a group.
    """
    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    face_lines: list[int] = []
    labels: list[int] = []
    current: int | None = None
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag == "v":
            if len(rest) < 3:
                raise MeshParseError("vertex needs 3 coordinates", lineno)
            try:
                verts.append((float(rest[0]), float(rest[1]), float(rest[2])))
            except ValueError:
                raise MeshParseError(f"bad vertex coordinate in {line!r}", lineno) from None
        elif tag == "f":
            if len(rest) < 3:
                raise MeshParseError("face needs at least 3 vertices", lineno)
            try:
                idx = [int(tok.split("/", 1)[0]) for tok in rest]
            except ValueError:
                raise MeshParseError(f"bad face index in {line!r}", lineno) from None
            resolved = []
            for i in idx:
                # negative indices are relative to the vertices seen so far
                j = i - 1 if i > 0 else len(verts) + i
                if i == 0 or j < 0 or j >= len(verts):
                    raise IndexOutOfRange(
                        f"line {lineno}: vertex index {i} out of range ({len(verts)} vertices defined)"
                    )
                resolved.append(j)
            if groups and current is None:
                raise MeshParseError("face outside any part group", lineno)
            for k in range(1, len(resolved) - 1):
                faces.append((resolved[0], resolved[k], resolved[k + 1]))
                face_lines.append(lineno)
                labels.append(current if current is not None else 0)
        elif tag == "g" and groups:
            name = rest[0] if rest else ""
            if not name.startswith("part_") or not name[5:].isdigit():
                raise MeshParseError(f"group name {name!r} is not part_<id>", lineno)
            current = int(name[5:])
        # every other record type (vt, vn, o, s, usemtl, ...) is ignored
    if not faces:
        raise MeshParseError("no geometry")
    part_labels = np.array(labels, dtype=np.int64) if groups else None
    return TriMesh(np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64), part_labels)


def load_mesh(path, groups: bool = False) -> TriMesh:
    """Read an OBJ-subset file (``.gz`` accepted). Labels only with ``groups``."""
    path = Path(path)
    with _open_text(path, "r") as fh:
        text = fh.read()
    return parse_obj(text, groups=groups)


def format_obj(mesh: TriMesh) -> str:
    """OBJ-subset text: 6-decimal vertices, 1-based triangle indices.

    Labeled meshes get a ``g part_<k>`` record whenever the label changes.
    """
    out = io.StringIO()
    for x, y, z in mesh.vertices:
        out.write(f"v {x:.6f} {y:.6f} {z:.6f}\n")
    labels = mesh.part_labels
    prev = None
    for i, (a, b, c) in enumerate(mesh.faces + 1):
        if labels is not None and labels[i] != prev:
            prev = labels[i]
            out.write(f"g part_{prev}\n")
        out.write(f"f {a} {b} {c}\n")
    return out.getvalue()


def save_mesh(mesh: TriMesh, path) -> None:
    path = Path(path)
    text = format_obj(mesh)
    if path.suffix == ".gz":
        # mtime=0 keeps compressed output byte-stable
        with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as gz:
            gz.write(text.encode("utf-8"))
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


@dataclass(frozen=True)
class BoundingBox:
    origin: tuple[float, float, float]
    extents: tuple[float, float, float]


def normalize(mesh: TriMesh) -> tuple[TriMesh, BoundingBox]:
    """Uniformly scale and translate into [0,1]^3 with the longest edge equal to 1.

    Returns the normalized mesh and the original bounding box.
    """
    if mesh.n_vertices == 0:
        raise DegenerateGeometryError("cannot normalize an empty mesh")
    lo, hi = mesh.bounds()
    ext = hi - lo
    longest = float(ext.max())
    if longest <= 0:
        raise DegenerateGeometryError("all vertices coincide")
    v = (mesh.vertices - lo) / longest
    # clamp rounding noise so the box stays inside the unit cube
    v = np.clip(v, 0.0, 1.0)
    out = TriMesh(v, mesh.faces, mesh.part_labels)
    return out, BoundingBox(tuple(map(float, lo)), tuple(map(float, ext)))


def fit_to_unit_box(mesh: TriMesh) -> tuple[TriMesh, BoundingBox]:
    """Per-axis affine fit of the bounding box onto [0,1]^3.

    This is the frame asset geometry lives in: the voxel grid spans the
    object's bounding box on every axis, which is what lets metric extents
    be attached per axis. Flat axes (zero extent) are centred at 0.5.
    """
    if mesh.n_vertices == 0:
        raise DegenerateGeometryError("cannot fit an empty mesh")
    lo, hi = mesh.bounds()
    ext = hi - lo
    if float(ext.max()) <= 0:
        raise DegenerateGeometryError("all vertices coincide")
    safe = np.where(ext > 0, ext, 1.0)
    v = (mesh.vertices - lo) / safe
    v[:, ext <= 0] = 0.5
    v = np.clip(v, 0.0, 1.0)
    return TriMesh(v, mesh.faces, mesh.part_labels), BoundingBox(tuple(map(float, lo)), tuple(map(float, ext)))


def box_mesh(lo, hi) -> TriMesh:
    """Closed axis-aligned box with 8 vertices and 12 outward-facing triangles."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    corners = np.array(
        [[(hi if (i >> k) & 1 else lo)[k] for k in range(3)] for i in range(8)], dtype=np.float64
    )
    faces = np.array(
        [
            [0, 4, 6], [0, 6, 2],  # -x
            [1, 3, 7], [1, 7, 5],  # +x
            [0, 1, 5], [0, 5, 4],  # -y
            [2, 6, 7], [2, 7, 3],  # +y
            [0, 2, 3], [0, 3, 1],  # -z
            [4, 5, 7], [4, 7, 6],  # +z
        ],
        dtype=np.int64,
    )
    return TriMesh(corners, faces)
