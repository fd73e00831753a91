"""Build a physical asset spec from a labeled metric mesh plus articulation notes.

The articulation file is JSON in metric world units (the frame the mesh was
modelled in)::

    {"name": "cabinet", "description": "...",
     "parts": [{"id": 0, "description": "body", "material": "wood",
                "density": 600, "affordance": ["support"], "joint": null},
               {"id": 1, ..., "joint": {"type": "revolute", "parent": 0,
                                       "axis": [0, 0, 1], "origin": [0.4, 0.0, 0.0],
                                       "range": [0, 90], "degrees": true}}]}

Faces of part ``k`` are the ``g part_<k>`` group of the mesh. The grid spans
the mesh bounding box on every axis; joint parameters are moved into that
voxel frame and each part is voxelized on its own.
"""

from __future__ import annotations

import json
import math

import numpy as np

from . import schema
from .codec import encode
from .mesh_io import DegenerateGeometryError, TriMesh, fit_to_unit_box
from .schema import JointSpec, PartSpec, PhysicalAssetSpec, SchemaError
from .segmentation import split_parts
from .voxel import DEFAULT_RESOLUTION, label_parts, voxelize


def _joint_to_voxel(j: dict, lo: np.ndarray, ext: np.ndarray, R: int, path: str) -> JointSpec:
    jtype = j.get("type")
    if jtype not in ("revolute", "prismatic", "fixed"):
        raise SchemaError(f"{path}.type", f"unknown joint type {jtype!r}")
    try:
        axis = np.asarray(j.get("axis", [0, 0, 1]), dtype=np.float64).reshape(3)
        origin = np.asarray(j.get("origin", lo + ext / 2), dtype=np.float64).reshape(3)
    except ValueError:
        raise SchemaError(path, "axis and origin must be 3-vectors") from None
    if not np.linalg.norm(axis) > 0:
        raise SchemaError(f"{path}.axis", "zero-length axis")
    # inverse of the world map: world dir ~ scale * voxel dir
    d = axis / ext
    d = d / np.linalg.norm(d)
    o = np.clip((origin - lo) / ext * R, 0.0, R)
    rng = None
    if jtype != "fixed":
        if "range" not in j:
            raise SchemaError(f"{path}.range", "missing field")
        lo_v, hi_v = (float(x) for x in j["range"])
        if jtype == "revolute" and j.get("degrees", False):
            lo_v, hi_v = math.radians(lo_v), math.radians(hi_v)
        if jtype == "prismatic":
            k = R / float(np.linalg.norm(ext * d))
            lo_v, hi_v = lo_v * k, hi_v * k
        rng = (lo_v, hi_v)
    return JointSpec(jtype, int(j["parent"]), tuple(map(float, d)), tuple(map(float, o)), rng)


def build_spec(mesh: TriMesh, articulation: dict, resolution: int = DEFAULT_RESOLUTION,
               mode: str = "solid") -> tuple[PhysicalAssetSpec, TriMesh]:
    """Return the spec and the mesh moved into the [0,1]^3 grid frame.

    The returned mesh keeps its part-id labels, ready for
    :func:`simready.export.export`.
    """
    if mesh.part_labels is None:
        raise SchemaError("$.parts", "mesh has no part groups")
    grid_mesh, bbox = fit_to_unit_box(mesh)
    lo = np.asarray(bbox.origin)
    ext = np.asarray(bbox.extents)
    if (ext <= 0).any():
        raise DegenerateGeometryError(f"mesh is flat along an axis: extents {ext.tolist()}")
    raw = articulation.get("parts")
    if not isinstance(raw, list) or not raw:
        raise SchemaError("$.parts", "expected a non-empty array")
    ids = sorted(int(p["id"]) for p in raw)
    by_id = {int(p["id"]): p for p in raw}
    present = set(np.unique(mesh.part_labels).tolist())
    if present - set(ids):
        raise SchemaError("$.parts", f"mesh groups {sorted(present - set(ids))} have no entry")
    # split_parts wants contiguous labels
    contiguous = np.searchsorted(ids, grid_mesh.part_labels)
    pieces = split_parts(grid_mesh.with_labels(contiguous), len(ids))
    grids = []
    for pm in pieces:
        if pm.empty:
            raise SchemaError(f"$.parts[{pm.part_id}]", f"part {ids[pm.part_id]} has no faces")
        grids.append(voxelize(pm.mesh, resolution, mode))
    labeled = label_parts(grids)
    parts = []
    roots = []
    for k, pid in enumerate(ids):
        p = by_id[pid]
        path = f"$.parts[{k}]"
        joint = None
        if p.get("joint") is not None:
            joint = _joint_to_voxel(p["joint"], lo, ext, resolution, f"{path}.joint")
        else:
            roots.append(pid)
        parts.append(PartSpec(
            id=pid,
            geometry=encode(labeled.part(k)),
            description=str(p.get("description", "")),
            material=str(p.get("material", "unknown")),
            density=float(p.get("density", 1000.0)),
            affordance=tuple(p.get("affordance", ())),
            joint=joint,
        ))
    if len(roots) != 1:
        raise schema.MultipleRoots(f"expected exactly one part without a joint, found {roots}")
    spec = PhysicalAssetSpec(
        name=str(articulation.get("name", "asset")),
        description=str(articulation.get("description", "")),
        absolute_scale=tuple(map(float, ext)),
        resolution=resolution,
        parts=tuple(parts),
        root_part=roots[0],
    )
    schema.validate(spec)
    return spec, grid_mesh


def load_articulation(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
