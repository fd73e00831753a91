"""Tree-structured physical asset description (JSON).

Document layout, keys in emitted order::

    {
      "name": str, "description": str,
      "absolute_scale": [sx, sy, sz],        # metres spanned by the grid on each axis
      "resolution": R,
      "root_part": id,
      "parts": [
        {"id": int, "description": str, "material": str, "density": kg/m^3,
         "affordance": [str, ...], "geometry": "<runs>",
         "joint": null | {"type": "revolute"|"prismatic"|"fixed", "parent": id,
                          "axis_direction": [dx, dy, dz], "axis_origin": [ox, oy, oz],
                          "range": [lo, hi] | null}}
      ]
    }

Joint vectors are in voxel coordinates. Revolute ranges are radians unless the
joint carries ``"degrees": true`` on input; emitted documents are always in
radians and never carry the flag.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import codec
from .voxel import VoxelGrid

JOINT_TYPES = ("revolute", "prismatic", "fixed")
TWO_PI = 2.0 * math.pi
# slack for degree->radian conversion of a +-360 range
_ANGLE_EPS = 1e-9


class SchemaError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class TreeError(ValueError):
    pass


class CycleDetected(TreeError):
    pass


class MultipleRoots(TreeError):
    pass


class OrphanPart(TreeError):
    pass


class InvalidRange(ValueError):
    def __init__(self, part_id: int, message: str):
        self.part_id = part_id
        super().__init__(f"part {part_id}: {message}")


class PartGeometryError(ValueError):
    def __init__(self, part_id: int, cause: Exception):
        self.part_id = part_id
        self.cause = cause
        super().__init__(f"part {part_id}: {cause}")


@dataclass(frozen=True)
class JointSpec:
    type: str
    parent: int
    axis_direction: tuple[float, float, float] = (0.0, 0.0, 1.0)
    axis_origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    range: tuple[float, float] | None = None


@dataclass(frozen=True)
class PartSpec:
    id: int
    geometry: codec.TokenString
    description: str = ""
    material: str = ""
    density: float = 1000.0
    affordance: tuple[str, ...] = ()
    joint: JointSpec | None = None


@dataclass(frozen=True)
class PhysicalAssetSpec:
    name: str
    absolute_scale: tuple[float, float, float]
    parts: tuple[PartSpec, ...]
    root_part: int
    resolution: int = 32
    description: str = ""
    _grids: dict = field(default_factory=dict, compare=False, repr=False)

    def part(self, pid: int) -> PartSpec:
        for p in self.parts:
            if p.id == pid:
                return p
        raise KeyError(f"unknown part id {pid}")

    def grid(self, pid: int) -> VoxelGrid:
        """Decoded geometry of a part (cached)."""
        g = self._grids.get(pid)
        if g is None:
            part = self.part(pid)
            g = codec.decode(part.geometry.text, self.resolution)
            self._grids[pid] = g
        return g

    def children(self, pid: int) -> list[int]:
        return [p.id for p in self.parts if p.joint is not None and p.joint.parent == pid]

    def topological_order(self) -> list[int]:
        """Part ids, parents before children, siblings by id."""
        order, stack = [], [self.root_part]
        while stack:
            pid = stack.pop()
            order.append(pid)
            stack.extend(sorted(self.children(pid), reverse=True))
        return order

    def voxel_volume(self) -> float:
        sx, sy, sz = self.absolute_scale
        R = self.resolution
        return (sx / R) * (sy / R) * (sz / R)


# --- validation -----------------------------------------------------------------

def _finite(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def validate(spec: PhysicalAssetSpec) -> None:
    """Raise on any invariant violation. Geometry is decoded eagerly."""
    if not isinstance(spec.name, str):
        raise SchemaError("$.name", "expected string")
    if len(spec.absolute_scale) != 3 or not all(_finite(s) and s > 0 for s in spec.absolute_scale):
        raise SchemaError("$.absolute_scale", f"extents must be three finite positive numbers, got {list(spec.absolute_scale)}")
    R = spec.resolution
    if not isinstance(R, int) or isinstance(R, bool) or R < 1:
        raise SchemaError("$.resolution", f"expected positive integer, got {R!r}")
    if not spec.parts:
        raise SchemaError("$.parts", "asset has no parts")
    ids = [p.id for p in spec.parts]
    if len(set(ids)) != len(ids):
        raise SchemaError("$.parts", f"duplicate part ids in {ids}")
    known = set(ids)

    for i, p in enumerate(spec.parts):
        path = f"$.parts[{i}]"
        if not _finite(p.density) or p.density <= 0:
            raise SchemaError(f"{path}.density", f"must be a finite positive number, got {p.density!r}")
        try:
            g = codec.decode(p.geometry.text, R)
        except codec.TokenError as exc:
            raise PartGeometryError(p.id, exc) from exc
        if len(g) == 0:
            raise PartGeometryError(p.id, ValueError("geometry is empty"))
        spec._grids[p.id] = g
        j = p.joint
        if j is None:
            continue
        if j.type not in JOINT_TYPES:
            raise SchemaError(f"{path}.joint.type", f"unknown joint type {j.type!r}")
        if j.parent not in known:
            raise OrphanPart(f"part {p.id} names unknown parent {j.parent}")
        if j.parent == p.id:
            raise CycleDetected(f"part {p.id} is its own parent")
        d = np.asarray(j.axis_direction, dtype=float)
        if d.shape != (3,) or not np.isfinite(d).all() or abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise SchemaError(f"{path}.joint.axis_direction", f"must be a unit 3-vector, got {list(j.axis_direction)}")
        o = np.asarray(j.axis_origin, dtype=float)
        if o.shape != (3,) or not np.isfinite(o).all() or (o < 0).any() or (o > R).any():
            raise SchemaError(f"{path}.joint.axis_origin", f"must lie in [0, {R}]^3, got {list(j.axis_origin)}")
        if j.type == "fixed":
            if j.range is not None:
                raise InvalidRange(p.id, "fixed joints take no range")
            continue
        if j.range is None or len(j.range) != 2 or not all(_finite(v) for v in j.range):
            raise InvalidRange(p.id, f"{j.type} joint needs a finite [lo, hi] range")
        lo, hi = j.range
        if not lo < hi:
            raise InvalidRange(p.id, f"range [{lo}, {hi}] is not increasing")
        if j.type == "revolute" and (lo < -TWO_PI - _ANGLE_EPS or hi > TWO_PI + _ANGLE_EPS):
            raise InvalidRange(p.id, f"revolute range [{lo}, {hi}] exceeds [-2pi, 2pi]")

    roots = [p.id for p in spec.parts if p.joint is None]
    if len(roots) > 1:
        raise MultipleRoots(f"parts {roots} have no joint")
    if not roots:
        # every part has a parent, so following parents must loop
        raise CycleDetected(_find_cycle(spec))
    if spec.root_part != roots[0]:
        raise SchemaError("$.root_part", f"root_part is {spec.root_part} but part {roots[0]} is the jointless part")
    reached = set(spec.topological_order())
    missing = known - reached
    if missing:
        raise CycleDetected(_find_cycle(spec, start=min(missing)))


def _find_cycle(spec: PhysicalAssetSpec, start: int | None = None) -> str:
    parent = {p.id: p.joint.parent for p in spec.parts if p.joint is not None}
    node = start if start is not None else min(parent)
    seen = []
    while node not in seen:
        seen.append(node)
        node = parent[node]
    cyc = seen[seen.index(node):] + [node]
    return "cycle through parts " + " -> ".join(map(str, cyc))


# --- JSON ------------------------------------------------------------------------

def _req(obj: dict, key: str, path: str, types, type_name: str):
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected object")
    if key not in obj:
        raise SchemaError(f"{path}.{key}", "missing field")
    v = obj[key]
    if not isinstance(v, types) or (isinstance(v, bool) and bool not in (types if isinstance(types, tuple) else (types,))):
        raise SchemaError(f"{path}.{key}", f"expected {type_name}, got {type(v).__name__}")
    return v


def _vec3(v, path: str) -> tuple[float, float, float]:
    if not isinstance(v, list) or len(v) != 3 or not all(_finite(x) for x in v):
        raise SchemaError(path, "expected three numbers")
    return tuple(float(x) for x in v)


_NUM = (int, float)


def _parse_joint(obj, path: str, part_id: int) -> JointSpec | None:
    if obj is None:
        return None
    jtype = _req(obj, "type", path, str, "string")
    parent = _req(obj, "parent", path, int, "integer")
    direction = _vec3(_req(obj, "axis_direction", path, list, "array"), f"{path}.axis_direction")
    origin = _vec3(_req(obj, "axis_origin", path, list, "array"), f"{path}.axis_origin")
    rng = obj.get("range")
    if rng is not None:
        if not isinstance(rng, list) or len(rng) != 2 or not all(isinstance(x, _NUM) and not isinstance(x, bool) for x in rng):
            raise SchemaError(f"{path}.range", "expected [lo, hi]")
        rng = (float(rng[0]), float(rng[1]))
        degrees = obj.get("degrees", False)
        if not isinstance(degrees, bool):
            raise SchemaError(f"{path}.degrees", "expected boolean")
        if degrees:
            if jtype != "revolute":
                raise SchemaError(f"{path}.degrees", "only revolute ranges can be given in degrees")
            rng = (math.radians(rng[0]), math.radians(rng[1]))
    return JointSpec(jtype, parent, direction, origin, rng)


def spec_from_dict(doc: dict) -> PhysicalAssetSpec:
    name = _req(doc, "name", "$", str, "string")
    description = doc.get("description", "")
    if not isinstance(description, str):
        raise SchemaError("$.description", "expected string")
    scale = _vec3(_req(doc, "absolute_scale", "$", list, "array"), "$.absolute_scale")
    R = _req(doc, "resolution", "$", int, "integer")
    root = _req(doc, "root_part", "$", int, "integer")
    raw_parts = _req(doc, "parts", "$", list, "array")
    parts = []
    for i, pd in enumerate(raw_parts):
        path = f"$.parts[{i}]"
        pid = _req(pd, "id", path, int, "integer")
        geometry = _req(pd, "geometry", path, str, "string")
        material = _req(pd, "material", path, str, "string")
        density = _req(pd, "density", path, _NUM, "number")
        afford = _req(pd, "affordance", path, list, "array")
        if not all(isinstance(a, str) for a in afford):
            raise SchemaError(f"{path}.affordance", "expected array of strings")
        pdesc = pd.get("description", "")
        if not isinstance(pdesc, str):
            raise SchemaError(f"{path}.description", "expected string")
        if "joint" not in pd:
            raise SchemaError(f"{path}.joint", "missing field (use null for the root)")
        joint = _parse_joint(pd["joint"], f"{path}.joint", pid)
        parts.append(
            PartSpec(
                id=pid,
                geometry=codec.TokenString(geometry, R),
                description=pdesc,
                material=material,
                density=float(density),
                affordance=tuple(afford),
                joint=joint,
            )
        )
    spec = PhysicalAssetSpec(
        name=name,
        description=description,
        absolute_scale=scale,
        resolution=R,
        parts=tuple(parts),
        root_part=root,
    )
    validate(spec)
    return spec


def parse_spec(text: str) -> PhysicalAssetSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from exc
    return spec_from_dict(doc)


def spec_to_dict(spec: PhysicalAssetSpec) -> dict:
    parts = []
    for p in spec.parts:
        joint = None
        if p.joint is not None:
            j = p.joint
            joint = {
                "type": j.type,
                "parent": j.parent,
                "axis_direction": list(j.axis_direction),
                "axis_origin": list(j.axis_origin),
                "range": list(j.range) if j.range is not None else None,
            }
        parts.append(
            {
                "id": p.id,
                "description": p.description,
                "material": p.material,
                "density": p.density,
                "affordance": list(p.affordance),
                "geometry": p.geometry.text,
                "joint": joint,
            }
        )
    return {
        "name": spec.name,
        "description": spec.description,
        "absolute_scale": list(spec.absolute_scale),
        "resolution": spec.resolution,
        "root_part": spec.root_part,
        "parts": parts,
    }


def emit_spec(spec: PhysicalAssetSpec) -> str:
    """Canonical JSON: fixed key order, two-space indent, trailing newline."""
    validate(spec)
    return json.dumps(spec_to_dict(spec), indent=2, allow_nan=False, ensure_ascii=False) + "\n"


def load_spec(path) -> PhysicalAssetSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read())


def part_mass(spec: PhysicalAssetSpec, pid: int) -> float:
    """density x occupied voxels x metric voxel volume (kg)."""
    part = spec.part(pid)
    return part.density * len(spec.grid(pid)) * spec.voxel_volume()
