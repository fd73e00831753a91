"""URDF / MJCF export of a physical asset, plus re-parsing and bundle checks.

Bundle layout (all paths relative to the bundle directory)::

    manifest.json        asset name, schema version, file list with sha256
    spec.json            the asset description the bundle was built from
    model.urdf           URDF 1.0 subset
    model.xml            MJCF subset
    meshes/part_<id>.obj per-part meshes in their link frame (metres)
    meshes/merged.obj    all parts at rest, world frame

Every link frame sits at its joint's axis origin (world rest pose, no
rotation); the root link frame is the grid origin. Lengths are metres,
angles radians. Lengths, angles and axis components are written with six
decimals; masses and inertias in shortest round-trip form so small parts do
not round to zero and heavy ones lose nothing.
"""

from __future__ import annotations

import hashlib
import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kinematics, schema
from .mesh_io import TriMesh, format_obj, merge_meshes, parse_obj
from .schema import PhysicalAssetSpec
from .segmentation import segment_mesh, split_parts
from .voxel import PartLabeledGrid, cuboid_mesh

SCHEMA_VERSION = "1.0"
URDF_FILE = "model.urdf"
MJCF_FILE = "model.xml"
SPEC_FILE = "spec.json"
MANIFEST_FILE = "manifest.json"
MERGED_MESH = "meshes/merged.obj"
JOINT_EFFORT = 100.0
JOINT_VELOCITY = 1.0
FULL_TURN_TOL = 1e-9


class ExportError(ValueError):
    pass


class UnsupportedFeature(ExportError):
    pass


def part_mesh_path(pid: int) -> str:
    return f"meshes/part_{pid}.obj"


def _f(x: float) -> str:
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def _g(x: float) -> str:
    return repr(float(x))


def _vec(v) -> str:
    return " ".join(_f(float(c)) for c in v)


def is_continuous(wj: kinematics.WorldJoint) -> bool:
    return (
        wj.type == "revolute"
        and abs(wj.range[0] + schema.TWO_PI) <= FULL_TURN_TOL
        and abs(wj.range[1] - schema.TWO_PI) <= FULL_TURN_TOL
    )


@dataclass
class PartInertial:
    mass: float
    center: np.ndarray  # world, rest pose
    diagonal: np.ndarray


def part_inertial(spec: PhysicalAssetSpec, pid: int) -> PartInertial:
    """Solid cuboid over the part's voxel bounding box."""
    cells = spec.grid(pid).cells
    lo = kinematics.voxel_to_world(spec, cells.min(0))
    hi = kinematics.voxel_to_world(spec, cells.max(0) + 1)
    a, b, c = hi - lo
    m = schema.part_mass(spec, pid)
    diag = np.array([b * b + c * c, a * a + c * c, a * a + b * b]) * m / 12.0
    return PartInertial(m, (lo + hi) / 2.0, diag)


def label_grid(spec: PhysicalAssetSpec) -> tuple[PartLabeledGrid, list[int]]:
    """Spec geometry as one labeled grid; label k is ``part_ids[k]``."""
    from .voxel import label_parts

    ids = sorted(p.id for p in spec.parts)
    return label_parts([spec.grid(pid) for pid in ids]), ids


def link_origins(spec: PhysicalAssetSpec) -> dict[int, np.ndarray]:
    """World rest-pose origin of every link frame, rounded to the written precision."""
    out = {spec.root_part: np.zeros(3)}
    for pid, wj in kinematics.world_joints(spec).items():
        out[pid] = np.round(wj.axis_origin, 6)
    return out


@dataclass
class ExportBundle:
    name: str
    urdf: str
    mjcf: str
    spec_json: str
    part_meshes: dict[int, TriMesh]
    merged: TriMesh
    warnings: list[str] = field(default_factory=list)

    def files(self) -> dict[str, bytes]:
        """Relative path -> content, in a fixed order (manifest excluded)."""
        out = {
            SPEC_FILE: self.spec_json.encode("utf-8"),
            URDF_FILE: self.urdf.encode("utf-8"),
            MJCF_FILE: self.mjcf.encode("utf-8"),
        }
        for pid in sorted(self.part_meshes):
            out[part_mesh_path(pid)] = format_obj(self.part_meshes[pid]).encode("utf-8")
        out[MERGED_MESH] = format_obj(self.merged).encode("utf-8")
        return out

    @property
    def manifest(self) -> dict:
        roles = {SPEC_FILE: "spec", URDF_FILE: "urdf", MJCF_FILE: "mjcf", MERGED_MESH: "merged_mesh"}
        entries = []
        for path, data in self.files().items():
            entries.append({"path": path, "role": roles.get(path, "part_mesh"), "sha256": hashlib.sha256(data).hexdigest()})
        return {"schema_version": SCHEMA_VERSION, "asset": self.name, "files": entries}

    def manifest_json(self) -> str:
        return json.dumps(self.manifest, indent=2) + "\n"

    def write(self, directory) -> Path:
        d = Path(directory)
        (d / "meshes").mkdir(parents=True, exist_ok=True)
        for path, data in self.files().items():
            (d / path).write_bytes(data)
        (d / MANIFEST_FILE).write_text(self.manifest_json(), encoding="utf-8")
        return d


def _part_geometry(spec: PhysicalAssetSpec, mesh: TriMesh | None, warnings: list[str]) -> dict[int, TriMesh]:
    """Per-part meshes in the [0,1]^3 grid frame.

    Mesh labels, when present, are part ids; unlabeled meshes are segmented.
    """
    ids = sorted(p.id for p in spec.parts)
    if mesh is None:
        return {pid: cuboid_mesh(spec.grid(pid)) for pid in ids}
    if mesh.part_labels is None:
        grid, ids = label_grid(spec)
        positions = segment_mesh(mesh, grid).part_labels
    else:
        unknown = set(np.unique(mesh.part_labels).tolist()) - set(ids)
        if unknown:
            raise ExportError(f"mesh labels {sorted(unknown)} are not part ids of {spec.name!r}")
        positions = np.searchsorted(ids, mesh.part_labels)
    out = {}
    for pm in split_parts(mesh.with_labels(positions), len(ids)):
        pid = ids[pm.part_id]
        if pm.empty:
            warnings.append(f"part {pid} received no mesh faces; using its voxel cuboids")
            out[pid] = cuboid_mesh(spec.grid(pid))
        else:
            out[pid] = TriMesh(pm.mesh.vertices, pm.mesh.faces)
    return out


def export(spec: PhysicalAssetSpec, mesh: TriMesh | None = None) -> ExportBundle:
    """Build the bundle for ``spec``.

    ``mesh`` is optional fine geometry in the grid frame, labeled with part
    ids or left unlabeled to be segmented against the spec's voxels. Without
    it each part is represented by a greedy box cover of its voxels.
    """
    schema.validate(spec)
    warnings: list[str] = []
    scale = np.asarray(spec.absolute_scale, dtype=np.float64)
    origins = link_origins(spec)
    grid_meshes = _part_geometry(spec, mesh, warnings)
    world = {pid: m.transformed(scale, 0.0) for pid, m in grid_meshes.items()}
    local = {pid: world[pid].transformed(1.0, -origins[pid]) for pid in world}
    ids = sorted(world)
    merged = merge_meshes([world[pid] for pid in ids])
    order = spec.topological_order()
    inertials = {pid: part_inertial(spec, pid) for pid in order}
    joints = kinematics.world_joints(spec)
    urdf = _urdf(spec, order, origins, inertials, joints)
    mjcf = _mjcf(spec, order, origins, inertials, joints)
    return ExportBundle(spec.name, urdf, mjcf, schema.emit_spec(spec), local, merged, warnings)


def _xml_text(root: ET.Element) -> str:
    ET.indent(root, space="  ")
    return '<?xml version="1.0" encoding="utf-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def _urdf(spec, order, origins, inertials, joints) -> str:
    robot = ET.Element("robot", name=spec.name)
    for pid in order:
        link = ET.SubElement(robot, "link", name=f"part_{pid}")
        ine = inertials[pid]
        inertial = ET.SubElement(link, "inertial")
        ET.SubElement(inertial, "origin", xyz=_vec(ine.center - origins[pid]), rpy="0.000000 0.000000 0.000000")
        ET.SubElement(inertial, "mass", value=_g(ine.mass))
        ixx, iyy, izz = ine.diagonal
        ET.SubElement(inertial, "inertia", ixx=_g(ixx), ixy="0", ixz="0", iyy=_g(iyy), iyz="0", izz=_g(izz))
        for tag in ("visual", "collision"):
            el = ET.SubElement(link, tag)
            ET.SubElement(el, "origin", xyz="0.000000 0.000000 0.000000", rpy="0.000000 0.000000 0.000000")
            geom = ET.SubElement(el, "geometry")
            ET.SubElement(geom, "mesh", filename=part_mesh_path(pid))
    for pid in order:
        if pid == spec.root_part:
            continue
        wj = joints[pid]
        jtype = "continuous" if is_continuous(wj) else wj.type
        joint = ET.SubElement(robot, "joint", name=f"joint_{pid}", type=jtype)
        ET.SubElement(joint, "parent", link=f"part_{wj.parent}")
        ET.SubElement(joint, "child", link=f"part_{pid}")
        ET.SubElement(joint, "origin", xyz=_vec(origins[pid] - origins[wj.parent]), rpy="0.000000 0.000000 0.000000")
        if wj.type != "fixed":
            ET.SubElement(joint, "axis", xyz=_vec(wj.axis_direction))
        if wj.type != "fixed" and jtype != "continuous":
            ET.SubElement(joint, "limit", lower=_f(wj.range[0]), upper=_f(wj.range[1]),
                          effort=_f(JOINT_EFFORT), velocity=_f(JOINT_VELOCITY))
    return _xml_text(robot)


def _mjcf(spec, order, origins, inertials, joints) -> str:
    root = ET.Element("mujoco", model=spec.name)
    ET.SubElement(root, "compiler", angle="radian")
    asset = ET.SubElement(root, "asset")
    for pid in sorted(origins):
        ET.SubElement(asset, "mesh", name=f"part_{pid}", file=part_mesh_path(pid))
    world = ET.SubElement(root, "worldbody")
    bodies = {}

    def add(pid: int, parent_el: ET.Element):
        parent_origin = origins[joints[pid].parent] if pid in joints else np.zeros(3)
        body = ET.SubElement(parent_el, "body", name=f"part_{pid}", pos=_vec(origins[pid] - parent_origin))
        ine = inertials[pid]
        ET.SubElement(body, "inertial", pos=_vec(ine.center - origins[pid]), mass=_g(ine.mass),
                      diaginertia=" ".join(_g(v) for v in ine.diagonal))
        if pid in joints and joints[pid].type != "fixed":
            wj = joints[pid]
            attrs = {"name": f"joint_{pid}", "type": "hinge" if wj.type == "revolute" else "slide",
                     "pos": "0.000000 0.000000 0.000000", "axis": _vec(wj.axis_direction)}
            if is_continuous(wj):
                attrs["limited"] = "false"
            else:
                attrs["limited"] = "true"
                attrs["range"] = f"{_f(wj.range[0])} {_f(wj.range[1])}"
            ET.SubElement(body, "joint", attrs)
        ET.SubElement(body, "geom", type="mesh", mesh=f"part_{pid}")
        bodies[pid] = body
        for child in sorted(spec.children(pid)):
            add(child, body)

    add(spec.root_part, world)
    return _xml_text(root)


# --- re-parsing ----------------------------------------------------------------------

@dataclass
class LinkSummary:
    name: str
    mass: float
    inertia: tuple[float, float, float]
    meshes: list[str]


@dataclass
class JointSummary:
    name: str
    type: str
    parent: str
    child: str
    origin: np.ndarray  # world frame
    axis: np.ndarray | None
    range: tuple[float, float] | None


@dataclass
class KinematicSummary:
    name: str
    links: dict[str, LinkSummary]
    joints: dict[str, JointSummary]

    def joint_for_part(self, pid: int) -> JointSummary:
        return self.joints[f"joint_{pid}"]

    def mass_of_part(self, pid: int) -> float:
        return self.links[f"part_{pid}"].mass


def _floats(text: str | None, n: int, what: str) -> np.ndarray:
    try:
        v = np.array([float(x) for x in (text or "").split()])
    except ValueError:
        raise ExportError(f"{what}: non-numeric value {text!r}") from None
    if v.shape != (n,):
        raise ExportError(f"{what}: expected {n} numbers, got {text!r}")
    return v


def _origin(el: ET.Element | None, what: str) -> np.ndarray:
    if el is None:
        return np.zeros(3)
    rpy = _floats(el.get("rpy", "0 0 0"), 3, f"{what} rpy")
    if np.any(rpy != 0):
        raise UnsupportedFeature(f"{what}: rotated origins are not supported")
    return _floats(el.get("xyz", "0 0 0"), 3, f"{what} xyz")


_URDF_LINK_CHILDREN = {"inertial", "visual", "collision"}
_URDF_JOINT_CHILDREN = {"parent", "child", "origin", "axis", "limit"}


def reparse_urdf(text: str) -> KinematicSummary:
    """Read back the URDF subset :func:`export` writes."""
    try:
        robot = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ExportError(f"malformed URDF: {exc}") from exc
    if robot.tag != "robot":
        raise ExportError(f"root element is <{robot.tag}>, expected <robot>")
    links: dict[str, LinkSummary] = {}
    raw_joints = []
    for el in robot:
        if el.tag == "link":
            name = el.get("name")
            extra = {c.tag for c in el} - _URDF_LINK_CHILDREN
            if extra:
                raise UnsupportedFeature(f"link {name}: unsupported elements {sorted(extra)}")
            mass, inertia = 0.0, (0.0, 0.0, 0.0)
            ine = el.find("inertial")
            if ine is not None:
                m = ine.find("mass")
                mass = float(m.get("value")) if m is not None else 0.0
                it = ine.find("inertia")
                if it is not None:
                    if any(float(it.get(k, "0")) != 0 for k in ("ixy", "ixz", "iyz")):
                        raise UnsupportedFeature(f"link {name}: off-diagonal inertia")
                    inertia = tuple(float(it.get(k)) for k in ("ixx", "iyy", "izz"))
            meshes = []
            for tag in ("visual", "collision"):
                for g in el.findall(tag):
                    _origin(g.find("origin"), f"link {name} {tag}")
                    geom = g.find("geometry")
                    shapes = list(geom) if geom is not None else []
                    for s in shapes:
                        if s.tag != "mesh":
                            raise UnsupportedFeature(f"link {name}: geometry <{s.tag}>")
                        meshes.append(s.get("filename"))
            links[name] = LinkSummary(name, mass, inertia, meshes)
        elif el.tag == "joint":
            raw_joints.append(el)
        else:
            raise UnsupportedFeature(f"unsupported top-level element <{el.tag}>")

    parent_of, joint_info = {}, {}
    for el in raw_joints:
        name, jtype = el.get("name"), el.get("type")
        if jtype not in ("revolute", "continuous", "prismatic", "fixed"):
            raise UnsupportedFeature(f"joint {name}: type {jtype!r}")
        extra = {c.tag for c in el} - _URDF_JOINT_CHILDREN
        if extra:
            raise UnsupportedFeature(f"joint {name}: unsupported elements {sorted(extra)}")
        parent = el.find("parent").get("link")
        child = el.find("child").get("link")
        if parent not in links or child not in links:
            raise ExportError(f"joint {name} references unknown link")
        offset = _origin(el.find("origin"), f"joint {name}")
        axis = None
        rng = None
        if jtype != "fixed":
            ax = el.find("axis")
            axis = _floats(ax.get("xyz") if ax is not None else "1 0 0", 3, f"joint {name} axis")
        if jtype == "continuous":
            jtype, rng = "revolute", (-schema.TWO_PI, schema.TWO_PI)
        elif jtype in ("revolute", "prismatic"):
            lim = el.find("limit")
            if lim is None:
                raise ExportError(f"joint {name}: missing <limit>")
            rng = (float(lim.get("lower", "0")), float(lim.get("upper", "0")))
        if child in parent_of:
            raise ExportError(f"link {child} has two parent joints")
        parent_of[child] = parent
        joint_info[name] = (jtype, parent, child, offset, axis, rng)

    # accumulate joint offsets from the root down to world-frame origins
    world_origin: dict[str, np.ndarray] = {}

    def resolve(link: str, depth: int = 0) -> np.ndarray:
        if link in world_origin:
            return world_origin[link]
        if depth > len(links):
            raise ExportError("joint graph contains a cycle")
        if link not in parent_of:
            world_origin[link] = np.zeros(3)
        else:
            jname = next(n for n, v in joint_info.items() if v[2] == link)
            world_origin[link] = resolve(parent_of[link], depth + 1) + joint_info[jname][3]
        return world_origin[link]

    joints = {}
    for name, (jtype, parent, child, offset, axis, rng) in joint_info.items():
        joints[name] = JointSummary(name, jtype, parent, child, resolve(child), axis, rng)
    return KinematicSummary(robot.get("name", ""), links, joints)


def reparse_mjcf_joints(text: str) -> dict[str, tuple[str, np.ndarray, tuple[float, float]]]:
    """Joint name -> (type, axis, range) from the MJCF subset, URDF vocabulary."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ExportError(f"malformed MJCF: {exc}") from exc
    out = {}
    for j in root.iter("joint"):
        jt = j.get("type", "hinge")
        if jt not in ("hinge", "slide"):
            raise UnsupportedFeature(f"MJCF joint type {jt!r}")
        axis = _floats(j.get("axis", "0 0 1"), 3, f"joint {j.get('name')} axis")
        if j.get("limited") == "false":
            rng = (-schema.TWO_PI, schema.TWO_PI)
        else:
            rng = tuple(_floats(j.get("range"), 2, f"joint {j.get('name')} range"))
        out[j.get("name")] = ("revolute" if jt == "hinge" else "prismatic", axis, rng)
    return out


def compare_with_spec(summary: KinematicSummary, spec: PhysicalAssetSpec, tol: float = 1e-5) -> list[str]:
    """Differences between a re-parsed URDF and the spec's world-frame values."""
    problems = []
    if len(summary.links) != len(spec.parts):
        problems.append(f"{len(summary.links)} links for {len(spec.parts)} parts")
    if len(summary.joints) != len(spec.parts) - 1:
        problems.append(f"{len(summary.joints)} joints for {len(spec.parts)} parts")
    for p in spec.parts:
        name = f"part_{p.id}"
        if name not in summary.links:
            problems.append(f"missing link {name}")
            continue
        m = schema.part_mass(spec, p.id)
        if abs(summary.links[name].mass - m) > tol * max(1.0, abs(m)):
            problems.append(f"{name}: mass {summary.links[name].mass} != {m}")
    for pid, wj in kinematics.world_joints(spec).items():
        name = f"joint_{pid}"
        js = summary.joints.get(name)
        if js is None:
            problems.append(f"missing joint {name}")
            continue
        if js.type != wj.type:
            problems.append(f"{name}: type {js.type} != {wj.type}")
        if js.parent != f"part_{wj.parent}" or js.child != f"part_{pid}":
            problems.append(f"{name}: connects {js.parent}->{js.child}")
        if np.abs(js.origin - wj.axis_origin).max() > tol:
            problems.append(f"{name}: origin {js.origin.tolist()} != {wj.axis_origin.tolist()}")
        if wj.type != "fixed":
            if np.abs(js.axis - wj.axis_direction).max() > tol:
                problems.append(f"{name}: axis {js.axis.tolist()} != {wj.axis_direction.tolist()}")
            if max(abs(js.range[0] - wj.range[0]), abs(js.range[1] - wj.range[1])) > tol:
                problems.append(f"{name}: range {js.range} != {wj.range}")
    return problems


# --- bundle validation -------------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    failures: list[str] = field(default_factory=list)


@dataclass
class ValidationReport:
    checks: list[Check]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failure_kinds(self) -> set[str]:
        return {f.split(":", 1)[0] for c in self.checks for f in c.failures}

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": [{"name": c.name, "passed": c.passed, "failures": c.failures} for c in self.checks]}

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            out.append(f"{'PASS' if c.passed else 'FAIL'} {c.name}")
            out.extend(f"    {f}" for f in c.failures)
        return out


def _run(name: str, fn) -> Check:
    try:
        failures = fn()
    except Exception as exc:  # a crashing check is a failed check, not a crashed report
        failures = [f"{type(exc).__name__}: {exc}"]
    return Check(name, not failures, failures)


def validate_bundle(directory, fk_samples: int = 5) -> ValidationReport:
    """Pre-flight checks on a bundle written to disk."""
    d = Path(directory)
    checks: list[Check] = []
    state: dict = {}

    def manifest():
        state["manifest"] = json.loads((d / MANIFEST_FILE).read_text(encoding="utf-8"))
        if state["manifest"].get("schema_version") != SCHEMA_VERSION:
            return [f"SchemaVersion: unsupported {state['manifest'].get('schema_version')!r}"]
        return []

    checks.append(_run("manifest", manifest))
    entries = state.get("manifest", {}).get("files", [])

    def files_exist():
        return [f"MissingFile: {e['path']}" for e in entries if not (d / e["path"]).is_file()]

    def checksums():
        bad = []
        for e in entries:
            p = d / e["path"]
            if p.is_file() and hashlib.sha256(p.read_bytes()).hexdigest() != e["sha256"]:
                bad.append(f"ChecksumMismatch: {e['path']}")
        return bad

    checks.append(_run("files_exist", files_exist))
    checks.append(_run("checksums", checksums))

    def xml_wellformed():
        bad = []
        for fname in (URDF_FILE, MJCF_FILE):
            try:
                state[fname] = (d / fname).read_text(encoding="utf-8")
                ET.fromstring(state[fname])
            except (OSError, ET.ParseError) as exc:
                bad.append(f"MalformedXML: {fname}: {exc}")
        return bad

    checks.append(_run("xml_wellformed", xml_wellformed))

    def mesh_references():
        listed = {e["path"] for e in entries}
        refs = set()
        urdf = ET.fromstring(state[URDF_FILE])
        refs |= {m.get("filename") for m in urdf.iter("mesh")}
        mjcf = ET.fromstring(state[MJCF_FILE])
        refs |= {m.get("file") for m in mjcf.iter("mesh")}
        bad = []
        for r in sorted(refs):
            if r not in listed:
                bad.append(f"UnlistedMesh: {r}")
            if not (d / r).is_file():
                bad.append(f"MissingFile: {r}")
            else:
                try:
                    parse_obj((d / r).read_text(encoding="utf-8"))
                except ValueError as exc:
                    bad.append(f"BadMesh: {r}: {exc}")
        return bad

    checks.append(_run("mesh_references", mesh_references))

    def spec_and_structure():
        spec = schema.load_spec(d / SPEC_FILE)
        state["spec"] = spec
        summary = reparse_urdf(state[URDF_FILE])
        state["summary"] = summary
        return [f"SpecMismatch: {p}" for p in compare_with_spec(summary, spec)]

    checks.append(_run("urdf_matches_spec", spec_and_structure))

    def joint_limits():
        bad = []
        for j in state["summary"].joints.values():
            if j.range is not None and not (math.isfinite(j.range[0]) and math.isfinite(j.range[1]) and j.range[0] < j.range[1]):
                bad.append(f"InvalidLimit: {j.name} {j.range}")
        for l in state["summary"].links.values():
            if not l.mass > 0 or not all(v > 0 for v in l.inertia):
                bad.append(f"InvalidInertial: {l.name}")
        return bad

    checks.append(_run("joint_limits", joint_limits))

    def agreement():
        mj = reparse_mjcf_joints(state[MJCF_FILE])
        bad = []
        movable = {n: j for n, j in state["summary"].joints.items() if j.type != "fixed"}
        if set(mj) != set(movable):
            bad.append(f"JointSetMismatch: urdf {sorted(movable)} vs mjcf {sorted(mj)}")
        for n, j in movable.items():
            if n not in mj:
                continue
            jt, axis, rng = mj[n]
            if jt != j.type or np.abs(axis - j.axis).max() > 1e-6 or max(abs(rng[0] - j.range[0]), abs(rng[1] - j.range[1])) > 1e-6:
                bad.append(f"JointDisagreement: {n}")
        return bad

    checks.append(_run("urdf_mjcf_agreement", agreement))

    def fk_sweep():
        spec = state["spec"]
        movable = [p.id for p in spec.parts if p.joint is not None and p.joint.type != "fixed"]
        rest = {}
        for pid in movable:
            lo, hi = kinematics.world_joint(spec, pid).range
            rest[pid] = min(max(0.0, lo), hi)
        bad = []
        configs = [dict(rest)]
        for pid in movable:
            for v in kinematics.sample_range(spec, pid, fk_samples):
                q = dict(rest)
                q[pid] = v
                configs.append(q)
        if movable:
            configs.append({pid: kinematics.sample_range(spec, pid, fk_samples)[-1] for pid in movable})
        for q in configs:
            poses = kinematics.forward_kinematics(spec, q)
            for pid, T in poses.items():
                if not np.isfinite(T).all():
                    bad.append(f"NonFinitePose: part {pid} at {q}")
                elif abs(np.linalg.det(T[:3, :3]) - 1.0) > 1e-9:
                    bad.append(f"NonRigidPose: part {pid} at {q}")
        return bad

    checks.append(_run("fk_sweep", fk_sweep))
    return ValidationReport(checks)
