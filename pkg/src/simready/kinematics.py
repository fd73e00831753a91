"""Voxel-frame to metric conversion and forward kinematics over the part tree.

Rest pose (all joint values zero) is the configuration the geometry was
voxelized in, so every pose is a rigid motion applied to rest-frame points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schema import PhysicalAssetSpec


class KinematicsError(ValueError):
    pass


class JointOutOfRange(KinematicsError):
    pass


class MissingJointValue(KinematicsError):
    pass


@dataclass(frozen=True)
class WorldJoint:
    type: str
    parent: int
    child: int
    axis_direction: np.ndarray
    axis_origin: np.ndarray
    range: tuple[float, float] | None


def voxel_to_world(spec: PhysicalAssetSpec, point) -> np.ndarray:
    """``(point / R) * absolute_scale``, component-wise; works on (..., 3) arrays."""
    p = np.asarray(point, dtype=np.float64)
    return p / spec.resolution * np.asarray(spec.absolute_scale, dtype=np.float64)


def cell_center_world(spec: PhysicalAssetSpec, cell) -> np.ndarray:
    return voxel_to_world(spec, np.asarray(cell, dtype=np.float64) + 0.5)


def world_joint(spec: PhysicalAssetSpec, pid: int) -> WorldJoint:
    part = spec.part(pid)
    j = part.joint
    if j is None:
        raise KinematicsError(f"part {pid} is the root and has no joint")
    scale = np.asarray(spec.absolute_scale, dtype=np.float64)
    d = np.asarray(j.axis_direction, dtype=np.float64)
    scaled = scale * d
    norm = float(np.linalg.norm(scaled))
    direction = scaled / norm
    origin = voxel_to_world(spec, j.axis_origin)
    rng = None
    if j.type == "revolute":
        rng = (float(j.range[0]), float(j.range[1]))
    elif j.type == "prismatic":
        k = norm / spec.resolution
        rng = (j.range[0] * k, j.range[1] * k)
    return WorldJoint(j.type, j.parent, pid, direction, origin, rng)


def world_joints(spec: PhysicalAssetSpec) -> dict[int, WorldJoint]:
    return {p.id: world_joint(spec, p.id) for p in spec.parts if p.joint is not None}


def rotation_about(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit axis."""
    x, y, z = np.asarray(axis, dtype=np.float64)
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    return np.array(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
    )


def joint_motion(jtype: str, axis, origin, q: float) -> np.ndarray:
    """4x4 rigid transform of a joint at value ``q`` (rest frame)."""
    T = np.eye(4)
    if jtype == "revolute":
        Rm = rotation_about(axis, q)
        o = np.asarray(origin, dtype=np.float64)
        T[:3, :3] = Rm
        T[:3, 3] = o - Rm @ o
    elif jtype == "prismatic":
        T[:3, 3] = q * np.asarray(axis, dtype=np.float64)
    return T


class PoseSet(dict):
    """part id -> 4x4 homogeneous rigid transform (metres or voxel units)."""

    def apply(self, pid: int, points) -> np.ndarray:
        T = self[pid]
        p = np.asarray(points, dtype=np.float64)
        return p @ T[:3, :3].T + T[:3, 3]


def _joint_params(spec: PhysicalAssetSpec, frame: str):
    if frame == "world":
        return {pid: (wj.type, wj.parent, wj.axis_direction, wj.axis_origin, wj.range)
                for pid, wj in world_joints(spec).items()}
    if frame == "voxel":
        out = {}
        for p in spec.parts:
            j = p.joint
            if j is not None:
                out[p.id] = (j.type, j.parent, np.asarray(j.axis_direction, float), np.asarray(j.axis_origin, float), j.range)
        return out
    raise KinematicsError(f"unknown frame {frame!r}")


def forward_kinematics(spec: PhysicalAssetSpec, q: dict[int, float], frame: str = "world") -> PoseSet:
    """Pose of every part given joint values keyed by child part id.

    In the world frame values are radians / metres; in the voxel frame
    prismatic values are voxel units. Values outside a joint's range raise.
    """
    joints = _joint_params(spec, frame)
    for pid, (jtype, _, _, _, rng) in joints.items():
        if jtype == "fixed":
            continue
        if pid not in q:
            raise MissingJointValue(f"no value for joint of part {pid}")
        v = float(q[pid])
        if not np.isfinite(v) or v < rng[0] or v > rng[1]:
            raise JointOutOfRange(f"part {pid}: value {v} outside [{rng[0]}, {rng[1]}]")
    poses = PoseSet()
    for pid in spec.topological_order():
        if pid == spec.root_part:
            poses[pid] = np.eye(4)
            continue
        jtype, parent, axis, origin, _ = joints[pid]
        motion = joint_motion(jtype, axis, origin, float(q.get(pid, 0.0)))
        poses[pid] = poses[parent] @ motion
    return poses


def sample_range(spec: PhysicalAssetSpec, pid: int, n: int) -> list[float]:
    """``n`` evenly spaced world-frame joint values covering [lo, hi]."""
    if n < 2:
        raise KinematicsError(f"need at least 2 samples, got {n}")
    wj = world_joint(spec, pid)
    if wj.type == "fixed":
        raise KinematicsError(f"part {pid} has a fixed joint")
    lo, hi = wj.range
    return np.linspace(lo, hi, n).tolist()
