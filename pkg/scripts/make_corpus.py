"""Generate the checked-in corpus of articulated test objects.

Each object is assembled from finely tessellated boxes and cylinders in
metres and written as ``corpus/<name>/mesh.obj.gz`` (one ``g part_<id>``
group per part) next to ``corpus/<name>/articulation.json``.

    python3 scripts/make_corpus.py [--out corpus] [--faces 30000]

Output is deterministic; rerunning overwrites the files byte for byte.
"""

import argparse
import json
import math
from pathlib import Path

import numpy as np

from simready.mesh_io import TriMesh, merge_meshes, save_mesh


def _grid_face(origin, u, v, nu, nv):
    """Planar patch origin + s*u + t*v split into nu x nv quads (2 triangles each)."""
    s = np.linspace(0.0, 1.0, nu + 1)
    t = np.linspace(0.0, 1.0, nv + 1)
    S, T = np.meshgrid(s, t, indexing="ij")
    verts = origin + S.reshape(-1, 1) * u + T.reshape(-1, 1) * v
    idx = np.arange((nu + 1) * (nv + 1)).reshape(nu + 1, nv + 1)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    faces = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    return TriMesh(verts, faces)


def box(lo, hi, density):
    """Closed box, each side tessellated at about ``density`` quads per metre."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    e = hi - lo
    n = [max(1, int(math.ceil(x * density))) for x in e]
    X, Y, Z = np.eye(3) * e
    sides = [
        _grid_face(lo, Y, Z, n[1], n[2]),
        _grid_face(lo + X, Z, Y, n[2], n[1]),
        _grid_face(lo, Z, X, n[2], n[0]),
        _grid_face(lo + Y, X, Z, n[0], n[2]),
        _grid_face(lo, X, Y, n[0], n[1]),
        _grid_face(lo + Z, Y, X, n[1], n[0]),
    ]
    return merge_meshes(sides)


def cylinder(center, axis, radius, length, density, segments=48):
    """Capped cylinder centred at ``center`` along coordinate axis 0/1/2."""
    rings = max(1, int(math.ceil(length * density)))
    ang = np.linspace(0.0, 2 * math.pi, segments, endpoint=False)
    h = np.linspace(-length / 2, length / 2, rings + 1)
    local = np.zeros(((rings + 1) * segments + 2, 3))
    H, A = np.meshgrid(h, ang, indexing="ij")
    local[:-2] = np.stack([radius * np.cos(A).ravel(), radius * np.sin(A).ravel(), H.ravel()], 1)
    local[-2] = (0, 0, -length / 2)
    local[-1] = (0, 0, length / 2)
    idx = np.arange((rings + 1) * segments).reshape(rings + 1, segments)
    nxt = np.roll(idx, -1, axis=1)
    a, b, c, d = idx[:-1].ravel(), nxt[:-1].ravel(), nxt[1:].ravel(), idx[1:].ravel()
    faces = [np.stack([a, b, c], 1), np.stack([a, c, d], 1)]
    bottom, top = len(local) - 2, len(local) - 1
    faces.append(np.stack([np.full(segments, bottom), nxt[0], idx[0]], 1))
    faces.append(np.stack([np.full(segments, top), idx[-1], nxt[-1]], 1))
    # rotate the local z axis onto the requested coordinate axis
    perm = {2: [0, 1, 2], 0: [2, 0, 1], 1: [1, 2, 0]}[axis]
    verts = local[:, perm] + np.asarray(center, float)
    return TriMesh(verts, np.concatenate(faces))


def part(pid, description, material, density, affordance, joint=None):
    return {"id": pid, "description": description, "material": material, "density": density,
            "affordance": affordance, "joint": joint}


def revolute(parent, axis, origin, lo, hi):
    return {"type": "revolute", "parent": parent, "axis": axis, "origin": origin, "range": [lo, hi], "degrees": True}


def prismatic(parent, axis, origin, lo, hi):
    return {"type": "prismatic", "parent": parent, "axis": axis, "origin": origin, "range": [lo, hi]}


def fixed(parent, origin):
    return {"type": "fixed", "parent": parent, "axis": [0, 0, 1], "origin": origin}


def cabinet(k):
    W, D, H, t = 0.6, 0.45, 0.9, 0.02
    body = [box([0, 0.03, 0], [t, D, H], k), box([W - t, 0.03, 0], [W, D, H], k),
            box([0, D - t, 0], [W, D, H], k), box([0, 0.03, 0], [W, D, t], k),
            box([0, 0.03, H - t], [W, D, H], k), box([t, 0.03, H / 2 - t / 2], [W - t, D - t, H / 2 + t / 2], k)]
    door = [box([0, 0, 0], [W, 0.02, H], k), cylinder([W - 0.06, -0.02, H / 2], 2, 0.012, 0.2, k)]
    parts = [part(0, "cabinet body", "wood", 600, ["support", "store"]),
             part(1, "front door", "wood", 600, ["open", "close"], revolute(0, [0, 0, 1], [0, 0, 0], 0, 100))]
    return parts, [body, door]


def drawer_chest(k):
    W, D, H, t = 0.8, 0.5, 0.7, 0.02
    body = [box([0, 0.03, 0], [t, D, H], k), box([W - t, 0.03, 0], [W, D, H], k),
            box([0, D - t, 0], [W, D, H], k), box([0, 0.03, 0], [W, D, t], k),
            box([0, 0.03, H - t], [W, D, H], k)]
    parts = [part(0, "chest frame", "wood", 650, ["support"])]
    meshes = [body]
    for i in range(3):
        z0 = t + i * (H - 2 * t) / 3 + 0.01
        z1 = z0 + (H - 2 * t) / 3 - 0.02
        front = box([t + 0.01, 0.0, z0], [W - t - 0.01, 0.02, z1], k)
        tray = box([t + 0.03, 0.04, z0 + 0.02], [W - t - 0.03, D - 0.06, z0 + 0.04], k)
        knob = cylinder([W / 2, -0.015, (z0 + z1) / 2], 1, 0.015, 0.03, k)
        meshes.append([front, tray, knob])
        parts.append(part(i + 1, f"drawer {i + 1}", "wood", 650, ["pull", "push"],
                          prismatic(0, [0, -1, 0], [W / 2, 0, (z0 + z1) / 2], 0, 0.35)))
    return parts, meshes


def laptop(k):
    W, D = 0.34, 0.24
    base = [box([0, 0, 0], [W, D, 0.018], k), box([0.02, 0.02, 0.018], [W - 0.02, D / 2, 0.02], k)]
    screen = [box([0, D - 0.008, 0.022], [W, D, 0.022 + D], k)]
    hinge = [0, D, 0.02]
    parts = [part(0, "keyboard base", "aluminum", 2700, ["support", "type"]),
             part(1, "display lid", "aluminum", 2700, ["open", "close"], revolute(0, [1, 0, 0], hinge, -90, 45))]
    return parts, [base, screen]


def storage_box(k):
    W, D, H, t = 0.4, 0.3, 0.25, 0.01
    tub = [box([0, 0, 0], [W, D, t], k), box([0, 0, 0], [t, D, H], k), box([W - t, 0, 0], [W, D, H], k),
           box([0, 0, 0], [W, t, H], k), box([0, D - t, 0], [W, D, H], k)]
    lid = [box([0, 0, H + 0.01], [W, D, H + 0.025], k), cylinder([W / 2, 0.02, H + 0.035], 0, 0.008, 0.1, k)]
    parts = [part(0, "box container", "plastic", 950, ["store"]),
             part(1, "hinged lid", "plastic", 950, ["open", "close"], revolute(0, [-1, 0, 0], [0, D, H + 0.01], 0, 110))]
    return parts, [tub, lid]


def faucet(k):
    base = [cylinder([0, 0, 0.02], 2, 0.035, 0.04, k), cylinder([0, 0, 0.16], 2, 0.02, 0.24, k)]
    spout = [cylinder([0, 0.09, 0.27], 1, 0.015, 0.16, k)]
    handle = [cylinder([0, 0, 0.3], 2, 0.025, 0.03, k), box([-0.01, -0.09, 0.31], [0.01, 0, 0.325], k)]
    parts = [part(0, "faucet body", "steel", 7800, ["support"]),
             part(1, "spout", "steel", 7800, ["pour"], fixed(0, [0, 0.01, 0.27])),
             part(2, "lever handle", "steel", 7800, ["turn"], revolute(0, [0, 0, 1], [0, 0, 0.3], -360, 360))]
    return parts, [base, spout, handle]


def refrigerator(k):
    W, D, H, t = 0.7, 0.65, 1.7, 0.04
    body = [box([0, 0.04, 0], [t, D, H], k), box([W - t, 0.04, 0], [W, D, H], k),
            box([0, D - t, 0], [W, D, H], k), box([0, 0.04, 0], [W, D, t], k),
            box([0, 0.04, H - t], [W, D, H], k), box([t, 0.04, 1.1], [W - t, D - t, 1.14], k)]
    lower = [box([0, 0, 0], [W, 0.035, 1.09], k), cylinder([W - 0.05, -0.02, 0.8], 2, 0.012, 0.4, k)]
    upper = [box([0, 0, 1.11], [W, 0.035, H], k), cylinder([W - 0.05, -0.02, 1.3], 2, 0.012, 0.25, k)]
    parts = [part(0, "cabinet shell", "steel", 1200, ["support"]),
             part(1, "fridge door", "steel", 900, ["open", "close"], revolute(0, [0, 0, 1], [0, 0, 0.5], 0, 120)),
             part(2, "freezer door", "steel", 900, ["open", "close"], revolute(0, [0, 0, 1], [0, 0, 1.4], 0, 120))]
    return parts, [body, lower, upper]


def microwave(k):
    W, D, H, t = 0.5, 0.38, 0.3, 0.015
    body = [box([0, 0.03, 0], [W, D, t], k), box([0, 0.03, H - t], [W, D, H], k),
            box([0, D - t, 0], [W, D, H], k), box([0, 0.03, 0], [t, D, H], k),
            box([W - 0.13, 0.03, 0], [W, D, H], k)]
    door = [box([0, 0, 0.01], [W - 0.14, 0.025, H - 0.01], k)]
    button = [box([W - 0.09, -0.015, 0.05], [W - 0.04, 0.025, 0.08], k)]
    parts = [part(0, "oven housing", "steel", 1500, ["support", "heat"]),
             part(1, "glass door", "glass", 2500, ["open", "close"], revolute(0, [0, 0, -1], [0, 0, 0.15], -100, 0)),
             part(2, "door release button", "plastic", 950, ["press"],
                  prismatic(0, [0, 1, 0], [W - 0.065, -0.01, 0.065], 0, 0.01))]
    return parts, [body, door, button]


def desk_lamp(k):
    base = [cylinder([0, 0, 0.015], 2, 0.09, 0.03, k)]
    lower = [cylinder([0, 0, 0.2], 2, 0.012, 0.34, k)]
    upper = [cylinder([0.17, 0, 0.38], 0, 0.012, 0.3, k)]
    head = [cylinder([0.35, 0, 0.33], 2, 0.05, 0.09, k)]
    parts = [part(0, "weighted base", "iron", 7000, ["support"]),
             part(1, "lower arm", "aluminum", 2700, ["rotate"], revolute(0, [0, 0, 1], [0, 0, 0.03], -180, 180)),
             part(2, "upper arm", "aluminum", 2700, ["tilt"], revolute(1, [0, 1, 0], [0, 0, 0.37], -30, 45)),
             part(3, "lamp shade", "aluminum", 2700, ["tilt", "illuminate"],
                  revolute(2, [0, 1, 0], [0.33, 0, 0.38], -60, 60))]
    return parts, [base, lower, upper, head]


def sliding_window(k):
    W, H, D = 1.0, 1.2, 0.12
    frame = [box([0, 0, 0], [W, D, 0.05], k), box([0, 0, H - 0.05], [W, D, H], k),
             box([0, 0, 0], [0.05, D, H], k), box([W - 0.05, 0, 0], [W, D, H], k)]
    fixed_pane = [box([0.06, 0.07, 0.06], [W - 0.06, 0.09, H / 2 - 0.01], k)]
    sash = [box([0.06, 0.02, H / 2 + 0.01], [W - 0.06, 0.045, H - 0.06], k)]
    parts = [part(0, "window frame", "aluminum", 2700, ["support"]),
             part(1, "fixed pane", "glass", 2500, ["see through"], fixed(0, [W / 2, 0.08, H / 4])),
             part(2, "sliding sash", "glass", 2500, ["slide"], prismatic(0, [0, 0, -1], [W / 2, 0.03, 0.9], 0, 0.5))]
    return parts, [frame, fixed_pane, sash]


def bucket(k):
    r, h = 0.14, 0.3
    shell = [cylinder([0, 0, h / 2], 2, r, h, k, segments=96)]
    ears = [cylinder([r + 0.012, 0, h - 0.03], 0, 0.01, 0.025, k),
            cylinder([-r - 0.012, 0, h - 0.03], 0, 0.01, 0.025, k)]
    handle = [cylinder([0, 0, h + 0.12], 0, 0.008, 2 * r + 0.04, k),
              cylinder([r + 0.03, 0, h + 0.045], 2, 0.008, 0.15, k),
              cylinder([-r - 0.03, 0, h + 0.045], 2, 0.008, 0.15, k)]
    parts = [part(0, "pail", "steel", 7800, ["store", "carry"]),
             part(1, "mounting lugs", "steel", 7800, [], fixed(0, [0, 0, h - 0.03])),
             part(2, "carry handle", "steel", 7800, ["grasp", "lift"],
                  revolute(1, [1, 0, 0], [0, 0, h - 0.03], -90, 90))]
    return parts, [shell, ears, handle]


def toolbox(k):
    W, D, H = 0.45, 0.22, 0.2
    tub = [box([0, 0, 0], [W, D, 0.01], k), box([0, 0, 0], [0.01, D, H], k), box([W - 0.01, 0, 0], [W, D, H], k),
           box([0, 0, 0], [W, 0.01, H], k), box([0, D - 0.01, 0], [W, D, H], k)]
    left = [box([0, 0, H + 0.01], [W / 2 - 0.005, D, H + 0.025], k)]
    right = [box([W / 2 + 0.005, 0, H + 0.01], [W, D, H + 0.025], k)]
    latch = [box([W / 2 - 0.03, -0.02, H - 0.04], [W / 2 + 0.03, -0.005, H], k)]
    parts = [part(0, "tool tray", "steel", 7800, ["store"]),
             part(1, "left lid", "steel", 7800, ["open"], revolute(0, [0, -1, 0], [0, D / 2, H + 0.01], 0, 160)),
             part(2, "right lid", "steel", 7800, ["open"], revolute(0, [0, 1, 0], [W, D / 2, H + 0.01], 0, 160)),
             part(3, "front latch", "steel", 7800, ["press"], prismatic(0, [0, 0, -1], [W / 2, -0.01, H - 0.02], 0, 0.015))]
    return parts, [tub, left, right, latch]


OBJECTS = {
    "cabinet": (cabinet, "single-door storage cabinet"),
    "drawer_chest": (drawer_chest, "three-drawer chest"),
    "laptop": (laptop, "open laptop computer"),
    "storage_box": (storage_box, "storage box with hinged lid"),
    "faucet": (faucet, "kitchen faucet with lever"),
    "refrigerator": (refrigerator, "two-door refrigerator"),
    "microwave": (microwave, "microwave oven"),
    "desk_lamp": (desk_lamp, "articulated desk lamp"),
    "sliding_window": (sliding_window, "vertical sliding window"),
    "bucket": (bucket, "pail with swing handle"),
    "toolbox": (toolbox, "toolbox with twin lids"),
}


def build(name, density):
    fn, description = OBJECTS[name]
    parts, groups = fn(density)
    meshes = [merge_meshes(g) for g in groups]
    mesh = merge_meshes(meshes, labels=[p["id"] for p in parts])
    return mesh, {"name": name, "description": description, "parts": parts}


def build_near(name, target_faces):
    """Bisect the tessellation density until the face count is near ``target_faces``."""
    lo, hi = 1.0, 2000.0
    best = None
    for _ in range(30):
        mid = math.sqrt(lo * hi)
        mesh, art = build(name, mid)
        if best is None or abs(mesh.n_faces - target_faces) < abs(best[0].n_faces - target_faces):
            best = (mesh, art)
        if abs(mesh.n_faces - target_faces) <= 0.05 * target_faces:
            break
        if mesh.n_faces > target_faces:
            hi = mid
        else:
            lo = mid
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--out", default="corpus", help="output directory (default: corpus)")
    ap.add_argument("--faces", type=int, default=30000, help="approximate faces per object (default: 30000)")
    args = ap.parse_args(argv)
    root = Path(args.out)
    for name in OBJECTS:
        mesh, art = build_near(name, args.faces)
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        save_mesh(mesh, d / "mesh.obj.gz")
        (d / "articulation.json").write_text(json.dumps(art, indent=2) + "\n", encoding="utf-8")
        print(f"{name}: {mesh.n_vertices} vertices, {mesh.n_faces} faces")


if __name__ == "__main__":
    main()
