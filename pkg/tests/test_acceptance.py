"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python3 tests/test_acceptance.py``. Oracles here are written independently
of the package code they check.
"""

import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))
from _gen import CORPUS, random_grid, random_spec  # noqa: E402

from simready import codec, flow, kinematics  # noqa: E402
from simready.cli import run  # noqa: E402
from simready.codec import compare_representations  # noqa: E402
from simready.export import export, reparse_urdf  # noqa: E402
from simready.mesh_io import load_mesh, normalize  # noqa: E402
from simready.metrics import chamfer, fscore, voxel_iou  # noqa: E402
from simready.schema import JointSpec, PartSpec, PhysicalAssetSpec  # noqa: E402
from simready.segmentation import segment_mesh  # noqa: E402
from simready.spatial import nearest, nearest_bruteforce  # noqa: E402
from simready.voxel import VoxelGrid, downsample, label_parts, voxelize, voxels_to_mesh  # noqa: E402

RESULTS = {}


def report(n, title, ok, detail):
    line = f"CRITERION {n} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS[n] = ok
    return ok, line


def emit(capsys, result):
    ok, line = result
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


# --- 1. codec round-trip --------------------------------------------------------------

def check_codec():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    failures = 0
    for k in range(1000):
        R = (8, 16, 32)[k % 3]
        density = (0.01, 0.1, 0.5, 1.0)[(k // 3) % 4]
        g = random_grid(rng, R, density)
        if codec.decode(codec.encode(g).text, R) != g:
            failures += 1
    elapsed = time.perf_counter() - t0
    return report(1, "codec round-trip", failures == 0 and elapsed < 5.0,
                  f"1000 grids, {failures} failures, {elapsed:.2f} s (limit 5 s)")


# --- 2. compression ordering and magnitude ----------------------------------------------

def check_compression():
    meshes = sorted(CORPUS.glob("*/mesh.obj.gz"))
    ordered, faces_ok = True, True
    text_vs_runs, text_vs_coords = [], []
    for path in meshes:
        mesh, _ = normalize(load_mesh(path))
        faces_ok &= mesh.n_faces >= 5000
        c = {r.representation: r.tokens for r in compare_representations(mesh, 32)}
        ordered &= c["merged-runs"] <= c["index-list"] <= c["voxel-coords"] <= c["mesh-text"]
        text_vs_runs.append(c["mesh-text"] / c["merged-runs"])
        text_vs_coords.append(c["mesh-text"] / c["voxel-coords"])
    a, b = float(np.mean(text_vs_runs)), float(np.mean(text_vs_coords))
    ok = len(meshes) >= 10 and faces_ok and ordered and a >= 50 and b >= 20
    return report(2, "compression ordering", ok,
                  f"{len(meshes)} meshes, ordering {'holds' if ordered else 'violated'}, "
                  f"mesh-text/merged-runs {a:.1f}x (>=50), mesh-text/voxel-coords {b:.1f}x (>=20)")


# --- 3. metric oracle equivalence ---------------------------------------------------------

def oracle_nn(q, p):
    return np.sqrt(((q[:, None, :] - p[None, :, :]) ** 2).sum(-1).min(1))


def check_metrics():
    rng = np.random.default_rng(3)
    exact, close = True, True
    for _ in range(100):
        a, b = rng.random((100, 3)), rng.random((100, 3))
        tau = float(rng.uniform(0.02, 0.2))
        exact &= chamfer(a, b) == chamfer(a, b, brute_force=True)
        exact &= fscore(a, b, tau) == fscore(a, b, tau, brute_force=True)
        ref = oracle_nn(a, b).mean() + oracle_nn(b, a).mean()
        close &= abs(chamfer(a, b) - ref) <= 1e-12
        p, r = (oracle_nn(a, b) <= tau).mean(), (oracle_nn(b, a) <= tau).mean()
        close &= abs(fscore(a, b, tau) - (0.0 if p + r == 0 else 200 * p * r / (p + r))) <= 1e-12
        exact &= chamfer(a, a) == 0.0 and fscore(a, a, tau) == 100.0
    return report(3, "metric oracle equivalence", exact and close,
                  f"100 instances, accelerated==brute force bit-for-bit: {exact}, "
                  f"matches O(n^2) oracle within 1e-12: {close}")


# --- 4. flow objective ------------------------------------------------------------------

def overfit_pair():
    mesh, _ = normalize(load_mesh(CORPUS / "laptop" / "mesh.obj.gz"))
    fine = voxelize(mesh, 32, "solid")
    return downsample(fine, 2), fine


def check_flow():
    details = []
    rng = np.random.default_rng(4)
    small = flow.RefinerConfig(fine_resolution=8, coarse_resolution=4, hidden=8, hidden2=8, time_features=4,
                               position_frequencies=1, image_dim=2)
    batch = []
    for _ in range(3):
        occ = rng.random((8, 8, 8)) < 0.4
        fine = VoxelGrid.from_dense(occ)
        batch.append(flow.FlowSample(flow.to_signed(fine), rng.standard_normal((8, 8, 8)), float(rng.random()),
                                     flow.condition_channel(downsample(fine, 2), 8), rng.standard_normal(2)))
    x0 = np.stack([s.x0 for s in batch])
    eps = np.stack([s.eps for s in batch])
    oracle_loss = flow.flow_loss(lambda xt, t, cond, c: eps - x0, batch)
    ok_oracle = oracle_loss <= np.finfo(float).eps
    details.append(f"oracle loss {oracle_loss:.1e}")

    net = flow.VelocityNet(small)
    theta = rng.standard_normal(net.size) * 0.3
    _, grad = flow.loss_and_grad(net, batch, theta)
    worst, h = 0.0, 1e-6
    for i in range(net.size):
        e = np.zeros(net.size)
        e[i] = h
        fd = (flow.loss_and_grad(net, batch, theta + e)[0] - flow.loss_and_grad(net, batch, theta - e)[0]) / (2 * h)
        worst = max(worst, abs(grad[i] - fd) / max(abs(fd), abs(grad[i]), 1e-3))
    ok_grad = net.size <= 1000 and worst <= 1e-4
    details.append(f"grad rel err {worst:.1e} on {net.size} params")

    ok_euler = True
    for steps in (1, 3, 10, 100):
        target = batch[0].x0
        noise = rng.standard_normal(target.shape)
        out = flow.integrate(lambda xt, t, cond, c: (noise - target)[None], noise, target, steps)
        ok_euler &= np.abs(out - target).max() <= 1e-12 and flow.from_signed(out) == flow.from_signed(target)
    details.append(f"euler exact: {ok_euler}")

    coarse, fine = overfit_pair()
    t0 = time.perf_counter()
    model = flow.train([(coarse, fine)], flow.RefinerConfig())
    curve = model.loss_curve
    head, tail = float(np.mean(curve[:20])), float(np.mean(curve[-20:]))
    drop = 1 - tail / head
    iou = voxel_iou(flow.sample(model, coarse, steps=50, seed=0), fine)
    elapsed = time.perf_counter() - t0
    ok_fit = drop >= 0.9 and iou >= 0.95 and elapsed < 600
    details.append(f"overfit loss drop {100 * drop:.1f}% (>=90), IoU {iou:.3f} (>=0.95), {elapsed:.0f} s")
    return report(4, "flow objective", ok_oracle and ok_grad and ok_euler and ok_fit, "; ".join(details))


# --- 5. export round-trip ----------------------------------------------------------------

def check_export():
    rng = np.random.default_rng(5)
    worst, structural, deterministic = 0.0, True, True
    for _ in range(200):
        s = random_spec(rng)
        b = export(s)
        summary = reparse_urdf(b.urdf)
        structural &= len(summary.links) == len(s.parts) and len(summary.joints) == len(s.parts) - 1
        vol = float(np.prod(s.absolute_scale)) / s.resolution ** 3
        for p in s.parts:
            m = p.density * len(s.grid(p.id)) * vol
            worst = max(worst, abs(summary.mass_of_part(p.id) - m) / max(1.0, m))
        for pid, wj in kinematics.world_joints(s).items():
            j = summary.joint_for_part(pid)
            worst = max(worst, float(np.abs(j.origin - wj.axis_origin).max()))
            if wj.type != "fixed":
                worst = max(worst, float(np.abs(j.axis - wj.axis_direction).max()),
                            abs(j.range[0] - wj.range[0]), abs(j.range[1] - wj.range[1]))
        deterministic &= export(s).files() == b.files() and export(s).manifest_json() == b.manifest_json()
    ok = worst <= 1e-5 and structural and deterministic
    return report(5, "export round-trip", ok,
                  f"200 specs, worst deviation {worst:.1e} (<=1e-5), structure {structural}, "
                  f"byte-deterministic {deterministic}")


# --- 6. kinematics ---------------------------------------------------------------------

def check_kinematics():
    rng = np.random.default_rng(6)
    rest_ok = True
    for _ in range(50):
        s = random_spec(rng)
        q = {p.id: 0.0 for p in s.parts if p.joint is not None and p.joint.type != "fixed"}
        if all(kinematics.world_joint(s, pid).range[0] <= 0 <= kinematics.world_joint(s, pid).range[1] for pid in q):
            rest_ok &= all(np.array_equal(T, np.eye(4)) for T in kinematics.forward_kinematics(s, q).values())

    hinge = JointSpec("revolute", 0, (0, 0, 1), (0, 0, 0), (0, math.pi))
    s = PhysicalAssetSpec("q", (1, 1, 1), (PartSpec(0, codec.TokenString("0")),
                                           PartSpec(1, codec.TokenString("1"), joint=hinge)), 0)
    turned = kinematics.forward_kinematics(s, {1: math.pi / 2}).apply(1, [1, 0, 0])
    quarter = float(np.abs(turned - [0, 1, 0]).max())

    worst = 0.0
    for _ in range(100):
        s = random_spec(rng)
        q = {}
        for p in s.parts:
            if p.joint is not None and p.joint.type != "fixed":
                lo, hi = kinematics.world_joint(s, p.id).range
                q[p.id] = float(rng.uniform(lo, hi))
        poses = kinematics.forward_kinematics(s, q)
        pts = rng.uniform(-1, 1, (8, 3))
        d0 = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        for pid in poses:
            moved = poses.apply(pid, pts)
            worst = max(worst, float(np.abs(np.linalg.norm(moved[:, None] - moved[None], axis=-1) - d0).max()))
    ok = rest_ok and quarter <= 1e-12 and worst <= 1e-9
    return report(6, "kinematics", ok,
                  f"rest pose identity {rest_ok}, quarter-turn error {quarter:.1e} (<=1e-12), "
                  f"rigidity error {worst:.1e} over 100 configurations (<=1e-9)")


# --- 7. segmentation ----------------------------------------------------------------------

def containing_label(points, lab):
    """Lowest label among the closed occupied cells that contain each point."""
    R = lab.resolution
    owner = dict(zip(lab.indices.tolist(), lab.labels.tolist()))
    out = []
    for p in points * R:
        cands = [[int(np.floor(c))] + ([int(c) - 1] if c == int(c) else []) for c in p]
        found = [owner.get(x + R * y + R * R * z) for x in cands[0] for y in cands[1] for z in cands[2]
                 if all(0 <= c < R for c in (x, y, z))]
        out.append(min(f for f in found if f is not None))
    return np.array(out)


def check_segmentation():
    rng = np.random.default_rng(7)
    fractions = []
    for k in range(5):
        R = 16
        occ = np.full((R, R, R), -1)
        # a few solid blocks per grid, later blocks overwrite earlier ones
        for pid in range(int(rng.integers(2, 5))):
            lo = rng.integers(0, R - 4, 3)
            hi = lo + rng.integers(3, 8, 3)
            occ[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] = pid
        ids = [i for i in range(occ.max() + 1) if (occ == i).any()]
        lab = label_parts([VoxelGrid.from_dense(occ == i) for i in ids])
        mesh = voxels_to_mesh(lab)
        seg = segment_mesh(mesh, lab)
        fractions.append(float((seg.part_labels == containing_label(mesh.centroids(), lab)).mean()))
    exact = True
    for _ in range(50):
        pts = rng.random((int(rng.integers(1, 300)), 3))
        keys = rng.integers(0, 4, len(pts))
        q = rng.random((200, 3)) * 1.4 - 0.2
        d1, i1 = nearest(q, pts, keys)
        d2, i2 = nearest_bruteforce(q, pts, keys)
        exact &= np.array_equal(d1, d2) and np.array_equal(i1, i2)
    ok = min(fractions) >= 0.99 and exact
    return report(7, "segmentation self-consistency", ok,
                  f"min face agreement {100 * min(fractions):.2f}% over {len(fractions)} grids (>=99%), "
                  f"nearest-neighbor == brute force on 50 instances: {exact}")


# --- 8. end-to-end pipeline -----------------------------------------------------------------

def check_pipeline():
    assets = sorted(p for p in CORPUS.iterdir() if (p / "mesh.obj.gz").is_file())
    failed = []
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        for a in assets:
            out = Path(tmp) / a.name
            mesh = str(a / "mesh.obj.gz")
            steps = [
                ["encode", "--mesh", mesh, "--res", "32", "--out", str(out / "coarse.tok")],
                ["spec", "--mesh", mesh, "--articulation", str(a / "articulation.json"), "--res", "32",
                 "--out", str(out / "spec.json"), "--mesh-out", str(out / "grid.obj")],
                ["export", "--spec", str(out / "spec.json"), "--mesh", str(out / "grid.obj"),
                 "--out", str(out / "bundle")],
                ["validate", "--bundle", str(out / "bundle")],
            ]
            for argv in steps:
                if run(argv, {}) != 0:
                    failed.append(f"{a.name}:{argv[0]}")
                    break
    elapsed = time.perf_counter() - t0
    ok = len(assets) >= 10 and not failed and elapsed < 60
    return report(8, "end-to-end pipeline", ok,
                  f"{len(assets)} assets, failures {failed or 'none'}, {elapsed:.1f} s (limit 60 s)")


CHECKS = {1: check_codec, 2: check_compression, 3: check_metrics, 4: check_flow, 5: check_export,
          6: check_kinematics, 7: check_segmentation, 8: check_pipeline}


def test_criterion_1_codec_round_trip(capsys):
    emit(capsys, check_codec())


def test_criterion_2_compression(capsys):
    emit(capsys, check_compression())


def test_criterion_3_metric_oracles(capsys):
    emit(capsys, check_metrics())


@pytest.mark.slow
def test_criterion_4_flow_objective(capsys):
    emit(capsys, check_flow())


def test_criterion_5_export_round_trip(capsys):
    emit(capsys, check_export())


def test_criterion_6_kinematics(capsys):
    emit(capsys, check_kinematics())


def test_criterion_7_segmentation(capsys):
    emit(capsys, check_segmentation())


def test_criterion_8_pipeline(capsys):
    emit(capsys, check_pipeline())


if __name__ == "__main__":
    wanted = [int(a) for a in sys.argv[1:]] or sorted(CHECKS)
    results = [CHECKS[n]() for n in wanted]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
