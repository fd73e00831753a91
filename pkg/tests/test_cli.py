import argparse
import json
import subprocess
import sys

import numpy as np
from _gen import CORPUS

from simready.cli import ENV_PREFIX, _SETTINGS, build_parser, resolve, run
from simready.mesh_io import box_mesh, format_obj, merge_meshes
from simready.voxel import VoxelGrid, grid_from_json, grid_to_json


def write_cube(path):
    path.write_text(format_obj(merge_meshes([box_mesh([0, 0, 0], [1, 1, 1]), box_mesh([1, 0, 0], [2, 0.5, 0.5])])))
    return path


def subparsers():
    ap = build_parser()
    action = next(a for a in ap._actions if isinstance(a, argparse._SubParsersAction))
    return action.choices


def test_all_subcommands_present():
    expected = {"encode", "decode", "compare-tokens", "train-refiner", "refine", "segment", "export",
                "validate", "metrics"}
    assert expected <= set(subparsers())


def test_help_documents_every_flag():
    for name, p in subparsers().items():
        text = p.format_help()
        for action in p._actions:
            for opt in action.option_strings:
                assert opt in text, (name, opt)
            if action.option_strings and action.dest != "help":
                assert action.help, (name, action.dest)
        # settings resolved from env/config name their variable in the help
        for action in p._actions:
            if action.dest in _SETTINGS:
                assert ENV_PREFIX + action.dest.upper() in text, (name, action.dest)


def test_help_exits_zero(capsys):
    assert run(["encode", "--help"], {}) == 0
    assert "--mesh" in capsys.readouterr().out


def test_usage_errors(tmp_path, capsys):
    assert run(["encode", "--bogus"], {}) == 2
    assert "usage:" in capsys.readouterr().err
    assert run([], {}) == 2
    assert run(["frobnicate"], {}) == 2
    assert run(["encode", "--mesh", "x.obj"], {}) == 2  # --out missing
    assert run(["encode", "--mesh", "x.obj", "--out", "y", "--res", "abc"], {}) == 2


def test_input_errors_exit_one(tmp_path):
    assert run(["encode", "--mesh", str(tmp_path / "missing.obj"), "--out", str(tmp_path / "t")], {}) == 1
    cube = write_cube(tmp_path / "cube.obj")
    assert run(["encode", "--mesh", str(cube), "--res", "0", "--out", str(tmp_path / "t")], {}) == 1
    (tmp_path / "bad.tok").write_text("5-2\n")
    assert run(["decode", "--tokens", str(tmp_path / "bad.tok"), "--out", str(tmp_path / "g.json")], {}) == 1


def test_encode_decode_round_trip(tmp_path):
    cube = write_cube(tmp_path / "cube.obj")
    tok, grid, again = tmp_path / "cube.tok", tmp_path / "cube.json", tmp_path / "again.tok"
    assert run(["encode", "--mesh", str(cube), "--res", "16", "--out", str(tok)], {}) == 0
    assert run(["decode", "--tokens", str(tok), "--res", "16", "--out", str(grid),
                "--mesh-out", str(tmp_path / "vox.obj")], {}) == 0
    assert run(["encode", "--grid", str(grid), "--out", str(again)], {}) == 0
    assert tok.read_bytes() == again.read_bytes()
    assert len(grid_from_json(grid.read_text())) > 0


def test_settings_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"res": 8, "encode": {"mode": "solid"}}))
    ap = build_parser()

    def resolved(argv, env):
        return resolve(ap.parse_args(argv), env)

    base = ["encode", "--mesh", "m.obj", "--out", "o"]
    a = resolved(base, {})
    assert (a.res, a.mode, a.seed) == (32, "surface", 0)
    a = resolved(base + ["--config", str(cfg)], {})
    assert (a.res, a.mode) == (8, "solid")
    a = resolved(base + ["--config", str(cfg)], {"SIMREADY_RES": "16"})
    assert (a.res, a.mode) == (16, "solid")
    a = resolved(base + ["--config", str(cfg), "--res", "4"], {"SIMREADY_RES": "16"})
    assert a.res == 4


def test_env_changes_output(tmp_path):
    cube = write_cube(tmp_path / "cube.obj")
    run(["encode", "--mesh", str(cube), "--out", str(tmp_path / "a.tok")], {"SIMREADY_RES": "8"})
    run(["encode", "--mesh", str(cube), "--res", "8", "--out", str(tmp_path / "b.tok")], {})
    assert (tmp_path / "a.tok").read_bytes() == (tmp_path / "b.tok").read_bytes()


def test_spec_export_validate_pipeline(tmp_path):
    asset = CORPUS / "laptop"
    spec, bundle = tmp_path / "spec.json", tmp_path / "bundle"
    assert run(["spec", "--mesh", str(asset / "mesh.obj.gz"), "--articulation", str(asset / "articulation.json"),
                "--res", "16", "--out", str(spec), "--mesh-out", str(tmp_path / "grid.obj")], {}) == 0
    assert run(["export", "--spec", str(spec), "--mesh", str(tmp_path / "grid.obj"), "--out", str(bundle)], {}) == 0
    report = tmp_path / "report.json"
    assert run(["validate", "--bundle", str(bundle), "--report", str(report)], {}) == 0
    assert json.loads(report.read_text())["ok"] is True
    (bundle / "model.urdf").write_text("<robot")
    assert run(["validate", "--bundle", str(bundle)], {}) == 1


def test_segment_and_compare(tmp_path):
    asset = CORPUS / "laptop"
    spec = tmp_path / "spec.json"
    run(["spec", "--mesh", str(asset / "mesh.obj.gz"), "--articulation", str(asset / "articulation.json"),
         "--res", "16", "--out", str(spec)], {})
    out = tmp_path / "seg.obj"
    assert run(["segment", "--mesh", str(asset / "mesh.obj.gz"), "--spec", str(spec), "--fit",
                "--out", str(out)], {}) == 0
    assert "g part_" in out.read_text()
    csv = tmp_path / "tokens.csv"
    assert run(["compare-tokens", "--mesh", str(asset / "mesh.obj.gz"), "--res", "16", "--out", str(csv)], {}) == 0
    lines = csv.read_text().splitlines()
    assert len(lines) == 6 and lines[0].startswith("mesh,")


def test_refiner_round_trip_is_deterministic(tmp_path):
    rng = np.random.default_rng(0)
    occ = np.zeros((8, 8, 8), bool)
    occ[1:6, 2:7, 0:4] = True
    occ[rng.integers(0, 8, 4), rng.integers(0, 8, 4), rng.integers(0, 8, 4)] = True
    fine = tmp_path / "fine.json"
    fine.write_text(grid_to_json(VoxelGrid.from_dense(occ)))
    outs = []
    for k in range(2):
        model, grid = tmp_path / f"m{k}.srfm", tmp_path / f"r{k}.json"
        assert run(["train-refiner", "--grid", str(fine), "--res", "8", "--coarse-res", "4", "--hidden", "8",
                    "--train-steps", "20", "--out", str(model), "--loss-csv", str(tmp_path / "loss.csv")], {}) == 0
        coarse = tmp_path / "coarse.json"
        coarse.write_text(grid_to_json(VoxelGrid.from_dense(occ.reshape(4, 2, 4, 2, 4, 2).any((1, 3, 5)))))
        assert run(["refine", "--model", str(model), "--coarse", str(coarse), "--steps", "5", "--seed", "3",
                    "--out", str(grid)], {}) == 0
        outs.append((model.read_bytes(), grid.read_bytes()))
    assert outs[0] == outs[1]


def test_metrics_command(tmp_path):
    g = tmp_path / "g.json"
    g.write_text(grid_to_json(VoxelGrid.from_cells(8, [(1, 1, 1), (2, 2, 2)])))
    out = tmp_path / "m.json"
    assert run(["metrics", "--pred", str(g), "--gt", str(g), "--samples", "200", "--pred-scale", "1", "2", "3",
                "--gt-scale", "1", "2", "3", "--out", str(out)], {}) == 0
    doc = json.loads(out.read_text())
    assert doc["psnr"] == 99.0 and doc["cd"] == 0.0 and doc["iou"] == 1.0 and doc["scale_error"] == 0.0
    assert run(["metrics", "--pred", str(g), "--gt", str(g), "--format", "csv", "--out",
                str(tmp_path / "m.csv")], {}) == 0
    assert (tmp_path / "m.csv").read_text().startswith("metric,value\n")


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-c", "from simready.cli import main; main()", "--help"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "encode" in r.stdout
