"""``simready`` command-line entry point.

Every subcommand reads and writes files at user-given paths. Option values
resolve in this order: command-line flag, then an environment variable
named ``SIMREADY_<OPTION>`` (e.g. ``SIMREADY_RES=16``), then the JSON file
passed with ``--config`` (top-level keys, or keys under a section named
after the subcommand), then the built-in default.

Exit status: 0 on success, 1 when validation fails or an input is
rejected, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import gzip
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, assets, codec, export, flow, metrics, schema, segmentation
from .mesh_io import MeshError, TriMesh, fit_to_unit_box, load_mesh, normalize, save_mesh
from .voxel import VoxelError, downsample, grid_from_json, grid_to_json, voxelize, voxels_to_mesh

log = logging.getLogger("simready")

ENV_PREFIX = "SIMREADY_"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# option name -> (type, default); only these take part in env/config resolution
_SETTINGS = {
    "seed": (int, 0),
    "res": (int, 32),
    "mode": (str, "surface"),
    "steps": (int, 50),
    "train_steps": (int, 800),
    "lr": (float, 5e-3),
    "hidden": (int, 32),
    "coarse_res": (int, 16),
    "samples": (int, metrics.CD_SAMPLES),
    "fk_samples": (int, 5),
    "log_level": (str, "WARNING"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _setting(p, name: str, help_text: str, **kw):
    """Flag whose default comes from env/config; argparse leaves it None."""
    typ, default = _SETTINGS[name]
    flag = "--" + name.replace("_", "-")
    env = ENV_PREFIX + name.upper()
    p.add_argument(flag, dest=name, type=typ, default=None,
                   help=f"{help_text} (env {env}; default {default})", **kw)


def _common(p):
    _setting(p, "seed", "seed for every random choice")
    p.add_argument("--config", default=None, help="JSON file with default option values")
    _setting(p, "log_level", "logging level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="simready", description="Sim-ready articulated asset toolchain.")
    ap.add_argument("--version", action="version", version=f"simready {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("encode", help="voxelize a mesh (or read a grid) and write its run tokens")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--mesh", help="input OBJ mesh (.obj or .obj.gz); normalized uniformly into the unit cube")
    src.add_argument("--grid", help="input grid JSON instead of a mesh")
    _setting(p, "res", "grid resolution R")
    _setting(p, "mode", "voxelization mode", choices=["surface", "solid"])
    p.add_argument("--out", required=True, help="output token file")
    _common(p)

    p = sub.add_parser("decode", help="decode a token file into grid JSON")
    p.add_argument("--tokens", required=True, help="input token file")
    _setting(p, "res", "grid resolution R")
    p.add_argument("--out", required=True, help="output grid JSON")
    p.add_argument("--mesh-out", default=None, help="also write the exposed voxel faces as OBJ")
    _common(p)

    p = sub.add_parser("compare-tokens", help="token counts of five serializations per mesh, as CSV")
    p.add_argument("--mesh", nargs="*", default=[], help="input meshes")
    p.add_argument("--corpus", default=None, help="directory whose */mesh.obj.gz files are added")
    _setting(p, "res", "grid resolution R")
    _setting(p, "mode", "voxelization mode", choices=["surface", "solid"])
    p.add_argument("--out", required=True, help="output CSV")
    _common(p)

    p = sub.add_parser("spec", help="build an asset spec from a grouped mesh and articulation JSON")
    p.add_argument("--mesh", required=True, help="metric OBJ with one 'g part_<id>' group per part")
    p.add_argument("--articulation", required=True, help="articulation JSON (metric joints, part attributes)")
    _setting(p, "res", "grid resolution R")
    p.add_argument("--voxel-mode", default="solid", choices=["surface", "solid"],
                   help="per-part voxelization mode (default solid)")
    p.add_argument("--out", required=True, help="output spec JSON")
    p.add_argument("--mesh-out", default=None, help="also write the labeled mesh in the grid frame")
    _common(p)

    p = sub.add_parser("train-refiner", help="fit the coarse-to-fine flow refiner")
    p.add_argument("--mesh", nargs="*", default=[], help="training meshes (fine grids are voxelized from them)")
    p.add_argument("--grid", nargs="*", default=[], help="training fine grids as JSON")
    _setting(p, "res", "fine resolution")
    _setting(p, "coarse_res", "coarse resolution")
    _setting(p, "mode", "voxelization mode for meshes", choices=["surface", "solid"])
    _setting(p, "train_steps", "optimizer steps")
    _setting(p, "lr", "Adam learning rate")
    _setting(p, "hidden", "hidden width of both layers")
    p.add_argument("--refiner-config", default=None, help="JSON with full refiner settings (overrides the above)")
    p.add_argument("--out", required=True, help="output checkpoint")
    p.add_argument("--loss-csv", default=None, help="write the per-step loss curve as CSV")
    _common(p)

    p = sub.add_parser("refine", help="sample a fine grid from a coarse grid")
    p.add_argument("--model", required=True, help="checkpoint from train-refiner")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--coarse", help="coarse grid JSON")
    src.add_argument("--tokens", help="coarse token file (resolution taken from the model)")
    _setting(p, "steps", "Euler steps")
    p.add_argument("--out", required=True, help="output fine grid JSON")
    p.add_argument("--mesh-out", default=None, help="also write the fine voxel surface as OBJ")
    _common(p)

    p = sub.add_parser("segment", help="label mesh faces with the nearest part voxel")
    p.add_argument("--mesh", required=True, help="mesh in the [0,1]^3 grid frame")
    p.add_argument("--spec", required=True, help="asset spec supplying the part voxels")
    p.add_argument("--fit", action="store_true", help="fit the mesh bounding box onto the unit cube first")
    p.add_argument("--brute-force", action="store_true", help="use the O(n*m) scan instead of the spatial hash")
    p.add_argument("--out", required=True, help="output OBJ with 'g part_<id>' groups")
    _common(p)

    p = sub.add_parser("export", help="write URDF, MJCF, part meshes and manifest for a spec")
    p.add_argument("--spec", required=True, help="asset spec JSON")
    p.add_argument("--mesh", default=None, help="fine mesh in the grid frame; groups are used if present")
    p.add_argument("--out", required=True, help="output bundle directory")
    _common(p)

    p = sub.add_parser("validate", help="run pre-flight checks on an exported bundle")
    p.add_argument("--bundle", required=True, help="bundle directory")
    _setting(p, "fk_samples", "joint values swept per joint")
    p.add_argument("--report", default=None, help="write the check results as JSON")
    _common(p)

    p = sub.add_parser("metrics", help="PSNR, Chamfer, F-score, IoU and scale error")
    p.add_argument("--pred", required=True, help="predicted mesh (OBJ) or grid (JSON)")
    p.add_argument("--gt", required=True, help="reference mesh (OBJ) or grid (JSON)")
    p.add_argument("--pred-scale", type=float, nargs=3, default=None, help="predicted extents in metres")
    p.add_argument("--gt-scale", type=float, nargs=3, default=None, help="reference extents in metres")
    _setting(p, "samples", "surface samples per shape")
    p.add_argument("--tau", type=float, default=None, help="F-score threshold (default 5%% of the reference diagonal)")
    p.add_argument("--format", default="json", choices=["json", "csv"], help="report format (default json)")
    p.add_argument("--out", required=True, help="output report")
    _common(p)
    return ap


# --- option resolution -------------------------------------------------------------

def _load_config(path: str | None, command: str) -> dict:
    if not path:
        return {}
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise UsageError(f"config {path} must be a JSON object")
    flat = {k: v for k, v in doc.items() if not isinstance(v, dict)}
    flat.update(doc.get(command, {}))
    return {k.replace("-", "_"): v for k, v in flat.items()}


def resolve(args: argparse.Namespace, environ=None) -> argparse.Namespace:
    """Fill unset settings from environment, then config file, then defaults."""
    environ = os.environ if environ is None else environ
    config = _load_config(getattr(args, "config", None), args.command)
    for name, (typ, default) in _SETTINGS.items():
        if not hasattr(args, name) or getattr(args, name) is not None:
            continue
        env = environ.get(ENV_PREFIX + name.upper())
        try:
            if env is not None:
                value = typ(env)
            elif name in config:
                value = typ(config[name])
            else:
                value = default
        except ValueError:
            raise UsageError(f"bad value for {name}: {env if env is not None else config[name]!r}") from None
        setattr(args, name, value)
    return args


# --- helpers ----------------------------------------------------------------------

def _read_tokens(path) -> str:
    return Path(path).read_text(encoding="utf-8").strip()


def _write_text(path, text: str) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _read_grid(path):
    return grid_from_json(Path(path).read_text(encoding="utf-8"))


def _is_grid_file(path) -> bool:
    return str(path).endswith(".json")


# --- subcommands --------------------------------------------------------------------

def cmd_encode(args) -> int:
    if args.mesh:
        mesh, _ = normalize(load_mesh(args.mesh))
        grid = voxelize(mesh, args.res, args.mode)
    else:
        grid = _read_grid(args.grid)
    _write_text(args.out, codec.encode(grid).text + "\n")
    log.info("%d cells written to %s", len(grid), args.out)
    return EXIT_OK


def cmd_decode(args) -> int:
    grid = codec.decode(_read_tokens(args.tokens), args.res)
    _write_text(args.out, grid_to_json(grid))
    if args.mesh_out:
        save_mesh(voxels_to_mesh(grid), args.mesh_out)
    return EXIT_OK


def cmd_compare_tokens(args) -> int:
    paths = [Path(p) for p in args.mesh]
    if args.corpus:
        paths += sorted(Path(args.corpus).glob("*/mesh.obj.gz"))
    if not paths:
        raise UsageError("compare-tokens: give --mesh files or --corpus")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mesh", "representation", "tokens", "ratio"])
    for path in paths:
        mesh, _ = normalize(load_mesh(path))
        for r in codec.compare_representations(mesh, args.res, args.mode):
            w.writerow([str(path), r.representation, r.tokens, f"{r.ratio:.6f}"])
    _write_text(args.out, buf.getvalue())
    return EXIT_OK


def cmd_spec(args) -> int:
    mesh = load_mesh(args.mesh, groups=True)
    spec, grid_mesh = assets.build_spec(mesh, assets.load_articulation(args.articulation), args.res, args.voxel_mode)
    _write_text(args.out, schema.emit_spec(spec))
    if args.mesh_out:
        save_mesh(grid_mesh, args.mesh_out)
    return EXIT_OK


def _training_pairs(args, config: flow.RefinerConfig):
    fines = [_read_grid(p) for p in args.grid]
    for path in args.mesh:
        mesh, _ = normalize(load_mesh(path))
        fines.append(voxelize(mesh, config.fine_resolution, args.mode))
    if not fines:
        raise UsageError("train-refiner: give --mesh or --grid inputs")
    return [(downsample(f, config.factor), f) for f in fines]


def cmd_train_refiner(args) -> int:
    if args.refiner_config:
        config = flow.RefinerConfig.from_json(Path(args.refiner_config).read_text(encoding="utf-8"))
        config.seed = args.seed
    else:
        config = flow.RefinerConfig(
            fine_resolution=args.res, coarse_resolution=args.coarse_res, hidden=args.hidden,
            hidden2=args.hidden, steps=args.train_steps, learning_rate=args.lr, seed=args.seed,
        )
    config.validate()
    model = flow.train(_training_pairs(args, config), config, log_every=50, logger=log)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    flow.save_model(model, args.out)
    if args.loss_csv:
        _write_text(args.loss_csv, flow.loss_curve_csv(model.loss_curve))
    return EXIT_OK


def cmd_refine(args) -> int:
    model = flow.load_model(args.model)
    if args.coarse:
        coarse = _read_grid(args.coarse)
    else:
        coarse = codec.decode(_read_tokens(args.tokens), model.config.coarse_resolution)
    fine = flow.sample(model, coarse, steps=args.steps, seed=args.seed)
    _write_text(args.out, grid_to_json(fine))
    if args.mesh_out:
        save_mesh(voxels_to_mesh(fine), args.mesh_out)
    return EXIT_OK


def cmd_segment(args) -> int:
    spec = schema.load_spec(args.spec)
    mesh = load_mesh(args.mesh)
    if args.fit:
        mesh, _ = fit_to_unit_box(mesh)
    grid, ids = export.label_grid(spec)
    labeled = segmentation.segment_mesh(mesh, grid, brute_force=args.brute_force)
    save_mesh(labeled.with_labels(np.asarray(ids)[labeled.part_labels]), args.out)
    return EXIT_OK


def cmd_export(args) -> int:
    spec = schema.load_spec(args.spec)
    mesh = load_mesh(args.mesh, groups=_has_groups(args.mesh)) if args.mesh else None
    bundle = export.export(spec, mesh)
    for w in bundle.warnings:
        log.warning(w)
    bundle.write(args.out)
    return EXIT_OK


def _has_groups(path) -> bool:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt", encoding="utf-8") as fh:
        return any(line.startswith("g ") for line in fh)


def cmd_validate(args) -> int:
    report = export.validate_bundle(args.bundle, fk_samples=args.fk_samples)
    for line in report.lines():
        print(line)
    if args.report:
        _write_text(args.report, json.dumps(report.to_dict(), indent=2) + "\n")
    return EXIT_OK if report.ok else EXIT_FAIL


def _load_geometry(path):
    if _is_grid_file(path):
        return _read_grid(path)
    mesh, _ = normalize(load_mesh(path))
    return mesh


def _as_mesh(g) -> TriMesh:
    return g if isinstance(g, TriMesh) else voxels_to_mesh(g)


def cmd_metrics(args) -> int:
    pred, gt = _load_geometry(args.pred), _load_geometry(args.gt)
    values = metrics.mesh_metrics(_as_mesh(pred), _as_mesh(gt), n_samples=args.samples, seed=args.seed, tau=args.tau)
    # silhouettes straight from the grids when both sides are grids
    if not isinstance(pred, TriMesh) and not isinstance(gt, TriMesh):
        values["psnr"] = metrics.projection_psnr(pred, gt)
        values["iou"] = metrics.voxel_iou(pred, gt)
    if args.pred_scale and args.gt_scale:
        values["scale_error"] = metrics.scale_error(args.pred_scale, args.gt_scale)
    text = metrics.report_json(values) if args.format == "json" else metrics.report_csv(values)
    _write_text(args.out, text)
    return EXIT_OK


COMMANDS = {
    "encode": cmd_encode,
    "decode": cmd_decode,
    "compare-tokens": cmd_compare_tokens,
    "spec": cmd_spec,
    "train-refiner": cmd_train_refiner,
    "refine": cmd_refine,
    "segment": cmd_segment,
    "export": cmd_export,
    "validate": cmd_validate,
    "metrics": cmd_metrics,
}

_INPUT_ERRORS = (OSError, ValueError, MeshError, VoxelError, codec.TokenError, schema.SchemaError,
                 flow.FlowError, export.ExportError, metrics.MetricError)


def run(argv=None, environ=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        resolve(args, environ)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except _INPUT_ERRORS as exc:
        print(f"simready {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
