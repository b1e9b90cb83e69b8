"""Batch command-line front end.

Subcommands: probe, angle, spectrum, eval, synth. Reports go to ``--out DIR``
when given, otherwise to stdout. Exit codes: 0 success (per-item failures
are recorded in the report), 2 configuration or input-format error, 3 I/O
error.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import evaluation, probe, spectrum, synthetic
from .config import ConfigError, load_config, parse_n_range
from .errors import AnnotationMismatch, PipelineError
from .reports import ImageReadError, dumps, read_rgb, write_png

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


class CliError(Exception):
    def __init__(self, message, exit_code):
        super().__init__(message)
        self.exit_code = exit_code


def _error_record(path, exc):
    return {"image": path, "error": getattr(exc, "code", type(exc).__name__),
            "detail": str(exc)}


def _batch(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _require_files(paths):
    for p in paths:
        if not os.path.isfile(p):
            raise CliError(f"input not found: {p}", EXIT_IO)


def _prepare_out(out):
    if out is None:
        return None
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}", EXIT_IO) from exc
    return Path(out)


def _write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc


def _emit(out_dir, filename, text):
    if out_dir is None:
        sys.stdout.write(text)
    else:
        _write_text(out_dir / filename, text)


def _save_overlays(out_dir, records, overlays, suffix):
    if out_dir is None:
        return
    for rec, ov in zip(records, overlays):
        if ov is not None:
            write_png(out_dir / f"{Path(rec['image']).stem}_{suffix}.png", ov)


# --- probe ------------------------------------------------------------------

def _line_endpoints(line, extent=5000.0):
    c, s = np.cos(line.theta), np.sin(line.theta)
    x0, y0 = line.rho * c, line.rho * s
    return [(x0 + extent * s, y0 - extent * c), (x0 - extent * s, y0 + extent * c)]


def probe_overlay(img, loc):
    """Edges in red and verified arcs in blue on a copy of the frame."""
    canvas = Image.fromarray(img)
    draw = ImageDraw.Draw(canvas)
    for line in loc.edge_lines:
        draw.line(_line_endpoints(line), fill=(255, 0, 0), width=2)
    h, w = img.shape[:2]
    ax, ay = loc.apex
    angles = []
    for line in loc.edge_lines:
        d = np.array([-np.sin(line.theta), np.cos(line.theta)])
        if (np.array([w / 2.0 - ax, h / 2.0 - ay]) @ d) < 0:
            d = -d
        angles.append(np.rad2deg(np.arctan2(d[1], d[0])))
    lo, hi = sorted(angles)
    if hi - lo > 180:
        lo, hi = hi, lo + 360
    for arc in loc.arcs:
        r = arc.radius
        draw.arc([ax - r, ay - r, ax + r, ay + r], lo, hi, fill=(0, 0, 255), width=2)
    return np.asarray(canvas)


def _probe_worker(task):
    path, cfg, want_overlay = task
    try:
        img = read_rgb(path)
        loc = probe.locate_probe(img, cfg)
    except (ImageReadError, PipelineError) as exc:
        return _error_record(path, exc), None
    rec = {"image": path, **loc.to_dict()}
    return rec, (probe_overlay(img, loc) if want_overlay else None)


def cmd_probe(args, cfg):
    _require_files(args.inputs)
    out_dir = _prepare_out(args.out)
    tasks = [(p, cfg.probe_geometry, args.overlay) for p in args.inputs]
    results = _batch(_probe_worker, tasks, args.jobs)
    records = [r for r, _ in results]
    _save_overlays(out_dir, records, [o for _, o in results], "probe")
    report = {"command": "probe", "images": records, "summary": _summary(records)}
    _emit(out_dir, "probe_report.json", dumps(report))
    return EXIT_OK


def _summary(records):
    return {"processed": len(records), "errors": sum(1 for r in records if "error" in r)}


# --- angle ------------------------------------------------------------------

def cmd_angle(args, cfg):
    if not os.path.isfile(args.annotations):
        raise CliError(f"annotation file not found: {args.annotations}", EXIT_CONFIG)
    _require_files([args.image])
    out_dir = _prepare_out(args.out)
    record = {"image": args.image, "annotations": args.annotations}
    overlay = None
    try:
        gates = probe.read_annotations(args.annotations)
    except json.JSONDecodeError as exc:
        raise CliError(f"malformed annotation file {args.annotations}: {exc}", EXIT_CONFIG) from exc
    except AnnotationMismatch as exc:
        gates = None
        record.update(error=exc.code, detail=str(exc))
    if gates is not None:
        try:
            img = read_rgb(args.image)
            loc = probe.locate_probe(img, cfg.probe_geometry)
        except (ImageReadError, PipelineError) as exc:
            record.update(error=getattr(exc, "code", "error"), detail=str(exc))
        else:
            record["probe"] = loc.to_dict()
            record["gates"] = []
            for gate in gates:
                entry = {"box": list(gate.box), "vessel_angle_deg": gate.vessel_angle_deg}
                try:
                    res = probe.insonation_angle(loc, gate)
                except PipelineError as exc:
                    entry.update(error=exc.code)
                else:
                    entry.update(insonation_deg=res.angle_deg, passes_isuog=res.passes_isuog)
                record["gates"].append(entry)
            if args.overlay:
                overlay = probe_overlay(img, loc)
    _save_overlays(out_dir, [record], [overlay], "angle")
    report = {"command": "angle", "images": [record], "summary": _summary([record])}
    _emit(out_dir, "angle_report.json", dumps(report))
    return EXIT_OK


# --- spectrum ---------------------------------------------------------------

def _spectrum_worker(task):
    path, cfg, want_overlay = task
    try:
        img = read_rgb(path)
        analysis = spectrum.analyze(img, cfg)
    except (ImageReadError, PipelineError) as exc:
        return _error_record(path, exc), None
    rec = {"image": path, "axis_row": analysis.axis_y, **analysis.verdict.to_dict()}
    return rec, (spectrum.render_overlay(img, analysis, cfg) if want_overlay else None)


def cmd_spectrum(args, cfg):
    _require_files(args.inputs)
    out_dir = _prepare_out(args.out)
    tasks = [(p, cfg.spectrum_qa, args.overlay) for p in args.inputs]
    results = _batch(_spectrum_worker, tasks, args.jobs)
    records = [r for r, _ in results]
    _save_overlays(out_dir, records, [o for _, o in results], "qa")
    report = {"command": "spectrum", "images": records, "summary": _summary(records)}
    _emit(out_dir, "spectrum_report.json", dumps(report))
    return EXIT_OK


# --- eval -------------------------------------------------------------------

def _read_gates(path):
    try:
        if path.lower().endswith(".json"):
            return probe.read_annotations(path)
        return evaluation.read_gate_csv(path)
    except (evaluation.CsvFormatError, AnnotationMismatch, json.JSONDecodeError) as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc


def cmd_eval(args, cfg):
    _require_files([args.gt_file, args.pred_file])
    n_values = parse_n_range(args.n_range if args.n_range else cfg.eval_harness.n_range)
    fold = args.fold or cfg.eval_harness.fold
    gts = _read_gates(args.gt_file)
    preds = _read_gates(args.pred_file)
    if not gts:
        raise CliError(f"no ground-truth gates in {args.gt_file}", EXIT_CONFIG)
    out_dir = _prepare_out(args.out)
    curve = evaluation.sweep(gts, preds, n_values, fold=fold)
    _emit(out_dir, "eval_curve.csv", evaluation.curve_to_csv(curve))
    if args.overlay:
        if out_dir is None:
            raise CliError("--overlay for eval needs --out", EXIT_CONFIG)
        evaluation.plot_curve(curve, out_dir / "eval_curve.png")
    return EXIT_OK


# --- synth ------------------------------------------------------------------

def _gate_from_spec(entry, apex):
    cx, cy = entry["center"]
    half = float(entry.get("size", 24)) / 2.0
    angle = entry.get("vessel_angle_deg", "beam")
    if angle == "beam":  # along the beam, optionally rotated by beam_offset_deg
        angle = np.rad2deg(np.arctan2(apex[1] - cy, apex[0] - cx))
        angle += float(entry.get("beam_offset_deg", 0.0))
    return probe.GateCandidate((cx - half, cy - half, cx + half, cy + half), float(angle))


def _synth_one(item, out_dir):
    name = item["name"]
    kind = item["kind"]
    params = dict(item.get("params", {}))
    written = []
    if kind == "wedge":
        gates = params.pop("gates", [])
        spec = synthetic.WedgeSpec(**params)
        img, truth = synthetic.gen_wedge(spec)
        write_png(out_dir / f"{name}.png", img)
        truth_doc = {"kind": kind, "spec": synthetic.spec_to_dict(spec), **truth.to_dict()}
        written += [f"{name}.png", f"{name}.truth.json"]
        if gates:
            gate_objs = [_gate_from_spec(g, spec.apex) for g in gates]
            w, h = spec.image_size
            doc = probe.gates_to_labelme(gate_objs, f"{name}.png", w, h)
            _write_text(out_dir / f"{name}.labelme.json", dumps(doc))
            truth_doc["insonation_deg"] = [
                probe.insonation_angle(truth, g).angle_deg for g in gate_objs]
            written.append(f"{name}.labelme.json")
        _write_text(out_dir / f"{name}.truth.json", dumps(truth_doc))
    elif kind == "linear_box":
        img = synthetic.gen_linear_box(**params)
        write_png(out_dir / f"{name}.png", img)
        written.append(f"{name}.png")
    elif kind == "spectrum":
        spec = synthetic.SpectrumSpec(**params)
        img, truth = synthetic.gen_spectrum(spec)
        write_png(out_dir / f"{name}.png", img)
        truth = {k: v for k, v in truth.items() if k != "top_y"}
        _write_text(out_dir / f"{name}.truth.json",
                    dumps({"kind": kind, "spec": synthetic.spec_to_dict(spec), **truth}))
        written += [f"{name}.png", f"{name}.truth.json"]
    elif kind == "scene":
        gts, preds = synthetic.gen_detection_scene(**params)
        _write_text(out_dir / f"{name}_gt.csv", evaluation.gates_to_csv(gts))
        _write_text(out_dir / f"{name}_pred.csv", evaluation.gates_to_csv(preds))
        _write_text(out_dir / f"{name}_gt.labelme.json", dumps(probe.gates_to_labelme(gts)))
        _write_text(out_dir / f"{name}.truth.json", dumps({"kind": kind, "params": params}))
        written += [f"{name}_gt.csv", f"{name}_pred.csv", f"{name}_gt.labelme.json",
                    f"{name}.truth.json"]
    else:
        raise ConfigError(f"unknown fixture kind {kind!r}")
    return written


def cmd_synth(args, cfg):
    _require_files([args.spec_file])
    try:
        with open(args.spec_file, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(f"malformed spec file: {exc}", EXIT_CONFIG) from exc
    items = doc.get("fixtures") if isinstance(doc, dict) else doc
    if not isinstance(items, list) or not all(
            isinstance(i, dict) and "name" in i and "kind" in i for i in items):
        raise CliError("spec file must hold a list of {name, kind, params} objects", EXIT_CONFIG)
    out_dir = _prepare_out(args.out or ".")
    manifest = []
    for item in items:
        try:
            files = _synth_one(item, out_dir)
        except (TypeError, ValueError, KeyError) as exc:
            raise CliError(f"fixture {item.get('name')!r}: {exc}", EXIT_CONFIG) from exc
        manifest.append({"name": item["name"], "kind": item["kind"], "files": files})
    _write_text(out_dir / "manifest.json", dumps({"fixtures": manifest}))
    return EXIT_OK


# --- entry point ------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (default: stdout for reports)")
    common.add_argument("--overlay", action="store_true", default=None,
                        help="also write annotated PNG overlays / plots")
    common.add_argument("--jobs", type=int, default=None, help="worker processes")

    parser = argparse.ArgumentParser(
        prog="uadoppler",
        description="Doppler gate guidance and spectrum quality assessment.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("probe", parents=[common], help="locate the probe apex")
    p.add_argument("inputs", nargs="*")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("angle", parents=[common], help="insonation angle of annotated gates")
    p.add_argument("image")
    p.add_argument("annotations")
    p.set_defaults(func=cmd_angle)

    p = sub.add_parser("spectrum", parents=[common], help="waveform quality assessment")
    p.add_argument("inputs", nargs="*")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("eval", parents=[common], help="sensitivity / angle-error sweep")
    p.add_argument("gt_file")
    p.add_argument("pred_file")
    p.add_argument("--n-range", help="start:stop[:step], stop inclusive")
    p.add_argument("--fold", action="store_true", help="fold angle residuals to [0, 90]")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic fixtures")
    p.add_argument("spec_file")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.overlay is None:
            args.overlay = cfg.cli.overlay
        if args.jobs is None:
            args.jobs = cfg.cli.jobs
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
