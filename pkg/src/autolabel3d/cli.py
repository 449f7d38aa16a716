"""Command line interface: label, eval, synth, plot, dump-config.

Exit codes: 0 success, 1 usage, 2 data/schema problem, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import PipelineConfig, apply_overrides, config_from_file, config_to_json
from .errors import PipelineError, SchemaError
from .geometry import Box3D
from .pipeline import run_eval, run_label, write_results
from .plotting import render_bev_svg
from .synth import SceneSpec, generate_to_dir

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="autolabel3d", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", type=Path, default=None, help="pipeline config JSON")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (dotted path, JSON value)",
        )

    p_label = sub.add_parser("label", help="run the labeling pipeline on a scene directory")
    p_label.add_argument("scene_dir", type=Path)
    p_label.add_argument("out", type=Path, nargs="?", default=None, help="results JSON path")
    p_label.add_argument("--jobs", type=int, default=1)
    add_config_args(p_label)

    p_eval = sub.add_parser("eval", help="score a results file against ground truth")
    p_eval.add_argument("results", type=Path)
    p_eval.add_argument("ground_truth", type=Path)
    p_eval.add_argument("--out-prefix", type=Path, default=None, help="report path prefix")
    p_eval.add_argument("--pseudo", action="store_true", help="set all prediction confidences to 1")
    add_config_args(p_eval)

    p_synth = sub.add_parser("synth", help="generate a synthetic scene from a spec file")
    p_synth.add_argument("spec", type=Path)
    p_synth.add_argument("out_dir", type=Path)

    p_plot = sub.add_parser("plot", help="emit a bird's-eye-view SVG of one frame")
    p_plot.add_argument("results", type=Path)
    p_plot.add_argument("out", type=Path)
    p_plot.add_argument("--frame", type=int, default=0)
    p_plot.add_argument("--scene", type=Path, default=None, help="scene dir for a point overlay")
    add_config_args(p_plot)

    p_dump = sub.add_parser("dump-config", help="print the effective config as JSON")
    add_config_args(p_dump)

    return parser


def _load_config(args) -> PipelineConfig:
    cfg = config_from_file(args.config) if args.config else PipelineConfig()
    if args.overrides:
        cfg = apply_overrides(cfg, args.overrides)
    return cfg


def _cmd_label(args) -> int:
    cfg = _load_config(args)
    results = run_label(args.scene_dir, cfg, jobs=args.jobs)
    out = args.out if args.out is not None else Path(cfg.output.results_path)
    write_results(results, out)
    n = sum(len(f["boxes"]) for f in results["frames"])
    print(f"wrote {n} boxes over {len(results['frames'])} frames to {out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = _load_config(args)
    if args.pseudo:
        cfg = apply_overrides(cfg, ["eval.pseudo_mode=true"])
    report = run_eval(args.results, args.ground_truth, cfg)
    prefix = args.out_prefix if args.out_prefix is not None else Path(cfg.output.report_prefix)
    json_path = prefix.with_suffix(".json")
    csv_path = prefix.with_suffix(".csv")
    json_path.parent.mkdir(parents=True, exist_ok=True)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh).writerows(report.csv_rows())
    print(
        f"mAP {100.0 * report.mean_ap:.2f} | NDS {100.0 * report.nds_score:.2f} "
        f"| reports: {json_path}, {csv_path}"
    )
    return EXIT_OK


def _cmd_synth(args) -> int:
    spec = SceneSpec.from_json_file(args.spec)
    out = generate_to_dir(spec, args.out_dir)
    print(f"wrote scene {spec.scene_id} to {out}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    with open(args.results, encoding="utf-8") as fh:
        doc = json.load(fh)
    frames = {f["frame_index"]: f for f in doc.get("frames", [])}
    if args.frame not in frames:
        raise SchemaError(f"frame {args.frame} not present in {args.results}")
    boxes = [
        (
            Box3D(
                center=np.asarray(b["center"]),
                size=np.asarray(b["size"]),
                yaw=b["yaw"],
                velocity=np.asarray(b.get("velocity", (0.0, 0.0))),
            ),
            b["class_name"],
        )
        for b in frames[args.frame]["boxes"]
    ]
    points_xy = None
    if args.scene is not None:
        import dataclasses

        from .ground import remove_ground
        from .pipeline import _frame_ground_seed
        from .scene_io import aggregate_sweeps, load_scene

        cfg = _load_config(args)
        scene = load_scene(args.scene, min_confidence=cfg.nms.conf_floor)
        aggregate = aggregate_sweeps(scene, args.frame, cfg.sweeps_k)
        ground_cfg = dataclasses.replace(
            cfg.ground, rng_seed=_frame_ground_seed(cfg.ground.rng_seed, args.frame)
        )
        points_xy = aggregate.cloud.points[remove_ground(aggregate, ground_cfg)][:, :2]
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(render_bev_svg(boxes, points_xy=points_xy), encoding="utf-8")
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_dump_config(args) -> int:
    print(config_to_json(_load_config(args)), end="")
    return EXIT_OK


_COMMANDS = {
    "label": _cmd_label,
    "eval": _cmd_eval,
    "synth": _cmd_synth,
    "plot": _cmd_plot,
    "dump-config": _cmd_dump_config,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc}", file=sys.stderr)
        return EXIT_DATA
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PipelineError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # keep the CLI contract: everything else is code 3
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
