"""Adapter command line: convert datasets and extract detections.

Exit codes: 0 success, 1 usage, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .backends import make_backend
from .config import AdapterConfig
from .extract import extract_scene
from .nuscenes_convert import convert_scene


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def main(argv=None) -> int:
    parser = _Parser(prog="vlm-adapter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_extract = sub.add_parser("extract", help="write detections for a converted scene")
    p_extract.add_argument("scene_dir", type=Path)
    p_extract.add_argument("--backend", choices=("synthetic", "huggingface"), default="synthetic")
    p_extract.add_argument("--config", type=Path, default=None)

    p_convert = sub.add_parser("convert", help="export one nuScenes-style scene")
    p_convert.add_argument("dataset_root", type=Path)
    p_convert.add_argument("scene_name")
    p_convert.add_argument("out_dir", type=Path)
    p_convert.add_argument("--table-dir", default=None, help="subdirectory holding the JSON tables")

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        if args.command == "extract":
            cfg = AdapterConfig.from_file(args.config) if args.config else AdapterConfig()
            backend = make_backend(args.backend, cfg)
            count = extract_scene(args.scene_dir, cfg, backend)
            print(f"wrote {count} detection records under {args.scene_dir}/detections")
        else:
            out = convert_scene(args.dataset_root, args.scene_name, args.out_dir, args.table_dir)
            print(f"converted scene {args.scene_name} to {out}")
        return 0
    except (FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
