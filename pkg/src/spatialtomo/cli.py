"""Command-line entry point: ``spatialtomo <subcommand> [options]``.

Exit codes: 0 success, 2 configuration/input error, 3 numerical failure,
4 informationally incomplete measurement.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .config import PRESETS, ExperimentConfig
from .errors import ConfigError, GeometryError, InformationallyIncompleteError, TomographyError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_INCOMPLETE = 0, 2, 3, 4

# per-subcommand defaults applied before the config file
DEFAULTS = {
    "rank-scan": {},
    "tomography": {"orders": [1, 2, 3, 4, 5], "theta": "pi/d", "channels": "both"},
    "photocount-sweep": {
        "orders": [4],
        "theta": "pi/2",
        "estimator": "ml",
        "states": {"source": "random-pure", "count": 50},
        "counts": [128, 256, 512, 1024, 2048],
    },
    "obstruction-sweep": {"basis": {"family": "lg", "modes": [[1, 0], [0, 2]]}, "channels": "direct"},
    "simulate": {"orders": [1], "states": {"source": "random-mixed", "count": 1}},
    "calibrate": {},
}


def _load_config(args, command: str) -> ExperimentConfig:
    data = dict(DEFAULTS[command])
    base = "."
    if args.config:
        path = Path(args.config)
        try:
            loaded = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be an object")
        data.update(loaded)
        base = path.parent
    if args.seed is not None:
        data["seed"] = args.seed
    if args.workers is not None:
        data["workers"] = args.workers
    if args.preset is not None:
        data["preset"] = args.preset
    if args.out is not None:
        data["output"] = args.out
    if args.force_incomplete:
        data["force_incomplete"] = True
    try:
        return ExperimentConfig.from_dict(data, base_dir=base)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _print_rows(rows, columns):
    print("\t".join(columns))
    for r in rows:
        vals = []
        for c in columns:
            v = r.get(c)
            vals.append("" if v is None else (f"{v:.6f}" if isinstance(v, float) else str(v)))
        print("\t".join(vals))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--workers", type=int, help="concurrent per-state workers")
    common.add_argument("--preset", choices=sorted(PRESETS), help="grid preset (desk=128^2, paper=512^2)")
    common.add_argument(
        "--force-incomplete", action="store_true", help="allow direct-only (informationally incomplete) runs"
    )
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="spatialtomo", description="Quantum state tomography of transverse light modes from intensity images.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("rank-scan", parents=[common], help="rank of T against dimension and converter angle")
    sub.add_parser("tomography", parents=[common], help="reconstruct a batch of states")
    sub.add_parser("photocount-sweep", parents=[common], help="ML fidelity against photocount total")
    sub.add_parser("obstruction-sweep", parents=[common], help="fidelity behind blades and irises")
    sub.add_parser("simulate", parents=[common], help="forward-only images and counts")
    cal = sub.add_parser("calibrate", parents=[common], help="beam centre and waist from a counts CSV")
    cal.add_argument("--counts", required=True, metavar="CSV", help="pixel_index,channel,count file")
    cal.add_argument("--order", type=int, required=True, help="mode order N of the beam")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    cmd = args.command
    try:
        cfg = _load_config(args, cmd)
        out = Path(cfg.output)
        if cmd == "rank-scan":
            rows = experiments.cmd_rank_scan(cfg, out)
            _print_rows(rows, experiments.RANK_COLUMNS)
        elif cmd == "tomography":
            rows = experiments.cmd_tomography(cfg, out)
            _print_rows(rows, experiments.SUMMARY_COLUMNS)
        elif cmd == "photocount-sweep":
            rows = experiments.cmd_photocount_sweep(cfg, out)
            _print_rows(rows, experiments.SWEEP_COLUMNS)
        elif cmd == "obstruction-sweep":
            rows = experiments.cmd_obstruction_sweep(cfg, out)
            _print_rows(rows, experiments.MASK_SUMMARY_COLUMNS)
        elif cmd == "simulate":
            experiments.cmd_simulate(cfg, out)
            print(f"wrote images to {out}")
        elif cmd == "calibrate":
            geom = experiments.cmd_calibrate(args.counts, cfg.pixel_grid(), args.order)
            doc = {"x0": geom.x0, "y0": geom.y0, "w": geom.w}
            if args.out is not None:
                out.mkdir(parents=True, exist_ok=True)
                (out / "geometry.json").write_text(json.dumps(doc, sort_keys=True) + "\n")
            print(json.dumps(doc, sort_keys=True))
    except InformationallyIncompleteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GeometryError, TomographyError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
