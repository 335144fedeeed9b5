"""Command-line entry point: ``crowdmodal <verb> --config PATH|PRESET``.

Exit codes: 0 success, 2 configuration/schema error, 3 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, pipeline
from .config import ConfigError, load_config, preset_names
from .io import DataError

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

log = logging.getLogger("crowdmodal")


def _common(p):
    p.add_argument("--config", required=True, help="config JSON file or preset name (%s)" % ", ".join(preset_names()))
    p.add_argument("--out", help="output directory (default: output.dir from the config)")
    p.add_argument("--seed", type=int, help="override scan_plan.seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for per-scan stages (default 1)")


def build_parser():
    parser = argparse.ArgumentParser(prog="crowdmodal", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("simulate", help="synthesize scan files from the virtual laboratory")
    _common(p)

    p = sub.add_parser("transform", help="scan files -> per-scan space-frequency maps")
    _common(p)
    p.add_argument("--scans", help="directory of scan CSV files (default: OUT/scans)")

    p = sub.add_parser("aggregate", help="per-scan maps -> per-lane aggregate")
    _common(p)
    p.add_argument("--maps", help="directory of map files (default: OUT/maps)")
    p.add_argument("--resume", help="prior aggregate file or directory to merge into")

    p = sub.add_parser("identify", help="aggregate -> report, mode tables and figures")
    _common(p)
    p.add_argument("--aggregate", help="directory of aggregate files (default: OUT/aggregate)")
    p.add_argument("--maps", help="per-scan map directory, needed for decontamination (default: OUT/maps)")

    p = sub.add_parser("pipeline", help="simulate, transform, aggregate and identify in sequence")
    _common(p)
    return parser


def run(args):
    cfg = load_config(args.config, seed=args.seed, out=args.out)
    out = Path(cfg["output"]["dir"])
    jobs = max(1, args.jobs)
    if args.verb == "simulate":
        m = pipeline.run_simulate(cfg, out, jobs)
        print(f"wrote {m['stages']['simulate']['n_scans']} scans to {out / pipeline.SCAN_DIR}")
    elif args.verb == "transform":
        m = pipeline.run_transform(cfg, out, jobs, args.scans)
        st = m["stages"]["transform"]
        print(f"wrote {len(st['outputs'])} maps to {out / pipeline.MAP_DIR} ({len(st['skipped'])} skipped)")
    elif args.verb == "aggregate":
        m = pipeline.run_aggregate(cfg, out, args.maps, args.resume)
        print(f"aggregate scan counts: {m['stages']['aggregate']['scan_counts']}")
    elif args.verb == "identify":
        report = pipeline.run_identify(cfg, out, args.aggregate, args.maps)
        print(pipeline._report_text(report), end="")
    else:
        report = pipeline.run_pipeline(cfg, out, jobs)
        print(pipeline._report_text(report), end="")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
