import argparse
import json
import sys

from ghostscope import FailException
from ghostscope import logger
from ghostscope.config import validate
from ghostscope.runner import run


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ghostscope",
        description="Run a ghost-imaging microscope simulation from a JSON config",
    )
    parser.add_argument("--config", required=True, help="Path to the JSON run configuration")
    parser.add_argument("--seed", type=int, default=None, help="Override the ensemble seed")
    parser.add_argument("--frames", type=int, default=None, help="Override the number of frames")
    parser.add_argument("--out", default=None, help="Override the output directory")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a config field, e.g. --set reference_arm.aperture='6 mm' (repeatable)",
    )
    parser.add_argument(
        "--threads", type=int, default=1, help="Worker processes; results do not depend on it"
    )
    parser.add_argument(
        "--validate",
        action="store_true",
        help="Only check the config and print its diagnostics",
    )
    return parser


def collect_overrides(args):
    """--set values first, then the shorthand flags, which win."""
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.frames is not None:
        overrides.append(f"ensemble_size={args.frames}")
    if args.out is not None:
        overrides.append(f"output_dir={json.dumps(args.out)}")
    return overrides


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("ghostscope: --threads must be >= 1", file=sys.stderr)
        return 2
    overrides = collect_overrides(args)
    if args.validate:
        problems = validate(args.config, overrides)
        for problem in problems:
            print(problem)
        if not problems:
            print(f"{args.config}: ok")
        return 1 if problems else 0
    try:
        manifest = run(args.config, overrides, threads=args.threads)
    except FailException as e:
        print(f"ghostscope: {e}", file=sys.stderr)
        return 1
    logger.info(
        f"Succeeded to run {args.config}: {manifest.frames} frames, "
        f"{len(manifest.files)} files in {manifest.output_dir}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
