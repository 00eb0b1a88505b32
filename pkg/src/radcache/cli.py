"""Command line front end.

`gi render` drives run_sequence from a scene file and an optional config
file, writing per-frame PFM/PNG images plus a metrics.jsonl into --out.
Exit codes: 0 success, 2 configuration error, 3 scene error, 4 pass failure.
"""

import argparse
import sys

from .config import ConfigError, PipelineConfig, load_config
from .pipeline import PassError, run_sequence
from .scene import SceneError, load_scene


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="gi", description="two-level radiance cache renderer"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("render", help="render a frame sequence")
    r.add_argument("--scene", required=True, help="scene JSON path")
    r.add_argument("--config", default=None, help="config JSON path (optional)")
    r.add_argument("--frames", type=int, default=None, help="frame count override")
    r.add_argument("--out", default=None, help="output directory")
    r.add_argument(
        "--deterministic",
        action="store_true",
        help="force bit-reproducible pass ordering",
    )
    r.add_argument(
        "--reference",
        type=int,
        default=0,
        metavar="SPP",
        help="path-trace the last frame at SPP and report RMSE",
    )
    r.add_argument(
        "--dump-pass",
        action="append",
        default=None,
        metavar="NAME",
        help="write intermediate buffer NAME as PFM each frame ('all' for every pass)",
    )
    r.add_argument("--ssgi", choices=("on", "off"), default=None)
    r.add_argument(
        "--dump-cache",
        action="store_true",
        help="write world-cache occupancy counters per frame",
    )
    r.add_argument(
        "--dump-lightgrid",
        action="store_true",
        help="write the final frame's light grid as JSON",
    )
    return parser


def _cmd_render(args):
    config = load_config(args.config) if args.config else PipelineConfig()
    if args.frames is not None:
        if args.frames < 1:
            raise ConfigError("--frames must be >= 1")
        config.frames = args.frames
    if args.deterministic:
        config.deterministic = True
    if args.reference < 0:
        raise ConfigError("--reference must be >= 0")
    scene = load_scene(args.scene)

    def progress(f, total, metrics):
        print(
            f"frame {f + 1}/{total}  luma {metrics.mean_luminance:.4f}"
            f"  delta {metrics.temporal_delta_max:.2e}",
            file=sys.stderr,
        )

    ssgi_on = None if args.ssgi is None else args.ssgi == "on"
    run_sequence(
        config,
        scene,
        frames=args.frames,
        out_dir=args.out,
        ssgi_on=ssgi_on,
        dump_pass=args.dump_pass,
        dump_cache=args.dump_cache,
        dump_lightgrid=args.dump_lightgrid,
        reference_spp=args.reference,
        progress=progress,
    )
    return 0


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "render":
            return _cmd_render(args)
        parser.error(f"unknown command {args.command!r}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except SceneError as e:
        print(f"scene error: {e}", file=sys.stderr)
        return 3
    except PassError as e:
        print(f"pass failure: {e}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
