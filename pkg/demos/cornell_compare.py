"""Cornell box: cached pipeline vs the reference path tracer.

Renders the box with the full two-level cache (ray guiding, world-cache
feedback, SSGI) for a number of static frames, then path-traces the same
view and reports RMSE / mean relative error. Writes side-by-side PNGs.
"""

import argparse
import os

import numpy as np

from radcache.config import PipelineConfig
from radcache.images import compare_images, write_png
from radcache.pipeline import PipelineState, render_frame
from radcache.reference import render_reference
from radcache.scene import load_scene


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--frames", type=int, default=96)
    ap.add_argument("--spp", type=int, default=512, help="reference samples per pixel")
    ap.add_argument("--scene", default="assets/cornell.json")
    ap.add_argument("--out", default="out_cornell")
    ap.add_argument("--no-feedback", action="store_true",
                    help="disable world-cache temporal feedback (for the A/B)")
    args = ap.parse_args()

    scene = load_scene(args.scene)
    cfg = PipelineConfig()
    cfg.ssgi.enabled = True
    cfg.world.temporal_feedback = not args.no_feedback
    state = PipelineState(scene, cfg, 128, 128, scene.camera_at(0).fov_y)

    for f in range(args.frames):
        image, metrics = render_frame(scene, cfg, state, f)
        if f % 16 == 0:
            print(f"frame {f:3d}  luma {metrics.mean_luminance:.4f}")

    print(f"reference at {args.spp} spp ...")
    ref = render_reference(scene, args.frames - 1, args.spp, seed=1)

    stats = compare_images(image, ref)
    print(f"rmse {stats['rmse']:.4f}  mre {stats['mre']:.4f}  max {stats['max_abs']:.3f}")

    os.makedirs(args.out, exist_ok=True)
    write_png(os.path.join(args.out, "cached.png"), image)
    write_png(os.path.join(args.out, "reference.png"), ref)
    write_png(os.path.join(args.out, "abs_error.png"), np.abs(image - ref))
    print(f"wrote {args.out}/cached.png reference.png abs_error.png")


if __name__ == "__main__":
    main()
