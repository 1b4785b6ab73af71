#!/usr/bin/env python3
"""Generate a synthetic orchard-like demo dataset plus a ready-to-run config.

The scene is a slanted canopy plane with a few spherical fruitlets in front
of it, rendered at the capture camera's resolution and field of view. Both
depth sources are emitted: a quantized metric PNG standing in for the stereo
camera (with dropout holes) and a clean relative inverse-depth PFM standing
in for a monocular transformer. Ground-truth lengths come straight from the
generating geometry, so the whole CLI pipeline can run end to end:

    python scripts/make_demo_dataset.py --out demo_data
    fruitlet-metric reconstruct --config demo_data/config.ini
    fruitlet-metric measure     --config demo_data/config.ini
    fruitlet-metric eval        --config demo_data/config.ini
    fruitlet-metric report      --config demo_data/config.ini
"""

import argparse
import math
from pathlib import Path

import numpy as np
from PIL import Image

from fruitlet_metric.camera_geometry import backproject, intrinsics_from_fov
from fruitlet_metric.dataset_io import DepthConvention, DepthMap, write_depth_png, write_pfm

WIDTH, HEIGHT = 1280, 720
HFOV, VFOV = 69.4, 42.5
S_TRUE, T_TRUE = 2.0, 0.25  # affine map hidden inside the relative depth
FRUIT_RADIUS_M = 0.016      # immature fruitlets are a few centimeters long

CONFIG = f"""[dataset]
root = .
images_dir = images
labels_dir = labels
lengths_csv = gt_lengths.csv
split_manifest = split.txt
split = test
reference_depth_dir = depth/realsense

[camera]
width = {WIDTH}
height = {HEIGHT}
hfov_deg = {HFOV}
vfov_deg = {VFOV}

[pose.det]
kind = file-oracle
prediction_dir = preds/det
confidence_threshold = 0.25

[depth.realsense]
kind = file-oracle
prediction_dir = depth/realsense
convention = metric-meters

[depth.depth-anything-v2]
kind = file-oracle
prediction_dir = depth/dav2
convention = relative-inverse-depth

[reconstruction]
align = reference
min_m = 0.15
max_m = 2.0
sample_stride = 4

[output]
dir = out
"""


def render_scene(rng, k, n_fruits):
    """Depth map + RGB + fruit list [(u_top, v_top, u_bot, v_bot, length_mm, bbox)]."""
    us, vs = np.meshgrid(np.arange(WIDTH), np.arange(HEIGHT))
    canopy = 0.60 + 0.08 * (vs / HEIGHT - 0.5) + 0.02 * (us / WIDTH - 0.5)
    depth = canopy.copy()
    rgb = np.zeros((HEIGHT, WIDTH, 3), np.uint8)
    rgb[..., 1] = (90 + 60 * (depth - depth.min()) / np.ptp(depth)).astype(np.uint8)
    rgb[..., 0] = 40
    rgb[..., 2] = 30

    fruits = []
    for _ in range(n_fruits):
        cu = rng.uniform(0.2, 0.8) * WIDTH
        cv = rng.uniform(0.25, 0.75) * HEIGHT
        z_center = rng.uniform(0.50, 0.58)
        radius_px = FRUIT_RADIUS_M * k.fx / z_center
        du = us - cu
        dv = vs - cv
        inside = du ** 2 + dv ** 2 <= radius_px ** 2
        bump = np.zeros_like(depth)
        bump[inside] = FRUIT_RADIUS_M * np.sqrt(
            1 - (du[inside] ** 2 + dv[inside] ** 2) / radius_px ** 2)
        sphere = z_center - bump
        covered = inside & (sphere < depth)
        depth[covered] = sphere[covered]
        rgb[covered] = (120, 190, 90)

        # major-axis keypoints sit on the fruit body at 85% of the radius,
        # like real calyx/peduncle annotations; ground truth is the 3D chord
        # between those two surface points
        radius_v = FRUIT_RADIUS_M * k.fy / z_center
        v_top, v_bot = cv - 0.85 * radius_v, cv + 0.85 * radius_v
        surface_z = z_center - FRUIT_RADIUS_M * math.sqrt(1 - 0.85 ** 2)
        top = backproject(cu, v_top, surface_z, k)
        bottom = backproject(cu, v_bot, surface_z, k)
        length_mm = 1000.0 * math.dist((top.x, top.y, top.z), (bottom.x, bottom.y, bottom.z))
        box_w = 2 * radius_px / WIDTH * 1.15
        box_h = 2 * radius_v / HEIGHT * 1.15
        fruits.append((cu, v_top, cu, v_bot, length_mm,
                       (cu / WIDTH, cv / HEIGHT, box_w, box_h)))
    return depth, rgb, fruits


def pose_lines(fruits, rng=None):
    lines = []
    for cu_t, v_t, cu_b, v_b, _, (bx, by, bw, bh) in fruits:
        jitter = (lambda: rng.normal(0, 0.002)) if rng is not None else (lambda: 0.0)
        fields = [
            "0",
            repr(min(1.0, max(0.0, bx + jitter()))), repr(min(1.0, max(0.0, by + jitter()))),
            repr(bw), repr(bh),
            repr(min(1.0, max(0.0, cu_t / WIDTH + jitter()))),
            repr(min(1.0, max(0.0, v_t / HEIGHT + jitter()))), "2",
            repr(min(1.0, max(0.0, cu_b / WIDTH + jitter()))),
            repr(min(1.0, max(0.0, v_b / HEIGHT + jitter()))), "2",
        ]
        if rng is not None:
            fields.append(repr(round(float(rng.uniform(0.55, 0.98)), 4)))
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="demo_data", help="output directory")
    parser.add_argument("--images", type=int, default=3)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    root = Path(args.out)
    for sub in ("images", "labels", "preds/det", "depth/realsense", "depth/dav2"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    k = intrinsics_from_fov(WIDTH, HEIGHT, HFOV, VFOV)
    rng = np.random.default_rng(args.seed)
    gt_rows = ["image_id,fruit_id,length_mm"]
    split_rows = []

    for index in range(args.images):
        image_id = f"demo_{index:03d}"
        depth, rgb, fruits = render_scene(rng, k, n_fruits=int(rng.integers(2, 5)))

        Image.fromarray(rgb).save(root / "images" / f"{image_id}.png")

        stereo = depth.copy()
        dropout = rng.random(stereo.shape) < 0.02  # stereo dropout holes
        stereo[dropout] = 0.0
        write_depth_png(
            DepthMap(WIDTH, HEIGHT, stereo.astype(np.float32), DepthConvention.METRIC_METERS),
            root / "depth" / "realsense" / f"{image_id}.png",
        )
        relative = ((1.0 / depth - T_TRUE) / S_TRUE).astype(np.float32)
        write_pfm(relative, root / "depth" / "dav2" / f"{image_id}.pfm")

        (root / "labels" / f"{image_id}.txt").write_text(pose_lines(fruits))
        (root / "preds" / "det" / f"{image_id}.txt").write_text(pose_lines(fruits, rng))

        for fruit_index, fruit in enumerate(fruits, start=1):
            gt_rows.append(f"{image_id},f{fruit_index},{fruit[4]:.1f}")
        split_rows.append(f"{image_id} test")

    (root / "gt_lengths.csv").write_text("\n".join(gt_rows) + "\n")
    (root / "split.txt").write_text("\n".join(split_rows) + "\n")
    (root / "config.ini").write_text(CONFIG)
    print(f"wrote {args.images} synthetic scenes under {root}/")
    print(f"next: fruitlet-metric reconstruct --config {root}/config.ini")


if __name__ == "__main__":
    main()
