import numpy as np
import pytest

from fruitlet_metric import intrinsics_from_fov
from fruitlet_metric.dataset_io import BBox, Keypoint, PoseDetection, Visibility


@pytest.fixture
def k_d435():
    """Intrinsics derived from the capture camera's datasheet FOV at 1280x720."""
    return intrinsics_from_fov(1280, 720, 69.4, 42.5)


def make_detection(
    image_id="img",
    cx=0.5, cy=0.5, w=0.2, h=0.2,
    confidence=1.0,
    calyx=(0.45, 0.45, 2),
    peduncle=(0.55, 0.55, 2),
):
    return PoseDetection(
        image_id=image_id,
        bbox=BBox(cx, cy, w, h),
        confidence=confidence,
        calyx=Keypoint(calyx[0], calyx[1], Visibility(calyx[2])),
        peduncle=Keypoint(peduncle[0], peduncle[1], Visibility(peduncle[2])),
    )


def random_dataset(rng: np.random.Generator, max_images=10, max_boxes=15):
    """Random preds/truths keyed by image id, for metric cross-checks."""
    preds = {}
    truths = {}
    n_images = rng.integers(1, max_images + 1)
    for index in range(n_images):
        image_id = f"img_{index:03d}"
        truths[image_id] = [
            make_detection(
                image_id,
                cx=rng.uniform(0.2, 0.8), cy=rng.uniform(0.2, 0.8),
                w=rng.uniform(0.05, 0.3), h=rng.uniform(0.05, 0.3),
            )
            for _ in range(rng.integers(0, max_boxes + 1))
        ]
        image_preds = []
        for truth in truths[image_id]:
            if rng.random() < 0.8:  # jittered copy of a truth box
                image_preds.append(make_detection(
                    image_id,
                    cx=min(0.9, max(0.1, truth.bbox.cx + rng.normal(0, 0.03))),
                    cy=min(0.9, max(0.1, truth.bbox.cy + rng.normal(0, 0.03))),
                    w=max(0.02, truth.bbox.w * rng.uniform(0.8, 1.2)),
                    h=max(0.02, truth.bbox.h * rng.uniform(0.8, 1.2)),
                    confidence=float(rng.uniform(0.05, 1.0)),
                ))
        for _ in range(rng.integers(0, 4)):  # spurious boxes
            image_preds.append(make_detection(
                image_id,
                cx=rng.uniform(0.1, 0.9), cy=rng.uniform(0.1, 0.9),
                w=rng.uniform(0.02, 0.2), h=rng.uniform(0.02, 0.2),
                confidence=float(rng.uniform(0.05, 1.0)),
            ))
        image_preds.sort(key=lambda d: -d.confidence)
        preds[image_id] = image_preds
    return preds, truths
