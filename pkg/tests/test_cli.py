import csv
import io

import numpy as np
import pytest
from PIL import Image

from fruitlet_metric import cli
from fruitlet_metric.config import load_config
from fruitlet_metric.dataset_io import read_ply

W, H = 64, 48
S_TRUE, T_TRUE = 2.0, 0.3

GT_LINES = {
    "img_a": [
        "0 0.35 0.5 0.25 0.3 0.30 0.5 2 0.45 0.5 2",
        "0 0.7 0.45 0.2 0.25 0.65 0.42 2 0.76 0.5 2",
    ],
    "img_b": [
        "0 0.5 0.5 0.3 0.3 0.42 0.47 2 0.58 0.52 2",
    ],
}

LENGTHS_CSV = (
    "image_id,fruit_id,length_mm\n"
    "img_a,f1,100.0\n"
    "img_a,f2,105.0\n"
    "img_b,f1,110.0\n"
)

CONFIG_TEMPLATE = """
[dataset]
root = .
images_dir = images
labels_dir = labels
lengths_csv = gt_lengths.csv
split_manifest = split.txt
split = test
reference_depth_dir = depth/realsense

[camera]
width = 64
height = 48
hfov_deg = 60
vfov_deg = 45

[pose.det]
kind = file-oracle
prediction_dir = preds/det
confidence_threshold = 0.25

[depth.realsense]
kind = file-oracle
prediction_dir = depth/realsense
convention = metric-meters

[depth.dav2]
kind = file-oracle
prediction_dir = depth/dav2
convention = relative-inverse-depth

[reconstruction]
align = reference
min_m = 0.15
max_m = 2.0
sample_stride = 1

[output]
dir = out
"""


def true_depth() -> np.ndarray:
    u = np.arange(W, dtype=np.float64)
    return np.tile(0.55 + 0.1 * u / (W - 1), (H, 1))


def build_dataset(root, image_ids=("img_a", "img_b")):
    for sub in ("images", "labels", "preds/det", "depth/realsense", "depth/dav2"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    depth = true_depth()
    mm = np.round(depth * 1000).astype(np.uint16)
    inverse_relative = ((1.0 / depth - T_TRUE) / S_TRUE).astype(np.float32)

    rng = np.random.default_rng(0)
    for image_id in image_ids:
        rgb = rng.integers(0, 256, size=(H, W, 3)).astype(np.uint8)
        Image.fromarray(rgb).save(root / "images" / f"{image_id}.png")
        Image.fromarray(mm).save(root / "depth" / "realsense" / f"{image_id}.png")

        from fruitlet_metric.dataset_io import write_pfm

        write_pfm(inverse_relative, root / "depth" / "dav2" / f"{image_id}.pfm")

        gt_lines = GT_LINES.get(image_id, [GT_LINES["img_b"][0]])
        (root / "labels" / f"{image_id}.txt").write_text("\n".join(gt_lines) + "\n")
        pred_lines = [f"{line} 0.{9 - i}" for i, line in enumerate(gt_lines)]
        (root / "preds" / "det" / f"{image_id}.txt").write_text("\n".join(pred_lines) + "\n")

    (root / "gt_lengths.csv").write_text(LENGTHS_CSV)
    (root / "split.txt").write_text("".join(f"{i} test\n" for i in image_ids))
    config_path = root / "config.ini"
    config_path.write_text(CONFIG_TEMPLATE)
    return config_path


@pytest.fixture
def dataset(tmp_path):
    return build_dataset(tmp_path)


def read_csv_rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


class TestReconstruct:
    def test_writes_ply_per_image_and_method(self, dataset, tmp_path):
        assert cli.main(["reconstruct", "--config", str(dataset)]) == 0
        for method in ("realsense", "dav2"):
            for image_id in ("img_a", "img_b"):
                path = tmp_path / "out" / "clouds" / method / f"{image_id}.ply"
                assert path.is_file()
                cloud = read_ply(path)
                assert len(cloud) == W * H  # whole gradient is in range
                assert cloud.colors is not None

        log_rows = read_csv_rows(tmp_path / "out" / "alignment.csv")
        assert log_rows[0][0] == "method"
        assert len(log_rows) == 1 + 4

    def test_alignment_recovers_synthetic_scale_and_shift(self, dataset, tmp_path):
        cli.main(["reconstruct", "--config", str(dataset)])
        rows = {(r[0], r[1]): r for r in read_csv_rows(tmp_path / "out" / "alignment.csv")[1:]}
        s = float(rows[("dav2", "img_a")][2])
        t = float(rows[("dav2", "img_a")][3])
        assert s == pytest.approx(S_TRUE, rel=5e-3)  # mm quantization limits accuracy
        assert t == pytest.approx(T_TRUE, rel=5e-2)
        assert rows[("realsense", "img_a")][2] == "1.0"  # metric input: identity

    def test_fault_injection_skips_and_continues(self, tmp_path):
        config = build_dataset(tmp_path, image_ids=("img_a", "img_b", "img_c"))
        # corrupt one method's file and delete the other's for img_c
        bad = tmp_path / "depth" / "realsense" / "img_c.png"
        Image.fromarray(np.zeros((H, W), np.uint8)).save(bad)  # 8-bit: format error
        (tmp_path / "depth" / "dav2" / "img_c.pfm").unlink()

        assert cli.main(["reconstruct", "--config", str(config)]) == 0
        clouds = tmp_path / "out" / "clouds"
        assert sorted(p.name for p in (clouds / "realsense").glob("*.ply")) == \
            ["img_a.ply", "img_b.ply"]
        assert len(read_csv_rows(tmp_path / "out" / "alignment.csv")) == 1 + 4

    def test_empty_split_gives_empty_input_exit(self, dataset, tmp_path):
        (tmp_path / "split.txt").write_text("")
        assert cli.main(["reconstruct", "--config", str(dataset)]) == cli.EXIT_EMPTY_INPUT

    def test_fixed_distance_alignment_flag(self, dataset, tmp_path):
        code = cli.main(["reconstruct", "--config", str(dataset), "--align", "fixed:0.6",
                         "--out", str(tmp_path / "out_fixed")])
        assert code == 0
        rows = read_csv_rows(tmp_path / "out_fixed" / "alignment.csv")
        assert len(rows) == 1 + 4


class TestMeasure:
    def test_lengths_csv_rows(self, dataset, tmp_path):
        assert cli.main(["measure", "--config", str(dataset)]) == 0
        rows = read_csv_rows(tmp_path / "out" / "lengths.csv")
        assert rows[0] == ["image_id", "fruit_id", "method", "predicted_mm", "actual_mm",
                           "residual_mm"]
        # 3 ground-truth fruits x 2 depth methods
        assert len(rows) == 1 + 6
        methods = {row[2] for row in rows[1:]}
        assert methods == {"realsense", "dav2"}
        for row in rows[1:]:
            assert float(row[3]) > 0
            assert float(row[4]) in (100.0, 105.0, 110.0)

    def test_rerun_is_byte_identical(self, dataset, tmp_path):
        cli.main(["measure", "--config", str(dataset)])
        first = (tmp_path / "out" / "lengths.csv").read_bytes()
        cli.main(["measure", "--config", str(dataset)])
        assert (tmp_path / "out" / "lengths.csv").read_bytes() == first

    def test_methods_agree_on_synthetic_scene(self, dataset, tmp_path):
        # the same scene through metric PNG and aligned inverse PFM must
        # produce nearly identical chords
        cli.main(["measure", "--config", str(dataset)])
        rows = read_csv_rows(tmp_path / "out" / "lengths.csv")[1:]
        by_key = {}
        for image_id, fruit_id, method, predicted, *_ in rows:
            by_key.setdefault((image_id, fruit_id), {})[method] = float(predicted)
        for values in by_key.values():
            assert values["realsense"] == pytest.approx(values["dav2"], rel=2e-3)


class TestEval:
    def test_perfect_predictions_score_one(self, dataset, tmp_path):
        assert cli.main(["eval", "--config", str(dataset)]) == 0
        rows = read_csv_rows(tmp_path / "out" / "metrics.csv")
        assert rows[0][0] == "method"
        (row,) = [r for r in rows[1:]]
        assert row[0] == "det"
        assert [row[1], row[2], row[3]] == ["1.0", "1.0", "1.0"]  # box P/R/mAP
        assert [row[4], row[5], row[6]] == ["1.0", "1.0", "1.0"]  # pose P/R/mAP

    def test_rerun_identical_except_timings(self, dataset, tmp_path):
        cli.main(["eval", "--config", str(dataset)])
        first = read_csv_rows(tmp_path / "out" / "metrics.csv")
        cli.main(["eval", "--config", str(dataset)])
        second = read_csv_rows(tmp_path / "out" / "metrics.csv")
        strip = lambda rows: [row[:-3] for row in rows]
        assert strip(first) == strip(second)


class TestReport:
    def test_artifacts_written(self, dataset, tmp_path):
        cli.main(["measure", "--config", str(dataset)])
        cli.main(["eval", "--config", str(dataset)])
        assert cli.main(["report", "--config", str(dataset)]) == 0

        svg = (tmp_path / "out" / "boxplot.svg").read_text()
        assert svg.startswith("<svg")
        assert "ground truth" in svg
        markdown = (tmp_path / "out" / "report.md").read_text()
        assert "## Length accuracy" in markdown
        assert "## Detection and pose metrics" in markdown

    def test_report_without_lengths_is_empty_input(self, dataset, tmp_path):
        assert cli.main(["report", "--config", str(dataset)]) == cli.EXIT_EMPTY_INPUT

    def test_external_lengths_override(self, dataset, tmp_path):
        cli.main(["measure", "--config", str(dataset)])
        moved = tmp_path / "somewhere.csv"
        moved.write_bytes((tmp_path / "out" / "lengths.csv").read_bytes())
        (tmp_path / "out" / "lengths.csv").unlink()
        assert cli.main(["report", "--config", str(dataset), "--lengths", str(moved)]) == 0


class TestConfig:
    def test_missing_config_file_is_config_error(self, tmp_path):
        assert cli.main(["eval", "--config", str(tmp_path / "none.ini")]) == cli.EXIT_CONFIG_ERROR

    def test_threads_env_override(self, dataset, monkeypatch):
        monkeypatch.setenv("FRUITLET_METRIC_THREADS", "2")
        cfg = load_config(dataset)
        assert cfg.threads == 2

    def test_bad_threads_env_rejected(self, dataset, monkeypatch):
        monkeypatch.setenv("FRUITLET_METRIC_THREADS", "zero")
        from fruitlet_metric.errors import ConfigError

        with pytest.raises(ConfigError):
            load_config(dataset)

    def test_intrinsics_resolved_from_fov(self, dataset):
        cfg = load_config(dataset)
        assert cfg.intrinsics.width == W
        assert cfg.intrinsics.cx == W / 2

    def test_backend_override_applies_to_all(self, dataset):
        cfg = load_config(dataset, backend_override="file-oracle")
        assert all(b.kind == "file-oracle" for b in cfg.pose_backends.values())

    def test_align_override(self, dataset):
        cfg = load_config(dataset, align_override="fixed:0.61")
        assert cfg.alignment.mode == "fixed"
        assert cfg.alignment.fixed_distance_m == 0.61


class TestReferenceValidation:
    def test_missing_reference_dir_is_config_error(self, dataset, tmp_path):
        config_text = dataset.read_text().replace("reference_depth_dir = depth/realsense\n", "")
        dataset.write_text(config_text)
        assert cli.main(["reconstruct", "--config", str(dataset)]) == cli.EXIT_CONFIG_ERROR
        assert cli.main(["measure", "--config", str(dataset)]) == cli.EXIT_CONFIG_ERROR

    def test_fixed_alignment_needs_no_reference(self, dataset, tmp_path):
        config_text = dataset.read_text().replace("reference_depth_dir = depth/realsense\n", "")
        config_text = config_text.replace("align = reference", "align = fixed:0.6")
        dataset.write_text(config_text)
        assert cli.main(["reconstruct", "--config", str(dataset)]) == 0
