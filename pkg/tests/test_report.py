import numpy as np
import pytest

from fruitlet_metric.errors import EmptyInputError, SchemaError
from fruitlet_metric.evaluation import LengthRecord, length_error_stats
from fruitlet_metric.report import (
    box_stats,
    metrics_table_md,
    read_lengths_csv,
    render_boxplot_svg,
    render_report_md,
    write_lengths_csv,
)


class TestBoxStats:
    def test_five_record_hand_computation(self):
        # sorted [10, 12, 14, 16, 100]; type-7 positions (n-1)*q land on
        # indices 1, 2, 3 exactly -> quartiles 12, 14, 16; IQR 4 gives
        # fences [6, 22], so 100 is the lone outlier and whiskers hug [10, 16]
        stats = box_stats([16, 12, 100, 10, 14], "dpt")
        assert (stats.q1, stats.median, stats.q3) == (12.0, 14.0, 16.0)
        assert (stats.whisker_low, stats.whisker_high) == (10.0, 16.0)
        assert stats.outliers == (100.0,)
        assert stats.n == 5

    def test_interpolated_quartiles(self):
        # [1, 2, 3, 4]: q1 position 0.75 -> 1.75, q3 position 2.25 -> 3.25
        stats = box_stats([1, 2, 3, 4], "x")
        assert stats.q1 == pytest.approx(1.75)
        assert stats.median == pytest.approx(2.5)
        assert stats.q3 == pytest.approx(3.25)

    def test_matches_numpy_type7_on_random_data(self):
        rng = np.random.default_rng(21)
        values = rng.uniform(30, 90, size=37)
        stats = box_stats(values, "x")
        assert stats.q1 == np.quantile(values, 0.25)
        assert stats.median == np.quantile(values, 0.5)
        assert stats.q3 == np.quantile(values, 0.75)

    def test_degenerate_identical_values(self):
        stats = box_stats([50.0] * 6, "flat")
        assert stats.q1 == stats.median == stats.q3 == 50.0
        assert stats.whisker_low == stats.whisker_high == 50.0
        assert stats.outliers == ()

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            box_stats([], "x")


class TestBoxplotSvg:
    def test_degenerate_box_renders(self):
        svg = render_boxplot_svg([box_stats([50.0] * 4, "flat")])
        assert svg.startswith("<svg")
        assert 'height="0' in svg  # zero-height box body

    def test_missing_method_noted(self):
        svg = render_boxplot_svg([box_stats([1, 2, 3], "a")], missing=["dpt"])
        assert "no data: dpt" in svg

    def test_deterministic(self):
        boxes = [box_stats([3, 1, 2, 9], "a"), box_stats([5, 5.5, 6], "b")]
        assert render_boxplot_svg(boxes) == render_boxplot_svg(boxes)

    def test_outliers_drawn_as_circles(self):
        svg = render_boxplot_svg([box_stats([10, 12, 14, 16, 100], "a")])
        assert svg.count("<circle") == 1

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            render_boxplot_svg([])


class TestLengthsCsv:
    def _records(self):
        return [
            LengthRecord("img_2", "f1", 60.5, 59.0, "realsense"),
            LengthRecord("img_1", "f2", 58.0, 57.5, "dpt"),
            LengthRecord("img_1", "f1", 61.0, 62.0, "dpt"),
        ]

    def test_rows_sorted_by_method_image_fruit(self):
        lines = write_lengths_csv(self._records()).splitlines()
        assert lines[0] == "image_id,fruit_id,method,predicted_mm,actual_mm,residual_mm"
        assert [line.split(",")[2] for line in lines[1:]] == ["dpt", "dpt", "realsense"]
        assert [line.split(",")[0] for line in lines[1:]] == ["img_1", "img_1", "img_2"]

    def test_round_trip(self):
        text = write_lengths_csv(self._records())
        loaded = read_lengths_csv(text)
        assert {(r.image_id, r.fruit_id, r.method) for r in loaded} == \
            {(r.image_id, r.fruit_id, r.method) for r in self._records()}
        assert all(any(r.predicted_mm == s.predicted_mm and r.actual_mm == s.actual_mm
                       for s in self._records()) for r in loaded)

    def test_byte_determinism(self):
        assert write_lengths_csv(self._records()) == write_lengths_csv(self._records()[::-1])

    def test_bad_header_rejected(self):
        with pytest.raises(SchemaError):
            read_lengths_csv("a,b,c\n")


class TestMetricsTable:
    CSV = (
        "method,box_precision,box_recall,box_map50,pose_precision,pose_recall,pose_map50,"
        "preprocess_ms,inference_ms,postprocess_ms\n"
        "yolo11n,0.91,0.872,0.94,0.915,0.889,0.95,1.5,2.7,0.9\n"
        "yolov8n,0.86,0.905,0.934,0.877,0.925,0.96,1.4,7.8,1.1\n"
    )

    def test_leaders_bolded(self):
        table = metrics_table_md(self.CSV)
        lines = table.splitlines()
        yolo11 = next(line for line in lines if "yolo11n" in line)
        yolov8 = next(line for line in lines if "yolov8n" in line)
        assert "**0.9100**" in yolo11       # higher precision wins
        assert "**0.9050**" in yolov8       # higher recall wins
        assert "**2.70**" in yolo11         # lower inference time wins
        assert "**7.80**" not in yolov8

    def test_blank_cells_render_dash(self):
        csv_text = self.CSV.replace("0.95,1.5", ",1.5")
        table = metrics_table_md(csv_text)
        assert "| - |" in table.replace("  ", " ")

    def test_bad_header_rejected(self):
        with pytest.raises(SchemaError):
            metrics_table_md("method,foo\nx,1\n")


class TestReportMd:
    def test_four_decimal_error_stats(self):
        records = [
            LengthRecord("img", "f1", 60.0, 62.0, "dpt"),
            LengthRecord("img", "f2", 58.0, 57.0, "dpt"),
        ]
        stats = {"dpt": length_error_stats(records)}
        markdown = render_report_md(stats)
        expected_rmse = f"{stats['dpt'].rmse_mm:.4f}"
        assert expected_rmse in markdown
        assert "![length distribution](boxplot.svg)" in markdown

    def test_missing_methods_listed(self):
        markdown = render_report_md({}, missing_methods=["realsense"])
        assert "realsense" in markdown
