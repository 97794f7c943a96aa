import json
import math

import numpy as np
import pytest

from tvglab.core import Annotation, Segment
from tvglab.invert import invert_dataset, make_tvg_instance
from tvglab.metrics import EvalReport, mean_iou, r1_at_m, score_run


def seg(a, b):
    return Segment(float(a), float(b))


class TestR1AtM:
    def test_all_exact_matches(self):
        gts = [seg(0, 5), seg(2, 9), seg(4, 4.5)]
        assert r1_at_m(gts, gts, 0.7) == 100.0

    def test_all_absent(self):
        gts = [seg(0, 5), seg(2, 9)]
        assert r1_at_m([None, None], gts, 0.3) == 0.0

    def test_strict_threshold_counting(self):
        # IoUs {1.0, 0.5, 0.2} at m=0.3: exactly 1.0 and 0.5 pass under strict >
        gts = [seg(0, 10), seg(0, 10), seg(0, 10)]
        preds = [seg(0, 10), seg(0, 20), seg(0, 50)]
        assert r1_at_m(preds, gts, 0.3) == pytest.approx(100.0 * 2 / 3)

    def test_threshold_boundary_strict_vs_inclusive(self):
        gts = [seg(0, 10)]
        preds = [seg(0, 5)]  # IoU exactly 0.5
        assert r1_at_m(preds, gts, 0.5) == 0.0
        assert r1_at_m(preds, gts, 0.5, inclusive=True) == 100.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            r1_at_m([None], [seg(0, 1), seg(1, 2)], 0.3)

    def test_empty_lists(self):
        with pytest.raises(ValueError):
            r1_at_m([], [], 0.5)

    def test_invalid_threshold(self):
        with pytest.raises(ValueError):
            r1_at_m([seg(0, 1)], [seg(0, 1)], 0.0)

    def test_monotone_non_increasing_in_m(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n = int(rng.integers(3, 30))
            gts, preds = [], []
            for _ in range(n):
                a, b = sorted(rng.uniform(0, 50, size=2))
                gts.append(seg(a, b))
                if rng.random() < 0.15:
                    preds.append(None)
                else:
                    c, d = sorted(rng.uniform(0, 50, size=2))
                    preds.append(seg(c, d))
            values = [r1_at_m(preds, gts, m) for m in (0.3, 0.5, 0.7)]
            assert values[0] >= values[1] >= values[2]


class TestMeanIou:
    def test_identical(self):
        gts = [seg(0, 5), seg(1, 9)]
        assert mean_iou(gts, gts) == 1.0

    def test_hand_average(self):
        gts = [seg(0, 10), seg(0, 10), seg(0, 10)]
        preds = [seg(0, 10), seg(0, 5), seg(20, 30)]
        assert mean_iou(preds, gts) == pytest.approx(0.5)

    def test_single_disjoint_pair(self):
        assert mean_iou([seg(0, 1)], [seg(5, 6)]) == 0.0

    def test_absent_counts_zero(self):
        assert mean_iou([None, seg(0, 10)], [seg(0, 10), seg(0, 10)]) == 0.5

    def test_bounds_and_perfection_condition(self):
        gts = [seg(0, 5), seg(1, 9)]
        assert 0.0 <= mean_iou([seg(0, 5), seg(2, 8)], gts) < 1.0


class TestScoreRun:
    def make_run(self):
        annotations = [
            Annotation(f"v{i}", 30.0, seg(10, 20), "Person closed the door") for i in range(3)
        ]
        instances, _ = invert_dataset(annotations)
        responses = []
        for instance in instances:
            if instance.kind.value == "tvg":
                responses.append("<think>t</think> <answer>10.0 to 20.0</answer>")
            elif instance.kind.value == "vc":
                responses.append("<think>t</think> <answer>closes</answer>")
            elif instance.kind.value == "ar":
                responses.append("<think>t</think> <answer>closed</answer>")
            else:
                responses.append("<think>t</think> <answer>someone is closing</answer>")
        return instances, responses

    def test_all_perfect_run(self):
        instances, responses = self.make_run()
        report = score_run(instances, responses)
        assert report.n_samples == 12
        assert report.miou == 1.0
        assert all(v == 100.0 for v in report.r1.values())
        assert report.accuracy == {"vc": 1.0, "ar": 1.0, "vd": 1.0}

    def test_broken_templates_are_misses(self):
        instances, responses = self.make_run()
        responses = ["garbage" if i.kind.value == "tvg" else r
                     for i, r in zip(instances, responses)]
        report = score_run(instances, responses)
        assert report.miou == 0.0
        assert all(v == 0.0 for v in report.r1.values())

    def test_misalignment_rejected(self):
        instances, responses = self.make_run()
        with pytest.raises(ValueError):
            score_run(instances, responses[:-1])

    def test_pure_function_stability(self):
        instances, responses = self.make_run()
        a = score_run(instances, responses, metadata={"run": "x"})
        b = score_run(instances, responses, metadata={"run": "x"})
        assert a == b


class TestReportEmission:
    def make_report(self):
        return EvalReport(
            n_samples=4,
            r1={0.3: 66.666666, 0.5: 33.333333, 0.7: 0.0},
            miou=0.123456789,
            accuracy={"vc": 0.5, "ar": 0.25, "vd": 1.0},
            metadata={"seed": "7"},
        )

    def test_four_decimal_canonical_json(self, tmp_path):
        report = self.make_report()
        report.write(tmp_path, csv_too=True)
        record = json.loads((tmp_path / "report.json").read_text())
        assert record["miou"] == 0.1235
        assert record["r1"] == {"0.3": 66.6667, "0.5": 33.3333, "0.7": 0.0}
        assert (tmp_path / "report.csv").is_file()

    def test_table_is_aligned_and_diffable(self, tmp_path):
        report = self.make_report()
        text = report.to_table()
        assert "mIoU" in text and "0.1235" in text
        assert report.to_table() == text  # stable across calls
