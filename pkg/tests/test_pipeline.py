"""测试端到端流水线"""
import json

import pytest

from geoweak.config import ExperimentConfig
from geoweak.core.models import Split
from geoweak.errors import StageError
from geoweak.harness.pipeline import (
    ARM_BASELINE, ARM_TEACHER, ARM_WSSOD, FractionResult, run_experiment,
)
from geoweak.io.importer import parse_detection_dataset, parse_split_manifest


def make_config(out_dir, **overrides):
    values = dict(synth_images=80, fractions=[0.1, 0.3, 0.5], seed=7, workers=2,
                  out_dir=str(out_dir))
    values.update(overrides)
    return ExperimentConfig(**values)


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


class TestRunExperiment:
    """测试完整实验"""

    def test_zero_noise_teacher_is_perfect(self, tmp_path):
        record = run_experiment(make_config(tmp_path, fractions=[0.1]))
        teacher = record.fractions[0].results[ARM_TEACHER]
        for t in teacher.thresholds:
            assert teacher.mean_ap[t] == pytest.approx(1.0, abs=1e-12)

    def test_center_noise_hurts_high_iou(self, tmp_path):
        record = run_experiment(make_config(tmp_path, fractions=[0.1], center_sigma=0.15))
        teacher = record.fractions[0].results[ARM_TEACHER]
        assert teacher.mean_ap[0.75] < teacher.mean_ap[0.25]

    def test_every_fraction_has_all_arms(self, tmp_path):
        record = run_experiment(make_config(tmp_path))
        assert [f.fraction for f in record.fractions] == [0.1, 0.3, 0.5]
        for f in record.fractions:
            assert set(f.results) == {ARM_BASELINE, ARM_WSSOD, ARM_TEACHER}
            assert f.strong_images + f.weak_images == record.split_counts["train"]
        summary = record.summary()
        assert set(summary[ARM_WSSOD]) == {"10pct", "30pct", "50pct"}

    def test_strong_counts_grow_with_fraction(self, tmp_path):
        record = run_experiment(make_config(tmp_path))
        strong = [f.strong_images for f in record.fractions]
        assert strong == sorted(strong)

    def test_outputs(self, tmp_path):
        run_experiment(make_config(tmp_path, fractions=[0.5]))
        for name in ("dataset.json", "splits.csv", "run_record.json", "report.md", "report.csv"):
            assert (tmp_path / name).exists()
        arm_dir = tmp_path / "fraction_50pct"
        for name in ("train.json", "manifest.json", "pseudo_labels.json", "student_train.json",
                     f"eval_{ARM_WSSOD}.json", f"eval_{ARM_BASELINE}.csv"):
            assert (arm_dir / name).exists()

        student = parse_detection_dataset(str(arm_dir / "student_train.json"))
        assert student.report.ok
        split = parse_split_manifest(str(tmp_path / "splits.csv"))
        assert student.dataset.image_ids == split.ids_in(Split.TRAIN)

        record = json.loads((tmp_path / "run_record.json").read_text(encoding="utf-8"))
        assert "started_at" not in record
        assert record["fractions"][0]["fraction"] == 0.5
        assert "| wssod-with-pseudo vs baseline-strong-only |" in \
            (tmp_path / "report.md").read_text(encoding="utf-8")

    def test_exported_weak_points_follow_point_source(self, tmp_path):
        def weak_points(out_dir):
            path = out_dir / "fraction_50pct" / "train.json"
            data = json.loads(path.read_text(encoding="utf-8"))
            return [a for a in data["annotations"] if "point" in a]

        run_experiment(make_config(tmp_path / "src", fractions=[0.5],
                                   point_source="source_point"))
        points = weak_points(tmp_path / "src")
        assert points
        assert all(a["point"] == a["source_point"] for a in points)

        run_experiment(make_config(tmp_path / "center", fractions=[0.5]))
        points = weak_points(tmp_path / "center")
        assert points
        assert any(a["point"] != a["source_point"] for a in points)

    def test_byte_identical_runs(self, tmp_path):
        a = run_experiment(make_config(tmp_path / "a", center_sigma=0.1, drop_rate=0.1))
        b = run_experiment(make_config(tmp_path / "b", center_sigma=0.1, drop_rate=0.1))
        assert a == b
        assert tree(tmp_path / "a") == tree(tmp_path / "b")

    def test_region_strategy(self, tmp_path):
        record = run_experiment(make_config(tmp_path, strategy="region", synth_countries=3,
                                            synth_images=200,
                                            fractions=[0.5]))
        assert record.split_counts["teacher_eval"] > 0
        assert record.split_counts["train"] > 0

    def test_missing_dataset_names_stage(self, tmp_path):
        cfg = make_config(tmp_path, dataset_path=str(tmp_path / "missing.json"))
        with pytest.raises(StageError) as exc:
            run_experiment(cfg)
        assert exc.value.stage == "ingest"
        assert exc.value.exit_code == 2

    def test_unreachable_fraction_names_stage(self, tmp_path):
        with pytest.raises(StageError) as exc:
            run_experiment(make_config(tmp_path, fractions=[0.001]))
        assert exc.value.stage.startswith("fractions")
        assert exc.value.exit_code == 1

    def test_missing_predictions_file(self, tmp_path):
        cfg = make_config(tmp_path, fractions=[0.5],
                          predictions_path=str(tmp_path / "preds_{fraction}.json"))
        with pytest.raises(StageError) as exc:
            run_experiment(cfg)
        assert exc.value.stage.startswith("pseudolabel")


class TestFractionResult:
    """测试对比组完整性"""

    def test_missing_arm(self):
        with pytest.raises(ValueError):
            FractionResult(fraction=0.1, strong_images=1, weak_images=1, pseudo_boxes=0,
                           results={})
