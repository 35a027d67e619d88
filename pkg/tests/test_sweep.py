from __future__ import annotations

import json

import pytest

from probdet.core import BoundingBox, Detection, Frame, GroundTruthObject, LabelVector, ProbabilisticBox
from probdet.fileio import (
    DetectionSequence,
    GroundTruthSequence,
    SchemaError,
    combine_with_ground_truth,
    frame_sources,
    load_detections,
    save_detections,
    save_ground_truth,
)
from probdet.heuristics import PipelineConfig, run_pipeline
from probdet.merge import MergeConfig
from probdet.pdq import EvalSummary, evaluate_sequence
from probdet.sweep import (
    DetectionCache,
    SweepGrid,
    SweepResult,
    cache_detections,
    load_sweep_grid,
    report,
    run_sweep,
)
from probdet.synth import make_benchmark

from .conftest import make_detection


def tp_fp_scene():
    """One frame: a weak true positive (score 0.3) plus nothing else."""
    box = BoundingBox(4, 4, 12, 12)
    gt = GroundTruthSequence(num_classes=4, frames=(
        Frame(frame_id=0, image_width=20, image_height=20,
              ground_truths=(GroundTruthObject(class_id=1, box=box),)),
    ))
    det = Detection(pbox=ProbabilisticBox.crisp(box),
                    labels=LabelVector.one_hot(1, 4, 0.3))
    dets = DetectionSequence(num_classes=4, frames=(
        Frame(frame_id=0, image_width=20, image_height=20, detections=(det,)),
    ))
    return dets, gt


class TestSweepGrid:
    def test_cardinality(self):
        grid = SweepGrid(
            thresholds=(0.018, 0.05, 0.1, 0.3, 0.5),
            box_ratios=(0.05, 0.1, 0.2, 0.3),
            covariance_scales=(0.1, 0.2, 0.3, 0.4, 0.5),
            nms_ious=(0.1, 0.2, 0.3, 0.4, 0.5),
        )
        assert len(grid) == 500
        assert len(grid.configs(PipelineConfig(num_classes=4))) == 500

    def test_validation(self):
        with pytest.raises(ValueError):
            SweepGrid(thresholds=())
        with pytest.raises(ValueError):
            SweepGrid(box_ratios=(1.0,))
        with pytest.raises(ValueError):
            SweepGrid(strategies=("nope",))

    def test_grid_file_round_trip(self, tmp_path):
        path = tmp_path / "grid.json"
        path.write_text(json.dumps({
            "thresholds": [0.1, 0.5],
            "strategies": ["most_confident", "average"],
        }))
        grid = load_sweep_grid(path)
        assert grid.thresholds == (0.1, 0.5)
        assert grid.strategies == ("most_confident", "average")
        assert grid.box_ratios == (0.0,)

    def test_unknown_grid_key_rejected(self, tmp_path):
        path = tmp_path / "grid.json"
        path.write_text(json.dumps({"treshold": [0.1]}))
        with pytest.raises(SchemaError):
            load_sweep_grid(path)


class TestCache:
    def test_round_trip_field_for_field(self, tmp_path):
        detectors, _ = make_benchmark(6, seed=3)
        paths = []
        for i, seq in enumerate(detectors):
            p = tmp_path / f"raw_{i}.json"
            save_detections(seq, p)
            paths.append(p)
        cache = cache_detections(paths, tmp_path / "cache")
        reloaded = cache.load()
        assert reloaded == detectors

    def test_manifest_lists_sources(self, tmp_path):
        detectors, _ = make_benchmark(3, seed=5)
        paths = []
        for i, seq in enumerate(detectors):
            p = tmp_path / f"raw_{i}.json"
            save_detections(seq, p)
            paths.append(p)
        cache = cache_detections(paths, tmp_path / "cache")
        assert len(cache.source_files) == 2
        reopened = DetectionCache.open(tmp_path / "cache")
        assert reopened == cache

    def test_corrupt_source_names_frame(self, tmp_path):
        doc = {
            "schema_version": 1, "num_classes": 4,
            "frames": [
                {"frame_id": 0, "image_width": 10, "image_height": 10, "detections": []},
                {"frame_id": 3, "image_width": 10, "image_height": 10,
                 "detections": [{"bbox": [0, 0, 5, 5], "label_probs": [0.5, 0.5]}]},
            ],
        }
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        with pytest.raises(SchemaError) as err:
            cache_detections([bad], tmp_path / "cache")
        assert err.value.frame_id == 3
        assert "bad.json" in err.value.path


class TestRunSweep:
    def test_single_point_equals_direct_run(self, tmp_path):
        detectors, gt = make_benchmark(8, seed=11)
        grid = SweepGrid(thresholds=(0.2,), box_ratios=(0.1,),
                         covariance_scales=(0.3,), nms_ious=(0.4,))
        base = PipelineConfig(num_classes=gt.num_classes,
                              merge=MergeConfig(0.5, "most_confident"))
        result = run_sweep(detectors, gt, grid, base=base)
        assert len(result.rows) == 1
        config, summary = result.rows[0]

        sources = frame_sources(detectors)
        meta = tuple((f.frame_id, f.image_width, f.image_height) for f in gt.frames)
        frames = combine_with_ground_truth(gt, run_pipeline(sources, config), meta)
        assert summary == evaluate_sequence(frames)

    def test_rows_match_direct_runs_at_random_points(self, rng):
        detectors, gt = make_benchmark(6, seed=7)
        grid = SweepGrid(thresholds=(0.0, 0.45), covariance_scales=(0.0, 0.3),
                         strategies=("most_confident", "average"))
        base = PipelineConfig(num_classes=gt.num_classes,
                              merge=MergeConfig(0.5, "most_confident"))
        result = run_sweep(detectors, gt, grid, base=base)
        assert len(result.rows) == 8
        sources = frame_sources(detectors)
        meta = tuple((f.frame_id, f.image_width, f.image_height) for f in gt.frames)
        for idx in rng.choice(len(result.rows), size=3, replace=False):
            config, summary = result.rows[int(idx)]
            frames = combine_with_ground_truth(gt, run_pipeline(sources, config), meta)
            assert summary == evaluate_sequence(frames)

    def test_threshold_that_kills_tp_lowers_pdq(self):
        dets, gt = tp_fp_scene()
        grid = SweepGrid(thresholds=(0.1, 0.5))
        base = PipelineConfig(num_classes=4, merge=MergeConfig(0.5, "most_confident"))
        result = run_sweep([dets], gt, grid, base=base)
        low, high = result.rows[0][1], result.rows[1][1]
        assert low.pdq_score > high.pdq_score
        assert high.pdq_score == 0.0
        assert high.total_fn == 1
        assert result.best == 0

    def test_best_row_has_max_pdq(self):
        detectors, gt = make_benchmark(5, seed=19)
        grid = SweepGrid(thresholds=(0.0, 0.3, 0.7), covariance_scales=(0.0, 0.3))
        result = run_sweep(detectors, gt, grid,
                           base=PipelineConfig(num_classes=gt.num_classes))
        best_pdq = result.best_row[1].pdq_score
        assert all(row[1].pdq_score <= best_pdq for row in result.rows)

    def test_worker_count_does_not_change_rows(self):
        detectors, gt = make_benchmark(6, seed=23)
        grid = SweepGrid(thresholds=(0.0, 0.4), covariance_scales=(0.0, 0.3))
        base = PipelineConfig(num_classes=gt.num_classes)
        serial = run_sweep(detectors, gt, grid, base=base, workers=1)
        parallel = run_sweep(detectors, gt, grid, base=base, workers=2)
        assert serial == parallel
        assert report(serial, "csv") == report(parallel, "csv")

    def test_frame_mismatch_fails_before_evaluation(self):
        detectors, gt = make_benchmark(4, seed=29)
        short_gt = GroundTruthSequence(num_classes=gt.num_classes,
                                       frames=gt.frames[:-1])
        with pytest.raises(SchemaError):
            run_sweep(detectors, short_gt, SweepGrid())

    def test_num_classes_mismatch_rejected(self):
        detectors, gt = make_benchmark(4, seed=29)
        bad_gt = GroundTruthSequence(num_classes=gt.num_classes + 1, frames=gt.frames)
        with pytest.raises(SchemaError):
            run_sweep(detectors, bad_gt, SweepGrid())


class TestReport:
    def _single_row_result(self, pdq=0.22569):
        config = PipelineConfig(confidence_threshold=0.018, box_reduction_ratio=0.1,
                                covariance_scale=0.3, final_nms_iou=0.3,
                                num_classes=30)
        summary = EvalSummary(pdq_score=pdq, avg_ppdq=0.409, avg_spatial_q=0.464,
                              avg_label_q=0.498, avg_fp_quality=0.835,
                              total_tp=58961, total_fp=112689, total_fn=29128)
        return SweepResult(rows=((config, summary),), best=0)

    def test_header_and_single_row(self):
        text = report(self._single_row_result(), "csv")
        lines = text.splitlines()
        assert len(lines) == 2
        assert lines[0] == ("threshold,box_ratio,covariance_scale,nms_iou,strategy,"
                            "PDQ Score,Avg. pPDQ,Avg. FP,Avg. SQ,Avg. LQ,"
                            "TPs,FPs,FNs,pdq_raw,best")

    def test_pdq_rendered_as_scaled_percentage(self):
        text = report(self._single_row_result(pdq=0.22569), "csv")
        row = text.splitlines()[1].split(",")
        assert row[5] == "22.569"
        assert row[13] == "0.22569"
        assert row[14] == "*"

    def test_golden_row_format(self):
        text = report(self._single_row_result(), "csv")
        assert text.splitlines()[1] == (
            "0.018,0.1,0.3,0.3,most_confident,"
            "22.569,0.409,0.835,0.464,0.498,"
            "58961,112689,29128,0.22569,*"
        )

    def test_text_format_aligned(self):
        text = report(self._single_row_result(), "text")
        lines = text.splitlines()
        assert lines[0].startswith("threshold")
        assert "22.569" in lines[1]

    def test_empty_result_rejected(self):
        with pytest.raises(ValueError):
            report(SweepResult(rows=(), best=0), "csv")


class TestCacheLosslessness:
    def test_evaluation_from_cache_equals_from_sources(self, tmp_path):
        detectors, gt = make_benchmark(5, seed=31)
        paths = []
        for i, seq in enumerate(detectors):
            p = tmp_path / f"raw_{i}.json"
            save_detections(seq, p)
            paths.append(p)
        cache = cache_detections(paths, tmp_path / "cache")
        grid = SweepGrid(thresholds=(0.0, 0.4))
        base = PipelineConfig(num_classes=gt.num_classes)
        from_cache = run_sweep(cache, gt, grid, base=base)
        from_sources = run_sweep([load_detections(p) for p in paths], gt, grid, base=base)
        assert from_cache == from_sources
