"""The coarse-to-fine orchestrator: determinism, traces, budgets, sweeps."""

import dataclasses

import numpy as np
import pytest

from pyramvs.camera import CameraParams
from pyramvs.config import PipelineConfig
from pyramvs.errors import InputError, NumericalError
from pyramvs.pipeline import (
    ablation_run,
    calibrate_interval,
    run_pipeline,
)
from pyramvs.synth import SceneSpec, render_scene


@pytest.fixture(scope="module")
def small_step_scene():
    return render_scene(SceneSpec(surface="step", width=128, height=96))


@pytest.fixture(scope="module")
def plane_run(small_plane_scene):
    scene = small_plane_scene
    return scene, run_pipeline(scene.images, scene.cameras, PipelineConfig())


class TestRunPipeline:
    def test_deterministic(self, small_plane_scene):
        scene = small_plane_scene
        config = PipelineConfig()
        a = run_pipeline(scene.images, scene.cameras, config)
        b = run_pipeline(scene.images, scene.cameras, config)
        assert np.array_equal(a.depth, b.depth)
        assert np.array_equal(a.confidence, b.confidence)
        for d_a, d_b in zip(a.stage_depths, b.stage_depths):
            assert np.array_equal(d_a, d_b)

    def test_traces_follow_schedule(self, plane_run):
        scene, outcome = plane_run
        assert [t.stage for t in outcome.traces] == [1, 2, 3]
        assert [t.strategy for t in outcome.traces] == ["dhs1", "dhs2", "dhs3"]
        assert [t.hyp_count for t in outcome.traces] == [48, 32, 8]
        assert [t.shape for t in outcome.traces] == [(24, 32), (48, 64), (96, 128)]
        assert outcome.depth.shape == (96, 128)
        assert outcome.confidence.shape == (96, 128)
        assert len(outcome.stage_depths) == 3

    def test_stage_widths_shrink(self, plane_run):
        scene, outcome = plane_run
        cam = scene.cameras[0]
        full_range = cam.depth_max - cam.depth_min
        t1, t2, t3 = outcome.traces
        assert abs(t1.width_median - full_range) < 1e-9
        assert t1.width_min == t1.width_max == t1.width_median
        for trace in outcome.traces:
            assert trace.width_min > 0
            assert trace.width_min <= trace.width_median <= trace.width_max
        assert t2.width_median < t1.width_median
        assert t3.width_median < t1.width_median

    def test_memory_budget_two_volumes(self, plane_run):
        _, outcome = plane_run
        for trace in outcome.traces:
            assert 0 < trace.volume_bytes
            assert trace.peak_bytes <= 2 * trace.volume_bytes

    def test_confidence_in_unit_interval(self, plane_run):
        _, outcome = plane_run
        assert outcome.confidence.min() > 0.0
        assert outcome.confidence.max() <= 1.0 + 1e-12

    def test_finest_spacing_from_last_trace(self, plane_run):
        _, outcome = plane_run
        last = outcome.traces[-1]
        assert abs(outcome.finest_spacing - last.width_median / (last.hyp_count - 1)) < 1e-15

    def test_error_improves_over_stages(self, plane_run):
        scene, outcome = plane_run
        gt = scene.gt_depths[0]
        errors = []
        for depth_map in outcome.stage_depths:
            h, w = depth_map.shape
            scale = gt.shape[1] // w
            gt_level = gt[::scale, ::scale][:h, :w]
            errors.append(float(np.median(np.abs(depth_map - gt_level))))
        assert errors[-1] < errors[0]

    def test_trace_summary_round_trips(self, plane_run):
        _, outcome = plane_run
        summary = outcome.traces[0].summary()
        assert summary["stage"] == 1
        assert summary["strategy"] == "dhs1"
        assert set(summary) == {
            "stage", "strategy", "shape", "hyp_count", "width_min",
            "width_median", "width_max", "seconds", "volume_bytes",
            "peak_bytes", "invalid_share",
        }

    def test_extra_levels_repeat_last_count(self, small_plane_scene):
        scene = small_plane_scene
        config = PipelineConfig(levels=4, hyp_counts=(16, 8, 4))
        outcome = run_pipeline(scene.images, scene.cameras, config)
        assert [t.hyp_count for t in outcome.traces] == [16, 8, 4, 4]
        assert outcome.traces[0].shape == (12, 16)
        assert outcome.depth.shape == (96, 128)

    def test_auf_flag_only_touches_later_stages(self, small_plane_scene):
        scene = small_plane_scene
        on = run_pipeline(scene.images, scene.cameras, PipelineConfig(auf=True))
        off = run_pipeline(scene.images, scene.cameras, PipelineConfig(auf=False))
        assert np.array_equal(on.stage_depths[0], off.stage_depths[0])

    def test_stage1_shared_across_overrides(self, small_plane_scene):
        scene = small_plane_scene
        config = PipelineConfig()
        baseline = None
        for override in ("full", "dhs1", "dhs1+dhs2", "dhs1+dhs3"):
            outcome = run_pipeline(scene.images, scene.cameras, config, strategy=override)
            if baseline is None:
                baseline = outcome.stage_depths[0]
            else:
                assert np.array_equal(outcome.stage_depths[0], baseline)
            expected = {
                "full": ["dhs1", "dhs2", "dhs3"],
                "dhs1": ["dhs1", "dhs1", "dhs1"],
                "dhs1+dhs2": ["dhs1", "dhs2", "dhs2"],
                "dhs1+dhs3": ["dhs1", "dhs3", "dhs3"],
            }[override]
            assert [t.strategy for t in outcome.traces] == expected

    def test_interval_narrows_slower_on_curved_scene(self, small_plane_scene, small_sphere_scene):
        # The stage-2 interval is variance-driven, so the sphere, which keeps
        # residual uncertainty after the coarse sweep, must retain a larger
        # share of its search range than the flat plane does.
        config = PipelineConfig()
        ratios = {}
        for name, scene in [("plane", small_plane_scene), ("sphere", small_sphere_scene)]:
            outcome = run_pipeline(scene.images, scene.cameras, config)
            ratios[name] = outcome.traces[1].width_median / outcome.traces[0].width_median
        assert ratios["sphere"] > ratios["plane"]

    def test_disjoint_views_abort(self):
        rng = np.random.default_rng(51)
        images = [rng.random((32, 32)), rng.random((32, 32))]
        intr = np.array([[50.0, 0.0, 15.5], [0.0, 50.0, 15.5], [0.0, 0.0, 1.0]])
        ref = CameraParams(intr, np.eye(3), np.zeros(3), 1.0, 100.0)
        far = CameraParams(intr, np.eye(3), np.array([1e6, 0.0, 0.0]), 1.0, 100.0)
        with pytest.raises(NumericalError):
            run_pipeline(images, [ref, far], PipelineConfig(levels=2, hyp_counts=(8, 4)))

    def test_input_validation(self, small_plane_scene):
        scene = small_plane_scene
        config = PipelineConfig()
        with pytest.raises(InputError):
            run_pipeline(scene.images[:1], scene.cameras[:1], config)
        with pytest.raises(InputError):
            run_pipeline(scene.images, scene.cameras[:2], config)
        with pytest.raises(InputError):
            run_pipeline(scene.images, scene.cameras, config, strategy="dhs9")
        mixed = [scene.images[0], scene.images[1][:64, :64]] + list(scene.images[2:])
        with pytest.raises(InputError):
            run_pipeline(mixed, scene.cameras, config)


class TestAblationRun:
    def test_table_structure(self, small_step_scene):
        table = ablation_run(small_step_scene, PipelineConfig())
        assert set(table["schedules"]) == {"full", "dhs1", "dhs1+dhs2", "dhs1+dhs3"}
        assert table["spacing"] > 0
        for stats in table["schedules"].values():
            assert set(stats) == {
                "mean_abs", "median_abs", "frac_within_1", "frac_within_2", "frac_within_4",
            }
            assert 0.0 <= stats["frac_within_1"] <= 1.0
            assert stats["frac_within_1"] <= stats["frac_within_2"] <= stats["frac_within_4"]

    def test_shared_spacing_is_full_schedules(self, small_step_scene):
        scene = small_step_scene
        table = ablation_run(scene, PipelineConfig())
        outcome = run_pipeline(scene.images, scene.cameras, PipelineConfig(), strategy="full")
        assert abs(table["spacing"] - outcome.finest_spacing) < 1e-12


class TestCalibrateInterval:
    def test_grid_rows_and_best(self, small_plane_scene):
        scene = small_plane_scene
        result = calibrate_interval(scene, PipelineConfig(), alphas=[0.5, 1.0], betas=[0.0])
        assert len(result["rows"]) == 2
        for row in result["rows"]:
            assert row["beta"] == 0.0
            assert row["mean_abs"] >= 0.0
            assert row["stage2_width_median"] > 0.0
        assert result["best"]["alpha"] in (0.5, 1.0)
        medians = {row["alpha"]: row["median_abs"] for row in result["rows"]}
        assert medians[result["best"]["alpha"]] == min(medians.values())

    def test_wider_alpha_widens_stage2(self, small_plane_scene):
        scene = small_plane_scene
        result = calibrate_interval(scene, PipelineConfig(), alphas=[0.5, 2.0], betas=[0.0])
        widths = {row["alpha"]: row["stage2_width_median"] for row in result["rows"]}
        assert widths[2.0] >= widths[0.5]

    def test_grid_validation(self, small_plane_scene):
        scene = small_plane_scene
        with pytest.raises(InputError):
            calibrate_interval(scene, PipelineConfig(), alphas=[], betas=[0.0])
        with pytest.raises(InputError):
            calibrate_interval(scene, PipelineConfig(), alphas=[1.0], betas=[-1.0])
        with pytest.raises(InputError):
            calibrate_interval(scene, PipelineConfig(), alphas=[float("nan")], betas=[0.0])
