"""Tests for the closed-loop runner, metrics and comparisons.

Full-scale behaviour is covered by the acceptance suite; these tests
use small camera windows so each run takes milliseconds.
"""

import numpy as np
import pytest

from visuomotor import harness
from visuomotor.controllers import ControllerConfig, ControllerKind, ErrorHistory, choose_action
from visuomotor.errors import ConfigError, NumericError
from visuomotor.harness import (
    ExperimentConfig,
    StepRecord,
    compute_metrics,
    default_config,
    initial_camera,
    load_world,
    run_comparison,
    run_experiment,
)
from visuomotor.world import MotorCommand, NoiseModel, WorldImage, to_pgm_p2


def tiny_config(kind=ControllerKind.RM, seed=0, steps=50, sigma=0.01, **kwargs):
    kwargs.setdefault("camera", 4)
    kwargs.setdefault("hidden_count", 6)
    return default_config(kind, seed, steps=steps, sigma=sigma, **kwargs)


def record(t, x, y, cmd=MotorCommand.STAY, error=0.1):
    return StepRecord(t=t, cam_x=x, cam_y=y, command=cmd, error=error)


# ---------------------------------------------------------------------------
# Single runs


def test_single_step_run_contract():
    result = run_experiment(tiny_config(steps=1))
    assert result.valid
    assert len(result.trace) == 1
    assert result.elm_state.samples_seen == 1
    assert result.metrics is not None


def test_same_master_seed_gives_identical_runs():
    config = tiny_config(kind=ControllerKind.MAXLP, seed=42, steps=120)
    one = run_experiment(config)
    two = run_experiment(config)
    assert one.trace == two.trace
    assert one.elm_state.readout.tobytes() == two.elm_state.readout.tobytes()


def test_different_master_seeds_differ():
    a = run_experiment(tiny_config(seed=1, steps=60))
    b = run_experiment(tiny_config(seed=2, steps=60))
    assert a.trace != b.trace


def test_forced_stay_noise_free_error_collapses():
    config = tiny_config(seed=3, steps=60, sigma=0.0)
    result = run_experiment(config, force_command=MotorCommand.STAY)
    errors = [r.error for r in result.trace]
    below = [i for i, e in enumerate(errors) if e < 1e-6]
    assert below and below[0] < 50
    assert all(e < 1e-6 for e in errors[50:])
    assert result.metrics.unique_positions == 1


def test_trace_positions_are_reachable_and_in_bounds():
    config = tiny_config(kind=ControllerKind.MAXPE, seed=9, steps=300)
    result = run_experiment(config)
    world = load_world(config)
    start = initial_camera(world, config)
    previous = (start.left, start.top)
    for step in result.trace:
        dx = abs(step.cam_x - previous[0])
        dy = abs(step.cam_y - previous[1])
        assert dx + dy <= 1
        assert 0 <= step.cam_x <= world.width - config.window_w
        assert 0 <= step.cam_y <= world.height - config.window_h
        previous = (step.cam_x, step.cam_y)


def test_error_curve_finite_for_all_controllers():
    for kind in ControllerKind:
        result = run_experiment(tiny_config(kind=kind, seed=5, steps=200))
        assert result.valid
        assert np.all(np.isfinite(result.metrics.mean_error_curve))
        assert len(result.metrics.mean_error_curve) == 200


def test_world_and_elm_init_shared_across_controllers():
    # Only the control policy may differ between kinds at a fixed seed.
    rm = run_experiment(tiny_config(kind=ControllerKind.RM, seed=8, steps=2))
    minpe = run_experiment(tiny_config(kind=ControllerKind.MINPE, seed=8, steps=2))
    assert np.array_equal(
        load_world(rm.config).pixels, load_world(minpe.config).pixels
    )
    assert np.array_equal(
        rm.elm_state.hidden_weights, minpe.elm_state.hidden_weights
    )


def test_elm_seed_derived_from_master_seed():
    config = tiny_config(seed=77, steps=1)
    result = run_experiment(config)
    elm_seed = harness._derived_seeds(77)[0]
    from dataclasses import replace

    from visuomotor.elm import init_elm

    reference = init_elm(replace(config.elm, seed=elm_seed))
    assert np.array_equal(result.elm_state.hidden_weights, reference.hidden_weights)


def test_replaying_history_reproduces_non_random_commands():
    for kind, first_decided in [
        (ControllerKind.MINPE, 1),
        (ControllerKind.MAXPE, 1),
        (ControllerKind.MAXLP, 2),
    ]:
        config = tiny_config(kind=kind, seed=11, steps=150, epsilon=0.0)
        result = run_experiment(config)
        cfg = result.config.controller
        history = ErrorHistory(capacity=cfg.window + cfg.em_window)
        for step in result.trace:
            if step.t >= first_decided:
                replayed = choose_action(kind, history, cfg, np.random.default_rng(0))
                assert replayed == step.command, f"{kind} diverged at t={step.t}"
            history.append(step.t, step.command, step.error)


def test_numeric_failure_flags_partial_trace(monkeypatch):
    calls = {"n": 0}
    real = harness.update_online

    def failing(state, pair):
        calls["n"] += 1
        if calls["n"] >= 5:
            raise NumericError("synthetic failure")
        return real(state, pair)

    monkeypatch.setattr(harness, "update_online", failing)
    result = run_experiment(tiny_config(steps=20))
    assert not result.valid
    assert "synthetic failure" in result.failure
    assert len(result.trace) == 4
    assert result.metrics is not None


def test_image_file_source(tmp_path):
    from visuomotor.world import load_image, synthetic_image

    image = synthetic_image(24, 24, seed=6)
    path = tmp_path / "scene.pgm"
    data = to_pgm_p2(image)
    path.write_bytes(data)
    config = tiny_config(steps=30, image_source=str(path))
    result = run_experiment(config)
    assert result.valid
    assert np.array_equal(load_world(config).pixels, load_image(data).pixels)


def test_camera_starts_centered():
    config = tiny_config(steps=1)
    world = load_world(config)
    cam = initial_camera(world, config)
    assert cam.left == (world.width - config.window_w) // 2
    assert cam.top == (world.height - config.window_h) // 2


def test_config_validation():
    from visuomotor.elm import ElmConfig

    with pytest.raises(ConfigError):
        ExperimentConfig(steps=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(
            elm=ElmConfig(input_dim=10, output_dim=9, hidden_count=3),
            window_w=3, window_h=3,
        )
    with pytest.raises(ConfigError):
        ExperimentConfig(
            elm=ElmConfig(input_dim=1026, output_dim=1024, hidden_count=3),
            window_w=33, window_h=32,
        )


def test_window_must_fit_image(tmp_path):
    from visuomotor.world import synthetic_image

    path = tmp_path / "small.pgm"
    path.write_bytes(to_pgm_p2(synthetic_image(3, 3, seed=0)))
    config = tiny_config(steps=5, image_source=str(path))
    with pytest.raises(ConfigError):
        run_experiment(config)


# ---------------------------------------------------------------------------
# Metrics


def test_metrics_all_stay_trace():
    trace = [record(t, 7, 9) for t in range(20)]
    metrics = compute_metrics(trace)
    assert metrics.unique_positions == 1
    assert metrics.bbox_area == 1
    assert metrics.stay_fraction == 1.0


def test_metrics_walk_right():
    trace = [record(t, 3 + t, 2, cmd=MotorCommand.RIGHT) for t in range(11)]
    metrics = compute_metrics(trace)
    assert metrics.unique_positions == 11
    assert metrics.bbox_area == 11


def test_metrics_final_error_window():
    trace = [record(t, 0, 0, error=1.0) for t in range(150)]
    trace += [record(150 + t, 0, 0, error=0.5) for t in range(100)]
    metrics = compute_metrics(trace)
    assert metrics.final_error == pytest.approx(0.5)


def test_metrics_histogram_sums_to_steps():
    result = run_experiment(tiny_config(seed=13, steps=120))
    histogram = result.metrics.action_histogram
    assert sum(histogram.values()) == 120
    assert set(histogram) == set(MotorCommand)


def test_metrics_mean_error_curve_matches_direct_average():
    rng = np.random.default_rng(3)
    errors = rng.uniform(0, 1, 250)
    trace = [record(t, 0, 0, error=float(e)) for t, e in enumerate(errors)]
    curve = compute_metrics(trace).mean_error_curve
    for t in (0, 1, 50, 99, 100, 249):
        window = errors[max(0, t - 99) : t + 1]
        assert curve[t] == pytest.approx(window.mean())


def test_metrics_empty_trace_rejected():
    with pytest.raises(ValueError):
        compute_metrics([])


# ---------------------------------------------------------------------------
# Comparisons


def test_comparison_shape_and_summary():
    base = tiny_config(steps=40)
    comparison = run_comparison(base, [ControllerKind.RM], [1, 2])
    assert len(comparison.results) == 2
    finals = [
        comparison.results[(ControllerKind.RM, seed)].metrics.final_error
        for seed in (1, 2)
    ]
    summary = comparison.summary[ControllerKind.RM]
    assert summary.median_final_error == pytest.approx(float(np.median(finals)))
    assert comparison.rankings[1] == [ControllerKind.RM]


def test_comparison_full_grid_rankings():
    base = tiny_config(steps=40)
    kinds = list(ControllerKind)
    comparison = run_comparison(base, kinds, [1, 2, 3])
    assert len(comparison.results) == 12
    for seed in (1, 2, 3):
        assert sorted(comparison.rankings[seed], key=lambda k: k.value) == sorted(
            kinds, key=lambda k: k.value
        )


def test_comparison_overrides_kind_and_seed():
    base = tiny_config(kind=ControllerKind.RM, seed=999, steps=30)
    comparison = run_comparison(base, [ControllerKind.MINPE], [4])
    result = comparison.results[(ControllerKind.MINPE, 4)]
    assert result.config.controller.kind == ControllerKind.MINPE
    assert result.config.master_seed == 4


def test_comparison_isolates_cell_failures(monkeypatch):
    real = harness.run_experiment

    def flaky(config, **kwargs):
        if config.controller.kind == ControllerKind.MAXPE:
            raise RuntimeError("boom")
        return real(config, **kwargs)

    monkeypatch.setattr(harness, "run_experiment", flaky)
    base = tiny_config(steps=30)
    comparison = run_comparison(
        base, [ControllerKind.RM, ControllerKind.MAXPE], [1]
    )
    assert comparison.results[(ControllerKind.RM, 1)].valid
    failed = comparison.results[(ControllerKind.MAXPE, 1)]
    assert not failed.valid
    assert "boom" in failed.failure
    assert ControllerKind.MAXPE not in comparison.summary
    # Failed cells rank last.
    assert comparison.rankings[1][-1] == ControllerKind.MAXPE


def test_comparison_parallel_matches_sequential():
    base = tiny_config(steps=30)
    kinds = [ControllerKind.RM, ControllerKind.MINPE]
    sequential = run_comparison(base, kinds, [1, 2], workers=1)
    parallel = run_comparison(base, kinds, [1, 2], workers=2)
    for cell, result in sequential.results.items():
        assert parallel.results[cell].trace == result.trace


def test_comparison_requires_nonempty_grid():
    base = tiny_config(steps=10)
    with pytest.raises(ValueError):
        run_comparison(base, [], [1])
    with pytest.raises(ValueError):
        run_comparison(base, [ControllerKind.RM], [])
