"""Closed-loop experiment runner.

One run wires the pieces together for a fixed number of steps: observe,
choose a command, forecast the next frame, move, observe again, score
the forecast, train online, log. Multi-seed comparisons across the four
controllers reuse the same derived noise and image streams so that only
the control policy differs between cells.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .controllers import (
    ControllerConfig,
    ControllerKind,
    ErrorHistory,
    choose_action,
)
from .elm import ElmConfig, ElmState, init_elm, predict, prediction_error, update_online
from .errors import ConfigError, NumericError
from .world import (
    CameraState,
    MotorCommand,
    NoiseModel,
    WorldImage,
    apply_motor,
    command_to_velocity,
    load_image,
    observe,
    synthetic_image,
)

SYNTHETIC_SOURCE = "synthetic"
_SYNTHETIC_SIZE = 512
FINAL_ERROR_WINDOW = 100
ERROR_CURVE_WINDOW = 100


def _default_elm_config() -> ElmConfig:
    return ElmConfig(input_dim=1026, output_dim=1024, hidden_count=30)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one seeded run needs, image content excluded."""

    steps: int = 5000
    elm: ElmConfig = field(default_factory=_default_elm_config)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    image_source: str = SYNTHETIC_SOURCE
    window_w: int = 32
    window_h: int = 32
    master_seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("steps must be at least 1")
        if self.window_w < 1 or self.window_h < 1:
            raise ConfigError("camera window must have positive size")
        if self.elm.output_dim != self.window_w * self.window_h:
            raise ConfigError(
                f"elm output_dim {self.elm.output_dim} must equal the "
                f"window pixel count {self.window_w * self.window_h}"
            )
        if self.elm.input_dim != self.elm.output_dim + 2:
            raise ConfigError(
                "elm input_dim must be output_dim + 2 (frame plus velocity)"
            )
        if self.master_seed < 0:
            raise ConfigError("master_seed must be non-negative")


def default_config(
    kind: ControllerKind | str = ControllerKind.RM,
    master_seed: int = 0,
    *,
    steps: int = 5000,
    sigma: float = 0.01,
    image_source: str = SYNTHETIC_SOURCE,
    epsilon: float = 0.2,
    hidden_count: int = 30,
    window: int = 20,
    em_window: int = 10,
    camera: int = 32,
) -> ExperimentConfig:
    """Convenience constructor mirroring the standard experiment setup."""
    pixels = camera * camera
    return ExperimentConfig(
        steps=steps,
        elm=ElmConfig(
            input_dim=pixels + 2, output_dim=pixels, hidden_count=hidden_count
        ),
        controller=ControllerConfig(
            kind=ControllerKind(kind),
            window=window,
            epsilon=epsilon,
            em_window=em_window,
        ),
        noise=NoiseModel(sigma=sigma),
        image_source=image_source,
        window_w=camera,
        window_h=camera,
        master_seed=master_seed,
    )


@dataclass(frozen=True)
class StepRecord:
    """One step of a run: where the camera ended up, what was done, and
    the error of the forecast scored against the frame seen there."""

    t: int
    cam_x: int
    cam_y: int
    command: MotorCommand
    error: float


@dataclass
class Metrics:
    """Summary numbers for one trace."""

    final_error: float  # mean of the last FINAL_ERROR_WINDOW errors
    unique_positions: int
    bbox_area: int  # trajectory bounding box, in cells
    action_histogram: dict[MotorCommand, int]
    mean_error_curve: np.ndarray  # sliding mean, window ERROR_CURVE_WINDOW

    @property
    def stay_fraction(self) -> float:
        total = sum(self.action_histogram.values())
        return self.action_histogram[MotorCommand.STAY] / total


@dataclass
class RunResult:
    config: ExperimentConfig
    trace: list[StepRecord]
    metrics: Metrics | None
    elm_state: ElmState | None
    valid: bool = True
    failure: str | None = None


def _derived_seeds(master_seed: int) -> tuple[int, int, int, int]:
    """Independent integer seeds for ELM init, noise, controller, image."""
    children = np.random.SeedSequence(master_seed).spawn(4)
    return tuple(int(c.generate_state(1, np.uint64)[0]) for c in children)


def load_world(config: ExperimentConfig) -> WorldImage:
    """The image a run observes: a file, or the seeded synthetic scene."""
    if config.image_source == SYNTHETIC_SOURCE:
        _, _, _, image_seed = _derived_seeds(config.master_seed)
        return synthetic_image(_SYNTHETIC_SIZE, _SYNTHETIC_SIZE, seed=image_seed)
    return load_image(Path(config.image_source).read_bytes())


def initial_camera(world: WorldImage, config: ExperimentConfig) -> CameraState:
    """Camera centered in the image."""
    return CameraState(
        left=(world.width - config.window_w) // 2,
        top=(world.height - config.window_h) // 2,
        width=config.window_w,
        height=config.window_h,
    )


def run_experiment(
    config: ExperimentConfig,
    *,
    force_command: MotorCommand | None = None,
) -> RunResult:
    """Execute one seeded run and return its trace, metrics and model.

    Each step observes the current frame, picks a command from the error
    history, forecasts the next frame for that command, moves, observes
    the new frame, scores the forecast, and trains the model online on
    the transition. ``force_command`` bypasses the controller (testing
    hook for pinned-action runs).

    A numerical failure inside the online update aborts the run; the
    partial trace comes back flagged invalid instead of raising.
    """
    elm_seed, noise_seed, controller_seed, _ = _derived_seeds(config.master_seed)
    elm_config = replace(config.elm, seed=elm_seed)
    controller_config = replace(config.controller, seed=controller_seed)
    noise_rng = np.random.default_rng(noise_seed)
    controller_rng = np.random.default_rng(controller_seed)

    world = load_world(config)
    if world.width < config.window_w or world.height < config.window_h:
        raise ConfigError(
            f"{world.width}x{world.height} image is smaller than the camera window"
        )
    cam = initial_camera(world, config)
    state = init_elm(elm_config)
    history = ErrorHistory(
        capacity=controller_config.window + controller_config.em_window
    )
    trace: list[StepRecord] = []
    kind = controller_config.kind

    for t in range(config.steps):
        frame = observe(world, cam, config.noise, noise_rng)
        if force_command is not None:
            command = force_command
        else:
            command = choose_action(kind, history, controller_config, controller_rng)
        velocity = command_to_velocity(command)
        forecast = predict(state, frame, velocity)
        cam = apply_motor(world, cam, command)
        next_frame = observe(world, cam, config.noise, noise_rng)
        error = prediction_error(forecast, next_frame)
        try:
            state = update_online(
                state, (np.concatenate([frame, velocity]), next_frame)
            )
        except NumericError as exc:
            return RunResult(
                config=config,
                trace=trace,
                metrics=compute_metrics(trace) if trace else None,
                elm_state=state,
                valid=False,
                failure=str(exc),
            )
        history.append(t, command, error)
        trace.append(
            StepRecord(t=t, cam_x=cam.left, cam_y=cam.top, command=command, error=error)
        )
    return RunResult(
        config=config,
        trace=trace,
        metrics=compute_metrics(trace),
        elm_state=state,
    )


def compute_metrics(trace: list[StepRecord]) -> Metrics:
    """Derive the summary numbers for a nonempty trace."""
    if not trace:
        raise ValueError("compute_metrics requires a nonempty trace")
    errors = np.array([r.error for r in trace])
    final_error = float(errors[-FINAL_ERROR_WINDOW:].mean())
    xs = [r.cam_x for r in trace]
    ys = [r.cam_y for r in trace]
    unique_positions = len(set(zip(xs, ys)))
    bbox_area = (max(xs) - min(xs) + 1) * (max(ys) - min(ys) + 1)
    histogram = {cmd: 0 for cmd in MotorCommand}
    for record in trace:
        histogram[record.command] += 1
    cumulative = np.concatenate([[0.0], np.cumsum(errors)])
    idx = np.arange(len(errors))
    lo = np.maximum(0, idx - (ERROR_CURVE_WINDOW - 1))
    curve = (cumulative[idx + 1] - cumulative[lo]) / (idx + 1 - lo)
    return Metrics(
        final_error=final_error,
        unique_positions=unique_positions,
        bbox_area=bbox_area,
        action_histogram=histogram,
        mean_error_curve=curve,
    )


@dataclass
class KindSummary:
    """Medians of one controller's metrics across seeds (valid runs only)."""

    kind: ControllerKind
    median_final_error: float
    median_unique_positions: float
    median_bbox_area: float
    median_stay_fraction: float


@dataclass
class ComparisonResult:
    kinds: list[ControllerKind]
    seeds: list[int]
    results: dict[tuple[ControllerKind, int], RunResult]
    summary: dict[ControllerKind, KindSummary]
    rankings: dict[int, list[ControllerKind]]  # seed -> kinds by ascending final error


def _run_cell(config: ExperimentConfig) -> RunResult:
    # Isolate per-cell failures so one bad run cannot sink the grid.
    try:
        return run_experiment(config)
    except Exception as exc:  # noqa: BLE001 - cell isolation is the point
        return RunResult(
            config=config,
            trace=[],
            metrics=None,
            elm_state=None,
            valid=False,
            failure=f"{type(exc).__name__}: {exc}",
        )


def run_comparison(
    base: ExperimentConfig,
    kinds: list[ControllerKind],
    seeds: list[int],
    workers: int = 1,
) -> ComparisonResult:
    """Run every (controller, seed) cell and aggregate the metrics.

    Cells are independent; with ``workers > 1`` they execute in separate
    processes. Aggregation order is fixed by (kind, seed) so the result
    does not depend on completion order.
    """
    if not kinds or not seeds:
        raise ValueError("run_comparison needs at least one kind and one seed")
    kinds = [ControllerKind(k) for k in kinds]
    cells = [(kind, seed) for kind in kinds for seed in seeds]
    configs = [
        replace(
            base,
            master_seed=seed,
            controller=replace(base.controller, kind=kind),
        )
        for kind, seed in cells
    ]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_cell, configs))
    else:
        outcomes = [_run_cell(config) for config in configs]
    results = dict(zip(cells, outcomes))

    summary: dict[ControllerKind, KindSummary] = {}
    for kind in kinds:
        rows = [
            results[(kind, seed)].metrics
            for seed in seeds
            if results[(kind, seed)].valid and results[(kind, seed)].metrics
        ]
        if not rows:
            continue
        summary[kind] = KindSummary(
            kind=kind,
            median_final_error=float(np.median([m.final_error for m in rows])),
            median_unique_positions=float(
                np.median([m.unique_positions for m in rows])
            ),
            median_bbox_area=float(np.median([m.bbox_area for m in rows])),
            median_stay_fraction=float(np.median([m.stay_fraction for m in rows])),
        )

    rankings: dict[int, list[ControllerKind]] = {}
    for seed in seeds:
        def sort_key(kind: ControllerKind) -> float:
            result = results[(kind, seed)]
            if result.valid and result.metrics is not None:
                return result.metrics.final_error
            return float("inf")

        rankings[seed] = sorted(kinds, key=sort_key)
    return ComparisonResult(
        kinds=kinds, seeds=list(seeds), results=results, summary=summary,
        rankings=rankings,
    )
