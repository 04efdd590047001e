"""Command-line front end: run one experiment, compare controllers over
seeds, or self-check the numerical core. Results land as CSV traces,
summary tables and PGM window dumps."""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import controllers, elm, world
from .controllers import ControllerConfig, ControllerKind, ErrorHistory
from .errors import VisuomotorError
from .harness import (
    ComparisonResult,
    RunResult,
    StepRecord,
    default_config,
    initial_camera,
    load_world,
    run_comparison,
    run_experiment,
)
from .world import CameraState, MotorCommand, NoiseModel, WorldImage

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_IO = 3

OUT_DIR_ENV = "VISUOMOTOR_OUT"
ALL_KINDS = [ControllerKind.RM, ControllerKind.MINPE, ControllerKind.MAXPE,
             ControllerKind.MAXLP]


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; this tool reserves 2 for
    # runtime failures and reports usage problems as 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_out_dir() -> str:
    return os.environ.get(OUT_DIR_ENV, "out")


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--steps", type=int, default=5000)
    parser.add_argument("--image", default="synthetic",
                        help="PGM path, or 'synthetic' for the built-in scene")
    parser.add_argument("--sigma", type=float, default=0.01,
                        help="sensor noise level")
    parser.add_argument("--epsilon", type=float, default=0.2,
                        help="random-command probability")
    parser.add_argument("--hidden", type=int, default=30,
                        help="hidden neuron count")
    parser.add_argument("--window", type=int, default=20,
                        help="controller lookback window")
    parser.add_argument("--em-window", type=int, default=10,
                        help="sliding-mean width for learning progress")
    parser.add_argument("--camera", type=int, default=32,
                        help="camera window side, in pixels")
    parser.add_argument("--out", default=None,
                        help=f"output directory (default: ${OUT_DIR_ENV} or ./out)")


def build_parser() -> _Parser:
    parser = _Parser(prog="visuomotor", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--controller", choices=[k.value for k in ALL_KINDS],
                     default="rm")
    run.add_argument("--seed", type=int, default=0)
    _add_run_flags(run)

    compare = sub.add_parser(
        "compare", help="run all four controllers over several seeds"
    )
    compare.add_argument("--seeds", default="1,2,3,4,5,6,7,8,9,10",
                         help="comma-separated master seeds")
    compare.add_argument("--workers", type=int, default=1,
                         help="parallel processes for the comparison grid")
    _add_run_flags(compare)

    sub.add_parser("validate", help="run the built-in invariant checks")
    return parser


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)


def _config_from_args(args: argparse.Namespace, kind: str, seed: int):
    return default_config(
        kind,
        seed,
        steps=args.steps,
        sigma=args.sigma,
        image_source=args.image,
        epsilon=args.epsilon,
        hidden_count=args.hidden,
        window=args.window,
        em_window=args.em_window,
        camera=args.camera,
    )


def _format_float(value: float) -> str:
    return format(value, ".9g")


def write_trace_csv(result: RunResult, path: str | Path) -> None:
    """One row per step: camera center, command code, prediction error."""
    half_w = result.config.window_w // 2
    half_h = result.config.window_h // 2
    with open(path, "w", newline="\n") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["t", "cam_center_x", "cam_center_y", "cmd", "error"])
        for record in result.trace:
            writer.writerow([
                record.t,
                record.cam_x + half_w,
                record.cam_y + half_h,
                record.command.value,
                _format_float(record.error),
            ])


def read_trace_csv(
    path: str | Path, window_w: int = 32, window_h: int = 32
) -> list[StepRecord]:
    """Parse a trace CSV back into step records (centers to top-left)."""
    records = []
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            records.append(StepRecord(
                t=int(row["t"]),
                cam_x=int(row["cam_center_x"]) - window_w // 2,
                cam_y=int(row["cam_center_y"]) - window_h // 2,
                command=MotorCommand(row["cmd"]),
                error=float(row["error"]),
            ))
    return records


def write_summary(comparison: ComparisonResult, path: str | Path) -> None:
    """Per-kind medians, then a per-seed ranking table (best first)."""
    with open(path, "w", newline="\n") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([
            "kind", "median_final_error", "median_unique_positions",
            "median_bbox_area", "median_stay_fraction",
        ])
        for kind in comparison.kinds:
            row = comparison.summary.get(kind)
            if row is None:
                writer.writerow([kind.value, "", "", "", ""])
                continue
            writer.writerow([
                kind.value,
                _format_float(row.median_final_error),
                _format_float(row.median_unique_positions),
                _format_float(row.median_bbox_area),
                _format_float(row.median_stay_fraction),
            ])
        writer.writerow([])
        writer.writerow(
            ["seed"] + [f"rank{i + 1}" for i in range(len(comparison.kinds))]
        )
        for seed in comparison.seeds:
            writer.writerow(
                [seed] + [kind.value for kind in comparison.rankings[seed]]
            )


def _write_pgm_p5(path: str | Path, gray: np.ndarray) -> None:
    height, width = gray.shape
    header = f"P5\n{width} {height}\n255\n".encode()
    Path(path).write_bytes(header + gray.astype(np.uint8).tobytes())


def render_frames(
    image: WorldImage,
    cam: CameraState,
    predicted: np.ndarray,
    path_prefix: str | Path,
) -> None:
    """Dump the camera window and its forecast side by side as PGM files.

    Writes ``<prefix>_actual.pgm`` and ``<prefix>_predicted.pgm``; the
    forecast is clamped to [0, 1] and quantized round-half-up.
    """
    predicted = np.asarray(predicted, dtype=float)
    if predicted.size != cam.pixel_count:
        raise VisuomotorError(
            f"predicted frame has {predicted.size} values, window needs "
            f"{cam.pixel_count}"
        )
    window = image.pixels[cam.top : cam.top + cam.height,
                          cam.left : cam.left + cam.width]
    prefix = str(path_prefix)
    _write_pgm_p5(prefix + "_actual.pgm", world.quantize(window))
    _write_pgm_p5(
        prefix + "_predicted.pgm",
        world.quantize(predicted.reshape(cam.height, cam.width)),
    )


def _cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args, args.controller, args.seed)
    out_dir = Path(args.out if args.out is not None else _default_out_dir())
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run_experiment(config)
    write_trace_csv(result, out_dir / "trace.csv")
    if not result.valid:
        print(f"run aborted after {len(result.trace)} steps: {result.failure}",
              file=sys.stderr)
        return EXIT_RUNTIME
    image = load_world(config)
    last = result.trace[-1]
    cam = CameraState(left=last.cam_x, top=last.cam_y,
                      width=config.window_w, height=config.window_h)
    frame = observe_clean(image, cam)
    forecast = elm.predict(
        result.elm_state, frame,
        np.array(world.command_to_velocity(MotorCommand.STAY), dtype=float),
    )
    render_frames(image, cam, forecast, out_dir / "window")
    metrics = result.metrics
    print(f"controller={args.controller} seed={args.seed} steps={config.steps}")
    print(f"final_error={_format_float(metrics.final_error)} "
          f"unique_positions={metrics.unique_positions} "
          f"bbox_area={metrics.bbox_area} "
          f"stay_fraction={_format_float(metrics.stay_fraction)}")
    print(f"trace: {out_dir / 'trace.csv'}")
    return EXIT_OK


def observe_clean(image: WorldImage, cam: CameraState) -> np.ndarray:
    """Noise-free window read (rendering helper)."""
    return world.observe(
        image, cam, NoiseModel(sigma=0.0), np.random.default_rng(0)
    )


def _cmd_compare(args: argparse.Namespace) -> int:
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip() != ""]
    except ValueError:
        print(f"visuomotor: error: bad --seeds value {args.seeds!r}",
              file=sys.stderr)
        return EXIT_USAGE
    if not seeds:
        print("visuomotor: error: --seeds needs at least one seed",
              file=sys.stderr)
        return EXIT_USAGE
    base = _config_from_args(args, ControllerKind.RM, seeds[0])
    out_dir = Path(args.out if args.out is not None else _default_out_dir())
    out_dir.mkdir(parents=True, exist_ok=True)
    comparison = run_comparison(base, ALL_KINDS, seeds, workers=args.workers)
    for (kind, seed), result in comparison.results.items():
        write_trace_csv(result, out_dir / f"trace_{kind.value}_{seed}.csv")
    write_summary(comparison, out_dir / "summary.csv")
    failed = [(kind.value, seed) for (kind, seed), r in comparison.results.items()
              if not r.valid]
    for kind, summary in comparison.summary.items():
        print(f"{kind.value}: median_final_error="
              f"{_format_float(summary.median_final_error)} "
              f"median_unique_positions={summary.median_unique_positions:g} "
              f"median_bbox_area={summary.median_bbox_area:g} "
              f"median_stay_fraction={summary.median_stay_fraction:.3f}")
    print(f"summary: {out_dir / 'summary.csv'}")
    if failed:
        print(f"failed cells: {failed}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _check(name: str, passed: bool, failures: list[str]) -> None:
    print(f"{'PASS' if passed else 'FAIL'}  {name}")
    if not passed:
        failures.append(name)


def run_validation() -> bool:
    """Fast self-contained invariant checks over the numerical core."""
    rng = np.random.default_rng(20240917)
    failures: list[str] = []

    # Pseudo-inverse: four Penrose conditions, rank-deficient included.
    worst = 0.0
    for i in range(25):
        rows = int(rng.integers(1, 21))
        cols = int(rng.integers(1, 31))
        a = rng.normal(size=(rows, cols))
        if i % 2 == 1:
            inner = max(1, min(rows, cols) // 2)
            a = rng.normal(size=(rows, inner)) @ rng.normal(size=(inner, cols))
        worst = max(worst, _penrose_residual(a))
    _check("pseudo-inverse satisfies Penrose conditions", worst < 1e-8, failures)

    # Online updates track the batch solution.
    cfg = elm.ElmConfig(input_dim=6, output_dim=3, hidden_count=12, seed=5)
    state = elm.init_elm(cfg)
    pairs = [
        (rng.uniform(-2, 2, 6), rng.uniform(-1, 1, 3)) for _ in range(120)
    ]
    online = state
    for pair in pairs:
        online = elm.update_online(online, pair)
    batch = elm.fit_batch(cfg, state, pairs)
    gap = np.linalg.norm(online.readout - batch.readout) / max(
        np.linalg.norm(batch.readout), 1e-30
    )
    _check("online updates match the batch readout", gap < 1e-4, failures)
    _check(
        "hidden weights untouched by training",
        online.hidden_weights is state.hidden_weights
        and online.hidden_bias is state.hidden_bias,
        failures,
    )

    # Minimum-norm property on an underdetermined fit.
    under = [(rng.uniform(-1, 1, 6), rng.uniform(-1, 1, 3)) for _ in range(3)]
    fitted = elm.fit_batch(cfg, state, under)
    h = elm.ACTIVATIONS[state.activation](
        state.hidden_weights @ np.column_stack([x for x, _ in under])
        + state.hidden_bias[:, None]
    )
    y = np.column_stack([t for _, t in under])
    reference = y @ np.linalg.solve(h.T @ h, h.T)
    _check(
        "batch readout has minimum norm",
        np.linalg.norm(fitted.readout) <= np.linalg.norm(reference) + 1e-8,
        failures,
    )

    # Camera motion stays in bounds under random commands.
    image = world.synthetic_image(48, 40, seed=3)
    cam = CameraState(left=20, top=17, width=5, height=4)
    ok = True
    for _ in range(20000):
        cam = world.apply_motor(image, cam, controllers.choose_random(rng))
        if not (0 <= cam.left <= image.width - cam.width
                and 0 <= cam.top <= image.height - cam.height):
            ok = False
            break
    _check("camera never leaves the image", ok, failures)

    # Noise-free observation equals direct indexing.
    frame = world.observe(image, cam, NoiseModel(0.0), rng)
    direct = np.array([
        image.pixels[cam.top + i, cam.left + j]
        for i in range(cam.height) for j in range(cam.width)
    ])
    _check("noise-free observation is exact", np.array_equal(frame, direct),
           failures)

    # PGM round trip.
    quantized = world.WorldImage(world.quantize(image.pixels) / 255.0)
    reloaded = world.load_image(world.to_pgm_p2(quantized))
    _check("PGM round trip preserves pixels",
           np.array_equal(reloaded.pixels, quantized.pixels), failures)

    # Policy selection invariant under positive-affine error rescaling.
    ok = True
    for _ in range(200):
        history = ErrorHistory(capacity=64)
        scaled = ErrorHistory(capacity=64)
        for t in range(int(rng.integers(1, 40))):
            cmd = controllers.choose_random(rng)
            err = float(rng.integers(0, 1024)) / 1024.0
            history.append(t, cmd, err)
            scaled.append(t, cmd, 2.0 * err + 0.5)
        pcfg = ControllerConfig(kind=ControllerKind.MINPE, epsilon=0.0)
        for chooser in (controllers.choose_minpe, controllers.choose_maxpe):
            if chooser(history, pcfg, np.random.default_rng(1)) != chooser(
                scaled, pcfg, np.random.default_rng(1)
            ):
                ok = False
    _check("policies ignore affine error rescaling", ok, failures)

    # Short deterministic run.
    config = default_config(ControllerKind.MINPE, 7, steps=40, camera=8,
                            hidden_count=10)
    one = run_experiment(config)
    two = run_experiment(config)
    _check("identical seeds give identical traces", one.trace == two.trace,
           failures)

    if failures:
        print(f"{len(failures)} check(s) failed")
        return False
    print("all checks passed")
    return True


def _penrose_residual(a: np.ndarray) -> float:
    ap = elm.pseudo_inverse(a)
    scale = max(float(np.abs(a).max()), 1e-12)
    pscale = max(float(np.abs(ap).max()), 1e-12)
    return max(
        float(np.abs(a @ ap @ a - a).max()) / scale,
        float(np.abs(ap @ a @ ap - ap).max()) / pscale,
        float(np.abs((a @ ap) - (a @ ap).T).max()) / max(pscale * scale, 1e-12),
        float(np.abs((ap @ a) - (ap @ a).T).max()) / max(pscale * scale, 1e-12),
    )


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        if args.subcommand == "run":
            return _cmd_run(args)
        if args.subcommand == "compare":
            return _cmd_compare(args)
        return EXIT_OK if run_validation() else EXIT_RUNTIME
    except OSError as exc:
        print(f"visuomotor: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except VisuomotorError as exc:
        print(f"visuomotor: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
