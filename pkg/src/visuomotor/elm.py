"""Extreme learning machine: a single hidden layer with fixed random
weights and a linear readout.

The readout is solved either in one shot from the Moore-Penrose
pseudo-inverse of the hidden-layer matrix (``fit_batch``) or kept up to
date sample by sample with recursive least squares (``update_online``).
Both routes converge to the same minimum-norm least-squares readout as
the regularisation scale goes to zero.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, NumericError, ParseError

MODEL_MAGIC = b"ELM1"


def _logistic(z: np.ndarray) -> np.ndarray:
    # exp overflow for very negative z saturates cleanly to 0
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


ACTIVATIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "logistic": _logistic,
    "tanh": np.tanh,
}


@dataclass(frozen=True)
class ElmConfig:
    """Network shape, initialisation ranges and online regularisation.

    ``input_dim`` is the sensor dimension plus the motor dimension,
    ``output_dim`` the sensor dimension alone. ``online_init_scale`` is
    the ridge scale delta used to seed the recursive solver; smaller
    values track the batch solution more closely.
    """

    input_dim: int
    output_dim: int
    hidden_count: int
    activation: str = "logistic"
    weight_init_low: float = -1.0
    weight_init_high: float = 1.0
    bias_init_low: float = 0.0
    bias_init_high: float = 1.0
    online_init_scale: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigError("input_dim and output_dim must be positive")
        if self.hidden_count < 1:
            raise ConfigError("hidden_count must be at least 1")
        if not self.weight_init_low < self.weight_init_high:
            raise ConfigError("weight_init_low must be below weight_init_high")
        if self.bias_init_low > self.bias_init_high:
            raise ConfigError("bias_init_low must not exceed bias_init_high")
        if not self.online_init_scale > 0:
            raise ConfigError("online_init_scale must be positive")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(
                f"unknown activation {self.activation!r}; "
                f"choose from {sorted(ACTIVATIONS)}"
            )
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


@dataclass
class ElmState:
    """Weights of one network plus the recursive-solver accumulator.

    ``hidden_weights`` and ``hidden_bias`` are drawn once and never
    change afterwards (the arrays are marked read-only). ``inv_gram``
    tracks the inverse of the regularised hidden-feature Gram matrix
    used by ``update_online``.
    """

    hidden_weights: np.ndarray  # (hidden_count, input_dim), read-only
    hidden_bias: np.ndarray  # (hidden_count,), read-only
    readout: np.ndarray  # (output_dim, hidden_count)
    inv_gram: np.ndarray  # (hidden_count, hidden_count)
    samples_seen: int
    activation: str

    @property
    def input_dim(self) -> int:
        return self.hidden_weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.readout.shape[0]

    @property
    def hidden_count(self) -> int:
        return self.hidden_weights.shape[0]


class TrainingPair(NamedTuple):
    """One supervised sample: concatenated input and next-frame target."""

    x: np.ndarray
    y: np.ndarray


def init_elm(config: ElmConfig) -> ElmState:
    """Draw the fixed hidden layer and start with a zero readout.

    The same seed always produces bit-identical weights. The readout is
    all zeros and ``inv_gram`` starts at ``I / online_init_scale``.
    """
    rng = np.random.default_rng(config.seed)
    weights = rng.uniform(
        config.weight_init_low,
        config.weight_init_high,
        (config.hidden_count, config.input_dim),
    )
    bias = rng.uniform(
        config.bias_init_low, config.bias_init_high, config.hidden_count
    )
    weights.setflags(write=False)
    bias.setflags(write=False)
    readout = np.zeros((config.output_dim, config.hidden_count))
    inv_gram = np.eye(config.hidden_count) / config.online_init_scale
    return ElmState(
        hidden_weights=weights,
        hidden_bias=bias,
        readout=readout,
        inv_gram=inv_gram,
        samples_seen=0,
        activation=config.activation,
    )


def hidden_activations(state: ElmState, x: np.ndarray) -> np.ndarray:
    """Hidden-layer response g(Wx + b) for a single input vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (state.input_dim,):
        raise DimensionError(
            f"input has shape {x.shape}, expected ({state.input_dim},)"
        )
    return ACTIVATIONS[state.activation](
        state.hidden_weights @ x + state.hidden_bias
    )


def predict(state: ElmState, frame: np.ndarray, velocity: np.ndarray) -> np.ndarray:
    """Forecast the next sensor frame from the current frame and velocity.

    Returns the raw linear readout; values are not clipped to the pixel
    range.
    """
    frame = np.asarray(frame, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    if frame.shape != (state.output_dim,):
        raise DimensionError(
            f"frame has shape {frame.shape}, expected ({state.output_dim},)"
        )
    if velocity.shape != (state.input_dim - state.output_dim,):
        raise DimensionError(
            f"velocity has shape {velocity.shape}, "
            f"expected ({state.input_dim - state.output_dim},)"
        )
    x = np.concatenate([frame, velocity])
    return state.readout @ hidden_activations(state, x)


def pseudo_inverse(matrix: np.ndarray, tolerance: float = 0.0) -> np.ndarray:
    """Moore-Penrose pseudo-inverse via singular value decomposition.

    Parameters
    ----------
    matrix : 2-D array
        Input matrix; all entries must be finite.
    tolerance : float
        Singular values below this absolute threshold are treated as
        zero. Pass 0 to use the conventional default
        ``max(rows, cols) * machine_epsilon * largest_singular_value``.

    Returns
    -------
    2-D array satisfying the four Penrose conditions.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise NumericError("matrix has non-finite entries")
    if tolerance < 0:
        raise ValueError("tolerance must be non-negative")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((a.shape[1], a.shape[0]))
    if tolerance == 0.0:
        tolerance = max(a.shape) * np.finfo(float).eps * s[0]
    inv_s = np.zeros_like(s)
    keep = s >= tolerance
    inv_s[keep] = 1.0 / s[keep]
    return (vt.T * inv_s) @ u.T


def _stack_pairs(
    state: ElmState, pairs: Sequence[tuple[np.ndarray, np.ndarray]]
) -> tuple[np.ndarray, np.ndarray]:
    xs = np.column_stack([np.asarray(x, dtype=float) for x, _ in pairs])
    ys = np.column_stack([np.asarray(y, dtype=float) for _, y in pairs])
    if xs.shape[0] != state.input_dim:
        raise DimensionError(
            f"training inputs have length {xs.shape[0]}, "
            f"expected {state.input_dim}"
        )
    if ys.shape[0] != state.output_dim:
        raise DimensionError(
            f"training targets have length {ys.shape[0]}, "
            f"expected {state.output_dim}"
        )
    return xs, ys


def fit_batch(
    config: ElmConfig,
    state: ElmState,
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
) -> ElmState:
    """Solve the readout over all pairs at once.

    Builds the hidden-layer matrix H with one column per sample and sets
    the readout to ``Y @ pinv(H)``, the minimum-norm least-squares
    solution of ``readout @ H = Y``. Hidden weights, bias and the online
    accumulator are untouched.
    """
    if len(pairs) == 0:
        raise ValueError("fit_batch requires at least one training pair")
    if (config.input_dim, config.output_dim, config.hidden_count) != (
        state.input_dim,
        state.output_dim,
        state.hidden_count,
    ):
        raise ConfigError("config dimensions do not match the given state")
    xs, ys = _stack_pairs(state, pairs)
    h = ACTIVATIONS[state.activation](
        state.hidden_weights @ xs + state.hidden_bias[:, None]
    )
    readout = ys @ pseudo_inverse(h)
    return replace(state, readout=readout, samples_seen=len(pairs))


def update_online(
    state: ElmState, pair: tuple[np.ndarray, np.ndarray]
) -> ElmState:
    """Fold one sample into the readout with recursive least squares.

    With P the inverse-Gram accumulator and h the hidden response:
    ``k = P h / (1 + h' P h)``, ``readout += (y - readout h) k'`` and
    ``P -= (P h)(P h)' / (1 + h' P h)``. P is re-symmetrised afterwards
    to suppress round-off drift.
    """
    x, y = pair
    y = np.asarray(y, dtype=float)
    if y.shape != (state.output_dim,):
        raise DimensionError(
            f"target has shape {y.shape}, expected ({state.output_dim},)"
        )
    h = hidden_activations(state, x)
    ph = state.inv_gram @ h
    denom = 1.0 + h @ ph
    if not np.isfinite(denom) or denom <= 0.0:
        raise NumericError(
            f"recursive update denominator is {denom!r}; accumulator degenerate"
        )
    gain = ph / denom
    residual = y - state.readout @ h
    readout = state.readout + np.outer(residual, gain)
    inv_gram = state.inv_gram - np.outer(ph, ph) / denom
    inv_gram = (inv_gram + inv_gram.T) / 2.0
    return replace(
        state,
        readout=readout,
        inv_gram=inv_gram,
        samples_seen=state.samples_seen + 1,
    )


def prediction_error(predicted: np.ndarray, actual: np.ndarray) -> float:
    """Mean-square discrepancy per sensor component."""
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if predicted.ndim != 1 or predicted.shape != actual.shape:
        raise DimensionError(
            f"length mismatch: {predicted.shape} vs {actual.shape}"
        )
    if predicted.size == 0:
        raise DimensionError("vectors must be non-empty")
    diff = predicted - actual
    return float(diff @ diff) / predicted.size


def save_model(state: ElmState, path: str | Path) -> None:
    """Write the predictor to a flat binary file.

    Layout: magic ``ELM1``, then input/output/hidden dimensions as
    little-endian uint64, then hidden weights, bias and readout as
    little-endian float64 in row-major order. The online accumulator is
    not serialised.
    """
    header = MODEL_MAGIC + struct.pack(
        "<QQQ", state.input_dim, state.output_dim, state.hidden_count
    )
    body = (
        np.ascontiguousarray(state.hidden_weights, dtype="<f8").tobytes()
        + np.ascontiguousarray(state.hidden_bias, dtype="<f8").tobytes()
        + np.ascontiguousarray(state.readout, dtype="<f8").tobytes()
    )
    Path(path).write_bytes(header + body)


def load_model(
    path: str | Path,
    activation: str = "logistic",
    online_init_scale: float = 1e-8,
) -> ElmState:
    """Read a model written by ``save_model``.

    The online accumulator restarts at ``I / online_init_scale`` with a
    zero sample count; only the predictor itself is persisted.
    """
    data = Path(path).read_bytes()
    if data[:4] != MODEL_MAGIC:
        raise ParseError("bad model magic", offset=0)
    if len(data) < 28:
        raise ParseError("truncated model header", offset=len(data))
    n, p, hidden = struct.unpack("<QQQ", data[4:28])
    if n < 1 or p < 1 or hidden < 1:
        raise ParseError("model dimensions must be positive", offset=4)
    expected = 28 + 8 * (hidden * n + hidden + p * hidden)
    if len(data) < expected:
        raise ParseError("truncated model payload", offset=len(data))
    if activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}")
    if not online_init_scale > 0:
        raise ConfigError("online_init_scale must be positive")
    cursor = 28
    weights = np.frombuffer(data, "<f8", hidden * n, cursor).reshape(hidden, n)
    cursor += 8 * hidden * n
    bias = np.frombuffer(data, "<f8", hidden, cursor)
    cursor += 8 * hidden
    readout = np.frombuffer(data, "<f8", p * hidden, cursor).reshape(p, hidden)
    return ElmState(
        hidden_weights=weights,
        hidden_bias=bias,
        readout=readout.copy(),
        inv_gram=np.eye(hidden) / online_init_scale,
        samples_seen=0,
        activation=activation,
    )
