"""Autonomous control policies.

Four policies map recent prediction errors to the next motor command:
pure random babbling (RM), replaying the command with the smallest
recent error (MinPE), the largest recent error (MaxPE), or the largest
drop in sliding-mean error (MaxLP). The non-random policies share an
epsilon chance of acting randomly and fall back to a random command
whenever the history carries no usable signal.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, NamedTuple

import numpy as np

from .errors import ConfigError, HistoryRangeError
from .world import COMMANDS, MotorCommand


class ControllerKind(str, Enum):
    RM = "rm"
    MINPE = "minpe"
    MAXPE = "maxpe"
    MAXLP = "maxlp"


class HistoryRecord(NamedTuple):
    t: int
    command: MotorCommand
    error: float


class ErrorHistory:
    """Bounded ring of (timestep, command, error) records, oldest first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigError("history capacity must be positive")
        self.capacity = capacity
        self._records: deque[HistoryRecord] = deque(maxlen=capacity)

    def append(self, t: int, command: MotorCommand, error: float) -> None:
        if self._records and t <= self._records[-1].t:
            raise ValueError(
                f"timesteps must be strictly increasing "
                f"(got {t} after {self._records[-1].t})"
            )
        if not np.isfinite(error) or error < 0:
            raise ValueError(f"error must be finite and non-negative, got {error}")
        self._records.append(HistoryRecord(int(t), command, float(error)))

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[HistoryRecord]:
        return iter(self._records)

    def recent(self, count: int) -> list[HistoryRecord]:
        """The last min(count, len) records, oldest first."""
        if count >= len(self._records):
            return list(self._records)
        return [self._records[i] for i in range(len(self._records) - count, len(self._records))]

    def errors_between(self, start: int, end: int) -> list[float]:
        """Errors of records with timestep in the half-open range (start, end]."""
        return [r.error for r in self._records if start < r.t <= end]


@dataclass(frozen=True)
class ControllerConfig:
    kind: ControllerKind = ControllerKind.RM
    window: int = 20  # lookback for command reuse
    epsilon: float = 0.2  # chance of a random command
    em_window: int = 10  # sliding-mean width for learning progress
    seed: int = 0

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError("window must be at least 1")
        if self.em_window < 1:
            raise ConfigError("em_window must be at least 1")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in [0, 1]")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


def choose_random(rng: np.random.Generator) -> MotorCommand:
    """Motor babbling: uniform over the five commands."""
    return COMMANDS[int(rng.integers(len(COMMANDS)))]


def _epsilon_random(
    cfg: ControllerConfig, rng: np.random.Generator
) -> MotorCommand | None:
    # One uniform draw per decision keeps the stream layout fixed.
    if rng.random() < cfg.epsilon:
        return choose_random(rng)
    return None


def choose_minpe(
    history: ErrorHistory, cfg: ControllerConfig, rng: np.random.Generator
) -> MotorCommand:
    """Repeat the command of the smallest error in the lookback window.

    Ties go to the most recent record; an empty history falls back to a
    random command.
    """
    random_pick = _epsilon_random(cfg, rng)
    if random_pick is not None:
        return random_pick
    best: HistoryRecord | None = None
    for record in history.recent(cfg.window):
        if best is None or record.error <= best.error:
            best = record
    if best is None:
        return choose_random(rng)
    return best.command


def choose_maxpe(
    history: ErrorHistory, cfg: ControllerConfig, rng: np.random.Generator
) -> MotorCommand:
    """Repeat the command of the largest error in the lookback window."""
    random_pick = _epsilon_random(cfg, rng)
    if random_pick is not None:
        return random_pick
    best: HistoryRecord | None = None
    for record in history.recent(cfg.window):
        if best is None or record.error >= best.error:
            best = record
    if best is None:
        return choose_random(rng)
    return best.command


def sliding_mean_error(history: ErrorHistory, at: int, em_window: int) -> float:
    """Mean error over records with timestep in (at - em_window, at]."""
    if em_window < 1:
        raise ConfigError("em_window must be at least 1")
    errors = history.errors_between(at - em_window, at)
    if not errors:
        raise HistoryRangeError(
            f"no records in ({at - em_window}, {at}]"
        )
    return sum(errors) / len(errors)


def choose_maxlp(
    history: ErrorHistory, cfg: ControllerConfig, rng: np.random.Generator
) -> MotorCommand:
    """Repeat the command whose step showed the largest learning progress.

    Progress at record time tau is the drop in sliding-mean error,
    em(tau - 1) - em(tau). Records where either mean is undefined are
    skipped; if none qualify the choice is random. Ties go to the most
    recent record.
    """
    random_pick = _epsilon_random(cfg, rng)
    if random_pick is not None:
        return random_pick
    best_command: MotorCommand | None = None
    best_progress = -np.inf
    for record in history.recent(cfg.window):
        try:
            em_before = sliding_mean_error(history, record.t - 1, cfg.em_window)
            em_now = sliding_mean_error(history, record.t, cfg.em_window)
        except HistoryRangeError:
            continue
        progress = em_before - em_now
        if progress >= best_progress:
            best_command = record.command
            best_progress = progress
    if best_command is None:
        return choose_random(rng)
    return best_command


_POLICIES = {
    ControllerKind.MINPE: choose_minpe,
    ControllerKind.MAXPE: choose_maxpe,
    ControllerKind.MAXLP: choose_maxlp,
}


def choose_action(
    kind: ControllerKind,
    history: ErrorHistory,
    cfg: ControllerConfig,
    rng: np.random.Generator,
) -> MotorCommand:
    """Dispatch to the policy for ``kind``. RM ignores the history."""
    kind = ControllerKind(kind)
    if kind is ControllerKind.RM:
        return choose_random(rng)
    return _POLICIES[kind](history, cfg, rng)
