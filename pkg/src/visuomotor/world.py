"""The environment: a static grayscale image observed through a movable
camera window, with discrete one-pixel motor commands and additive
sensor noise. Includes PGM (P2/P5) reading and writing plus a seeded
synthetic image so nothing external is required."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, ParseError


class MotorCommand(Enum):
    """The five discrete actions. Values double as CSV codes."""

    UP = "U"
    DOWN = "D"
    LEFT = "L"
    RIGHT = "R"
    STAY = "S"


COMMANDS: tuple[MotorCommand, ...] = tuple(MotorCommand)

# Screen convention: y grows downward, matching image row order.
_VELOCITIES: dict[MotorCommand, tuple[int, int]] = {
    MotorCommand.UP: (0, -1),
    MotorCommand.DOWN: (0, 1),
    MotorCommand.LEFT: (-1, 0),
    MotorCommand.RIGHT: (1, 0),
    MotorCommand.STAY: (0, 0),
}


def command_to_velocity(cmd: MotorCommand) -> tuple[int, int]:
    """Map a command to its (vx, vy) pixel velocity."""
    return _VELOCITIES[cmd]


@dataclass(frozen=True)
class WorldImage:
    """Immutable grayscale image with intensities in [0, 1]."""

    pixels: np.ndarray  # (height, width) float64

    def __post_init__(self):
        pixels = np.array(self.pixels, dtype=float)  # own private copy
        if pixels.ndim != 2 or pixels.size == 0:
            raise ConfigError("image must be a non-empty 2-D array")
        if not np.all(np.isfinite(pixels)):
            raise ConfigError("image has non-finite pixels")
        if pixels.min() < 0.0 or pixels.max() > 1.0:
            raise ConfigError("image intensities must lie in [0, 1]")
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class CameraState:
    """Top-left corner and size of the camera window, in pixels."""

    left: int
    top: int
    width: int = 32
    height: int = 32

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError("camera window must have positive size")
        if self.left < 0 or self.top < 0:
            raise ConfigError("camera corner must be non-negative")

    @property
    def pixel_count(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class NoiseModel:
    """Additive white Gaussian sensor noise, in intensity units."""

    sigma: float = 0.01

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError("noise sigma must be non-negative")


def _check_camera(world: WorldImage, cam: CameraState) -> None:
    if cam.left + cam.width > world.width or cam.top + cam.height > world.height:
        raise ConfigError(
            f"camera window {cam.width}x{cam.height} at ({cam.left}, {cam.top}) "
            f"does not fit a {world.width}x{world.height} image"
        )


def apply_motor(
    world: WorldImage, cam: CameraState, cmd: MotorCommand
) -> CameraState:
    """Translate the window by the command velocity, clamped to the image.

    Hitting a border absorbs the motion; the window always stays fully
    inside the image.
    """
    _check_camera(world, cam)
    vx, vy = _VELOCITIES[cmd]
    left = min(max(cam.left + vx, 0), world.width - cam.width)
    top = min(max(cam.top + vy, 0), world.height - cam.height)
    return CameraState(left=left, top=top, width=cam.width, height=cam.height)


def observe(
    world: WorldImage,
    cam: CameraState,
    noise: NoiseModel,
    rng: np.random.Generator,
) -> np.ndarray:
    """Read the window contents row-major, with optional sensor noise.

    Gaussian noise of the configured sigma is added per pixel and the
    result is clamped back to [0, 1]. With sigma 0 the frame is the
    exact window contents.
    """
    _check_camera(world, cam)
    window = world.pixels[cam.top : cam.top + cam.height, cam.left : cam.left + cam.width]
    frame = window.astype(float).ravel()
    if noise.sigma > 0.0:
        frame += rng.normal(0.0, noise.sigma, frame.size)
        np.clip(frame, 0.0, 1.0, out=frame)
    return frame


_WHITESPACE = frozenset(b" \t\n\r\x0b\x0c")
_COMMENT = ord("#")


def _next_token(data: bytes, pos: int) -> tuple[bytes, int, int]:
    """Skip whitespace/comments; return (token, token_start, pos_after)."""
    n = len(data)
    while pos < n:
        byte = data[pos]
        if byte in _WHITESPACE:
            pos += 1
        elif byte == _COMMENT:
            newline = data.find(b"\n", pos)
            pos = n if newline < 0 else newline + 1
        else:
            break
    if pos >= n:
        raise ParseError("unexpected end of input", offset=pos)
    start = pos
    while pos < n and data[pos] not in _WHITESPACE and data[pos] != _COMMENT:
        pos += 1
    return data[start:pos], start, pos


def _int_token(data: bytes, pos: int, what: str) -> tuple[int, int]:
    token, start, pos = _next_token(data, pos)
    try:
        value = int(token)
    except ValueError:
        raise ParseError(f"invalid {what} {token!r}", offset=start) from None
    return value, pos


def load_image(data: bytes) -> WorldImage:
    """Parse a PGM image (binary P5 or ASCII P2) into a WorldImage.

    Sample value v is mapped to v / maxval. Raises ParseError with the
    byte offset of the problem for malformed input.
    """
    magic, magic_start, pos = _next_token(data, 0)
    if magic not in (b"P2", b"P5"):
        raise ParseError(f"unsupported PNM magic {magic!r}", offset=magic_start)
    width, pos = _int_token(data, pos, "width")
    height, pos = _int_token(data, pos, "height")
    if width < 1 or height < 1:
        raise ParseError("image dimensions must be positive", offset=magic_start)
    maxval, maxval_end = _int_token(data, pos, "maxval")
    if maxval < 1 or maxval > 65535:
        raise ParseError(f"maxval {maxval} out of range 1..65535", offset=pos)
    pos = maxval_end
    count = width * height
    if magic == b"P5":
        if pos >= len(data) or data[pos] not in _WHITESPACE:
            raise ParseError("missing raster separator after maxval", offset=pos)
        pos += 1
        sample_bytes = 1 if maxval < 256 else 2
        need = count * sample_bytes
        if len(data) - pos < need:
            raise ParseError("truncated pixel payload", offset=len(data))
        raw = data[pos : pos + need]
        if sample_bytes == 1:
            values = np.frombuffer(raw, dtype=np.uint8).astype(float)
        else:
            values = np.frombuffer(raw, dtype=">u2").astype(float)
        if values.max(initial=0.0) > maxval:
            raise ParseError("sample value exceeds maxval", offset=pos)
    else:
        samples = np.empty(count)
        for i in range(count):
            value, pos = _int_token(data, pos, "sample")
            if value < 0 or value > maxval:
                raise ParseError(f"sample value {value} exceeds maxval", offset=pos)
            samples[i] = value
        values = samples
    return WorldImage(pixels=(values / maxval).reshape(height, width))


def quantize(values: np.ndarray, maxval: int = 255) -> np.ndarray:
    """Clamp intensities to [0, 1] and quantize round-half-up."""
    clipped = np.clip(np.asarray(values, dtype=float), 0.0, 1.0)
    return np.floor(clipped * maxval + 0.5).astype(np.uint16 if maxval > 255 else np.uint8)


def to_pgm_p2(image: WorldImage, maxval: int = 255) -> bytes:
    """Serialise to ASCII PGM, one image row per line."""
    if maxval < 1 or maxval > 65535:
        raise ConfigError("maxval must be in 1..65535")
    q = quantize(image.pixels, maxval)
    lines = [b"P2", f"{image.width} {image.height}".encode(), str(maxval).encode()]
    lines.extend(b" ".join(str(v).encode() for v in row) for row in q)
    return b"\n".join(lines) + b"\n"


def synthetic_image(
    width: int = 512, height: int = 512, seed: int = 0, components: int = 24
) -> WorldImage:
    """Seeded test scene: sinusoids with a natural-image-like spectrum.

    Component frequencies are log-spaced from about one cycle per image
    up to a dozen-pixel wavelength, with amplitudes falling off as 1/f.
    The low frequencies make distinct regions distinguishable; the high
    ones make a one-pixel camera move visible against the sensor noise,
    like the texture of a photograph.
    """
    if width < 1 or height < 1:
        raise ConfigError("synthetic image dimensions must be positive")
    rng = np.random.default_rng(seed)
    u = (np.arange(width) + 0.5) / max(width, height)
    v = (np.arange(height) + 0.5) / max(width, height)
    uu, vv = np.meshgrid(u, v)
    field = np.zeros((height, width))
    f_low, f_high = 1.5, 64.0
    for k in range(components):
        freq = f_low * (f_high / f_low) ** (k / max(components - 1, 1))
        angle = rng.uniform(0.0, 2.0 * np.pi)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        fx = freq * np.cos(angle)
        fy = freq * np.sin(angle)
        field += np.sin(2.0 * np.pi * (fx * uu + fy * vv) + phase) / freq**0.3
    low, high = field.min(), field.max()
    if high > low:
        field = (field - low) / (high - low)
    else:
        field = np.full_like(field, 0.5)
    return WorldImage(pixels=field)
