"""Shifted-mask coded exposure.

A single random binary mask, wider than the frame, is slid horizontally by a
fixed number of columns per high-speed frame.  Frame ``t`` is multiplied by
the window of the mask at column offset ``phase(t)`` and the coded frames of
one exposure are summed into a measurement.

Masks are drawn from ``numpy.random.default_rng(seed)`` (PCG64) as
``rng.random((h, w)) < density``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .videoio import load_pgm, read_keyvalue, save_pgm_bytes, write_keyvalue

__all__ = [
    "Mask",
    "CodeSchedule",
    "Measurement",
    "generate_mask",
    "make_schedule",
    "code_for_frame",
    "codes",
    "forward",
    "adjoint",
    "coverage",
    "save_mask",
    "load_mask",
]

DEFAULT_DENSITY = 0.5


@dataclass(frozen=True)
class Mask:
    bits: np.ndarray
    seed: int | None = None
    density: float | None = None
    n_f_max: int | None = None

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2 or min(bits.shape) < 1:
            raise ValueError(f"mask must be a non-empty 2-D array, got {bits.shape}")
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("mask entries must be 0 or 1")
        object.__setattr__(self, "bits", bits.astype(np.uint8))

    @property
    def shape(self):
        return self.bits.shape


def generate_mask(frame_height: int, frame_width: int, n_f_max: int,
                  density: float = DEFAULT_DENSITY, seed: int = 0) -> Mask:
    """Random Bernoulli(``density``) mask of size ``h x (w + n_f_max - 1)``."""
    if frame_height < 1 or frame_width < 1:
        raise ValueError("frame dimensions must be positive")
    if n_f_max < 1:
        raise ValueError("n_f_max must be >= 1")
    if not 0.0 < density < 1.0:
        raise ValueError("density must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    bits = rng.random((frame_height, frame_width + n_f_max - 1)) < density
    return Mask(bits, seed=seed, density=density, n_f_max=n_f_max)


@dataclass(frozen=True)
class CodeSchedule:
    """Base mask plus the horizontal shift applied per high-speed frame."""

    base_mask: Mask
    frame_shape: tuple[int, int]
    shift_per_frame: int = 1

    def __post_init__(self):
        h, w = self.frame_shape
        mh, mw = self.base_mask.shape
        if self.shift_per_frame < 1:
            raise ValueError("shift_per_frame must be >= 1")
        if mh != h or mw < w:
            raise ValueError(f"mask {self.base_mask.shape} cannot cover frames of shape {self.frame_shape}")
        object.__setattr__(self, "frame_shape", (int(h), int(w)))

    @property
    def n_phases(self) -> int:
        return self.base_mask.shape[1] - self.frame_shape[1] + 1

    def phase(self, t: int) -> int:
        return (t * self.shift_per_frame) % self.n_phases


def make_schedule(frame_height: int, frame_width: int, n_f_max: int = 16,
                  density: float = DEFAULT_DENSITY, seed: int = 0,
                  shift_per_frame: int = 1) -> CodeSchedule:
    mask = generate_mask(frame_height, frame_width, n_f_max, density, seed)
    return CodeSchedule(mask, (frame_height, frame_width), shift_per_frame)


@dataclass
class Measurement:
    """One coded exposure: the sum of ``n_frames`` masked frames."""

    pixels: np.ndarray
    n_frames: int
    first_frame_index: int
    schedule_phase: int

    def __post_init__(self):
        if self.n_frames < 1:
            raise ValueError("a measurement integrates at least one frame")


def code_for_frame(schedule: CodeSchedule, phase: int, frame_dims=None) -> np.ndarray:
    """Window of the base mask at column offset ``phase``."""
    h, w = schedule.frame_shape if frame_dims is None else frame_dims
    if (h, w) != schedule.frame_shape:
        raise ValueError(f"frame dims {(h, w)} do not match schedule {schedule.frame_shape}")
    if phase < 0 or phase + w > schedule.base_mask.shape[1]:
        raise ValueError(f"phase {phase} out of range for mask width {schedule.base_mask.shape[1]}")
    return schedule.base_mask.bits[:, phase:phase + w]


def codes(schedule: CodeSchedule, first_frame_index: int, n_frames: int) -> np.ndarray:
    """Stack ``(n_frames, h, w)`` of float codes for consecutive global frames."""
    return np.stack([code_for_frame(schedule, schedule.phase(first_frame_index + t))
                     for t in range(n_frames)]).astype(np.float64)


def coverage(schedule: CodeSchedule, first_frame_index: int, n_frames: int) -> np.ndarray:
    """Per-pixel sum of squared codes over the exposure (= count of open slots)."""
    return codes(schedule, first_frame_index, n_frames).sum(axis=0)


def forward(frames, schedule: CodeSchedule, first_frame_index: int = 0) -> Measurement:
    """Collapse ``frames`` (sequence of 2-D arrays) into one coded measurement."""
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] == 0:
        raise ValueError("forward needs a non-empty stack of frames")
    if x.shape[1:] != schedule.frame_shape:
        raise ValueError(f"frames {x.shape[1:]} do not match schedule {schedule.frame_shape}")
    c = codes(schedule, first_frame_index, x.shape[0])
    return Measurement((c * x).sum(axis=0), x.shape[0], first_frame_index,
                       schedule.phase(first_frame_index))


def adjoint(measurement: Measurement, schedule: CodeSchedule) -> np.ndarray:
    """Back-project a measurement: frame ``t`` is ``code_t * pixels``."""
    y = np.asarray(measurement.pixels, dtype=np.float64)
    if y.shape != schedule.frame_shape:
        raise ValueError(f"measurement {y.shape} does not match schedule {schedule.frame_shape}")
    if measurement.schedule_phase != schedule.phase(measurement.first_frame_index):
        raise ValueError("measurement phase is inconsistent with the schedule")
    c = codes(schedule, measurement.first_frame_index, measurement.n_frames)
    return c * y[None]


def save_mask(mask: Mask, path) -> Path:
    """Write the mask as a {0, 255} PGM plus a ``.txt`` sidecar; returns the sidecar path."""
    path = Path(path)
    save_pgm_bytes(mask.bits * np.uint8(255), path)
    sidecar = path.with_suffix(".txt")
    write_keyvalue({"seed": mask.seed, "density": mask.density, "n_f_max": mask.n_f_max}, sidecar)
    return sidecar


def load_mask(path) -> Mask:
    path = Path(path)
    raster = load_pgm(path)
    if not np.all((raster == 0) | (raster == 255)):
        raise ValueError(f"{path}: mask PGM must contain only 0 and 255")
    meta = {}
    sidecar = path.with_suffix(".txt")
    if sidecar.is_file():
        meta = read_keyvalue(sidecar)

    def _get(key, cast):
        v = meta.get(key)
        return None if v in (None, "None", "") else cast(v)

    return Mask((raster == 255).astype(np.uint8), seed=_get("seed", int),
                density=_get("density", float), n_f_max=_get("n_f_max", int))
