"""GAP-style reconstruction of coded exposures, and PSNR.

Each iteration alternates

* group soft shrinkage in a separable 3-D DCT domain (2-D spatial DCT per
  frame, 1-D DCT across frames): every coefficient group ``g`` is scaled by
  ``max(0, 1 - weight / ||g||)``;
* the Euclidean projection onto ``{x : forward(x) = y}``, which for binary
  shifted codes is diagonal per pixel:
  ``x += adjoint((y - forward(x)) / R)`` with ``R = sum_t code_t**2``.

Pixels with ``R == 0`` are never seen by the sensor; they keep whatever the
shrinkage step produces and are left out of residual norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dctn, idctn

from .coding import CodeSchedule, Measurement, codes

__all__ = [
    "ReconParams",
    "ReconResult",
    "dct3",
    "idct3",
    "group_norms",
    "shrink",
    "project",
    "reconstruct",
    "psnr",
]


@dataclass(frozen=True)
class ReconParams:
    """Solver settings.

    ``group_shape`` is ``(frames, rows, cols)`` of one coefficient group;
    ``None`` in the first slot means "all N_F temporal coefficients".  The
    default pairs two adjacent temporal frequencies.  A group spanning every
    temporal frequency shares one scale factor, so a strong temporal-DC
    coefficient shields the spurious higher temporal coefficients of the same
    block and static content gets worse, not better, with longer exposures.
    """

    max_iters: int = 100
    tol: float = 1e-4
    shrinkage_weight: float = 0.05
    group_shape: tuple = (2, 4, 4)
    init: str = "mean"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.shrinkage_weight < 0:
            raise ValueError("shrinkage_weight must be non-negative")
        if len(self.group_shape) != 3:
            raise ValueError("group_shape needs three entries")

    def groups_for(self, n_frames: int) -> tuple[int, int, int]:
        gt, gy, gx = self.group_shape
        return (n_frames if gt is None else min(int(gt), n_frames)), int(gy), int(gx)


@dataclass
class ReconResult:
    frames: np.ndarray
    iterations_used: int
    residual_history: list = field(default_factory=list)
    shrink_residual_history: list = field(default_factory=list)


def dct3(x: np.ndarray) -> np.ndarray:
    """Orthonormal DCT-II along all three axes of a ``(t, h, w)`` stack."""
    return dctn(x, type=2, norm="ortho")


def idct3(c: np.ndarray) -> np.ndarray:
    return idctn(c, type=2, norm="ortho")


def _edges(n, g):
    return np.arange(0, n, g)


def group_norms(coef: np.ndarray, shape) -> np.ndarray:
    """L2 norm of each ``shape`` block of ``coef`` (partial blocks at the far edges)."""
    sq = coef * coef
    for axis, g in enumerate(shape):
        sq = np.add.reduceat(sq, _edges(coef.shape[axis], g), axis=axis)
    return np.sqrt(sq)


def _expand(per_group: np.ndarray, full_shape, shape) -> np.ndarray:
    out = per_group
    for axis, g in enumerate(shape):
        n = full_shape[axis]
        reps = np.full(out.shape[axis], g)
        reps[-1] = n - g * (out.shape[axis] - 1)
        out = np.repeat(out, reps, axis=axis)
    return out


def shrink(x: np.ndarray, weight: float, shape) -> np.ndarray:
    """Group soft-thresholding of the 3-D DCT coefficients of ``x``."""
    coef = dct3(x)
    norms = group_norms(coef, shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > 0, np.maximum(0.0, 1.0 - weight / norms), 0.0)
    return idct3(coef * _expand(scale, coef.shape, shape))


def _residual(x, y, c, observed):
    r = y - (c * x).sum(axis=0)
    return r, float(np.linalg.norm(r[observed]))


def project(x: np.ndarray, y: np.ndarray, c: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Closest point to ``x`` (Euclidean) with ``sum_t c_t x_t == y`` on observed pixels."""
    observed = R > 0
    r = y - (c * x).sum(axis=0)
    step = np.zeros_like(r)
    step[observed] = r[observed] / R[observed]
    return x + c * step[None]


def _check(m: Measurement, schedule: CodeSchedule):
    if m.n_frames < 1:
        raise ValueError("measurement integrates no frames")
    y = np.asarray(m.pixels, dtype=np.float64)
    if y.shape != schedule.frame_shape:
        raise ValueError(f"measurement {y.shape} does not match schedule {schedule.frame_shape}")
    if m.schedule_phase != schedule.phase(m.first_frame_index):
        raise ValueError("measurement phase is inconsistent with the schedule")
    return y


def reconstruct(m: Measurement, schedule: CodeSchedule, params: ReconParams | None = None) -> ReconResult:
    """Recover the ``m.n_frames`` high-speed frames behind one measurement."""
    params = params or ReconParams()
    y = _check(m, schedule)
    c = codes(schedule, m.first_frame_index, m.n_frames)
    R = (c * c).sum(axis=0)
    observed = R > 0
    gshape = params.groups_for(m.n_frames)

    if params.init == "mean":
        x = np.broadcast_to(np.where(observed, y / np.where(observed, R, 1.0), 0.0), c.shape).copy()
    else:
        x = project(np.zeros_like(c), y, c, R)
    residuals, shrink_residuals = [], []
    it = 0
    for it in range(1, params.max_iters + 1):
        theta = shrink(x, params.shrinkage_weight, gshape)
        shrink_residuals.append(_residual(theta, y, c, observed)[1])
        x_new = project(theta, y, c, R)
        residuals.append(_residual(x_new, y, c, observed)[1])
        denom = np.linalg.norm(x)
        change = np.linalg.norm(x_new - x) / denom if denom > 0 else np.linalg.norm(x_new)
        x = x_new
        if change < params.tol:
            break
    return ReconResult(np.clip(x, 0.0, 1.0), it, residuals, shrink_residuals)


def psnr(truth, estimate, peak: float = 1.0, mask=None) -> float:
    """``10 log10(peak**2 / MSE)``; ``inf`` when the images agree exactly.

    ``mask`` optionally restricts the MSE to selected pixels.
    """
    truth = np.asarray(truth, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if truth.shape != estimate.shape:
        raise ValueError(f"shape mismatch {truth.shape} vs {estimate.shape}")
    diff = truth - estimate
    if mask is not None:
        diff = diff[np.broadcast_to(mask, diff.shape)]
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)
