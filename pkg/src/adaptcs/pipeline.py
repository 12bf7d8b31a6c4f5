"""Adaptive capture loop: code, estimate motion, adapt N_F, reconstruct."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter, uniform_filter

from . import controller as ctl
from .coding import CodeSchedule, Measurement, codes, forward
from .motion import BlockMatchParams, block_match, median_filter_field, scene_velocity
from .recon import ReconParams, psnr, reconstruct
from .videoio import VideoSequence

__all__ = [
    "RunConfig",
    "MeasurementRecord",
    "RunReport",
    "motion_image",
    "run",
    "compare_fixed",
    "save_report",
    "save_frame_psnr",
]

log = logging.getLogger(__name__)

VELOCITY_SOURCES = ("compressed", "reconstructed")
NORMALIZATIONS = ("coverage", "nf")


@dataclass(frozen=True)
class RunConfig:
    schedule: CodeSchedule
    table: ctl.LookupTable = field(default_factory=ctl.default_table)
    initial_n_f: int = ctl.INITIAL_N_F
    n_f_min: int = ctl.N_F_MIN
    n_f_max: int = ctl.N_F_MAX
    bm_params: BlockMatchParams = field(default_factory=BlockMatchParams)
    recon_params: ReconParams = field(default_factory=ReconParams)
    reconstruct_every_measurement: bool = True
    velocity_source: str = "compressed"
    normalization: str = "coverage"
    smooth_sigma: float = 1.5
    field_filter: int = 3
    reference_velocity: bool = False

    def __post_init__(self):
        if not self.n_f_min <= self.initial_n_f <= self.n_f_max:
            raise ValueError(f"initial_n_f={self.initial_n_f} outside [{self.n_f_min}, {self.n_f_max}]")
        if self.velocity_source not in VELOCITY_SOURCES:
            raise ValueError(f"velocity_source must be one of {VELOCITY_SOURCES}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")


@dataclass
class MeasurementRecord:
    index: int
    first_frame_index: int
    n_f: int
    truncated: bool
    v: float = math.nan
    v_reference: float = math.nan
    psnr_mean: float = math.nan


@dataclass
class RunReport:
    records: list[MeasurementRecord]
    frame_psnr: list[tuple[int, int, float]]
    reconstructions: list[np.ndarray] | None = None

    @property
    def measurement_count(self) -> int:
        return len(self.records)

    @property
    def frames_covered(self) -> int:
        return sum(r.n_f for r in self.records)

    @property
    def mean_n_f(self) -> float:
        return self.frames_covered / self.measurement_count

    @property
    def mean_psnr(self) -> float:
        vals = [p for _, _, p in self.frame_psnr]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def n_f_trace(self) -> list[int]:
        return [r.n_f for r in self.records]


def _settle(img, sigma):
    if sigma > 0:
        img = gaussian_filter(img, sigma, mode="nearest")
    # float accumulation noise would otherwise break exact ties on flat regions
    return np.round(img, 12)


def motion_image(m: Measurement, schedule: CodeSchedule, normalization: str = "coverage",
                 smooth_sigma: float = 0.0) -> np.ndarray:
    """Brightness-normalized measurement for block matching.

    ``"nf"`` divides by the number of integrated frames.  ``"coverage"``
    divides each pixel by how many of its code slots were open, which also
    cancels the mask pattern on static content; pixels with no open slot are
    filled from their 3x3 neighbourhood.  An optional Gaussian blur of width
    ``smooth_sigma`` suppresses the residual coding noise on moving content.
    """
    y = np.asarray(m.pixels, dtype=np.float64)
    if normalization == "nf":
        return _settle(y / m.n_frames, smooth_sigma)
    R = codes(schedule, m.first_frame_index, m.n_frames).sum(axis=0)
    seen = R > 0
    img = np.zeros_like(y)
    img[seen] = y[seen] / R[seen]
    if not seen.all():
        num = uniform_filter(img, 3, mode="nearest")
        den = uniform_filter(seen.astype(np.float64), 3, mode="nearest")
        fill = np.divide(num, den, out=np.zeros_like(num), where=den > 1e-12)
        img[~seen] = fill[~seen]
    return _settle(img, smooth_sigma)


def _velocity(a, b, config: RunConfig, frames_spanned: int):
    field = median_filter_field(block_match(a, b, config.bm_params), config.field_filter)
    return scene_velocity(field, frames_spanned)


def _capture_loop(video: VideoSequence, config: RunConfig, fixed_n_f: int | None) -> RunReport:
    frames = video.frames
    n = len(frames)
    schedule = config.schedule
    want_recon = config.reconstruct_every_measurement or config.velocity_source == "reconstructed"

    first = config.initial_n_f if fixed_n_f is None else fixed_n_f
    if n < 2 * first:
        raise ValueError(f"video has {n} frames; need at least {2 * first} for two exposures")

    state = ctl.initial_state(config.initial_n_f, config.n_f_min, config.n_f_max)
    records, frame_psnr, recons = [], [], []
    prev_img = prev_ref = None
    pos = k = 0
    while pos < n:
        n_f = state.current_n_f if fixed_n_f is None else fixed_n_f
        take = min(n_f, n - pos)
        truncated = take < n_f
        m = forward(frames[pos:pos + take], schedule, pos)
        rec = MeasurementRecord(k, pos, take, truncated)

        est = None
        if want_recon:
            est = reconstruct(m, schedule, config.recon_params).frames
            if config.reconstruct_every_measurement:
                scores = [psnr(t, e) for t, e in zip(frames[pos:pos + take], est)]
                frame_psnr.extend((pos + i, k, s) for i, s in enumerate(scores))
                rec.psnr_mean = float(np.mean(scores))
                recons.append(est)

        if config.velocity_source == "reconstructed":
            img = _settle(est[-1], config.smooth_sigma)
        else:
            img = motion_image(m, schedule, config.normalization, config.smooth_sigma)
        ref = frames[pos + take - 1]
        if not truncated:
            if prev_img is not None:
                sv = _velocity(prev_img, img, config, take)
                rec.v = sv.v
                if config.reference_velocity:
                    rec.v_reference = _velocity(prev_ref, ref, config, take).v
                if fixed_n_f is None:
                    state = ctl.step(state, config.table, sv, k)
            prev_img, prev_ref = img, ref
        log.debug("exposure %d: frames %d..%d n_f=%d v=%.3f", k, pos, pos + take - 1, take, rec.v)
        records.append(rec)
        state = state.advance()
        pos += take
        k += 1
    return RunReport(records, frame_psnr, recons if config.reconstruct_every_measurement else None)


def run(video: VideoSequence, config: RunConfig) -> RunReport:
    """Adaptive run: each exposure's N_F comes from the velocity of the previous pair."""
    return _capture_loop(video, config, None)


def compare_fixed(video: VideoSequence, config: RunConfig, fixed_n_f: int) -> RunReport:
    """Same loop with N_F held at ``fixed_n_f`` (velocities are still logged)."""
    if fixed_n_f < 1:
        raise ValueError("fixed_n_f must be >= 1")
    return _capture_loop(video, config, int(fixed_n_f))


def _fmt(x: float) -> str:
    return "" if isinstance(x, float) and math.isnan(x) else repr(float(x))


REPORT_COLUMNS = ["index", "first_frame_index", "n_f", "truncated", "v", "v_reference", "psnr_mean"]


def save_report(report: RunReport, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# adaptcs run_report v1\n")
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in report.records:
            w.writerow([r.index, r.first_frame_index, r.n_f, int(r.truncated),
                        _fmt(r.v), _fmt(r.v_reference), _fmt(r.psnr_mean)])


def load_report(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def save_frame_psnr(report: RunReport, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# adaptcs frame_psnr v1\n")
        w = csv.writer(fh)
        w.writerow(["frame_index", "measurement_index", "psnr"])
        for i, k, p in report.frame_psnr:
            w.writerow([i, k, "inf" if math.isinf(p) else repr(float(p))])
