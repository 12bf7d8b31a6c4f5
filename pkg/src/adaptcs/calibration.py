"""Learn a velocity -> N_F lookup table from training videos.

For every training video and playback speed-up (frame decimation factor):

1. decimate the video to speed its motion up;
2. estimate the scene velocity from coded measurements taken at a probe N_F;
3. for each candidate N_F, code the video, reconstruct every measurement and
   record the mean per-frame PSNR.

Velocities are then bucketed, and walking the buckets from slow to fast each
one gets the largest candidate N_F whose mean PSNR reaches the target, never
exceeding the choice of the slower bucket.  Table boundaries sit halfway
between adjacent bucket velocities.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coding import CodeSchedule, forward
from .controller import LookupTable
from .motion import BlockMatchParams, block_match, median_filter_field, scene_velocity
from .pipeline import motion_image
from .recon import ReconParams, psnr, reconstruct
from .videoio import VideoSequence

__all__ = [
    "CalibrationError",
    "CalibrationConfig",
    "LogRow",
    "estimate_velocity",
    "mean_psnr_at",
    "build_log",
    "table_from_log",
    "calibrate",
    "export_calibration_log",
    "load_calibration_log",
]

DEFAULT_CANDIDATES = (2, 4, 6, 8, 12, 16)


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class CalibrationConfig:
    training_videos: tuple = ()
    framerate_multipliers: tuple = (1, 2, 4)
    candidate_n_f: tuple = DEFAULT_CANDIDATES
    target_psnr: float = 22.0
    probe_n_f: int = 6
    bucket_width: float = 0.25
    bm_params: BlockMatchParams = field(default_factory=BlockMatchParams)
    smooth_sigma: float = 1.5
    field_filter: int = 3
    max_frames: int | None = None
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "training_videos", tuple(self.training_videos))
        object.__setattr__(self, "framerate_multipliers", tuple(int(m) for m in self.framerate_multipliers))
        object.__setattr__(self, "candidate_n_f", tuple(int(n) for n in self.candidate_n_f))
        validate_candidates(self.candidate_n_f)
        if not self.target_psnr > 0:
            raise CalibrationError("target_psnr must be positive")
        if not self.framerate_multipliers or any(m < 1 for m in self.framerate_multipliers):
            raise CalibrationError("framerate multipliers must be integers >= 1")
        if self.probe_n_f < 1:
            raise CalibrationError("probe_n_f must be >= 1")
        if not self.bucket_width > 0:
            raise CalibrationError("bucket_width must be positive")


def validate_candidates(candidates) -> None:
    if not candidates:
        raise CalibrationError("candidate N_F list is empty")
    if list(candidates) != sorted(set(candidates)) or candidates[0] < 1:
        raise CalibrationError("candidate N_F values must be distinct, positive and ascending")


@dataclass(frozen=True)
class LogRow:
    video_id: int
    multiplier: int
    estimated_v: float
    n_f: int
    mean_psnr: float


def _exposures(n_frames: int, n_f: int, limit: int | None):
    stop = n_frames if limit is None else min(n_frames, limit)
    return range(0, stop - n_f + 1, n_f)


def estimate_velocity(video: VideoSequence, schedule: CodeSchedule, n_f: int,
                      bm_params: BlockMatchParams | None = None, smooth_sigma: float = 1.5,
                      field_filter: int = 3, limit: int | None = None) -> float:
    """Median scene velocity over consecutive coded exposures of ``n_f`` frames."""
    bm_params = bm_params or BlockMatchParams()
    starts = list(_exposures(len(video), n_f, limit))
    if len(starts) < 2:
        raise CalibrationError(f"need two exposures of {n_f} frames, video has {len(video)} frames")
    imgs = [motion_image(forward(video.frames[s:s + n_f], schedule, s), schedule, "coverage", smooth_sigma)
            for s in starts]
    vs = [scene_velocity(median_filter_field(block_match(a, b, bm_params), field_filter), n_f).v
          for a, b in zip(imgs, imgs[1:])]
    return float(np.median(vs))


def mean_psnr_at(video: VideoSequence, schedule: CodeSchedule, n_f: int,
                 recon_params: ReconParams | None = None, limit: int | None = None) -> float:
    """Mean per-frame PSNR after coding ``video`` at ``n_f`` and reconstructing."""
    scores = []
    for s in _exposures(len(video), n_f, limit):
        truth = video.frames[s:s + n_f]
        est = reconstruct(forward(truth, schedule, s), schedule, recon_params).frames
        scores.extend(psnr(t, e) for t, e in zip(truth, est))
    if not scores:
        raise CalibrationError(f"video too short for N_F={n_f}")
    return float(np.mean(scores))


def build_log(config: CalibrationConfig, schedule: CodeSchedule,
              recon_params: ReconParams | None = None) -> list[LogRow]:
    """Evaluate every (video, multiplier, candidate N_F) cell; rows come back in that order."""
    if not config.training_videos:
        raise CalibrationError("no training videos")
    need = max(max(config.candidate_n_f), 2 * config.probe_n_f)
    jobs = []
    for vid_id, video in enumerate(config.training_videos):
        for mult in config.framerate_multipliers:
            fast = video.decimate(mult)
            if len(fast) < need:
                raise CalibrationError(
                    f"video {vid_id} at x{mult} has {len(fast)} frames; need {need}")
            jobs.append((vid_id, mult, fast))

    def velocity(job):
        return estimate_velocity(job[2], schedule, config.probe_n_f, config.bm_params,
                                 config.smooth_sigma, config.field_filter, config.max_frames)

    def quality(cell):
        job, n_f = cell
        return mean_psnr_at(job[2], schedule, n_f, recon_params, config.max_frames)

    cells = [(job, n_f) for job in jobs for n_f in config.candidate_n_f]
    with ThreadPoolExecutor(max_workers=max(1, config.workers)) as pool:
        velocities = list(pool.map(velocity, jobs))
        psnrs = list(pool.map(quality, cells))

    v_of = {(j[0], j[1]): v for j, v in zip(jobs, velocities)}
    return [LogRow(job[0], job[1], v_of[(job[0], job[1])], n_f, p)
            for (job, n_f), p in zip(cells, psnrs)]


def _bucket(v: float, width: float) -> float:
    return round(v / width) * width


def choose_per_bucket(log, candidates, target_psnr: float, bucket_width: float = 0.25):
    """Return ``[(bucket_velocity, n_f, bucket_psnr_by_n_f), ...]`` sorted by velocity."""
    validate_candidates(tuple(candidates))
    if not log:
        raise CalibrationError("empty calibration log")
    cells: dict[float, dict[int, list[float]]] = {}
    for row in log:
        cells.setdefault(_bucket(row.estimated_v, bucket_width), {}).setdefault(row.n_f, []).append(row.mean_psnr)

    out = []
    cap = math.inf
    for b in sorted(cells):
        scores = {n: float(np.mean(p)) for n, p in cells[b].items()}
        ok = [n for n in candidates if n <= cap and n in scores and scores[n] >= target_psnr]
        chosen = max(ok) if ok else min(candidates)
        cap = chosen
        out.append((b, chosen, scores))
    return out


def table_from_log(log, candidates=DEFAULT_CANDIDATES, target_psnr: float = 22.0,
                   bucket_width: float = 0.25) -> LookupTable:
    """Turn a calibration log into a monotone lookup table."""
    picks = choose_per_bucket(log, tuple(candidates), target_psnr, bucket_width)
    rows = []
    lo = 0.0
    for k, (b, n, _) in enumerate(picks):
        if k + 1 < len(picks) and picks[k + 1][1] == n:
            continue
        hi = math.inf if k + 1 == len(picks) else (b + picks[k + 1][0]) / 2.0
        rows.append((lo, hi, n))
        lo = hi
    return LookupTable(tuple(rows))


def calibrate(config: CalibrationConfig, schedule: CodeSchedule,
              recon_params: ReconParams | None = None) -> LookupTable:
    log = build_log(config, schedule, recon_params)
    return table_from_log(log, config.candidate_n_f, config.target_psnr, config.bucket_width)


LOG_COLUMNS = ["video_id", "multiplier", "estimated_v", "n_f", "mean_psnr"]


def export_calibration_log(log, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# adaptcs calibration_log v1\n")
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for r in log:
            w.writerow([r.video_id, r.multiplier, repr(float(r.estimated_v)), r.n_f, repr(float(r.mean_psnr))])


def load_calibration_log(path) -> list[LogRow]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    return [LogRow(int(r["video_id"]), int(r["multiplier"]), float(r["estimated_v"]),
                   int(r["n_f"]), float(r["mean_psnr"]))
            for r in csv.DictReader(lines)]
