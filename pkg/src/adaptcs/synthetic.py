"""Synthetic test scenes with known motion."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .videoio import VideoSequence

__all__ = ["smooth_texture", "disk_video", "textured_disk_video", "mixed_motion_video", "trajectory"]


def smooth_texture(shape, sigma: float, seed: int = 0, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Gaussian-filtered white noise rescaled to ``[lo, hi]``."""
    rng = np.random.default_rng(seed)
    t = gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    t = (t - t.min()) / (t.max() - t.min())
    return lo + (hi - lo) * t


def _disk_alpha(shape, cy, cx, radius, edge):
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    r = np.hypot(yy - cy, xx - cx)
    return 1.0 / (1.0 + np.exp((r - radius) / edge))


def trajectory(n_frames: int, speeds, start: float = 0.0) -> np.ndarray:
    """Cumulative position for per-frame speeds (scalar or length-``n_frames`` array)."""
    speeds = np.broadcast_to(np.asarray(speeds, dtype=np.float64), (n_frames,))
    return start + np.concatenate([[0.0], np.cumsum(speeds[:-1])])


def disk_video(n_frames: int, shape=(64, 64), speed=1.0, radius: float = 12.0,
               edge: float = 1.5, fg: float = 0.85, bg: float = 0.15,
               start=None, wrap: bool = True) -> VideoSequence:
    """Smooth bright disk moving horizontally over a dark gradient background."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    background = bg + 0.1 * (yy / h)
    x0 = (w / 4 if start is None else start)
    xs = trajectory(n_frames, speed, x0)
    frames = []
    for x in xs:
        cx = x % w if wrap else x
        a = _disk_alpha(shape, h / 2, cx, radius, edge)
        if wrap:
            a = np.maximum(a, np.maximum(_disk_alpha(shape, h / 2, cx - w, radius, edge),
                                         _disk_alpha(shape, h / 2, cx + w, radius, edge)))
        frames.append(np.clip(background * (1 - a) + fg * a, 0.0, 1.0))
    return VideoSequence(np.stack(frames))


def textured_disk_video(n_frames: int, shape=(128, 256), speed=1.0, radius: float = 44.0,
                        texture_sigma: float = 4.0, seed: int = 0, start=None,
                        wrap: bool = False) -> VideoSequence:
    """Disk carrying its own texture, moving horizontally over a static textured background.

    ``speed`` is pixels/frame, scalar or per frame.  The disk texture is
    sampled with linear interpolation so any real-valued position renders
    exactly.  With ``wrap`` the disk leaving one side re-enters on the other,
    so long runs keep it in view.
    """
    h, w = shape
    xs = trajectory(n_frames, speed, radius + 4 if start is None else start)
    bg = smooth_texture(shape, 3.0, seed, 0.05, 0.45)
    pad = int(np.ceil(max(abs(xs).max(), w) + 2 * radius)) + 2
    tex = smooth_texture((h, 2 * pad), texture_sigma, seed + 1, 0.5, 1.0)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    rows = yy.astype(int)
    frames = []
    for x in xs:
        a = _disk_alpha(shape, h / 2, x, radius, 1.0)
        if wrap:
            # keep, per pixel, whichever periodic copy of the disk covers it most
            cx = np.full(shape, x % w)
            a = _disk_alpha(shape, h / 2, x % w, radius, 1.0)
            for off in (-w, w):
                b = _disk_alpha(shape, h / 2, x % w + off, radius, 1.0)
                cx = np.where(b > a, x % w + off, cx)
                a = np.maximum(a, b)
            x = cx
        u = xx - x + pad
        u0 = np.clip(np.floor(u).astype(int), 0, 2 * pad - 2)
        f = np.clip(u - u0, 0.0, 1.0)
        fg = tex[rows, u0] * (1 - f) + tex[rows, u0 + 1] * f
        frames.append(np.clip(bg * (1 - a) + fg * a, 0.0, 1.0))
    return VideoSequence(np.stack(frames))


def mixed_motion_video(segments, **kw) -> VideoSequence:
    """Textured disk whose speed is piecewise constant; ``segments`` is ``[(n_frames, speed), ...]``."""
    speeds = np.concatenate([np.full(n, s, dtype=np.float64) for n, s in segments])
    return textured_disk_video(len(speeds), speed=speeds, **kw)
