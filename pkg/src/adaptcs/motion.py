"""Block-matching motion estimation.

Image ``a`` is tiled into ``P x P`` blocks from the top-left corner (partial
edge blocks are dropped).  For each block at origin ``o`` the displacement
``d = (dy, dx)`` is searched such that ``b[o + d]`` best matches ``a[o]``.
Candidates are restricted to ``|dy|, |dx| <= (M - P) // 2`` (the ``M x M``
window centred on the block) and to targets that lie fully inside ``b``;
near borders the range shrinks, nothing is padded.

Ties on the metric are broken by smallest ``dx**2 + dy**2``, then smallest
``dy``, then smallest ``dx``.

Cross-diamond search visits, as ``(dy, dx)`` offsets:

1. small cross ``(0,0) (-1,0) (0,-1) (0,1) (1,0)`` around the origin; stop
   if the origin wins;
2. large cross arms ``(-2,0) (0,-2) (0,2) (2,0)`` around the origin;
3. large diamond ``(±2,0) (0,±2) (±1,±1)`` around the running best, repeated
   until its centre wins;
4. small diamond ``(±1,0) (0,±1)`` around the running best, repeated until
   its centre wins.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import median_filter

__all__ = [
    "BlockMatchParams",
    "MotionField",
    "SceneVelocity",
    "SegmentationMap",
    "full_search",
    "cross_diamond_search",
    "block_match",
    "segment",
    "median_filter_field",
    "scene_velocity",
    "save_field",
    "load_field",
]

METRICS = ("mse", "sad")
ALGORITHMS = ("full", "cross_diamond")

SMALL_CROSS = ((0, 0), (-1, 0), (0, -1), (0, 1), (1, 0))
LARGE_CROSS_ARMS = ((-2, 0), (0, -2), (0, 2), (2, 0))
LARGE_DIAMOND = ((0, 0), (-2, 0), (-1, -1), (-1, 1), (0, -2), (0, 2), (1, -1), (1, 1), (2, 0))
SMALL_DIAMOND = SMALL_CROSS


@dataclass(frozen=True)
class BlockMatchParams:
    block_size: int = 16
    window_size: int = 40
    metric: str = "mse"
    algorithm: str = "cross_diamond"

    def __post_init__(self):
        if self.block_size < 2:
            raise ValueError("block_size must be >= 2")
        if self.window_size < self.block_size:
            raise ValueError("window_size must be >= block_size")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")

    @property
    def search_radius(self) -> int:
        return (self.window_size - self.block_size) // 2


@dataclass
class MotionField:
    """Per-block displacement ``(dy, dx)`` and the metric at that displacement."""

    dy: np.ndarray
    dx: np.ndarray
    cost: np.ndarray
    block_size: int

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.dy.shape

    @property
    def block_origin(self) -> np.ndarray:
        """``(rows, cols, 2)`` array of block top-left pixels ``(y, x)``."""
        r, c = np.indices(self.grid_shape)
        return np.stack([r * self.block_size, c * self.block_size], axis=-1)

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.dx, self.dy)

    def __eq__(self, other):
        if not isinstance(other, MotionField):
            return NotImplemented
        return (self.block_size == other.block_size
                and np.array_equal(self.dy, other.dy)
                and np.array_equal(self.dx, other.dx)
                and np.array_equal(self.cost, other.cost))


@dataclass(frozen=True)
class SceneVelocity:
    v: float
    max_block_displacement: float
    frames_spanned: int


@dataclass
class SegmentationMap:
    foreground: np.ndarray
    threshold: float


def _check_pair(a, b, params):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape != b.shape:
        raise ValueError(f"images must be 2-D with equal shapes, got {a.shape} and {b.shape}")
    P = params.block_size
    if a.shape[0] < P or a.shape[1] < P:
        raise ValueError(f"image {a.shape} smaller than one {P}x{P} block")
    return a, b


def _costs(block, windows, ys, xs, metric):
    """Metric between ``block`` and each candidate window ``windows[ys[k], xs[k]]``.

    Every cost goes through this one reduction so the same candidate always
    yields the same float, whichever search evaluated it.
    """
    cand = windows[ys, xs]
    diff = (cand - block[None]).reshape(len(ys), -1)
    if metric == "mse":
        return (diff * diff).sum(axis=1) / diff.shape[1]
    return np.abs(diff).sum(axis=1)


def _ranges(oy, ox, shape, P, r):
    h, w = shape
    return (max(-r, -oy), min(r, h - P - oy)), (max(-r, -ox), min(r, w - P - ox))


def _grid(shape, P):
    return shape[0] // P, shape[1] // P


def full_search(a, b, params: BlockMatchParams | None = None) -> MotionField:
    """Exhaustive block matching of ``a`` against ``b``."""
    params = params or BlockMatchParams(algorithm="full")
    a, b = _check_pair(a, b, params)
    P, r = params.block_size, params.search_radius
    windows = sliding_window_view(b, (P, P))
    rows, cols = _grid(a.shape, P)
    dy = np.zeros((rows, cols), dtype=np.int64)
    dx = np.zeros((rows, cols), dtype=np.int64)
    cost = np.zeros((rows, cols))
    for i in range(rows):
        for j in range(cols):
            oy, ox = i * P, j * P
            (y0, y1), (x0, x1) = _ranges(oy, ox, a.shape, P, r)
            gy, gx = np.meshgrid(np.arange(y0, y1 + 1), np.arange(x0, x1 + 1), indexing="ij")
            gy, gx = gy.ravel(), gx.ravel()
            c = _costs(a[oy:oy + P, ox:ox + P], windows, oy + gy, ox + gx, params.metric)
            k = np.lexsort((gx, gy, gy * gy + gx * gx, c))[0]
            dy[i, j], dx[i, j], cost[i, j] = gy[k], gx[k], c[k]
    return MotionField(dy, dx, cost, P)


def _cds_block(block, windows, oy, ox, yr, xr, metric):
    seen = {}

    def visit(center, pattern):
        pts = []
        for py, px in pattern:
            d = (center[0] + py, center[1] + px)
            if d not in seen and yr[0] <= d[0] <= yr[1] and xr[0] <= d[1] <= xr[1]:
                pts.append(d)
        if pts:
            ys = np.array([oy + d[0] for d in pts])
            xs = np.array([ox + d[1] for d in pts])
            for d, c in zip(pts, _costs(block, windows, ys, xs, metric)):
                seen[d] = float(c)

    def best_of(center, pattern):
        cand = [(center[0] + py, center[1] + px) for py, px in pattern]
        cand = [d for d in cand if d in seen]
        return min(cand, key=lambda d: (seen[d], d[0] * d[0] + d[1] * d[1], d[0], d[1]))

    origin = (0, 0)
    visit(origin, SMALL_CROSS)
    best = best_of(origin, SMALL_CROSS)
    if best == origin:
        return best, seen[best]

    visit(origin, LARGE_CROSS_ARMS)
    best = best_of(origin, SMALL_CROSS + LARGE_CROSS_ARMS)

    for pattern in (LARGE_DIAMOND, SMALL_DIAMOND):
        while True:
            visit(best, pattern)
            nxt = best_of(best, pattern)
            if nxt == best:
                break
            best = nxt
    return best, seen[best]


def cross_diamond_search(a, b, params: BlockMatchParams | None = None) -> MotionField:
    """Cross-diamond pattern search; see the module docstring for the patterns."""
    params = params or BlockMatchParams()
    a, b = _check_pair(a, b, params)
    P, r = params.block_size, params.search_radius
    windows = sliding_window_view(b, (P, P))
    rows, cols = _grid(a.shape, P)
    dy = np.zeros((rows, cols), dtype=np.int64)
    dx = np.zeros((rows, cols), dtype=np.int64)
    cost = np.zeros((rows, cols))
    for i in range(rows):
        for j in range(cols):
            oy, ox = i * P, j * P
            yr, xr = _ranges(oy, ox, a.shape, P, r)
            (by, bx), c = _cds_block(a[oy:oy + P, ox:ox + P], windows, oy, ox, yr, xr, params.metric)
            dy[i, j], dx[i, j], cost[i, j] = by, bx, c
    return MotionField(dy, dx, cost, P)


def block_match(a, b, params: BlockMatchParams) -> MotionField:
    """Dispatch on ``params.algorithm``."""
    if params.algorithm == "full":
        return full_search(a, b, params)
    return cross_diamond_search(a, b, params)


def segment(field: MotionField, threshold: float) -> SegmentationMap:
    """Label blocks whose displacement magnitude exceeds ``threshold`` as foreground."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    return SegmentationMap(field.magnitude() > threshold, float(threshold))


def median_filter_field(field: MotionField, size: int = 3) -> MotionField:
    """Component-wise median of ``dx`` and ``dy`` over ``size x size`` blocks.

    Removes isolated vectors from occlusion or flat blocks; an object must
    cover most of the neighbourhood to keep its motion.  Costs are unchanged.
    """
    if size <= 1:
        return field
    dy = median_filter(field.dy, size, mode="nearest")
    dx = median_filter(field.dx, size, mode="nearest")
    return MotionField(dy, dx, field.cost.copy(), field.block_size)


def scene_velocity(field: MotionField, frames_spanned: int) -> SceneVelocity:
    """Largest block displacement divided by the number of frames it spans."""
    if frames_spanned < 1:
        raise ValueError("frames_spanned must be >= 1")
    if field.dy.size == 0:
        raise ValueError("motion field has no blocks")
    d = float(field.magnitude().max())
    return SceneVelocity(d / frames_spanned, d, int(frames_spanned))


FIELD_HEADER = "# adaptcs motion_field v1"
FIELD_COLUMNS = ["block_row", "block_col", "dx", "dy", "cost"]


def save_field(field: MotionField, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(FIELD_HEADER + f" block_size={field.block_size}\n")
        w = csv.writer(fh)
        w.writerow(FIELD_COLUMNS)
        rows, cols = field.grid_shape
        for i in range(rows):
            for j in range(cols):
                w.writerow([i, j, int(field.dx[i, j]), int(field.dy[i, j]), repr(float(field.cost[i, j]))])


def load_field(path) -> MotionField:
    path = Path(path)
    lines = path.read_text().splitlines()
    block_size = 0
    if lines and lines[0].startswith("#"):
        for tok in lines[0].split():
            if tok.startswith("block_size="):
                block_size = int(tok.split("=", 1)[1])
        lines = lines[1:]
    recs = list(csv.DictReader(lines))
    if not recs:
        raise ValueError(f"{path}: empty motion field")
    rows = max(int(r["block_row"]) for r in recs) + 1
    cols = max(int(r["block_col"]) for r in recs) + 1
    dy = np.zeros((rows, cols), dtype=np.int64)
    dx = np.zeros((rows, cols), dtype=np.int64)
    cost = np.zeros((rows, cols))
    for r in recs:
        i, j = int(r["block_row"]), int(r["block_col"])
        dy[i, j], dx[i, j], cost[i, j] = int(r["dy"]), int(r["dx"]), float(r["cost"])
    return MotionField(dy, dx, cost, block_size)
