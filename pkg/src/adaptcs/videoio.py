"""Grayscale frame sequences on disk.

Two input layouts are understood:

* a directory of binary (P5) PGM files, read in lexicographic filename order;
* a raw file of unsigned 8-bit planar frames with a ``key=value`` sidecar
  giving ``width``, ``height`` and ``frames``.

Intensities are mapped to ``[0, 1]`` on load and back to bytes on save.
Frames are plain 2-D ``float64`` arrays.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "VideoIOError",
    "VideoSequence",
    "check_frame",
    "load_sequence",
    "load_pgm",
    "save_frame",
    "save_pgm_bytes",
    "save_sequence",
    "save_raw",
    "read_keyvalue",
    "write_keyvalue",
]


class VideoIOError(ValueError):
    """Raised for missing, malformed or inconsistent frame data."""


@dataclass
class VideoSequence:
    """Ordered stack of equally sized grayscale frames.

    ``frames`` has shape ``(n, height, width)``; ``native_framerate`` is
    informational only.
    """

    frames: np.ndarray
    native_framerate: float = 30.0

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[0] == 0:
            raise VideoIOError(f"expected a non-empty (n, h, w) stack, got shape {frames.shape}")
        for f in frames:
            check_frame(f)
        self.frames = frames

    def __len__(self):
        return self.frames.shape[0]

    def __getitem__(self, idx):
        return self.frames[idx]

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]

    def decimate(self, factor: int) -> "VideoSequence":
        """Keep every ``factor``-th frame (apparent motion speeds up by ``factor``)."""
        if factor < 1:
            raise ValueError("decimation factor must be >= 1")
        return VideoSequence(self.frames[::factor].copy(), self.native_framerate * factor)


def check_frame(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame)
    if frame.ndim != 2 or frame.shape[0] < 1 or frame.shape[1] < 1:
        raise VideoIOError(f"frame must be a non-empty 2-D array, got shape {frame.shape}")
    if not np.all(np.isfinite(frame)):
        raise VideoIOError("frame contains non-finite intensities")
    if frame.min() < 0.0 or frame.max() > 1.0:
        raise VideoIOError("frame intensities must lie in [0, 1]")
    return frame


# -- PGM ---------------------------------------------------------------------

_PGM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _parse_pgm(data: bytes, name: str = "<bytes>") -> np.ndarray:
    if data[:2] != b"P5":
        raise VideoIOError(f"{name}: only binary P5 PGM is supported")
    pos = 2
    fields = []
    for _ in range(3):
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise VideoIOError(f"{name}: truncated PGM header")
        fields.append(m.group(1))
        pos = m.end()
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError:
        raise VideoIOError(f"{name}: malformed PGM header") from None
    if maxval != 255:
        raise VideoIOError(f"{name}: only 8-bit PGM (maxval 255) is supported")
    if width < 1 or height < 1:
        raise VideoIOError(f"{name}: non-positive PGM dimensions")
    # exactly one whitespace byte separates header and raster
    pos += 1
    raster = data[pos:pos + width * height]
    if len(raster) != width * height:
        raise VideoIOError(f"{name}: truncated PGM raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width)


def load_pgm(path) -> np.ndarray:
    """Read one P5 PGM and return its raw ``uint8`` raster."""
    path = Path(path)
    if not path.is_file():
        raise VideoIOError(f"no such file: {path}")
    return _parse_pgm(path.read_bytes(), str(path))


def to_bytes(frame: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(frame, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def save_pgm_bytes(raster: np.ndarray, path) -> None:
    raster = np.ascontiguousarray(raster, dtype=np.uint8)
    h, w = raster.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(raster.tobytes())


def save_frame(frame: np.ndarray, path) -> None:
    """Write ``frame`` as a P5 PGM, mapping intensity ``i`` to ``round(255 i)``."""
    save_pgm_bytes(to_bytes(check_frame(frame)), path)


def save_sequence(video: VideoSequence | np.ndarray, directory, prefix: str = "frame") -> list[Path]:
    frames = video.frames if isinstance(video, VideoSequence) else np.asarray(video)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(len(frames))))
    paths = []
    for i, f in enumerate(frames):
        p = directory / f"{prefix}_{i:0{width}d}.pgm"
        save_frame(f, p)
        paths.append(p)
    return paths


# -- raw planar + sidecar ----------------------------------------------------

def read_keyvalue(path) -> dict[str, str]:
    """Parse a flat ``key=value`` (or ``key: value``) text file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.match(r"^([A-Za-z_][\w.-]*)\s*[=:]\s*(.*)$", line)
        if m is None:
            raise VideoIOError(f"{path}:{lineno}: expected key=value")
        out[m.group(1)] = m.group(2).strip()
    return out


def write_keyvalue(values: dict, path) -> None:
    with open(path, "w") as fh:
        for k, v in values.items():
            fh.write(f"{k}={v}\n")


def _sidecar_for(raw: Path) -> Path | None:
    for cand in (raw.with_suffix(".txt"), raw.with_suffix(raw.suffix + ".txt"),
                 raw.with_suffix(".meta"), raw.parent / "meta.txt"):
        if cand.is_file() and cand != raw:
            return cand
    return None


def _load_raw(raw: Path, sidecar: Path) -> np.ndarray:
    meta = read_keyvalue(sidecar)
    try:
        w, h, n = int(meta["width"]), int(meta["height"]), int(meta["frames"])
    except KeyError as e:
        raise VideoIOError(f"{sidecar}: missing key {e.args[0]}") from None
    except ValueError:
        raise VideoIOError(f"{sidecar}: width/height/frames must be integers") from None
    if w < 1 or h < 1 or n < 1:
        raise VideoIOError(f"{sidecar}: non-positive dimensions")
    data = raw.read_bytes()
    need = w * h * n
    if len(data) < need:
        raise VideoIOError(f"{raw}: truncated raw file ({len(data)} bytes, need {need})")
    return np.frombuffer(data[:need], dtype=np.uint8).reshape(n, h, w)


def save_raw(video: VideoSequence | np.ndarray, path) -> Path:
    """Write frames as raw planar bytes plus a ``<path>.txt`` sidecar."""
    frames = video.frames if isinstance(video, VideoSequence) else np.asarray(video)
    path = Path(path)
    path.write_bytes(to_bytes(frames).tobytes())
    sidecar = path.with_suffix(".txt")
    write_keyvalue({"width": frames.shape[2], "height": frames.shape[1],
                    "frames": frames.shape[0]}, sidecar)
    return sidecar


def load_sequence(path, framerate: float = 30.0) -> VideoSequence:
    """Load a frame sequence from a PGM directory, a raw file, or a raw manifest.

    Parameters
    ----------
    path : str or Path
        Either a directory of ``*.pgm`` files, a raw frame file with a sidecar
        next to it (``<stem>.txt``), or a sidecar/manifest that carries a
        ``data`` key naming the raw file.
    framerate : float
        Stored as metadata.

    Returns
    -------
    VideoSequence
        Intensities are the stored bytes divided by 255.
    """
    path = Path(path)
    if not os.path.exists(path):
        raise VideoIOError(f"no such path: {path}")

    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() == ".pgm")
        if not files:
            raw = sorted(p for p in path.iterdir() if p.suffix.lower() == ".raw")
            if len(raw) == 1:
                return load_sequence(raw[0], framerate)
            raise VideoIOError(f"{path}: no PGM frames found")
        rasters = [load_pgm(f) for f in files]
        shape = rasters[0].shape
        for f, r in zip(files, rasters):
            if r.shape != shape:
                raise VideoIOError(f"{f}: dimensions {r.shape} differ from {shape}")
        stack = np.stack(rasters)
    else:
        meta = None
        try:
            meta = read_keyvalue(path)
        except (VideoIOError, UnicodeDecodeError):
            pass
        if meta is not None and "data" in meta:
            raw = (path.parent / meta["data"]).resolve()
            if not raw.is_file():
                raise VideoIOError(f"{path}: data file {raw} not found")
            stack = _load_raw(raw, path)
        elif path.suffix.lower() == ".pgm":
            stack = load_pgm(path)[None]
        else:
            sidecar = _sidecar_for(path)
            if sidecar is None:
                raise VideoIOError(f"{path}: no sidecar metadata file found")
            stack = _load_raw(path, sidecar)
    return VideoSequence(stack.astype(np.float64) / 255.0, framerate)
