"""Velocity-driven choice of the temporal compression ratio N_F.

A :class:`LookupTable` maps scene velocity (pixels/frame) to N_F through
left-closed intervals.  :class:`ControllerState` applies it with a one
exposure delay: the velocity measured from exposure ``k`` sets the N_F of
exposure ``k + 1``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

__all__ = [
    "TableError",
    "LookupTable",
    "ControllerState",
    "HistoryRecord",
    "default_table",
    "lookup",
    "step",
    "initial_state",
    "load_table",
    "save_table",
    "save_history",
]

N_F_MIN = 2
N_F_MAX = 16
INITIAL_N_F = 6


class TableError(ValueError):
    """A lookup table violates its interval or monotonicity invariants."""


@dataclass(frozen=True)
class LookupTable:
    """Ordered ``(v_low, v_high, n_f)`` rows partitioning ``[0, inf)``."""

    entries: tuple[tuple[float, float, int], ...]

    def __post_init__(self):
        entries = tuple((float(lo), float(hi), int(n)) for lo, hi, n in self.entries)
        if not entries:
            raise TableError("lookup table is empty")
        if entries[0][0] != 0.0:
            raise TableError(f"first interval must start at 0, got {entries[0][0]}")
        for k, (lo, hi, n) in enumerate(entries):
            if not lo < hi:
                raise TableError(f"row {k}: empty interval [{lo}, {hi})")
            if n < 1:
                raise TableError(f"row {k}: n_f must be >= 1")
            if k + 1 < len(entries):
                nlo, _, nn = entries[k + 1]
                if nlo > hi:
                    raise TableError(f"gap between {hi} and {nlo}")
                if nlo < hi:
                    raise TableError(f"overlap between rows {k} and {k + 1}")
                if nn > n:
                    raise TableError(f"n_f increases with velocity at row {k + 1} ({n} -> {nn})")
        if not math.isinf(entries[-1][1]):
            raise TableError("last interval must be open-ended")
        object.__setattr__(self, "entries", entries)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def check_bounds(self, n_f_min: int, n_f_max: int) -> None:
        for lo, hi, n in self.entries:
            if not n_f_min <= n <= n_f_max:
                raise TableError(f"n_f={n} outside [{n_f_min}, {n_f_max}]")


def default_table() -> LookupTable:
    """Velocity to N_F table used for both example videos."""
    inf = math.inf
    return LookupTable(((0.0, 0.5, 16), (0.5, 1.0, 12), (1.0, 2.0, 8),
                        (2.0, 3.0, 6), (3.0, 7.0, 4), (7.0, inf, 2)))


def lookup(table: LookupTable, v: float) -> int:
    v = float(v)
    if not math.isfinite(v) or v < 0:
        raise ValueError(f"velocity must be finite and non-negative, got {v}")
    for lo, hi, n in table.entries:
        if lo <= v < hi:
            return n
    raise AssertionError("unreachable: table partitions [0, inf)")


@dataclass(frozen=True)
class HistoryRecord:
    measurement_index: int
    v: float
    n_f: int


@dataclass(frozen=True)
class ControllerState:
    """N_F of the running exposure and the N_F queued for the next one."""

    current_n_f: int = INITIAL_N_F
    pending_n_f: int = INITIAL_N_F
    n_f_min: int = N_F_MIN
    n_f_max: int = N_F_MAX
    history: tuple[HistoryRecord, ...] = field(default=())

    def __post_init__(self):
        if not 1 <= self.n_f_min <= self.n_f_max:
            raise ValueError("need 1 <= n_f_min <= n_f_max")
        for name in ("current_n_f", "pending_n_f"):
            n = getattr(self, name)
            if not self.n_f_min <= n <= self.n_f_max:
                raise ValueError(f"{name}={n} outside [{self.n_f_min}, {self.n_f_max}]")

    def clamp(self, n: int) -> int:
        return max(self.n_f_min, min(self.n_f_max, int(n)))

    def advance(self) -> "ControllerState":
        """Start the next exposure with the queued N_F."""
        return replace(self, current_n_f=self.pending_n_f)


def initial_state(initial_n_f: int = INITIAL_N_F, n_f_min: int = N_F_MIN,
                  n_f_max: int = N_F_MAX) -> ControllerState:
    return ControllerState(initial_n_f, initial_n_f, n_f_min, n_f_max)


def step(state: ControllerState, table: LookupTable, v, measurement_index: int | None = None) -> ControllerState:
    """Queue the N_F for the next exposure from a velocity measured on the current one.

    ``v`` may be a float or anything with a ``.v`` attribute
    (:class:`~adaptcs.motion.SceneVelocity`).  The returned state still has
    the old ``current_n_f``; call :meth:`ControllerState.advance` when the
    next exposure begins.
    """
    v = float(getattr(v, "v", v))
    n = state.clamp(lookup(table, v))
    idx = len(state.history) if measurement_index is None else measurement_index
    return replace(state, pending_n_f=n, history=state.history + (HistoryRecord(idx, v, n),))


TABLE_HEADER = "# adaptcs lookup_table v1"


def save_table(table: LookupTable, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(TABLE_HEADER + "\n")
        w = csv.writer(fh)
        w.writerow(["v_low", "v_high", "n_f"])
        for lo, hi, n in table.entries:
            w.writerow([repr(lo), "inf" if math.isinf(hi) else repr(hi), n])


def load_table(path) -> LookupTable:
    """Read a ``v_low,v_high,n_f`` CSV and validate it."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["v_low", "v_high", "n_f"]:
        raise TableError(f"{path}: expected columns v_low,v_high,n_f")
    rows = []
    for k, rec in enumerate(reader, 1):
        try:
            lo, hi = float(rec["v_low"]), float(rec["v_high"])
            n_raw = float(rec["n_f"])
        except (TypeError, ValueError):
            raise TableError(f"{path}: malformed row {k}: {rec}") from None
        if n_raw != int(n_raw):
            raise TableError(f"{path}: row {k}: n_f must be an integer")
        rows.append((lo, hi, int(n_raw)))
    return LookupTable(tuple(rows))


def save_history(history, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# adaptcs controller_history v1\n")
        w = csv.writer(fh)
        w.writerow(["measurement_index", "v", "n_f"])
        for rec in history:
            w.writerow([rec.measurement_index, repr(rec.v), rec.n_f])
