"""Ingestion of per-minute meteorological observations.

Series are stored column-wise as numpy arrays with timestamps held as integer
minutes since the Unix epoch. Filtering removes rows (never imputes), so
downstream code must call :func:`segment_contiguous` before building lag
windows.
"""
from __future__ import annotations

import csv
import io
import logging
import re
from dataclasses import dataclass, field
from typing import Iterator, TextIO

import numpy as np

from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

HEADER = ("timestamp", "vis_km", "wind_ms", "rhw_pct", "dpd_c", "pr_mmhr")
VARIABLES = ("vis", "wind", "rhw", "dpd", "pr")

RHW_MAX = 102.0
DPD_MIN = -0.5

_TS_RE = re.compile(r"^(\d{4}-\d{2}-\d{2}T\d{2}:\d{2}):(\d{2})Z$")


class MalformedHeader(DataError):
    pass


class BadRow(DataError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DuplicateTimestamp(DataError):
    def __init__(self, timestamp):
        super().__init__(f"duplicate timestamp {timestamp}")
        self.timestamp = timestamp


class NonMonotonicAfterSort(DataError):
    pass


class NonPositiveThreshold(ConfigError):
    pass


@dataclass(frozen=True)
class ObservationRecord:
    timestamp: np.datetime64
    vis: float
    wind: float
    rhw: float
    dpd: float
    pr: float


def _range_violation(vis, wind, rhw, dpd, pr) -> str | None:
    """Return a reason string for the first violated physical range, if any."""
    for name, v in (("vis", vis), ("wind", wind), ("rhw", rhw), ("dpd", dpd), ("pr", pr)):
        if not np.all(np.isfinite(v)):
            return f"{name} is not finite"
    if np.any(vis < 0):
        return "vis < 0"
    if np.any(wind < 0):
        return "wind < 0"
    if np.any(pr < 0):
        return "pr < 0"
    if np.any((rhw < 0) | (rhw > RHW_MAX)):
        return f"rhw outside [0, {RHW_MAX}]"
    if np.any(dpd < DPD_MIN):
        return f"dpd < {DPD_MIN}"
    return None


@dataclass(frozen=True, eq=False)
class ObservationSeries:
    """Time-ordered per-minute observations.

    ``minutes`` holds integer minutes since 1970-01-01T00:00Z and must be
    strictly increasing.
    """

    minutes: np.ndarray
    vis: np.ndarray
    wind: np.ndarray
    rhw: np.ndarray
    dpd: np.ndarray
    pr: np.ndarray
    source_id: str = ""
    truncated_seconds: int = field(default=0, compare=False)

    def __post_init__(self):
        cols = {}
        cols["minutes"] = np.asarray(self.minutes, dtype=np.int64)
        for name in VARIABLES:
            cols[name] = np.asarray(getattr(self, name), dtype=np.float64)
        n = cols["minutes"].shape[0]
        for name, arr in cols.items():
            if arr.ndim != 1 or arr.shape[0] != n:
                raise DataError(f"column {name!r} has shape {arr.shape}, expected ({n},)")
            arr = arr.copy() if arr.flags.writeable else arr
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if n > 1 and np.any(np.diff(self.minutes) < 1):
            raise NonMonotonicAfterSort("timestamps must be strictly increasing")
        reason = _range_violation(self.vis, self.wind, self.rhw, self.dpd, self.pr)
        if reason is not None:
            raise DataError(reason)

    def __len__(self) -> int:
        return int(self.minutes.shape[0])

    @property
    def timestamps(self) -> np.ndarray:
        return self.minutes.astype("datetime64[m]")

    def column(self, name: str) -> np.ndarray:
        if name not in VARIABLES:
            raise KeyError(f"unknown variable {name!r}; expected one of {VARIABLES}")
        return getattr(self, name)

    def records(self) -> Iterator[ObservationRecord]:
        ts = self.timestamps
        for i in range(len(self)):
            yield ObservationRecord(
                ts[i], float(self.vis[i]), float(self.wind[i]), float(self.rhw[i]),
                float(self.dpd[i]), float(self.pr[i]),
            )

    def take(self, index) -> "ObservationSeries":
        """Subset by boolean mask or ascending integer index."""
        return ObservationSeries(
            self.minutes[index], self.vis[index], self.wind[index], self.rhw[index],
            self.dpd[index], self.pr[index], source_id=self.source_id,
            truncated_seconds=self.truncated_seconds,
        )

    def equals(self, other: "ObservationSeries") -> bool:
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("minutes",) + VARIABLES
        )


@dataclass(frozen=True)
class Segment:
    """Half-open index range ``[start, end)`` of gap-free consecutive minutes."""

    start: int
    end: int

    def __len__(self) -> int:
        return self.end - self.start


def _parse_float(text: str, name: str, line: int) -> float:
    if text == "":
        raise BadRow(line, f"missing value for {name}")
    try:
        value = float(text)
    except ValueError:
        raise BadRow(line, f"cannot parse {name}={text!r}") from None
    return value


def parse_csv(source: str | TextIO, source_id: str = "") -> ObservationSeries:
    """Parse the observation CSV schema into a validated series.

    ``source`` is either the CSV text or an open text stream. Rows may arrive
    in any order; they are sorted by timestamp. Seconds are truncated to the
    minute (counted in ``truncated_seconds``).
    """
    stream = io.StringIO(source) if isinstance(source, str) else source
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedHeader("empty input, expected header row") from None
    if tuple(h.strip() for h in header) != HEADER:
        raise MalformedHeader(f"expected header {','.join(HEADER)!s}, got {','.join(header)!s}")

    stamps: list[str] = []
    values: list[tuple[float, ...]] = []
    lines: list[int] = []
    truncated = 0
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(HEADER):
            raise BadRow(lineno, f"expected {len(HEADER)} fields, got {len(row)}")
        m = _TS_RE.match(row[0].strip())
        if m is None:
            raise BadRow(lineno, f"bad timestamp {row[0]!r}")
        if m.group(2) != "00":
            truncated += 1
        vals = tuple(_parse_float(t.strip(), n, lineno) for t, n in zip(row[1:], HEADER[1:]))
        stamps.append(m.group(1))
        values.append(vals)
        lines.append(lineno)

    if truncated:
        logger.warning("truncated seconds to the minute on %d rows", truncated)

    try:
        minutes = np.array(stamps, dtype="datetime64[m]").astype(np.int64)
    except ValueError as exc:
        raise DataError(f"invalid calendar timestamp: {exc}") from None
    data = np.array(values, dtype=np.float64).reshape(len(values), 5)
    if _range_violation(*data.T) is not None:
        for i in range(data.shape[0]):
            reason = _range_violation(*data[i])
            if reason is not None:
                raise BadRow(lines[i], reason)

    order = np.argsort(minutes, kind="stable")
    minutes = minutes[order]
    data = data[order]
    if minutes.size > 1:
        dup = np.flatnonzero(np.diff(minutes) == 0)
        if dup.size:
            raise DuplicateTimestamp(np.datetime64(int(minutes[dup[0]]), "m"))
        if np.any(np.diff(minutes) < 0):
            raise NonMonotonicAfterSort("timestamps not increasing after sort")

    return ObservationSeries(
        minutes, data[:, 0], data[:, 1], data[:, 2], data[:, 3], data[:, 4],
        source_id=source_id, truncated_seconds=truncated,
    )


def read_csv(path) -> ObservationSeries:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_csv(fh, source_id=str(path))


def format_timestamp(minute: int) -> str:
    return str(np.datetime64(int(minute), "m").astype("datetime64[s]")) + "Z"


def write_csv(series: ObservationSeries, stream: TextIO) -> None:
    """Write ``series`` in the observation CSV schema.

    Floats use ``repr`` so a parse round-trip is bit-exact.
    """
    stream.write(",".join(HEADER) + "\n")
    stamps = series.minutes.astype("datetime64[m]").astype("datetime64[s]").astype(str)
    cols = [series.vis, series.wind, series.rhw, series.dpd, series.pr]
    for i, ts in enumerate(stamps):
        stream.write(ts + "Z," + ",".join(repr(float(c[i])) for c in cols) + "\n")


def filter_precipitation(series: ObservationSeries, pr_max: float = 0.05) -> ObservationSeries:
    """Keep records with precipitation rate strictly below ``pr_max`` mm/hr."""
    return series.take(series.pr < pr_max)


def threshold_visibility(series: ObservationSeries, vis_max: float) -> ObservationSeries:
    """Keep records with visibility strictly below ``vis_max`` km."""
    if not vis_max > 0:
        raise NonPositiveThreshold(f"vis_max must be positive, got {vis_max}")
    return series.take(series.vis < vis_max)


def segment_contiguous(series: ObservationSeries) -> list[Segment]:
    n = len(series)
    if n == 0:
        return []
    breaks = np.flatnonzero(np.diff(series.minutes) != 1) + 1
    bounds = np.concatenate(([0], breaks, [n]))
    return [Segment(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
