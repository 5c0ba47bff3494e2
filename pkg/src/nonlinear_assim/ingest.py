"""Loading annual ``year,value`` CSV files into :class:`TimeSeries`.

Files are UTF-8 with a ``year,value`` header; lines starting with ``#`` and
blank lines are ignored, LF and CRLF endings are both accepted. Years must be
consecutive: gaps are rejected rather than interpolated.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from pathlib import Path

import numpy as np

from .core import TimeSeries
from .errors import GapError, NoOverlap, ParseError, UnitError

DEFAULT_BASELINE = 14.0
HEADER = ("year", "value")


class SeriesKind(str, enum.Enum):
    TEMPERATURE_ANOMALY = "temperature_anomaly"
    SEA_LEVEL_MM = "sea_level_mm"


# what each kind becomes after loading
_LOADED = {
    SeriesKind.TEMPERATURE_ANOMALY: ("temperature_anomaly", "degC", 1.0),
    SeriesKind.SEA_LEVEL_MM: ("sea_level", "cm", 0.1),
}


def parse_series_text(text: str, source: str = "<string>"):
    """Parse CSV text into ``(start_year, values)``."""
    rows = []
    header_seen = False
    for lineno, line in enumerate(io.StringIO(text, newline=None), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = next(csv.reader([line]))
        if not header_seen:
            if tuple(f.strip().lower() for f in fields) != HEADER:
                raise ParseError(f"{source}: expected header 'year,value'", line=lineno)
            header_seen = True
            continue
        if len(fields) != 2:
            raise ParseError(f"{source}: expected 2 fields, got {len(fields)}", line=lineno)
        try:
            year = int(fields[0].strip())
        except ValueError:
            raise ParseError(f"{source}: bad year {fields[0]!r}", line=lineno, column=1) from None
        try:
            value = float(fields[1].strip())
        except ValueError:
            raise ParseError(f"{source}: bad value {fields[1]!r}", line=lineno, column=2) from None
        if not math.isfinite(value):
            raise UnitError(f"{source}: non-finite value on line {lineno}")
        if rows:
            prev = rows[-1][0]
            if year > prev + 1:
                raise GapError(prev + 1)
            if year <= prev:
                raise ParseError(f"{source}: year {year} not increasing", line=lineno, column=1)
        rows.append((year, value))
    if not header_seen:
        raise ParseError(f"{source}: missing header 'year,value'", line=1)
    if not rows:
        raise ParseError(f"{source}: no data rows")
    return rows[0][0], np.array([v for _, v in rows])


def load_series(path, kind: SeriesKind) -> TimeSeries:
    """Load a ``year,value`` file; sea level in mm is converted to cm."""
    kind = SeriesKind(kind)
    path = Path(path)
    start, values = parse_series_text(path.read_text(encoding="utf-8"), source=str(path))
    label, unit, factor = _LOADED[kind]
    return TimeSeries(
        start,
        values * factor,
        label=label,
        meta={"kind": label, "unit": unit, "source": path.name},
    )


def anomaly_to_absolute(series: TimeSeries, baseline: float = DEFAULT_BASELINE) -> TimeSeries:
    if series.meta.get("kind", "temperature_anomaly") != "temperature_anomaly":
        raise UnitError(f"expected a temperature anomaly series, got {series.meta['kind']}")
    meta = dict(series.meta, kind="temperature_absolute", baseline=baseline)
    return series.replace(values=series.values + baseline, label="temperature_absolute", meta=meta)


def absolute_to_anomaly(series: TimeSeries, baseline: float = DEFAULT_BASELINE) -> TimeSeries:
    if series.meta.get("kind", "temperature_absolute") != "temperature_absolute":
        raise UnitError(f"expected an absolute temperature series, got {series.meta['kind']}")
    meta = dict(series.meta, kind="temperature_anomaly")
    meta.pop("baseline", None)
    return series.replace(values=series.values - baseline, label="temperature_anomaly", meta=meta)


def align(a: TimeSeries, b: TimeSeries) -> tuple[TimeSeries, TimeSeries]:
    """Truncate both series to their common year range."""
    if a.step != b.step:
        raise ValueError("series have different steps")
    first = max(a.start_year, b.start_year)
    last = min(a.end_year, b.end_year)
    if first > last or (first - a.start_year) % a.step or (first - b.start_year) % b.step:
        raise NoOverlap(f"{a.label or 'a'} and {b.label or 'b'} share no years")
    return a.slice_years(first, last), b.slice_years(first, last)


def stack(*series: TimeSeries, label: str = "") -> TimeSeries:
    """Column-stack already aligned series into one multi-component series."""
    if len({(s.start_year, len(s), s.step) for s in series}) != 1:
        raise ValueError("series must be aligned before stacking")
    kinds = [s.meta.get("kind", s.label) for s in series]
    return TimeSeries(
        series[0].start_year,
        np.hstack([s.values for s in series]),
        step=series[0].step,
        label=label or "+".join(kinds),
        meta={"kind": kinds},
    )
