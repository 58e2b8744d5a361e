"""FRED-style CSV ingestion, quarterly aggregation, stationarity transforms and standardization."""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

TRANSFORMS = ("level", "diff", "log", "log_diff")
AGGREGATIONS = ("mean", "last")

BUNDLED_SERIES = ("GS1", "GDPC96", "GDPDEF", "PAYEMS", "UNRATE", "M1SL", "M2SL", "M1V")
DEFAULT_CODES = {
    "GS1": "diff",
    "GDPC96": "log_diff",
    "GDPDEF": "log_diff",
    "PAYEMS": "log_diff",
    "UNRATE": "diff",
    "M1SL": "log_diff",
    "M2SL": "log_diff",
    "M1V": "log_diff",
}


class DataError(ValueError):
    pass


@dataclass
class Series:
    series_id: str
    dates: list            # datetime.date
    values: np.ndarray     # NaN marks a missing observation

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.dates) != self.values.shape[0]:
            raise DataError(f"{self.series_id}: {len(self.dates)} dates but {self.values.shape[0]} values")

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)


@dataclass
class TimeSeriesPanel:
    series_ids: list
    dates: list                                     # quarter start dates
    values: np.ndarray                              # (T, n)
    transform_codes: dict = field(default_factory=dict)
    standardization: dict = field(default_factory=dict)   # id -> (mean, sd)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape != (len(self.dates), len(self.series_ids)):
            raise DataError(f"values shape {self.values.shape} does not match "
                            f"{len(self.dates)} dates x {len(self.series_ids)} series")
        if np.isnan(self.values).any():
            raise DataError("panel contains missing values")
        for a, b in zip(self.dates, self.dates[1:]):
            if _quarter_index(b) - _quarter_index(a) != 1:
                raise DataError(f"dates not consecutive quarters at {a} -> {b}")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def head(self, rows: int) -> "TimeSeriesPanel":
        """The first ``rows`` observations (everything up to a forecast origin)."""
        return replace(self, dates=self.dates[:rows], values=self.values[:rows].copy())


# -- reading -----------------------------------------------------------------------

def _parse_date(text: str, path, line: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"{path}:{line}: malformed date {text!r}") from None


def load_csv(path, series_id: str | None = None) -> Series:
    """Read a two-column ``DATE,VALUE`` export; ``.`` or an empty cell is a missing value."""
    path = Path(path)
    sid = series_id or path.stem
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip().upper() for h in rows[0]]
    if len(header) != 2 or header[0] != "DATE":
        raise DataError(f"{path}:1: expected header DATE,VALUE, got {','.join(rows[0])}")
    dates, values = [], []
    for line, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise DataError(f"{path}:{line}: expected 2 fields, got {len(row)}")
        d = _parse_date(row[0], path, line)
        raw = row[1].strip()
        if raw in ("", "."):
            v = math.nan
        else:
            try:
                v = float(raw)
            except ValueError:
                raise DataError(f"{path}:{line}: malformed number {raw!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}:{line}: non-finite number {raw!r}")
        if dates and d <= dates[-1]:
            raise DataError(f"{path}:{line}: dates not increasing ({d} after {dates[-1]})")
        dates.append(d)
        values.append(v)
    if not dates:
        raise DataError(f"{path}: no observations")
    return Series(sid, dates, np.array(values))


# -- frequency ---------------------------------------------------------------------

def _quarter_index(d: dt.date) -> int:
    return d.year * 4 + (d.month - 1) // 3


def _quarter_start(q: int) -> dt.date:
    return dt.date(q // 4, 3 * (q % 4) + 1, 1)


def _is_quarterly(dates) -> bool:
    qs = [_quarter_index(d) for d in dates]
    return len(set(qs)) == len(qs)


def to_quarterly(series: Series, method: str = "mean") -> Series:
    """Collapse monthly observations into calendar quarters.

    Quarterly input (one observation per quarter) passes through with dates
    normalized to the quarter start.  A trailing quarter with fewer than three
    months is dropped with a warning; gaps elsewhere are missing values.
    """
    if method not in AGGREGATIONS:
        raise DataError(f"aggregation must be one of {AGGREGATIONS}, got {method!r}")
    if _is_quarterly(series.dates):
        return Series(series.series_id, [_quarter_start(_quarter_index(d)) for d in series.dates],
                      series.values.copy())
    groups: dict[int, list] = {}
    for d, v in zip(series.dates, series.values):
        groups.setdefault(_quarter_index(d), []).append(v)
    quarters = sorted(groups)
    last = quarters[-1]
    if len(groups[last]) < 3:
        warnings.warn(f"{series.series_id}: dropping incomplete final quarter {_quarter_start(last)} "
                      f"({len(groups[last])} of 3 months)", stacklevel=2)
        quarters = quarters[:-1]
    out = []
    for q in quarters:
        vals = np.asarray(groups[q])
        if len(vals) < 3 or np.isnan(vals).any():
            out.append(math.nan)
        else:
            out.append(float(vals.mean()) if method == "mean" else float(vals[-1]))
    return Series(series.series_id, [_quarter_start(q) for q in quarters], np.array(out))


# -- transforms --------------------------------------------------------------------

def apply_transform(series: Series, code: str) -> Series:
    """Stationarity transform; differenced codes drop the first observation."""
    if code not in TRANSFORMS:
        raise DataError(f"{series.series_id}: unknown transform {code!r}")
    x = series.values
    if code in ("log", "log_diff"):
        bad = np.flatnonzero(~np.isnan(x) & (x <= 0))
        if bad.size:
            k = bad[0]
            raise DataError(f"{series.series_id}: non-positive value {x[k]:g} at {series.dates[k]} "
                            f"under {code} transform")
    if code == "level":
        return Series(series.series_id, list(series.dates), x.copy())
    if code == "log":
        return Series(series.series_id, list(series.dates), np.log(x))
    if code == "diff":
        return Series(series.series_id, list(series.dates[1:]), np.diff(x))
    return Series(series.series_id, list(series.dates[1:]), np.diff(np.log(x)))


def align(series_list, codes: dict | None = None) -> TimeSeriesPanel:
    """Trim every series to the common date range without missing values."""
    if not series_list:
        raise DataError("no series to align")
    ids = [s.series_id for s in series_list]
    if len(set(ids)) != len(ids):
        raise DataError(f"duplicate series ids: {ids}")
    maps = [{_quarter_index(d): v for d, v in zip(s.dates, s.values) if not math.isnan(v)}
            for s in series_list]
    lo = max(min(m) for m in maps)
    hi = min(max(m) for m in maps)
    if hi < lo:
        raise DataError("series have no overlapping dates")
    for s, m in zip(series_list, maps):
        gaps = [q for q in range(lo, hi + 1) if q not in m]
        if gaps:
            raise DataError(f"{s.series_id}: missing value at {_quarter_start(gaps[0])} inside the common sample")
    quarters = range(lo, hi + 1)
    values = np.array([[m[q] for m in maps] for q in quarters])
    return TimeSeriesPanel(ids, [_quarter_start(q) for q in quarters], values,
                           dict(codes or {}), {})


# -- standardization ---------------------------------------------------------------

def standardize(panel: TimeSeriesPanel) -> TimeSeriesPanel:
    """Center each column and scale to unit sample sd (ddof=1).

    The constants are composed with any earlier standardization, so
    :func:`inverse_standardize` always returns the original units.
    """
    x = panel.values
    if x.shape[0] < 2:
        raise DataError("need at least two observations to standardize")
    mean = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    for sid, s, m in zip(panel.series_ids, sd, mean):
        if not s > 1e-12 * max(1.0, abs(m)):
            raise DataError(f"{sid}: zero variance, cannot standardize")
    z = (x - mean) / sd
    # second pass removes the rounding residue of the first
    m2 = z.mean(axis=0)
    s2 = z.std(axis=0, ddof=1)
    z = (z - m2) / s2
    mean, sd = mean + m2 * sd, sd * s2
    old = panel.standardization
    const = {}
    for i, sid in enumerate(panel.series_ids):
        m0, s0 = old.get(sid, (0.0, 1.0))
        const[sid] = (float(m0 + s0 * mean[i]), float(s0 * sd[i]))
    return replace(panel, values=z, standardization=const)


def inverse_standardize(panel: TimeSeriesPanel, values: np.ndarray | None = None) -> np.ndarray:
    """Map standardized values (default: the panel's own) back to transformed units."""
    x = panel.values if values is None else np.asarray(values, dtype=float)
    if not panel.standardization:
        return x.copy()
    mean = np.array([panel.standardization[s][0] for s in panel.series_ids])
    sd = np.array([panel.standardization[s][1] for s in panel.series_ids])
    return x * sd + mean


# -- config and output -------------------------------------------------------------

@dataclass
class SeriesSpec:
    series_id: str
    path: Path
    transform: str
    aggregation: str = "mean"


def read_config(path) -> dict:
    """Plain ``key = value`` lines; ``#`` starts a comment.  Values stay strings."""
    path = Path(path)
    out = {}
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{line_no}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise DataError(f"{path}:{line_no}: empty key")
        if key in out:
            raise DataError(f"{path}:{line_no}: duplicate key {key!r}")
        out[key] = value
    return out


def series_specs(config: dict, base_dir=None) -> list[SeriesSpec]:
    """Series entries of a config: ``series.<ID> = <csv path>[, <transform>[, <aggregation>]]``.

    Relative paths resolve against ``base_dir``; the token ``bundled`` selects
    the snapshot shipped with the package.  A missing transform falls back to
    the defaults for the known series.
    """
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    specs = []
    for key, value in config.items():
        if not key.startswith("series."):
            continue
        sid = key[len("series."):]
        parts = [p.strip() for p in value.split(",")]
        if parts[0] == "bundled":
            path = bundled_path(sid)
        else:
            path = Path(parts[0])
            if not path.is_absolute():
                path = base / path
        code = parts[1] if len(parts) > 1 and parts[1] else DEFAULT_CODES.get(sid)
        if code is None:
            raise DataError(f"series {sid}: no transform code given and no default")
        agg = parts[2] if len(parts) > 2 and parts[2] else "mean"
        specs.append(SeriesSpec(sid, path, code, agg))
    if not specs:
        raise DataError("config lists no series (expected series.<ID> = <path> lines)")
    return specs


def build_panel(specs, start: str | None = None, end: str | None = None) -> TimeSeriesPanel:
    """Load, aggregate, transform and align; the result is not yet standardized."""
    out = []
    for sp in specs:
        s = to_quarterly(load_csv(sp.path, sp.series_id), sp.aggregation)
        out.append(apply_transform(s, sp.transform))
    panel = align(out, {sp.series_id: sp.transform for sp in specs})
    lo = _quarter_index(dt.date.fromisoformat(start)) if start else None
    hi = _quarter_index(dt.date.fromisoformat(end)) if end else None
    keep = [k for k, d in enumerate(panel.dates)
            if (lo is None or _quarter_index(d) >= lo) and (hi is None or _quarter_index(d) <= hi)]
    if not keep:
        raise DataError("no observations inside the requested sample")
    return replace(panel, dates=[panel.dates[k] for k in keep], values=panel.values[keep])


def bundled_path(series_id: str) -> Path:
    p = resources.files("hsvar") / "datasets" / f"{series_id}.csv"
    if not p.is_file():
        raise DataError(f"no bundled data for series {series_id}")
    return Path(str(p))


def bundled_panel() -> TimeSeriesPanel:
    """The packaged eight-series snapshot, 1960Q1 to 2010Q4, transformed but not standardized."""
    specs = [SeriesSpec(s, bundled_path(s), DEFAULT_CODES[s]) for s in BUNDLED_SERIES]
    return build_panel(specs, "1960-01-01", "2010-10-01")


def write_panel(panel: TimeSeriesPanel, csv_path) -> tuple[Path, Path]:
    """``csv_path`` gets the date column plus one column per series; a ``.json`` sidecar the metadata."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(["date"] + list(panel.series_ids))]
    for d, row in zip(panel.dates, panel.values):
        lines.append(",".join([d.isoformat()] + [repr(float(v)) for v in row]))
    csv_path.write_text("\n".join(lines) + "\n")
    meta = {
        "series_ids": list(panel.series_ids),
        "transform_codes": panel.transform_codes,
        "standardization": {k: list(v) for k, v in panel.standardization.items()},
        "first_date": panel.dates[0].isoformat(),
        "last_date": panel.dates[-1].isoformat(),
        "T": panel.T,
    }
    side = csv_path.with_suffix(".json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return csv_path, side


def read_panel(csv_path) -> TimeSeriesPanel:
    csv_path = Path(csv_path)
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DataError(f"{csv_path}: no data rows")
    ids = rows[0][1:]
    dates = [_parse_date(r[0], csv_path, k) for k, r in enumerate(rows[1:], start=2)]
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    side = csv_path.with_suffix(".json")
    codes, std = {}, {}
    if side.exists():
        meta = json.loads(side.read_text())
        codes = meta.get("transform_codes", {})
        std = {k: tuple(v) for k, v in meta.get("standardization", {}).items()}
    return TimeSeriesPanel(ids, dates, values, codes, std)
