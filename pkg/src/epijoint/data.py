"""Observed series, CSV ingestion and chain persistence."""
from __future__ import annotations

import csv
from dataclasses import dataclass
import json
from pathlib import Path

import numpy as np

from .config import Calendar


class ObservationError(ValueError):
    """Raised when observed series violate their invariants."""


@dataclass
class ObservationSet:
    """Observed surveillance series aligned to a calendar.

    `virology` is an ``(n, 3)`` integer array of ``(week, tested, positive)``
    records, or None.
    """

    y_h: np.ndarray
    y_ic: np.ndarray
    y_g: np.ndarray | None = None
    virology: np.ndarray | None = None

    def __post_init__(self):
        self.y_h = _counts(self.y_h, "y_h")
        self.y_ic = _counts(self.y_ic, "y_ic")
        if self.y_g is not None:
            self.y_g = _counts(self.y_g, "y_g")
        if self.virology is not None:
            v = np.asarray(self.virology, dtype=np.int64).reshape(-1, 3)
            if np.any(v < 0):
                raise ObservationError("virology counts must be nonnegative")
            if np.any(v[:, 2] > v[:, 1]):
                raise ObservationError("virology positives exceed swabs tested")
            self.virology = v

    @property
    def n_weeks(self) -> int:
        return self.y_h.size

    def check_calendar(self, cal: Calendar) -> "ObservationSet":
        if self.y_h.size != cal.n_weeks or self.y_ic.size != cal.n_weeks:
            raise ObservationError(
                f"weekly series have {self.y_h.size}/{self.y_ic.size} rows, "
                f"calendar has {cal.n_weeks} weeks")
        if self.y_g is not None and self.y_g.size != cal.n_days:
            raise ObservationError(
                f"daily GP series has {self.y_g.size} rows, calendar has {cal.n_days} days")
        if self.virology is not None and self.virology.size:
            if self.virology[:, 0].max() >= cal.n_weeks:
                raise ObservationError("virology week index outside calendar")
        return self

    def __eq__(self, other):
        if not isinstance(other, ObservationSet):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return np.array_equal(a, b)
        return (same(self.y_h, other.y_h) and same(self.y_ic, other.y_ic)
                and same(self.y_g, other.y_g) and same(self.virology, other.virology))


def _counts(x, name):
    a = np.asarray(x)
    if a.ndim != 1:
        raise ObservationError(f"{name} must be one-dimensional")
    if a.size and not np.all(np.equal(np.mod(a, 1), 0)):
        raise ObservationError(f"{name} must hold integers")
    a = a.astype(np.int64)
    if np.any(a < 0):
        raise ObservationError(f"{name} has negative counts")
    return a


# --- CSV -------------------------------------------------------------------

_HEADERS = {
    "weekly": ["week", "y_h", "y_ic"],
    "gp": ["day", "y_g"],
    "virology": ["week", "tested", "positive"],
}


def _read_csv(path, kind):
    header = _HEADERS[kind]
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise ObservationError(f"{path}: empty file") from None
        if [h.strip() for h in first] != header:
            raise ObservationError(f"{path}: expected header {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ObservationError(f"{path}: row {lineno} has {len(row)} fields")
            try:
                vals = [int(c.strip()) for c in row]
            except ValueError:
                raise ObservationError(f"{path}: row {lineno} is not integer-valued") from None
            if any(v < 0 for v in vals):
                raise ObservationError(f"{path}: row {lineno} has a negative count")
            rows.append(vals)
    return np.asarray(rows, dtype=np.int64).reshape(-1, len(header))


def _indexed(arr, n, path, label):
    idx = arr[:, 0]
    if not np.array_equal(idx, np.arange(idx.size)):
        raise ObservationError(f"{path}: {label} index must run 0..{idx.size - 1} in order")
    if idx.size != n:
        raise ObservationError(f"{path}: {idx.size} rows but calendar has {n} {label}s")
    return arr[:, 1:]


def load_observations(paths: dict, cal: Calendar) -> ObservationSet:
    """Read observation CSVs and align them to `cal`.

    `paths` maps ``"weekly"`` (required), ``"gp"`` and ``"virology"`` to files.
    """
    if not paths.get("weekly"):
        raise ObservationError("a weekly hospital/ICU file is required")
    weekly = _indexed(_read_csv(paths["weekly"], "weekly"), cal.n_weeks, paths["weekly"], "week")
    y_g = None
    if paths.get("gp"):
        y_g = _indexed(_read_csv(paths["gp"], "gp"), cal.n_days, paths["gp"], "day")[:, 0]
    vir = None
    if paths.get("virology"):
        vir = _read_csv(paths["virology"], "virology")
        for lineno, (w, n, k) in enumerate(vir, start=2):
            if k > n:
                raise ObservationError(f"{paths['virology']}: row {lineno} positives exceed tested")
            if w >= cal.n_weeks:
                raise ObservationError(f"{paths['virology']}: row {lineno} week outside calendar")
    obs = ObservationSet(weekly[:, 0], weekly[:, 1], y_g, vir)
    return obs.check_calendar(cal)


def write_observations(obs: ObservationSet, out_dir) -> dict:
    """Write `obs` as CSV files in `out_dir`; returns the path mapping."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"weekly": out_dir / "weekly.csv"}
    _write_rows(paths["weekly"], _HEADERS["weekly"],
                zip(range(obs.n_weeks), obs.y_h.tolist(), obs.y_ic.tolist()))
    if obs.y_g is not None:
        paths["gp"] = out_dir / "gp_daily.csv"
        _write_rows(paths["gp"], _HEADERS["gp"], enumerate(obs.y_g.tolist()))
    if obs.virology is not None:
        paths["virology"] = out_dir / "virology.csv"
        _write_rows(paths["virology"], _HEADERS["virology"], obs.virology.tolist())
    return {k: str(v) for k, v in paths.items()}


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_columns(path, columns: dict):
    """Write equal-length columns as a CSV with a header row."""
    names = list(columns)
    cols = [np.asarray(columns[n]).tolist() for n in names]
    _write_rows(path, names, zip(*cols))


# --- chains ----------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def save_chain(records, path):
    """Write chain records as JSON lines, one record per iteration.

    Floats are written with ``repr`` precision, so reloading is lossless.
    Non-finite log-likelihoods are stored as ``-Infinity``.
    """
    records = list(records)
    if not records:
        raise ValueError("cannot save an empty chain")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            d = rec.to_dict() if hasattr(rec, "to_dict") else rec
            fh.write(json.dumps(_jsonable(d), allow_nan=True) + "\n")


def load_chain(path):
    from .sampler import ChainRecord

    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(ChainRecord.from_dict(json.loads(line)))
    return out


def append_chain_record(fh, rec):
    fh.write(json.dumps(_jsonable(rec.to_dict()), allow_nan=True) + "\n")
