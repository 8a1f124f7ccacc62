"""Panel data model, CSV ingestion, and cell-level sufficient statistics.

A panel is a long-format collection of unit-age observations. Every estimator
in the package is assembled from per (gender, treatment-group, age) cell
counts and means, so the panel carries a lazily built index mapping each cell
to its row positions.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    DuplicateUnitAge,
    EmptyCell,
    InconsistentUnit,
    InvalidWindow,
    MissingColumn,
    ParseError,
)

FEMALE = "f"
MALE = "m"
GENDERS = (FEMALE, MALE)

#: Sentinel treatment age for never-treated units.
NEVER = -1

DEFAULT_SCHEMA = {
    "unit_id": "unit_id",
    "cluster_id": "cluster_id",
    "gender": "gender",
    "treat_age": "treat_age",
    "age": "age",
    "year": "year",
    "earnings": "earnings",
}

_REQUIRED = ("unit_id", "gender", "treat_age", "age", "year", "earnings")


@dataclass(frozen=True)
class CellStats:
    """Count, sum and mean of earnings for one (gender, group, age) cell."""

    gender: str
    treat_age: int
    age: int
    count: int
    total: float

    @property
    def mean(self) -> float:
        if self.count == 0:
            return float("nan")
        return self.total / self.count

    @property
    def is_empty(self) -> bool:
        return self.count == 0


@dataclass(frozen=True)
class TwoByTwoSlice:
    """The eight cells of a 2x2 comparison.

    Treatment group ``d`` against control group ``dprime`` at target age ``a``
    with baseline age ``b``. Cells are keyed by (gender, group, age); empty
    cells are carried as count-0 sentinels so validation suites can probe
    sparse pairs.
    """

    d: int
    dprime: int
    a: int
    b: int
    cells: dict = field(repr=False)

    def cell(self, gender: str, group: int, age: int) -> CellStats:
        return self.cells[(gender, group, age)]

    def mean(self, gender: str, group: int, age: int) -> float:
        cell = self.cells[(gender, group, age)]
        if cell.is_empty:
            raise EmptyCell(gender, group, age)
        return cell.mean

    @property
    def cell_keys(self):
        return tuple(self.cells)

    def earnings_scale(self) -> float:
        """Mean absolute earnings over non-empty cells, used for tolerances."""
        totals = [abs(c.total) for c in self.cells.values() if not c.is_empty]
        counts = [c.count for c in self.cells.values() if not c.is_empty]
        if not counts:
            return 1.0
        scale = sum(totals) / sum(counts)
        return scale if scale > 0 else 1.0

    @classmethod
    def from_cells(cls, d, dprime, a, b, cells):
        """Build a slice directly from CellStats (e.g. population means)."""
        lookup = {(c.gender, c.treat_age, c.age): c for c in cells}
        out = {}
        for g in GENDERS:
            for group in (d, dprime):
                for age in (a, b):
                    key = (g, group, age)
                    out[key] = lookup.get(key, CellStats(g, group, age, 0, 0.0))
        return cls(d=d, dprime=dprime, a=a, b=b, cells=out)


class PanelData:
    """Immutable long-format earnings panel backed by numpy arrays.

    One row per (unit, age). Units carry gender, treatment age (age at first
    childbirth, or NEVER) and a cluster id used for inference. Covariates, if
    any, are a dense float matrix aligned to rows.
    """

    def __init__(self, unit_labels, unit_code, cluster_code, gender_code,
                 treat_age, age, year, earnings, covariates=None,
                 cluster_labels=None):
        self.unit_labels = np.asarray(unit_labels)
        self.unit_code = np.asarray(unit_code, dtype=np.int64)
        self.cluster_code = np.asarray(cluster_code, dtype=np.int64)
        # gender_code: 0 = female, 1 = male
        self.gender_code = np.asarray(gender_code, dtype=np.int8)
        self.treat_age = np.asarray(treat_age, dtype=np.int32)
        self.age = np.asarray(age, dtype=np.int32)
        self.year = np.asarray(year, dtype=np.int32)
        self.earnings = np.asarray(earnings, dtype=np.float64)
        if covariates is None:
            covariates = np.empty((len(self.age), 0), dtype=np.float64)
        self.covariates = np.asarray(covariates, dtype=np.float64)
        self.cluster_labels = (np.asarray(cluster_labels)
                               if cluster_labels is not None else None)
        self._index = None
        self._validate()

    # -- construction ------------------------------------------------------

    def _validate(self):
        n = len(self.age)
        for name in ("unit_code", "cluster_code", "gender_code", "treat_age",
                     "year", "earnings"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has wrong length")
        if np.any(self.age < 0):
            raise ValueError("age must be non-negative")
        if np.any(self.earnings < 0):
            raise ValueError("earnings must be non-negative")
        key = self.unit_code.astype(np.int64) * 1_000_000 + self.age
        uniq, first = np.unique(key, return_index=True)
        if len(uniq) != n:
            order = np.argsort(key, kind="stable")
            dup = np.nonzero(np.diff(key[order]) == 0)[0][0]
            pos = order[dup + 1]
            raise DuplicateUnitAge(self.unit_labels[self.unit_code[pos]],
                                   int(self.age[pos]))
        # per-unit constancy of gender, treat_age, cluster
        order = np.argsort(self.unit_code, kind="stable")
        codes = self.unit_code[order]
        same_unit = codes[1:] == codes[:-1]
        for name in ("gender_code", "treat_age", "cluster_code"):
            vals = getattr(self, name)[order]
            bad = same_unit & (vals[1:] != vals[:-1])
            if bad.any():
                pos = int(np.nonzero(bad)[0][0])
                raise InconsistentUnit(self.unit_labels[codes[pos]], name)

    @property
    def n_rows(self) -> int:
        return len(self.age)

    @property
    def n_units(self) -> int:
        return len(self.unit_labels)

    @property
    def n_clusters(self) -> int:
        return int(self.cluster_code.max()) + 1 if self.n_rows else 0

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]

    def gender_of(self, code: int) -> str:
        return FEMALE if code == 0 else MALE

    # -- index and cells ----------------------------------------------------

    def _build_index(self):
        key = ((self.gender_code.astype(np.int64) * 200 +
                (self.treat_age.astype(np.int64) + 1)) * 200 + self.age)
        order = np.argsort(key, kind="stable")
        sorted_key = key[order]
        starts = np.r_[0, np.nonzero(np.diff(sorted_key))[0] + 1]
        index = {}
        ends = np.r_[starts[1:], len(sorted_key)]
        for s, e in zip(starts, ends):
            k = sorted_key[s]
            age = int(k % 200)
            rest = k // 200
            d = int(rest % 200) - 1
            g = FEMALE if rest // 200 == 0 else MALE
            index[(g, d, age)] = order[s:e]
        self._index = index

    @property
    def index(self):
        if self._index is None:
            self._build_index()
        return self._index

    def cell_rows(self, gender: str, treat_age: int, age: int) -> np.ndarray:
        return self.index.get((gender, treat_age, age),
                              np.empty(0, dtype=np.int64))

    def treatment_groups(self) -> list:
        groups = np.unique(self.treat_age)
        return [int(d) for d in groups if d != NEVER]

    def observed_ages(self) -> list:
        return [int(a) for a in np.unique(self.age)]

    # -- unit-level views ---------------------------------------------------

    def unit_table(self, groups, ages):
        """Unit-level view for units in ``groups`` observed at all ``ages``.

        Returns arrays (unit_code, cluster_code, gender_code, treat_age,
        covariates, earnings matrix with one column per age), restricted to
        units with an observation at every requested age.
        """
        ages = list(ages)
        rows = np.nonzero(np.isin(self.treat_age, list(groups)))[0]
        sub_units = self.unit_code[rows]
        uniq, inv = np.unique(sub_units, return_inverse=True)
        n_u, n_a = len(uniq), len(ages)
        y = np.full((n_u, n_a), np.nan)
        meta_row = np.empty(n_u, dtype=np.int64)
        meta_row[inv] = rows
        max_age = int(self.age.max()) if self.n_rows else 0
        age_pos = np.full(max_age + 2, -1, dtype=np.int64)
        for j, a in enumerate(ages):
            if a <= max_age:
                age_pos[a] = j
        cols = age_pos[self.age[rows]]
        hit = cols >= 0
        y[inv[hit], cols[hit]] = self.earnings[rows[hit]]
        keep = ~np.isnan(y).any(axis=1)
        uniq, y, meta_row = uniq[keep], y[keep], meta_row[keep]
        return {
            "unit_code": uniq,
            "cluster_code": self.cluster_code[meta_row],
            "gender_code": self.gender_code[meta_row],
            "treat_age": self.treat_age[meta_row],
            "covariates": self.covariates[meta_row],
            "earnings": y,
            "ages": list(ages),
        }

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({
            "unit_id": self.unit_labels[self.unit_code],
            "cluster_id": (self.cluster_labels[self.cluster_code]
                           if self.cluster_labels is not None
                           else self.cluster_code),
            "gender": np.where(self.gender_code == 0, FEMALE, MALE),
            "treat_age": [("" if d == NEVER else int(d))
                          for d in self.treat_age],
            "age": self.age,
            "year": self.year,
            "earnings": self.earnings,
        })
        for j in range(self.n_covariates):
            df[f"x{j + 1}"] = self.covariates[:, j]
        return df


def cell_mean(data: PanelData, gender: str, treat_age: int, age: int) -> CellStats:
    """Count and mean earnings over {i : G_i=g, D_i=d} observed at ``age``.

    An empty cell is signalled by count=0, not an exception; downstream
    estimators convert empties into typed errors.
    """
    rows = data.cell_rows(gender, treat_age, age)
    total = float(data.earnings[rows].sum()) if len(rows) else 0.0
    return CellStats(gender=gender, treat_age=treat_age, age=age,
                     count=len(rows), total=total)


def build_two_by_two(data: PanelData, d: int, a: int, control_offset: int = 1,
                     baseline_gap: int = 1) -> TwoByTwoSlice:
    """Assemble the eight cells of a 2x2 comparison.

    The control group is the closest not-yet-treated group by default,
    d' = a + control_offset, and the baseline age is b = d - baseline_gap.
    For pre-treatment (validation) use with a < d the control group is still
    required to be untreated at ``a``.
    """
    dprime = a + control_offset if a >= d else d + control_offset
    b = d - baseline_gap
    if b >= d:
        raise InvalidWindow(f"baseline age {b} not strictly before treatment {d}")
    if a >= d and dprime <= a:
        raise InvalidWindow(f"control group {dprime} already treated at age {a}")
    cells = {}
    for g in GENDERS:
        for group in (d, dprime):
            for age in (a, b):
                cells[(g, group, age)] = cell_mean(data, g, group, age)
    return TwoByTwoSlice(d=d, dprime=dprime, a=a, b=b, cells=cells)


def build_pretrend_slice(data: PanelData, d: int, dprime: int, a: int,
                         baseline_gap: int = 1) -> TwoByTwoSlice:
    """2x2 slice for a pre-treatment target age with an explicit control group."""
    b = d - baseline_gap
    if a >= b:
        raise InvalidWindow(f"pre-treatment target age {a} must precede baseline {b}")
    if dprime <= d:
        raise InvalidWindow(f"control group {dprime} must be later-treated than {d}")
    cells = {}
    for g in GENDERS:
        for group in (d, dprime):
            for age in (a, b):
                cells[(g, group, age)] = cell_mean(data, g, group, age)
    return TwoByTwoSlice(d=d, dprime=dprime, a=a, b=b, cells=cells)


# -- CSV ingestion ----------------------------------------------------------

def _parse_gender(series, column):
    vals = series.astype(str).str.strip().str.lower()
    bad = ~vals.isin([FEMALE, MALE])
    if bad.any():
        row = int(np.nonzero(bad.to_numpy())[0][0])
        raise ParseError(row, column, series.iloc[row])
    return np.where(vals.to_numpy() == FEMALE, 0, 1)


def _parse_numeric(series, column, *, integer, allow_empty=False):
    raw = series.astype(str).str.strip()
    empty = (raw == "") | raw.str.lower().isin(["nan", "never", "inf"])
    parsed = pd.to_numeric(raw.where(~empty, other="0"), errors="coerce")
    bad = parsed.isna() & ~empty
    if not allow_empty:
        bad = bad | empty
    if bad.any():
        row = int(np.nonzero(bad.to_numpy())[0][0])
        raise ParseError(row, column, series.iloc[row])
    out = parsed.to_numpy(dtype=np.float64)
    if integer:
        frac = out != np.floor(out)
        frac &= ~empty.to_numpy()
        if frac.any():
            row = int(np.nonzero(frac)[0][0])
            raise ParseError(row, column, series.iloc[row])
        out = out.astype(np.int64)
        if allow_empty:
            out = np.where(empty.to_numpy(), NEVER, out)
    return out


def load_panel(source, schema=None) -> PanelData:
    """Load a panel from a CSV byte stream, file path, or file object.

    ``schema`` maps canonical names (unit_id, cluster_id, gender, treat_age,
    age, year, earnings) to header names in the file; missing entries fall
    back to the canonical names. Columns named x1..xk (or mapped via a
    "covariates" list) are read as covariates. Rows with unparseable fields
    raise ParseError rather than being dropped.
    """
    mapping = dict(DEFAULT_SCHEMA)
    covariate_cols = None
    if schema:
        covariate_cols = schema.get("covariates")
        mapping.update({k: v for k, v in schema.items() if k in DEFAULT_SCHEMA})
    if isinstance(source, pd.DataFrame):
        df = source.astype(str).where(~source.isna(), other="")
    else:
        if isinstance(source, (bytes, bytearray)):
            source = io.BytesIO(source)
        df = pd.read_csv(source, dtype=str, keep_default_na=False)
    for canonical in _REQUIRED:
        if mapping[canonical] not in df.columns:
            raise MissingColumn(mapping[canonical])
    if covariate_cols is None:
        covariate_cols = [c for c in df.columns
                          if c.startswith("x") and c[1:].isdigit()]
        covariate_cols.sort(key=lambda c: int(c[1:]))

    unit_raw = df[mapping["unit_id"]].to_numpy()
    unit_labels, unit_code = np.unique(unit_raw, return_inverse=True)
    if mapping["cluster_id"] in df.columns:
        craw = df[mapping["cluster_id"]].astype(str).str.strip()
        craw = craw.where(craw != "", other=pd.Series(unit_raw).astype(str))
        cluster_labels, cluster_code = np.unique(craw.to_numpy(),
                                                 return_inverse=True)
    else:
        cluster_labels, cluster_code = unit_labels, unit_code.copy()

    gender_code = _parse_gender(df[mapping["gender"]], mapping["gender"])
    treat_age = _parse_numeric(df[mapping["treat_age"]], mapping["treat_age"],
                               integer=True, allow_empty=True)
    age = _parse_numeric(df[mapping["age"]], mapping["age"], integer=True)
    year = _parse_numeric(df[mapping["year"]], mapping["year"], integer=True)
    earnings = _parse_numeric(df[mapping["earnings"]], mapping["earnings"],
                              integer=False)
    covariates = None
    if covariate_cols:
        cols = [_parse_numeric(df[c], c, integer=False) for c in covariate_cols]
        covariates = np.column_stack(cols)

    return PanelData(unit_labels=unit_labels, unit_code=unit_code,
                     cluster_code=cluster_code, gender_code=gender_code,
                     treat_age=treat_age, age=age, year=year,
                     earnings=earnings, covariates=covariates,
                     cluster_labels=cluster_labels)


def scan_malformed_rows(source, schema=None) -> list:
    """Report malformed rows of a CSV as JSON-serializable dicts.

    Companion to load_panel for pipelines that want a machine-readable
    rejection report instead of a hard failure on the first bad row.
    """
    mapping = dict(DEFAULT_SCHEMA)
    if schema:
        mapping.update({k: v for k, v in schema.items() if k in DEFAULT_SCHEMA})
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    df = pd.read_csv(source, dtype=str, keep_default_na=False)
    report = []
    checks = [
        (mapping["gender"], lambda v: v.strip().lower() in GENDERS),
        (mapping["age"], lambda v: v.strip().lstrip("-").isdigit()),
        (mapping["year"], lambda v: v.strip().lstrip("-").isdigit()),
        (mapping["earnings"], _is_float),
        (mapping["treat_age"],
         lambda v: v.strip() == "" or v.strip().lower() == "never"
         or v.strip().isdigit()),
    ]
    for col, ok in checks:
        if col not in df.columns:
            continue
        for row, value in enumerate(df[col]):
            if not ok(str(value)):
                report.append({"row": row, "column": col, "value": value})
    return report


def _is_float(v):
    try:
        float(v)
        return True
    except ValueError:
        return False


def write_panel(data: PanelData, path):
    data.to_frame().to_csv(path, index=False)


def write_malformed_report(report, path):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
