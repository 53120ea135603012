"""Loading observed series and running the empirical pipeline on them.

The pipeline produces the persistence-scale row (``alpha_hat``, ``k_hat``,
``tau_hat``...), plug-in and bootstrap intervals, p-value curves over a grid
of ``alpha0`` and the variance-exponent diagnostic.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import jsonutil
from .errors import (InsufficientData, InvalidInput, MissingValue, NearUnitError, NegativeValue, ParseError,
                     WindowTooShort)
from .estimation import ols, variance_exponent
from .inference import (DEFAULT_GRID, bootstrap, bootstrap_ci, plugin_ci, pvalue_curve, sandwich_se)

MIN_N = 10

# (from, to) -> multiplicative factor, kept as decimals so conversions invert exactly
UNIT_FACTORS = {
    ("percent", "basis_points"): Decimal(100),
    ("basis_points", "percent"): Decimal("0.01"),
}
NA_TOKENS = {"", "na", "nan", "n/a", "null", "."}


@dataclass
class Dataset:
    name: str
    values: np.ndarray
    frequency: str = ""
    units: str = ""
    integer_flag: bool = False
    labels: list[str] | None = None
    conversions: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size == 0:
            raise InvalidInput("a dataset needs a nonempty one-dimensional series")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInput("dataset values must be finite")
        if np.any(self.values < 0):
            i = int(np.argmax(self.values < 0))
            raise NegativeValue(f"negative value {self.values[i]!r} at position {i}", row=i)
        if self.integer_flag and np.any(self.values != np.round(self.values)):
            raise InvalidInput("integer_flag set but values are not integers")
        if self.labels is not None and len(self.labels) != self.values.size:
            raise InvalidInput("labels and values differ in length")

    @property
    def n(self) -> int:
        return int(self.values.size)

    def window(self, start, stop=None, name: str | None = None) -> "Dataset":
        """Sub-series by position (``[start, stop)``) or by label.

        String bounds select labels ``start <= label`` and
        ``label[:len(stop)] <= stop``, so ``("2005", "2026")`` keeps all
        dates in the years 2005 to 2026.
        """
        if isinstance(start, str) or isinstance(stop, str):
            if self.labels is None:
                raise InvalidInput("label windows need a dataset with labels")
            keep = [i for i, lab in enumerate(self.labels)
                    if (start is None or lab >= str(start)) and (stop is None or lab[:len(str(stop))] <= str(stop))]
            if not keep:
                raise WindowTooShort(f"window {start}..{stop} selects no observations")
            lo, hi = keep[0], keep[-1] + 1
        else:
            lo = 0 if start is None else int(start)
            hi = self.n if stop is None else int(stop)
        if not 0 <= lo < hi <= self.n:
            raise InvalidInput(f"window [{lo}, {hi}) outside [0, {self.n})")
        labels = self.labels[lo:hi] if self.labels is not None else None
        return Dataset(name or f"{self.name}[{start}:{stop}]", self.values[lo:hi], self.frequency, self.units,
                       self.integer_flag, labels, list(self.conversions))


def _to_decimal(text: str, row: int) -> Decimal:
    try:
        d = Decimal(text)
    except InvalidOperation:
        raise ParseError(f"row {row}: cannot parse {text!r} as a number", row=row) from None
    if not d.is_finite():
        raise ParseError(f"row {row}: non-finite value {text!r}", row=row)
    return d


def _looks_numeric(text: str) -> bool:
    try:
        Decimal(text.strip())
        return True
    except InvalidOperation:
        return text.strip().lower() in NA_TOKENS


def load_csv(path: str | Path, column: int | str | None = None, *, delimiter: str = ",",
             header: bool | None = None, na_policy: str = "error", label_column: int | str | None = None,
             units: str = "", convert_to: str | None = None, name: str | None = None,
             frequency: str = "", integer: bool | None = None) -> Dataset:
    """Read one numeric column of a delimited file.

    ``column`` is a 0-based index or a header name (default: the last
    column). ``header=None`` detects a header row when the first row does
    not parse as numbers. Missing entries raise :class:`MissingValue` under
    the default ``na_policy="error"``; ``"drop"`` removes them and records
    the dropped rows in the dataset's conversion log. Rows are numbered from
    1 as in the file.

    ``convert_to`` converts from ``units`` with an exact decimal factor,
    e.g. ``units="percent", convert_to="basis_points"``.
    """
    if na_policy not in ("error", "drop"):
        raise InvalidInput("na_policy must be 'error' or 'drop'")
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter)]
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path} is empty", row=0)
    names = None
    first = rows[0][1]
    if header is None:
        header = isinstance(column, str) or isinstance(label_column, str) or \
            not all(_looks_numeric(c) for c in first if c.strip())
    if header:
        names = [c.strip() for c in first]
        rows = rows[1:]

    def resolve(col, default):
        if col is None:
            return default
        if isinstance(col, int):
            return col
        if names is None or col not in names:
            raise InvalidInput(f"column {col!r} not found in header {names}")
        return names.index(col)

    width = len(first)
    ci = resolve(column, width - 1)
    li = resolve(label_column, None)
    factor = Decimal(1)
    conversions = []
    if convert_to is not None and convert_to != units:
        if (units, convert_to) not in UNIT_FACTORS:
            raise InvalidInput(f"no conversion from {units!r} to {convert_to!r}")
        factor = UNIT_FACTORS[(units, convert_to)]
        conversions.append({"from": units, "to": convert_to, "factor": str(factor)})
    values, labels, dropped, decimals = [], [], [], []
    for rownum, r in rows:
        if ci >= len(r):
            raise ParseError(f"row {rownum}: missing column {ci}", row=rownum)
        cell = r[ci].strip()
        if cell.lower() in NA_TOKENS:
            if na_policy == "error":
                raise MissingValue(f"row {rownum}: missing value", row=rownum)
            dropped.append(rownum)
            continue
        d = _to_decimal(cell, rownum)
        if d < 0:
            raise NegativeValue(f"row {rownum}: negative value {cell}", row=rownum)
        d = d * factor
        decimals.append(d)
        values.append(float(d))
        if li is not None:
            labels.append(r[li].strip())
    if dropped:
        conversions.append({"dropped_rows": dropped, "policy": "drop"})
    if not values:
        raise InsufficientData(f"{path} has no usable values")
    is_int = all(d == d.to_integral_value() for d in decimals)
    if integer is None:
        integer = is_int
    return Dataset(name or path.stem, np.array(values), frequency, convert_to or units, bool(integer),
                   labels if li is not None else None, conversions)


def convert_units(ds: Dataset, to: str) -> Dataset:
    """Exact (decimal) unit conversion; converting back restores the values."""
    if to == ds.units:
        return ds
    key = (ds.units, to)
    if key not in UNIT_FACTORS:
        raise InvalidInput(f"no conversion from {ds.units!r} to {to!r}")
    f = UNIT_FACTORS[key]
    vals = np.array([float(Decimal(repr(float(v))) * f) for v in ds.values])
    log = ds.conversions + [{"from": ds.units, "to": to, "factor": str(f)}]
    integer = bool(np.all(vals == np.round(vals)))
    return Dataset(ds.name, vals, ds.frequency, to, integer, ds.labels, log)


def format_value(v: float, integer: bool = False) -> str:
    """Shortest decimal that reads back to the same float."""
    if integer:
        return str(int(v))
    return repr(float(v))


def serialize_dataset(ds: Dataset, label_header: str = "label") -> str:
    head = f"{label_header},{ds.name}" if ds.labels is not None else ds.name
    lines = [head]
    for i, v in enumerate(ds.values):
        cell = format_value(v, ds.integer_flag)
        lines.append(f"{ds.labels[i]},{cell}" if ds.labels is not None else cell)
    return "\n".join(lines) + "\n"


def write_dataset(ds: Dataset, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(serialize_dataset(ds))
    return path


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class PersistenceRow:
    """``n`` counts observations; ``tau_hat`` uses the ``n - 1`` transitions the fit is based on."""

    name: str
    n: int
    alpha_hat: float
    mu_hat: float
    sigma2_hat: float
    k_hat: float | None
    k_hat_over_n: float | None
    tau_hat: float | None
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def persistence_row(ds: Dataset) -> PersistenceRow:
    if ds.n < MIN_N:
        raise InsufficientData(f"{ds.name}: {ds.n} observations, need at least {MIN_N}")
    est = ols(ds.values)
    flags = {}
    k = est.k_hat
    if k is None:
        flags["alpha_at_or_above_one"] = True
    elif k > ds.n:
        flags["k_hat_exceeds_n"] = True
    return PersistenceRow(ds.name, ds.n, est.alpha_hat, est.mu_hat, est.sigma2_hat, k,
                          None if k is None else k / ds.n, est.tau_hat, flags)


@dataclass
class PipelineOptions:
    B: int = 5000
    level: float = 0.90
    grid: Sequence[float] | None = None
    methods: tuple[str, ...] = ("PluginSE", "BootstrapSE")
    threshold: float = 0.10
    seed: int = 0
    workers: int = 1

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["grid"] = None if self.grid is None else list(self.grid)
        d["methods"] = list(self.methods)
        return d


@dataclass
class PipelineReport:
    dataset: str
    options: dict
    persistence: PersistenceRow
    estimate: dict
    plugin: dict
    bootstrap: dict
    sandwich: dict
    pvalue_curves: dict
    variance_exponent: dict
    conversions: list

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["persistence"] = self.persistence.to_dict()
        d["pvalue_curves"] = {k: {kk: vv for kk, vv in v.items() if kk not in ("alpha0", "p")}
                              for k, v in self.pvalue_curves.items()}
        return d


def _skipped(exc: NearUnitError) -> dict:
    return {"skipped": True, "error": type(exc).__name__, "message": str(exc)}


def apply_pipeline(ds: Dataset, options: PipelineOptions | None = None) -> PipelineReport:
    """Estimates, intervals, p-value curves and the variance diagnostic for one series.

    Components that are undefined for this series (plug-in with
    ``alpha_hat >= 1``, too few points for the variance exponent) are
    reported with ``skipped`` and the error name instead of aborting.
    """
    opt = options or PipelineOptions()
    row = persistence_row(ds)
    v = ds.values
    est = ols(v)
    grid = DEFAULT_GRID if opt.grid is None else np.asarray(opt.grid, dtype=float)
    ses: dict[str, float] = {}

    try:
        pl = plugin_ci(est, level=opt.level)
        plugin = pl.to_dict()
        ses["PluginSE"] = pl.se_alpha
    except NearUnitError as exc:
        plugin = _skipped(exc)

    boot: dict[str, Any] = {"skipped": True, "reason": "B = 0"}
    if opt.B > 0:
        bd = bootstrap(v, B=opt.B, seed=opt.seed, workers=opt.workers)
        bci = bootstrap_ci(bd, level=opt.level)
        boot = {**bci.to_dict(), "B": opt.B, "seed": opt.seed, "redraws": bd.meta["redraws"]}
        ses["BootstrapSE"] = bci.se_alpha

    sw = sandwich_se(v, est)
    ses["SandwichSE"] = sw.se_alpha
    sandwich = {"se_alpha": sw.se_alpha, "se_mu": sw.se_mu}

    curves = {}
    for m in opt.methods:
        if m not in ses:
            curves[m] = {"skipped": True, "reason": "standard error unavailable"}
            continue
        c = pvalue_curve(v, grid, method=m, threshold=opt.threshold, se=ses[m])
        curves[m] = {"se": c.se, "region": c.region, "reaches_upper": c.reaches_upper,
                     "threshold": opt.threshold, "alpha0": c.alpha0, "p": c.p}

    try:
        ve = variance_exponent(v)
        vexp = {"a_hat": ve.a_hat, "ci_halfwidth": ve.ci_halfwidth, "r2": ve.r2, "n_used": ve.n_used,
                "dropped": ve.dropped}
    except InsufficientData as exc:
        vexp = _skipped(exc)
    return PipelineReport(ds.name, opt.to_dict(), row, est.to_dict(), plugin, boot, sandwich, curves, vexp,
                          ds.conversions)


def window_sensitivity(ds: Dataset, windows: Sequence[tuple]) -> list[PersistenceRow]:
    """Persistence rows for sub-windows ``(start, stop)`` (positions or labels)."""
    rows = []
    for w in windows:
        sub = ds.window(*w)
        if sub.n < MIN_N:
            raise WindowTooShort(f"window {w} has {sub.n} observations, need at least {MIN_N}")
        r = persistence_row(sub)
        r.flags["window"] = list(w)
        rows.append(r)
    return rows


def write_report(report: PipelineReport, directory: str | Path) -> list[Path]:
    """``<name>_report.json``, ``<name>_persistence.csv`` and one p-value CSV per method."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = report.dataset
    paths = [jsonutil.dump(report.to_dict(), directory / f"{stem}_report.json")]
    paths.append(write_rows([report.persistence], directory / f"{stem}_persistence.csv"))
    for m, c in report.pvalue_curves.items():
        if c.get("skipped"):
            continue
        p = directory / f"{stem}_pvalue_{m}.csv"
        np.savetxt(p, np.column_stack([c["alpha0"], c["p"]]), delimiter=",", fmt="%.17g",
                   header="alpha0,p_value", comments="")
        paths.append(p)
    return paths


ROW_FIELDS = ("name", "n", "alpha_hat", "mu_hat", "sigma2_hat", "k_hat", "k_hat_over_n", "tau_hat")


def write_rows(rows: Sequence[PersistenceRow], path: str | Path) -> Path:
    path = Path(path)

    def fmt(v):
        if v is None or (isinstance(v, float) and not math.isfinite(v)):
            return ""
        return f"{v:.17g}" if isinstance(v, float) else str(v)

    lines = [",".join(ROW_FIELDS + ("flags",))]
    for r in rows:
        flags = ";".join(k for k, val in r.flags.items() if val is True)
        lines.append(",".join(fmt(getattr(r, f)) for f in ROW_FIELDS) + "," + flags)
    path.write_text("\n".join(lines) + "\n")
    return path
