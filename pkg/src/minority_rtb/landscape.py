"""Auction-landscape datasets: parsing, validation, summaries, synthesis.

A landscape row records, for one ad at one date and hour, how many
impressions were obtainable at one bid level over six horizons. Bid levels
live on a $0.10 grid strictly inside (0, 50).
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import math
import os
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, RowError, SchemaError

COLUMNS = (
    "date",
    "hour",
    "adid_anonymized",
    "bid",
    "imps_alltime",
    "imps_hour",
    "imps_day",
    "imps_week",
    "imps_month",
    "imps_year",
)
HORIZONS = ("imps_hour", "imps_day", "imps_week", "imps_month", "imps_year", "imps_alltime")

BID_STEP = 0.1
BID_CEILING = 50.0
GRID_TOL = 1e-9
GRID = np.arange(1, 500) / 10.0  # 0.1 ... 49.9

STRICT = "strict"
LENIENT = "lenient"

MOMENT_CONVENTION = (
    "sd uses n-1; skew g1 = m3/m2^1.5 and excess kurtosis g2 = m4/m2^2 - 3 use "
    "biased (1/n) central moments; skew/kurtosis are NaN when m2 = 0; sd is NaN when n = 1"
)


@dataclass(frozen=True)
class AuctionRecord:
    date: int
    hour: int
    adid: int
    bid: float
    imps_hour: int
    imps_day: int
    imps_week: int
    imps_month: int
    imps_year: int
    imps_alltime: int

    @property
    def decoded_date(self):
        return decode_date(self.date)


@dataclass
class ParseDiagnostics:
    rows_read: int = 0
    rows_kept: int = 0
    dropped: Counter = field(default_factory=Counter)
    errors: list = field(default_factory=list)
    ignored_columns: tuple = ()

    @property
    def message(self):
        msg = f"{self.rows_kept} rows"
        if self.dropped:
            msg += f", {sum(self.dropped.values())} dropped"
        return msg


class LandscapeDataset:
    """Column-oriented landscape table.

    ``columns`` maps every name in :data:`COLUMNS` to a 1-D array (int64,
    except ``bid`` which is float64). ``labels`` optionally carries the
    generator's ground-truth group per row for synthetic data.
    """

    def __init__(self, columns, provenance="synthetic", manifest=None, labels=None, diagnostics=None):
        missing = [c for c in COLUMNS if c not in columns]
        if missing:
            raise SchemaError(f"missing columns: {', '.join(missing)}")
        self.columns = {
            c: np.asarray(columns[c], dtype=np.float64 if c == "bid" else np.int64) for c in COLUMNS
        }
        sizes = {v.size for v in self.columns.values()}
        if len(sizes) != 1:
            raise SchemaError("columns have different lengths")
        if provenance not in ("real_licensed", "synthetic"):
            raise ConfigError("provenance", f"unknown provenance {provenance!r}")
        self.provenance = provenance
        self.manifest = manifest
        self.labels = None if labels is None else np.asarray(labels)
        self.diagnostics = diagnostics or ParseDiagnostics(rows_read=len(self), rows_kept=len(self))

    def __len__(self):
        return self.columns["bid"].size

    def __getitem__(self, i):
        c = self.columns
        return AuctionRecord(
            date=int(c["date"][i]),
            hour=int(c["hour"][i]),
            adid=int(c["adid_anonymized"][i]),
            bid=float(c["bid"][i]),
            **{h: int(c[h][i]) for h in HORIZONS},
        )

    @property
    def records(self):
        return [self[i] for i in range(len(self))]

    def take(self, index):
        labels = None if self.labels is None else self.labels[index]
        return LandscapeDataset(
            {c: v[index] for c, v in self.columns.items()}, self.provenance, self.manifest, labels
        )

    def to_csv(self, target=None, include_decoded_date=False):
        """Write the table; returns the text when ``target`` is None."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = list(COLUMNS) + (["decoded_date"] if include_decoded_date else [])
        w.writerow(header)
        values = [self.columns[c].tolist() for c in COLUMNS]
        for i in range(len(self)):
            row = [repr(v[i]) if c == "bid" else str(v[i]) for c, v in zip(COLUMNS, values)]
            if include_decoded_date:
                row.append(decode_date(values[0][i]).isoformat())
            w.writerow(row)
        text = buf.getvalue()
        if target is None:
            return text
        if hasattr(target, "write"):
            target.write(text)
        else:
            with open(target, "w", newline="") as fh:
                fh.write(text)
        return None


def on_grid(bid):
    k = round(bid / BID_STEP)
    return abs(bid - k * BID_STEP) <= GRID_TOL


def _parse_int(cell):
    try:
        return int(cell)
    except ValueError:
        x = float(cell)
        if not x.is_integer():
            raise ValueError(f"{cell!r} is not an integer") from None
        return int(x)


def _validate(values, mode):
    """Return ``(category, message)`` for the first violation, else None."""
    date, hour, _adid, bid = values[0], values[1], values[2], values[3]
    if date <= 0:
        return "date", "date must be a positive serial"
    if not 0 <= hour <= 23:
        return "hour", f"hour {hour} outside 0..23"
    if not (0.0 < bid < BID_CEILING):
        return "bid range", f"bid {bid!r} outside (0, 50)"
    if not on_grid(bid):
        return "bid grid", f"bid {bid!r} is not a multiple of 0.1"
    imps = dict(zip(COLUMNS[4:], values[4:]))
    for name, v in imps.items():
        if v < 0:
            return "negative impressions", f"{name} is negative"
    if mode == STRICT:
        for h0, h1 in zip(HORIZONS, HORIZONS[1:]):
            if imps[h0] > imps[h1]:
                return "horizon order", f"{h0}={imps[h0]} exceeds {h1}={imps[h1]}"
    return None


def parse_csv(source, mode=STRICT, provenance="real_licensed"):
    """Read a landscape CSV by header name.

    STRICT raises :class:`RowError` listing every violation (row numbers count
    the header as line 1); LENIENT drops offending rows and tallies reasons in
    ``dataset.diagnostics``. A ``decoded_date`` column is accepted and ignored,
    since it is recomputed from ``date``.
    """
    mode = mode.lower()
    if mode not in (STRICT, LENIENT):
        raise ConfigError("mode", f"expected strict or lenient, got {mode!r}")
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return _parse(fh, mode, provenance)
    return _parse(source, mode, provenance)


def _parse(fh, mode, provenance):
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("input has no header row") from None
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"missing column(s): {', '.join(missing)}")
    pos = [header.index(c) for c in COLUMNS]
    diag = ParseDiagnostics(ignored_columns=tuple(h for h in header if h not in COLUMNS))
    rows = []
    for lineno, raw in enumerate(reader, start=2):
        if not raw or all(not c.strip() for c in raw):
            continue
        diag.rows_read += 1
        try:
            if len(raw) < len(header):
                raise ValueError(f"expected {len(header)} cells, got {len(raw)}")
            values = [
                float(raw[p]) if c == "bid" else _parse_int(raw[p]) for c, p in zip(COLUMNS, pos)
            ]
            problem = _validate(values, mode)
        except ValueError as exc:
            problem = "unparseable", f"unparseable cell: {exc}"
        if problem is not None:
            diag.errors.append((lineno, problem[1]))
            diag.dropped[problem[0]] += 1
            continue
        rows.append(values)
    if mode == STRICT and diag.errors:
        first_row, first_msg = diag.errors[0]
        err = RowError(first_row, f"{first_msg} ({len(diag.errors)} invalid row(s) in total)")
        err.errors = list(diag.errors)
        raise err
    diag.rows_kept = len(rows)
    if rows:
        table = list(zip(*rows))
        cols = {c: np.array(v, dtype=np.float64 if c == "bid" else np.int64) for c, v in zip(COLUMNS, table)}
    else:
        cols = {c: np.empty(0, dtype=np.float64 if c == "bid" else np.int64) for c in COLUMNS}
    return LandscapeDataset(cols, provenance=provenance, diagnostics=diag)


_EPOCH_EARLY = dt.date(1899, 12, 31)
_EPOCH_LATE = dt.date(1899, 12, 30)


def decode_date(serial):
    """Spreadsheet day serial (1900 system) to a calendar date.

    Serial 1 is 1900-01-01. Serial 60 is the spreadsheet's nonexistent
    1900-02-29 and is rejected; from serial 61 on the one-day offset it
    introduced is removed.
    """
    serial = int(serial)
    if serial <= 0:
        raise ContractError(f"date serial must be positive, got {serial}")
    if serial == 60:
        raise ContractError("serial 60 denotes 1900-02-29, which does not exist")
    if serial < 60:
        return _EPOCH_EARLY + dt.timedelta(days=serial)
    return _EPOCH_LATE + dt.timedelta(days=serial)


@dataclass(frozen=True)
class SummaryRow:
    variable: str
    n: int
    mean: float
    sd: float
    median: float
    min: float
    max: float
    range: float
    skew: float
    kurtosis: float


def describe(values, name="x"):
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if n == 0:
        raise ContractError(f"cannot summarize empty column {name!r}")
    mean = float(np.mean(x))
    d = x - mean
    m2 = float(np.mean(d * d))
    if m2 > 0:
        m3 = float(np.mean(d**3))
        m4 = float(np.mean(d**4))
        skew = m3 / m2**1.5
        kurt = m4 / m2**2 - 3.0
    else:
        skew = kurt = math.nan
    sd = math.sqrt(m2 * n / (n - 1)) if n > 1 else math.nan
    lo, hi = float(x.min()), float(x.max())
    return SummaryRow(name, n, mean, sd, float(np.median(x)), lo, hi, hi - lo, skew, kurt)


def summarize(dataset):
    if len(dataset) == 0:
        raise ContractError("cannot summarize an empty dataset")
    return [describe(dataset.columns[c], c) for c in COLUMNS]


def summary_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["vars", "n", "mean", "sd", "median", "min", "max", "range", "skew", "kurtosis"])
    for r in rows:
        w.writerow([r.variable, r.n] + [_fmt(getattr(r, f)) for f in ("mean", "sd", "median", "min", "max", "range", "skew", "kurtosis")])
    return buf.getvalue()


def summary_json(rows):
    return {
        "convention": MOMENT_CONVENTION,
        "rows": [{k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in asdict(r).items()} for r in rows],
    }


def _fmt(v):
    if isinstance(v, float) and math.isnan(v):
        return "NaN"
    return f"{v:.6f}"


class MomentAccumulator:
    """Streaming count, mean and central moment sums up to order four.

    ``merge`` combines two accumulators with the pairwise update formulas of
    Chan et al. (mean, M2) extended by Pebay (M3, M4); the mean/M2 merge is
    exact in real arithmetic, M3/M4 likewise, up to floating-point rounding.
    """

    __slots__ = ("n", "mean", "M2", "M3", "M4", "min", "max")

    def __init__(self):
        self.n = 0
        self.mean = self.M2 = self.M3 = self.M4 = 0.0
        self.min, self.max = math.inf, -math.inf

    @classmethod
    def of(cls, values):
        acc = cls()
        for v in np.asarray(values, dtype=np.float64).tolist():
            acc.push(v)
        return acc

    def push(self, x):
        n1 = self.n
        self.n += 1
        n = self.n
        delta = x - self.mean
        dn = delta / n
        dn2 = dn * dn
        t1 = delta * dn * n1
        self.mean += dn
        self.M4 += t1 * dn2 * (n * n - 3 * n + 3) + 6 * dn2 * self.M2 - 4 * dn * self.M3
        self.M3 += t1 * dn * (n - 2) - 3 * dn * self.M2
        self.M2 += t1
        self.min = min(self.min, x)
        self.max = max(self.max, x)

    def merge(self, other):
        out = MomentAccumulator()
        na, nb = self.n, other.n
        n = na + nb
        if n == 0:
            return out
        if na == 0 or nb == 0:
            src = self if nb == 0 else other
            for s in self.__slots__:
                setattr(out, s, getattr(src, s))
            return out
        delta = other.mean - self.mean
        d2, d3, d4 = delta**2, delta**3, delta**4
        out.n = n
        out.mean = self.mean + delta * nb / n
        out.M2 = self.M2 + other.M2 + d2 * na * nb / n
        out.M3 = (
            self.M3 + other.M3
            + d3 * na * nb * (na - nb) / n**2
            + 3 * delta * (na * other.M2 - nb * self.M2) / n
        )
        out.M4 = (
            self.M4 + other.M4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / n**3
            + 6 * d2 * (na * na * other.M2 + nb * nb * self.M2) / n**2
            + 4 * delta * (na * other.M3 - nb * self.M3) / n
        )
        out.min = min(self.min, other.min)
        out.max = max(self.max, other.max)
        return out

    @property
    def variance(self):
        return self.M2 / (self.n - 1) if self.n > 1 else math.nan

    @property
    def skew(self):
        return math.sqrt(self.n) * self.M3 / self.M2**1.5 if self.M2 > 0 else math.nan

    @property
    def kurtosis(self):
        return self.n * self.M4 / self.M2**2 - 3.0 if self.M2 > 0 else math.nan


# ---------------------------------------------------------------- generator

MODELS = ("two_regime", "supply_curve", "heteroscedastic")

# default horizon growth: each horizon adds Poisson((factor - 1) * previous)
HORIZON_FACTORS = (("imps_day", 14.5), ("imps_week", 5.5), ("imps_month", 3.8), ("imps_year", 2.3), ("imps_alltime", 1.0005))


@dataclass(frozen=True)
class GenConfig:
    """Parameters of the synthetic landscape generator.

    With ``full_grid`` every (date, hour, ad) cell carries all 499 bid levels;
    otherwise ``num_rows`` rows are drawn with random cells.
    """

    model: str = "supply_curve"
    num_ads: int = 1
    date_start: int = 43082
    date_end: int | None = None
    hours: tuple = (13,)
    full_grid: bool = True
    num_rows: int | None = None
    seed: int = 0
    # two_regime: regime 0 is the low-bid, high-impression group
    split_bid: float = 25.0
    regime_imps_means: tuple = (74.248105, 23.884666)
    regime_day_means: tuple = (1143.596414, 282.998350)
    regime_weights: tuple = (0.5, 0.5)
    dispersion: float = 0.0
    # supply_curve: imps_hour ~ Poisson(supply_peak * (bid / 50) ** supply_exponent)
    supply_peak: float = 100.0
    supply_exponent: float = 1.5
    # heteroscedastic: bid variance per imps_hour bin
    variance_schedule: tuple = (220.0, 192.0, 164.0, 136.0, 108.0, 80.0)
    imps_bin_edges: tuple = (0, 1000, 2000, 3000, 4000, 5000, 6000)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError("model", f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.num_ads < 1:
            raise ConfigError("num_ads", "must be positive")
        if self.date_start < 1:
            raise ConfigError("date_start", "must be a positive serial")
        if self.date_end is not None and self.date_end < self.date_start:
            raise ConfigError("date_end", "precedes date_start")
        if not self.hours or any(not 0 <= h <= 23 for h in self.hours):
            raise ConfigError("hours", "need at least one hour in 0..23")
        if self.model == "heteroscedastic" and self.full_grid:
            raise ConfigError("full_grid", "the heteroscedastic model draws its own bid levels; set num_rows instead")
        if not self.full_grid and (self.num_rows is None or self.num_rows < 1):
            raise ConfigError("num_rows", "required (positive) when full_grid is off")
        if not 0 < self.split_bid < BID_CEILING:
            raise ConfigError("split_bid", "must lie inside (0, 50)")
        if len(self.regime_imps_means) != 2 or min(self.regime_imps_means) < 0:
            raise ConfigError("regime_imps_means", "need two non-negative means")
        if len(self.regime_day_means) != 2 or any(d < h for d, h in zip(self.regime_day_means, self.regime_imps_means)):
            raise ConfigError("regime_day_means", "each must be at least the matching hourly mean")
        if len(self.regime_weights) != 2 or min(self.regime_weights) <= 0:
            raise ConfigError("regime_weights", "need two positive weights")
        if self.dispersion < 0:
            raise ConfigError("dispersion", "must be non-negative")
        if self.supply_peak < 0:
            raise ConfigError("supply_peak", "must be non-negative")
        edges = self.imps_bin_edges
        if len(edges) != len(self.variance_schedule) + 1 or any(b <= a for a, b in zip(edges, edges[1:])) or edges[0] < 0:
            raise ConfigError("imps_bin_edges", "need len(variance_schedule) + 1 increasing non-negative edges")
        span = GRID[-1] - GRID[0]
        if any(not 0 < v < span**2 / 4 for v in self.variance_schedule):
            raise ConfigError("variance_schedule", f"variances must lie in (0, {span**2 / 4:.1f})")

    @property
    def dates(self):
        end = self.date_start if self.date_end is None else self.date_end
        return np.arange(self.date_start, end + 1, dtype=np.int64)

    def to_manifest(self):
        d = asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


def _cells(cfg, rng):
    dates = cfg.dates
    hours = np.asarray(cfg.hours, dtype=np.int64)
    ads = np.arange(1, cfg.num_ads + 1, dtype=np.int64)
    if cfg.full_grid:
        d, h, a, b = np.meshgrid(dates, hours, ads, np.arange(1, 500), indexing="ij")
        return d.ravel(), h.ravel(), a.ravel(), b.ravel() / 10.0
    n = cfg.num_rows
    return (
        dates[rng.integers(dates.size, size=n)],
        hours[rng.integers(hours.size, size=n)],
        ads[rng.integers(ads.size, size=n)],
        None,
    )


def _poisson(rng, lam, dispersion):
    lam = np.asarray(lam, dtype=np.float64)
    if dispersion > 0:
        # gamma-Poisson with variance lam + dispersion * lam**2
        shape = 1.0 / dispersion
        lam = rng.gamma(shape, lam / shape)
    return rng.poisson(lam)


def _horizons(rng, hour, first_extra=None):
    out = {"imps_hour": hour}
    prev = hour
    for i, (name, factor) in enumerate(HORIZON_FACTORS):
        extra = first_extra if (i == 0 and first_extra is not None) else (factor - 1.0) * prev
        prev = prev + rng.poisson(np.maximum(extra, 0.0))
        out[name] = prev
    return out


def _snap(bids):
    ticks = np.clip(np.rint(np.asarray(bids) * 10), 1, 499)
    return ticks / 10.0


def synth_generate(cfg):
    """Draw a schema-valid synthetic landscape; deterministic per ``cfg.seed``."""
    if not isinstance(cfg, GenConfig):
        raise ConfigError("gen_config", "expected GenConfig")
    rng = np.random.default_rng(int(cfg.seed))
    date, hour, ad, bid = _cells(cfg, rng)
    n = date.size
    labels = None

    if cfg.model == "two_regime":
        split_tick = int(round(cfg.split_bid * 10))
        if bid is None:
            w = np.asarray(cfg.regime_weights, dtype=np.float64)
            labels = (rng.random(n) >= w[0] / w.sum()).astype(np.int64)
            low = rng.integers(1, split_tick, size=n)
            high = rng.integers(split_tick, 500, size=n)
            bid = np.where(labels == 0, low, high) / 10.0
        else:
            labels = (np.rint(bid * 10) >= split_tick).astype(np.int64)
        means = np.asarray(cfg.regime_imps_means)[labels]
        imps_hour = _poisson(rng, means, cfg.dispersion)
        day_extra = (np.asarray(cfg.regime_day_means) - np.asarray(cfg.regime_imps_means))[labels]
        horizons = _horizons(rng, imps_hour, day_extra)
    elif cfg.model == "supply_curve":
        if bid is None:
            bid = rng.integers(1, 500, size=n) / 10.0
        imps_hour = _poisson(rng, cfg.supply_peak * (bid / BID_CEILING) ** cfg.supply_exponent, cfg.dispersion)
        horizons = _horizons(rng, imps_hour)
    else:
        k = len(cfg.variance_schedule)
        labels = rng.permutation(np.arange(n) % k).astype(np.int64)
        edges = np.asarray(cfg.imps_bin_edges, dtype=np.int64)
        imps_hour = rng.integers(edges[labels], edges[labels + 1])
        lo, hi = GRID[0], GRID[-1]
        span = hi - lo
        var = np.asarray(cfg.variance_schedule)[labels]
        # symmetric Beta(a, a) on [lo, hi] has variance span^2 / (4 (2a + 1))
        a = (span**2 / (4.0 * var) - 1.0) / 2.0
        bid = _snap(lo + span * rng.beta(a, a))
        horizons = _horizons(rng, imps_hour)

    cols = {"date": date, "hour": hour, "adid_anonymized": ad, "bid": bid, **horizons}
    manifest = {"generator": "minority_rtb.landscape.synth_generate", "config": cfg.to_manifest(), "rows": int(n)}
    return LandscapeDataset(cols, provenance="synthetic", manifest=manifest, labels=labels)
