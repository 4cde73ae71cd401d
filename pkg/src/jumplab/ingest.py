"""Intraday CSV ingestion and Benjamini-Hochberg selection."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from jumplab.errors import FlaggedFlat, InvalidArgument, ParseError
from jumplab.model import LogPricePath

SECONDS_PER_DAY = 23_400
REGULAR_SESSION = ("09:30:00", "16:00:00")


def _parse_timestamps(col: pd.Series) -> pd.Series:
    if pd.api.types.is_numeric_dtype(col):
        return pd.to_datetime(col, unit="s", utc=True).dt.tz_localize(None)
    ts = pd.to_datetime(col, format="ISO8601", utc=False)
    if ts.dt.tz is not None:
        ts = ts.dt.tz_localize(None)
    return ts


def read_ticks(path: str | Path) -> pd.DataFrame:
    """Read a ``timestamp,price`` file into a frame sorted by time."""
    try:
        df = pd.read_csv(path, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    missing = {"timestamp", "price"} - set(df.columns)
    if missing:
        raise ParseError(f"missing column(s): {sorted(missing)}")
    try:
        ts = _parse_timestamps(df["timestamp"])
        price = pd.to_numeric(df["price"], errors="raise").astype(float)
    except (ValueError, TypeError) as exc:
        raise ParseError(f"unparseable timestamp or price: {exc}") from exc
    if len(df) == 0:
        raise ParseError("file has no rows")
    if not np.all(np.isfinite(price)) or np.any(price <= 0):
        raise ParseError("prices must be finite and positive")
    out = pd.DataFrame({"timestamp": ts, "price": price})
    return out.sort_values("timestamp", kind="stable").reset_index(drop=True)


def ingest_day_csv(path: str | Path, session: tuple[str, str] = REGULAR_SESSION) -> LogPricePath:
    """Log-prices of one session on the regular grid implied by the modal tick spacing.

    Rows outside ``session`` (inclusive) are dropped. The grid runs from the
    first to the last in-session tick; empty grid slots take the last
    observed price. ``delta`` is the spacing in units of a 6.5-hour day.
    """
    ticks = read_ticks(path)
    clock = ticks["timestamp"].dt.strftime("%H:%M:%S")
    start, end = session
    ticks = ticks[(clock >= start) & (clock <= end)]
    if ticks["timestamp"].dt.normalize().nunique() > 1:
        raise ParseError("file spans more than one calendar day")
    # last tick wins at duplicate timestamps
    ticks = ticks.drop_duplicates("timestamp", keep="last")
    if len(ticks) < 3:
        raise ParseError(f"only {len(ticks)} in-session ticks")
    if ticks["price"].nunique() == 1:
        raise FlaggedFlat("price path is entirely flat")
    gaps = ticks["timestamp"].diff().dropna().dt.total_seconds()
    step = float(gaps.round(6).mode().min())
    if not step > 0:
        raise ParseError("cannot infer a positive tick spacing")
    series = ticks.set_index("timestamp")["price"]
    grid = pd.date_range(series.index[0], series.index[-1], freq=pd.to_timedelta(step, unit="s"))
    prices = series.reindex(series.index.union(grid)).ffill().reindex(grid)
    values = np.log(prices.to_numpy())
    if values.size < 3:
        raise ParseError("grid has fewer than 3 points")
    return LogPricePath(values, step / SECONDS_PER_DAY)


def bh_select(pvalues: Sequence[float], q: float) -> set[int]:
    """Benjamini-Hochberg step-up selection at false-discovery rate ``q``."""
    p = np.asarray(pvalues, dtype=float)
    if p.size == 0:
        raise InvalidArgument("need at least one p-value")
    if not 0 < q < 1:
        raise InvalidArgument(f"q must lie in (0, 1), got {q}")
    m = p.size
    order = np.sort(p)
    ok = np.flatnonzero(order <= q * np.arange(1, m + 1) / m)
    if ok.size == 0:
        return set()
    cutoff = order[ok[-1]]
    return {int(i) for i in np.flatnonzero(p <= cutoff)}
