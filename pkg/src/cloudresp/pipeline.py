"""Physics-aware preprocessing: deseasonalize, detrend, rolling-mean removal.

All stages operate per vertex and per calendar month independently and are
linear maps, applied in the fixed order
deseasonalize -> detrend -> rolling-mean removal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import AnomalyDataset
from .errors import InvalidArgumentError

DEFAULT_WINDOW_YEARS = 30
DEFAULT_DETREND_DEGREE = 3


@dataclass(frozen=True)
class PipelineConfig:
    rolling_window_years: int = DEFAULT_WINDOW_YEARS
    detrend_degree: int = DEFAULT_DETREND_DEGREE

    def __post_init__(self):
        if self.rolling_window_years < 1:
            raise InvalidArgumentError("rolling window must be >= 1 year")
        if self.detrend_degree < 0:
            raise InvalidArgumentError("detrend degree must be >= 0")


def _check_series(series):
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2:
        raise InvalidArgumentError(f"series must be [n_months, n_vertices], got ndim={series.ndim}")
    if series.shape[0] < 12:
        raise InvalidArgumentError(f"need at least 12 months, got {series.shape[0]}")
    return series


def _month_indices(n_months, start_month=1):
    return (np.arange(n_months) + start_month - 1) % 12


def deseasonalize(series, start_month: int = 1):
    """Subtract the per-(vertex, calendar month) climatological mean."""
    series = _check_series(series)
    cal = _month_indices(series.shape[0], start_month)
    out = np.empty_like(series)
    for m in range(12):
        sel = cal == m
        if sel.any():
            out[sel] = series[sel] - series[sel].mean(axis=0)
    return out


def detrend(series, degree: int = DEFAULT_DETREND_DEGREE, start_month: int = 1):
    """Fit and subtract a least-squares polynomial in the year index, per
    vertex and calendar month. The year index is centered and scaled to
    [-1, 1] for conditioning; the fit is solved by QR-based least squares."""
    series = _check_series(series)
    cal = _month_indices(series.shape[0], start_month)
    out = np.empty_like(series)
    for m in range(12):
        sel = np.flatnonzero(cal == m)
        if sel.size == 0:
            continue
        if sel.size < degree + 1:
            raise InvalidArgumentError(
                f"calendar month {m + 1} has {sel.size} samples; "
                f"degree-{degree} fit needs at least {degree + 1}")
        y = np.arange(sel.size, dtype=np.float64)
        if sel.size > 1:
            y = 2.0 * y / (sel.size - 1) - 1.0
        coeffs = np.polynomial.polynomial.polyfit(y, series[sel], degree)
        out[sel] = series[sel] - np.polynomial.polynomial.polyval(y, coeffs).T
    return out


def remove_rolling_mean(series, window_years: int = DEFAULT_WINDOW_YEARS,
                        start_month: int = 1):
    """Subtract a centered per-calendar-month running mean, truncated at the
    series edges (shorter effective window near boundaries)."""
    series = _check_series(series)
    if window_years < 1:
        raise InvalidArgumentError("window must be >= 1 year")
    cal = _month_indices(series.shape[0], start_month)
    out = np.empty_like(series)
    h_lo = (window_years - 1) // 2
    h_hi = window_years - 1 - h_lo
    for m in range(12):
        sel = np.flatnonzero(cal == m)
        if sel.size == 0:
            continue
        sub = series[sel]  # [k, V], one sample per year
        csum = np.vstack([np.zeros((1, sub.shape[1])), np.cumsum(sub, axis=0)])
        k = sub.shape[0]
        lo = np.maximum(np.arange(k) - h_lo, 0)
        hi = np.minimum(np.arange(k) + h_hi + 1, k)
        means = (csum[hi] - csum[lo]) / (hi - lo)[:, None]
        out[sel] = sub - means
    return out


def compute_anomalies(ds: AnomalyDataset, cfg: PipelineConfig | None = None) -> AnomalyDataset:
    """Apply the full pipeline to every channel of a raw dataset."""
    if cfg is None:
        cfg = PipelineConfig()
    if ds.provenance != "raw":
        raise InvalidArgumentError(
            f"compute_anomalies expects a raw dataset, got provenance={ds.provenance!r}")
    start_month = ds.start[1]
    data = {}
    for cid, arr in ds.data.items():
        x = deseasonalize(arr, start_month)
        x = detrend(x, cfg.detrend_degree, start_month)
        x = remove_rolling_mean(x, cfg.rolling_window_years, start_month)
        data[cid] = x.astype(np.float32)
    stages = [
        {"stage": "deseasonalize"},
        {"stage": "detrend", "degree": cfg.detrend_degree},
        {"stage": "remove_rolling_mean", "window_years": cfg.rolling_window_years},
    ]
    return AnomalyDataset(
        grid_level=ds.grid_level, n_months=ds.n_months, start=ds.start,
        channels=list(ds.channels), data=data, provenance="anomaly",
        pipeline=list(ds.pipeline) + stages,
    )
