"""Region-masked perturbations and time-aggregated before/after responses.

The aggregated response follows the step-response reading of lagged linear
response: evaluate every lagged emulator on the baseline and on the perturbed
input, aggregate across lags (sum by default), and difference the two.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import grid as gridmod
from .dataset import INPUT_IDS
from .errors import InvalidArgumentError, NotFoundError, ShapeError
from .mlp import mlp_forward
from .training import LagSuite


@dataclass
class InterventionScenario:
    region: gridmod.RegionSpec
    duration_years: int = 1
    # channel id -> {"mode": "add"|"scale", "value": float}
    perturbations: dict = field(default_factory=dict)
    reference_time: int = 0
    lag_set: list | None = None      # None -> all suite lags <= 12 * duration_years
    aggregation: str = "sum"         # sum | mean
    baseline_mode: str = "reference" # reference | zero
    taper_width_km: float = 0.0

    def validate(self):
        if self.duration_years < 1:
            raise InvalidArgumentError("duration_years must be >= 1")
        if not self.perturbations:
            raise InvalidArgumentError("at least one perturbation is required")
        for cid, p in self.perturbations.items():
            if cid not in INPUT_IDS:
                raise InvalidArgumentError(f"unknown input channel {cid!r}")
            mode = p.get("mode")
            if mode not in ("add", "scale"):
                raise InvalidArgumentError(f"perturbation mode for {cid} must be add|scale")
            if not np.isfinite(p.get("value", np.nan)):
                raise InvalidArgumentError(f"perturbation value for {cid} must be finite")
        if self.aggregation not in ("sum", "mean"):
            raise InvalidArgumentError("aggregation must be sum|mean")
        if self.baseline_mode not in ("reference", "zero"):
            raise InvalidArgumentError("baseline_mode must be reference|zero")
        if self.lag_set is not None and len(self.lag_set) == 0:
            raise InvalidArgumentError("lag_set must be non-empty when given")

    def to_dict(self):
        return {
            "region": self.region.to_dict(),
            "duration_years": self.duration_years,
            "perturbations": self.perturbations,
            "reference_time": self.reference_time,
            "lag_set": self.lag_set,
            "aggregation": self.aggregation,
            "baseline_mode": self.baseline_mode,
            "taper_width_km": self.taper_width_km,
        }

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise InvalidArgumentError("scenario must be a JSON object")
        if "region" not in d:
            raise InvalidArgumentError("scenario.region is required")
        sc = cls(
            region=gridmod.RegionSpec.from_dict(d["region"]),
            duration_years=int(d.get("duration_years", 1)),
            perturbations=d.get("perturbations", {}),
            reference_time=int(d.get("reference_time", 0)),
            lag_set=list(d["lag_set"]) if d.get("lag_set") is not None else None,
            aggregation=d.get("aggregation", "sum"),
            baseline_mode=d.get("baseline_mode", "reference"),
            taper_width_km=float(d.get("taper_width_km", 0.0)),
        )
        sc.validate()
        return sc


@dataclass
class ResponseBundle:
    before: np.ndarray            # [3, n_vertices]
    after: np.ndarray
    diff: np.ndarray              # after - before, exactly
    per_lag: dict = field(default_factory=dict)  # lag -> {"before": ..., "after": ...}


def apply_perturbation(x: np.ndarray, scenario: InterventionScenario,
                       mask: np.ndarray, taper: np.ndarray | None = None) -> np.ndarray:
    """Perturb the masked vertices of the selected channels; everything else
    is left untouched. `taper` optionally replaces the hard mask with weights
    in [0, 1]."""
    scenario.validate()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != 6:
        raise ShapeError(f"input must be [6, n_vertices], got {x.shape}")
    if mask.shape != (x.shape[1],):
        raise ShapeError("mask length does not match grid")
    w = taper if taper is not None else mask.astype(np.float64)
    out = x.copy()
    for cid, p in scenario.perturbations.items():
        i = INPUT_IDS.index(cid)
        if p["mode"] == "add":
            out[i] = x[i] + p["value"] * w
        else:
            factor = 1.0 + (p["value"] - 1.0) * w
            out[i] = x[i] * factor
    return out


def resolve_lag_set(scenario: InterventionScenario, suite: LagSuite) -> list:
    if scenario.lag_set is not None:
        missing = [l for l in scenario.lag_set if l not in suite.models]
        if missing:
            raise NotFoundError(f"suite has no model for lags {missing}; "
                                f"available {suite.lags}")
        return sorted(scenario.lag_set)
    horizon = 12 * scenario.duration_years
    lags = [l for l in suite.lags if l <= horizon]
    if not lags:
        raise NotFoundError(
            f"no suite lag within {horizon} months; available {suite.lags}")
    return lags


def aggregate_response(suite: LagSuite, scenario: InterventionScenario,
                       baseline_x: np.ndarray,
                       mesh: gridmod.IcosahedralGrid) -> ResponseBundle:
    """Before/after/diff aggregated over the scenario's lag set (fixed lag
    order, deterministic)."""
    scenario.validate()
    lags = resolve_lag_set(scenario, suite)
    mask = gridmod.region_mask(mesh, scenario.region)
    taper = None
    if scenario.taper_width_km > 0:
        taper = gridmod.taper_weights(mesh, mask, scenario.taper_width_km)
    perturbed_x = apply_perturbation(baseline_x, scenario, mask, taper)
    before_parts, after_parts, per_lag = [], [], {}
    for lag in lags:
        model = suite.model(lag)
        b = mlp_forward(model, baseline_x)
        a = mlp_forward(model, perturbed_x)
        before_parts.append(b)
        after_parts.append(a)
        per_lag[lag] = {"before": b, "after": a}
    before = np.sum(before_parts, axis=0)
    after = np.sum(after_parts, axis=0)
    if scenario.aggregation == "mean":
        before = before / len(lags)
        after = after / len(lags)
    return ResponseBundle(before=before, after=after, diff=after - before,
                          per_lag=per_lag)
