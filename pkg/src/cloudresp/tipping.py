"""Tipping-point risk rules evaluated at sensitive geospatial sites.

Sites, radii, and rule thresholds are configuration, not science: the shipped
seven-site file carries placeholder thresholds meant to be replaced by
expert-supplied rules.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import grid as gridmod
from .errors import EmptySiteError, FormatError, InvalidArgumentError
from .intervention import ResponseBundle

SITES_SCHEMA_VERSION = 1
VARIABLES = ("psl", "pr", "tas")

# denominators are floored at these per-variable scales to guard near-zero baselines
DEFAULT_EPS = {"psl": 10.0, "pr": 0.05, "tas": 0.05}


@dataclass(frozen=True)
class TippingRule:
    variable: str
    comparator: str        # ">" or "<", strict
    threshold_percent: float

    def __post_init__(self):
        if self.variable not in VARIABLES:
            raise InvalidArgumentError(f"rule variable must be one of {VARIABLES}")
        if self.comparator not in (">", "<"):
            raise InvalidArgumentError("comparator must be > or <")
        if not np.isfinite(self.threshold_percent):
            raise InvalidArgumentError("threshold must be finite")

    def fires(self, percent: float) -> bool:
        if self.comparator == ">":
            return percent > self.threshold_percent
        return percent < self.threshold_percent


@dataclass(frozen=True)
class TippingSite:
    id: str
    display_name: str
    center: tuple          # (lat, lon) degrees
    radius_km: float
    rules: tuple           # of TippingRule
    combine: str = "any"   # any | all

    def __post_init__(self):
        if self.radius_km <= 0:
            raise InvalidArgumentError(f"site {self.id}: radius must be > 0")
        if len(self.rules) < 1:
            raise InvalidArgumentError(f"site {self.id}: at least one rule required")
        if self.combine not in ("any", "all"):
            raise InvalidArgumentError(f"site {self.id}: combine must be any|all")

    def to_dict(self):
        return {
            "id": self.id, "display_name": self.display_name,
            "center": list(self.center), "radius_km": self.radius_km,
            "rules": [{"variable": r.variable, "comparator": r.comparator,
                       "threshold_percent": r.threshold_percent} for r in self.rules],
            "combine": self.combine,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            id=d["id"], display_name=d.get("display_name", d["id"]),
            center=tuple(d["center"]), radius_km=float(d["radius_km"]),
            rules=tuple(TippingRule(r["variable"], r["comparator"],
                                    float(r["threshold_percent"])) for r in d["rules"]),
            combine=d.get("combine", "any"),
        )


@dataclass(frozen=True)
class SiteAssessment:
    site_id: str
    percent_change: dict      # variable -> percent
    at_risk: bool
    triggered_rules: tuple

    def to_dict(self):
        return {
            "site_id": self.site_id, "percent_change": self.percent_change,
            "at_risk": self.at_risk,
            "triggered_rules": [
                {"variable": r.variable, "comparator": r.comparator,
                 "threshold_percent": r.threshold_percent} for r in self.triggered_rules],
        }


def haversine_km(lat1, lon1, lat2, lon2):
    """Great-circle distance on a 6371 km sphere; arguments in degrees."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlam = np.radians(lon2) - np.radians(lon1)
    a = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlam / 2) ** 2
    return 2.0 * gridmod.EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def site_vertices(site: TippingSite, mesh: gridmod.IcosahedralGrid) -> np.ndarray:
    d = haversine_km(mesh.lat, mesh.lon, site.center[0], site.center[1])
    members = np.flatnonzero(d <= site.radius_km)
    if members.size == 0:
        raise EmptySiteError(
            f"site {site.id!r} has no vertex within {site.radius_km} km at "
            f"grid level {mesh.level}")
    return members


def site_metrics(bundle: ResponseBundle, site: TippingSite,
                 mesh: gridmod.IcosahedralGrid,
                 eps: dict | None = None) -> dict:
    """Area-weighted percent change of each output variable within the site."""
    eps = eps or DEFAULT_EPS
    members = site_vertices(site, mesh)
    w = mesh.area_weights[members]
    w = w / w.sum()
    out = {}
    for i, var in enumerate(VARIABLES):
        before = float(w @ bundle.before[i, members])
        after = float(w @ bundle.after[i, members])
        denom = max(abs(before), eps[var])
        out[var] = 100.0 * (after - before) / denom
    return out


def assess(bundle: ResponseBundle, sites, mesh: gridmod.IcosahedralGrid,
           eps: dict | None = None) -> list:
    results = []
    for site in sites:
        pct = site_metrics(bundle, site, mesh, eps)
        triggered = tuple(r for r in site.rules if r.fires(pct[r.variable]))
        if site.combine == "any":
            at_risk = len(triggered) > 0
        else:
            at_risk = len(triggered) == len(site.rules)
        results.append(SiteAssessment(site_id=site.id, percent_change=pct,
                                      at_risk=at_risk, triggered_rules=triggered))
    return results


def load_sites(path) -> list:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    if not isinstance(doc, dict) or doc.get("schema_version") != SITES_SCHEMA_VERSION:
        raise FormatError("sites file must carry schema_version "
                          f"{SITES_SCHEMA_VERSION}")
    return [TippingSite.from_dict(d) for d in doc["sites"]]


def default_sites() -> list:
    """The shipped seven-site configuration (placeholder thresholds)."""
    with resources.files("cloudresp.data").joinpath("default_sites.json").open(
            encoding="utf-8") as f:
        doc = json.load(f)
    return [TippingSite.from_dict(d) for d in doc["sites"]]
