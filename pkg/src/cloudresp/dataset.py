"""Portable on-disk dataset format and synthetic data generation.

A dataset is a directory holding ``meta.json`` plus one raw little-endian
float32 binary per channel, row-major [time][vertex]. The channel contract is
fixed: 6 radiation inputs and 3 climate outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import grid as gridmod
from .errors import CorruptFileError, FormatError, InvalidArgumentError

SCHEMA_VERSION = 1

INPUT_CHANNELS = [
    ("sw_cre_toa", "W m-2", "shortwave cloud radiative effect, top of atmosphere"),
    ("lw_cre_toa", "W m-2", "longwave cloud radiative effect, top of atmosphere"),
    ("sw_cre_surf", "W m-2", "shortwave cloud radiative effect, surface"),
    ("lw_cre_surf", "W m-2", "longwave cloud radiative effect, surface"),
    ("net_clearsky_toa", "W m-2", "net clear-sky radiation, top of atmosphere"),
    ("net_clearsky_surf", "W m-2", "net clear-sky radiation, surface"),
]
OUTPUT_CHANNELS = [
    ("psl", "Pa", "sea-level pressure"),
    ("pr", "mm day-1", "precipitation"),
    ("tas", "K", "near-surface air temperature"),
]
INPUT_IDS = [c[0] for c in INPUT_CHANNELS]
OUTPUT_IDS = [c[0] for c in OUTPUT_CHANNELS]
ALL_IDS = INPUT_IDS + OUTPUT_IDS


@dataclass(frozen=True)
class FieldChannel:
    id: str
    role: str       # input | output
    units: str
    long_name: str


def canonical_channels() -> list[FieldChannel]:
    chans = [FieldChannel(i, "input", u, n) for i, u, n in INPUT_CHANNELS]
    chans += [FieldChannel(i, "output", u, n) for i, u, n in OUTPUT_CHANNELS]
    return chans


@dataclass
class AnomalyDataset:
    grid_level: int
    n_months: int
    start: tuple  # (year, month), month 1-12
    channels: list
    data: dict          # channel id -> float32 array [n_months, n_vertices]
    provenance: str     # raw | anomaly
    pipeline: list = field(default_factory=list)

    @property
    def n_vertices(self) -> int:
        return gridmod.vertex_count(self.grid_level)

    def validate(self):
        ids = [c.id for c in self.channels]
        if ids != ALL_IDS:
            missing = [i for i in ALL_IDS if i not in ids]
            extra = [i for i in ids if i not in ALL_IDS]
            raise FormatError(
                f"channel contract violated: missing {missing}, unexpected {extra}")
        shape = (self.n_months, self.n_vertices)
        for cid, arr in self.data.items():
            if arr.shape != shape:
                raise CorruptFileError(
                    f"channel {cid} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise CorruptFileError(f"channel {cid} contains non-finite values")
        if self.provenance not in ("raw", "anomaly"):
            raise FormatError(f"unknown provenance {self.provenance!r}")

    def inputs_at(self, t: int) -> np.ndarray:
        """Stack the 6 input channels at month t into [6, n_vertices] float64."""
        return np.stack([self.data[c][t] for c in INPUT_IDS]).astype(np.float64)

    def outputs_at(self, t: int) -> np.ndarray:
        return np.stack([self.data[c][t] for c in OUTPUT_IDS]).astype(np.float64)


def save_dataset(ds: AnomalyDataset, path):
    path = _as_dir(path)
    ds.validate()
    meta = {
        "schema_version": SCHEMA_VERSION,
        "grid_level": ds.grid_level,
        "n_months": ds.n_months,
        "start_year": ds.start[0],
        "start_month": ds.start[1],
        "channels": [{"id": c.id, "role": c.role, "units": c.units} for c in ds.channels],
        "provenance": ds.provenance,
        "pipeline": ds.pipeline,
    }
    with open(path / "meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
    for cid, arr in ds.data.items():
        arr.astype("<f4").tofile(path / f"{cid}.f32")


def load_dataset(path) -> AnomalyDataset:
    path = _as_dir(path, create=False)
    meta_path = path / "meta.json"
    if not meta_path.exists():
        raise FormatError(f"no meta.json in {path}")
    with open(meta_path, encoding="utf-8") as f:
        try:
            meta = json.load(f)
        except json.JSONDecodeError as e:
            raise CorruptFileError(f"meta.json is not valid JSON: {e}") from e
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(f"unsupported dataset schema_version {meta.get('schema_version')!r}")
    ids = [c["id"] for c in meta.get("channels", [])]
    for required in ALL_IDS:
        if required not in ids:
            raise FormatError(f"dataset is missing required channel {required!r}")
    for cid in ids:
        if cid not in ALL_IDS:
            raise FormatError(f"dataset declares unknown channel {cid!r}")
    level = int(meta["grid_level"])
    n_months = int(meta["n_months"])
    n_vertices = gridmod.vertex_count(level)
    data = {}
    for cid in ALL_IDS:
        fp = path / f"{cid}.f32"
        if not fp.exists():
            raise FormatError(f"missing channel file {fp.name}")
        arr = np.fromfile(fp, dtype="<f4")
        if arr.size != n_months * n_vertices:
            raise CorruptFileError(
                f"channel file {fp.name} has {arr.size} values, "
                f"expected {n_months * n_vertices}")
        data[cid] = arr.reshape(n_months, n_vertices)
    lookup = {c["id"]: c for c in meta["channels"]}
    names = {c.id: c.long_name for c in canonical_channels()}
    channels = [
        FieldChannel(cid, lookup[cid].get("role", ""), lookup[cid].get("units", ""),
                     names.get(cid, cid))
        for cid in ALL_IDS
    ]
    ds = AnomalyDataset(
        grid_level=level, n_months=n_months,
        start=(int(meta["start_year"]), int(meta["start_month"])),
        channels=channels, data=data,
        provenance=meta["provenance"], pipeline=list(meta.get("pipeline", [])),
    )
    ds.validate()
    return ds


def _as_dir(path, create=True):
    from pathlib import Path

    p = Path(path)
    if create:
        p.mkdir(parents=True, exist_ok=True)
    elif not p.is_dir():
        raise FormatError(f"dataset directory {p} does not exist")
    return p


# ---------------------------------------------------------------------------
# Synthetic data with a planted lagged linear response operator


@dataclass
class SyntheticSpec:
    seed: int = 0
    n_months: int = 480
    grid_level: int = 2
    start: tuple = (1950, 1)
    # per-channel scalars; channels omitted default to 0 (amplitude/trend) etc.
    seasonal_amplitudes: dict = field(default_factory=dict)
    cubic_trend_coeffs: dict = field(default_factory=dict)   # id -> [c0, c1, c2, c3]
    noise_rho: dict = field(default_factory=dict)
    noise_sigma: dict = field(default_factory=dict)
    # planted operator: lag -> {output id -> {input id -> gain}}
    planted_gains: dict = field(default_factory=dict)

    def max_lag(self) -> int:
        return max((int(t) for t in self.planted_gains), default=0)

    def validate(self):
        for cid, rho in self.noise_rho.items():
            if not 0 <= rho < 1:
                raise InvalidArgumentError(f"AR(1) rho for {cid} must be in [0,1), got {rho}")
        for lag, table in self.planted_gains.items():
            for out, row in table.items():
                if out not in OUTPUT_IDS:
                    raise InvalidArgumentError(f"planted gain output {out!r} unknown")
                for inp, g in row.items():
                    if inp not in INPUT_IDS:
                        raise InvalidArgumentError(f"planted gain input {inp!r} unknown")
                    if not np.isfinite(g):
                        raise InvalidArgumentError("planted gains must be finite")
        if self.n_months < self.max_lag() + 24:
            raise InvalidArgumentError(
                f"n_months={self.n_months} too short: need at least max_lag+24="
                f"{self.max_lag() + 24}")

    def to_dict(self):
        return {
            "seed": self.seed, "n_months": self.n_months, "grid_level": self.grid_level,
            "start": list(self.start),
            "seasonal_amplitudes": self.seasonal_amplitudes,
            "cubic_trend_coeffs": self.cubic_trend_coeffs,
            "noise_rho": self.noise_rho, "noise_sigma": self.noise_sigma,
            "planted_gains": {str(k): v for k, v in self.planted_gains.items()},
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            seed=d["seed"], n_months=d["n_months"], grid_level=d["grid_level"],
            start=tuple(d.get("start", (1950, 1))),
            seasonal_amplitudes=d.get("seasonal_amplitudes", {}),
            cubic_trend_coeffs=d.get("cubic_trend_coeffs", {}),
            noise_rho=d.get("noise_rho", {}), noise_sigma=d.get("noise_sigma", {}),
            planted_gains={int(k): v for k, v in d.get("planted_gains", {}).items()},
        )


@dataclass
class SyntheticResult:
    dataset: AnomalyDataset
    spec: SyntheticSpec
    noise: dict            # channel id -> [T, V] AR(1) noise (float64)
    smoothed_noise: dict   # input id -> one-pass neighbor-averaged noise


def _ar1(rng, rho, sigma, shape):
    eps = rng.standard_normal(shape)
    out = np.empty(shape)
    if sigma == 0:
        return np.zeros(shape)
    out[0] = eps[0] * sigma / np.sqrt(max(1.0 - rho * rho, 1e-12))
    for t in range(1, shape[0]):
        out[t] = rho * out[t - 1] + sigma * eps[t]
    return out


def planted_response_pattern(spec: SyntheticSpec, g: gridmod.IcosahedralGrid,
                             lag: int, output_id: str, input_id: str,
                             delta: np.ndarray) -> np.ndarray:
    """Planted-operator response of `output_id` to an input perturbation pattern."""
    gain = spec.planted_gains.get(lag, {}).get(output_id, {}).get(input_id, 0.0)
    return gain * g.smooth_once(np.asarray(delta, dtype=np.float64))


def generate_synthetic(spec: SyntheticSpec, mesh: gridmod.IcosahedralGrid | None = None
                       ) -> SyntheticResult:
    """Seasonal cycle + cubic trend + AR(1) noise inputs; outputs are lagged
    linear responses to spatially smoothed input noise plus their own noise."""
    spec.validate()
    if mesh is None:
        mesh = gridmod.get_grid(spec.grid_level)
    rng = np.random.default_rng(spec.seed)
    T, V = spec.n_months, mesh.n_vertices
    t_idx = np.arange(T)
    start_month0 = spec.start[1] - 1
    cal_month = (start_month0 + t_idx) % 12
    year_idx = (start_month0 + t_idx) // 12
    # smooth latitudinal profile so anomalies carry spatial structure
    profile = 1.0 + 0.3 * np.cos(2.0 * np.radians(mesh.lat))

    noise = {}
    smoothed = {}
    data = {}
    for cid in ALL_IDS:
        rho = spec.noise_rho.get(cid, 0.0)
        sigma = spec.noise_sigma.get(cid, 0.0)
        noise[cid] = _ar1(rng, rho, sigma, (T, V))

    for cid in INPUT_IDS:
        smoothed[cid] = mesh.smooth_once(noise[cid])

    def deterministic(cid):
        amp = spec.seasonal_amplitudes.get(cid, 0.0)
        seasonal = amp * np.sin(2.0 * np.pi * cal_month / 12.0)
        coeffs = spec.cubic_trend_coeffs.get(cid, (0.0, 0.0, 0.0, 0.0))
        trend = np.polynomial.polynomial.polyval(year_idx.astype(float), coeffs)
        return (seasonal + trend)[:, None] * profile[None, :]

    for cid in INPUT_IDS:
        data[cid] = deterministic(cid) + noise[cid]

    for out in OUTPUT_IDS:
        resp = np.zeros((T, V))
        for lag, table in spec.planted_gains.items():
            row = table.get(out, {})
            for inp, gain in row.items():
                if gain == 0.0:
                    continue
                shifted = np.zeros((T, V))
                if lag == 0:
                    shifted = smoothed[inp]
                else:
                    shifted[lag:] = smoothed[inp][:-lag]
                resp += gain * shifted
        data[out] = deterministic(out) + resp + noise[out]

    ds = AnomalyDataset(
        grid_level=spec.grid_level, n_months=T, start=spec.start,
        channels=canonical_channels(),
        data={cid: arr.astype(np.float32) for cid, arr in data.items()},
        provenance="raw",
    )
    ds.validate()
    return SyntheticResult(dataset=ds, spec=spec, noise=noise, smoothed_noise=smoothed)


def default_synthetic_spec(**overrides) -> SyntheticSpec:
    """A spec with nontrivial structure in every channel and a tas response
    to shortwave TOA cloud forcing at lag 2."""
    amps = {cid: a for cid, a in zip(ALL_IDS, (8, 5, 6, 4, 3, 3, 120, 0.8, 4.0))}
    trends = {
        "sw_cre_toa": [0.0, 0.05, 0.0, 0.002],
        "tas": [0.0, 0.02, 0.001, 0.0005],
        "psl": [0.0, 0.4, 0.0, 0.0],
    }
    rho = {cid: 0.5 for cid in ALL_IDS}
    sigma = {cid: s for cid, s in zip(ALL_IDS, (4, 2.5, 3, 2, 1.5, 1.5, 60, 0.5, 0.6))}
    gains = {2: {"tas": {"sw_cre_toa": -0.4}, "pr": {"lw_cre_toa": 0.15}}}
    spec = SyntheticSpec(
        seasonal_amplitudes=amps, cubic_trend_coeffs=trends,
        noise_rho=rho, noise_sigma=sigma, planted_gains=gains,
    )
    return replace(spec, **overrides)
