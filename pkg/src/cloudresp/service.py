"""HTTP JSON API binding the workbench modules for the interactive UI.

Single loaded dataset/suite per server instance. Intervention runs and
record mutations go through a single writer lock; read endpoints see
immutable snapshots.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, Response

from . import grid as gridmod
from .dataset import INPUT_IDS, OUTPUT_IDS, AnomalyDataset
from .errors import (
    EmptySiteError,
    InvalidArgumentError,
    NotFoundError,
    ShapeError,
    StateError,
    WorkbenchError,
)
from .intervention import InterventionScenario, aggregate_response, resolve_lag_set
from .records import RecordStore
from .shift import density_grid, score
from .tipping import assess, default_sites
from .training import LagSuite

# 22 common geographic projection names served to the client (a rendering
# concern; the client decides which it implements).
PROJECTIONS = [
    "equirectangular", "mercator", "orthographic", "mollweide", "robinson",
    "natural_earth", "hammer", "aitoff", "winkel_tripel", "sinusoidal",
    "lambert_conformal_conic", "lambert_azimuthal_equal_area", "albers",
    "stereographic", "gnomonic", "azimuthal_equidistant", "eckert_iv",
    "van_der_grinten", "gall_peters", "miller", "cassini", "bonne",
]

STAGES = ("raw", "anomaly", "perturbed", "before", "after", "diff")


@dataclass
class RunCache:
    run_id: str
    scenario: InterventionScenario
    perturbed_input: np.ndarray   # [6, V]
    before: np.ndarray            # [3, V]
    after: np.ndarray
    diff: np.ndarray


@dataclass
class SessionState:
    dataset: AnomalyDataset
    suite: LagSuite | None = None
    references: dict = field(default_factory=dict)   # channel -> ShiftReference
    sites: list = field(default_factory=list)
    records: RecordStore | None = None
    raw_dataset: AnomalyDataset | None = None
    run: RunCache | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self):
        if self.suite is not None and self.suite.grid_level != self.dataset.grid_level:
            raise ShapeError(
                f"suite grid level {self.suite.grid_level} != dataset level "
                f"{self.dataset.grid_level}")
        if not self.sites:
            self.sites = default_sites()

    @property
    def grid(self):
        return gridmod.get_grid(self.dataset.grid_level)


def _error_response(status: int, code: str, message: str, field_path=None):
    body = {"code": code, "message": message}
    if field_path:
        body["field_path"] = field_path
    return JSONResponse(status_code=status, content=body)


_STATUS = {
    "invalid-argument": 400,
    "shape-mismatch": 400,
    "not-found": 404,
    "stage-not-computed": 409,
    "empty-site": 422,
    "format-error": 400,
    "corrupt-file": 400,
    "degenerate-reference": 400,
}


def _finite_list(arr):
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise WorkbenchError("response contains non-finite values")
    return arr.tolist()


def create_app(state: SessionState) -> FastAPI:
    app = FastAPI(title="cloudresp", docs_url=None, redoc_url=None)

    @app.exception_handler(WorkbenchError)
    async def _handle(request: Request, exc: WorkbenchError):
        return _error_response(_STATUS.get(exc.code, 500), exc.code, str(exc),
                               getattr(exc, "field_path", None))

    @app.get("/api/meta")
    def meta():
        ds = state.dataset
        return {
            "channels": [{"id": c.id, "role": c.role, "units": c.units,
                          "long_name": c.long_name} for c in ds.channels],
            "grid_levels": list(range(ds.grid_level + 1)),
            "native_level": ds.grid_level,
            "n_months": ds.n_months,
            "start": {"year": ds.start[0], "month": ds.start[1]},
            "lags": state.suite.lags if state.suite else [],
            "sites": [s.to_dict() for s in state.sites],
            "projections": PROJECTIONS,
            "named_regions": {
                name: list(box) for name, box in gridmod.DEFAULT_REGIONS.items()},
            "ood_percentile": next(
                (r.ood_percentile for r in state.references.values()), None),
        }

    def _field_values(role, channel, time, stage):
        ds = state.dataset
        if stage in ("raw", "anomaly"):
            src = ds if stage == "anomaly" else state.raw_dataset
            if src is None:
                raise StateError("no raw dataset loaded on this server")
            if channel not in src.data:
                raise NotFoundError(f"unknown channel {channel!r}")
            if not 0 <= time < src.n_months:
                raise InvalidArgumentError(
                    f"time {time} outside 0..{src.n_months - 1}")
            return np.asarray(src.data[channel][time], dtype=np.float64)
        run = state.run
        if run is None:
            raise StateError(f"stage {stage!r} requires a completed intervention run")
        if stage == "perturbed":
            if channel not in INPUT_IDS:
                raise NotFoundError(f"{channel!r} is not an input channel")
            return run.perturbed_input[INPUT_IDS.index(channel)]
        if channel not in OUTPUT_IDS:
            raise NotFoundError(f"{channel!r} is not an output channel")
        i = OUTPUT_IDS.index(channel)
        return getattr(run, stage)[i]

    @app.get("/api/field")
    def get_field(role: str = Query("input"), channel: str = Query(...),
                  time: int = Query(0), level: int | None = Query(None),
                  stage: str = Query("anomaly")):
        if stage not in STAGES:
            raise InvalidArgumentError(f"unknown stage {stage!r}")
        if role not in ("input", "output"):
            raise InvalidArgumentError("role must be input|output")
        values = _field_values(role, channel, time, stage)
        native = state.dataset.grid_level
        target = native if level is None else level
        if not 0 <= target <= native:
            raise InvalidArgumentError(
                f"level must be in 0..{native}, got {target}")
        g = gridmod.get_grid(native)
        out = gridmod.coarsen_to(values, g, target)
        gt = gridmod.get_grid(target)
        return {
            "channel": channel, "stage": stage, "level": target,
            "values": _finite_list(out),
            "lat": _finite_list(gt.lat), "lon": _finite_list(gt.lon),
        }

    @app.post("/api/intervention/run")
    def run_intervention(body: dict):
        if state.suite is None:
            raise StateError("no lag suite loaded")
        try:
            scenario = InterventionScenario.from_dict(body)
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidArgumentError(f"malformed scenario: {e}") from e
        with state.lock:
            mesh = state.grid
            mask = gridmod.region_mask(mesh, scenario.region)
            if not mask.any():
                raise EmptySiteError(
                    f"region selects no vertex at grid level {mesh.level}")
            t = scenario.reference_time
            if not 0 <= t < state.dataset.n_months:
                raise InvalidArgumentError(
                    f"reference_time {t} outside dataset", )
            if scenario.baseline_mode == "zero":
                baseline = np.zeros((6, mesh.n_vertices))
            else:
                baseline = state.dataset.inputs_at(t)
            bundle = aggregate_response(state.suite, scenario, baseline, mesh)
            taper = None
            if scenario.taper_width_km > 0:
                taper = gridmod.taper_weights(mesh, mask, scenario.taper_width_km)
            from .intervention import apply_perturbation
            perturbed = apply_perturbation(baseline, scenario, mask, taper)
            shift_scores = {}
            for cid in scenario.perturbations:
                ref = state.references.get(cid)
                if ref is None:
                    continue
                s = score(ref, perturbed[INPUT_IDS.index(cid)])
                shift_scores[cid] = {
                    "coords": _finite_list(s.coords),
                    "log_density": float(s.log_density),
                    "percentile": float(s.percentile),
                    "ood": bool(s.ood),
                }
            assessments = assess(bundle, state.sites, mesh)
            run_id = uuid.uuid4().hex
            state.run = RunCache(
                run_id=run_id, scenario=scenario, perturbed_input=perturbed,
                before=bundle.before, after=bundle.after, diff=bundle.diff)
        w = mesh.area_weights
        summary = {
            "lag_set": resolve_lag_set(scenario, state.suite),
            "diff_norm": {var: float(np.sqrt(w @ bundle.diff[i] ** 2))
                          for i, var in enumerate(OUTPUT_IDS)},
            "diff_global_mean": {var: float(w @ bundle.diff[i])
                                 for i, var in enumerate(OUTPUT_IDS)},
        }
        return {
            "run_id": run_id,
            "summary": summary,
            "shift_scores": shift_scores,
            "tipping": [a.to_dict() for a in assessments],
        }

    @app.get("/api/shift/density")
    def shift_density(channel: str = Query(...), cells: int = Query(40)):
        ref = state.references.get(channel)
        if ref is None:
            raise NotFoundError(f"no shift reference for channel {channel!r}")
        axes_pts, grid_vals = density_grid(ref, n_cells=min(max(cells, 8), 120))
        return {
            "channel": channel,
            "axes": [_finite_list(a) for a in axes_pts],
            "log_density": _finite_list(grid_vals),
            "training_projections": _finite_list(ref.projections),
            "explained_variance": _finite_list(ref.explained_variance),
        }

    @app.post("/api/records", status_code=201)
    def post_record(body: dict):
        if state.records is None:
            raise StateError("no record store configured")
        scenario = body.get("scenario")
        if not isinstance(scenario, dict):
            e = InvalidArgumentError("scenario object is required")
            e.field_path = "scenario"
            raise e
        InterventionScenario.from_dict(scenario)  # validates
        with state.lock:
            rec = state.records.append_record(
                scenario=scenario,
                ood_flags=body.get("ood_flags", {}),
                tipping_summary=[tuple(t) for t in body.get("tipping_summary", [])],
                notes=body.get("notes", ""),
            )
        return rec.to_dict()

    @app.get("/api/records")
    def get_records():
        if state.records is None:
            raise StateError("no record store configured")
        return {"records": [r.to_dict() for r in state.records.list_records()]}

    @app.delete("/api/records/{record_id}")
    def delete_record(record_id: int):
        if state.records is None:
            raise StateError("no record store configured")
        with state.lock:
            state.records.delete_record(record_id)
        return {"deleted": record_id}

    @app.get("/api/records/export.csv")
    def export_csv():
        if state.records is None:
            raise StateError("no record store configured")
        return Response(content=state.records.export_csv(),
                        media_type="text/csv; charset=utf-8")

    return app
