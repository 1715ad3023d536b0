"""Command-line driver for the offline pipeline and server lifecycle.

Exit codes: 0 success, 1 runtime failure, 2 missing input, 3 validation
failure. Progress goes to stderr; machine-readable results (one JSON object)
go to stdout. Every stage writes a manifest.json recording inputs,
parameters, seed, and content hashes.
"""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import dataset as dsmod
from . import grid as gridmod
from . import pipeline as pipemod
from . import report as repmod
from . import shift as shiftmod
from . import tipping as tipmod
from . import training as trainmod
from .errors import FormatError, InvalidArgumentError, WorkbenchError

MANIFEST_SCHEMA_VERSION = 1


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, params: dict, inputs: dict,
                    seed=None, extra=None):
    outputs = {}
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            outputs[str(p.relative_to(out_dir))] = _sha256(p)
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "command": command,
        "params": params,
        "seed": seed,
        "inputs": inputs,
        "outputs": outputs,
    }
    if extra:
        manifest.update(extra)
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return manifest


def _emit(obj):
    click.echo(json.dumps(obj, sort_keys=True))


def _progress(msg):
    click.echo(msg, err=True)


def _require_dir(path: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise _MissingInput(f"input directory {p} does not exist")
    return p


class _MissingInput(Exception):
    pass


@click.group()
def main():
    """Cloud-to-climate response emulation workbench."""


def _run(fn):
    try:
        fn()
    except _MissingInput as e:
        _emit({"error": "missing-input", "message": str(e)})
        sys.exit(2)
    except (InvalidArgumentError, FormatError) as e:
        _emit({"error": e.code, "message": str(e)})
        sys.exit(3)
    except WorkbenchError as e:
        _emit({"error": e.code, "message": str(e)})
        sys.exit(1)


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--months", type=int, default=480, show_default=True)
@click.option("--level", type=int, default=2, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--spec-file", type=click.Path(exists=True), default=None,
              help="JSON SyntheticSpec overriding the default structure.")
@click.option("--save-planted/--no-save-planted", default=True, show_default=True,
              help="Also save planted noise components for oracle checks.")
def synth(seed, months, level, out_dir, spec_file, save_planted):
    """Generate a synthetic raw dataset with a planted response operator."""

    def body():
        if spec_file:
            with open(spec_file, encoding="utf-8") as f:
                spec = dsmod.SyntheticSpec.from_dict(json.load(f))
            spec.seed, spec.n_months, spec.grid_level = seed, months, level
        else:
            spec = dsmod.default_synthetic_spec(seed=seed, n_months=months,
                                                grid_level=level)
        _progress(f"generating {months} months at level {level} (seed {seed})")
        result = dsmod.generate_synthetic(spec)
        out = Path(out_dir)
        dsmod.save_dataset(result.dataset, out)
        with open(out / "synthetic_spec.json", "w", encoding="utf-8") as f:
            json.dump(spec.to_dict(), f, indent=2)
        if save_planted:
            planted = out / "planted"
            planted.mkdir(exist_ok=True)
            for cid, arr in result.noise.items():
                arr.astype("<f4").tofile(planted / f"noise_{cid}.f32")
        _write_manifest(out, "synth", {"months": months, "level": level},
                        inputs={}, seed=seed)
        _emit({"ok": True, "out": str(out), "n_months": months, "level": level})

    _run(body)


@main.command()
@click.option("--in", "in_dir", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--window-years", type=int, default=pipemod.DEFAULT_WINDOW_YEARS,
              show_default=True)
@click.option("--degree", type=int, default=pipemod.DEFAULT_DETREND_DEGREE,
              show_default=True)
def preprocess(in_dir, out_dir, window_years, degree):
    """Convert a raw dataset into internal-variability anomalies."""

    def body():
        src = _require_dir(in_dir)
        ds = dsmod.load_dataset(src)
        cfg = pipemod.PipelineConfig(rolling_window_years=window_years,
                                     detrend_degree=degree)
        _progress(f"preprocessing {ds.n_months} months "
                  f"(window {window_years}y, degree {degree})")
        an = pipemod.compute_anomalies(ds, cfg)
        out = Path(out_dir)
        dsmod.save_dataset(an, out)
        scale = max(float(np.abs(ds.data[c]).max()) for c in dsmod.ALL_IDS) or 1.0
        max_anom = max(float(np.abs(an.data[c]).max()) for c in dsmod.ALL_IDS)
        metrics = {"max_abs_anomaly": max_anom, "input_scale": scale,
                   "max_abs_anomaly_over_scale": max_anom / scale}
        _write_manifest(out, "preprocess",
                        {"window_years": window_years, "degree": degree},
                        inputs={str(src): _sha256(src / "meta.json")},
                        extra={"metrics": metrics})
        _emit({"ok": True, "out": str(out), "metrics": metrics})

    _run(body)


@main.command()
@click.option("--in", "in_dir", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--lags", default="1,2,3", show_default=True,
              help="Comma-separated monthly lags.")
@click.option("--epochs", type=int, default=15, show_default=True)
@click.option("--lr", type=float, default=2e-4, show_default=True)
@click.option("--lr-decay", type=float, default=1e-6, show_default=True)
@click.option("--batch-size", type=int, default=16, show_default=True)
@click.option("--hidden", default="1024,1024,1024,1024", show_default=True,
              help="Comma-separated hidden layer widths.")
@click.option("--lambda-precip", type=float, default=1.0, show_default=True)
@click.option("--lambda-moisture", type=float, default=1.0, show_default=True)
@click.option("--lambda-mass", type=float, default=1.0, show_default=True)
@click.option("--lambda-energy", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def train(in_dir, out_dir, lags, epochs, lr, lr_decay, batch_size, hidden,
          lambda_precip, lambda_moisture, lambda_mass, lambda_energy, seed):
    """Train a suite of time-lagged emulators on an anomaly dataset."""

    def body():
        src = _require_dir(in_dir)
        ds = dsmod.load_dataset(src)
        if ds.provenance != "anomaly":
            raise InvalidArgumentError("train expects an anomaly dataset; run preprocess first")
        lag_list = [int(x) for x in lags.split(",") if x.strip() != ""]
        cfg = trainmod.TrainConfig(
            epochs=epochs, initial_lr=lr, lr_decay_per_epoch=lr_decay,
            batch_size=batch_size,
            hidden_sizes=tuple(int(x) for x in hidden.split(",")),
            lambda_precip=lambda_precip, lambda_moisture=lambda_moisture,
            lambda_mass=lambda_mass, lambda_energy=lambda_energy, seed=seed)
        _progress(f"training lags {lag_list} for {epochs} epochs")
        suite = trainmod.train_lag_suite(ds, lag_list, cfg)
        out = Path(out_dir)
        trainmod.save_suite(suite, out)
        val = {str(l): suite.models[l].train_stats["validation"]["mse"]
               for l in suite.lags}
        _write_manifest(out, "train",
                        {"lags": lag_list, "epochs": epochs, "lr": lr,
                         "hidden": hidden, "batch_size": batch_size},
                        inputs={str(src): _sha256(src / "meta.json")},
                        seed=seed, extra={"validation_mse": val})
        _emit({"ok": True, "out": str(out), "validation_mse": val})

    _run(body)


@main.command("shift-fit")
@click.option("--in", "in_dir", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--k", type=int, default=2, show_default=True)
@click.option("--ood-percentile", type=float, default=shiftmod.DEFAULT_OOD_PERCENTILE,
              show_default=True)
def shift_fit(in_dir, out_dir, k, ood_percentile):
    """Fit per-channel distribution-shift references on anomaly inputs."""

    def body():
        src = _require_dir(in_dir)
        ds = dsmod.load_dataset(src)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for cid in dsmod.INPUT_IDS:
            _progress(f"fitting reference for {cid}")
            ref = shiftmod.fit_reference(ds.data[cid].astype(np.float64), cid,
                                         k=k, ood_percentile=ood_percentile)
            shiftmod.save_reference(ref, out / f"{cid}.shft")
        _write_manifest(out, "shift-fit",
                        {"k": k, "ood_percentile": ood_percentile},
                        inputs={str(src): _sha256(src / "meta.json")})
        _emit({"ok": True, "out": str(out), "channels": dsmod.INPUT_IDS})

    _run(body)


@main.command()
@click.option("--suite", "suite_dir", required=True, type=click.Path())
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(),
              help="Anomaly dataset used for validation metrics.")
@click.option("--raw", "raw_dir", default=None, type=click.Path(),
              help="Matching raw synthetic dataset dir (for planted-operator checks).")
@click.option("--out", "out_dir", required=True, type=click.Path())
def evaluate(suite_dir, dataset_dir, raw_dir, out_dir):
    """Report per-lag validation error and planted-response recovery;
    renders figures alongside the CSV metrics."""

    def body():
        suite = trainmod.load_suite(_require_dir(suite_dir))
        ds = dsmod.load_dataset(_require_dir(dataset_dir))
        if suite.grid_level != ds.grid_level:
            raise InvalidArgumentError(
                f"suite level {suite.grid_level} != dataset level {ds.grid_level}")
        mesh = gridmod.get_grid(ds.grid_level)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cfg = trainmod.TrainConfig(epochs=1, hidden_sizes=(8,))
        rows = []
        metrics = {"per_lag": {}}
        for lag in suite.lags:
            model = suite.models[lag]
            X, Y = trainmod.make_pairs(ds, lag)
            n_val = max(1, int(round(X.shape[0] * 0.2)))
            comp = trainmod.evaluate_loss(model, X[-n_val:], Y[-n_val:],
                                          np.zeros(mesh.n_vertices),
                                          mesh.area_weights, cfg)
            metrics["per_lag"][str(lag)] = {"validation_mse": comp["mse"]}
            rows.append([lag, comp["mse"]])
        repmod.write_metrics_csv(out / "metrics.csv", rows,
                                 ["lag", "validation_mse"])
        repmod.plot_validation_mse([r[0] for r in rows], [r[1] for r in rows],
                                   out / "validation_mse.png")

        spec_path = Path(dataset_dir) / "synthetic_spec.json"
        if raw_dir:
            cand = Path(raw_dir) / "synthetic_spec.json"
            if cand.exists():
                spec_path = cand
        if spec_path.exists():
            with open(spec_path, encoding="utf-8") as f:
                spec = dsmod.SyntheticSpec.from_dict(json.load(f))
            recovery = _planted_recovery(suite, spec, ds, mesh, out)
            metrics["planted_recovery"] = recovery
        with open(out / "metrics.json", "w", encoding="utf-8") as f:
            json.dump(metrics, f, indent=2, sort_keys=True)
        _write_manifest(out, "evaluate", {},
                        inputs={str(Path(suite_dir)): _sha256(Path(suite_dir) / "suite.json"),
                                str(Path(dataset_dir)): _sha256(Path(dataset_dir) / "meta.json")})
        _emit({"ok": True, "out": str(out), "metrics": metrics})

    _run(body)


def _planted_recovery(suite, spec, ds, mesh, out_dir):
    """Pattern correlation of each model's unit-perturbation response against
    the planted smoothed response, per (lag, output, input) with a gain."""
    results = {}
    # perturbation: a localized cap so the smoothed planted pattern is nontrivial
    center = mesh.unit_xyz[mesh.n_vertices // 3]
    cap = (mesh.unit_xyz @ center) > np.cos(np.radians(25.0))
    for lag, table in spec.planted_gains.items():
        if lag not in suite.models:
            continue
        model = suite.models[lag]
        base = ds.inputs_at(ds.n_months // 2)
        for out_id, row in table.items():
            for in_id, gain in row.items():
                if gain == 0.0:
                    continue
                delta = cap.astype(float) * 2.0 * float(ds.data[in_id].std())
                pert = base.copy()
                pert[dsmod.INPUT_IDS.index(in_id)] += delta
                from .mlp import mlp_forward
                resp = (mlp_forward(model, pert) - mlp_forward(model, base))[
                    dsmod.OUTPUT_IDS.index(out_id)]
                planted = dsmod.planted_response_pattern(spec, mesh, lag, out_id,
                                                         in_id, delta)
                corr = repmod.pattern_correlation(resp, planted, mesh.area_weights)
                tag = f"lag{lag}_{in_id}_to_{out_id}"
                repmod.plot_pattern_comparison(mesh, resp, planted, corr,
                                               out_dir, tag)
                results[tag] = {"pattern_correlation": corr, "gain": gain}
    return results


@main.command()
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(),
              help="Anomaly dataset directory.")
@click.option("--raw", "raw_dir", default=None, type=click.Path(),
              help="Optional matching raw dataset for stage=raw queries.")
@click.option("--suite", "suite_dir", default=None, type=click.Path())
@click.option("--refs", "refs_dir", default=None, type=click.Path())
@click.option("--sites", "sites_file", default=None, type=click.Path())
@click.option("--records", "records_file", default="records.jsonl",
              type=click.Path(), show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(dataset_dir, raw_dir, suite_dir, refs_dir, sites_file, records_file,
          host, port):
    """Serve the HTTP API over the given artifacts."""

    def body():
        state = build_session_state(dataset_dir, raw_dir, suite_dir, refs_dir,
                                    sites_file, records_file)
        from .service import create_app

        app = create_app(state)
        _progress(f"serving on http://{host}:{port}")
        import uvicorn

        uvicorn.run(app, host=host, port=port, log_level="warning")

    _run(body)


def build_session_state(dataset_dir, raw_dir=None, suite_dir=None, refs_dir=None,
                        sites_file=None, records_file=None):
    """Load artifacts into a SessionState, refusing mismatched grid levels."""
    from .records import RecordStore
    from .service import SessionState

    ds = dsmod.load_dataset(_require_dir(dataset_dir))
    raw = dsmod.load_dataset(_require_dir(raw_dir)) if raw_dir else None
    if raw is not None and raw.grid_level != ds.grid_level:
        raise InvalidArgumentError(
            f"raw dataset level {raw.grid_level} != anomaly level {ds.grid_level}")
    suite = trainmod.load_suite(_require_dir(suite_dir)) if suite_dir else None
    refs = {}
    if refs_dir:
        for fp in sorted(Path(_require_dir(refs_dir)).glob("*.shft")):
            ref = shiftmod.load_reference(fp)
            refs[ref.channel_id] = ref
    sites = tipmod.load_sites(sites_file) if sites_file else tipmod.default_sites()
    records = RecordStore(records_file) if records_file else None
    return SessionState(dataset=ds, suite=suite, references=refs, sites=sites,
                        records=records, raw_dataset=raw)


if __name__ == "__main__":
    main()
