"""Physics-constrained training of the lagged emulators.

The loss is standardized MSE plus weighted soft-constraint penalties for
non-negative total precipitation and near-zero area-weighted global means of
the predicted sea-level-pressure and precipitation anomalies, with an
optional energy term tying global-mean temperature to global-mean net TOA
radiation. The optimizer is adaptive-moment gradient descent with an
exponentially decayed learning rate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import grid as gridmod
from .dataset import INPUT_IDS, OUTPUT_IDS, AnomalyDataset
from .errors import (
    DivergedError,
    FormatError,
    InvalidArgumentError,
    NotFoundError,
    ShapeError,
)
from .mlp import (
    MlpModel,
    _backward_batch,
    _forward_batch,
    init_model,
    load_model,
    save_model,
)

_PSL, _PR, _TAS = 0, 1, 2
_NET_TOA_INPUTS = [INPUT_IDS.index("sw_cre_toa"), INPUT_IDS.index("lw_cre_toa"),
                   INPUT_IDS.index("net_clearsky_toa")]

SUITE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    initial_lr: float = 2e-4
    lr_decay_per_epoch: float = 1e-6
    batch_size: int = 16
    hidden_sizes: tuple = (1024, 1024, 1024, 1024)
    lambda_precip: float = 1.0
    lambda_moisture: float = 1.0
    lambda_mass: float = 1.0
    lambda_energy: float = 0.0
    c_energy_coeff: float = 0.0   # K per W m-2; 0 disables the coupling
    val_fraction: float = 0.2
    seed: int = 0
    activation: str = "gelu"
    use_layer_norm: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidArgumentError("epochs must be >= 1")
        if self.initial_lr <= 0:
            raise InvalidArgumentError("initial_lr must be > 0")
        for name in ("lambda_precip", "lambda_moisture", "lambda_mass", "lambda_energy"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be >= 0")


def physics_loss(pred, target, x, pr_clim, area_weights, cfg: TrainConfig,
                 out_std=None) -> dict:
    """Loss components for one sample (physical units, [3/6, n_vertices]).

    mse is computed in standardized units when out_std is given, else raw.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(area_weights, dtype=np.float64)
    pr_clim = np.asarray(pr_clim, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 2 or pred.shape[0] != 3:
        raise ShapeError(f"pred/target must be [3, n_vertices], got {pred.shape}/{target.shape}")
    if x.shape != (6, pred.shape[1]) or w.shape != (pred.shape[1],):
        raise ShapeError("input/weights shapes inconsistent with prediction")
    err = pred - target
    if out_std is not None:
        err = err / np.asarray(out_std, dtype=np.float64)[:, None]
    mse = float(np.mean(err**2))
    total_pr = pr_clim + pred[_PR]
    c_precip = float(np.mean(np.maximum(-total_pr, 0.0) ** 2))
    c_mass = float((w @ pred[_PSL]) ** 2)
    c_moisture = float((w @ pred[_PR]) ** 2)
    net_toa = x[_NET_TOA_INPUTS].sum(axis=0)
    c_energy = float((w @ pred[_TAS] - cfg.c_energy_coeff * (w @ net_toa)) ** 2)
    total = (mse + cfg.lambda_precip * c_precip + cfg.lambda_moisture * c_moisture
             + cfg.lambda_mass * c_mass + cfg.lambda_energy * c_energy)
    return {"total": total, "mse": mse, "c_precip": c_precip,
            "c_moisture": c_moisture, "c_mass": c_mass, "c_energy": c_energy}


def _loss_and_grad_batch(model, xs, zs_target, x_phys, pr_clim, w, cfg):
    """Batched loss and gradient w.r.t. the standardized network output.

    xs: standardized flat inputs [B, n_in]; zs_target: standardized flat
    targets [B, n_out]; x_phys: physical inputs [B, 6, V]. Returns
    (components dict, z, dz)."""
    B = xs.shape[0]
    n_v = model.n_vertices
    z, caches = _forward_batch(model, xs, keep_cache=True)
    err = z - zs_target
    mse = float(np.mean(err**2))
    dz_mse = 2.0 * err / err.size

    pred_std = z.reshape(B, 3, n_v)
    pred = pred_std * model.out_std[None, :, None] + model.out_mean[None, :, None]
    d_pred = np.zeros_like(pred)

    total_pr = pr_clim[None, :] + pred[:, _PR]
    neg = np.maximum(-total_pr, 0.0)
    c_precip = float(np.mean(neg**2))
    d_pred[:, _PR] += cfg.lambda_precip * (-2.0 * neg) / (B * n_v)

    m_psl = pred[:, _PSL] @ w
    c_mass = float(np.mean(m_psl**2))
    d_pred[:, _PSL] += cfg.lambda_mass * (2.0 * m_psl[:, None] * w[None, :]) / B

    m_pr = pred[:, _PR] @ w
    c_moisture = float(np.mean(m_pr**2))
    d_pred[:, _PR] += cfg.lambda_moisture * (2.0 * m_pr[:, None] * w[None, :]) / B

    net_toa = x_phys[:, _NET_TOA_INPUTS, :].sum(axis=1)
    resid = pred[:, _TAS] @ w - cfg.c_energy_coeff * (net_toa @ w)
    c_energy = float(np.mean(resid**2))
    d_pred[:, _TAS] += cfg.lambda_energy * (2.0 * resid[:, None] * w[None, :]) / B

    dz = dz_mse + (d_pred * model.out_std[None, :, None]).reshape(B, -1)
    total = (mse + cfg.lambda_precip * c_precip + cfg.lambda_moisture * c_moisture
             + cfg.lambda_mass * c_mass + cfg.lambda_energy * c_energy)
    comp = {"total": total, "mse": mse, "c_precip": c_precip,
            "c_moisture": c_moisture, "c_mass": c_mass, "c_energy": c_energy}
    return comp, caches, dz


def _channel_stats(arr_3d):
    """Per-channel mean/std over time and vertices; std floored to avoid zeros."""
    mean = arr_3d.mean(axis=(0, 2))
    std = arr_3d.std(axis=(0, 2))
    std = np.where(std > 1e-12, std, 1.0)
    return mean, std


def make_pairs(ds: AnomalyDataset, lag: int):
    """Supervised pairs input(t) -> output(t + lag) as [N, 6, V] and [N, 3, V]."""
    T = ds.n_months
    if lag < 0 or T - lag < 2:
        raise InvalidArgumentError(f"lag {lag} leaves no training pairs in {T} months")
    X = np.stack([ds.data[c][: T - lag] for c in INPUT_IDS], axis=1).astype(np.float64)
    Y = np.stack([ds.data[c][lag:] for c in OUTPUT_IDS], axis=1).astype(np.float64)
    return X, Y


def train(ds: AnomalyDataset, lag: int, cfg: TrainConfig,
          mesh: gridmod.IcosahedralGrid | None = None,
          pr_clim: np.ndarray | None = None) -> MlpModel:
    """Train one lagged emulator. Deterministic for a fixed seed."""
    if mesh is None:
        mesh = gridmod.get_grid(ds.grid_level)
    X, Y = make_pairs(ds, lag)
    n = X.shape[0]
    if n < cfg.batch_size:
        raise InvalidArgumentError(
            f"dataset leaves {n} pairs at lag {lag}; need at least batch_size={cfg.batch_size}")
    n_val = max(1, int(round(n * cfg.val_fraction)))
    n_train = n - n_val
    if n_train < 1:
        raise InvalidArgumentError("no training samples left after validation split")
    Xtr, Ytr, Xval, Yval = X[:n_train], Y[:n_train], X[n_train:], Y[n_train:]
    w = mesh.area_weights
    if pr_clim is None:
        pr_clim = np.zeros(mesh.n_vertices)

    in_stats = _channel_stats(Xtr)
    out_stats = _channel_stats(Ytr)
    model = init_model(lag, ds.grid_level, cfg.hidden_sizes, seed=cfg.seed,
                       activation=cfg.activation, use_layer_norm=cfg.use_layer_norm,
                       in_stats=in_stats, out_stats=out_stats)

    def standardized(A, mean, std):
        return ((A - mean[None, :, None]) / std[None, :, None]).reshape(A.shape[0], -1)

    xs_all = standardized(Xtr, *in_stats)
    zs_all = standardized(Ytr, *out_stats)

    params = model.weights + model.biases + model.ln_gain + model.ln_offset
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    rng = np.random.default_rng(cfg.seed + 1)
    history = []
    for epoch in range(cfg.epochs):
        lr = cfg.initial_lr * np.exp(-cfg.lr_decay_per_epoch * epoch)
        order = rng.permutation(n_train)
        for lo in range(0, n_train, cfg.batch_size):
            sel = order[lo: lo + cfg.batch_size]
            comp, caches, dz = _loss_and_grad_batch(
                model, xs_all[sel], zs_all[sel], Xtr[sel], pr_clim, w, cfg)
            if not np.isfinite(comp["total"]):
                raise DivergedError(f"non-finite loss at epoch {epoch}", epoch=epoch)
            dW, db, dg, do = _backward_batch(model, caches, dz)[:4]
            grads = dW + db + dg + do
            step += 1
            bc1 = 1.0 - beta1**step
            bc2 = 1.0 - beta2**step
            for p, g, a, v in zip(params, grads, m1, m2):
                a *= beta1
                a += (1.0 - beta1) * g
                v *= beta2
                v += (1.0 - beta2) * g * g
                p -= lr * (a / bc1) / (np.sqrt(v / bc2) + eps)
        history.append(comp["total"])

    # quantize through float32 so serialization round-trips bit-exactly
    for lst in (model.weights, model.biases, model.ln_gain, model.ln_offset):
        for i in range(len(lst)):
            lst[i] = lst[i].astype(np.float32).astype(np.float64)
    model.in_mean = model.in_mean.astype(np.float32).astype(np.float64)
    model.in_std = model.in_std.astype(np.float32).astype(np.float64)
    model.out_mean = model.out_mean.astype(np.float32).astype(np.float64)
    model.out_std = model.out_std.astype(np.float32).astype(np.float64)

    val = evaluate_loss(model, Xval, Yval, pr_clim, w, cfg)
    model.train_stats = {"final_train": comp, "validation": val,
                         "epoch_loss": history, "n_train": n_train, "n_val": n_val}
    return model


def evaluate_loss(model: MlpModel, X, Y, pr_clim, w, cfg: TrainConfig) -> dict:
    """Mean loss components of a model over a sample set (no gradient)."""
    xs = ((X - model.in_mean[None, :, None]) / model.in_std[None, :, None]).reshape(X.shape[0], -1)
    zs = ((Y - model.out_mean[None, :, None]) / model.out_std[None, :, None]).reshape(Y.shape[0], -1)
    comp, _, _ = _loss_and_grad_batch(model, xs, zs, X, pr_clim, w, cfg)
    return comp


@dataclass
class LagSuite:
    models: dict  # lag -> MlpModel, keys strictly increasing
    grid_level: int

    def __post_init__(self):
        lags = list(self.models)
        if lags != sorted(set(lags)):
            raise InvalidArgumentError("suite lags must be strictly increasing")
        for lag, m in self.models.items():
            if m.grid_level != self.grid_level:
                raise ShapeError(
                    f"model at lag {lag} is at grid level {m.grid_level}, "
                    f"suite is at {self.grid_level}")

    @property
    def lags(self):
        return list(self.models)

    def model(self, lag: int) -> MlpModel:
        if lag not in self.models:
            raise NotFoundError(f"no model for lag {lag}; available {self.lags}")
        return self.models[lag]


def train_lag_suite(ds: AnomalyDataset, lags, cfg: TrainConfig,
                    mesh: gridmod.IcosahedralGrid | None = None) -> LagSuite:
    lags = list(lags)
    if len(lags) != len(set(lags)):
        raise InvalidArgumentError(f"duplicate lags in {lags}")
    if any(l < 0 for l in lags):
        raise InvalidArgumentError("lags must be >= 0")
    models = {}
    for lag in sorted(lags):
        models[lag] = train(ds, lag, cfg, mesh=mesh)
    return LagSuite(models=models, grid_level=ds.grid_level)


def save_suite(suite: LagSuite, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {"schema_version": SUITE_SCHEMA_VERSION, "grid_level": suite.grid_level,
                "lags": {}}
    for lag, model in suite.models.items():
        fname = f"lag_{lag:03d}.mlpm"
        save_model(model, path / fname)
        entry = {"file": fname}
        if model.train_stats:
            entry["validation_mse"] = model.train_stats["validation"]["mse"]
        manifest["lags"][str(lag)] = entry
    with open(path / "suite.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)


def load_suite(path) -> LagSuite:
    path = Path(path)
    mf = path / "suite.json"
    if not mf.exists():
        raise FormatError(f"no suite.json in {path}")
    with open(mf, encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("schema_version") != SUITE_SCHEMA_VERSION:
        raise FormatError("unsupported suite schema_version")
    models = {}
    for lag_s, entry in sorted(manifest["lags"].items(), key=lambda kv: int(kv[0])):
        model = load_model(path / entry["file"])
        if "validation_mse" in entry:
            model.train_stats = {"validation": {"mse": entry["validation_mse"]}}
        models[int(lag_s)] = model
    return LagSuite(models=models, grid_level=manifest["grid_level"])
