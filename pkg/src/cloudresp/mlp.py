"""Time-lagged MLP emulator: forward, exact reverse-mode backward, file I/O.

The network maps the 6 flattened input anomaly channels to the 3 output
channels at a fixed monthly lag. Hidden layers are affine -> layer norm ->
gelu; inputs and outputs are standardized per channel. Gelu uses the tanh
approximation so independent implementations agree to 1e-6. Layer norm keeps
a variance floor of 1e-5, which defines the normalization of an all-zero
vector as zero.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import grid as gridmod
from .errors import FormatError, InvalidArgumentError, ShapeError

_MODEL_MAGIC = b"MLPM"
_MODEL_VERSION = 1
_LN_EPS = 1e-5
_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


@dataclass
class MlpModel:
    lag_months: int
    grid_level: int
    layer_sizes: list            # [n_in, hidden..., n_out]
    weights: list                # per layer, [n_out, n_in]
    biases: list
    ln_gain: list                # per hidden layer
    ln_offset: list
    in_mean: np.ndarray          # [6] per-channel standardization
    in_std: np.ndarray
    out_mean: np.ndarray         # [3]
    out_std: np.ndarray
    activation: str = "gelu"     # gelu | identity (identity is a test harness)
    use_layer_norm: bool = True
    train_stats: dict = field(default_factory=dict)  # not serialized

    @property
    def n_vertices(self) -> int:
        return gridmod.vertex_count(self.grid_level)

    def validate(self):
        if self.lag_months < 0:
            raise InvalidArgumentError("lag must be >= 0")
        n_layers = len(self.layer_sizes) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ShapeError("weights/biases do not match layer_sizes")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_sizes[i + 1], self.layer_sizes[i]):
                raise ShapeError(f"layer {i} weight shape {w.shape} incompatible "
                                 f"with sizes {self.layer_sizes}")
            if b.shape != (self.layer_sizes[i + 1],):
                raise ShapeError(f"layer {i} bias shape {b.shape} invalid")
        for arrs in (self.weights, self.biases, self.ln_gain, self.ln_offset,
                     [self.in_mean, self.in_std, self.out_mean, self.out_std]):
            for a in arrs:
                if not np.all(np.isfinite(a)):
                    raise InvalidArgumentError("model parameters must be finite")
        if np.any(self.in_std <= 0) or np.any(self.out_std <= 0):
            raise InvalidArgumentError("standardization stds must be > 0")
        if self.activation not in ("gelu", "identity"):
            raise InvalidArgumentError(f"unknown activation {self.activation!r}")


def init_model(lag_months: int, grid_level: int, hidden_sizes, seed: int = 0,
               activation: str = "gelu", use_layer_norm: bool = True,
               in_stats=None, out_stats=None, dtype=np.float64) -> MlpModel:
    """He-style initialization with a seeded generator."""
    n_v = gridmod.vertex_count(grid_level)
    sizes = [6 * n_v] + list(hidden_sizes) + [3 * n_v]
    rng = np.random.default_rng(seed)
    weights, biases, gains, offsets = [], [], [], []
    for i in range(len(sizes) - 1):
        scale = np.sqrt(2.0 / sizes[i])
        weights.append((rng.standard_normal((sizes[i + 1], sizes[i])) * scale).astype(dtype))
        biases.append(np.zeros(sizes[i + 1], dtype=dtype))
        if i < len(sizes) - 2:
            gains.append(np.ones(sizes[i + 1], dtype=dtype))
            offsets.append(np.zeros(sizes[i + 1], dtype=dtype))
    in_mean, in_std = in_stats if in_stats is not None else (np.zeros(6), np.ones(6))
    out_mean, out_std = out_stats if out_stats is not None else (np.zeros(3), np.ones(3))
    return MlpModel(
        lag_months=lag_months, grid_level=grid_level, layer_sizes=sizes,
        weights=weights, biases=biases, ln_gain=gains, ln_offset=offsets,
        in_mean=np.asarray(in_mean, float), in_std=np.asarray(in_std, float),
        out_mean=np.asarray(out_mean, float), out_std=np.asarray(out_std, float),
        activation=activation, use_layer_norm=use_layer_norm,
    )


def gelu(x):
    u = _GELU_C * (x + _GELU_A * x**3)
    return 0.5 * x * (1.0 + np.tanh(u))


def gelu_grad(x):
    u = _GELU_C * (x + _GELU_A * x**3)
    t = np.tanh(u)
    sech2 = 1.0 - t * t
    return 0.5 * (1.0 + t) + 0.5 * x * sech2 * _GELU_C * (1.0 + 3.0 * _GELU_A * x**2)


def _standardize_in(model, x):
    return (x - model.in_mean[:, None]) / model.in_std[:, None]


def _forward_batch(model: MlpModel, xs: np.ndarray, keep_cache: bool = False):
    """xs: standardized, flattened [B, n_in]. Returns (z [B, n_out], caches)."""
    h = xs
    caches = []
    n_hidden = len(model.layer_sizes) - 2
    for i in range(n_hidden):
        a = h @ model.weights[i].T + model.biases[i]
        if model.use_layer_norm:
            mu = a.mean(axis=1, keepdims=True)
            var = a.var(axis=1, keepdims=True)
            s = np.sqrt(var + _LN_EPS)
            n = (a - mu) / s
            y = model.ln_gain[i] * n + model.ln_offset[i]
        else:
            n, s, y = a, None, a
        hn = gelu(y) if model.activation == "gelu" else y
        if keep_cache:
            caches.append({"h_in": h, "a": a, "n": n, "s": s, "y": y})
        h = hn
    z = h @ model.weights[-1].T + model.biases[-1]
    if keep_cache:
        caches.append({"h_in": h})
    return z, caches


def mlp_forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Predict output anomalies [3, n_vertices] from input anomalies [6, n_vertices]."""
    x = np.asarray(x, dtype=np.float64)
    n_v = model.n_vertices
    if x.shape != (6, n_v):
        raise ShapeError(f"input shape {x.shape} != (6, {n_v}) for grid level {model.grid_level}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("input contains non-finite values")
    xs = _standardize_in(model, x).reshape(1, -1)
    z, _ = _forward_batch(model, xs)
    y_std = z.reshape(3, n_v)
    return y_std * model.out_std[:, None] + model.out_mean[:, None]


def _backward_batch(model: MlpModel, caches, dz: np.ndarray):
    """Reverse-mode through _forward_batch. dz: [B, n_out] gradient w.r.t. z.

    Returns (weight grads, bias grads, ln gain grads, ln offset grads,
    gradient w.r.t. the standardized input xs)."""
    n_hidden = len(model.layer_sizes) - 2
    dW = [None] * (n_hidden + 1)
    db = [None] * (n_hidden + 1)
    dg = [None] * n_hidden
    do = [None] * n_hidden
    h_last = caches[-1]["h_in"]
    dW[-1] = dz.T @ h_last
    db[-1] = dz.sum(axis=0)
    dh = dz @ model.weights[-1]
    for i in range(n_hidden - 1, -1, -1):
        c = caches[i]
        dy = dh * (gelu_grad(c["y"]) if model.activation == "gelu" else 1.0)
        if model.use_layer_norm:
            dg[i] = (dy * c["n"]).sum(axis=0)
            do[i] = dy.sum(axis=0)
            dn = dy * model.ln_gain[i]
            m = dn.mean(axis=1, keepdims=True)
            mn = (dn * c["n"]).mean(axis=1, keepdims=True)
            da = (dn - m - c["n"] * mn) / c["s"]
        else:
            dg[i] = np.zeros_like(model.ln_gain[i]) if i < len(model.ln_gain) else None
            do[i] = np.zeros_like(model.ln_offset[i]) if i < len(model.ln_offset) else None
            da = dy
        dW[i] = da.T @ c["h_in"]
        db[i] = da.sum(axis=0)
        dh = da @ model.weights[i]
    return dW, db, dg, do, dh


def mlp_backward(model: MlpModel, x: np.ndarray, grad_output: np.ndarray):
    """Gradients of sum(grad_output * forward(model, x)) w.r.t. parameters and x.

    Returns (grads dict with keys weights/biases/ln_gain/ln_offset, input grad).
    """
    x = np.asarray(x, dtype=np.float64)
    n_v = model.n_vertices
    if x.shape != (6, n_v) or np.asarray(grad_output).shape != (3, n_v):
        raise ShapeError("x must be [6, n_vertices] and grad_output [3, n_vertices]")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(grad_output))):
        raise InvalidArgumentError("non-finite input")
    xs = _standardize_in(model, x).reshape(1, -1)
    _, caches = _forward_batch(model, xs, keep_cache=True)
    dz = (np.asarray(grad_output, dtype=np.float64) * model.out_std[:, None]).reshape(1, -1)
    dW, db, dg, do, dxs = _backward_batch(model, caches, dz)
    dx = dxs.reshape(6, n_v) / model.in_std[:, None]
    return {"weights": dW, "biases": db, "ln_gain": dg, "ln_offset": do}, dx


# ---------------------------------------------------------------------------
# Serialization


def save_model(model: MlpModel, path):
    model.validate()
    with open(path, "wb") as f:
        f.write(_MODEL_MAGIC)
        act = 0 if model.activation == "gelu" else 1
        f.write(struct.pack("<IIIIBB", _MODEL_VERSION, model.lag_months,
                            model.grid_level, len(model.layer_sizes), act,
                            1 if model.use_layer_norm else 0))
        f.write(struct.pack(f"<{len(model.layer_sizes)}I", *model.layer_sizes))
        for i in range(len(model.weights)):
            model.weights[i].astype("<f4").tofile(f)
            model.biases[i].astype("<f4").tofile(f)
        for i in range(len(model.ln_gain)):
            model.ln_gain[i].astype("<f4").tofile(f)
            model.ln_offset[i].astype("<f4").tofile(f)
        for v in (model.in_mean, model.in_std, model.out_mean, model.out_std):
            np.asarray(v).astype("<f4").tofile(f)


def load_model(path) -> MlpModel:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _MODEL_MAGIC:
        raise FormatError(f"bad model magic {blob[:4]!r}")
    off = 4
    version, lag, level, n_sizes, act, ln = struct.unpack_from("<IIIIBB", blob, off)
    off += struct.calcsize("<IIIIBB")
    if version != _MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}")
    sizes = list(struct.unpack_from(f"<{n_sizes}I", blob, off))
    off += 4 * n_sizes

    def take(n):
        nonlocal off
        if off + 4 * n > len(blob):
            raise FormatError("truncated model file")
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off)
        off += 4 * n
        return arr.astype(np.float64)

    weights, biases, gains, offsets = [], [], [], []
    for i in range(n_sizes - 1):
        weights.append(take(sizes[i + 1] * sizes[i]).reshape(sizes[i + 1], sizes[i]))
        biases.append(take(sizes[i + 1]))
    for i in range(n_sizes - 2):
        gains.append(take(sizes[i + 1]))
        offsets.append(take(sizes[i + 1]))
    in_mean, in_std = take(6), take(6)
    out_mean, out_std = take(3), take(3)
    if off != len(blob):
        raise FormatError(f"model file has {len(blob) - off} trailing bytes")
    model = MlpModel(
        lag_months=lag, grid_level=level, layer_sizes=sizes,
        weights=weights, biases=biases, ln_gain=gains, ln_offset=offsets,
        in_mean=in_mean, in_std=in_std, out_mean=out_mean, out_std=out_std,
        activation="gelu" if act == 0 else "identity", use_layer_norm=bool(ln),
    )
    model.validate()
    return model


def check_grid_compat(model: MlpModel, grid_level: int):
    if model.grid_level != grid_level:
        raise ShapeError(
            f"model was trained at grid level {model.grid_level} but the "
            f"dataset is at level {grid_level}")
