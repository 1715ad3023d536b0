"""Distribution-shift guard: PCA projection + kernel density scoring.

One reference is fitted per input channel. A field is projected onto the
top-k principal axes of the training fields and scored under a Gaussian
product-kernel KDE with Scott's-rule bandwidths; the percentile is the
fraction of training samples with lower log-density (Hazen plotting
positions, linearly interpolated).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import (
    DegenerateReferenceError,
    FormatError,
    InvalidArgumentError,
    ShapeError,
)

_REF_MAGIC = b"SHFT"
_REF_VERSION = 1
DEFAULT_OOD_PERCENTILE = 0.01


@dataclass
class ShiftReference:
    channel_id: str
    mean: np.ndarray             # [n_vertices]
    axes: np.ndarray             # [k, n_vertices], orthonormal rows
    explained_variance: np.ndarray  # fractions, non-increasing
    projections: np.ndarray      # [n_train, k]
    bandwidths: np.ndarray       # [k], > 0
    logdens_table: np.ndarray    # sorted training log-densities
    ood_percentile: float = DEFAULT_OOD_PERCENTILE

    @property
    def k(self) -> int:
        return self.axes.shape[0]


@dataclass(frozen=True)
class ShiftScore:
    coords: np.ndarray
    log_density: float
    percentile: float
    ood: bool


def _kde_logpdf(points, bandwidths, query):
    """Gaussian product-kernel log density of `query` [k] under samples [n, k]."""
    z = (query[None, :] - points) / bandwidths[None, :]
    log_kernels = -0.5 * np.sum(z * z, axis=1)
    log_norm = np.log(points.shape[0]) + np.sum(np.log(bandwidths * np.sqrt(2 * np.pi)))
    return float(logsumexp(log_kernels) - log_norm)


def fit_reference(fields: np.ndarray, channel_id: str, k: int = 2,
                  ood_percentile: float = DEFAULT_OOD_PERCENTILE) -> ShiftReference:
    """Fit PCA axes and the KDE percentile table from training fields [n, V]."""
    fields = np.asarray(fields, dtype=np.float64)
    if fields.ndim != 2:
        raise ShapeError("training fields must be [n_train, n_vertices]")
    n = fields.shape[0]
    if n <= k:
        raise InvalidArgumentError(f"need more than k={k} training samples, got {n}")
    if not np.all(np.isfinite(fields)):
        raise InvalidArgumentError("training fields contain non-finite values")
    mean = fields.mean(axis=0)
    centered = fields - mean
    # SVD of the centered data; right singular vectors are the principal axes
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    total_var = float(np.sum(s**2))
    if total_var <= 1e-24:
        raise DegenerateReferenceError(f"channel {channel_id}: training data has no variance")
    axes = vt[:k]
    explained = (s[:k] ** 2) / total_var
    proj = centered @ axes.T
    scott = n ** (-1.0 / (k + 4))
    stds = proj.std(axis=0, ddof=1)
    if np.any(stds <= 1e-24):
        raise DegenerateReferenceError(
            f"channel {channel_id}: zero variance along a principal axis")
    bandwidths = scott * stds
    logdens = np.array([_kde_logpdf(proj, bandwidths, p) for p in proj])
    return ShiftReference(
        channel_id=channel_id, mean=mean, axes=axes,
        explained_variance=explained, projections=proj,
        bandwidths=bandwidths, logdens_table=np.sort(logdens),
        ood_percentile=ood_percentile,
    )


def percentile_of(ref: ShiftReference, log_density: float) -> float:
    """Fraction of training samples with lower log-density, interpolated on
    Hazen plotting positions; clipped to [0, 1]."""
    table = ref.logdens_table
    n = table.size
    pos = (np.arange(n) + 0.5) / n
    return float(np.clip(np.interp(log_density, table, pos, left=0.0, right=1.0), 0.0, 1.0))


def score(ref: ShiftReference, field: np.ndarray) -> ShiftScore:
    field = np.asarray(field, dtype=np.float64)
    if field.shape != ref.mean.shape:
        raise ShapeError(f"field length {field.shape} != reference {ref.mean.shape}")
    if not np.all(np.isfinite(field)):
        raise InvalidArgumentError("field contains non-finite values")
    coords = ref.axes @ (field - ref.mean)
    log_density = _kde_logpdf(ref.projections, ref.bandwidths, coords)
    pct = percentile_of(ref, log_density)
    return ShiftScore(coords=coords, log_density=log_density,
                      percentile=pct, ood=pct < ref.ood_percentile)


def density_grid(ref: ShiftReference, n_cells: int = 40, pad: float = 3.0):
    """Log-density samples on a regular grid in PCA space (for UI contours)."""
    lo = ref.projections.min(axis=0) - pad * ref.bandwidths
    hi = ref.projections.max(axis=0) + pad * ref.bandwidths
    axes_pts = [np.linspace(lo[d], hi[d], n_cells) for d in range(ref.k)]
    mesh = np.meshgrid(*axes_pts, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    vals = np.array([_kde_logpdf(ref.projections, ref.bandwidths, p) for p in pts])
    return axes_pts, vals.reshape([n_cells] * ref.k)


# ---------------------------------------------------------------------------
# Serialization


def save_reference(ref: ShiftReference, path):
    cid = ref.channel_id.encode("utf-8")
    with open(path, "wb") as f:
        f.write(_REF_MAGIC)
        f.write(struct.pack("<IH", _REF_VERSION, len(cid)))
        f.write(cid)
        f.write(struct.pack("<IIId", ref.k, ref.projections.shape[0],
                            ref.mean.size, ref.ood_percentile))
        for arr in (ref.mean, ref.axes, ref.explained_variance,
                    ref.projections, ref.bandwidths, ref.logdens_table):
            np.asarray(arr).astype("<f8").tofile(f)


def load_reference(path) -> ShiftReference:
    with open(path, "rb") as f:
        if f.read(4) != _REF_MAGIC:
            raise FormatError("bad shift-reference magic")
        version, cid_len = struct.unpack("<IH", f.read(6))
        if version != _REF_VERSION:
            raise FormatError(f"unsupported shift-reference version {version}")
        channel_id = f.read(cid_len).decode("utf-8")
        k, n_train, n_v, ood_pct = struct.unpack("<IIId", f.read(20))

        def take(n, shape):
            arr = np.fromfile(f, dtype="<f8", count=n)
            if arr.size != n:
                raise FormatError("truncated shift-reference file")
            return arr.reshape(shape)

        mean = take(n_v, (n_v,))
        axes = take(k * n_v, (k, n_v))
        explained = take(k, (k,))
        proj = take(n_train * k, (n_train, k))
        bandwidths = take(k, (k,))
        table = take(n_train, (n_train,))
    return ShiftReference(channel_id=channel_id, mean=mean, axes=axes,
                          explained_variance=explained, projections=proj,
                          bandwidths=bandwidths, logdens_table=table,
                          ood_percentile=ood_pct)
