"""Evaluation report: delimited metrics plus rendered figures."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def write_metrics_csv(path, rows, header):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def plot_validation_mse(lags, mses, path):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar([str(l) for l in lags], mses, color="#3b6ea5")
    ax.set_xlabel("lag (months)")
    ax.set_ylabel("validation MSE (standardized)")
    ax.set_title("Per-lag validation error")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_vertex_field(mesh, values, path, title, cmap="RdBu_r", center_zero=True):
    values = np.asarray(values, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(6.4, 3.4))
    if center_zero and values.size:
        v = max(np.abs(values).max(), 1e-12)
        norm_kw = {"vmin": -v, "vmax": v}
    else:
        norm_kw = {}
    sc = ax.scatter(mesh.lon, mesh.lat, c=values, s=6, cmap=cmap, **norm_kw)
    ax.set_xlim(-180, 180)
    ax.set_ylim(-90, 90)
    ax.set_xlabel("longitude")
    ax.set_ylabel("latitude")
    ax.set_title(title)
    fig.colorbar(sc, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_pattern_comparison(mesh, recovered, planted, corr, out_dir: Path, tag: str):
    plot_vertex_field(mesh, recovered, out_dir / f"response_recovered_{tag}.png",
                      f"Emulator unit response ({tag})")
    plot_vertex_field(mesh, planted, out_dir / f"response_planted_{tag}.png",
                      f"Planted unit response ({tag})")
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.scatter(planted, recovered, s=8, alpha=0.6)
    ax.set_xlabel("planted response")
    ax.set_ylabel("recovered response")
    ax.set_title(f"Pattern correlation r = {corr:.3f}")
    fig.tight_layout()
    fig.savefig(out_dir / f"response_scatter_{tag}.png", dpi=150)
    plt.close(fig)


def pattern_correlation(a, b, weights=None):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if weights is None:
        weights = np.ones_like(a)
    w = weights / weights.sum()
    am = a - w @ a
    bm = b - w @ b
    denom = np.sqrt((w @ am**2) * (w @ bm**2))
    if denom == 0:
        return 0.0
    return float((w @ (am * bm)) / denom)
