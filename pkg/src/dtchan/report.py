"""Figure rendering for CLI reports.

Every report artifact is also written as delimited text by the CLI; the
figures here are the human-facing view. Uses the Agg backend and fixed
image metadata so repeated runs produce identical bytes.
"""

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = dict(dpi=110, metadata={"Software": "dtchan"})


def _save(fig, path):
    """Atomic figure write (temp + rename), byte-stable metadata."""
    tmp = str(path) + ".tmp"
    fig.savefig(tmp, format="png", **_SAVE_KW)
    plt.close(fig)
    os.replace(tmp, path)


def save_map_figure(values: np.ndarray, path, title: str, units: str = "", cmap: str = "viridis") -> None:
    """Heatmap of one grid map; NaN cells are left blank."""
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    im = ax.imshow(values, origin="lower", cmap=cmap, interpolation="nearest")
    ax.set_title(title)
    ax.set_xlabel("column")
    ax.set_ylabel("row")
    cbar = fig.colorbar(im, ax=ax)
    if units:
        cbar.set_label(units)
    fig.tight_layout()
    _save(fig, path)


def save_csi_figure(h: np.ndarray, path, title: str) -> None:
    """Magnitude image of a CSI matrix (antenna x subcarrier)."""
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    im = ax.imshow(np.abs(h), origin="lower", aspect="auto", cmap="magma", interpolation="nearest")
    ax.set_title(title)
    ax.set_xlabel("subcarrier")
    ax.set_ylabel("antenna")
    fig.colorbar(im, ax=ax, label="|H|")
    fig.tight_layout()
    _save(fig, path)


def save_cdf_figure(series: dict, path, title: str, xlabel: str) -> None:
    """Empirical CDF curves, one per named value list."""
    from .metrics import cdf

    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    for name, values in series.items():
        xs, fs = cdf(values)
        ax.step(xs, fs, where="post", label=name)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("CDF")
    ax.set_ylim(0.0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def save_profile_figure(stage_ms: dict, path, title: str) -> None:
    """Horizontal bar chart of per-stage latencies."""
    fig, ax = plt.subplots(figsize=(5.6, 3.2))
    names = list(stage_ms)
    vals = [stage_ms[n] for n in names]
    ax.barh(names, vals, color="#3b6ea5")
    for i, v in enumerate(vals):
        ax.text(v, i, f" {v:.2f} ms", va="center")
    ax.set_xlabel("median latency (ms)")
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
