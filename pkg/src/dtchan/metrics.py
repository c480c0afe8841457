"""Evaluation metrics, training-style losses and empirical CDFs.

Path-loss RMSE runs over the shared valid (non-scattering) region only.
CSI metrics: NMSE is the Frobenius error power normalized by the truth
power, averaged over samples; SGCS averages the squared generalized cosine
similarity per subcarrier column, which cancels magnitudes and scores
phase/structure alignment. The hybrid path-loss loss combines elementwise
Charbonnier spatial error with a scalar frequency-domain magnitude term.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyInput, EmptyRegion, ShapeMismatch, ZeroChannel, ZeroColumn
from .raychan import PathLossMap

# exact-match NMSE is reported as this sentinel instead of -inf dB
NMSE_FLOOR_DB = -300.0


@dataclass(frozen=True)
class MetricReport:
    """Aggregate of one metric over a sample set."""

    name: str
    unit: str
    per_sample: np.ndarray
    mean: float
    std: float
    count: int

    @staticmethod
    def from_values(name: str, values, unit: str) -> "MetricReport":
        arr = np.asarray(values, dtype=float)
        if arr.size == 0:
            raise EmptyInput(f"no samples for metric {name}")
        return MetricReport(name, unit, arr, float(arr.mean()), float(arr.std()), arr.size)


@dataclass(frozen=True)
class LossConfig:
    epsilon: float = 0.001
    freq_weight: float = 0.1

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def _masked_values(m) -> tuple:
    """(values, valid bool grid) from a PathLossMap or plain array."""
    if isinstance(m, PathLossMap):
        return m.values, m.valid_mask.astype(bool)
    arr = np.asarray(m, dtype=float)
    return arr, np.ones(arr.shape, dtype=bool)


def rmse_pl(pred, truth) -> float:
    """RMSE in dB over the shared valid region of two path-loss maps."""
    pv, pm = _masked_values(pred)
    tv, tm = _masked_values(truth)
    if pv.shape != tv.shape:
        raise ShapeMismatch(f"map shapes {pv.shape} vs {tv.shape}")
    if not np.array_equal(pm, tm):
        raise ShapeMismatch("path-loss maps must share a valid mask")
    if not pm.any():
        raise EmptyRegion("no valid cells to compare")
    diff = pv[pm] - tv[pm]
    return float(np.sqrt(np.mean(diff ** 2)))


def nmse(pred: Sequence[np.ndarray], truth: Sequence[np.ndarray]) -> tuple:
    """Mean normalized MSE over samples; returns (linear, dB)."""
    pred = list(pred)
    truth = list(truth)
    if not pred or len(pred) != len(truth):
        raise ShapeMismatch("need matching nonempty sample lists")
    ratios = []
    for p, t in zip(pred, truth):
        p = np.asarray(p)
        t = np.asarray(t)
        if p.shape != t.shape:
            raise ShapeMismatch(f"sample shapes {p.shape} vs {t.shape}")
        denom = float(np.sum(np.abs(t) ** 2))
        if denom == 0.0:
            raise ZeroChannel("NMSE undefined for a zero-norm truth sample")
        ratios.append(float(np.sum(np.abs(p - t) ** 2)) / denom)
    linear = float(np.mean(ratios))
    db = NMSE_FLOOR_DB if linear <= 10.0 ** (NMSE_FLOOR_DB / 10.0) else 10.0 * math.log10(linear)
    return linear, db


def sgcs(pred: Sequence[np.ndarray], truth: Sequence[np.ndarray]) -> float:
    """Mean squared generalized cosine similarity over samples and subcarriers.

    Zero prediction columns score 0; zero truth columns raise ZeroColumn.
    """
    pred = list(pred)
    truth = list(truth)
    if not pred or len(pred) != len(truth):
        raise ShapeMismatch("need matching nonempty sample lists")
    per_sample = []
    for p, t in zip(pred, truth):
        p = np.asarray(p)
        t = np.asarray(t)
        if p.shape != t.shape:
            raise ShapeMismatch(f"sample shapes {p.shape} vs {t.shape}")
        tn = np.sum(np.abs(t) ** 2, axis=0)
        if np.any(tn == 0.0):
            raise ZeroColumn("SGCS undefined for a zero truth column")
        pn = np.sum(np.abs(p) ** 2, axis=0)
        inner = np.abs(np.sum(np.conj(p) * t, axis=0)) ** 2
        cols = np.where(pn > 0.0, inner / np.where(pn > 0.0, pn, 1.0) / tn, 0.0)
        per_sample.append(float(cols.mean()))
    return float(np.mean(per_sample))


def charbonnier(x, epsilon: float = 0.001):
    """Smooth absolute value sqrt(x^2 + eps^2); elementwise on arrays."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return np.sqrt(np.square(x) + epsilon * epsilon)


def pl_hybrid_loss(pred_set: Sequence, truth_set: Sequence, cfg: LossConfig = LossConfig()) -> float:
    """Spatial Charbonnier loss plus weighted frequency-magnitude term.

    Per sample: mean elementwise Charbonnier of the map difference, plus
    freq_weight * Charbonnier of the difference between the Frobenius norms
    of the unitary 2D DFTs. Invalid cells contribute a zero residual.
    """
    pred_set = list(pred_set)
    truth_set = list(truth_set)
    if not pred_set or len(pred_set) != len(truth_set):
        raise ShapeMismatch("need matching nonempty sample lists")
    spatial_terms = []
    freq_terms = []
    for p, t in zip(pred_set, truth_set):
        pv, pm = _masked_values(p)
        tv, tm = _masked_values(t)
        if pv.shape != tv.shape:
            raise ShapeMismatch(f"map shapes {pv.shape} vs {tv.shape}")
        both = pm & tm
        diff = np.where(both, pv - tv, 0.0)
        diff = np.where(np.isfinite(diff), diff, 0.0)
        spatial_terms.append(float(np.mean(charbonnier(diff, cfg.epsilon))))
        fp = np.linalg.norm(np.fft.fft2(np.where(pm, pv, 0.0), norm="ortho"))
        ft = np.linalg.norm(np.fft.fft2(np.where(tm, tv, 0.0), norm="ortho"))
        freq_terms.append(float(charbonnier(fp - ft, cfg.epsilon)))
    return float(np.mean(spatial_terms) + cfg.freq_weight * np.mean(freq_terms))


def csi_mse_loss(pred_set: Sequence[np.ndarray], truth_set: Sequence[np.ndarray]) -> float:
    """Mean over samples of the squared Frobenius CSI error."""
    pred_set = list(pred_set)
    truth_set = list(truth_set)
    if not pred_set or len(pred_set) != len(truth_set):
        raise ShapeMismatch("need matching nonempty sample lists")
    vals = []
    for p, t in zip(pred_set, truth_set):
        p = np.asarray(p)
        t = np.asarray(t)
        if p.shape != t.shape:
            raise ShapeMismatch(f"sample shapes {p.shape} vs {t.shape}")
        vals.append(float(np.sum(np.abs(p - t) ** 2)))
    return float(np.mean(vals))


def cdf(values: Iterable[float]) -> tuple:
    """Right-continuous empirical CDF: (sorted values, fractions to 1.0)."""
    arr = np.sort(np.asarray(list(values), dtype=float))
    if arr.size == 0:
        raise EmptyInput("empirical CDF needs at least one value")
    fractions = np.arange(1, arr.size + 1) / arr.size
    return arr, fractions


def cdf_quantile(values: Iterable[float], q: float) -> float:
    """Smallest value whose empirical CDF reaches q (0 < q <= 1)."""
    arr, fractions = cdf(values)
    if not 0.0 < q <= 1.0:
        raise ValueError("quantile level must be in (0, 1]")
    return float(arr[np.searchsorted(fractions, q, side="left")])
