"""CSI reconstruction from sparse pilots and the physics path-loss baseline.

The reconstructor unrolls a fixed number of proximal gradient iterations:

    Z_k = H_{k-1} - beta_k * (A (*) H_{k-1} - H0)        (gradient step)
    P_k = soft-threshold of Z_k in the angular-delay domain (prox step)
    H_k = Gamma (*) P_k + B                               (FiLM modulation)

The prox is complex magnitude shrinkage under the unitary 2D DFT over the
(antenna, subcarrier) axes, where geometric multipath channels are sparse;
it is the training-free stand-in for a learned proximal operator. FiLM
parameters are rank-1 grids derived from a local environment summary by a
fixed, documented map; a neutral summary leaves iterates untouched. After
the final iteration the observed pilot entries are re-imposed, so output
and observation agree exactly on the mask.

Thresholds in ProxConfig are dimensionless: the observation is normalized
to unit estimated channel norm before iterating (rescaled after), and the
effective threshold also carries the mask density factor by which masking
shrinks coherent spectral peaks. One frozen schedule therefore serves any
signal scale and pilot density.

The path-loss baseline is free-space loss plus a penetration term
(kappa dB per buried meter of the BS-to-cell segment), the interpretable
physics surrogate for a learned map predictor.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .envfeat import height_map, occupied_length_map, penetration_ratio_point
from .errors import ShapeMismatch
from .pilot import PilotMask
from .raychan import C_LIGHT, ArrayConfig, OfdmConfig, PathLossMap
from .scene import Scene, Vec3, footprint_mask


@dataclass(frozen=True)
class ProxConfig:
    """Unrolled proximal gradient settings.

    ``lambda_thr`` values are per-iteration soft thresholds relative to the
    normalized iterate (see module docstring); the defaults were frozen once
    by grid search on a seeded multipath suite at 50% random pilots.
    """

    iterations: int = 3
    beta: tuple = (1.0, 1.0, 1.0)
    lambda_thr: tuple = (0.15, 0.05, 0.015)
    transform: str = "angular_delay_2d_dft"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if len(self.beta) < self.iterations or len(self.lambda_thr) < self.iterations:
            raise ValueError("beta and lambda_thr must cover every iteration")
        if any(b <= 0 or not math.isfinite(b) for b in self.beta):
            raise ValueError("step sizes must be positive and finite")
        if any(l < 0 for l in self.lambda_thr):
            raise ValueError("thresholds must be nonnegative")
        if self.transform != "angular_delay_2d_dft":
            raise ValueError(f"unknown transform {self.transform!r}")


@dataclass(frozen=True)
class FilmParams:
    """Elementwise scale and shift grids; neutral is gamma=1, bias=0."""

    gamma: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        b = np.asarray(self.bias, dtype=float)
        if g.shape != b.shape:
            raise ShapeMismatch("gamma and bias must share a shape")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "bias", b)

    @property
    def is_neutral(self) -> bool:
        return bool(np.all(self.gamma == 1.0) and np.all(self.bias == 0.0))


@dataclass(frozen=True)
class LocalEnvSummary:
    """Deterministic local conditioning features around one UT."""

    pr_at_ut: float
    bs_ut_distance: float
    mean_height_window: float

    def __post_init__(self):
        vals = (self.pr_at_ut, self.bs_ut_distance, self.mean_height_window)
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise ValueError("environment summary must be finite and nonnegative")


@dataclass(frozen=True)
class FilmConfig:
    gamma_gain: float = 0.2
    bias_gain: float = 0.05


@dataclass(frozen=True)
class PlBaselineConfig:
    """kappa: dB of extra loss per meter of scatterer-buried segment."""

    kappa: float = 10.0

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")


# ---------------------------------------------------------------------------
# Iteration pieces
# ---------------------------------------------------------------------------

def grad_step(h_prev: np.ndarray, h0: np.ndarray, mask: PilotMask, beta: float) -> np.ndarray:
    """Data-fidelity step Z = H_prev - beta * (A (*) H_prev - H0).

    Computed as (1 - beta*A) (*) H_prev + beta*H0 so the full-mask, beta=1
    case cancels exactly.
    """
    h_prev = np.asarray(h_prev)
    h0 = np.asarray(h0)
    if h_prev.shape != h0.shape or h_prev.shape != mask.mask.shape:
        raise ShapeMismatch("grad_step operands must share a shape")
    a = mask.mask.astype(float)
    return (1.0 - beta * a) * h_prev + beta * h0


def prox_soft_threshold(z: np.ndarray, lambda_thr: float) -> np.ndarray:
    """Complex soft-thresholding in the unitary 2D DFT (angular-delay) domain."""
    if lambda_thr < 0:
        raise ValueError("threshold must be nonnegative")
    z = np.asarray(z, dtype=complex)
    spec = np.fft.fft2(z, norm="ortho")
    mag = np.abs(spec)
    keep = mag > lambda_thr
    scale = np.where(keep, 1.0 - lambda_thr / np.where(mag > 0, mag, 1.0), 0.0)
    return np.fft.ifft2(spec * scale, norm="ortho")


def outer_film(gamma_ant, gamma_sc, bias_ant, bias_sc) -> FilmParams:
    """Rank-1 FiLM grids from per-antenna and per-subcarrier profiles."""
    return FilmParams(np.outer(gamma_ant, gamma_sc), np.outer(bias_ant, bias_sc))


def derive_film(
    env: LocalEnvSummary,
    cfg: FilmConfig = FilmConfig(),
    array: ArrayConfig = ArrayConfig(),
    ofdm: OfdmConfig = OfdmConfig(),
) -> FilmParams:
    """Fixed conditioning map from a local environment summary to FiLM grids.

    With a = pr_at_ut clamped to [0, 1]:
        gamma_ant[n] = 1 + gamma_gain * a * ramp_n,  ramp spanning [-1/2, 1/2]
        gamma_sc[k]  = 1 + gamma_gain * a * ramp_k
        bias_ant[n]  = bias_gain * a * h * d * cos(pi * ramp_n)
        bias_sc[k]   = cos(pi * ramp_k)
    where h = mean_height / (1 + mean_height) and d = 1 / (1 + distance).
    A clear LoS summary (pr_at_ut = 0) is exactly neutral.
    """
    a = min(max(env.pr_at_ut, 0.0), 1.0)
    h = env.mean_height_window / (1.0 + env.mean_height_window)
    d = 1.0 / (1.0 + env.bs_ut_distance)

    def ramp(m):
        return np.arange(m) / (m - 1) - 0.5 if m > 1 else np.zeros(m)

    r_ant = ramp(array.n_t)
    r_sc = ramp(ofdm.n_k)
    gamma_ant = 1.0 + cfg.gamma_gain * a * r_ant
    gamma_sc = 1.0 + cfg.gamma_gain * a * r_sc
    bias_ant = cfg.bias_gain * a * h * d * np.cos(np.pi * r_ant)
    bias_sc = np.cos(np.pi * r_sc)
    return outer_film(gamma_ant, gamma_sc, bias_ant, bias_sc)


def film_modulate(h: np.ndarray, params: FilmParams) -> np.ndarray:
    """Apply H~ = Gamma (*) H + B; the bias shifts the real part only.

    Exactly neutral parameters return the input unchanged (same object),
    so a disabled modulation is bit-identical to no modulation.
    """
    h = np.asarray(h)
    if h.shape != params.gamma.shape:
        raise ShapeMismatch(f"channel {h.shape} vs film {params.gamma.shape}")
    if params.is_neutral:
        return h
    return params.gamma * h + params.bias


def local_env_summary(scene: Scene, ut: Vec3, window: int = 9) -> LocalEnvSummary:
    """Summarize the environment around a UT for FiLM conditioning."""
    pr = penetration_ratio_point(scene, ut)
    dist = scene.bs.distance_to(ut)
    hm = height_map(scene).values
    row, col = scene.grid.cell_index(ut.x, ut.y)
    half = window // 2
    sl = hm[
        max(0, row - half) : min(hm.shape[0], row + half + 1),
        max(0, col - half) : min(hm.shape[1], col + half + 1),
    ]
    return LocalEnvSummary(pr, dist, float(sl.mean()))


# ---------------------------------------------------------------------------
# Full reconstruction
# ---------------------------------------------------------------------------

def reconstruct_csi(
    h0: np.ndarray,
    mask: PilotMask,
    env: Optional[LocalEnvSummary] = None,
    cfg: ProxConfig = ProxConfig(),
    film_cfg: FilmConfig = FilmConfig(),
) -> np.ndarray:
    """Recover a full CSI matrix from pilot observations.

    Runs ``cfg.iterations`` unrolled proximal gradient steps starting from
    H0, modulating each iterate with FiLM parameters when an environment
    summary is given, then re-imposes the observed entries (data
    consistency). All-zero observations return an all-zero matrix.
    """
    h0 = np.asarray(h0, dtype=complex)
    if h0.shape != mask.mask.shape:
        raise ShapeMismatch(f"observation {h0.shape} vs mask {mask.mask.shape}")

    density = mask.density
    norm0 = float(np.linalg.norm(h0))
    if norm0 == 0.0 or density == 0.0:
        return np.zeros_like(h0)
    scale = norm0 / math.sqrt(density)  # estimated ||H||_F from observed energy
    # Masking shrinks coherent spectral peaks by the density factor, so the
    # effective threshold tracks density as well as signal scale.
    thresh_unit = density

    film = derive_film(env, film_cfg, _array_like(h0), _ofdm_like(h0)) if env is not None else None
    observed = mask.mask.astype(bool)

    h = h0 / scale
    h0n = h0 / scale
    for k in range(cfg.iterations):
        z = grad_step(h, h0n, mask, cfg.beta[k])
        h = prox_soft_threshold(z, cfg.lambda_thr[k] * thresh_unit)
        if film is not None:
            h = film_modulate(h, film)
    h = h * scale
    return np.where(observed, h0, h)


def _array_like(h: np.ndarray) -> ArrayConfig:
    return ArrayConfig(n_t=h.shape[0])


def _ofdm_like(h: np.ndarray) -> OfdmConfig:
    return OfdmConfig(n_k=h.shape[1])


# ---------------------------------------------------------------------------
# Physics path-loss baseline
# ---------------------------------------------------------------------------

def pl_baseline_map(
    scene: Scene,
    cfg: PlBaselineConfig = PlBaselineConfig(),
    array: ArrayConfig = ArrayConfig(),
) -> PathLossMap:
    """FSPL plus kappa * (buried length of the BS -> cell segment), per cell."""
    grid = scene.grid
    cells = grid.cell_centers()
    dist = np.linalg.norm(cells - scene.bs.as_array(), axis=1).reshape(grid.n_rows, grid.n_cols)
    fspl = 20.0 * np.log10(4.0 * np.pi * dist * array.carrier_hz / C_LIGHT)
    values = fspl + cfg.kappa * occupied_length_map(scene)
    valid = footprint_mask(scene) == 0
    return PathLossMap(values=values, valid_mask=valid.astype(np.uint8))
