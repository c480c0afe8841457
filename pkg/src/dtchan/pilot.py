"""Pilot sampling masks and the observation operator H0 = A (*) H.

A mask is a binary antenna x subcarrier grid; observation is the Hadamard
product, optionally with complex white noise on the observed entries.
"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import InvalidDensity, ShapeMismatch
from .raychan import ArrayConfig, OfdmConfig
from .rng import STREAM_NOISE, substream


@dataclass(frozen=True)
class RegularGrid:
    """Pilots on every (ant_stride)-th antenna and (sc_stride)-th subcarrier."""

    ant_stride: int = 8
    sc_stride: int = 4

    def __post_init__(self):
        if self.ant_stride < 1 or self.sc_stride < 1:
            raise InvalidDensity("strides must be >= 1")


@dataclass(frozen=True)
class SeededRandom:
    """Exactly round(density * n_t * n_k) pilots drawn without replacement."""

    density: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.density <= 1.0:
            raise InvalidDensity(f"density {self.density} outside (0, 1]")


@dataclass(frozen=True)
class PilotMask:
    mask: np.ndarray
    pattern: Union[RegularGrid, SeededRandom]

    def __post_init__(self):
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=np.uint8))

    @property
    def density(self) -> float:
        return float(self.mask.sum()) / self.mask.size


@dataclass(frozen=True)
class PilotNoise:
    """Per-entry complex AWGN at the given SNR, applied to observed entries."""

    snr_db: float
    seed: int = 0


def pattern_to_string(pattern) -> str:
    """Flat text form used by the CLI and dataset manifests."""
    if isinstance(pattern, RegularGrid):
        return f"regular:{pattern.ant_stride},{pattern.sc_stride}"
    if isinstance(pattern, SeededRandom):
        return f"random:{pattern.density!r},{pattern.seed}"
    raise TypeError(f"unknown pilot pattern {pattern!r}")


def make_mask(pattern, array: ArrayConfig = ArrayConfig(), ofdm: OfdmConfig = OfdmConfig()) -> PilotMask:
    """Build a pilot mask; deterministic for a given pattern (and seed)."""
    shape = (array.n_t, ofdm.n_k)
    if isinstance(pattern, RegularGrid):
        mask = np.zeros(shape, dtype=np.uint8)
        mask[:: pattern.ant_stride, :: pattern.sc_stride] = 1
    elif isinstance(pattern, SeededRandom):
        count = int(round(pattern.density * shape[0] * shape[1]))
        flat = np.zeros(shape[0] * shape[1], dtype=np.uint8)
        rng = substream(pattern.seed, STREAM_NOISE, 0)
        flat[rng.choice(flat.size, size=count, replace=False)] = 1
        mask = flat.reshape(shape)
    else:
        raise TypeError(f"unknown pilot pattern {pattern!r}")
    return PilotMask(mask, pattern)


def observe(h: np.ndarray, mask: PilotMask, noise: Optional[PilotNoise] = None) -> np.ndarray:
    """Pilot observation H0: mask-0 entries exactly zero, mask-1 entries kept.

    With ``noise``, each observed entry gets circular complex Gaussian noise
    whose power sits snr_db below that entry's own power.
    """
    h = np.asarray(h)
    if h.shape != mask.mask.shape:
        raise ShapeMismatch(f"channel {h.shape} vs mask {mask.mask.shape}")
    h0 = np.where(mask.mask.astype(bool), h, 0.0 + 0.0j)
    if noise is not None:
        rng = substream(noise.seed, STREAM_NOISE, 1)
        sigma = np.abs(h0) * 10.0 ** (-noise.snr_db / 20.0)
        w = (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)) / np.sqrt(2.0)
        h0 = h0 + np.where(mask.mask.astype(bool), sigma * w, 0.0)
    return h0
