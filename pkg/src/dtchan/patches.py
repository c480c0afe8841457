"""Multi-scale patch tokenization geometry.

Pure reshaping: a map is cut into row-major patch tokens at one of two
scales (overlapping 4x4/stride-3 or non-overlapping 8x8), and tokens are
stitched back by averaging every patch value that covers a pixel. Both
scales tile a 64x64 map exactly; other sizes must satisfy the same
divisibility and are rejected rather than padded.
"""

from dataclasses import dataclass

import numpy as np

from .errors import LayoutMismatch


@dataclass(frozen=True)
class PatchLayout:
    """Patch/stride geometry over a square map.

    ``segment_id`` 0 marks the small-scale (overlapping) branch and 1 the
    large-scale branch, mirroring the two-branch encoding the tokens feed.
    """

    patch: int
    stride: int
    dim: int
    segment_id: int = 0

    def __post_init__(self):
        if self.patch < 1 or not 1 <= self.stride <= self.patch:
            raise LayoutMismatch("need 1 <= stride <= patch")
        if self.dim < self.patch:
            raise LayoutMismatch("map smaller than one patch")
        if (self.dim - self.patch) % self.stride != 0:
            raise LayoutMismatch(
                f"({self.dim} - {self.patch}) not divisible by stride {self.stride}"
            )

    @property
    def tokens_per_dim(self) -> int:
        return (self.dim - self.patch) // self.stride + 1

    @property
    def token_count(self) -> int:
        return self.tokens_per_dim ** 2


def small_scale(dim: int = 64) -> PatchLayout:
    """Overlapping 4x4 patches with stride 3 (one-cell overlap)."""
    return PatchLayout(patch=4, stride=3, dim=dim, segment_id=0)


def large_scale(dim: int = 64) -> PatchLayout:
    """Non-overlapping 8x8 patches."""
    return PatchLayout(patch=8, stride=8, dim=dim, segment_id=1)


def patchify(values: np.ndarray, layout: PatchLayout) -> np.ndarray:
    """Cut a (dim, dim) map into row-major tokens of length patch**2."""
    values = np.asarray(values)
    if values.shape != (layout.dim, layout.dim):
        raise LayoutMismatch(f"map shape {values.shape} vs layout dim {layout.dim}")
    n = layout.tokens_per_dim
    p = layout.patch
    s = layout.stride
    tokens = np.empty((n * n, p * p), dtype=values.dtype)
    for i in range(n):
        for j in range(n):
            tokens[i * n + j] = values[i * s : i * s + p, j * s : j * s + p].ravel()
    return tokens


def unpatchify(tokens: np.ndarray, layout: PatchLayout) -> np.ndarray:
    """Stitch tokens back; overlapping pixels take the mean of their covers."""
    tokens = np.asarray(tokens)
    n = layout.tokens_per_dim
    p = layout.patch
    s = layout.stride
    if tokens.shape != (n * n, p * p):
        raise LayoutMismatch(f"token array {tokens.shape} vs layout {(n * n, p * p)}")
    acc = np.zeros((layout.dim, layout.dim))
    cover = np.zeros((layout.dim, layout.dim))
    for i in range(n):
        for j in range(n):
            acc[i * s : i * s + p, j * s : j * s + p] += tokens[i * n + j].reshape(p, p)
            cover[i * s : i * s + p, j * s : j * s + p] += 1.0
    return acc / cover


def coverage_counts(layout: PatchLayout) -> np.ndarray:
    """How many tokens cover each pixel (all >= 1 since stride <= patch)."""
    cover = np.zeros((layout.dim, layout.dim))
    s = layout.stride
    p = layout.patch
    for i in range(layout.tokens_per_dim):
        for j in range(layout.tokens_per_dim):
            cover[i * s : i * s + p, j * s : j * s + p] += 1.0
    return cover


def tokens_to_csv(tokens: np.ndarray) -> str:
    """Debug dump: one token per row, values comma separated."""
    tokens = np.asarray(tokens)
    return "\n".join(",".join(repr(float(v)) for v in row) for row in tokens) + "\n"
