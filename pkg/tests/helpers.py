"""Shared test fixtures: seeded channel suites and reference algorithms."""

import numpy as np

from dtchan.raychan import ArrayConfig, MultipathSet, OfdmConfig, PathComponent, assemble_csi

ARRAY = ArrayConfig()
OFDM = OfdmConfig()

SUITE_SEED = 2026


def random_paths(rng, max_paths=8):
    n = int(rng.integers(1, max_paths + 1))
    gains = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
    gains *= 10.0 ** (-0.5 * np.arange(n) / n)
    delays = rng.uniform(0.0, 120e-9, n)
    aods = rng.uniform(-1.3, 1.3, n)
    return MultipathSet(
        tuple(
            PathComponent(complex(g), float(t), float(a))
            for g, t, a in zip(gains, delays, aods)
        )
    )


def make_path_suite(n_samples, seed=SUITE_SEED):
    """Seeded multipath CSI suite used by the reconstruction criteria."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 99)))
    return [assemble_csi(random_paths(rng), ARRAY, OFDM) for _ in range(n_samples)]


def csi_oracle(paths: MultipathSet, array=ARRAY, ofdm=OFDM) -> np.ndarray:
    """Entry-by-entry direct summation of the channel model (no vectorization)."""
    import cmath
    import math

    h = np.zeros((array.n_t, ofdm.n_k), dtype=complex)
    for k in range(1, ofdm.n_k + 1):
        lam = 299_792_458.0 / (array.carrier_hz + (k - 1) * ofdm.delta_f)
        for n in range(array.n_t):
            total = 0j
            for p in paths.paths:
                steer = cmath.exp(-1j * 2 * math.pi * array.spacing / lam * n * math.sin(p.aod))
                total += p.gain * cmath.exp(-1j * 2 * math.pi * k * ofdm.delta_f * p.delay) * steer
            h[n, k - 1] = total
    return h


def reference_dbscan(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """O(n^2) textbook DBSCAN with nearest-core border assignment."""
    n = len(points)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            dist[i, j] = float(np.sqrt(((points[i] - points[j]) ** 2).sum()))
    core = (dist <= eps).sum(axis=1) >= min_pts
    labels = np.full(n, -1, dtype=int)
    cluster = 0
    for s in range(n):
        if not core[s] or labels[s] != -1:
            continue
        labels[s] = cluster
        stack = [s]
        while stack:
            p = stack.pop()
            for q in range(n):
                if core[q] and labels[q] == -1 and dist[p, q] <= eps:
                    labels[q] = cluster
                    stack.append(q)
        cluster += 1
    for b in range(n):
        if core[b]:
            continue
        best = None
        for c in range(n):
            if core[c] and dist[b, c] <= eps:
                if best is None or dist[b, c] < dist[b, best]:
                    best = c
        if best is not None:
            labels[b] = labels[best]
    # canonical renumbering by first appearance
    remap = {}
    out = np.full(n, -1, dtype=int)
    for i in range(n):
        if labels[i] == -1:
            continue
        if labels[i] not in remap:
            remap[labels[i]] = len(remap)
        out[i] = remap[labels[i]]
    return out
