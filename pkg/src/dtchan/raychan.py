"""Deterministic geometric channel synthesizer.

Multipath components are built from explicit geometry: a free-space direct
ray, image-method specular reflections off cuboid vertical faces (and
optionally the ground), and scalar penetration attenuation over the buried
length of every leg. Path sets turn into MISO-OFDM CSI matrices column by
column: h(k) = sum_l alpha_l * exp(-j*2*pi*k*df*tau_l) * a_k(phi_l), with
the path phase referenced at the carrier so the per-subcarrier rotation is
carried entirely by the delay term.

Path loss is the Frobenius-norm power of the CSI matrix in dB; pl_map
evaluates it on every grid cell. For reflection order <= 1 the map uses a
batched tracer plus a closed-form pairwise evaluation of ||H||_F^2 (inner
products of steering vectors reduce to Dirichlet kernels), which matches
the per-cell trace/assemble route to float precision at a tiny fraction of
the cost. Everything here is pure; per-cell work can run concurrently.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import IndexOutOfRange, OutOfGrid, UtInsideScatterer, ZeroChannel
from .scene import Scene, Vec3, footprint_mask, occupied_fractions, segment_box_spans, segment_intersections

C_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ArrayConfig:
    """BS uniform linear array along the x axis."""

    n_t: int = 64
    carrier_hz: float = 7.5e9
    spacing: Optional[float] = None  # default: half the carrier wavelength

    def __post_init__(self):
        if self.n_t < 1 or self.carrier_hz <= 0:
            raise ValueError("need n_t >= 1 and a positive carrier")
        if self.spacing is None:
            object.__setattr__(self, "spacing", self.carrier_wavelength / 2.0)
        if self.spacing <= 0:
            raise ValueError("antenna spacing must be positive")

    @property
    def carrier_wavelength(self) -> float:
        return C_LIGHT / self.carrier_hz


@dataclass(frozen=True)
class OfdmConfig:
    n_k: int = 96
    delta_f: float = 600e3

    def __post_init__(self):
        if self.n_k < 1 or self.delta_f <= 0:
            raise ValueError("need n_k >= 1 and positive subcarrier spacing")


def subcarrier_wavelengths(array: ArrayConfig, ofdm: OfdmConfig) -> np.ndarray:
    """Wavelength of subcarriers k = 1..n_k (1-based), shape (n_k,)."""
    k = np.arange(1, ofdm.n_k + 1)
    return C_LIGHT / (array.carrier_hz + (k - 1) * ofdm.delta_f)


@dataclass(frozen=True)
class PathComponent:
    """One multipath component: complex gain, delay, angle of departure."""

    gain: complex
    delay: float
    aod: float

    def __post_init__(self):
        if not (np.isfinite(self.gain.real) and np.isfinite(self.gain.imag)):
            raise ValueError("path gain must be finite")
        if self.delay < 0:
            raise ValueError("path delay must be nonnegative")
        if not -math.pi / 2 <= self.aod <= math.pi / 2:
            raise ValueError("AoD must lie in [-pi/2, pi/2]")


@dataclass(frozen=True)
class MultipathSet:
    paths: tuple = ()
    los_present: bool = False

    def __post_init__(self):
        ordered = tuple(sorted(self.paths, key=lambda p: p.delay))
        object.__setattr__(self, "paths", ordered)

    def __len__(self):
        return len(self.paths)


@dataclass(frozen=True)
class SynthConfig:
    """Knobs of the geometric synthesizer.

    Penetration is a scalar attenuation (dB per meter of buried segment
    length); reflections use one real coefficient, the sign modelling the
    phase inversion at a dense surface.
    """

    reflection_order: int = 1
    refl_coeff: float = -0.7
    penetration_db_per_m: float = 10.0
    ground_reflection: bool = False
    tx_power_dbm: float = 0.0
    rx_power_threshold_dbm: float = -250.0

    def __post_init__(self):
        if not 0 <= self.reflection_order <= 2:
            raise ValueError("reflection order must be 0, 1 or 2")
        if self.penetration_db_per_m < 0:
            raise ValueError("penetration attenuation must be nonnegative")


@dataclass(frozen=True)
class PathLossMap:
    """Path loss in dB per cell; NaN marks cells outside the valid region."""

    values: np.ndarray
    valid_mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        valid = np.asarray(self.valid_mask, dtype=np.uint8)
        if values.shape != valid.shape:
            raise ValueError("values and valid_mask must share a shape")
        values = np.where(valid.astype(bool), values, np.nan)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid_mask", valid)


# ---------------------------------------------------------------------------
# Steering / CSI assembly / path loss
# ---------------------------------------------------------------------------

def steering_vector(phi: float, k: int, array: ArrayConfig, ofdm: OfdmConfig) -> np.ndarray:
    """ULA steering vector for subcarrier k (1-based); element 0 is 1."""
    if not 1 <= k <= ofdm.n_k:
        raise IndexOutOfRange(f"subcarrier {k} outside 1..{ofdm.n_k}")
    lam = C_LIGHT / (array.carrier_hz + (k - 1) * ofdm.delta_f)
    n = np.arange(array.n_t)
    return np.exp(-1j * 2.0 * np.pi * array.spacing / lam * n * math.sin(phi))


def assemble_csi(paths: MultipathSet, array: ArrayConfig, ofdm: OfdmConfig) -> np.ndarray:
    """Space-frequency CSI matrix (n_t, n_k) of a path set; empty set -> zeros."""
    h = np.zeros((array.n_t, ofdm.n_k), dtype=complex)
    if not paths.paths:
        return h
    gains = np.array([p.gain for p in paths.paths])
    delays = np.array([p.delay for p in paths.paths])
    sin_aod = np.sin(np.array([p.aod for p in paths.paths]))
    lam = subcarrier_wavelengths(array, ofdm)          # (n_k,)
    k = np.arange(1, ofdm.n_k + 1)                     # (n_k,)
    n = np.arange(array.n_t)                            # (n_t,)
    # combined exponent: steering + per-subcarrier delay rotation
    exponent = (
        array.spacing * sin_aod[:, None, None] / lam[None, None, :] * n[None, :, None]
        + (k * ofdm.delta_f)[None, None, :] * delays[:, None, None]
    )
    h = (gains[:, None, None] * np.exp(-2j * np.pi * exponent)).sum(axis=0)
    return h


def path_loss_db(h: np.ndarray) -> float:
    """Large-scale path loss: -10*log10(||H||_F^2 / (n_t * n_k))."""
    h = np.asarray(h)
    power = float(np.mean(np.abs(h) ** 2))
    if power == 0.0:
        raise ZeroChannel("path loss undefined for an all-zero channel")
    return -10.0 * math.log10(power)


def fspl_db(distance: float, carrier_hz: float) -> float:
    """Free-space path loss, 20*log10(4*pi*d*f/c)."""
    return 20.0 * math.log10(4.0 * math.pi * distance * carrier_hz / C_LIGHT)


# ---------------------------------------------------------------------------
# Geometric tracing
# ---------------------------------------------------------------------------

def _faces(scene: Scene):
    """Vertical faces as (axis, plane, outward_sign, lo_other, hi_other, height)."""
    out = []
    for c in scene.cuboids:
        out.append((0, c.min_x, -1.0, c.min_y, c.max_y, c.height))
        out.append((0, c.max_x, +1.0, c.min_y, c.max_y, c.height))
        out.append((1, c.min_y, -1.0, c.min_x, c.max_x, c.height))
        out.append((1, c.max_y, +1.0, c.min_x, c.max_x, c.height))
    return out


def _occupied_length(scene: Scene, a: np.ndarray, b: np.ndarray) -> float:
    lo, hi = scene._bounds
    t_enter, t_exit, hit = segment_box_spans(a, b[None, :], lo, hi)
    return float(occupied_fractions(t_enter, t_exit, hit)[0] * np.linalg.norm(b - a))


def _path_from_geometry(scene, cfg, lam_c, bs, first_point, legs, n_reflections):
    """Build one PathComponent from its polyline legs, or None if below threshold."""
    total_len = 0.0
    occupied = 0.0
    for a, b in legs:
        total_len += float(np.linalg.norm(b - a))
        occupied += _occupied_length(scene, a, b)
    signed_coeff = cfg.refl_coeff ** n_reflections
    base = lam_c / (4.0 * math.pi * total_len) * 10.0 ** (-cfg.penetration_db_per_m * occupied / 20.0)
    amp = base * abs(signed_coeff)
    if amp <= 0.0 or cfg.tx_power_dbm + 20.0 * math.log10(amp) < cfg.rx_power_threshold_dbm:
        return None
    gain = base * signed_coeff * np.exp(-2j * np.pi * total_len / lam_c)
    u = (first_point - bs) / np.linalg.norm(first_point - bs)
    aod = math.asin(max(-1.0, min(1.0, u[0])))
    return PathComponent(complex(gain), total_len / C_LIGHT, aod)


def _mirror(p: np.ndarray, axis: int, plane: float) -> np.ndarray:
    out = p.copy()
    out[axis] = 2.0 * plane - p[axis]
    return out


def _plane_crossing(a: np.ndarray, b: np.ndarray, axis: int, plane: float):
    """Point where segment a->b crosses the given axis plane, or None."""
    denom = b[axis] - a[axis]
    if denom == 0.0:
        return None
    t = (plane - a[axis]) / denom
    if not 0.0 < t < 1.0:
        return None
    return a + t * (b - a)


def _on_face(point: np.ndarray, face) -> bool:
    axis, _, _, lo_o, hi_o, height = face
    other = 1 - axis
    return lo_o <= point[other] <= hi_o and 0.0 <= point[2] <= height


def trace_paths(scene: Scene, q_ut: Vec3, cfg: SynthConfig = SynthConfig(), array: ArrayConfig = ArrayConfig()) -> MultipathSet:
    """Trace direct, reflected and penetrating rays from the BS to one UT.

    Paths whose received power falls below the configured threshold are
    dropped. Raises UtInsideScatterer / OutOfGrid for invalid UT positions.
    """
    if not scene.grid.contains_xy(q_ut.x, q_ut.y):
        raise OutOfGrid("UT outside the grid extent")
    for c in scene.cuboids:
        if c.contains(q_ut):
            raise UtInsideScatterer("UT inside a scatterer volume")

    lam_c = array.carrier_wavelength
    bs = scene.bs.as_array()
    ut = q_ut.as_array()
    paths = []
    los = False

    los = segment_intersections(scene, scene.bs, q_ut).is_clear
    direct = _path_from_geometry(scene, cfg, lam_c, bs, ut, [(bs, ut)], 0)
    if direct is not None:
        paths.append(direct)

    if cfg.ground_reflection and scene.bs.z > 0 and q_ut.z > 0:
        img = _mirror(bs, 2, 0.0)
        r = _plane_crossing(img, ut, 2, 0.0)
        if r is not None:
            p = _path_from_geometry(scene, cfg, lam_c, bs, r, [(bs, r), (r, ut)], 1)
            if p is not None:
                paths.append(p)

    faces = _faces(scene) if cfg.reflection_order >= 1 else []
    for face in faces:
        axis, plane, outward, _, _, _ = face
        if (bs[axis] - plane) * outward <= 0 or (ut[axis] - plane) * outward <= 0:
            continue
        img = _mirror(bs, axis, plane)
        r = _plane_crossing(img, ut, axis, plane)
        if r is None or not _on_face(r, face):
            continue
        p = _path_from_geometry(scene, cfg, lam_c, bs, r, [(bs, r), (r, ut)], 1)
        if p is not None:
            paths.append(p)

    if cfg.reflection_order >= 2:
        for fa in faces:
            ax_a, plane_a, out_a, _, _, _ = fa
            if (bs[ax_a] - plane_a) * out_a <= 0:
                continue
            img1 = _mirror(bs, ax_a, plane_a)
            for fb in faces:
                if fb is fa:
                    continue
                ax_b, plane_b, out_b, _, _, _ = fb
                # a second bounce off a coplanar, same-facing wall is impossible
                if ax_a == ax_b and plane_a == plane_b and out_a == out_b:
                    continue
                if (ut[ax_b] - plane_b) * out_b <= 0:
                    continue
                img2 = _mirror(img1, ax_b, plane_b)
                r2 = _plane_crossing(img2, ut, ax_b, plane_b)
                if r2 is None or not _on_face(r2, fb):
                    continue
                if (r2[ax_a] - plane_a) * out_a <= 0:
                    continue
                r1 = _plane_crossing(img1, r2, ax_a, plane_a)
                if r1 is None or not _on_face(r1, fa):
                    continue
                if (r1[ax_b] - plane_b) * out_b <= 0:
                    continue
                p = _path_from_geometry(
                    scene, cfg, lam_c, bs, r1, [(bs, r1), (r1, r2), (r2, ut)], 2
                )
                if p is not None:
                    paths.append(p)

    return MultipathSet(tuple(paths), los_present=los)


# ---------------------------------------------------------------------------
# Path-loss maps
# ---------------------------------------------------------------------------

def _wrap_pi(x: np.ndarray) -> np.ndarray:
    """Wrap angles to (-pi, pi]; exact for multiples of 2*pi."""
    return x - 2.0 * np.pi * np.round(x / (2.0 * np.pi))


def _batched_path_table(scene: Scene, cfg: SynthConfig, array: ArrayConfig, cells: np.ndarray):
    """Trace order <= 1 paths for many cells at once.

    Returns flat arrays (cell_index, gain, delay, sin_aod) covering the
    direct ray, the optional ground bounce and all first-order wall
    reflections, with the same amplitude/threshold rules as trace_paths.
    """
    lam_c = array.carrier_wavelength
    lo, hi = scene._bounds
    bs = scene.bs.as_array()
    m = cells.shape[0]
    threshold_amp = 10.0 ** ((cfg.rx_power_threshold_dbm - cfg.tx_power_dbm) / 20.0)

    idx_parts, gain_parts, delay_parts, sin_parts = [], [], [], []

    def add_paths(keep, lengths, occupied, first_points, n_reflections):
        signed_coeff = cfg.refl_coeff ** n_reflections
        base = lam_c / (4.0 * np.pi * lengths) * 10.0 ** (-cfg.penetration_db_per_m * occupied / 20.0)
        keep = keep & (base * abs(signed_coeff) >= threshold_amp)
        if not keep.any():
            return
        idx = np.flatnonzero(keep)
        g = base[idx] * signed_coeff * np.exp(-2j * np.pi * lengths[idx] / lam_c)
        d = first_points[idx] - bs
        u = d[:, 0] / np.linalg.norm(d, axis=1)
        idx_parts.append(idx)
        gain_parts.append(g)
        delay_parts.append(lengths[idx] / C_LIGHT)
        sin_parts.append(np.clip(u, -1.0, 1.0))

    # direct rays
    lengths = np.linalg.norm(cells - bs, axis=1)
    te, tx, hit = segment_box_spans(bs, cells, lo, hi)
    occ = occupied_fractions(te, tx, hit) * lengths
    add_paths(lengths > 0, lengths, occ, cells, 0)

    # ground bounce
    if cfg.ground_reflection and scene.bs.z > 0:
        img = _mirror(bs, 2, 0.0)
        denom = cells[:, 2] - img[2]  # rx_height + bs.z, positive
        t = np.where(denom > 0, -img[2] / np.where(denom > 0, denom, 1.0), 0.0)
        ok = (t > 0) & (t < 1)
        if ok.any():
            r = img + t[:, None] * (cells - img)
            lengths = np.linalg.norm(cells - img, axis=1)
            te, tx, hit = segment_box_spans(bs, r, lo, hi)
            occ_a = occupied_fractions(te, tx, hit) * np.linalg.norm(r - bs, axis=1)
            te, tx, hit = segment_box_spans(r, cells, lo, hi)
            occ_b = occupied_fractions(te, tx, hit) * np.linalg.norm(cells - r, axis=1)
            add_paths(ok, lengths, occ_a + occ_b, r, 1)

    # first-order wall reflections, one batched pass per face
    if cfg.reflection_order >= 1:
        for face in _faces(scene):
            axis, plane, outward, lo_o, hi_o, height = face
            if (bs[axis] - plane) * outward <= 0:
                continue
            ok = (cells[:, axis] - plane) * outward > 0
            if not ok.any():
                continue
            img = _mirror(bs, axis, plane)
            denom = cells[:, axis] - img[axis]
            nonzero = denom != 0
            t = np.where(nonzero, (plane - img[axis]) / np.where(nonzero, denom, 1.0), -1.0)
            ok &= (t > 0) & (t < 1)
            t = np.where(ok, t, 0.5)  # keep masked rows finite
            r = img + t[:, None] * (cells - img)
            other = 1 - axis
            ok &= (r[:, other] >= lo_o) & (r[:, other] <= hi_o) & (r[:, 2] >= 0) & (r[:, 2] <= height)
            if not ok.any():
                continue
            lengths = np.linalg.norm(cells - img, axis=1)
            r_safe = np.where(ok[:, None], r, bs + 1.0)  # dummy for masked rows
            te, tx, hit = segment_box_spans(bs, r_safe, lo, hi)
            occ_a = occupied_fractions(te, tx, hit) * np.linalg.norm(r_safe - bs, axis=1)
            te, tx, hit = segment_box_spans(r_safe, cells, lo, hi)
            occ_b = occupied_fractions(te, tx, hit) * np.linalg.norm(cells - r_safe, axis=1)
            add_paths(ok, lengths, occ_a + occ_b, r_safe, 1)

    if not idx_parts:
        empty = np.array([])
        return empty.astype(int), empty.astype(complex), empty, empty
    return (
        np.concatenate(idx_parts),
        np.concatenate(gain_parts),
        np.concatenate(delay_parts),
        np.concatenate(sin_parts),
    )


def _pairwise_frobenius(cell_idx, gains, delays, sin_aod, n_cells, array: ArrayConfig, ofdm: OfdmConfig) -> np.ndarray:
    """||H||_F^2 per cell from flat path arrays.

    Uses ||sum_l b_l a(phi_l)||^2 = sum_{i,j} b_i conj(b_j) D(theta_i - theta_j)
    with D the ULA Dirichlet kernel, so no per-cell CSI matrix is formed.
    """
    norms = np.zeros(n_cells)
    if cell_idx.size == 0:
        return norms
    n_t = array.n_t
    lam = subcarrier_wavelengths(array, ofdm)
    k = np.arange(1, ofdm.n_k + 1)

    # diagonal terms: each path contributes n_t*n_k*|alpha|^2
    norms += n_t * ofdm.n_k * np.bincount(cell_idx, weights=np.abs(gains) ** 2, minlength=n_cells)

    order = np.argsort(cell_idx, kind="stable")
    c_sorted = cell_idx[order]
    counts = np.bincount(cell_idx, minlength=n_cells)
    max_count = int(counts.max()) if counts.size else 0

    pair_i, pair_j = [], []
    for delta in range(1, max_count):
        left = np.arange(c_sorted.size - delta)
        same = c_sorted[left] == c_sorted[left + delta]
        if same.any():
            pair_i.append(order[left[same]])
            pair_j.append(order[left[same] + delta])
    if not pair_i:
        return norms
    i = np.concatenate(pair_i)
    j = np.concatenate(pair_j)
    pair_cell = cell_idx[i]

    cross = gains[i] * np.conj(gains[j])
    dsin = sin_aod[i] - sin_aod[j]
    dtau = delays[i] - delays[j]

    step = np.exp(-2j * np.pi * ofdm.delta_f * dtau)   # per-subcarrier rotation
    rot = step.copy()                                   # k = 1 term
    pair_total = np.zeros(i.size)
    half = (n_t - 1) / 2.0
    for kk in range(ofdm.n_k):
        psi = (2.0 * np.pi * array.spacing / lam[kk]) * dsin
        delta_w = _wrap_pi(psi)
        s_half = np.sin(delta_w / 2.0)
        small = np.abs(s_half) < 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            mag = np.sin(n_t * delta_w / 2.0) / s_half
        mag = np.where(small, float(n_t), mag)
        dirichlet = mag * np.exp(-1j * delta_w * half)
        pair_total += np.real(cross * rot * dirichlet)
        if kk + 1 < ofdm.n_k:
            rot *= step
    norms += 2.0 * np.bincount(pair_cell, weights=pair_total, minlength=n_cells)
    # interference can make tiny norms go negative by rounding; clamp
    return np.maximum(norms, 0.0)


def pl_map(
    scene: Scene,
    cfg: SynthConfig = SynthConfig(),
    array: ArrayConfig = ArrayConfig(),
    ofdm: OfdmConfig = OfdmConfig(),
    strategy: str = "auto",
) -> PathLossMap:
    """Path loss at every valid (non-footprint) cell center.

    ``strategy`` is "auto" (batched tracer for reflection order <= 1,
    per-cell otherwise), "batched", or "percell". Cells where every path
    falls below the receive threshold are marked invalid alongside the
    footprint cells.
    """
    grid = scene.grid
    valid = footprint_mask(scene) == 0
    n_cells = grid.n_rows * grid.n_cols
    values = np.full(n_cells, np.nan)

    if strategy == "auto":
        strategy = "batched" if cfg.reflection_order <= 1 else "percell"
    if strategy == "batched" and cfg.reflection_order > 1:
        raise ValueError("batched path-loss map supports reflection order <= 1")

    if strategy == "batched":
        cells = grid.cell_centers()
        cell_idx, gains, delays, sin_aod = _batched_path_table(scene, cfg, array, cells)
        norms = _pairwise_frobenius(cell_idx, gains, delays, sin_aod, n_cells, array, ofdm)
        power = norms / (array.n_t * ofdm.n_k)
        with np.errstate(divide="ignore"):
            values = np.where(power > 0, -10.0 * np.log10(np.where(power > 0, power, 1.0)), np.nan)
    else:
        flat_valid = valid.ravel()
        for idx in np.flatnonzero(flat_valid):
            row, col = divmod(int(idx), grid.n_cols)
            center = grid.cell_center(row, col)
            paths = trace_paths(scene, center, cfg, array)
            if len(paths) == 0:
                continue
            values[idx] = path_loss_db(assemble_csi(paths, array, ofdm))

    values = values.reshape(grid.n_rows, grid.n_cols)
    valid = valid & np.isfinite(values)
    return PathLossMap(values=values, valid_mask=valid.astype(np.uint8))
