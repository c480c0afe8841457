"""Propagation-guided environment feature maps.

Three co-registered map families over the receiver grid: one-hot BS/UT
location maps, a scatterer height map, and the penetration ratio map that
scores how much of the BS-to-cell segment is buried in scatterers. The
penetration ratio of a point q is the span between the first scatterer
entry q_i and last exit q_o along the BS->q segment, normalized by the
remaining distance |q_i - q|; it is 0 wherever line of sight exists.

The map producers run one batched intersection pass per scene; the
per-point functions are the batch-of-one slice of the same kernel, so map
cells and point queries agree exactly.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateSegment, ShapeMismatch
from .scene import GridSpec, Scene, Vec3, occupied_fractions, segment_box_spans, segment_spans_reduced

KIND_BS_LOCATION = "bs_location"
KIND_UT_LOCATION = "ut_location"
KIND_HEIGHT = "height"
KIND_PENETRATION_RATIO = "penetration_ratio"
KIND_PATH_LOSS = "path_loss"


@dataclass(frozen=True)
class FeatureMap:
    """One named 2D map over the receiver grid."""

    kind: str
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 2:
            raise ShapeMismatch("feature map must be 2D")


@dataclass(frozen=True)
class FeatureStack:
    """Co-registered feature maps sharing one grid."""

    bs_map: FeatureMap
    height_map: FeatureMap
    pr_map: FeatureMap
    ut_map: Optional[FeatureMap] = None

    def __post_init__(self):
        shape = self.bs_map.values.shape
        maps = [self.height_map, self.pr_map] + ([self.ut_map] if self.ut_map else [])
        for m in maps:
            if m.values.shape != shape:
                raise ShapeMismatch("feature maps must share dimensions")


def location_map(q: Vec3, grid: GridSpec) -> FeatureMap:
    """One-hot map with a single 1 at the cell whose center is nearest to q."""
    row, col = grid.cell_index(q.x, q.y)
    values = np.zeros((grid.n_rows, grid.n_cols))
    values[row, col] = 1.0
    return FeatureMap(KIND_UT_LOCATION, values)


def bs_location_map(scene: Scene) -> FeatureMap:
    m = location_map(scene.bs, scene.grid)
    return FeatureMap(KIND_BS_LOCATION, m.values)


def height_map(scene: Scene) -> FeatureMap:
    """Per cell: max height over cuboids whose footprint contains the center."""
    grid = scene.grid
    xs = grid.origin.x + (np.arange(grid.n_cols) + 0.5) * grid.resolution
    ys = grid.origin.y + (np.arange(grid.n_rows) + 0.5) * grid.resolution
    values = np.zeros((grid.n_rows, grid.n_cols))
    for c in scene.cuboids:
        in_x = (xs >= c.min_x) & (xs <= c.max_x)
        in_y = (ys >= c.min_y) & (ys <= c.max_y)
        np.maximum(values, np.where(in_y[:, None] & in_x[None, :], c.height, 0.0), out=values)
    return FeatureMap(KIND_HEIGHT, values)


def _pr_values(scene: Scene, targets: np.ndarray) -> np.ndarray:
    """Penetration ratios of BS -> target segments; shape (M,)."""
    lo, hi = scene._bounds
    t_in, t_out, any_hit = segment_spans_reduced(scene.bs.as_array(), targets, lo, hi)
    with np.errstate(invalid="ignore"):
        # any hit implies t_in < t_exit <= 1, so the denominator is positive
        ratio = (t_out - t_in) / (1.0 - t_in)
    return np.where(any_hit, ratio, 0.0)


def penetration_ratio_point(scene: Scene, q: Vec3) -> float:
    """Penetration ratio of the BS -> q segment (0 when LoS exists)."""
    if q == scene.bs:
        raise DegenerateSegment("query point coincides with the BS")
    return float(_pr_values(scene, q.as_array()[None, :])[0])


def penetration_ratio_map(scene: Scene) -> FeatureMap:
    """Penetration ratio at every cell center (receiver height)."""
    cells = scene.grid.cell_centers()
    bs = scene.bs.as_array()
    if ((cells == bs).all(axis=1)).any():
        raise DegenerateSegment("a cell center coincides with the BS")
    values = _pr_values(scene, cells).reshape(scene.grid.n_rows, scene.grid.n_cols)
    return FeatureMap(KIND_PENETRATION_RATIO, values)


def occupied_length_point(scene: Scene, q: Vec3) -> float:
    """Total length (m) of the BS -> q segment buried in scatterers.

    Unlike the penetration ratio, gaps between scatterers do not count;
    this is the quantity the physics path-loss baseline attenuates by.
    """
    if q == scene.bs:
        raise DegenerateSegment("query point coincides with the BS")
    lo, hi = scene._bounds
    t_enter, t_exit, hit = segment_box_spans(scene.bs.as_array(), q.as_array()[None, :], lo, hi)
    frac = occupied_fractions(t_enter, t_exit, hit)[0]
    return float(frac * scene.bs.distance_to(q))


def occupied_length_map(scene: Scene) -> np.ndarray:
    """Occupied length (m) of the BS -> cell segment for every cell."""
    lo, hi = scene._bounds
    cells = scene.grid.cell_centers()
    bs = scene.bs.as_array()
    t_enter, t_exit, hit = segment_box_spans(bs, cells, lo, hi)
    frac = occupied_fractions(t_enter, t_exit, hit)
    dist = np.linalg.norm(cells - bs, axis=1)
    return (frac * dist).reshape(scene.grid.n_rows, scene.grid.n_cols)


def feature_stack(scene: Scene, ut: Optional[Vec3] = None) -> FeatureStack:
    """All feature maps of a scene, optionally including a UT location map."""
    return FeatureStack(
        bs_map=bs_location_map(scene),
        height_map=height_map(scene),
        pr_map=penetration_ratio_map(scene),
        ut_map=location_map(ut, scene.grid) if ut is not None else None,
    )
