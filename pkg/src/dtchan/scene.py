"""Geometric scenario model.

Axis-aligned cuboid scatterers standing on the ground plane (z = 0), a BS
position, and a uniform receiver grid. Everything downstream (channel
synthesis, feature maps, datasets) consumes this module's segment/box
intersection primitives, so they are written once here, in both a scalar
and a batched (many segments x many cuboids) form, and the scalar form is
exactly the batch-of-one slice of the batched kernel.

All types are immutable after construction and all operations are pure;
sharing a Scene across threads is safe.
"""

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateSegment, OutOfGrid, PlacementFailed
from .rng import STREAM_SCENARIO, substream

# Points within this many cell-widths of a boundary snap to the upper cell,
# so the geometric center of an even-sized grid lands on a definite cell.
CELL_SNAP_EPS = 1e-6


@dataclass(frozen=True)
class Vec3:
    """A 3D point/vector in meters."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError("Vec3 components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @staticmethod
    def from_array(a) -> "Vec3":
        return Vec3(float(a[0]), float(a[1]), float(a[2]))

    def distance_to(self, other: "Vec3") -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))


@dataclass(frozen=True)
class Cuboid:
    """Axis-aligned scatterer with its base on the ground plane."""

    min_x: float
    min_y: float
    size_x: float
    size_y: float
    height: float

    def __post_init__(self):
        if self.size_x <= 0 or self.size_y <= 0 or self.height <= 0:
            raise ValueError("cuboid sizes and height must be strictly positive")

    @property
    def max_x(self) -> float:
        return self.min_x + self.size_x

    @property
    def max_y(self) -> float:
        return self.min_y + self.size_y

    def contains_xy(self, x: float, y: float) -> bool:
        """Closed-boundary footprint membership."""
        return self.min_x <= x <= self.max_x and self.min_y <= y <= self.max_y

    def contains(self, p: Vec3) -> bool:
        return self.contains_xy(p.x, p.y) and 0.0 <= p.z <= self.height


@dataclass(frozen=True)
class GridSpec:
    """Uniform receiver grid.

    ``origin`` is the lower-left corner of the covered area; the cell at
    (row i, col j) has its center at
    (origin.x + (j + 0.5) * resolution, origin.y + (i + 0.5) * resolution, rx_height).
    """

    origin: Vec3 = Vec3(0.0, 0.0, 1.0)
    resolution: float = 0.1
    n_rows: int = 124
    n_cols: int = 124
    rx_height: float = 1.0

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be > 0")
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("grid must have at least one cell")

    @property
    def width(self) -> float:
        return self.n_cols * self.resolution

    @property
    def depth(self) -> float:
        return self.n_rows * self.resolution

    def cell_center(self, row: int, col: int) -> Vec3:
        return Vec3(
            self.origin.x + (col + 0.5) * self.resolution,
            self.origin.y + (row + 0.5) * self.resolution,
            self.rx_height,
        )

    @cached_property
    def _cell_centers(self) -> np.ndarray:
        jj, ii = np.meshgrid(np.arange(self.n_cols), np.arange(self.n_rows))
        out = np.empty((self.n_rows * self.n_cols, 3))
        out[:, 0] = self.origin.x + (jj.ravel() + 0.5) * self.resolution
        out[:, 1] = self.origin.y + (ii.ravel() + 0.5) * self.resolution
        out[:, 2] = self.rx_height
        out.setflags(write=False)
        return out

    def cell_centers(self) -> np.ndarray:
        """All cell centers, shape (n_rows * n_cols, 3), row-major (read-only)."""
        return self._cell_centers

    def contains_xy(self, x: float, y: float) -> bool:
        fx = (x - self.origin.x) / self.resolution
        fy = (y - self.origin.y) / self.resolution
        return -CELL_SNAP_EPS <= fx <= self.n_cols + CELL_SNAP_EPS and -CELL_SNAP_EPS <= fy <= self.n_rows + CELL_SNAP_EPS

    def cell_index(self, x: float, y: float) -> tuple:
        """(row, col) of the cell whose center is nearest to (x, y).

        Points exactly on a cell boundary belong to the upper cell, so the
        center of an even grid maps to index n/2.
        """
        if not self.contains_xy(x, y):
            raise OutOfGrid(f"point ({x}, {y}) outside grid extent")
        col = int(math.floor((x - self.origin.x) / self.resolution + CELL_SNAP_EPS))
        row = int(math.floor((y - self.origin.y) / self.resolution + CELL_SNAP_EPS))
        return min(max(row, 0), self.n_rows - 1), min(max(col, 0), self.n_cols - 1)


def _default_bs(grid: GridSpec, height: float = 2.0) -> Vec3:
    """Centered BS, snapped to the nearest cell center.

    The geometric center of an even grid falls on a cell boundary; snapping
    keeps the BS location map one-hot without a tie rule.
    """
    row, col = grid.cell_index(grid.origin.x + grid.width / 2.0, grid.origin.y + grid.depth / 2.0)
    center = grid.cell_center(row, col)
    return Vec3(center.x, center.y, height)


@dataclass(frozen=True)
class Scene:
    """Cuboid scatterers + BS + receiver grid; the single geometric truth."""

    cuboids: tuple = ()
    bs: Optional[Vec3] = None
    grid: GridSpec = GridSpec()

    def __post_init__(self):
        object.__setattr__(self, "cuboids", tuple(self.cuboids))
        if self.bs is None:
            object.__setattr__(self, "bs", _default_bs(self.grid))
        if self.bs.z <= 0:
            raise ValueError("BS height must be positive")
        if not self.grid.contains_xy(self.bs.x, self.bs.y):
            raise ValueError("BS must lie within the grid extent")

    @cached_property
    def _bounds(self) -> tuple:
        """(lo, hi) arrays of shape (n_cuboids, 3) for the batched kernels."""
        n = len(self.cuboids)
        lo = np.zeros((n, 3))
        hi = np.zeros((n, 3))
        for i, c in enumerate(self.cuboids):
            lo[i] = (c.min_x, c.min_y, 0.0)
            hi[i] = (c.max_x, c.max_y, c.height)
        return lo, hi

    def with_cuboids(self, extra: Sequence[Cuboid]) -> "Scene":
        return Scene(self.cuboids + tuple(extra), self.bs, self.grid)


@dataclass(frozen=True)
class SpanInterval:
    t_enter: float
    t_exit: float
    cuboid: int


@dataclass(frozen=True)
class SpanResult:
    """Cuboid crossings of one segment, sorted by entry parameter.

    ``first_entry`` / ``last_exit`` are the intersection points nearest to
    the segment start and end; ``occupied_fraction`` is the length fraction
    of the segment covered by the union of all crossings.
    """

    intervals: tuple = ()
    first_entry: Optional[Vec3] = None
    last_exit: Optional[Vec3] = None
    occupied_fraction: float = 0.0

    @property
    def is_clear(self) -> bool:
        return not self.intervals


# ---------------------------------------------------------------------------
# Slab intersection kernels
# ---------------------------------------------------------------------------

class _SegmentBatch:
    """Shared precomputation for slab sweeps of one segment batch.

    Per-axis data is kept contiguous (and scalar where the start point is
    shared) so the per-box sweep is a handful of flat ufunc passes.
    """

    def __init__(self, p0, p1s):
        p1s = np.atleast_2d(np.asarray(p1s, dtype=float))
        self.m = p1s.shape[0]
        p0 = np.asarray(p0, dtype=float)
        d = p1s - p0
        with np.errstate(divide="ignore"):
            inv = 1.0 / d
        if p0.ndim == 1:
            self.start_cols = [float(p0[0]), float(p0[1]), float(p0[2])]
        else:
            self.start_cols = [np.ascontiguousarray(p0[:, a]) for a in range(3)]
        self.inv_cols = [np.ascontiguousarray(inv[:, a]) for a in range(3)]
        self.par_cols = [np.ascontiguousarray(d[:, a] == 0.0) for a in range(3)]
        self.has_parallel = [bool(par.any()) for par in self.par_cols]

    def box_params(self, lo_c, hi_c):
        """Clamped (t_enter, t_exit) of every segment against one box."""
        te = np.zeros(self.m)
        tx = np.ones(self.m)
        with np.errstate(invalid="ignore"):
            for a in range(3):
                s_a = self.start_cols[a]
                inv_a = self.inv_cols[a]
                u = (lo_c[a] - s_a) * inv_a
                v = (hi_c[a] - s_a) * inv_a
                t1 = np.minimum(u, v)
                t2 = np.maximum(u, v)
                if self.has_parallel[a]:
                    inside = (s_a >= lo_c[a]) & (s_a <= hi_c[a])
                    t1 = np.where(self.par_cols[a], np.where(inside, -np.inf, np.inf), t1)
                    t2 = np.where(self.par_cols[a], np.where(inside, np.inf, -np.inf), t2)
                np.maximum(te, t1, out=te)
                np.minimum(tx, t2, out=tx)
        return te, tx


def segment_box_spans(p0, p1s, lo: np.ndarray, hi: np.ndarray):
    """Clamped slab intersection of segments p0 -> p1s with boxes [lo, hi].

    Parameters
    ----------
    p0   : (3,) shared segment start, or (M, 3) per-segment starts
    p1s  : (M, 3) segment ends
    lo, hi : (N, 3) box corner arrays

    Returns (t_enter, t_exit, hit), each (M, N); t parameters are clamped to
    [0, 1] and ``hit`` is False for misses and zero-measure touches
    (t_enter == t_exit). The scalar path (M = 1) runs the identical dataflow,
    so per-point and per-map results agree bit for bit.
    """
    batch = _SegmentBatch(p0, p1s)
    m = batch.m
    n = lo.shape[0]
    t_enter = np.zeros((m, n))
    t_exit = np.ones((m, n))
    if n == 0:
        return t_enter, t_exit, np.zeros((m, n), dtype=bool)
    for c in range(n):
        t_enter[:, c], t_exit[:, c] = batch.box_params(lo[c], hi[c])
    hit = t_enter < t_exit
    return t_enter, t_exit, hit


def segment_spans_reduced(p0, p1s, lo: np.ndarray, hi: np.ndarray):
    """First entry, last exit and hit flag over all boxes, without the (M, N) table.

    Returns (t_in, t_out, any_hit) of shape (M,); t_in/t_out are +inf/-inf
    where nothing is hit. Box parameters are computed by the same sweep as
    segment_box_spans, so the reduction is exact.
    """
    batch = _SegmentBatch(p0, p1s)
    m = batch.m
    t_in = np.full(m, np.inf)
    t_out = np.full(m, -np.inf)
    any_hit = np.zeros(m, dtype=bool)
    for c in range(lo.shape[0]):
        te, tx = batch.box_params(lo[c], hi[c])
        hit = te < tx
        any_hit |= hit
        np.minimum(t_in, np.where(hit, te, np.inf), out=t_in)
        np.maximum(t_out, np.where(hit, tx, -np.inf), out=t_out)
    return t_in, t_out, any_hit


def occupied_fractions(t_enter: np.ndarray, t_exit: np.ndarray, hit: np.ndarray) -> np.ndarray:
    """Length fraction of each segment covered by the union of its crossings.

    Inputs are the (M, N) arrays from segment_box_spans; returns (M,).
    """
    m, n = hit.shape
    if n == 0:
        return np.zeros(m)
    with np.errstate(invalid="ignore"):
        starts = np.where(hit, t_enter, np.inf)
        ends = np.where(hit, t_exit, np.inf)
        order = np.argsort(starts, axis=1)
        starts = np.take_along_axis(starts, order, axis=1)
        ends = np.take_along_axis(ends, order, axis=1)
        # Sweep the (small) cuboid axis, merging overlapping intervals.
        total = np.zeros(m)
        cur_start = starts[:, 0]
        cur_end = ends[:, 0]
        for c in range(1, n):
            s = starts[:, c]
            e = ends[:, c]
            new = s > cur_end  # disjoint: close the current interval
            closed = cur_end - cur_start
            closed = np.where(np.isfinite(closed), closed, 0.0)
            total += np.where(new, closed, 0.0)
            cur_start = np.where(new, s, cur_start)
            cur_end = np.where(new, e, np.maximum(cur_end, e))
        closed = cur_end - cur_start
        closed = np.where(np.isfinite(closed), closed, 0.0)
        total += closed
    return total


def ray_box_intersections(p0: Vec3, p1: Vec3, box: Cuboid):
    """Intersection of segment p0 -> p1 with one cuboid.

    Returns (t_enter, t_exit) in segment parameter, both in [0, 1], or None
    when the segment misses the box or only touches its boundary.
    """
    if p0 == p1:
        raise DegenerateSegment("segment endpoints coincide")
    lo = np.array([[box.min_x, box.min_y, 0.0]])
    hi = np.array([[box.max_x, box.max_y, box.height]])
    t_enter, t_exit, hit = segment_box_spans(p0.as_array(), p1.as_array()[None, :], lo, hi)
    if not hit[0, 0]:
        return None
    return float(t_enter[0, 0]), float(t_exit[0, 0])


def segment_intersections(scene: Scene, p0: Vec3, p1: Vec3) -> SpanResult:
    """All cuboid crossings of segment p0 -> p1, sorted by entry parameter."""
    if p0 == p1:
        raise DegenerateSegment("segment endpoints coincide")
    lo, hi = scene._bounds
    t_enter, t_exit, hit = segment_box_spans(p0.as_array(), p1.as_array()[None, :], lo, hi)
    idx = np.flatnonzero(hit[0])
    if idx.size == 0:
        return SpanResult()
    order = idx[np.argsort(t_enter[0, idx], kind="stable")]
    intervals = tuple(SpanInterval(float(t_enter[0, i]), float(t_exit[0, i]), int(i)) for i in order)
    a = p0.as_array()
    direction = p1.as_array() - a
    t_in = intervals[0].t_enter
    t_out = max(iv.t_exit for iv in intervals)
    frac = float(occupied_fractions(t_enter[:1], t_exit[:1], hit[:1])[0])
    return SpanResult(
        intervals=intervals,
        first_entry=Vec3.from_array(a + t_in * direction),
        last_exit=Vec3.from_array(a + t_out * direction),
        occupied_fraction=frac,
    )


# ---------------------------------------------------------------------------
# Footprints and scenario generation
# ---------------------------------------------------------------------------

def footprint_mask(scene: Scene) -> np.ndarray:
    """Binary (n_rows, n_cols) grid: 1 where a cell center lies inside any footprint."""
    grid = scene.grid
    xs = scene.grid.origin.x + (np.arange(grid.n_cols) + 0.5) * grid.resolution
    ys = scene.grid.origin.y + (np.arange(grid.n_rows) + 0.5) * grid.resolution
    mask = np.zeros((grid.n_rows, grid.n_cols), dtype=np.uint8)
    for c in scene.cuboids:
        in_x = (xs >= c.min_x) & (xs <= c.max_x)
        in_y = (ys >= c.min_y) & (ys <= c.max_y)
        mask |= (in_y[:, None] & in_x[None, :]).astype(np.uint8)
    return mask


@dataclass(frozen=True)
class ScenarioConfig:
    """Ranges for random scenario generation (uniform draws, inclusive)."""

    count_range: tuple = (3, 8)
    size_range: tuple = (0.5, 3.0)
    height_range: tuple = (0.5, 3.0)
    grid: GridSpec = GridSpec()
    bs_height: float = 2.0
    max_tries: int = 200

    def __post_init__(self):
        if self.count_range[0] > self.count_range[1] or self.count_range[0] < 0:
            raise ValueError("count_range must be a nonempty, nonnegative range")
        if self.size_range[0] > self.size_range[1] or self.size_range[0] <= 0:
            raise ValueError("size_range must be a nonempty positive range")
        if self.height_range[0] > self.height_range[1] or self.height_range[0] <= 0:
            raise ValueError("height_range must be a nonempty positive range")


def generate_scenario(config: ScenarioConfig, seed: int, scenario_index: int = 0) -> Scene:
    """Draw a random scene; deterministic for a fixed (seed, scenario_index).

    Cuboids are placed uniformly inside the grid area, resampling until the
    BS cell center stays uncovered; raises PlacementFailed if a cuboid
    cannot be placed within ``config.max_tries`` draws.
    """
    rng = substream(seed, STREAM_SCENARIO, scenario_index)
    grid = config.grid
    bs = _default_bs(grid, config.bs_height)
    bs_cell = Vec3(bs.x, bs.y, grid.rx_height)

    count = int(rng.integers(config.count_range[0], config.count_range[1] + 1))
    cuboids = []
    for _ in range(count):
        for _ in range(config.max_tries):
            size_x = float(rng.uniform(*config.size_range))
            size_y = float(rng.uniform(*config.size_range))
            height = float(rng.uniform(*config.height_range))
            max_x0 = grid.width - size_x
            max_y0 = grid.depth - size_y
            if max_x0 < 0 or max_y0 < 0:
                continue  # too big for the area; redraw sizes
            min_x = grid.origin.x + float(rng.uniform(0.0, max_x0))
            min_y = grid.origin.y + float(rng.uniform(0.0, max_y0))
            c = Cuboid(min_x, min_y, size_x, size_y, height)
            if not c.contains_xy(bs_cell.x, bs_cell.y):
                cuboids.append(c)
                break
        else:
            raise PlacementFailed(f"could not place cuboid after {config.max_tries} tries")
    return Scene(tuple(cuboids), bs, grid)


# ---------------------------------------------------------------------------
# Quarter-turn rotation (matches the np.rot90 index map used on grids)
# ---------------------------------------------------------------------------

def rotate_scene(scene: Scene, quarter_turns: int) -> Scene:
    """Rotate all geometry so maps of the result equal np.rot90(map, k).

    np.rot90 by one turn sends grid value at (x, y) to the value previously
    at (width - y, x); the matching point transform applied to geometry is
    (x, y) -> (y, width - x) about the grid origin.
    """
    k = quarter_turns % 4
    if k == 0:
        return scene
    grid = scene.grid
    if grid.n_rows != grid.n_cols:
        raise ValueError("quarter-turn rotation requires a square grid")
    w = grid.width
    ox, oy = grid.origin.x, grid.origin.y

    def rot_point(x, y):
        rx, ry = x - ox, y - oy
        for _ in range(k):
            rx, ry = ry, w - rx
        return rx + ox, ry + oy

    cuboids = []
    for c in scene.cuboids:
        x0, y0 = rot_point(c.min_x, c.min_y)
        x1, y1 = rot_point(c.max_x, c.max_y)
        cuboids.append(
            Cuboid(min(x0, x1), min(y0, y1), abs(x1 - x0), abs(y1 - y0), c.height)
        )
    bx, by = rot_point(scene.bs.x, scene.bs.y)
    return Scene(tuple(cuboids), Vec3(bx, by, scene.bs.z), grid)


# ---------------------------------------------------------------------------
# Scene file I/O (UTF-8 JSON; field names are part of the format)
# ---------------------------------------------------------------------------

def scene_to_dict(scene: Scene) -> dict:
    return {
        "bs": [scene.bs.x, scene.bs.y, scene.bs.z],
        "grid": {
            "origin": [scene.grid.origin.x, scene.grid.origin.y, scene.grid.origin.z],
            "resolution": scene.grid.resolution,
            "rows": scene.grid.n_rows,
            "cols": scene.grid.n_cols,
            "rx_height": scene.grid.rx_height,
        },
        "cuboids": [
            {
                "min_x": c.min_x,
                "min_y": c.min_y,
                "size_x": c.size_x,
                "size_y": c.size_y,
                "height": c.height,
            }
            for c in scene.cuboids
        ],
    }


def scene_from_dict(data: dict) -> Scene:
    g = data["grid"]
    grid = GridSpec(
        origin=Vec3(*[float(v) for v in g["origin"]]),
        resolution=float(g["resolution"]),
        n_rows=int(g["rows"]),
        n_cols=int(g["cols"]),
        rx_height=float(g["rx_height"]),
    )
    cuboids = tuple(
        Cuboid(float(c["min_x"]), float(c["min_y"]), float(c["size_x"]), float(c["size_y"]), float(c["height"]))
        for c in data["cuboids"]
    )
    bs = Vec3(*[float(v) for v in data["bs"]])
    return Scene(cuboids, bs, grid)


def save_scene(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scene_to_dict(scene), f, indent=2, sort_keys=True)
        f.write("\n")


def load_scene(path) -> Scene:
    with open(path, "r", encoding="utf-8") as f:
        return scene_from_dict(json.load(f))
