"""Synthetic multimodal sensing of dynamic objects.

Simulates the detect -> coarse-localize -> cluster -> fit pipeline on
cuboid-shaped dynamic objects: a LiDAR-style point cloud sampler over the
visible faces, a coarse center estimate with configurable Gaussian bias
(standing in for image-based detection), DBSCAN clustering of the cloud
around that estimate, and an axis-aligned bounding-cuboid fit whose result
can be injected back into a static scene.

The DBSCAN here deviates from the textbook algorithm in one documented
way: border points attach to their nearest core neighbor instead of to
whichever cluster is expanded first, which makes the partition independent
of point order.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyRoi, NoCluster, OutOfGrid
from .rng import STREAM_SENSING, substream
from .scene import Cuboid, Scene, Vec3


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    seed: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if pts.size and not np.isfinite(pts).all():
            raise ValueError("point cloud coordinates must be finite")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class DbscanParams:
    eps: float = 0.15
    min_pts: int = 5

    def __post_init__(self):
        if self.eps <= 0 or self.min_pts < 1:
            raise ValueError("need eps > 0 and min_pts >= 1")


@dataclass(frozen=True)
class DetectedObject:
    fitted: Cuboid
    center: Vec3
    point_count: int


def _face_grid(rng, count, extent_a, extent_b):
    """Uniform samples over a rectangle, as two coordinate arrays."""
    return rng.uniform(0.0, extent_a, count), rng.uniform(0.0, extent_b, count)


def synth_point_cloud(obj: Cuboid, density: float, noise_sigma: float, seed: int) -> PointCloud:
    """Sample the four side faces and the top at ``density`` points/m^2.

    Exactly round(density * sampled_face_area) points are drawn, allocated
    to faces by area (largest-remainder apportionment); each point gets
    isotropic Gaussian noise of the given sigma. Deterministic per seed.
    """
    if density <= 0:
        raise ValueError("density must be positive")
    rng = substream(seed, STREAM_SENSING, 0)
    sides = [
        # (area, extents, builder) for x-min, x-max, y-min, y-max, top
        (obj.size_y * obj.height, (obj.size_y, obj.height),
         lambda a, b: np.column_stack([np.full_like(a, obj.min_x), obj.min_y + a, b])),
        (obj.size_y * obj.height, (obj.size_y, obj.height),
         lambda a, b: np.column_stack([np.full_like(a, obj.max_x), obj.min_y + a, b])),
        (obj.size_x * obj.height, (obj.size_x, obj.height),
         lambda a, b: np.column_stack([obj.min_x + a, np.full_like(a, obj.min_y), b])),
        (obj.size_x * obj.height, (obj.size_x, obj.height),
         lambda a, b: np.column_stack([obj.min_x + a, np.full_like(a, obj.max_y), b])),
        (obj.size_x * obj.size_y, (obj.size_x, obj.size_y),
         lambda a, b: np.column_stack([obj.min_x + a, obj.min_y + b, np.full_like(a, obj.height)])),
    ]
    total = int(round(density * sampled_face_area(obj)))
    shares = np.array([density * area for area, _, _ in sides])
    counts = np.floor(shares).astype(int)
    remainder = total - int(counts.sum())
    if remainder > 0:
        for f in np.argsort(-(shares - np.floor(shares)), kind="stable")[:remainder]:
            counts[f] += 1
    pts = []
    for (area, (ea, eb), build), count in zip(sides, counts):
        if count == 0:
            continue
        a, b = _face_grid(rng, count, ea, eb)
        pts.append(build(a, b))
    cloud = np.concatenate(pts, axis=0) if pts else np.zeros((0, 3))
    if noise_sigma > 0 and cloud.size:
        cloud = cloud + rng.normal(0.0, noise_sigma, cloud.shape)
    return PointCloud(cloud, seed=seed)


def sampled_face_area(obj: Cuboid) -> float:
    """Total area of the faces synth_point_cloud samples (4 sides + top)."""
    return 2.0 * obj.height * (obj.size_x + obj.size_y) + obj.size_x * obj.size_y


def simulate_coarse(obj: Cuboid, bias_sigma: float, seed: int) -> Vec3:
    """True center plus seeded isotropic Gaussian offset of scale bias_sigma."""
    if bias_sigma < 0:
        raise ValueError("bias_sigma must be nonnegative")
    center = np.array([
        obj.min_x + obj.size_x / 2.0,
        obj.min_y + obj.size_y / 2.0,
        obj.height / 2.0,
    ])
    if bias_sigma > 0:
        rng = substream(seed, STREAM_SENSING, 1)
        center = center + rng.normal(0.0, bias_sigma, 3)
    return Vec3.from_array(center)


def dbscan(cloud: PointCloud, params: DbscanParams) -> np.ndarray:
    """Density-based clustering; returns labels, -1 for noise.

    Core points (>= min_pts neighbors within eps, the point itself
    included) form clusters as connected components of the core-core
    eps-graph; border points join the cluster of their nearest core
    neighbor. Labels are numbered by the lowest point index per cluster.
    """
    pts = cloud.points
    n = len(pts)
    labels = np.full(n, -1, dtype=int)
    if n == 0:
        return labels
    sq = np.sum(pts * pts, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T), 0.0)
    eps2 = params.eps ** 2
    adj = d2 <= eps2
    neighbor_counts = adj.sum(axis=1)  # includes self
    core = neighbor_counts >= params.min_pts

    # connected components over core points (frontier BFS on the core graph)
    comp = np.full(n, -1, dtype=int)
    n_comp = 0
    for start in np.flatnonzero(core):
        if comp[start] != -1:
            continue
        frontier = np.array([start])
        comp[start] = n_comp
        while frontier.size:
            reach = adj[frontier].any(axis=0) & core & (comp == -1)
            frontier = np.flatnonzero(reach)
            comp[frontier] = n_comp
        n_comp += 1

    labels[core] = comp[core]
    # border points: nearest core point within eps decides the cluster
    border = ~core
    if core.any() and border.any():
        d2_border = d2[np.ix_(border, core)]
        nearest = np.argmin(d2_border, axis=1)
        reachable = d2_border[np.arange(d2_border.shape[0]), nearest] <= eps2
        core_idx = np.flatnonzero(core)
        border_idx = np.flatnonzero(border)
        labels[border_idx[reachable]] = comp[core_idx[nearest[reachable]]]

    # renumber clusters by first appearance so labels are canonical
    remap = {}
    out = np.full(n, -1, dtype=int)
    for i in range(n):
        if labels[i] == -1:
            continue
        if labels[i] not in remap:
            remap[labels[i]] = len(remap)
        out[i] = remap[labels[i]]
    return out


def fine_localize(cloud: PointCloud, coarse: Vec3, roi_radius: float, params: DbscanParams) -> DetectedObject:
    """Cluster the cloud near a coarse estimate and fit a bounding cuboid.

    Points within roi_radius of the coarse center are clustered; the
    largest cluster becomes the object, enclosed in an axis-aligned cuboid
    whose base is clamped to the ground plane.
    """
    if roi_radius <= 0:
        raise ValueError("roi_radius must be positive")
    pts = cloud.points
    d = np.linalg.norm(pts - coarse.as_array(), axis=1)
    roi = pts[d <= roi_radius]
    if roi.shape[0] == 0:
        raise EmptyRoi("no points within the region of interest")
    labels = dbscan(PointCloud(roi, seed=cloud.seed), params)
    if (labels >= 0).sum() == 0:
        raise NoCluster("all ROI points labelled as noise")
    counts = np.bincount(labels[labels >= 0])
    cluster = roi[labels == int(np.argmax(counts))]
    min_xy = cluster[:, :2].min(axis=0)
    max_xy = cluster[:, :2].max(axis=0)
    height = max(float(cluster[:, 2].max()), 1e-9)
    fitted = Cuboid(
        float(min_xy[0]),
        float(min_xy[1]),
        float(max_xy[0] - min_xy[0]) or 1e-9,
        float(max_xy[1] - min_xy[1]) or 1e-9,
        height,
    )
    center = Vec3(
        fitted.min_x + fitted.size_x / 2.0,
        fitted.min_y + fitted.size_y / 2.0,
        fitted.height / 2.0,
    )
    return DetectedObject(fitted=fitted, center=center, point_count=int(cluster.shape[0]))


def inject_dynamic(scene: Scene, objects) -> Scene:
    """New scene with fitted cuboids appended; the input scene is untouched."""
    extras = []
    for obj in objects:
        c = obj.fitted if isinstance(obj, DetectedObject) else obj
        for x, y in ((c.min_x, c.min_y), (c.max_x, c.max_y)):
            if not scene.grid.contains_xy(x, y):
                raise OutOfGrid(f"object footprint corner ({x}, {y}) outside grid")
        extras.append(c)
    return scene.with_cuboids(extras)
