"""Dataset construction: scenarios -> crops -> rotations -> labeled samples.

Each random scenario yields full-grid feature and path-loss maps; 64x64
crops at stride 4 (256 per scenario) are each rotated through the four
quarter turns (1024 per scenario), and every augmented crop gets one UT
cell drawn uniformly from its non-scattering cells plus CSI labels and
pilot observations. Two label modes exist: "consistent" re-traces the CSI
in the rotated geometry so labels and maps describe the same world;
"image-only" keeps the image rotation but reuses the unrotated-geometry CSI.
Sample path-loss maps are always the rotated image crops of the one
full-scene map.

Whole scenarios are held out as the test split; the rest is split 7:1 into
train and validation by seeded shuffle. Everything is deterministic in the
master seed, and sample generation is independent per (scenario, crop,
rotation), so it can run concurrently.
"""

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Iterator, Optional

import numpy as np

from . import formats
from .envfeat import (
    KIND_BS_LOCATION,
    KIND_HEIGHT,
    KIND_PENETRATION_RATIO,
    KIND_UT_LOCATION,
    FeatureMap,
    bs_location_map,
    height_map,
    penetration_ratio_map,
)
from .errors import FormatError, LayoutMismatch, PlacementFailed
from .pilot import PilotMask, RegularGrid, make_mask, observe, pattern_to_string
from .raychan import ArrayConfig, OfdmConfig, PathLossMap, SynthConfig, assemble_csi, pl_map, trace_paths
from .rng import STREAM_SPLIT, STREAM_UT_DRAW, substream
from .scene import Scene, ScenarioConfig, footprint_mask, generate_scenario, rotate_scene

LABEL_CONSISTENT = "consistent"
LABEL_IMAGE_ONLY = "image-only"


@dataclass(frozen=True)
class DatasetConfig:
    n_scenarios: int = 10
    crop_size: int = 64
    crop_stride: int = 4
    rotations: int = 4
    scenario: ScenarioConfig = ScenarioConfig()
    synth: SynthConfig = SynthConfig(reflection_order=1, ground_reflection=True)
    array: ArrayConfig = ArrayConfig()
    ofdm: OfdmConfig = OfdmConfig()
    pilot_pattern: object = RegularGrid(8, 4)
    label_mode: str = LABEL_CONSISTENT
    test_fraction: float = 0.2
    val_per_train: float = 1.0 / 7.0  # 7:1 train:val on the non-test pool

    def __post_init__(self):
        if self.label_mode not in (LABEL_CONSISTENT, LABEL_IMAGE_ONLY):
            raise ValueError(f"unknown label mode {self.label_mode!r}")
        if not 1 <= self.rotations <= 4:
            raise ValueError("rotations must be 1..4")


@dataclass(frozen=True)
class SampleMeta:
    sample_id: int
    scenario: int
    crop: tuple
    rotation: int
    ut_cell: tuple
    seed: int


@dataclass(frozen=True)
class Sample:
    bs_map: FeatureMap
    ut_map: FeatureMap
    height_map: FeatureMap
    pr_map: FeatureMap
    pl_map: PathLossMap
    csi: np.ndarray
    pilot_csi: np.ndarray
    meta: SampleMeta


@dataclass(frozen=True)
class DatasetManifest:
    format_version: int
    master_seed: int
    n_samples: int
    counts: dict
    scenario_split: dict
    samples: list
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1) + "\n"

    @staticmethod
    def from_json(text: str) -> "DatasetManifest":
        d = json.loads(text)
        return DatasetManifest(
            format_version=d["format_version"],
            master_seed=d["master_seed"],
            n_samples=d["n_samples"],
            counts=d["counts"],
            scenario_split=d["scenario_split"],
            samples=d["samples"],
            config=d.get("config", {}),
        )


# ---------------------------------------------------------------------------
# Crop / rotation primitives
# ---------------------------------------------------------------------------

def crop_offsets(source_dim: int, size: int = 64, stride: int = 4) -> list:
    """Row-major (row, col) offsets of every crop window."""
    if size > source_dim or (source_dim - size) % stride != 0:
        raise LayoutMismatch(f"({source_dim} - {size}) not divisible by stride {stride}")
    steps = (source_dim - size) // stride + 1
    return [(i * stride, j * stride) for i in range(steps) for j in range(steps)]


def crop_grid(values: np.ndarray, size: int = 64, stride: int = 4) -> list:
    """All crops of a square map, row-major by offset."""
    values = np.asarray(values)
    if values.shape[0] != values.shape[1]:
        raise LayoutMismatch("crop_grid expects a square map")
    return [
        values[r : r + size, c : c + size].copy()
        for r, c in crop_offsets(values.shape[0], size, stride)
    ]


def rotate_variants(values: np.ndarray) -> list:
    """The four quarter-turn rotations; index k is np.rot90(values, k).

    np.rot90 by one turn maps source pixel (r, c) to output pixel
    (n-1-c, r): out[i, j] = in[j, n-1-i].
    """
    values = np.asarray(values)
    if values.shape[0] != values.shape[1]:
        raise LayoutMismatch("rotation variants need a square map")
    return [np.rot90(values, k).copy() for k in range(4)]


def _rotated_offset(offset: tuple, source_dim: int, size: int, k: int) -> tuple:
    """Crop offset in the k-times-rotated full grid covering the same cells."""
    r, c = offset
    span = source_dim - size
    for _ in range(k % 4):
        r, c = span - c, r
    return r, c


# ---------------------------------------------------------------------------
# Dataset generation
# ---------------------------------------------------------------------------

def _scenario_assets(config: DatasetConfig, master_seed: int, index: int):
    """Scene, full-grid maps and rotated geometry for one scenario."""
    scene = generate_scenario(config.scenario, master_seed, scenario_index=index)
    maps = {
        "bs": bs_location_map(scene).values,
        "height": height_map(scene).values,
        "pr": penetration_ratio_map(scene).values,
        "footprint": footprint_mask(scene).astype(float),
    }
    full_pl = pl_map(scene, config.synth, config.array, config.ofdm)
    rotated = [rotate_scene(scene, k) for k in range(config.rotations)]
    return scene, maps, full_pl, rotated


def iter_dataset(config: DatasetConfig, master_seed: int) -> Iterator[Sample]:
    """Generate every sample of the dataset in manifest order."""
    mask = make_mask(config.pilot_pattern, config.array, config.ofdm)
    grid_dim = config.scenario.grid.n_rows
    offsets = crop_offsets(grid_dim, config.crop_size, config.crop_stride)
    sample_id = 0
    for scn in range(config.n_scenarios):
        scene, maps, full_pl, rotated = _scenario_assets(config, master_seed, scn)
        for crop_index, (r0, c0) in enumerate(offsets):
            window = (slice(r0, r0 + config.crop_size), slice(c0, c0 + config.crop_size))
            crop = {k: v[window] for k, v in maps.items()}
            pl_crop = full_pl.values[window]
            for k in range(config.rotations):
                yield _make_sample(
                    config, master_seed, sample_id, scn, crop_index, (r0, c0), k,
                    crop, pl_crop, rotated, grid_dim, mask,
                )
                sample_id += 1


def _make_sample(config, master_seed, sample_id, scn, crop_index, offset, k,
                 crop, pl_crop, rotated, grid_dim, mask: PilotMask) -> Sample:
    size = config.crop_size
    rot = lambda v: np.rot90(v, k).copy()
    bs_vals = rot(crop["bs"])
    height_vals = rot(crop["height"])
    pr_vals = rot(crop["pr"])
    foot_vals = rot(crop["footprint"])
    pl_vals = rot(pl_crop)

    rng = substream(master_seed, STREAM_UT_DRAW, scn, crop_index, k)
    valid = np.flatnonzero(foot_vals.ravel() == 0.0)
    if valid.size == 0:
        raise PlacementFailed(f"crop {offset} of scenario {scn} has no free cell")

    rot_off = _rotated_offset(offset, grid_dim, size, k)
    if config.label_mode == LABEL_CONSISTENT:
        label_scene = rotated[k]
        to_global = lambda li, lj: (rot_off[0] + li, rot_off[1] + lj)
    else:
        label_scene = rotated[0]
        # invert the image rotation to find the unrotated source cell
        def to_global(li, lj, _offset=offset):
            for _ in range(k % 4):
                li, lj = lj, size - 1 - li
            return _offset[0] + li, _offset[1] + lj

    csi = None
    for _ in range(32):  # redraw if every traced path fell below threshold
        pick = int(valid[rng.integers(valid.size)])
        li, lj = divmod(pick, size)
        gi, gj = to_global(li, lj)
        center = label_scene.grid.cell_center(gi, gj)
        paths = trace_paths(label_scene, center, config.synth, config.array)
        if len(paths):
            csi = assemble_csi(paths, config.array, config.ofdm)
            break
    if csi is None:
        raise PlacementFailed(f"no receivable UT cell in crop {offset} of scenario {scn}")

    ut_vals = np.zeros((size, size))
    ut_vals[li, lj] = 1.0
    return Sample(
        bs_map=FeatureMap(KIND_BS_LOCATION, bs_vals),
        ut_map=FeatureMap(KIND_UT_LOCATION, ut_vals),
        height_map=FeatureMap(KIND_HEIGHT, height_vals),
        pr_map=FeatureMap(KIND_PENETRATION_RATIO, pr_vals),
        pl_map=PathLossMap(values=pl_vals, valid_mask=np.isfinite(pl_vals).astype(np.uint8)),
        csi=csi,
        pilot_csi=observe(csi, mask),
        meta=SampleMeta(sample_id, scn, offset, k, (int(li), int(lj)), master_seed),
    )


def _split_assignment(config: DatasetConfig, master_seed: int, per_scenario: int):
    """(scenario -> split name, sample_id -> split name) for the whole set."""
    rng = substream(master_seed, STREAM_SPLIT, 0)
    n = config.n_scenarios
    n_test = max(1, round(config.test_fraction * n)) if n > 1 else 0
    order = rng.permutation(n)
    test_scenarios = set(int(s) for s in order[:n_test])

    pool = [
        scn * per_scenario + i
        for scn in range(n)
        if scn not in test_scenarios
        for i in range(per_scenario)
    ]
    pool = np.array(pool, dtype=int)
    rng.shuffle(pool)
    n_val = round(len(pool) * config.val_per_train / (1.0 + config.val_per_train))
    val_ids = set(int(v) for v in pool[:n_val])

    scenario_split = {
        str(scn): ("test" if scn in test_scenarios else "train/val") for scn in range(n)
    }

    def sample_split(sample_id: int) -> str:
        if sample_id // per_scenario in test_scenarios:
            return "test"
        return "val" if sample_id in val_ids else "train"

    return scenario_split, sample_split


def build_dataset(
    config: DatasetConfig = DatasetConfig(),
    master_seed: int = 0,
    out_dir: Optional[str] = None,
    keep_samples: bool = False,
) -> tuple:
    """Generate the dataset; returns (manifest, samples or None).

    With ``out_dir`` every sample is written as a DTCS container plus a
    manifest.json. ``keep_samples`` retains all samples in memory (meant
    for small configurations only).
    """
    offsets = crop_offsets(config.scenario.grid.n_rows, config.crop_size, config.crop_stride)
    per_scenario = len(offsets) * config.rotations
    scenario_split, sample_split = _split_assignment(config, master_seed, per_scenario)

    records = []
    counts = {"train": 0, "val": 0, "test": 0}
    kept = [] if keep_samples else None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    for sample in iter_dataset(config, master_seed):
        split = sample_split(sample.meta.sample_id)
        counts[split] += 1
        rec = {
            "id": sample.meta.sample_id,
            "scenario": sample.meta.scenario,
            "crop": list(sample.meta.crop),
            "rotation": sample.meta.rotation,
            "ut_cell": list(sample.meta.ut_cell),
            "split": split,
        }
        if out_dir is not None:
            rec["file"] = f"sample_{sample.meta.sample_id:05d}.dtcs"
            write_sample(sample, os.path.join(out_dir, rec["file"]))
        records.append(rec)
        if kept is not None:
            kept.append(sample)

    manifest = DatasetManifest(
        format_version=1,
        master_seed=master_seed,
        n_samples=len(records),
        counts=counts,
        scenario_split=scenario_split,
        samples=records,
        config={
            "pilot_pattern": pattern_to_string(config.pilot_pattern),
            "label_mode": config.label_mode,
            "crop_size": config.crop_size,
            "crop_stride": config.crop_stride,
            "rotations": config.rotations,
        },
    )
    if out_dir is not None:
        path = os.path.join(out_dir, "manifest.json")
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(manifest.to_json())
        os.replace(tmp, path)
    return manifest, kept


# ---------------------------------------------------------------------------
# Sample container I/O
# ---------------------------------------------------------------------------

def write_sample(sample: Sample, path) -> None:
    meta = {
        "sample_id": sample.meta.sample_id,
        "scenario": sample.meta.scenario,
        "crop": list(sample.meta.crop),
        "rotation": sample.meta.rotation,
        "ut_cell": list(sample.meta.ut_cell),
        "seed": sample.meta.seed,
    }
    sections = [
        json.dumps(meta, sort_keys=True).encode("utf-8"),
        formats.encode_map(sample.bs_map.values),
        formats.encode_map(sample.ut_map.values),
        formats.encode_map(sample.height_map.values),
        formats.encode_map(sample.pr_map.values),
        formats.encode_map(sample.pl_map.values),
        formats.encode_csi(sample.csi),
        formats.encode_csi(sample.pilot_csi),
    ]
    blob = formats.encode_sections(sections)
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)


def read_sample(path) -> Sample:
    with open(path, "rb") as f:
        blob = f.read()
    sections = formats.decode_sections(blob)
    if len(sections) != 8:
        raise FormatError(f"sample container holds {len(sections)} sections, expected 8")
    meta = json.loads(sections[0].decode("utf-8"))
    pl_vals = formats.decode_map(sections[5])
    return Sample(
        bs_map=FeatureMap(KIND_BS_LOCATION, formats.decode_map(sections[1])),
        ut_map=FeatureMap(KIND_UT_LOCATION, formats.decode_map(sections[2])),
        height_map=FeatureMap(KIND_HEIGHT, formats.decode_map(sections[3])),
        pr_map=FeatureMap(KIND_PENETRATION_RATIO, formats.decode_map(sections[4])),
        pl_map=PathLossMap(values=pl_vals, valid_mask=np.isfinite(pl_vals).astype(np.uint8)),
        csi=formats.decode_csi(sections[6]),
        pilot_csi=formats.decode_csi(sections[7]),
        meta=SampleMeta(
            sample_id=meta["sample_id"],
            scenario=meta["scenario"],
            crop=tuple(meta["crop"]),
            rotation=meta["rotation"],
            ut_cell=tuple(meta["ut_cell"]),
            seed=meta["seed"],
        ),
    )
