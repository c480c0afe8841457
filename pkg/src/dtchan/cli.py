"""Command-line pipeline and latency profiler.

Subcommands:

    gen-scene    draw a random cuboid scenario and write it as JSON
    synth        trace ground-truth CSI (and optionally a full PL map)
    features     extract feature maps for a scene
    dataset      build the crop/rotate-augmented sample set
    reconstruct  recover CSI from a pilot observation
    pl-baseline  physics path-loss baseline map
    eval         metric reports (+ CDF CSVs and figures)
    sense        synthetic multimodal sensing of dynamic objects
    pipeline     sensing -> inject -> features -> prediction -> metrics
    profile      median per-stage latencies of the pipeline

Exit codes: 0 success, 2 usage error, 3 input format error, 4 numeric or
geometric failure. All artifact writes are atomic (temp file + rename).
Randomness is funneled through one --seed per invocation; the latency
report is the only non-deterministic artifact.
"""

import argparse
import glob as globmod
import json
import os
import platform
import sys
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numpy as np

from . import dataset as datamod
from . import formats, report
from .envfeat import bs_location_map, height_map, location_map, penetration_ratio_map, penetration_ratio_point
from .errors import DtcError, FormatError
from .metrics import MetricReport, cdf, nmse, rmse_pl, sgcs
from .pilot import PilotMask, RegularGrid, SeededRandom, make_mask, observe
from .raychan import (
    ArrayConfig,
    OfdmConfig,
    PathLossMap,
    SynthConfig,
    assemble_csi,
    path_loss_db,
    pl_map,
    trace_paths,
)
from .recon import LocalEnvSummary, PlBaselineConfig, ProxConfig, local_env_summary, pl_baseline_map, reconstruct_csi
from .rng import STREAM_SENSING, substream
from .scene import Cuboid, GridSpec, ScenarioConfig, Scene, Vec3, generate_scenario, load_scene, save_scene
from .sensing import DbscanParams, fine_localize, inject_dynamic, simulate_coarse, synth_point_cloud


@dataclass(frozen=True)
class LatencyReport:
    """Per-stage wall-clock medians in milliseconds; total is their sum."""

    sensing_ms: float
    feature_extraction_ms: float
    prediction_ms: float
    total_ms: float
    hardware: str
    detail: dict = field(default_factory=dict)

    @staticmethod
    def from_stages(sensing, features, prediction, detail=None) -> "LatencyReport":
        return LatencyReport(
            sensing_ms=sensing,
            feature_extraction_ms=features,
            prediction_ms=prediction,
            total_ms=sensing + features + prediction,
            hardware=f"{platform.machine()} / {platform.processor() or 'unknown cpu'}",
            detail=detail or {},
        )


# ---------------------------------------------------------------------------
# small shared helpers
# ---------------------------------------------------------------------------

def _atomic_write(path, data) -> None:
    tmp = str(path) + ".tmp"
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode) as f:
        f.write(data)
    os.replace(tmp, path)


def _write_json(path, obj) -> None:
    _atomic_write(path, json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _parse_range(text: str) -> tuple:
    lo, hi = (float(p) for p in text.split(","))
    return lo, hi


def _parse_pattern(text: str):
    kind, _, rest = text.partition(":")
    if kind == "regular":
        a, s = (int(p) for p in rest.split(","))
        return RegularGrid(a, s)
    if kind == "random":
        parts = rest.split(",")
        density = float(parts[0])
        seed = int(parts[1]) if len(parts) > 1 else 0
        return SeededRandom(density, seed)
    raise argparse.ArgumentTypeError(f"unknown pattern {text!r} (use regular:A,S or random:D[,SEED])")


def _load_config_file(path) -> dict:
    """Flat TOML-shaped text: ``key = value`` lines, # comments, sections ignored."""
    out = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line or line.startswith("["):
                continue
            key, eq, val = line.partition("=")
            if not eq:
                raise FormatError(f"{path}:{lineno}: expected key = value")
            key, val = key.strip(), val.strip()
            if len(val) >= 2 and val[0] == val[-1] and val[0] in "\"'":
                out[key] = val[1:-1]
            elif val in ("true", "false"):
                out[key] = val == "true"
            else:
                try:
                    out[key] = int(val)
                except ValueError:
                    try:
                        out[key] = float(val)
                    except ValueError:
                        raise FormatError(f"{path}:{lineno}: cannot parse value {val!r}")
    return out


# flags resolvable through --config; flag > config file > default
_CONFIG_DEFAULTS = {
    "pattern": "regular:8,4",
    "reflection_order": 1,
    "refl_coeff": -0.7,
    "penetration_db_per_m": 10.0,
    "ground_reflection": False,
    "iterations": 3,
    "beta": 1.0,
    "lam": None,
}


def _apply_config(args) -> None:
    cfg = _load_config_file(args.config) if getattr(args, "config", None) else {}
    for attr, default in _CONFIG_DEFAULTS.items():
        if hasattr(args, attr) and getattr(args, attr) is None:
            setattr(args, attr, cfg.get(attr, default))


def _synth_from_args(args) -> SynthConfig:
    return SynthConfig(
        reflection_order=int(args.reflection_order),
        refl_coeff=float(args.refl_coeff),
        penetration_db_per_m=float(args.penetration_db_per_m),
        ground_reflection=bool(args.ground_reflection),
    )


def _add_synth_flags(p) -> None:
    p.add_argument("--reflection-order", type=int, default=None, choices=(0, 1, 2))
    p.add_argument("--refl-coeff", type=float, default=None)
    p.add_argument("--penetration-db-per-m", type=float, default=None)
    p.add_argument("--ground-reflection", action=argparse.BooleanOptionalAction, default=None)


def _ut_cell(args, grid: GridSpec) -> tuple:
    if args.ut_cell is not None:
        i, j = (int(p) for p in args.ut_cell.split(","))
        return i, j
    if args.ut is not None:
        x, y = (float(p) for p in args.ut.split(","))
        return grid.cell_index(x, y)
    raise argparse.ArgumentTypeError("one of --ut-cell or --ut is required")


def _load_objects(path) -> list:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return [
        Cuboid(o["min_x"], o["min_y"], o["size_x"], o["size_y"], o["height"])
        for o in data.get("objects", [])
    ]


def _save_map_artifacts(out_dir, stem, values, figures, title, units="", ppm=False):
    _atomic_write(os.path.join(out_dir, stem + ".dtcm"), formats.encode_map(values))
    _atomic_write(os.path.join(out_dir, stem + ".csv"), formats.grid_to_csv(values))
    if ppm:
        _atomic_write(os.path.join(out_dir, stem + ".ppm"), formats.grid_to_ppm(values))
    if figures:
        report.save_map_figure(values, os.path.join(out_dir, stem + ".png"), title, units)


# ---------------------------------------------------------------------------
# pipeline core (shared by `pipeline` and `profile`)
# ---------------------------------------------------------------------------

@contextmanager
def _stage(name):
    """Tag module errors with the pipeline stage they escaped from."""
    try:
        yield
    except DtcError as err:
        raise type(err)(f"[stage: {name}] {err}") from err


def _run_stages(scene: Scene, true_objects, ut_cell, seed, synth_cfg, prox_cfg,
                pattern, sense_opts):
    """One pipeline pass; returns (artifact dict, stage seconds dict)."""
    stages = {}
    art = {}

    t0 = time.perf_counter()
    detected = []
    clouds = []
    with _stage("sensing"):
        for i, obj in enumerate(true_objects):
            cloud = synth_point_cloud(obj, sense_opts["density"], sense_opts["noise_sigma"],
                                      seed=int(substream(seed, STREAM_SENSING, 7, i).integers(2 ** 31)))
            coarse = simulate_coarse(obj, sense_opts["bias_sigma"],
                                     seed=int(substream(seed, STREAM_SENSING, 8, i).integers(2 ** 31)))
            det = fine_localize(cloud, coarse, sense_opts["roi_radius"],
                                DbscanParams(sense_opts["eps"], sense_opts["min_pts"]))
            detected.append(det)
            clouds.append(cloud)
        work_scene = inject_dynamic(scene, detected) if detected else scene
    stages["sensing"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with _stage("feature_extraction"):
        bs_m = bs_location_map(work_scene)
        h_m = height_map(work_scene)
        pr_m = penetration_ratio_map(work_scene)
        ut_center = work_scene.grid.cell_center(*ut_cell)
        ut_m = location_map(ut_center, work_scene.grid)
    stages["feature_extraction"] = time.perf_counter() - t0

    # ground-truth synthesis: oracle work, deliberately outside the timed stages
    array = ArrayConfig()
    ofdm = OfdmConfig()
    with _stage("synthesis"):
        paths = trace_paths(work_scene, ut_center, synth_cfg, array)
        h_true = assemble_csi(paths, array, ofdm)
        mask = make_mask(pattern, array, ofdm)
        h0 = observe(h_true, mask)

    t0 = time.perf_counter()
    with _stage("prediction"):
        baseline = pl_baseline_map(work_scene, PlBaselineConfig(kappa=synth_cfg.penetration_db_per_m), array)
        env = local_env_summary(work_scene, ut_center)
        h_rec = reconstruct_csi(h0, mask, env, prox_cfg)
    stages["prediction"] = time.perf_counter() - t0

    pr_at_ut = penetration_ratio_point(work_scene, ut_center)
    metrics = {
        "pr_at_ut": pr_at_ut,
        "bs_ut_distance_m": work_scene.bs.distance_to(ut_center),
        "paths_traced": len(paths),
    }
    if np.abs(h_true).sum() > 0:
        n_lin, n_db = nmse([h_rec], [h_true])
        zf_lin, zf_db = nmse([h0], [h_true])
        metrics.update(
            {
                "recon_nmse_db": n_db,
                "zero_fill_nmse_db": zf_db,
                "recon_sgcs": sgcs([h_rec], [h_true]),
                "zero_fill_sgcs": sgcs([h0], [h_true]),
                "true_pl_db": path_loss_db(h_true),
                "baseline_pl_at_ut_db": float(baseline.values[ut_cell[0], ut_cell[1]])
                if baseline.valid_mask[ut_cell[0], ut_cell[1]]
                else None,
            }
        )

    art.update(
        scene=work_scene, detected=detected, clouds=clouds, bs_map=bs_m, height_map=h_m,
        pr_map=pr_m, ut_map=ut_m, baseline=baseline, h_true=h_true, h0=h0, h_rec=h_rec,
        mask=mask, metrics=metrics, env=env,
    )
    return art, stages


def _sense_opts_from_args(args) -> dict:
    return {
        "density": args.density,
        "noise_sigma": args.noise_sigma,
        "bias_sigma": args.bias_sigma,
        "roi_radius": args.roi_radius,
        "eps": args.eps,
        "min_pts": args.min_pts,
    }


def _add_sense_flags(p) -> None:
    p.add_argument("--density", type=float, default=150.0, help="cloud points per m^2")
    p.add_argument("--noise-sigma", type=float, default=0.01)
    p.add_argument("--bias-sigma", type=float, default=0.05)
    p.add_argument("--roi-radius", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.15)
    p.add_argument("--min-pts", type=int, default=5)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen_scene(args) -> int:
    grid = GridSpec(
        resolution=args.resolution,
        n_rows=args.rows,
        n_cols=args.cols,
        rx_height=args.rx_height,
        origin=Vec3(0.0, 0.0, args.rx_height),
    )
    cfg = ScenarioConfig(
        count_range=(int(args.count.split(",")[0]), int(args.count.split(",")[1])),
        size_range=_parse_range(args.size),
        height_range=_parse_range(args.height),
        grid=grid,
        bs_height=args.bs_height,
    )
    scene = generate_scenario(cfg, args.seed)
    save_scene(scene, args.out)
    print(f"wrote {args.out}: {len(scene.cuboids)} cuboids, seed {args.seed}")
    return 0


def cmd_synth(args) -> int:
    _apply_config(args)
    scene = load_scene(args.scene)
    cfg = _synth_from_args(args)
    array = ArrayConfig()
    ofdm = OfdmConfig()
    ut = scene.grid.cell_center(*_ut_cell(args, scene.grid))
    paths = trace_paths(scene, ut, cfg, array)
    h = assemble_csi(paths, array, ofdm)
    _atomic_write(args.out_csi, formats.encode_csi(h))
    print(f"wrote {args.out_csi}: {len(paths)} paths, ||H||_F = {np.linalg.norm(h):.3e}")
    if args.paths_csv:
        lines = ["gain_re,gain_im,delay_s,aod_rad"]
        lines += [f"{p.gain.real!r},{p.gain.imag!r},{p.delay!r},{p.aod!r}" for p in paths.paths]
        _atomic_write(args.paths_csv, "\n".join(lines) + "\n")
    if args.pl_map_out:
        m = pl_map(scene, cfg, array, ofdm)
        _atomic_write(args.pl_map_out, formats.encode_map(m.values))
        print(f"wrote {args.pl_map_out}")
    return 0


def cmd_features(args) -> int:
    scene = load_scene(args.scene)
    os.makedirs(args.out_dir, exist_ok=True)
    maps = {
        "bs_map": (bs_location_map(scene).values, "BS location map", ""),
        "height_map": (height_map(scene).values, "scatterer height map", "m"),
        "pr_map": (penetration_ratio_map(scene).values, "penetration ratio map", ""),
    }
    if args.ut_cell or args.ut:
        ut = scene.grid.cell_center(*_ut_cell(args, scene.grid))
        maps["ut_map"] = (location_map(ut, scene.grid).values, "UT location map", "")
    for stem, (values, title, units) in maps.items():
        _save_map_artifacts(args.out_dir, stem, values, not args.no_figures, title, units)
    _write_json(
        os.path.join(args.out_dir, "features_manifest.json"),
        {stem: {"kind": stem, "rows": v.shape[0], "cols": v.shape[1]} for stem, (v, _, _) in maps.items()},
    )
    print(f"wrote {len(maps)} feature maps to {args.out_dir}")
    return 0


def cmd_dataset(args) -> int:
    cfg = datamod.DatasetConfig(
        n_scenarios=args.n_scenarios,
        crop_stride=args.crop_stride,
        label_mode=args.label_mode,
        pilot_pattern=_parse_pattern(args.pattern),
    )
    t0 = time.perf_counter()
    manifest, _ = datamod.build_dataset(
        cfg, master_seed=args.seed, out_dir=None if args.manifest_only else args.out_dir
    )
    if args.manifest_only:
        os.makedirs(args.out_dir, exist_ok=True)
        _atomic_write(os.path.join(args.out_dir, "manifest.json"), manifest.to_json())
    dt = time.perf_counter() - t0
    print(
        f"dataset: {manifest.n_samples} samples "
        f"(train {manifest.counts['train']} / val {manifest.counts['val']} / test {manifest.counts['test']}) "
        f"in {dt:.1f}s -> {args.out_dir}"
    )
    return 0


def cmd_reconstruct(args) -> int:
    _apply_config(args)
    with open(args.observed, "rb") as f:
        h0 = formats.decode_csi(f.read())
    if args.mask:
        with open(args.mask, "rb") as f:
            mask = PilotMask(formats.decode_mask(f.read()), _parse_pattern(args.pattern))
    else:
        mask = make_mask(_parse_pattern(args.pattern), ArrayConfig(n_t=h0.shape[0]), OfdmConfig(n_k=h0.shape[1]))
    iterations = int(args.iterations)
    lam = args.lam
    base_thr = tuple(float(x) for x in str(lam).split(",")) if lam else ProxConfig().lambda_thr[:iterations]
    if len(base_thr) < iterations:
        base_thr = base_thr + (base_thr[-1],) * (iterations - len(base_thr))
    cfg = ProxConfig(
        iterations=iterations,
        beta=tuple([float(args.beta)] * iterations),
        lambda_thr=base_thr,
    )
    env = None
    if args.env:
        pr, dist, hgt = (float(p) for p in args.env.split(","))
        env = LocalEnvSummary(pr, dist, hgt)
    h_rec = reconstruct_csi(h0, mask, env, cfg)
    _atomic_write(args.out, formats.encode_csi(h_rec))
    print(f"wrote {args.out}")
    if args.truth:
        with open(args.truth, "rb") as f:
            h_true = formats.decode_csi(f.read())
        _, db = nmse([h_rec], [h_true])
        print(f"NMSE {db:.2f} dB, SGCS {sgcs([h_rec], [h_true]):.4f}")
    return 0


def cmd_pl_baseline(args) -> int:
    scene = load_scene(args.scene)
    m = pl_baseline_map(scene, PlBaselineConfig(kappa=args.kappa))
    out_dir = os.path.dirname(args.out) or "."
    os.makedirs(out_dir, exist_ok=True)
    _atomic_write(args.out, formats.encode_map(m.values))
    stem = os.path.splitext(args.out)[0]
    _atomic_write(stem + ".csv", formats.grid_to_csv(m.values))
    _atomic_write(stem + ".ppm", formats.grid_to_ppm(m.values))
    if not args.no_figures:
        report.save_map_figure(m.values, stem + ".png", "path-loss baseline", "dB")
    print(f"wrote {args.out} (+ csv/ppm)")
    return 0


def _glob_sorted(pattern: str) -> list:
    paths = sorted(globmod.glob(pattern))
    if not paths:
        raise FormatError(f"no files match {pattern!r}")
    return paths


def cmd_eval(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    rows = []
    reports = []
    series = {}

    if args.dataset:
        manifest = datamod.DatasetManifest.from_json(
            open(os.path.join(args.dataset, "manifest.json"), encoding="utf-8").read()
        )
        pattern = manifest.config.get("pilot_pattern", "regular:8,4") if manifest.config else "regular:8,4"
        recs = [r for r in manifest.samples if r.get("file")][: args.limit]
        if not recs:
            raise FormatError("dataset manifest lists no sample files")
        preds, zfs, truths = [], [], []
        for rec in recs:
            s = datamod.read_sample(os.path.join(args.dataset, rec["file"]))
            mask = make_mask(_parse_pattern(pattern),
                             ArrayConfig(n_t=s.csi.shape[0]), OfdmConfig(n_k=s.csi.shape[1]))
            h_rec = reconstruct_csi(s.pilot_csi, mask, None, ProxConfig())
            preds.append(h_rec)
            zfs.append(s.pilot_csi)
            truths.append(s.csi)
            rows.append((rec["id"], nmse([h_rec], [s.csi])[1], sgcs([h_rec], [s.csi])))
        reports.append(MetricReport.from_values("nmse_db", [r[1] for r in rows], "dB"))
        reports.append(MetricReport.from_values("sgcs", [r[2] for r in rows], ""))
        series = {"reconstruction": [r[2] for r in rows], "zero fill": [sgcs([z], [t]) for z, t in zip(zfs, truths)]}
    elif args.pred_csi and args.truth_csi:
        pred_paths = _glob_sorted(args.pred_csi)
        truth_paths = _glob_sorted(args.truth_csi)
        if len(pred_paths) != len(truth_paths):
            raise FormatError("pred/truth file counts differ")
        for i, (pp, tp) in enumerate(zip(pred_paths, truth_paths)):
            hp = formats.decode_csi(open(pp, "rb").read())
            ht = formats.decode_csi(open(tp, "rb").read())
            rows.append((i, nmse([hp], [ht])[1], sgcs([hp], [ht])))
        reports.append(MetricReport.from_values("nmse_db", [r[1] for r in rows], "dB"))
        reports.append(MetricReport.from_values("sgcs", [r[2] for r in rows], ""))
        series = {"prediction": [r[2] for r in rows]}
    elif args.pred_pl and args.truth_pl:
        pred_paths = _glob_sorted(args.pred_pl)
        truth_paths = _glob_sorted(args.truth_pl)
        vals = []
        for i, (pp, tp) in enumerate(zip(pred_paths, truth_paths)):
            mp = formats.decode_map(open(pp, "rb").read())
            mt = formats.decode_map(open(tp, "rb").read())
            pm = PathLossMap(values=mp, valid_mask=np.isfinite(mp).astype(np.uint8))
            tm = PathLossMap(values=mt, valid_mask=np.isfinite(mt).astype(np.uint8))
            vals.append(rmse_pl(pm, tm))
            rows.append((i, vals[-1], float("nan")))
        reports.append(MetricReport.from_values("rmse_pl_db", vals, "dB"))
        series = {"rmse": vals}
    else:
        raise argparse.ArgumentTypeError("eval needs --dataset, --pred-csi/--truth-csi or --pred-pl/--truth-pl")

    lines = ["sample,metric1,metric2"]
    lines += [f"{r[0]},{r[1]!r},{r[2]!r}" for r in rows]
    _atomic_write(os.path.join(args.out_dir, "per_sample.csv"), "\n".join(lines) + "\n")
    summary = {
        rep.name: {"mean": rep.mean, "std": rep.std, "count": rep.count, "unit": rep.unit}
        for rep in reports
    }
    _write_json(os.path.join(args.out_dir, "summary.json"), summary)
    for name, values in series.items():
        xs, fs = cdf(values)
        csv = "value,fraction\n" + "".join(f"{float(x)!r},{float(f)!r}\n" for x, f in zip(xs, fs))
        _atomic_write(os.path.join(args.out_dir, f"cdf_{name.replace(' ', '_')}.csv"), csv)
    if not args.no_figures and series:
        report.save_cdf_figure(series, os.path.join(args.out_dir, "cdf.png"),
                               "empirical CDF", "metric value")
    for rep in reports:
        print(f"{rep.name}: mean {rep.mean:.4f} {rep.unit} (std {rep.std:.4f}, n={rep.count})")
    return 0


def cmd_sense(args) -> int:
    objects = _load_objects(args.objects)
    os.makedirs(args.out_dir, exist_ok=True)
    opts = _sense_opts_from_args(args)
    results = []
    for i, obj in enumerate(objects):
        cloud = synth_point_cloud(obj, opts["density"], opts["noise_sigma"],
                                  seed=int(substream(args.seed, STREAM_SENSING, 7, i).integers(2 ** 31)))
        coarse = simulate_coarse(obj, opts["bias_sigma"],
                                 seed=int(substream(args.seed, STREAM_SENSING, 8, i).integers(2 ** 31)))
        det = fine_localize(cloud, coarse, opts["roi_radius"], DbscanParams(opts["eps"], opts["min_pts"]))
        true_c = (obj.min_x + obj.size_x / 2, obj.min_y + obj.size_y / 2)
        results.append(
            {
                "object": i,
                "points": len(cloud),
                "coarse_err_2d_m": float(np.hypot(coarse.x - true_c[0], coarse.y - true_c[1])),
                "fine_err_2d_m": float(np.hypot(det.center.x - true_c[0], det.center.y - true_c[1])),
                "fitted": {
                    "min_x": det.fitted.min_x,
                    "min_y": det.fitted.min_y,
                    "size_x": det.fitted.size_x,
                    "size_y": det.fitted.size_y,
                    "height": det.fitted.height,
                },
            }
        )
        _atomic_write(os.path.join(args.out_dir, f"cloud_{i:02d}.dtcp"), formats.encode_cloud(cloud.points))
        _atomic_write(os.path.join(args.out_dir, f"cloud_{i:02d}.xyz"), formats.cloud_to_xyz(cloud.points))
    _write_json(os.path.join(args.out_dir, "detected_objects.json"), {"objects": [r["fitted"] for r in results]})
    lines = ["object,points,coarse_err_2d_m,fine_err_2d_m"]
    lines += [f"{r['object']},{r['points']},{r['coarse_err_2d_m']!r},{r['fine_err_2d_m']!r}" for r in results]
    _atomic_write(os.path.join(args.out_dir, "localization.csv"), "\n".join(lines) + "\n")
    if not args.no_figures and results:
        report.save_cdf_figure(
            {
                "coarse": [r["coarse_err_2d_m"] for r in results],
                "fine": [r["fine_err_2d_m"] for r in results],
            },
            os.path.join(args.out_dir, "localization_cdf.png"),
            "2D localization error", "error (m)",
        )
    for r in results:
        print(f"object {r['object']}: coarse {r['coarse_err_2d_m']*100:.1f} cm -> fine {r['fine_err_2d_m']*100:.1f} cm")
    return 0


def cmd_pipeline(args) -> int:
    _apply_config(args)
    scene = load_scene(args.scene)
    objects = _load_objects(args.objects) if args.objects else []
    ut_cell = _ut_cell(args, scene.grid)
    synth_cfg = _synth_from_args(args)
    pattern = _parse_pattern(args.pattern)
    art, stages = _run_stages(scene, objects, ut_cell, args.seed, synth_cfg, ProxConfig(), pattern,
                              _sense_opts_from_args(args))
    lat = LatencyReport.from_stages(
        stages["sensing"] * 1e3, stages["feature_extraction"] * 1e3, stages["prediction"] * 1e3
    )

    out = args.out_dir
    os.makedirs(out, exist_ok=True)
    figures = not args.no_figures
    save_scene(art["scene"], os.path.join(out, "scene_used.json"))
    _save_map_artifacts(out, "bs_map", art["bs_map"].values, figures, "BS location map")
    _save_map_artifacts(out, "ut_map", art["ut_map"].values, figures, "UT location map")
    _save_map_artifacts(out, "height_map", art["height_map"].values, figures, "scatterer height map", "m")
    _save_map_artifacts(out, "pr_map", art["pr_map"].values, figures, "penetration ratio map")
    _save_map_artifacts(out, "pl_baseline", art["baseline"].values, figures, "path-loss baseline", "dB", ppm=True)
    _atomic_write(os.path.join(out, "csi_true.dtcc"), formats.encode_csi(art["h_true"]))
    _atomic_write(os.path.join(out, "csi_observed.dtcc"), formats.encode_csi(art["h0"]))
    _atomic_write(os.path.join(out, "csi_recon.dtcc"), formats.encode_csi(art["h_rec"]))
    _atomic_write(os.path.join(out, "mask.dtcb"), formats.encode_mask(art["mask"].mask))
    if figures:
        report.save_csi_figure(art["h_true"], os.path.join(out, "csi_true.png"), "ground-truth |H|")
        report.save_csi_figure(art["h_rec"], os.path.join(out, "csi_recon.png"), "reconstructed |H|")
    for i, (cloud, det) in enumerate(zip(art["clouds"], art["detected"])):
        _atomic_write(os.path.join(out, f"cloud_{i:02d}.dtcp"), formats.encode_cloud(cloud.points))
    _write_json(
        os.path.join(out, "detected_objects.json"),
        {
            "objects": [
                {
                    "min_x": d.fitted.min_x, "min_y": d.fitted.min_y,
                    "size_x": d.fitted.size_x, "size_y": d.fitted.size_y,
                    "height": d.fitted.height,
                }
                for d in art["detected"]
            ]
        },
    )
    _write_json(os.path.join(out, "metrics.json"), art["metrics"])
    lines = ["metric,value"] + [f"{k},{v!r}" for k, v in sorted(art["metrics"].items())]
    _atomic_write(os.path.join(out, "metrics.csv"), "\n".join(lines) + "\n")
    # measurement, not a deterministic artifact
    _write_json(os.path.join(out, "latency_report.json"), asdict(lat))

    print(f"pipeline done -> {out}")
    for k in ("pr_at_ut", "recon_nmse_db", "recon_sgcs"):
        if k in art["metrics"] and art["metrics"][k] is not None:
            print(f"  {k}: {art['metrics'][k]:.4f}" if isinstance(art["metrics"][k], float) else f"  {k}: {art['metrics'][k]}")
    print(f"  latency: sensing {lat.sensing_ms:.2f} + features {lat.feature_extraction_ms:.2f} "
          f"+ prediction {lat.prediction_ms:.2f} = {lat.total_ms:.2f} ms")
    return 0


def cmd_profile(args) -> int:
    _apply_config(args)
    scene = load_scene(args.scene)
    objects = _load_objects(args.objects) if args.objects else []
    ut_cell = _ut_cell(args, scene.grid)
    synth_cfg = _synth_from_args(args)
    pattern = _parse_pattern(args.pattern)
    opts = _sense_opts_from_args(args)

    per_stage = {"sensing": [], "feature_extraction": [], "prediction": []}
    for _ in range(args.repetitions):
        _, stages = _run_stages(scene, objects, ut_cell, args.seed, synth_cfg, ProxConfig(), pattern, opts)
        for k in per_stage:
            per_stage[k].append(stages[k] * 1e3)

    detail = {}
    for name, fn in (
        ("height_map_ms", lambda: height_map(scene)),
        ("penetration_ratio_map_ms", lambda: penetration_ratio_map(scene)),
        ("pl_baseline_ms", lambda: pl_baseline_map(scene)),
    ):
        ts = []
        for _ in range(args.repetitions):
            t0 = time.perf_counter()
            fn()
            ts.append((time.perf_counter() - t0) * 1e3)
        detail[name] = float(np.median(ts))

    lat = LatencyReport.from_stages(
        float(np.median(per_stage["sensing"])),
        float(np.median(per_stage["feature_extraction"])),
        float(np.median(per_stage["prediction"])),
        detail=detail,
    )
    print(f"profile over {args.repetitions} repetitions ({lat.hardware}):")
    print(f"  sensing:            {lat.sensing_ms:9.3f} ms")
    print(f"  feature extraction: {lat.feature_extraction_ms:9.3f} ms")
    print(f"  prediction:         {lat.prediction_ms:9.3f} ms")
    print(f"  total:              {lat.total_ms:9.3f} ms")
    for k, v in detail.items():
        print(f"    {k}: {v:.3f} ms")
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        _write_json(args.out, asdict(lat))
        if not args.no_figures:
            report.save_profile_figure(
                {
                    "sensing": lat.sensing_ms,
                    "features": lat.feature_extraction_ms,
                    "prediction": lat.prediction_ms,
                },
                os.path.splitext(args.out)[0] + ".png",
                "pipeline stage latency",
            )
    return 0


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dtchan", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scene", help="draw a random cuboid scenario")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", default="3,8", help="cuboid count range lo,hi")
    g.add_argument("--size", default="0.5,3.0", help="footprint size range (m)")
    g.add_argument("--height", default="0.5,3.0", help="height range (m)")
    g.add_argument("--rows", type=int, default=124)
    g.add_argument("--cols", type=int, default=124)
    g.add_argument("--resolution", type=float, default=0.1)
    g.add_argument("--rx-height", type=float, default=1.0)
    g.add_argument("--bs-height", type=float, default=2.0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_scene)

    s = sub.add_parser("synth", help="trace ground-truth CSI at a UT")
    s.add_argument("--scene", required=True)
    s.add_argument("--ut-cell", help="grid cell row,col")
    s.add_argument("--ut", help="position x,y (m)")
    s.add_argument("--out-csi", required=True)
    s.add_argument("--paths-csv")
    s.add_argument("--pl-map-out", help="also write the full path-loss map (DTCM)")
    _add_synth_flags(s)
    s.set_defaults(func=cmd_synth)

    f = sub.add_parser("features", help="extract environment feature maps")
    f.add_argument("--scene", required=True)
    f.add_argument("--out-dir", required=True)
    f.add_argument("--ut-cell")
    f.add_argument("--ut")
    f.add_argument("--no-figures", action="store_true")
    f.set_defaults(func=cmd_features)

    d = sub.add_parser("dataset", help="build the augmented sample set")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out-dir", required=True)
    d.add_argument("--n-scenarios", type=int, default=10)
    d.add_argument("--crop-stride", type=int, default=4)
    d.add_argument("--label-mode", choices=(datamod.LABEL_CONSISTENT, datamod.LABEL_IMAGE_ONLY),
                   default=datamod.LABEL_CONSISTENT)
    d.add_argument("--pattern", default="regular:8,4")
    d.add_argument("--manifest-only", action="store_true", help="skip sample files")
    d.set_defaults(func=cmd_dataset)

    r = sub.add_parser("reconstruct", help="recover CSI from pilot observations")
    r.add_argument("--observed", required=True, help="H0 as DTCC")
    r.add_argument("--mask", help="pilot mask as DTCB")
    r.add_argument("--pattern", default=None)
    r.add_argument("--config", help="TOML-shaped key = value file; flags override")
    r.add_argument("--iterations", type=int, default=None)
    r.add_argument("--beta", type=float, default=None)
    r.add_argument("--lam", help="per-iteration thresholds, comma separated")
    r.add_argument("--env", help="pr,distance,mean_height for FiLM conditioning")
    r.add_argument("--truth", help="ground-truth DTCC for metric printout")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_reconstruct)

    b = sub.add_parser("pl-baseline", help="physics path-loss baseline map")
    b.add_argument("--scene", required=True)
    b.add_argument("--kappa", type=float, default=10.0)
    b.add_argument("--out", required=True)
    b.add_argument("--no-figures", action="store_true")
    b.set_defaults(func=cmd_pl_baseline)

    e = sub.add_parser("eval", help="metric reports, CDFs, figures")
    e.add_argument("--dataset", help="dataset dir with manifest.json")
    e.add_argument("--limit", type=int, default=64)
    e.add_argument("--pred-csi")
    e.add_argument("--truth-csi")
    e.add_argument("--pred-pl")
    e.add_argument("--truth-pl")
    e.add_argument("--out-dir", required=True)
    e.add_argument("--no-figures", action="store_true")
    e.set_defaults(func=cmd_eval)

    n = sub.add_parser("sense", help="synthetic multimodal sensing")
    n.add_argument("--objects", required=True, help="JSON file with true cuboids")
    n.add_argument("--out-dir", required=True)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--no-figures", action="store_true")
    _add_sense_flags(n)
    n.set_defaults(func=cmd_sense)

    pl = sub.add_parser("pipeline", help="full sensing -> prediction pipeline")
    pl.add_argument("--scene", required=True)
    pl.add_argument("--objects", help="dynamic objects JSON")
    pl.add_argument("--ut-cell")
    pl.add_argument("--ut")
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--pattern", default=None)
    pl.add_argument("--config", help="TOML-shaped key = value file; flags override")
    pl.add_argument("--out-dir", required=True)
    pl.add_argument("--no-figures", action="store_true")
    _add_synth_flags(pl)
    _add_sense_flags(pl)
    pl.set_defaults(func=cmd_pipeline)

    pr = sub.add_parser("profile", help="median per-stage latencies")
    pr.add_argument("--scene", required=True)
    pr.add_argument("--objects")
    pr.add_argument("--ut-cell")
    pr.add_argument("--ut")
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--pattern", default=None)
    pr.add_argument("--config", help="TOML-shaped key = value file; flags override")
    pr.add_argument("--repetitions", type=int, default=20)
    pr.add_argument("--out", help="write the report JSON here")
    pr.add_argument("--no-figures", action="store_true")
    _add_synth_flags(pr)
    _add_sense_flags(pr)
    pr.set_defaults(func=cmd_profile)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 2
    except (FormatError, json.JSONDecodeError) as err:
        print(f"input format error [{args.command}]: {err}", file=sys.stderr)
        return 3
    except FileNotFoundError as err:
        print(f"input format error [{args.command}]: {err}", file=sys.stderr)
        return 3
    except DtcError as err:
        print(f"error [{args.command}]: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
