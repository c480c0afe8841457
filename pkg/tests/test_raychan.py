import math

import numpy as np
import pytest

from helpers import ARRAY, OFDM, csi_oracle, random_paths

from dtchan.errors import IndexOutOfRange, OutOfGrid, UtInsideScatterer, ZeroChannel
from dtchan.raychan import (
    C_LIGHT,
    ArrayConfig,
    MultipathSet,
    OfdmConfig,
    PathComponent,
    SynthConfig,
    assemble_csi,
    fspl_db,
    path_loss_db,
    pl_map,
    steering_vector,
    subcarrier_wavelengths,
    trace_paths,
)
from dtchan.scene import Cuboid, GridSpec, Scene, ScenarioConfig, Vec3, generate_scenario

WIDE_GRID = GridSpec(origin=Vec3(-1.0, -1.0, 1.0), n_rows=124, n_cols=124)


class TestSteeringVector:
    def test_broadside_all_ones(self):
        v = steering_vector(0.0, 1, ARRAY, OFDM)
        assert np.allclose(v, np.ones(ARRAY.n_t), atol=1e-15)

    def test_half_wavelength_30_degrees(self):
        lam_1 = subcarrier_wavelengths(ARRAY, OFDM)[0]
        arr = ArrayConfig(n_t=2, spacing=lam_1 / 2)
        v = steering_vector(math.pi / 6, 1, arr, OFDM)
        assert v == pytest.approx(np.array([1.0, -1.0j]), abs=1e-12)

    def test_unit_magnitude(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            v = steering_vector(rng.uniform(-1.5, 1.5), int(rng.integers(1, OFDM.n_k + 1)), ARRAY, OFDM)
            assert np.allclose(np.abs(v), 1.0, atol=1e-14)

    def test_subcarrier_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            steering_vector(0.0, OFDM.n_k + 1, ARRAY, OFDM)
        with pytest.raises(IndexOutOfRange):
            steering_vector(0.0, 0, ARRAY, OFDM)


class TestAssembleCsi:
    def test_unit_path_gives_all_ones(self):
        paths = MultipathSet((PathComponent(1.0 + 0.0j, 0.0, 0.0),))
        h = assemble_csi(paths, ARRAY, OFDM)
        assert np.allclose(h, 1.0, atol=1e-14)

    def test_linearity_of_split_path(self):
        paths = MultipathSet(
            (PathComponent(0.5 + 0.0j, 0.0, 0.0), PathComponent(0.5 + 0.0j, 0.0, 0.0))
        )
        assert np.allclose(assemble_csi(paths, ARRAY, OFDM), 1.0, atol=1e-14)

    def test_empty_set_zero_matrix(self):
        h = assemble_csi(MultipathSet(), ARRAY, OFDM)
        assert h.shape == (ARRAY.n_t, OFDM.n_k) and not h.any()

    def test_matches_direct_summation_oracle(self):
        rng = np.random.default_rng(12)
        small_arr = ArrayConfig(n_t=8)
        small_ofdm = OfdmConfig(n_k=12)
        for _ in range(25):
            paths = random_paths(rng, max_paths=3)
            got = assemble_csi(paths, small_arr, small_ofdm)
            want = csi_oracle(paths, small_arr, small_ofdm)
            assert np.max(np.abs(got - want)) <= 1e-12 * max(np.max(np.abs(want)), 1e-30)

    def test_union_linearity(self):
        rng = np.random.default_rng(6)
        a = random_paths(rng)
        b = random_paths(rng)
        union = MultipathSet(a.paths + b.paths)
        total = assemble_csi(union, ARRAY, OFDM)
        split = assemble_csi(a, ARRAY, OFDM) + assemble_csi(b, ARRAY, OFDM)
        assert np.allclose(total, split, rtol=1e-12, atol=1e-18)


class TestPathLoss:
    def test_unit_magnitude_zero_db(self):
        h = np.exp(1j * np.random.default_rng(0).uniform(0, 2 * np.pi, (4, 6)))
        assert path_loss_db(h) == pytest.approx(0.0, abs=1e-12)

    def test_tenth_magnitude_twenty_db(self):
        h = 0.1 * np.exp(1j * np.random.default_rng(1).uniform(0, 2 * np.pi, (8, 8)))
        assert path_loss_db(h) == pytest.approx(20.0, abs=1e-12)

    def test_matches_frobenius_oracle(self):
        rng = np.random.default_rng(2)
        h = rng.standard_normal((16, 24)) + 1j * rng.standard_normal((16, 24))
        frob2 = sum(abs(h[i, j]) ** 2 for i in range(16) for j in range(24))
        want = -10.0 * math.log10(frob2 / (16 * 24))
        assert path_loss_db(h) == pytest.approx(want, abs=1e-10)

    def test_gain_scaling_shifts_pl(self):
        rng = np.random.default_rng(3)
        paths = random_paths(rng)
        h = assemble_csi(paths, ARRAY, OFDM)
        for c in (0.5, 2.0, 7.3):
            scaled = MultipathSet(
                tuple(PathComponent(p.gain * c, p.delay, p.aod) for p in paths.paths)
            )
            hs = assemble_csi(scaled, ARRAY, OFDM)
            assert path_loss_db(hs) - path_loss_db(h) == pytest.approx(-20 * math.log10(c), abs=1e-10)

    def test_zero_channel_raises(self):
        with pytest.raises(ZeroChannel):
            path_loss_db(np.zeros((4, 4), dtype=complex))


class TestTracePaths:
    def test_empty_scene_single_friis_ray(self):
        scene = Scene((), Vec3(0, 0, 2), WIDE_GRID)
        ut = Vec3(8.0, 0.0, 1.0)
        cfg = SynthConfig(reflection_order=0, ground_reflection=False)
        paths = trace_paths(scene, ut, cfg)
        assert len(paths) == 1 and paths.los_present
        dist = scene.bs.distance_to(ut)
        lam_c = C_LIGHT / 7.5e9
        assert abs(paths.paths[0].gain) == pytest.approx(lam_c / (4 * math.pi * dist), rel=1e-14)
        assert paths.paths[0].delay == pytest.approx(dist / C_LIGHT, rel=1e-14)

    def test_ground_reflection_adds_longer_path(self):
        scene = Scene((), Vec3(0, 0, 2), WIDE_GRID)
        ut = Vec3(8.0, 0.0, 1.0)
        cfg = SynthConfig(reflection_order=0, ground_reflection=True)
        paths = trace_paths(scene, ut, cfg)
        assert len(paths) == 2
        direct, bounced = paths.paths
        assert bounced.delay > direct.delay
        img_len = math.dist((0, 0, -2.0), (8.0, 0.0, 1.0))
        assert bounced.delay == pytest.approx(img_len / C_LIGHT, rel=1e-14)
        # reflection coefficient -0.7 flips the sign relative to pure Friis
        assert abs(bounced.gain) == pytest.approx(0.7 * (C_LIGHT / 7.5e9) / (4 * math.pi * img_len), rel=1e-12)

    def test_wall_penetration_attenuates(self):
        wall = Cuboid(4.0, -0.5, 2.0, 1.0, 3.0)
        scene = Scene((wall,), Vec3(0, 0, 2), WIDE_GRID)
        ut = Vec3(10.0, 0.0, 1.0)
        cfg = SynthConfig(reflection_order=0, ground_reflection=False, penetration_db_per_m=10.0)
        paths = trace_paths(scene, ut, cfg)
        assert len(paths) == 1 and not paths.los_present
        dist = scene.bs.distance_to(ut)
        span = 0.2 * dist  # chord from x=4 to x=6 on the segment
        lam_c = C_LIGHT / 7.5e9
        want = lam_c / (4 * math.pi * dist) * 10 ** (-10.0 * span / 20.0)
        assert abs(paths.paths[0].gain) == pytest.approx(want, rel=1e-12)

    def test_first_order_wall_reflection_found(self):
        # wall to the east; BS and UT on its west side
        wall = Cuboid(8.0, -2.0, 1.0, 4.0, 3.0)
        scene = Scene((wall,), Vec3(0, 0, 2), WIDE_GRID)
        ut = Vec3(2.0, 1.0, 1.0)
        cfg = SynthConfig(reflection_order=1, ground_reflection=False)
        paths = trace_paths(scene, ut, cfg)
        assert len(paths) == 2
        direct, refl = paths.paths
        img = Vec3(16.0, 0.0, 2.0)  # BS mirrored across x = 8
        assert refl.delay == pytest.approx(img.distance_to(ut) / C_LIGHT, rel=1e-12)

    def test_second_order_corridor_reflection(self):
        walls = (Cuboid(-3.0, -2.0, 1.0, 4.0, 3.0), Cuboid(8.0, -2.0, 1.0, 4.0, 3.0))
        scene = Scene(walls, Vec3(0, 0, 2), WIDE_GRID)
        ut = Vec3(4.0, 0.5, 1.0)
        one = trace_paths(scene, ut, SynthConfig(reflection_order=1))
        two = trace_paths(scene, ut, SynthConfig(reflection_order=2))
        assert len(two) > len(one)
        assert max(p.delay for p in two.paths) > max(p.delay for p in one.paths)

    def test_cuboid_permutation_invariance(self):
        scene = generate_scenario(ScenarioConfig(), seed=31)
        flipped = Scene(scene.cuboids[::-1], scene.bs, scene.grid)
        ut = scene.grid.cell_center(100, 30)
        cfg = SynthConfig(reflection_order=1, ground_reflection=True)
        a = trace_paths(scene, ut, cfg)
        b = trace_paths(flipped, ut, cfg)
        key = lambda p: (round(p.delay * 1e15), round(p.aod, 9))
        assert sorted(map(key, a.paths)) == sorted(map(key, b.paths))

    def test_threshold_drops_paths(self):
        scene = Scene((), Vec3(0, 0, 2), WIDE_GRID)
        cfg = SynthConfig(reflection_order=0, rx_power_threshold_dbm=0.0)
        paths = trace_paths(scene, Vec3(8.0, 0.0, 1.0), cfg)
        assert len(paths) == 0

    def test_invalid_ut_positions(self):
        wall = Cuboid(4.0, -0.5, 2.0, 1.0, 3.0)
        scene = Scene((wall,), Vec3(0, 0, 2), WIDE_GRID)
        with pytest.raises(UtInsideScatterer):
            trace_paths(scene, Vec3(5.0, 0.0, 1.0), SynthConfig())
        with pytest.raises(OutOfGrid):
            trace_paths(scene, Vec3(50.0, 0.0, 1.0), SynthConfig())


class TestPlMap:
    def test_empty_scene_matches_fspl(self):
        scene = Scene((), None, GridSpec())
        m = pl_map(scene, SynthConfig(reflection_order=0))
        cells = scene.grid.cell_centers()
        dist = np.linalg.norm(cells - scene.bs.as_array(), axis=1).reshape(m.values.shape)
        want = 20 * np.log10(4 * np.pi * dist * 7.5e9 / C_LIGHT)
        assert np.nanmax(np.abs(m.values - want)) < 0.01

    def test_footprint_cells_masked(self):
        scene = Scene((Cuboid(2.0, 2.0, 1.0, 1.0, 2.0),), None, GridSpec())
        m = pl_map(scene, SynthConfig(reflection_order=0))
        from dtchan.scene import footprint_mask

        fp = footprint_mask(scene).astype(bool)
        assert np.all(np.isnan(m.values[fp])) and np.all(m.valid_mask[fp] == 0)
        assert np.all(np.isfinite(m.values[~fp]))

    def test_radial_monotonicity_without_reflections(self):
        scene = Scene((), None, GridSpec())
        m = pl_map(scene, SynthConfig(reflection_order=0))
        row = m.values[62, 62:]  # walk east from the BS cell
        assert np.all(np.diff(row) >= -1e-9)

    def test_batched_equals_percell_route(self):
        scene = generate_scenario(ScenarioConfig(count_range=(4, 4)), seed=19)
        cfg = SynthConfig(reflection_order=1, ground_reflection=True)
        m = pl_map(scene, cfg, strategy="batched")
        rng = np.random.default_rng(9)
        checked = 0
        while checked < 15:
            i, j = int(rng.integers(124)), int(rng.integers(124))
            if not m.valid_mask[i, j]:
                continue
            center = scene.grid.cell_center(i, j)
            want = path_loss_db(assemble_csi(trace_paths(scene, center, cfg), ARRAY, OFDM))
            assert m.values[i, j] == pytest.approx(want, abs=1e-9)
            checked += 1

    def test_fspl_helper(self):
        assert fspl_db(1.0, C_LIGHT / (4 * math.pi)) == pytest.approx(0.0, abs=1e-12)
