import numpy as np
import pytest

from helpers import ARRAY, OFDM, make_path_suite

from dtchan.errors import ShapeMismatch
from dtchan.metrics import nmse
from dtchan.pilot import PilotMask, RegularGrid, SeededRandom, make_mask, observe
from dtchan.raychan import SynthConfig, pl_map
from dtchan.recon import (
    FilmConfig,
    FilmParams,
    LocalEnvSummary,
    PlBaselineConfig,
    ProxConfig,
    derive_film,
    film_modulate,
    grad_step,
    local_env_summary,
    outer_film,
    pl_baseline_map,
    prox_soft_threshold,
    reconstruct_csi,
)
from dtchan.scene import GridSpec, Scene, ScenarioConfig, generate_scenario


def rand_h(seed, shape=(64, 96)):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestGradStep:
    def test_full_mask_unit_step_returns_observation(self):
        h_prev, h0 = rand_h(0), rand_h(1)
        mask = make_mask(SeededRandom(1.0, seed=1), ARRAY, OFDM)
        assert np.array_equal(grad_step(h_prev, h0, mask, 1.0), h0)

    def test_zero_mask_zero_obs_fixed_point(self):
        h_prev = rand_h(2)
        mask = PilotMask(np.zeros((64, 96), dtype=np.uint8), RegularGrid())
        z = grad_step(h_prev, np.zeros_like(h_prev), mask, 1.0)
        assert np.array_equal(z, h_prev)

    def test_matches_direct_formula(self):
        h_prev, h = rand_h(3), rand_h(4)
        mask = make_mask(SeededRandom(0.4, seed=2), ARRAY, OFDM)
        h0 = observe(h, mask)
        for beta in (0.3, 1.0, 1.7):
            want = h_prev - beta * (mask.mask * h_prev - h0)
            got = grad_step(h_prev, h0, mask, beta)
            assert np.allclose(got, want, rtol=1e-12, atol=1e-14)

    def test_shape_mismatch(self):
        mask = make_mask(RegularGrid(), ARRAY, OFDM)
        with pytest.raises(ShapeMismatch):
            grad_step(np.zeros((2, 2)), np.zeros((64, 96)), mask, 1.0)


class TestProx:
    def test_zero_threshold_round_trip(self):
        z = rand_h(5)
        assert np.allclose(prox_soft_threshold(z, 0.0), z, rtol=1e-12, atol=1e-14)

    def test_single_coefficient_shrinkage(self):
        spec = np.zeros((64, 96), dtype=complex)
        mag, phase = 3.0, 0.7
        spec[10, 20] = mag * np.exp(1j * phase)
        z = np.fft.ifft2(spec, norm="ortho")
        out_spec = np.fft.fft2(prox_soft_threshold(z, 1.0), norm="ortho")
        assert abs(out_spec[10, 20]) == pytest.approx(mag - 1.0, abs=1e-10)
        assert np.angle(out_spec[10, 20]) == pytest.approx(phase, abs=1e-10)
        out_spec[10, 20] = 0
        assert np.max(np.abs(out_spec)) < 1e-10

    def test_zeros_stay_zero(self):
        assert not prox_soft_threshold(np.zeros((8, 8), dtype=complex), 0.5).any()

    def test_nonexpansive(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            x, y = rand_h(rng.integers(1 << 30)), rand_h(rng.integers(1 << 30))
            lam = float(rng.uniform(0, 2))
            dx = np.linalg.norm(prox_soft_threshold(x, lam) - prox_soft_threshold(y, lam))
            assert dx <= np.linalg.norm(x - y) * (1 + 1e-12)


class TestFilm:
    def test_clear_los_summary_is_neutral(self):
        params = derive_film(LocalEnvSummary(0.0, 5.0, 1.2))
        assert params.is_neutral

    def test_rank_one_gamma(self):
        params = derive_film(LocalEnvSummary(0.7, 5.0, 1.2))
        g = params.gamma
        rng = np.random.default_rng(8)
        for _ in range(200):
            i, k = rng.integers(0, g.shape[0], 2)
            j, l = rng.integers(0, g.shape[1], 2)
            minor = g[i, j] * g[k, l] - g[i, l] * g[k, j]
            assert abs(minor) < 1e-10

    def test_outer_scaling_identity(self):
        rng = np.random.default_rng(9)
        ga, gs = rng.standard_normal(64), rng.standard_normal(96)
        ba, bs = rng.standard_normal(64), rng.standard_normal(96)
        base = outer_film(ga, gs, ba, bs)
        for c in (0.5, 3.0):
            scaled = outer_film(ga * c, gs / c, ba * c, bs / c)
            assert np.allclose(scaled.gamma, base.gamma, rtol=1e-12)
            assert np.allclose(scaled.bias, base.bias, rtol=1e-12)

    def test_modulate_neutral_identity_and_doubling(self):
        h = rand_h(10)
        neutral = FilmParams(np.ones((64, 96)), np.zeros((64, 96)))
        assert film_modulate(h, neutral) is h  # bit-for-bit short circuit
        doubled = film_modulate(h, FilmParams(np.full((64, 96), 2.0), np.zeros((64, 96))))
        assert np.array_equal(doubled, 2.0 * h)

    def test_modulate_oracle_and_bias_on_real_part(self):
        h = rand_h(11)
        rng = np.random.default_rng(12)
        gamma = rng.uniform(0.5, 2.0, (64, 96))
        bias = rng.standard_normal((64, 96))
        out = film_modulate(h, FilmParams(gamma, bias))
        assert np.allclose(out.real, gamma * h.real + bias, rtol=1e-12, atol=1e-14)
        assert np.allclose(out.imag, gamma * h.imag, rtol=1e-12, atol=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            film_modulate(np.zeros((2, 2)), FilmParams(np.ones((3, 3)), np.zeros((3, 3))))


class TestReconstruct:
    def test_full_mask_zero_threshold_identity(self):
        h = rand_h(13)
        mask = make_mask(SeededRandom(1.0, seed=4), ARRAY, OFDM)
        cfg = ProxConfig(lambda_thr=(0.0, 0.0, 0.0))
        out = reconstruct_csi(observe(h, mask), mask, None, cfg)
        assert np.array_equal(out, h)

    def test_zero_observation_zero_output(self):
        mask = make_mask(SeededRandom(0.5, seed=5), ARRAY, OFDM)
        out = reconstruct_csi(np.zeros((64, 96), dtype=complex), mask)
        assert not out.any()

    def test_pilot_entries_exact(self):
        h = rand_h(14)
        mask = make_mask(SeededRandom(0.5, seed=6), ARRAY, OFDM)
        h0 = observe(h, mask)
        out = reconstruct_csi(h0, mask)
        on = mask.mask.astype(bool)
        assert np.array_equal(out[on], h0[on])

    def test_neutral_film_bitwise_equal_to_no_env(self):
        h = make_path_suite(1, seed=77)[0]
        mask = make_mask(SeededRandom(0.5, seed=7), ARRAY, OFDM)
        h0 = observe(h, mask)
        bare = reconstruct_csi(h0, mask, None)
        neutral = reconstruct_csi(
            h0, mask, LocalEnvSummary(0.4, 5.0, 1.0), film_cfg=FilmConfig(gamma_gain=0.0, bias_gain=0.0)
        )
        assert np.array_equal(bare, neutral)

    def test_env_conditioning_changes_output(self):
        h = make_path_suite(1, seed=78)[0]
        mask = make_mask(SeededRandom(0.5, seed=8), ARRAY, OFDM)
        h0 = observe(h, mask)
        bare = reconstruct_csi(h0, mask, None)
        conditioned = reconstruct_csi(h0, mask, LocalEnvSummary(0.8, 3.0, 2.0))
        assert not np.array_equal(bare, conditioned)

    def test_beats_zero_fill_on_small_suite(self):
        suite = make_path_suite(30)
        preds, zfs = [], []
        for i, h in enumerate(suite):
            mask = make_mask(SeededRandom(0.5, seed=1000 + i), ARRAY, OFDM)
            h0 = observe(h, mask)
            preds.append(reconstruct_csi(h0, mask))
            zfs.append(h0)
        assert nmse(preds, suite)[1] <= nmse(zfs, suite)[1] - 6.0


class TestPlBaseline:
    def test_zero_kappa_is_pure_fspl(self):
        scene = Scene((), None, GridSpec())
        m = pl_baseline_map(scene, PlBaselineConfig(kappa=0.0))
        cells = scene.grid.cell_centers()
        dist = np.linalg.norm(cells - scene.bs.as_array(), axis=1).reshape(124, 124)
        want = 20 * np.log10(4 * np.pi * dist * 7.5e9 / 299792458.0)
        assert np.nanmax(np.abs(m.values - want)) < 1e-9

    def test_empty_scene_matches_synthesizer(self):
        scene = Scene((), None, GridSpec())
        base = pl_baseline_map(scene, PlBaselineConfig(kappa=10.0))
        synth = pl_map(scene, SynthConfig(reflection_order=0))
        assert np.nanmax(np.abs(base.values - synth.values)) < 0.01

    def test_single_scatterer_matches_synthesizer(self):
        for seed in range(5):
            scene = generate_scenario(ScenarioConfig(count_range=(1, 1)), seed=seed)
            base = pl_baseline_map(scene, PlBaselineConfig(kappa=10.0))
            synth = pl_map(scene, SynthConfig(reflection_order=0, penetration_db_per_m=10.0))
            both = base.valid_mask.astype(bool) & synth.valid_mask.astype(bool)
            assert np.max(np.abs(base.values[both] - synth.values[both])) < 0.01


def test_local_env_summary_fields():
    from dtchan.scene import footprint_mask

    scene = generate_scenario(ScenarioConfig(), seed=40)
    free = np.argwhere(footprint_mask(scene) == 0)
    i, j = free[len(free) // 3]
    center = scene.grid.cell_center(int(i), int(j))
    env = local_env_summary(scene, center)
    assert 0.0 <= env.pr_at_ut <= 1.0
    assert env.bs_ut_distance == pytest.approx(scene.bs.distance_to(center), rel=1e-12)
    assert env.mean_height_window >= 0.0
