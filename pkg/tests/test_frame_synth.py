import numpy as np
import pytest

from multisqueeze.errors import ConfigurationError, DataFormatError, DimensionError
from multisqueeze.frame_synth import (
    AcquisitionConfig,
    FrameEnsemble,
    _HEADER,
    acquire_ensemble,
    apply_detection,
    load_ensemble,
    render_frame,
    sample_mode_amplitudes,
    save_ensemble,
    shot_rng,
)
from multisqueeze.gaussian_core import Fringe, mean_intensity, output_photons


class TestSampling:
    """Per-mode Gaussian amplitudes."""

    def test_empty_mode_is_zero(self, rng):
        x = sample_mode_amplitudes([3.0, 0.0], rng, 1000)
        assert np.all(x[:, 1] == 0.0)

    def test_second_moment(self, rng):
        photons = np.array([5.0, 2.0, 0.5])
        x = sample_mode_amplitudes(photons, rng, 100_000)
        np.testing.assert_allclose((x**2).mean(axis=0), photons, rtol=0.02)

    def test_independent_modes(self, rng):
        n = 20_000
        x = sample_mode_amplitudes([1.0, 1.0], rng, n)
        assert abs(np.cov(x.T)[0, 1]) < 3 / np.sqrt(n)

    def test_accepts_model(self, default_model, rng):
        assert sample_mode_amplitudes(default_model, rng).shape == (24,)


class TestRender:
    """Frames from amplitudes."""

    def test_single_mode_normalization(self, small_basis):
        frame = render_frame([1.0], small_basis)
        np.testing.assert_allclose(frame, small_basis.modes[0] ** 2 * small_basis.grid.spacing)
        assert frame.sum() == pytest.approx(1.0, abs=1e-12)

    def test_zero_pump(self, small_basis):
        assert np.all(render_frame([1.0, 2.0], small_basis, 0.0) == 0)

    def test_stack_with_per_shot_pump(self, small_basis):
        frames = render_frame(np.array([[1.0, 0.0], [1.0, 0.0]]), small_basis, np.array([1.0, 2.0]))
        np.testing.assert_allclose(frames[1], 2 * frames[0])

    def test_too_many_amplitudes(self, small_basis):
        with pytest.raises(DimensionError):
            render_frame(np.ones(7), small_basis)

    def test_mean_frame_converges_to_profile(self, default_model):
        cfg = AcquisitionConfig(10_000, Fringe.BRIGHT)
        ens = acquire_ensemble(default_model, cfg)
        expected = mean_intensity(default_model) * ens.grid.spacing
        peak = expected.max()
        assert np.max(np.abs(ens.mean_frame - expected)) < 0.05 * peak


class TestDetection:
    """Detector efficiency and shot noise."""

    def test_identity(self):
        f = np.array([1.0, 2.5])
        np.testing.assert_array_equal(apply_detection(f, 1.0), f)

    def test_zero_efficiency(self, rng):
        assert np.all(apply_detection(np.ones(4), 0.0, True, rng) == 0)

    def test_poisson_requires_rng(self):
        with pytest.raises(ConfigurationError):
            apply_detection(np.ones(3), 0.5, True)

    def test_super_poissonian(self, default_model):
        cfg = AcquisitionConfig(2000, Fringe.BRIGHT, 0.5, 0.0, 3, True)
        ens = acquire_ensemble(default_model, cfg)
        var, mean = ens.frames.var(axis=0, ddof=1), ens.mean_frame
        bright = mean > 1.0
        assert np.all(var[bright] >= mean[bright])
        assert np.all(ens.frames == np.round(ens.frames))


class TestAcquisition:
    """Seeded ensembles."""

    def test_bit_identical_replay(self, default_model):
        cfg = AcquisitionConfig(1500, Fringe.BRIGHT, seed=7)
        a = acquire_ensemble(default_model, cfg)
        b = acquire_ensemble(default_model, cfg)
        assert np.array_equal(a.frames, b.frames)

    def test_independent_of_chunking_and_workers(self, default_model):
        cfg = AcquisitionConfig(300, Fringe.BRIGHT, seed=2, pump_rel_std=0.1)
        a = acquire_ensemble(default_model, cfg, workers=1, chunk=512)
        b = acquire_ensemble(default_model, cfg, workers=3, chunk=37)
        assert np.array_equal(a.frames, b.frames)

    def test_streams_are_separate(self, default_model):
        base = acquire_ensemble(default_model, AcquisitionConfig(50, Fringe.BRIGHT, seed=1))
        pumped = acquire_ensemble(default_model, AcquisitionConfig(50, Fringe.BRIGHT, seed=1, pump_rel_std=0.2))
        ratio = pumped.frames.sum(axis=1) / base.frames.sum(axis=1)
        # same amplitudes, only the per-shot pump factor differs
        for k in range(5):
            z = shot_rng(1, Fringe.BRIGHT, k, 1).standard_normal()
            assert ratio[k] == pytest.approx(max(1 + 0.2 * z, 0.0), rel=1e-12)

    def test_seeds_and_fringes_differ(self):
        a = shot_rng(0, Fringe.BRIGHT, 0, 0).standard_normal(4)
        assert not np.array_equal(a, shot_rng(1, Fringe.BRIGHT, 0, 0).standard_normal(4))
        assert not np.array_equal(a, shot_rng(0, Fringe.DARK, 0, 0).standard_normal(4))

    def test_frames_non_negative(self, default_model):
        for f in Fringe:
            ens = acquire_ensemble(default_model.with_fringe(f), AcquisitionConfig(200, f, pump_rel_std=0.5, seed=4))
            assert ens.frames.min() >= 0

    def test_fringe_mismatch(self, default_model):
        with pytest.raises(ConfigurationError):
            acquire_ensemble(default_model, AcquisitionConfig(10, Fringe.DARK))

    def test_total_mean(self, default_model):
        ens = acquire_ensemble(default_model, AcquisitionConfig(4000, Fringe.BRIGHT, seed=5))
        assert ens.total_mean == pytest.approx(output_photons(default_model).sum(), rel=0.05)

    @pytest.mark.parametrize("kwargs", [dict(n_frames=1), dict(detection_eta=1.5), dict(pump_rel_std=-0.1),
                                        dict(seed=-1), dict(fringe="nope")])
    def test_config_validation(self, kwargs):
        with pytest.raises((ConfigurationError, ValueError)):
            AcquisitionConfig(**kwargs)


class TestFileFormat:
    """Binary ensemble files."""

    @pytest.fixture
    def ens(self, default_model):
        return acquire_ensemble(default_model, AcquisitionConfig(20, Fringe.BRIGHT, seed=9))

    def test_roundtrip(self, ens, tmp_path):
        digest = save_ensemble(ens, tmp_path / "a.msq")
        back = load_ensemble(tmp_path / "a.msq")
        assert np.array_equal(back.frames, ens.frames)
        assert back.grid == ens.grid and back.config == ens.config
        assert len(digest) == 64

    def test_payload_size(self, ens, tmp_path):
        save_ensemble(ens, tmp_path / "a.msq")
        raw = (tmp_path / "a.msq").read_bytes()
        meta_len = _HEADER.unpack_from(raw)[-1]
        assert len(raw) - _HEADER.size - meta_len == 20 * 601 * 8

    def test_bad_magic(self, ens, tmp_path):
        p = tmp_path / "a.msq"
        save_ensemble(ens, p)
        raw = bytearray(p.read_bytes())
        raw[:8] = b"NOTFRAME"
        p.write_bytes(bytes(raw))
        with pytest.raises(DataFormatError, match="magic"):
            load_ensemble(p)

    def test_checksum(self, ens, tmp_path):
        p = tmp_path / "a.msq"
        save_ensemble(ens, p)
        raw = bytearray(p.read_bytes())
        raw[-1] ^= 0xFF
        p.write_bytes(bytes(raw))
        with pytest.raises(DataFormatError, match="checksum"):
            load_ensemble(p)

    def test_truncated(self, ens, tmp_path):
        p = tmp_path / "a.msq"
        save_ensemble(ens, p)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(DataFormatError):
            load_ensemble(p)

    def test_single_frame(self, ens, tmp_path):
        p = tmp_path / "one.msq"
        save_ensemble(FrameEnsemble(ens.frames[:1], ens.grid, ens.config), p)
        with pytest.raises(DataFormatError, match="fewer than 2 frames"):
            load_ensemble(p)

    def test_csv(self, ens, tmp_path):
        ens.to_csv(tmp_path / "f.csv")
        np.testing.assert_allclose(np.loadtxt(tmp_path / "f.csv", delimiter=","), ens.frames)
