import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multisqueeze import config as cfgmod
from multisqueeze.config import ExperimentConfig
from multisqueeze.errors import ConfigurationError


class TestDefaults:
    """Built-in experiment parameters."""

    def test_values(self):
        c = ExperimentConfig()
        assert (c.squeezer.gain_collinear, c.squeezer.gain, c.amplifier.gain) == (1.1, 1.05, 4.0)
        assert (c.modes.simulate, c.modes.keep, c.modes.report) == (24, 12, 8)
        assert c.loss.eta_pre == 0.85 and c.loss.eta_detect == 0.5
        assert c.acquisition.n_frames == 1500 and c.acquisition.seeds == (0, 1, 2, 3)
        assert c.scan.n_phases == 200
        assert (c.grid.theta_min, c.grid.theta_max, c.grid.n_points) == (-30e-3, 30e-3, 601)

    def test_empty_file_is_default(self):
        assert cfgmod.loads("") == ExperimentConfig()

    def test_hashable(self):
        c = ExperimentConfig()
        assert hash(c) == hash(ExperimentConfig())
        assert len({c, ExperimentConfig()}) == 1


class TestParsing:
    """YAML parsing and validation."""

    def test_partial_override(self):
        c = cfgmod.loads("acquisition:\n  n_frames: 200\n  seeds: [5, 6]\nloss:\n  eta_pre: 0.9\n")
        assert c.acquisition.n_frames == 200 and c.acquisition.seeds == (5, 6)
        assert c.loss.eta_pre == 0.9 and c.loss.eta_detect == 0.5

    def test_int_where_float_expected(self):
        c = cfgmod.loads("amplifier:\n  gain: 4\n")
        assert c == ExperimentConfig() and c.config_hash() == ExperimentConfig().config_hash()

    def test_unknown_key_names_field_and_line(self):
        text = "squeezer:\n  gain: 1.0\n  gian: 2.0\n"
        with pytest.raises(ConfigurationError) as info:
            cfgmod.loads(text, "exp.yaml")
        msg = str(info.value)
        assert "gian" in msg and "exp.yaml" in msg

    def test_out_of_range_names_line(self):
        text = "loss:\n  eta_pre: 1.5\n"
        with pytest.raises(ConfigurationError, match=r"exp.yaml:2: loss.eta_pre"):
            cfgmod.loads(text, "exp.yaml")

    @pytest.mark.parametrize("text", [
        "grid:\n  n_points: 1\n",
        "grid:\n  theta_min: 0.01\n  theta_max: -0.01\n",
        "modes:\n  keep: 30\n",
        "modes:\n  report: 13\n",
        "acquisition:\n  seeds: []\n",
        "acquisition:\n  seeds: [1, 1]\n",
        "acquisition:\n  n_frames: 1\n",
        "squeezer:\n  sigma0: 0\n",
        "reconstruction:\n  signs: maybe\n",
        "- a\n- b\n",
        "grid: [\n",
        "acquisition:\n  shot_noise: 1\n",
    ])
    def test_invalid(self, text):
        with pytest.raises(ConfigurationError):
            cfgmod.loads(text)

    def test_round_trip_file(self, tmp_path):
        c = cfgmod.loads("acquisition:\n  seeds: [3]\nscan:\n  n_phases: 50\noutput_dir: out\n")
        cfgmod.dump(c, tmp_path / "c.yaml")
        back = cfgmod.load(tmp_path / "c.yaml")
        assert back == c and back.config_hash() == c.config_hash()

    @settings(max_examples=40, deadline=None)
    @given(
        g1=st.floats(0, 2), g2=st.floats(0, 6), eta=st.floats(0.01, 1.0),
        seeds=st.lists(st.integers(0, 10_000), min_size=1, max_size=5, unique=True),
        n=st.integers(2, 100_000), pump=st.floats(0, 1), shot=st.booleans(),
    )
    def test_round_trip_property(self, g1, g2, eta, seeds, n, pump, shot):
        text = (f"squeezer:\n  gain: {g1!r}\namplifier:\n  gain: {g2!r}\nloss:\n  eta_detect: {eta!r}\n"
                f"acquisition:\n  seeds: {seeds}\n  n_frames: {n}\n  pump_rel_std: {pump!r}\n"
                f"  shot_noise: {str(shot).lower()}\n")
        c = cfgmod.loads(text)
        assert cfgmod.loads(c.to_yaml()) == c

    def test_hash_changes_with_content(self):
        a = ExperimentConfig()
        assert a.with_seeds([9]).config_hash() != a.config_hash()
        assert len(a.config_hash()) == 64
        assert a.with_output("elsewhere").config_hash() == a.config_hash()
