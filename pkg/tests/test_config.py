import math

import pytest
from hypothesis import given, settings, strategies as st

from evtr.config import Config, ConfigError, DriftModel


def test_defaults_follow_robot_setup():
    c = Config()
    assert (c.tau_us, c.v, c.delta_d, c.width, c.height, c.s, c.fov_deg, c.M) == \
        (66_000, 0.35, 0.2, 320, 180, 4, 36.0, 8)
    assert c.delta_alpha == pytest.approx(math.radians(15))
    assert (c.g_theta, c.g_rho) == (1.5e-3, 1.5e-5)


def test_round_trip_text():
    c = Config(seed=9, drift_bias_rot=0.004, timing=True, rho_bar="2.5")
    assert Config.loads(c.dumps()) == c


def test_file_round_trip(tmp_path):
    c = Config(v=0.3, teach_drift_noise_sigma_rot=0.01)
    c.dump(tmp_path / "c.txt")
    assert Config.load(tmp_path / "c.txt") == c


def test_comments_and_blank_lines():
    c = Config.loads("# experiment\n\nseed = 4  # trailing\nv=0.5\n")
    assert (c.seed, c.v) == (4, 0.5)


def test_overrides():
    c = Config().with_overrides(["s=2", "timing=true"])
    assert c.s == 2 and c.timing is True


@pytest.mark.parametrize("text,msg", [
    ("delta_d=0", "delta_d"),
    ("bogus=1", "unknown key"),
    ("s", "key=value"),
    ("s=two", "cannot parse"),
    ("timing=maybe", "cannot parse"),
    ("fov_deg=180", "fov_deg"),
    ("M=400", "M cannot"),
    ("control_hop_us=1500", "multiple"),
    ("rho_bar=high", "rho_bar"),
    ("g_theta=-1", "g_theta"),
    ("drift_wheel_scale_left=0", "wheel"),
])
def test_validation(text, msg):
    with pytest.raises(ConfigError, match=msg):
        Config.loads(text)


def test_drift_models_per_phase():
    c = Config(drift_bias_rot=0.1, teach_drift_bias_rot=0.2)
    assert c.drift("repeat").bias_rot == 0.1 and c.drift("teach").bias_rot == 0.2
    assert DriftModel().is_identity and not c.drift().is_identity


@settings(max_examples=40)
@given(seed=st.integers(0, 2**31), v=st.floats(0.01, 2.0), g=st.floats(0, 1),
       bias=st.floats(-0.1, 0.1), timing=st.booleans())
def test_round_trip_property(seed, v, g, bias, timing):
    c = Config(seed=seed, v=v, g_theta=g, drift_bias_rot=bias, timing=timing)
    assert Config.loads(c.dumps()) == c
