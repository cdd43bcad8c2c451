import pytest

from ffsrm.config import ConfigError, load_config, parse_config, parse_scalar

GOOD = """
# optics
wavelength_nm = 600
numerical_aperture = 1.3
sample = two_point
presets = low, high
frames = 50, 100
seeds = 1
methods = esi, sofi
sofi.order = 2, 3
sacd.planes = 1 2 4
gamma = 0.5
"""


def test_parse_good():
    cfg = parse_config(GOOD)
    assert cfg.optics.emission_wavelength_nm == 600
    assert cfg.optics.numerical_aperture == 1.3
    assert cfg.simulation["presets"] == ["low", "high"]
    assert cfg.simulation["frames"] == [50, 100]
    assert cfg.benchmark["methods"] == ["esi", "sofi"]
    assert cfg.grids["sofi"]["order"] == [2, 3]
    assert cfg.grids["sacd"]["planes"] == [(1, 2, 4)]


def test_scalars():
    assert parse_scalar("yes") is True
    assert parse_scalar("none") is None
    assert parse_scalar("3") == 3 and parse_scalar("3.5") == 3.5
    assert parse_scalar("TRAC2") == "TRAC2"


@pytest.mark.parametrize("text,line,match", [
    ("a = 1\n", 1, "unknown key"),
    ("\n\nframes = 10\nframes = 20\n", 4, "duplicate"),
    ("sample = actin\nnonsense\n", 2, "key = value"),
    ("foo.order = 2\n", 1, "unknown method"),
    ("sofi.nope = 2\n", 1, "unknown sofi parameter"),
    ("sofi.order = 9\n", 1, "sofi.order"),
    ("presets = low, weird\n", 1, "unknown preset"),
    ("frames = 1\n", 1, ">= 2"),
    ("\nhawk_levels = 2\n", 2, "hawk_levels"),
    ("tau_on = -1\n", 1, "tau_on"),
    ("workers = 0\n", 1, "workers"),
    ("gamma = 1, 2\n", 1, "single value"),
    ("methods = esi, magic\n", 1, "unknown method"),
    ("numerical_aperture = 2.0\n", None, "optics"),
])
def test_errors_name_line(text, line, match):
    with pytest.raises(ConfigError, match=match) as err:
        parse_config(text)
    if line is not None:
        assert err.value.line == line
        assert str(err.value).startswith(f"line {line}:")


def test_load_from_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(GOOD)
    assert load_config(p).source == str(p)
