import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydhop.config import OUT_ENV, apply_overrides, from_dict, load_config
from rydhop.errors import ConfigError, DataError
from rydhop.io import (dumps_json, read_measured, read_spectrum, spectrum_to_csv, with_ext,
                       write_measured, write_spectrum)
from rydhop.spectra import Spectrum, uniform_edges

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=40, deadline=None)
@given(values=st.lists(finite, min_size=1, max_size=30))
def test_csv_round_trip_bit_exact(values, tmp_path_factory):
    edges = uniform_edges(len(values), -3.3, 7.1)
    s = Spectrum(edges, np.array(values), {"n": 3, "note": "x"}, np.abs(np.array(values)))
    d = tmp_path_factory.mktemp("rt")
    csv_path, json_path = write_spectrum(s, d / "spec_rb3.400")
    assert csv_path.name == "spec_rb3.400.csv"
    for path in (csv_path, json_path):
        back = read_spectrum(path)
        assert np.array_equal(back.bin_edges, s.bin_edges)
        assert np.array_equal(back.values, s.values)
        assert np.array_equal(back.errors, s.errors)
        assert back.metadata == s.metadata


def test_csv_layout():
    text = spectrum_to_csv(Spectrum(uniform_edges(2, 0, 1), np.array([0.5, 1.5]), {"b": 1, "a": [1, 2]}))
    assert text.splitlines() == ["# a=[1, 2]", "# b=1", "bin_left_MHz,bin_right_MHz,density_per_MHz",
                                 "0.0,0.5,0.5", "0.5,1.0,1.5"]


def test_with_ext_keeps_dots(tmp_path):
    assert with_ext(tmp_path / "n1_rb3.400", ".csv").name == "n1_rb3.400.csv"
    assert with_ext(tmp_path / "a.csv", ".csv").name == "a.csv"


def test_read_spectrum_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_spectrum(tmp_path / "none.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y,z\n1,2,3\n")
    with pytest.raises(DataError):
        read_spectrum(bad)
    gap = tmp_path / "gap.csv"
    gap.write_text("bin_left_MHz,bin_right_MHz,density_per_MHz\n0,1,1\n2,3,1\n")
    with pytest.raises(DataError):
        read_spectrum(gap)


def test_measured_round_trip(tmp_path):
    x = np.linspace(-5, 5, 11)
    y = np.exp(-x ** 2)
    write_measured(tmp_path / "m.csv", x, y, np.full(11, 0.1), {"source": "synthetic"})
    dx, dy, de, meta = read_measured(tmp_path / "m.csv")
    assert np.array_equal(dx, x) and np.array_equal(dy, y) and np.all(de == 0.1)
    assert meta == {"source": "synthetic"}
    write_measured(tmp_path / "n.csv", x, y)
    assert read_measured(tmp_path / "n.csv")[2] is None
    (tmp_path / "o.csv").write_text("freq,sig\n1,2\n3,4\n")
    with pytest.raises(DataError):
        read_measured(tmp_path / "o.csv")


def test_json_nonfinite_becomes_null():
    assert json.loads(dumps_json({"a": float("nan"), "b": np.float64(2.0), "c": np.arange(2)})) == \
        {"a": None, "b": 2.0, "c": [0, 1]}


def test_packaged_config_loads():
    cfg = load_config()
    assert cfg["interaction"]["placeholder"] is True
    assert cfg.sim["offset"] == "initial_state"
    assert len(cfg.bin_edges) == cfg["bins"]["count"] + 1
    assert len(cfg.config_hash()) == 16


def test_schema_is_strict():
    base = {"interaction": {"c3_radial": 1000}}
    from_dict(base)
    with pytest.raises(ConfigError):
        from_dict({**base, "extra": {}})
    with pytest.raises(ConfigError):
        from_dict({"interaction": {"c3_radial": 1000, "c9": 1}})
    with pytest.raises(ConfigError):
        from_dict({})
    with pytest.raises(ConfigError):
        from_dict({**base, "simulation": {"realizations": "many"}})
    with pytest.raises(ConfigError):
        from_dict({**base, "simulation": {"realizations": True}})
    with pytest.raises(ConfigError):
        from_dict({**base, "simulation": {"offset": "zero"}})
    with pytest.raises(ConfigError):
        from_dict({**base, "simulation": {"n_max": 21}})
    with pytest.raises(ConfigError):
        from_dict({**base, "cloud": {"tf_radii_um": [1.0, -1.0, 1.0]}})


def test_bad_toml(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("[interaction\nc3_radial = 1")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.toml")


def test_hash_ignores_workers_and_output(monkeypatch):
    cfg = from_dict({"interaction": {"c3_radial": 1000}})
    monkeypatch.delenv(OUT_ENV, raising=False)
    h = cfg.config_hash()
    assert apply_overrides(cfg, workers=4, out="elsewhere").config_hash() == h
    assert apply_overrides(cfg, seed=1).config_hash() != h
    assert apply_overrides(cfg, realizations=10).config_hash() != h


def test_output_env_override(monkeypatch):
    cfg = from_dict({"interaction": {"c3_radial": 1000}})
    monkeypatch.setenv(OUT_ENV, "/tmp/envout")
    assert str(apply_overrides(cfg).out_dir) == "/tmp/envout"
    assert str(apply_overrides(cfg, out="cli").out_dir) == "cli"


def test_n_and_n_bar_overrides_clear_each_other():
    cfg = from_dict({"interaction": {"c3_radial": 1000}, "simulation": {"n_bar": 2.0}})
    a = apply_overrides(cfg, n=3)
    assert a.sim["n"] == 3 and a.sim["n_bar"] is None
    b = apply_overrides(a, n_bar=1.5)
    assert b.sim["n_bar"] == 1.5 and b.sim["n"] is None
    c = apply_overrides(cfg, range_mhz=(-5.0, 5.0), bins=11)
    assert c["bins"]["range_mhz"] == [-5.0, 5.0] and len(c.bin_edges) == 12
