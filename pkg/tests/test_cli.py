import json
import subprocess
import sys

import numpy as np
import pytest

from rydhop.cli import main
from rydhop.io import read_spectrum, write_measured

CONFIG = """
[cloud]
atom_number = 90000
tf_radii_um = [4.6, 8.2, 4.6]

[interaction]
c3_radial = 1000.0
c6_down = 20000.0
placeholder = true

[simulation]
n = 1
blockade_radius_um = 3.4
realizations = 1000
seed = 11
n_max = 3

[library]
n_values = [1, 2, 3]
rb_values_um = [3.4]
realizations = 400

[bins]
count = 61
range_mhz = [-30.0, 30.0]

[lineshape]
linewidth_mhz = 1.0
"""


@pytest.fixture
def cfg(tmp_path, monkeypatch):
    monkeypatch.delenv("RYDHOP_OUT", raising=False)
    p = tmp_path / "run.toml"
    p.write_text(CONFIG)
    return p


def test_simulate_n1(cfg, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    printed = capsys.readouterr().out.split()
    assert any(p.endswith("spectrum_n1_rb3.400.csv") for p in printed)
    s = read_spectrum(out / "spectrum_n1_rb3.400.csv")
    assert s.metadata["realizations"] == 1000
    assert s.metadata["tool_version"] and len(s.metadata["config_hash"]) == 16
    assert s.metadata["coefficients_placeholder"] is True
    assert (out / "spectrum_n1_rb3.400.svg").read_text().startswith("<?xml")
    rec = json.loads((out / "run_simulate.json").read_text())
    assert rec["command"] == "simulate" and "timestamp" in rec


def test_simulate_line_count(cfg, tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--n", "1"]) == 0
    s = read_spectrum(out / "spectrum_n1_rb3.400.json")
    assert s.metadata["lines"] == 2000


def test_simulate_is_byte_reproducible(cfg, tmp_path):
    for d in ("a", "b"):
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / d),
                     "--n", "2", "--realizations", "300"]) == 0
    for name in ("spectrum_n2_rb3.400.csv", "spectrum_n2_rb3.400.json", "spectrum_n2_rb3.400.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_workers_do_not_change_output(cfg, tmp_path):
    args = ["simulate", "--config", str(cfg), "--n", "2", "--realizations", "300"]
    assert main(args + ["--out", str(tmp_path / "a"), "--workers", "1"]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    name = "spectrum_n2_rb3.400.csv"
    assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_n_bar(cfg, tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--n-bar", "0.5",
                 "--realizations", "300"]) == 0
    s = read_spectrum(out / "spectrum_nbar0.5_rb3.400.csv")
    assert s.metadata["p0"] == pytest.approx(np.exp(-0.5), rel=1e-15)
    assert s.metadata["n_max"] == 3
    assert s.metadata["broadening_fwhm_mhz"] == 1.0
    # lines beyond the +-30 MHz window carry the missing mass
    assert 0.95 * np.exp(-0.5) < s.integral() < 1.0 - s.metadata["truncation_mass"]


def test_simulate_n0_is_reference(cfg, tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--n", "0"]) == 0
    s = read_spectrum(out / "spectrum_n0_rb3.400.csv")
    assert s.values.argmax() in (29, 30)
    assert s.integral() == pytest.approx(1.0, abs=0.02)


def test_env_output_dir(cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("RYDHOP_OUT", str(tmp_path / "env"))
    assert main(["simulate", "--config", str(cfg), "--realizations", "50"]) == 0
    assert (tmp_path / "env" / "spectrum_n1_rb3.400.csv").exists()


def test_dump_and_analyze_profile(cfg, tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--n", "3",
                 "--realizations", "500", "--dump"]) == 0
    dumps = out / "dumps"
    assert list(dumps.glob("*_energies.npy"))
    spec = out / "spectrum_n3_rb3.400.csv"
    assert main(["analyze", "--config", str(cfg), "--spectrum", str(spec), "--dumps", str(dumps),
                 "--profile-bins", "12", "--out", str(tmp_path / "an")]) == 0
    prof = json.loads((tmp_path / "an" / "localization_profile.json").read_text())
    assert len(prof["mean_ipr"]) == 12
    energies = np.concatenate([np.load(f) for f in dumps.glob("*_energies.npy")])
    assert energies.size == 500 * 4
    assert sum(prof["count"]) == np.count_nonzero(np.abs(energies) <= 30.0)
    assert (tmp_path / "an" / "localization_profile.svg").exists()


def test_analyze_ratio_and_tail(cfg, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--realizations", "2000"]) == 0
    spec = out / "spectrum_n1_rb3.400.csv"
    ref = tmp_path / "ref.csv"
    x = np.linspace(-30, 30, 301)
    write_measured(ref, x, 1.0 / (1 + (2 * x / 1.0) ** 2))
    assert main(["analyze", "--spectrum", str(spec), "--reference", str(ref),
                 "--tail-range", "5", "25", "--out", str(tmp_path / "an")]) == 0
    curve = json.loads((tmp_path / "an" / "ratio_curve.json").read_text())
    assert curve["metadata"]["smoothing_window"] == 5
    assert curve["metadata"]["source_spectrum"] == spec.name
    tail = json.loads((tmp_path / "an" / "tail_exponent.json").read_text())
    assert tail["fit_range_mhz"] == [5.0, 25.0]
    assert {"positive", "negative"} <= set(tail)


def test_build_library_resume_and_hash(cfg, tmp_path):
    out = tmp_path / "o"
    args = ["build-library", "--config", str(cfg), "--out", str(out), "--n-values", "1",
            "--rb-values", "3.4"]
    assert main(args) == 0
    lib = out / "library"
    assert sorted(p.name for p in lib.iterdir()) == ["library.json", "n1_rb3.400.csv",
                                                    "n1_rb3.400.json"]
    manifest = json.loads((lib / "library.json").read_text())
    assert manifest["realizations"] == 400
    stamp = (lib / "n1_rb3.400.csv").stat().st_mtime_ns
    assert main(args[:-3] + ["1", "2", "--rb-values", "3.4"]) == 0
    assert (lib / "n1_rb3.400.csv").stat().st_mtime_ns == stamp
    assert (lib / "n2_rb3.400.csv").exists()
    assert main(args + ["--seed", "99"]) == 2


def test_fit_round_trip(cfg, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["build-library", "--config", str(cfg), "--out", str(out)]) == 0
    lib = out / "library"
    from rydhop.fit import delta_reference, load_library
    from rydhop.spectra import broaden
    library = load_library(lib)
    ref = broaden(delta_reference(library.bin_edges), 1.0)
    g, _ = library.mixed(0.4, 3.4, ref, 1.0)
    x = 0.5 * (library.bin_edges[1:] + library.bin_edges[:-1])
    meas = tmp_path / "meas.csv"
    write_measured(meas, x, 2.5 * g)
    capsys.readouterr()
    assert main(["fit", "--measured", str(meas), "--library", str(lib), "--linewidth", "1.0",
                 "--initial", "0.8", "3.4"]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["n_bar"] == pytest.approx(0.4, rel=1e-3)
    assert printed["amplitude"] == pytest.approx(2.5, rel=1e-3)
    result = json.loads((out / "fit" / "fit_result.json").read_text())
    assert result["rb_fixed"] is True and result["library_realizations"] == 400
    assert (out / "fit" / "fit_overlay.svg").exists()


def test_fit_missing_library(tmp_path, capsys):
    meas = tmp_path / "m.csv"
    write_measured(meas, [0.0, 1.0], [1.0, 1.0])
    assert main(["fit", "--measured", str(meas), "--library", str(tmp_path / "nolib")]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == 2 and "library" in err["message"]


def test_usage_errors(cfg, capsys):
    assert main(["simulate", "--bogus"]) == 1
    assert main([]) == 1
    assert main(["simulate", "--config", str(cfg), "--n", "1", "--n-bar", "1"]) == 1


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("[interaction]\nc3_radial = 1000\nwhat = 1\n")
    assert main(["simulate", "--config", str(p)]) == 1
    assert main(["simulate", "--config", str(tmp_path / "missing.toml")]) == 2


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "rydhop", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("rydhop ")
