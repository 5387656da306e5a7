"""Run configuration: strict TOML schema, CLI overrides, config hash."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .ensemble import CloudConfig
from .errors import ConfigError
from .hamiltonian import OFFSETS
from .interaction import InteractionCoefficients
from .spectra import uniform_edges

OUT_ENV = "RYDHOP_OUT"
DEFAULT_CONFIG = "default_51s_51p.toml"

_REQUIRED = object()

# section -> key -> (accepted types, default)
SCHEMA = {
    "cloud": {
        "atom_number": ((int,), 90_000),
        "tf_radii_um": ((list,), [4.6, 8.2, 4.6]),
        "mode": ((str,), "lazy"),
    },
    "interaction": {
        "c3_radial": ((int, float), _REQUIRED),
        "c6_down": ((int, float), 0.0),
        "c6_up": ((int, float), 0.0),
        "quantization_axis": ((list,), [0.0, 0.0, 1.0]),
        "c6_down_table": ((dict,), None),
        "placeholder": ((bool,), False),
    },
    "simulation": {
        "n": ((int,), None),
        "n_bar": ((int, float), None),
        "blockade_radius_um": ((int, float), 3.4),
        "realizations": ((int,), 100_000),
        "seed": ((int,), 0),
        "workers": ((int,), 1),
        "offset": ((str,), "initial_state"),
        "n_max": ((int,), 20),
        "chunk_size": ((int,), 4096),
        "check_fraction": ((int, float), 0.01),
        "dump_realizations": ((bool,), False),
    },
    "library": {
        "n_values": ((list,), list(range(1, 21))),
        "rb_values_um": ((list,), [3.4]),
        "realizations": ((int,), None),
    },
    "bins": {
        "count": ((int,), 201),
        "range_mhz": ((list,), [-30.0, 30.0]),
    },
    "lineshape": {
        "linewidth_mhz": ((int, float), 0.0),
        "reference_file": ((str,), ""),
    },
    "localization": {
        "pair_threshold": ((int, float), 0.9),
        "window": ((int,), 5),
        "profile_bins": ((int,), 60),
        "tail_range_mhz": ((list,), None),
    },
    "output": {
        "dir": ((str,), "out"),
    },
}

# keys that never change results and stay out of the hash
_UNHASHED = {("simulation", "workers"), ("output", "dir")}
# keys that do not change individual library cells; extending the grid may resume
_LIBRARY_UNHASHED = _UNHASHED | {
    ("simulation", "n"), ("simulation", "n_bar"), ("simulation", "blockade_radius_um"),
    ("simulation", "n_max"), ("simulation", "dump_realizations"),
    ("library", "n_values"), ("library", "rb_values_um"),
}


@dataclass
class RunConfig:
    data: dict
    source: str = "<defaults>"

    def __getitem__(self, section):
        return self.data[section]

    @property
    def cloud(self) -> CloudConfig:
        c = self.data["cloud"]
        return CloudConfig(c["atom_number"], tuple(c["tf_radii_um"]))

    @property
    def coefficients(self) -> InteractionCoefficients:
        i = self.data["interaction"]
        table = None
        if i["c6_down_table"] is not None:
            table = (tuple(i["c6_down_table"]["cos2"]), tuple(i["c6_down_table"]["factor"]))
        return InteractionCoefficients(float(i["c3_radial"]), float(i["c6_down"]), float(i["c6_up"]),
                                       tuple(i["quantization_axis"]), table)

    @property
    def sim(self) -> dict:
        return self.data["simulation"]

    @property
    def bin_edges(self):
        b = self.data["bins"]
        return uniform_edges(b["count"], *b["range_mhz"])

    @property
    def out_dir(self) -> Path:
        return Path(self.data["output"]["dir"])

    def hashed_view(self, skip=_UNHASHED) -> dict:
        view = copy.deepcopy(self.data)
        for section, key in skip:
            view[section].pop(key, None)
        return view

    def config_hash(self) -> str:
        blob = json.dumps(self.hashed_view(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def library_hash(self) -> str:
        """Hash of everything that shapes a library cell, excluding the grid itself."""
        view = self.hashed_view(_LIBRARY_UNHASHED)
        for section in ("lineshape", "localization"):
            view.pop(section, None)
        blob = json.dumps(view, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)


def _check(section: str, key: str, value, types):
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(f"[{section}] {key}: expected {types[0].__name__}, got bool")
    if float in types and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, types):
        names = "/".join(t.__name__ for t in types)
        raise ConfigError(f"[{section}] {key}: expected {names}, got {type(value).__name__}")
    return value


def from_dict(raw: dict, source: str = "<dict>") -> RunConfig:
    unknown = set(raw) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {sorted(unknown)}")
    data = {}
    for section, keys in SCHEMA.items():
        given = raw.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"{source}: [{section}] must be a table")
        bad = set(given) - set(keys)
        if bad:
            raise ConfigError(f"{source}: unknown key(s) in [{section}]: {sorted(bad)}")
        data[section] = {}
        for key, (types, default) in keys.items():
            if key in given:
                data[section][key] = _check(section, key, given[key], types)
            elif default is _REQUIRED:
                raise ConfigError(f"{source}: [{section}] {key} is required")
            else:
                data[section][key] = copy.deepcopy(default)
    cfg = RunConfig(data, source)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    s = cfg.sim
    if s["offset"] not in OFFSETS:
        raise ConfigError(f"[simulation] offset must be one of {OFFSETS}")
    if cfg["cloud"]["mode"] not in ("lazy", "materialized"):
        raise ConfigError("[cloud] mode must be 'lazy' or 'materialized'")
    if s["n"] is not None and s["n"] < 0:
        raise ConfigError("[simulation] n must be >= 0")
    if s["n_bar"] is not None and s["n_bar"] < 0:
        raise ConfigError("[simulation] n_bar must be >= 0")
    if s["realizations"] < 1 or s["chunk_size"] < 1 or s["workers"] < 1:
        raise ConfigError("[simulation] realizations, chunk_size and workers must be >= 1")
    if not 0 < s["n_max"] <= 20:
        raise ConfigError("[simulation] n_max must lie in 1..20")
    if len(cfg["bins"]["range_mhz"]) != 2:
        raise ConfigError("[bins] range_mhz needs two values")
    table = cfg["interaction"]["c6_down_table"]
    if table is not None and set(table) != {"cos2", "factor"}:
        raise ConfigError("[interaction] c6_down_table needs exactly the keys cos2, factor")
    try:
        cfg.cloud
        cfg.coefficients
        cfg.bin_edges
    except Exception as exc:  # surface as a config problem
        raise ConfigError(str(exc)) from exc


def load_config(path=None) -> RunConfig:
    """Parse a TOML config (the packaged placeholder config when ``path`` is None)."""
    if path is None:
        text = resources.files("rydhop.data").joinpath(DEFAULT_CONFIG).read_text()
        source = f"<packaged {DEFAULT_CONFIG}>"
    else:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {p}")
        text = p.read_text()
        source = str(p)
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return from_dict(raw, source)


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Apply CLI-style overrides (``None`` means not given) and the output env variable."""
    data = cfg.to_dict()
    mapping = {
        "seed": ("simulation", "seed"),
        "workers": ("simulation", "workers"),
        "n": ("simulation", "n"),
        "n_bar": ("simulation", "n_bar"),
        "rb": ("simulation", "blockade_radius_um"),
        "realizations": ("simulation", "realizations"),
        "bins": ("bins", "count"),
        "range_mhz": ("bins", "range_mhz"),
        "n_values": ("library", "n_values"),
        "rb_values": ("library", "rb_values_um"),
    }
    env_out = os.environ.get(OUT_ENV)
    if env_out:
        data["output"]["dir"] = env_out
    if overrides.get("out") is not None:
        data["output"]["dir"] = str(overrides["out"])
    for name, (section, key) in mapping.items():
        value = overrides.get(name)
        if value is not None:
            data[section][key] = list(value) if isinstance(value, tuple) else value
    if overrides.get("n") is not None:
        data["simulation"]["n_bar"] = None
    elif overrides.get("n_bar") is not None:
        data["simulation"]["n"] = None
    out = RunConfig(data, cfg.source)
    validate(out)
    return out
