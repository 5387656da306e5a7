"""Spectrum library over (n, r_B) and least-squares fits of (n_bar, r_B, A)."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from . import __version__
from .ensemble import CloudConfig
from .errors import (ConvergenceError, GridMismatchError, InfeasibleCellError, LibraryError,
                     OutOfGridError, PlacementError, UsageError)
from .interaction import InteractionCoefficients
from .io import dumps_json, file_sha256, read_spectrum, write_spectrum, write_text_atomic
from .simulate import CHUNK_SIZE, CellTask, cell_metadata, run_cell
from .spectra import INFEASIBLE_MASS_TOL, Spectrum, broaden, poisson_weights

log = logging.getLogger(__name__)

MANIFEST = "library.json"
DEFAULT_REALIZATIONS = 100_000


def cell_name(n: int, rb: float) -> str:
    return f"n{int(n)}_rb{float(rb):.3f}"


@dataclass
class Library:
    n_values: list
    rb_values: list
    bin_edges: np.ndarray
    cells: dict  # (n, rb) -> Spectrum, or None when infeasible
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        self.n_values = sorted(int(n) for n in self.n_values)
        self.rb_values = sorted(float(r) for r in self.rb_values)
        self._stacks = {}

    @property
    def n_max(self) -> int:
        return max(self.n_values)

    def feasible(self, n: int, rb: float) -> bool:
        return self.cells.get((int(n), float(rb))) is not None

    def column(self, rb: float, broadening: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """Fixed-n spectra at grid value ``rb`` stacked as ``(n_max, bins)``, row ``i`` is n = i + 1.

        Also returns a boolean mask of infeasible rows (left as zeros).
        """
        key = (float(rb), float(broadening))
        if key in self._stacks:
            return self._stacks[key]
        rows, bad = [], []
        for n in range(1, self.n_max + 1):
            if (n, float(rb)) not in self.cells:
                raise LibraryError(f"library has no cell n={n}, r_B={rb}")
            s = self.cells[(n, float(rb))]
            bad.append(s is None)
            if s is None:
                rows.append(np.zeros(len(self.bin_edges) - 1))
            else:
                rows.append(broaden(s, broadening).values if broadening > 0 else s.values)
        self._stacks[key] = (np.vstack(rows), np.array(bad))
        return self._stacks[key]

    def _column_mix(self, p: np.ndarray, rb: float, broadening: float) -> np.ndarray:
        stack, bad = self.column(rb, broadening)
        mass = float(p[1:][bad].sum())
        if mass > INFEASIBLE_MASS_TOL:
            n_bad = [int(n) for n in np.flatnonzero(bad) + 1]
            raise InfeasibleCellError(
                f"infeasible cells n={n_bad} at r_B={rb} carry Poisson weight {mass:.2e}")
        return p[1:] @ stack

    def mixed(self, n_bar: float, rb: float, reference: Spectrum, broadening: float = 0.0):
        """Poisson mix at ``(n_bar, rb)``; ``rb`` between grid values is linearly interpolated.

        Infeasible cells may enter only with negligible Poisson weight.
        Returns ``(values, provenance)`` where provenance lists the cells used.
        """
        if not np.array_equal(reference.bin_edges, self.bin_edges):
            raise GridMismatchError("zero-seed reference is not on the library grid")
        p, _ = poisson_weights(n_bar, self.n_max)
        grid = self.rb_values
        if len(grid) == 1:
            lo = hi = 0
            t = 0.0
        else:
            if rb < grid[0] or rb > grid[-1]:
                raise OutOfGridError(f"r_B={rb} outside library range [{grid[0]}, {grid[-1]}]")
            hi = max(1, int(np.searchsorted(grid, rb)))
            lo = hi - 1
            t = (rb - grid[lo]) / (grid[hi] - grid[lo])
            if t == 1.0:
                lo, t = hi, 0.0
        vals = (1.0 - t) * self._column_mix(p, grid[lo], broadening)
        used = [grid[lo]]
        if t > 0.0:
            vals = vals + t * self._column_mix(p, grid[hi], broadening)
            used.append(grid[hi])
        vals = vals + p[0] * reference.values
        provenance = [cell_name(n, r) for r in used for n in range(1, self.n_max + 1)
                      if self.feasible(n, r)]
        return vals, provenance


def _load_manifest(out_dir: Path) -> dict | None:
    path = out_dir / MANIFEST
    if not path.exists():
        return None
    return json.loads(path.read_text())


def precompute_library(n_values, rb_values, realizations: int, cloud: CloudConfig,
                       coeff: InteractionCoefficients, bin_edges, master_seed: int,
                       out_dir=None, config_hash: str = "", workers: int = 1,
                       offset: str = "initial_state", chunk_size: int = CHUNK_SIZE,
                       check_fraction: float = 0.01, extra_metadata: dict | None = None) -> Library:
    """Simulate every ``(n, r_B)`` cell, optionally persisting to ``out_dir``.

    With ``out_dir`` the build is resumable: cells already recorded in the
    manifest with a matching file hash are loaded instead of recomputed. A
    manifest written under a different ``config_hash`` is refused.
    Cells whose seeds cannot be placed are marked infeasible.
    """
    n_values = sorted(int(n) for n in n_values)
    rb_values = sorted(float(r) for r in rb_values)
    if not n_values or n_values[0] < 1 or n_values[-1] > 20:
        raise UsageError("n_values must lie within 1..20")
    if not rb_values or rb_values[0] < 0:
        raise UsageError("r_B grid must be non-empty and non-negative")
    edges = np.asarray(bin_edges, dtype=float)
    out = Path(out_dir) if out_dir is not None else None

    manifest = {
        "format": 1,
        "tool_version": __version__,
        "config_hash": config_hash,
        "master_seed": int(master_seed),
        "realizations": int(realizations),
        "n_values": n_values,
        "rb_values_um": rb_values,
        "bin_edges": edges,
        "offset_convention": offset,
        "cells": {},
    }
    manifest.update(extra_metadata or {})
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        old = _load_manifest(out)
        if old is not None:
            if old.get("config_hash") != config_hash:
                raise LibraryError(
                    f"{out / MANIFEST} was built with config hash {old.get('config_hash')!r}, "
                    f"refusing to resume with {config_hash!r}")
            manifest["cells"] = old.get("cells", {})

    cells = {}
    for rb in rb_values:
        for n in n_values:
            name = cell_name(n, rb)
            entry = manifest["cells"].get(name)
            if out is not None and entry is not None:
                if entry["status"] == "infeasible":
                    cells[(n, rb)] = None
                    continue
                path = out / entry["file"]
                if path.exists() and file_sha256(path) == entry["sha256"]:
                    cells[(n, rb)] = read_spectrum(path)
                    continue
            below = [m for m in n_values if m < n and (m, rb) in cells and cells[(m, rb)] is None]
            if below:
                # any valid n-seed placement contains a valid (n-1)-seed one
                cells[(n, rb)] = None
                manifest["cells"][name] = {"n": n, "rb_um": rb, "status": "infeasible",
                                           "reason": f"n={below[0]} already infeasible"}
                if out is not None:
                    write_text_atomic(out / MANIFEST, dumps_json(manifest))
                continue
            task = CellTask(cloud, coeff, n, rb, tuple(float(e) for e in edges), int(master_seed),
                            offset=offset, check_fraction=check_fraction)
            try:
                result = run_cell(task, realizations, workers, chunk_size)
            except PlacementError as exc:
                log.warning("cell %s infeasible: %s", name, exc)
                cells[(n, rb)] = None
                manifest["cells"][name] = {"n": n, "rb_um": rb, "status": "infeasible",
                                           "reason": str(exc)}
            else:
                if result.partial:
                    raise KeyboardInterrupt
                meta = cell_metadata(task, result)
                meta.update({"config_hash": config_hash, "tool_version": __version__})
                spec = result.spectrum.to_spectrum(meta)
                cells[(n, rb)] = spec
                if out is not None:
                    csv_path, _ = write_spectrum(spec, out / name)
                    manifest["cells"][name] = {"n": n, "rb_um": rb, "status": "ok",
                                               "file": csv_path.name,
                                               "sha256": file_sha256(csv_path)}
                else:
                    manifest["cells"][name] = {"n": n, "rb_um": rb, "status": "ok"}
            if out is not None:
                write_text_atomic(out / MANIFEST, dumps_json(manifest))
    return Library(n_values, rb_values, edges, cells, manifest)


def load_library(path) -> Library:
    path = Path(path)
    manifest = _load_manifest(path) if path.is_dir() else None
    if manifest is None:
        raise FileNotFoundError(f"no library manifest at {path / MANIFEST}")
    cells = {}
    for name, entry in manifest["cells"].items():
        key = (int(entry["n"]), float(entry["rb_um"]))
        if entry["status"] == "ok":
            cells[key] = read_spectrum(path / entry["file"])
        else:
            cells[key] = None
    return Library(manifest["n_values"], manifest["rb_values_um"],
                   np.asarray(manifest["bin_edges"], dtype=float), cells, manifest)


# -- fitting ------------------------------------------------------------------

@dataclass
class FitResult:
    n_bar: float
    blockade_radius: float
    amplitude: float
    residual: float
    iterations: int
    grid_provenance: list
    converged: bool = True
    rb_fixed: bool = False
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def best_amplitude(model: np.ndarray, measured: np.ndarray, weights: np.ndarray) -> float:
    """Least-squares ``A`` for ``A * model ~ measured``: ``<g, m>_w / <g, g>_w``."""
    gg = float(np.sum(weights * model * model))
    if gg == 0.0:
        return 0.0
    return float(np.sum(weights * model * measured)) / gg


def fit_weights(measured: Spectrum, weighted: bool = False) -> np.ndarray:
    """Per-bin weights; bins with infinite error (no measured data) get zero."""
    w = np.ones_like(measured.values)
    if measured.errors is not None:
        w[~np.isfinite(measured.errors)] = 0.0
        if weighted:
            ok = np.isfinite(measured.errors) & (measured.errors > 0)
            w = np.where(ok, 1.0 / np.where(ok, measured.errors, 1.0) ** 2, 0.0)
    return w


def fit_spectrum(measured: Spectrum, library: Library, initial_guess=(1.0, None),
                 reference: Spectrum | None = None, broadening: float = 0.0,
                 weighted: bool = False, xtol=(1e-3, 1e-2), maxiter: int = 500) -> FitResult:
    """Fit ``A * mix(n_bar, r_B)`` to ``measured`` by Nelder-Mead over ``(n_bar, r_B)``.

    ``A`` is eliminated in closed form at every evaluation. With a single
    r_B in the library r_B is held fixed. ``reference`` is the zero-seed
    spectrum (defaults to a unit line in the bin holding 0 MHz).
    """
    if not np.array_equal(measured.bin_edges, library.bin_edges):
        raise GridMismatchError("measured spectrum must be resampled onto the library grid")
    if reference is None:
        reference = delta_reference(library.bin_edges)
        if broadening > 0:
            reference = broaden(reference, broadening)
    y = measured.values
    w = fit_weights(measured, weighted)
    grid = library.rb_values
    rb_fixed = len(grid) < 2
    n0, rb0 = initial_guess
    rb0 = grid[len(grid) // 2] if rb0 is None else float(rb0)
    scale = np.array([xtol[0], xtol[1]])
    pushed = {"low": False, "high": False}

    def residual(n_bar, rb):
        g, _ = library.mixed(n_bar, rb, reference, broadening)
        a = best_amplitude(g, y, w)
        return float(np.sum(w * (a * g - y) ** 2)), a

    def objective(z):
        n_bar = z[0] * scale[0]
        rb = rb0 if rb_fixed else z[1] * scale[1]
        if n_bar < 0 or n_bar > library.n_max:
            return np.inf
        if not rb_fixed and (rb < grid[0] or rb > grid[-1]):
            pushed["low" if rb < grid[0] else "high"] = True
            return np.inf
        return residual(n_bar, rb)[0]

    history = []
    z0 = np.array([n0, rb0]) / scale
    step = np.array([max(0.25 * n0, 0.25), 0.1 * (grid[-1] - grid[0]) if not rb_fixed else 0.0]) / scale
    if rb_fixed:
        z0, simplex = z0[:1], np.array([[z0[0]], [z0[0] + step[0]]])
    else:
        simplex = np.array([z0, z0 + [step[0], 0.0], z0 + [0.0, step[1]]])
    fscale = max(float(np.sum(w * y * y)), 1e-300)
    opt = optimize.minimize(
        objective, z0, method="Nelder-Mead",
        callback=lambda zk: history.append(objective(zk)),
        options={"initial_simplex": simplex, "xatol": 1.0, "fatol": 1e-14 * fscale,
                 "maxiter": maxiter, "maxfev": 4 * maxiter + 10})
    n_bar = float(opt.x[0] * scale[0])
    rb = rb0 if rb_fixed else float(opt.x[1] * scale[1])
    if not opt.success:
        raise ConvergenceError(f"fit did not converge after {opt.nit} iterations: {opt.message}")
    if not rb_fixed:
        if pushed["low"] and rb - grid[0] < xtol[1]:
            raise OutOfGridError(f"fit pushes r_B below the library grid (r_B={rb:.4f})")
        if pushed["high"] and grid[-1] - rb < xtol[1]:
            raise OutOfGridError(f"fit pushes r_B above the library grid (r_B={rb:.4f})")
    res, amp = residual(n_bar, rb)
    _, provenance = library.mixed(n_bar, rb, reference, broadening)
    return FitResult(n_bar, rb, amp, res, int(opt.nit), provenance, True, rb_fixed, history)


def delta_reference(bin_edges) -> Spectrum:
    """Unit-weight line at 0 MHz: the simulated spectrum of a lone probe."""
    edges = np.asarray(bin_edges, dtype=float)
    values = np.zeros(len(edges) - 1)
    i = int(np.searchsorted(edges, 0.0, side="right") - 1)
    if 0 <= i < len(values):
        values[i] = 1.0 / (edges[i + 1] - edges[i])
    return Spectrum(edges.copy(), values, {"reference": "simulated_n0"})
