"""Command-line entry point: ``rydhop simulate | build-library | fit | analyze``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error,
130 interrupted (partial results flushed).
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, plotting
from .config import apply_overrides, load_config
from .errors import PlacementError, RydhopError, UsageError
from .fit import (DEFAULT_REALIZATIONS, delta_reference, fit_spectrum, load_library,
                  precompute_library)
from .io import (dumps_json, file_sha256, read_measured, read_spectrum, write_profile,
                 write_ratio_curve, write_spectrum, write_text_atomic)
from .localization import ProfileAccumulator, ratio_curve, tail_exponent
from .simulate import simulate_spectrum
from .spectra import (broaden, fit_lorentzian, poisson_mix, reference_from_points,
                      resample_points)

log = logging.getLogger("rydhop")

EXIT_INTERRUPTED = 130


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p):
    p.add_argument("--config", help="TOML run config (default: packaged placeholder config)")
    p.add_argument("--seed", type=int, help="master RNG seed")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--out", help="output directory (overrides $RYDHOP_OUT)")
    p.add_argument("--realizations", type=int)
    p.add_argument("--bins", type=int, help="number of uniform detuning bins")
    p.add_argument("--range-mhz", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--rb", type=float, help="blockade radius in um")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rydhop", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rydhop {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a fixed-n or Poisson-mixed spectrum")
    _common(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--n", type=int, help="fixed seed number")
    g.add_argument("--n-bar", type=float, help="mean seed number (Poisson mix)")
    p.add_argument("--dump", action="store_true", help="write per-chunk eigenpair dumps")

    p = sub.add_parser("build-library", help="precompute spectra over an (n, r_B) grid")
    _common(p)
    p.add_argument("--n-values", type=int, nargs="+")
    p.add_argument("--rb-values", type=float, nargs="+")

    p = sub.add_parser("fit", help="fit (n_bar, r_B, A) to a measured spectrum")
    p.add_argument("--measured", required=True, help="CSV: detuning_MHz, signal[, error]")
    p.add_argument("--library", required=True, help="library directory")
    p.add_argument("--reference", help="measured zero-seed spectrum (same CSV layout)")
    p.add_argument("--linewidth", type=float, help="broadening FWHM in MHz")
    p.add_argument("--initial", type=float, nargs=2, metavar=("N_BAR", "RB"))
    p.add_argument("--weighted", action="store_true", help="inverse-variance weights")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("analyze", help="ratio curves, tail exponents, localization profiles")
    p.add_argument("--config")
    p.add_argument("--spectrum", required=True, help="spectrum CSV/JSON")
    p.add_argument("--reference", help="reference spectrum file or measured point CSV")
    p.add_argument("--full-reference", action="store_true",
                   help="fit the reference Lorentzian on both sides (default: positive side)")
    p.add_argument("--window", type=int, help="running-average window (odd)")
    p.add_argument("--tail-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--dumps", help="directory with realization dumps")
    p.add_argument("--profile-bins", type=int)
    p.add_argument("--out", help="output directory")
    return parser


# -- helpers ------------------------------------------------------------------

def _provenance(cfg, extra=None) -> dict:
    meta = {"tool_version": __version__, "config_hash": cfg.config_hash(),
            "master_seed": cfg.sim["seed"],
            "coefficients_placeholder": cfg["interaction"]["placeholder"]}
    meta.update(extra or {})
    return meta


def _run_record(out: Path, command: str, argv, outputs, payload: dict):
    record = {"command": command, "argv": list(argv), "tool_version": __version__,
              "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
              "outputs": [str(p) for p in outputs]}
    record.update(payload)
    write_text_atomic(out / f"run_{command}.json", dumps_json(record))


def _load_cfg(args):
    cfg = load_config(getattr(args, "config", None))
    return apply_overrides(
        cfg, seed=getattr(args, "seed", None), workers=getattr(args, "workers", None),
        out=getattr(args, "out", None), n=getattr(args, "n", None),
        n_bar=getattr(args, "n_bar", None), rb=getattr(args, "rb", None),
        realizations=getattr(args, "realizations", None), bins=getattr(args, "bins", None),
        range_mhz=getattr(args, "range_mhz", None), n_values=getattr(args, "n_values", None),
        rb_values=getattr(args, "rb_values", None))


def _zero_seed(cfg, edges):
    """Reference spectrum for the n = 0 term and the broadening width."""
    ls = cfg["lineshape"]
    if ls["reference_file"]:
        x, y, err, _ = read_measured(ls["reference_file"])
        ref, model = reference_from_points(x, y, edges, err)
        width = ls["linewidth_mhz"] or model.width
        return ref, width
    width = ls["linewidth_mhz"]
    ref = delta_reference(edges)
    return (broaden(ref, width) if width > 0 else ref), width


# -- commands -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    s = cfg.sim
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    edges = cfg.bin_edges
    rb = s["blockade_radius_um"]
    options = dict(offset=s["offset"], check_fraction=s["check_fraction"],
                   cloud_mode=cfg["cloud"]["mode"])
    if args.dump or s["dump_realizations"]:
        options["dump_dir"] = str(out / "dumps")
    common = dict(workers=s["workers"], chunk_size=s["chunk_size"])
    partial = False

    if s["n_bar"] is None:
        n = 1 if s["n"] is None else s["n"]
        if n == 0:
            spectrum, width = _zero_seed(cfg, edges)
        else:
            spectrum, result = simulate_spectrum(cfg.cloud, cfg.coefficients, n, rb,
                                                 s["realizations"], edges, s["seed"],
                                                 **common, **options)
            partial = result.partial
            width = cfg["lineshape"]["linewidth_mhz"]
            if width > 0:
                spectrum = broaden(spectrum, width)
        spectrum.metadata.update(_provenance(cfg))
        stem = out / f"spectrum_n{n}_rb{rb:.3f}"
    else:
        n_bar = s["n_bar"]
        ref, width = _zero_seed(cfg, edges)
        by_n, infeasible = {}, False
        for n in range(1, s["n_max"] + 1):
            if infeasible:
                by_n[n] = None
                continue
            try:
                spec_n, result = simulate_spectrum(cfg.cloud, cfg.coefficients, n, rb,
                                                   s["realizations"], edges, s["seed"],
                                                   **common, **options)
            except PlacementError as exc:
                log.warning("n=%d infeasible at r_B=%g: %s", n, rb, exc)
                by_n[n] = None
                infeasible = True
                continue
            by_n[n] = broaden(spec_n, width) if width > 0 else spec_n
            if result.partial:
                partial = True
                break
        if partial:
            # fill the remaining terms with empty spectra; the flag marks the file
            empty = by_n[max(by_n)].scaled(0.0)
            for n in range(1, s["n_max"] + 1):
                by_n.setdefault(n, empty)
        spectrum = poisson_mix(by_n, n_bar, ref, s["n_max"])
        spectrum.metadata.update(_provenance(cfg, {
            "blockade_radius_um": rb, "realizations_per_n": s["realizations"],
            "broadening_fwhm_mhz": width, "zero_seed_reference": ref.metadata.get("reference"),
            "offset_convention": s["offset"], "partial": partial}))
        stem = out / f"spectrum_nbar{n_bar:g}_rb{rb:.3f}"

    spectrum.metadata["partial"] = partial
    files = list(write_spectrum(spectrum, stem))
    files.append(plotting.plot_spectrum(spectrum, stem))
    _run_record(out, "simulate", sys.argv[1:], files, {"config": cfg.to_dict(),
                                                        "config_hash": cfg.config_hash()})
    for f in files:
        print(f)
    return EXIT_INTERRUPTED if partial else 0


def cmd_build_library(args) -> int:
    cfg = _load_cfg(args)
    s, lib = cfg.sim, cfg["library"]
    out = cfg.out_dir / "library"
    realizations = args.realizations or lib["realizations"] or s["realizations"] or DEFAULT_REALIZATIONS
    try:
        library = precompute_library(
            lib["n_values"], lib["rb_values_um"], realizations, cfg.cloud, cfg.coefficients,
            cfg.bin_edges, s["seed"], out_dir=out, config_hash=cfg.library_hash(),
            workers=s["workers"], offset=s["offset"], chunk_size=s["chunk_size"],
            check_fraction=s["check_fraction"],
            extra_metadata={"coefficients_placeholder": cfg["interaction"]["placeholder"]})
    except KeyboardInterrupt:
        log.warning("interrupted; finished cells are recorded in %s", out)
        return EXIT_INTERRUPTED
    bad = [k for k, v in library.cells.items() if v is None]
    _run_record(cfg.out_dir, "build-library", sys.argv[1:], [out],
                {"config": cfg.to_dict(), "config_hash": cfg.config_hash(),
                 "infeasible_cells": [list(k) for k in bad]})
    print(out)
    return 0


def cmd_fit(args) -> int:
    lib_dir = Path(args.library)
    if not (lib_dir / "library.json").exists():
        raise FileNotFoundError(f"library not found: {lib_dir}")
    library = load_library(lib_dir)
    x, y, err, mmeta = read_measured(args.measured)
    measured = resample_points(x, y, library.bin_edges, err)
    width = 0.0 if args.linewidth is None else args.linewidth
    reference = None
    if args.reference:
        rx, ry, rerr, _ = read_measured(args.reference)
        reference, model = reference_from_points(rx, ry, library.bin_edges, rerr)
        if args.linewidth is None:
            width = model.width
    elif width > 0:
        reference = broaden(delta_reference(library.bin_edges), width)
    guess = tuple(args.initial) if args.initial else (1.0, None)
    result = fit_spectrum(measured, library, guess, reference, width, weighted=args.weighted)
    out = Path(args.out) if args.out else lib_dir.parent / "fit"
    ref = reference if reference is not None else delta_reference(library.bin_edges)
    model_vals, _ = library.mixed(result.n_bar, result.blockade_radius, ref, width)
    payload = result.to_dict()
    payload.update({"tool_version": __version__,
                    "config_hash": library.manifest.get("config_hash"),
                    "master_seed": library.manifest.get("master_seed"),
                    "library_realizations": library.manifest.get("realizations"),
                    "broadening_fwhm_mhz": width, "measured_file": Path(args.measured).name,
                    "measured_sha256": file_sha256(args.measured)})
    out.mkdir(parents=True, exist_ok=True)
    write_text_atomic(out / "fit_result.json", dumps_json(payload))
    svg = plotting.plot_fit_overlay(measured, result.amplitude * model_vals, out / "fit_overlay",
                                    title=f"n_bar={result.n_bar:.3f}, r_B={result.blockade_radius:.3f} um")
    _run_record(out, "fit", sys.argv[1:], [out / "fit_result.json", svg], {})
    print(json.dumps({k: payload[k] for k in ("n_bar", "blockade_radius", "amplitude", "residual")}))
    return 0


def _reference_model(args, spectrum):
    if not args.reference:
        return fit_lorentzian(spectrum, positive_side_only=not args.full_reference)
    path = Path(args.reference)
    if not path.exists():
        raise FileNotFoundError(f"reference not found: {path}")
    head = next((l for l in path.read_text().splitlines() if l and not l.startswith("#")), "")
    if head.startswith("detuning_MHz") and path.suffix != ".json":
        x, y, err, _ = read_measured(path)
        ref = resample_points(x, y, spectrum.bin_edges, err)
    else:
        ref = read_spectrum(path)
    return fit_lorentzian(ref, positive_side_only=not args.full_reference)


def _load_dumps(directory):
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"dump directory not found: {d}")
    for e_path in sorted(d.glob("*_energies.npy")):
        v_path = e_path.with_name(e_path.name.replace("_energies.npy", "_vectors.npy"))
        yield np.load(e_path), np.load(v_path)


def cmd_analyze(args) -> int:
    cfg = load_config(args.config) if args.config else None
    loc = cfg["localization"] if cfg else {"window": 5, "profile_bins": 60, "pair_threshold": 0.9,
                                          "tail_range_mhz": None}
    spectrum = read_spectrum(args.spectrum)
    out = Path(args.out) if args.out else Path(args.spectrum).parent / "analysis"
    out.mkdir(parents=True, exist_ok=True)
    window = args.window or loc["window"]
    base_meta = {k: spectrum.metadata.get(k) for k in ("tool_version", "config_hash", "master_seed")}
    base_meta["source_spectrum"] = Path(args.spectrum).name
    files = []

    model = _reference_model(args, spectrum)
    curve = ratio_curve(spectrum, model, smoothing_window=window)
    files += write_ratio_curve(curve, out / "ratio_curve", base_meta)
    files.append(plotting.plot_ratio_curve(curve, out / "ratio_curve"))

    tail_range = args.tail_range or loc["tail_range_mhz"]
    if tail_range:
        fits = tail_exponent(spectrum, tail_range)
        report = dict(base_meta, fit_range_mhz=list(tail_range),
                      **{side: {"exponent": f.exponent, "stderr": f.stderr, "bins": f.bins}
                         for side, f in fits.items()})
        write_text_atomic(out / "tail_exponent.json", dumps_json(report))
        files += [out / "tail_exponent.json", plotting.plot_tail(spectrum, fits, out / "tail")]

    if args.dumps:
        nbins = args.profile_bins or loc["profile_bins"]
        edges = np.linspace(spectrum.bin_edges[0], spectrum.bin_edges[-1], nbins + 1)
        acc = ProfileAccumulator(edges, loc["pair_threshold"])
        for E, V in _load_dumps(args.dumps):
            acc.add(E, V)
        profile = acc.to_profile(base_meta)
        files += write_profile(profile, out / "localization_profile")
        files.append(plotting.plot_profile(profile, out / "localization_profile"))

    for f in files:
        print(f)
    return 0


COMMANDS = {"simulate": cmd_simulate, "build-library": cmd_build_library, "fit": cmd_fit,
            "analyze": cmd_analyze}


def _error_record(exc, code, category):
    rec = {"error": type(exc).__name__, "category": category, "message": str(exc), "exit_code": code}
    print(json.dumps(rec), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if not args.command:
            raise UsageError("missing command; one of " + ", ".join(COMMANDS))
        return COMMANDS[args.command](args)
    except RydhopError as exc:
        return _error_record(exc, exc.exit_code, exc.category)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _error_record(exc, 2, "data")
    except KeyboardInterrupt as exc:
        return _error_record(exc, EXIT_INTERRUPTED, "interrupted")


if __name__ == "__main__":
    sys.exit(main())
