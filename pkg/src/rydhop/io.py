"""File formats.

Spectrum CSV: ``# key=<json value>`` metadata lines, then the header
``bin_left_MHz,bin_right_MHz,density_per_MHz[,stat_error_per_MHz]``. Floats are
written with ``repr`` so files round-trip bit-exactly. The JSON mirror holds
the same fields.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .errors import DataError
from .localization import LocalizationProfile, RatioCurve
from .spectra import Spectrum

SPECTRUM_COLUMNS = ["bin_left_MHz", "bin_right_MHz", "density_per_MHz"]
ERROR_COLUMN = "stat_error_per_MHz"


def with_ext(stem, ext: str) -> Path:
    """``stem`` plus ``ext``; unlike ``Path.with_suffix`` keeps dots such as ``rb3.400``."""
    stem = Path(stem)
    return stem if stem.name.endswith(ext) else stem.with_name(stem.name + ext)


def _fmt(v) -> str:
    v = float(v)
    if np.isnan(v):
        return "nan"
    return repr(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_text_atomic(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _meta_lines(metadata: dict) -> list[str]:
    return [f"# {k}={json.dumps(_jsonable(v), sort_keys=True)}\n" for k, v in sorted(metadata.items())]


def _parse_meta(lines) -> dict:
    meta = {}
    for line in lines:
        body = line[1:].strip()
        if "=" not in body:
            continue
        key, value = body.split("=", 1)
        try:
            meta[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            meta[key.strip()] = value
    return meta


def spectrum_to_csv(spectrum: Spectrum) -> str:
    lines = _meta_lines(spectrum.metadata)
    cols = SPECTRUM_COLUMNS + ([ERROR_COLUMN] if spectrum.errors is not None else [])
    lines.append(",".join(cols) + "\n")
    e = spectrum.bin_edges
    for i, v in enumerate(spectrum.values):
        row = [_fmt(e[i]), _fmt(e[i + 1]), _fmt(v)]
        if spectrum.errors is not None:
            row.append(_fmt(spectrum.errors[i]))
        lines.append(",".join(row) + "\n")
    return "".join(lines)


def spectrum_to_dict(spectrum: Spectrum) -> dict:
    d = {"metadata": spectrum.metadata,
         "bin_left_MHz": spectrum.bin_edges[:-1], "bin_right_MHz": spectrum.bin_edges[1:],
         "density_per_MHz": spectrum.values}
    if spectrum.errors is not None:
        d[ERROR_COLUMN] = spectrum.errors
    return d


def write_spectrum(spectrum: Spectrum, path_stem) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` and ``<stem>.json``."""
    stem = Path(path_stem)
    csv_path, json_path = with_ext(stem, ".csv"), with_ext(stem, ".json")
    write_text_atomic(csv_path, spectrum_to_csv(spectrum))
    write_text_atomic(json_path, dumps_json(spectrum_to_dict(spectrum)))
    return csv_path, json_path


def read_spectrum(path) -> Spectrum:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"spectrum file not found: {path}")
    if path.suffix == ".json":
        d = json.loads(path.read_text())
        left = np.asarray(d["bin_left_MHz"], dtype=float)
        right = np.asarray(d["bin_right_MHz"], dtype=float)
        err = d.get(ERROR_COLUMN)
        return Spectrum(np.append(left, right[-1]), np.asarray(d["density_per_MHz"], dtype=float),
                        d.get("metadata", {}), None if err is None else np.asarray(err, dtype=float))
    text = path.read_text().splitlines()
    meta = _parse_meta(l for l in text if l.startswith("#"))
    rows = list(csv.reader(l for l in text if l.strip() and not l.startswith("#")))
    header, body = rows[0], rows[1:]
    if header[:3] != SPECTRUM_COLUMNS:
        raise DataError(f"{path}: expected columns {SPECTRUM_COLUMNS}, got {header}")
    arr = np.array(body, dtype=float).reshape(-1, len(header))
    if len(arr) == 0:
        raise DataError(f"{path}: no spectrum rows")
    if not np.array_equal(arr[1:, 0], arr[:-1, 1]):
        raise DataError(f"{path}: bins are not contiguous")
    edges = np.append(arr[:, 0], arr[-1, 1])
    err = arr[:, 3] if len(header) > 3 and header[3] == ERROR_COLUMN else None
    return Spectrum(edges, arr[:, 2], meta, err)


def read_measured(path):
    """Measured point data: ``detuning_MHz, signal[, error]``.

    Returns ``(detuning, signal, error_or_None, metadata)``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"measured spectrum not found: {path}")
    text = path.read_text().splitlines()
    meta = _parse_meta(l for l in text if l.startswith("#"))
    rows = list(csv.reader(l for l in text if l.strip() and not l.startswith("#")))
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["detuning_MHz", "signal"]:
        raise DataError(f"{path}: expected columns detuning_MHz, signal[, error]; got {header}")
    arr = np.array(rows[1:], dtype=float)
    if arr.ndim != 2 or len(arr) < 2:
        raise DataError(f"{path}: need at least two data rows")
    err = arr[:, 2] if arr.shape[1] > 2 and len(header) > 2 else None
    return arr[:, 0], arr[:, 1], err, meta


def write_measured(path, detuning, signal, error=None, metadata: dict | None = None):
    lines = _meta_lines(metadata or {})
    lines.append("detuning_MHz,signal" + (",error" if error is not None else "") + "\n")
    for i in range(len(detuning)):
        row = [_fmt(detuning[i]), _fmt(signal[i])]
        if error is not None:
            row.append(_fmt(error[i]))
        lines.append(",".join(row) + "\n")
    write_text_atomic(path, "".join(lines))


def write_ratio_curve(curve: RatioCurve, path_stem, metadata: dict | None = None):
    stem = Path(path_stem)
    meta = dict(curve.metadata)
    meta.update(metadata or {})
    lines = _meta_lines(meta)
    lines.append("detuning_MHz,ratio,error,masked\n")
    for x, r, e, m in zip(curve.detunings, curve.ratio, curve.error_band, curve.mask):
        lines.append(f"{_fmt(x)},{_fmt(r)},{_fmt(e)},{int(m)}\n")
    write_text_atomic(with_ext(stem, ".csv"), "".join(lines))
    write_text_atomic(with_ext(stem, ".json"), dumps_json({
        "metadata": meta, "detuning_MHz": curve.detunings, "ratio": curve.ratio,
        "error": curve.error_band, "masked": curve.mask.astype(int)}))
    return with_ext(stem, ".csv"), with_ext(stem, ".json")


def write_profile(profile: LocalizationProfile, path_stem, metadata: dict | None = None):
    stem = Path(path_stem)
    meta = dict(profile.metadata)
    meta.update(metadata or {})
    lines = _meta_lines(meta)
    lines.append("bin_left_MHz,bin_right_MHz,mean_ipr,pair_fraction,count\n")
    e = profile.energy_bins
    for i in range(len(profile.counts)):
        lines.append(f"{_fmt(e[i])},{_fmt(e[i + 1])},{_fmt(profile.mean_ipr[i])},"
                     f"{_fmt(profile.pair_fraction[i])},{int(profile.counts[i])}\n")
    write_text_atomic(with_ext(stem, ".csv"), "".join(lines))
    write_text_atomic(with_ext(stem, ".json"), dumps_json({
        "metadata": meta, "bin_left_MHz": e[:-1], "bin_right_MHz": e[1:],
        "mean_ipr": profile.mean_ipr, "pair_fraction": profile.pair_fraction,
        "count": profile.counts}))
    return with_ext(stem, ".csv"), with_ext(stem, ".json")
