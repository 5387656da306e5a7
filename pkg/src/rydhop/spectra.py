"""Probe-projected spectra: accumulation, Poisson mixing, broadening, line fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, stats

from .errors import FitError, GridMismatchError, InfeasibleCellError, InsufficientDataError, UsageError

N_MAX = 20
KERNEL_HALF_WIDTHS = 50.0
# Poisson weight that infeasible (unplaceable) seed numbers may carry in a mix
INFEASIBLE_MASS_TOL = 1e-6


def uniform_edges(count: int = 201, lo: float = -30.0, hi: float = 30.0) -> np.ndarray:
    if count < 1 or not hi > lo:
        raise UsageError(f"need count >= 1 and hi > lo, got {count}, ({lo}, {hi})")
    return np.linspace(lo, hi, count + 1)


@dataclass
class Spectrum:
    """Binned spectral density in weight per MHz.

    ``errors`` holds the per-bin statistical standard error when known.
    """

    bin_edges: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)
    errors: np.ndarray | None = None

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.errors is not None:
            self.errors = np.asarray(self.errors, dtype=float)
        if self.bin_edges.ndim != 1 or len(self.values) != len(self.bin_edges) - 1:
            raise UsageError("Spectrum needs len(values) == len(bin_edges) - 1")
        if np.any(np.diff(self.bin_edges) <= 0):
            raise UsageError("bin edges must be strictly ascending")

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    def integral(self) -> float:
        return float(np.sum(self.values * self.widths))

    def same_grid(self, other: "Spectrum") -> bool:
        return self.bin_edges.shape == other.bin_edges.shape and np.array_equal(
            self.bin_edges, other.bin_edges)

    def scaled(self, factor: float) -> "Spectrum":
        err = None if self.errors is None else self.errors * abs(factor)
        return replace(self, values=self.values * factor, errors=err, metadata=dict(self.metadata))


@dataclass
class LorentzianModel:
    """Lorentzian of unit area times ``amplitude``; ``width`` is the FWHM."""

    center: float
    width: float
    amplitude: float = 1.0
    covariance: np.ndarray | None = None

    def __post_init__(self):
        if not self.width > 0:
            raise UsageError(f"Lorentzian width must be positive, got {self.width}")

    def __call__(self, x):
        return lorentzian(x, self.center, self.width, self.amplitude)

    @property
    def peak(self) -> float:
        return 2.0 * self.amplitude / (math.pi * self.width)

    def stderr(self, x) -> np.ndarray:
        """Standard error of the model at ``x`` from the parameter covariance."""
        x = np.asarray(x, dtype=float)
        if self.covariance is None:
            return np.zeros_like(x)
        g = lorentzian_gradient(x, self.center, self.width, self.amplitude)
        var = np.einsum("i...,ij,j...->...", g, self.covariance, g)
        return np.sqrt(np.clip(var, 0.0, None))


def lorentzian(x, center, width, amplitude=1.0):
    hw = 0.5 * width
    return amplitude * (hw / math.pi) / ((np.asarray(x) - center) ** 2 + hw * hw)


def lorentzian_gradient(x, center, width, amplitude):
    """d/d(center, width, amplitude) of :func:`lorentzian`; shape ``(3, *x.shape)``."""
    hw = 0.5 * width
    dx = np.asarray(x, dtype=float) - center
    den = dx * dx + hw * hw
    f = amplitude * (hw / math.pi) / den
    d_center = f * 2.0 * dx / den
    d_hw = amplitude / math.pi * (den - 2.0 * hw * hw) / den**2
    return np.stack([d_center, 0.5 * d_hw, (hw / math.pi) / den])


# -- projection and accumulation ----------------------------------------------

def project_realization(dec, probe_index: int = -1) -> tuple[np.ndarray, np.ndarray]:
    """Lines ``(E_chi, |<probe|chi>|^2)`` of one eigendecomposition."""
    E = np.asarray(dec.eigenvalues)
    w = np.asarray(dec.eigenvectors)[probe_index, :] ** 2
    return E.copy(), w


def project_batch(E: np.ndarray, V: np.ndarray, probe_index: int = -1):
    return E, V[..., probe_index, :] ** 2


def completeness_defect(weights: np.ndarray) -> np.ndarray:
    """``|sum_chi w_chi - 1|`` per realization for weights shaped ``(B, m)``."""
    return np.abs(np.sum(weights, axis=-1) - 1.0)


class SpectrumAccumulator:
    """Mergeable histogram of probe weights over realizations.

    Holds raw sums only; normalization happens in :meth:`to_spectrum`, so
    merging partial accumulators in a fixed order reproduces a single-pass
    result.
    """

    def __init__(self, bin_edges):
        self.bin_edges = np.asarray(bin_edges, dtype=float)
        if np.any(np.diff(self.bin_edges) <= 0):
            raise UsageError("bin edges must be strictly ascending")
        nb = len(self.bin_edges) - 1
        self.weight = np.zeros(nb)
        self.weight_sq = np.zeros(nb)
        self.realizations = 0
        self.lines = 0
        self.underflow = 0.0
        self.overflow = 0.0

    def add(self, energies, weights):
        """Add realizations; arrays shaped ``(B, m)`` or ``(m,)`` for one."""
        energies = np.asarray(energies, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if energies.ndim == 1:
            energies, weights = energies[None, :], weights[None, :]
        e = energies.ravel()
        w = weights.ravel()
        h, _ = np.histogram(e, self.bin_edges, weights=w)
        h2, _ = np.histogram(e, self.bin_edges, weights=w * w)
        self.weight += h
        self.weight_sq += h2
        self.underflow += float(w[e < self.bin_edges[0]].sum())
        self.overflow += float(w[e > self.bin_edges[-1]].sum())
        self.realizations += energies.shape[0]
        self.lines += e.size
        return self

    def merge(self, other: "SpectrumAccumulator"):
        if not np.array_equal(self.bin_edges, other.bin_edges):
            raise GridMismatchError("cannot merge accumulators on different bin grids")
        self.weight += other.weight
        self.weight_sq += other.weight_sq
        self.realizations += other.realizations
        self.lines += other.lines
        self.underflow += other.underflow
        self.overflow += other.overflow
        return self

    def to_spectrum(self, metadata: dict | None = None) -> Spectrum:
        norm = max(self.realizations, 1) * np.diff(self.bin_edges)
        meta = {
            "realizations": self.realizations,
            "lines": self.lines,
            "underflow_weight": self.underflow / max(self.realizations, 1),
            "overflow_weight": self.overflow / max(self.realizations, 1),
        }
        meta.update(metadata or {})
        return Spectrum(self.bin_edges.copy(), self.weight / norm, meta,
                        errors=np.sqrt(self.weight_sq) / norm)


def accumulate(realizations, bin_edges, metadata: dict | None = None) -> Spectrum:
    """Histogram a stream of ``(energies, weights)`` realizations."""
    acc = SpectrumAccumulator(bin_edges)
    for energies, weights in realizations:
        acc.add(energies, weights)
    return acc.to_spectrum(metadata)


# -- Poisson mixing -----------------------------------------------------------

def poisson_weights(n_bar: float, n_max: int = N_MAX) -> tuple[np.ndarray, float]:
    """``p(0..n_max)`` and the truncated tail mass ``P(N > n_max)``."""
    if n_bar < 0 or not np.isfinite(n_bar):
        raise UsageError(f"n_bar must be finite and >= 0, got {n_bar}")
    i = np.arange(n_max + 1)
    if n_bar == 0:
        p = (i == 0).astype(float)
    else:
        p = np.exp(i * math.log(n_bar) - n_bar - np.array([math.lgamma(k + 1) for k in i]))
    return p, float(stats.poisson.sf(n_max, n_bar))


def poisson_mix(spectra_by_n: dict, n_bar: float, zero_seed_reference: Spectrum,
                n_max: int = N_MAX, infeasible_tol: float = INFEASIBLE_MASS_TOL) -> Spectrum:
    """Poisson-weighted sum of fixed-n spectra, zero-seed term from the reference.

    Uses ``n = 1..n_max``; every one of those must be present in
    ``spectra_by_n`` and share the reference's bin grid. A value of ``None``
    marks an infeasible n (seeds cannot be placed): its term is dropped and
    its weight reported as ``infeasible_mass``, which must stay below
    ``infeasible_tol``.
    """
    missing = [i for i in range(1, n_max + 1) if i not in spectra_by_n]
    if missing:
        raise GridMismatchError(f"spectra missing for n = {missing}")
    p, tail = poisson_weights(n_bar, n_max)
    dropped = [i for i in range(1, n_max + 1) if spectra_by_n[i] is None]
    infeasible_mass = float(sum(p[i] for i in dropped))
    if infeasible_mass > infeasible_tol:
        raise InfeasibleCellError(
            f"infeasible n = {dropped} carry Poisson weight {infeasible_mass:.2e} at n_bar={n_bar}")
    values = p[0] * zero_seed_reference.values
    var = None if zero_seed_reference.errors is None else (p[0] * zero_seed_reference.errors) ** 2
    for i in range(1, n_max + 1):
        s = spectra_by_n[i]
        if s is None:
            continue
        if not s.same_grid(zero_seed_reference):
            raise GridMismatchError(f"spectrum for n={i} is on a different bin grid")
        if p[i] == 0.0:
            continue
        values = values + p[i] * s.values
        if var is not None and s.errors is not None:
            var = var + (p[i] * s.errors) ** 2
    meta = {
        "n_bar": float(n_bar),
        "n_max": int(n_max),
        "p0": float(p[0]),
        "poisson_weights": [float(v) for v in p],
        "truncation_mass": tail,
        "infeasible_n": dropped,
        "infeasible_mass": infeasible_mass,
    }
    return Spectrum(zero_seed_reference.bin_edges.copy(), values, meta,
                    errors=None if var is None else np.sqrt(var))


# -- broadening ---------------------------------------------------------------

def lorentzian_bin_kernel(step: float, width: float, half_widths: float = KERNEL_HALF_WIDTHS):
    """Unit-sum Lorentzian kernel on a uniform grid, bin-integrated, +-``half_widths`` FWHM."""
    hw = 0.5 * width
    k = int(math.ceil(half_widths * width / step))
    off = np.arange(-k, k + 1) * step
    mass = (np.arctan((off + 0.5 * step) / hw) - np.arctan((off - 0.5 * step) / hw)) / math.pi
    return mass / mass.sum()


def broaden(spectrum: Spectrum, width: float) -> Spectrum:
    """Convolve with a unit-area Lorentzian of FWHM ``width`` (uniform grids only).

    Weight pushed past the grid ends is recorded as ``broaden_spill`` in the
    metadata; in-grid integral plus spill equals the input integral.
    """
    if width < 0:
        raise UsageError("broadening width must be >= 0")
    if width == 0:
        return replace(spectrum, values=spectrum.values.copy(), metadata=dict(spectrum.metadata))
    widths = spectrum.widths
    step = float(widths[0])
    if not np.allclose(widths, step, rtol=1e-9, atol=0):
        raise GridMismatchError("broadening requires a uniform bin grid")
    kernel = lorentzian_bin_kernel(step, width)
    full = np.convolve(spectrum.values, kernel, mode="full")
    k = len(kernel) // 2
    values = full[k:k + len(spectrum.values)]
    spill = float((full[:k].sum() + full[k + len(spectrum.values):].sum()) * step)
    err = None
    if spectrum.errors is not None:
        err = np.sqrt(np.convolve(spectrum.errors ** 2, kernel ** 2, mode="full")[k:k + len(values)])
    meta = dict(spectrum.metadata)
    meta["broadening_fwhm_mhz"] = float(width)
    meta["broaden_spill"] = meta.get("broaden_spill", 0.0) + spill
    return Spectrum(spectrum.bin_edges.copy(), values, meta, errors=err)


# -- Lorentzian fit -----------------------------------------------------------

def _initial_lorentzian(x, y):
    i = int(np.argmax(y))
    peak = float(y[i])
    above = x[y >= 0.5 * peak]
    fwhm = float(above.max() - above.min()) if len(above) > 1 else float(np.median(np.diff(x)))
    if fwhm <= 0:
        fwhm = float(np.median(np.diff(x)))
    return [float(x[i]), fwhm, peak * math.pi * fwhm / 2.0]


def fit_lorentzian(measured: Spectrum, positive_side_only: bool = False,
                   sigma=None) -> LorentzianModel:
    """Least-squares Lorentzian fit on bin centers.

    With ``positive_side_only`` only bins with center > 0 enter the objective.
    ``sigma`` (or ``measured.errors`` when it is strictly positive) weights
    the residuals.
    """
    x = measured.centers
    y = measured.values
    valid = np.ones_like(x, dtype=bool)
    if measured.errors is not None:
        valid &= np.isfinite(measured.errors)
        if sigma is None and np.all(measured.errors[valid] > 0):
            sigma = measured.errors
    mask = valid & (x > 0) if positive_side_only else valid
    if mask.sum() < 4:
        raise InsufficientDataError("Lorentzian fit needs at least 4 bins on the fitted side")
    xs, ys = x[mask], y[mask]
    sig = None if sigma is None else np.asarray(sigma, dtype=float)[mask]
    p0 = _initial_lorentzian(x, y) if not positive_side_only else _initial_lorentzian(
        np.concatenate([-xs[::-1], xs]), np.concatenate([ys[::-1], ys]))
    if positive_side_only:
        p0[0] = 0.0
    try:
        popt, pcov = optimize.curve_fit(
            lorentzian, xs, ys, p0=p0, sigma=sig, absolute_sigma=sig is not None,
            jac=lambda xx, c, w, a: lorentzian_gradient(xx, c, w, a).T,
            ftol=1e-12, xtol=1e-12, gtol=1e-12, maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"Lorentzian fit did not converge: {exc}") from exc
    center, width, amp = (float(v) for v in popt)
    width = abs(width)
    if not np.all(np.isfinite(popt)) or width == 0:
        raise FitError("Lorentzian fit produced a degenerate width")
    cov = pcov if np.all(np.isfinite(pcov)) else None
    return LorentzianModel(center, width, amp, cov)


# -- resampling ---------------------------------------------------------------

def resample_points(detuning, signal, bin_edges, errors=None, tail_model: LorentzianModel | None = None,
                    metadata: dict | None = None) -> Spectrum:
    """Linear interpolation of point data onto bin centers.

    Bins outside the sampled detuning range take ``tail_model`` values when
    given, otherwise they are zero with infinite error (so weighted fits
    ignore them). The returned metadata counts extrapolated bins.
    """
    detuning = np.asarray(detuning, dtype=float)
    order = np.argsort(detuning)
    detuning = detuning[order]
    signal = np.asarray(signal, dtype=float)[order]
    edges = np.asarray(bin_edges, dtype=float)
    centers = 0.5 * (edges[1:] + edges[:-1])
    values = np.interp(centers, detuning, signal)
    outside = (centers < detuning[0]) | (centers > detuning[-1])
    err = None
    if errors is not None:
        err = np.interp(centers, detuning, np.asarray(errors, dtype=float)[order])
    if tail_model is not None:
        values[outside] = tail_model(centers[outside])
    else:
        values[outside] = 0.0
        if err is None:
            err = np.zeros_like(values)
        err[outside] = np.inf
    meta = dict(metadata or {})
    meta["extrapolated_bins"] = int(outside.sum())
    return Spectrum(edges.copy(), values, meta, errors=err)


def reference_from_points(detuning, signal, bin_edges, errors=None) -> tuple[Spectrum, LorentzianModel]:
    """Zero-seed reference on ``bin_edges`` from measured non-interacting data.

    Inside the measured range the signal is linearly interpolated; outside it
    the tail of a Lorentzian fitted to the positive-detuning side takes over.
    The result is scaled to unit integral over the grid. Returns the
    reference and the fitted Lorentzian (in the original signal units).
    """
    inside = resample_points(detuning, signal, bin_edges, errors)
    model = fit_lorentzian(inside, positive_side_only=True)
    full = resample_points(detuning, signal, bin_edges, errors, tail_model=model)
    total = full.integral()
    if not total > 0:
        raise InsufficientDataError("reference spectrum has no positive weight on the grid")
    ref = full.scaled(1.0 / total)
    ref.metadata.update({"reference": "measured", "lorentzian_center": model.center,
                         "lorentzian_width": model.width})
    return ref, model
