"""Localization diagnostics: IPR, pair localization, spectral ratios, tail exponents."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import GridMismatchError, InsufficientDataError, NormalizationError, UsageError
from .spectra import LorentzianModel, Spectrum

NORM_TOL = 1e-8


def ipr(components) -> float:
    """Inverse participation ratio ``sum |c_i|^4`` of a normalized vector."""
    c = np.asarray(components)
    p = np.abs(c) ** 2
    if abs(p.sum() - 1.0) > NORM_TOL:
        raise NormalizationError(f"vector norm^2 is {p.sum():.12g}, expected 1")
    return float(np.sum(p * p))


def top2_mass(vectors: np.ndarray) -> np.ndarray:
    """Sum of the two largest ``|c_i|^2`` per eigenvector column, ``(..., m, k) -> (..., k)``."""
    p = np.abs(vectors) ** 2
    if p.shape[-2] == 1:
        return p[..., 0, :]
    part = np.partition(p, p.shape[-2] - 2, axis=-2)
    return part[..., -1, :] + part[..., -2, :]


def classify_pair_localized(eigenvector, threshold: float = 0.9) -> bool:
    """True when the two largest weights of ``eigenvector`` hold >= ``threshold``."""
    if not 0.5 < threshold <= 1.0:
        raise UsageError("threshold must lie in (0.5, 1]")
    v = np.asarray(eigenvector)[:, None]
    return bool(top2_mass(v)[0] >= threshold)


# -- profiles -----------------------------------------------------------------

@dataclass
class LocalizationProfile:
    energy_bins: np.ndarray
    mean_ipr: np.ndarray
    pair_fraction: np.ndarray
    counts: np.ndarray
    metadata: dict

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.energy_bins[1:] + self.energy_bins[:-1])


class ProfileAccumulator:
    """Mergeable per-energy-bin sums of IPR and pair-localized indicators.

    ``weighting="uniform"`` counts every eigenstate once; ``"probe"`` weights
    each by its probe overlap ``|<n+1|chi>|^2``. ``fold`` bins by ``|E|``.
    """

    def __init__(self, energy_bins, threshold: float = 0.9, weighting: str = "uniform",
                 fold: bool = False):
        if weighting not in ("uniform", "probe"):
            raise UsageError(f"unknown weighting {weighting!r}")
        self.energy_bins = np.asarray(energy_bins, dtype=float)
        self.threshold = float(threshold)
        self.weighting = weighting
        self.fold = fold
        nb = len(self.energy_bins) - 1
        self.weight = np.zeros(nb)
        self.ipr_sum = np.zeros(nb)
        self.pair_sum = np.zeros(nb)
        self.counts = np.zeros(nb, dtype=np.int64)
        self.states = 0

    def add(self, energies, vectors, probe_index: int = -1):
        """Add eigenpairs ``E (B, m)``, ``V (B, m, m)`` (or one realization)."""
        E = np.asarray(energies, dtype=float)
        V = np.asarray(vectors, dtype=float)
        if E.ndim == 1:
            E, V = E[None], V[None]
        p = V ** 2
        iprs = np.sum(p * p, axis=-2)
        pair = (top2_mass(V) >= self.threshold).astype(float)
        w = p[:, probe_index, :] if self.weighting == "probe" else np.ones_like(E)
        e = np.abs(E) if self.fold else E
        e, iprs, pair, w = e.ravel(), iprs.ravel(), pair.ravel(), w.ravel()
        idx = np.searchsorted(self.energy_bins, e, side="right") - 1
        idx[e == self.energy_bins[-1]] = len(self.energy_bins) - 2
        ok = (idx >= 0) & (idx < len(self.energy_bins) - 1)
        idx, iprs, pair, w = idx[ok], iprs[ok], pair[ok], w[ok]
        nb = len(self.weight)
        self.weight += np.bincount(idx, weights=w, minlength=nb)
        self.ipr_sum += np.bincount(idx, weights=w * iprs, minlength=nb)
        self.pair_sum += np.bincount(idx, weights=w * pair, minlength=nb)
        self.counts += np.bincount(idx, minlength=nb)
        self.states += E.size
        return self

    def merge(self, other: "ProfileAccumulator"):
        if not np.array_equal(self.energy_bins, other.energy_bins):
            raise GridMismatchError("cannot merge profiles on different energy bins")
        self.weight += other.weight
        self.ipr_sum += other.ipr_sum
        self.pair_sum += other.pair_sum
        self.counts += other.counts
        self.states += other.states
        return self

    def to_profile(self, metadata: dict | None = None) -> LocalizationProfile:
        with np.errstate(invalid="ignore", divide="ignore"):
            mean_ipr = np.where(self.weight > 0, self.ipr_sum / self.weight, np.nan)
            frac = np.where(self.weight > 0, self.pair_sum / self.weight, np.nan)
        meta = {"threshold": self.threshold, "weighting": self.weighting, "fold": self.fold,
                "states": self.states}
        meta.update(metadata or {})
        return LocalizationProfile(self.energy_bins.copy(), mean_ipr, frac, self.counts.copy(), meta)


def localization_profile(realizations, energy_bins, threshold: float = 0.9,
                         weighting: str = "uniform", fold: bool = False) -> LocalizationProfile:
    """Profile over a stream of ``(energies, vectors)`` realizations or batches."""
    acc = ProfileAccumulator(energy_bins, threshold, weighting, fold)
    for E, V in realizations:
        acc.add(E, V)
    return acc.to_profile()


def pair_onset(profile: LocalizationProfile, level: float = 0.5) -> float:
    """``|E|`` from which on the pair fraction stays above ``level``.

    Bins are ordered by ``|E|`` of their centers; the onset is the center of
    the first nonempty bin after the last one at or below ``level`` (nan if
    the outermost nonempty bin is itself at or below it).
    """
    c = np.abs(profile.centers)
    order = np.argsort(c, kind="stable")
    ok = order[profile.counts[order] > 0]
    if len(ok) == 0:
        return float("nan")
    above = profile.pair_fraction[ok] > level
    if above.all():
        return float(c[ok[0]])
    last_below = int(np.flatnonzero(~above)[-1])
    if last_below == len(ok) - 1:
        return float("nan")
    return float(c[ok[last_below + 1]])


# -- ratio curves -------------------------------------------------------------

@dataclass
class RatioCurve:
    detunings: np.ndarray
    ratio: np.ndarray
    error_band: np.ndarray
    mask: np.ndarray  # True where the reference fell below the floor
    metadata: dict


def running_average(values, window: int) -> np.ndarray:
    """Centered moving average; windows shrink symmetrically at the edges."""
    if window < 1 or window % 2 == 0:
        raise UsageError("smoothing window must be an odd positive count")
    v = np.asarray(values, dtype=float)
    if window == 1:
        return v.copy()
    half = window // 2
    out = np.empty_like(v)
    for i in range(len(v)):
        h = min(half, i, len(v) - 1 - i)
        out[i] = v[i - h:i + h + 1].mean()
    return out


def _running_error(errors, window: int) -> np.ndarray:
    e = np.asarray(errors, dtype=float)
    if window == 1:
        return e.copy()
    half = window // 2
    out = np.empty_like(e)
    for i in range(len(e)):
        h = min(half, i, len(e) - 1 - i)
        seg = e[i - h:i + h + 1]
        out[i] = np.sqrt(np.sum(seg * seg)) / len(seg)
    return out


def ratio_curve(interacting: Spectrum, reference_lorentzian: LorentzianModel,
                smoothing_window: int = 5, floor: float = 1e-8) -> RatioCurve:
    """Smoothed interacting spectrum divided by the reference Lorentzian.

    Points where the Lorentzian drops below ``floor`` times its peak are
    masked (ratio and error set to nan).
    """
    x = interacting.centers
    smooth = running_average(interacting.values, smoothing_window)
    ref = reference_lorentzian(x)
    mask = ref < floor * reference_lorentzian.peak
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(mask, np.nan, smooth / ref)
        s_err = (_running_error(interacting.errors, smoothing_window)
                 if interacting.errors is not None else np.zeros_like(smooth))
        ref_err = reference_lorentzian.stderr(x)
        rel = np.sqrt(np.where(smooth != 0, (s_err / smooth) ** 2, 0.0) + (ref_err / ref) ** 2)
        band = np.where(mask, np.nan, np.abs(ratio) * rel)
        # a zero smoothed density still carries its absolute error
        band = np.where(~mask & (smooth == 0), s_err / ref, band)
    meta = {"smoothing_window": int(smoothing_window), "floor": floor,
            "reference_center": reference_lorentzian.center,
            "reference_width": reference_lorentzian.width,
            "reference_amplitude": reference_lorentzian.amplitude}
    return RatioCurve(x, ratio, band, mask, meta)


# -- tail exponents -----------------------------------------------------------

@dataclass
class TailFit:
    exponent: float
    stderr: float
    bins: int
    side: str


def tail_exponent(spectrum: Spectrum, fit_range, side: str = "both", min_bins: int = 8) -> dict:
    """Log-log slope of the density against ``|detuning|`` inside ``fit_range``.

    ``fit_range = (lo, hi)`` bounds ``|detuning|``; each side is regressed
    separately. Returns ``{"positive": TailFit, "negative": TailFit}`` (only
    the requested side when ``side`` is "positive" or "negative").
    """
    lo, hi = (float(v) for v in fit_range)
    if not 0 < lo < hi:
        raise UsageError("fit_range must satisfy 0 < lo < hi")
    sides = ("positive", "negative") if side == "both" else (side,)
    x = spectrum.centers
    out = {}
    for s in sides:
        if s not in ("positive", "negative"):
            raise UsageError(f"unknown side {s!r}")
        ax = x if s == "positive" else -x
        sel = (ax >= lo) & (ax <= hi) & (spectrum.values > 0)
        if sel.sum() < min_bins:
            raise InsufficientDataError(
                f"{s} tail has {int(sel.sum())} populated bins in [{lo}, {hi}] MHz; need {min_bins}")
        fit = stats.linregress(np.log(ax[sel]), np.log(spectrum.values[sel]))
        out[s] = TailFit(float(fit.slope), float(fit.stderr), int(sel.sum()), s)
    return out
