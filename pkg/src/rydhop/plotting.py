"""Figure output. Every figure is written as SVG with reproducible bytes."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import with_ext  # noqa: E402

RC = {
    "svg.hashsalt": "rydhop",
    "svg.fonttype": "none",
    "font.size": 10,
    "axes.linewidth": 0.8,
    "lines.linewidth": 1.2,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "legend.frameon": False,
}


def new_figure(width=5.0, height=None):
    golden = (math.sqrt(5) - 1.0) / 2.0
    fig, ax = plt.subplots(figsize=(width, height or width * golden))
    return fig, ax


def save(fig, path) -> Path:
    path = with_ext(path, ".svg")
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return path


def _step(ax, spectrum, **kw):
    return ax.stairs(spectrum.values, spectrum.bin_edges, **kw)


def plot_spectrum(spectrum, path, logy=False, label=None, title=None):
    with plt.rc_context(RC):
        fig, ax = new_figure()
        _step(ax, spectrum, label=label)
        ax.set_xlabel(r"detuning $\Delta_P$ (MHz)")
        ax.set_ylabel("spectral density (1/MHz)")
        if logy:
            ax.set_yscale("log")
        if title:
            ax.set_title(title)
        if label:
            ax.legend()
        return save(fig, path)


def plot_fit_overlay(measured, model_values, path, title=None):
    with plt.rc_context(RC):
        fig, ax = new_figure()
        x = measured.centers
        ax.plot(x, measured.values, ".", ms=3, color="tab:blue", label="measured")
        ax.plot(x, model_values, "-", color="tab:orange", label=r"fit $A\,\bar\Gamma$")
        ax.set_xlabel(r"detuning $\Delta_P$ (MHz)")
        ax.set_ylabel("signal (arb. u.)")
        if title:
            ax.set_title(title)
        ax.legend()
        return save(fig, path)


def plot_ratio_curve(curve, path, logy=True):
    with plt.rc_context(RC):
        fig, ax = new_figure()
        ok = ~curve.mask & np.isfinite(curve.ratio)
        x, r, e = curve.detunings[ok], curve.ratio[ok], curve.error_band[ok]
        ax.fill_between(x, np.clip(r - e, 1e-12, None), r + e, color="tab:blue", alpha=0.3, lw=0)
        ax.plot(x, r, color="tab:blue")
        ax.set_xlabel(r"detuning $\Delta_P$ (MHz)")
        ax.set_ylabel(r"$\Gamma / \Gamma_0$")
        if logy and np.any(r > 0):
            ax.set_yscale("log")
        return save(fig, path)


def plot_profile(profile, path):
    with plt.rc_context(RC):
        fig, ax = new_figure()
        c = profile.centers
        ok = profile.counts > 0
        ax.plot(c[ok], profile.mean_ipr[ok], "o-", ms=3, label="mean IPR")
        ax.plot(c[ok], profile.pair_fraction[ok], "s-", ms=3, label="pair-localized fraction")
        ax.set_xlabel(r"eigenenergy $E_\chi$ (MHz)")
        ax.set_ylim(0, 1.05)
        ax.legend()
        return save(fig, path)


def plot_tail(spectrum, fits, path):
    """Log-log tails of both sides with the fitted power laws."""
    with plt.rc_context(RC):
        fig, ax = new_figure()
        x = spectrum.centers
        for side, sign, color in (("positive", 1, "tab:red"), ("negative", -1, "tab:blue")):
            sel = (sign * x > 0) & (spectrum.values > 0)
            ax.plot(sign * x[sel], spectrum.values[sel], ".", ms=3, color=color, label=side)
            fit = fits.get(side)
            if fit is not None:
                xs = np.abs(x[sel])
                ref = spectrum.values[sel][len(xs) // 2] * (xs / xs[len(xs) // 2]) ** fit.exponent
                ax.plot(xs, ref, "-", color=color, lw=0.8,
                        label=f"slope {fit.exponent:.2f} $\\pm$ {fit.stderr:.2f}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel(r"$|\Delta_P|$ (MHz)")
        ax.set_ylabel("spectral density (1/MHz)")
        ax.legend()
        return save(fig, path)
