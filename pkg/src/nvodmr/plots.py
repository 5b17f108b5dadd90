"""Figure rendering for result tables.

Each scenario gets a small matplotlib layout; figures are written to file
(Agg backend) next to the delimited output when the CLI is invoked with
``--plot``.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def apply_style() -> None:
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    width = 6.4
    plt.rcParams.update({
        "figure.figsize": (width, width * golden),
        "font.size": 9,
        "axes.labelsize": 9,
        "legend.fontsize": 8,
        "xtick.labelsize": 8,
        "ytick.labelsize": 8,
        "lines.linewidth": 1.4,
        "figure.dpi": 150,
        "savefig.dpi": 150,
        "axes.grid": True,
        "grid.alpha": 0.3,
    })


def _numeric(table, name):
    out = []
    for v in table.column(name):
        try:
            out.append(float(v))
        except (TypeError, ValueError):
            out.append(math.nan)
    return np.array(out)


def _ok_mask(table):
    if "status" not in table.columns:
        return np.ones(len(table.rows), dtype=bool)
    return np.array([str(v) == "ok" for v in table.column("status")])


def render_table(table, path) -> None:
    apply_style()
    scenario = table.metadata.get("scenario", "")
    mode = table.metadata.get("mode", "")
    if scenario == "cw_single":
        fig = _plot_cw(table)
    elif scenario == "pulsed_single" and mode == "t_pi_sweep":
        fig = _plot_pulsed_tpi(table)
    elif scenario == "pulsed_single" and mode == "optimized_vs_s":
        fig = _plot_pulsed_vs_s(table)
    elif scenario == "pulsed_single":
        fig = _plot_pulsed_timing(table)
    elif scenario == "ensemble":
        fig = _plot_ensemble(table)
    elif scenario == "hyperfine" and mode == "ratio":
        fig = _plot_hyperfine(table)
    else:
        fig = _plot_generic(table)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)


def _plot_cw(table):
    ok = _ok_mask(table)
    s = _numeric(table, "s")[ok]
    omega = _numeric(table, "omega")[ok]
    eta = _numeric(table, "sensitivity")[ok]
    fig, ax = plt.subplots()
    if np.unique(s).size > 1 and np.unique(omega).size > 1:
        # sensitivity map over the (s, Rabi) grid
        sc = ax.scatter(s, omega / (2 * np.pi), c=np.log10(eta), cmap="viridis", s=14)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("saturation parameter s")
        ax.set_ylabel("Rabi frequency $\\Omega/2\\pi$ (MHz)")
        fig.colorbar(sc, ax=ax, label="log10 sensitivity (T/$\\sqrt{\\mathrm{Hz}}$)")
        best = np.nanargmin(eta)
        ax.plot(s[best], omega[best] / (2 * np.pi), "r*", markersize=12)
    else:
        x = omega / (2 * np.pi) if np.unique(omega).size > 1 else s
        ax.loglog(x, eta, "o-")
        ax.set_xlabel("Rabi frequency (MHz)" if np.unique(omega).size > 1 else "s")
        ax.set_ylabel("sensitivity (T/$\\sqrt{\\mathrm{Hz}}$)")
    return fig


def _plot_pulsed_tpi(table):
    ok = _ok_mask(table)
    t_pi = _numeric(table, "t_pi")[ok]
    fig, axes = plt.subplots(2, 2, figsize=(7.5, 5.5), sharex=True)
    for ax, column, label in zip(axes.ravel(),
                                 ("f_avg0", "fwhm", "contrast", "sensitivity"),
                                 ("$F^0_{avg}$ (counts/s)", "FWHM (MHz)", "contrast",
                                  "sensitivity (T/$\\sqrt{\\mathrm{Hz}}$)")):
        ax.plot(t_pi, _numeric(table, column)[ok], "o-")
        ax.set_ylabel(label)
    for ax in axes[1]:
        ax.set_xlabel("$t_\\pi$ ($\\mu$s)")
    fig.tight_layout()
    return fig


def _plot_pulsed_timing(table):
    ok = _ok_mask(table)
    t_l = _numeric(table, "t_l")[ok]
    tau = _numeric(table, "tau")[ok]
    fig, axes = plt.subplots(1, 3, figsize=(9.5, 3.2))
    for ax, column in zip(axes, ("contrast", "f_avg0", "sensitivity")):
        values = _numeric(table, column)[ok]
        for tau_value in np.unique(tau):
            pick = tau == tau_value
            ax.plot(t_l[pick], values[pick], "o-", label=f"$\\tau$={tau_value:g}")
        ax.set_xlabel("$t_L$ ($\\mu$s)")
        ax.set_ylabel(column)
        ax.set_xscale("log")
    axes[0].legend()
    fig.tight_layout()
    return fig


def _plot_pulsed_vs_s(table):
    ok = _ok_mask(table)
    s = _numeric(table, "s")[ok]
    fig, axes = plt.subplots(1, 3, figsize=(9.5, 3.2))
    axes[0].loglog(s, _numeric(table, "sensitivity")[ok], "o-")
    axes[0].set_ylabel("sensitivity (T/$\\sqrt{\\mathrm{Hz}}$)")
    axes[1].loglog(s, _numeric(table, "t_pi")[ok], "o-")
    axes[1].set_ylabel("$t_\\pi$ ($\\mu$s)")
    axes[2].loglog(s, _numeric(table, "t_l")[ok], "o-", label="$t_L$")
    axes[2].loglog(s, _numeric(table, "tau")[ok], "s--", label="$\\tau$")
    axes[2].set_ylabel("$\\mu$s")
    axes[2].legend()
    for ax in axes:
        ax.set_xlabel("saturation parameter s")
    fig.tight_layout()
    return fig


def _plot_ensemble(table):
    ok = _ok_mask(table)
    power = _numeric(table, "power_mw")[ok]
    waist = _numeric(table, "waist_um")[ok]
    alpha = _numeric(table, "alpha")[ok]
    eta = _numeric(table, "eta")[ok]
    ratio = _numeric(table, "ratio")[ok]
    protocol = np.array(table.column("protocol"), dtype=object)[ok]

    if np.unique(alpha).size > 1:
        fig, ax = plt.subplots()
        pick = protocol == "cw"
        ax.plot(alpha[pick], ratio[pick], "o-")
        ax.set_xlabel("background coefficient $\\alpha$")
        ax.set_ylabel("CW / pulsed sensitivity ratio")
        return fig

    fig, axes = plt.subplots(1, 3, figsize=(10.0, 3.2))
    for proto, ax in zip(("cw", "pulsed"), axes[:2]):
        for w in np.unique(waist):
            pick = (protocol == proto) & (waist == w)
            if pick.any():
                ax.loglog(power[pick], eta[pick], "o-", label=f"$\\sigma$={w:g} $\\mu$m")
        ax.set_xlabel("total power (mW)")
        ax.set_ylabel(f"{proto} sensitivity (T/$\\sqrt{{\\mathrm{{Hz}}}}$)")
        ax.legend()
    for w in np.unique(waist):
        pick = (protocol == "cw") & (waist == w) & np.isfinite(ratio)
        if pick.any():
            axes[2].semilogx(power[pick], ratio[pick], "o-", label=f"$\\sigma$={w:g} $\\mu$m")
    axes[2].set_xlabel("total power (mW)")
    axes[2].set_ylabel("CW / pulsed ratio")
    fig.tight_layout()
    return fig


def _plot_hyperfine(table):
    ok = _ok_mask(table)
    fwhm = _numeric(table, "fwhm")[ok]
    splitting = _numeric(table, "splitting")[ok]
    ratio = _numeric(table, "ratio")[ok]
    kind = np.array(table.column("kind"), dtype=object)[ok]
    fig, ax = plt.subplots()
    for k in np.unique(kind):
        pick = kind == k
        ax.semilogx(fwhm[pick] / splitting[pick], ratio[pick], "o-", label=str(k))
    ax.set_xlabel("linewidth / splitting")
    ax.set_ylabel("sensitivity ratio vs independent lines")
    ax.legend()
    return fig


def _plot_generic(table):
    fig, ax = plt.subplots()
    numeric_cols = [c for c in table.columns if c != "status"]
    x = _numeric(table, numeric_cols[0])
    for c in numeric_cols[1:4]:
        ax.plot(x, _numeric(table, c), "o-", label=c)
    ax.set_xlabel(numeric_cols[0])
    ax.legend()
    return fig
