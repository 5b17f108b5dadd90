"""Sweep and optimization runners: resolved configs in, result tables out.

Rows are computed on a process pool sized by the resolved ``threads``
setting and assembled in sweep-lexicographic order, so the emitted table
body is deterministic regardless of worker scheduling.
"""

from __future__ import annotations

import datetime
import itertools
import math
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .constants import TWO_PI
from .config import ConfigError
from .cw_odmr import cw_line_at, optimize_cw, sensitivity_cw
from .ensemble import (
    BeamProfile,
    CollectionProfile,
    DiamondSample,
    EnsembleConfig,
    ensemble_sensitivity,
)
from .lineshape import hyperfine_ratio
from .photophysics import RateConstants, pump_rate_for
from .pulsed_odmr import (
    PulseTiming,
    optimize_pulsed,
    pulsed_summary,
    sensitivity_pulsed,
)
from .tables import ResultTable, config_hash


def rates_from(resolved: dict) -> RateConstants:
    return RateConstants(**resolved["rates"])


def _metadata(resolved: dict, extra: dict | None = None) -> dict:
    meta = {
        "scenario": resolved["scenario"],
        "config_hash": config_hash(resolved),
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "seed": resolved["seed"],
        "threads": resolved["threads"],
    }
    if extra:
        meta.update(extra)
    return meta


def _map_rows(worker, jobs, threads: int) -> list:
    if threads <= 1 or len(jobs) <= 1:
        return [worker(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, jobs, chunksize=1))


# Workers live at module scope so they pickle cleanly for the process pool.

def _cw_point(job):
    resolved, s, rabi_mhz = job
    rates = rates_from(resolved)
    p = resolved["params"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            line = cw_line_at(rates, s, TWO_PI * rabi_mhz, p["t2star"], p["epsilon"],
                              p["background"])
            eta = sensitivity_cw(line)
        except (ValueError, RuntimeError) as err:
            return [s, TWO_PI * rabi_mhz, math.nan, math.nan, math.nan, math.nan,
                    f"error: {err}"]
    return [s, TWO_PI * rabi_mhz, line.f0, line.contrast, line.fwhm, eta, "ok"]


def run_cw_sweep(resolved: dict) -> ResultTable:
    """CW line observables over an (s, Rabi) grid."""
    sweep = resolved["sweep"]
    if "s" not in sweep or "rabi_mhz" not in sweep:
        raise ConfigError("cw sweep needs 's' and 'rabi_mhz' axes", "$.sweep")
    jobs = [(resolved, s, rabi) for s, rabi in itertools.product(sweep["s"], sweep["rabi_mhz"])]
    rows = _map_rows(_cw_point, jobs, resolved["threads"])
    return ResultTable(
        columns=["s", "omega", "f0", "contrast", "fwhm", "sensitivity", "status"],
        rows=rows, metadata=_metadata(resolved))


def _pulsed_fixed_point(job):
    resolved, t_pi, t_l, tau = job
    rates = rates_from(resolved)
    p = resolved["params"]
    omega = math.pi / t_pi
    r = pump_rate_for(p["s"], rates)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            timing = PulseTiming(t_pi=t_pi, t_w=p["t_w"], t_l=t_l, tau=tau)
            summary = pulsed_summary(rates, r, timing, omega, p["t2star"], p["epsilon"],
                                     p["background"])
            eta = sensitivity_pulsed(summary) if summary.contrast > 0 else math.nan
        except (ValueError, RuntimeError) as err:
            return [p["s"], t_pi, omega, t_l, tau, math.nan, math.nan, math.nan, math.nan,
                    math.nan, f"error: {err}"]
    return [p["s"], t_pi, omega, t_l, tau, summary.c_pi, summary.contrast, summary.f_avg0,
            summary.fwhm, eta, "ok"]


def _pulsed_optimum(job):
    resolved, s = job
    rates = rates_from(resolved)
    p = resolved["params"]
    opt_cfg = resolved["optimize"]
    kwargs = {}
    if "rabi_range_mhz" in opt_cfg:
        lo, hi = opt_cfg["rabi_range_mhz"]
        kwargs["omega_range"] = (TWO_PI * lo, TWO_PI * hi)
    for key in ("t_l_range", "fraction_range"):
        if key in opt_cfg:
            kwargs[key] = tuple(opt_cfg[key])
    if "coarse" in opt_cfg:
        kwargs["coarse"] = opt_cfg["coarse"]
    if "rel_tol" in opt_cfg:
        kwargs["rel_tol"] = opt_cfg["rel_tol"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            opt = optimize_pulsed(rates, p["t2star"], p["t_w"], p["epsilon"], p["background"],
                                  s=s, **kwargs)
        except (ValueError, RuntimeError) as err:
            return [s, math.nan, math.nan, math.nan, math.nan, math.nan, math.nan, math.nan,
                    math.nan, math.nan, f"error: {err}"]
    return [s, opt.t_pi, opt.omega, opt.t_l, opt.tau, opt.summary.c_pi, opt.summary.contrast,
            opt.summary.f_avg0, opt.summary.fwhm, opt.eta, "ok"]


_PULSED_COLUMNS = ["s", "t_pi", "omega", "t_l", "tau", "c_pi", "contrast", "f_avg0",
                   "fwhm", "sensitivity", "status"]


def run_pulsed_sweep(resolved: dict) -> ResultTable:
    """Pulsed observables versus pulse timing, or optimized values versus s."""
    sweep = resolved["sweep"]
    p = resolved["params"]
    threads = resolved["threads"]
    if "t_pi" in sweep:
        jobs = [(resolved, t_pi, p["t_l"], p["tau"]) for t_pi in sweep["t_pi"]]
        rows = _map_rows(_pulsed_fixed_point, jobs, threads)
        mode = "t_pi_sweep"
    elif "t_l" in sweep or "tau" in sweep:
        t_ls = sweep.get("t_l", [p["t_l"]])
        taus = sweep.get("tau", [p["tau"]])
        jobs = [(resolved, p["t_pi"], t_l, tau)
                for t_l, tau in itertools.product(t_ls, taus) if tau <= t_l]
        rows = _map_rows(_pulsed_fixed_point, jobs, threads)
        mode = "timing_grid"
    elif "s" in sweep:
        jobs = [(resolved, s) for s in sweep["s"]]
        rows = _map_rows(_pulsed_optimum, jobs, threads)
        mode = "optimized_vs_s"
    else:
        raise ConfigError("pulsed sweep needs a t_pi, t_l/tau, or s axis", "$.sweep")
    return ResultTable(columns=_PULSED_COLUMNS, rows=rows,
                       metadata=_metadata(resolved, {"mode": mode}))


def _ensemble_config(resolved: dict, power: float, waist: float, alpha: float) -> EnsembleConfig:
    p = resolved["params"]
    return EnsembleConfig(
        beam=BeamProfile(total_power=power, waist=waist,
                         saturation_intensity=p["saturation_intensity"]),
        sample=DiamondSample(nv_density=p["nv_density_ppb"], t2star=p["t2star"],
                             thickness=p["thickness_um"]),
        collection=CollectionProfile(epsilon_max=p["epsilon_max"], waist=waist),
        background_alpha=alpha,
    )


def _ensemble_point(job):
    resolved, power, waist, alpha, protocol = job
    rates = rates_from(resolved)
    p = resolved["params"]
    opt_cfg = resolved["optimize"]
    kwargs = {"t_w": p["t_w"], "n_shells": p["n_shells"], "rates": rates}
    if "rabi_range_mhz" in opt_cfg:
        lo, hi = opt_cfg["rabi_range_mhz"]
        kwargs["omega_range"] = (TWO_PI * lo, TWO_PI * hi)
    for key in ("t_l_range", "fraction_range"):
        if key in opt_cfg:
            kwargs[key] = tuple(opt_cfg[key])
    if "coarse" in opt_cfg:
        kwargs["coarse"] = opt_cfg["coarse"]
    base = [power, waist, alpha, protocol]
    if power <= 0.0:
        return base + [math.nan] * 8 + ["error: power must be positive"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            opt = ensemble_sensitivity(_ensemble_config(resolved, power, waist, alpha),
                                       protocol, **kwargs)
        except (ValueError, RuntimeError) as err:
            return base + [math.nan] * 8 + [f"error: {err}"]
    return base + [opt.eta, opt.omega,
                   opt.t_pi if opt.t_pi is not None else math.nan,
                   opt.t_l if opt.t_l is not None else math.nan,
                   opt.tau if opt.tau is not None else math.nan,
                   opt.f0, opt.contrast, opt.fwhm, "ok"]


_ENSEMBLE_COLUMNS = ["power_mw", "waist_um", "alpha", "protocol", "eta", "omega",
                     "t_pi", "t_l", "tau", "f0", "contrast", "fwhm", "ratio", "status"]


def run_ensemble(resolved: dict) -> ResultTable:
    """Optimized ensemble sensitivity over power/waist/background sweeps.

    When both protocols run, each row carries the CW/pulsed sensitivity
    ratio of its (power, waist, alpha) point.
    """
    sweep = resolved["sweep"]
    p = resolved["params"]
    powers = sweep.get("power_mw", [p["power_mw"]])
    waists = sweep.get("waist_um", [p["waist_um"]])
    alphas = sweep.get("alpha", [p["background_alpha"]])
    protocols = p["protocols"]
    jobs = [(resolved, power, waist, alpha, protocol)
            for waist, power, alpha, protocol in itertools.product(waists, powers, alphas,
                                                                   protocols)]
    rows = _map_rows(_ensemble_point, jobs, resolved["threads"])

    # Attach the per-point CW/pulsed ratio when both protocols are present.
    eta_by_point: dict[tuple, dict] = {}
    for row in rows:
        point = (row[0], row[1], row[2])
        if row[-1] == "ok":
            eta_by_point.setdefault(point, {})[row[3]] = row[4]
    full_rows = []
    for row in rows:
        etas = eta_by_point.get((row[0], row[1], row[2]), {})
        if "cw" in etas and "pulsed" in etas:
            ratio = etas["cw"] / etas["pulsed"]
        else:
            ratio = math.nan
        full_rows.append(row[:-1] + [ratio, row[-1]])
    return ResultTable(columns=_ENSEMBLE_COLUMNS, rows=full_rows,
                       metadata=_metadata(resolved))


def _hyperfine_point(job):
    resolved, kind, fwhm = job
    p = resolved["params"]
    try:
        ratio = hyperfine_ratio(kind, fwhm, p["contrast"], p["splitting_mhz"])
    except (ValueError, RuntimeError) as err:
        return [kind, fwhm, p["splitting_mhz"], math.nan, f"error: {err}"]
    return [kind, fwhm, p["splitting_mhz"], ratio, "ok"]


def run_hyperfine(resolved: dict) -> ResultTable:
    """Triplet-overlap sensitivity ratios, or ensemble linewidths vs power."""
    p = resolved["params"]
    if p["mode"] == "ensemble_linewidth":
        ensemble_resolved = dict(resolved)
        ensemble_resolved["scenario"] = "ensemble"
        ensemble_resolved["params"] = dict(_ENSEMBLE_LINEWIDTH_PARAMS)
        ensemble_resolved["sweep"] = {"power_mw": resolved["sweep"].get("power_mw", [100.0])}
        table = run_ensemble(ensemble_resolved)
        rows = [[row[0], row[1], row[3], row[11]] for row in table.rows]
        return ResultTable(columns=["power_mw", "waist_um", "protocol", "fwhm"], rows=rows,
                           metadata=_metadata(resolved, {"mode": "ensemble_linewidth"}))
    sweep = resolved["sweep"]
    jobs = [(resolved, kind, fwhm)
            for kind, fwhm in itertools.product(p["kinds"], sweep["fwhm_mhz"])]
    rows = _map_rows(_hyperfine_point, jobs, resolved["threads"])
    return ResultTable(columns=["kind", "fwhm", "splitting", "ratio", "status"], rows=rows,
                       metadata=_metadata(resolved, {"mode": "ratio"}))


_ENSEMBLE_LINEWIDTH_PARAMS = {
    "waist_um": 100.0, "power_mw": 100.0, "nv_density_ppb": 300.0, "t2star": 1.0,
    "thickness_um": 500.0, "epsilon_max": 0.01, "saturation_intensity": 1.1,
    "background_alpha": 0.0, "t_w": 1.0, "protocols": ["cw", "pulsed"], "n_shells": 200,
}


def run_optimize(resolved: dict) -> ResultTable:
    """Single optimization runs for the configured scenario."""
    scenario = resolved["scenario"]
    rates = rates_from(resolved)
    p = resolved["params"]
    opt_cfg = resolved["optimize"]
    if scenario == "cw_single":
        kwargs = {}
        if "s_range" in opt_cfg:
            kwargs["s_range"] = tuple(opt_cfg["s_range"])
        if "rabi_range_mhz" in opt_cfg:
            lo, hi = opt_cfg["rabi_range_mhz"]
            kwargs["omega_range"] = (TWO_PI * lo, TWO_PI * hi)
        if "coarse" in opt_cfg:
            kwargs["coarse"] = opt_cfg["coarse"]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            opt = optimize_cw(rates, p["t2star"], p["epsilon"], p["background"], **kwargs)
        rows = [[opt.s, opt.omega, opt.line.f0, opt.line.contrast, opt.line.fwhm, opt.eta,
                 "ok"]]
        return ResultTable(columns=["s", "omega", "f0", "contrast", "fwhm", "sensitivity",
                                    "status"],
                           rows=rows, metadata=_metadata(resolved, {"mode": "optimize"}))
    if scenario == "pulsed_single":
        row = _pulsed_optimum((resolved, p["s"]))
        return ResultTable(columns=_PULSED_COLUMNS, rows=[row],
                           metadata=_metadata(resolved, {"mode": "optimize"}))
    if scenario == "ensemble":
        return run_ensemble(resolved)
    raise ConfigError(f"scenario {scenario!r} has no optimize mode", "$.scenario")


RUNNERS = {
    "cw-sweep": ("cw_single", run_cw_sweep),
    "pulsed-sweep": ("pulsed_single", run_pulsed_sweep),
    "ensemble": ("ensemble", run_ensemble),
    "hyperfine": ("hyperfine", run_hyperfine),
}
