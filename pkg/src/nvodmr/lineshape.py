"""Closed-form and numeric shot-noise-limited sensitivities for ODMR lines,
plus the hyperfine-triplet superposition analysis.

The closed forms evaluate the shot-noise-limited field sensitivity of a
fluorescence dip probed at its point of maximum slope:

    Lorentzian dip:  eta = 2 dv / (3 c g) * sqrt((4/3 - c) / F0)
    Gaussian dip:    eta = dv / (2 c g) * sqrt(sqrt(e) (sqrt(e) - c) / (F0 ln 4))

with dv the FWHM in Hz, c the contrast, F0 the off-resonant count rate and
g the NV gyromagnetic ratio.  ``numeric_sensitivity`` applies the same
max-slope criterion to arbitrary spectra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize as spopt

from .constants import GAMMA_NV_HZ_PER_T

HYPERFINE_SPLITTING_MHZ = 2.16  # 14N triplet splitting

_FOUR_LN2 = 4.0 * math.log(2.0)


@dataclass(frozen=True)
class AnalyticLine:
    """Single fluorescence dip with unit off-resonant level."""

    kind: str  # "lorentzian" or "gaussian"
    fwhm: float  # MHz
    contrast: float
    center: float = 0.0  # MHz

    def __post_init__(self):
        if self.kind not in ("lorentzian", "gaussian"):
            raise ValueError(f"kind must be 'lorentzian' or 'gaussian', got {self.kind!r}")
        if self.fwhm <= 0.0:
            raise ValueError(f"fwhm must be positive, got {self.fwhm}")
        if not 0.0 < self.contrast < 1.0:
            raise ValueError(f"contrast must be in (0, 1), got {self.contrast}")


@dataclass(frozen=True)
class HyperfineTriplet:
    """Three equal dips split by the hyperfine splitting.

    ``line.contrast`` is the per-component contrast (i.e. already divided
    by three relative to the unsplit transition).
    """

    line: AnalyticLine
    splitting: float = HYPERFINE_SPLITTING_MHZ  # MHz

    def __post_init__(self):
        if self.splitting <= 0.0:
            raise ValueError(f"splitting must be positive, got {self.splitting}")


def unit_profile(kind: str, fwhm: float, nu):
    """Unit-peak dip shape centred at zero."""
    nu = np.asarray(nu, dtype=float)
    if kind == "lorentzian":
        return 1.0 / (1.0 + (2.0 * nu / fwhm) ** 2)
    if kind == "gaussian":
        return np.exp(-_FOUR_LN2 * (nu / fwhm) ** 2)
    raise ValueError(f"unknown lineshape kind {kind!r}")


def evaluate_line(line: AnalyticLine, nu):
    """Relative fluorescence 1 - c * L(nu); 1 far off resonance."""
    return 1.0 - line.contrast * unit_profile(line.kind, line.fwhm, np.asarray(nu, float) - line.center)


def evaluate_triplet(triplet: HyperfineTriplet, nu):
    """Relative fluorescence of three superposed dips at -A, 0, +A."""
    nu = np.asarray(nu, dtype=float)
    line = triplet.line
    total = np.zeros_like(nu)
    for offset in (-triplet.splitting, 0.0, triplet.splitting):
        total = total + unit_profile(line.kind, line.fwhm, nu - line.center - offset)
    return 1.0 - line.contrast * total


def lorentzian_sensitivity(fwhm_mhz: float, contrast: float, f0: float) -> float:
    """Shot-noise sensitivity (T/sqrt(Hz)) of a Lorentzian dip at max slope."""
    _check_line_inputs(fwhm_mhz, contrast, f0)
    dv_hz = fwhm_mhz * 1e6
    return (2.0 * dv_hz / (3.0 * contrast * GAMMA_NV_HZ_PER_T)) * math.sqrt((4.0 / 3.0 - contrast) / f0)


def gaussian_sensitivity(fwhm_mhz: float, contrast: float, f0: float) -> float:
    """Shot-noise sensitivity (T/sqrt(Hz)) of a Gaussian dip at max slope."""
    _check_line_inputs(fwhm_mhz, contrast, f0)
    dv_hz = fwhm_mhz * 1e6
    sq_e = math.sqrt(math.e)
    return (dv_hz / (2.0 * contrast * GAMMA_NV_HZ_PER_T)) * math.sqrt(
        sq_e * (sq_e - contrast) / (f0 * math.log(4.0)))


def _check_line_inputs(fwhm_mhz, contrast, f0):
    if fwhm_mhz <= 0.0:
        raise ValueError(f"linewidth must be positive, got {fwhm_mhz}")
    if contrast <= 0.0:
        raise ValueError("zero contrast gives a non-finite sensitivity")
    if contrast >= 1.0:
        raise ValueError(f"contrast must be below 1, got {contrast}")
    if f0 <= 0.0:
        raise ValueError(f"off-resonant rate must be positive, got {f0}")


def numeric_sensitivity(spectrum, window, step: float | None = None) -> float:
    """Shot-noise sensitivity of an arbitrary spectrum, probed at max slope.

    ``spectrum`` maps frequency (MHz) to a count rate (counts/s).  The probe
    point is where |dF/dnu| is largest inside ``window``; the returned value
    is sqrt(F) / (gamma_NV |dF/dnu|) there, in T/sqrt(Hz).  Derivatives use
    central differences with step ``step`` (default: window span / 400).

    Raises if the spectrum is flat over the window.
    """
    lo, hi = float(window[0]), float(window[1])
    if not hi > lo:
        raise ValueError(f"window must be increasing, got {window}")
    if step is None:
        step = (hi - lo) / 400.0

    def slope(nu):
        # 5-point central difference; the O(h^2) stencil biases |F'| low
        # enough to matter against the 0.1% closed-form cross-checks.
        return (-spectrum(nu + 2 * step) + 8.0 * spectrum(nu + step)
                - 8.0 * spectrum(nu - step) + spectrum(nu - 2 * step)) / (12.0 * step)

    # Dense scan to localize candidate max-slope points, then a bounded
    # refinement of every competitive local maximum.  Multi-lobed spectra
    # can have several flanks with slopes tied to within float noise; among
    # numerically tied slopes the best operating point is kept.
    grid = np.linspace(lo, hi, 2001)
    slopes = np.abs(np.array([slope(nu) for nu in grid]))
    best_scan = float(np.max(slopes))
    f_scale = max(abs(spectrum(lo)), abs(spectrum(hi)), 1e-30)
    if best_scan * (hi - lo) < 1e-12 * f_scale:
        raise ValueError("spectrum is flat over the search window; no slope to probe")

    interior = np.zeros_like(slopes, dtype=bool)
    interior[1:-1] = (slopes[1:-1] >= slopes[:-2]) & (slopes[1:-1] >= slopes[2:])
    interior[0] = slopes[0] >= slopes[1]
    interior[-1] = slopes[-1] >= slopes[-2]
    candidates = np.flatnonzero(interior & (slopes >= 0.99 * best_scan))
    candidates = candidates[np.argsort(slopes[candidates])[::-1][:8]]

    span = grid[1] - grid[0]
    refined = []
    for peak in candidates:
        b_lo = max(lo, grid[peak] - 2.0 * span)
        b_hi = min(hi, grid[peak] + 2.0 * span)
        res = spopt.minimize_scalar(lambda nu: -abs(slope(nu)), bounds=(b_lo, b_hi),
                                    method="bounded", options={"xatol": step * 1e-5})
        nu_c = float(res.x)
        if abs(slope(nu_c)) < slopes[peak]:
            nu_c = float(grid[peak])
        refined.append((nu_c, abs(slope(nu_c))))

    best_slope = max(s for _, s in refined)
    eta_best = math.inf
    for nu_c, s in refined:
        if s < best_slope * (1.0 - 1e-9):
            continue
        f_c = float(spectrum(nu_c))
        if f_c <= 0.0:
            raise ValueError(f"spectrum must be positive at the probe point, got {f_c}")
        eta = math.sqrt(f_c) / (GAMMA_NV_HZ_PER_T * s / 1e6)
        eta_best = min(eta_best, eta)
    return eta_best


def hyperfine_ratio(kind: str, fwhm: float, contrast: float,
                    splitting: float = HYPERFINE_SPLITTING_MHZ, f0: float = 1e6) -> float:
    """Sensitivity of the hyperfine triplet relative to the naive c/3 line.

    Numerator: numeric max-slope sensitivity of the superposition
    1 - (c/3) [L(nu - A) + L(nu) + L(nu + A)].  Denominator: the matching
    closed form evaluated with contrast c/3 and the single-component FWHM.
    Both use the same off-resonant normalization, so the ratio isolates the
    lineshape effect of the overlap.
    """
    component = contrast / 3.0
    if not 0.0 < component < 1.0 / 3.0:
        raise ValueError(f"per-component contrast c/3 must be in (0, 1/3), got {component}")
    triplet = HyperfineTriplet(AnalyticLine(kind, fwhm, component), splitting)

    def spectrum(nu):
        return f0 * float(evaluate_triplet(triplet, nu))

    window = (0.0, splitting + 4.0 * fwhm)
    numerator = numeric_sensitivity(spectrum, window, step=fwhm / 200.0)
    if kind == "lorentzian":
        denominator = lorentzian_sensitivity(fwhm, component, f0)
    else:
        denominator = gaussian_sensitivity(fwhm, component, f0)
    return numerator / denominator
