"""Continuous-wave ODMR: driven steady state, spectra, line summaries and
shot-noise sensitivity.

The optical Bloch equations couple the coherence rho_01 of the driven
m_0 <-> m_+1 transition to the 4-level rate equations.  In steady state the
coherence can be eliminated exactly, leaving the rate equations augmented
by a detuning-dependent population-exchange rate

    g(delta) = (Omega^2 / 2) * Gamma_2 / (Gamma_2^2 + delta^2)

between m_0 and m_+1.  The resulting 4-state balance solves in closed form,
which stays numerically stable for arbitrarily weak pumping and vectorizes
over detuning grids and pump-rate distributions.  The m_-1 transition is a
spectator: only one magnetic-dipole transition is near-resonant.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.optimize as spopt
from scipy.interpolate import PchipInterpolator

from .constants import MHZ_TO_HZ, TWO_PI
from .lineshape import lorentzian_sensitivity
from .optimize import Dimension, OptimResult, SearchSpace, minimize
from .photophysics import (
    PopulationVector,
    RateConstants,
    fluorescence_weights,
    pump_rate_for,
    saturation_parameter,
)

_SQRT_LN2 = math.sqrt(math.log(2.0))


class ModelValidityWarning(UserWarning):
    """The CW model assumes most population in the ground state (s << 1)."""


@dataclass(frozen=True)
class CwDrive:
    """Microwave drive: angular Rabi frequency (rad/us) and dephasing time (us)."""

    omega: float
    t2star: float

    def __post_init__(self):
        if self.omega < 0.0:
            raise ValueError(f"Rabi frequency must be nonnegative, got {self.omega}")
        if not self.t2star > 0.0:
            raise ValueError(f"T2* must be positive, got {self.t2star}")


@dataclass(frozen=True)
class CwSteadyState:
    populations: PopulationVector
    coherence_re: float
    coherence_im: float

    def __post_init__(self):
        magnitude = math.hypot(self.coherence_re, self.coherence_im)
        if magnitude > 0.5 + 1e-9:
            raise ValueError(f"|rho_01| = {magnitude} exceeds 1/2")


@dataclass(frozen=True)
class OdmrSpectrum:
    """Fluorescence rate versus angular detuning on a symmetric grid."""

    detunings: np.ndarray  # rad/us, strictly increasing, symmetric about 0
    rates: np.ndarray      # counts/s

    def __post_init__(self):
        detunings = np.asarray(self.detunings, dtype=float)
        rates = np.asarray(self.rates, dtype=float)
        if detunings.ndim != 1 or detunings.shape != rates.shape:
            raise ValueError("detunings and rates must be matching 1-d arrays")
        if not np.all(np.diff(detunings) > 0.0):
            raise ValueError("detunings must be strictly increasing")
        scale = max(abs(detunings[0]), abs(detunings[-1]))
        if np.max(np.abs(detunings + detunings[::-1])) > 1e-9 * scale:
            raise ValueError("detuning grid must be symmetric about zero")
        if np.min(rates) < 0.0:
            raise ValueError("fluorescence rates must be nonnegative")
        detunings.flags.writeable = False
        rates.flags.writeable = False
        object.__setattr__(self, "detunings", detunings)
        object.__setattr__(self, "rates", rates)


@dataclass(frozen=True)
class LineSummary:
    """Off-resonant rate (counts/s), contrast 1 - Fmin/F0, and FWHM (MHz)."""

    f0: float
    contrast: float
    fwhm: float

    def __post_init__(self):
        if not self.f0 > 0.0:
            raise ValueError(f"off-resonant rate must be positive, got {self.f0}")
        if not 0.0 <= self.contrast < 1.0:
            raise ValueError(f"contrast must be in [0, 1), got {self.contrast}")
        if not self.fwhm > 0.0:
            raise ValueError(f"linewidth must be positive, got {self.fwhm}")


def cw_dephasing_rate(r, t2star):
    """Gamma_2 = R + 2 sqrt(ln 2)/T2*, the optically broadened dephasing rate."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0.0):
        raise ValueError("pump rate must be nonnegative")
    if not t2star > 0.0:
        raise ValueError(f"T2* must be positive, got {t2star}")
    out = r + 2.0 * _SQRT_LN2 / t2star
    return float(out) if out.ndim == 0 else out


def steady_populations(rates: RateConstants, r, omega, t2star, delta) -> np.ndarray:
    """Driven steady-state populations; broadcasts over all arguments.

    Closed-form elimination: with q_i = D_i/P_i the spectator obeys
    m_-1 = q_-1 S, and the driven pair solves the 2x2 balance
    (P_0+g) m_0 - g m_1 = D_0 S, -g m_0 + (P_1+g) m_1 = D_1 S.
    Returns populations of shape broadcast(...) + (4,).
    """
    r, omega, delta = np.broadcast_arrays(
        np.asarray(r, float), np.asarray(omega, float), np.asarray(delta, float))
    if np.any(r <= 0.0):
        raise ValueError("the driven steady state requires r > 0")
    gamma2 = cw_dephasing_rate(r, t2star)
    g = 0.5 * omega**2 * gamma2 / (gamma2**2 + delta**2)

    p_minus = effective_pumps(rates, r, -1)
    p_zero = effective_pumps(rates, r, 0)
    p_plus = effective_pumps(rates, r, 1)

    det = p_zero * p_plus + g * (p_zero + p_plus)
    q_minus = rates.d1 / p_minus
    q_zero = (rates.d0 * (p_plus + g) + g * rates.d1) / det
    q_plus = (rates.d1 * (p_zero + g) + g * rates.d0) / det

    total = 1.0 + q_minus + q_zero + q_plus
    out = np.empty(np.shape(r) + (4,))
    out[..., 0] = q_minus / total
    out[..., 1] = q_zero / total
    out[..., 2] = q_plus / total
    out[..., 3] = 1.0 / total
    return out


def effective_pumps(rates: RateConstants, r, spin_index):
    """Vectorized K_i R/(R + K_i + gamma)."""
    k = rates.k(spin_index)
    r = np.asarray(r, dtype=float)
    return k * r / (r + k + rates.gamma)


def cw_steady_state(rates: RateConstants, r: float, drive: CwDrive, delta: float) -> CwSteadyState:
    """Full steady state of the optical Bloch equations at one detuning."""
    _warn_if_saturated(rates, r)
    pops = steady_populations(rates, r, drive.omega, drive.t2star, delta)
    gamma2 = cw_dephasing_rate(r, drive.t2star)
    # v from the eliminated coherence equations; u = (delta/Gamma_2) v.
    v = 0.5 * drive.omega * gamma2 / (gamma2**2 + delta**2) * (pops[2] - pops[1])
    u = delta / gamma2 * v
    return CwSteadyState(populations=PopulationVector.from_array(np.clip(pops, 0.0, 1.0)),
                         coherence_re=float(u), coherence_im=float(v))


def cw_fluorescence(rates: RateConstants, r, omega, t2star, delta, epsilon, b):
    """Detected CW fluorescence rate F(delta) in counts/s; broadcasts."""
    pops = steady_populations(rates, r, omega, t2star, delta)
    weights = fluorescence_weights(rates, np.broadcast_to(np.asarray(r, float), pops.shape[:-1]))
    signal = epsilon * rates.gamma * np.einsum("...i,...i->...", weights, pops)
    out = (signal + b * np.asarray(r, float)) * MHZ_TO_HZ
    return float(out) if np.ndim(out) == 0 else out


def mw_off_fluorescence(rates: RateConstants, r, epsilon, b):
    """Off-resonant (MW-off) fluorescence rate in counts/s; broadcasts over r."""
    from .photophysics import batch_steady_populations

    pops = batch_steady_populations(rates, np.asarray(r, float))
    weights = fluorescence_weights(rates, np.asarray(r, float))
    signal = epsilon * rates.gamma * np.einsum("...i,...i->...", weights, pops)
    out = (signal + b * np.asarray(r, float)) * MHZ_TO_HZ
    return float(out) if np.ndim(out) == 0 else out


def linewidth_scale(rates: RateConstants, r: float, drive: CwDrive) -> float:
    """Angular half-width estimate used to size detuning grids.

    Combines the Lorentzian dephasing width with the saturation broadening
    set by the ratio of exchange rate to ground-state repolarization.
    """
    gamma2 = cw_dephasing_rate(r, drive.t2star)
    repump = effective_pumps(rates, r, 0) + effective_pumps(rates, r, 1)
    repump = max(float(repump), 1e-30)
    broadened = 0.5 * drive.omega**2 * gamma2 / repump
    return math.sqrt(gamma2**2 + drive.omega**2 + broadened)


def detuning_grid(rates: RateConstants, r: float, drive: CwDrive,
                  n: int = 801, halfwidths: float = 16.0) -> np.ndarray:
    """Symmetric angular-detuning grid spanning +-halfwidths half-width estimates."""
    if n < 3:
        raise ValueError("grid needs at least 3 points")
    if n % 2 == 0:
        n += 1  # keep delta = 0 on the grid
    span = halfwidths * linewidth_scale(rates, r, drive)
    return np.linspace(-span, span, n)


def cw_spectrum(rates: RateConstants, r: float, drive: CwDrive, epsilon: float, b: float,
                grid: np.ndarray | None = None) -> OdmrSpectrum:
    """F(delta) over a symmetric detuning grid."""
    _warn_if_saturated(rates, r)
    if grid is None:
        grid = detuning_grid(rates, r, drive)
    rates_out = cw_fluorescence(rates, r, drive.omega, drive.t2star, np.asarray(grid, float),
                                epsilon, b)
    return OdmrSpectrum(detunings=np.asarray(grid, float), rates=rates_out)


def summarize_line(spectrum: OdmrSpectrum) -> LineSummary:
    """Extract off-resonant rate, contrast and FWHM from a sampled spectrum.

    The off-resonant rate averages the two outermost grid points; the FWHM
    comes from root-finds on a monotone interpolant between the bracketing
    grid points of each half-depth crossing.
    """
    delta = spectrum.detunings
    f = spectrum.rates
    center = int(np.argmin(f))
    if abs(delta[center]) > (delta[1] - delta[0]) / 2.0:
        raise ValueError("spectrum minimum is not at zero detuning")
    f0 = 0.5 * (f[0] + f[-1])
    fmin = f[center]
    depth = f0 - fmin
    if depth <= 0.0 or f0 <= 0.0:
        raise ValueError("spectrum has no resolvable dip")
    # A usable grid has flat wings: the outer 5% of each flank must vary by
    # much less than the dip depth, otherwise the edge rate is not a valid
    # off-resonant reference.
    margin = max(2, f.size // 20)
    tail_variation = max(np.ptp(f[:margin]), np.ptp(f[-margin:]))
    if tail_variation > 0.05 * depth:
        raise ValueError("grid too narrow: spectrum has not flattened at the edges")
    level = f0 - 0.5 * depth

    crossings = []
    for side in (slice(center, None), slice(center, None, -1)):
        d_side = delta[side]
        f_side = f[side]
        above = np.flatnonzero(f_side >= level)
        if above.size == 0:
            raise ValueError("grid too narrow: half-depth crossing not bracketed")
        k = above[0]
        interp = PchipInterpolator(np.abs(d_side), f_side, extrapolate=False)
        root = spopt.brentq(lambda x: float(interp(x)) - level,
                            abs(d_side[k - 1]), abs(d_side[k]), xtol=1e-12)
        crossings.append(root if d_side[k] > 0 else -root)
    fwhm = abs(crossings[0] - crossings[1]) / TWO_PI
    return LineSummary(f0=f0, contrast=1.0 - fmin / f0, fwhm=fwhm)


def extract_line(f, f0_reference: float, width_guess: float) -> LineSummary:
    """Adaptive line summary from a callable delta -> counts/s.

    Widens the evaluation edge until the spectrum has recovered to within
    0.1% of the dip depth, then locates the half-depth crossing by
    root-finding.  Assumes the dip is even in delta with its minimum at 0.
    """
    f_center = f(0.0)
    depth = f0_reference - f_center
    if not depth > 1e-12 * max(f0_reference, 1e-300):
        raise ValueError("no resolvable dip at zero detuning")
    edge = max(width_guess, 1e-12)
    for _ in range(80):
        if f0_reference - f(edge) <= 1e-3 * depth:
            break
        edge *= 2.0
    else:
        raise RuntimeError("could not bracket the line: spectrum never recovers")
    f0 = f(edge)
    level = 0.5 * (f0 + f_center)
    root = spopt.brentq(lambda x: f(x) - level, 0.0, edge, xtol=1e-12, rtol=1e-14)
    return LineSummary(f0=f0, contrast=1.0 - f_center / f0, fwhm=2.0 * root / TWO_PI)


def sensitivity_cw(line: LineSummary) -> float:
    """Shot-noise-limited CW sensitivity in T/sqrt(Hz) (Lorentzian dip)."""
    return lorentzian_sensitivity(line.fwhm, line.contrast, line.f0)


@dataclass
class CwOptimum:
    s: float
    omega: float
    eta: float
    line: LineSummary
    search: OptimResult


def cw_line_at(rates: RateConstants, s: float, omega: float, t2star: float,
               epsilon: float, b: float) -> LineSummary:
    """Line summary at one operating point via the adaptive extractor."""
    r = pump_rate_for(s, rates)
    drive = CwDrive(omega=omega, t2star=t2star)
    f0_ref = mw_off_fluorescence(rates, r, epsilon, b)

    def f(delta):
        return float(cw_fluorescence(rates, r, omega, t2star, delta, epsilon, b))

    return extract_line(f, f0_ref, linewidth_scale(rates, r, drive))


def optimize_cw(rates: RateConstants, t2star: float, epsilon: float, b: float,
                s_range=(1e-3, 1.0), omega_range=(TWO_PI * 0.005, TWO_PI * 10.0),
                coarse: int = 25, rel_tol: float = 1e-3) -> CwOptimum:
    """Minimize the CW sensitivity over saturation parameter and Rabi frequency."""

    def objective(s, omega):
        return sensitivity_cw(cw_line_at(rates, s, omega, t2star, epsilon, b))

    space = SearchSpace(dims=(
        Dimension("s", s_range[0], s_range[1], scale="log"),
        Dimension("omega", omega_range[0], omega_range[1], scale="log"),
    ), coarse_points_per_dim=coarse)
    result = minimize(objective, space, rel_tol=rel_tol)
    s_opt = result.argmin["s"]
    omega_opt = result.argmin["omega"]
    line = cw_line_at(rates, s_opt, omega_opt, t2star, epsilon, b)
    return CwOptimum(s=s_opt, omega=omega_opt, eta=result.objective, line=line, search=result)


def _warn_if_saturated(rates: RateConstants, r: float) -> None:
    # The Bloch equations assume most population in the ground state (R << gamma).
    if saturation_parameter(r, rates) > 0.5:
        warnings.warn("CW model validity degrades for s > 0.5 (R no longer << gamma)",
                      ModelValidityWarning, stacklevel=3)
