"""NV-ensemble ODMR under a cylindrical Gaussian beam: radial integration of
the single-NV CW and pulsed models, ensemble sensitivities, background
effects and the CW/pulsed comparison.

The beam carries fixed total power P with intensity I(r) = I0 exp(-2r^2/s^2)
(1/e^2 radius s, I0 = 2P/(pi s^2)); collection efficiency follows the same
Gaussian profile.  One quarter of the NVs are resonant with the microwave
drive; the remaining three quarters fluoresce at the local off-resonant
rate.  Polarization mismatch reduces the local saturation parameter by 2/3
for all orientations.  Optional background fluorescence alpha*R(r) is
integrated over the same radial profile (not weighted by collection, like
the single-NV b*R term) and is detuning-independent.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm

from .constants import MHZ_TO_HZ, TWO_PI
from .cw_odmr import (
    CwDrive,
    LineSummary,
    OdmrSpectrum,
    detuning_grid,
    extract_line,
    linewidth_scale,
    sensitivity_cw,
    steady_populations,
)
from .lineshape import gaussian_sensitivity
from .optimize import Dimension, OptimResult, SearchSpace, minimize
from .photophysics import (
    RateConstants,
    batch_steady_populations,
    fluorescence_weights,
    generator_entries,
    saturation_rate,
)
from .pulsed_odmr import (
    PulseTiming,
    PulsedSummary,
    dephased_flip_probability,
    optimal_pi_duration,
    pi_pulse_matrix,
    pulsed_lineshape,
    wait_relaxation,
)

RESONANT_FRACTION = 0.25      # one of four NV orientations follows the drive
POLARIZATION_FACTOR = 2.0 / 3.0  # equal excitation of all four orientations

_DEFAULT_SHELLS = 200
_POWER_SQUARINGS = 40  # fixed point via M^(2^40), unconditionally stable


@dataclass(frozen=True)
class BeamProfile:
    """Cylindrical Gaussian excitation beam."""

    total_power: float                 # mW
    waist: float                       # um, 1/e^2 intensity radius
    saturation_intensity: float = 1.1  # mW/um^2

    def __post_init__(self):
        for name in ("total_power", "waist", "saturation_intensity"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def peak_intensity(self) -> float:
        """I0 = 2P/(pi s^2) for the 1/e^2 waist convention, mW/um^2."""
        return 2.0 * self.total_power / (math.pi * self.waist**2)


@dataclass(frozen=True)
class DiamondSample:
    nv_density: float = 300.0       # ppb
    t2star: float = 1.0             # us
    thickness: float = 500.0        # um
    atom_density_cm3: float = 1.76e23  # diamond carbon density

    def __post_init__(self):
        for name in ("nv_density", "t2star", "thickness", "atom_density_cm3"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def nv_per_um3(self) -> float:
        return self.nv_density * 1e-9 * self.atom_density_cm3 * 1e-12


@dataclass(frozen=True)
class CollectionProfile:
    epsilon_max: float = 0.01
    waist: float = 100.0  # um, same shape as the beam

    def __post_init__(self):
        if not 0.0 < self.epsilon_max <= 1.0:
            raise ValueError(f"epsilon_max must be in (0, 1], got {self.epsilon_max}")
        if not self.waist > 0.0:
            raise ValueError(f"waist must be positive, got {self.waist}")


@dataclass(frozen=True)
class EnsembleConfig:
    beam: BeamProfile
    sample: DiamondSample = field(default_factory=DiamondSample)
    collection: CollectionProfile | None = None
    background_alpha: float = 0.0
    resonant_fraction: float = RESONANT_FRACTION
    polarization_factor: float = POLARIZATION_FACTOR

    def __post_init__(self):
        if self.collection is None:
            object.__setattr__(self, "collection", CollectionProfile(waist=self.beam.waist))
        if self.background_alpha < 0.0:
            raise ValueError(f"background_alpha must be nonnegative, got {self.background_alpha}")
        if abs(self.resonant_fraction - RESONANT_FRACTION) > 1e-12:
            raise ValueError("resonant_fraction is fixed at 1/4")
        if abs(self.polarization_factor - POLARIZATION_FACTOR) > 1e-12:
            raise ValueError("polarization_factor is fixed at 2/3")

    def with_power(self, total_power: float) -> "EnsembleConfig":
        return replace(self, beam=replace(self.beam, total_power=total_power))


def local_saturation(beam: BeamProfile, radius, polarization_factor: float = POLARIZATION_FACTOR):
    """Saturation parameter s(r) seen by the NVs, polarization factor included."""
    radius = np.asarray(radius, dtype=float)
    if np.any(radius < 0.0):
        raise ValueError("radius must be nonnegative")
    intensity = beam.peak_intensity * np.exp(-2.0 * radius**2 / beam.waist**2)
    out = polarization_factor * intensity / beam.saturation_intensity
    return float(out) if out.ndim == 0 else out


def radial_shells(beam: BeamProfile, n_shells: int = _DEFAULT_SHELLS):
    """Gauss-Legendre nodes and area weights for int_0^{10 s} f(r) 2 pi r dr.

    Weights absorb the 2 pi r Jacobian, so sum(weights) equals the disc
    area pi (10 s)^2 exactly.
    """
    if n_shells < 50:
        raise ValueError(f"need at least 50 shells, got {n_shells}")
    x, w = np.polynomial.legendre.leggauss(n_shells)
    r_max = 10.0 * beam.waist
    radii = 0.5 * r_max * (x + 1.0)
    weights = 0.5 * r_max * w * TWO_PI * radii
    return radii, weights


class _ShellModel:
    """Per-shell quantities shared by the CW and pulsed ensemble paths."""

    def __init__(self, config: EnsembleConfig, rates: RateConstants, n_shells: int):
        self.config = config
        self.rates = rates
        self.radii, area = radial_shells(config.beam, n_shells)
        self.s = local_saturation(config.beam, self.radii, config.polarization_factor)
        self.r_pump = self.s * saturation_rate(rates)
        self.eps = config.collection.epsilon_max * np.exp(
            -2.0 * self.radii**2 / config.collection.waist**2)
        self.nv_count = config.sample.nv_per_um3 * config.sample.thickness * area
        self.weights = fluorescence_weights(rates, self.r_pump)  # (n, 4)
        self.generators = generator_entries(rates, self.r_pump)  # (n, 4, 4)
        self.peak_pump = float(np.max(self.r_pump))
        off_pops = batch_steady_populations(rates, self.r_pump)
        self._off_per_nv = rates.gamma * np.einsum("ni,ni->n", self.weights, off_pops)

    def background_rate(self) -> float:
        """Detuning-independent background, counts/s."""
        return self.config.background_alpha * float(self.nv_count @ self.r_pump) * MHZ_TO_HZ

    def mw_off_signal(self) -> float:
        """Collected NV fluorescence with the drive off, counts/s (no background)."""
        return float(self.nv_count @ (self.eps * self._off_per_nv)) * MHZ_TO_HZ

    def cw_rate(self, omega: float, delta):
        """Ensemble CW fluorescence at detuning(s) delta, counts/s."""
        delta = np.asarray(delta, dtype=float)
        scalar = delta.ndim == 0
        pops = steady_populations(self.rates, self.r_pump[:, None], omega,
                                  self.config.sample.t2star, delta.reshape(1, -1))
        per_nv = self.rates.gamma * np.einsum("ni,nmi->nm", self.weights, pops)
        collected = self.nv_count * self.eps
        resonant = collected @ per_nv  # (m,)
        off = float(collected @ self._off_per_nv)
        total = (self.config.resonant_fraction * resonant
                 + (1.0 - self.config.resonant_fraction) * off) * MHZ_TO_HZ
        total = total + self.background_rate()
        return float(total[0]) if scalar else total


def _stationary_of(maps: np.ndarray) -> np.ndarray:
    """Fixed points of stacked column-stochastic maps via repeated squaring.

    Entries stay in [0, 1] throughout, so this never produces overflow even
    for shells whose dynamics are numerically frozen.
    """
    power = maps
    for _ in range(_POWER_SQUARINGS):
        power = power @ power
    p = power @ np.full(maps.shape[:-1] + (1,), 0.25)
    p = np.clip(p[..., 0], 0.0, None)
    return p / p.sum(axis=-1, keepdims=True)


class _PulsedShellModel(_ShellModel):
    """Adds cached pulsed-cycle machinery on top of the shell grid."""

    def __init__(self, config, rates, n_shells):
        super().__init__(config, rates, n_shells)
        self._wait = wait_relaxation(rates)
        self._laser_cache: dict[float, np.ndarray] = {}
        self._readout_cache: dict[float, np.ndarray] = {}
        self._fixed_point_cache: dict[tuple[float, float], tuple[np.ndarray, np.ndarray]] = {}

    def laser_propagators(self, t_l: float) -> np.ndarray:
        if t_l not in self._laser_cache:
            self._laser_cache[t_l] = expm(self.generators * t_l)
        return self._laser_cache[t_l]

    def readout_rows(self, tau: float) -> np.ndarray:
        """w . int_0^tau exp(L t) dt per shell, via the batched augmented exponential."""
        if tau not in self._readout_cache:
            n = self.generators.shape[0]
            block = np.zeros((n, 8, 8))
            block[:, :4, :4] = self.generators * tau
            block[:, :4, 4:] = np.eye(4) * tau
            integral = expm(block)[:, :4, 4:]
            self._readout_cache[tau] = np.einsum("ni,nij->nj", self.weights, integral)
        return self._readout_cache[tau]

    def fixed_points(self, c_pi: float, t_l: float):
        key = (c_pi, t_l)
        if key not in self._fixed_point_cache:
            m_off = self._wait @ self.laser_propagators(t_l)
            m_on = pi_pulse_matrix(c_pi) @ m_off
            self._fixed_point_cache[key] = (_stationary_of(m_on), _stationary_of(m_off))
        return self._fixed_point_cache[key]

    def cycle_counts(self, c_pi: float, t_l: float, tau: float):
        """Per-cycle ensemble counts (on-resonance, off-resonance), background included."""
        p_on, p_off = self.fixed_points(c_pi, t_l)
        row = self.readout_rows(tau)
        per_nv_on = self.rates.gamma * np.einsum("nj,nj->n", row, p_on)
        per_nv_off = self.rates.gamma * np.einsum("nj,nj->n", row, p_off)
        collected = self.nv_count * self.eps
        fraction = self.config.resonant_fraction
        background = self.config.background_alpha * float(self.nv_count @ self.r_pump) * tau
        c_off = float(collected @ per_nv_off) + background
        c_on = (fraction * float(collected @ per_nv_on)
                + (1.0 - fraction) * float(collected @ per_nv_off) + background)
        return c_on, c_off


def ensemble_cw_spectrum(config: EnsembleConfig, omega: float,
                         grid: np.ndarray | None = None, rates: RateConstants | None = None,
                         n_shells: int = _DEFAULT_SHELLS) -> OdmrSpectrum:
    """Summed CW fluorescence spectrum of the illuminated ensemble."""
    rates = rates or RateConstants()
    model = _ShellModel(config, rates, n_shells)
    if grid is None:
        # The summed line inherits fat wings from the widest (axial) shells,
        # so the grid reaches further out than the single-NV default.
        drive = CwDrive(omega=omega, t2star=config.sample.t2star)
        grid = detuning_grid(rates, model.peak_pump, drive, n=1201, halfwidths=40.0)
    return OdmrSpectrum(detunings=np.asarray(grid, float),
                        rates=model.cw_rate(omega, np.asarray(grid, float)))


def ensemble_cw_line(config: EnsembleConfig, omega: float,
                     rates: RateConstants | None = None,
                     n_shells: int = _DEFAULT_SHELLS) -> LineSummary:
    """Adaptive line summary of the summed ensemble CW spectrum."""
    rates = rates or RateConstants()
    model = _ShellModel(config, rates, n_shells)
    f0_ref = model.mw_off_signal() + model.background_rate()
    drive = CwDrive(omega=omega, t2star=config.sample.t2star)
    guess = linewidth_scale(rates, model.peak_pump, drive)
    return extract_line(lambda d: model.cw_rate(omega, d), f0_ref, guess)


def ensemble_pulsed_summary(config: EnsembleConfig, omega: float, timing: PulseTiming,
                            rates: RateConstants | None = None,
                            n_shells: int = _DEFAULT_SHELLS) -> PulsedSummary:
    """Cycle observables of the ensemble pulsed protocol.

    The linewidth and on-resonance flip probability are global (set by the
    homogeneous Rabi frequency, pulse duration and T2*); the counts sum the
    per-shell pulsed steady states.
    """
    rates = rates or RateConstants()
    model = _PulsedShellModel(config, rates, n_shells)
    profile = pulsed_lineshape(omega, timing.t_pi, config.sample.t2star)
    c_on, c_off = model.cycle_counts(profile.c_pi, timing.t_l, timing.tau)
    if not c_off > 0.0:
        raise ValueError("off-resonant ensemble counts vanish")
    return PulsedSummary(contrast=1.0 - c_on / c_off,
                         f_avg0=c_off / timing.cycle * MHZ_TO_HZ,
                         fwhm=profile.fwhm, c_pi=profile.c_pi)


def ensemble_pulsed_spectrum(config: EnsembleConfig, omega: float, timing: PulseTiming,
                             grid: np.ndarray | None = None,
                             rates: RateConstants | None = None,
                             n_shells: int = _DEFAULT_SHELLS) -> OdmrSpectrum:
    """Count rate versus microwave detuning for the pulsed ensemble protocol."""
    rates = rates or RateConstants()
    model = _PulsedShellModel(config, rates, n_shells)
    if grid is None:
        profile = pulsed_lineshape(omega, timing.t_pi, config.sample.t2star)
        span = 3.0 * TWO_PI * profile.fwhm
        grid = np.linspace(-span, span, 201)
    grid = np.asarray(grid, dtype=float)
    flips = dephased_flip_probability(omega, grid, timing.t_pi, config.sample.t2star)
    rates_out = np.empty_like(grid)
    for k, c_pi in enumerate(np.asarray(flips, float)):
        c_on, _ = model.cycle_counts(float(c_pi), timing.t_l, timing.tau)
        rates_out[k] = c_on / timing.cycle * MHZ_TO_HZ
    return OdmrSpectrum(detunings=grid, rates=rates_out)


@dataclass
class EnsembleOptimum:
    protocol: str
    eta: float
    omega: float
    f0: float
    contrast: float
    fwhm: float
    t_pi: float | None
    t_l: float | None
    tau: float | None
    search: OptimResult


def ensemble_sensitivity(config: EnsembleConfig, protocol: str,
                         t_w: float = 1.0,
                         omega_range=(TWO_PI * 0.005, TWO_PI * 10.0),
                         t_l_range=(0.01, 1e5), fraction_range=(0.05, 1.0),
                         coarse: int | None = None, rel_tol: float = 1e-3,
                         rates: RateConstants | None = None,
                         n_shells: int = _DEFAULT_SHELLS) -> EnsembleOptimum:
    """Optimized shot-noise sensitivity of the ensemble for one protocol.

    CW optimizes the Rabi frequency; pulsed optimizes (Omega, t_L, tau) with
    t_pi tied to Omega and tau = f * t_L.
    """
    rates = rates or RateConstants()
    if protocol == "cw":
        model = _ShellModel(config, rates, n_shells)
        f0_ref = model.mw_off_signal() + model.background_rate()
        t2star = config.sample.t2star

        def objective(omega):
            guess = linewidth_scale(rates, model.peak_pump, CwDrive(omega, t2star))
            line = extract_line(lambda d: model.cw_rate(omega, d), f0_ref, guess)
            return sensitivity_cw(line)

        space = SearchSpace(dims=(Dimension("omega", *omega_range, scale="log"),),
                            coarse_points_per_dim=coarse or 17)
        result = minimize(objective, space, rel_tol=rel_tol)
        omega_opt = result.argmin["omega"]
        line = extract_line(lambda d: model.cw_rate(omega_opt, d), f0_ref,
                            linewidth_scale(rates, model.peak_pump, CwDrive(omega_opt, t2star)))
        return EnsembleOptimum(protocol="cw", eta=result.objective, omega=omega_opt,
                               f0=line.f0, contrast=line.contrast, fwhm=line.fwhm,
                               t_pi=None, t_l=None, tau=None, search=result)

    if protocol != "pulsed":
        raise ValueError(f"protocol must be 'cw' or 'pulsed', got {protocol!r}")

    model = _PulsedShellModel(config, rates, n_shells)
    t2star = config.sample.t2star

    @functools.lru_cache(maxsize=None)
    def mw_physics(omega):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            t_pi = optimal_pi_duration(omega, t2star)
        return t_pi, pulsed_lineshape(omega, t_pi, t2star)

    def objective(omega, t_l, fraction):
        t_pi, profile = mw_physics(omega)
        c_on, c_off = model.cycle_counts(profile.c_pi, t_l, fraction * t_l)
        if not c_off > 0.0:
            return math.inf
        contrast = 1.0 - c_on / c_off
        if contrast <= 0.0:
            return math.inf
        f_avg0 = c_off / (t_pi + t_w + t_l) * MHZ_TO_HZ
        return gaussian_sensitivity(profile.fwhm, contrast, f_avg0)

    space = SearchSpace(dims=(
        Dimension("omega", *omega_range, scale="log"),
        Dimension("t_l", *t_l_range, scale="log"),
        Dimension("fraction", *fraction_range, scale="log"),
    ), coarse_points_per_dim=coarse or 10)
    result = minimize(objective, space, rel_tol=rel_tol, ignore_boundary_dims=("fraction",))
    omega_opt = result.argmin["omega"]
    t_l_opt = result.argmin["t_l"]
    tau_opt = result.argmin["fraction"] * t_l_opt
    t_pi_opt, _ = mw_physics(omega_opt)
    timing = PulseTiming(t_pi=t_pi_opt, t_w=t_w, t_l=t_l_opt, tau=tau_opt)
    summary = ensemble_pulsed_summary(config, omega_opt, timing, rates, n_shells)
    return EnsembleOptimum(protocol="pulsed", eta=result.objective, omega=omega_opt,
                           f0=summary.f_avg0, contrast=summary.contrast, fwhm=summary.fwhm,
                           t_pi=t_pi_opt, t_l=t_l_opt, tau=tau_opt, search=result)


@dataclass
class ProtocolComparison:
    power: float
    cw: EnsembleOptimum
    pulsed: EnsembleOptimum

    @property
    def ratio(self) -> float:
        return self.cw.eta / self.pulsed.eta


def cw_pulsed_ratio(config: EnsembleConfig, power_list, rates: RateConstants | None = None,
                    **kwargs) -> list[ProtocolComparison]:
    """Independently optimized CW/pulsed sensitivity ratio per power point."""
    points = []
    for power in power_list:
        scaled = config.with_power(float(power))
        cw = ensemble_sensitivity(scaled, "cw", rates=rates, **kwargs)
        pulsed = ensemble_sensitivity(scaled, "pulsed", rates=rates, **kwargs)
        points.append(ProtocolComparison(power=float(power), cw=cw, pulsed=pulsed))
    return points


def matched_background_alpha(config: EnsembleConfig, rates: RateConstants | None = None,
                             n_shells: int = _DEFAULT_SHELLS) -> float:
    """Alpha at which the integrated background equals the NV fluorescence."""
    rates = rates or RateConstants()
    model = _ShellModel(replace(config, background_alpha=0.0), rates, n_shells)
    unit_background = float(model.nv_count @ model.r_pump) * MHZ_TO_HZ
    return model.mw_off_signal() / unit_background
