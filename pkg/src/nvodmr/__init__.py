"""Modelling and optimization of NV-center ODMR magnetometry protocols.

The package covers the effective 4-level photophysics of the NV center,
driven CW steady states, the pulsed-ODMR cycle fixed point, shot-noise
sensitivity evaluators for Lorentzian and Gaussian lines, Gaussian-beam
ensemble integration, and a deterministic parameter optimizer, plus a
config-driven CLI that emits CSV/JSON tables and figures.
"""

__version__ = "0.1.0"

from .photophysics import (
    GeneratorMatrix,
    PopulationVector,
    PumpField,
    RateConstants,
    build_generator,
    effective_pump_rate,
    fluorescence_rate,
    propagate,
    pump_rate_for,
    saturation_parameter,
    saturation_rate,
    steady_state,
    wait_relaxation,
)
from .cw_odmr import (
    CwDrive,
    CwSteadyState,
    LineSummary,
    OdmrSpectrum,
    cw_dephasing_rate,
    cw_spectrum,
    cw_steady_state,
    optimize_cw,
    sensitivity_cw,
    summarize_line,
)
from .pulsed_odmr import (
    FlipProfile,
    PulseTiming,
    PulsedSummary,
    approx_linewidth,
    bare_flip_probability,
    dephased_flip_probability,
    integrated_counts,
    optimal_pi_duration,
    optimize_pulsed,
    pi_pulse_matrix,
    pulsed_lineshape,
    pulsed_steady_state,
    pulsed_summary,
    sensitivity_pulsed,
)
from .lineshape import (
    AnalyticLine,
    HyperfineTriplet,
    evaluate_line,
    evaluate_triplet,
    gaussian_sensitivity,
    hyperfine_ratio,
    lorentzian_sensitivity,
    numeric_sensitivity,
)
from .ensemble import (
    BeamProfile,
    CollectionProfile,
    DiamondSample,
    EnsembleConfig,
    cw_pulsed_ratio,
    ensemble_cw_line,
    ensemble_cw_spectrum,
    ensemble_pulsed_spectrum,
    ensemble_pulsed_summary,
    ensemble_sensitivity,
    local_saturation,
    matched_background_alpha,
    radial_shells,
)
from .optimize import Dimension, OptimResult, SearchSpace, minimize
