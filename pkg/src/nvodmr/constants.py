"""Shared physical constants and unit conventions.

Internal unit system: incoherent rates (gamma, K, D, R) are linear rates in
MHz, times are in us, Rabi frequencies and detunings are angular frequencies
in rad/us, and extracted linewidths are linear frequencies in MHz.
Fluorescence rates are reported in counts/s.
"""

import numpy as np

# NV gyromagnetic ratio, 2.8 MHz/G.
GAMMA_NV_MHZ_PER_G = 2.8
GAMMA_NV_HZ_PER_T = GAMMA_NV_MHZ_PER_G * 1e6 * 1e4  # 2.8e10 Hz/T

# Linear-rate MHz (equivalently 1/us) to counts/s.
MHZ_TO_HZ = 1e6

TWO_PI = 2.0 * np.pi
