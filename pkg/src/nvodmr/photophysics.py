"""Effective 4-level rate-equation model of NV populations under optical pumping.

The state vector orders the populations as (m_-1, m_0, m_+1, S), where the
m_i lump together the ground and excited sublevels of each spin projection
and S is the total singlet population.  Optical pumping at linear rate R
shelves spin population into the singlet at the effective rate
K_i * R / (R + K_i + gamma), and the singlet decays back into the ground
spin sublevels with branching rates D_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .constants import MHZ_TO_HZ

STATE_LABELS = ("m-1", "m0", "m+1", "S")

_POP_TOL = 1e-9
_COLSUM_TOL = 1e-12


@dataclass(frozen=True)
class RateConstants:
    """Fixed radiative/nonradiative NV rates in MHz.

    The +1 and -1 spin projections share the same shelving rate ``k1`` and
    deshelving rate ``d1`` by construction.
    """

    gamma: float = 66.50  # radiative decay
    k0: float = 10.78     # |e0> -> singlet
    k1: float = 91.07     # |e+-1> -> singlet
    d0: float = 4.835     # singlet -> |g0>
    d1: float = 1.063     # singlet -> |g+-1>

    def __post_init__(self):
        for name in ("gamma", "k0", "k1", "d0", "d1"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"rate constant {name} must be positive and finite, got {value}")

    def k(self, spin_index: int) -> float:
        """Shelving rate K_i for spin projection i in {-1, 0, +1}."""
        if spin_index == 0:
            return self.k0
        if spin_index in (-1, 1):
            return self.k1
        raise ValueError(f"spin_index must be -1, 0 or +1, got {spin_index}")

    def d(self, spin_index: int) -> float:
        """Deshelving rate D_i for spin projection i in {-1, 0, +1}."""
        if spin_index == 0:
            return self.d0
        if spin_index in (-1, 1):
            return self.d1
        raise ValueError(f"spin_index must be -1, 0 or +1, got {spin_index}")

    @property
    def total_deshelving(self) -> float:
        """D_0 + 2 D_1, the total singlet decay rate."""
        return self.d0 + 2.0 * self.d1


@dataclass(frozen=True)
class PumpField:
    """Spin-conserving optical excitation at linear rate ``r`` (MHz)."""

    r: float

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r >= 0.0):
            raise ValueError(f"pump rate must be nonnegative and finite, got {self.r}")

    @classmethod
    def from_saturation(cls, s: float, rates: RateConstants) -> "PumpField":
        return cls(r=pump_rate_for(s, rates))

    def saturation(self, rates: RateConstants) -> float:
        return saturation_parameter(self.r, rates)


@dataclass(frozen=True)
class PopulationVector:
    """Normalized populations of the three spin manifolds and the singlet."""

    m_minus: float
    m_zero: float
    m_plus: float
    singlet: float

    def __post_init__(self):
        values = (self.m_minus, self.m_zero, self.m_plus, self.singlet)
        for label, v in zip(STATE_LABELS, values):
            if not math.isfinite(v) or v < -_POP_TOL or v > 1.0 + _POP_TOL:
                raise ValueError(f"population {label} = {v} outside [0, 1]")
        total = sum(values)
        if abs(total - 1.0) > _POP_TOL:
            raise ValueError(f"populations must sum to 1, got {total}")

    def as_array(self) -> np.ndarray:
        return np.array([self.m_minus, self.m_zero, self.m_plus, self.singlet])

    @classmethod
    def from_array(cls, p) -> "PopulationVector":
        p = np.asarray(p, dtype=float)
        if p.shape != (4,):
            raise ValueError(f"expected a 4-component population vector, got shape {p.shape}")
        return cls(*p)

    @classmethod
    def ground_zero(cls) -> "PopulationVector":
        """All population in m_0 (ideal optically polarized state)."""
        return cls(0.0, 1.0, 0.0, 0.0)

    @classmethod
    def uniform(cls) -> "PopulationVector":
        return cls(0.25, 0.25, 0.25, 0.25)


@dataclass(frozen=True)
class GeneratorMatrix:
    """4x4 rate generator; columns sum to zero, off-diagonal entries >= 0."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.shape != (4, 4):
            raise ValueError(f"generator must be 4x4, got shape {entries.shape}")
        colsums = entries.sum(axis=0)
        if np.max(np.abs(colsums)) > _COLSUM_TOL:
            raise ValueError(f"generator columns must sum to zero, got {colsums}")
        offdiag = entries[~np.eye(4, dtype=bool)]
        if np.min(offdiag) < 0.0:
            raise ValueError("generator off-diagonal entries must be nonnegative")
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)


def effective_pump_rate(rates: RateConstants, r: float, spin_index: int) -> float:
    """Effective shelving rate K_i R / (R + K_i + gamma) out of manifold i, MHz."""
    if r < 0.0:
        raise ValueError(f"pump rate must be nonnegative, got {r}")
    k = rates.k(spin_index)
    return k * r / (r + k + rates.gamma)


def generator_entries(rates: RateConstants, r) -> np.ndarray:
    """Rate generator(s) for pump rate ``r``; broadcasts over array-valued r.

    Returns an array of shape r.shape + (4, 4).
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0.0):
        raise ValueError("pump rate must be nonnegative")
    out = np.zeros(r.shape + (4, 4))
    pumps = [rates.k(i) * r / (r + rates.k(i) + rates.gamma) for i in (-1, 0, 1)]
    deshelve = [rates.d(i) for i in (-1, 0, 1)]
    for col, (pump, d) in enumerate(zip(pumps, deshelve)):
        out[..., col, col] = -pump
        out[..., 3, col] = pump
        out[..., col, 3] = d
    out[..., 3, 3] = -rates.total_deshelving
    return out


def build_generator(rates: RateConstants, r: float) -> GeneratorMatrix:
    """Generator of Eq.-of-motion p'(t) = L p(t) at pump rate r (MHz)."""
    return GeneratorMatrix(generator_entries(rates, float(r)))


def propagate(generator: GeneratorMatrix, p0: PopulationVector, t: float) -> PopulationVector:
    """Evolve populations for time t (us) under the generator: e^{L t} p0."""
    if t < 0.0:
        raise ValueError(f"time must be nonnegative, got {t}")
    p = expm(generator.entries * t) @ p0.as_array()
    if not np.all(np.isfinite(p)):
        raise RuntimeError("matrix-exponential propagation produced non-finite populations")
    return PopulationVector.from_array(np.clip(p, 0.0, 1.0))


def wait_relaxation(rates: RateConstants) -> np.ndarray:
    """Long-time relaxation projector with the pump off.

    Spin populations are untouched; singlet population redistributes to
    spin i with branching weight D_i / (D_0 + 2 D_1).
    """
    w = np.eye(4)
    total = rates.total_deshelving
    for row, i in enumerate((-1, 0, 1)):
        w[row, 3] = rates.d(i) / total
    w[3, 3] = 0.0
    return w


def steady_state(generator: GeneratorMatrix) -> PopulationVector:
    """Stationary distribution of the generator (requires pumping, r > 0)."""
    lam = generator.entries
    if np.all(lam[3, :3] == 0.0):
        # No pumping: any spin distribution with S = 0 is stationary.
        raise ValueError("steady state is not unique for r = 0 (degenerate null space)")
    stacked = np.vstack([lam, np.ones(4)])
    rhs = np.array([0.0, 0.0, 0.0, 0.0, 1.0])
    p, *_ = np.linalg.lstsq(stacked, rhs, rcond=None)
    return PopulationVector.from_array(np.clip(p, 0.0, 1.0))


def fluorescence_weights(rates: RateConstants, r) -> np.ndarray:
    """Excited-state fractions R/(R + K_i + gamma) per manifold, 0 for the singlet.

    Broadcasts over array-valued r; result has shape r.shape + (4,).
    """
    r = np.asarray(r, dtype=float)
    out = np.zeros(r.shape + (4,))
    for col, i in enumerate((-1, 0, 1)):
        out[..., col] = r / (r + rates.k(i) + rates.gamma)
    return out


def fluorescence_rate(p: PopulationVector, r: float, rates: RateConstants,
                      epsilon: float, b: float) -> float:
    """Detected fluorescence rate in counts/s.

    epsilon is the collection efficiency and b scales the background term
    b*R that grows linearly with excitation.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"collection efficiency must be in [0, 1], got {epsilon}")
    if b < 0.0:
        raise ValueError(f"background coefficient must be nonnegative, got {b}")
    if r < 0.0:
        raise ValueError(f"pump rate must be nonnegative, got {r}")
    weights = fluorescence_weights(rates, float(r))
    rate_mhz = epsilon * rates.gamma * float(weights @ p.as_array()) + b * r
    return rate_mhz * MHZ_TO_HZ


def saturation_rate(rates: RateConstants) -> float:
    """Pump rate R_sat (MHz) at which the fluorescence saturation knee sits."""
    g, k0, k1, d0, d1 = rates.gamma, rates.k0, rates.k1, rates.d0, rates.d1
    num = (2.0 * d1 + d0) * k0 * k1 + (2.0 * d1 * k0 + d0 * k1) * g
    den = 2.0 * d1 * k0 + d0 * k1 + k0 * k1
    return num / den


def saturation_parameter(r: float, rates: RateConstants) -> float:
    """s = R / R_sat."""
    return r / saturation_rate(rates)


def pump_rate_for(s: float, rates: RateConstants) -> float:
    """Inverse conversion R = s * R_sat."""
    if s < 0.0:
        raise ValueError(f"saturation parameter must be nonnegative, got {s}")
    return s * saturation_rate(rates)


def batch_steady_populations(rates: RateConstants, r) -> np.ndarray:
    """Closed-form MW-off steady populations for array-valued pump rates.

    Uses m_i = (D_i/P_i) S with S fixed by normalization, which stays
    accurate down to vanishing pump rates where a direct linear solve
    would be badly conditioned.  Shape: r.shape + (4,).
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0):
        raise ValueError("closed-form steady state requires r > 0")
    q = np.empty(r.shape + (3,))
    for col, i in enumerate((-1, 0, 1)):
        k = rates.k(i)
        q[..., col] = rates.d(i) * (r + k + rates.gamma) / (k * r)
    qsum = q.sum(axis=-1)
    out = np.empty(r.shape + (4,))
    # m_i = q_i / (1 + sum q); S = 1 / (1 + sum q); stable for huge q.
    out[..., :3] = q / (1.0 + qsum)[..., None]
    out[..., 3] = 1.0 / (1.0 + qsum)
    return out
