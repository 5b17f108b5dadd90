"""Deterministic derivative-free minimizer: coarse log/linear grid scan
followed by bounded Nelder-Mead refinement.

Objectives here typically involve FWHM root-finds and are only piecewise
smooth, which is why refinement is simplex-based rather than gradient-based.
All paths are deterministic: identical inputs produce identical results.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize as spopt


class BoundaryOptimumWarning(UserWarning):
    """The located minimum sits within one coarse cell of a search bound."""


@dataclass(frozen=True)
class Dimension:
    name: str
    lower: float
    upper: float
    scale: str = "log"  # "log" or "linear"

    def __post_init__(self):
        if self.scale not in ("log", "linear"):
            raise ValueError(f"scale must be 'log' or 'linear', got {self.scale!r}")
        if not self.lower < self.upper:
            raise ValueError(f"dimension {self.name}: lower must be < upper")
        if self.scale == "log" and self.lower <= 0.0:
            raise ValueError(f"dimension {self.name}: log scale requires lower > 0")

    def to_unit(self, x):
        if self.scale == "log":
            return (math.log(x) - math.log(self.lower)) / (math.log(self.upper) - math.log(self.lower))
        return (x - self.lower) / (self.upper - self.lower)

    def from_unit(self, z):
        z = min(max(z, 0.0), 1.0)
        if self.scale == "log":
            return math.exp(math.log(self.lower) + z * (math.log(self.upper) - math.log(self.lower)))
        return self.lower + z * (self.upper - self.lower)

    def grid(self, n):
        if self.scale == "log":
            return np.geomspace(self.lower, self.upper, n)
        return np.linspace(self.lower, self.upper, n)


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple[Dimension, ...]
    coarse_points_per_dim: int = 25

    def __post_init__(self):
        if self.coarse_points_per_dim < 2:
            raise ValueError("coarse grid needs at least 2 points per dimension")
        object.__setattr__(self, "dims", tuple(self.dims))


@dataclass
class OptimResult:
    argmin: dict[str, float]
    objective: float
    evaluations: int
    boundary_flag: bool
    boundary_dims: tuple[str, ...] = field(default_factory=tuple)


def minimize(objective, space: SearchSpace, rel_tol: float = 1e-3,
             ignore_boundary_dims: tuple[str, ...] = (), warn_on_boundary: bool = True) -> OptimResult:
    """Minimize ``objective(**params) -> float`` over the search space.

    Non-finite objective values are treated as +inf during the scan; if the
    whole coarse grid is non-finite the search fails.  The refined result is
    never worse than the best coarse point.  ``ignore_boundary_dims`` names
    dimensions whose bounds are legitimate optima (e.g. a ratio capped at 1)
    and are excluded from the boundary warning.
    """
    dims = space.dims
    n = space.coarse_points_per_dim
    evaluations = 0

    def evaluate(values):
        nonlocal evaluations
        evaluations += 1
        try:
            v = objective(**dict(zip((d.name for d in dims), values)))
        except (ValueError, RuntimeError, FloatingPointError):
            return math.inf
        return v if math.isfinite(v) else math.inf

    axes = [d.grid(n) for d in dims]
    best_value = math.inf
    best_point = None
    for values in itertools.product(*axes):
        v = evaluate(values)
        if v < best_value:
            best_value = v
            best_point = values
    if best_point is None or not math.isfinite(best_value):
        raise RuntimeError("objective was non-finite on the entire coarse grid")

    # Refine in unit coordinates; initial simplex spans half a coarse cell.
    z0 = np.array([d.to_unit(x) for d, x in zip(dims, best_point)])
    step = 0.5 / (n - 1)
    simplex = [z0]
    for i in range(len(dims)):
        vertex = z0.copy()
        vertex[i] = vertex[i] - step if vertex[i] + step > 1.0 else vertex[i] + step
        simplex.append(vertex)

    def unit_objective(z):
        values = [d.from_unit(zi) for d, zi in zip(dims, z)]
        return evaluate(values)

    result = spopt.minimize(
        unit_objective, z0, method="Nelder-Mead",
        bounds=[(0.0, 1.0)] * len(dims),
        options={
            "initial_simplex": np.array(simplex),
            "xatol": 1e-4,
            "fatol": rel_tol * abs(best_value),
            "maxiter": 400 * len(dims),
        },
    )
    if math.isfinite(result.fun) and result.fun < best_value:
        best_value = float(result.fun)
        best_point = tuple(d.from_unit(zi) for d, zi in zip(dims, result.x))

    cell = 1.0 / (n - 1)
    boundary_dims = tuple(
        d.name for d, x in zip(dims, best_point)
        if d.name not in ignore_boundary_dims and min(d.to_unit(x), 1.0 - d.to_unit(x)) < cell
    )
    boundary_flag = bool(boundary_dims)
    if boundary_flag and warn_on_boundary:
        warnings.warn(
            f"optimum is within one coarse cell of the bounds in {boundary_dims}; "
            "consider widening the ranges", BoundaryOptimumWarning, stacklevel=2)

    return OptimResult(
        argmin=dict(zip((d.name for d in dims), best_point)),
        objective=best_value,
        evaluations=evaluations,
        boundary_flag=boundary_flag,
        boundary_dims=boundary_dims,
    )
