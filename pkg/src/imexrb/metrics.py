"""Error norms, convergence-slope fitting, and exact stability bounds.

The spatial error at one time level is a component-wise ratio of grid
2-norms of (numerical - exact) over exact, summed over components under
the square root; the aggregate indicator accumulates the same ingredients
over all time levels with timestep weights.  The h^d and dt weights cancel
in the ratios but are carried for fidelity to the definitions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problems import ExactSolution, Grid, Lifting, lift_join

__all__ = [
    "ErrorSeries",
    "SpectralBound",
    "error_ingredients",
    "relative_error_space",
    "aggregate_error",
    "fit_slope",
    "exact_stability_bound",
]


@dataclass
class ErrorSeries:
    """Per-step squared error norms and exact-solution norms, per component.

    ``err_sq[n, k] = ||e_{k,n}||^2`` and ``exact_sq[n, k]`` the matching
    denominator, for time levels n = 1..N_t; ``per_step`` holds the spatial
    relative errors e_{r,n} at those levels.
    """

    err_sq: np.ndarray
    exact_sq: np.ndarray
    per_step: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.err_sq.shape[0]


def error_ingredients(u_n, exact: ExactSolution, grid: Grid,
                      lifting: Lifting, t_n, weighted=True):
    """Squared numerator/denominator norms per component at one time level."""
    full = lift_join(np.asarray(u_n, dtype=np.float64), t_n, lifting)
    ex = exact.on_grid(grid, t_n)
    w = grid.h ** grid.d if weighted else 1.0
    K = exact.n_components
    err_sq = np.empty(K)
    exact_sq = np.empty(K)
    for k in range(K):
        err_sq[k] = w * float(np.sum((full[k] - ex[k]) ** 2))
        exact_sq[k] = w * float(np.sum(ex[k] ** 2))
    return err_sq, exact_sq


def relative_error_space(u_n, exact: ExactSolution, grid: Grid,
                         lifting: Lifting, t_n, weighted=True) -> float:
    """Relative 2-norm spatial error e_{r,n} at time t_n.

    The full-grid field is reconstructed through the lifting before the
    comparison; all grid nodes enter both norms (boundary terms add zero to
    the numerator since the lifting matches the Dirichlet data exactly).
    """
    err_sq, exact_sq = error_ingredients(u_n, exact, grid, lifting, t_n,
                                         weighted)
    if np.any(exact_sq == 0.0):
        raise ValueError(
            "exact solution has a zero-norm component at this time level")
    return float(np.sqrt(np.sum(err_sq / exact_sq)))


def aggregate_error(series: ErrorSeries, dt: float) -> float:
    """Time-accumulated error indicator over levels 1..N_t."""
    if series.n_steps < 1:
        raise ValueError("aggregate error needs at least one time level")
    num = dt * np.sum(series.err_sq, axis=0)
    den = dt * np.sum(series.exact_sq, axis=0)
    if np.any(den == 0.0):
        raise ValueError("exact solution vanishes over the whole interval "
                         "in some component")
    return float(np.sqrt(np.sum(num / den)))


def fit_slope(dts, errors) -> float:
    """Least-squares slope of log(error) against log(dt)."""
    dts = np.asarray(dts, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if dts.shape != errors.shape or dts.size < 3:
        raise ValueError("need at least 3 matching (dt, error) pairs")
    if np.any(dts <= 0.0) or np.any(errors <= 0.0) or not (
            np.all(np.isfinite(dts)) and np.all(np.isfinite(errors))):
        raise ValueError("slope fit requires positive finite values")
    return float(np.polyfit(np.log(dts), np.log(errors), 1)[0])


@dataclass
class SpectralBound:
    """Eigenstructure quantities entering the absolute-stability bound.

    ``c2 = mu_min / (mu_max * k2_T)`` is the timestep-independent admissible
    tolerance bound; ``c1(dt)`` the weaker dt-dependent one (always above
    c2).
    """

    mu_min: float
    mu_max: float
    k2_T: float
    c2: float

    def c1(self, dt: float) -> float:
        return (1.0 + dt * self.mu_min) / (dt * self.mu_max * self.k2_T)


def exact_stability_bound(A) -> SpectralBound:
    """Full eigendecomposition bound for a small dense stable matrix.

    Requires every eigenvalue to have a negative real part and an
    eigenvector matrix with condition number at most 1e12 (diagonalizable
    to working precision).
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    if A.shape[0] > 200:
        raise ValueError("exact bound is meant for small systems (n <= 200)")
    lam, T = np.linalg.eig(A)
    if np.any(lam.real >= 0.0):
        worst = lam[np.argmax(lam.real)]
        raise ValueError(f"eigenvalue with nonnegative real part: {worst}")
    k2_T = float(np.linalg.cond(T, 2))
    if k2_T > 1e12:
        raise ValueError(
            f"defective matrix: eigenvector condition number {k2_T:.3e}")
    mu_min = float(np.min(np.abs(lam.real)))
    mu_max = float(np.max(np.abs(lam)))
    c2 = mu_min / (mu_max * k2_T)
    return SpectralBound(mu_min, mu_max, k2_T, c2)
