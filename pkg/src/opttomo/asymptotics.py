"""Diffusive-limit expansion fields, residual metrics, and rate fitting.

The kinetic solution admits the interior expansion

    f ~ rho(x) + eps * f1(x, v) + eps^2 * f2(x, v),

with rho solving the diffusive model, f1 = -sigma^{-1} v . grad rho, and f2
obtained by inverting the relaxation operator on the next-order balance.
Both correction terms are angular-mean-free by construction.  This module
assembles those terms from solver output, measures how fast a kinetic
solution approaches them as the scattering scale shrinks, and fits
log-log convergence rates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffusion import forward_map_de, solve_de
from .grids import AngularQuadrature, ScalarField, SpatialGrid, _frozen, gradient
from .measurement import MeasurementSetup, Trace
from .medium import Medium
from .transport import AngularFlux, forward_map_rte


@dataclass(frozen=True)
class ExpansionTerms:
    """Leading profile and the first two kinetic correction fields."""

    grid: SpatialGrid
    quadrature: AngularQuadrature
    leading: np.ndarray        # (n_nodes,)
    first_order: np.ndarray    # (n_nodes, n_ordinates), zero angular mean
    second_order: np.ndarray   # (n_nodes, n_ordinates), zero angular mean
    balance_defect: float      # max |<bracket>_v|; ~0 when rho solves the DE

    def kinetic_field(self, knudsen: float) -> np.ndarray:
        """Evaluate rho + eps*f1 + eps^2*f2 at every (node, ordinate)."""
        return (self.leading[:, None] + knudsen * self.first_order
                + knudsen**2 * self.second_order)


def expansion_from_density(medium: Medium, density: np.ndarray,
                           quadrature: AngularQuadrature) -> ExpansionTerms:
    """Assemble correction fields for an arbitrary nodal density profile.

    No balance check is applied here: a manufactured density need not solve
    the diffusive model, in which case the bracket keeps a nonzero angular
    mean that is removed before inverting the relaxation operator.
    """
    grid = medium.grid
    rho = np.asarray(density, dtype=float)
    if rho.shape != (grid.n_nodes,):
        raise ValueError(f"density must have shape ({grid.n_nodes},)")
    dirs = quadrature.directions
    inv_sigma = 1.0 / medium.sigma
    grad_rho = gradient(ScalarField(grid, rho))
    slope = grad_rho @ dirs.T                      # (n, nv): v . grad rho
    first = -inv_sigma[:, None] * slope

    # bracket(x, v) = (v . grad)(sigma^{-1} (v . grad rho)); the order-eps
    # balance reads  L f2 = -sigma^{-1} bracket, and L is -identity on
    # mean-free functions, so  f2 = sigma^{-1} (bracket - <bracket>).
    bracket = np.empty_like(slope)
    for q in range(quadrature.n_ordinates):
        t_q = ScalarField(grid, inv_sigma * slope[:, q])
        bracket[:, q] = gradient(t_q) @ dirs[q]
    mean_bracket = bracket @ quadrature.weights
    second = inv_sigma[:, None] * (bracket - mean_bracket[:, None])
    defect = float(np.max(np.abs(mean_bracket)))
    return ExpansionTerms(grid, quadrature, _frozen(rho), _frozen(first),
                          _frozen(second), defect)


def expansion_terms(medium: Medium, data: Trace, quadrature: AngularQuadrature,
                    *, balance_tol: float | None = None) -> ExpansionTerms:
    """Solve the diffusive model for a trace and expand around it.

    ``balance_tol`` is the expected discretization level of the angular
    mean of the bracket (which vanishes identically in the continuum when
    rho solves the diffusive model).  A defect more than 10x above it
    signals an inconsistent density and raises.
    """
    rho = solve_de(medium, data).values
    terms = expansion_from_density(medium, rho, quadrature)
    if balance_tol is not None and terms.balance_defect > 10.0 * balance_tol:
        raise ValueError(
            f"angular mean of the expansion bracket is {terms.balance_defect:.3e},"
            f" more than 10x the discretization tolerance {balance_tol:.3e};"
            " the density does not solve the diffusive model on this grid")
    return terms


def residual_norms(flux: AngularFlux, terms: ExpansionTerms,
                   knudsen: float) -> tuple[float, float]:
    """Sup-norm distances of a kinetic solution to the expansion.

    Returns (r0, r1) with r0 = max |f - rho| and r1 = max |f - rho - eps*f1|,
    both over every (node, ordinate) pair.
    """
    if flux.values.shape != terms.first_order.shape:
        raise ValueError("flux and expansion terms live on different grids")
    dev = flux.values - terms.leading[:, None]
    r0 = float(np.max(np.abs(dev)))
    r1 = float(np.max(np.abs(dev - knudsen * terms.first_order)))
    return r0, r1


def forward_gap(medium: Medium, knudsen: float, setup: MeasurementSetup,
                quadrature: AngularQuadrature, **solver_kwargs) -> float:
    """Largest detector/trace discrepancy between the two forward maps.

    The kinetic side uses order-1 compatible lifts, matching the hypothesis
    under which the maps stay within O(eps) of each other.
    """
    g_kinetic = forward_map_rte(medium, knudsen, setup, quadrature,
                                order=1, **solver_kwargs)
    g_diffusive = forward_map_de(medium, setup)
    return float(np.max(np.abs(g_kinetic - g_diffusive)))


@dataclass(frozen=True)
class RateStudy:
    """Fitted log-log convergence rate for one metric over a sweep."""

    metric: str
    epsilons: np.ndarray      # points retained by the fit
    values: np.ndarray
    slope: float
    intercept: float
    r_squared: float
    n_excluded: int
    fingerprint: str = ""

    @property
    def n_points(self) -> int:
        return self.epsilons.size


def fit_rate(epsilons, values, metric: str = "",
             fingerprint: str = "") -> RateStudy:
    """Least-squares slope of log(value) against log(eps).

    Non-positive or non-finite values carry no rate information in log
    space; they are dropped and counted.  At least four usable points are
    required for a defensible rate claim.
    """
    eps = np.asarray(epsilons, dtype=float)
    val = np.asarray(values, dtype=float)
    if eps.shape != val.shape or eps.ndim != 1:
        raise ValueError("epsilons and values must be 1-d arrays of equal length")
    if np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ValueError("epsilons must be positive and strictly decreasing")
    keep = np.isfinite(val) & (val > 0)
    n_excluded = int(np.sum(~keep))
    eps, val = eps[keep], val[keep]
    if eps.size < 4:
        raise ValueError(
            f"need at least 4 positive values for a rate fit, have {eps.size}")
    lx, ly = np.log(eps), np.log(val)
    slope, intercept = np.polyfit(lx, ly, 1)
    ss_res = float(np.sum((ly - (slope * lx + intercept)) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateStudy(metric, _frozen(eps), _frozen(val), float(slope),
                     float(intercept), float(r_squared), n_excluded, fingerprint)
