"""Log-normal scattering media and the truncated cosine prior.

The scattering field is sigma = exp(u) with u = mean_offset + sum_m
theta_m psi_m over a fixed cosine basis.  A medium is admissible when
max(sup sigma, sup 1/sigma, sup |grad(1/sigma)|) stays strictly below
the bound carried by the prior settings.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import ScalarField, SpatialGrid, _frozen, gradient


class PriorRejectionError(RuntimeError):
    """No admissible draw found within the rejection budget."""


@dataclass(frozen=True)
class PriorSpec:
    """Truncated cosine expansion prior for the log-scattering field."""

    n_modes: int = 3
    amplitude: float = 0.3       # coefficient scale tau
    decay: float = 2.0           # spectral decay exponent s
    mean_offset: float = 0.0
    bound: float = 10.0          # admissibility constant
    max_rejections: int = 1000

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError(f"n_modes must be >= 1, got {self.n_modes}")
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.decay < 1:
            raise ValueError(f"decay must be >= 1, got {self.decay}")
        if self.bound <= 0:
            raise ValueError(f"bound must be > 0, got {self.bound}")

    def coefficient_scales(self) -> np.ndarray:
        """Prior std dev of each coefficient: amplitude * m**(-decay)."""
        m = np.arange(1, self.n_modes + 1, dtype=float)
        return self.amplitude * m ** (-self.decay)


def _square_mode_orders(n_modes: int) -> list[tuple[int, int]]:
    """First ``n_modes`` tensor cosine orders, by total frequency."""
    orders = []
    total = 1
    while len(orders) < n_modes:
        for kx in range(total, -1, -1):
            orders.append((kx, total - kx))
        total += 1
    return orders[:n_modes]


def basis_matrix(spec: PriorSpec, grid: SpatialGrid) -> np.ndarray:
    """Evaluate the cosine basis on the grid nodes, shape (n_nodes, n_modes).

    Mode m >= 1 is cos(m*pi*x) on the slab; on the square the modes are
    tensor products cos(kx*pi*x)*cos(ky*pi*y) ordered by total frequency.
    The constant mode is not included -- it is carried by ``mean_offset``.
    """
    if grid.geometry == "slab":
        x = grid.nodes[:, 0]
        m = np.arange(1, spec.n_modes + 1)
        return np.cos(np.pi * np.outer(x, m))
    cols = []
    for kx, ky in _square_mode_orders(spec.n_modes):
        cols.append(np.cos(kx * np.pi * grid.nodes[:, 0])
                    * np.cos(ky * np.pi * grid.nodes[:, 1]))
    return np.column_stack(cols)


@dataclass(frozen=True)
class Medium:
    """Scattering field exp(u) on a grid, with admissibility diagnostics."""

    grid: SpatialGrid
    log_sigma: np.ndarray     # nodal u values
    sigma: np.ndarray         # exp(u)
    sup_sigma: float
    sup_inv_sigma: float
    sup_grad_inv_sigma: float
    bound: float

    @property
    def admissible(self) -> bool:
        return max(self.sup_sigma, self.sup_inv_sigma,
                   self.sup_grad_inv_sigma) < self.bound

    def inv_sigma(self) -> np.ndarray:
        return 1.0 / self.sigma


def medium_from_log_field(grid: SpatialGrid, log_sigma: np.ndarray,
                          bound: float) -> Medium:
    u = np.asarray(log_sigma, dtype=float)
    if u.shape != (grid.n_nodes,):
        raise ValueError(f"log field must have shape ({grid.n_nodes},), got {u.shape}")
    sigma = np.exp(u)
    inv = 1.0 / sigma
    grad_inv = gradient(ScalarField(grid, inv))
    sup_grad = float(np.max(np.linalg.norm(grad_inv, axis=1)))
    return Medium(grid, _frozen(u), _frozen(sigma), float(sigma.max()),
                  float(inv.max()), sup_grad, bound)


def medium_from_coefficients(spec: PriorSpec, coeffs: np.ndarray,
                             grid: SpatialGrid) -> Medium:
    theta = np.asarray(coeffs, dtype=float)
    if theta.shape != (spec.n_modes,):
        raise ValueError(f"coeffs must have shape ({spec.n_modes},), got {theta.shape}")
    u = spec.mean_offset + basis_matrix(spec, grid) @ theta
    return medium_from_log_field(grid, u, spec.bound)


def sample_prior(spec: PriorSpec, rng: np.random.Generator,
                 grid: SpatialGrid) -> np.ndarray:
    """Draw coefficients from the prior, rejecting inadmissible media."""
    scales = spec.coefficient_scales()
    for _ in range(spec.max_rejections):
        theta = scales * rng.standard_normal(spec.n_modes)
        if medium_from_coefficients(spec, theta, grid).admissible:
            return theta
    raise PriorRejectionError(
        f"no admissible draw in {spec.max_rejections} attempts "
        f"(bound={spec.bound}, amplitude={spec.amplitude})")


def linearized_prior_covariance(spec: PriorSpec) -> np.ndarray:
    """Diagonal Gaussian covariance used by the linearized analysis.

    No admissibility rejection is applied here: the linearized theory
    works with the plain centred Gaussian on the coefficients.
    """
    return np.diag(spec.coefficient_scales() ** 2)
