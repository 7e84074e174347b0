"""Diffusion forward model: -div(sigma^{-1} grad rho) = 0 with Dirichlet data.

The discretization is the conservative flux form with harmonic averaging
of sigma^{-1} at cell interfaces (equivalently: interface coefficient
2/(sigma_i + sigma_j)), which matches the diffusion limit of the
diamond-difference transport scheme exactly.  Boundary measurements are
Dirichlet-to-Neumann values sigma^{-1} d_n rho extracted with one-sided
second-order stencils.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import spsolve

from .grids import SpatialGrid, _frozen, boundary_delta
from .measurement import MeasurementSetup, Trace
from .medium import Medium


@dataclass(frozen=True)
class DiffusionSolution:
    """Nodal solution of the diffusion problem plus solve diagnostics."""

    grid: SpatialGrid
    values: np.ndarray
    residual: float              # max-norm residual of the discrete system
    max_principle_margin: float  # >= 0 when within data range (up to roundoff)


def _boundary_values(grid: SpatialGrid, data) -> np.ndarray:
    """Dirichlet values on the boundary nodes, perimeter order."""
    if isinstance(data, Trace):
        return data(grid.nodes[grid.boundary_indices])
    vals = np.asarray(data, dtype=float)
    nb = len(grid.boundary_indices)
    if vals.shape != (nb,):
        raise ValueError(f"boundary data must have shape ({nb},), got {vals.shape}")
    return vals


def solve_de(medium: Medium, data, grid: SpatialGrid | None = None) -> DiffusionSolution:
    """Solve the Dirichlet diffusion problem on the medium's grid.

    ``data`` is either a closed-form :class:`Trace` or explicit values on
    the boundary nodes (perimeter order), e.g. a discrete boundary delta.
    """
    grid = medium.grid if grid is None else grid
    bvals = _boundary_values(grid, data)
    if grid.geometry == "slab":
        rho = _solve_slab(medium, grid, bvals)
    else:
        rho = _solve_square(medium, grid, bvals)
    residual = _residual(medium, grid, rho, bvals)
    lo, hi = bvals.min(), bvals.max()
    margin = float(min(rho.min() - lo, hi - rho.max()))
    return DiffusionSolution(grid, _frozen(rho), residual, margin)


def _interface_coeff(sigma_a: np.ndarray, sigma_b: np.ndarray) -> np.ndarray:
    # harmonic mean of 1/sigma at the two nodes
    return 2.0 / (sigma_a + sigma_b)


def _solve_slab(medium: Medium, grid: SpatialGrid, bvals: np.ndarray) -> np.ndarray:
    n = grid.n_cells + 1
    a = _interface_coeff(medium.sigma[:-1], medium.sigma[1:])  # (n_cells,)
    ab = np.zeros((3, n))
    rhs = np.zeros(n)
    ab[1, 0] = ab[1, -1] = 1.0
    rhs[0], rhs[-1] = bvals[0], bvals[1]
    ab[0, 2:] = a[1:]            # super-diagonal for rows 1..n-2
    ab[2, :-2] = a[:-1]          # sub-diagonal
    ab[1, 1:-1] = -(a[:-1] + a[1:])
    return solve_banded((1, 1), ab, rhs)


def _solve_square(medium: Medium, grid: SpatialGrid, bvals: np.ndarray) -> np.ndarray:
    n = grid.n_cells + 1
    sig = medium.sigma.reshape(n, n)
    is_boundary = np.zeros(grid.n_nodes, dtype=bool)
    is_boundary[grid.boundary_indices] = True
    dirichlet = np.zeros(grid.n_nodes)
    dirichlet[grid.boundary_indices] = bvals

    rows, cols, vals = [], [], []
    rhs = np.zeros(grid.n_nodes)
    for i in range(n):
        for j in range(n):
            k = i * n + j
            if is_boundary[k]:
                rows.append(k); cols.append(k); vals.append(1.0)
                rhs[k] = dirichlet[k]
                continue
            diag = 0.0
            for (di, dj) in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                knb = (i + di) * n + (j + dj)
                a = _interface_coeff(sig[i, j], sig[i + di, j + dj])
                diag -= a
                rows.append(k); cols.append(knb); vals.append(a)
            rows.append(k); cols.append(k); vals.append(diag)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(grid.n_nodes, grid.n_nodes))
    return np.asarray(spsolve(A, rhs))


def _residual(medium: Medium, grid: SpatialGrid, rho: np.ndarray,
              bvals: np.ndarray) -> float:
    """Max-norm residual of the assembled flux-form equations."""
    if grid.geometry == "slab":
        a = _interface_coeff(medium.sigma[:-1], medium.sigma[1:])
        flux = a * np.diff(rho)
        r = float(np.max(np.abs(np.diff(flux)))) if len(flux) > 1 else 0.0
        r_bc = max(abs(rho[0] - bvals[0]), abs(rho[-1] - bvals[1]))
        return max(r, r_bc)
    n = grid.n_cells + 1
    sig = medium.sigma.reshape(n, n)
    u = rho.reshape(n, n)
    ax = _interface_coeff(sig[:-1, :], sig[1:, :]) * np.diff(u, axis=0)
    ay = _interface_coeff(sig[:, :-1], sig[:, 1:]) * np.diff(u, axis=1)
    div = np.diff(ax, axis=0)[:, 1:-1] + np.diff(ay, axis=1)[1:-1, :]
    r = float(np.max(np.abs(div))) if div.size else 0.0
    r_bc = float(np.max(np.abs(u.ravel()[grid.boundary_indices] - bvals)))
    return max(r, r_bc)


def normal_derivative(sol: DiffusionSolution, boundary_node: int) -> float:
    """Outward normal derivative at a boundary node (one-sided, 2nd order)."""
    grid = sol.grid
    normal = grid.boundary_normals[boundary_node]
    if grid.geometry == "square" and abs(abs(normal[0]) - 1.0) > 1e-12 \
            and abs(abs(normal[1]) - 1.0) > 1e-12:
        raise ValueError("normal derivative is undefined at square corners")
    h = grid.spacing
    k0 = grid.boundary_indices[boundary_node]
    if grid.geometry == "slab":
        step = -1 if normal[0] > 0 else 1
        f0, f1, f2 = sol.values[k0], sol.values[k0 + step], sol.values[k0 + 2 * step]
    else:
        n = grid.n_cells + 1
        axis = 0 if abs(normal[0]) > 0.5 else 1
        stride = n if axis == 0 else 1
        step = -stride if normal[axis] > 0 else stride
        f0, f1, f2 = sol.values[k0], sol.values[k0 + step], sol.values[k0 + 2 * step]
    return float((3.0 * f0 - 4.0 * f1 + f2) / (2.0 * h))


def dtn_measurement(sol: DiffusionSolution, medium: Medium,
                    boundary_node: int) -> float:
    """Dirichlet-to-Neumann readout sigma^{-1} d_n rho at a boundary node."""
    k0 = sol.grid.boundary_indices[boundary_node]
    return normal_derivative(sol, boundary_node) / medium.sigma[k0]


def solve_de_adjoint(medium: Medium, boundary_node: int) -> DiffusionSolution:
    """Diffusion solve driven by the discrete boundary delta at a detector."""
    return solve_de(medium, boundary_delta(medium.grid, boundary_node))


def forward_map_de(medium: Medium, setup: MeasurementSetup) -> np.ndarray:
    """Detector-by-trace matrix of DtN measurements, shape (J, K)."""
    out = np.empty((setup.n_detectors, setup.n_traces))
    for k, trace in enumerate(setup.traces):
        sol = solve_de(medium, trace)
        for j, det in enumerate(setup.detector_nodes):
            out[j, k] = dtn_measurement(sol, medium, det)
    return out
