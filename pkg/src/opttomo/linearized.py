"""Adjoint-kernel linearization and the exact Gaussian coefficient update.

Around a background medium exp(u0) the measurement response to a small
log-perturbation w is an integral operator: one scalar kernel per
(detector, source-trace) pair, built from a forward solve and an adjoint
solve.  Projecting the kernels on the prior's cosine basis gives a finite
linear map, and conjugate Gaussian algebra then yields each model's
linearized posterior in closed form.

Sign convention: both banks are normalized so that the linear map is the
actual Frechet derivative of the nonlinear forward map (the tangent tests
pin this down); the kinetic and diffusive kernels therefore agree at
leading order and their gap measures the model discrepancy.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .bayes import MODEL_TAGS, DataVector, _forward
from .diffusion import solve_de, solve_de_adjoint
from .grids import AngularQuadrature, ScalarField, SpatialGrid, _frozen, gradient
from .measurement import MeasurementSetup
from .medium import Medium, PriorSpec, basis_matrix
from .transport import collision, lift_boundary, solve_rte, solve_rte_adjoint


@dataclass(frozen=True)
class KernelBank:
    """Per-(detector, trace) sensitivity kernels on the grid nodes."""

    model: str
    kernels: np.ndarray          # (n_detectors, n_traces, n_nodes)
    grid: SpatialGrid
    background_log_sigma: np.ndarray
    knudsen: float | None = None

    def __post_init__(self):
        if self.model not in MODEL_TAGS:
            raise ValueError(f"model must be one of {MODEL_TAGS}, got {self.model!r}")
        if self.kernels.ndim != 3 or self.kernels.shape[2] != self.grid.n_nodes:
            raise ValueError("kernel array must have shape (J, K, n_nodes)")
        if not np.all(np.isfinite(self.kernels)):
            raise ValueError("kernel bank contains non-finite values")

    @property
    def n_detectors(self) -> int:
        return self.kernels.shape[0]

    @property
    def n_traces(self) -> int:
        return self.kernels.shape[1]

    def to_payload(self) -> dict:
        """Portable JSON-ready dump: node coordinates plus kernel values."""
        payload = {
            "model": self.model,
            "geometry": self.grid.geometry,
            "nodes": self.grid.nodes.tolist(),
            "values": self.kernels.tolist(),
        }
        if self.knudsen is not None:
            payload["knudsen"] = self.knudsen
        return payload

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_payload(), fh)


def kernel_bank_rte(medium: Medium, knudsen: float, setup: MeasurementSetup,
                    quadrature: AngularQuadrature, threads: int = 1,
                    **solver_kwargs) -> KernelBank:
    """Kinetic sensitivity kernels from paired transport solves.

    Kernel (j, k) couples the collision part of the trace-k linearization
    solution with the detector-j adjoint flux:
    -(sigma / (C_d eps^2)) <g_j, (mean - id) f_k>_v.
    """
    grid, quad = medium.grid, quadrature

    def forward_k(k):
        trace = setup.traces[k]
        inflow = lift_boundary(medium, knudsen, trace, quad, order=1)
        try:
            return solve_rte(medium, knudsen, inflow, quad, **solver_kwargs)
        except Exception as exc:
            raise RuntimeError(f"kernel forward solve failed for trace {k}") from exc

    def adjoint_j(j):
        try:
            return solve_rte_adjoint(medium, knudsen, setup.detector_nodes[j],
                                     quad, **solver_kwargs)
        except Exception as exc:
            raise RuntimeError(
                f"kernel adjoint solve failed for detector {j}") from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            forwards = list(pool.map(forward_k, range(setup.n_traces)))
            adjoints = list(pool.map(adjoint_j, range(setup.n_detectors)))
    else:
        forwards = [forward_k(k) for k in range(setup.n_traces)]
        adjoints = [adjoint_j(j) for j in range(setup.n_detectors)]

    scale = -medium.sigma / (quad.second_moment * knudsen**2)
    kernels = np.empty((setup.n_detectors, setup.n_traces, grid.n_nodes))
    for k, f in enumerate(forwards):
        coll = collision(f.values, quad)
        for j, g in enumerate(adjoints):
            kernels[j, k] = scale * ((g.values * coll) @ quad.weights)
    return KernelBank("rte", _frozen(kernels), grid,
                      _frozen(medium.log_sigma.copy()), float(knudsen))


def kernel_bank_de(medium: Medium, setup: MeasurementSetup,
                   **_unused) -> KernelBank:
    """Diffusive sensitivity kernels: -(1/sigma) grad rho_k . grad rho_g,j."""
    grid = medium.grid
    fwd_grads = [gradient(ScalarField(grid, solve_de(medium, trace).values))
                 for trace in setup.traces]
    adj_grads = [gradient(ScalarField(grid, solve_de_adjoint(medium, b).values))
                 for b in setup.detector_nodes]
    kernels = np.empty((setup.n_detectors, setup.n_traces, grid.n_nodes))
    for j, gg in enumerate(adj_grads):
        for k, fg in enumerate(fwd_grads):
            kernels[j, k] = -medium.inv_sigma() * np.sum(fg * gg, axis=1)
    return KernelBank("de", _frozen(kernels), grid,
                      _frozen(medium.log_sigma.copy()))


@dataclass(frozen=True)
class LinearForwardMap:
    """Matrix form of the linearized measurement map on coefficients."""

    matrix: np.ndarray          # (n_detectors * n_traces, n_modes)
    model: str
    n_detectors: int
    n_traces: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("linear map contains non-finite entries")
        if self.matrix.shape[0] != self.n_detectors * self.n_traces:
            raise ValueError("row count must equal n_detectors * n_traces")

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(coeffs, dtype=float)


def linear_map(bank: KernelBank, spec: PriorSpec) -> LinearForwardMap:
    """Project each kernel on the prior basis with trapezoidal quadrature."""
    grid = bank.grid
    weighted_basis = basis_matrix(spec, grid) * grid.volume_weights()[:, None]
    flat = bank.kernels.reshape(-1, grid.n_nodes)
    return LinearForwardMap(_frozen(flat @ weighted_basis), bank.model,
                            bank.n_detectors, bank.n_traces)


def linearized_data(data: DataVector, medium: Medium, model: str,
                    knudsen: float | None, setup: MeasurementSetup,
                    quadrature: AngularQuadrature | None = None,
                    **solver_kwargs) -> np.ndarray:
    """Observations minus the background response, flattened detector-major."""
    background = _forward(model, medium, knudsen, setup, quadrature,
                          **solver_kwargs)
    return _frozen((data.values - background).ravel())


@dataclass(frozen=True)
class GaussianPosterior:
    """Exact conjugate posterior on the coefficient vector."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        c = self.covariance
        if c.shape != (self.mean.size, self.mean.size):
            raise ValueError("covariance shape must match the mean length")
        if not np.allclose(c, c.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        if np.any(np.linalg.eigvalsh(c) <= 0):
            raise ValueError("covariance must be positive definite")

    def summary(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "covariance": self.covariance.tolist(),
            "eigenvalues": np.linalg.eigvalsh(self.covariance).tolist(),
        }


def gaussian_update(linear: LinearForwardMap, c_prior: np.ndarray,
                    m_prior: np.ndarray, noise_std: float,
                    z: np.ndarray) -> GaussianPosterior:
    """Conjugate update via the precision form.

    post-precision = prior-precision + G^T G / gamma^2;
    post-mean = m_prior + C_post G^T (z - G m_prior) / gamma^2.
    """
    if noise_std <= 0:
        raise ValueError(f"noise_std must be > 0, got {noise_std}")
    g = linear.matrix
    c_prior = np.asarray(c_prior, dtype=float)
    m_prior = np.asarray(m_prior, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.shape != (g.shape[0],):
        raise ValueError(f"data vector must have shape ({g.shape[0]},), "
                         f"got {z.shape}")
    if not np.allclose(c_prior, c_prior.T, atol=1e-12):
        raise ValueError("prior covariance must be symmetric")
    if not g.any():
        # no information: the posterior is the prior, exactly
        return GaussianPosterior(_frozen(m_prior.copy()), _frozen(c_prior.copy()))
    try:
        prior_chol = cho_factor(c_prior)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - scipy raises own
        raise ValueError("prior covariance must be positive definite") from exc
    except Exception as exc:
        raise ValueError("prior covariance must be positive definite") from exc
    m = c_prior.shape[0]
    precision = cho_solve(prior_chol, np.eye(m)) + (g.T @ g) / noise_std**2
    precision = 0.5 * (precision + precision.T)
    post_chol = cho_factor(precision)
    c_post = cho_solve(post_chol, np.eye(m))
    c_post = 0.5 * (c_post + c_post.T)
    m_post = m_prior + c_post @ (g.T @ (z - g @ m_prior)) / noise_std**2
    return GaussianPosterior(_frozen(m_post), _frozen(c_post))


def gaussian_hellinger(p: GaussianPosterior, q: GaussianPosterior) -> float:
    """Closed-form Hellinger distance between two Gaussians.

    Identical inputs give exactly zero: the average covariance then equals
    either one bitwise, so the log-determinant terms cancel exactly.
    """
    if p.mean.shape != q.mean.shape:
        raise ValueError("posteriors live on different coefficient spaces")
    avg = 0.5 * (p.covariance + q.covariance)
    sign, logdet_avg = np.linalg.slogdet(avg)
    if sign <= 0:  # pragma: no cover - SPD by construction
        raise ValueError("average covariance is not positive definite")
    log_bc = (0.25 * np.linalg.slogdet(p.covariance)[1]
              + 0.25 * np.linalg.slogdet(q.covariance)[1]
              - 0.5 * logdet_avg)
    dm = p.mean - q.mean
    quad = float(dm @ np.linalg.solve(avg, dm)) if dm.any() else 0.0
    dsq = 1.0 - math.exp(log_bc - 0.125 * quad)
    return math.sqrt(min(max(dsq, 0.0), 1.0))


def moment_distance(p: GaussianPosterior, q: GaussianPosterior
                    ) -> tuple[float, float]:
    """Euclidean mean gap and spectral-norm covariance gap."""
    if p.mean.shape != q.mean.shape:
        raise ValueError("posteriors live on different coefficient spaces")
    mean_gap = float(np.linalg.norm(p.mean - q.mean))
    cov_gap = float(np.linalg.norm(p.covariance - q.covariance, ord=2))
    return mean_gap, cov_gap
