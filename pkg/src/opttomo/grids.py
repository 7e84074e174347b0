"""Spatial grids, angular quadratures and discrete differential operators.

Two geometries are supported: the unit interval ("slab") and the unit
square ("square").  Fields live on grid nodes; boundary nodes carry unit
outward normals and quadrature weights for the boundary measure, listed
in perimeter order so that boundary hat functions can be built from
neighbouring nodes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GEOMETRIES = ("slab", "square")

# Angular second moment <(v.e_i)^2> of the uniform measure on the unit
# sphere in 3d.  Recorded for reference only: the solvers use the slab
# value 1/3 (Gauss-Legendre on [-1,1]) and the unit-circle value 1/2.
SPHERE_SECOND_MOMENT = 1.0 / 3.0


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform nodal grid on [0,1] or [0,1]^2 with boundary metadata."""

    geometry: str
    n_cells: int
    spacing: float
    nodes: np.ndarray             # (n_nodes, dim)
    boundary_indices: np.ndarray  # (n_boundary,) flat node ids, perimeter order
    boundary_normals: np.ndarray  # (n_boundary, dim), unit outward normals
    boundary_weights: np.ndarray  # (n_boundary,) boundary-measure weights

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def node_shape(self) -> tuple[int, ...]:
        n = self.n_cells + 1
        return (n,) if self.geometry == "slab" else (n, n)

    def volume_weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights over the domain, per node."""
        n = self.n_cells + 1
        w1 = np.full(n, self.spacing)
        w1[[0, -1]] = self.spacing / 2.0
        if self.geometry == "slab":
            return w1
        return np.outer(w1, w1).ravel()

    def boundary_node_at(self, position, tol: float = 1e-9) -> int:
        """Index into the boundary list of the node at ``position``."""
        pos = np.atleast_1d(np.asarray(position, dtype=float))
        if pos.shape != (self.dim,):
            raise ValueError(f"position must have {self.dim} component(s), got {pos.shape}")
        pts = self.nodes[self.boundary_indices]
        dist = np.linalg.norm(pts - pos[None, :], axis=1)
        b = int(np.argmin(dist))
        if dist[b] > tol:
            raise ValueError(f"position {pos.tolist()} is not a boundary node "
                             f"(nearest is {pts[b].tolist()}, distance {dist[b]:.3g})")
        return b


def build_grid(geometry: str, n_cells: int) -> SpatialGrid:
    if geometry not in GEOMETRIES:
        raise ValueError(f"geometry must be one of {GEOMETRIES}, got {geometry!r}")
    if n_cells < 4:
        raise ValueError(f"n_cells must be at least 4, got {n_cells}")
    h = 1.0 / n_cells
    xs = np.arange(n_cells + 1) * h
    xs[-1] = 1.0
    if geometry == "slab":
        nodes = xs[:, None]
        b_idx = np.array([0, n_cells])
        normals = np.array([[-1.0], [1.0]])
        weights = np.array([1.0, 1.0])
    else:
        n = n_cells + 1
        xg, yg = np.meshgrid(xs, xs, indexing="ij")
        nodes = np.column_stack([xg.ravel(), yg.ravel()])

        def flat(i, j):
            return i * n + j

        idx, normals_l = [], []
        s = 1.0 / np.sqrt(2.0)
        for i in range(n_cells + 1):          # bottom edge, y = 0
            idx.append(flat(i, 0))
            if i == 0:
                normals_l.append((-s, -s))
            elif i == n_cells:
                normals_l.append((s, -s))
            else:
                normals_l.append((0.0, -1.0))
        for j in range(1, n_cells + 1):       # right edge, x = 1
            idx.append(flat(n_cells, j))
            normals_l.append((s, s) if j == n_cells else (1.0, 0.0))
        for i in range(n_cells - 1, -1, -1):  # top edge, y = 1
            idx.append(flat(i, n_cells))
            normals_l.append((-s, s) if i == 0 else (0.0, 1.0))
        for j in range(n_cells - 1, 0, -1):   # left edge, x = 0
            idx.append(flat(0, j))
            normals_l.append((-1.0, 0.0))
        b_idx = np.array(idx)
        normals = np.array(normals_l)
        weights = np.full(len(idx), h)  # trapezoid per edge, corners shared
    return SpatialGrid(geometry, n_cells, h, _frozen(nodes), _frozen(b_idx),
                       _frozen(normals), _frozen(weights))


@dataclass(frozen=True)
class ScalarField:
    """Nodal scalar field on a :class:`SpatialGrid`."""

    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_nodes,):
            raise ValueError(f"values must have shape ({self.grid.n_nodes},), got {vals.shape}")
        object.__setattr__(self, "values", _frozen(vals))


def gradient(field: ScalarField) -> np.ndarray:
    """Nodal gradient, shape (n_nodes, dim).

    Second-order central differences in the interior and second-order
    one-sided stencils on the boundary (exact for quadratics).
    """
    grid = field.grid
    h = grid.spacing
    if grid.geometry == "slab":
        return np.gradient(field.values, h, edge_order=2)[:, None]
    v2 = field.values.reshape(grid.node_shape)
    gx = np.gradient(v2, h, axis=0, edge_order=2)
    gy = np.gradient(v2, h, axis=1, edge_order=2)
    return np.column_stack([gx.ravel(), gy.ravel()])


@dataclass(frozen=True)
class AngularQuadrature:
    """Discrete velocity ordinates with normalized weights (sum 1)."""

    geometry: str
    directions: np.ndarray    # (n_ordinates, dim)
    weights: np.ndarray       # (n_ordinates,)
    second_moment: float      # <(v.e)^2> under the discrete measure

    @property
    def n_ordinates(self) -> int:
        return self.directions.shape[0]

    def mirror_index(self) -> np.ndarray:
        """Permutation p with directions[p[q]] == -directions[q] exactly."""
        out = np.empty(self.n_ordinates, dtype=int)
        for q in range(self.n_ordinates):
            match = np.flatnonzero(
                (self.directions == -self.directions[q]).all(axis=1))
            if match.size != 1:
                raise ValueError("ordinate set is not symmetric under v -> -v")
            out[q] = match[0]
        return out


def build_quadrature(geometry: str, n_ordinates: int) -> AngularQuadrature:
    if geometry not in GEOMETRIES:
        raise ValueError(f"geometry must be one of {GEOMETRIES}, got {geometry!r}")
    if n_ordinates % 2 == 1:
        raise ValueError(f"n_ordinates must be even (for +/- symmetry), got {n_ordinates}")
    if n_ordinates < 4:
        raise ValueError(f"n_ordinates must be at least 4, got {n_ordinates}")
    if geometry == "slab":
        mu, w = np.polynomial.legendre.leggauss(n_ordinates)
        mu = (mu - mu[::-1]) / 2.0  # enforce exact antisymmetry
        w = (w + w[::-1]) / 4.0     # halved weights: total measure 1
        dirs = mu[:, None]
    else:
        if n_ordinates % 4 != 0:
            raise ValueError(
                "square geometry needs n_ordinates divisible by 4 "
                "(half-offset angles are tangent to a face otherwise)")
        half = n_ordinates // 2
        theta = 2.0 * np.pi * (np.arange(half) + 0.5) / n_ordinates
        dirs = np.empty((n_ordinates, 2))
        dirs[:half, 0] = np.cos(theta)
        dirs[:half, 1] = np.sin(theta)
        dirs[half:] = -dirs[:half]  # exact mirror pairs
        w = np.full(n_ordinates, 1.0 / n_ordinates)
    if np.min(np.abs(dirs)) < 1e-12:
        raise ValueError("quadrature has an ordinate tangent to a boundary face")
    c_d = float(w @ (dirs[:, 0] ** 2))
    return AngularQuadrature(geometry, _frozen(dirs), _frozen(w), c_d)


def boundary_delta(grid: SpatialGrid, boundary_node: int) -> np.ndarray:
    """Discrete boundary delta centred at a boundary node.

    Returns trace values over the boundary node list that integrate to 1
    under the boundary weights: an endpoint indicator on the slab, a
    width-3 hat along the perimeter on the square.
    """
    nb = len(grid.boundary_indices)
    if not 0 <= boundary_node < nb:
        raise ValueError(f"boundary_node must be in [0, {nb}), got {boundary_node}")
    trace = np.zeros(nb)
    if grid.geometry == "slab":
        trace[boundary_node] = 1.0  # weight 1 at each endpoint
        return trace
    peak = 1.0 / (2.0 * grid.spacing)
    trace[boundary_node] = peak
    trace[(boundary_node - 1) % nb] = peak / 2.0
    trace[(boundary_node + 1) % nb] = peak / 2.0
    return trace
