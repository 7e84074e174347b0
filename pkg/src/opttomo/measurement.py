"""Closed-form Dirichlet traces and the detector/source layout.

Traces are defined on the whole closure of the domain with analytic
gradients, so kinetic boundary lifts can evaluate grad(xi) exactly at
boundary points instead of differencing the solver output.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grids import SpatialGrid

TRACE_KINDS = ("constant", "linear", "complement", "quadratic")


@dataclass(frozen=True)
class Trace:
    """Scalar boundary source with analytic gradient."""

    kind: str
    axis: int
    value: float
    _fn: Callable[[np.ndarray], np.ndarray]
    _grad: Callable[[np.ndarray], np.ndarray]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self._fn(np.atleast_2d(points))

    def grad(self, points: np.ndarray) -> np.ndarray:
        return self._grad(np.atleast_2d(points))

    def describe(self) -> dict:
        return {"kind": self.kind, "axis": self.axis, "value": self.value}


def make_trace(kind: str, axis: int = 0, value: float = 1.0) -> Trace:
    """Trace factory.

    kind "constant":   xi = value
    kind "linear":     xi = x[axis]
    kind "complement": xi = 1 - x[axis]
    kind "quadratic":  xi = x[axis]**2
    """
    if kind not in TRACE_KINDS:
        raise ValueError(f"trace kind must be one of {TRACE_KINDS}, got {kind!r}")
    if axis not in (0, 1):
        raise ValueError(f"trace axis must be 0 or 1, got {axis}")

    def zeros_like_grad(p):
        return np.zeros_like(p, dtype=float)

    if kind == "constant":
        fn = lambda p: np.full(p.shape[0], float(value))
        gr = zeros_like_grad
    elif kind == "linear":
        fn = lambda p: p[:, axis].astype(float)

        def gr(p):
            g = np.zeros_like(p, dtype=float)
            g[:, axis] = 1.0
            return g
    elif kind == "complement":
        fn = lambda p: 1.0 - p[:, axis]

        def gr(p):
            g = np.zeros_like(p, dtype=float)
            g[:, axis] = -1.0
            return g
    else:  # quadratic
        fn = lambda p: p[:, axis] ** 2

        def gr(p):
            g = np.zeros_like(p, dtype=float)
            g[:, axis] = 2.0 * p[:, axis]
            return g

    return Trace(kind, axis, float(value), fn, gr)


@dataclass(frozen=True)
class MeasurementSetup:
    """Detector boundary nodes, source traces and the noise level."""

    detector_nodes: tuple[int, ...]   # indices into the grid's boundary list
    traces: tuple[Trace, ...]
    noise_std: float

    def __post_init__(self):
        if len(self.detector_nodes) < 1:
            raise ValueError("at least one detector is required")
        if len(self.traces) < 1:
            raise ValueError("at least one source trace is required")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")

    @property
    def n_detectors(self) -> int:
        return len(self.detector_nodes)

    @property
    def n_traces(self) -> int:
        return len(self.traces)


def setup_from_positions(grid: SpatialGrid, positions, traces, noise_std: float,
                         ) -> MeasurementSetup:
    """Build a setup from detector *positions* (resolved to boundary nodes).

    Square corners are rejected: the boundary flux readings compared by this
    package are single-sided normal derivatives, which have no unambiguous
    direction where two edges meet.
    """
    nodes = tuple(grid.boundary_node_at(p) for p in positions)
    for pos, b in zip(positions, nodes):
        if np.count_nonzero(grid.boundary_normals[b]) > 1:
            raise ValueError(f"detector position {pos} resolves to a square corner")
    return MeasurementSetup(nodes, tuple(traces), noise_std)
