"""JSON experiment configuration: schema, validation, canonical bytes.

A config file fully determines an experiment run (including every seed),
so the canonical serialization doubles as the run fingerprint.  Validation
errors always name the offending field with a dotted path.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .grids import GEOMETRIES, build_grid
from .measurement import (TRACE_KINDS, MeasurementSetup, Trace, make_trace,
                          setup_from_positions)
from .medium import PriorSpec

EXPERIMENT_KINDS = ("forward", "rates", "posterior-compare",
                    "linearized-compare", "make-data")
KL_DIRECTIONS = ("rte_to_de", "de_to_rte")


class ConfigError(ValueError):
    """Schema violation; the message starts with the field path."""


def _require(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{path}: {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    geometry: str = "slab"
    n_cells: int = 256
    n_ordinates: int = 16
    epsilons: tuple[float, ...] = (0.4, 0.2, 0.1, 0.05)
    prior: PriorSpec = field(default_factory=PriorSpec)
    detector_positions: tuple[tuple[float, ...], ...] = ((0.0,), (1.0,))
    trace_specs: tuple[dict, ...] = (
        {"kind": "linear", "axis": 0, "value": 1.0},)
    noise_std: float = 0.05
    n_samples: int = 2000
    pcn_beta: float = 0.5
    pcn_steps: int = 0
    kl_direction: str = "rte_to_de"
    master_seed: int = 0
    noise_seed: int = 1
    theta_true: tuple[float, ...] | None = None
    data_model: str = "de"
    data_knudsen: float | None = None
    out_dir: str = "artifacts"
    threads: int = 1

    def traces(self) -> tuple[Trace, ...]:
        return tuple(make_trace(t["kind"], t.get("axis", 0),
                                t.get("value", 1.0))
                     for t in self.trace_specs)

    def build_setup(self, grid) -> MeasurementSetup:
        traces = self.traces()
        nodes = []
        for i, pos in enumerate(self.detector_positions):
            try:
                one = setup_from_positions(grid, [np.asarray(pos)], traces,
                                           self.noise_std)
            except ValueError as exc:
                raise ConfigError(
                    f"measurement.detectors[{i}]: {exc}") from exc
            nodes.append(one.detector_nodes[0])
        return MeasurementSetup(tuple(nodes), traces, self.noise_std)

    def to_payload(self) -> dict:
        return {
            "kind": self.kind,
            "geometry": self.geometry,
            "n_cells": self.n_cells,
            "n_ordinates": self.n_ordinates,
            "epsilons": list(self.epsilons),
            "prior": {
                "n_modes": self.prior.n_modes,
                "amplitude": self.prior.amplitude,
                "decay": self.prior.decay,
                "mean_offset": self.prior.mean_offset,
                "bound": self.prior.bound,
                "max_rejections": self.prior.max_rejections,
            },
            "measurement": {
                "detectors": [list(p) for p in self.detector_positions],
                "traces": [dict(t) for t in self.trace_specs],
                "noise_std": self.noise_std,
            },
            "estimators": {
                "n_samples": self.n_samples,
                "pcn_beta": self.pcn_beta,
                "pcn_steps": self.pcn_steps,
                "kl_direction": self.kl_direction,
            },
            "seeds": {"master": self.master_seed, "noise": self.noise_seed},
            "data": {
                "model": self.data_model,
                "theta_true": (None if self.theta_true is None
                               else list(self.theta_true)),
                "knudsen": self.data_knudsen,
            },
            "out_dir": self.out_dir,
            "threads": self.threads,
        }


def canonical_json(config: ExperimentConfig) -> str:
    """Byte-stable serialization of the *experiment identity*.

    Execution details (thread count, output directory) are excluded so
    that reruns of the same study hash identically no matter where or how
    parallel they run.
    """
    payload = config.to_payload()
    payload.pop("threads")
    payload.pop("out_dir")
    return json.dumps(payload, sort_keys=True, indent=1) + "\n"


def fingerprint(config: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def _validated(config: ExperimentConfig) -> ExperimentConfig:
    _require(config.kind in EXPERIMENT_KINDS, "kind",
             f"must be one of {list(EXPERIMENT_KINDS)}, got {config.kind!r}")
    _require(config.geometry in GEOMETRIES, "geometry",
             f"must be one of {list(GEOMETRIES)}, got {config.geometry!r}")
    _require(isinstance(config.n_cells, int) and config.n_cells >= 4,
             "n_cells", f"must be an integer >= 4, got {config.n_cells}")
    _require(isinstance(config.n_ordinates, int) and config.n_ordinates >= 4
             and config.n_ordinates % 2 == 0, "n_ordinates",
             f"must be an even integer >= 4, got {config.n_ordinates}")
    eps = config.epsilons
    _require(len(eps) >= 1, "epsilons", "must be a non-empty list")
    for i, e in enumerate(eps):
        _require(isinstance(e, float) and e > 0, f"epsilons[{i}]",
                 f"must be a positive number, got {e!r}")
    _require(all(a > b for a, b in zip(eps, eps[1:])), "epsilons",
             "must be strictly decreasing")
    try:
        PriorSpec(**{k: getattr(config.prior, k) for k in
                     ("n_modes", "amplitude", "decay", "mean_offset",
                      "bound", "max_rejections")})
    except ValueError as exc:
        raise ConfigError(f"prior: {exc}") from exc
    dim = 1 if config.geometry == "slab" else 2
    _require(len(config.detector_positions) >= 1, "measurement.detectors",
             "need at least one detector")
    for i, pos in enumerate(config.detector_positions):
        _require(len(pos) == dim, f"measurement.detectors[{i}]",
                 f"must have {dim} coordinate(s), got {len(pos)}")
    _require(len(config.trace_specs) >= 1, "measurement.traces",
             "need at least one source trace")
    for i, t in enumerate(config.trace_specs):
        _require(t.get("kind") in TRACE_KINDS,
                 f"measurement.traces[{i}].kind",
                 f"must be one of {list(TRACE_KINDS)}, got {t.get('kind')!r}")
        _require(t.get("axis", 0) in (0, 1), f"measurement.traces[{i}].axis",
                 f"must be 0 or 1, got {t.get('axis')!r}")
    _require(config.noise_std >= 0, "measurement.noise_std",
             f"must be >= 0, got {config.noise_std}")
    _require(config.n_samples >= 1, "estimators.n_samples",
             f"must be >= 1, got {config.n_samples}")
    _require(0.0 <= config.pcn_beta <= 1.0, "estimators.pcn_beta",
             f"must lie in [0, 1], got {config.pcn_beta}")
    _require(config.pcn_steps >= 0, "estimators.pcn_steps",
             f"must be >= 0, got {config.pcn_steps}")
    _require(config.kl_direction in KL_DIRECTIONS, "estimators.kl_direction",
             f"must be one of {list(KL_DIRECTIONS)}, got "
             f"{config.kl_direction!r}")
    _require(config.data_model in ("rte", "de"), "data.model",
             f"must be 'rte' or 'de', got {config.data_model!r}")
    if config.data_model == "rte":
        _require(config.data_knudsen is not None and config.data_knudsen > 0,
                 "data.knudsen", "required and positive for kinetic data")
    if config.theta_true is not None:
        _require(len(config.theta_true) == config.prior.n_modes,
                 "data.theta_true",
                 f"must have prior.n_modes = {config.prior.n_modes} entries, "
                 f"got {len(config.theta_true)}")
    _require(config.threads >= 1, "threads",
             f"must be >= 1, got {config.threads}")
    _require(isinstance(config.out_dir, str) and config.out_dir != "",
             "out_dir", "must be a non-empty string")
    # detector positions must resolve to boundary nodes (and, on the square,
    # never to corners) — exercised against the actual grid
    grid = build_grid(config.geometry, config.n_cells)
    config.build_setup(grid)
    return config


def config_from_payload(payload: dict) -> ExperimentConfig:
    """Build and validate a config from parsed JSON."""
    if not isinstance(payload, dict):
        raise ConfigError(": top level must be a JSON object")
    known = {"kind", "geometry", "n_cells", "n_ordinates", "epsilons",
             "prior", "measurement", "estimators", "seeds", "data",
             "out_dir", "threads"}
    for key in payload:
        if key not in known:
            raise ConfigError(f"{key}: unknown field")
    if "kind" not in payload:
        raise ConfigError("kind: required field is missing")

    def group(name):
        g = payload.get(name, {})
        if not isinstance(g, dict):
            raise ConfigError(f"{name}: must be a JSON object")
        return g

    prior_g = group("prior")
    try:
        prior = PriorSpec(**{k: prior_g[k] for k in
                             ("n_modes", "amplitude", "decay", "mean_offset",
                              "bound", "max_rejections") if k in prior_g})
    except TypeError as exc:
        raise ConfigError(f"prior: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"prior: {exc}") from exc
    meas = group("measurement")
    est = group("estimators")
    seeds = group("seeds")
    data = group("data")
    defaults = ExperimentConfig(kind=payload["kind"])
    epsilons = payload.get("epsilons", list(defaults.epsilons))
    if not isinstance(epsilons, list):
        raise ConfigError("epsilons: must be a list")
    theta = data.get("theta_true")
    cfg = ExperimentConfig(
        kind=payload["kind"],
        geometry=payload.get("geometry", defaults.geometry),
        n_cells=payload.get("n_cells", defaults.n_cells),
        n_ordinates=payload.get("n_ordinates", defaults.n_ordinates),
        epsilons=tuple(float(e) if isinstance(e, (int, float))
                       and not isinstance(e, bool) else e for e in epsilons),
        prior=prior,
        detector_positions=tuple(
            tuple(p) if isinstance(p, list) else (p,)
            for p in meas.get("detectors",
                              [list(q) for q in defaults.detector_positions])),
        trace_specs=tuple(meas.get("traces",
                                   [dict(t) for t in defaults.trace_specs])),
        noise_std=meas.get("noise_std", defaults.noise_std),
        n_samples=est.get("n_samples", defaults.n_samples),
        pcn_beta=est.get("pcn_beta", defaults.pcn_beta),
        pcn_steps=est.get("pcn_steps", defaults.pcn_steps),
        kl_direction=est.get("kl_direction", defaults.kl_direction),
        master_seed=seeds.get("master", defaults.master_seed),
        noise_seed=seeds.get("noise", defaults.noise_seed),
        theta_true=None if theta is None else tuple(theta),
        data_model=data.get("model", defaults.data_model),
        data_knudsen=data.get("knudsen", defaults.data_knudsen),
        out_dir=payload.get("out_dir", defaults.out_dir),
        threads=payload.get("threads", defaults.threads),
    )
    return _validated(cfg)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path} ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return config_from_payload(payload)


def with_overrides(config: ExperimentConfig, out_dir=None, master_seed=None,
                   threads=None) -> ExperimentConfig:
    """Apply CLI flag overrides and re-validate."""
    updates = {}
    if out_dir is not None:
        updates["out_dir"] = out_dir
    if master_seed is not None:
        updates["master_seed"] = master_seed
    if threads is not None:
        updates["threads"] = threads
    return _validated(replace(config, **updates)) if updates else config
