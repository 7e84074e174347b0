"""Experiment drivers: wire the solvers and estimators into reproducible
artifact-producing studies.

Every run writes a canonical copy of its config, and every artifact is a
pure function of that copy: floats are serialized with ``repr`` (shortest
round-trip), JSON keys are sorted, and concurrency only ever reorders
*work*, never results.  Wall-clock time is reported on the RunReport object
but deliberately kept out of the persisted JSON.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .asymptotics import (RateStudy, expansion_terms, fit_rate, forward_gap,
                          residual_norms)
from .bayes import (estimate_evidences, estimate_hellinger, estimate_kl,
                    generate_data, prior_ensemble)
from .config import ExperimentConfig, canonical_json, fingerprint
from .diffusion import forward_map_de
from .grids import build_grid, build_quadrature
from .linearized import (gaussian_hellinger, gaussian_update, kernel_bank_de,
                         kernel_bank_rte, linear_map, linearized_data,
                         moment_distance)
from .medium import (linearized_prior_covariance, medium_from_coefficients,
                     sample_prior)
from .svgplot import write_log_log_plot
from .transport import forward_map_rte, lift_boundary, solve_rte


@dataclass(frozen=True)
class RunReport:
    kind: str
    fingerprint: str
    studies: tuple[RateStudy, ...]
    warnings: tuple[str, ...]
    artifacts: tuple[str, ...]
    wall_time: float  # seconds; not persisted (kept out of byte-stable JSON)

    def to_payload(self) -> dict:
        return {
            "kind": self.kind,
            "fingerprint": self.fingerprint,
            "studies": [{
                "metric": s.metric,
                "slope": s.slope,
                "intercept": s.intercept,
                "r2": s.r_squared,
                "n_points": s.n_points,
                "n_excluded": s.n_excluded,
            } for s in self.studies],
            "warnings": list(self.warnings),
            "artifacts": sorted(self.artifacts),
        }


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def _write_csv(path: Path, rows) -> None:
    lines = ["epsilon,metric,value"]
    lines += [f"{float(e)!r},{m},{float(v)!r}" for e, m, v in rows]
    path.write_text("\n".join(lines) + "\n")


def _prepare(config: ExperimentConfig):
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(canonical_json(config))
    grid = build_grid(config.geometry, config.n_cells)
    quad = build_quadrature(config.geometry, config.n_ordinates)
    return out, grid, quad


def _reference_theta(config: ExperimentConfig, grid) -> np.ndarray:
    if config.theta_true is not None:
        return np.asarray(config.theta_true, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence(config.master_seed))
    return sample_prior(config.prior, rng, grid)


def _report(config, kind, studies, warnings, artifacts, t0,
            out: Path) -> RunReport:
    artifacts = sorted([*artifacts, "report.json"])
    report = RunReport(kind, fingerprint(config), tuple(studies),
                       tuple(warnings), tuple(artifacts), time.time() - t0)
    _write_json(out / "report.json", report.to_payload())
    return report


def _data_payload(data) -> dict:
    payload = {
        "values": data.values.tolist(),
        "model": data.model,
        "theta_true": data.theta_true.tolist(),
        "noise_seed": data.noise_seed,
        "noise_std": data.noise_std,
    }
    if data.knudsen is not None:
        payload["knudsen"] = data.knudsen
    return payload


def _generate_data(config: ExperimentConfig, grid, quad, setup):
    theta = _reference_theta(config, grid)
    return generate_data(config.prior, theta, config.data_model,
                         config.noise_std, config.noise_seed, setup, grid,
                         quad, knudsen=config.data_knudsen)


def run_make_data(config: ExperimentConfig) -> RunReport:
    t0 = time.time()
    out, grid, quad = _prepare(config)
    setup = config.build_setup(grid)
    data = _generate_data(config, grid, quad, setup)
    _write_json(out / "data.json", _data_payload(data))
    return _report(config, "make-data", [], [],
                   ["config.json", "data.json"], t0, out)


def run_forward(config: ExperimentConfig) -> RunReport:
    """Both forward maps at the reference medium, one CSV per model."""
    t0 = time.time()
    out, grid, quad = _prepare(config)
    setup = config.build_setup(grid)
    medium = medium_from_coefficients(config.prior,
                                      _reference_theta(config, grid), grid)
    de_map = forward_map_de(medium, setup)
    rows_rte, rows_de = [], []
    for eps in config.epsilons:
        rte_map = forward_map_rte(medium, eps, setup, quad)
        for j in range(setup.n_detectors):
            for k in range(setup.n_traces):
                rows_rte.append((eps, f"albedo[{j}][{k}]", rte_map[j, k]))
                rows_de.append((eps, f"dtn[{j}][{k}]", de_map[j, k]))
    _write_csv(out / "forward_rte.csv", rows_rte)
    _write_csv(out / "forward_de.csv", rows_de)
    artifacts = ["config.json", "forward_rte.csv", "forward_de.csv"]
    return _report(config, "forward", [], [], artifacts, t0, out)


def _rate_values(config: ExperimentConfig, grid, quad):
    """r0/r1/forward-gap values over the sweep at the reference medium.

    r0 measures the plain kinetic-vs-diffusive field residual under
    order-0 boundary data; r1 measures the two-term expansion residual
    under the order-1 compatible lift.  Both take the worst case over the
    configured traces.
    """
    setup = config.build_setup(grid)
    medium = medium_from_coefficients(config.prior,
                                      _reference_theta(config, grid), grid)
    traces = setup.traces
    terms = [expansion_terms(medium, tr, quad, balance_tol=grid.spacing)
             for tr in traces]

    def one_eps(eps):
        r0 = r1 = 0.0
        for tr, tm in zip(traces, terms):
            flux0 = solve_rte(medium, eps,
                              lift_boundary(medium, eps, tr, quad, order=0),
                              quad)
            flux1 = solve_rte(medium, eps,
                              lift_boundary(medium, eps, tr, quad, order=1),
                              quad)
            r0 = max(r0, residual_norms(flux0, tm, eps)[0])
            r1 = max(r1, residual_norms(flux1, tm, eps)[1])
        gap = forward_gap(medium, eps, setup, quad)
        return r0, r1, gap

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            triples = list(pool.map(one_eps, config.epsilons))
    else:
        triples = [one_eps(e) for e in config.epsilons]
    values = {name: np.array([t[i] for t in triples])
              for i, name in enumerate(("r0", "r1", "forward_gap"))}
    return values


def run_rates(config: ExperimentConfig, refine: bool = False) -> RunReport:
    t0 = time.time()
    out, grid, quad = _prepare(config)
    if len(config.epsilons) < 4:
        raise ValueError("rate studies need at least 4 epsilon values, "
                         f"got {len(config.epsilons)}")
    values = _rate_values(config, grid, quad)
    eps = np.array(config.epsilons)
    fp = fingerprint(config)
    studies, rows, warnings = [], [], []
    for name, vals in values.items():
        studies.append(fit_rate(eps, vals, metric=name, fingerprint=fp))
        rows += [(e, name, v) for e, v in zip(config.epsilons, vals)]
    _write_csv(out / "rates.csv", rows)
    _write_json(out / "rates_summary.json", {
        s.metric: {"slope": s.slope, "intercept": s.intercept,
                   "r2": s.r_squared, "n_points": s.n_points}
        for s in studies})
    write_log_log_plot(out / "rates.svg",
                       [(n, eps, v) for n, v in values.items()],
                       title="expansion residuals and forward gap",
                       ylabel="sup-norm")
    artifacts = ["config.json", "rates.csv", "rates_summary.json",
                 "rates.svg"]
    if refine:
        fine_grid = build_grid(config.geometry, 2 * config.n_cells)
        fine_vals = _rate_values(config, fine_grid, quad)
        guard = {}
        for name in values:
            coarse, fine = values[name], fine_vals[name]
            with np.errstate(divide="ignore", invalid="ignore"):
                shifts = np.abs(fine - coarse) / np.abs(coarse)
            max_shift = float(np.nanmax(shifts))
            slope_fine = fit_rate(eps, fine, metric=name).slope
            slope_coarse = next(s for s in studies if s.metric == name).slope
            slope_shift = abs(slope_fine - slope_coarse) / abs(slope_coarse)
            guard[name] = {"max_value_shift": max_shift,
                           "slope_shift": float(slope_shift),
                           "slope_refined": slope_fine}
            if max_shift >= 0.10:
                warnings.append(
                    f"discretization guard: {name} values shift "
                    f"{max_shift:.1%} when n_cells is doubled")
        _write_json(out / "refine_guard.json", guard)
        artifacts.append("refine_guard.json")
    return _report(config, "rates", studies, warnings, artifacts, t0, out)


def run_posterior_compare(config: ExperimentConfig) -> RunReport:
    """Fixed-data posterior divergence sweep over the epsilon list."""
    t0 = time.time()
    out, grid, quad = _prepare(config)
    setup = config.build_setup(grid)
    data = _generate_data(config, grid, quad, setup)
    _write_json(out / "data.json", _data_payload(data))
    ens_dir = out / "ensembles"
    ens_dir.mkdir(exist_ok=True)
    rows, warnings, artifacts = [], [], ["config.json", "data.json"]
    kl_vals, hell_vals, zgap_vals = [], [], []
    for i, eps in enumerate(config.epsilons):
        ens = prior_ensemble(config.prior, data, eps, setup, grid, quad,
                             n_samples=config.n_samples,
                             master_seed=config.master_seed,
                             threads=config.threads)
        ev = estimate_evidences(ens)
        kl = estimate_kl(ens, direction=config.kl_direction)
        he = estimate_hellinger(ens)
        for w in (*ev.warnings, *kl.warnings, *he.warnings):
            warnings.append(f"eps={eps!r}: {w}")
        sqrt_kl = math.sqrt(max(kl.value, 0.0))
        se_sqrt = (kl.standard_error / (2 * sqrt_kl) if sqrt_kl > 0
                   else float("inf"))
        if he.value > sqrt_kl + 2 * math.hypot(he.standard_error, se_sqrt):
            warnings.append(f"eps={eps!r}: hellinger exceeds sqrt(KL) "
                            "beyond twice the joint standard error")
        rows += [(eps, "kl", kl.value), (eps, "kl_se", kl.standard_error),
                 (eps, "hellinger", he.value),
                 (eps, "hellinger_se", he.standard_error),
                 (eps, "z_rte", ev.z_rte), (eps, "z_de", ev.z_de),
                 (eps, "z_gap", abs(ev.z_rte - ev.z_de)),
                 (eps, "ess_rte", ev.ess_rte), (eps, "ess_de", ev.ess_de)]
        kl_vals.append(kl.value)
        hell_vals.append(he.value)
        zgap_vals.append(abs(ev.z_rte - ev.z_de))
        name = f"ensemble_{i:02d}.json"
        _write_json(ens_dir / name, {
            "knudsen": eps, "mode": ens.mode,
            "master_seed": ens.master_seed,
            "thetas": ens.thetas.tolist(),
            "ll_rte": ens.ll_rte.tolist(),
            "ll_de": ens.ll_de.tolist()})
        artifacts.append(f"ensembles/{name}")
    _write_csv(out / "divergences.csv", rows)
    eps = np.array(config.epsilons)
    fp = fingerprint(config)
    studies, summary = [], {}
    for name, vals in (("kl", kl_vals), ("hellinger", hell_vals),
                       ("z_gap", zgap_vals)):
        try:
            st = fit_rate(eps, np.array(vals), metric=name, fingerprint=fp)
            studies.append(st)
            summary[name] = {"slope": st.slope, "intercept": st.intercept,
                             "r2": st.r_squared, "n_points": st.n_points}
        except ValueError as exc:
            summary[name] = {"error": str(exc)}
            warnings.append(f"rate fit failed for {name}: {exc}")
    _write_json(out / "divergences_summary.json", summary)
    write_log_log_plot(out / "divergences.svg",
                       [("kl", eps, np.array(kl_vals)),
                        ("hellinger", eps, np.array(hell_vals)),
                        ("z_gap", eps, np.array(zgap_vals))],
                       title="posterior divergences vs epsilon")
    artifacts += ["divergences.csv", "divergences_summary.json",
                  "divergences.svg"]
    return _report(config, "posterior-compare", studies, warnings,
                   artifacts, t0, out)


def run_linearized_compare(config: ExperimentConfig) -> RunReport:
    """Kernel banks, linear maps and Gaussian posteriors across epsilon."""
    t0 = time.time()
    out, grid, quad = _prepare(config)
    setup = config.build_setup(grid)
    data = _generate_data(config, grid, quad, setup)
    _write_json(out / "data.json", _data_payload(data))
    background = medium_from_coefficients(
        config.prior, np.zeros(config.prior.n_modes), grid)
    c_prior = linearized_prior_covariance(config.prior)
    m_prior = np.zeros(config.prior.n_modes)

    bank_de = kernel_bank_de(background, setup)
    bank_de.write_json(out / "kernel_bank_de.json")
    g_de = linear_map(bank_de, config.prior)
    z_de = linearized_data(data, background, "de", None, setup)
    post_de = gaussian_update(g_de, c_prior, m_prior, config.noise_std, z_de)
    _write_json(out / "posterior_de.json", post_de.summary())

    artifacts = ["config.json", "data.json", "kernel_bank_de.json",
                 "posterior_de.json"]
    rows, warnings = [], []
    metric_values = {k: [] for k in ("kernel_gap", "map_gap", "hellinger",
                                     "mean_gap", "cov_gap")}
    for i, eps in enumerate(config.epsilons):
        bank_rte = kernel_bank_rte(background, eps, setup, quad,
                                   threads=config.threads)
        name = f"kernel_bank_rte_{i:02d}.json"
        bank_rte.write_json(out / name)
        artifacts.append(name)
        g_rte = linear_map(bank_rte, config.prior)
        z_rte = linearized_data(data, background, "rte", eps, setup, quad)
        post_rte = gaussian_update(g_rte, c_prior, m_prior,
                                   config.noise_std, z_rte)
        pname = f"posterior_rte_{i:02d}.json"
        _write_json(out / pname, post_rte.summary())
        artifacts.append(pname)
        mean_gap, cov_gap = moment_distance(post_rte, post_de)
        vals = {
            "kernel_gap": float(np.abs(bank_rte.kernels
                                       - bank_de.kernels).max()),
            "map_gap": float(np.linalg.norm(g_rte.matrix - g_de.matrix,
                                            ord=2)),
            "hellinger": gaussian_hellinger(post_rte, post_de),
            "mean_gap": mean_gap,
            "cov_gap": cov_gap,
        }
        for k, v in vals.items():
            metric_values[k].append(v)
            rows.append((eps, k, v))
    _write_csv(out / "linearized.csv", rows)
    eps = np.array(config.epsilons)
    fp = fingerprint(config)
    studies, summary = [], {}
    for name, vals in metric_values.items():
        try:
            st = fit_rate(eps, np.array(vals), metric=name, fingerprint=fp)
            studies.append(st)
            summary[name] = {"slope": st.slope, "intercept": st.intercept,
                             "r2": st.r_squared, "n_points": st.n_points}
        except ValueError as exc:
            summary[name] = {"error": str(exc)}
            warnings.append(f"rate fit failed for {name}: {exc}")
    summary["tangent"] = _tangent_check(config, grid, quad, setup,
                                        background)
    _write_json(out / "linearized_summary.json", summary)
    write_log_log_plot(out / "linearized.svg",
                       [(k, eps, np.array(v))
                        for k, v in metric_values.items()],
                       title="linearized-model gaps vs epsilon")
    artifacts += ["linearized.csv", "linearized_summary.json",
                  "linearized.svg"]
    return _report(config, "linearized-compare", studies, warnings,
                   artifacts, t0, out)


def _tangent_check(config, grid, quad, setup, background) -> dict:
    """Linearization residual at full and halved perturbation amplitude."""
    from .bayes import _forward

    eps = config.epsilons[len(config.epsilons) // 2]
    rng = np.random.default_rng(np.random.SeedSequence(
        (config.master_seed, 0x7A6E)))
    w = 0.05 * rng.standard_normal(config.prior.n_modes)
    out = {}
    for model in ("rte", "de"):
        if model == "rte":
            bank = kernel_bank_rte(background, eps, setup, quad,
                                   threads=config.threads)
        else:
            bank = kernel_bank_de(background, setup)
        lm = linear_map(bank, config.prior)
        base = _forward(model, background, eps, setup, quad)
        errs = []
        for amp in (1.0, 0.5):
            med = medium_from_coefficients(config.prior, amp * w, grid)
            delta = (_forward(model, med, eps, setup, quad) - base).ravel()
            errs.append(float(np.linalg.norm(lm.apply(amp * w) - delta)))
        ratio = errs[0] / errs[1] if errs[1] > 0 else float("inf")
        out[model] = {"knudsen": eps, "residual_full": errs[0],
                      "residual_half": errs[1], "ratio": ratio}
    return out


RUNNERS = {
    "forward": run_forward,
    "rates": run_rates,
    "posterior-compare": run_posterior_compare,
    "linearized-compare": run_linearized_compare,
    "make-data": run_make_data,
}
