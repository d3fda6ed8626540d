"""End-to-end drivers for the 1-D study, the 2-D study and the verification suite.

Each driver writes a self-describing run directory (config echo, CSVs, SVGs,
``summary.json``) and returns a :class:`RunResult`.  Per-eps and per-seed runs
can be spread over worker processes; results do not depend on the worker count.
"""
from __future__ import annotations

import copy
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import report
from .config import ExperimentConfig, dump_config
from .core import generator_objective_divergence
from .distributions import LabeledDataset, gaussian_grid
from .divergence import LOG2
from .errors import ConfigError, GansslError
from .report import Series
from .training import covered_subdomains, data_density, train_gan_ssl_minimax, train_generator_direct
from .verification import (
    PropositionReport,
    check_assumption_coverage,
    decision_map,
    probe_assumption4,
    random_density_pair,
    random_logits,
    verify_lemma1,
    verify_prop1_closed_form,
    verify_prop2_decomposition,
)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3


@dataclass
class RunResult:
    out_dir: Path
    summary: dict
    exit_code: int = EXIT_OK
    reports: list = field(default_factory=list)


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        futures = [pool.submit(fn, *job) for job in jobs]
        return [f.result() for f in futures]


def _prepare(config: ExperimentConfig, out_dir, study: str):
    if config.study != study:
        config = copy.deepcopy(config)
        config.study = study
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report._write_text(out / "config.toml", dump_config(config))
    return out, config


def _eps_dirname(eps: float) -> str:
    return f"eps_{eps:g}"


# -- 1-D ----------------------------------------------------------------------------------

def _run_one_eps(config: ExperimentConfig, eps: float, out_dir: Path) -> dict:
    """Train one eps and write its subdirectory; returns the per-eps summary row."""
    rep = train_generator_direct(config, eps)
    sub = out_dir / _eps_dirname(eps)
    steps = rep.steps
    report.emit_table_csv(
        {"step": steps, "objective": rep.objective, "tv": rep.metric, "violations": rep.violations},
        sub / "history.csv",
    )
    density = rep.final["density"]
    report.emit_density_csv(density, sub / "final_density.csv")
    report.emit_svg_plot(
        [
            report.density_series(rep.final["data_density"], "p", "blue"),
            report.density_series(density, "p_G", "red"),
        ],
        sub / "plot_density.svg",
        title=f"eps = {eps:g}",
    )
    row = {
        "eps": float(eps),
        "tv": rep.final["tv"],
        "objective": rep.final["objective"],
        "violation_steps": rep.final["violation_steps"],
        "violation_fraction": rep.final["violation_steps"] / len(rep.steps),
    }
    report.emit_run_summary(report.build_summary("case1d", config, config.seed, {"tv_by_eps": [row]}), sub / "summary.json")
    return {**row, "density": density.array}


def _eps_reds(n: int):
    # darker red for larger eps
    return [f"#{int(255 - 140 * i / max(1, n - 1)):02x}{int(60 - 60 * i / max(1, n - 1)):02x}{0:02x}" for i in range(n)]


def run_case_study_1d(config: ExperimentConfig, out_dir) -> RunResult:
    """One direct C(G) run per eps with a shared seed, plus overlay plot and TV ordering."""
    if len(config.eps) == 0:
        raise ConfigError("eps list must not be empty for the case1d study")
    out, config = _prepare(config, out_dir, "case1d")
    eps_list = sorted(float(e) for e in config.eps)
    if len(set(eps_list)) != len(eps_list):
        raise ConfigError("eps list contains duplicates")
    p = data_density(config)
    report.emit_density_csv(p, out / "data_density.csv")

    rows, error = [], None
    try:
        rows = _map(_run_one_eps, [(config, e, out) for e in eps_list], config.workers)
    except GansslError as exc:
        error = exc
        # keep whatever per-eps runs finished
        for e in eps_list:
            path = out / _eps_dirname(e) / "summary.json"
            if path.exists():
                rows.append(json.loads(path.read_text())["metrics"]["tv_by_eps"][0])

    tvs = [r["tv"] for r in rows]
    metrics = {
        "tv_by_eps": [{k: v for k, v in r.items() if k != "density"} for r in rows],
        "tv_strictly_increasing": bool(all(a < b for a, b in zip(tvs, tvs[1:]))) if error is None else False,
        "data": {"mean": config.case1d.data_mean, "std": config.case1d.data_std},
    }
    summary = report.build_summary(
        "case1d", config, config.seed, metrics, status="failed" if error else "complete"
    )
    if error is not None:
        summary["error"] = str(error)
    report.emit_run_summary(summary, out / "summary.json")
    if error is not None:
        raise error

    grid = gaussian_grid(config.case1d.data_mean, config.case1d.data_std, config.grid.lower, config.grid.upper, config.grid.cells)
    series = [report.density_series(p, "p", "blue")]
    for r, color in zip(rows, _eps_reds(len(rows))):
        series.append(Series(f"p_G (eps={r['eps']:g})", grid.axes()[0], r["density"], color))
    report.emit_svg_plot(series, out / "plot_densities.svg", title="data and generator densities")
    return RunResult(out, summary)


# -- 2-D ----------------------------------------------------------------------------------

def _check_scenario(config: ExperimentConfig, scenario: str) -> dict:
    if scenario not in ("satisfied", "violated"):
        raise ConfigError(f"scenario must be satisfied or violated, got {scenario!r}")
    names = [d.name for d in config.manifold.build().discs]
    if scenario == "violated":
        unknown = [n for n in config.case2d.uncovered if n not in names]
        if not config.case2d.uncovered or unknown:
            raise ConfigError(f"violated scenario needs known uncovered subdomains, got {config.case2d.uncovered}")
    if config.case2d.labeled_per_subdomain < 1:
        raise ConfigError("case2d.labeled_per_subdomain must be at least 1 for either scenario")
    return {"covered": covered_subdomains(config, scenario)}


def _run_one_seed(config: ExperimentConfig, scenario: str, seed: int, out_dir: Path) -> dict:
    c = config.case2d
    rep = train_gan_ssl_minimax(config, scenario, seed)
    sub = out_dir / f"seed_{seed}"
    manifold = rep.final["manifold"]
    xl, yl = rep.final["labeled"]
    xu = rep.final["unlabeled"]
    coverage = check_assumption_coverage(LabeledDataset.build(xl, yl, xu), manifold)
    if coverage["satisfied"] != (scenario == "satisfied"):
        raise ConfigError(f"coverage report {coverage['counts']} is inconsistent with scenario {scenario!r}")

    steps = rep.steps
    report.emit_table_csv(
        {
            "step": steps,
            "objective": rep.objective,
            "generator_objective": rep.final["generator_objective"],
            "accuracy": rep.metric,
        },
        sub / "history.csv",
    )
    D, G = rep.params["discriminator"], rep.params["generator"]
    lo, hi = manifold.bounding_box(margin=0.5)
    pts, cls, fake = decision_map(D, lo, hi, c.map_cells)
    report.emit_table_csv({"x": pts[:, 0], "y": pts[:, 1], "class": cls, "fake_prob": fake}, sub / "decision_map.csv")
    report.emit_points_csv(xl, sub / "labeled.csv", yl)
    if len(xu):
        report.emit_points_csv(xu, sub / "unlabeled.csv")

    outside = {}
    for step, sample in sorted(rep.snapshots.items()):
        report.emit_points_csv(sample, sub / f"generated_{step}.csv")
        outside[str(step)] = float(np.mean(manifold.locate(sample) == -1))

    probe = {"n_outside": 0, "n_pairs": 0, "residuals": [], "alphas": []}
    if rep.snapshots:
        last = rep.snapshots[max(rep.snapshots)]
        probe = probe_assumption4(D, last, manifold, LabeledDataset.build(xl, yl), xu if len(xu) else xl)
        if probe["residuals"]:
            report.emit_table_csv({"residual": probe["residuals"], "alpha": probe["alphas"]}, sub / "probe_residuals.csv")
            counts, edges = np.histogram(probe["residuals"], bins=10)
            probe["histogram"] = {"counts": counts.tolist(), "edges": edges.tolist()}

    series = []
    if rep.snapshots:
        last = rep.snapshots[max(rep.snapshots)]
        series.append(Series("generated", last[:, 0], last[:, 1], "blue", "scatter", "dot"))
    real = xu if len(xu) else xl
    series.append(Series("real", real[:, 0], real[:, 1], "gray", "scatter", "cross"))
    series.append(Series("labeled", xl[:, 0], xl[:, 1], "black", "scatter", "dot"))
    report.emit_svg_plot(series, sub / "plot_samples.svg", title=f"{scenario}, seed {seed}", ylabel="y")

    coarse = max(2, min(c.map_cells, 40))
    cpts, ccls, _ = decision_map(D, lo, hi, coarse)
    colors = {1: "#1f77b4", 2: "#d62728"}
    dseries = [
        Series(f"class {k}", cpts[ccls == k, 0], cpts[ccls == k, 1], colors.get(k, "black"), "scatter", "dot")
        for k in sorted(set(ccls.tolist()))
    ]
    report.emit_svg_plot(dseries, sub / "plot_decision.svg", title="decision regions", ylabel="y")

    row = {
        "seed": int(seed),
        "accuracy": rep.final["accuracy"],
        "min_accuracy": min(rep.final["accuracy"].values()),
        "final_objective": float(rep.objective[-1]),
        "outside_fraction": outside,
        "probe": {k: v for k, v in probe.items() if k not in ("residuals", "alphas")},
        "coverage": coverage,
    }
    report.emit_run_summary(
        report.build_summary("case2d", config, seed, {"scenario": scenario, "coverage": coverage, "accuracy_by_seed": [row]}),
        sub / "summary.json",
    )
    return row


def run_case_study_2d(config: ExperimentConfig, out_dir, scenario: str | None = None) -> RunResult:
    """``case2d.replicates`` minimax runs (seeds ``seed, seed+1, ...``) for one scenario."""
    scenario = scenario or config.case2d.scenario
    config = copy.deepcopy(config)
    config.case2d.scenario = scenario
    _check_scenario(config, scenario)
    out, config = _prepare(config, out_dir, "case2d")
    seeds = [config.seed + i for i in range(config.case2d.replicates)]
    rows = _map(_run_one_seed, [(config, scenario, s, out) for s in seeds], config.workers)

    names = [d.name for d in config.manifold.build().discs]
    by_sub = {n: [r["accuracy"][n] for r in rows] for n in names}
    metrics = {
        "scenario": scenario,
        "coverage": rows[0]["coverage"],
        "accuracy_by_seed": rows,
        "accuracy_by_subdomain": by_sub,
        "accuracy_range": {n: max(v) - min(v) for n, v in by_sub.items()},
        "min_accuracy": {n: min(v) for n, v in by_sub.items()},
    }
    summary = report.build_summary("case2d", config, config.seed, metrics, status="complete")
    report.emit_run_summary(summary, out / "summary.json")
    return RunResult(out, summary)


# -- verification suite ---------------------------------------------------------------------

def known_optimum_report(config: ExperimentConfig) -> PropositionReport:
    """C(p, p, 0) = -2 log 2 and a scan over N(mu, s^2) minimized at the data std."""
    c, g = config.case1d, config.grid
    p = gaussian_grid(c.data_mean, c.data_std, g.lower, g.upper, g.cells)
    at_p = float(generator_objective_divergence(p, p, 0.0))
    identity_gap = abs(at_p + 2.0 * LOG2)
    step = 0.01
    scales = c.data_std + step * np.arange(-30, 31)
    scales = scales[scales > step / 2]
    values = [float(generator_objective_divergence(p, gaussian_grid(c.data_mean, s, g.lower, g.upper, g.cells), 0.0)) for s in scales]
    best = float(scales[int(np.argmin(values))])
    scan_ok = abs(best - c.data_std) <= step + 1e-12
    ok = identity_gap <= 1e-12 and scan_ok
    return PropositionReport(
        proposition="known_optimum",
        status="pass" if ok else "fail",
        max_residual=identity_gap,
        tolerance=1e-12,
        oracle="-2 log 2 constant; argmin over a scale scan of the Gaussian family",
        inputs={"data_std": c.data_std, "scan_step": step, "scan_min": float(scales[0]), "scan_max": float(scales[-1])},
        details={"objective_at_p": at_p, "argmin_scale": best},
        reason="" if scan_ok else f"scan minimized at s={best:g}, not {c.data_std:g}",
    )


def verification_reports(config: ExperimentConfig) -> list[PropositionReport]:
    v, g = config.verify, config.grid
    rng = np.random.default_rng(config.seed)
    grid = dict(lower=g.lower, upper=g.upper, cells=g.cells)
    reports = []
    for _ in range(v.n_pairs):
        p, q = random_density_pair(rng, **grid)
        for eps in v.eps:
            reports.append(verify_prop2_decomposition(p, q, eps))
    pairs = [(gaussian_grid(0.0, 0.4, **grid), gaussian_grid(0.3, 0.5, **grid))]
    pairs += [random_density_pair(rng, **grid) for _ in range(v.n_prop1_pairs)]
    for p, q in pairs:
        reports.append(verify_prop1_closed_form(p, q, rng=rng, n_classes=v.n_classes, corrupt=v.corrupt_closed_form))
    for _ in range(v.n_lemma1_fields):
        p, q = random_density_pair(rng, **grid)
        reports.append(verify_lemma1(random_logits(rng, g.cells, v.n_classes), p, q))
    reports.append(known_optimum_report(config))
    return reports


def run_verification_suite(config: ExperimentConfig, out_dir) -> RunResult:
    out, config = _prepare(config, out_dir, "verify")
    reports = verification_reports(config)
    report.emit_json([r.to_dict() for r in reports], out / "verification.json")
    summary = report.verification_summary(config, reports)
    summary["status"] = "complete"
    report.emit_run_summary(summary, out / "summary.json")
    code = EXIT_OK if summary["failures"] == 0 else EXIT_VERIFY
    return RunResult(out, summary, code, reports)
