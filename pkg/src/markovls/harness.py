"""Seeded Monte Carlo sweeps over rollout counts or horizons."""

from __future__ import annotations

import csv
import datetime
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import ConfigError, MarkovLSError
from .estimators import ols, optimal_weighting, wls, wls_estimated
from .model import StateSpaceModel
from .presets import resolve_system
from .rollout import SimConfig, simulate

__all__ = [
    "ESTIMATOR_TAGS",
    "ExperimentConfig",
    "TrialResult",
    "RateFit",
    "ExperimentReport",
    "run_trial",
    "run_experiment",
    "fit_rate",
    "gap_decay",
]

ESTIMATOR_TAGS = ("ols", "wls-optimal", "wls-estimated-recursive",
                  "wls-estimated-hokalman")
ESTIMATED_TAGS = ("wls-estimated-recursive", "wls-estimated-hokalman")

GAP_DEGENERATE_LEVEL = 1e-12


@dataclass(frozen=True)
class ExperimentConfig:
    """A full sweep description: system, sweep axis, trials and seeds."""

    system: object = "siso-paper"
    sweep_axis: str = "N"
    sweep_values: tuple = (50, 100, 150, 200, 250, 300, 350, 400, 450, 500)
    fixed_horizon: int = 10
    fixed_rollouts: int = 200
    trials: int = 50
    base_seed: int = 0
    estimators: tuple = ESTIMATOR_TAGS
    predictor_mode: str = "strict"
    sigma_u: float = 1.0
    sigma_e: float = 1.0
    draw_gain: bool = False
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "sweep_values", tuple(int(v) for v in self.sweep_values))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.sweep_axis not in ("N", "T"):
            raise ConfigError("sweep_axis must be 'N' or 'T'")
        vals = self.sweep_values
        if not vals or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("sweep_values must be non-empty and strictly increasing")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        unknown = [t for t in self.estimators if t not in ESTIMATOR_TAGS]
        if unknown:
            raise ConfigError(f"unknown estimators {unknown}; known: {ESTIMATOR_TAGS}")
        if self.predictor_mode not in ("strict", "paper-literal"):
            raise ConfigError("predictor_mode must be 'strict' or 'paper-literal'")
        if self.base_seed < 0:
            raise ConfigError("base_seed must be non-negative")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        try:
            resolve_system(self.system)  # fail early on bad system descriptions
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        try:
            sweep = doc.get("sweep", {})
            kwargs = {
                "system": doc.get("system", "siso-paper"),
                "sweep_axis": sweep.get("axis", "N"),
                "sweep_values": tuple(sweep.get("values", cls.sweep_values)),
                "trials": doc.get("trials", 50),
                "base_seed": doc.get("seed", 0),
                "estimators": tuple(doc.get("estimators", ESTIMATOR_TAGS)),
                "predictor_mode": doc.get("predictor_mode", "strict"),
                "sigma_u": doc.get("sigma_u", 1.0),
                "sigma_e": doc.get("sigma_e", 1.0),
                "draw_gain": doc.get("draw_gain", False),
                "threads": doc.get("threads", 1),
            }
            if "fixed_T" in sweep:
                kwargs["fixed_horizon"] = int(sweep["fixed_T"])
            if "fixed_N" in sweep:
                kwargs["fixed_rollouts"] = int(sweep["fixed_N"])
        except (TypeError, KeyError, AttributeError) as exc:
            raise ConfigError(f"malformed experiment config: {exc}") from exc
        return cls(**kwargs)

    def to_dict(self) -> dict:
        sweep = {"axis": self.sweep_axis, "values": list(self.sweep_values)}
        if self.sweep_axis == "N":
            sweep["fixed_T"] = self.fixed_horizon
        else:
            sweep["fixed_N"] = self.fixed_rollouts
        system = self.system
        if isinstance(system, StateSpaceModel):
            system = {k: getattr(system, k).tolist() for k in "ABCDK"}
        return {
            "system": system,
            "sweep": sweep,
            "trials": self.trials,
            "seed": self.base_seed,
            "estimators": list(self.estimators),
            "predictor_mode": self.predictor_mode,
            "sigma_u": self.sigma_u,
            "sigma_e": self.sigma_e,
            "draw_gain": self.draw_gain,
            "threads": self.threads,
        }


@dataclass(frozen=True)
class TrialResult:
    """Per-estimator outcome of one paired trial on one shared dataset."""

    errors: dict
    gaps: dict
    statuses: dict
    seed: int


def run_trial(system: StateSpaceModel, n_rollouts: int, horizon: int, seed: int,
              estimators=ESTIMATOR_TAGS, sigma_u: float = 1.0, sigma_e: float = 1.0,
              predictor_mode: str = "strict", n_x: int | None = None) -> TrialResult:
    """Simulate one dataset and run every requested estimator on it.

    The dataset is shared across estimators (paired design), so estimator
    comparisons are not diluted by independent sampling noise. Failures are
    recorded per estimator instead of aborting the trial.
    """
    unknown = [t for t in estimators if t not in ESTIMATOR_TAGS]
    if unknown:
        raise ConfigError(f"unknown estimators {unknown}; known: {ESTIMATOR_TAGS}")
    errors: dict = {}
    gaps: dict = {}
    statuses: dict = {}
    markov: dict = {}
    try:
        data = simulate(system, SimConfig(n_rollouts=n_rollouts, horizon=horizon,
                                          sigma_u=sigma_u, sigma_e=sigma_e, seed=seed))
    except MarkovLSError as exc:
        for tag in estimators:
            errors[tag] = None
            statuses[tag] = f"failed:{type(exc).__name__}"
        return TrialResult(errors=errors, gaps=gaps, statuses=statuses, seed=seed)

    for tag in estimators:
        try:
            if tag == "ols":
                report = ols(data)
            elif tag == "wls-optimal":
                report = wls(data, optimal_weighting(system, horizon))
            elif tag == "wls-estimated-recursive":
                report = wls_estimated(data, "recursive", mode=predictor_mode)
            else:
                report = wls_estimated(data, "ho-kalman",
                                       n_x=n_x if n_x is not None else system.n_x,
                                       mode=predictor_mode)
        except (MarkovLSError, np.linalg.LinAlgError) as exc:
            errors[tag] = None
            statuses[tag] = f"failed:{type(exc).__name__}"
            continue
        errors[tag] = report.relative_error
        statuses[tag] = "ok"
        markov[tag] = report.markov

    if "wls-optimal" in markov:
        for tag in ESTIMATED_TAGS:
            if tag in markov:
                gaps[tag] = float(np.linalg.norm(markov[tag] - markov["wls-optimal"], 2))
    return TrialResult(errors=errors, gaps=gaps, statuses=statuses, seed=seed)


@dataclass(frozen=True)
class RateFit:
    """Log-log slope fit with a 95% half-width from the slope's standard error."""

    slope: float
    intercept: float
    half_width: float
    n_points: int

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "half_width": self.half_width, "n_points": self.n_points}


def fit_rate(points) -> RateFit:
    """Fit ``log(error) = slope * log(x) + intercept`` over sweep points."""
    points = [(float(x), float(y)) for x, y in points]
    if len(points) < 4:
        raise ValueError("rate fitting needs at least 4 points")
    if any(y <= 0 for _, y in points):
        raise ValueError("rate fitting needs strictly positive error values")
    log_x = np.log([x for x, _ in points])
    log_y = np.log([y for _, y in points])
    fit = stats.linregress(log_x, log_y)
    stderr = float(fit.stderr) if np.isfinite(fit.stderr) else 0.0
    half = float(stats.t.ppf(0.975, len(points) - 2)) * stderr
    return RateFit(slope=float(fit.slope), intercept=float(fit.intercept),
                   half_width=half, n_points=len(points))


@dataclass
class ExperimentReport:
    """All per-trial rows plus their aggregates, slope fits and exclusions."""

    config: dict
    sweep_axis: str
    rows: list = field(default_factory=list)        # (value, trial, tag, err, status)
    gap_rows: list = field(default_factory=list)    # (value, trial, tag, gap)
    aggregates: list = field(default_factory=list)  # dicts per (value, tag)
    gap_means: list = field(default_factory=list)   # dicts per (value, tag)
    rate_fits: dict = field(default_factory=dict)
    gap_rate_fits: dict = field(default_factory=dict)
    invalid_points: list = field(default_factory=list)
    excluded: int = 0

    def mean_error(self, value, tag):
        for row in self.aggregates:
            if row["sweep_axis_value"] == value and row["estimator"] == tag:
                return row["mean"]
        raise KeyError(f"no aggregate for ({value}, {tag})")

    def mean_gap(self, value, tag):
        for row in self.gap_means:
            if row["sweep_axis_value"] == value and row["estimator"] == tag:
                return row["mean"]
        raise KeyError(f"no gap aggregate for ({value}, {tag})")

    def results_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["sweep_axis_value", "trial", "estimator",
                         "relative_error", "status"])
        for value, trial, tag, err, status in self.rows:
            writer.writerow([value, trial, tag, "" if err is None else repr(err), status])
        return buf.getvalue()

    def summary_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["sweep_axis_value", "estimator", "mean", "variance", "count"])
        for row in self.aggregates:
            writer.writerow([row["sweep_axis_value"], row["estimator"],
                             "" if row["mean"] is None else repr(row["mean"]),
                             "" if row["variance"] is None else repr(row["variance"]),
                             row["count"]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "sweep_axis": self.sweep_axis,
            "rows": [list(r) for r in self.rows],
            "gap_rows": [list(r) for r in self.gap_rows],
            "aggregates": self.aggregates,
            "gap_means": self.gap_means,
            "rate_fits": {k: (v.to_dict() if isinstance(v, RateFit) else v)
                          for k, v in self.rate_fits.items()},
            "gap_rate_fits": {k: (v.to_dict() if isinstance(v, RateFit) else v)
                              for k, v in self.gap_rate_fits.items()},
            "invalid_points": self.invalid_points,
            "excluded": self.excluded,
        }

    def write(self, out_dir) -> dict:
        """Write results.csv, summary.csv, report.json and meta.json.

        Only meta.json carries a timestamp, so the other three files are
        byte-identical across reruns of the same configuration.
        """
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "results": out / "results.csv",
            "summary": out / "summary.csv",
            "report": out / "report.json",
            "meta": out / "meta.json",
        }
        paths["results"].write_text(self.results_csv_text())
        paths["summary"].write_text(self.summary_csv_text())
        paths["report"].write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        from . import __version__
        meta = {
            "config": self.config,
            "seed": self.config.get("seed"),
            "version": __version__,
            "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }
        paths["meta"].write_text(json.dumps(meta, indent=2) + "\n")
        return {k: str(v) for k, v in paths.items()}


def _trial_system(cfg: ExperimentConfig, gain_seed) -> StateSpaceModel:
    system = resolve_system(cfg.system)
    if cfg.draw_gain:
        rng = np.random.default_rng(gain_seed)
        gain = rng.integers(-2, 3, size=(system.n_x, system.n_y)).astype(float)
        system = StateSpaceModel(A=system.A, B=system.B, C=system.C,
                                 D=system.D, K=gain)
    return system


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run the whole sweep and aggregate it deterministically.

    Each (point, trial) pair gets its own seed derived from the base seed,
    so results do not depend on execution order or thread count; failed
    trials are excluded from the aggregates and counted.
    """
    points = list(enumerate(cfg.sweep_values))
    tasks = [(pi, value, ti) for pi, value in points for ti in range(cfg.trials)]

    def one(task):
        pi, value, ti = task
        seq = np.random.SeedSequence(entropy=cfg.base_seed, spawn_key=(pi, ti))
        data_seed, gain_seed = (int(s) for s in seq.generate_state(2, np.uint64))
        system = _trial_system(cfg, gain_seed)
        n = value if cfg.sweep_axis == "N" else cfg.fixed_rollouts
        horizon = value if cfg.sweep_axis == "T" else cfg.fixed_horizon
        return task, run_trial(system, n, horizon, data_seed,
                               estimators=cfg.estimators, sigma_u=cfg.sigma_u,
                               sigma_e=cfg.sigma_e, predictor_mode=cfg.predictor_mode)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            outcomes = dict(pool.map(one, tasks))
    else:
        outcomes = dict(map(one, tasks))

    report = ExperimentReport(config=cfg.to_dict(), sweep_axis=cfg.sweep_axis)
    for pi, value, ti in tasks:
        result = outcomes[(pi, value, ti)]
        for tag in cfg.estimators:
            report.rows.append((value, ti, tag, result.errors.get(tag),
                                result.statuses.get(tag, "failed:missing")))
        for tag, gap in sorted(result.gaps.items()):
            report.gap_rows.append((value, ti, tag, gap))

    for _, value in points:
        point_ok = 0
        for tag in cfg.estimators:
            errs = [err for v, _, t, err, status in report.rows
                    if v == value and t == tag and status == "ok"]
            failed = cfg.trials - len(errs)
            report.excluded += failed
            point_ok += len(errs)
            mean = float(np.mean(errs)) if errs else None
            var = float(np.var(errs, ddof=1)) if len(errs) >= 2 else None
            report.aggregates.append({
                "sweep_axis_value": value, "estimator": tag, "mean": mean,
                "variance": var, "count": len(errs), "excluded": failed,
            })
        if point_ok == 0:
            report.invalid_points.append(value)
        for tag in ESTIMATED_TAGS:
            gaps = [g for v, _, t, g in report.gap_rows if v == value and t == tag]
            if gaps:
                report.gap_means.append({
                    "sweep_axis_value": value, "estimator": tag,
                    "mean": float(np.mean(gaps)), "count": len(gaps),
                })

    if cfg.sweep_axis == "N" and len(cfg.sweep_values) >= 4:
        for tag in cfg.estimators:
            means = [(row["sweep_axis_value"], row["mean"])
                     for row in report.aggregates if row["estimator"] == tag]
            if all(m is not None and m > 0 for _, m in means):
                report.rate_fits[tag] = fit_rate(means)
        report.gap_rate_fits = fit_gap_rates(report.gap_means)
    return report


def fit_gap_rates(gap_means) -> dict:
    """Rate fits of the mean weighting gaps, one per estimated tag.

    A tag whose gaps all sit at numerical zero gets the marker string
    ``"degenerate"`` instead of a meaningless log-log fit.
    """
    fits: dict = {}
    for tag in ESTIMATED_TAGS:
        means = [(row["sweep_axis_value"], row["mean"])
                 for row in gap_means if row["estimator"] == tag]
        if len(means) < 4:
            continue
        if max(m for _, m in means) <= GAP_DEGENERATE_LEVEL:
            fits[tag] = "degenerate"
        else:
            fits[tag] = fit_rate(means)
    return fits


def gap_decay(cfg: ExperimentConfig, report: ExperimentReport | None = None) -> dict:
    """Rate fits of the optimal-vs-estimated weighting gap, per estimated tag.

    Runs the experiment unless an existing report is supplied. A tag whose
    mean gaps all sit at numerical zero is flagged ``"degenerate"`` instead
    of being fitted.
    """
    if "wls-optimal" not in cfg.estimators or not any(
            t in cfg.estimators for t in ESTIMATED_TAGS):
        raise ConfigError("gap decay needs wls-optimal plus an estimated variant")
    if report is None:
        report = run_experiment(cfg)
    if not report.gap_rate_fits:
        raise ValueError("no gap rate fits available; need an N-sweep with >= 4 points")
    return dict(report.gap_rate_fits)
