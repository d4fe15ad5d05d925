"""Command-line interface: simulate, estimate, bounds, benchmark, extract."""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import BoundInputs, evaluate_bounds
from .errors import (ConfigError, IllConditionedError, MarkovLSError,
                     SimulationOverflowError)
from .estimators import ols, optimal_weighting, wls, wls_estimated
from .harness import ESTIMATOR_TAGS, ExperimentConfig, run_experiment
from .model import (markov_noise, predictor_markov, system_from_json,
                    to_predictor)
from .presets import PRESET_NAMES, resolve_system
from .rollout import RolloutDataset, SimConfig, simulate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIMULATION = 3
EXIT_NUMERICS = 4
EXIT_EXPERIMENT = 5

OUTDIR_ENV = "MARKOVLS_OUTDIR"
THREADS_ENV = "MARKOVLS_THREADS"


def _resolve_out(path: str | None, default_name: str) -> Path:
    if path is not None:
        return Path(path)
    base = os.environ.get(OUTDIR_ENV)
    return Path(base) / default_name if base else Path(default_name)


def _thread_cap(requested: int) -> int:
    cap = os.environ.get(THREADS_ENV)
    if cap is not None:
        try:
            return max(1, min(requested, int(cap)))
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV} must be an integer: {exc}") from exc
    return requested


def _load_system(source: str):
    if source in PRESET_NAMES:
        return resolve_system(source)
    path = Path(source)
    if path.exists():
        return system_from_json(path.read_text())
    raise ConfigError(f"--system must be one of {PRESET_NAMES} or a JSON file, "
                      f"got {source!r}")


def _echo(args: argparse.Namespace, skip=("func",)) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    print("resolved configuration: " + json.dumps(resolved, default=str))


def _cmd_simulate(args) -> int:
    system = _load_system(args.system)
    cfg = SimConfig(n_rollouts=args.n, horizon=args.t, sigma_u=args.sigma_u,
                    sigma_e=args.sigma_e, seed=args.seed)
    _echo(args)
    data = simulate(system, cfg)
    out = _resolve_out(args.out, "dataset")
    paths = data.write_files(out, include_innovations=args.include_innovations)
    gram = data.input_stack @ data.input_stack.T
    lam_min = float(np.linalg.eigvalsh(gram)[0])
    threshold = 0.25 * args.sigma_u**2 * args.n
    print(f"wrote {paths['dataset']} and {paths['manifest']}")
    print(f"lambda_min(U U^T) = {lam_min:.6g} "
          f"(excitation threshold 0.25*sigma_u^2*N = {threshold:.6g})")
    return EXIT_OK


def _load_dataset(args) -> RolloutDataset:
    src = Path(args.in_path)
    csv_path = src / "dataset.csv" if src.is_dir() else src
    if not csv_path.exists():
        raise ConfigError(f"dataset file {csv_path} does not exist")
    config = None
    manifest_path = csv_path.parent / "manifest.json"
    if manifest_path.exists():
        doc = json.loads(manifest_path.read_text())
        if "config" in doc:
            config = SimConfig(**doc["config"])
    data = RolloutDataset.from_csv(csv_path, config=config)
    if args.system is not None:
        system = _load_system(args.system)
        data = RolloutDataset.from_sequences(data.u, data.y, data.e,
                                             config=config, system=system)
    return data


def _cmd_estimate(args) -> int:
    _echo(args)
    if args.in_path is not None:
        data = _load_dataset(args)
    else:
        if args.system is None:
            raise ConfigError("estimate needs either --in or --system")
        system = _load_system(args.system)
        cfg = SimConfig(n_rollouts=args.n, horizon=args.t, sigma_u=args.sigma_u,
                        sigma_e=args.sigma_e, seed=args.seed)
        data = simulate(system, cfg)

    if args.method == "ols":
        report = ols(data)
    elif args.method == "wls-optimal":
        if data.system is None:
            raise ConfigError("optimal weighting needs the true model; "
                              "pass --system alongside the dataset")
        report = wls(data, optimal_weighting(data.system, data.horizon))
    elif args.method == "wls-estimated":
        n_x = args.nx
        if args.extraction == "ho-kalman" and n_x is None and data.system is None:
            raise ConfigError("ho-kalman extraction needs --nx when the true "
                              "model is unknown")
        report = wls_estimated(data, method=args.extraction, n_x=n_x,
                               mode=args.predictor_mode)
    else:  # argparse restricts choices; defend anyway
        raise ConfigError(f"unknown method {args.method!r}")

    out = _resolve_out(args.out, "estimate-report.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json() + "\n")
    print(f"wrote {out}")
    if report.relative_error is not None:
        print(f"relative error (spectral): {report.relative_error:.6g}")
    else:
        print("relative error unavailable (true model unknown)")
    return EXIT_OK


def _cmd_bounds(args) -> int:
    _echo(args)
    inp = BoundInputs(n_u=args.nu, n_y=args.ny, horizon=args.t, delta=args.delta,
                      h_norm=args.h_norm, sigma_u=args.sigma_u,
                      sigma_e=args.sigma_e, n_rollouts=args.n)
    report = evaluate_bounds(inp)
    fmt = "{:<22}{:>16}{:>16}"
    print(fmt.format("quantity", "ols", "wls"))
    print(fmt.format("N_min", f"{report.n_min_ols:.4f}", f"{report.n_min_wls:.4f}"))
    print(fmt.format("C", f"{report.c_ols:.4f}", f"{report.c_wls:.4f}"))
    print(fmt.format(f"bound at N={args.n}",
                     f"{report.bound_ols:.4f}" if report.bound_ols is not None else "n/a",
                     f"{report.bound_wls:.4f}" if report.bound_wls is not None else "n/a"))
    print(fmt.format("feasible",
                     "yes" if report.feasible_ols else "no",
                     "yes" if report.feasible_wls else "no"))
    if args.out is not None:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(report.to_json() + "\n")
        print(f"wrote {out}")
    return EXIT_OK


def _cmd_extract(args) -> int:
    from .extraction import ho_kalman_extract, recursive_extract

    _echo(args)
    truth = None
    if args.in_path is not None:
        doc = json.loads(Path(args.in_path).read_text())
        if "blocks" not in doc:
            raise ConfigError("extraction input JSON needs a 'blocks' field "
                              "(increasing-power order)")
        blocks = [np.asarray(b, dtype=float) for b in doc["blocks"]]
    elif args.system is not None:
        system = _load_system(args.system)
        _, noise_seq = predictor_markov(to_predictor(system), args.t)
        blocks = list(noise_seq.blocks[:-1])[::-1]
        truth = list(markov_noise(system, args.t).blocks[1:])
        if args.nx is None:
            args.nx = system.n_x
    else:
        raise ConfigError("extract needs either --in or --system")

    diagnostics = {}
    if args.method == "recursive":
        out_blocks = recursive_extract(blocks, count=args.count)
    else:
        if args.nx is None:
            raise ConfigError("ho-kalman extraction needs --nx")
        out_blocks, realization = ho_kalman_extract(blocks, args.nx,
                                                    count=args.count,
                                                    return_realization=True)
        diagnostics = realization.to_dict()

    doc = {"method": args.method,
           "blocks": [b.tolist() for b in out_blocks],
           "diagnostics": diagnostics}
    if truth is not None:
        dev = max(float(np.abs(a - b).max())
                  for a, b in zip(out_blocks, truth))
        doc["max_abs_deviation_from_truth"] = dev
        print(f"max abs deviation from the true open-loop blocks: {dev:.3e}")
    out = _resolve_out(args.out, "extraction.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=2) + "\n")
    print(f"wrote {out}")
    return EXIT_OK


def _bundled_config(name: str) -> dict | None:
    stem = name[:-5] if name.endswith(".json") else name
    ref = resources.files("markovls") / "configs" / f"{stem}.json"
    if ref.is_file():
        return json.loads(ref.read_text())
    return None


def _cmd_benchmark(args) -> int:
    doc = _bundled_config(args.config)
    if doc is None:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config {args.config!r} is neither bundled nor a file")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"malformed JSON in {path} at line {exc.lineno} column {exc.colno}: "
                f"{exc.msg}") from exc

    if args.trials is not None:
        doc["trials"] = args.trials
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.points is not None:
        doc.setdefault("sweep", {})
        doc["sweep"]["values"] = doc["sweep"]["values"][:args.points]
    if args.system is not None:
        if args.system in PRESET_NAMES:
            doc["system"] = args.system
        else:
            model = _load_system(args.system)
            doc["system"] = {k: getattr(model, k).tolist() for k in "ABCDK"}
    if args.estimators is not None:
        doc["estimators"] = [e.strip() for e in args.estimators.split(",") if e.strip()]
    if args.predictor_mode is not None:
        doc["predictor_mode"] = args.predictor_mode
    if args.sigma_u is not None:
        doc["sigma_u"] = args.sigma_u
    if args.sigma_e is not None:
        doc["sigma_e"] = args.sigma_e
    if args.threads is not None:
        doc["threads"] = args.threads
    doc["threads"] = _thread_cap(int(doc.get("threads", 1)))

    cfg = ExperimentConfig.from_dict(doc)
    print("resolved configuration: " + json.dumps(cfg.to_dict()))
    report = run_experiment(cfg)
    out = _resolve_out(args.out, "benchmark")
    paths = report.write(out)
    print(f"wrote {', '.join(sorted(paths.values()))}")

    fmt = "{:>6}  {:<26}{:>12}{:>12}{:>7}"
    print(fmt.format(cfg.sweep_axis, "estimator", "mean", "variance", "count"))
    for row in report.aggregates:
        print(fmt.format(row["sweep_axis_value"], row["estimator"],
                         "n/a" if row["mean"] is None else f"{row['mean']:.5f}",
                         "n/a" if row["variance"] is None else f"{row['variance']:.2e}",
                         row["count"]))
    for tag, fit in report.rate_fits.items():
        print(f"rate fit {tag}: slope {fit.slope:+.3f} (+/- {fit.half_width:.3f})")
    for tag, fit in report.gap_rate_fits.items():
        if isinstance(fit, str):
            print(f"gap rate fit {tag}: {fit}")
        else:
            print(f"gap rate fit {tag}: slope {fit.slope:+.3f} "
                  f"(+/- {fit.half_width:.3f})")
    if report.invalid_points:
        print(f"invalid sweep points (all trials failed): {report.invalid_points}",
              file=sys.stderr)
        return EXIT_EXPERIMENT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="markovls",
        description="Identify LTI Markov parameters from multiple rollouts.")
    parser.add_argument("--version", action="version", version=f"markovls {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a seeded rollout dataset")
    p_sim.add_argument("--system", required=True,
                       help=f"preset ({', '.join(PRESET_NAMES)}) or JSON file")
    p_sim.add_argument("--n", type=int, required=True, help="number of rollouts")
    p_sim.add_argument("--t", type=int, required=True, help="rollout horizon")
    p_sim.add_argument("--sigma-u", type=float, default=1.0, dest="sigma_u")
    p_sim.add_argument("--sigma-e", type=float, default=1.0, dest="sigma_e")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--include-innovations", action="store_true",
                       dest="include_innovations")
    p_sim.add_argument("--out", default=None, help="output directory")
    p_sim.set_defaults(func=_cmd_simulate)

    p_est = sub.add_parser("estimate", help="estimate Markov parameters")
    p_est.add_argument("--in", dest="in_path", default=None,
                       help="dataset directory or CSV file")
    p_est.add_argument("--system", default=None)
    p_est.add_argument("--n", type=int, default=100)
    p_est.add_argument("--t", type=int, default=10)
    p_est.add_argument("--sigma-u", type=float, default=1.0, dest="sigma_u")
    p_est.add_argument("--sigma-e", type=float, default=1.0, dest="sigma_e")
    p_est.add_argument("--seed", type=int, default=0)
    p_est.add_argument("--method", required=True,
                       choices=["ols", "wls-optimal", "wls-estimated"])
    p_est.add_argument("--predictor-mode", default="strict", dest="predictor_mode",
                       choices=["strict", "paper-literal"])
    p_est.add_argument("--extraction", default="recursive",
                       choices=["recursive", "ho-kalman"])
    p_est.add_argument("--nx", type=int, default=None)
    p_est.add_argument("--out", default=None, help="report JSON path")
    p_est.set_defaults(func=_cmd_estimate)

    p_bnd = sub.add_parser("bounds", help="evaluate finite-sample bound constants")
    p_bnd.add_argument("--nu", type=int, default=1)
    p_bnd.add_argument("--ny", type=int, default=1)
    p_bnd.add_argument("--t", type=int, default=10)
    p_bnd.add_argument("--delta", type=float, default=0.1)
    p_bnd.add_argument("--h-norm", type=float, default=1.0, dest="h_norm")
    p_bnd.add_argument("--n", type=int, default=500)
    p_bnd.add_argument("--sigma-u", type=float, default=1.0, dest="sigma_u")
    p_bnd.add_argument("--sigma-e", type=float, default=1.0, dest="sigma_e")
    p_bnd.add_argument("--out", default=None, help="optional JSON path")
    p_bnd.set_defaults(func=_cmd_bounds)

    p_ext = sub.add_parser("extract", help="recover open-loop noise blocks")
    p_ext.add_argument("--in", dest="in_path", default=None,
                       help="JSON file with predictor blocks (increasing power)")
    p_ext.add_argument("--system", default=None,
                       help="use the exact predictor blocks of this system")
    p_ext.add_argument("--t", type=int, default=10)
    p_ext.add_argument("--method", default="recursive",
                       choices=["recursive", "ho-kalman"])
    p_ext.add_argument("--nx", type=int, default=None)
    p_ext.add_argument("--count", type=int, default=None)
    p_ext.add_argument("--out", default=None)
    p_ext.set_defaults(func=_cmd_extract)

    p_bench = sub.add_parser("benchmark", help="run a Monte Carlo sweep")
    p_bench.add_argument("--config", required=True,
                         help="bundled name (figure1-siso, figure1-mimo, "
                              "figure2-siso, figure2-mimo) or a JSON file")
    p_bench.add_argument("--trials", type=int, default=None)
    p_bench.add_argument("--points", type=int, default=None,
                         help="keep only the first k sweep values")
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--system", default=None)
    p_bench.add_argument("--estimators", default=None,
                         help=f"comma list from {ESTIMATOR_TAGS}")
    p_bench.add_argument("--predictor-mode", default=None, dest="predictor_mode",
                         choices=["strict", "paper-literal"])
    p_bench.add_argument("--sigma-u", type=float, default=None, dest="sigma_u")
    p_bench.add_argument("--sigma-e", type=float, default=None, dest="sigma_e")
    p_bench.add_argument("--threads", type=int, default=None)
    p_bench.add_argument("--out", default=None, help="output directory")
    p_bench.set_defaults(func=_cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SimulationOverflowError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except IllConditionedError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MarkovLSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
