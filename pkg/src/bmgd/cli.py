"""Command-line driver: ``bmgd {gen,run,replicate,analyze,bench}``.

Exit codes: 0 success, 2 configuration error, 3 numeric divergence,
4 I/O error (including malformed dataset files).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .datagen import write_dataset
from .engine import BmgdConfig, CostModel, run_bmgd
from .errors import ConfigError, DivergenceError, DivisibilityError, DomainError, FormatError, ModeError
from .experiments import (
    PRESETS,
    ExperimentConfig,
    bench_pipeline,
    load_config,
    parse_config,
    preset_config,
    replicate_dataset,
    replicate_experiment,
    schedule_for,
    truth_path,
    with_seed,
)
from .linsys import assemble_system, convergence_certificate, fixed_point_residual, ols_distance, stable_solution
from .losses import model_for

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_IO = 0, 2, 3, 4

# re-exported so the experiment operations are reachable from the CLI module
__all__ = ["main", "build_parser", "replicate_experiment", "bench_pipeline"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bmgd", description="Buffered mini-batch gradient descent experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("gen", "generate a synthetic dataset file"),
        ("run", "train once and write the trajectory report"),
        ("replicate", "replicated grid experiment with CSV/JSON output"),
        ("analyze", "linear-system certificate for a fixed-partition least-squares run"),
        ("bench", "matched BMGD/MGD pipeline benchmark"),
    ):
        p = sub.add_parser(name, help=help_)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", help="key = value config file")
        src.add_argument("--preset", choices=sorted(PRESETS), help="built-in experiment grid")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel replicate workers")
        p.add_argument("--real-sleep", action="store_true", help="sleep for simulated costs")
    return parser


def _overrides(items) -> dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _config(args) -> ExperimentConfig:
    overrides = _overrides(args.set)
    if args.config:
        cfg = load_config(args.config, overrides)
    elif args.preset:
        cfg = preset_config(args.preset, overrides)
    else:
        cfg = parse_config("", overrides)
    return with_seed(cfg, args.seed)


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    out = Path(args.out or cfg.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2))
    print(f"wrote {path}")


def cmd_gen(args, cfg: ExperimentConfig) -> None:
    if cfg.dataset_path is not None:
        raise ConfigError("gen builds a synthetic dataset; drop dataset.path")
    ds, theta = replicate_dataset(cfg, 0)
    path = _out_dir(args, cfg) / "data.bmgd"
    write_dataset(path, ds)
    truth_path(path).write_text(json.dumps({"theta": theta.tolist(), "seed": cfg.seed, "theta_seed": cfg.dataset_seed}))
    print(f"wrote {path} ({ds.n_samples} x {ds.n_features}, {ds.kind})")


def _single_cell(cfg: ExperimentConfig):
    cells = cfg.cells()
    if len(cells) != 1:
        raise ConfigError(f"this command needs a single configuration, the grid has {len(cells)} cells")
    return cells[0]


def cmd_run(args, cfg: ExperimentConfig) -> None:
    cell = _single_cell(cfg)
    ds, truth = replicate_dataset(cfg, 0)
    config = BmgdConfig(
        K=cell.K, M=cell.M, R=cfg.R, schedule=schedule_for(cfg, cell, ds), mode=cfg.mode,
        seed=cfg.seed, pipeline=cfg.pipeline, real_sleep=args.real_sleep,
    )
    report = run_bmgd(ds, model_for(ds.kind), config, CostModel(cfg.c1, cfg.c2, cfg.compute), truth=truth)
    _write_json(_out_dir(args, cfg) / "report.json", report.to_dict())


def cmd_replicate(args, cfg: ExperimentConfig) -> None:
    out = _out_dir(args, cfg)
    summary = replicate_experiment(cfg, jobs=args.jobs, out_dir=out)
    for c in summary.cells:
        s = c.summary()
        print(f"alpha={c.cell.alpha:.6g} T={c.cell.T} K={c.cell.K} M={c.cell.M} n={c.cell.n}: "
              f"mean MSE {s['mse']['mean']:.5g} (oracle {s['oracle_mse']['mean']:.5g})")
    print(f"wrote {out / 'replicates.csv'} and {out / 'summary.json'}")


def cmd_analyze(args, cfg: ExperimentConfig) -> None:
    if cfg.mode != "fixed":
        raise ModeError("analyze needs run.mode = fixed")
    if cfg.variant != "constant":
        raise ConfigError("analyze needs a constant schedule")
    cell = _single_cell(cfg)
    ds, _ = replicate_dataset(cfg, 0)
    if ds.kind != "linear":
        raise ConfigError("analyze covers least squares only")
    plan = BmgdConfig(K=cell.K, M=cell.M, R=cfg.R, schedule=None, mode="fixed", seed=cfg.seed).plan_for(ds.n_samples)
    system = assemble_system(ds, plan, cell.alpha, cell.T)
    cert = convergence_certificate(system, ds)
    payload = {"cell": cell.key(), "certificate": asdict(cert)}
    if not cert.diverges:
        theta_star = stable_solution(system)
        payload["fixed_point_residual"] = fixed_point_residual(system, theta_star)
        payload["ols_distance"] = ols_distance(system, ds)
        payload["stable_solution"] = np.asarray(theta_star).reshape(cell.K, -1).tolist()
    _write_json(_out_dir(args, cfg) / "analysis.json", payload)


def cmd_bench(args, cfg: ExperimentConfig) -> None:
    report = bench_pipeline(cfg, real_sleep=args.real_sleep)
    for c in report["cells"]:
        print(f"K={c['K']} M={c['M']} T={c['T']}: BMGD {c['bmgd']['sim_clock']:.1f} ms, "
              f"MGD {c['mgd']['sim_clock']:.1f} ms, speedup {c['speedup']:.2f}")
    _write_json(_out_dir(args, cfg) / "bench.json", report)


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "replicate": cmd_replicate, "analyze": cmd_analyze, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        COMMANDS[args.command](args, cfg)
    except (ConfigError, DivisibilityError, ModeError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (OSError, FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
