"""Replicated experiments and pipeline benchmarks driven by flat config files.

Config format: UTF-8 text, one ``key = value`` per line, ``#`` starts a
comment. A comma-separated value is a grid axis; the experiment runs the
cartesian product of all axes, and each cell is replicated ``rep.B`` times.

Replicate ``b`` (0-based) uses seed ``master ^ b`` for both the data draw and
the partitions. The coefficient vector is drawn once from ``dataset.seed`` and
shared by every replicate, so the replicates are Monte Carlo draws of the
same model.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .datagen import gen_linear_dataset, gen_logistic_dataset, read_dataset
from .engine import BmgdConfig, CostModel, run_bmgd, run_mgd
from .errors import ConfigError, DivisibilityError, DomainError
from .losses import full_loss, model_for, pl_constant_ls
from .oracles import logistic_mle, ols_fit
from .partition import MODES, PartitionPlan
from .schedule import Constant, Cosine, Exponential, HorizonTuned, Polynomial, StageWise

ALLOWED_KEYS = frozenset(
    {
        "dataset.path", "dataset.n", "dataset.p", "dataset.rho", "dataset.kind", "dataset.seed",
        "run.K", "run.M", "run.batch", "run.R", "run.mode", "run.pipeline", "run.seed",
        "sched.variant", "sched.alpha", "sched.alphaT", "sched.T", "sched.gamma", "sched.c",
        "sched.b", "sched.stages",
        "cost.c1", "cost.c2", "cost.compute",
        "rep.B", "out.dir",
    }
)
# keys whose comma-separated values form grid axes
GRID_KEYS = ("run.K", "run.M", "run.batch", "sched.T", "sched.alpha", "sched.alphaT")
VARIANTS = ("constant", "horizon", "polynomial", "exponential", "stagewise", "cosine")
ALPHA_RULE = "1/TKM"

CSV_COLUMNS = (
    "replicate", "method", "alpha", "T", "K", "M", "n",
    "iteration", "mse", "loss", "type1", "type2", "sim_clock",
)
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)

PRESETS = {
    # desk-scale version of the alpha*T table: N0 = 2,000, n = 500
    "alpha-t-grid": """
        dataset.n = 20000
        dataset.p = 50
        dataset.rho = 0.8
        run.K = 10
        run.batch = 500
        run.R = 100
        sched.alphaT = 0.1, 0.01, 0.001
        sched.T = 1, 5, 10
        rep.B = 20
    """,
    # the grid printed in the figure caption, which disagrees with the text
    "alpha-t-grid-wide": """
        dataset.n = 20000
        dataset.p = 50
        dataset.rho = 0.8
        run.K = 10
        run.batch = 500
        run.R = 100
        sched.alphaT = 0.2, 0.1, 0.05, 0.01
        sched.T = 1, 5, 10
        rep.B = 20
    """,
    "batch-buffer-grid": """
        dataset.n = 20000
        dataset.p = 50
        dataset.rho = 0.8
        run.K = 2, 5
        run.batch = 250, 500, 1000
        run.R = 30
        sched.T = 5
        sched.alpha = 0.005, 1/TKM
        rep.B = 20
    """,
}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_path: str | None = None
    N: int = 20000
    p: int = 50
    rho: float = 0.8
    kind: str = "linear"
    dataset_seed: int = 0
    K: tuple[int, ...] = (10,)
    M: tuple[int, ...] = ()
    batch: tuple[int, ...] = ()
    R: int = 100
    mode: str = "reshuffle_per_epoch"
    pipeline: bool = True
    seed: int = 0
    variant: str = "constant"
    alpha: tuple = ()
    alphaT: tuple[float, ...] = ()
    T: tuple[int, ...] = (1,)
    gamma: float | None = None
    c: float | None = None
    b: float = 1.0
    stages: tuple = ()
    c1: float = 0.0
    c2: float = 0.0
    compute: float = 0.0
    B: int = 1
    out_dir: str | None = None

    def cells(self) -> list["Cell"]:
        """Expand the grid axes into concrete cells, validating each one."""
        return _expand(self)


@dataclass(frozen=True)
class Cell:
    """One grid point: a fully specified training configuration."""

    K: int
    M: int
    n: int
    T: int
    alpha: float
    alpha_label: str

    def key(self) -> dict:
        return {"alpha": self.alpha, "alpha_label": self.alpha_label, "T": self.T, "K": self.K, "M": self.M, "n": self.n}


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _int(key, v) -> int:
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {v!r}") from None


def _float(key, v) -> float:
    try:
        return float(v)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {v!r}") from None


def _bool(key, v) -> bool:
    low = v.lower()
    if low in ("on", "true", "yes", "1"):
        return True
    if low in ("off", "false", "no", "0"):
        return False
    raise ConfigError(f"{key}: expected on/off, got {v!r}")


def _stages(key, v) -> tuple:
    # "alpha:T:iters; alpha:T:iters"
    out = []
    for part in v.split(";"):
        bits = part.strip().split(":")
        if len(bits) != 3:
            raise ConfigError(f"{key}: stage {part.strip()!r} is not alpha:T:iterations")
        out.append((_float(key, bits[0]), _int(key, bits[1]), _int(key, bits[2])))
    return tuple(out)


def parse_pairs(text: str) -> dict[str, str]:
    """``key = value`` lines to a dict; unknown or repeated keys are errors."""
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in ALLOWED_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in pairs:
            raise ConfigError(f"line {lineno}: key {key!r} given twice")
        pairs[key] = value
    return pairs


def config_from_pairs(pairs: dict[str, str]) -> ExperimentConfig:
    unknown = set(pairs) - ALLOWED_KEYS
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    kw: dict = {}
    for key, value in pairs.items():
        vals = _split(value)
        if not vals:
            raise ConfigError(f"{key}: empty value")
        if len(vals) > 1 and key not in GRID_KEYS:
            raise ConfigError(f"{key}: only {', '.join(GRID_KEYS)} accept lists")
        v = vals[0]
        if key == "dataset.path":
            kw["dataset_path"] = value.strip()
        elif key == "dataset.n":
            kw["N"] = _int(key, v)
        elif key == "dataset.p":
            kw["p"] = _int(key, v)
        elif key == "dataset.rho":
            kw["rho"] = _float(key, v)
        elif key == "dataset.kind":
            if v not in ("linear", "logistic", "binary"):
                raise ConfigError(f"{key}: expected linear or logistic, got {v!r}")
            kw["kind"] = "linear" if v == "linear" else "binary"
        elif key == "dataset.seed":
            kw["dataset_seed"] = _int(key, v)
        elif key in ("run.K", "run.M", "run.batch", "sched.T"):
            kw[key.split(".")[1]] = tuple(_int(key, x) for x in vals)
        elif key == "run.R":
            kw["R"] = _int(key, v)
        elif key == "run.mode":
            if v not in MODES:
                raise ConfigError(f"{key}: expected one of {MODES}, got {v!r}")
            kw["mode"] = v
        elif key == "run.pipeline":
            kw["pipeline"] = _bool(key, v)
        elif key == "run.seed":
            kw["seed"] = _int(key, v)
        elif key == "sched.variant":
            if v not in VARIANTS:
                raise ConfigError(f"{key}: expected one of {VARIANTS}, got {v!r}")
            kw["variant"] = v
        elif key == "sched.alpha":
            kw["alpha"] = tuple(x if x.upper() == ALPHA_RULE else _float(key, x) for x in vals)
        elif key == "sched.alphaT":
            kw["alphaT"] = tuple(_float(key, x) for x in vals)
        elif key in ("sched.gamma", "sched.c", "sched.b", "cost.c1", "cost.c2", "cost.compute"):
            kw[key.split(".")[1]] = _float(key, v)
        elif key == "sched.stages":
            kw["stages"] = _stages(key, value)
        elif key == "rep.B":
            kw["B"] = _int(key, v)
        elif key == "out.dir":
            kw["out_dir"] = value.strip()
    cfg = ExperimentConfig(**kw)
    _validate(cfg)
    return cfg


def parse_config(text: str, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    pairs = parse_pairs(text)
    for key, value in (overrides or {}).items():
        if key not in ALLOWED_KEYS:
            raise ConfigError(f"unknown key {key!r}")
        pairs[key] = value
    return config_from_pairs(pairs)


def load_config(path, overrides=None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), overrides)


def preset_config(name: str, overrides=None) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return parse_config(PRESETS[name], overrides)


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.dataset_path is None and (cfg.N < 1 or cfg.p < 1 or not 0 <= cfg.rho < 1):
        raise ConfigError("dataset.n and dataset.p must be positive and dataset.rho in [0, 1)")
    if cfg.R < 1:
        raise ConfigError("run.R must be at least 1")
    if cfg.B < 1:
        raise ConfigError("rep.B must be at least 1")
    if cfg.M and cfg.batch:
        raise ConfigError("give either run.M or run.batch, not both")
    if cfg.alpha and cfg.alphaT:
        raise ConfigError("give either sched.alpha or sched.alphaT, not both")
    if min(cfg.c1, cfg.c2, cfg.compute) < 0:
        raise ConfigError("costs must be non-negative")
    if any(v < 1 for v in cfg.K + cfg.M + cfg.batch + cfg.T):
        raise ConfigError("K, M, batch and T must be positive")
    if cfg.variant in ("polynomial", "exponential") and (cfg.gamma is None or cfg.c is None):
        raise ConfigError(f"{cfg.variant} schedule needs sched.c and sched.gamma")
    if cfg.variant == "stagewise" and not cfg.stages:
        raise ConfigError("stagewise schedule needs sched.stages")
    if cfg.variant in ("constant", "cosine") and not (cfg.alpha or cfg.alphaT):
        raise ConfigError(f"{cfg.variant} schedule needs sched.alpha or sched.alphaT")


def _dataset_rows(cfg: ExperimentConfig) -> int:
    if cfg.dataset_path is None:
        return cfg.N
    return read_dataset(cfg.dataset_path).n_samples


def _expand(cfg: ExperimentConfig, N: int | None = None) -> list[Cell]:
    N = _dataset_rows(cfg) if N is None else N
    alphas = cfg.alpha or tuple(("T", a) for a in cfg.alphaT) or (None,)
    cells = []
    m_axis = [("M", m) for m in cfg.M] or [("batch", n) for n in cfg.batch] or [("M", 1)]
    for K, (mkind, mval), T, a in itertools.product(cfg.K, m_axis, cfg.T, alphas):
        if N % K:
            raise ConfigError(f"K={K} does not divide N={N}")
        buf = N // K
        if mkind == "M":
            M = mval
        else:
            if buf % mval:
                raise ConfigError(f"mini-batch size {mval} does not divide buffer size {buf}")
            M = buf // mval
        try:
            PartitionPlan(N, K, M, cfg.mode, 0)
        except (DivisibilityError, DomainError) as exc:
            raise ConfigError(str(exc)) from exc
        if a is None:
            alpha, label = float("nan"), ""
        elif isinstance(a, tuple):
            alpha, label = a[1] / T, f"{a[1]:g}/T"
        elif a == ALPHA_RULE or (isinstance(a, str) and a.upper() == ALPHA_RULE):
            alpha, label = 1.0 / (T * K * M), ALPHA_RULE
        else:
            alpha, label = float(a), f"{a:g}"
        cells.append(Cell(K, M, buf // M, T, alpha, label))
    return cells


def schedule_for(cfg: ExperimentConfig, cell: Cell, dataset=None):
    """Schedule object for one cell."""
    v = cfg.variant
    if v == "constant":
        return Constant(cell.alpha, cell.T)
    if v == "polynomial":
        return Polynomial(cfg.c, cfg.gamma, cell.T)
    if v == "exponential":
        return Exponential(cfg.c, cfg.gamma, cfg.b, cell.T)
    if v == "stagewise":
        return StageWise(cfg.stages)
    if v == "cosine":
        return Cosine(cell.alpha, cell.T, cell.M, cell.K)
    # horizon-tuned: mu from sched.c if given, else the sample PL constant
    mu = cfg.c if cfg.c is not None else pl_constant_ls(dataset)
    return HorizonTuned(mu, cell.M, cell.T, cell.K, cfg.R)


def replicate_dataset(cfg: ExperimentConfig, b: int):
    """Dataset and true coefficients (or None) for replicate ``b``."""
    if cfg.dataset_path is not None:
        ds = read_dataset(cfg.dataset_path)
        return ds, load_truth(cfg.dataset_path)
    seed = cfg.seed ^ b
    gen = gen_linear_dataset if cfg.kind == "linear" else gen_logistic_dataset
    ds, truth = gen(cfg.N, cfg.p, cfg.rho, seed, theta_seed=cfg.dataset_seed)
    return ds, truth.theta


def truth_path(data_path) -> Path:
    return Path(str(data_path) + ".truth.json")


def load_truth(data_path):
    path = truth_path(data_path)
    if not path.exists():
        return None
    return np.asarray(json.loads(path.read_text())["theta"], dtype=np.float64)


def oracle_fit(dataset) -> np.ndarray:
    if dataset.kind == "linear":
        return ols_fit(dataset).theta_hat
    return logistic_mle(dataset).theta_hat


def _cumulative_ledger(schedule, R: int, K: int, M: int) -> tuple[list[int], list[int]]:
    t1, t2, a, b = [0], [0], 0, 0
    for r in range(1, R + 1):
        T = schedule.rate(r, 1 if getattr(schedule, "per_step", False) else None)[1]
        a += K * M
        b += T * K * M
        t1.append(a)
        t2.append(b)
    return t1, t2


def _run_replicate(args) -> dict:
    """Worker: one replicate of one cell. Must stay picklable."""
    cfg, index, cell, b = args
    ds, truth = replicate_dataset(cfg, b)
    model = model_for(ds.kind)
    schedule = schedule_for(cfg, cell, ds)
    config = BmgdConfig(K=cell.K, M=cell.M, R=cfg.R, schedule=schedule, mode=cfg.mode, seed=cfg.seed ^ b, pipeline=cfg.pipeline)
    report = run_bmgd(ds, model, config, CostModel(cfg.c1, cfg.c2, cfg.compute), truth=truth)
    oracle = oracle_fit(ds)
    oracle_loss = full_loss(model, oracle, ds)
    theta = report.theta_final
    t1, t2 = _cumulative_ledger(schedule, cfg.R, cell.K, cell.M)
    ref = truth if truth is not None else oracle
    mse_series = report.mse if report.mse is not None else np.array([float(np.sum((th - ref) ** 2)) for th in report.thetas])
    return {
        "cell": cell,
        "index": index,
        "b": b,
        "mse": mse_series.tolist(),
        "loss": report.loss.tolist(),
        "type1": t1,
        "type2": t2,
        "sim_clock": report.clock.tolist(),
        "final_mse": float(mse_series[-1]),
        "oracle_mse": float(np.sum((oracle - ref) ** 2)) if truth is not None else 0.0,
        "mse_vs_oracle": float(np.sum((theta - oracle) ** 2)),
        "suboptimality": float(report.loss[-1] - oracle_loss),
        "wall_clock": report.wall_clock,
    }


def summary_stats(values) -> dict:
    """Mean, sd and quantiles; independent of the order of ``values``."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = v.size
    mean = math.fsum(v) / n
    sd = math.sqrt(math.fsum((v - mean) ** 2) / (n - 1)) if n > 1 else 0.0
    out = {"n": n, "mean": mean, "sd": sd}
    for q in QUANTILES:
        out[f"q{int(round(q * 100)):02d}"] = float(np.quantile(v, q))
    return out


@dataclass
class CellResult:
    cell: Cell
    mse: tuple[float, ...]
    log_mse: tuple[float, ...]
    oracle_mse: tuple[float, ...]
    mse_vs_oracle: tuple[float, ...]
    suboptimality: tuple[float, ...]
    type1: int
    type2: int
    wall_clock: tuple[float, ...]

    def summary(self) -> dict:
        return {
            **self.cell.key(),
            "replicates": len(self.mse),
            "mse": summary_stats(self.mse),
            "log_mse": summary_stats(self.log_mse),
            "oracle_mse": summary_stats(self.oracle_mse),
            "mse_vs_oracle": summary_stats(self.mse_vs_oracle),
            "suboptimality": summary_stats(self.suboptimality),
            "type1": self.type1,
            "type2": self.type2,
        }


@dataclass
class ReplicateSummary:
    cells: list[CellResult]
    rows: list[dict] = field(repr=False, default_factory=list)

    def to_json(self) -> dict:
        return {"cells": [c.summary() for c in self.cells]}

    def cell(self, **match) -> CellResult:
        for c in self.cells:
            if all(getattr(c.cell, k) == v for k, v in match.items()):
                return c
        raise KeyError(match)


def _csv_rows(res: dict) -> list[dict]:
    cell = res["cell"]
    return [
        {
            "replicate": res["b"], "method": "bmgd", "alpha": cell.alpha, "T": cell.T, "K": cell.K,
            "M": cell.M, "n": cell.n, "iteration": r, "mse": res["mse"][r], "loss": res["loss"][r],
            "type1": res["type1"][r], "type2": res["type2"][r], "sim_clock": res["sim_clock"][r],
        }
        for r in range(len(res["mse"]))
    ]


def _collect(cells: list[Cell], results: list[dict]) -> ReplicateSummary:
    out = []
    for i, cell in enumerate(cells):
        mine = sorted((r for r in results if r["index"] == i), key=lambda r: r["b"])
        out.append(
            CellResult(
                cell=cell,
                mse=tuple(r["final_mse"] for r in mine),
                log_mse=tuple(math.log(max(r["final_mse"], 1e-300)) for r in mine),
                oracle_mse=tuple(r["oracle_mse"] for r in mine),
                mse_vs_oracle=tuple(r["mse_vs_oracle"] for r in mine),
                suboptimality=tuple(r["suboptimality"] for r in mine),
                type1=mine[0]["type1"][-1],
                type2=mine[0]["type2"][-1],
                wall_clock=tuple(r["wall_clock"] for r in mine),
            )
        )
    rows = [row for r in sorted(results, key=lambda r: (r["index"], r["b"])) for row in _csv_rows(r)]
    return ReplicateSummary(out, rows)


def write_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def read_csv(path) -> list[dict]:
    ints = {"replicate", "T", "K", "M", "n", "iteration", "type1", "type2"}
    with open(path, newline="") as fh:
        return [
            {k: (v if k == "method" else int(v) if k in ints else float(v)) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]


def replicate_experiment(cfg: ExperimentConfig, *, jobs: int = 1, out_dir=None) -> ReplicateSummary:
    """Run every cell ``B`` times; write ``replicates.csv`` and ``summary.json``
    into ``out_dir`` (or ``cfg.out_dir``) when one is given."""
    cells = cfg.cells()  # divisibility is checked here, before any training
    tasks = [(cfg, i, cell, b) for i, cell in enumerate(cells) for b in range(cfg.B)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_replicate, tasks))
    else:
        results = [_run_replicate(t) for t in tasks]
    summary = _collect(cells, results)
    out_dir = out_dir or cfg.out_dir
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "replicates.csv", summary.rows)
        (out / "summary.json").write_text(json.dumps(summary.to_json(), indent=2))
    return summary


def closed_form_pipeline_clock(loads, computes) -> float:
    """Depth-1 prefetch makespan: the first load is exposed, then each later
    cell costs the larger of its load and the previous cell's computation, and
    the last computation is exposed."""
    if not len(loads):
        return 0.0
    total = loads[0] + computes[-1]
    for j in range(1, len(loads)):
        total += max(loads[j], computes[j - 1])
    return float(total)


def bench_pipeline(cfg: ExperimentConfig, *, real_sleep: bool = False) -> dict:
    """Matched BMGD/MGD runs per cell, compared on the simulated clock."""
    cells = cfg.cells()
    cost = CostModel(cfg.c1, cfg.c2, cfg.compute)
    ds, truth = replicate_dataset(cfg, 0)
    model = model_for(ds.kind)
    out = []
    for cell in cells:
        schedule = schedule_for(cfg, cell, ds)
        base = BmgdConfig(K=cell.K, M=cell.M, R=cfg.R, schedule=schedule, mode=cfg.mode, seed=cfg.seed,
                          pipeline=cfg.pipeline, real_sleep=real_sleep, track_loss=False)
        bm = run_bmgd(ds, model, base, cost)
        mg = run_mgd(ds, model, base, cost)
        if not np.array_equal(bm.thetas, mg.thetas):
            raise AssertionError("BMGD and MGD trajectories differ")
        loads, computes = [], []
        for r in range(1, cfg.R + 1):
            T = base.epochs(r)
            loads += [cell.M * cost.c1] * cell.K
            computes += [T * cell.M * (cost.c2 + cost.compute)] * cell.K
        closed = closed_form_pipeline_clock(loads, computes) if cfg.pipeline else float(sum(loads) + sum(computes))
        entry = {**cell.key(), "closed_form_clock": closed}
        for name, rep in (("bmgd", bm), ("mgd", mg)):
            clock = rep.ledger.simulated_wall_clock
            entry[name] = {
                "sim_clock": clock,
                "ledger": asdict(rep.ledger),
                "occupancy": rep.ledger.gradient_updates * cost.compute / clock if clock > 0 else 0.0,
                "wall_clock": rep.wall_clock,
            }
        b_clock, m_clock = entry["bmgd"]["sim_clock"], entry["mgd"]["sim_clock"]
        entry["speedup"] = m_clock / b_clock if b_clock > 0 else 1.0
        entry["closed_form_rel_err"] = abs(b_clock - closed) / closed if closed > 0 else 0.0
        entry["trajectories_equal"] = True
        if real_sleep:
            entry["wall_ratio"] = bm.wall_clock / mg.wall_clock
        out.append(entry)
    return {"cost": asdict(cost), "real_sleep": real_sleep, "cells": out}


def with_seed(cfg: ExperimentConfig, seed: int | None) -> ExperimentConfig:
    return cfg if seed is None else replace(cfg, seed=int(seed))
