"""Buffered mini-batch gradient descent and its plain mini-batch baseline.

Execution model
---------------
A producer thread prepares buffers: it derives the iteration's buffer
partition and the per-epoch mini-batch partitions from the seed, reads the
buffer's rows from the dataset (a memmap when the dataset came from disk),
and charges the Type-I cost (hard drive to RAM, ``c1`` per mini-batch). The
consumer owns ``theta`` and runs ``T`` epochs of mini-batch updates over the
buffer, charging Type-II (RAM to device, ``c2``) plus ``compute`` per step.

The two share a channel with two buffer slots: one buffer being computed on
and one being loaded or waiting, so at most one prepared buffer is ever ready
and memory is bounded at two buffers. With ``pipeline=False`` the same
preparation runs inline, and the parameter trajectory is bit-identical.

Costs are charged to a virtual clock (milliseconds) by default. With
``real_sleep=True`` the producer and consumer also sleep for their costs, so
the wall-clock overlap is real.
"""

from __future__ import annotations

import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import ConfigError, DivergenceError, DomainError
from .losses import LossModel, full_loss, loss_gradient
from .partition import PartitionPlan
from .schedule import steps_alpha, varies_per_step


@dataclass(frozen=True)
class CostModel:
    """Per-mini-batch costs in milliseconds."""

    c1: float = 0.0
    c2: float = 0.0
    compute: float = 0.0

    def __post_init__(self):
        if min(self.c1, self.c2, self.compute) < 0:
            raise DomainError("costs must be non-negative")


@dataclass
class CostLedger:
    type1_transfers: int = 0
    type2_transfers: int = 0
    gradient_updates: int = 0
    simulated_wall_clock: float = 0.0


@dataclass
class BmgdConfig:
    K: int
    M: int
    R: int
    schedule: object
    mode: str = "reshuffle_per_epoch"
    seed: int = 0
    pipeline: bool = True
    init_theta: np.ndarray | None = None
    real_sleep: bool = False
    track_loss: bool = True
    # MGD baseline only: overlap the next mini-batch load with the current step
    overlap_load: bool = False
    # optional per-buffer filter: (rows, Y_block) -> boolean keep-mask
    row_filter: Callable | None = None

    def plan_for(self, N: int) -> PartitionPlan:
        if self.R < 1:
            raise ConfigError("R must be at least 1")
        return PartitionPlan(N, self.K, self.M, self.mode, self.seed)

    def epochs(self, r: int) -> int:
        return self.schedule.rate(r, 1 if varies_per_step(self.schedule) else None)[1]


@dataclass
class TrajectoryReport:
    method: str
    thetas: np.ndarray  # (R + 1, p), row 0 is the initial value
    buffer_thetas: np.ndarray  # (R, K, p), estimate after each buffer
    loss: np.ndarray | None
    mse: np.ndarray | None
    clock: np.ndarray  # (R + 1,) simulated ms at the end of each iteration
    ledger: CostLedger
    wall_clock: float
    max_grad_norm: float
    step_length_sum: float
    max_ready: int = 0

    @property
    def theta_final(self) -> np.ndarray:
        return self.thetas[-1]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "theta_final": self.theta_final.tolist(),
            "thetas": self.thetas.tolist(),
            "loss": None if self.loss is None else self.loss.tolist(),
            "mse": None if self.mse is None else self.mse.tolist(),
            "sim_clock": self.clock.tolist(),
            "ledger": asdict(self.ledger),
            "wall_clock_s": self.wall_clock,
            "max_grad_norm": self.max_grad_norm,
            "step_length_sum": self.step_length_sum,
        }


def sgd_step(theta, batch, model: LossModel, alpha: float) -> np.ndarray:
    """One update ``theta - alpha * gradient`` on ``batch`` (a BatchView)."""
    if alpha <= 0:
        raise DomainError("learning rate must be positive")
    theta = np.asarray(theta, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        g = loss_gradient(model, theta, batch.X, batch.Y)
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite gradient", theta=theta)
    return theta - alpha * g


@dataclass
class _Prepared:
    r: int
    k: int
    T: int
    rows: np.ndarray
    epochs: list  # epochs[t] = list of position arrays into rows
    X: np.ndarray | None = None
    Y: np.ndarray | None = None

    @property
    def n_minibatches(self) -> int:
        return len(self.epochs[0])


class _BufferSource:
    """Derives buffer contents from seeds; shared logic for producer and MGD."""

    def __init__(self, dataset, plan: PartitionPlan, config: BmgdConfig):
        self.dataset = dataset
        self.plan = plan
        self.config = config
        self._cached_r = None
        self._cached_buffers = None

    def cells(self) -> Iterable[tuple[int, int]]:
        for r in range(1, self.config.R + 1):
            for k in range(1, self.plan.K + 1):
                yield r, k

    def prepare(self, r: int, k: int, materialize: bool) -> _Prepared:
        if self._cached_r != r:
            self._cached_buffers = self.plan.buffers(r)
            self._cached_r = r
        rows = self._cached_buffers[k - 1]
        T = self.config.epochs(r)
        epochs = [self.plan.local_minibatches(r, k, t) for t in range(1, T + 1)]
        X = Y = None
        if materialize or self.config.row_filter is not None:
            X = np.asarray(self.dataset.X[rows])
            Y = np.asarray(self.dataset.Y[rows])
        if self.config.row_filter is not None:
            keep = np.asarray(self.config.row_filter(rows, Y), dtype=bool)
            new_pos = np.cumsum(keep) - 1
            epochs = [[new_pos[pos[keep[pos]]] for pos in ep] for ep in epochs]
            epochs = [[pos for pos in ep if pos.size] for ep in epochs]
            rows = rows[keep]
            X, Y = (X[keep], Y[keep]) if materialize else (None, None)
        return _Prepared(r, k, T, rows, epochs, X, Y)


def _gather(X, Y):
    return lambda pos: (np.take(X, pos, axis=0), np.take(Y, pos))


class PrefetchChannel:
    """Single-producer single-consumer handoff with two buffer slots.

    The producer must ``acquire_slot`` before loading; the consumer releases
    its slot once it has finished computing on a buffer. ``max_ready`` records
    the largest number of prepared buffers ever waiting.
    """

    def __init__(self, slots: int = 2):
        self._slots = threading.Semaphore(slots)
        self._cond = threading.Condition()
        self._items: list = []
        self._cancelled = threading.Event()
        self.max_ready = 0

    @property
    def cancelled(self) -> bool:
        return self._cancelled.is_set()

    def cancel(self) -> None:
        self._cancelled.set()
        with self._cond:
            self._cond.notify_all()
        self._slots.release()

    def acquire_slot(self) -> bool:
        while not self._cancelled.is_set():
            if self._slots.acquire(timeout=0.05):
                return not self._cancelled.is_set()
        return False

    def release_slot(self) -> None:
        self._slots.release()

    def put(self, item) -> None:
        with self._cond:
            while self._items and not self._cancelled.is_set():
                self._cond.wait(timeout=0.05)
            if self._cancelled.is_set():
                return
            self._items.append(item)
            self.max_ready = max(self.max_ready, len(self._items))
            assert len(self._items) <= 1, "prefetch queue holds more than one ready buffer"
            self._cond.notify_all()

    def get(self):
        with self._cond:
            while not self._items:
                if self._cancelled.is_set():
                    raise RuntimeError("prefetch channel cancelled")
                self._cond.wait(timeout=0.05)
            item = self._items.pop(0)
            self._cond.notify_all()
            return item


class _ProducerFailure:
    def __init__(self, exc: BaseException):
        self.exc = exc


def _producer(source: _BufferSource, channel: PrefetchChannel, cost: CostModel, real_sleep: bool):
    try:
        for r, k in source.cells():
            if not channel.acquire_slot():
                return
            item = source.prepare(r, k, materialize=True)
            if real_sleep and cost.c1 > 0:
                time.sleep(item.n_minibatches * cost.c1 / 1000.0)
            channel.put(item)
    except BaseException as exc:  # forwarded to the consumer
        channel.put(_ProducerFailure(exc))


def simulate_buffered_clock(loads, computes, pipeline: bool) -> np.ndarray:
    """End time of each cell's computation on the virtual clock.

    Pipelined, the load of cell j starts once cell j-1 is loaded and cell j-2's
    computation has released its buffer slot; computation of cell j starts once
    it is loaded and cell j-1 is done.
    """
    n = len(loads)
    ends = np.zeros(n)
    if not pipeline:
        now = 0.0
        for j in range(n):
            now += loads[j] + computes[j]
            ends[j] = now
        return ends
    load_end = 0.0
    for j in range(n):
        slot_free = ends[j - 2] if j >= 2 else 0.0
        load_end = max(load_end, slot_free) + loads[j]
        start = max(load_end, ends[j - 1] if j >= 1 else 0.0)
        ends[j] = start + computes[j]
    return ends


def simulate_streaming_clock(n_steps: int, cost: CostModel, overlap: bool) -> np.ndarray:
    """Per-step end times when every mini-batch is loaded individually."""
    step = cost.c2 + cost.compute
    if not overlap:
        return np.arange(1, n_steps + 1) * (cost.c1 + step)
    ends = np.zeros(n_steps)
    load_end = 0.0
    prev = 0.0
    for j in range(n_steps):
        load_end = max(load_end, ends[j - 2] if j >= 2 else 0.0) + cost.c1
        prev = max(load_end, prev) + step
        ends[j] = prev
    return ends


class _Trainer:
    """Consumer side: owns theta and the per-iteration records."""

    def __init__(self, dataset, model, config: BmgdConfig, truth, callbacks):
        self.dataset = dataset
        self.model = model
        self.config = config
        self.truth = None if truth is None else np.asarray(truth, dtype=np.float64)
        self.callbacks = list(callbacks or ())
        p = dataset.n_features
        theta0 = np.zeros(p) if config.init_theta is None else np.asarray(config.init_theta, float).copy()
        if theta0.shape != (p,):
            raise ConfigError(f"init_theta has shape {theta0.shape}, expected ({p},)")
        self.theta = theta0
        self.thetas = [theta0.copy()]
        self.buffer_thetas = np.zeros((config.R, config.K, p))
        self.losses = [self._loss()] if config.track_loss else None
        self.mses = None if self.truth is None else [float(np.sum((theta0 - self.truth) ** 2))]
        self.max_grad_norm = 0.0
        self.step_length_sum = 0.0
        self.steps_in_iteration = 0
        self.per_step = varies_per_step(config.schedule)

    def _loss(self) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            val = full_loss(self.model, self.theta, self.dataset)
        if not np.isfinite(val):
            raise DivergenceError("non-finite loss", theta=self.thetas[-1].copy())
        return val

    def run_cell(self, r: int, k: int, T: int, epochs, fetch, per_step_hook=None) -> int:
        """T epochs of updates on one buffer; ``fetch(pos)`` returns (X, Y)."""
        if k == 1:
            self.steps_in_iteration = 0
        alpha = None if self.per_step else self.config.schedule.rate(r)[0]
        theta = self.theta
        steps = 0
        for t in range(T):
            for pos in epochs[t]:
                self.steps_in_iteration += 1
                a = steps_alpha(self.config.schedule, r, self.steps_in_iteration) if self.per_step else alpha
                Xb, Yb = fetch(pos)
                g = loss_gradient(self.model, theta, Xb, Yb)
                new = theta - a * g
                if not np.all(np.isfinite(new)):
                    self.theta = theta
                    raise DivergenceError(
                        f"non-finite iterate at iteration {r}, buffer {k}", theta=theta.copy(), iteration=r
                    )
                gn = float(np.linalg.norm(g))
                if gn > self.max_grad_norm:
                    self.max_grad_norm = gn
                self.step_length_sum += a
                theta = new
                steps += 1
                if per_step_hook is not None:
                    per_step_hook()
        self.theta = theta
        self.buffer_thetas[r - 1, k - 1] = theta
        return steps

    def end_iteration(self, r: int) -> None:
        self.thetas.append(self.theta.copy())
        if self.losses is not None:
            self.losses.append(self._loss())
        if self.mses is not None:
            self.mses.append(float(np.sum((self.theta - self.truth) ** 2)))
        for cb in self.callbacks:
            cb(r, self.theta.copy())

    def report(self, method, clock, ledger, wall, max_ready=0) -> TrajectoryReport:
        return TrajectoryReport(
            method=method,
            thetas=np.array(self.thetas),
            buffer_thetas=self.buffer_thetas,
            loss=None if self.losses is None else np.array(self.losses),
            mse=None if self.mses is None else np.array(self.mses),
            clock=np.asarray(clock, dtype=float),
            ledger=ledger,
            wall_clock=wall,
            max_grad_norm=self.max_grad_norm,
            step_length_sum=self.step_length_sum,
            max_ready=max_ready,
        )


def _check(dataset, config: BmgdConfig) -> PartitionPlan:
    try:
        return config.plan_for(dataset.n_samples)
    except (DomainError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def run_bmgd(
    dataset,
    model: LossModel,
    config: BmgdConfig,
    cost_model: CostModel | None = None,
    callbacks=(),
    truth=None,
) -> TrajectoryReport:
    """Train with buffered mini-batch gradient descent.

    ``truth`` (optional) enables the per-iteration squared-error series.
    ``callbacks`` are called as ``cb(r, theta)`` after every iteration.
    """
    plan = _check(dataset, config)
    cost = cost_model or CostModel()
    trainer = _Trainer(dataset, model, config, truth, callbacks)
    source = _BufferSource(dataset, plan, config)
    loads, computes, cell_iter = [], [], []
    ledger = CostLedger()
    step_sleep = (cost.c2 + cost.compute) / 1000.0 if config.real_sleep else 0.0
    hook = (lambda: time.sleep(step_sleep)) if step_sleep > 0 else None

    def consume(item: _Prepared) -> None:
        steps = trainer.run_cell(item.r, item.k, item.T, item.epochs, _gather(item.X, item.Y), hook)
        ledger.type1_transfers += item.n_minibatches
        ledger.type2_transfers += steps
        ledger.gradient_updates += steps
        loads.append(item.n_minibatches * cost.c1)
        computes.append(steps * (cost.c2 + cost.compute))
        cell_iter.append(item.r)
        if item.k == plan.K:
            trainer.end_iteration(item.r)

    start = time.perf_counter()
    max_ready = 0
    if config.pipeline:
        channel = PrefetchChannel()
        worker = threading.Thread(
            target=_producer, args=(source, channel, cost, config.real_sleep), daemon=True, name="bmgd-producer"
        )
        worker.start()
        try:
            for _ in range(config.R * plan.K):
                item = channel.get()
                if isinstance(item, _ProducerFailure):
                    raise item.exc
                consume(item)
                channel.release_slot()
        finally:
            channel.cancel()
            worker.join()
        max_ready = channel.max_ready
    else:
        for r, k in source.cells():
            item = source.prepare(r, k, materialize=True)
            if config.real_sleep and cost.c1 > 0:
                time.sleep(item.n_minibatches * cost.c1 / 1000.0)
            consume(item)
    wall = time.perf_counter() - start

    ends = simulate_buffered_clock(loads, computes, config.pipeline)
    ledger.simulated_wall_clock = float(ends[-1])
    clock = [0.0] + [float(ends[i]) for i in range(len(ends)) if (i + 1) % plan.K == 0]
    return trainer.report("bmgd", clock, ledger, wall, max_ready)


def run_mgd(
    dataset,
    model: LossModel,
    config: BmgdConfig,
    cost_model: CostModel | None = None,
    callbacks=(),
    truth=None,
) -> TrajectoryReport:
    """Baseline: the same update sequence, but every mini-batch is read from
    storage just before its step and nothing is prefetched at buffer level."""
    plan = _check(dataset, config)
    cost = cost_model or CostModel()
    trainer = _Trainer(dataset, model, config, truth, callbacks)
    source = _BufferSource(dataset, plan, config)
    ledger = CostLedger()
    step_ms = cost.c1 + cost.c2 + cost.compute
    hook = (lambda: time.sleep(step_ms / 1000.0)) if config.real_sleep and step_ms > 0 else None
    steps_per_iteration = []
    start = time.perf_counter()
    for r, k in source.cells():
        item = source.prepare(r, k, materialize=False)
        if item.X is not None:  # a row filter needed the block
            Xbuf, Ybuf = item.X, item.Y
            fetch = _gather(Xbuf, Ybuf)
        else:
            rows = item.rows
            fetch = lambda pos: (np.asarray(dataset.X[rows[pos]]), np.asarray(dataset.Y[rows[pos]]))  # noqa: E731
        steps = trainer.run_cell(r, k, item.T, item.epochs, fetch, hook)
        ledger.type1_transfers += steps
        ledger.type2_transfers += steps
        ledger.gradient_updates += steps
        if k == 1:
            steps_per_iteration.append(0)
        steps_per_iteration[-1] += steps
        if k == plan.K:
            trainer.end_iteration(r)
    wall = time.perf_counter() - start
    ends = simulate_streaming_clock(ledger.gradient_updates, cost, config.overlap_load)
    ledger.simulated_wall_clock = float(ends[-1]) if len(ends) else 0.0
    cum = np.cumsum(steps_per_iteration)
    clock = [0.0] + [float(ends[c - 1]) for c in cum]
    return trainer.report("mgd", clock, ledger, wall)
