"""Batch execution of forward-simulation tasks over a pool of workers.

Two allocation policies are provided:

``static``
    tasks are split up front into contiguous chunks of ``ceil(m / n)`` and each
    worker runs its chunk sequentially;
``dynamic``
    workers pull the next unstarted task from a shared queue whenever they go
    idle (greedy list scheduling, within twice the optimal makespan).

Workers are threads; the coordinating thread only hands out work and collects
results. In virtual-time mode no thread is started: tasks are executed one by
one and the schedule is replayed on a virtual clock from each task's declared
``duration`` (or, failing that, its measured run time), which makes makespans
exact and lets speedup curves be computed on a single core.
"""

from __future__ import annotations

import heapq
import json
import math
import queue
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .summaries import SummaryVector

POLICIES = ("static", "dynamic")


@dataclass(frozen=True)
class TaskSpec:
    task_id: int
    phi: tuple[float, ...]
    seed: int
    payload_kind: str = "gaussian-toy"
    duration: float | None = None  # known cost, used by synthetic-sleep and virtual time


@dataclass(frozen=True)
class TaskResult:
    task_id: int
    summary: SummaryVector | None
    wall_time: float
    worker_id: int
    start: float = 0.0
    end: float = 0.0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class BatchReport:
    policy: str
    n_workers: int
    makespan: float
    per_worker_busy_time: list[float]
    task_times: dict[int, float]
    virtual: bool
    # (worker_id, task_id, request_time, start_time)
    pull_log: list[tuple[int, int, float, float]] = field(default_factory=list)

    @property
    def total_busy_time(self) -> float:
        return float(sum(self.per_worker_busy_time))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["task_times"] = {str(k): v for k, v in self.task_times.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


Executor = Callable[[TaskSpec], SummaryVector]


def _execute(executor: Executor, task: TaskSpec, worker_id: int, t0: float) -> TaskResult:
    start = time.perf_counter()
    try:
        summary, error = executor(task), None
    except Exception as exc:  # a failed task never aborts its batch
        summary, error = None, f"{type(exc).__name__}: {exc}"
    end = time.perf_counter()
    return TaskResult(task.task_id, summary, end - start, worker_id, start - t0, end - t0, error)


def _check(tasks: Sequence[TaskSpec], n_workers: int) -> None:
    if n_workers < 1:
        raise ValueError("n_workers must be >= 1")
    ids = [t.task_id for t in tasks]
    if len(set(ids)) != len(ids):
        raise ValueError("task ids within a batch must be unique")


def chunk(tasks: Sequence, n_workers: int) -> list[list]:
    size = math.ceil(len(tasks) / n_workers) if tasks else 0
    return [list(tasks[w * size : (w + 1) * size]) for w in range(n_workers)]


def _report(policy, n_workers, results, virtual, pull_log=()) -> BatchReport:
    busy = [0.0] * n_workers
    for r in results:
        busy[r.worker_id] += r.end - r.start
    makespan = max((r.end for r in results), default=0.0)
    return BatchReport(
        policy=policy,
        n_workers=n_workers,
        makespan=makespan,
        per_worker_busy_time=busy,
        task_times={r.task_id: r.end - r.start for r in results},
        virtual=virtual,
        pull_log=list(pull_log),
    )


# ---------------------------------------------------------------------------
# virtual time

def _virtual_durations(tasks, executor):
    out = []
    for t in tasks:
        r = _execute(executor, t, 0, 0.0)
        d = t.duration if t.duration is not None else r.wall_time
        out.append((r, float(d)))
    return out


def _virtual_static(tasks, n_workers, executor):
    executed = _virtual_durations(tasks, executor)
    by_id = {t.task_id: e for t, e in zip(tasks, executed)}
    results = []
    for w, part in enumerate(chunk(tasks, n_workers)):
        clock = 0.0
        for t in part:
            r, d = by_id[t.task_id]
            results.append(_retime(r, w, clock, clock + d))
            clock += d
    return results, []


def _virtual_dynamic(tasks, n_workers, executor):
    executed = _virtual_durations(tasks, executor)
    free = [(0.0, w) for w in range(n_workers)]
    heapq.heapify(free)
    results, log = [], []
    for t, (r, d) in zip(tasks, executed):
        clock, w = heapq.heappop(free)
        log.append((w, t.task_id, clock, clock))
        results.append(_retime(r, w, clock, clock + d))
        heapq.heappush(free, (clock + d, w))
    return results, log


def _retime(r: TaskResult, worker: int, start: float, end: float) -> TaskResult:
    return TaskResult(r.task_id, r.summary, end - start, worker, start, end, r.error)


# ---------------------------------------------------------------------------
# threads

def _threaded_static(tasks, n_workers, executor):
    parts = chunk(tasks, n_workers)
    results: list[TaskResult] = []
    lock = threading.Lock()
    t0 = time.perf_counter()

    def work(w):
        local = [_execute(executor, t, w, t0) for t in parts[w]]
        with lock:
            results.extend(local)

    threads = [threading.Thread(target=work, args=(w,), daemon=True) for w in range(n_workers)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    return results, []


def _threaded_dynamic(tasks, n_workers, executor):
    work_queue: queue.Queue = queue.Queue()
    for t in tasks:
        work_queue.put(t)
    sink: queue.Queue = queue.Queue()
    log: list = []
    lock = threading.Lock()
    t0 = time.perf_counter()

    def work(w):
        while True:
            requested = time.perf_counter() - t0
            try:
                t = work_queue.get_nowait()
            except queue.Empty:
                return
            r = _execute(executor, t, w, t0)
            with lock:
                log.append((w, t.task_id, requested, r.start))
            sink.put(r)

    threads = [threading.Thread(target=work, args=(w,), daemon=True) for w in range(n_workers)]
    for th in threads:
        th.start()
    results = [sink.get() for _ in tasks]
    for th in threads:
        th.join()
    return results, log


def run_batch_static(tasks: Sequence[TaskSpec], n_workers: int, executor: Executor, virtual: bool = False):
    """Run ``tasks`` in contiguous chunks; return ``(results, report)`` ordered by task id."""
    _check(tasks, n_workers)
    fn = _virtual_static if virtual else _threaded_static
    results, log = fn(list(tasks), n_workers, executor)
    results.sort(key=lambda r: r.task_id)
    return results, _report("static", n_workers, results, virtual, log)


def run_batch_dynamic(tasks: Sequence[TaskSpec], n_workers: int, executor: Executor, virtual: bool = False):
    """Run ``tasks`` from a shared queue; return ``(results, report)`` ordered by task id."""
    _check(tasks, n_workers)
    fn = _virtual_dynamic if virtual else _threaded_dynamic
    results, log = fn(list(tasks), n_workers, executor)
    results.sort(key=lambda r: r.task_id)
    return results, _report("dynamic", n_workers, results, virtual, log)


class Scheduler:
    """Policy plus worker count, with a running count of executed tasks."""

    def __init__(self, policy: str = "dynamic", n_workers: int = 1, virtual: bool = False):
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
        if n_workers < 1:
            raise ValueError("n_workers must be >= 1")
        self.policy = policy
        self.n_workers = n_workers
        self.virtual = virtual
        self.executed = 0
        self.reports: list[BatchReport] = []

    def run(self, tasks: Sequence[TaskSpec], executor: Executor) -> list[TaskResult]:
        if not tasks:
            return []
        fn = run_batch_static if self.policy == "static" else run_batch_dynamic
        results, report = fn(tasks, self.n_workers, executor, virtual=self.virtual)
        self.executed += len(results)
        self.reports.append(report)
        return results

    def __repr__(self):
        return f"Scheduler(policy={self.policy!r}, n_workers={self.n_workers}, virtual={self.virtual})"


# ---------------------------------------------------------------------------
# synthetic workloads and speedup

def sleep_executor(time_unit: float = 0.0) -> Executor:
    """Executor for ``synthetic-sleep`` tasks: sleeps ``duration * time_unit`` seconds."""

    def run(task: TaskSpec) -> SummaryVector:
        if time_unit > 0 and task.duration:
            time.sleep(task.duration * time_unit)
        return SummaryVector(("duration",), (task.duration or 0.0,))

    return run


def sleep_tasks(durations: Iterable[float]) -> list[TaskSpec]:
    return [
        TaskSpec(i, (float(d),), seed=i, payload_kind="synthetic-sleep", duration=float(d))
        for i, d in enumerate(durations)
    ]


def synthetic_durations(m: int, model: str = "lognormal", seed: int = 0, **kw) -> np.ndarray:
    """Task durations for benchmarks.

    ``equal`` gives ``kw['value']`` (default 1); ``lognormal`` uses ``sigma``
    (default 1.5); ``pareto`` uses shape ``a`` (default 1.5) and has a unit minimum.
    """
    rng = np.random.default_rng(seed)
    if model == "equal":
        return np.full(m, float(kw.get("value", 1.0)))
    if model == "lognormal":
        return rng.lognormal(0.0, kw.get("sigma", 1.5), size=m)
    if model == "pareto":
        return 1.0 + rng.pareto(kw.get("a", 1.5), size=m)
    raise ValueError(f"unknown duration model {model!r}")


def speedup_curve(
    tasks: Sequence[TaskSpec],
    worker_counts: Sequence[int],
    policy: str,
    executor: Executor | None = None,
    virtual: bool = True,
) -> list[tuple[int, float]]:
    """``S(n) = makespan(1) / makespan(n)`` on the same task set."""
    if not worker_counts or any(n < 1 for n in worker_counts):
        raise ValueError("worker_counts must be non-empty and >= 1")
    executor = executor or sleep_executor()
    fn = run_batch_static if policy == "static" else run_batch_dynamic
    base = fn(tasks, 1, executor, virtual=virtual)[1].makespan
    out = []
    for n in worker_counts:
        span = base if n == 1 else fn(tasks, n, executor, virtual=virtual)[1].makespan
        out.append((n, base / span))
    return out


def optimal_makespan(durations: Sequence[float], n_workers: int) -> float:
    """Exact minimum makespan by depth-first branch and bound (small instances only)."""
    d = sorted((float(x) for x in durations), reverse=True)
    if not d:
        return 0.0
    best = [sum(d)]
    lower = max(sum(d) / n_workers, d[0])
    loads = [0.0] * n_workers

    def place(i, current_max):
        if current_max >= best[0]:
            return
        if i == len(d):
            best[0] = current_max
            return
        seen = set()
        for w in range(n_workers):
            if loads[w] in seen:
                continue
            seen.add(loads[w])
            loads[w] += d[i]
            place(i + 1, max(current_max, loads[w]))
            loads[w] -= d[i]
            if best[0] <= lower + 1e-12:
                return

    place(0, 0.0)
    return best[0]
