"""Task placement on the simulated platform.

Covers the whole placement lifecycle: classify tasks as single- or
multi-threaded, estimate their processing-power requirement, pick the most
suitable core (fastest or lowest-energy, with an optional deadline filter),
split multi-threaded work proportionally across cores, power-gate idle cores,
and migrate running tasks between cores either statically (queue built up
front) or dynamically (profitable switches at completion instants).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from .cores import (
    BUSY,
    IDLE,
    OFF,
    US_PER_S,
    CoreSpec,
    EnergyLedger,
    Platform,
    PlatformConfig,
    execution_duration,
    make_platform,
    switch_cost,
    to_umb,
    to_us,
    work_duration_us,
)

SINGLE = "single"
MULTI = "multi"
FASTEST = "fastest"
ENERGY = "energy"
STATIC = "static"
DYNAMIC = "dynamic"

# Below this much work per free core a multi-capable task runs single-threaded;
# splitting it further would produce near-empty chunks and noisy traces.
SPLIT_THRESHOLD_MB = 1.0

# Tie-free total order for same-instant events: completions settle first, then
# power-downs, then the next wave of submissions, power-ups, and starts.
EVENT_ORDER = {
    "thread_end": 0,
    "combine": 1,
    "end": 2,
    "power_off": 3,
    "submit": 4,
    "power_on": 5,
    "switch": 6,
    "start": 7,
    "thread_start": 8,
}


class SchedulingError(RuntimeError):
    """Invalid scheduling request (bad descriptors, inconsistent static queue)."""


class TaskExecutionError(RuntimeError):
    """A task body raised; carries the trace accumulated up to the failure."""

    def __init__(self, message: str, trace: "ScheduleTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class TaskDescriptor:
    task_id: str
    work_mb: float  # MB of input data to process
    cost_factor: float = 1.0  # algorithm weight multiplying the work
    threading: str = SINGLE
    state_mb: float = 0.0  # state moved through the cache on a switch
    deadline: float | None = None  # seconds budget from submission

    def __post_init__(self):
        if not self.task_id:
            raise SchedulingError("task_id must be non-empty")
        if self.work_mb < 0:
            raise SchedulingError(f"{self.task_id}: work_mb must be >= 0")
        if self.cost_factor <= 0:
            raise SchedulingError(f"{self.task_id}: cost_factor must be > 0")
        if self.threading not in (SINGLE, MULTI):
            raise SchedulingError(f"{self.task_id}: unknown threading {self.threading!r}")
        if self.state_mb < 0:
            raise SchedulingError(f"{self.task_id}: state_mb must be >= 0")
        if self.deadline is not None and self.deadline <= 0:
            raise SchedulingError(f"{self.task_id}: deadline must be positive")


@dataclass(frozen=True)
class SchedulingPolicy:
    objective: str = FASTEST
    gate_idle_cores: bool = True
    switching: str = DYNAMIC

    def __post_init__(self):
        if self.objective not in (FASTEST, ENERGY):
            raise SchedulingError(f"unknown objective {self.objective!r}")
        if self.switching not in (STATIC, DYNAMIC):
            raise SchedulingError(f"unknown switching mode {self.switching!r}")


@dataclass(frozen=True)
class ScheduleEvent:
    time_us: int
    kind: str
    task_id: str
    core_id: int | None = None
    detail: str = ""

    @property
    def time(self) -> float:
        return self.time_us / US_PER_S

    def sort_key(self) -> tuple:
        core = -1 if self.core_id is None else self.core_id
        return (self.time_us, EVENT_ORDER[self.kind], self.task_id, core)


@dataclass(frozen=True)
class ScheduleTrace:
    events: tuple[ScheduleEvent, ...]
    makespan_us: int

    @property
    def makespan(self) -> float:
        return self.makespan_us / US_PER_S


@dataclass(frozen=True)
class ThreadChunk:
    core_id: int
    work_umb: int  # micro-MB of raw task work assigned to this core

    @property
    def work_mb(self) -> float:
        return self.work_umb / 1_000_000


# One dispatch decision: (task_id, effective threading mode, chunks).
Assignment = tuple[str, str, tuple[ThreadChunk, ...]]


@dataclass(frozen=True)
class ScheduleOutcome:
    trace: ScheduleTrace
    ledger: EnergyLedger
    results: tuple[Any, ...]  # task body return values, submission order
    assignments: tuple[Assignment, ...]


def classify(task: TaskDescriptor, n_available: int | None = None) -> str:
    """Effective threading mode; the declared mode plus the split threshold."""
    if task.threading == SINGLE:
        return SINGLE
    if n_available is not None and task.work_mb < SPLIT_THRESHOLD_MB * max(1, n_available):
        return SINGLE
    return MULTI


def estimate_requirement(task: TaskDescriptor) -> float:
    """Effective work in MB: raw data volume weighted by the algorithm cost."""
    return task.work_mb * task.cost_factor


def select_core(
    task: TaskDescriptor,
    free_cores: Sequence[CoreSpec],
    policy: SchedulingPolicy,
    remaining_deadline: float | None = None,
) -> int:
    """Pick the most suitable free core for a single-threaded task.

    fastest: highest capacity. energy: lowest busy energy for the task's
    effective work. A deadline restricts candidates to cores that can finish
    in time, falling back to the fastest free core when none can. Ties break
    toward the lower core id.
    """
    if not free_cores:
        raise SchedulingError("select_core needs at least one free core")
    effective = estimate_requirement(task)
    pool = list(free_cores)
    if remaining_deadline is not None:
        feasible = [c for c in pool if execution_duration(effective, c) <= remaining_deadline]
        if not feasible:
            return min(pool, key=lambda c: (-c.capacity, c.core_id)).core_id
        pool = feasible
    if policy.objective == FASTEST:
        return min(pool, key=lambda c: (-c.capacity, c.core_id)).core_id
    return min(
        pool,
        key=lambda c: (c.active_power * execution_duration(effective, c), c.core_id),
    ).core_id


def split_threads(task: TaskDescriptor, cores: Sequence[CoreSpec]) -> tuple[ThreadChunk, ...]:
    """Split a task's work across cores in proportion to their capacities.

    Chunks land on the micro-MB grid via largest-remainder rounding, so they
    sum to the task's work exactly while every thread targets the same finish
    time.
    """
    if not cores:
        raise SchedulingError("split_threads needs at least one core")
    work = to_umb(task.work_mb)
    total_capacity = sum(c.capacity for c in cores)
    shares = [work * c.capacity / total_capacity for c in cores]
    base = [int(s) for s in shares]
    leftover = work - sum(base)
    if leftover < 0:
        raise SchedulingError("work split overflow")
    order = sorted(
        range(len(cores)),
        key=lambda i: (-(shares[i] - base[i]), cores[i].core_id),
    )
    for j in range(leftover):
        base[order[j % len(order)]] += 1
    return tuple(ThreadChunk(cores[i].core_id, base[i]) for i in range(len(cores)))


def platform_for_policy(config: PlatformConfig, policy: SchedulingPolicy) -> Platform:
    """Fresh platform whose initial core mode matches the gating policy."""
    return make_platform(config, OFF if policy.gate_idle_cores else IDLE)


def _effective_umb(work_umb: int, cost_factor: float) -> int:
    return round(work_umb * cost_factor)


@dataclass
class _Thread:
    task_idx: int
    task: TaskDescriptor
    core_id: int
    eff_umb: int  # cost-weighted work units timed in this segment
    start_us: int
    end_us: int
    multi: bool


class _BatchSim:
    """One batch of tasks simulated forward on a platform.

    ``pinned`` replays a pre-built assignment queue verbatim (static mode);
    otherwise placements are decided live. Bodies of None make this a pure
    planning pass.
    """

    def __init__(
        self,
        platform: Platform,
        policy: SchedulingPolicy,
        tasks: Sequence[TaskDescriptor],
        bodies: Sequence[Callable[[], Any] | None] | None,
        pinned: Sequence[Assignment] | None,
    ):
        self.platform = platform
        self.policy = policy
        self.tasks = list(tasks)
        self.bodies = list(bodies) if bodies is not None else [None] * len(tasks)
        self.pinned = deque(pinned) if pinned is not None else None
        self.submit_us = platform.now_us
        self.events: list[ScheduleEvent] = []
        self.threads: dict[int, _Thread] = {}  # core_id -> committed thread
        self.open_threads: dict[int, int] = {}  # task_idx -> live thread count
        self.thread_total: dict[int, int] = {}
        self.results: list[Any] = [None] * len(tasks)
        self.assignments: list[Assignment] = []
        self.finish_us: list[int] = []
        self.last_task: dict[int, str] = {}  # core_id -> last task placed there

    # -- event helpers ---------------------------------------------------

    def _emit(self, t_us: int, kind: str, task_id: str, core_id: int | None, detail: str = ""):
        self.events.append(ScheduleEvent(t_us, kind, task_id, core_id, detail))

    def _sorted_events(self) -> tuple[ScheduleEvent, ...]:
        return tuple(sorted(self.events, key=ScheduleEvent.sort_key))

    def _partial_trace(self) -> ScheduleTrace:
        return ScheduleTrace(self._sorted_events(), max(self.finish_us, default=self.submit_us))

    # -- simulation ------------------------------------------------------

    def run(self) -> tuple[tuple[ScheduleEvent, ...], list[Any], tuple[Assignment, ...], int]:
        pending = deque(range(len(self.tasks)))
        for idx in pending:
            task = self.tasks[idx]
            self._emit(
                self.submit_us,
                "submit",
                task.task_id,
                None,
                f"work_mb={task.work_mb:g} threading={task.threading}",
            )
        t = self.submit_us
        while True:
            self._dispatch(t, pending)
            if self.policy.switching == DYNAMIC and self.pinned is None:
                self._apply_switches(t)
            if self.policy.gate_idle_cores:
                self._gate_off(t)
            upcoming = [th.end_us for th in self.threads.values()]
            if not upcoming:
                break
            t = min(upcoming)
            self._complete(t)
        makespan = max(self.finish_us, default=self.submit_us)
        return self._sorted_events(), self.results, tuple(self.assignments), makespan

    def _free_cores(self) -> list[CoreSpec]:
        return [c for c in self.platform.cores if c.core_id not in self.threads]

    def _dispatch(self, t: int, pending: deque):
        while pending:
            free = self._free_cores()
            if not free:
                return
            idx = pending[0]
            task = self.tasks[idx]
            if self.pinned is not None:
                task_id, mode, chunks = self.pinned.popleft()
                if task_id != task.task_id:
                    raise SchedulingError(
                        f"static queue out of order: expected {task.task_id}, got {task_id}"
                    )
            else:
                mode = classify(task, len(free))
                if mode == SINGLE:
                    remaining = None
                    if task.deadline is not None:
                        remaining = task.deadline - (t - self.submit_us) / US_PER_S
                    core_id = select_core(task, free, self.policy, remaining)
                    chunks = (ThreadChunk(core_id, to_umb(task.work_mb)),)
                else:
                    chunks = split_threads(task, free)
            pending.popleft()
            self.assignments.append((task.task_id, mode, chunks))
            body = self.bodies[idx]
            if body is not None:
                try:
                    self.results[idx] = body()
                except Exception as exc:
                    raise TaskExecutionError(str(exc), self._partial_trace()) from exc
            multi = mode == MULTI
            self.open_threads[idx] = len(chunks)
            self.thread_total[idx] = len(chunks)
            for chunk in chunks:
                self._start_thread(t, idx, task, chunk, multi)

    def _start_thread(self, t: int, idx: int, task: TaskDescriptor, chunk: ThreadChunk, multi: bool):
        if chunk.core_id in self.threads:
            raise SchedulingError(f"core {chunk.core_id} already occupied")
        core = self.platform.core(chunk.core_id)
        busy_start = t
        if self.platform.mode(chunk.core_id) == OFF:
            self._emit(t, "power_on", task.task_id, chunk.core_id)
            self.platform.set_mode(chunk.core_id, IDLE, t)
            busy_start = t + to_us(core.switch_on_latency)
        eff = _effective_umb(chunk.work_umb, task.cost_factor)
        end = busy_start + work_duration_us(eff, core.capacity)
        self.platform.set_mode(chunk.core_id, BUSY, busy_start, task.task_id)
        kind = "thread_start" if multi else "start"
        self._emit(busy_start, kind, task.task_id, chunk.core_id, f"eff_umb={eff}")
        self.threads[chunk.core_id] = _Thread(idx, task, chunk.core_id, eff, busy_start, end, multi)
        self.last_task[chunk.core_id] = task.task_id

    def _complete(self, t: int):
        done = sorted(cid for cid, th in self.threads.items() if th.end_us == t)
        for cid in done:
            thread = self.threads.pop(cid)
            self.platform.set_mode(cid, IDLE, t)
            if thread.multi:
                self._emit(t, "thread_end", thread.task.task_id, cid)
            self.open_threads[thread.task_idx] -= 1
            if self.open_threads[thread.task_idx] == 0:
                if thread.multi:
                    self._emit(
                        t,
                        "combine",
                        thread.task.task_id,
                        None,
                        f"threads={self.thread_total[thread.task_idx]}",
                    )
                    self._emit(t, "end", thread.task.task_id, None)
                else:
                    self._emit(t, "end", thread.task.task_id, cid)
                self.finish_us.append(t)

    def _apply_switches(self, t: int):
        # A running single-threaded task migrates when a strictly faster core
        # is free and the time saved exceeds the full switch cost.
        while True:
            free = self._free_cores()
            if not free:
                return
            switched = False
            for cid, thread in sorted(self.threads.items(), key=lambda kv: kv[1].task_idx):
                if thread.multi or thread.start_us > t:
                    continue
                current = self.platform.core(thread.core_id)
                faster = [c for c in free if c.capacity > current.capacity]
                if not faster:
                    continue
                target = min(faster, key=lambda c: (-c.capacity, c.core_id))
                done = min(thread.eff_umb, round(current.capacity * (t - thread.start_us)))
                remaining = thread.eff_umb - done
                if remaining <= 0:
                    continue
                remaining_mb = remaining / 1_000_000
                saving = remaining_mb / current.capacity - remaining_mb / target.capacity
                was_off = self.platform.mode(target.core_id) == OFF
                cost = switch_cost(thread.task.state_mb, self.platform.config)
                if was_off:
                    cost += target.switch_on_latency
                if saving > cost:
                    self._do_switch(t, thread, target, remaining, was_off)
                    switched = True
                    break
            if not switched:
                return

    def _do_switch(self, t: int, thread: _Thread, target: CoreSpec, remaining_umb: int, was_off: bool):
        old = thread.core_id
        del self.threads[old]
        self.platform.set_mode(old, IDLE, t)
        self._emit(
            t,
            "switch",
            thread.task.task_id,
            old,
            f"to_core={target.core_id} eff_umb={remaining_umb}",
        )
        resume = t + to_us(switch_cost(thread.task.state_mb, self.platform.config))
        if was_off:
            self._emit(t, "power_on", thread.task.task_id, target.core_id)
            self.platform.set_mode(target.core_id, IDLE, t)
            resume += to_us(target.switch_on_latency)
        end = resume + work_duration_us(remaining_umb, target.capacity)
        self.platform.set_mode(target.core_id, BUSY, resume, thread.task.task_id)
        self._emit(resume, "start", thread.task.task_id, target.core_id, f"eff_umb={remaining_umb} resumed")
        self.threads[target.core_id] = _Thread(
            thread.task_idx, thread.task, target.core_id, remaining_umb, resume, end, thread.multi
        )
        self.last_task[target.core_id] = thread.task.task_id

    def _gate_off(self, t: int):
        for core in self.platform.cores:
            cid = core.core_id
            if cid in self.threads:
                continue
            if self.platform.mode(cid) == IDLE:
                self._emit(t, "power_off", self.last_task.get(cid, ""), cid)
                self.platform.set_mode(cid, OFF, t)


def build_static_queue(
    tasks: Sequence[TaskDescriptor],
    platform: Platform,
    policy: SchedulingPolicy,
) -> list[Assignment]:
    """Plan all placements up front against a simulated-forward platform copy."""
    sim = _BatchSim(platform.clone(), policy, tasks, None, None)
    _, _, assignments, _ = sim.run()
    return list(assignments)


def schedule(
    tasks: Sequence[TaskDescriptor],
    platform: Platform,
    policy: SchedulingPolicy,
    bodies: Sequence[Callable[[], Any] | None] | None = None,
) -> ScheduleOutcome:
    """Run one task batch to completion and return trace, ledger, and results.

    Static switching first builds the placement queue, then executes it
    verbatim; dynamic switching re-decides at every dispatch and completion
    instant.
    """
    ids = [t.task_id for t in tasks]
    if len(set(ids)) != len(ids):
        raise SchedulingError("task ids must be unique within a batch")
    if bodies is not None and len(bodies) != len(tasks):
        raise SchedulingError("bodies must align with tasks")
    pinned = None
    if policy.switching == STATIC:
        pinned = build_static_queue(tasks, platform, policy)
    sim = _BatchSim(platform, policy, tasks, bodies, pinned)
    events, results, assignments, makespan_us = sim.run()
    ledger = platform.snapshot_ledger(max(platform.now_us, makespan_us))
    return ScheduleOutcome(
        ScheduleTrace(events, makespan_us), ledger, tuple(results), assignments
    )


class Scheduler:
    """Runs successive task batches on one platform under a fixed policy.

    Batches are serialized: each starts at the simulated time the previous one
    finished, which gives MapReduce phases their barrier for free.
    """

    def __init__(self, platform: Platform, policy: SchedulingPolicy):
        self.platform = platform
        self.policy = policy
        self._events: list[ScheduleEvent] = []
        self._makespan_us = platform.now_us

    def run_batch(
        self,
        tasks: Sequence[TaskDescriptor],
        bodies: Sequence[Callable[[], Any] | None] | None = None,
    ) -> ScheduleOutcome:
        try:
            outcome = schedule(tasks, self.platform, self.policy, bodies)
        except TaskExecutionError as exc:
            merged = tuple(
                sorted(self._events + list(exc.trace.events), key=ScheduleEvent.sort_key)
            )
            raise TaskExecutionError(
                str(exc), ScheduleTrace(merged, max(self._makespan_us, exc.trace.makespan_us))
            ) from exc
        self._events.extend(outcome.trace.events)
        self._makespan_us = max(self._makespan_us, outcome.trace.makespan_us)
        return outcome

    def trace(self) -> ScheduleTrace:
        events = tuple(sorted(self._events, key=ScheduleEvent.sort_key))
        return ScheduleTrace(events, self._makespan_us)
