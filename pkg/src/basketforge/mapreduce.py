"""Miniature MapReduce engine: partition, map, sorted shuffle, reduce.

The engine moves opaque text key-value pairs; typed encoding lives in the
mining pipeline. Task timing is delegated to the scheduler, with map tasks
declared multi-thread capable and reduce tasks single-threaded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple

from .baskets import Transaction, TransactionDataset
from .cores import ConfigError, Platform
from .scheduling import (
    MULTI,
    SINGLE,
    Scheduler,
    SchedulingPolicy,
    ScheduleTrace,
    TaskDescriptor,
    TaskExecutionError,
)
from .cores import EnergyLedger

MB_BYTES = 1_000_000


class KeyValue(NamedTuple):
    key: str
    value: str


MapFn = Callable[[Transaction, Mapping[str, str]], list[KeyValue]]
ReduceFn = Callable[[str, list[str], Mapping[str, str]], list[KeyValue]]


class JobError(RuntimeError):
    """A job aborted; carries whatever trace and ledger had accumulated."""

    def __init__(self, message: str, trace: ScheduleTrace | None = None,
                 ledger: EnergyLedger | None = None):
        super().__init__(message)
        self.trace = trace
        self.ledger = ledger


@dataclass(frozen=True)
class InputSplit:
    split_index: int
    records: tuple[Transaction, ...]
    byte_size: int


@dataclass(frozen=True)
class JobSpec:
    job_name: str
    n_partitions: int
    map_fn: MapFn
    reduce_fn: ReduceFn
    broadcast: Mapping[str, str] = field(default_factory=dict)
    map_cost_factor: float = 1.0
    reduce_cost_factor: float = 1.0

    def __post_init__(self):
        if self.n_partitions < 1:
            raise ConfigError(f"job {self.job_name!r}: n_partitions must be >= 1")


@dataclass(frozen=True)
class JobResult:
    outputs: tuple[KeyValue, ...]  # sorted by (key, value)
    trace: ScheduleTrace
    ledger: EnergyLedger


def record_bytes(record: Transaction) -> int:
    """Serialized size of one record in the canonical basket line format."""
    return len(",".join(record.items).encode("utf-8")) + 1


def balanced_counts(total: int, parts: int) -> list[int]:
    """Contiguous balance rule: counts differ by at most 1, larger ones first."""
    if parts < 1:
        raise ConfigError(f"partition count must be >= 1, got {parts}")
    base, extra = divmod(total, parts)
    return [base + 1 if i < extra else base for i in range(parts)]


def partition_input(dataset: TransactionDataset, n: int) -> list[InputSplit]:
    """Cut the dataset into n contiguous splits with balanced record counts."""
    counts = balanced_counts(len(dataset.transactions), n)
    splits = []
    cursor = 0
    for index, count in enumerate(counts):
        records = dataset.transactions[cursor : cursor + count]
        cursor += count
        splits.append(
            InputSplit(index, records, sum(record_bytes(r) for r in records))
        )
    return splits


def _map_body(job: JobSpec, split: InputSplit) -> Callable[[], list[KeyValue]]:
    def run() -> list[KeyValue]:
        emitted: list[KeyValue] = []
        for record in split.records:
            try:
                pairs = job.map_fn(record, job.broadcast)
            except Exception as exc:
                raise JobError(
                    f"map_fn failed in job {job.job_name!r}, "
                    f"split {split.split_index}, record {record.id}: {exc}"
                ) from exc
            emitted.extend(pairs)
        return emitted

    return run


def run_map_phase(
    job: JobSpec, splits: list[InputSplit], scheduler: Scheduler
) -> list[list[KeyValue]]:
    """One map task per split; per-split outputs keep record emission order."""
    tasks = []
    bodies = []
    for split in splits:
        size_mb = split.byte_size / MB_BYTES
        tasks.append(
            TaskDescriptor(
                task_id=f"{job.job_name}:map:{split.split_index:03d}",
                work_mb=size_mb,
                cost_factor=job.map_cost_factor,
                threading=MULTI,
                state_mb=size_mb,
            )
        )
        bodies.append(_map_body(job, split))
    outcome = scheduler.run_batch(tasks, bodies)
    return list(outcome.results)


def shuffle(map_outputs: list[list[KeyValue]]) -> list[tuple[str, list[str]]]:
    """Group pairs by key; keys sorted, values in (split, emission) order."""
    groups: dict[str, list[str]] = {}
    for pairs in map_outputs:
        for key, value in pairs:
            groups.setdefault(key, []).append(value)
    return [(key, groups[key]) for key in sorted(groups)]


def _reduce_body(
    job: JobSpec, chunk: list[tuple[str, list[str]]]
) -> Callable[[], list[KeyValue]]:
    def run() -> list[KeyValue]:
        emitted: list[KeyValue] = []
        for key, values in chunk:
            try:
                emitted.extend(job.reduce_fn(key, values, job.broadcast))
            except Exception as exc:
                raise JobError(
                    f"reduce_fn failed in job {job.job_name!r} for key {key!r}: {exc}"
                ) from exc
        return emitted

    return run


def _group_bytes(chunk: list[tuple[str, list[str]]]) -> int:
    return sum(
        len(key.encode("utf-8")) + 1 + sum(len(v.encode("utf-8")) + 1 for v in values)
        for key, values in chunk
    )


def run_reduce_phase(
    job: JobSpec, groups: list[tuple[str, list[str]]], scheduler: Scheduler
) -> list[KeyValue]:
    """Pack groups into contiguous key ranges and reduce them as single tasks."""
    if not groups:
        return []
    n_tasks = min(job.n_partitions, len(groups))
    counts = balanced_counts(len(groups), n_tasks)
    tasks = []
    bodies = []
    cursor = 0
    for index, count in enumerate(counts):
        chunk = groups[cursor : cursor + count]
        cursor += count
        size_mb = _group_bytes(chunk) / MB_BYTES
        tasks.append(
            TaskDescriptor(
                task_id=f"{job.job_name}:reduce:{index:03d}",
                work_mb=size_mb,
                cost_factor=job.reduce_cost_factor,
                threading=SINGLE,
                state_mb=size_mb,
            )
        )
        bodies.append(_reduce_body(job, chunk))
    outcome = scheduler.run_batch(tasks, bodies)
    merged: list[KeyValue] = []
    for part in outcome.results:
        merged.extend(part)
    merged.sort()
    return merged


def run_job(
    job: JobSpec,
    dataset: TransactionDataset,
    platform: Platform,
    policy: SchedulingPolicy,
) -> JobResult:
    """partition -> map -> shuffle -> reduce, with a barrier between phases."""
    splits = partition_input(dataset, job.n_partitions)
    scheduler = Scheduler(platform, policy)
    try:
        per_split = run_map_phase(job, splits, scheduler)
        groups = shuffle(per_split)
        outputs = run_reduce_phase(job, groups, scheduler)
    except TaskExecutionError as exc:
        raise JobError(str(exc), exc.trace, platform.snapshot_ledger()) from exc
    return JobResult(tuple(outputs), scheduler.trace(), platform.snapshot_ledger())
