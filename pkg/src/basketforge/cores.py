"""Simulated heterogeneous multi-core platform with power-state energy accounting.

Simulated time lives on an integer microsecond grid and work on an integer
micro-MB grid so that interval arithmetic is exact and ledgers reproduce
bit-for-bit across runs.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable

US_PER_S = 1_000_000
UMB_PER_MB = 1_000_000

OFF = "off"
IDLE = "idle"
BUSY = "busy"
MODES = (OFF, IDLE, BUSY)


class ConfigError(ValueError):
    """Invalid platform configuration."""


class SimulationError(RuntimeError):
    """Inconsistent simulated-time mutation, e.g. a clock moving backwards."""


def to_us(seconds: float) -> int:
    return round(seconds * US_PER_S)


def to_umb(mb: float) -> int:
    return round(mb * UMB_PER_MB)


def work_duration_us(work_umb: int, capacity: float) -> int:
    """Busy time for ``work_umb`` micro-MB on a core of ``capacity`` MB/s.

    A capacity of c MB/s is exactly c micro-MB per microsecond, so this is the
    single quantization rule shared by the simulator and every trace check.
    """
    return round(work_umb / capacity)


@dataclass(frozen=True)
class CoreSpec:
    core_id: int
    capacity: float  # MB per simulated second
    active_power: float  # watts while executing
    idle_power: float  # watts while on but idle
    off_power: float = 0.0
    switch_on_latency: float = 0.0  # seconds to power the core on

    def __post_init__(self):
        if self.core_id < 0:
            raise ConfigError(f"core_id must be non-negative, got {self.core_id}")
        if self.capacity <= 0:
            raise ConfigError(f"core {self.core_id}: capacity must be positive")
        if not self.active_power > self.idle_power >= 0:
            raise ConfigError(
                f"core {self.core_id}: need active_power > idle_power >= 0"
            )
        if self.off_power != 0.0:
            raise ConfigError(f"core {self.core_id}: off_power must be 0")
        if self.switch_on_latency < 0:
            raise ConfigError(f"core {self.core_id}: switch_on_latency must be >= 0")

    def watts(self, mode: str) -> float:
        if mode == BUSY:
            return self.active_power
        if mode == IDLE:
            return self.idle_power
        return self.off_power


@dataclass(frozen=True)
class PlatformConfig:
    cores: tuple[CoreSpec, ...]
    cache_bandwidth: float  # MB/s moved through the switch cache
    switch_fixed_cost: float  # seconds per core switch

    def __post_init__(self):
        if not self.cores:
            raise ConfigError("platform needs at least one core")
        ids = [c.core_id for c in self.cores]
        if ids != list(range(len(self.cores))):
            raise ConfigError(f"core ids must be 0..k-1 in order, got {ids}")
        if self.cache_bandwidth <= 0:
            raise ConfigError("cache_bandwidth must be positive")
        if self.switch_fixed_cost < 0:
            raise ConfigError("switch_fixed_cost must be >= 0")

    def to_dict(self) -> dict:
        return {
            "cores": [
                {
                    "core_id": c.core_id,
                    "capacity": c.capacity,
                    "active_power": c.active_power,
                    "idle_power": c.idle_power,
                    "off_power": c.off_power,
                    "switch_on_latency": c.switch_on_latency,
                }
                for c in self.cores
            ],
            "cache_bandwidth": self.cache_bandwidth,
            "switch_fixed_cost": self.switch_fixed_cost,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PlatformConfig":
        extra = set(data) - {"cores", "cache_bandwidth", "switch_fixed_cost"}
        if extra:
            raise ConfigError(f"unknown platform config keys: {sorted(extra)}")
        try:
            cores = tuple(CoreSpec(**entry) for entry in data["cores"])
            return cls(cores, data["cache_bandwidth"], data["switch_fixed_cost"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed platform config: {exc}") from exc


@lru_cache(maxsize=1)
def default_platform_config() -> PlatformConfig:
    """The packaged four-core configuration (capacities 80/120/200/400 MB/s)."""
    text = resources.files("basketforge").joinpath("platform.default.json").read_text()
    return PlatformConfig.from_dict(json.loads(text))


def load_platform_config(path: str) -> PlatformConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"platform config {path}: {exc}") from exc
    return PlatformConfig.from_dict(data)


@dataclass(frozen=True)
class LedgerInterval:
    core_id: int
    mode: str
    t_start_us: int
    t_end_us: int
    watts: float

    def __post_init__(self):
        if self.t_end_us < self.t_start_us:
            raise SimulationError("interval ends before it starts")

    @property
    def duration_s(self) -> float:
        return (self.t_end_us - self.t_start_us) / US_PER_S

    @property
    def joules(self) -> float:
        return self.watts * self.duration_s


@dataclass(frozen=True)
class EnergyLedger:
    """Immutable snapshot: per-core intervals tiling [0, end_us] exactly."""

    intervals: tuple[LedgerInterval, ...]  # grouped by core, time-ordered
    end_us: int
    n_cores: int

    def core_intervals(self, core_id: int) -> list[LedgerInterval]:
        return [iv for iv in self.intervals if iv.core_id == core_id]

    def total_joules(self, core_id: int | None = None) -> float:
        return sum(
            iv.joules
            for iv in self.intervals
            if core_id is None or iv.core_id == core_id
        )

    def mode_seconds(self, mode: str, core_id: int | None = None) -> float:
        return sum(
            iv.duration_s
            for iv in self.intervals
            if iv.mode == mode and (core_id is None or iv.core_id == core_id)
        )

    def to_json_dict(self) -> dict:
        cores = []
        for cid in range(self.n_cores):
            ivs = self.core_intervals(cid)
            cores.append(
                {
                    "core_id": cid,
                    "intervals": [
                        {
                            "mode": iv.mode,
                            "start_s": iv.t_start_us / US_PER_S,
                            "end_s": iv.t_end_us / US_PER_S,
                            "watts": iv.watts,
                            "joules": iv.joules,
                        }
                        for iv in ivs
                    ],
                    "joules": self.total_joules(cid),
                }
            )
        return {
            "end_s": self.end_us / US_PER_S,
            "cores": cores,
            "total_joules": self.total_joules(),
        }


def total_energy(ledger: EnergyLedger, core_id: int | None = None) -> float:
    """Joules accumulated in scope; ``core_id`` of None means platform-wide."""
    return ledger.total_joules(core_id)


class Platform:
    """Mutable simulation state for one core set.

    All mutations are time-stamped on the microsecond grid; per core they must
    be non-decreasing in time. The open tail of each core's timeline is closed
    lazily when a ledger snapshot is taken.
    """

    def __init__(self, config: PlatformConfig, initial_mode: str = OFF):
        if initial_mode not in (OFF, IDLE):
            raise ConfigError(f"initial mode must be off or idle, got {initial_mode!r}")
        self.config = config
        self.now_us = 0
        k = len(config.cores)
        self._modes = [initial_mode] * k
        self._since = [0] * k
        self._task: list[str | None] = [None] * k
        self._closed: list[list[LedgerInterval]] = [[] for _ in range(k)]

    @property
    def cores(self) -> tuple[CoreSpec, ...]:
        return self.config.cores

    def core(self, core_id: int) -> CoreSpec:
        return self.config.cores[core_id]

    def mode(self, core_id: int) -> str:
        return self._modes[core_id]

    def since_us(self, core_id: int) -> int:
        return self._since[core_id]

    def current_task(self, core_id: int) -> str | None:
        return self._task[core_id]

    def set_mode(self, core_id: int, mode: str, t_us: int, task_id: str | None = None):
        """Close the core's open interval at ``t_us`` and enter ``mode``."""
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}")
        since = self._since[core_id]
        if t_us < since:
            raise SimulationError(
                f"core {core_id}: time moved backwards ({t_us} < {since})"
            )
        if mode == BUSY and task_id is None:
            raise SimulationError("busy mode needs a task id")
        old = self._modes[core_id]
        if t_us > since:
            spec = self.core(core_id)
            self._closed[core_id].append(
                LedgerInterval(core_id, old, since, t_us, spec.watts(old))
            )
        self._modes[core_id] = mode
        self._since[core_id] = t_us
        self._task[core_id] = task_id if mode == BUSY else None
        if t_us > self.now_us:
            self.now_us = t_us

    def advance_to(self, t_us: int):
        if t_us < self.now_us:
            raise SimulationError(f"cannot rewind the clock to {t_us}")
        self.now_us = t_us

    def snapshot_ledger(self, at_us: int | None = None) -> EnergyLedger:
        """Ledger covering [0, at_us]; does not mutate the platform."""
        at = self.now_us if at_us is None else at_us
        if at < self.now_us:
            raise SimulationError("cannot snapshot before the current time")
        intervals: list[LedgerInterval] = []
        for cid, closed in enumerate(self._closed):
            intervals.extend(closed)
            since = self._since[cid]
            if at > since:
                spec = self.core(cid)
                mode = self._modes[cid]
                intervals.append(LedgerInterval(cid, mode, since, at, spec.watts(mode)))
        return EnergyLedger(tuple(intervals), at, len(self.cores))

    def total_energy(self, core_id: int | None = None) -> float:
        return self.snapshot_ledger().total_joules(core_id)

    def clone(self) -> "Platform":
        return copy.deepcopy(self)


def make_platform(config: PlatformConfig, initial_mode: str = OFF) -> Platform:
    """All cores in ``initial_mode`` at t=0 with an empty ledger."""
    return Platform(config, initial_mode)


def execution_duration(work_mb: float, core: CoreSpec) -> float:
    """Seconds the core needs for ``work_mb`` MB of work."""
    if work_mb < 0:
        raise ValueError(f"work must be non-negative, got {work_mb}")
    return work_mb / core.capacity


def switch_cost(state_mb: float, config: PlatformConfig) -> float:
    """Seconds to move task state through the cache on a core switch."""
    if state_mb < 0:
        raise ValueError(f"state size must be non-negative, got {state_mb}")
    return config.switch_fixed_cost + state_mb / config.cache_bandwidth
