"""Pre-copy live migration cost model.

Memory sizes are bytes, rates and bandwidths bits/second. Round ``j``
sends the data dirtied during round ``j-1``, so the volume shrinks by
``sigma = compression * dirty_rate / bandwidth`` per round.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .topology import GB


class CostModelError(ValueError):
    pass


@dataclass(frozen=True)
class VmSpec:
    memory: float = 2 * GB
    dirty_rate: float | None = None
    dirty_rate_factor: float | None = None
    compression: float = 0.8
    cpu_demand: float = 1000.0
    vcpus: int = 1
    virt_bandwidth: float = 100e6
    disk: float = 4 * GB

    def __post_init__(self):
        if not self.memory >= 0:
            raise CostModelError("memory must be non-negative")
        if not 0 < self.compression <= 1:
            raise CostModelError("compression must lie in (0, 1]")
        if self.dirty_rate is None and self.dirty_rate_factor is None:
            object.__setattr__(self, "dirty_rate", 0.0)
        if self.dirty_rate is not None and self.dirty_rate_factor is not None:
            expected = self.dirty_rate_factor * self.memory_bits
            if not math.isclose(self.dirty_rate, expected, rel_tol=1e-9, abs_tol=1e-9):
                raise CostModelError("dirty_rate disagrees with dirty_rate_factor")
        if self.dirty_rate is None:
            object.__setattr__(self, "dirty_rate", self.dirty_rate_factor * self.memory_bits)
        if self.dirty_rate < 0:
            raise CostModelError("dirty rate must be non-negative")

    @property
    def memory_bits(self) -> float:
        return self.memory * 8


@dataclass(frozen=True)
class MigrationConfig:
    max_rounds: int = 30
    downtime_threshold: float = 0.5
    pre_overhead: float = 0.0
    post_overhead: float = 0.0

    def __post_init__(self):
        if self.max_rounds < 1:
            raise CostModelError("max_rounds must be >= 1")
        if not self.downtime_threshold > 0:
            raise CostModelError("downtime_threshold must be positive")
        if self.pre_overhead < 0 or self.post_overhead < 0:
            raise CostModelError("overheads must be non-negative")


@dataclass(frozen=True)
class MigrationEstimate:
    t_mem: float
    rounds: int
    t_total: float
    downtime: float
    transferred: float
    bandwidth: float = 0.0


def sigma(vm: VmSpec, bandwidth: float) -> float:
    if not bandwidth > 0:
        raise CostModelError("bandwidth must be positive")
    return vm.compression * vm.dirty_rate / bandwidth


def estimate_rounds(vm: VmSpec, bandwidth: float, cfg: MigrationConfig) -> int:
    s = sigma(vm, bandwidth)
    if s == 0 or vm.memory_bits == 0:
        return 0
    if s >= 1:
        return cfg.max_rounds
    v_thd = cfg.downtime_threshold * bandwidth
    ratio = v_thd / vm.memory_bits
    if ratio >= 1:
        return 0
    return min(max(0, math.ceil(math.log(ratio) / math.log(s))), cfg.max_rounds)


def _geometric(s: float, n: int) -> float:
    # 1 + s + ... + s**(n-1)
    if s == 1:
        return float(n)
    return (1 - s ** n) / (1 - s)


def estimate_memory_copy(vm: VmSpec, bandwidth: float, cfg: MigrationConfig) -> MigrationEstimate:
    s = sigma(vm, bandwidth)
    i = estimate_rounds(vm, bandwidth, cfg)
    first = vm.compression * vm.memory_bits
    transferred = first * _geometric(s, i + 1)
    t_mem = transferred / bandwidth
    # with nothing re-dirtied the final stop-and-copy has nothing left to send
    downtime = first * s ** i / bandwidth if s > 0 else 0.0
    return MigrationEstimate(t_mem, i, cfg.pre_overhead + t_mem + cfg.post_overhead,
                             downtime, transferred, bandwidth)


def estimate_total(vm: VmSpec, bandwidth: float, cfg: MigrationConfig) -> MigrationEstimate:
    return estimate_memory_copy(vm, bandwidth, cfg)


def normalize_exec_times(estimates: Mapping) -> dict:
    if not estimates:
        raise CostModelError("cannot normalize an empty map")
    lo, hi = min(estimates.values()), max(estimates.values())
    if hi == lo:
        return {k: 0.0 for k in estimates}
    return {k: (v - lo) / (hi - lo) for k, v in estimates.items()}
