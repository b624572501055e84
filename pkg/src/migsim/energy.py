from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class EnergyModel:
    host_idle_watts: float = 86.0
    host_peak_watts: float = 145.0
    switch_base_watts: float = 30.0
    switch_port_watts: float = 1.0

    def __post_init__(self):
        if not self.host_peak_watts >= self.host_idle_watts >= 0:
            raise ValueError("need peak >= idle >= 0")
        if self.switch_base_watts < 0 or self.switch_port_watts < 0:
            raise ValueError("switch power terms must be non-negative")

    @property
    def slope(self) -> float:
        return self.host_peak_watts - self.host_idle_watts

    def host_power(self, utilization: float, active: bool = True) -> float:
        if not active:
            return 0.0
        return self.host_idle_watts + self.slope * min(max(utilization, 0.0), 1.0)
