"""Utilization traces, scenario files and synthetic scenario generators."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .energy import EnergyModel
from .migcost import MigrationConfig, VmSpec
from .topology import GB, GBPS, HostSpec, Topology, build_fat_tree, build_star

RNG = "PCG64"   # numpy's permuted congruential generator, seeded via SeedSequence


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class UtilizationTrace:
    samples: tuple
    interval: float = 300.0

    def __post_init__(self):
        if not self.samples:
            raise ScenarioError("trace is empty")
        if any(not 0.0 <= s <= 1.0 for s in self.samples):
            raise ScenarioError("trace samples must lie in [0, 1]")
        if not self.interval > 0:
            raise ScenarioError("trace interval must be positive")

    def __len__(self):
        return len(self.samples)


def parse_trace(path, interval: float = 300.0) -> UtilizationTrace:
    """One integer-ish percentage per line."""
    samples = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                value = float(line)
            except ValueError:
                raise ScenarioError(f"{path}:{n}: not a number: {line!r}") from None
            if not 0 <= value <= 100:
                raise ScenarioError(f"{path}:{n}: {value} outside [0, 100]")
            samples.append(value / 100.0)
    if not samples:
        raise ScenarioError(f"{path}: empty trace")
    return UtilizationTrace(tuple(samples), interval)


def vm_to_dict(spec: VmSpec) -> dict:
    d = asdict(spec)
    if spec.dirty_rate_factor is not None:
        d.pop("dirty_rate")
    return d


def host_to_dict(spec: HostSpec) -> dict:
    return asdict(spec)


def build_topology(doc: Mapping) -> Topology:
    kind = doc.get("type", "explicit")
    host = HostSpec(**doc["host"]) if "host" in doc else None
    if kind == "fat-tree":
        return build_fat_tree(int(doc["k"]), float(doc.get("link_bandwidth", GBPS)), host)
    if kind == "star":
        return build_star(doc["hosts"], float(doc.get("link_bandwidth", GBPS)), host)
    if kind == "explicit":
        return Topology.from_dict(doc, host)
    raise ScenarioError(f"unknown topology type {kind!r}; expected fat-tree, star or explicit")


@dataclass
class Scenario:
    name: str
    kind: str
    topology: dict
    hosts: dict          # managed host id -> HostSpec fields
    vms: dict            # vm id -> VmSpec fields
    placement: dict      # vm id -> host id
    policy: dict = field(default_factory=lambda: {"name": "sandpiper"})
    selector: str = "camig"
    objective: dict = field(default_factory=dict)
    migration: dict = field(default_factory=dict)
    camig: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)   # vm id -> samples
    interval: float = 300.0
    horizon: float = 0.0
    warmup: int = 0
    patience: int = 1
    energy: dict = field(default_factory=dict)
    seed: int = 0
    rng: str = RNG

    def __post_init__(self):
        if self.kind not in ("load-balance", "energy"):
            raise ScenarioError(f"unknown scenario kind {self.kind!r}")
        for vm, h in self.placement.items():
            if vm not in self.vms:
                raise ScenarioError(f"placement references unknown VM {vm!r}")
            if h not in self.hosts:
                raise ScenarioError(f"placement of {vm} references unknown host {h!r}")
        missing = set(self.vms) - set(self.placement)
        if missing:
            raise ScenarioError(f"VMs without a host: {sorted(missing)[:5]}")
        for vm, tr in self.traces.items():
            if vm not in self.vms:
                raise ScenarioError(f"trace for unknown VM {vm!r}")
            if isinstance(tr, str):
                self.traces[vm] = list(parse_trace(tr, self.interval).samples)
        if self.kind == "energy":
            need = self.warmup + self.intervals
            short = [vm for vm in self.vms if len(self.traces.get(vm, ())) < need]
            if short:
                raise ScenarioError(f"traces shorter than warmup + horizon ({need}) for {short[:5]}")

    @property
    def intervals(self) -> int:
        return int(math.ceil(self.horizon / self.interval - 1e-9)) if self.horizon else 0

    def to_dict(self) -> dict:
        return copy.deepcopy({f.name: getattr(self, f.name) for f in fields(self)})

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Scenario":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        try:
            return cls(**json.loads(json.dumps(doc)))
        except TypeError as e:
            raise ScenarioError(str(e)) from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ScenarioError(f"{path}: {e}") from None
        base = Path(path).parent
        for vm, tr in doc.get("traces", {}).items():
            if isinstance(tr, str) and not Path(tr).is_absolute():
                doc["traces"][vm] = str(base / tr)
        return cls.from_dict(doc)

    # builders

    def build_topology(self) -> Topology:
        t = build_topology(self.topology)
        missing = set(self.hosts) - set(t.hosts)
        if missing:
            raise ScenarioError(f"managed hosts missing from topology: {sorted(missing)[:5]}")
        return t

    def host_specs(self) -> dict:
        return {h: HostSpec(**d) for h, d in self.hosts.items()}

    def vm_specs(self) -> dict:
        return {vm: VmSpec(**d) for vm, d in self.vms.items()}

    def migration_config(self) -> MigrationConfig:
        return MigrationConfig(**self.migration)

    def energy_model(self) -> EnergyModel:
        return EnergyModel(**self.energy)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def load_lb_fixture() -> dict:
    return json.loads(resources.files("migsim").joinpath("data/lb_base.json").read_text())


LB_MIGRATION = {"max_rounds": 30, "downtime_threshold": 0.5}


def synth_lb_scenario(seed: int = 0, multiplier: int = 1, policy: str = "sandpiper",
                      selector: str = "camig", memory_range: tuple | None = None,
                      host_memory: float = 256 * GB, dirty_rate_factor: float = 0.001,
                      compression: float = 0.8) -> Scenario:
    """The 8-host base mapping replicated ``multiplier`` times, hosts at random
    positions among the first slots of a k=8 fat tree. With ``memory_range``
    VM memory sizes are redrawn uniformly (whole GB) from the seed."""
    if multiplier not in (1, 2, 3, 4):
        raise ScenarioError("multiplier must be 1, 2, 3 or 4")
    base = load_lb_fixture()
    rng = _rng(seed)
    n = 8 * multiplier
    slots = [f"h{i}" for i in rng.permutation(n)]
    cpu_total = base["host_cpu_mips"]
    hosts, vms, placement = {}, {}, {}
    for rep in range(multiplier):
        for j, (name, entries) in enumerate(sorted(base["hosts"].items())):
            h = slots[rep * 8 + j]
            hosts[h] = host_to_dict(HostSpec(cpu_total_mips=cpu_total, memory=host_memory))
            for i, (pct, mem) in enumerate(entries):
                vm = f"vm{rep}_{name}_{i}"
                if memory_range is not None:
                    lo, hi = memory_range
                    mem = float(rng.integers(int(lo // GB), int(hi // GB) + 1))
                vms[vm] = vm_to_dict(VmSpec(memory=mem * GB, dirty_rate_factor=dirty_rate_factor,
                                            compression=compression, cpu_demand=pct / 100 * cpu_total))
                placement[vm] = h
    return Scenario(
        name=f"lb_multi{multiplier}", kind="load-balance",
        topology={"type": "fat-tree", "k": 8, "link_bandwidth": GBPS},
        hosts=dict(sorted(hosts.items())), vms=vms, placement=placement,
        policy={"name": policy, "upper": 0.55, "lower": 0.45, "vm_depth": 1},
        selector=selector,
        objective={"kind": "load-balance", "band": [0.45, 0.55]},
        migration=dict(LB_MIGRATION), seed=seed)


FLAVORS = [
    {"cpu_demand": 2500.0, "memory": 2 * GB},
    {"cpu_demand": 2000.0, "memory": 4 * GB},
    {"cpu_demand": 1000.0, "memory": 4 * GB},
    {"cpu_demand": 1000.0, "memory": 2 * GB},
]
ENERGY_HOST = HostSpec(cpu_total_mips=4000.0, cores=8, memory=16 * GB, storage=1000 * GB,
                       nic_bandwidth=GBPS)


def fat_tree_arity(hosts: int) -> int:
    k = 4
    while k ** 3 // 4 < hosts:
        k += 2
    return k


def random_walk(rng: np.random.Generator, n: int, start=(0.05, 0.6), step: float = 0.1) -> list:
    x = float(rng.uniform(*start))
    out = []
    for _ in range(n):
        out.append(round(x, 4))
        x = min(1.0, max(0.0, x + float(rng.normal(0.0, step))))
    return out


def synth_energy_scenario(seed: int = 0, hosts: int = 32, vms: int | None = None,
                          horizon: float = 7200.0, interval: float = 300.0, warmup: int = 10,
                          selector: str = "camig", traces: Mapping | None = None) -> Scenario:
    """Consolidation scenario: VMs cycle through four flavors, one VM per host
    round-robin, utilization from seeded random walks unless ``traces`` given."""
    if hosts < 1:
        raise ScenarioError("need at least one host")
    vms = hosts + max(1, hosts // 32) if vms is None else vms
    rng = _rng(seed)
    k = fat_tree_arity(hosts)
    slots = sorted(int(i) for i in rng.choice(k ** 3 // 4, size=hosts, replace=False))
    host_ids = [f"h{i}" for i in slots]
    n = warmup + int(math.ceil(horizon / interval - 1e-9))
    vm_docs, placement, trace_docs = {}, {}, {}
    for i in range(vms):
        flavor = FLAVORS[i % len(FLAVORS)]
        vm = f"vm{i}"
        vm_docs[vm] = vm_to_dict(VmSpec(memory=flavor["memory"], dirty_rate_factor=0.001,
                                        compression=0.8, cpu_demand=flavor["cpu_demand"], vcpus=2,
                                        virt_bandwidth=100e6, disk=4 * GB))
        placement[vm] = host_ids[i % hosts]
        if traces is not None:
            trace_docs[vm] = list(traces[vm])
        else:
            trace_docs[vm] = random_walk(rng, n)
    return Scenario(
        name=f"energy_{hosts}h", kind="energy",
        topology={"type": "fat-tree", "k": k, "link_bandwidth": GBPS},
        hosts={h: host_to_dict(ENERGY_HOST) for h in host_ids}, vms=vm_docs, placement=placement,
        policy={"name": "lrmmt", "window": 10, "safety": 1.2, "under": 0.3, "upper": 0.8},
        selector=selector, objective={"kind": "energy"}, migration=dict(LB_MIGRATION),
        traces=trace_docs, interval=interval, horizon=horizon, warmup=warmup, seed=seed)
