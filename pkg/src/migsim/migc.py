"""Migration concurrency metric and the combined per-candidate interference."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MigcConfig:
    kappa: float = 1.0
    kappa_mig: float = 1.0

    def __post_init__(self):
        if not (self.kappa > 0 and self.kappa_mig > 0):
            raise MetricError("normalization coefficients must be positive")


@dataclass
class SelectionState:
    selected_migrations: list = field(default_factory=list)
    selected_nodes: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.selected_migrations) != len(self.selected_nodes):
            raise MetricError("selected migrations and nodes must have equal length")

    def __len__(self):
        return len(self.selected_nodes)

    def add(self, migration, node):
        self.selected_migrations.append(migration)
        self.selected_nodes.append(node)


def migc_initial(v, cliques_of_v: Sequence, mis_of_v: Sequence, cfg: MigcConfig = MigcConfig()) -> float:
    if not cliques_of_v or not mis_of_v:
        raise MetricError(f"node {v} needs at least one clique and one independent set")
    return cfg.kappa * max(map(len, cliques_of_v)) / max(map(len, mis_of_v))


def _incidence(state: SelectionState, sets: Sequence) -> float:
    if not len(state):
        raise MetricError("empty selection; use migc_initial")
    if not sets:
        return 0.0
    hits = sum(1 for node in state.selected_nodes for s in sets if node in s)
    return hits / (len(sets) * len(state))


def migind(v, state: SelectionState, mis_of_v: Sequence) -> float:
    return _incidence(state, mis_of_v)


def migcliq(v, state: SelectionState, cliques_of_v: Sequence) -> float:
    return _incidence(state, cliques_of_v)


def migc_score(v, state: SelectionState, cliques_of_v: Sequence, mis_of_v: Sequence,
               running_min_migind: float | None = None, cfg: MigcConfig = MigcConfig()) -> float:
    """A zero independence score is replaced by ``1/min + 1``, ``min`` being the
    smallest non-zero score seen among the round's candidates (1 if none)."""
    if not len(state):
        return migc_initial(v, cliques_of_v, mis_of_v, cfg)
    ind = migind(v, state, mis_of_v)
    cliq = migcliq(v, state, cliques_of_v)
    if ind > 0:
        return cliq + 1.0 / ind
    floor = running_min_migind if running_min_migind else 1.0
    return cliq + 1.0 / floor + 1.0


def interference(normalized_exec: float, migc: float, cfg: MigcConfig = MigcConfig()) -> float:
    if not 0.0 <= normalized_exec <= 1.0:
        raise MetricError("normalized execution time must lie in [0, 1]")
    return cfg.kappa_mig * normalized_exec * (1.0 + migc)
