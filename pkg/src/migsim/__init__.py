"""Concurrency-aware live VM migration planning and simulation."""
from .depgraph import (DepGraph, Move, SrcDstNode, all_maximal_cliques, build_dep_graph,
                       node_cliques, node_maximal_independent_sets, update_dep_graph)
from .energy import EnergyModel
from .migc import MigcConfig, SelectionState, interference, migc_score
from .migcost import MigrationConfig, MigrationEstimate, VmSpec, estimate_total
from .policies import Placement, PolicyObjective
from .selector import CamigConfig, MigrationPlan, run_camig, select
from .sim import Schedule, ScheduleReport, plan_schedule, run_schedule
from .topology import HostSpec, Topology, build_fat_tree, build_star

__version__ = "0.1.0"
