"""Liveness-guided uncomputation for a small scoped quantum language."""
from __future__ import annotations

from .analysis import analyze, build_dependence_graph, build_entanglement_trace, compute_lifetimes, compute_liveness
from .frontend import load, load_unit, parse, resolve_aliases
from .ir import adjoint_of, inline
from .reclaim import (
    certify_isolability, check_constraints, enforce_param_semantics, insert_early_uncompute,
    insert_global_uncompute, plan_early_reclamation,
)
from .schedule import allocate_registers, compare_strategies, schedule_asap

__all__ = [
    "adjoint_of", "allocate_registers", "analyze", "build_dependence_graph", "build_entanglement_trace",
    "certify_isolability", "check_constraints", "compare_strategies", "compute_lifetimes", "compute_liveness",
    "enforce_param_semantics", "inline", "insert_early_uncompute", "insert_global_uncompute", "load",
    "load_unit", "parse", "plan_early_reclamation", "resolve_aliases", "schedule_asap",
]
