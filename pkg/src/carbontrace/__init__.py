"""Flow-tracing attribution of generator carbon emissions to loads."""
from .dispatch import DispatchResult, load_dispatch, save_dispatch, solve_dcopf, verify_dispatch
from .emissions import EmissionReport, average_rates, emission_report, marginal_rates, node_emissions
from .errors import (
    CarbonTraceError,
    CaseFormatError,
    CycleError,
    InfeasibleDispatchError,
    InvariantError,
    ValidationError,
)
from .flowgraph import FlowGraph, build_flow_graph, check_acyclic
from .network import Bus, Generator, Line, Network, load_network, save_network, scale_loads
from .tracing import ContributionMatrix, share_inflow, trace_all, trace_generator

__all__ = [
    "Bus",
    "CarbonTraceError",
    "CaseFormatError",
    "ContributionMatrix",
    "CycleError",
    "DispatchResult",
    "EmissionReport",
    "FlowGraph",
    "Generator",
    "InfeasibleDispatchError",
    "InvariantError",
    "Line",
    "Network",
    "ValidationError",
    "average_rates",
    "build_flow_graph",
    "check_acyclic",
    "emission_report",
    "load_dispatch",
    "load_network",
    "marginal_rates",
    "node_emissions",
    "save_dispatch",
    "save_network",
    "scale_loads",
    "share_inflow",
    "solve_dcopf",
    "trace_all",
    "trace_generator",
    "verify_dispatch",
]
