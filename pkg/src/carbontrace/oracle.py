"""Dense linear-system formulation of downstream tracing.

Test-only reference for :mod:`carbontrace.tracing`. For every generator the
power it pushes through each bus solves

    x_i = seed_i + sum_{h -> i} x_h * flow_hi / throughflow_h

which is assembled as ``(I - M) X = S`` for all generators at once and
handed to a dense solver. No graph traversal is involved.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvariantError
from .flowgraph import FlowGraph
from .network import Network

MAX_BUSES = 64


@dataclass(frozen=True)
class TraceOracleSolution:
    node_contrib: np.ndarray


def oracle_trace(net: Network, g: FlowGraph) -> TraceOracleSolution:
    n = g.n_buses
    if n > MAX_BUSES:
        raise ValueError(f"oracle is meant for <= {MAX_BUSES} buses, got {n}")
    through = g.withdrawals + _outflow(g)
    safe = np.where(through > 0, through, 1.0)

    transfer = np.zeros((n, n))
    for t, h, f in zip(g.tails, g.heads, g.flows):
        transfer[h, t] += f / safe[t]

    seeds = np.zeros((n, net.n_generators))
    seeds[net.gen_bus, np.arange(net.n_generators)] = g.injections[net.gen_bus]

    system = np.eye(n) - transfer
    if abs(np.linalg.det(system)) < 1e-12:
        raise InvariantError("oracle system is singular")
    x = np.linalg.solve(system, seeds)
    share = np.where(through > 0, g.withdrawals / safe, 0.0)
    return TraceOracleSolution(node_contrib=x * share[:, None])


def _outflow(g: FlowGraph) -> np.ndarray:
    out = np.zeros(g.n_buses)
    for t, f in zip(g.tails, g.flows):
        out[t] += f
    return out
