"""Directed flow graph: every loaded line oriented along its actual flow."""
from __future__ import annotations

import graphlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from .dispatch import TAU_FEAS, DispatchResult, verify_dispatch
from .errors import CycleError, ValidationError
from .network import Network

TAU_FLOW = 1e-7
"""Lines carrying at most this many MW get no edge."""


@dataclass(frozen=True, eq=False)
class FlowGraph:
    """Lines with non-negligible flow, oriented tail -> head.

    Arrays are indexed by internal bus index (position in ``bus_ids``) and by
    edge number. ``edge_line`` maps an edge back to its network line, or -1
    for graphs assembled by hand.
    """

    bus_ids: tuple[int, ...]
    tails: np.ndarray
    heads: np.ndarray
    flows: np.ndarray
    edge_line: np.ndarray
    injections: np.ndarray
    withdrawals: np.ndarray
    order: tuple[int, ...] | None = field(default=None)

    @classmethod
    def from_edges(
        cls,
        edges: Iterable[tuple[int, int, float]],
        injections: Mapping[int, float] | None = None,
        withdrawals: Mapping[int, float] | None = None,
        bus_ids: Iterable[int] | None = None,
    ) -> "FlowGraph":
        """Assemble a graph from ``(tail_id, head_id, flow_mw)`` triples."""
        edges = list(edges)
        injections = dict(injections or {})
        withdrawals = dict(withdrawals or {})
        ids = set(bus_ids or ())
        ids.update(t for t, _, _ in edges)
        ids.update(h for _, h, _ in edges)
        ids.update(injections)
        ids.update(withdrawals)
        ordered = tuple(sorted(ids))
        index = {b: i for i, b in enumerate(ordered)}
        return cls(
            bus_ids=ordered,
            tails=np.array([index[t] for t, _, _ in edges], dtype=int),
            heads=np.array([index[h] for _, h, _ in edges], dtype=int),
            flows=np.array([f for _, _, f in edges], dtype=float),
            edge_line=np.full(len(edges), -1, dtype=int),
            injections=np.array([injections.get(b, 0.0) for b in ordered], dtype=float),
            withdrawals=np.array([withdrawals.get(b, 0.0) for b in ordered], dtype=float),
        )

    @property
    def n_buses(self) -> int:
        return len(self.bus_ids)

    @property
    def n_edges(self) -> int:
        return len(self.flows)

    @cached_property
    def out_edges(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.n_buses)]
        for e, t in enumerate(self.tails):
            out[t].append(e)
        return tuple(tuple(x) for x in out)

    @cached_property
    def in_edges(self) -> tuple[tuple[int, ...], ...]:
        inc: list[list[int]] = [[] for _ in range(self.n_buses)]
        for e, h in enumerate(self.heads):
            inc[h].append(e)
        return tuple(tuple(x) for x in inc)

    @cached_property
    def outflow_total(self) -> np.ndarray:
        out = np.zeros(self.n_buses)
        np.add.at(out, self.tails, self.flows)
        return out

    @cached_property
    def inflow_total(self) -> np.ndarray:
        inc = np.zeros(self.n_buses)
        np.add.at(inc, self.heads, self.flows)
        return inc

    @cached_property
    def throughflow(self) -> np.ndarray:
        """Power leaving each bus: demand plus outgoing line flow."""
        return self.withdrawals + self.outflow_total

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        ids = self.bus_ids
        return [(ids[t], ids[h], float(f)) for t, h, f in zip(self.tails, self.heads, self.flows)]

    @cached_property
    def inflow_sets(self) -> dict[int, frozenset[int]]:
        ids = self.bus_ids
        return {ids[i]: frozenset(ids[self.tails[e]] for e in self.in_edges[i]) for i in range(self.n_buses)}

    @cached_property
    def outflow_sets(self) -> dict[int, frozenset[int]]:
        ids = self.bus_ids
        return {ids[i]: frozenset(ids[self.heads[e]] for e in self.out_edges[i]) for i in range(self.n_buses)}

    def balance_residual(self) -> np.ndarray:
        """injections + inflows - withdrawals - outflows, per bus."""
        return self.injections + self.inflow_total - self.withdrawals - self.outflow_total

    def topological_indices(self) -> tuple[int, ...]:
        if self.order is not None:
            return self.order
        ids = self.bus_ids
        index = {b: i for i, b in enumerate(ids)}
        return tuple(index[b] for b in check_acyclic(self))


def build_flow_graph(net: Network, d: DispatchResult, tau_flow: float = TAU_FLOW) -> FlowGraph:
    """Orient every line with ``|flow| > tau_flow`` along its flow.

    Raises
    ------
    ValidationError
        ``d`` fails :func:`~carbontrace.dispatch.verify_dispatch`.
    CycleError
        The oriented graph is cyclic (impossible for a genuine DC flow).
    """
    violations = verify_dispatch(net, d)
    if violations:
        shown = "; ".join(v.describe(net) for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        raise ValidationError(f"dispatch invalid: {shown}{more}")

    flows = np.asarray(d.line_flows, dtype=float)
    keep = np.flatnonzero(np.abs(flows) > tau_flow)
    fwd = flows[keep] > 0
    tails = np.where(fwd, net.line_from[keep], net.line_to[keep])
    heads = np.where(fwd, net.line_to[keep], net.line_from[keep])
    injections = np.zeros(net.n_buses)
    np.add.at(injections, net.gen_bus, d.generation)

    g = FlowGraph(
        bus_ids=net.bus_ids,
        tails=tails.astype(int),
        heads=heads.astype(int),
        flows=np.abs(flows[keep]),
        edge_line=keep.astype(int),
        injections=injections,
        withdrawals=np.array(net.demand, dtype=float),
    )
    index = net.bus_index
    order = tuple(index[b] for b in check_acyclic(g))
    object.__setattr__(g, "order", order)
    return g


def check_acyclic(g: FlowGraph) -> list[int]:
    """Topologically order the buses of ``g`` (returned as bus ids).

    Buses that become ready together are emitted in ascending id order.

    Raises
    ------
    CycleError
        With one directed cycle's bus ids, starting from its smallest id.
    """
    ids = g.bus_ids
    preds: dict[int, set[int]] = {i: set() for i in range(g.n_buses)}
    for t, h in zip(g.tails, g.heads):
        preds[int(h)].add(int(t))
    sorter = graphlib.TopologicalSorter(preds)
    try:
        sorter.prepare()
    except graphlib.CycleError as exc:
        raise CycleError(_orient_cycle(g, exc.args[1][:-1])) from None
    order: list[int] = []
    while sorter.is_active():
        ready = sorted(sorter.get_ready())
        order.extend(ready)
        sorter.done(*ready)
    return [ids[i] for i in order]


def _orient_cycle(g: FlowGraph, cycle: list[int]) -> list[int]:
    edge_set = set(zip(g.tails.tolist(), g.heads.tolist()))
    if not all((cycle[i], cycle[(i + 1) % len(cycle)]) in edge_set for i in range(len(cycle))):
        cycle = cycle[::-1]
    start = cycle.index(min(cycle))
    cycle = cycle[start:] + cycle[:start]
    return [g.bus_ids[i] for i in cycle]


def nodal_balance_ok(g: FlowGraph, tol: float = TAU_FEAS) -> bool:
    return bool(np.all(np.abs(g.balance_residual()) <= tol))
