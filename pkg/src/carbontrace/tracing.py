"""Per-generator proportional-sharing trace over the flow graph.

Power entering a bus leaves it, split between local demand and outgoing
lines in proportion to their sizes, and carries each upstream generator's
share unchanged. Following one generator's injection downstream therefore
yields its contribution to every demand and every line.

Buses are visited in topological order, so all of a bus's traced inflow is
accumulated before it is split; each generator costs O(N + L).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dispatch import TAU_FEAS
from .errors import InvariantError
from .flowgraph import FlowGraph
from .network import Network


@dataclass(frozen=True, eq=False)
class ContributionMatrix:
    """Generator contributions in MW.

    ``node_contrib[i, k]`` is generator ``k``'s share of bus ``i``'s demand;
    ``line_contrib[l, k]`` its share of the oriented flow on network line
    ``l``. ``reachable_sets[k]`` holds the bus ids generator ``k`` supplies.
    """

    node_contrib: np.ndarray
    line_contrib: np.ndarray
    reachable_sets: tuple[frozenset[int], ...]
    flow_graph: FlowGraph = field(repr=False)

    def inflow_proportions(self) -> np.ndarray:
        """Fraction of each bus's throughflow traceable to each generator.

        Zero rows for buses that carry no power.
        """
        demand = self.flow_graph.withdrawals
        out = np.zeros_like(self.node_contrib)
        pos = demand > 0
        out[pos] = self.node_contrib[pos] / demand[pos, None]
        return out


def share_inflow(inflow_amount: float, node: int, g: FlowGraph) -> tuple[float, np.ndarray]:
    """Split power arriving at bus index ``node`` between its demand and out-edges.

    Returns the demand share and one share per entry of ``g.out_edges[node]``.
    Both are proportional to the bus's demand and line outflows.
    """
    out = g.out_edges[node]
    denom = g.throughflow[node]
    if inflow_amount == 0:
        return 0.0, np.zeros(len(out))
    if not denom > 0:
        raise InvariantError(
            f"bus {g.bus_ids[node]} receives {inflow_amount:.6g} MW but has no demand or outflow"
        )
    scale = inflow_amount / denom
    return float(g.withdrawals[node] * scale), g.flows[list(out)] * scale


def trace_generator(k: int, net: Network, g: FlowGraph) -> tuple[np.ndarray, np.ndarray]:
    """Trace generator index ``k``'s output down the flow graph.

    Returns
    -------
    node_column : ndarray, shape (N,)
        MW of each bus's demand supplied by generator ``k``.
    line_column : ndarray, shape (L,)
        MW of each network line's flow carried for generator ``k``.
    """
    root = int(net.gen_bus[k])
    seed = float(g.injections[root])
    node_col = np.zeros(g.n_buses)
    line_col = np.zeros(net.n_lines)
    if seed <= 0:
        return node_col, line_col

    arriving = np.zeros(g.n_buses)
    arriving[root] = seed
    order = g.topological_indices()
    for i in order[order.index(root):]:
        amount = arriving[i]
        if amount == 0:
            continue
        demand_share, out_shares = share_inflow(amount, i, g)
        node_col[i] = demand_share
        for e, share in zip(g.out_edges[i], out_shares):
            arriving[g.heads[e]] += share
            if g.edge_line[e] >= 0:
                line_col[g.edge_line[e]] = share
    return node_col, line_col


def trace_all(net: Network, g: FlowGraph, validate: bool = True) -> ContributionMatrix:
    """Trace every generator and assemble the contribution matrix.

    With ``validate`` the conservation identities are checked and the first
    residual above tolerance raises :class:`InvariantError`.
    """
    K = net.n_generators
    node = np.zeros((g.n_buses, K))
    line = np.zeros((net.n_lines, K))
    for k in range(K):
        node[:, k], line[:, k] = trace_generator(k, net, g)

    ids = g.bus_ids
    reachable = tuple(
        frozenset(ids[i] for i in np.flatnonzero(node[:, k] >= TAU_FEAS)) for k in range(K)
    )
    m = ContributionMatrix(node, line, reachable, g)
    if validate:
        problems = contribution_residuals(net, m)
        if problems:
            raise InvariantError("; ".join(problems[:5]))
    return m


def contribution_residuals(net: Network, m: ContributionMatrix, tol: float = TAU_FEAS) -> list[str]:
    """Describe every conservation identity ``m`` breaks by more than ``tol``."""
    g = m.flow_graph
    ids = g.bus_ids
    out: list[str] = []
    if (m.node_contrib < 0).any() or (m.line_contrib < 0).any():
        out.append("negative contribution entry")
    row = m.node_contrib.sum(axis=1) - g.withdrawals
    for i in np.flatnonzero(np.abs(row) > tol):
        out.append(f"bus {ids[i]}: contributions miss demand by {row[i]:.3g} MW")
    gen = np.array([g.injections[b] for b in net.gen_bus])
    col = m.node_contrib.sum(axis=0) - gen
    for k in np.flatnonzero(np.abs(col) > tol):
        out.append(f"generator {net.generators[k].id}: contributions miss output by {col[k]:.3g} MW")
    oriented = np.zeros(net.n_lines)
    real = g.edge_line >= 0
    oriented[g.edge_line[real]] = g.flows[real]
    ln = m.line_contrib.sum(axis=1) - oriented
    for l in np.flatnonzero(np.abs(ln) > tol):
        line = net.lines[l]
        out.append(f"line {line.from_bus}-{line.to_bus}: contributions miss flow by {ln[l]:.3g} MW")
    covered = set().union(*m.reachable_sets) if m.reachable_sets else set()
    for i in np.flatnonzero(g.withdrawals > tol):
        if ids[i] not in covered:
            out.append(f"bus {ids[i]}: demand not reached by any generator")
    return out


def trace_sensitivity(
    net: Network,
    g: FlowGraph,
    generation_dot: np.ndarray,
    flows_dot: np.ndarray,
    demand_dot: np.ndarray,
    tau_dot: float = 1e-9,
) -> tuple[np.ndarray, np.ndarray]:
    """Contributions and their derivative along a dispatch direction.

    ``generation_dot``, ``flows_dot`` (signed, network line order) and
    ``demand_dot`` give the rate of change of the dispatch. Within one load
    region this direction is exact, and propagating it through the sharing
    rules in forward mode gives the exact one-sided derivative of every
    contribution.

    Lines idle in ``g`` but moving along the direction are oriented by the
    sign of their derivative.

    Returns
    -------
    node_contrib, node_contrib_dot : ndarray, shape (N, K)
    """
    n, K = g.n_buses, net.n_generators
    base = np.zeros(net.n_lines)
    real = g.edge_line >= 0
    base[g.edge_line[real]] = g.flows[real]
    sign = np.zeros(net.n_lines)
    sign[g.edge_line[real]] = np.where(g.tails[real] == net.line_from[g.edge_line[real]], 1.0, -1.0)

    idle = (sign == 0) & (np.abs(flows_dot) > tau_dot)
    sign[idle] = np.sign(flows_dot[idle])
    lines = np.flatnonzero(sign != 0)
    s = sign[lines]
    tails = np.where(s > 0, net.line_from[lines], net.line_to[lines])
    heads = np.where(s > 0, net.line_to[lines], net.line_from[lines])
    f = base[lines]
    f_dot = s * flows_dot[lines]

    ext = FlowGraph(
        bus_ids=g.bus_ids,
        tails=tails.astype(int),
        heads=heads.astype(int),
        flows=f,
        edge_line=lines.astype(int),
        injections=g.injections,
        withdrawals=g.withdrawals,
    )
    order = ext.topological_indices()
    out_edges = ext.out_edges

    d = g.withdrawals
    d_dot = np.asarray(demand_dot, dtype=float)
    through = d.copy()
    through_dot = d_dot.copy()
    np.add.at(through, tails, f)
    np.add.at(through_dot, tails, f_dot)

    node = np.zeros((n, K))
    node_dot = np.zeros((n, K))
    for k in range(K):
        root = int(net.gen_bus[k])
        a = np.zeros(n)
        a_dot = np.zeros(n)
        a[root] = g.injections[root]
        a_dot[root] = generation_dot[k]
        if a[root] <= 0 and a_dot[root] == 0:
            continue
        for i in order[order.index(root):]:
            if a[i] == 0 and a_dot[i] == 0:
                continue
            T, T_dot = through[i], through_dot[i]
            edges = out_edges[i]
            if T > 0:
                node[i, k] = a[i] * d[i] / T
                node_dot[i, k] = (a_dot[i] * d[i] + a[i] * d_dot[i]) / T - a[i] * d[i] * T_dot / T**2
                for e in edges:
                    a[heads[e]] += a[i] * f[e] / T
                    a_dot[heads[e]] += (a_dot[i] * f[e] + a[i] * f_dot[e]) / T - a[i] * f[e] * T_dot / T**2
            elif T_dot > 0:
                # bus idle at the base point: shares open up at the rates' ratio
                node_dot[i, k] = a_dot[i] * d_dot[i] / T_dot
                for e in edges:
                    a_dot[heads[e]] += a_dot[i] * f_dot[e] / T_dot
            elif a[i] > 0 or a_dot[i] != 0:
                raise InvariantError(f"bus {g.bus_ids[i]} receives power but has no demand or outflow")
    return node, node_dot
