"""Nodal emissions, average emission rates and marginal emission rates.

Units: MW, lbs CO2/h for emission flows, lbs CO2/MWh for rates. Undefined
rates (average rate at a zero-demand bus, marginal rate where the perturbed
dispatch is infeasible) are NaN.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dispatch import TAU_FEAS, DispatchResult, DispatchSolver, solve_dcopf
from .errors import InfeasibleDispatchError
from .flowgraph import FlowGraph, build_flow_graph
from .network import Network, scale_loads
from .tracing import ContributionMatrix, trace_all, trace_sensitivity

EPS_RELATIVE = 1e-4
EPS_FLOOR = 1e-3  # MW
CONSISTENCY_TOL = 1e-6  # lbs/MWh


@dataclass(frozen=True, eq=False)
class EmissionReport:
    bus_ids: tuple[int, ...]
    demand: np.ndarray
    node_total_emission: np.ndarray
    average_rate: np.ndarray
    marginal_rate: np.ndarray
    system_emission: float
    system_cost: float
    load_factor: float
    marginal_notes: dict[int, str] = field(default_factory=dict)
    dispatch: DispatchResult | None = field(default=None, repr=False)
    contributions: ContributionMatrix | None = field(default=None, repr=False)

    def summary(self) -> dict[str, float]:
        """Mean and population standard deviation of both rates over defined buses."""
        out: dict[str, float] = {"load_factor": self.load_factor}
        for name, vals in (("avg_rate", self.average_rate), ("marginal_rate", self.marginal_rate)):
            defined = vals[~np.isnan(vals)]
            out[f"{name}_mean"] = float(defined.mean()) if defined.size else math.nan
            out[f"{name}_std"] = float(defined.std()) if defined.size else math.nan
        out["system_emission"] = self.system_emission
        out["system_cost"] = self.system_cost
        return out


class MarginalRates(NamedTuple):
    rates: np.ndarray
    epsilon: np.ndarray
    undefined: dict[int, str]
    suspected_crossings: tuple[int, ...]


def node_emissions(net: Network, m: ContributionMatrix) -> np.ndarray:
    return m.node_contrib @ net.emission_rate


def _shortcut_buses(net: Network, g: FlowGraph, eps: np.ndarray) -> dict[int, int]:
    """Bus index -> local generator index for buses fed only by their own unit.

    Beyond an empty inflow set, every incident line must carry flow out of
    the bus with more headroom than the perturbation, so the perturbed
    dispatch cannot open an inflow, and the local unit must have room to
    rise by the perturbation. These conditions do not prove that the local
    unit alone serves the increment (congestion elsewhere can force a
    redispatch), which is why the shortcut is opt-in.
    """
    degree = np.zeros(g.n_buses, dtype=int)
    np.add.at(degree, net.line_from, 1)
    np.add.at(degree, net.line_to, 1)
    out: dict[int, int] = {}
    for i, k in net.generator_at_bus.items():
        if g.in_edges[i] or len(g.out_edges[i]) != degree[i]:
            continue
        if g.injections[i] <= 0 or net.p_max[k] - g.injections[i] <= eps[i]:
            continue
        if degree[i] and g.flows[list(g.out_edges[i])].min() <= eps[i]:
            continue
        if degree[i] == 0 and g.outflow_total[i] <= eps[i]:
            continue
        out[i] = k
    return out


def average_rates(net: Network, m: ContributionMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Nodal emission (lbs/h) and average emission rate (lbs/MWh).

    Buses without inflow that host a generator take that generator's rate
    directly; zero-demand buses get NaN.
    """
    g = m.flow_graph
    total = node_emissions(net, m)
    demand = g.withdrawals
    avg = np.full(g.n_buses, np.nan)
    pos = demand > 0
    avg[pos] = total[pos] / demand[pos]
    for i, k in net.generator_at_bus.items():
        if pos[i] and not g.in_edges[i]:
            avg[i] = net.emission_rate[k]
    return total, avg


def default_epsilon(demand: np.ndarray) -> np.ndarray:
    return np.maximum(EPS_RELATIVE * np.asarray(demand, dtype=float), EPS_FLOOR)


def _perturb(net: Network, bus: int, eps: float, solver: DispatchSolver) -> tuple[Network, DispatchResult]:
    demand = np.array(net.demand, dtype=float)
    demand[bus] += eps
    pert = net.with_demand(demand)
    return pert, solver(pert)


def marginal_rates(
    net: Network,
    epsilon: float | np.ndarray | None = None,
    solver: DispatchSolver = solve_dcopf,
    base: DispatchResult | None = None,
    method: str = "derivative",
    use_shortcut: bool = False,
    check_consistency: bool = False,
    max_workers: int | None = None,
) -> MarginalRates:
    """Locational marginal emission rates by demand perturbation.

    For each bus the demand is raised by ``epsilon`` with all other demands
    fixed and the dispatch is re-solved. Two estimators are available:

    ``"derivative"`` (default)
        The change in dispatch divided by ``epsilon`` is exact while the
        perturbed demand stays in the base load region. It is pushed through
        the sharing rules in forward mode, giving the exact derivative of the
        bus's attributed emission. Results do not depend on ``epsilon``
        inside a region.
    ``"difference"``
        The perturbed case is re-traced and the forward difference
        ``(e(d + eps) - e(d)) / eps`` of the bus's emission is returned. The
        sharing rules are rational in demand, so this carries an O(eps)
        error even inside a region.

    Parameters
    ----------
    net : Network
        Base case.
    epsilon : float or array, optional
        Perturbation in MW, scalar or per bus. Defaults to
        ``max(1e-4 * demand, 1e-3)`` per bus.
    solver : callable
        Dispatch procedure applied to the perturbed networks.
    base : DispatchResult, optional
        Base dispatch; solved with ``solver`` when omitted. It must come from
        the same procedure as the perturbed solves.
    method : {"derivative", "difference"}
    use_shortcut : bool
        Give buses fed only by their own generator that generator's rate
        without a re-solve. Exact only when the local unit serves the whole
        increment, which is assumed rather than checked.
    check_consistency : bool
        Repeat every perturbation with ``epsilon / 2`` and list buses whose
        two estimates differ by more than 1e-6 lbs/MWh (suspected load-region
        crossings).
    max_workers : int, optional
        Thread pool size for the independent re-solves.
    """
    if method not in ("derivative", "difference"):
        raise ValueError(f"unknown method {method!r}")
    n = net.n_buses
    if epsilon is None:
        eps = default_epsilon(net.demand)
    else:
        eps = np.broadcast_to(np.asarray(epsilon, dtype=float), (n,)).copy()
    if not np.all(eps > 0):
        raise ValueError("epsilon must be positive")

    if base is None:
        base = solver(net)
    g = build_flow_graph(net, base)
    base_e = node_emissions(net, trace_all(net, g))
    gamma = net.emission_rate

    rates = np.full(n, np.nan)
    undefined: dict[int, str] = {}
    shortcut = _shortcut_buses(net, g, eps) if use_shortcut else {}
    for i, k in shortcut.items():
        rates[i] = gamma[k]
    todo = [i for i in range(n) if i not in shortcut]

    def one(i: int, step: float) -> float:
        try:
            pert, d = _perturb(net, i, step, solver)
        except InfeasibleDispatchError as exc:
            undefined[net.bus_ids[i]] = f"perturbed dispatch infeasible: {exc}"
            return math.nan
        if method == "difference":
            m = trace_all(pert, build_flow_graph(pert, d))
            return float((m.node_contrib[i] @ gamma - base_e[i]) / step)
        build_flow_graph(pert, d)  # validates the perturbed dispatch
        demand_dot = np.zeros(n)
        demand_dot[i] = 1.0
        _, node_dot = trace_sensitivity(
            net,
            g,
            (d.generation - base.generation) / step,
            (d.line_flows - base.line_flows) / step,
            demand_dot,
        )
        return float(node_dot[i] @ gamma)

    def run(steps: np.ndarray) -> list[float]:
        if max_workers and max_workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                return list(pool.map(lambda i: one(i, steps[i]), todo))
        return [one(i, steps[i]) for i in todo]

    for i, v in zip(todo, run(eps)):
        rates[i] = v

    suspects: list[int] = []
    if check_consistency and todo:
        for i, v in zip(todo, run(eps / 2)):
            if not math.isnan(rates[i]) and not abs(v - rates[i]) <= CONSISTENCY_TOL:
                suspects.append(net.bus_ids[i])
    return MarginalRates(rates, eps, undefined, tuple(suspects))


def emission_report(
    net: Network,
    load_factor: float = 1.0,
    epsilon: float | np.ndarray | None = None,
    dispatch: DispatchResult | None = None,
    solver: DispatchSolver = solve_dcopf,
    marginal: bool = True,
    method: str = "derivative",
    max_workers: int | None = None,
) -> EmissionReport:
    """Scale loads, dispatch, trace and compute both emission rates.

    ``dispatch`` replaces the internal solve for the average-rate path; it is
    checked against the scaled network first. Marginal rates always use
    ``solver`` for both the base and the perturbed cases.

    Raises
    ------
    InfeasibleDispatchError
        With ``load_factor`` attached.
    """
    scaled = scale_loads(net, load_factor)
    try:
        own = solver(scaled) if dispatch is None or marginal else None
        d = dispatch if dispatch is not None else own
        g = build_flow_graph(scaled, d)
        m = trace_all(scaled, g)
        total, avg = average_rates(scaled, m)
        if marginal:
            mr = marginal_rates(
                scaled, epsilon, solver=solver, base=own, method=method, max_workers=max_workers
            )
            mu, notes = mr.rates, mr.undefined
        else:
            mu, notes = np.full(scaled.n_buses, np.nan), {}
    except InfeasibleDispatchError as exc:
        raise InfeasibleDispatchError(f"load factor {load_factor:g}: {exc}", load_factor=load_factor) from exc
    return EmissionReport(
        bus_ids=scaled.bus_ids,
        demand=np.array(scaled.demand),
        node_total_emission=total,
        average_rate=avg,
        marginal_rate=mu,
        system_emission=float(total.sum()),
        system_cost=float(scaled.cost @ d.generation),
        load_factor=scaled.load_factor,
        marginal_notes=notes,
        dispatch=d,
        contributions=m,
    )


def system_emission_from_generation(net: Network, d: DispatchResult) -> float:
    return float(net.emission_rate @ d.generation)


def emission_residual(net: Network, report: EmissionReport) -> float:
    """|sum of nodal emissions - sum of generator emissions| in lbs/h."""
    assert report.dispatch is not None
    return abs(report.system_emission - system_emission_from_generation(net, report.dispatch))


__all__ = [
    "EmissionReport",
    "MarginalRates",
    "TAU_FEAS",
    "average_rates",
    "default_epsilon",
    "emission_report",
    "emission_residual",
    "marginal_rates",
    "node_emissions",
]
