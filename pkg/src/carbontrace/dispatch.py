"""DC optimal power flow and dispatch validation.

The LP is::

    min  c @ p
    s.t. p_i - d_i = sum_j beta_ij (theta_i - theta_j)    for every bus i
         limit_low <= beta_ij (theta_i - theta_j) <= limit_high
         p_min <= p <= p_max,  theta_ref = 0

solved with HiGHS dual simplex. Ties among cost-optimal dispatches are broken
towards the lexicographically smallest generation vector by a sequence of
re-solves restricted to the optimal face, and the final vertex is recomputed
from its active constraint set so that repeated solves with slightly different
demand differ only by the true change in the solution.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np
from scipy.optimize import linprog

from .errors import CaseFormatError, InfeasibleDispatchError, ValidationError
from .network import Network

TAU_FEAS = 1e-6
"""Absolute feasibility tolerance in MW (radians for the reference angle)."""

_COST_SLACK = 1e-11  # relative slack on the optimal cost during tie-break re-solves
_ACTIVE_TOL = 1e-6


@dataclass(frozen=True)
class DispatchResult:
    generation: np.ndarray
    angles: np.ndarray
    line_flows: np.ndarray
    objective_cost: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "generation": [float(v) for v in self.generation],
            "angles": [float(v) for v in self.angles],
            "line_flows": [float(v) for v in self.line_flows],
            "objective_cost": float(self.objective_cost),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DispatchResult":
        try:
            return cls(
                generation=np.asarray(data["generation"], dtype=float),
                angles=np.asarray(data["angles"], dtype=float),
                line_flows=np.asarray(data["line_flows"], dtype=float),
                objective_cost=float(data["objective_cost"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CaseFormatError(f"malformed dispatch data: {exc!r}") from exc


def save_dispatch(d: DispatchResult, path: str | Path) -> None:
    Path(path).write_text(json.dumps(d.to_dict(), indent=2) + "\n")


def load_dispatch(path: str | Path) -> DispatchResult:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise CaseFormatError(f"{path}: top-level JSON value must be an object")
    return DispatchResult.from_dict(data)


DispatchSolver = Callable[[Network], DispatchResult]


# -- LP assembly --------------------------------------------------------------

class _DCOPF:
    """Dense LP matrices for one network; variables are ``[p (K), theta (N)]``."""

    def __init__(self, net: Network):
        self.net = net
        K, N = net.n_generators, net.n_buses
        self.K, self.N = K, N
        gen_inc = np.zeros((N, K))
        gen_inc[net.gen_bus, np.arange(K)] = 1.0
        # flow = F @ theta
        self.F = net.susceptance[:, None] * net.incidence.T
        b_bus = net.incidence @ self.F
        self.A_eq = np.hstack([gen_inc, -b_bus])
        self.b_eq = np.array(net.demand, dtype=float)
        self.c = np.concatenate([net.cost, np.zeros(N)])

        rows, rhs = [], []
        hi = np.isfinite(net.limit_high)
        lo = np.isfinite(net.limit_low)
        if hi.any():
            rows.append(np.hstack([np.zeros((hi.sum(), K)), self.F[hi]]))
            rhs.append(net.limit_high[hi])
        if lo.any():
            rows.append(np.hstack([np.zeros((lo.sum(), K)), -self.F[lo]]))
            rhs.append(-net.limit_low[lo])
        self.A_ub = np.vstack(rows) if rows else np.zeros((0, K + N))
        self.b_ub = np.concatenate(rhs) if rhs else np.zeros(0)

        self.bounds = [(float(a), float(b)) for a, b in zip(net.p_min, net.p_max)]
        self.bounds += [(None, None)] * N
        self.bounds[K + net.ref_index] = (0.0, 0.0)

    def solve(self, c, A_ub=None, b_ub=None, bounds=None, line_limits=True):
        if A_ub is None:
            A_ub, b_ub = (self.A_ub, self.b_ub) if line_limits else (None, None)
        if A_ub is not None and len(A_ub) == 0:
            A_ub, b_ub = None, None
        return linprog(
            c,
            A_ub=A_ub,
            b_ub=b_ub,
            A_eq=self.A_eq,
            b_eq=self.b_eq,
            bounds=bounds if bounds is not None else self.bounds,
            method="highs-ds",
        )


def _diagnose_infeasible(lp: _DCOPF) -> str:
    net = lp.net
    total = float(net.demand.sum())
    if net.p_max.sum() < total:
        return f"insufficient generation capacity ({net.p_max.sum():.6g} MW < demand {total:.6g} MW)"
    if net.p_min.sum() > total:
        return f"minimum generation {net.p_min.sum():.6g} MW exceeds demand {total:.6g} MW"
    res = lp.solve(lp.c, line_limits=False)
    if res.status == 0:
        return "line flow limits make the load unservable (transmission congestion)"
    return "no feasible dispatch"


def _lexicographic_tiebreak(lp: _DCOPF, x: np.ndarray, cost: float) -> np.ndarray:
    """Among cost-optimal solutions, minimise p_0, then p_1, ... in turn."""
    K = lp.K
    slack = _COST_SLACK * max(1.0, abs(cost))
    A_ub = np.vstack([lp.A_ub, lp.c[None, :]])
    b_ub = np.concatenate([lp.b_ub, [cost + slack]])
    bounds = list(lp.bounds)
    for j in range(K):
        lo = bounds[j][0]
        if x[j] - lo <= _ACTIVE_TOL:
            bounds[j] = (lo, lo)
            continue
        c = np.zeros(K + lp.N)
        c[j] = 1.0
        res = lp.solve(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds)
        if res.status != 0:
            break
        x = res.x
        v = float(min(max(x[j], lo), bounds[j][1]))
        bounds[j] = (v, v)
    return x


def _polish_vertex(lp: _DCOPF, x: np.ndarray) -> np.ndarray:
    """Recompute ``x`` exactly from the constraints it holds with equality.

    Returns ``x`` unchanged if the active set does not pin down a unique point
    close to it.
    """
    net, K, N = lp.net, lp.K, lp.N
    p, theta = x[:K], x[K:]
    flows = lp.F @ theta
    rows = [lp.A_eq]
    rhs = [lp.b_eq]
    ref = np.zeros(K + N)
    ref[K + net.ref_index] = 1.0
    rows.append(ref[None, :])
    rhs.append([0.0])
    for k in range(K):
        for bound in (net.p_min[k], net.p_max[k]):
            if abs(p[k] - bound) <= _ACTIVE_TOL:
                r = np.zeros(K + N)
                r[k] = 1.0
                rows.append(r[None, :])
                rhs.append([bound])
                break
    for l in range(net.n_lines):
        for bound in (net.limit_low[l], net.limit_high[l]):
            if np.isfinite(bound) and abs(flows[l] - bound) <= _ACTIVE_TOL:
                rows.append(np.concatenate([np.zeros(K), lp.F[l]])[None, :])
                rhs.append([bound])
                break
    A = np.vstack(rows)
    b = np.concatenate([np.atleast_1d(np.asarray(v, dtype=float)) for v in rhs])
    sol, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < K + N:
        return x
    # iterative refinement with residuals in extended precision
    A_ext, b_ext = A.astype(np.longdouble), b.astype(np.longdouble)
    for _ in range(2):
        r = (b_ext - A_ext @ sol.astype(np.longdouble)).astype(float)
        sol = sol + np.linalg.lstsq(A, r, rcond=None)[0]
    scale = max(1.0, float(np.abs(b).max()))
    if np.abs(A @ sol - b).max() > 1e-9 * scale or np.abs(sol - x).max() > 1e-4 * scale:
        return x
    for k in range(K):
        for bound in (net.p_min[k], net.p_max[k]):
            if abs(sol[k] - bound) <= 1e-9 * scale:
                sol[k] = bound
    cand = _make_result(lp, sol)
    if verify_dispatch(net, cand, tol=1e-9 * scale):
        return x
    return sol


def _make_result(lp: _DCOPF, x: np.ndarray) -> DispatchResult:
    p = x[: lp.K].copy()
    theta = x[lp.K :].copy()
    theta[lp.net.ref_index] = 0.0
    return DispatchResult(
        generation=p,
        angles=theta,
        line_flows=lp.F @ theta,
        objective_cost=float(lp.net.cost @ p),
    )


def solve_dcopf(net: Network, tiebreak: bool = True) -> DispatchResult:
    """Solve the DC optimal power flow for ``net``'s current demand.

    Parameters
    ----------
    net : Network
        Validated network; its effective demand (``net.demand``) is served.
    tiebreak : bool
        Break cost ties towards the lexicographically smallest generation
        vector. Disable only when reproducibility across runs is irrelevant.

    Returns
    -------
    DispatchResult
        Vertex-optimal dispatch with ``line_flows = beta * (theta_from - theta_to)``.

    Raises
    ------
    InfeasibleDispatchError
        The demand cannot be served; the message names the binding cause
        where it can be identified.
    """
    lp = _DCOPF(net)
    res = lp.solve(lp.c)
    if res.status == 2:
        raise InfeasibleDispatchError(_diagnose_infeasible(lp), load_factor=net.load_factor)
    if res.status != 0:
        raise InfeasibleDispatchError(f"LP solver failed: {res.message}", load_factor=net.load_factor)
    x = res.x
    if tiebreak and lp.K > 1:
        x = _lexicographic_tiebreak(lp, x, float(res.fun))
    x = _polish_vertex(lp, x)
    return _make_result(lp, x)


# -- validation -------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str  # "generation", "line_limit", "balance", "flow_angle", "reference_angle"
    index: int  # generator, line or bus *index*
    magnitude: float

    def describe(self, net: Network) -> str:
        if self.kind == "generation":
            where = f"generator {net.generators[self.index].id}"
        elif self.kind in ("line_limit", "flow_angle"):
            ln = net.lines[self.index]
            where = f"line {ln.from_bus}-{ln.to_bus}"
        else:
            where = f"bus {net.bus_ids[self.index]}"
        return f"{self.kind} violation at {where}: {self.magnitude:.3g}"


def verify_dispatch(net: Network, d: DispatchResult, tol: float = TAU_FEAS) -> list[Violation]:
    """List every dispatch constraint violated by more than ``tol``.

    Nodal balance is evaluated with flows recomputed from the angles, so a
    corrupted angle shows up as imbalance at the buses it touches; the
    reported ``line_flows`` are separately checked against the angles.

    Raises
    ------
    ValidationError
        Vector lengths do not match the network.
    """
    K, N, L = net.n_generators, net.n_buses, net.n_lines
    for label, vec, n in (("generation", d.generation, K), ("angles", d.angles, N), ("line_flows", d.line_flows, L)):
        if np.shape(vec) != (n,):
            raise ValidationError(f"{label}: expected {n} entries, got shape {np.shape(vec)}")

    out: list[Violation] = []
    g = d.generation
    for k in range(K):
        excess = max(net.p_min[k] - g[k], g[k] - net.p_max[k])
        if excess > tol or not np.isfinite(g[k]):
            out.append(Violation("generation", k, float(excess)))

    flows = d.line_flows
    for l in range(L):
        excess = max(net.limit_low[l] - flows[l], flows[l] - net.limit_high[l])
        if excess > tol or not np.isfinite(flows[l]):
            out.append(Violation("line_limit", l, float(excess)))

    angle_flows = net.susceptance * (d.angles[net.line_from] - d.angles[net.line_to])
    for l in np.flatnonzero(~(np.abs(angle_flows - flows) <= tol)):
        out.append(Violation("flow_angle", int(l), float(abs(angle_flows[l] - flows[l]))))

    injection = np.zeros(N)
    np.add.at(injection, net.gen_bus, g)
    mismatch = injection - net.demand - net.incidence @ angle_flows
    for i in np.flatnonzero(~(np.abs(mismatch) <= tol)):
        out.append(Violation("balance", int(i), float(abs(mismatch[i]))))

    if not abs(d.angles[net.ref_index]) <= tol:
        out.append(Violation("reference_angle", net.ref_index, float(abs(d.angles[net.ref_index]))))
    return out
