"""Grid description types, case-file I/O and structural validation.

Buses are renumbered internally to ``0..N-1`` in ascending id order; every
array exposed by :class:`Network` is indexed that way. Public reports map
indices back to the original ids through :attr:`Network.bus_ids`.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .errors import CaseFormatError, ValidationError

logger = logging.getLogger(__name__)

CASES_DIR = Path(__file__).parent / "cases"


@dataclass(frozen=True)
class Bus:
    id: int
    demand: float = 0.0


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    susceptance: float
    limit_low: float
    limit_high: float


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    cost: float
    p_min: float
    p_max: float
    emission_rate: float


@dataclass(frozen=True)
class Network:
    """Immutable grid: buses, lines, generators and a reference bus.

    All invariants are checked on construction; a :class:`ValidationError`
    names the first violated one.
    """

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    reference_bus: int
    load_factor: float = 1.0
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "buses", tuple(sorted(self.buses, key=lambda b: b.id)))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "generators", tuple(self.generators))
        _validate(self)

    # -- index maps -------------------------------------------------------
    @cached_property
    def bus_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses)

    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    @cached_property
    def ref_index(self) -> int:
        return self.bus_index[self.reference_bus]

    # -- array views ------------------------------------------------------
    @cached_property
    def demand(self) -> np.ndarray:
        """Effective demand: nominal bus demand times :attr:`load_factor`."""
        return _frozen(np.array([b.demand * self.load_factor for b in self.buses], dtype=float))

    @cached_property
    def line_from(self) -> np.ndarray:
        return _frozen(np.array([self.bus_index[ln.from_bus] for ln in self.lines], dtype=int))

    @cached_property
    def line_to(self) -> np.ndarray:
        return _frozen(np.array([self.bus_index[ln.to_bus] for ln in self.lines], dtype=int))

    @cached_property
    def susceptance(self) -> np.ndarray:
        return _frozen(np.array([ln.susceptance for ln in self.lines], dtype=float))

    @cached_property
    def limit_low(self) -> np.ndarray:
        return _frozen(np.array([ln.limit_low for ln in self.lines], dtype=float))

    @cached_property
    def limit_high(self) -> np.ndarray:
        return _frozen(np.array([ln.limit_high for ln in self.lines], dtype=float))

    @cached_property
    def gen_bus(self) -> np.ndarray:
        return _frozen(np.array([self.bus_index[g.bus] for g in self.generators], dtype=int))

    @cached_property
    def cost(self) -> np.ndarray:
        return _frozen(np.array([g.cost for g in self.generators], dtype=float))

    @cached_property
    def p_min(self) -> np.ndarray:
        return _frozen(np.array([g.p_min for g in self.generators], dtype=float))

    @cached_property
    def p_max(self) -> np.ndarray:
        return _frozen(np.array([g.p_max for g in self.generators], dtype=float))

    @cached_property
    def emission_rate(self) -> np.ndarray:
        return _frozen(np.array([g.emission_rate for g in self.generators], dtype=float))

    @cached_property
    def incidence(self) -> np.ndarray:
        """N x L matrix with +1 at a line's from-bus and -1 at its to-bus."""
        a = np.zeros((self.n_buses, self.n_lines))
        cols = np.arange(self.n_lines)
        a[self.line_from, cols] = 1.0
        a[self.line_to, cols] = -1.0
        return _frozen(a)

    @cached_property
    def generator_at_bus(self) -> dict[int, int]:
        """Bus index -> generator index."""
        return {int(b): k for k, b in enumerate(self.gen_bus)}

    def with_demand(self, demand: Iterable[float]) -> "Network":
        """Copy with the bus demands replaced (given in internal bus order)."""
        demand = [float(d) for d in demand]
        if len(demand) != self.n_buses:
            raise ValueError(f"expected {self.n_buses} demands, got {len(demand)}")
        buses = tuple(replace(b, demand=d) for b, d in zip(self.buses, demand))
        return replace(self, buses=buses, load_factor=1.0)

    def with_emission_rates(self, rates: Iterable[float]) -> "Network":
        rates = [float(r) for r in rates]
        if len(rates) != self.n_generators:
            raise ValueError(f"expected {self.n_generators} rates, got {len(rates)}")
        gens = tuple(replace(g, emission_rate=r) for g, r in zip(self.generators, rates))
        return replace(self, generators=gens)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _validate(net: Network) -> None:
    ids = [b.id for b in net.buses]
    if not ids:
        raise ValidationError("network has no buses")
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise ValidationError(f"duplicate bus id {dup[0]}")
    known = set(ids)
    if not (net.load_factor >= 0 and math.isfinite(net.load_factor)):
        raise ValidationError(f"load factor must be finite and >= 0, got {net.load_factor}")
    for b in net.buses:
        if not math.isfinite(b.demand) or b.demand < 0:
            raise ValidationError(f"bus {b.id}: demand must be finite and >= 0, got {b.demand}")

    pairs: set[frozenset[int]] = set()
    for ln in net.lines:
        tag = f"line {ln.from_bus}-{ln.to_bus}"
        for end in (ln.from_bus, ln.to_bus):
            if end not in known:
                raise ValidationError(f"{tag}: unknown bus {end}")
        if ln.from_bus == ln.to_bus:
            raise ValidationError(f"{tag}: self-loop")
        if not (ln.susceptance > 0 and math.isfinite(ln.susceptance)):
            raise ValidationError(f"{tag}: susceptance must be > 0, got {ln.susceptance}")
        if not (ln.limit_low <= 0 <= ln.limit_high):
            raise ValidationError(
                f"{tag}: limits must satisfy limit_low <= 0 <= limit_high, "
                f"got [{ln.limit_low}, {ln.limit_high}]"
            )
        pair = frozenset((ln.from_bus, ln.to_bus))
        if pair in pairs:
            raise ValidationError(f"duplicate line {ln.from_bus}-{ln.to_bus} (merge parallel lines first)")
        pairs.add(pair)

    gen_ids: set[int] = set()
    gen_buses: dict[int, int] = {}
    for g in net.generators:
        if g.id in gen_ids:
            raise ValidationError(f"duplicate generator id {g.id}")
        gen_ids.add(g.id)
        if g.bus not in known:
            raise ValidationError(f"generator {g.id}: unknown bus {g.bus}")
        if g.bus in gen_buses:
            raise ValidationError(
                f"generators {gen_buses[g.bus]} and {g.id} share bus {g.bus}; "
                "pre-aggregate them or place them on distinct buses"
            )
        gen_buses[g.bus] = g.id
        if not (0 <= g.p_min <= g.p_max) or not math.isfinite(g.p_max):
            raise ValidationError(
                f"generator {g.id}: need 0 <= p_min <= p_max, got [{g.p_min}, {g.p_max}]"
            )
        if not (g.emission_rate >= 0 and math.isfinite(g.emission_rate)):
            raise ValidationError(f"generator {g.id}: emission_rate must be >= 0")

    if net.reference_bus not in known:
        raise ValidationError(f"reference bus {net.reference_bus} not in buses")

    if not _connected(ids, [(ln.from_bus, ln.to_bus) for ln in net.lines]):
        raise ValidationError("disconnected graph")

    total_demand = sum(b.demand for b in net.buses) * net.load_factor
    total_cap = sum(g.p_max for g in net.generators)
    if total_cap < total_demand:
        logger.warning(
            "total generation capacity %.6g MW is below total demand %.6g MW", total_cap, total_demand
        )


def _connected(nodes: list[int], edges: list[tuple[int, int]]) -> bool:
    adj: dict[int, list[int]] = {n: [] for n in nodes}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {nodes[0]}
    stack = [nodes[0]]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(nodes)


# -- case files -------------------------------------------------------------

def resolve_case_path(path: str | Path) -> Path:
    """Return ``path`` if it exists, else look it up among the bundled cases."""
    p = Path(path)
    if p.exists():
        return p
    for candidate in (CASES_DIR / p.name, CASES_DIR / f"{p.name}.json"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"case file not found: {path}")


def network_from_dict(data: dict[str, Any], name: str = "") -> Network:
    try:
        buses = [Bus(id=int(b["id"]), demand=float(b.get("demand", 0.0))) for b in data["buses"]]
        lines = [_line_from_dict(ln) for ln in data.get("lines", [])]
        gens = [
            Generator(
                id=int(g["id"]),
                bus=int(g["bus"]),
                cost=float(g["cost"]),
                p_min=float(g.get("p_min", 0.0)),
                p_max=float(g["p_max"]),
                emission_rate=float(g["emission_rate"]),
            )
            for g in data.get("generators", [])
        ]
        ref = int(data["reference_bus"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CaseFormatError(f"malformed case data: {exc!r}") from exc
    return Network(tuple(buses), tuple(lines), tuple(gens), ref, name=name)


def _line_from_dict(ln: dict[str, Any]) -> Line:
    if "limit" in ln:
        lim = float(ln["limit"])
        low, high = -lim, lim
    else:
        low, high = -math.inf, math.inf
    low = float(ln.get("limit_low", low))
    high = float(ln.get("limit_high", high))
    return Line(int(ln["from"]), int(ln["to"]), float(ln["susceptance"]), low, high)


def network_to_dict(net: Network) -> dict[str, Any]:
    lines = []
    for ln in net.lines:
        entry: dict[str, Any] = {"from": ln.from_bus, "to": ln.to_bus, "susceptance": ln.susceptance}
        if ln.limit_low == -ln.limit_high:
            if math.isfinite(ln.limit_high):
                entry["limit"] = ln.limit_high
        else:
            if math.isfinite(ln.limit_low):
                entry["limit_low"] = ln.limit_low
            if math.isfinite(ln.limit_high):
                entry["limit_high"] = ln.limit_high
        lines.append(entry)
    return {
        "buses": [{"id": b.id, "demand": float(d)} for b, d in zip(net.buses, net.demand)],
        "lines": lines,
        "generators": [
            {
                "id": g.id,
                "bus": g.bus,
                "cost": g.cost,
                "p_min": g.p_min,
                "p_max": g.p_max,
                "emission_rate": g.emission_rate,
            }
            for g in net.generators
        ],
        "reference_bus": net.reference_bus,
    }


def load_network(path: str | Path) -> Network:
    """Read and validate a JSON case file.

    ``path`` may also name a bundled case (``six_bus.json``, ``thirty_bus``).

    Raises
    ------
    CaseFormatError
        The file is not valid JSON or misses required fields.
    ValidationError
        A structural invariant is violated.
    """
    p = resolve_case_path(path)
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"{p}: {exc}") from exc
    if not isinstance(data, dict):
        raise CaseFormatError(f"{p}: top-level JSON value must be an object")
    return network_from_dict(data, name=p.stem)


def save_network(net: Network, path: str | Path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=2) + "\n")


def scale_loads(net: Network, factor: float) -> Network:
    """Return a copy of ``net`` with every demand multiplied by ``factor``.

    The factor accumulates on :attr:`Network.load_factor` rather than being
    folded into the bus demands, so ``scale_loads(scale_loads(n, a), b)``
    and ``scale_loads(n, a * b)`` produce bit-identical demands.
    """
    if not factor >= 0 or not math.isfinite(factor):
        raise ValueError(f"load factor must be a finite non-negative number, got {factor}")
    return replace(net, load_factor=net.load_factor * factor)
