"""Shared builders for small networks and random feasible instances."""
from __future__ import annotations

import math

import numpy as np

from carbontrace import Bus, Generator, InfeasibleDispatchError, Line, Network, solve_dcopf

INF = math.inf


def make_net(demands, lines, gens, ref=1) -> Network:
    """``lines``: (a, b, susceptance, limit or None); ``gens``: (bus, cost, p_max, gamma)."""
    buses = tuple(Bus(i + 1, float(d)) for i, d in enumerate(demands))
    ls = tuple(
        Line(a, b, float(s), -(lim if lim is not None else INF), lim if lim is not None else INF)
        for a, b, s, lim in lines
    )
    gs = tuple(Generator(k + 1, bus, float(c), 0.0, float(pm), float(gm)) for k, (bus, c, pm, gm) in enumerate(gens))
    return Network(buses, ls, gs, ref)


def random_network(rng: np.random.Generator, max_buses: int = 12) -> Network:
    n = int(rng.integers(2, max_buses + 1))
    pairs = set()
    perm = rng.permutation(n) + 1
    for j in range(1, n):
        a, b = int(perm[j]), int(perm[rng.integers(0, j)])
        pairs.add((min(a, b), max(a, b)))
    for _ in range(int(rng.integers(0, n + 1))):
        a, b = sorted(int(x) for x in rng.choice(n, size=2, replace=False) + 1)
        pairs.add((a, b))
    lines = []
    for a, b in sorted(pairs):
        lim = None if rng.random() < 0.3 else float(rng.uniform(10, 80))
        lines.append((a, b, float(rng.uniform(50, 500)), lim))
    n_gen = int(rng.integers(1, min(n, 5) + 1))
    gen_buses = rng.choice(n, size=n_gen, replace=False) + 1
    demands = np.where(rng.random(n) < 0.75, rng.uniform(0, 60, n), 0.0).round(3)
    cap = max(demands.sum(), 1.0)
    gens = [
        (int(b), float(rng.uniform(10, 300)), float(rng.uniform(0.4, 1.2) * cap), float(rng.uniform(100, 2500)))
        for b in gen_buses
    ]
    return make_net(demands, lines, gens, ref=int(rng.integers(1, n + 1)))


def feasible_instances(count: int, seed: int = 0, max_buses: int = 12):
    """Yield ``count`` (network, dispatch) pairs with solvable dispatch."""
    rng = np.random.default_rng(seed)
    made = 0
    while made < count:
        net = random_network(rng, max_buses)
        if net.p_max.sum() < net.demand.sum():
            continue
        try:
            d = solve_dcopf(net)
        except InfeasibleDispatchError:
            continue
        made += 1
        yield net, d
