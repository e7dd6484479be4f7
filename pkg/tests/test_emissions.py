import math

import numpy as np
import pytest

from carbontrace import (
    build_flow_graph,
    emission_report,
    load_network,
    marginal_rates,
    scale_loads,
    solve_dcopf,
    trace_all,
)
from carbontrace.emissions import average_rates, default_epsilon, emission_residual, node_emissions

from helpers import make_net

FACTORS = (0.2, 0.4, 0.6, 0.8, 1.0)


def test_single_generator_rate():
    net = make_net([10, 0, 25], [(1, 2, 100, None), (2, 3, 100, None)], [(2, 1, 100, 500)])
    r = emission_report(net)
    assert r.average_rate[0] == pytest.approx(500) and r.average_rate[2] == pytest.approx(500)
    assert math.isnan(r.average_rate[1])
    np.testing.assert_allclose(r.marginal_rate, 500, atol=1e-9)


def test_two_bus_marginal_from_cheap_unit():
    net = make_net([0, 50], [(1, 2, 100, None)], [(1, 1, 100, 900), (2, 5, 100, 300)])
    mr = marginal_rates(net)
    assert mr.rates[1] == pytest.approx(900, abs=1e-9)
    assert mr.undefined == {}


def test_congested_marginal_from_local_unit():
    net = make_net([0, 100], [(1, 2, 100, 50)], [(1, 1, 200, 900), (2, 10, 200, 300)])
    mr = marginal_rates(net)
    assert mr.rates[1] == pytest.approx(300, abs=1e-6)


def test_uniform_rate():
    for case in ("six_bus", "thirty_bus"):
        net = load_network(case)
        net = net.with_emission_rates([1000.0] * net.n_generators)
        r = emission_report(net, marginal=False)
        defined = ~np.isnan(r.average_rate)
        np.testing.assert_allclose(r.average_rate[defined], 1000.0, atol=1e-9)


@pytest.mark.parametrize("case", ["six_bus", "thirty_bus"])
def test_zero_load(case):
    r = emission_report(load_network(case), 0.0)
    assert r.system_emission == 0.0 and not r.node_total_emission.any()
    assert np.isnan(r.average_rate).all()


@pytest.mark.parametrize("factor", FACTORS)
def test_six_bus_node_one(factor):
    r = emission_report(load_network("six_bus"), factor, marginal=False)
    g = r.contributions.flow_graph
    assert not g.in_edges[0]
    assert r.average_rate[0] == 2388.0


def test_emission_conservation():
    for case in ("six_bus", "thirty_bus"):
        net = load_network(case)
        for f in FACTORS:
            r = emission_report(net, f, marginal=False)
            assert emission_residual(scale_loads(net, f), r) <= 1e-4


def test_rates_inside_generator_range():
    for case in ("six_bus", "thirty_bus"):
        net = load_network(case)
        for f in FACTORS:
            r = emission_report(net, f, marginal=False)
            avg = r.average_rate[~np.isnan(r.average_rate)]
            assert avg.min() >= net.emission_rate.min() - 1e-9
            assert avg.max() <= net.emission_rate.max() + 1e-9


def test_average_rates_direct():
    net = load_network("six_bus")
    m = trace_all(net, build_flow_graph(net, solve_dcopf(net)))
    total, avg = average_rates(net, m)
    np.testing.assert_array_equal(total, node_emissions(net, m))
    np.testing.assert_allclose(avg, total / net.demand)


def test_default_epsilon():
    np.testing.assert_array_equal(default_epsilon([0.0, 5.0, 100.0, 1e5]), [1e-3, 1e-3, 1e-2, 10.0])


def test_bad_arguments():
    net = load_network("six_bus")
    with pytest.raises(ValueError):
        marginal_rates(net, epsilon=0.0)
    with pytest.raises(ValueError):
        marginal_rates(net, method="central")


def test_difference_converges_linearly_to_derivative():
    net = load_network("thirty_bus")
    exact = marginal_rates(net).rates
    gaps = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        diff = marginal_rates(net, epsilon=eps, method="difference").rates
        gaps.append(diff - exact)
    big = np.abs(gaps[0]) > 1e-4
    assert big.any()
    ratios = gaps[0][big] / gaps[1][big]
    np.testing.assert_allclose(ratios, 2.0, rtol=0.05)
    assert np.abs(gaps[2]).max() < np.abs(gaps[0]).max()


def test_shortcut_agrees_with_resolve():
    net = load_network("six_bus")
    fast = marginal_rates(net)
    slow = marginal_rates(net)
    np.testing.assert_allclose(fast.rates, slow.rates, atol=1e-6)


def test_threaded_matches_serial():
    net = load_network("thirty_bus")
    a = marginal_rates(net).rates
    b = marginal_rates(net, max_workers=4).rates
    np.testing.assert_array_equal(a, b)


def test_infeasible_perturbation_reported():
    # demand already equals capacity: any increase is unservable
    net = make_net([0, 50], [(1, 2, 100, None)], [(1, 1, 50, 900)])
    mr = marginal_rates(net, use_shortcut=True)
    assert np.isnan(mr.rates).all()
    assert set(mr.undefined) == {1, 2}


def test_summary_ignores_undefined():
    r = emission_report(load_network("six_bus"), 0.0)
    s = r.summary()
    assert math.isnan(s["avg_rate_mean"]) and s["system_emission"] == 0.0
