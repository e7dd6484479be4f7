import json

import numpy as np
import pytest

from carbontrace import Bus, Generator, Line, Network, ValidationError, load_network, save_network, scale_loads
from carbontrace.errors import CaseFormatError
from carbontrace.network import network_from_dict, network_to_dict

from helpers import make_net


def test_six_bus_case():
    net = load_network("six_bus.json")
    assert net.n_buses == 6
    assert [g.bus for g in net.generators] == [1, 3, 6]
    assert net.cost.tolist() == [100, 150, 240]
    assert net.emission_rate.tolist() == [2388, 904, 321]


def test_thirty_bus_case():
    net = load_network("thirty_bus")
    assert net.n_buses == 30
    assert [g.bus for g in net.generators] == [1, 2, 13, 22, 23, 27]
    assert net.emission_rate.tolist() == [2159, 2002, 1611, 890, 577, 113]


def test_costlier_units_are_cleaner():
    # input ordering the scenarios rely on: higher cost, lower emission rate
    for case in ("six_bus", "thirty_bus"):
        net = load_network(case)
        order = np.argsort(net.cost)
        assert not (np.diff(net.emission_rate[order][:3]) > 0).any()


def _two_bus_dict():
    return {
        "buses": [{"id": 1, "demand": 0}, {"id": 2, "demand": 10}],
        "lines": [{"from": 1, "to": 2, "susceptance": 100, "limit": 50}],
        "generators": [{"id": 1, "bus": 1, "cost": 1, "p_max": 20, "emission_rate": 500}],
        "reference_bus": 1,
    }


def test_island_rejected(tmp_path):
    data = _two_bus_dict()
    data["buses"].append({"id": 3, "demand": 1})
    p = tmp_path / "island.json"
    p.write_text(json.dumps(data))
    with pytest.raises(ValidationError, match="disconnected graph"):
        load_network(p)


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d["lines"].append({"from": 2, "to": 1, "susceptance": 50}), "duplicate line"),
        (lambda d: d["lines"].append({"from": 2, "to": 2, "susceptance": 50}), "self"),
        (lambda d: d["lines"][0].update(susceptance=0), "susceptance"),
        (lambda d: d["buses"][1].update(demand=-1), "demand"),
        (
            lambda d: d["generators"].append({"id": 2, "bus": 1, "cost": 2, "p_max": 5, "emission_rate": 1}),
            "aggregate",
        ),
        (lambda d: d["generators"][0].update(p_min=30), "p_min"),
        (lambda d: d["generators"][0].update(emission_rate=-3), "emission"),
        (lambda d: d.update(reference_bus=9), "reference"),
        (lambda d: d["generators"][0].update(bus=7), "unknown bus"),
    ],
)
def test_invalid_cases(mutate, message):
    data = _two_bus_dict()
    mutate(data)
    with pytest.raises(ValidationError, match=message):
        network_from_dict(data)


def test_malformed_case(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(CaseFormatError):
        load_network(p)
    with pytest.raises(CaseFormatError):
        network_from_dict({"buses": [{"demand": 1}]})


def test_round_trip(tmp_path):
    net = load_network("thirty_bus")
    save_network(net, tmp_path / "c.json")
    again = load_network(tmp_path / "c.json")
    assert again == net
    assert network_to_dict(again) == network_to_dict(net)


def test_ids_need_not_be_contiguous():
    net = Network(
        (Bus(10, 5.0), Bus(4, 0.0)),
        (Line(4, 10, 100.0, -20.0, 20.0),),
        (Generator(7, 4, 1.0, 0.0, 10.0, 300.0),),
        reference_bus=4,
    )
    assert net.bus_ids == (4, 10)
    assert net.demand.tolist() == [0.0, 5.0]
    assert net.gen_bus.tolist() == [0]


def test_scale_loads_examples():
    net = make_net([100, 60], [(1, 2, 100, None)], [(1, 1, 200, 1)])
    assert scale_loads(net, 1.0).demand.tolist() == [100, 60]
    assert scale_loads(net, 0.5).demand.tolist() == [50, 30]
    assert scale_loads(net, 0.0).demand.tolist() == [0, 0]
    with pytest.raises(ValueError):
        scale_loads(net, -0.1)
    with pytest.raises(ValueError):
        scale_loads(net, float("nan"))


@pytest.mark.parametrize("a, b", [(0.1, 0.3), (0.7, 1.3), (3.0, 1 / 3), (0.2, 5.0)])
def test_scale_loads_composes_exactly(a, b):
    net = load_network("thirty_bus")
    assert np.array_equal(scale_loads(scale_loads(net, a), b).demand, scale_loads(net, a * b).demand)


def test_capacity_shortfall_only_warns(caplog):
    net = make_net([0, 50], [(1, 2, 100, None)], [(1, 1, 20, 1)])
    assert net.n_buses == 2
    assert "below total demand" in caplog.text
