import json
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helmpf.netmodel import (
    BusKind,
    NetworkError,
    build_admittance,
    dumps_network,
    network_from_dict,
    parse_network,
    validate,
)

from conftest import flat_doc


def test_seven_bus_layout(net7):
    assert net7.n == 7
    assert net7.slack.id == "slack"
    assert net7.ids_of(BusKind.PV) == ["5", "6"]
    assert net7.bus("1").injection == complex(-0.2, -0.1)
    assert net7.bus("6").injection == 1.0


def test_admittance_entry_from_branch(net7):
    y = build_admittance(net7)
    i, r = net7.index["1"], net7.index["slack"]
    # -1/(0.7 + 0.4j) = -(0.7 - 0.4j)/0.65
    assert complex(y[i, r]) == pytest.approx(-(0.70 - 0.40j) / 0.65, rel=1e-15)


def test_admittance_rows_sum_to_zero(net7):
    a = build_admittance(net7, 256).as_array()
    assert np.max(np.abs(a.sum(axis=1))) < 1e-14
    assert np.allclose(a, a.T)


def test_permuting_input_permutes_admittance():
    doc = flat_doc()
    base = network_from_dict(doc)
    ya = build_admittance(base).as_array()
    rng = random.Random(7)
    for _ in range(5):
        shuffled = dict(doc, buses=rng.sample(doc["buses"], len(doc["buses"])),
                        branches=rng.sample(doc["branches"], len(doc["branches"])))
        other = network_from_dict(shuffled)
        yb = build_admittance(other).as_array()
        perm = [other.index[b.id] for b in base.buses]
        assert np.allclose(yb[np.ix_(perm, perm)], ya, atol=0, rtol=1e-15)
        assert other.slack.id == "slack"


def test_round_trip(net7):
    again = parse_network(dumps_network(net7))
    assert again == net7
    assert build_admittance(again).as_array().tolist() == build_admittance(net7).as_array().tolist()


@pytest.mark.parametrize("mutate, message", [
    (lambda d: d["buses"].pop(), "missing slack"),
    (lambda d: d["buses"].append({"id": "s2", "kind": "slack"}), "multiple slack"),
    (lambda d: d["buses"].append(dict(d["buses"][0])), "duplicate bus"),
    (lambda d: d["branches"].append({"from": "1", "to": "9", "z": [0, 1]}), "unknown bus"),
    (lambda d: d["branches"].append({"from": "1", "to": "1", "z": [0, 1]}), "itself"),
    (lambda d: d["branches"].append({"from": "2", "to": "4", "z": [0, 0]}), "zero impedance"),
    (lambda d: d["branches"].append({"from": "3", "to": "1", "z": [0, 1]}), "duplicate branch"),
    (lambda d: d["buses"][4].pop("v_set"), "needs both"),
    (lambda d: d["buses"][4].update(v_set=-1.0), "non-positive"),
    (lambda d: d["buses"][0].update(kind="pz"), "unknown bus kind"),
    (lambda d: d["buses"][0].update(s_load=[1, 2, 3]), "pairs"),
    (lambda d: d.pop("branches"), "malformed"),
])
def test_rejects_bad_documents(mutate, message):
    doc = flat_doc()
    mutate(doc)
    with pytest.raises(NetworkError, match=message):
        network_from_dict(doc)


def test_validate_reports_connectivity():
    doc = flat_doc()
    doc["buses"].append({"id": "7", "kind": "pq", "s_load": [0.1, 0]})
    doc["buses"].append({"id": "8", "kind": "pq", "s_load": [0.1, 0]})
    doc["buses"].append({"id": "9", "kind": "pq", "s_load": [0.1, 0]})
    doc["branches"].append({"from": "8", "to": "9", "z": [0.1, 0.1]})
    problems = validate(network_from_dict(doc))
    assert "isolated bus 7" in problems
    assert any(p.startswith("disconnected graph") and "8" in p and "9" in p for p in problems)


def test_malformed_json():
    with pytest.raises(NetworkError, match="malformed"):
        parse_network("{not json")


def test_with_value_leaves_original(net7):
    changed = net7.with_value("6", "p_gen", 0.2)
    assert net7.bus("6").p_gen == 1.0
    assert changed.bus("6").p_gen == 0.2
    with pytest.raises(NetworkError):
        net7.with_value("6", "kind", 1)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 2), st.floats(0.01, 2)), min_size=3, max_size=8))
def test_random_radial_networks_have_zero_row_sums(zs):
    buses = [{"id": "s", "kind": "slack"}] + [
        {"id": str(k), "kind": "pq", "s_load": [0.1, 0.0]} for k in range(len(zs))]
    branches = [{"from": "s" if k == 0 else str(k - 1), "to": str(k), "z": list(z)}
                for k, z in enumerate(zs)]
    net = parse_network(json.dumps({"buses": buses, "branches": branches}))
    assert validate(net) == []
    a = build_admittance(net).as_array()
    assert np.max(np.abs(a.sum(axis=1))) < 1e-12
