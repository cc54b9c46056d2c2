from pathlib import Path

import pytest

from helmpf.netmodel import load_network, network_from_dict

ROOT = Path(__file__).resolve().parents[1]
SEVEN_BUS = ROOT / "networks" / "7bus.json"


@pytest.fixture(scope="session")
def net7():
    return load_network(SEVEN_BUS)


def seven_bus(p6: float):
    return load_network(SEVEN_BUS).with_value("6", "p_gen", p6)


def flat_doc():
    """7-bus topology with every injection zero and every setpoint at the slack voltage."""
    return {
        "name": "flat",
        "buses": [
            {"id": "1", "kind": "pq", "s_load": [0, 0]},
            {"id": "2", "kind": "pq", "s_load": [0, 0]},
            {"id": "3", "kind": "pq", "s_load": [0, 0]},
            {"id": "4", "kind": "pq", "s_load": [0, 0]},
            {"id": "5", "kind": "pv", "p_gen": 0.0, "v_set": 1.0},
            {"id": "6", "kind": "pv", "p_gen": 0.0, "v_set": 1.0},
            {"id": "slack", "kind": "slack", "v_slack": [1.0, 0.0]},
        ],
        "branches": [
            {"from": "slack", "to": "1", "z": [0.70, 0.40]},
            {"from": "1", "to": "3", "z": [0.50, 0.50]},
            {"from": "3", "to": "6", "z": [0.40, 0.50]},
            {"from": "1", "to": "2", "z": [0.40, 0.60]},
            {"from": "3", "to": "5", "z": [0.30, 0.50]},
            {"from": "2", "to": "5", "z": [0.30, 0.60]},
            {"from": "6", "to": "4", "z": [0.60, 0.80]},
            {"from": "3", "to": "4", "z": [0.50, 0.80]},
        ],
    }


@pytest.fixture(scope="session")
def flat_net():
    return network_from_dict(flat_doc())


def pytest_terminal_summary(terminalreporter):
    import re

    from test_acceptance import CRITERIA

    seen = {}
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_", rep.nodeid)
            if m and rep.when == "call":
                seen[int(m.group(1))] = outcome
    if not seen:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        if n in seen:
            status = "PASS" if seen[n] == "passed" else "FAIL"
            terminalreporter.write_line(f"criterion {n:2d} {status}  {title}")
