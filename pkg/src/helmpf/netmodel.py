"""Network data model, JSON I/O and admittance-matrix construction."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .numerics import MACHINE_PRECISION, to_mpc, working_precision


class NetworkError(ValueError):
    pass


class BusKind(str, Enum):
    SLACK = "slack"
    PQ = "pq"
    PV = "pv"

    @classmethod
    def parse(cls, text: str) -> "BusKind":
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            raise NetworkError(f"unknown bus kind {text!r}") from None


@dataclass(frozen=True)
class Bus:
    id: str
    kind: BusKind
    s_load: complex = 0j
    p_gen: float | None = None
    v_set: float | None = None
    v_slack: complex | None = None

    @property
    def injection(self) -> complex:
        """Scheduled complex power injection (loads enter with negative sign)."""
        if self.kind is BusKind.PQ:
            return -self.s_load
        if self.kind is BusKind.PV:
            return complex(self.p_gen, 0.0)
        return 0j


@dataclass(frozen=True)
class Branch:
    from_bus: str
    to_bus: str
    z: complex


@dataclass(frozen=True)
class Network:
    """Buses in solve order (non-slack buses in input order, slack last)."""

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    name: str = ""
    index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {b.id: k for k, b in enumerate(self.buses)})

    @property
    def n(self) -> int:
        return len(self.buses)

    @property
    def slack(self) -> Bus:
        return self.buses[-1]

    @property
    def slack_voltage(self) -> complex:
        return self.slack.v_slack

    @property
    def non_slack(self) -> tuple[Bus, ...]:
        return self.buses[:-1]

    def bus(self, bus_id) -> Bus:
        try:
            return self.buses[self.index[str(bus_id)]]
        except KeyError:
            raise NetworkError(f"unknown bus {bus_id!r}") from None

    def ids_of(self, kind: BusKind) -> list[str]:
        return [b.id for b in self.buses if b.kind is kind]

    def neighbors(self, bus_id: str) -> list[str]:
        out = []
        for br in self.branches:
            if br.from_bus == bus_id:
                out.append(br.to_bus)
            elif br.to_bus == bus_id:
                out.append(br.from_bus)
        return out

    def with_value(self, bus_id: str, field_name: str, value) -> "Network":
        """Copy of the network with one numeric bus field replaced."""
        bus = self.bus(bus_id)
        if field_name not in ("s_load", "p_gen", "v_set", "v_slack"):
            raise NetworkError(f"bus field {field_name!r} cannot be overridden")
        if field_name in ("s_load", "v_slack"):
            value = _complex(value, f"{bus_id}.{field_name}")
        else:
            value = float(value)
        new = replace(bus, **{field_name: value})
        buses = tuple(new if b.id == bus.id else b for b in self.buses)
        net = Network(buses, self.branches, self.name)
        problems = [d for d in validate(net) if d.startswith("schema")]
        if problems:
            raise NetworkError("; ".join(problems))
        return net


def _complex(value, where: str) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise NetworkError(f"{where}: complex values are [real, imag] pairs")
        try:
            return complex(float(value[0]), float(value[1]))
        except (TypeError, ValueError):
            raise NetworkError(f"{where}: non-numeric complex pair {value!r}") from None
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(float(value), 0.0)
    if isinstance(value, complex):
        return value
    raise NetworkError(f"{where}: expected [real, imag], got {value!r}")


def _float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise NetworkError(f"{where}: expected a number, got {value!r}")
    return float(value)


def network_from_dict(doc: dict, name: str = "") -> Network:
    if not isinstance(doc, dict) or "buses" not in doc or "branches" not in doc:
        raise NetworkError("malformed network document: needs 'buses' and 'branches'")
    raw_buses = doc["buses"]
    raw_branches = doc["branches"]
    if not isinstance(raw_buses, list) or not isinstance(raw_branches, list):
        raise NetworkError("malformed network document: 'buses' and 'branches' must be lists")

    buses: list[Bus] = []
    seen: set[str] = set()
    for k, rb in enumerate(raw_buses):
        if not isinstance(rb, dict) or "id" not in rb or "kind" not in rb:
            raise NetworkError(f"bus #{k}: needs 'id' and 'kind'")
        bid = str(rb["id"])
        if bid in seen:
            raise NetworkError(f"duplicate bus id {bid!r}")
        seen.add(bid)
        kind = BusKind.parse(rb["kind"])
        s_load = _complex(rb.get("s_load", [0.0, 0.0]), f"bus {bid} s_load")
        p_gen = _float(rb["p_gen"], f"bus {bid} p_gen") if rb.get("p_gen") is not None else None
        v_set = _float(rb["v_set"], f"bus {bid} v_set") if rb.get("v_set") is not None else None
        v_slack = None
        if kind is BusKind.SLACK:
            if rb.get("v_slack") is not None:
                v_slack = _complex(rb["v_slack"], f"bus {bid} v_slack")
            elif v_set is not None:
                v_slack = complex(v_set, 0.0)
            else:
                v_slack = 1.0 + 0j
            if v_set is None:
                v_set = abs(v_slack)
        buses.append(Bus(bid, kind, s_load, p_gen, v_set, v_slack))

    slacks = [b for b in buses if b.kind is BusKind.SLACK]
    if not slacks:
        raise NetworkError("missing slack bus")
    if len(slacks) > 1:
        raise NetworkError("multiple slack buses: " + ", ".join(b.id for b in slacks))

    branches: list[Branch] = []
    pairs: set[frozenset] = set()
    for k, rb in enumerate(raw_branches):
        if not isinstance(rb, dict) or not {"from", "to", "z"} <= rb.keys():
            raise NetworkError(f"branch #{k}: needs 'from', 'to' and 'z'")
        a, b = str(rb["from"]), str(rb["to"])
        for end in (a, b):
            if end not in seen:
                raise NetworkError(f"branch #{k} references unknown bus {end!r}")
        if a == b:
            raise NetworkError(f"branch #{k} connects bus {a!r} to itself")
        z = _complex(rb["z"], f"branch #{k} z")
        if z == 0:
            raise NetworkError(f"branch #{k} ({a}-{b}) has zero impedance")
        key = frozenset((a, b))
        if key in pairs:
            raise NetworkError(f"duplicate branch {a}-{b}; combine parallel branches first")
        pairs.add(key)
        branches.append(Branch(a, b, z))

    ordered = [b for b in buses if b.kind is not BusKind.SLACK] + slacks
    net = Network(tuple(ordered), tuple(branches), name or str(doc.get("name", "")))
    problems = [d for d in validate(net) if d.startswith("schema")]
    if problems:
        raise NetworkError("; ".join(problems))
    return net


def parse_network(text: str, name: str = "") -> Network:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"malformed network document: {exc}") from None
    return network_from_dict(doc, name)


def load_network(path) -> Network:
    path = Path(path)
    return parse_network(path.read_text(), name=path.stem)


def network_to_dict(net: Network) -> dict:
    buses = []
    for b in net.buses:
        d: dict = {"id": b.id, "kind": b.kind.value}
        if b.kind is BusKind.PQ:
            d["s_load"] = [b.s_load.real, b.s_load.imag]
        if b.p_gen is not None:
            d["p_gen"] = b.p_gen
        if b.v_set is not None:
            d["v_set"] = b.v_set
        if b.v_slack is not None:
            d["v_slack"] = [b.v_slack.real, b.v_slack.imag]
        buses.append(d)
    doc = {
        "buses": buses,
        "branches": [
            {"from": br.from_bus, "to": br.to_bus, "z": [br.z.real, br.z.imag]}
            for br in net.branches
        ],
    }
    if net.name:
        doc["name"] = net.name
    return doc


def dumps_network(net: Network) -> str:
    return json.dumps(network_to_dict(net), indent=2)


def validate(net: Network) -> list[str]:
    """Diagnostics for an assembled network; empty when it is well posed."""
    out: list[str] = []
    slacks = [b for b in net.buses if b.kind is BusKind.SLACK]
    if not slacks:
        out.append("missing slack bus")
    elif len(slacks) > 1:
        out.append("multiple slack buses")
    for b in net.buses:
        if b.kind is BusKind.PV:
            if b.p_gen is None or b.v_set is None:
                out.append(f"schema: PV bus {b.id} needs both p_gen and v_set")
            elif b.v_set <= 0:
                out.append(f"schema: PV bus {b.id} has non-positive v_set")
        elif b.kind is BusKind.PQ:
            if b.p_gen is not None or b.v_set is not None:
                out.append(f"schema: PQ bus {b.id} carries generator fields")
        elif b.kind is BusKind.SLACK:
            if b.v_slack is None or b.v_slack == 0:
                out.append(f"schema: slack bus {b.id} needs a nonzero voltage")
            elif b.v_slack.imag != 0:
                out.append(f"schema: slack bus {b.id} voltage must have zero angle")
    for br in net.branches:
        if br.z == 0:
            out.append(f"schema: branch {br.from_bus}-{br.to_bus} has zero impedance")

    adj: dict[str, set[str]] = {b.id: set() for b in net.buses}
    for br in net.branches:
        if br.from_bus in adj and br.to_bus in adj:
            adj[br.from_bus].add(br.to_bus)
            adj[br.to_bus].add(br.from_bus)
    isolated = [bid for bid, nb in adj.items() if not nb]
    for bid in isolated:
        out.append(f"isolated bus {bid}")
    if net.buses:
        start = slacks[0].id if slacks else net.buses[0].id
        seen = {start}
        queue = deque([start])
        while queue:
            for nb in adj[queue.popleft()]:
                if nb not in seen:
                    seen.add(nb)
                    queue.append(nb)
        if len(seen) != len(adj):
            out.append("disconnected graph: buses not reachable from the slack: "
                       + ", ".join(sorted(set(adj) - seen)))
    return out


@dataclass(frozen=True)
class AdmittanceMatrix:
    """Dense bus admittance matrix, rows/columns in ``order``."""

    order: tuple[str, ...]
    entries: tuple[tuple, ...]
    precision: int

    @property
    def n(self) -> int:
        return len(self.order)

    def __getitem__(self, ik):
        i, k = ik
        return self.entries[i][k]

    def as_array(self) -> np.ndarray:
        return np.array([[complex(v) for v in row] for row in self.entries], dtype=complex)

    def neighbors(self, i: int) -> list[int]:
        return [k for k in range(self.n) if k != i and self.entries[i][k] != 0]


def build_admittance(net: Network, precision: int = MACHINE_PRECISION) -> AdmittanceMatrix:
    """Y_ii = sum of 1/Z_ik over incident branches, Y_ik = -1/Z_ik."""
    n = net.n
    with working_precision(precision):
        y = [[to_mpc(0) for _ in range(n)] for _ in range(n)]
        for br in net.branches:
            i, k = net.index[br.from_bus], net.index[br.to_bus]
            yik = 1 / to_mpc(br.z)
            y[i][i] += yik
            y[k][k] += yik
            y[i][k] -= yik
            y[k][i] -= yik
    return AdmittanceMatrix(tuple(b.id for b in net.buses), tuple(tuple(r) for r in y), precision)


def injected_currents(net: Network, v) -> np.ndarray:
    """Bus current injections sum_k (V_i - V_k) / z_ik, exactly zero on a flat profile.

    Same as Y @ V without relying on rounded row sums cancelling.
    """
    v = np.asarray(v, dtype=complex)
    out = np.zeros(net.n, dtype=complex)
    for br in net.branches:
        i, k = net.index[br.from_bus], net.index[br.to_bus]
        flow = (v[i] - v[k]) / br.z
        out[i] += flow
        out[k] -= flow
    return out
