"""Plain Newton-Raphson power flow in polar coordinates (double precision).

No damping, no step limiting, no magnitude clipping: this is the baseline
whose erratic behaviour near the loadability limit is the point of comparison.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .netmodel import BusKind, Network, build_admittance, injected_currents


@dataclass(frozen=True)
class NRConfig:
    tol: float = 1e-10
    max_iter: int = 50


@dataclass
class NRState:
    """Angles and magnitudes for every bus, in network order."""

    theta: np.ndarray
    vmag: np.ndarray
    iterations: int = 0
    history: list[float] = field(default_factory=list)

    @property
    def voltages(self) -> np.ndarray:
        return self.vmag * np.exp(1j * self.theta)

    @classmethod
    def flat(cls, net: Network) -> "NRState":
        vmag = np.ones(net.n)
        for k, b in enumerate(net.buses):
            if b.kind is BusKind.PV:
                vmag[k] = b.v_set
            elif b.kind is BusKind.SLACK:
                vmag[k] = abs(b.v_slack)
        return cls(np.zeros(net.n), vmag)

    @classmethod
    def from_voltages(cls, net: Network, v) -> "NRState":
        """Start from complex voltages; fixed magnitudes are reset to their setpoints."""
        v = np.asarray(v, dtype=complex)
        state = cls.flat(net)
        theta = np.angle(v) - np.angle(net.slack_voltage)
        theta[-1] = 0.0
        state.theta = theta
        pq = [k for k, b in enumerate(net.buses) if b.kind is BusKind.PQ]
        state.vmag[pq] = np.abs(v[pq])
        return state


@dataclass(frozen=True)
class NRResult:
    converged: bool
    state: NRState
    mismatch: float
    reason: str = ""

    @property
    def iterations(self) -> int:
        return self.state.iterations

    @property
    def voltages(self) -> np.ndarray:
        return self.state.voltages


class _Index:
    def __init__(self, net: Network):
        self.pvpq = [k for k, b in enumerate(net.buses) if b.kind is not BusKind.SLACK]
        self.pq = [k for k, b in enumerate(net.buses) if b.kind is BusKind.PQ]
        s = np.array([b.injection for b in net.buses])
        self.p_sched = s.real[self.pvpq]
        self.q_sched = s.imag[self.pq]


def polar_mismatch(net: Network, state: NRState) -> np.ndarray:
    """Scheduled minus computed [P (non-slack); Q (PQ)] in network bus order."""
    ix = _Index(net)
    v = state.voltages
    s = v * np.conj(injected_currents(net, v))
    return np.concatenate([ix.p_sched - s.real[ix.pvpq], ix.q_sched - s.imag[ix.pq]])


def polar_jacobian(net: Network, state: NRState, ybus: np.ndarray | None = None) -> np.ndarray:
    """Derivative of the computed [P; Q] with respect to [theta (non-slack); |V| (PQ)]."""
    if ybus is None:
        ybus = build_admittance(net).as_array()
    ix = _Index(net)
    v = state.voltages
    i = ybus @ v
    vnorm = v / np.abs(v)
    ds_dth = 1j * np.diag(v) @ np.conj(np.diag(i) - ybus @ np.diag(v))
    ds_dvm = np.diag(v) @ np.conj(ybus @ np.diag(vnorm)) + np.conj(np.diag(i)) @ np.diag(vnorm)
    j11 = ds_dth.real[np.ix_(ix.pvpq, ix.pvpq)]
    j12 = ds_dvm.real[np.ix_(ix.pvpq, ix.pq)]
    j21 = ds_dth.imag[np.ix_(ix.pq, ix.pvpq)]
    j22 = ds_dvm.imag[np.ix_(ix.pq, ix.pq)]
    return np.block([[j11, j12], [j21, j22]])


def nr_solve(net: Network, init: NRState | str = "flat", cfg: NRConfig = NRConfig()) -> NRResult:
    ybus = build_admittance(net).as_array()
    ix = _Index(net)
    if isinstance(init, str):
        if init != "flat":
            raise ValueError(f"unknown initialisation {init!r}")
        state = NRState.flat(net)
    else:
        state = NRState(init.theta.copy(), init.vmag.copy())
    npv = len(ix.pvpq)
    with np.errstate(all="ignore"):
        f = polar_mismatch(net, state)
        norm = float(np.max(np.abs(f))) if f.size else 0.0
        state.history.append(norm)
        while True:
            if not np.isfinite(norm):
                return NRResult(False, state, norm, "diverged")
            if norm < cfg.tol:
                return NRResult(True, state, norm)
            if state.iterations >= cfg.max_iter:
                return NRResult(False, state, norm, "iteration limit")
            jac = polar_jacobian(net, state, ybus)
            try:
                dx = np.linalg.solve(jac, f)
            except np.linalg.LinAlgError:
                return NRResult(False, state, norm, "singular Jacobian")
            state.theta[ix.pvpq] += dx[:npv]
            state.vmag[ix.pq] += dx[npv:]
            # a negative magnitude is the same phasor rotated by pi
            v = state.voltages
            state.theta, state.vmag = np.angle(v), np.abs(v)
            state.iterations += 1
            f = polar_mismatch(net, state)
            norm = float(np.max(np.abs(f)))
            state.history.append(norm)
