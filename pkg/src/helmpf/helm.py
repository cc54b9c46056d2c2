"""Power-series germ and order-by-order extension of the embedded power flow.

For a PQ bus the voltage series V(s) = sum c_n s^n and its reciprocal
1/V(s) = sum d_n s^n satisfy

    Y_red c_n = conj(S_i) conj(d_{n-1})                       (n >= 1)

For a PV bus with setpoint M_i three more series are carried: Vbar(s) with
V(s) Vbar(s) = M_i^2, S(s) (coefficients g_n) and Sbar(s) = 2 P_i - S(s)
(coefficients gbar_n). The PV row of the linear system is

    Y_red c_n = sum_{m<n} gbar_{n-1-m} conj(d_m)

and after c_n is known, g_n follows from S(s)/V(s) = sum_k conj(Y_ik) X_k(s),
where X_k is Vbar_k for PV neighbours (the bus itself included) and the
coefficient-conjugated V_k series otherwise.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from gmpy2 import mpc, mpfr

from .netmodel import AdmittanceMatrix, BusKind, Network, build_admittance
from .numerics import (
    LUFactors,
    SingularMatrixError,
    current_precision,
    format_mpfr,
    lu_factor,
    lu_solve,
    to_mpc,
    working_precision,
)

SERIES_NAMES = ("c", "d", "cbar", "g", "gbar")


class EmbeddingError(ArithmeticError):
    pass


@dataclass
class SeriesSet:
    """Taylor coefficients of the embedded solution, keyed by bus id."""

    precision: int
    bus_ids: tuple[str, ...]
    pv_ids: tuple[str, ...]
    v_slack: mpc
    c: dict[str, list] = field(default_factory=dict)
    d: dict[str, list] = field(default_factory=dict)
    cbar: dict[str, list] = field(default_factory=dict)
    g: dict[str, list] = field(default_factory=dict)
    gbar: dict[str, list] = field(default_factory=dict)

    @property
    def order(self) -> int:
        return len(self.c[self.bus_ids[0]]) - 1

    def series(self, name: str, bus_id: str) -> list:
        if name not in SERIES_NAMES:
            raise KeyError(name)
        table = getattr(self, name)
        if bus_id not in table:
            raise KeyError(f"no {name} series for bus {bus_id}")
        return table[bus_id]

    def partial_sum(self, bus_id: str, s=1, name: str = "c"):
        acc = mpc(0)
        with working_precision(self.precision):
            for coef in reversed(self.series(name, bus_id)):
                acc = acc * s + coef
        return acc

    def to_csv(self, names=SERIES_NAMES) -> str:
        """Dump as CSV rows (bus, series, n, re, im) with p/3 significant digits."""
        digits = max(17, self.precision // 3)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bus", "series", "n", "re", "im"])
        for bid in self.bus_ids:
            for name in names:
                table = getattr(self, name)
                if bid not in table:
                    continue
                for n, z in enumerate(table[bid]):
                    w.writerow([bid, name, n, format_mpfr(z.real, digits), format_mpfr(z.imag, digits)])
        return buf.getvalue()


@dataclass(frozen=True)
class _Stencil:
    """Per-bus data reused at every order."""

    yconj: dict[str, list[tuple[str, mpc]]]     # conj(y_ik) to non-slack neighbours of PV buses
    slack_yconj: dict[str, mpc]                 # conj(y_ir) for PV buses touching the slack
    s_conj: dict[str, mpc]                      # conj(S_i) for PQ buses
    p_gen: dict[str, mpfr]


def reduced_admittance(net: Network, y: AdmittanceMatrix) -> list[list]:
    m = net.n - 1
    return [[y.entries[i][k] for k in range(m)] for i in range(m)]


def factor_reduced(net: Network, y: AdmittanceMatrix) -> LUFactors:
    """LU of the admittance matrix with the slack row/column removed."""
    try:
        return lu_factor(reduced_admittance(net, y))
    except SingularMatrixError as exc:
        raise EmbeddingError(
            "reduced admittance matrix is singular; the network is ill-posed "
            "(disconnected from the slack?)"
        ) from exc


def _stencil(net: Network, y: AdmittanceMatrix) -> _Stencil:
    r = net.n - 1
    yconj: dict[str, list] = {}
    slack_yconj: dict[str, mpc] = {}
    s_conj: dict[str, mpc] = {}
    p_gen: dict[str, mpfr] = {}
    for i, bus in enumerate(net.non_slack):
        if bus.kind is BusKind.PV:
            p_gen[bus.id] = to_mpc(bus.p_gen).real
            # branch admittances y_ik = -Y_ik; with no shunts Y_ii = sum y_ik
            terms = []
            for k in y.neighbors(i):
                if k == r:
                    slack_yconj[bus.id] = -y.entries[i][k].conjugate()
                else:
                    terms.append((net.buses[k].id, -y.entries[i][k].conjugate()))
            yconj[bus.id] = terms
        else:
            s_conj[bus.id] = to_mpc(bus.injection).conjugate()
    return _Stencil(yconj, slack_yconj, s_conj, p_gen)


def germ(net: Network, y: AdmittanceMatrix | None = None, precision: int | None = None,
         lu: LUFactors | None = None) -> SeriesSet:
    """Order-0 coefficients: every bus sits at the slack voltage."""
    if precision is None:
        precision = y.precision if y is not None else current_precision()
    if y is None or y.precision != precision:
        y = build_admittance(net, precision)
    with working_precision(precision):
        if lu is None:
            lu = factor_reduced(net, y)
        vr = to_mpc(net.slack_voltage)
        r = net.n - 1
        # slack column moved to the right-hand side; the solution is V_r everywhere
        rhs = [-y.entries[i][r] * vr for i in range(r)]
        c0 = lu_solve(lu, rhs)
        for z in c0:
            if abs(z - vr) > abs(vr) * mpfr(2) ** (-(precision // 2)):
                raise EmbeddingError("order-0 system does not return the slack voltage")

        ids = tuple(b.id for b in net.non_slack)
        pv = tuple(b.id for b in net.non_slack if b.kind is BusKind.PV)
        st = SeriesSet(precision, ids, pv, vr)
        for bid in ids:
            st.c[bid] = [vr]
            st.d[bid] = [1 / vr]
        for bid in pv:
            m = to_mpc(net.bus(bid).v_set)
            st.cbar[bid] = [m * m / vr]
        sten = _stencil(net, y)
        for bid in pv:
            g0 = _g_coefficient(st, sten, bid, 0)
            st.g[bid] = [g0]
            st.gbar[bid] = [2 * sten.p_gen[bid] - g0]
    return st


def _g_coefficient(st: SeriesSet, sten: _Stencil, bid: str, n: int) -> mpc:
    # sum_k conj(Y_ik) X_k written as sum_k conj(y_ik) (X_i - X_k): exactly zero
    # on a flat profile, where the row-sum form only cancels to rounding
    xi = st.cbar[bid][n]
    acc = mpc(0)
    for k, yc in sten.yconj[bid]:
        xk = st.cbar[k][n] if k in st.cbar else st.c[k][n].conjugate()
        acc += yc * (xi - xk)
    if bid in sten.slack_yconj:
        xr = st.v_slack.conjugate() if n == 0 else 0
        acc += sten.slack_yconj[bid] * (xi - xr)
    g, d = st.g.get(bid, []), st.d[bid]
    for m in range(1, n + 1):
        acc -= g[n - m] * d[m]
    return st.c[bid][0] * acc


def extend(state: SeriesSet, net: Network, y: AdmittanceMatrix, lu: LUFactors,
           upto: int) -> SeriesSet:
    """Compute orders state.order+1 .. upto in place and return ``state``."""
    if lu.n != net.n - 1:
        raise ValueError("LU factors do not match the reduced admittance matrix")
    with working_precision(state.precision):
        sten = _stencil(net, y)
        ids = state.bus_ids
        pv = set(state.pv_ids)
        for n in range(state.order + 1, upto + 1):
            rhs = []
            for bid in ids:
                d = state.d[bid]
                if bid in pv:
                    gb = state.gbar[bid]
                    acc = mpc(0)
                    for m in range(n):
                        acc += gb[n - 1 - m] * d[m].conjugate()
                    rhs.append(acc)
                else:
                    rhs.append(sten.s_conj[bid] * d[n - 1].conjugate())
            cn = lu_solve(lu, rhs)
            for bid, z in zip(ids, cn):
                state.c[bid].append(z)
            for bid in ids:
                c, d = state.c[bid], state.d[bid]
                acc = mpc(0)
                for m in range(n):
                    acc += c[n - m] * d[m]
                d.append(-acc / c[0])
            for bid in state.pv_ids:
                c, cb = state.c[bid], state.cbar[bid]
                acc = mpc(0)
                for m in range(n):
                    acc += c[n - m] * cb[m]
                cb.append(-acc / c[0])
            for bid in state.pv_ids:
                gn = _g_coefficient(state, sten, bid, n)
                state.g[bid].append(gn)
                state.gbar[bid].append(-gn)
    return state


def compute_series(net: Network, order: int, precision: int) -> SeriesSet:
    y = build_admittance(net, precision)
    with working_precision(precision):
        lu = factor_reduced(net, y)
        st = germ(net, y, precision, lu)
        return extend(st, net, y, lu, order)


def invariant_defects(state: SeriesSet, net: Network) -> dict[str, float]:
    """Largest relative defect of each order-n identity over all computed orders.

    Keys: ``reciprocal`` (V * 1/V = 1), ``magnitude`` (V Vbar = M^2),
    ``power_sum`` (S + Sbar = 2P), ``gbar`` (gbar_0 = 2P - g_0, gbar_m = -g_m).
    """
    worst = {"reciprocal": 0.0, "magnitude": 0.0, "power_sum": 0.0, "gbar": 0.0}

    def rel(err, scale):
        return float(err / scale) if scale != 0 else float(err)

    with working_precision(state.precision):
        for n in range(state.order + 1):
            for bid in state.bus_ids:
                c, d = state.c[bid], state.d[bid]
                acc, scale = mpc(0), mpfr(0)
                for m in range(n + 1):
                    t = c[m] * d[n - m]
                    acc += t
                    scale += abs(t)
                target = 1 if n == 0 else 0
                worst["reciprocal"] = max(worst["reciprocal"], rel(abs(acc - target), scale))
            for bid in state.pv_ids:
                c, cb = state.c[bid], state.cbar[bid]
                m2 = to_mpc(net.bus(bid).v_set) ** 2
                acc, scale = mpc(0), mpfr(0)
                for m in range(n + 1):
                    t = c[m] * cb[n - m]
                    acc += t
                    scale += abs(t)
                target = m2 if n == 0 else 0
                worst["magnitude"] = max(worst["magnitude"], rel(abs(acc - target), scale))
                g, gb = state.g[bid][n], state.gbar[bid][n]
                p2 = 2 * to_mpc(net.bus(bid).p_gen)
                target = p2 if n == 0 else 0
                scale = abs(g) + abs(gb) + (abs(p2) if n == 0 else 0)
                worst["power_sum"] = max(worst["power_sum"], rel(abs(g + gb - target), scale))
                expect = (p2 - g) if n == 0 else -g
                worst["gbar"] = max(worst["gbar"], rel(abs(gb - expect), abs(expect) or 1))
    return worst


@dataclass(frozen=True)
class RatioDiagnostics:
    radius: float
    sb: complex | None
    window: tuple[int, int]

    @property
    def defined(self) -> bool:
        return self.sb is not None


def ratio_estimate(coeffs, window: tuple[int, int] | None = None) -> RatioDiagnostics:
    """Geometric-mean smoothed coefficient ratios c_n / c_{n+1}.

    The default window is the top quartile of available orders. Complex
    ratios are averaged in log space with their arguments unwrapped around
    the first ratio so that a branch point on the negative axis does not
    straddle the log branch cut.
    """
    order = len(coeffs) - 1
    if window is None:
        lo = order - max(2, (order + 1) // 4)
        window = (max(lo, 0), order)
    lo, hi = window
    logs_abs: list[float] = []
    args: list[float] = []
    ref = None
    for n in range(lo, hi):
        a, b = coeffs[n], coeffs[n + 1]
        if a == 0 or b == 0:
            continue
        ratio = complex(a / b)
        if ref is None:
            ref = ratio
        logs_abs.append(math.log(abs(ratio)))
        args.append(math.atan2((ratio / ref).imag, (ratio / ref).real) + math.atan2(ref.imag, ref.real))
    if not logs_abs:
        return RatioDiagnostics(math.inf, None, window)
    mag = math.exp(sum(logs_abs) / len(logs_abs))
    arg = sum(args) / len(args)
    sb = complex(mag * math.cos(arg), mag * math.sin(arg))
    return RatioDiagnostics(mag, sb, window)


def ratio_diagnostics(state: SeriesSet, bus: str, name: str = "c") -> RatioDiagnostics:
    if state.order < 8:
        raise ValueError("ratio diagnostics need at least 8 computed orders")
    return ratio_estimate(state.series(name, bus))
