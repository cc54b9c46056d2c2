"""Series -> Padé ladder -> verdict pipeline, the complex residual, and sweeps."""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .helm import compute_series, ratio_diagnostics, SeriesSet
from .netmodel import BusKind, Network, injected_currents
from .nr import NRConfig, NRState, nr_solve
from .numerics import NumericsError, working_precision
from .pade import diagonal_degree, diagonal_values, pade_from_series, screened_poles

FEASIBLE = "Feasible"
INFEASIBLE = "Infeasible"
INCONCLUSIVE = "Inconclusive"

# Diagonal Padé values lose accuracy once the coefficient growth log2|c_2M/c_0|
# passes roughly twice the working precision; stay DEGREE_MARGIN bits short.
DEGREE_MARGIN = 96
# extra bits on top of the minimum when precision is chosen automatically
AUTO_MARGIN = 64
PROVISIONAL_PRECISION = 128


@dataclass(frozen=True)
class SolveConfig:
    max_order: int = 200
    precision: int | None = None        # None: chosen from the coefficient growth
    eps_sol: float = 1e-8
    eps_res: float = 1e-8
    delta: float = 0.05
    degree: int | None = None           # top diagonal degree; None: largest usable
    trust_radius: float = 0.1
    refine: bool = True                 # Newton certification of the top PA rung
    poles: str = "auto"                 # auto | always | never

    def __post_init__(self):
        if self.max_order < 10:
            raise ValueError("max_order must be at least 10")
        if self.precision is not None and self.precision < 64:
            raise ValueError("precision must be at least 64 bits")
        for name in ("eps_sol", "eps_res", "delta", "trust_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.degree is not None and self.degree < 1:
            raise ValueError("degree must be at least 1")
        if self.poles not in ("auto", "always", "never"):
            raise ValueError("poles must be auto, always or never")


@dataclass(frozen=True)
class Residual:
    """Power mismatch of a candidate solution under the complex flow equations.

    ``mismatch`` is conj(S_i) - conj(V_i) sum_k Y_ik V_k for PQ buses and the
    active-power part only for PV buses; ``magnitude`` is |V_i| - M_i on PV buses.
    """

    mismatch: dict[str, complex]
    magnitude: dict[str, float]
    slack_power: complex
    injections: dict[str, complex]

    @property
    def max_abs(self) -> float:
        vals = [abs(z) for z in self.mismatch.values()] + [abs(x) for x in self.magnitude.values()]
        return max(vals, default=0.0)


def _as_vector(net: Network, v) -> np.ndarray:
    if isinstance(v, dict):
        return np.array([complex(v[b.id]) for b in net.buses])
    return np.array([complex(z) for z in v])


def residual(net: Network, v) -> Residual:
    vv = _as_vector(net, v)
    s_calc = vv * np.conj(injected_currents(net, vv))
    mismatch, magnitude, injections = {}, {}, {}
    for k, b in enumerate(net.buses):
        injections[b.id] = complex(s_calc[k])
        if b.kind is BusKind.PQ:
            mismatch[b.id] = complex(np.conj(b.injection) - np.conj(s_calc[k]))
        elif b.kind is BusKind.PV:
            mismatch[b.id] = complex(b.p_gen - s_calc[k].real, 0.0)
            magnitude[b.id] = float(abs(vv[k]) - b.v_set)
    return Residual(mismatch, magnitude, complex(s_calc[-1]), injections)


@dataclass
class SolveReport:
    verdict: str
    certification: str | None
    voltages: dict[str, complex] | None
    q: dict[str, float] | None
    q_series: dict[str, float] | None
    residual: dict[str, complex] | None
    magnitude_defect: dict[str, float] | None
    max_residual: float | None
    slack_power: complex | None
    pa_voltages: dict[str, complex]
    ladder: list[int]
    ladder_spread: float
    sb: complex | None
    nearest_pole: float | None
    pole_bus: str | None
    degree: int
    order: int
    precision: int
    guidance: str = ""
    method: str = "helm"
    timing: float = field(default=0.0, compare=False)

    def vmag(self, bus_id: str) -> float:
        src = self.voltages if self.voltages is not None else self.pa_voltages
        return abs(src[bus_id])

    def to_dict(self, include_timing: bool = False) -> dict:
        def cdict(d):
            return None if d is None else {k: [v.real, v.imag] for k, v in d.items()}

        def cval(z):
            return None if z is None else [z.real, z.imag]

        out = {
            "method": self.method,
            "verdict": self.verdict,
            "certification": self.certification,
            "order": self.order,
            "precision": self.precision,
            "degree": self.degree,
            "ladder": list(self.ladder),
            "ladder_spread": self.ladder_spread,
            "voltages": cdict(self.voltages),
            "vmag": None if self.voltages is None else {k: abs(v) for k, v in self.voltages.items()},
            "q": self.q,
            "q_series": self.q_series,
            "residual": cdict(self.residual),
            "magnitude_defect": self.magnitude_defect,
            "max_residual": self.max_residual,
            "slack_power": cval(self.slack_power),
            "pa_voltages": cdict(self.pa_voltages),
            "sb": cval(self.sb),
            "nearest_pole": self.nearest_pole,
            "pole_bus": self.pole_bus,
            "guidance": self.guidance,
        }
        if include_timing:
            out["timing"] = self.timing
        return out


def _growth_profile(st: SeriesSet) -> list[float]:
    """Running max over buses of log2(|c_n| / |c_0|)."""
    prof = []
    best = 0.0
    with working_precision(st.precision):
        for n in range(st.order + 1):
            for bid in st.bus_ids:
                c = st.c[bid]
                if c[n] != 0:
                    best = max(best, float(math.log2(abs(complex(c[n] / c[0])) or 1e-300)))
            prof.append(best)
    return prof


def auto_precision(growth_bits: float) -> int:
    need = (growth_bits + DEGREE_MARGIN) / 2 + AUTO_MARGIN
    return max(PROVISIONAL_PRECISION, 64 * math.ceil(need / 64))


def usable_degree(profile: list[float], precision: int) -> int:
    """Largest M with growth(c_2M) <= 2 p - DEGREE_MARGIN."""
    m = diagonal_degree(len(profile))
    while m > 1 and profile[2 * m] > 2 * precision - DEGREE_MARGIN:
        m -= 1
    return m


def build_series(net: Network, cfg: SolveConfig) -> tuple[SeriesSet, list[float]]:
    if cfg.precision is None:
        st = compute_series(net, cfg.max_order, PROVISIONAL_PRECISION)
        prof = _growth_profile(st)
        p = auto_precision(prof[-1])
        if p != PROVISIONAL_PRECISION:
            st = compute_series(net, cfg.max_order, p)
        return st, prof
    st = compute_series(net, cfg.max_order, cfg.precision)
    return st, _growth_profile(st)


def ladder_degrees(top: int) -> list[int]:
    return sorted({m for m in (top // 4, top // 2, top - 2, top) if m >= 1})


def _pa_at_one(st: SeriesSet, name: str, bid: str, top: int) -> list:
    return diagonal_values(st.series(name, bid)[: 2 * top + 1], 1)


def pole_precision(growth_bits: float) -> int:
    """The Toeplitz route to the denominator is less forgiving than the epsilon table."""
    return 64 * math.ceil((growth_bits + 2 * DEGREE_MARGIN) / 64)


def _nearest_real_pole(net: Network, st: SeriesSet, prof: list[float], bid: str, top: int,
                       delta: float):
    """(nearest positive near-real genuine pole, any pole in (0, 1+delta))."""
    p = pole_precision(prof[2 * top])
    if p > st.precision:
        st = compute_series(net, 2 * top, p)
    with working_precision(st.precision):
        pa = pade_from_series(st.c[bid][: 2 * top + 1], top, top)
        poles = [complex(z) for z, froissart in screened_poles(pa) if not froissart]
    near = [p for p in poles
            if float(p.real) > 0 and abs(float(p.imag)) <= delta]
    nearest = min((p.real for p in near), default=None)
    in_window = any(0 < p.real < 1 + delta for p in near)
    return nearest, in_window


def solve(net: Network, cfg: SolveConfig = SolveConfig()) -> SolveReport:
    t0 = time.perf_counter()
    st, prof = build_series(net, cfg)
    top = cfg.degree if cfg.degree is not None else usable_degree(prof, st.precision)
    top = min(top, diagonal_degree(st.order + 1))
    rungs = ladder_degrees(top)
    vr = complex(net.slack_voltage)

    with working_precision(st.precision):
        tables = {bid: _pa_at_one(st, "c", bid, top) for bid in st.bus_ids}
        gtables = {bid: _pa_at_one(st, "g", bid, top) for bid in st.pv_ids}

    def rung_values(m):
        vals = {}
        for bid in st.bus_ids:
            z = tables[bid][m]
            if z is None:
                return None
            vals[bid] = complex(z)
        vals[net.slack.id] = vr
        return vals

    ladder = {m: rung_values(m) for m in rungs}
    pa_v = ladder[top] or {}
    spread = math.inf
    if len(rungs) >= 2 and ladder[rungs[-1]] and ladder[rungs[-2]]:
        a, b = ladder[rungs[-1]], ladder[rungs[-2]]
        spread = max(abs(a[k] - b[k]) for k in st.bus_ids)

    verdict, cert = INCONCLUSIVE, None
    voltages = None
    if pa_v and spread <= cfg.eps_sol and residual(net, pa_v).max_abs <= cfg.eps_res:
        verdict, cert, voltages = FEASIBLE, "ladder", pa_v
    elif pa_v and cfg.refine:
        voltages = _newton_certify(net, ladder, rungs, cfg)
        if voltages is not None:
            verdict, cert = FEASIBLE, "newton"

    sb = None
    pole_bus = None
    if pa_v:
        pole_bus = max(st.bus_ids, key=lambda k: abs(pa_v[k] - (ladder[rungs[0]] or pa_v)[k]))
    elif st.bus_ids:
        pole_bus = st.bus_ids[0]
    if pole_bus is not None and st.order >= 8:
        diag = ratio_diagnostics(st, pole_bus)
        sb = diag.sb

    nearest = None
    want_poles = cfg.poles == "always" or (cfg.poles == "auto" and verdict != FEASIBLE)
    if want_poles and pole_bus is not None:
        try:
            nearest, in_window = _nearest_real_pole(net, st, prof, pole_bus, top, cfg.delta)
        except NumericsError:
            in_window = False
        if verdict != FEASIBLE and in_window and spread > cfg.eps_sol:
            verdict = INFEASIBLE

    rep = SolveReport(
        verdict=verdict,
        certification=cert,
        voltages=None,
        q=None,
        q_series=None,
        residual=None,
        magnitude_defect=None,
        max_residual=None,
        slack_power=None,
        pa_voltages=pa_v,
        ladder=rungs,
        ladder_spread=spread,
        sb=sb,
        nearest_pole=nearest,
        pole_bus=pole_bus,
        degree=top,
        order=st.order,
        precision=st.precision,
    )
    if verdict == FEASIBLE:
        res = residual(net, voltages)
        rep.voltages = voltages
        rep.residual = res.mismatch
        rep.magnitude_defect = res.magnitude
        rep.max_residual = res.max_abs
        rep.slack_power = res.slack_power
        rep.q = {bid: res.injections[bid].imag for bid in st.pv_ids}
        rep.q_series = {bid: (complex(gtables[bid][top]).imag if gtables[bid][top] is not None
                              else math.nan) for bid in st.pv_ids}
    elif verdict == INCONCLUSIVE:
        rep.guidance = (f"Padé ladder did not settle (spread {spread:.3g} at degree {top}) and no "
                        f"pole was found on (0, {1 + cfg.delta:g}); raise max_order and precision")
    rep.timing = time.perf_counter() - t0
    return rep


def _newton_certify(net: Network, ladder: dict, rungs: list[int], cfg: SolveConfig):
    """Polish the top PA rung with Newton; accept only a nearby, ladder-consistent root."""
    top = ladder[rungs[-1]]
    start = NRState.from_voltages(net, [top[b.id] for b in net.buses])
    out = nr_solve(net, start, NRConfig(tol=min(cfg.eps_res, 1e-10) / 10, max_iter=50))
    if not out.converged:
        return None
    v = {b.id: complex(z) for b, z in zip(net.buses, out.voltages)}
    if residual(net, v).max_abs > cfg.eps_res:
        return None
    ids = [b.id for b in net.non_slack]
    dists = []
    # adjacent degrees can trade places; only the coarse rungs must close in
    coarse = [m for m in rungs if m != rungs[-1] - 2] if len(rungs) > 2 else rungs
    for m in coarse:
        vals = ladder[m]
        if vals is None:
            return None
        dists.append(max(abs(vals[k] - v[k]) for k in ids))
    if dists[-1] > cfg.trust_radius:
        return None
    # the ladder must be closing in on this root, not on some other one
    for a, b in zip(dists, dists[1:]):
        if b > a + cfg.eps_sol:
            return None
    return v


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepParam:
    bus: str
    field: str
    start: float
    stop: float
    step: float

    def __post_init__(self):
        if self.step == 0 or (self.stop - self.start) / self.step < 0:
            raise ValueError("sweep step must be nonzero and point from start to stop")

    @classmethod
    def parse(cls, text: str) -> "SweepParam":
        """BUS.FIELD:FROM:TO:STEP, e.g. ``bus6.p_gen:0:1.2:0.01``."""
        try:
            target, a, b, c = text.split(":")
            bus, fld = target.rsplit(".", 1)
            return cls(normalize_bus(bus), fld, float(a), float(b), float(c))
        except ValueError as exc:
            raise ValueError(f"bad sweep spec {text!r}: expected BUS.FIELD:FROM:TO:STEP ({exc})") from None

    def values(self) -> list[float]:
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9))
        # rounding to 12 decimals keeps 0.1+0.2 style noise out of reported values
        return [round(self.start + k * self.step, 12) for k in range(n + 1)]


def normalize_bus(text: str) -> str:
    return text[3:] if text.startswith("bus") and len(text) > 3 else text


@dataclass
class SweepPoint:
    value: float
    report: SolveReport | None
    error: str = ""
    kind: str = "point"

    @property
    def feasible(self) -> bool:
        return self.report is not None and self.report.verdict == FEASIBLE


@dataclass
class Boundary:
    lo: float
    hi: float
    feasible_side: str       # "lo" or "hi"

    @property
    def estimate(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass
class SweepResult:
    param: SweepParam
    points: list[SweepPoint]
    boundaries: list[Boundary]


def _solve_point(args) -> SweepPoint:
    net, param, value, cfg, kind = args
    try:
        rep = solve(net.with_value(param.bus, param.field, value), cfg)
        return SweepPoint(value, rep, kind=kind)
    except Exception as exc:        # recorded per point; the sweep carries on
        return SweepPoint(value, None, f"{type(exc).__name__}: {exc}", kind)


def _run(tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [_solve_point(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_solve_point, tasks))


def sweep(net: Network, param: SweepParam, cfg: SolveConfig = SolveConfig(),
          jobs: int = 1, refine_boundary: bool = True) -> SweepResult:
    net.bus(param.bus)
    values = param.values()
    points = _run([(net, param, v, cfg, "point") for v in values], jobs)
    boundaries = []
    extra = []
    if refine_boundary:
        width = abs(param.step) / 100
        for a, b in zip(points, points[1:]):
            if a.feasible == b.feasible:
                continue
            lo, hi = a.value, b.value
            lo_feasible = a.feasible
            # the predicate is Feasible or not, so bisection solves skip the pole stage
            bcfg = replace(cfg, poles="never")
            while abs(hi - lo) > width:
                mid = 0.5 * (lo + hi)
                pt = _solve_point((net, param, mid, bcfg, "bisect"))
                extra.append(pt)
                if pt.feasible == lo_feasible:
                    lo = mid
                else:
                    hi = mid
            boundaries.append(Boundary(min(lo, hi), max(lo, hi),
                                       "lo" if (lo_feasible == (lo < hi)) else "hi"))
    allpts = sorted(points + extra, key=lambda p: p.value)
    return SweepResult(param, allpts, boundaries)


def _num(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".17g")


def sweep_csv(result: SweepResult, net: Network) -> str:
    """One row per solve (grid points and bisection probes), then one per boundary."""
    buses = [b.id for b in net.non_slack]
    pv = net.ids_of(BusKind.PV)
    name = f"{result.param.bus}.{result.param.field}"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", name, "verdict", "certification"]
               + [f"vmag_{b}" for b in buses] + [f"q_{b}" for b in pv]
               + ["sb_re", "sb_im", "nearest_pole", "error"])
    for pt in result.points:
        r = pt.report
        if r is None:
            w.writerow([pt.kind, _num(pt.value), "", ""] + [""] * (len(buses) + len(pv))
                       + ["", "", "", pt.error])
            continue
        vm = [_num(abs(r.voltages[b])) if r.voltages else "" for b in buses]
        qs = [_num(r.q[b]) if r.q else "" for b in pv]
        sb = [_num(r.sb.real), _num(r.sb.imag)] if r.sb is not None else ["", ""]
        w.writerow([pt.kind, _num(pt.value), r.verdict, r.certification or ""] + vm + qs
                   + sb + [_num(r.nearest_pole), ""])
    for b in result.boundaries:
        w.writerow(["boundary", _num(b.estimate), f"Feasible on {b.feasible_side} side", ""]
                   + [""] * (len(buses) + len(pv)) + ["", "", "", ""])
    return buf.getvalue()
