import numpy as np
import pytest

from helmpf.nr import nr_solve
from helmpf.solver import (
    FEASIBLE,
    INCONCLUSIVE,
    INFEASIBLE,
    SolveConfig,
    SweepParam,
    auto_precision,
    ladder_degrees,
    residual,
    solve,
    sweep,
    sweep_csv,
    usable_degree,
)

from conftest import seven_bus

TABLE_1 = (0.9408, 0.9774, 0.9953, 0.9447)


@pytest.fixture(scope="module")
def report_02():
    return solve(seven_bus(0.2))


def test_feasible_report_contract(report_02):
    r = report_02
    assert r.verdict == FEASIBLE and r.certification == "ladder"
    assert [r.vmag(b) for b in "1234"] == pytest.approx(TABLE_1, abs=5e-4)
    assert r.max_residual <= 1e-8
    assert all(abs(x) <= 1e-8 for x in r.magnitude_defect.values())
    for bid in ("5", "6"):
        assert abs(r.q[bid] - r.q_series[bid]) <= 10 * 1e-8
    assert r.slack_power is not None
    assert r.degree == 99 and r.order == 200
    assert r.sb.real < 0


def test_pa_matches_newton_on_stable_range():
    for p6 in (0.0, 0.45, 0.9):
        r = solve(seven_bus(p6))
        ref = nr_solve(seven_bus(p6))
        assert r.verdict == FEASIBLE
        for k, b in enumerate("123456"):
            assert abs(r.pa_voltages[b] - ref.voltages[k]) < 1e-6


def test_report_is_deterministic(report_02):
    again = solve(seven_bus(0.2))
    assert again.to_dict() == report_02.to_dict()


def test_residual_of_zero_injection_germ(flat_net):
    res = residual(flat_net, {b.id: 1.0 for b in flat_net.buses})
    assert all(z == 0 for z in res.mismatch.values())
    assert all(x == 0 for x in res.magnitude.values())
    assert res.slack_power == 0


def test_residual_of_rounded_table_values(report_02):
    net = seven_bus(0.2)
    v = dict(report_02.voltages)
    for bid, mag in zip("1234", TABLE_1):
        v[bid] = mag * v[bid] / abs(v[bid])
    assert residual(net, v).max_abs < 5e-3


def test_pq_residual_convention():
    net = seven_bus(0.2)
    out = nr_solve(net)
    v = out.voltages.copy()
    v[0] *= 1.01
    res = residual(net, dict(zip((b.id for b in net.buses), v)))
    y = np.array([[complex(x) for x in row] for row in
                  __import__("helmpf.netmodel", fromlist=["x"]).build_admittance(net).entries])
    expect = np.conj(-(0.2 + 0.1j)) - np.conj(v[0]) * (y[0] @ v)
    assert res.mismatch["1"] == pytest.approx(expect, abs=1e-14)


def test_infeasible_beyond_the_fold():
    r = solve(seven_bus(1.12))
    assert r.verdict == INFEASIBLE
    assert r.voltages is None
    assert 0 < r.nearest_pole < 1.05


def test_inconclusive_when_series_is_too_short():
    r = solve(seven_bus(1.055), SolveConfig(max_order=20, precision=128, refine=False))
    assert r.verdict == INCONCLUSIVE
    assert "raise" in r.guidance


def test_newton_certification_near_the_fold():
    r = solve(seven_bus(1.02))
    assert r.verdict == FEASIBLE and r.certification == "newton"
    assert [r.vmag(b) for b in "1234"] == pytest.approx((0.5355, 0.7380, 0.8283, 0.8247), abs=1e-3)


def test_trust_radius_rejects_far_newton_root():
    r = solve(seven_bus(1.0), SolveConfig(trust_radius=1e-9, poles="never"))
    assert r.verdict == INCONCLUSIVE


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(max_order=5)
    with pytest.raises(ValueError):
        SolveConfig(eps_res=0)
    with pytest.raises(ValueError):
        SolveConfig(poles="sometimes")


def test_precision_rules():
    assert auto_precision(0) == 128
    assert auto_precision(830) == 576
    prof = [3.7 * n for n in range(201)]
    m = usable_degree(prof, 256)
    assert prof[2 * m] <= 2 * 256 - 96 < prof[2 * m + 2]
    assert ladder_degrees(99) == [24, 49, 97, 99]
    assert ladder_degrees(2) == [1, 2]


def test_sweep_param_parsing():
    p = SweepParam.parse("bus6.p_gen:0:1.2:0.01")
    assert (p.bus, p.field) == ("6", "p_gen")
    vals = p.values()
    assert len(vals) == 121 and vals[-1] == 1.2 and vals[30] == 0.3
    with pytest.raises(ValueError):
        SweepParam.parse("bus6:0:1")
    with pytest.raises(ValueError):
        SweepParam("6", "p_gen", 1.0, 0.0, 0.1)


def test_sweep_records_errors_and_orders_points(net7):
    cfg = SolveConfig(max_order=40, precision=192, poles="never")
    res = sweep(net7, SweepParam("6", "v_set", 0.2, -0.2, -0.2), cfg, refine_boundary=False)
    assert [p.value for p in res.points] == [-0.2, 0.0, 0.2]
    bad = [p for p in res.points if p.report is None]
    assert len(bad) == 2 and all("v_set" in p.error for p in bad)
    text = sweep_csv(res, net7)
    assert text.splitlines()[0].startswith("kind,6.v_set,verdict")
    assert len(text.splitlines()) == 4


def test_sweep_bisects_to_the_fold(net7):
    res = sweep(net7, SweepParam("6", "p_gen", 1.05, 1.06, 0.01))
    (b,) = res.boundaries
    assert b.hi - b.lo <= 1e-4
    assert abs(b.estimate - 1.0569) < 5e-4
    assert b.feasible_side == "lo"


def test_parallel_sweep_matches_serial(net7):
    cfg = SolveConfig(max_order=40, precision=192, poles="never")
    param = SweepParam("6", "p_gen", 0.1, 0.3, 0.1)
    serial = sweep(net7, param, cfg, refine_boundary=False)
    pooled = sweep(net7, param, cfg, jobs=2, refine_boundary=False)
    assert sweep_csv(serial, net7) == sweep_csv(pooled, net7)
