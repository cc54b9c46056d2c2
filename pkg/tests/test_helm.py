import math

import pytest
from gmpy2 import mpfr
from hypothesis import given, settings, strategies as st

from helmpf.helm import (
    EmbeddingError,
    compute_series,
    extend,
    factor_reduced,
    germ,
    invariant_defects,
    ratio_diagnostics,
    ratio_estimate,
)
from helmpf.netmodel import build_admittance, network_from_dict
from helmpf.nr import nr_solve
from helmpf.pade import diagonal_values
from helmpf.numerics import working_precision

from conftest import flat_doc, seven_bus


def test_germ_sits_at_slack_voltage(net7):
    st = germ(net7, precision=128)
    assert st.order == 0
    for bid in st.bus_ids:
        assert st.c[bid][0] == 1
        assert st.d[bid][0] == 1
    for bid in ("5", "6"):
        assert complex(st.cbar[bid][0]) == pytest.approx(1.21, abs=1e-30)
        assert complex(st.g[bid][0] + st.gbar[bid][0]) == pytest.approx(2.0)


def test_zero_injection_series_is_constant(flat_net):
    st = compute_series(flat_net, 30, 128)
    for bid in st.bus_ids:
        assert all(c == 0 for c in st.c[bid][1:])
        assert st.c[bid][0] == 1


def test_extend_matches_one_shot(net7):
    y = build_admittance(net7, 192)
    with working_precision(192):
        lu = factor_reduced(net7, y)
        st = germ(net7, y, 192, lu)
        extend(st, net7, y, lu, 10)
        extend(st, net7, y, lu, 25)
    ref = compute_series(net7, 25, 192)
    for bid in st.bus_ids:
        assert st.c[bid] == ref.c[bid]


def test_invariants_hold(net7):
    st = compute_series(net7, 60, 256)
    defects = invariant_defects(st, net7)
    assert set(defects) == {"reciprocal", "magnitude", "power_sum", "gbar"}
    assert max(defects.values()) < 2.0 ** -200


def test_coefficients_do_not_depend_on_precision():
    net = seven_bus(0.2)
    lo, hi = compute_series(net, 40, 256), compute_series(net, 40, 512)
    with working_precision(512):
        for bid in lo.bus_ids:
            for a, b in zip(lo.c[bid], hi.c[bid]):
                assert abs(a - b) <= abs(b) * mpfr(2) ** -180


def test_pade_sum_reaches_table_one():
    net = seven_bus(0.2)
    st = compute_series(net, 120, 448)
    ref = nr_solve(net).voltages
    with working_precision(448):
        for k, bid in enumerate(st.bus_ids):
            v = complex(diagonal_values(st.c[bid], 1)[-1])
            assert abs(v - ref[k]) < 1e-5
    want = (0.9408, 0.9774, 0.9953, 0.9447)
    assert [round(abs(ref[k]), 4) for k in range(4)] == list(want)


def test_truncated_sum_residual_shrinks_with_degree():
    net = seven_bus(0.3)
    st = compute_series(net, 100, 384)
    ref = nr_solve(net).voltages
    with working_precision(384):
        vals = diagonal_values(st.c["1"], 1)
    errs = [abs(complex(vals[m]) - ref[0]) for m in (10, 25, 49)]
    assert errs[0] > errs[1] > errs[2]


def test_ratio_estimate_on_geometric_series():
    two = ratio_estimate([mpfr(2) ** -n for n in range(40)])
    assert two.radius == pytest.approx(2.0, rel=1e-12)
    alt = ratio_estimate([mpfr(-2) ** n for n in range(40)])
    assert alt.sb == pytest.approx(-0.5, rel=1e-12)
    none = ratio_estimate([1, 0, 0, 0, 0, 0, 0, 0, 0])
    assert not none.defined and math.isinf(none.radius)


def test_ratio_diagnostics_sees_negative_singularity():
    net = seven_bus(0.2)
    st = compute_series(net, 80, 256)
    sb = ratio_diagnostics(st, "1").sb
    assert -0.09 < sb.real < -0.06 and abs(sb.imag) < 1e-3
    with pytest.raises(ValueError):
        ratio_diagnostics(compute_series(net, 5, 128), "1")


def test_slack_only_connection_is_required():
    doc = flat_doc()
    doc["branches"] = [b for b in doc["branches"] if "slack" not in (b["from"], b["to"])]
    doc["branches"].append({"from": "slack", "to": "1", "z": [0.7, 0.4]})
    doc["buses"].append({"id": "7", "kind": "pq", "s_load": [0.1, 0.0]})
    net = network_from_dict(doc)
    with pytest.raises(EmbeddingError):
        compute_series(net, 5, 128)


@settings(max_examples=10, deadline=None)
@given(st.floats(-0.1, 0.9), st.floats(0.95, 1.15))
def test_invariants_property(p6, v6):
    net = seven_bus(0.2).with_value("6", "p_gen", p6).with_value("6", "v_set", v6)
    st = compute_series(net, 25, 192)
    assert max(invariant_defects(st, net).values()) < 2.0 ** -150
