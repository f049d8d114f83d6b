"""Core types and primitive functions.

Covers the worked numeric examples for the thermal step, the bilinear trade
cost, the battery cost and the aggregator profit, plus the validation paths
of every parameter record and the scenario container.
"""

import pytest
from hypothesis import given, strategies as st

from nanodr.domain import (
    ConfigurationError,
    LeaderAction,
    NanogridControl,
    NanogridParams,
    PmeControl,
    PmeParams,
    Scenario,
    ScenarioError,
    battery_cost,
    bilinear_trade_cost,
    check_assumptions,
    pme_profit,
    thermal_step,
)

PARAMS = NanogridParams(epsilon=0.95, eta=15.0, e_max=5.0, t_min=66.0,
                        t_max=77.0, l_max=10.0, gamma=0.01)


# -- thermal step -----------------------------------------------------------


def test_thermal_step_fixed_point():
    assert thermal_step(70.0, 70.0, 0.0, PARAMS) == pytest.approx(70.0, abs=1e-12)


def test_thermal_step_heating_arithmetic():
    # 0.95*70 + 0.05*(30 + 15*5) = 71.75
    assert thermal_step(70.0, 30.0, 5.0, PARAMS) == pytest.approx(71.75, abs=1e-12)


def test_thermal_step_cooling_flips_sign():
    # 0.95*70 + 0.05*(30 - 75) = 64.25
    assert thermal_step(70.0, 30.0, 5.0, PARAMS, mode="cooling") == pytest.approx(
        64.25, abs=1e-12)


@given(st.floats(0.0, 5.0), st.floats(1e-6, 4.99))
def test_thermal_step_increasing_in_draw(e_hi, gap):
    e_lo = e_hi - gap
    if e_lo < 0.0:
        return
    lo = thermal_step(70.0, 30.0, e_lo, PARAMS)
    hi = thermal_step(70.0, 30.0, e_hi, PARAMS)
    assert hi > lo


@given(st.floats(-20.0, 77.0), st.floats(0.001, 30.0))
def test_thermal_step_increasing_in_outdoor(t_out, bump):
    lo = thermal_step(70.0, t_out, 2.0, PARAMS)
    hi = thermal_step(70.0, t_out + bump, 2.0, PARAMS)
    assert hi > lo


# -- trade cost -------------------------------------------------------------


def test_trade_cost_branches():
    assert bilinear_trade_cost(0.0, 10.0, 5.0) == 0.0
    assert bilinear_trade_cost(2.0, 10.0, 5.0) == pytest.approx(20.0)
    assert bilinear_trade_cost(-2.0, 10.0, 5.0) == pytest.approx(-10.0)


@given(st.floats(-50.0, 50.0), st.floats(0.0, 20.0), st.floats(0.0, 20.0))
def test_trade_cost_split_price_identity(tp, p_lo, spread):
    p_b = p_lo
    p_s = p_lo + spread
    direct = bilinear_trade_cost(tp, p_s, p_b)
    split = 0.5 * (p_s - p_b) * abs(tp) + 0.5 * (p_s + p_b) * tp
    assert direct == pytest.approx(split, rel=1e-12, abs=1e-12)


# -- battery cost -----------------------------------------------------------


def test_battery_cost_values():
    assert battery_cost(0.0, 0.01) == 0.0
    assert battery_cost(1.0, 0.01) == pytest.approx(0.005)
    assert battery_cost(-1.0, 0.01) == pytest.approx(0.005)


@given(st.floats(-10.0, 10.0), st.floats(-10.0, 10.0))
def test_battery_cost_symmetric_and_convex(y1, y2):
    c_b = 0.01
    assert battery_cost(y1, c_b) == battery_cost(-y1, c_b)
    mid = battery_cost(0.5 * (y1 + y2), c_b)
    assert mid <= 0.5 * (battery_cost(y1, c_b) + battery_cost(y2, c_b)) + 1e-12


# -- aggregator profit ------------------------------------------------------


def test_pme_profit_all_zero():
    action = LeaderAction(p_s=10.0, p_b=5.0, y=0.0)
    assert pme_profit(action, [0.0], 0.0, 12.0, 3.0, 0.01) == 0.0


def test_pme_profit_balanced_residual():
    # One buyer of 2 kWh at p_s=10, own generation covers it: profit is pure
    # revenue.
    action = LeaderAction(p_s=10.0, p_b=5.0, y=0.0)
    assert pme_profit(action, [2.0], 2.0, 12.0, 3.0, 0.01) == pytest.approx(20.0)


def test_pme_profit_grid_purchase():
    # Same sale but the 2 kWh must be bought from the grid at 12.
    action = LeaderAction(p_s=10.0, p_b=5.0, y=0.0)
    assert pme_profit(action, [2.0], 0.0, 12.0, 3.0, 0.01) == pytest.approx(-4.0)


# -- parameter validation ---------------------------------------------------


def test_nanogrid_params_validation():
    with pytest.raises(ConfigurationError):
        NanogridParams(epsilon=1.0, eta=15.0, e_max=5.0, t_min=66.0,
                       t_max=77.0, l_max=10.0, gamma=0.01)
    with pytest.raises(ConfigurationError):
        NanogridParams(epsilon=0.95, eta=-1.0, e_max=5.0, t_min=66.0,
                       t_max=77.0, l_max=10.0, gamma=0.01)
    with pytest.raises(ConfigurationError):
        NanogridParams(epsilon=0.95, eta=15.0, e_max=5.0, t_min=77.0,
                       t_max=66.0, l_max=10.0, gamma=0.01)
    with pytest.raises(ConfigurationError):
        NanogridParams(epsilon=0.95, eta=15.0, e_max=5.0, t_min=66.0,
                       t_max=77.0, l_max=10.0, gamma=-0.1)


def test_pme_params_validation():
    with pytest.raises(ConfigurationError):
        PmeParams(e_min=16.0, e_max_cap=2.0, u_cmax=1.0, u_dmax=1.0, c_b=0.01)
    with pytest.raises(ConfigurationError):
        PmeParams(e_min=2.0, e_max_cap=16.0, u_cmax=0.0, u_dmax=1.0, c_b=0.01)
    # Window must exceed one slot of full charge plus discharge.
    with pytest.raises(ConfigurationError):
        PmeParams(e_min=2.0, e_max_cap=4.0, u_cmax=1.0, u_dmax=1.0, c_b=0.01)


def test_control_validation():
    with pytest.raises(ConfigurationError):
        NanogridControl(v_i=0.0, gamma_shift=-75.0)
    with pytest.raises(ConfigurationError):
        PmeControl(v_p=-1.0, theta=-18.0)


# -- scenario ---------------------------------------------------------------


def _tiny_scenario(m_s=10.0, m_b=3.0, rp=1.0, d=1.0):
    return Scenario.from_series(
        n=1, slots=2,
        rp=[[rp], [rp]], d=[[d], [d]], t_out=[[30.0], [30.0]],
        t_opt=[[70.0], [70.0]], m_s=[m_s, m_s], m_b=[m_b, m_b], g_t=[0.0, 0.0],
    )


def test_scenario_valid_roundtrip_access():
    scen = _tiny_scenario()
    slot = scen.slot(1)
    assert slot.m_s == 10.0
    assert slot.followers[0].t_opt == 70.0
    assert scen.t_out_min(0) == 30.0
    assert scen.m_s_max() == 10.0


def test_scenario_rejects_empty_price_band():
    with pytest.raises(ScenarioError, match="slot 0"):
        _tiny_scenario(m_s=2.0, m_b=3.0)


def test_scenario_rejects_negative_series():
    with pytest.raises(ScenarioError, match="rp negative"):
        _tiny_scenario(rp=-0.5)


def test_scenario_rejects_ragged_rows():
    with pytest.raises(ScenarioError, match="row 1"):
        Scenario.from_series(
            n=1, slots=2,
            rp=[[1.0], [1.0, 2.0]], d=[[1.0], [1.0]],
            t_out=[[30.0], [30.0]], t_opt=[[70.0], [70.0]],
            m_s=[10.0, 10.0], m_b=[3.0, 3.0], g_t=[0.0, 0.0],
        )


def test_assumption_checks_name_the_assumption():
    params = [PARAMS]
    hot = Scenario.from_series(
        n=1, slots=1, rp=[[0.0]], d=[[1.0]], t_out=[[80.0]], t_opt=[[70.0]],
        m_s=[10.0], m_b=[3.0], g_t=[0.0],
    )
    with pytest.raises(ConfigurationError, match=r"assumption \(a\)"):
        check_assumptions(hot, params)

    frigid = Scenario.from_series(
        n=1, slots=1, rp=[[0.0]], d=[[1.0]], t_out=[[-20.0]], t_opt=[[70.0]],
        m_s=[10.0], m_b=[3.0], g_t=[0.0],
    )
    with pytest.raises(ConfigurationError, match=r"assumption \(b\)"):
        check_assumptions(frigid, params)

    sluggish = [NanogridParams(epsilon=0.5, eta=15.0, e_max=5.0, t_min=66.0,
                               t_max=77.0, l_max=10.0, gamma=0.01)]
    mild = Scenario.from_series(
        n=1, slots=1, rp=[[0.0]], d=[[1.0]], t_out=[[40.0]], t_opt=[[70.0]],
        m_s=[10.0], m_b=[3.0], g_t=[0.0],
    )
    with pytest.raises(ConfigurationError, match=r"assumption \(c\)"):
        check_assumptions(mild, sluggish)
