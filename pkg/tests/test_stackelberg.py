"""Per-slot equilibrium iteration: projection, schedule, determinism, quality."""

import math

import pytest

from nanodr.domain import (
    ConfigurationError,
    FollowerSlot,
    NanogridControl,
    NanogridParams,
    PmeControl,
    PmeParams,
    SlotData,
    SlotState,
)
from nanodr.nanogrid import best_response
from nanodr.pme import _pro_prime, optimal_charge
from nanodr.stackelberg import (
    GameConfig,
    QueueResponder,
    project_leader,
    solve_slot,
)

PME = PmeParams(e_min=2.0, e_max_cap=16.0, u_cmax=1.0, u_dmax=1.0, c_b=0.01)


def _desk_slot(n=3, m_s=12.0, m_b=3.0, g_t=4.0):
    followers = tuple(
        FollowerSlot(rp=1.0 + 0.3 * i, d=1.5 + 0.2 * i, t_out=25.0 + i,
                     t_opt=70.5)
        for i in range(n)
    )
    return SlotData(m_s=m_s, m_b=m_b, g_t=g_t, followers=followers)


def _desk_setup(n=3):
    params = [
        NanogridParams(epsilon=0.94 + 0.01 * i, eta=15.0, e_max=5.0,
                       t_min=66.0, t_max=77.0, l_max=10.0, gamma=0.01)
        for i in range(n)
    ]
    controls = [NanogridControl(v_i=0.35, gamma_shift=-76.0) for _ in range(n)]
    t = tuple(69.0 + 0.5 * i for i in range(n))
    state = SlotState(t=t, h=tuple(x - 76.0 for x in t), e_batt=9.0,
                      b=9.0 - 18.5)
    return params, controls, state, PmeControl(v_p=1.0, theta=-18.5)


# -- projection -------------------------------------------------------------


def test_projection_identity_inside_box():
    act = project_leader(8.0, 5.0, 0.5, 12.0, 3.0, PME, 0.01)
    assert (act.p_s, act.p_b, act.y) == (8.0, 5.0, 0.5)


def test_projection_clamps_selling_price():
    act = project_leader(15.0, 5.0, 0.0, 12.0, 3.0, PME, 0.01)
    assert act.p_s == 12.0


def test_projection_restores_order_with_exact_gap():
    act = project_leader(5.0, 9.0, 0.0, 12.0, 3.0, PME, 0.01)
    assert act.p_b == 9.0
    assert act.p_s == pytest.approx(9.01)
    assert act.p_s - act.p_b == pytest.approx(0.01)


def test_projection_clamps_charge():
    act = project_leader(8.0, 5.0, 7.0, 12.0, 3.0, PME, 0.01)
    assert act.y == PME.u_cmax
    act = project_leader(8.0, 5.0, -7.0, 12.0, 3.0, PME, 0.01)
    assert act.y == -PME.u_dmax


def test_projection_rejects_narrow_band():
    with pytest.raises(ConfigurationError, match="min_gap"):
        project_leader(8.0, 5.0, 0.0, 3.005, 3.0, PME, 0.01)


def test_projection_accepts_band_equal_to_gap():
    # 3.01 - 3.0 is a hair under 0.01 in floats; nominal equality must pass.
    act = project_leader(8.0, 5.0, 0.0, 3.01, 3.0, PME, 0.01)
    assert act.p_b == 3.0
    assert act.p_s == 3.01
    assert act.p_s > act.p_b


# -- step schedule ----------------------------------------------------------


def test_step_schedule_properties():
    cfg = GameConfig()
    steps = [cfg.step_scale_s / (cfg.step_s0 + cfg.step_s1 * m)
             for m in range(1, 200_001)]
    assert all(b < a for a, b in zip(steps, steps[1:]))
    # The running sum keeps growing without bound (harmonic divergence):
    # doubling the horizon adds at least a fixed increment.
    partial_1 = sum(steps[:100_000])
    partial_2 = partial_1 + sum(steps[100_000:])
    assert partial_2 - partial_1 > 0.9 * (cfg.step_scale_s / cfg.step_s1) * math.log(2) * 0.9
    # The sum of squares converges: the tail is dominated by an integral.
    tail = sum(s * s for s in steps[1000:])
    bound = (cfg.step_scale_s / cfg.step_s1) ** 2 / 1000.0
    assert tail < bound


def test_game_config_validation():
    with pytest.raises(ConfigurationError):
        GameConfig(rho=0.0)
    with pytest.raises(ConfigurationError):
        GameConfig(max_iters=0)
    with pytest.raises(ConfigurationError):
        GameConfig(step_s1=-1.0)
    with pytest.raises(ConfigurationError):
        GameConfig(min_gap=0.0)


# -- solve_slot -------------------------------------------------------------


def test_solver_is_deterministic():
    params, controls, state, pmec = _desk_setup()
    slot = _desk_slot()
    cfg = GameConfig()
    a = solve_slot(state, slot, params, controls, PME, pmec, cfg)
    b = solve_slot(state, slot, params, controls, PME, pmec, cfg)
    assert a.leader == b.leader
    assert a.followers == b.followers
    assert a.trace.records == b.trace.records
    assert a.trace.iterations == b.trace.iterations


def test_no_followers_reaches_closed_form_charge():
    state = SlotState(t=(), h=(), e_batt=9.0, b=-9.5)
    slot = SlotData(m_s=12.0, m_b=3.0, g_t=-5.0, followers=())
    pmec = PmeControl(v_p=1.0, theta=-18.5)
    sol = solve_slot(state, slot, [], [], PME, pmec, GameConfig())
    # Net residual is y + 5 > 0 for any feasible y: the selling price is
    # marginal and the closed form applies directly.
    want = optimal_charge(state.b, slot.m_s, pmec, PME)
    assert sol.leader.y == pytest.approx(want, abs=1e-9)


def test_trace_iterates_stay_feasible():
    params, controls, state, pmec = _desk_setup()
    slot = _desk_slot()
    sol = solve_slot(state, slot, params, controls, PME, pmec, GameConfig())
    for rec in sol.trace.records:
        act = rec.action
        assert slot.m_b <= act.p_b < act.p_s <= slot.m_s
        assert act.p_s - act.p_b >= 0.01 - 1e-12
        assert -PME.u_dmax <= act.y <= PME.u_cmax
    assert sol.trace.iterations <= GameConfig().max_iters
    assert len(sol.trace.records) == sol.trace.iterations


def test_returned_action_is_unilaterally_stable():
    params, controls, state, pmec = _desk_setup()
    slot = _desk_slot()
    cfg = GameConfig()
    sol = solve_slot(state, slot, params, controls, PME, pmec, cfg)
    responder = QueueResponder(state, slot, params, controls)

    def pro(ps, pb, y):
        es = responder.respond(ps, pb)
        tps = [fs.d + e - fs.rp for fs, e in zip(slot.followers, es)]
        return _pro_prime(ps, pb, y, tps, state.b, slot.g_t, slot.m_s,
                          slot.m_b, pmec.v_p, PME.c_b)

    act = sol.leader
    base = pro(act.p_s, act.p_b, act.y)
    tol = 1e-6 * (1.0 + abs(base))
    for dps, dpb, dy in ((cfg.rho, 0, 0), (-cfg.rho, 0, 0), (0, cfg.rho, 0),
                         (0, -cfg.rho, 0), (0, 0, cfg.rho), (0, 0, -cfg.rho)):
        pert = project_leader(act.p_s + dps, act.p_b + dpb, act.y + dy,
                              slot.m_s, slot.m_b, PME, cfg.min_gap)
        assert pro(pert.p_s, pert.p_b, pert.y) >= base - tol
    # Followers re-solved at the final prices reproduce the returned draws.
    for i, f in enumerate(sol.followers):
        redo = best_response(state.h[i], state.t[i], slot.followers[i],
                             sol.leader, params[i], controls[i])
        assert redo.e == pytest.approx(f.e, abs=1e-6)


def test_non_convergence_is_flagged_not_raised():
    params, controls, state, pmec = _desk_setup()
    slot = _desk_slot()
    cfg = GameConfig(max_iters=3, polish=False)
    sol = solve_slot(state, slot, params, controls, PME, pmec, cfg)
    assert not sol.trace.converged
    assert sol.trace.iterations == 3
