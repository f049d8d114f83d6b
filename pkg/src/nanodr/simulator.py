"""Outer time loop: per-slot game solve, state updates and accounting.

Each slot is solved to its equilibrium, the physical states (indoor
temperatures, battery energy) and their shifted queue copies advance by
their difference equations, and economics are accumulated into a RunReport.

The queue copies are stored in exactly-shifted form (H = T + gamma_shift,
B = E + theta) so the identities cannot drift over long horizons; every
step the recursive queue updates are checked against the shifted physical
updates and a disagreement beyond rounding raises InvariantViolation.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Callable, Sequence

from .domain import (
    ConfigurationError,
    FollowerAction,
    InvariantViolation,
    LeaderAction,
    Mode,
    NanogridControl,
    NanogridParams,
    PmeControl,
    PmeParams,
    Scenario,
    SlotData,
    SlotState,
    bilinear_trade_cost,
    check_assumptions,
    midpoint,
    pme_profit,
    thermal_step,
)
from .stackelberg import GameConfig, IterationTrace, SlotSolution, solve_slot

_IDENTITY_TOL = 1e-12


@dataclass(frozen=True)
class SlotOutcome:
    """Everything one slot produced: actions, costs, and the state it left."""

    slot: int
    leader: LeaderAction
    followers: tuple[FollowerAction, ...]
    next_state: SlotState
    trade_costs: tuple[float, ...]       # per nanogrid, cent
    discomfort_costs: tuple[float, ...]  # per nanogrid, cent
    pme_profit: float                    # cent
    grid_residual: float                 # kWh, sum(tp) - g_t + y
    converged: bool
    iterations: int
    trace: IterationTrace | None = None


@dataclass(frozen=True)
class RunReport:
    """Aggregated economics and per-slot series over a whole horizon."""

    pme_profit_total: float    # cent
    energy_cost_total: float   # cent, nanogrids' trading cost
    discomfort_total: float    # cent
    aggregate_cost: float      # discomfort + energy cost - profit
    tatd: float                # mean |T - target| over nanogrids and slots (°F)
    temperatures: tuple[tuple[float, ...], ...]  # end-of-slot indoor T (°F)
    battery: tuple[float, ...]                   # end-of-slot battery energy (kWh)
    p_s_series: tuple[float, ...]
    p_b_series: tuple[float, ...]
    y_series: tuple[float, ...]
    hvac: tuple[tuple[float, ...], ...]          # HVAC draw per slot/nanogrid (kWh)
    comfort_violations: int
    battery_violations: int
    outcomes: tuple[SlotOutcome, ...]

    @property
    def iterations(self) -> tuple[int, ...]:
        return tuple(o.iterations for o in self.outcomes)

    @property
    def median_iterations(self) -> float:
        return statistics.median(self.iterations)

    @property
    def all_converged(self) -> bool:
        return all(o.converged for o in self.outcomes)

    @property
    def total_hvac(self) -> float:
        return math.fsum(e for row in self.hvac for e in row)


def update_queues(state: SlotState, followers: Sequence[FollowerAction],
                  leader: LeaderAction, slot: SlotData,
                  ng_params: Sequence[NanogridParams],
                  ng_controls: Sequence[NanogridControl],
                  pme_control: PmeControl,
                  mode: Mode = "heating") -> SlotState:
    """Advance physical states and queues by one slot.

    Temperatures move by the inertial model, the battery by its balance
    equation; each queue's own recursion is evaluated and compared against
    the shifted physical value before the shifted form is stored.
    """
    t_next: list[float] = []
    h_next: list[float] = []
    for i, (f, p, c) in enumerate(zip(followers, ng_params, ng_controls)):
        fs = slot.followers[i]
        t_new = thermal_step(state.t[i], fs.t_out, f.e, p, mode)
        heat = p.eta * f.e if mode == "heating" else -p.eta * f.e
        h_recursive = (p.epsilon * state.h[i]
                       + (1.0 - p.epsilon) * (c.gamma_shift + fs.t_out + heat))
        h_shifted = t_new + c.gamma_shift
        if abs(h_recursive - h_shifted) > _IDENTITY_TOL:
            raise InvariantViolation(
                f"temperature queue identity broke for nanogrid {i}: "
                f"recursive {h_recursive} vs shifted {h_shifted}"
            )
        t_next.append(t_new)
        h_next.append(h_shifted)

    e_new = state.e_batt + leader.y
    b_recursive = state.b + leader.y
    b_shifted = e_new + pme_control.theta
    if abs(b_recursive - b_shifted) > _IDENTITY_TOL:
        raise InvariantViolation(
            f"battery queue identity broke: recursive {b_recursive} "
            f"vs shifted {b_shifted}"
        )
    return SlotState(t=tuple(t_next), h=tuple(h_next), e_batt=e_new, b=b_shifted)


SlotSolver = Callable[[SlotState, SlotData, int], SlotSolution]


def run(scenario: Scenario, ng_params: Sequence[NanogridParams],
        ng_controls: Sequence[NanogridControl], pme_params: PmeParams,
        pme_control: PmeControl, config: GameConfig = GameConfig(),
        t0: Sequence[float] | None = None, e0: float | None = None,
        mode: Mode = "heating", strict_bounds: bool = True,
        keep_traces: bool = False, slot_solver: SlotSolver | None = None,
        validate_assumptions: bool = True) -> RunReport:
    """Simulate the whole horizon and aggregate the economics.

    Initial temperatures default to each comfort band's midpoint and the
    battery to the middle of its window.  With ``strict_bounds`` a comfort or
    battery bound breach raises InvariantViolation naming the slot (it should
    be unreachable under certified controls); otherwise breaches are only
    counted.  ``slot_solver`` substitutes a different per-slot policy (used
    by the comparison cases); the default is the equilibrium solve.
    """
    n = scenario.n
    if len(ng_params) != n or len(ng_controls) != n:
        raise ConfigurationError(
            f"need {n} parameter and control sets, got "
            f"{len(ng_params)} and {len(ng_controls)}"
        )
    if validate_assumptions:
        check_assumptions(scenario, ng_params)
    if t0 is None:
        t0 = [midpoint(p.t_min, p.t_max) for p in ng_params]
    if e0 is None:
        e0 = midpoint(pme_params.e_min, pme_params.e_max_cap)
    if len(t0) != n:
        raise ConfigurationError(f"need {n} initial temperatures, got {len(t0)}")
    for i, (temp, p) in enumerate(zip(t0, ng_params)):
        if not p.t_min <= temp <= p.t_max:
            raise ConfigurationError(
                f"initial temperature {temp} outside comfort band for nanogrid {i}"
            )
    if not pme_params.e_min <= e0 <= pme_params.e_max_cap:
        raise ConfigurationError(f"initial battery energy {e0} outside window")

    if slot_solver is None:
        def slot_solver(state: SlotState, slot: SlotData, k: int) -> SlotSolution:
            return solve_slot(state, slot, ng_params, ng_controls, pme_params,
                              pme_control, config)

    state = SlotState(
        t=tuple(float(x) for x in t0),
        h=tuple(float(x) + c.gamma_shift for x, c in zip(t0, ng_controls)),
        e_batt=float(e0),
        b=float(e0) + pme_control.theta,
    )

    tol = 1e-9
    outcomes: list[SlotOutcome] = []
    temperatures: list[tuple[float, ...]] = []
    battery: list[float] = []
    p_s_series: list[float] = []
    p_b_series: list[float] = []
    y_series: list[float] = []
    hvac: list[tuple[float, ...]] = []
    profit_sum = 0.0
    energy_sum = 0.0
    discomfort_sum = 0.0
    tatd_sum = 0.0
    comfort_violations = 0
    battery_violations = 0

    for k in range(scenario.slots):
        slot = scenario.slot(k)
        sol = slot_solver(state, slot, k)
        leader, followers = sol.leader, sol.followers

        next_state = update_queues(state, followers, leader, slot, ng_params,
                                   ng_controls, pme_control, mode)
        trade_costs = tuple(
            bilinear_trade_cost(f.tp, leader.p_s, leader.p_b) for f in followers
        )
        discomfort_costs = tuple(
            p.gamma * (next_state.t[i] - slot.followers[i].t_opt) ** 2
            for i, p in enumerate(ng_params)
        )
        tps = [f.tp for f in followers]
        profit = pme_profit(leader, tps, slot.g_t, slot.m_s, slot.m_b,
                            pme_params.c_b)
        residual = math.fsum(tps) - slot.g_t + leader.y

        for i, p in enumerate(ng_params):
            if not p.t_min - tol <= next_state.t[i] <= p.t_max + tol:
                comfort_violations += 1
                if strict_bounds:
                    raise InvariantViolation(
                        f"comfort bound violated at slot {k}, nanogrid {i}: "
                        f"T={next_state.t[i]} outside [{p.t_min}, {p.t_max}]"
                    )
        if not pme_params.e_min - tol <= next_state.e_batt <= pme_params.e_max_cap + tol:
            battery_violations += 1
            if strict_bounds:
                raise InvariantViolation(
                    f"battery bound violated at slot {k}: "
                    f"E={next_state.e_batt} outside "
                    f"[{pme_params.e_min}, {pme_params.e_max_cap}]"
                )

        outcomes.append(SlotOutcome(
            slot=k, leader=leader, followers=followers, next_state=next_state,
            trade_costs=trade_costs, discomfort_costs=discomfort_costs,
            pme_profit=profit, grid_residual=residual,
            converged=sol.trace.converged, iterations=sol.trace.iterations,
            trace=sol.trace if keep_traces else None,
        ))
        temperatures.append(next_state.t)
        battery.append(next_state.e_batt)
        p_s_series.append(leader.p_s)
        p_b_series.append(leader.p_b)
        y_series.append(leader.y)
        hvac.append(tuple(f.e for f in followers))

        profit_sum += profit
        energy_sum += math.fsum(trade_costs)
        discomfort_sum += math.fsum(discomfort_costs)
        tatd_sum += math.fsum(
            abs(next_state.t[i] - slot.followers[i].t_opt) for i in range(n)
        )
        state = next_state

    tatd = tatd_sum / (n * scenario.slots) if n > 0 else 0.0
    return RunReport(
        pme_profit_total=profit_sum,
        energy_cost_total=energy_sum,
        discomfort_total=discomfort_sum,
        aggregate_cost=discomfort_sum + energy_sum - profit_sum,
        tatd=tatd,
        temperatures=tuple(temperatures),
        battery=tuple(battery),
        p_s_series=tuple(p_s_series),
        p_b_series=tuple(p_b_series),
        y_series=tuple(y_series),
        hvac=tuple(hvac),
        comfort_violations=comfort_violations,
        battery_violations=battery_violations,
        outcomes=tuple(outcomes),
    )
