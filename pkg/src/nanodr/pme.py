"""Leader side: the relaxed per-slot pricing and battery-charging problem.

The aggregator minimizes its drift-plus-penalty surrogate: the battery-queue
pressure ``B*y`` minus ``v_p`` times the slot profit.  Given the nanogrids'
interchanges, the charge ``y`` has a closed-form piecewise-quadratic
minimizer; the prices are driven by subgradients that account for how
interior-regime followers shift their draw when prices move.

Also computes the certified tuning windows (theta, v_p) under which the
battery energy provably stays inside [e_min, e_max_cap].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .domain import (
    ConfigurationError,
    LeaderAction,
    PmeControl,
    PmeParams,
    clamp,
)


@dataclass(frozen=True, slots=True)
class LeaderBounds:
    """Certified tuning windows and diagnostics for the aggregator.

    theta_min/theta_max: admissible battery-queue shift interval (kWh).
    v_p_max: largest profit weight keeping the battery certificate valid.
    c_min/c_max: extreme marginal battery-use costs over one slot (cent/kWh).
    drift_bound: one-slot battery-queue drift bound (kWh²), diagnostic only.
    """

    theta_min: float
    theta_max: float
    v_p_max: float
    c_min: float
    c_max: float
    drift_bound: float


@dataclass(frozen=True, slots=True)
class SubgradientSet:
    """Subgradients of the leader surrogate at the current iterate."""

    g_ps: float
    g_pb: float
    g_y: float


def _validate_action(action: LeaderAction, m_s: float, m_b: float,
                     params: PmeParams) -> None:
    tol = 1e-9
    if action.p_b < m_b - tol:
        raise ConfigurationError(f"p_b={action.p_b} below the grid buying price {m_b}")
    if action.p_s > m_s + tol:
        raise ConfigurationError(f"p_s={action.p_s} above the grid selling price {m_s}")
    if not action.p_b < action.p_s:
        raise ConfigurationError(
            f"price band requires p_b < p_s, got p_b={action.p_b}, p_s={action.p_s}"
        )
    if action.y < -params.u_dmax - tol or action.y > params.u_cmax + tol:
        raise ConfigurationError(
            f"charge y={action.y} outside [-u_dmax, u_cmax] = "
            f"[{-params.u_dmax}, {params.u_cmax}]"
        )


def _pro_prime(p_s: float, p_b: float, y: float, tps: Sequence[float],
               b: float, g_t: float, m_s: float, m_b: float,
               v_p: float, c_b: float) -> float:
    """Leader surrogate value without feasibility checks (solver hot path)."""
    revenue = 0.0
    total = 0.0
    for tp in tps:
        revenue += p_s * tp if tp >= 0.0 else p_b * tp
        total += tp
    residual = total - g_t + y
    settle = m_s * residual if residual >= 0.0 else m_b * residual
    return b * y - v_p * revenue + v_p * (settle + 0.5 * c_b * y * y)


def p4_objective(action: LeaderAction, tps: Sequence[float], b: float,
                 g_t: float, m_s: float, m_b: float,
                 control: PmeControl, params: PmeParams) -> float:
    """Battery-queue pressure B*y minus v_p times the slot profit.

    The action must satisfy the price band and the charge box; violations
    raise ConfigurationError.
    """
    _validate_action(action, m_s, m_b, params)
    return _pro_prime(action.p_s, action.p_b, action.y, tps, b, g_t, m_s, m_b,
                      control.v_p, params.c_b)


def optimal_charge(b: float, m_price: float, control: PmeControl,
                   params: PmeParams) -> float:
    """Closed-form minimizer of (b + v_p*m)*y + 0.5*v_p*c_b*y² over the charge box.

    ``m_price`` is the marginal grid price on the active residual branch.
    With c_b == 0 the interior stationary point is undefined and the sign of
    the linear coefficient picks an endpoint (zero when it vanishes exactly).
    """
    coef = b + control.v_p * m_price
    if params.c_b == 0.0:
        if coef > 0.0:
            return -params.u_dmax
        if coef < 0.0:
            return params.u_cmax
        return 0.0
    return clamp(-coef / (control.v_p * params.c_b), -params.u_dmax, params.u_cmax)


def subgradients(action: LeaderAction, tps: Sequence[float], b: float,
                 g_t: float, m_s: float, m_b: float, control: PmeControl,
                 params: PmeParams, hbars: Sequence[float]) -> SubgradientSet:
    """Subgradients of the leader surrogate at the current iterate.

    ``hbars`` holds each follower's price sensitivity at this iterate: the
    hbar constant while the response sits strictly inside a price-responsive
    branch, zero while it is pinned (then the price terms' derivative carries
    no response correction).  Followers reporting a non-finite sensitivity
    are treated as pinned.  The marginal grid price is m_s when the net
    residual is positive and m_b otherwise (the exact-balance point is
    assigned to the m_b branch).
    """
    v_p = control.v_p
    total = 0.0
    buy_sum = 0.0
    sell_sum = 0.0
    for tp in tps:
        total += tp
        if tp >= 0.0:
            buy_sum += tp
        else:
            sell_sum += tp
    residual = total - g_t + action.y
    m = m_s if residual > 0.0 else m_b

    g_ps = -v_p * buy_sum
    g_pb = -v_p * sell_sum
    for tp, hbar in zip(tps, hbars):
        if not math.isfinite(hbar):
            continue
        if tp >= 0.0:
            g_ps += v_p * (action.p_s - m) * hbar
        else:
            g_pb += v_p * (action.p_b - m) * hbar
    g_y = b + params.c_b * v_p * action.y + v_p * m
    return SubgradientSet(g_ps=g_ps, g_pb=g_pb, g_y=g_y)


def compute_leader_bounds(params: PmeParams, v_p: float | None,
                          m_s_max: float, m_b_min: float) -> LeaderBounds:
    """Certified (theta, v_p) windows from the scenario's price envelope.

    ``v_p=None`` evaluates the shift window at the maximum stabilizing weight.
    """
    if m_s_max < m_b_min:
        raise ConfigurationError(
            f"price envelope is empty: max selling price {m_s_max} below "
            f"min buying price {m_b_min}"
        )
    c_min = min(params.c_b * params.u_cmax, -params.c_b * params.u_dmax)
    c_max = max(params.c_b * params.u_cmax, -params.c_b * params.u_dmax)
    gap = params.e_max_cap - params.e_min - (params.u_cmax + params.u_dmax)
    denom = m_s_max - m_b_min + c_max - c_min
    v_p_max = math.inf if denom <= 0.0 else gap / denom
    if v_p is None:
        v_p = v_p_max
    theta_min = params.u_cmax - params.e_max_cap - v_p * m_b_min - v_p * c_min
    theta_max = -params.u_dmax - params.e_min - v_p * m_s_max - v_p * c_max
    drift_bound = 0.5 * max(params.u_cmax ** 2, params.u_dmax ** 2)
    return LeaderBounds(theta_min, theta_max, v_p_max, c_min, c_max, drift_bound)


def validate_control(control: PmeControl, bounds: LeaderBounds,
                     label: str = "aggregator") -> None:
    """Reject controls outside the certified windows, naming the bound."""
    tol = 1e-9
    if control.v_p > bounds.v_p_max * (1.0 + 1e-12) + tol:
        raise ConfigurationError(
            f"{label}: v_p={control.v_p} exceeds the maximum stabilizing "
            f"weight v_p_max={bounds.v_p_max}"
        )
    if control.theta < bounds.theta_min - tol:
        raise ConfigurationError(
            f"{label}: theta={control.theta} below the certified shift floor "
            f"{bounds.theta_min}"
        )
    if control.theta > bounds.theta_max + tol:
        raise ConfigurationError(
            f"{label}: theta={control.theta} above the certified shift "
            f"ceiling {bounds.theta_max}"
        )
