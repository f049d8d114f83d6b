"""Follower side: the relaxed per-slot HVAC consumption problem.

Given the aggregator's posted prices, each nanogrid picks its HVAC draw
``e`` to minimize a convex piecewise-quadratic objective: the queue-drift
pressure of its shifted temperature state plus its weighted economic cost
(trade cost at the posted prices plus quadratic discomfort).  The trade
cost has one kink where the net interchange ``tp = d + e - rp`` changes
sign, so the exact minimizer is found by comparing a handful of closed-form
candidates: the per-branch parabola vertices, the kink, and the box edges.

This module also computes the certified tuning windows for the queue shift
and the trade-off weight under which the comfort band [t_min, t_max] is
provably never left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .domain import (
    ConfigurationError,
    FollowerAction,
    FollowerSlot,
    LeaderAction,
    NanogridControl,
    NanogridParams,
    ScenarioError,
    check_assumption_envelope,
    clamp,
)


@dataclass(frozen=True, slots=True)
class FollowerThresholds:
    """Closed-form constants of one nanogrid's per-slot decision rule.

    alpha: price-equivalent marginal cost of the first unit of HVAC draw
        (cent); the draw is zero whenever v_i*p_b exceeds the drift pressure
        minus alpha.
    beta: same at rated power (cent); alpha + 2*v_i*gamma*(1-eps)^2*eta^2*e_max.
    vartheta: unpriced ideal draw (kWh); each branch vertex is vartheta
        minus price times hbar.
    delta: price level separating the buy/sell/balance regimes (cent/kWh).
    hbar: price sensitivity of the draw, 1/(2*gamma*(1-eps)^2*eta^2)
        (kWh per cent/kWh).
    """

    alpha: float
    beta: float
    vartheta: float
    delta: float
    hbar: float


@dataclass(frozen=True, slots=True)
class FollowerBounds:
    """Certified tuning windows and diagnostics for one nanogrid.

    gamma_min/gamma_max: admissible queue-shift interval (°F).
    v_max: largest trade-off weight keeping the comfort certificate valid.
    opt_span: spread of the comfort-target series (°F).
    swing: worst-case one-slot temperature movement (°F).
    drift_bound: one-slot queue drift bound at the tightest shift (°F²),
        diagnostic only.
    """

    gamma_min: float
    gamma_max: float
    v_max: float
    opt_span: float
    swing: float
    drift_bound: float


def feasible_box(slot: FollowerSlot, params: NanogridParams) -> tuple[float, float]:
    """HVAC draw interval allowed by the rated power and interchange limit.

    Raises ScenarioError if the interval is empty (the interchange limit
    cannot absorb the renewable surplus even at zero draw).
    """
    lo = max(-params.l_max - slot.d + slot.rp, 0.0)
    hi = min(params.l_max - slot.d + slot.rp, params.e_max)
    if lo > hi:
        if lo - hi <= 1e-12:
            hi = lo
        else:
            raise ScenarioError(
                f"interchange limit l_max={params.l_max} too small for the "
                f"renewable/base-load gap d-rp={slot.d - slot.rp}: "
                f"draw box [{lo}, {hi}] is empty"
            )
    return lo, hi


def compute_thresholds(h: float, t: float, slot: FollowerSlot,
                       params: NanogridParams,
                       control: NanogridControl) -> FollowerThresholds:
    """Evaluate the decision-rule constants at the current state and slot data.

    With gamma == 0 the discomfort term vanishes: alpha and beta are zero,
    hbar is infinite and delta keeps its finite limit (the pure drift-pressure
    price level).
    """
    eps = params.epsilon
    eta = params.eta
    gam = params.gamma
    v = control.v_i
    one = 1.0 - eps
    mismatch = one * slot.t_out + eps * t - slot.t_opt  # °F above target, pre-draw
    if gam == 0.0:
        alpha = 0.0
        beta = 0.0
        hbar = math.inf
        delta = -eps * one * h * eta / v
        if h == 0.0:
            vartheta = -mismatch / (one * eta)
        else:
            vartheta = -math.copysign(math.inf, h)
        return FollowerThresholds(alpha, beta, vartheta, delta, hbar)
    alpha = 2.0 * v * gam * one * eta * mismatch
    beta = alpha + 2.0 * v * gam * one * one * eta * eta * params.e_max
    hbar = 1.0 / (2.0 * gam * one * one * eta * eta)
    vartheta = -mismatch / (one * eta) - eps * h / (2.0 * v * gam * one * eta)
    delta = (-2.0 * gam * one * eta * mismatch
             - eps * one * h * eta / v
             - 2.0 * gam * one * one * eta * eta * (slot.rp - slot.d))
    return FollowerThresholds(alpha, beta, vartheta, delta, hbar)


def _objective(e: float, h: float, t: float, slot: FollowerSlot,
               p_s: float, p_b: float, params: NanogridParams,
               control: NanogridControl) -> float:
    eps = params.epsilon
    one = 1.0 - eps
    eta = params.eta
    v = control.v_i
    quad = v * params.gamma * (one * eta * e) ** 2
    lin = (eps * one * h
           + 2.0 * v * params.gamma * one * (one * slot.t_out + eps * t - slot.t_opt)
           ) * eta * e
    tp = slot.d - slot.rp + e
    trade = v * (0.5 * (p_s - p_b) * abs(tp) + 0.5 * (p_s + p_b) * tp)
    return quad + lin + trade


def p3_objective(e: float, h: float, t: float, slot: FollowerSlot,
                 leader: LeaderAction, params: NanogridParams,
                 control: NanogridControl) -> float:
    """Relaxed per-slot cost of drawing ``e``: drift pressure + v_i * economics.

    ``e`` must lie in the feasible draw box; violations raise ScenarioError
    naming the broken bound.
    """
    lo, hi = feasible_box(slot, params)
    if e < lo - 1e-9:
        raise ScenarioError(
            f"draw e={e} below the feasible floor max(-l_max-d+rp, 0)={lo}"
        )
    if e > hi + 1e-9:
        raise ScenarioError(
            f"draw e={e} above the feasible ceiling min(l_max-d+rp, e_max)={hi}"
        )
    return _objective(e, h, t, slot, leader.p_s, leader.p_b, params, control)


def _response_with_slope(h: float, t: float, slot: FollowerSlot, p_s: float,
                         p_b: float, params: NanogridParams,
                         control: NanogridControl,
                         box: tuple[float, float] | None = None) -> tuple[float, float]:
    """Exact minimizer plus the local price sensitivity of the response.

    The sensitivity is the hbar constant when the winning candidate is a
    strictly interior branch vertex (the draw then moves by -hbar per unit of
    the relevant price) and zero when the draw is pinned at an edge, at the
    rate limits, or at the interchange sign-change point.  ``box`` overrides
    the feasible draw interval (callers may tighten it with extra per-slot
    constraints).
    """
    lo, hi = feasible_box(slot, params) if box is None else box
    eps = params.epsilon
    one = 1.0 - eps
    eta = params.eta
    v = control.v_i
    kink = slot.rp - slot.d  # draw at which the interchange changes sign

    if params.gamma == 0.0:
        # Piecewise linear: the minimum sits at an edge or at the kink.
        candidates = [(lo, 0.0), (clamp(kink, lo, hi), 0.0), (hi, 0.0)]
    else:
        th = compute_thresholds(h, t, slot, params, control)
        pressure = -eps * one * h * eta
        if v * p_b > pressure - th.alpha:
            unconstrained = 0.0
            slope = 0.0
        elif v * p_s < pressure - th.beta:
            unconstrained = params.e_max
            slope = 0.0
        elif th.delta > p_s:
            unconstrained = th.vartheta - p_s * th.hbar
            slope = th.hbar
        elif th.delta < p_b:
            unconstrained = th.vartheta - p_b * th.hbar
            slope = th.hbar
        else:
            unconstrained = kink
            slope = 0.0
        if not lo < unconstrained < hi:
            slope = 0.0
        candidates = [(lo, 0.0), (clamp(unconstrained, lo, hi), slope),
                      (clamp(kink, lo, hi), 0.0), (hi, 0.0)]

    best_e = lo
    best_slope = 0.0
    best_val = math.inf
    for cand, cand_slope in sorted(candidates):
        val = _objective(cand, h, t, slot, p_s, p_b, params, control)
        if val < best_val:
            best_val = val
            best_e = cand
            best_slope = cand_slope
    return best_e, best_slope


def _response_e(h: float, t: float, slot: FollowerSlot, p_s: float, p_b: float,
                params: NanogridParams, control: NanogridControl,
                box: tuple[float, float] | None = None) -> float:
    """Exact minimizer of the per-slot objective over the feasible box."""
    return _response_with_slope(h, t, slot, p_s, p_b, params, control, box)[0]


def best_response(h: float, t: float, slot: FollowerSlot, leader: LeaderAction,
                  params: NanogridParams, control: NanogridControl) -> FollowerAction:
    """Optimal HVAC draw and resulting interchange at the posted prices.

    The objective is convex and piecewise quadratic with a single kink where
    the interchange changes sign, so the argmin is one of: zero / rated power
    when the respective price threshold fires, a per-branch parabola vertex,
    the kink, or a box edge.  Candidates are clamped to the feasible box and
    compared by objective value, ties resolved toward the smaller draw.
    """
    e = _response_e(h, t, slot, leader.p_s, leader.p_b, params, control)
    return FollowerAction(e=e, tp=slot.d + e - slot.rp)


def compute_follower_bounds(params: NanogridParams, v_i: float | None,
                            t_out_min: float, t_out_max: float,
                            t_opt: Sequence[float],
                            p_s_max: float, p_b_min: float) -> FollowerBounds:
    """Certified (gamma_shift, v_i) windows from the scenario envelope.

    ``v_i=None`` evaluates the shift window at the maximum stabilizing weight
    (the default operating policy).  The windows guarantee the comfort band is
    never left, provided the interchange limit never binds the draw box below
    [0, e_max] (the synthetic generator maintains this; the simulator counts
    violations regardless).

    The shift floor guards the ceiling: rated-power draw can fire whenever the
    selling price is at the band floor, so the floor pairs the minimum buying
    price with the smallest rated-power threshold over the scenario.  The
    shift ceiling symmetrically pairs the maximum selling price with the
    largest zero-draw threshold.  Raises ConfigurationError when an assumption
    fails or the window is empty despite v_i <= v_max.
    """
    check_assumption_envelope(params, t_out_min, t_out_max)
    eps = params.epsilon
    one = 1.0 - eps
    eta = params.eta
    gam = params.gamma
    band = params.t_max - params.t_min
    swing = one * (t_out_max + eta * params.e_max - t_out_min)
    opt_hi = max(t_opt)
    opt_lo = min(t_opt)
    opt_span = opt_hi - opt_lo

    denom = (p_s_max - p_b_min
             + 2.0 * gam * one * eta * (swing + eps * band + opt_span))
    v_max = math.inf if denom <= 0.0 else one * eta * (band - swing) / denom
    if v_i is None:
        v_i = v_max

    coef = 2.0 * v_i * gam * one * eta
    # Smallest rated-power threshold over the scenario: cold outdoors, indoor
    # at the band floor, the highest comfort target.
    beta_lo = (coef * (one * t_out_min + eps * params.t_min - opt_hi)
               + 2.0 * v_i * gam * one * one * eta * eta * params.e_max)
    # Largest zero-draw threshold: hot outdoors, indoor at the band ceiling,
    # the lowest comfort target.
    alpha_hi = coef * (one * t_out_max + eps * params.t_max - opt_lo)

    scale = -eps * one * eta
    gamma_min = ((v_i * p_b_min + beta_lo) / scale
                 - (params.t_max - one * (t_out_max + eta * params.e_max)) / eps)
    gamma_max = ((v_i * p_s_max + alpha_hi) / scale
                 - (params.t_min - one * t_out_min) / eps)
    if gamma_min > gamma_max + 1e-9 and v_i <= v_max * (1.0 + 1e-12):
        raise ConfigurationError(
            f"certified shift window is empty ([{gamma_min}, {gamma_max}]) "
            f"although v_i={v_i} <= v_max={v_max}; envelope inconsistent"
        )

    drift_bound = 0.5 * one * one * max(
        (gamma_min + t_out_min) ** 2,
        (gamma_min + t_out_max + eta * params.e_max) ** 2,
    )
    return FollowerBounds(gamma_min, gamma_max, v_max, opt_span, swing, drift_bound)


def validate_control(control: NanogridControl, bounds: FollowerBounds,
                     label: str = "nanogrid") -> None:
    """Reject controls outside the certified windows, naming the bound."""
    tol = 1e-9
    if control.v_i > bounds.v_max * (1.0 + 1e-12) + tol:
        raise ConfigurationError(
            f"{label}: v_i={control.v_i} exceeds the maximum stabilizing "
            f"weight v_max={bounds.v_max}"
        )
    if control.gamma_shift < bounds.gamma_min - tol:
        raise ConfigurationError(
            f"{label}: gamma_shift={control.gamma_shift} below the certified "
            f"shift floor {bounds.gamma_min}"
        )
    if control.gamma_shift > bounds.gamma_max + tol:
        raise ConfigurationError(
            f"{label}: gamma_shift={control.gamma_shift} above the certified "
            f"shift ceiling {bounds.gamma_max}"
        )
