"""Core data types and physical/economic primitives.

The system: a set of nanogrids (single buildings with rooftop renewables,
an inelastic base load and an HVAC unit) trade energy with an aggregator
that posts a selling price ``p_s`` and a buying price ``p_b`` each slot,
operates a battery, and settles any residual imbalance with the main grid
at prices ``m_s`` / ``m_b``.  All energy quantities are kWh per one-hour
slot, temperatures are in degrees Fahrenheit and money is in cents.

Indoor temperature follows a first-order inertial model (heating mode):

    T' = eps * T + (1 - eps) * (T_out + eta * e)

Battery energy follows E' = E + y with y the signed charge for the slot.

Both controllers run on shifted copies of their physical state ("virtual
queues"): H = T + gamma_shift for each nanogrid and B = E + theta for the
battery.  Keeping those queues bounded is what enforces the comfort band
and the battery capacity window without any forecast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

Mode = Literal["heating", "cooling"]


class ConfigurationError(ValueError):
    """Parameters, controls or assumptions are inconsistent."""


class ScenarioError(ValueError):
    """Scenario data is malformed or makes a slot infeasible."""


class InvariantViolation(RuntimeError):
    """A guaranteed runtime bound was broken (indicates a bug or bad controls)."""


# ---------------------------------------------------------------------------
# Parameter and control records
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class NanogridParams:
    """Physical constants of one nanogrid's HVAC and interconnection."""

    epsilon: float  # thermal inertia, open interval (0, 1)
    eta: float      # °F gained per kWh of HVAC input
    e_max: float    # rated HVAC draw per slot (kWh)
    t_min: float    # comfort band floor (°F)
    t_max: float    # comfort band ceiling (°F)
    l_max: float    # interchange limit with the aggregator (kWh per slot)
    gamma: float    # discomfort weight (cent / °F²)

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigurationError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.eta <= 0.0:
            raise ConfigurationError(f"eta must be positive, got {self.eta}")
        if self.e_max <= 0.0:
            raise ConfigurationError(f"e_max must be positive, got {self.e_max}")
        if self.l_max <= 0.0:
            raise ConfigurationError(f"l_max must be positive, got {self.l_max}")
        if self.gamma < 0.0:
            raise ConfigurationError(f"gamma must be nonnegative, got {self.gamma}")
        if not self.t_min < self.t_max:
            raise ConfigurationError(
                f"comfort band is empty: t_min={self.t_min} >= t_max={self.t_max}"
            )


@dataclass(frozen=True, slots=True)
class NanogridControl:
    """Per-nanogrid controller tuning: trade-off weight and queue shift."""

    v_i: float          # weight on economic cost vs queue stability (> 0)
    gamma_shift: float  # constant shift defining the virtual queue H = T + gamma_shift (°F)

    def __post_init__(self) -> None:
        if self.v_i <= 0.0:
            raise ConfigurationError(f"v_i must be positive, got {self.v_i}")


@dataclass(frozen=True, slots=True)
class PmeParams:
    """Battery constants of the aggregator."""

    e_min: float      # minimum battery energy (kWh)
    e_max_cap: float  # maximum battery energy (kWh)
    u_cmax: float     # max charge per slot (kWh)
    u_dmax: float     # max discharge per slot (kWh)
    c_b: float        # quadratic amortized battery-use cost coefficient (cent / kWh²)

    def __post_init__(self) -> None:
        if not self.e_min < self.e_max_cap:
            raise ConfigurationError(
                f"battery window is empty: e_min={self.e_min} >= e_max_cap={self.e_max_cap}"
            )
        if self.u_cmax <= 0.0 or self.u_dmax <= 0.0:
            raise ConfigurationError("charge/discharge limits must be positive")
        if self.c_b < 0.0:
            raise ConfigurationError(f"c_b must be nonnegative, got {self.c_b}")
        if not self.e_max_cap - self.e_min > self.u_cmax + self.u_dmax:
            # Needed so a positive stabilizing weight v_p exists at all.
            raise ConfigurationError(
                "battery window must exceed one slot of full charge plus full "
                f"discharge: {self.e_max_cap} - {self.e_min} <= "
                f"{self.u_cmax} + {self.u_dmax}"
            )


@dataclass(frozen=True, slots=True)
class PmeControl:
    """Aggregator controller tuning."""

    v_p: float    # weight on profit vs battery-queue stability (> 0)
    theta: float  # constant shift defining the virtual queue B = E + theta (kWh)

    def __post_init__(self) -> None:
        if self.v_p <= 0.0:
            raise ConfigurationError(f"v_p must be positive, got {self.v_p}")


# ---------------------------------------------------------------------------
# Actions and state
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class LeaderAction:
    """Aggregator decision for one slot: both prices and battery charge."""

    p_s: float  # selling price (cent/kWh)
    p_b: float  # buying price (cent/kWh)
    y: float    # battery charge (+) / discharge (−) amount (kWh)


@dataclass(frozen=True, slots=True)
class FollowerAction:
    """Nanogrid decision for one slot."""

    e: float   # HVAC consumption (kWh)
    tp: float  # signed power injected from the aggregator, tp = d + e - rp (kWh)


@dataclass(frozen=True, slots=True)
class SlotState:
    """Joint physical + queue state entering a slot.

    ``h[i] == t[i] + gamma_shift_i`` and ``b == e_batt + theta`` hold exactly;
    updates maintain them (see simulator.update_queues).
    """

    t: tuple[float, ...]  # indoor temperature per nanogrid (°F)
    h: tuple[float, ...]  # virtual temperature queue per nanogrid (°F)
    e_batt: float         # battery energy (kWh)
    b: float              # virtual battery queue (kWh)


@dataclass(frozen=True, slots=True)
class FollowerSlot:
    """Exogenous data one nanogrid sees in one slot."""

    rp: float     # renewable output (kWh)
    d: float      # base load (kWh)
    t_out: float  # outdoor temperature (°F)
    t_opt: float  # comfort target for the temperature reached at the end of the slot (°F)


@dataclass(frozen=True, slots=True)
class SlotData:
    """All exogenous data for one slot."""

    m_s: float  # main-grid selling price (cent/kWh)
    m_b: float  # main-grid buying price (cent/kWh)
    g_t: float  # aggregator net generation, output minus local load (kWh)
    followers: tuple[FollowerSlot, ...]


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """Exogenous time series for a whole run.

    Per-slot, per-nanogrid series are indexed ``series[k][i]``.  ``t_opt[k]``
    is the comfort target against which the temperature reached at the end of
    slot ``k`` is scored.  Construction validates shape and the price band;
    no other code path builds an unvalidated Scenario.
    """

    n: int
    slots: int
    rp: tuple[tuple[float, ...], ...]     # renewable output (kWh)
    d: tuple[tuple[float, ...], ...]      # base load (kWh)
    t_out: tuple[tuple[float, ...], ...]  # outdoor temperature (°F)
    t_opt: tuple[tuple[float, ...], ...]  # optimum comfort temperature (°F)
    m_s: tuple[float, ...]                # main-grid selling price (cent/kWh)
    m_b: tuple[float, ...]                # main-grid buying price (cent/kWh)
    g_t: tuple[float, ...]                # aggregator net generation (kWh)

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ScenarioError(f"nanogrid count must be nonnegative, got {self.n}")
        if self.slots < 1:
            raise ScenarioError(f"slot count must be at least 1, got {self.slots}")
        for name in ("rp", "d", "t_out", "t_opt"):
            series = getattr(self, name)
            if len(series) != self.slots:
                raise ScenarioError(
                    f"series {name!r} has {len(series)} slots, expected {self.slots}"
                )
            for k, row in enumerate(series):
                if len(row) != self.n:
                    raise ScenarioError(
                        f"series {name!r} row {k} has {len(row)} columns, expected {self.n}"
                    )
        for name in ("m_s", "m_b", "g_t"):
            series = getattr(self, name)
            if len(series) != self.slots:
                raise ScenarioError(
                    f"series {name!r} has {len(series)} slots, expected {self.slots}"
                )
        for k in range(self.slots):
            if self.m_b[k] > self.m_s[k]:
                raise ScenarioError(
                    f"main-grid price band is empty at slot {k}: "
                    f"m_b={self.m_b[k]} > m_s={self.m_s[k]}"
                )
            for i in range(self.n):
                if self.rp[k][i] < 0.0:
                    raise ScenarioError(f"rp negative at slot {k}, nanogrid {i}")
                if self.d[k][i] < 0.0:
                    raise ScenarioError(f"d negative at slot {k}, nanogrid {i}")

    @classmethod
    def from_series(cls, n, slots, rp, d, t_out, t_opt, m_s, m_b, g_t) -> "Scenario":
        """Build a Scenario from any nested sequences, freezing them to tuples."""
        grid = lambda s: tuple(tuple(float(x) for x in row) for row in s)
        line = lambda s: tuple(float(x) for x in s)
        return cls(n, slots, grid(rp), grid(d), grid(t_out), grid(t_opt),
                   line(m_s), line(m_b), line(g_t))

    def slot(self, k: int) -> SlotData:
        return SlotData(
            m_s=self.m_s[k],
            m_b=self.m_b[k],
            g_t=self.g_t[k],
            followers=tuple(
                FollowerSlot(self.rp[k][i], self.d[k][i], self.t_out[k][i], self.t_opt[k][i])
                for i in range(self.n)
            ),
        )

    # Envelope accessors used by the bound calculators.
    def t_out_min(self, i: int) -> float:
        return min(self.t_out[k][i] for k in range(self.slots))

    def t_out_max(self, i: int) -> float:
        return max(self.t_out[k][i] for k in range(self.slots))

    def t_opt_series(self, i: int) -> tuple[float, ...]:
        return tuple(self.t_opt[k][i] for k in range(self.slots))

    def m_s_max(self) -> float:
        return max(self.m_s)

    def m_b_min(self) -> float:
        return min(self.m_b)


def check_assumption_envelope(params: NanogridParams, t_out_min: float,
                              t_out_max: float, label: str = "nanogrid") -> None:
    """Verify the three comfort-guarantee assumptions against an outdoor envelope.

    (a) outdoor temperature never exceeds the comfort ceiling;
    (b) full HVAC power can lift even the coldest outdoor air to the floor;
    (c) the comfort band is wider than the worst one-slot temperature swing.

    Raises ConfigurationError naming the violated assumption.
    """
    if t_out_max > params.t_max:
        raise ConfigurationError(
            f"assumption (a) violated for {label}: "
            f"max outdoor temperature {t_out_max} > t_max {params.t_max}"
        )
    if params.eta * params.e_max + t_out_min < params.t_min:
        raise ConfigurationError(
            f"assumption (b) violated for {label}: "
            f"eta*e_max + min outdoor temperature "
            f"{params.eta * params.e_max + t_out_min} < t_min {params.t_min}"
        )
    swing = (1.0 - params.epsilon) * (t_out_max + params.eta * params.e_max - t_out_min)
    if not params.t_max - params.t_min > swing:
        raise ConfigurationError(
            f"assumption (c) violated for {label}: comfort band "
            f"{params.t_max - params.t_min} not wider than worst one-slot "
            f"swing {swing}"
        )


def check_assumptions(scenario: Scenario, params: Sequence[NanogridParams]) -> None:
    """Check the comfort-guarantee assumptions for every nanogrid of a scenario.

    Call this when binding a scenario to nanogrid parameters; the runtime
    guarantees are void without it.
    """
    if len(params) != scenario.n:
        raise ConfigurationError(
            f"got {len(params)} parameter sets for {scenario.n} nanogrids"
        )
    for i, p in enumerate(params):
        check_assumption_envelope(p, scenario.t_out_min(i), scenario.t_out_max(i),
                                  label=f"nanogrid {i}")


# ---------------------------------------------------------------------------
# Primitive functions
# ---------------------------------------------------------------------------


def thermal_step(t: float, t_out: float, e: float, params: NanogridParams,
                 mode: Mode = "heating") -> float:
    """One slot of the first-order indoor temperature model.

    Heating adds eta*e to the effective outdoor temperature; cooling
    subtracts it.
    """
    eps = params.epsilon
    if mode == "heating":
        return eps * t + (1.0 - eps) * (t_out + params.eta * e)
    return eps * t + (1.0 - eps) * (t_out - params.eta * e)


def bilinear_trade_cost(tp: float, p_s: float, p_b: float) -> float:
    """Cost of a signed trade: buy at p_s when tp > 0, get paid p_b when tp < 0.

    Equals 0.5*(p_s - p_b)*|tp| + 0.5*(p_s + p_b)*tp, the split-price form the
    relaxed follower objective uses.
    """
    if tp >= 0.0:
        return p_s * tp
    return p_b * tp


def battery_cost(y: float, c_b: float) -> float:
    """Amortized per-slot cost of charging or discharging by y."""
    return 0.5 * c_b * y * y


def grid_settlement(residual: float, m_s: float, m_b: float) -> float:
    """Cost of settling a signed residual with the main grid.

    Positive residual is bought at m_s; negative residual is sold at m_b
    (yielding negative cost, i.e. revenue).
    """
    if residual >= 0.0:
        return m_s * residual
    return m_b * residual


def pme_profit(action: LeaderAction, tps: Sequence[float], g_t: float,
               m_s: float, m_b: float, c_b: float) -> float:
    """Aggregator net profit for one slot.

    Revenue from trading with the nanogrids, minus battery-use cost, minus
    the cost of settling the net residual sum(tp) - g_t + y with the main grid.
    """
    revenue = 0.0
    total_tp = 0.0
    for tp in tps:
        revenue += bilinear_trade_cost(tp, action.p_s, action.p_b)
        total_tp += tp
    residual = total_tp - g_t + action.y
    return revenue - battery_cost(action.y, c_b) - grid_settlement(residual, m_s, m_b)


def clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


def midpoint(lo: float, hi: float) -> float:
    return 0.5 * (lo + hi)


def is_finite(x: float) -> bool:
    return math.isfinite(x)
