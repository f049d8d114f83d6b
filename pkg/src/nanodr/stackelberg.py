"""Per-slot leader/follower iteration to the Stackelberg equilibrium.

Each slot runs the same loop: the aggregator broadcasts (p_s, p_b, y), every
nanogrid replies with its exact best response, and the aggregator takes a
projected subgradient step on its surrogate with harmonically decaying step
sizes.  The loop stops when all three coordinates move less than ``rho``
between consecutive iterates, or at the iteration cap (flagged, not fatal).

Because a diminishing-step subgradient iterate can stall a small distance
away from a non-smooth minimizer, the returned action is then polished:
exact coordinate-wise minimization of the surrogate (followers re-solved for
price moves, closed-form for the charge) until a fixed point.  The polish is
deterministic, never increases the surrogate, and makes the returned action
withstand unilateral-deviation equilibrium checks at tight tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .domain import (
    ConfigurationError,
    FollowerAction,
    LeaderAction,
    NanogridControl,
    NanogridParams,
    PmeControl,
    PmeParams,
    SlotData,
    SlotState,
    clamp,
)
from .nanogrid import _response_with_slope, compute_thresholds, feasible_box
from .pme import SubgradientSet, _pro_prime, subgradients


@dataclass(frozen=True, slots=True)
class GameConfig:
    """Solver knobs for the per-slot equilibrium iteration.

    Step sizes follow scale/(c0 + c1*m): strictly decreasing, divergent sum,
    convergent sum of squares.  The scales are small fixed fractions of the
    coordinate ranges (about 1e-4 of a typical price band per unit
    subgradient, 1e-3 of the charge window) chosen so the successive-distance
    stop rule fires well inside the iteration cap on the supported workloads.
    """

    rho: float = 1e-3          # per-coordinate convergence distance
    max_iters: int = 500       # iteration cap (flagged as non-converged beyond)
    step_s0: float = 1.0
    step_s1: float = 0.5
    step_b0: float = 1.0
    step_b1: float = 0.5
    step_y0: float = 1.0
    step_y1: float = 0.5
    step_scale_s: float = 1e-3  # cent/kWh moved per unit subgradient at m=0
    step_scale_b: float = 1e-3
    step_scale_y: float = 2e-3  # kWh moved per unit subgradient at m=0
    min_gap: float = 0.01      # enforced p_s - p_b separation (cent/kWh)
    initial: LeaderAction | None = None  # default: band midpoint prices, y = 0
    polish: bool = True
    polish_passes: int = 25
    polish_tol: float = 1e-11

    def __post_init__(self) -> None:
        if self.rho <= 0.0:
            raise ConfigurationError(f"rho must be positive, got {self.rho}")
        if self.max_iters < 1:
            raise ConfigurationError(f"max_iters must be >= 1, got {self.max_iters}")
        for name in ("step_s0", "step_s1", "step_b0", "step_b1", "step_y0",
                     "step_y1", "step_scale_s", "step_scale_b", "step_scale_y"):
            if getattr(self, name) <= 0.0:
                raise ConfigurationError(f"step constant {name} must be positive")
        if self.min_gap <= 0.0:
            raise ConfigurationError(f"min_gap must be positive, got {self.min_gap}")


@dataclass(frozen=True, slots=True)
class IterationRecord:
    """One loop iteration: the broadcast action and what it triggered."""

    action: LeaderAction
    followers: tuple[FollowerAction, ...]
    subgrad: SubgradientSet
    steps: tuple[float, float, float]
    distance: tuple[float, float, float]  # to the next iterate


@dataclass(frozen=True)
class IterationTrace:
    records: tuple[IterationRecord, ...]
    converged: bool
    iterations: int
    polish_sweeps: int = 0


@dataclass(frozen=True)
class SlotSolution:
    leader: LeaderAction
    followers: tuple[FollowerAction, ...]
    trace: IterationTrace


def _project(raw_ps: float, raw_pb: float, raw_y: float, m_s: float,
             m_b: float, y_lo: float, y_hi: float, min_gap: float) -> LeaderAction:
    # Representation slack so a band whose width nominally equals min_gap
    # is not rejected over the last float bit.
    if m_s - m_b < min_gap - 1e-12:
        raise ConfigurationError(
            f"grid price band [{m_b}, {m_s}] narrower than min_gap={min_gap}"
        )
    p_b = clamp(raw_pb, m_b, max(m_s - min_gap, m_b))
    p_s = clamp(raw_ps, min(p_b + min_gap, m_s), m_s)
    y = clamp(raw_y, y_lo, y_hi)
    return LeaderAction(p_s=p_s, p_b=p_b, y=y)


def project_leader(raw_ps: float, raw_pb: float, raw_y: float,
                   m_s: float, m_b: float, params: PmeParams,
                   min_gap: float) -> LeaderAction:
    """Clamp a raw update into the strict price band and the charge box.

    The buying price is clamped first, then the selling price relative to it,
    so the output always satisfies p_s - p_b >= min_gap.
    """
    return _project(raw_ps, raw_pb, raw_y, m_s, m_b, -params.u_dmax,
                    params.u_cmax, min_gap)


# ---------------------------------------------------------------------------
# Follower response models
# ---------------------------------------------------------------------------


class QueueResponder:
    """Followers solving their relaxed problem at the given queue pressure.

    ``drop_queue=True`` zeroes the queue term (myopic play).  All state and
    slot data are frozen at construction; responses depend only on prices.
    """

    def __init__(self, state: SlotState, slot: SlotData,
                 params: Sequence[NanogridParams],
                 controls: Sequence[NanogridControl],
                 drop_queue: bool = False,
                 boxes: Sequence[tuple[float, float]] | None = None):
        self._hs = tuple(0.0 for _ in state.h) if drop_queue else state.h
        self._ts = state.t
        self._slots = slot.followers
        self._params = tuple(params)
        self._controls = tuple(controls)
        self._boxes: tuple[tuple[float, float], ...] = (
            tuple(feasible_box(fs, p) for fs, p in zip(slot.followers, params))
            if boxes is None else tuple(boxes)
        )

    def respond_full(self, p_s: float, p_b: float) -> tuple[list[float], list[float]]:
        """Draws plus each follower's local price sensitivity at this iterate."""
        es: list[float] = []
        slopes: list[float] = []
        for h, t, fs, p, c, box in zip(self._hs, self._ts, self._slots,
                                       self._params, self._controls, self._boxes):
            e, slope = _response_with_slope(h, t, fs, p_s, p_b, p, c, box)
            es.append(e)
            slopes.append(slope)
        return es, slopes

    def respond(self, p_s: float, p_b: float) -> list[float]:
        return self.respond_full(p_s, p_b)[0]

    def price_breakpoints(self) -> list[float]:
        """Price levels where some follower's response map changes branch."""
        pts: list[float] = []
        for (lo, hi), h, t, fs, p, c in zip(self._boxes, self._hs, self._ts,
                                            self._slots, self._params,
                                            self._controls):
            th = compute_thresholds(h, t, fs, p, c)
            pts.append(th.delta)
            if math.isfinite(th.hbar) and th.hbar > 0.0:
                pts.append((th.vartheta - lo) / th.hbar)
                pts.append((th.vartheta - hi) / th.hbar)
        return pts


class FixedResponder:
    """Price-insensitive followers with a pre-committed draw (inelastic demand)."""

    def __init__(self, es: Sequence[float]):
        self._es = list(es)
        self._slopes = [0.0 for _ in es]

    def respond_full(self, p_s: float, p_b: float) -> tuple[list[float], list[float]]:
        return list(self._es), list(self._slopes)

    def respond(self, p_s: float, p_b: float) -> list[float]:
        return list(self._es)

    def price_breakpoints(self) -> list[float]:
        return []


# ---------------------------------------------------------------------------
# Exact one-dimensional refinements
# ---------------------------------------------------------------------------


def _argmin_charge(tps: Sequence[float], b: float, g_t: float, m_s: float,
                   m_b: float, v_p: float, c_b: float,
                   y_lo: float, y_hi: float) -> float:
    """Exact minimizer over y of the leader surrogate with responses fixed.

    Piecewise quadratic with one kink where the net residual crosses zero;
    candidates are the box edges, the kink, and each branch's vertex.
    """
    total = math.fsum(tps)
    kink = g_t - total
    candidates = [y_lo, y_hi]
    if y_lo < kink < y_hi:
        candidates.append(kink)
    if c_b > 0.0:
        candidates.append(clamp(-(b + v_p * m_s) / (v_p * c_b), y_lo, y_hi))
        candidates.append(clamp(-(b + v_p * m_b) / (v_p * c_b), y_lo, y_hi))

    def value(y: float) -> float:
        # Trading revenue is constant in y, so only pressure, settlement and
        # battery-use terms matter here.
        residual = total - g_t + y
        settle = m_s * residual if residual >= 0.0 else m_b * residual
        return b * y + v_p * (settle + 0.5 * c_b * y * y)

    best_y = y_lo
    best_val = math.inf
    for y in sorted(candidates):
        val = value(y)
        if val < best_val:
            best_val = val
            best_y = y
    return best_y


def _scan_quadratic_segments(evaluate: Callable[[float], tuple[float, float]],
                             points: list[float]) -> tuple[float, float]:
    """Minimize a piecewise-quadratic 1-D function given its breakpoints.

    ``evaluate`` returns (value, residual); the residual's zero crossing is
    the one extra kink inside a segment.  Between refined breakpoints the
    function is a true quadratic, so a three-point fit locates the vertex
    exactly.  Returns (argmin, value); ties resolve to the smaller argument.
    """
    pts = sorted(set(points))
    cache: dict[float, tuple[float, float]] = {}

    def ev(x: float) -> tuple[float, float]:
        got = cache.get(x)
        if got is None:
            got = evaluate(x)
            cache[x] = got
        return got

    refined: list[float] = []
    for a, bpt in zip(pts, pts[1:]):
        refined.append(a)
        ra = ev(a)[1]
        rb = ev(bpt)[1]
        if (ra > 0.0) != (rb > 0.0) and ra != rb:
            cross = a + (bpt - a) * ra / (ra - rb)
            if a < cross < bpt:
                refined.append(cross)
    refined.append(pts[-1])

    best_x = refined[0]
    best_val = ev(refined[0])[0]
    for x in refined[1:]:
        val = ev(x)[0]
        if val < best_val:
            best_val = val
            best_x = x
    for a, bpt in zip(refined, refined[1:]):
        width = bpt - a
        if width < 1e-11:
            continue
        mid = 0.5 * (a + bpt)
        fa, fm, fb = ev(a)[0], ev(mid)[0], ev(bpt)[0]
        if fm < best_val:
            best_val = fm
            best_x = mid
        half = 0.5 * width
        curv = (fa - 2.0 * fm + fb) / (2.0 * half * half)
        if curv <= 1e-15:
            continue
        slope = (fb - fa) / width
        vertex = mid - slope / (2.0 * curv)
        if a < vertex < bpt:
            val = ev(vertex)[0]
            if val < best_val:
                best_val = val
                best_x = vertex
    return best_x, best_val


def _polish(action: LeaderAction, responder, b: float, slot: SlotData,
            c_b: float, v_p: float, y_box: tuple[float, float],
            config: GameConfig) -> tuple[LeaderAction, int]:
    """Coordinate-exact refinement of the leader action to a fixed point."""
    m_s, m_b, g_t = slot.m_s, slot.m_b, slot.g_t
    p_s, p_b, y = action.p_s, action.p_b, action.y
    raw_pts = responder.price_breakpoints()
    sweeps = 0
    for _ in range(config.polish_passes):
        sweeps += 1
        prev = (p_s, p_b, y)

        def eval_ps(x: float) -> tuple[float, float]:
            tps_x = [fs.d + e - fs.rp for fs, e in
                     zip(slot.followers, responder.respond(x, p_b))]
            residual = math.fsum(tps_x) - g_t + y
            return (_pro_prime(x, p_b, y, tps_x, b, g_t, m_s, m_b, v_p, c_b),
                    residual)

        lo_s, hi_s = p_b + config.min_gap, m_s
        if hi_s - lo_s > 1e-12:
            pts = [lo_s, hi_s] + [x for x in raw_pts if lo_s < x < hi_s]
            cand, val = _scan_quadratic_segments(eval_ps, pts)
            if val < eval_ps(p_s)[0]:
                p_s = cand

        def eval_pb(x: float) -> tuple[float, float]:
            tps_x = [fs.d + e - fs.rp for fs, e in
                     zip(slot.followers, responder.respond(p_s, x))]
            residual = math.fsum(tps_x) - g_t + y
            return (_pro_prime(p_s, x, y, tps_x, b, g_t, m_s, m_b, v_p, c_b),
                    residual)

        lo_b, hi_b = m_b, p_s - config.min_gap
        if hi_b - lo_b > 1e-12:
            pts = [lo_b, hi_b] + [x for x in raw_pts if lo_b < x < hi_b]
            cand, val = _scan_quadratic_segments(eval_pb, pts)
            if val < eval_pb(p_b)[0]:
                p_b = cand

        tps = [fs.d + e - fs.rp for fs, e in
               zip(slot.followers, responder.respond(p_s, p_b))]
        y = _argmin_charge(tps, b, g_t, m_s, m_b, v_p, c_b, y_box[0], y_box[1])

        if (abs(p_s - prev[0]) < config.polish_tol
                and abs(p_b - prev[1]) < config.polish_tol
                and abs(y - prev[2]) < config.polish_tol):
            break
    return LeaderAction(p_s=p_s, p_b=p_b, y=y), sweeps


# ---------------------------------------------------------------------------
# The per-slot solve
# ---------------------------------------------------------------------------


def _solve_with_responder(responder, b: float, slot: SlotData,
                          pme_params: PmeParams, pme_control: PmeControl,
                          config: GameConfig,
                          y_box: tuple[float, float] | None = None) -> SlotSolution:
    m_s, m_b, g_t = slot.m_s, slot.m_b, slot.g_t
    v_p = pme_control.v_p
    scale_s = config.step_scale_s
    scale_b = config.step_scale_b
    scale_y = config.step_scale_y
    if y_box is None:
        y_box = (-pme_params.u_dmax, pme_params.u_cmax)

    if config.initial is not None:
        chi = _project(config.initial.p_s, config.initial.p_b,
                       config.initial.y, m_s, m_b, y_box[0], y_box[1],
                       config.min_gap)
    else:
        mid = 0.5 * (m_s + m_b)
        chi = _project(mid + 0.5 * config.min_gap,
                       mid - 0.5 * config.min_gap,
                       0.0, m_s, m_b, y_box[0], y_box[1], config.min_gap)

    records: list[IterationRecord] = []
    converged = False
    iterations = 0
    for m in range(1, config.max_iters + 1):
        iterations = m
        es, slopes = responder.respond_full(chi.p_s, chi.p_b)
        followers = tuple(
            FollowerAction(e=e, tp=fs.d + e - fs.rp)
            for e, fs in zip(es, slot.followers)
        )
        tps = [f.tp for f in followers]
        grad = subgradients(chi, tps, b, g_t, m_s, m_b, pme_control,
                            pme_params, slopes)
        steps = (scale_s / (config.step_s0 + config.step_s1 * m),
                 scale_b / (config.step_b0 + config.step_b1 * m),
                 scale_y / (config.step_y0 + config.step_y1 * m))
        nxt = _project(chi.p_s - steps[0] * grad.g_ps,
                       chi.p_b - steps[1] * grad.g_pb,
                       chi.y - steps[2] * grad.g_y,
                       m_s, m_b, y_box[0], y_box[1], config.min_gap)
        distance = (abs(nxt.p_s - chi.p_s), abs(nxt.p_b - chi.p_b),
                    abs(nxt.y - chi.y))
        records.append(IterationRecord(chi, followers, grad, steps, distance))
        chi = nxt
        if max(distance) < config.rho:
            converged = True
            break

    sweeps = 0
    if config.polish:
        chi, sweeps = _polish(chi, responder, b, slot, pme_params.c_b, v_p,
                              y_box, config)
    final_followers = tuple(
        FollowerAction(e=e, tp=fs.d + e - fs.rp)
        for e, fs in zip(responder.respond(chi.p_s, chi.p_b), slot.followers)
    )
    trace = IterationTrace(records=tuple(records), converged=converged,
                           iterations=iterations, polish_sweeps=sweeps)
    return SlotSolution(leader=chi, followers=final_followers, trace=trace)


def solve_slot(state: SlotState, slot: SlotData,
               ng_params: Sequence[NanogridParams],
               ng_controls: Sequence[NanogridControl],
               pme_params: PmeParams, pme_control: PmeControl,
               config: GameConfig) -> SlotSolution:
    """Solve one slot's leader/follower game.

    Non-convergence at the iteration cap is reported through the trace, not
    raised; the last iterate is still polished and returned.  An infeasible
    follower draw box raises ScenarioError.
    """
    responder = QueueResponder(state, slot, ng_params, ng_controls)
    return _solve_with_responder(responder, state.b, slot, pme_params,
                                 pme_control, config)
