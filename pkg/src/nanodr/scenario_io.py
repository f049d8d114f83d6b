"""Scenario ingestion, CSV persistence, and seeded synthetic generation.

CSV schema (one header row, one row per slot):

    slot,m_s,m_b,g_t,rp_1..rp_n,d_1..d_n,t_out_1..t_out_n,t_opt_1..t_opt_n

``slot`` must run 0..T-1 in order; per-nanogrid columns use 1-based
suffixes.  Numbers are plain decimals written with ``repr`` so a
save/load round trip is bit-identical.  ``docs/example_scenario.csv``
holds a small golden file.

The synthetic generator produces a heating-season setup: a sinusoidal
outdoor temperature day shape with per-building offsets, a double-peaked
base load, a midday solar bell plus wind noise for renewables, a slowly
moving comfort target, a flat grid buying price with a peaked selling
price, and uniform net generation for the aggregator.  Profiles are
clipped so the comfort-guarantee assumptions hold against the default
building parameters and the interchange limit never binds the draw box.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import (
    NanogridParams,
    PmeParams,
    Scenario,
    ScenarioError,
    check_assumptions,
)


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs of the seeded synthetic scenario generator."""

    n: int = 5
    slots: int = 72
    seed: int = 1                # default selects the reference winter week
    g_t_low: float = -15.0       # aggregator net generation range (kWh)
    g_t_high: float = 25.0
    epsilon_low: float = 0.93    # per-building thermal inertia range
    epsilon_high: float = 0.98
    t_out_base: float = 8.0      # outdoor day-shape mean (°F)
    t_out_amp: float = 9.0       # outdoor day-shape amplitude (°F)
    t_out_noise: float = 1.0     # outdoor noise sigma (°F)
    d_base: float = 0.6          # base load floor (kWh)
    rp_scale: float = 3.6        # solar bell height (kWh)
    t_opt_center: float = 70.5   # comfort target mean (°F)
    t_opt_amp: float = 1.5       # comfort target swing (°F)
    m_b: float = 3.0             # grid buying price (cent/kWh)
    m_s_night: float = 4.2       # grid selling price off-peak floor (cent/kWh)
    m_s_peak: float = 12.0       # evening-peak uplift (cent/kWh)
    m_s_morning: float = 6.0     # morning-peak uplift (cent/kWh)
    m_s_dip: float = 0.2         # midday solar-dip depth (cent/kWh)

    def __post_init__(self) -> None:
        if self.n < 0 or self.slots < 1:
            raise ScenarioError("need n >= 0 and slots >= 1")
        if self.g_t_high < self.g_t_low:
            raise ScenarioError("empty g_t range")
        if not (0.0 < self.epsilon_low <= self.epsilon_high < 1.0):
            raise ScenarioError("epsilon range must sit inside (0, 1)")
        if self.m_s_night - self.m_s_dip < self.m_b + 1.0:
            raise ScenarioError("selling price valley too close to the buying price")


def default_nanogrid_params(epsilon: float) -> NanogridParams:
    """Standard single-building constants used across the experiments."""
    return NanogridParams(epsilon=epsilon, eta=15.0, e_max=5.0, t_min=66.0,
                          t_max=77.0, l_max=10.0, gamma=0.01)


def default_pme_params() -> PmeParams:
    """Standard aggregator battery constants used across the experiments."""
    return PmeParams(e_min=2.0, e_max_cap=16.0, u_cmax=1.0, u_dmax=1.0, c_b=0.01)


def _bell(hour: float, center: float, width: float) -> float:
    dist = abs(hour - center)
    dist = min(dist, 24.0 - dist)
    return math.exp(-((dist / width) ** 2))


def synthetic_params(spec: SyntheticSpec) -> tuple[NanogridParams, ...]:
    """Per-building parameters matching generate_synthetic for the same seed."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed).spawn(2)[0])
    eps = rng.uniform(spec.epsilon_low, spec.epsilon_high, size=spec.n)
    return tuple(default_nanogrid_params(float(e)) for e in eps)


def generate_synthetic(spec: SyntheticSpec) -> Scenario:
    """Deterministic scenario for the given spec; same seed, same scenario.

    Day shapes: a deep-winter sinusoidal outdoor temperature with small
    per-building offsets, a small double-peaked base load, a midday solar
    bell plus wind noise, a slowly moving comfort target, and a selling
    price that is cheap off-peak with narrow morning and evening peaks and
    a slight midday solar dip.  The generated series are validated against
    the default building parameters so the comfort certificates apply.
    """
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed).spawn(2)[1])
    n, slots = spec.n, spec.slots
    hours = np.arange(slots) % 24

    offsets = rng.uniform(-1.5, 1.5, size=n)
    phases = rng.uniform(-0.8, 0.8, size=n)

    rp = np.zeros((slots, n))
    d = np.zeros((slots, n))
    t_out = np.zeros((slots, n))
    t_opt = np.zeros((slots, n))
    for i in range(n):
        day = np.sin(2.0 * math.pi * (hours - 9.0) / 24.0)
        t_out[:, i] = (spec.t_out_base + offsets[i] + spec.t_out_amp * day
                       + rng.normal(0.0, spec.t_out_noise, size=slots))
        solar = spec.rp_scale * np.array([_bell(h, 13.0, 3.5) for h in hours])
        wind = rng.uniform(0.0, 0.8, size=slots)
        rp[:, i] = solar * rng.uniform(0.7, 1.0, size=slots) + wind
        morning = np.array([_bell(h, 8.0, 2.2) for h in hours])
        evening = np.array([_bell(h, 19.0, 2.8) for h in hours])
        d[:, i] = (spec.d_base + 0.6 * morning + 0.9 * evening
                   + rng.normal(0.0, 0.08, size=slots))
        t_opt[:, i] = (spec.t_opt_center
                       + spec.t_opt_amp * np.sin(2.0 * math.pi * (hours - 10.0) / 24.0
                                                 + phases[i])
                       + rng.normal(0.0, 0.2, size=slots))

    # Clips keep the comfort assumptions valid for the default parameters and
    # leave the interchange limit slack (d - rp and rp - d both well under
    # l_max - e_max).
    t_out = np.clip(t_out, spec.t_out_base - 12.0, spec.t_out_base + 12.0)
    rp = np.clip(rp, 0.0, 4.5)
    d = np.clip(d, 0.1, 2.5)
    t_opt = np.clip(t_opt, 68.0, 75.0)

    evening_peak = np.array([_bell(h, 18.5, 1.8) for h in hours])
    morning_peak = np.array([_bell(h, 8.0, 1.5) for h in hours])
    midday_dip = np.array([_bell(h, 13.5, 2.5) for h in hours])
    m_s = (spec.m_s_night + spec.m_s_peak * evening_peak
           + spec.m_s_morning * morning_peak - spec.m_s_dip * midday_dip
           + rng.normal(0.0, 0.2, size=slots))
    m_s = np.clip(m_s, spec.m_b + 1.0, 15.0)
    m_b = np.full(slots, spec.m_b)
    g_t = rng.uniform(spec.g_t_low, spec.g_t_high, size=slots)

    scenario = Scenario.from_series(
        n=n, slots=slots,
        rp=rp.tolist(), d=d.tolist(), t_out=t_out.tolist(), t_opt=t_opt.tolist(),
        m_s=m_s.tolist(), m_b=m_b.tolist(), g_t=g_t.tolist(),
    )
    check_assumptions(scenario, synthetic_params(spec))
    return scenario


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------


def _headers(n: int) -> list[str]:
    cols = ["slot", "m_s", "m_b", "g_t"]
    for group in ("rp", "d", "t_out", "t_opt"):
        cols.extend(f"{group}_{i + 1}" for i in range(n))
    return cols


def save_scenario(scenario: Scenario, path: str) -> None:
    """Write a scenario as CSV; numbers round-trip exactly through load."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_headers(scenario.n))
        for k in range(scenario.slots):
            row: list[str] = [str(k), repr(scenario.m_s[k]),
                              repr(scenario.m_b[k]), repr(scenario.g_t[k])]
            for series in (scenario.rp, scenario.d, scenario.t_out, scenario.t_opt):
                row.extend(repr(series[k][i]) for i in range(scenario.n))
            writer.writerow(row)


def load_scenario(path: str) -> Scenario:
    """Parse and validate a scenario CSV.

    Parse failures name the row and column; invariant violations name the
    constraint and slot (via Scenario construction).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ScenarioError(f"{path}: empty file") from None
        rows = list(reader)

    header = [h.strip() for h in header]
    n = sum(1 for h in header if h.startswith("rp_"))
    expected = _headers(n)
    missing = [h for h in expected if h not in header]
    unknown = [h for h in header if h not in expected]
    if missing or unknown:
        detail = []
        if missing:
            detail.append(f"missing columns: {missing}")
        if unknown:
            detail.append(f"unexpected columns: {unknown}")
        raise ScenarioError(
            f"{path}: bad header ({'; '.join(detail)}); expected exactly: "
            f"{','.join(expected)}"
        )
    index = {h: j for j, h in enumerate(header)}

    def cell(row_vals: list[str], row_no: int, col: str) -> float:
        j = index[col]
        if j >= len(row_vals):
            raise ScenarioError(f"{path}: row {row_no} is short, no column {col!r}")
        text = row_vals[j].strip()
        try:
            return float(text)
        except ValueError:
            raise ScenarioError(
                f"{path}: row {row_no}, column {col!r}: could not parse "
                f"{text!r} as a number"
            ) from None

    slots = len(rows)
    if slots == 0:
        raise ScenarioError(f"{path}: no data rows")
    rp, d, t_out, t_opt = [], [], [], []
    m_s, m_b, g_t = [], [], []
    for k, row in enumerate(rows):
        row_no = k + 2  # 1-based, after the header
        slot_val = cell(row, row_no, "slot")
        if slot_val != k:
            raise ScenarioError(
                f"{path}: row {row_no}: slot index {slot_val} out of order, "
                f"expected {k}"
            )
        m_s.append(cell(row, row_no, "m_s"))
        m_b.append(cell(row, row_no, "m_b"))
        g_t.append(cell(row, row_no, "g_t"))
        rp.append([cell(row, row_no, f"rp_{i + 1}") for i in range(n)])
        d.append([cell(row, row_no, f"d_{i + 1}") for i in range(n)])
        t_out.append([cell(row, row_no, f"t_out_{i + 1}") for i in range(n)])
        t_opt.append([cell(row, row_no, f"t_opt_{i + 1}") for i in range(n)])

    return Scenario.from_series(n=n, slots=slots, rp=rp, d=d, t_out=t_out,
                                t_opt=t_opt, m_s=m_s, m_b=m_b, g_t=g_t)
