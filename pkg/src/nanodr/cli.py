"""Batch command-line interface.

Verbs:

    run           simulate one scenario and write summary + per-slot series
    compare       run the comparison cases and write a one-row-per-case table
    sweep         re-run over a parameter grid and write plot-ready columns
    check-bounds  print the certified tuning windows without running
    gen-scenario  write a synthetic scenario CSV

Scenario source is either ``--scenario FILE`` or the seeded synthetic
generator (default).  A ``--config FILE`` of ``key=value`` lines (keys equal
to long flag names, ``#`` comments) supplies defaults; explicit flags win.
All result artifacts are deterministic for a fixed seed/config; wall-clock
timings go to a separate ``timing.csv`` sidecar, which is the only
non-deterministic output.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import replace
from typing import Sequence

from .baselines import CaseId, run_case
from .domain import (
    ConfigurationError,
    InvariantViolation,
    NanogridParams,
    PmeParams,
    Scenario,
    ScenarioError,
)
from .policy import PolicyBundle, default_policy
from .scenario_io import (
    SyntheticSpec,
    default_nanogrid_params,
    default_pme_params,
    generate_synthetic,
    load_scenario,
    save_scenario,
    synthetic_params,
)
from .simulator import RunReport, run
from .stackelberg import GameConfig

_CASE_BY_NUMBER = {c.value: c for c in CaseId}


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# Argument plumbing
# ---------------------------------------------------------------------------


def _add_scenario_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE",
                   help="key=value defaults file (keys match long flags)")
    p.add_argument("--scenario", metavar="FILE",
                   help="scenario CSV; omit to use the synthetic generator")
    p.add_argument("--seed", type=int, help="synthetic generator seed")
    p.add_argument("--slots", type=int, help="synthetic horizon length")
    p.add_argument("--followers", type=int, help="synthetic nanogrid count")
    p.add_argument("--mode", choices=("heating", "cooling"), default="heating")
    # Building parameter overrides (applied to every nanogrid).
    p.add_argument("--epsilon", type=float, help="thermal inertia for all nanogrids")
    p.add_argument("--eta", type=float)
    p.add_argument("--e-max", dest="e_max", type=float)
    p.add_argument("--t-min", dest="t_min", type=float)
    p.add_argument("--t-max", dest="t_max", type=float)
    p.add_argument("--l-max", dest="l_max", type=float)
    p.add_argument("--gamma", type=float)
    # Battery parameter overrides.
    p.add_argument("--batt-min", dest="batt_min", type=float)
    p.add_argument("--batt-max", dest="batt_max", type=float)
    p.add_argument("--u-cmax", dest="u_cmax", type=float)
    p.add_argument("--u-dmax", dest="u_dmax", type=float)
    p.add_argument("--c-b", dest="c_b", type=float)
    # Control overrides (defaults: weights at maximum, shifts at the floor).
    p.add_argument("--v-i", dest="v_i", type=float)
    p.add_argument("--gamma-shift", dest="gamma_shift", type=float)
    p.add_argument("--v-p", dest="v_p", type=float)
    p.add_argument("--theta", type=float)
    # Solver knobs.
    p.add_argument("--rho", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--min-gap", dest="min_gap", type=float)
    p.add_argument("--no-polish", dest="no_polish", action="store_true")


def _apply_config_file(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    if not getattr(args, "config", None):
        return
    try:
        with open(args.config) as fh:
            lines = fh.readlines()
    except OSError as exc:
        parser.error(f"cannot read config file: {exc}")
    overrides: dict[str, str] = {}
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            parser.error(f"{args.config}:{no}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        overrides[key.replace("-", "_")] = value
    bool_keys = {"no_polish", "traces"}
    for key, value in overrides.items():
        if not hasattr(args, key):
            parser.error(f"{args.config}: unknown key {key!r}")
        if getattr(args, key) not in (None, False):
            continue  # explicit flag wins
        if key in bool_keys:
            setattr(args, key, value.lower() in ("1", "true", "yes"))
        elif key in ("seed", "slots", "followers", "max_iters"):
            setattr(args, key, int(value))
        elif key in ("scenario", "mode", "cases", "param", "values", "out"):
            setattr(args, key, value)
        else:
            setattr(args, key, float(value))


def _build_spec(args: argparse.Namespace) -> SyntheticSpec:
    spec = SyntheticSpec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if args.slots is not None:
        spec = replace(spec, slots=args.slots)
    if args.followers is not None:
        spec = replace(spec, n=args.followers)
    return spec


_PARAM_FIELDS = ("epsilon", "eta", "e_max", "t_min", "t_max", "l_max", "gamma")


def _build_params(args: argparse.Namespace, scenario: Scenario,
                  synthetic: SyntheticSpec | None) -> list[NanogridParams]:
    if synthetic is not None:
        params = list(synthetic_params(synthetic))
    else:
        params = [default_nanogrid_params(0.955) for _ in range(scenario.n)]
    overrides = {f: getattr(args, f) for f in _PARAM_FIELDS
                 if getattr(args, f) is not None}
    if overrides:
        params = [replace(p, **overrides) for p in params]
    return params


def _build_pme_params(args: argparse.Namespace) -> PmeParams:
    pme = default_pme_params()
    mapping = {"batt_min": "e_min", "batt_max": "e_max_cap", "u_cmax": "u_cmax",
               "u_dmax": "u_dmax", "c_b": "c_b"}
    overrides = {field: getattr(args, flag) for flag, field in mapping.items()
                 if getattr(args, flag) is not None}
    return replace(pme, **overrides) if overrides else pme


def _build_game_config(args: argparse.Namespace) -> GameConfig:
    cfg = GameConfig()
    updates = {}
    if args.rho is not None:
        updates["rho"] = args.rho
    if args.max_iters is not None:
        updates["max_iters"] = args.max_iters
    if args.min_gap is not None:
        updates["min_gap"] = args.min_gap
    if args.no_polish:
        updates["polish"] = False
    return replace(cfg, **updates) if updates else cfg


class Setup:
    """Everything a command needs, assembled and validated."""

    def __init__(self, args: argparse.Namespace):
        self.synthetic: SyntheticSpec | None = None
        if args.scenario:
            clashes = [flag for flag, val in (("--seed", args.seed),
                                              ("--slots", args.slots),
                                              ("--followers", args.followers))
                       if val is not None]
            if clashes:
                raise ConfigurationError(
                    f"exactly one scenario source: --scenario conflicts with "
                    f"{', '.join(clashes)}"
                )
            self.scenario = load_scenario(args.scenario)
            self.source = f"file:{args.scenario}"
        else:
            self.synthetic = _build_spec(args)
            self.scenario = generate_synthetic(self.synthetic)
            self.source = f"synthetic:seed={self.synthetic.seed}"
        self.ng_params = _build_params(args, self.scenario, self.synthetic)
        self.pme_params = _build_pme_params(args)
        n = self.scenario.n
        v_i = [args.v_i] * n if args.v_i is not None else None
        shift = [args.gamma_shift] * n if args.gamma_shift is not None else None
        self.bundle: PolicyBundle = default_policy(
            self.scenario, self.ng_params, self.pme_params,
            v_i=v_i, gamma_shift=shift, v_p=args.v_p, theta=args.theta,
        )
        self.config = _build_game_config(args)
        self.mode = args.mode

    def simulate(self, keep_traces: bool = False) -> RunReport:
        return run(self.scenario, self.ng_params, self.bundle.ng_controls,
                   self.pme_params, self.bundle.pme_control, self.config,
                   mode=self.mode, keep_traces=keep_traces)


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


def _summary_pairs(report: RunReport, setup: Setup) -> list[tuple[str, object]]:
    return [
        ("source", setup.source),
        ("nanogrids", setup.scenario.n),
        ("slots", setup.scenario.slots),
        ("pme_profit_total_cent", report.pme_profit_total),
        ("energy_cost_total_cent", report.energy_cost_total),
        ("discomfort_total_cent", report.discomfort_total),
        ("aggregate_cost_cent", report.aggregate_cost),
        ("tatd_f", report.tatd),
        ("total_hvac_kwh", report.total_hvac),
        ("comfort_violations", report.comfort_violations),
        ("battery_violations", report.battery_violations),
        ("median_iterations", report.median_iterations),
        ("max_iterations", max(report.iterations)),
        ("all_converged", report.all_converged),
    ]


def _write_summary(report: RunReport, setup: Setup, out_dir: str) -> None:
    pairs = _summary_pairs(report, setup)
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        for key, value in pairs:
            fh.write(f"{key} = {value!r}\n" if isinstance(value, float)
                     else f"{key} = {value}\n")
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(dict(pairs), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_series(report: RunReport, setup: Setup, out_dir: str) -> None:
    n = setup.scenario.n
    headers = (["slot", "p_s", "p_b", "y", "e_batt", "residual", "profit",
                "converged", "iterations"]
               + [f"t_{i + 1}" for i in range(n)]
               + [f"e_{i + 1}" for i in range(n)]
               + [f"tp_{i + 1}" for i in range(n)])
    with open(os.path.join(out_dir, "series.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        for o in report.outcomes:
            row = [str(o.slot), _fmt(o.leader.p_s), _fmt(o.leader.p_b),
                   _fmt(o.leader.y), _fmt(o.next_state.e_batt),
                   _fmt(o.grid_residual), _fmt(o.pme_profit),
                   str(int(o.converged)), str(o.iterations)]
            row += [_fmt(t) for t in o.next_state.t]
            row += [_fmt(f.e) for f in o.followers]
            row += [_fmt(f.tp) for f in o.followers]
            writer.writerow(row)


def _write_traces(report: RunReport, setup: Setup, out_dir: str) -> None:
    n = setup.scenario.n
    headers = (["slot", "iter", "p_s", "p_b", "y", "g_ps", "g_pb", "g_y",
                "step_s", "step_b", "step_y", "dist_s", "dist_b", "dist_y"]
               + [f"e_{i + 1}" for i in range(n)])
    with open(os.path.join(out_dir, "traces.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        for o in report.outcomes:
            if o.trace is None:
                continue
            for m, rec in enumerate(o.trace.records, start=1):
                row = [str(o.slot), str(m), _fmt(rec.action.p_s),
                       _fmt(rec.action.p_b), _fmt(rec.action.y),
                       _fmt(rec.subgrad.g_ps), _fmt(rec.subgrad.g_pb),
                       _fmt(rec.subgrad.g_y)]
                row += [_fmt(s) for s in rec.steps]
                row += [_fmt(dist) for dist in rec.distance]
                row += [_fmt(f.e) for f in rec.followers]
                writer.writerow(row)


def _print_bounds(setup: Setup) -> None:
    bundle = setup.bundle
    for i, (bounds, control) in enumerate(zip(bundle.follower_bounds,
                                              bundle.ng_controls)):
        print(f"nanogrid {i}:")
        print(f"  v_max       = {bounds.v_max!r}")
        print(f"  shift_floor = {bounds.gamma_min!r}")
        print(f"  shift_ceil  = {bounds.gamma_max!r}")
        print(f"  opt_span    = {bounds.opt_span!r}")
        print(f"  swing       = {bounds.swing!r}")
        print(f"  drift_bound = {bounds.drift_bound!r}")
        print(f"  using v_i={control.v_i!r} gamma_shift={control.gamma_shift!r}")
    lb = bundle.leader_bounds
    print("aggregator:")
    print(f"  v_p_max     = {lb.v_p_max!r}")
    print(f"  theta_floor = {lb.theta_min!r}")
    print(f"  theta_ceil  = {lb.theta_max!r}")
    print(f"  c_min/c_max = {lb.c_min!r} / {lb.c_max!r}")
    print(f"  drift_bound = {lb.drift_bound!r}")
    print(f"  using v_p={bundle.pme_control.v_p!r} theta={bundle.pme_control.theta!r}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _cmd_run(args: argparse.Namespace) -> int:
    setup = Setup(args)
    if args.check_bounds:
        _print_bounds(setup)
        return 0
    os.makedirs(args.out, exist_ok=True)
    report = setup.simulate(keep_traces=args.traces)
    _write_summary(report, setup, args.out)
    _write_series(report, setup, args.out)
    if args.traces:
        _write_traces(report, setup, args.out)
    for key, value in _summary_pairs(report, setup):
        print(f"{key} = {value}")
    if report.comfort_violations or report.battery_violations:
        print("bound violations detected", file=sys.stderr)
        return 1
    return 0


def _parse_cases(text: str) -> list[CaseId]:
    cases = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            cases.append(_CASE_BY_NUMBER[int(token)])
        except (ValueError, KeyError):
            try:
                cases.append(CaseId[token.upper()])
            except KeyError:
                raise ConfigurationError(
                    f"unknown case {token!r}; use 1-5 or names "
                    f"{[c.name for c in CaseId]}"
                ) from None
    if not cases:
        raise ConfigurationError("empty case list")
    return cases


def _cmd_compare(args: argparse.Namespace) -> int:
    setup = Setup(args)
    cases = _parse_cases(args.cases)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for case in cases:
        report = run_case(case, setup.scenario, setup.ng_params,
                          setup.bundle.ng_controls, setup.pme_params,
                          setup.bundle.pme_control, setup.config,
                          mode=setup.mode)
        # The cooperative case has no prices, so its internal transfer
        # columns stay blank in the table.
        blank = case is CaseId.SOCIAL_WELFARE
        rows.append({
            "case": case.value,
            "name": case.name,
            "trading_profit": "" if blank else _fmt(report.pme_profit_total),
            "energy_cost": "" if blank else _fmt(report.energy_cost_total),
            "discomfort_cost": _fmt(report.discomfort_total),
            "aggregate_cost": _fmt(report.aggregate_cost),
            "tatd": _fmt(report.tatd),
        })
    headers = ["case", "name", "trading_profit", "energy_cost",
               "discomfort_cost", "aggregate_cost", "tatd"]
    with open(os.path.join(args.out, "comparison.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=headers)
        writer.writeheader()
        writer.writerows(rows)
    widths = {h: max(len(h), max(len(str(r[h])) for r in rows)) for h in headers}
    print("  ".join(h.ljust(widths[h]) for h in headers))
    for r in rows:
        print("  ".join(str(r[h]).ljust(widths[h]) for h in headers))
    return 0


_SWEEPABLE = ("gamma", "epsilon", "t_min", "t_max", "n")


def _cmd_sweep(args: argparse.Namespace) -> int:
    if args.param not in _SWEEPABLE:
        raise ConfigurationError(
            f"unsupported sweep parameter {args.param!r}; choose from {_SWEEPABLE}"
        )
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigurationError("empty sweep value list")
    os.makedirs(args.out, exist_ok=True)
    rows = []
    timing = []
    for value in values:
        sweep_args = argparse.Namespace(**vars(args))
        if args.param == "n":
            if args.scenario:
                raise ConfigurationError("the n sweep needs a synthetic scenario")
            if value != int(value) or value < 0:
                raise ConfigurationError(f"n must be a nonnegative integer, got {value}")
            sweep_args.followers = int(value)
        else:
            setattr(sweep_args, args.param, value)
        started = time.perf_counter()
        try:
            setup = Setup(sweep_args)
            report = setup.simulate()
        except (ConfigurationError, ScenarioError) as exc:
            rows.append({"param": args.param, "value": _fmt(value),
                         "status": f"skipped: {exc}", "trading_profit": "",
                         "energy_cost": "", "discomfort_cost": "",
                         "aggregate_cost": "", "tatd": "", "total_hvac": "",
                         "median_iterations": ""})
            print(f"warning: {args.param}={value} skipped: {exc}", file=sys.stderr)
            continue
        elapsed = time.perf_counter() - started
        rows.append({
            "param": args.param, "value": _fmt(value), "status": "ok",
            "trading_profit": _fmt(report.pme_profit_total),
            "energy_cost": _fmt(report.energy_cost_total),
            "discomfort_cost": _fmt(report.discomfort_total),
            "aggregate_cost": _fmt(report.aggregate_cost),
            "tatd": _fmt(report.tatd),
            "total_hvac": _fmt(report.total_hvac),
            "median_iterations": _fmt(report.median_iterations),
        })
        timing.append({"param": args.param, "value": _fmt(value),
                       "wall_time_s": _fmt(elapsed),
                       "slots": setup.scenario.slots,
                       "per_slot_ms": _fmt(1000.0 * elapsed / setup.scenario.slots)})
    headers = ["param", "value", "status", "trading_profit", "energy_cost",
               "discomfort_cost", "aggregate_cost", "tatd", "total_hvac",
               "median_iterations"]
    with open(os.path.join(args.out, "sweep.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=headers)
        writer.writeheader()
        writer.writerows(rows)
    # Wall-clock sidecar: the single non-deterministic output, kept apart so
    # the result artifacts stay byte-identical across reruns.
    with open(os.path.join(args.out, "timing.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["param", "value", "wall_time_s",
                                                "slots", "per_slot_ms"])
        writer.writeheader()
        writer.writerows(timing)
    for r in rows:
        print(f"{r['param']}={r['value']}: status={r['status']} "
              f"aggregate={r['aggregate_cost']} tatd={r['tatd']}")
    return 0


def _cmd_check_bounds(args: argparse.Namespace) -> int:
    _print_bounds(Setup(args))
    return 0


def _cmd_gen_scenario(args: argparse.Namespace) -> int:
    if args.scenario:
        raise ConfigurationError("gen-scenario generates synthetic data; "
                                 "--scenario is not applicable")
    spec = _build_spec(args)
    scenario = generate_synthetic(spec)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    save_scenario(scenario, args.out)
    print(f"wrote {scenario.slots} slots x {scenario.n} nanogrids to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nanodr",
        description="Bilevel online energy management simulator "
                    "(bidirectional pricing + HVAC demand response).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one scenario")
    _add_scenario_args(p_run)
    p_run.add_argument("--out", default="out", help="artifact directory")
    p_run.add_argument("--traces", action="store_true",
                       help="also write per-iteration traces.csv")
    p_run.add_argument("--check-bounds", dest="check_bounds",
                       action="store_true",
                       help="print certified tuning windows and exit")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="run comparison cases")
    _add_scenario_args(p_cmp)
    p_cmp.add_argument("--out", default="out", help="artifact directory")
    p_cmp.add_argument("--cases", default="1,2,3,4,5",
                       help="comma list of case numbers or names")
    p_cmp.set_defaults(func=_cmd_compare)

    p_swp = sub.add_parser("sweep", help="sweep one parameter")
    _add_scenario_args(p_swp)
    p_swp.add_argument("--out", default="out", help="artifact directory")
    p_swp.add_argument("--param", required=True,
                       help=f"one of {', '.join(_SWEEPABLE)}")
    p_swp.add_argument("--values", required=True, help="comma list of values")
    p_swp.set_defaults(func=_cmd_sweep)

    p_chk = sub.add_parser("check-bounds",
                           help="print certified tuning windows")
    _add_scenario_args(p_chk)
    p_chk.set_defaults(func=_cmd_check_bounds)

    p_gen = sub.add_parser("gen-scenario", help="write a synthetic scenario CSV")
    _add_scenario_args(p_gen)
    p_gen.add_argument("--out", default="scenario.csv", help="output CSV path")
    p_gen.set_defaults(func=_cmd_gen_scenario)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _apply_config_file(args, parser)
    try:
        return args.func(args)
    except (ConfigurationError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
