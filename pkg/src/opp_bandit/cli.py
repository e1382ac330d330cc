"""Command-line front end.

Every command reads an optional spec file (a flat YAML mapping whose values
may be lists), lets flags override it, evaluates one row per grid cell in
``p01 x p11 x N x T`` order and writes CSV or JSON.

Exit codes: 0 success, 1 usage error, 2 computation error, 3 a myopic
counterexample was found (``verify-optimality`` only).
"""
from __future__ import annotations

import argparse
import io
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable

import yaml

from .channel import ChannelParams
from .dp import VALUE_TOL, BeliefDP, DPSizeError, one_step_deviation_check
from .monte_carlo import PRESETS, SimConfig, resolve_omega1, simulate, tp_statistics
from .policy import POLICIES
from .steady_state import (
    DEFAULT_L_MAX,
    closed_form_throughput_n2,
    rate_check,
    throughput_report,
    tp_chain,
    tp_throughput,
)

EXIT_OK, EXIT_USAGE, EXIT_COMPUTE, EXIT_COUNTEREXAMPLE = 0, 1, 2, 3
JOBS_ENV = "OPP_BANDIT_JOBS"
ERROR = "ERROR"

COMMANDS = ("simulate", "analyze", "verify-optimality", "bounds", "rate", "sweep")
COLUMNS = {
    "simulate": ["p01", "p11", "N", "T", "policy", "U_hat", "stderr", "L_bar_hat"],
    "analyze": ["p01", "p11", "N", "U_exact", "U_closed", "U_tp", "U_lower", "U_upper"],
    "verify-optimality": ["p01", "p11", "N", "T", "V_opt", "V_myopic", "gap", "lemma2_holds"],
    "bounds": ["p01", "p11", "N", "U_lower", "U_exact", "U_upper", "rel_gap"],
    "rate": ["p01", "p11", "N", "gap", "ratio"],
    "sweep": ["p01", "p11", "N", "T", "omega1", "U_hat", "stderr", "U_exact", "z"],
}


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    command: str
    p01: tuple = (0.2,)
    p11: tuple = (0.8,)
    N: tuple = (2,)
    T: tuple = (1000,)
    seed: int = 0
    output: str | None = None
    format: str = "csv"
    policy: str = "structural"
    omega1: Any = "stationary"
    replications: int = 1
    L_max: int = DEFAULT_L_MAX
    deviation_samples: int = 0
    max_n: int = 12

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        for name in ("p01", "p11", "N", "T"):
            if not getattr(self, name):
                raise UsageError(f"grid {name!r} is empty")
        if self.format not in ("csv", "json"):
            raise UsageError(f"format must be csv or json, got {self.format!r}")
        if self.policy not in POLICIES:
            raise UsageError(f"policy must be one of {POLICIES}")

    def cells(self, with_T: bool = True):
        axes = [self.p01, self.p11, self.N] + ([self.T] if with_T else [])
        return list(itertools.product(*axes))


_LIST_KEYS = {"p01": float, "p11": float, "N": int, "T": int}
_SCALAR_KEYS = {"seed": int, "output": str, "format": str, "policy": str,
                "replications": int, "L_max": int, "deviation_samples": int, "max_n": int}


def _as_list(value, cast):
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split()]
    elif not isinstance(value, (list, tuple)):
        value = [value]
    try:
        return tuple(cast(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad list value {value!r}: {exc}") from exc


def _omega1(value):
    if value is None:
        return None
    if isinstance(value, str) and value in PRESETS:
        return value
    return _as_list(value, float)


def load_spec_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise UsageError(f"cannot read spec file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("spec file must be a flat key-value mapping")
    unknown = set(data) - set(_LIST_KEYS) - set(_SCALAR_KEYS) - {"omega1", "command", "jobs"}
    if unknown:
        raise UsageError(f"unknown spec keys: {sorted(unknown)}")
    return data


def build_spec(command: str, file_values: dict, overrides: dict) -> ExperimentSpec:
    merged = {k: v for k, v in file_values.items() if k not in ("command", "jobs")}
    merged.update({k: v for k, v in overrides.items() if v is not None})
    kwargs = {}
    for key, value in merged.items():
        if key in _LIST_KEYS:
            kwargs[key] = _as_list(value, _LIST_KEYS[key])
        elif key == "omega1":
            kwargs[key] = _omega1(value)
        elif key in _SCALAR_KEYS:
            try:
                kwargs[key] = _SCALAR_KEYS[key](value)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for {key}: {value!r}") from exc
    return ExperimentSpec(command, **kwargs)


# --- per-cell workers (module level so worker processes can import them) ---

def _cell_simulate(spec: ExperimentSpec, cell):
    p01, p11, N, T = cell
    params = ChannelParams(p01, p11)
    res = simulate(SimConfig(params, N, T, spec.policy, spec.seed, spec.omega1, spec.replications))
    Lbar = tp_statistics(res).mean_length if res.tp_lengths.size else None
    return [[p01, p11, N, T, spec.policy, res.mean, res.stderr, Lbar]]


def _cell_analyze(spec: ExperimentSpec, cell):
    p01, p11, N = cell
    params = ChannelParams(p01, p11)
    rep = throughput_report(params, N, exact=N <= spec.max_n, max_n=spec.max_n)
    U_closed = U_tp = None
    if N == 2:
        U_closed = closed_form_throughput_n2(params).U_closed
        U_tp = tp_throughput(tp_chain(params, "exact_N2", 2, spec.L_max)).U
    return [[p01, p11, N, rep.U_exact, U_closed, U_tp, rep.U_lower, rep.U_upper]]


def _cell_verify(spec: ExperimentSpec, cell):
    p01, p11, N = cell
    params = ChannelParams(p01, p11)
    dp = BeliefDP(params, N)
    start = resolve_omega1(spec.omega1, params, N)
    rows = []
    for T in spec.T:
        try:
            v_opt = dp.solve(T, start).value
            v_my = dp.solve(T, start, myopic=True).value
            holds = one_step_deviation_check(params, N, T, start, n_samples=spec.deviation_samples,
                                             seed=spec.seed, dp=dp).holds
        except DPSizeError:
            rows.append([p01, p11, N, T, ERROR, ERROR, ERROR, ERROR])
            continue
        rows.append([p01, p11, N, T, v_opt, v_my, v_opt - v_my, holds])
    return rows


def _cell_bounds(spec: ExperimentSpec, cell):
    p01, p11, N = cell
    rep = throughput_report(ChannelParams(p01, p11), N, exact=N <= spec.max_n, max_n=spec.max_n)
    return [[p01, p11, N, rep.U_lower, rep.U_exact, rep.U_upper, rep.rel_gap]]


def _cell_rate(spec: ExperimentSpec, cell):
    p01, p11 = cell
    return [[p01, p11, r.N, r.gap_limit, r.ratio] for r in rate_check(ChannelParams(p01, p11), spec.N)]


def _cell_sweep(spec: ExperimentSpec, cell):
    p01, p11, N, T = cell
    params = ChannelParams(p01, p11)
    U = throughput_report(params, N, exact=True, max_n=spec.max_n).U_exact if N >= 2 else params.omega_o
    rows = []
    for preset in PRESETS:
        res = simulate(SimConfig(params, N, T, spec.policy, spec.seed, preset, spec.replications))
        z = (res.mean - U) / res.stderr if res.stderr and res.stderr == res.stderr else None
        rows.append([p01, p11, N, T, preset, res.mean, res.stderr, U, z])
    return rows


_WORKERS: dict[str, tuple[Callable, Callable]] = {
    "simulate": (_cell_simulate, lambda s: s.cells()),
    "analyze": (_cell_analyze, lambda s: s.cells(with_T=False)),
    "verify-optimality": (_cell_verify, lambda s: s.cells(with_T=False)),
    "bounds": (_cell_bounds, lambda s: s.cells(with_T=False)),
    "rate": (_cell_rate, lambda s: list(itertools.product(s.p01, s.p11))),
    "sweep": (_cell_sweep, lambda s: s.cells()),
}


def _run_cell(args):
    fn, spec, cell = args
    return fn(spec, cell)


def run(spec: ExperimentSpec, jobs: int = 1) -> list[list]:
    """Evaluate every grid cell and return rows in grid order."""
    fn, cells_of = _WORKERS[spec.command]
    tasks = [(fn, spec, cell) for cell in cells_of(spec)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_cell, tasks))
    else:
        chunks = [_run_cell(t) for t in tasks]
    return [row for chunk in chunks for row in chunk]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def _json_value(v):
    if isinstance(v, bool) or v is None or isinstance(v, (int, str)):
        return v
    v = float(v)
    if v != v or v in (float("inf"), float("-inf")):
        return None
    return float(format(v, ".12g"))


def render(command: str, rows: list[list], fmt: str) -> str:
    cols = COLUMNS[command]
    if fmt == "json":
        records = [{c: _json_value(v) for c, v in zip(cols, row)} for row in rows]
        return json.dumps({"command": command, "columns": cols, "rows": records}, indent=2) + "\n"
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="opp-bandit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("spec", nargs="?", help="spec file (flat YAML mapping)")
        p.add_argument("--p01", help="comma-separated list")
        p.add_argument("--p11", help="comma-separated list")
        p.add_argument("--N", dest="N", help="comma-separated list of channel counts")
        p.add_argument("--T", dest="T", help="comma-separated list of horizons")
        p.add_argument("--seed", type=int)
        p.add_argument("--policy", choices=POLICIES)
        p.add_argument("--omega1", help=f"preset ({', '.join(PRESETS)}) or comma-separated beliefs")
        p.add_argument("--replications", type=int)
        p.add_argument("--L-max", dest="L_max", type=int)
        p.add_argument("--deviation-samples", dest="deviation_samples", type=int)
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--output", "-o")
        p.add_argument("--jobs", "-j", type=int,
                       help=f"worker processes (default: ${JOBS_ENV} or 1)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_values = load_spec_file(args.spec) if args.spec else {}
        overrides = {k: getattr(args, k) for k in
                     ("p01", "p11", "N", "T", "seed", "policy", "omega1", "replications",
                      "L_max", "deviation_samples", "format", "output")}
        spec = build_spec(args.command, file_values, overrides)
        jobs = args.jobs
        if jobs is None:
            jobs = int(file_values.get("jobs") or os.environ.get(JOBS_ENV) or 1)
        if jobs < 1:
            raise UsageError("--jobs must be >= 1")
    except (UsageError, ValueError) as exc:
        print(f"opp-bandit: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        rows = run(spec, jobs)
    except Exception as exc:  # any module error is a computation failure
        print(f"opp-bandit: {spec.command} failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE

    text = render(spec.command, rows, spec.format)
    if spec.output:
        with open(spec.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)

    if spec.command == "verify-optimality":
        gaps = [r[6] for r in rows if r[6] != ERROR]
        if any(g > VALUE_TOL for g in gaps):
            return EXIT_COUNTEREXAMPLE
        if len(gaps) < len(rows):
            return EXIT_COMPUTE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
