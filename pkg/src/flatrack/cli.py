"""Command-line front end: ``simulate``, ``analyze`` and ``sweep``.

Exit codes: 0 success, 2 configuration error, 3 simulation aborted,
4 analysis infeasible. ``FLATRACK_OUT_DIR`` overrides the output directory.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import densela
from .errors import (
    ConfigError,
    FlatrackError,
    NonMonotoneVerdict,
    SamplingDegenerate,
    SimulationAborted,
    SingularMatrix,
    SingularPrediction,
    NotPositiveDefinite,
)
from .flatcore import build_predictor, combined_dnrc_matrix
from .plants import plant_by_name
from .scenario import Scenario, load_scenario
from .sim import Metrics, compute_metrics, run_closed_loop, write_atomic
from .stability import alpha_threshold_for, roa_estimate, snrc_hurwitz_check

log = logging.getLogger("flatrack")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORTED = 3
EXIT_INFEASIBLE = 4

SWEEP_PARAMS = re.compile(r"^(T|alpha|x0\[(\d+)\]|x0\.(\d+))$")


def out_dir(cli_value: str | None = None) -> Path:
    env = os.environ.get("FLATRACK_OUT_DIR")
    return Path(env or cli_value or "flatrack-out")


def run_scenario(scenario: Scenario):
    plant = scenario.build_plant()
    config = scenario.sim_config(plant)
    r = scenario.build_reference(plant.input_dim)
    trace = run_closed_loop(plant, config, r)
    return trace, compute_metrics(trace, r)


def format_metrics(name: str, m: Metrics) -> str:
    settle = "never" if m.settling_time is None else f"{m.settling_time:.4g} s"
    return "\n".join([
        f"scenario {name}",
        f"  final |y|              {m.final_output_norm:.6g}",
        f"  settling time          {settle} (threshold {m.settle_threshold:.3g})",
        f"  steady-state error     {m.steady_state_error:.6g}",
        f"  max |u|                {m.max_input_norm:.6g}",
        f"  max prediction resid.  {m.prediction_residual_max:.3g} over {m.unsaturated_steps} unsaturated steps",
    ])


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    trace, metrics = run_scenario(scenario)
    base = out_dir(args.out_dir)
    trace_path = base / (scenario.outputs.trace or f"{scenario.name}_trace.csv")
    metrics_path = base / (scenario.outputs.metrics or f"{scenario.name}_metrics.json")
    trace.write_csv(trace_path)
    write_atomic(metrics_path, json.dumps({"scenario": scenario.name, **metrics.as_dict()}, indent=2) + "\n")
    print(format_metrics(scenario.name, metrics))
    print(f"  trace   -> {trace_path}")
    print(f"  metrics -> {metrics_path}")
    return EXIT_OK


def _analysis_rows(target: str, T: float, alpha: float, alpha_max: float,
                   samples: int, seed: int):
    try:
        plant = plant_by_name(target)
    except ValueError as exc:
        raise ConfigError("target", str(exc)) from exc
    fs = plant.flat
    rows = [("target", target), ("T", T)]
    rows.append(("snrc_hurwitz", snrc_hurwitz_check(fs, T).value))

    threshold = alpha_threshold_for(fs, T, alpha_max)
    rows += [("alpha_threshold", threshold.label), ("alpha_max", alpha_max)]
    if threshold.bracket:
        rows += [("alpha_bracket_lo", threshold.bracket[0]), ("alpha_bracket_hi", threshold.bracket[1])]
    if threshold.found:
        rows.append(("alpha_bracket_verified", threshold.verify_bracket(fs)))

    if target != "pendulum":
        reason = "linear plant" if target.startswith("chain") else "origin outside the valid region"
        rows.append(("roa", f"not applicable ({reason})"))
        return rows

    fp = build_predictor(fs, T)
    verdict = densela.routh_hurwitz(densela.char_poly(combined_dnrc_matrix(fs, fp, alpha)))
    rows += [("alpha", alpha), ("combined_verdict", verdict.value)]
    if verdict is not densela.StabilityVerdict.STABLE:
        raise _Infeasible(rows, f"combined flat system is {verdict.value} at alpha={alpha}")
    roa = roa_estimate(plant, fp, alpha, sample_budget=samples, seed=seed)
    rows += [
        ("K_S", roa.K_S), ("K_L", roa.K_L), ("alpha_K_L", alpha * roa.K_L),
        ("K_S_le_alpha_K_L", roa.ceiling_holds), ("delta", roa.delta),
        ("L1", roa.L1), ("L2", roa.L2), ("lambda_min_Q", roa.lambda_min_Q),
        ("lambda_max_P", roa.lambda_max_P), ("P0", roa.P0),
        ("B_bar_norm", f"{roa.B_bar_norm} (spectral)"),
        ("samples", roa.samples), ("seed", roa.seed),
    ]
    if not roa.ceiling_holds:
        raise _Infeasible(rows, "K_S <= alpha * K_L violated")
    return rows


class _Infeasible(Exception):
    def __init__(self, rows, reason):
        super().__init__(reason)
        self.rows = rows


def _write_report(rows, path: Path):
    width = max(len(k) for k, _ in rows)
    for key, value in rows:
        print(f"{key:<{width}}  {value}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["key", "value"])
    writer.writerows(rows)
    write_atomic(path, buf.getvalue())
    print(f"report -> {path}")


def cmd_analyze(args) -> int:
    path = out_dir(args.out_dir) / f"analyze_{args.target}.csv"
    try:
        rows = _analysis_rows(args.target, args.T, args.alpha, args.alpha_max, args.samples, args.seed)
    except _Infeasible as exc:
        _write_report(exc.rows + [("infeasible", str(exc))], path)
        return EXIT_INFEASIBLE
    except (SingularPrediction, SingularMatrix, NotPositiveDefinite,
            NonMonotoneVerdict, SamplingDegenerate) as exc:
        print(f"analysis infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _write_report(rows, path)
    return EXIT_OK


def _apply_param(data: dict, param: str, value: float) -> dict:
    m = SWEEP_PARAMS.match(param)
    if m is None:
        raise ConfigError("--param", f"unsupported sweep parameter {param!r}; use T, alpha or x0[i]")
    data = json.loads(json.dumps(data))
    ctrl = data.setdefault("controller", {})
    if m.group(1) in ("T", "alpha"):
        ctrl[m.group(1)] = value
    else:
        idx = int(m.group(2) or m.group(3))
        x0 = ctrl.get("x0", [])
        if idx >= len(x0):
            raise ConfigError("--param", f"x0 has no component {idx}")
        x0[idx] = value
    return data


def _sweep_one(payload):
    data, value = payload
    from .scenario import parse_scenario
    try:
        _, metrics = run_scenario(parse_scenario(data))
    except SimulationAborted as exc:
        return value, None, str(exc)
    return value, metrics, "ok"


def parse_values(text: str) -> list[float]:
    items = [s for s in re.split(r"[,\s]+", text.strip()) if s]
    if not items:
        raise ConfigError("--values", "empty value list")
    try:
        return [float(s) for s in items]
    except ValueError as exc:
        raise ConfigError("--values", str(exc)) from exc


def cmd_sweep(args) -> int:
    scenario = load_scenario(args.scenario)
    values = parse_values(args.values)
    base = scenario.model_dump(mode="json")
    payloads = []
    for v in values:
        data = _apply_param(base, args.param, v)
        from .scenario import parse_scenario
        parse_scenario(data)  # surface config errors before running anything
        payloads.append((data, v))

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, payloads))
    else:
        results = [_sweep_one(p) for p in payloads]

    fields = ["final_output_norm", "settling_time", "steady_state_error",
              "max_input_norm", "prediction_residual_max"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([args.param] + fields + ["status"])
    aborted = False
    for value, metrics, status in results:
        if metrics is None:
            aborted = True
            writer.writerow([f"{value:.9g}"] + [""] * len(fields) + [status])
            continue
        d = metrics.as_dict()
        writer.writerow([f"{value:.9g}"]
                        + ["" if d[k] is None else f"{d[k]:.9g}" for k in fields] + [status])
    safe = re.sub(r"[^A-Za-z0-9_]+", "_", args.param).strip("_")
    path = out_dir(args.out_dir) / f"{scenario.name}_sweep_{safe}.csv"
    write_atomic(path, buf.getvalue())
    print(buf.getvalue(), end="")
    print(f"sweep -> {path}")
    return EXIT_ABORTED if aborted else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flatrack", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser.add_argument("--out-dir", default=None, help="output directory (FLATRACK_OUT_DIR wins)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario file")
    p.add_argument("scenario", help="path to a scenario JSON file or a bundled scenario name")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="stability report for a plant or integrator chain")
    p.add_argument("target", help="pendulum, bicycle or chain<p>")
    p.add_argument("--T", type=float, default=1.0, help="prediction horizon")
    p.add_argument("--alpha", type=float, default=100.0, help="speedup factor for the ROA estimate")
    p.add_argument("--alpha-max", type=float, default=1e6, help="ceiling of the threshold search")
    p.add_argument("--samples", type=int, default=2000, help="valid-region samples for the Lipschitz bounds")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="rerun a scenario over a list of parameter values")
    p.add_argument("scenario", help="path to a scenario JSON file or a bundled scenario name")
    p.add_argument("--param", required=True, help="T, alpha or x0[i]")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationAborted as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    except FlatrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
