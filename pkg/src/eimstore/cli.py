"""Command-line interface: calibrate, value, sweep, simulate, verify.

Exit codes: 0 success, 2 data error, 3 validation failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import calibrate as cal
from .config import (ConfigError, contract_from_dict, contract_to_dict, dumps, load_json,
                     model_from_dict, model_to_dict, per_year, run_manifest)
from .diffusion import ModelError, ShiftedExpStack, make_eigenpair
from .lifetime import LifetimeError, lifetime_construct, lifetime_verify
from .payoff import ContractError, ContractParams, check_sustainability, state_star
from .simulate import SimConfig, estimate_lifetime_value, estimate_single_value
from .single import solve_single, threshold_policy_value
from .stack import EXCLUDED, classify_stack_stopping_set, solve_stack, verify_stopping_set

EXIT_OK, EXIT_DATA, EXIT_VALIDATION, EXIT_USAGE = 0, 2, 3, 64
SWEEP_AXES = ("x_star", "total_premium", "split", "threshold")

EPILOG = """exit codes:
  0   success (including a valid 'infinite value' classification)
  2   data error: unreadable or malformed input, failed assumptions
  3   validation failure: simulation disagrees with the analytic value by more than 5 SE,
      or a solution file fails verification
  64  usage error: bad arguments, empty grids, inconsistent bounds
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- helpers


def parse_grid(text: str) -> np.ndarray:
    """``"a,b,c"`` or ``"start:stop:num"`` (inclusive linspace)."""
    text = (text or "").strip()
    if not text:
        raise UsageError("grid is empty")
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise UsageError(f"range grid must be start:stop:num, got {text!r}")
            n = int(parts[2])
            if n < 1:
                raise UsageError("range grid needs at least one point")
            return np.linspace(float(parts[0]), float(parts[1]), n)
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse grid {text!r}") from None
    if not vals:
        raise UsageError("grid is empty")
    return np.array(vals)


def _load_inputs(args, force: bool = False):
    model_doc = load_json(args.model)
    contract_doc = load_json(args.contract)
    model = model_from_dict(model_doc, args.time_unit)
    contract = contract_from_dict(contract_doc, args.time_unit, model_doc, force=True)
    if not force and not contract.s2_star:
        raise ContractError(f"p_c + K_c = {contract.total_premium} is not below x_star = {contract.x_star}; "
                            "rerun with --force to value anyway")
    if force:
        return model, contract, model_doc, contract_doc
    # re-validate strictly so negative premia are still refused
    return model, replace(contract, strict=True), model_doc, contract_doc


def _resolved(model, contract, **numeric) -> dict:
    return {"model": model_to_dict(model), "contract": contract_to_dict(contract), "numeric": numeric}


def _emit(args, command: str, doc: dict, config: dict, inputs: dict) -> None:
    text = dumps(doc)
    if getattr(args, "output", None):
        Path(args.output).write_text(text)
        _write_manifest(args.output, command, config, inputs)
    else:
        sys.stdout.write(text)


def _write_manifest(output: str, command: str, config: dict, inputs: dict) -> None:
    Path(str(output) + ".manifest.json").write_text(dumps(run_manifest(command, config, inputs)))


def _sustainability_dict(rep) -> dict:
    return {"S1_star": rep.s1_star, "S2_star": rep.s2_star, "sup_h": rep.sup_h, "S1_method": rep.s1_method}


def solve(model, contract: ContractParams, mode: str, tol: float = 1e-6) -> dict:
    """Solution document for one model/contract pair (no provenance)."""
    pair = make_eigenpair(model, contract.r)
    rep = check_sustainability(pair, contract)
    out = {"mode": mode, "sustainability": _sustainability_dict(rep)}
    if isinstance(model, ShiftedExpStack):
        shape = classify_stack_stopping_set(model, contract)
        out["stopping_set"] = {"shape": shape.tag, "branch": shape.branch}
        if shape.tag == EXCLUDED:
            out["result"] = {"case": "excluded"}
            return out
        sol = solve_stack(model, contract, lifetime=(mode == "lifetime"))
        check = verify_stopping_set(sol)
        out["stopping_set"].update(z_hat=sol.z_hat, z_hat0=sol.z_hat0, price_hat=float(model.price(sol.z_hat)),
                                   price_hat0=None if sol.z_hat0 is None else float(model.price(sol.z_hat0)),
                                   majorant_check=check.ok)
        out["result"] = sol.inner.to_dict()
        return out
    if mode == "single":
        sol = solve_single(pair, contract, require_sustainable=False)
    else:
        sol = lifetime_construct(pair, contract, require_sustainable=False)
        if math.isfinite(sol.y_star) and sol.x_check is not None:
            rep_v = lifetime_verify(pair, contract, sol.y_star, sol.x_check, tol)
            out["verification"] = {"maximality": rep_v.residual_maximality,
                                   "fixed_point": rep_v.residual_fixed_point, "tol": tol, "ok": rep_v.ok}
    out["result"] = sol.to_dict()
    return out


# ---------------------------------------------------------------- commands


def cmd_calibrate(args) -> int:
    if (args.lo is None) != (args.hi is None):
        raise UsageError("give both --lo and --hi or neither")
    if args.lo is not None and not args.lo < args.hi:
        raise UsageError(f"truncation bounds must satisfy lo < hi, got {args.lo} >= {args.hi}")
    series = cal.read_price_csv(args.input, delimiter=args.delimiter)
    if series.interval < cal.SECONDS_PER_DAY:
        series = cal.daily_average(series, args.min_coverage)
    if args.lo is not None:
        series = cal.truncate(series, args.lo, args.hi)
    # one observation per day, expressed in the requested unit
    dt = per_year(args.time_unit) / cal.DAYS_PER_YEAR
    fit = cal.fit_ou_mle(series, dt, time_unit=args.time_unit)
    doc = fit.to_dict()
    doc["model"] = {"type": "ou", "theta": fit.theta, "mu": fit.mu, "sigma": fit.sigma, "time_unit": args.time_unit}
    config = {"lo": args.lo, "hi": args.hi, "delimiter": args.delimiter, "min_coverage": args.min_coverage,
              "time_unit": args.time_unit}
    _emit(args, "calibrate", doc, config, {"input": args.input})
    return EXIT_OK


def cmd_value(args) -> int:
    model, contract, _, _ = _load_inputs(args, force=args.force)
    doc = solve(model, contract, args.mode, args.tol)
    doc.update(_resolved(model, contract, tol=args.tol))
    _emit(args, "value", doc, _resolved(model, contract, mode=args.mode, tol=args.tol, force=args.force),
          {"model": args.model, "contract": args.contract})
    return EXIT_OK


def _sweep_row(task):
    model_doc, cdict, axis, value, mode, x0, tol = task
    model = model_from_dict(model_doc, "year")
    row = {"x_star": cdict["x_star"], "p_c": cdict["p_c"], "K_c": cdict["K_c"],
           "total_premium": cdict["p_c"] + cdict["K_c"], axis: value}
    try:
        c = ContractParams(cdict["x_star"], cdict["p_c"], cdict["K_c"], cdict["r"], cdict["A"], strict=True)
    except ContractError:
        row["status"] = "excluded"
        return row
    pair = make_eigenpair(model, c.r)
    if axis == "threshold":
        xt = float(model.state(value))
        x = float(model.state(x0))
        row["value"] = threshold_policy_value(pair, c, xt, x) if x >= xt else math.nan
        row["status"] = "ok" if x >= xt else "excluded"
        return row
    if not check_sustainability(pair, c).ok:
        row["status"] = "excluded"
        return row
    try:
        res = solve(model, c, mode, tol)["result"]
    except (ContractError, LifetimeError) as exc:
        row["status"] = f"failed: {exc}"
        return row
    if res.get("value") == "infinite":
        row.update(y_star=math.inf, status="infinite")
        return row
    if mode == "lifetime":
        row.update(y_star=res["y_star"], price_check=res["price_check"], regime=res["regime"])
    else:
        row.update(y_star=res["value_at_x_star"], price_check=res.get("price_check"), regime=res["case"])
    row["status"] = "ok"
    return row


def cmd_sweep(args) -> int:
    grid = np.sort(parse_grid(args.grid))
    model, contract, _, _ = _load_inputs(args, force=True)
    x_stars = np.sort(parse_grid(args.x_star_grid)) if args.x_star_grid else np.array([contract.x_star])
    if args.axis == "x_star":
        x_stars = np.array([0.0])
    base_total = contract.total_premium
    base_split = contract.p_c / base_total if base_total > 0 else 0.0
    model_doc = model_to_dict(model)
    tasks = []
    for xs in x_stars:
        for v in grid:
            cd = {"x_star": contract.x_star, "p_c": contract.p_c, "K_c": contract.K_c, "r": contract.r, "A": contract.A}
            if args.axis != "x_star":
                cd["x_star"] = float(xs)
            if args.axis == "x_star":
                cd["x_star"] = float(v)
            elif args.axis == "total_premium":
                cd["p_c"], cd["K_c"] = base_split * v, (1.0 - base_split) * v
            elif args.axis == "split":
                if not 0 <= v <= 1:
                    raise UsageError("split values are fractions p_c/(p_c+K_c) in [0, 1]")
                cd["p_c"], cd["K_c"] = v * base_total, (1.0 - v) * base_total
            x0 = args.x0 if args.x0 is not None else cd["x_star"]
            tasks.append((model_doc, cd, args.axis, float(v), args.mode, x0, args.tol))
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as ex:
            rows = list(ex.map(_sweep_row, tasks))
    else:
        rows = [_sweep_row(t) for t in tasks]
    if args.axis == "threshold":
        fields = ["x_star", "p_c", "K_c", "total_premium", "threshold", "value", "status"]
    else:
        fields = ["x_star", "p_c", "K_c", "total_premium", "split", "y_star", "price_check", "regime", "status"]
        for r in rows:
            r["split"] = r["p_c"] / r["total_premium"] if r["total_premium"] > 0 else 0.0
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k)) for k in fields})
    config = _resolved(model, contract, axis=args.axis, grid=grid.tolist(), x_star_grid=x_stars.tolist(),
                       mode=args.mode, x0=args.x0, tol=args.tol)
    if args.output:
        Path(args.output).write_text(buf.getvalue())
        _write_manifest(args.output, "sweep", config, {"model": args.model, "contract": args.contract})
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))
    return v


def cmd_simulate(args) -> int:
    model, contract, _, _ = _load_inputs(args, force=args.force)
    k = per_year(args.time_unit)
    try:
        cfg = SimConfig(n_paths=args.n_paths, seed=args.seed, workers=args.workers,
                        dt=None if args.dt is None else args.dt / k,
                        horizon=None if args.horizon is None else args.horizon / k)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    pair = make_eigenpair(model, contract.r)
    x0 = contract.x_star if args.x0 is None else args.x0
    if args.mode == "single":
        sol = solve_single(pair, contract, require_sustainable=False)
        if sol.case != "A":
            raise ContractError(f"single-option case {sol.case} has no purchase threshold to simulate")
        threshold = sol.price_check if args.threshold is None else args.threshold
        analytic = float(sol.value_at(model.state(x0))) if x0 >= sol.price_check else None
        est = estimate_single_value(model, contract, threshold, x0, cfg)
    else:
        sol = lifetime_construct(pair, contract, require_sustainable=False)
        if sol.x_check is None:
            raise ContractError("lifetime solution has no purchase threshold to simulate")
        threshold = sol.price_check if args.threshold is None else args.threshold
        analytic = float(sol.value_at(model.state(x0))) if x0 >= sol.price_check else None
        est = estimate_lifetime_value(model, contract, threshold, x0, cfg)
    if args.reference is not None:
        analytic = args.reference
    if analytic is None:
        raise UsageError("start price lies below the optimal threshold; pass --reference")
    z = est.z_score(analytic)
    status = "ok" if abs(z) <= args.max_se else "disagree"
    table = (f"{'quantity':<22}{'value':>18}\n"
             f"{'threshold (price)':<22}{threshold:>18.6g}\n"
             f"{'analytic':<22}{analytic:>18.8g}\n"
             f"{'simulated':<22}{est.mean:>18.8g}\n"
             f"{'std. error':<22}{est.stderr:>18.4g}\n"
             f"{'difference / SE':<22}{z:>18.3f}\n"
             f"{'truncation bound':<22}{est.truncation_bias_bound:>18.3g}\n")
    sys.stderr.write(table)
    doc = {"mode": args.mode, "threshold": threshold, "x0": x0, "analytic": analytic, "z_score": z,
           "status": status, "estimate": est.to_dict()}
    doc.update(_resolved(model, contract, n_paths=args.n_paths, seed=args.seed, max_se=args.max_se))
    _emit(args, "simulate", doc, doc["numeric"] | {"model": doc["model"], "contract": doc["contract"]},
          {"model": args.model, "contract": args.contract})
    return EXIT_OK if status == "ok" else EXIT_VALIDATION


def cmd_verify(args) -> int:
    doc = load_json(args.solution)
    try:
        model = model_from_dict(doc["model"], "year")
        cd = doc["contract"]
        contract = ContractParams(cd["x_star"], cd["p_c"], cd["K_c"], cd["rate"], cd.get("A", 0.9999), strict=False)
        res = doc["result"]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{args.solution}: not a value output ({exc})") from None
    if res.get("value") == "infinite":
        sys.stdout.write(dumps({"ok": True, "note": "infinite value, nothing to verify"}))
        return EXIT_OK
    if "y_star" not in res or res.get("x_check") is None:
        raise ConfigError(f"{args.solution}: verification needs a lifetime solution with a purchase threshold")
    pair = make_eigenpair(model, contract.r)
    rep = lifetime_verify(pair, contract, float(res["y_star"]), float(res["x_check"]), args.tol)
    sys.stdout.write(dumps({"ok": rep.ok, "maximality": rep.residual_maximality,
                            "fixed_point": rep.residual_fixed_point, "tol": rep.tol, "x_best": rep.x_best}))
    return EXIT_OK if rep.ok else EXIT_VALIDATION


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=12345, help="random seed for simulation")
    common.add_argument("--time-unit", choices=("day", "year"), default="day",
                        help="unit of rates in inputs without a time_unit field (default: day)")
    common.add_argument("--tol", type=float, default=1e-6, help="relative verification tolerance")

    p = _Parser(prog="eimstore", description="Optimal purchase timing for energy storage backing balancing options.",
                epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter, parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("calibrate", parents=[common], help="fit an OU model to a price CSV", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    s.add_argument("--input", required=True)
    s.add_argument("--lo", type=float, help="lower truncation bound")
    s.add_argument("--hi", type=float, help="upper truncation bound")
    s.add_argument("--delimiter", default=",")
    s.add_argument("--min-coverage", type=float, default=0.5, help="fraction of intraday slots a day needs")
    s.add_argument("--output")
    s.set_defaults(func=cmd_calibrate)

    def model_args(q):
        q.add_argument("--model", required=True, help="model JSON")
        q.add_argument("--contract", required=True, help="contract JSON")

    s = sub.add_parser("value", parents=[common], help="solve the single or lifetime problem", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    model_args(s)
    s.add_argument("--mode", choices=("single", "lifetime"), default="lifetime")
    s.add_argument("--force", action="store_true", help="value contracts with p_c + K_c >= x_star")
    s.add_argument("--output")
    s.set_defaults(func=cmd_value)

    s = sub.add_parser("sweep", parents=[common], help="tabulate solutions over a parameter grid", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    model_args(s)
    s.add_argument("--axis", choices=SWEEP_AXES, required=True)
    s.add_argument("--grid", required=True, help="'a,b,c' or 'start:stop:num'")
    s.add_argument("--x-star-grid", help="second axis of exercise levels (not for axis x_star)")
    s.add_argument("--mode", choices=("single", "lifetime"), default="lifetime")
    s.add_argument("--x0", type=float, help="evaluation price for the threshold axis (default x_star)")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--output")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo check of a threshold policy", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    model_args(s)
    s.add_argument("--mode", choices=("single", "lifetime"), default="single")
    s.add_argument("--threshold", type=float, help="purchase price to simulate (default: optimal)")
    s.add_argument("--reference", type=float, help="value to compare against (default: analytic optimum)")
    s.add_argument("--x0", type=float, help="start price (default x_star)")
    s.add_argument("--n-paths", type=int, default=200_000)
    s.add_argument("--dt", type=float, help="time step in --time-unit")
    s.add_argument("--horizon", type=float, help="truncation horizon in --time-unit")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--max-se", type=float, default=5.0, help="disagreement in SE that signals failure")
    s.add_argument("--force", action="store_true")
    s.add_argument("--output")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("verify", parents=[common], help="check a lifetime solution file", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    s.add_argument("--solution", required=True, help="output of 'value --mode lifetime'")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (cal.DataError, ConfigError, ContractError, ModelError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
