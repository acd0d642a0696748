"""Batch command-line front end.

Commands: ``price``, ``hedge``, ``shortfall``, ``convergence``.  Config is a
JSON file; reports are JSON, experiment tables are CSV.  Exit codes:
0 success, 2 config/validation error, 3 experiment abort (too many
truncated paths).  All floats are serialized with 17 significant digits so
identical configs and seeds produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .model import (
    MarketParams, make_step_model, build_stock_lattice, payoff_lattices,
    game_put, game_call,
)
from .dynkin import (
    game_value, american_value, rational_stopping, one_sided_envelope,
    brute_force_value,
)
from .hedging import build_hedge_plan, verify_superhedge
from .embedding import (
    TruncationError, run_shortfall_experiment, shortfall_csv,
)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Serialization: floats at 17 significant digits for reproducible diffs
# ---------------------------------------------------------------------------


def dumps17(obj, indent: int = 2) -> str:
    def render(o, depth):
        pad = " " * (indent * depth)
        pad_in = " " * (indent * (depth + 1))
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f'{pad_in}"{k}": {render(v, depth + 1)}' for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + pad + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            items = [f"{pad_in}{render(v, depth + 1)}" for v in o]
            return "[\n" + ",\n".join(items) + "\n" + pad + "]"
        if isinstance(o, bool):
            return "true" if o else "false"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            x = float(o)
            if math.isnan(x):
                return '"nan"'
            if math.isinf(x):
                return '"inf"' if x > 0 else '"-inf"'
            return f"{x:.17g}"
        if o is None:
            return "null"
        return json.dumps(str(o))

    return render(obj, 0) + "\n"


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def _require(d: dict, key: str, section: str):
    if key not in d:
        raise ConfigError(f"missing '{key}' in config section '{section}'")
    return d[key]


def load_config(path: str, seed_override=None) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    mkt = _require(raw, "market", "top-level")
    try:
        market = MarketParams(
            r=float(_require(mkt, "r", "market")),
            kappa=float(_require(mkt, "kappa", "market")),
            T=float(_require(mkt, "T", "market")),
            z=float(_require(mkt, "z", "market")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    pay = _require(raw, "payoff", "top-level")
    kind = _require(pay, "kind", "payoff")
    strike = float(_require(pay, "strike", "payoff"))
    penalty = float(pay.get("penalty", 0.0))
    if kind == "put":
        spec = game_put(strike, penalty)
    elif kind == "call":
        spec = game_call(strike, penalty)
    else:
        raise ConfigError(f"payoff kind must be 'put' or 'call', got {kind!r}")

    lat = raw.get("lattice", {})
    n = lat.get("n")
    n_list = lat.get("n_list")
    if n_list is not None:
        n_list = [int(v) for v in n_list]
        if any(v < 1 for v in n_list):
            raise ConfigError("n_list entries must be >= 1")
        if sorted(set(n_list)) != n_list:
            raise ConfigError("n_list must be sorted ascending and distinct")
    if n is not None and int(n) < 1:
        raise ConfigError("n must be >= 1")

    mc = raw.get("mc", {})
    seed = int(mc.get("seed", 0))
    env_seed = os.environ.get("GAMEHEDGE_SEED")
    if env_seed is not None:
        seed = int(env_seed)
    if seed_override is not None:
        seed = int(seed_override)

    return {
        "market": market,
        "payoff": spec,
        "payoff_desc": {"kind": kind, "strike": strike, "penalty": penalty},
        "n": int(n) if n is not None else None,
        "n_list": n_list,
        "mc_N": int(mc.get("N", 10000)),
        "mc_m": int(mc.get("m", 4096)),
        "seed": seed,
        "raw": raw,
    }


def _resolved_config(cfg: dict, args) -> dict:
    m = cfg["market"]
    return {
        "market": {"r": m.r, "kappa": m.kappa, "T": m.T, "z": m.z},
        "payoff": cfg["payoff_desc"],
        "lattice": {"n": cfg["n"], "n_list": cfg["n_list"]},
        "mc": {"N": cfg["mc_N"], "m": cfg["mc_m"], "seed": cfg["seed"]},
        "verify": bool(args.verify),
    }


def _lattice_bundle(cfg: dict, n: int):
    step = make_step_model(cfg["market"], n)
    lat = build_stock_lattice(step, cfg["market"])
    yhat, xhat = payoff_lattices(cfg["payoff"], lat, step)
    return step, lat, yhat, xhat


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_price(cfg: dict, args) -> dict:
    n = cfg["n"]
    if n is None:
        raise ConfigError("price requires lattice.n")
    step, lat, yhat, xhat = _lattice_bundle(cfg, n)
    v = game_value(yhat, xhat, step)
    zeta, nu = rational_stopping(v, yhat, xhat, tol=1e-9 * cfg["market"].z)
    amer = american_value(yhat, step)
    sandwich = True
    for k in range(n + 1):
        hi = xhat[k] if k < n else yhat[k]
        if np.any(v.values[k] < yhat[k] - 1e-12) or np.any(v.values[k] > hi + 1e-12):
            sandwich = False
    report = {
        "config": _resolved_config(cfg, args),
        "price": v.root,
        "american_price": amer.root,
        "immediate_exercise": float(yhat[0][0]),
        "immediate_cancellation": float(xhat[0][0]),
        "sandwich_ok": sandwich,
        "canceller_earliest_stop": min(
            (k for k in range(n + 1) if np.any(zeta.stop[k])), default=n
        ),
        "holder_earliest_stop": min(
            (k for k in range(n + 1) if np.any(nu.stop[k])), default=n
        ),
    }
    if args.verify:
        if n > 4:
            raise ConfigError("--verify price requires n <= 4 (full enumeration)")
        bf = brute_force_value(yhat, xhat, step)
        report["verify"] = {
            "brute_force_upper": bf.upper,
            "brute_force_lower": bf.lower,
            "saddle_gap": bf.saddle_gap,
            "matches": abs(bf.upper - v.root) <= 1e-12 * max(1.0, abs(v.root)),
        }
    return report


def cmd_hedge(cfg: dict, args) -> dict:
    n = cfg["n"]
    if n is None:
        raise ConfigError("hedge requires lattice.n")
    step, lat, yhat, xhat = _lattice_bundle(cfg, n)
    v = game_value(yhat, xhat, step)
    zeta, _ = rational_stopping(v, yhat, xhat, tol=1e-9 * cfg["market"].z)
    u = one_sided_envelope(zeta, yhat, xhat, step)
    plan = build_hedge_plan(u, lat, step)
    decomp = plan.decomposition

    # exact-identity residuals over every node/branch
    rep_res = 0.0
    sf_res = 0.0
    ekh = (1.0 + step.up_return) / (1.0 + step.step_rate)
    for k in range(n):
        a = plan.alpha[k]
        rep_res = max(rep_res, float(np.max(np.abs(
            decomp.dm_up[k] - a * (step.up_return - step.step_rate)))))
        rep_res = max(rep_res, float(np.max(np.abs(
            decomp.dm_down[k] - a * (step.down_return - step.step_rate)))))
        dsh_up = lat.discounted[k + 1][1:] - lat.discounted[k]
        dsh_dn = lat.discounted[k + 1][:-1] - lat.discounted[k]
        sf_res = max(sf_res, float(np.max(np.abs(
            decomp.dm_up[k] - plan.gamma[k] * dsh_up))))
        sf_res = max(sf_res, float(np.max(np.abs(
            decomp.dm_down[k] - plan.gamma[k] * dsh_dn))))
    audit = verify_superhedge(plan, u, yhat, xhat, zeta)
    scale = max(1.0, cfg["market"].z)
    report = {
        "config": _resolved_config(cfg, args),
        "initial_capital": plan.initial_capital,
        "price": v.root,
        "max_abs_gamma": plan.max_abs_gamma,
        "gamma_bound": 2.0 * cfg["payoff"].lipschitz_C,
        "gamma_bound_ok": plan.max_abs_gamma <= 2.0 * cfg["payoff"].lipschitz_C + 1e-12,
        "representation_residual": rep_res,
        "self_financing_residual": sf_res,
        "martingale_residual": audit.martingale_residual,
        "superhedge_worst_margin": audit.worst_margin,
        "min_compensator_step": audit.min_compensator_step,
        "doob_ok": audit.ok,
        "residuals_ok": rep_res <= 1e-12 * scale and sf_res <= 1e-12 * scale,
    }
    if args.verify:
        if n > 4:
            raise ConfigError("--verify hedge requires n <= 4 (full enumeration)")
        from .hedging import exhaustive_superhedge_margin
        worst = exhaustive_superhedge_margin(plan, yhat, xhat, zeta)
        report["verify"] = {
            "exhaustive_worst_margin": worst,
            "ok": worst >= -1e-12 * cfg["market"].z,
        }
    return report


def cmd_shortfall(cfg: dict, args, out_dir: Path) -> dict:
    n_list = cfg["n_list"]
    if not n_list:
        raise ConfigError("shortfall requires lattice.n_list")
    report = run_shortfall_experiment(
        cfg["payoff"], cfg["market"], n_list, cfg["mc_N"], cfg["mc_m"],
        cfg["seed"],
    )
    csv_text = shortfall_csv(report)
    (out_dir / "shortfall.csv").write_text(csv_text)
    summary = {
        "config": _resolved_config(cfg, args),
        "slope_fit": report.slope_fit,
        "c_fit": report.c_fit,
        "rows": [
            {
                "n": row.n, "N": row.N, "mean_psi": row.mean_psi,
                "se_psi": row.se_psi, "c_fit": row.c_fit,
                "gap_max": row.gap_max, "gap_se": row.gap_se,
                "truncated_paths": row.truncated_paths,
            }
            for row in report.rows
        ],
        "gaps": {
            str(n): [{"tau": g.label, "mean": g.mean, "se": g.se} for g in gs]
            for n, gs in report.gaps.items()
        },
    }
    return summary


def cmd_convergence(cfg: dict, args, out_dir: Path) -> dict:
    n_list = cfg["n_list"]
    if not n_list or len(n_list) < 3:
        raise ConfigError("convergence requires lattice.n_list with >= 3 entries")
    prices = []
    for n in n_list:
        step, lat, yhat, xhat = _lattice_bundle(cfg, n)
        prices.append(game_value(yhat, xhat, step).root)
    lines = ["n,price,diff_to_next,ratio"]
    for i, (n, p) in enumerate(zip(n_list, prices)):
        if i + 1 < len(prices):
            diff = prices[i + 1] - p
            ratio = (prices[i + 1] - p) / (prices[i] - prices[i - 1]) if i >= 1 and prices[i] != prices[i - 1] else math.nan
        else:
            diff, ratio = math.nan, math.nan
        lines.append(f"{n},{p:.17g},{diff:.17g},{ratio:.17g}")
    (out_dir / "convergence.csv").write_text("\n".join(lines) + "\n")
    return {
        "config": _resolved_config(cfg, args),
        "n_list": n_list,
        "prices": prices,
    }


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gamehedge",
        description="Game-option pricing, hedging audits and shortfall experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("price", "hedge", "shortfall", "convergence"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument(
            "--threads", type=int,
            default=int(os.environ.get("GAMEHEDGE_THREADS", "1")),
            help="worker threads (results are thread-count independent)",
        )
        p.add_argument("--verify", action="store_true",
                       help="run the expensive brute-force oracles (n <= 4)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "price":
            report = cmd_price(cfg, args)
            out_file = out_dir / "price.json"
        elif args.command == "hedge":
            report = cmd_hedge(cfg, args)
            out_file = out_dir / "hedge.json"
        elif args.command == "shortfall":
            report = cmd_shortfall(cfg, args, out_dir)
            out_file = out_dir / "shortfall.json"
        else:
            report = cmd_convergence(cfg, args, out_dir)
            out_file = out_dir / "convergence.json"
    except (ConfigError, ValueError) as exc:
        sys.stdout.write(dumps17({"error": str(exc)}))
        return 2
    except TruncationError as exc:
        sys.stdout.write(dumps17({"error": str(exc), "abort": True}))
        return 3
    text = dumps17(report)
    out_file.write_text(text)
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
