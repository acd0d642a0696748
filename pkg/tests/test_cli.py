import json
import math
import os

import numpy as np
import pytest

from gamehedge import MarketParams, game_put, game_value, american_value
from gamehedge.cli import ConfigError, dumps17, load_config, main

from conftest import BENCH, build_bundle


def write_config(tmp_path, name="cfg.json", **overrides):
    cfg = {
        "market": {"r": 0.06, "kappa": 0.2, "T": 1.0, "z": 100.0},
        "payoff": {"kind": "put", "strike": 110.0, "penalty": 2.0},
        "lattice": {"n": 8, "n_list": [8, 16]},
        "mc": {"N": 150, "m": 512, "seed": 4},
    }
    for key, val in overrides.items():
        if val is None:
            cfg.pop(key, None)
        else:
            cfg[key] = val
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def run(args):
    return main([str(a) for a in args])


def test_dumps17_round_trips_floats():
    x = 0.1 + 0.2
    text = dumps17({"v": x, "i": 3, "flag": True, "none": None,
                    "bad": math.nan, "inf": math.inf, "arr": [1.5, x]})
    parsed = json.loads(text)
    assert parsed["v"] == x
    assert parsed["arr"][1] == x
    assert parsed["bad"] == "nan" and parsed["inf"] == "inf"
    assert parsed["flag"] is True and parsed["none"] is None


def test_load_config_and_seed_precedence(tmp_path, monkeypatch):
    cfg_file = write_config(tmp_path)
    cfg = load_config(str(cfg_file))
    assert cfg["seed"] == 4
    monkeypatch.setenv("GAMEHEDGE_SEED", "99")
    assert load_config(str(cfg_file))["seed"] == 99
    assert load_config(str(cfg_file), seed_override=7)["seed"] == 7


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(bad))
    with pytest.raises(ConfigError):
        load_config(str(write_config(tmp_path, "m.json", market=None)))
    with pytest.raises(ConfigError):
        load_config(str(write_config(
            tmp_path, "k.json",
            payoff={"kind": "lookback", "strike": 1.0},
        )))
    with pytest.raises(ConfigError):
        load_config(str(write_config(
            tmp_path, "u.json", lattice={"n_list": [16, 8]},
        )))


def test_price_command(tmp_path, capsys):
    cfg_file = write_config(tmp_path)
    out = tmp_path / "out"
    assert run(["price", "--config", cfg_file, "--out", out]) == 0
    report = json.loads((out / "price.json").read_text())
    params = MarketParams(**BENCH)
    step, lat, yhat, xhat = build_bundle(params, game_put(110.0, 2.0), 8)
    assert report["price"] == pytest.approx(game_value(yhat, xhat, step).root, rel=1e-15)
    assert report["american_price"] == pytest.approx(american_value(yhat, step).root, rel=1e-15)
    assert report["sandwich_ok"] is True
    assert report["config"]["lattice"]["n"] == 8
    # stdout carries the same JSON
    assert json.loads(capsys.readouterr().out)["price"] == report["price"]


def test_price_verify_small_n(tmp_path):
    cfg_file = write_config(tmp_path, lattice={"n": 3})
    out = tmp_path / "out"
    assert run(["price", "--config", cfg_file, "--out", out, "--verify"]) == 0
    report = json.loads((out / "price.json").read_text())
    assert report["verify"]["matches"] is True
    assert report["verify"]["saddle_gap"] <= 1e-10


def test_price_verify_rejects_large_n(tmp_path, capsys):
    cfg_file = write_config(tmp_path, lattice={"n": 10})
    assert run(["price", "--config", cfg_file, "--out", tmp_path, "--verify"]) == 2
    assert "error" in json.loads(capsys.readouterr().out)


def test_hedge_command(tmp_path):
    cfg_file = write_config(tmp_path, lattice={"n": 64})
    out = tmp_path / "out"
    assert run(["hedge", "--config", cfg_file, "--out", out]) == 0
    report = json.loads((out / "hedge.json").read_text())
    assert report["gamma_bound_ok"] is True
    assert report["max_abs_gamma"] <= 2.0
    assert report["representation_residual"] <= 1e-10
    assert report["self_financing_residual"] <= 1e-10
    assert report["martingale_residual"] <= 1e-10
    assert report["doob_ok"] is True
    assert report["residuals_ok"] is True
    assert report["initial_capital"] == pytest.approx(report["price"], abs=1e-9)


def test_hedge_verify_exhaustive(tmp_path):
    cfg_file = write_config(tmp_path, lattice={"n": 4})
    out = tmp_path / "out"
    assert run(["hedge", "--config", cfg_file, "--out", out, "--verify"]) == 0
    report = json.loads((out / "hedge.json").read_text())
    assert report["verify"]["ok"] is True
    assert report["verify"]["exhaustive_worst_margin"] >= -1e-10


def test_shortfall_command_outputs(tmp_path):
    cfg_file = write_config(tmp_path)
    out = tmp_path / "out"
    assert run(["shortfall", "--config", cfg_file, "--out", out]) == 0
    csv_lines = (out / "shortfall.csv").read_text().strip().split("\n")
    assert csv_lines[0].startswith("n,N,mean_psi")
    assert len(csv_lines) == 3
    report = json.loads((out / "shortfall.json").read_text())
    assert [row["n"] for row in report["rows"]] == [8, 16]
    assert len(report["gaps"]["8"]) == 21
    for row in report["rows"]:
        assert row["truncated_paths"] <= 1


def test_shortfall_outputs_thread_count_invariant(tmp_path):
    """Byte-identical CSV and JSON regardless of the worker-thread setting."""
    cfg_file = write_config(tmp_path)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert run(["shortfall", "--config", cfg_file, "--out", out1, "--threads", "1"]) == 0
    assert run(["shortfall", "--config", cfg_file, "--out", out2, "--threads", "4"]) == 0
    assert (out1 / "shortfall.csv").read_bytes() == (out2 / "shortfall.csv").read_bytes()
    assert (out1 / "shortfall.json").read_bytes() == (out2 / "shortfall.json").read_bytes()


def test_shortfall_seed_changes_results(tmp_path):
    cfg_file = write_config(tmp_path)
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert run(["shortfall", "--config", cfg_file, "--out", out1]) == 0
    assert run(["shortfall", "--config", cfg_file, "--out", out2, "--seed", "123"]) == 0
    assert (out1 / "shortfall.csv").read_text() != (out2 / "shortfall.csv").read_text()


def test_shortfall_truncation_exit_code(tmp_path, capsys):
    """An n too deep for the simulation grid aborts with exit code 3."""
    cfg_file = write_config(
        tmp_path,
        lattice={"n_list": [8, 2048]},
        mc={"N": 150, "m": 512, "seed": 4},
    )
    with pytest.warns(UserWarning):
        code = run(["shortfall", "--config", cfg_file, "--out", tmp_path])
    assert code == 3
    out = json.loads(capsys.readouterr().out)
    assert out["abort"] is True


def test_convergence_command(tmp_path):
    cfg_file = write_config(tmp_path, lattice={"n_list": [16, 64, 256]})
    out = tmp_path / "out"
    assert run(["convergence", "--config", cfg_file, "--out", out]) == 0
    lines = (out / "convergence.csv").read_text().strip().split("\n")
    assert lines[0] == "n,price,diff_to_next,ratio"
    assert len(lines) == 4
    report = json.loads((out / "convergence.json").read_text())
    # prices approach a fine-lattice reference monotonically in error
    params = MarketParams(**BENCH)
    step, lat, yhat, xhat = build_bundle(params, game_put(110.0, 2.0), 2048)
    ref = game_value(yhat, xhat, step).root
    errs = [abs(p - ref) for p in report["prices"]]
    assert errs[0] > errs[1] > errs[2]


def test_convergence_requires_three_lattices(tmp_path, capsys):
    cfg_file = write_config(tmp_path, lattice={"n_list": [8, 16]})
    assert run(["convergence", "--config", cfg_file, "--out", tmp_path]) == 2
    assert "error" in json.loads(capsys.readouterr().out)


def test_missing_n_is_config_error(tmp_path, capsys):
    cfg_file = write_config(tmp_path, lattice={"n_list": [8, 16]})
    assert run(["price", "--config", cfg_file, "--out", tmp_path]) == 2
    capsys.readouterr()


def test_threads_env_default(tmp_path, monkeypatch):
    from gamehedge.cli import build_parser

    monkeypatch.setenv("GAMEHEDGE_THREADS", "6")
    args = build_parser().parse_args(["price", "--config", "x.json"])
    assert args.threads == 6
