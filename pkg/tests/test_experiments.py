import argparse
import json
import math

import pytest

from decpep import cli
from decpep.experiments import (
    AlphaSearch,
    ConfigError,
    ExperimentConfig,
    bound_at,
    compare_methods,
    optimize_alpha,
    plot_svg,
    rows_to_csv,
    run_sweep,
    sweep_series,
)


def test_parse_grid():
    assert cli.parse_grid("0:0.1:0.9") == tuple(round(0.1 * i, 12) for i in range(10))
    assert cli.parse_grid("0.3,0.6,0.9") == (0.3, 0.6, 0.9)
    assert cli.parse_grid("0.5:0.5:0.5") == (0.5,)
    with pytest.raises(argparse.ArgumentTypeError):
        cli.parse_grid("0:0:1")
    with pytest.raises(argparse.ArgumentTypeError):
        cli.parse_alpha("fast")


def test_config_defaults_by_method():
    dgd = ExperimentConfig().resolved()
    assert (dgd.function_class, dgd.criterion, dgd.init) == ("bounded-subgradient", "fval-gap-avg", "consensus")
    assert dgd.alpha == pytest.approx(10 ** -0.5)
    dig = ExperimentConfig(method="diging", D=2.0).resolved()
    assert (dig.function_class, dig.criterion, dig.init, dig.alpha) == (
        "smooth-strongly-convex", "msd-last", "msd", "optimize")
    assert dig.S == 2.0
    assert dig.setting(0.1).gradient_spread.S == 2.0


@pytest.mark.parametrize(
    "bad",
    [
        {"method": "admm"},
        {"lambda_grid": [1.0]},
        {"lambda_grid": []},
        {"K": 0},
        {"alpha": -1.0},
        {"method": "diging", "mu": 2.0},
        {"matrix_mode": "random"},
        {"colour": "red"},
    ],
)
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_bound_at_row_fields():
    row = bound_at(ExperimentConfig(K=3).resolved(), 0.5, 3 ** -0.5)
    assert row.ok and row.bound > 0
    assert (row.n_par, row.n_perp, row.lmi_sizes) == (6, 8, "3 3 3")
    assert row.primal_infeas < 1e-6


def test_sweep_csv_is_deterministic():
    cfg = ExperimentConfig(K=3, lambda_grid=(0.0, 0.5)).resolved()
    a, b = rows_to_csv(run_sweep(cfg)), rows_to_csv(run_sweep(cfg))
    assert a == b
    assert "wall_time" not in a.splitlines()[0]
    assert "wall_time" in rows_to_csv(run_sweep(cfg), timing=True).splitlines()[0]


def test_optimize_alpha_returns_best_evaluated():
    cfg = ExperimentConfig(method="diging", K=3, alpha_search=AlphaSearch(grid=7, refine=6)).resolved()
    res = optimize_alpha(cfg, 0.5)
    best = min(b for _, b in res.evaluated)
    assert res.bound == best
    assert res.row.alpha == res.alpha
    assert len(res.evaluated) > 7
    lo, hi = cfg.alpha_bounds
    assert lo <= res.alpha <= hi


def test_compare_requires_common_grid_and_criterion():
    a = ExperimentConfig(method="diging", K=2, alpha=0.3, lambda_grid=(0.5,))
    with pytest.raises(ConfigError):
        compare_methods([a, a.with_(lambda_grid=(0.4,))])
    with pytest.raises(ConfigError):
        compare_methods([a, a.with_(method="dgd", alpha=0.3, criterion=None, init=None, function_class=None)])
    cmp = compare_methods([a, a.with_(method="extra")])
    assert not cmp.failed
    assert cmp.to_csv().splitlines()[0].startswith("lam,")


def test_svg_is_deterministic(tmp_path):
    rows = run_sweep(ExperimentConfig(K=2, lambda_grid=(0.0, 0.5)).resolved())
    p1, p2 = tmp_path / "a.svg", tmp_path / "b.svg"
    plot_svg({"dgd": sweep_series(rows)}, str(p1), log_scale=True, shift=0.0)
    plot_svg({"dgd": sweep_series(rows)}, str(p2), log_scale=True, shift=0.0)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_text().lstrip().startswith("<?xml")


def test_cli_single_lambda(capsys):
    assert cli.main(["sweep", "--K", "2", "--lambda", "0.5"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and lines[1].startswith("0.5,")


def test_cli_outputs_byte_identical(tmp_path):
    outs = []
    for name in ("a.csv", "b.csv"):
        p = tmp_path / name
        assert cli.main(["sweep", "--K", "3", "--lambda-grid", "0:0.3:0.9", "--out", str(p),
                         "--svg", str(p.with_suffix(".svg"))]) == 0
        outs.append((p.read_bytes(), p.with_suffix(".svg").read_bytes()))
    assert outs[0] == outs[1]
    assert len(outs[0][0].decode().splitlines()) == 5


def test_cli_nonzero_exit_on_failed_row(capsys):
    assert cli.main(["sweep", "--K", "2", "--lambda", "0.5", "--solver", "cvxpy:NOT_A_SOLVER"]) == 1
    out = capsys.readouterr().out
    assert "solver-failure" in out and "nan" in out


def test_cli_flags_override_json(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"method": "dgd", "K": 5, "lambda_grid": [0.1, 0.2]}))
    assert cli.main(["sweep", "--config", str(cfg), "--K", "2", "--lambda", "0.5"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    assert lines[1].split(",")[1] == repr(2 ** -0.5)


def test_cli_rejects_bad_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"lambda_grid": [1.5]}))
    with pytest.raises(SystemExit) as exc:
        cli.main(["sweep", "--config", str(cfg)])
    assert exc.value.code == 2


def test_cli_compare_and_optimize(capsys):
    assert cli.main(["compare", "--K", "2", "--lambda", "0.5", "--alpha", "0.3",
                     "--methods", "diging,extra:time-varying"]) == 0
    out = capsys.readouterr().out
    assert "diging-constant" in out and "extra-time-varying" in out
    assert cli.main(["optimize-alpha", "--method", "extra", "--K", "2", "--lambda", "0.5"]) == 0
    lam, alpha, bound, status, n = capsys.readouterr().out.strip().splitlines()[1].split(",")
    assert status == "optimal" and math.isfinite(float(bound)) and int(n) > 25


def test_cli_verify_small(capsys):
    assert cli.main(["verify", "--K", "2", "--instances", "6", "--oracle-K", "2",
                     "--lambda-grid", "0.5"]) == 0
    out = capsys.readouterr().out
    assert "6/6" in out and "ok" in out
