"""Command line entry point: ``decpep sweep | optimize-alpha | compare | verify``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import fields

import numpy as np

from .experiments import (
    ConfigError,
    ExperimentConfig,
    compare_methods,
    optimize_alpha,
    plot_svg,
    rows_to_csv,
    run_sweep,
    sweep_series,
    write_text,
)
from .solvers import PEPError

log = logging.getLogger("decpep")


def parse_grid(text: str) -> tuple[float, ...]:
    """``"0:0.1:0.9"`` (inclusive) or ``"0.3,0.6,0.9"``."""
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[1] <= 0:
            raise argparse.ArgumentTypeError("range grid must be start:step:stop with step > 0")
        lo, step, hi = parts
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return tuple(round(lo + i * step, 12) for i in range(n))
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def parse_alpha(text: str):
    if text == "optimize":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("alpha must be a number or 'optimize'") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--method", choices=["dgd", "diging", "extra"])
    p.add_argument("--K", type=int)
    p.add_argument("--lambda", dest="lam", type=float, help="single lambda (range [-lambda, lambda])")
    p.add_argument("--lambda-grid", type=parse_grid, help="start:step:stop or comma list")
    p.add_argument("--class", dest="function_class", choices=["bounded-subgradient", "smooth-strongly-convex"])
    p.add_argument("--mu", type=float)
    p.add_argument("--L", type=float)
    p.add_argument("--R", type=float)
    p.add_argument("--D", type=float)
    p.add_argument("--S", type=float, help="bound on the spread of local gradients at x0 (smooth class)")
    p.add_argument("--alpha", type=parse_alpha, help="step size or 'optimize'")
    p.add_argument("--matrix-mode", choices=["constant", "time-varying"])
    p.add_argument("--diging-grouping", choices=["iteration", "step"])
    p.add_argument("--criterion", choices=["fval-gap-avg", "msd-last"])
    p.add_argument("--init", choices=["consensus", "msd"])
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("--svg", help="SVG plot path")
    p.add_argument("--log", dest="log_scale", action="store_true", default=None, help="log-scale y axis")
    p.add_argument("--shift", type=float, help="plot bound - shift on a log axis")
    p.add_argument("--timing", action="store_true", default=None, help="add a wall_time column")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--solver", help="clarabel, cvxpy or cvxpy:<SOLVER>")
    p.add_argument("--solver-tol", type=float)
    p.add_argument("-v", "--verbose", action="store_true")


_FLAG_KEYS = {f.name for f in fields(ExperimentConfig)}


def raw_config(args: argparse.Namespace) -> dict:
    base = {}
    if args.config:
        import json

        with open(args.config, encoding="utf-8") as fh:
            base = json.load(fh)
    for k, v in vars(args).items():
        if v is None or k not in _FLAG_KEYS:
            continue
        base[k] = v
    if getattr(args, "lam", None) is not None:
        base["lambda_grid"] = (args.lam,)
    return base


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    return ExperimentConfig.from_dict(raw_config(args))


def _emit(text: str, path: str | None) -> None:
    if path:
        write_text(path, text)
    else:
        sys.stdout.write(text)


def cmd_sweep(args) -> int:
    cfg = config_from_args(args)
    rows = run_sweep(cfg)
    _emit(rows_to_csv(rows, timing=cfg.timing), cfg.out)
    if cfg.svg:
        ok = [r for r in rows if r.ok]
        plot_svg({cfg.label: sweep_series(ok)}, cfg.svg, cfg.log_scale, cfg.shift)
    failed = [r for r in rows if not r.ok]
    for r in failed:
        log.error("lambda=%s: %s %s", r.lam, r.status, r.error)
    return 1 if failed else 0


def cmd_optimize_alpha(args) -> int:
    cfg = config_from_args(args).with_(alpha="optimize")
    lines = ["lam,alpha,bound,status,evaluations"]
    status = 0
    for lam in cfg.lambda_grid:
        try:
            res = optimize_alpha(cfg, lam)
            lines.append(f"{lam!r},{res.alpha!r},{res.bound!r},{res.row.status},{len(res.evaluated)}")
        except PEPError as exc:
            log.error("lambda=%s: %s", lam, exc)
            lines.append(f"{lam!r},nan,nan,solver-failure,0")
            status = 1
    _emit("\n".join(lines) + "\n", cfg.out)
    return status


def cmd_compare(args) -> int:
    raw = raw_config(args)
    configs = []
    for spec in args.methods.split(","):
        method, _, mode = spec.strip().partition(":")
        d = dict(raw, method=method)
        if mode:
            d["matrix_mode"] = mode
        configs.append(ExperimentConfig.from_dict(d))
    cfg = configs[0]
    cmp = compare_methods(configs)
    _emit(cmp.to_csv(), cfg.out)
    if cfg.svg:
        series = {lab: sweep_series([r for r in cmp.rows[lab] if r.ok]) for lab in cmp.labels}
        plot_svg(series, cfg.svg, cfg.log_scale, cfg.shift)
    return 1 if cmp.failed else 0


def cmd_verify(args) -> int:
    from .verification import scalar_oracle, soundness_sweep

    raw = raw_config(args)
    raw.setdefault("lambda_grid", (0.3, 0.6, 0.9))
    cfg = ExperimentConfig.from_dict(raw)
    status = 0
    if not args.skip_soundness:
        settings = []
        for method in ("dgd", "diging", "extra"):
            c = cfg.with_(method=method, function_class=None, criterion=None, init=None, alpha=None)
            alpha = c.alpha if method == "dgd" else args.smooth_alpha
            settings.append(c.setting(alpha))
        recs = soundness_sweep(settings, lams=cfg.lambda_grid, n_instances=args.instances,
                               seed=cfg.seed)
        bad = [r for r in recs if not r.ok]
        print(f"soundness: {len(recs) - len(bad)}/{len(recs)} instances below the bound")
        for r in bad:
            print(f"  VIOLATION seed={r.seed} {r.method} {r.matrix_mode} N={r.N} d={r.d} "
                  f"lam={r.lam}: {r.simulated!r} > {r.bound!r}")
        status |= bool(bad)
    if not args.skip_oracle:
        c = cfg.with_(method="dgd", K=args.oracle_K, function_class=None, criterion=None,
                      init=None, alpha=None, matrix_mode="constant")
        setting = c.setting(c.alpha)
        from .analysis import worst_case

        for lam in cfg.lambda_grid:
            if lam == 0:
                continue
            bound = worst_case(setting, lam).value
            orc = scalar_oracle(setting, lam)
            ratio = orc.value / bound
            ok = ratio >= 0.99 and orc.value <= bound + 1e-6
            print(f"oracle lam={lam}: oracle={orc.value!r} spectral={bound!r} ratio={ratio:.6f} "
                  f"argmax={orc.argmax!r} {'ok' if ok else 'GAP'}")
            status |= not ok
    return int(status)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decpep",
        description="Worst-case bounds of decentralized first-order methods, valid for any number of agents.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("sweep", help="bound for every lambda of a grid")
    _common(p)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("optimize-alpha", help="step size minimizing the bound")
    _common(p)
    p.set_defaults(func=cmd_optimize_alpha)
    p = sub.add_parser("compare", help="several methods/modes over one grid")
    _common(p)
    p.add_argument("--methods", default="diging:constant,extra:constant,diging:time-varying,extra:time-varying",
                   help="comma list of method[:mode]")
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("verify", help="simulate explicit instances and run the two-agent oracle")
    _common(p)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--smooth-alpha", type=float, default=0.2, help="step size for DIGing/EXTRA instances")
    p.add_argument("--oracle-K", type=int, default=5)
    p.add_argument("--skip-soundness", action="store_true")
    p.add_argument("--skip-oracle", action="store_true")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.verbose is False:
        import warnings

        warnings.filterwarnings("ignore", message=".*near-optimal.*")
    np.seterr(over="ignore", invalid="ignore")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        parser.error(str(exc))
    return 2


if __name__ == "__main__":
    sys.exit(main())
