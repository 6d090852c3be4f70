"""Parameter sweeps over the spectral range, with step-size tuning on top.

An :class:`ExperimentConfig` describes one curve (method, function class,
initial condition, criterion, matrix mode, grid of ``lam``). Results are
plain rows written to CSV in a fixed column order; plots are optional and
are drawn from the same rows.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .analysis import Setting, spectral_problem
from .functions import BoundedSubgradient, SmoothStronglyConvex
from .methods import CONSTANT, METHODS, TIME_VARYING
from .pep import (
    ConsensusStart,
    FValGapAtAveragedIterate,
    InitialGradientSpread,
    MeanSquaredDistance,
    MeanSquaredDistanceAtK,
    to_standard_form,
)
from .solvers import PEPError, get_adapter, solve

CLASSES = ("bounded-subgradient", "smooth-strongly-convex")
CRITERIA = ("fval-gap-avg", "msd-last")
INITS = ("consensus", "msd")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AlphaSearch:
    lo: float | None = None  # default 0.01 / L
    hi: float | None = None  # default 2 / L
    grid: int = 25
    refine: int = 20


@dataclass(frozen=True)
class ExperimentConfig:
    """One worst-case curve. ``None`` fields take method-dependent defaults, see :meth:`resolved`."""

    method: str = "dgd"
    K: int = 10
    function_class: str | None = None
    R: float = 1.0
    mu: float = 0.1
    L: float = 1.0
    D: float = 1.0
    S: float | None = None
    criterion: str | None = None
    init: str | None = None
    matrix_mode: str = CONSTANT
    diging_grouping: str = "iteration"
    lambda_grid: tuple[float, ...] = tuple(round(0.1 * i, 10) for i in range(10))
    alpha: float | str | None = None
    alpha_search: AlphaSearch = field(default_factory=AlphaSearch)
    solver: str | None = None
    solver_tol: float | None = None
    seed: int = 0
    jobs: int = 1
    out: str | None = None
    svg: str | None = None
    log_scale: bool = False
    shift: float = 0.0
    timing: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        d = dict(d)
        if "alpha_search" in d and isinstance(d["alpha_search"], dict):
            d["alpha_search"] = AlphaSearch(**d["alpha_search"])
        if "lambda_grid" in d:
            d["lambda_grid"] = tuple(float(x) for x in d["lambda_grid"])
        return cls(**d).resolved()

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda_grid"] = list(self.lambda_grid)
        return d

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes).resolved()

    def resolved(self) -> "ExperimentConfig":
        """Fill method-dependent defaults and validate."""
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if not isinstance(self.K, int) or self.K < 1:
            raise ConfigError("K must be a positive integer")
        dgd = self.method == "dgd"
        fc = self.function_class or ("bounded-subgradient" if dgd else "smooth-strongly-convex")
        smooth = fc == "smooth-strongly-convex"
        crit = self.criterion or ("fval-gap-avg" if dgd else "msd-last")
        init = self.init or ("consensus" if dgd else "msd")
        alpha = self.alpha
        if alpha is None:
            alpha = self.K ** -0.5 if dgd else "optimize"
        out = replace(self, function_class=fc, criterion=crit, init=init, alpha=alpha)
        if smooth and out.S is None:
            out = replace(out, S=self.L * self.D)
        if fc not in CLASSES:
            raise ConfigError(f"function_class must be one of {CLASSES}")
        if crit not in CRITERIA:
            raise ConfigError(f"criterion must be one of {CRITERIA}")
        if init not in INITS:
            raise ConfigError(f"init must be one of {INITS}")
        if self.matrix_mode not in (CONSTANT, TIME_VARYING):
            raise ConfigError(f"matrix_mode must be {CONSTANT!r} or {TIME_VARYING!r}")
        if not isinstance(alpha, (int, float)) and alpha != "optimize":
            raise ConfigError("alpha must be a number or 'optimize'")
        if isinstance(alpha, (int, float)) and not alpha > 0:
            raise ConfigError("alpha must be positive")
        if not self.lambda_grid:
            raise ConfigError("empty lambda grid")
        for lam in self.lambda_grid:
            if not 0 <= lam < 1:
                raise ConfigError(f"lambda must lie in [0, 1), got {lam}")
        if smooth and not self.mu < self.L:
            raise ConfigError("need mu < L")
        return out

    def setting(self, alpha: float) -> Setting:
        c = self.resolved()
        fclass = (
            BoundedSubgradient(c.R)
            if c.function_class == "bounded-subgradient"
            else SmoothStronglyConvex(c.mu, c.L)
        )
        initial = ConsensusStart(c.D) if c.init == "consensus" else MeanSquaredDistance(c.D)
        crit = FValGapAtAveragedIterate() if c.criterion == "fval-gap-avg" else MeanSquaredDistanceAtK()
        spread = InitialGradientSpread(c.S) if c.function_class == "smooth-strongly-convex" else None
        return Setting(c.method, c.K, float(alpha), fclass, initial, crit, c.matrix_mode,
                       c.diging_grouping, gradient_spread=spread)

    @property
    def alpha_bounds(self) -> tuple[float, float]:
        lo = self.alpha_search.lo if self.alpha_search.lo is not None else 0.01 / self.L
        hi = self.alpha_search.hi if self.alpha_search.hi is not None else 2.0 / self.L
        return lo, hi

    @property
    def label(self) -> str:
        return f"{self.method}-{self.matrix_mode}"


# -- single solves -------------------------------------------------------------------------


@dataclass
class SweepRow:
    lam: float
    alpha: float
    bound: float
    status: str
    primal_infeas: float = math.nan
    dual_infeas: float = math.nan
    gap: float = math.nan
    n_par: int = 0
    n_perp: int = 0
    n_eq: int = 0
    n_ineq: int = 0
    lmi_sizes: str = ""
    wall_time: float = 0.0
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "near-optimal")


COLUMNS = [f.name for f in fields(SweepRow) if f.name != "wall_time"]


def bound_at(config: ExperimentConfig, lam: float, alpha: float) -> SweepRow:
    """Assemble and solve one spectral problem; failures become a row, not an exception."""
    t0 = time.perf_counter()
    row = SweepRow(lam, float(alpha), math.nan, "solver-failure")
    try:
        form = to_standard_form(spectral_problem(config.setting(alpha), lam))
        st = form.stats()
        row.n_par, row.n_perp = st["n_par"], st["n_perp"]
        row.n_eq, row.n_ineq = st["n_eq"], st["n_ineq"]
        row.lmi_sizes = " ".join(str(s) for s in st["lmi_sizes"])
        sol = solve(get_adapter(config.solver, config.solver_tol), form)
        row.bound = sol.value
        row.status = sol.status.value
        row.primal_infeas = sol.residuals.get("primal_infeas", math.nan)
        row.dual_infeas = sol.residuals.get("dual_infeas", math.nan)
        row.gap = sol.residuals.get("gap", math.nan)
    except PEPError as exc:
        row.error = str(exc).splitlines()[0]
        low = row.error.lower()
        row.status = "infeasible" if "infeasible" in low else "unbounded" if "unbounded" in low else row.status
    row.wall_time = time.perf_counter() - t0
    return row


def _bound_task(args) -> SweepRow:
    return bound_at(*args)


def _map(tasks: list, jobs: int) -> list[SweepRow]:
    if jobs <= 1 or len(tasks) <= 1:
        return [_bound_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_bound_task, tasks))


# -- step size ---------------------------------------------------------------------------


@dataclass
class AlphaResult:
    alpha: float
    bound: float
    row: SweepRow | None
    evaluated: list[tuple[float, float]]


def optimize_alpha(config: ExperimentConfig, lam: float) -> AlphaResult:
    """Smallest bound over a log grid of step sizes, then golden-section refinement.

    The bound need not be unimodal in ``alpha``; the coarse grid picks the
    basin and the refinement only improves on it. The returned step size is
    the best of every evaluated point, failed solves counting as ``+inf``.
    """
    config = config.resolved()
    lo, hi = config.alpha_bounds
    grid = np.geomspace(lo, hi, config.alpha_search.grid)
    rows: dict[float, SweepRow] = {}
    for a, r in zip(grid, _map([(config, lam, float(a)) for a in grid], config.jobs)):
        rows[float(a)] = r

    def value(a: float) -> float:
        a = float(a)
        if a not in rows:
            rows[a] = bound_at(config, lam, a)
        r = rows[a]
        return r.bound if r.ok else math.inf

    vals = [value(a) for a in grid]
    i = int(np.argmin(vals))
    if not math.isfinite(vals[i]):
        raise PEPError(f"every step size failed at lam={lam}")
    if config.alpha_search.refine > 0:
        opts = {"maxiter": config.alpha_search.refine}
        if 0 < i < len(grid) - 1 and vals[i] < min(vals[i - 1], vals[i + 1]):
            minimize_scalar(value, bracket=(grid[i - 1], grid[i], grid[i + 1]),
                            method="golden", options=opts)
        else:
            j = min(max(i, 1), len(grid) - 2)
            minimize_scalar(value, bounds=(grid[j - 1], grid[j + 1]), method="bounded",
                            options={"maxiter": config.alpha_search.refine, "xatol": 1e-6})
    evaluated = sorted((a, r.bound if r.ok else math.inf) for a, r in rows.items())
    a_star = min(evaluated, key=lambda t: t[1])[0]
    return AlphaResult(a_star, rows[a_star].bound, rows[a_star], evaluated)


# -- sweeps --------------------------------------------------------------------------------


def run_sweep(config: ExperimentConfig) -> list[SweepRow]:
    """One row per ``lam`` in the grid, in grid order. Failed solves are recorded, not raised."""
    config = config.resolved()
    if config.alpha == "optimize":
        rows = []
        for lam in config.lambda_grid:
            try:
                rows.append(optimize_alpha(config, lam).row)
            except PEPError as exc:
                rows.append(SweepRow(lam, math.nan, math.nan, "solver-failure", error=str(exc)))
        return rows
    return _map([(config, lam, float(config.alpha)) for lam in config.lambda_grid], config.jobs)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: Sequence[SweepRow], timing: bool = False) -> str:
    cols = COLUMNS + (["wall_time"] if timing else [])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in cols])
    return buf.getvalue()


def write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# -- comparison --------------------------------------------------------------------------


@dataclass
class Comparison:
    lambda_grid: tuple[float, ...]
    labels: list[str]
    rows: dict[str, list[SweepRow]]

    def bounds(self, label: str) -> list[float]:
        return [r.bound for r in self.rows[label]]

    @property
    def failed(self) -> bool:
        return any(not r.ok for rs in self.rows.values() for r in rs)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["lam"]
        for lab in self.labels:
            header += [f"{lab}:bound", f"{lab}:alpha", f"{lab}:status"]
        w.writerow(header)
        for k, lam in enumerate(self.lambda_grid):
            line = [repr(float(lam))]
            for lab in self.labels:
                r = self.rows[lab][k]
                line += [_fmt(r.bound), _fmt(r.alpha), r.status]
            w.writerow(line)
        return buf.getvalue()


def compare_methods(configs: Sequence[ExperimentConfig]) -> Comparison:
    """Run every config over a shared grid; one bound column per (method, mode)."""
    configs = [c.resolved() for c in configs]
    if not configs:
        raise ConfigError("nothing to compare")
    grid = configs[0].lambda_grid
    crit = configs[0].criterion
    for c in configs[1:]:
        if c.lambda_grid != grid:
            raise ConfigError("configs must share the lambda grid")
        if c.criterion != crit:
            raise ConfigError("configs must share the criterion")
    labels, rows = [], {}
    for c in configs:
        lab = c.label
        n = 2
        while lab in rows:
            lab = f"{c.label}#{n}"
            n += 1
        labels.append(lab)
        rows[lab] = run_sweep(c)
    return Comparison(grid, labels, rows)


# -- plots ---------------------------------------------------------------------------------


def plot_svg(
    series: dict[str, tuple[Sequence[float], Sequence[float]]],
    path: str,
    log_scale: bool = False,
    shift: float = 0.0,
    ylabel: str = "worst-case bound",
) -> None:
    """Line chart of ``bound`` against ``lam``; with ``shift`` the y axis shows ``bound - shift`` on a log scale."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "decpep"
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, (xs, ys) in series.items():
        ys = np.asarray(ys, dtype=float) - shift
        ax.plot(xs, ys, marker="o", label=name)
    if log_scale or shift:
        ax.set_yscale("log")
    ax.set_xlabel("lambda")
    ax.set_ylabel(ylabel if not shift else f"{ylabel} - {shift:g}")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def sweep_series(rows: Sequence[SweepRow]) -> tuple[list[float], list[float]]:
    return [r.lam for r in rows], [r.bound for r in rows]


__all__ = [
    "AlphaResult",
    "AlphaSearch",
    "Comparison",
    "ConfigError",
    "ExperimentConfig",
    "SweepRow",
    "bound_at",
    "compare_methods",
    "optimize_alpha",
    "plot_svg",
    "rows_to_csv",
    "run_sweep",
]
