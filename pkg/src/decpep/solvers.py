"""Conic solver adapters for :class:`~decpep.pep.SDPStandardForm`.

An adapter is any object with a ``solve(form) -> Solution`` method and a
``name``. Two are provided: :class:`ClarabelAdapter` talks to Clarabel
directly (default, fastest for these small dense problems) and
:class:`CvxpyAdapter` goes through cvxpy so that any installed SDP solver can
be used.
"""

from __future__ import annotations

import enum
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
import scipy.sparse as sp

from .pep import SDPStandardForm, triu_index, triu_len

DEFAULT_TOL = 1e-8
ENV_TOL = "DECPEP_SOLVER_TOL"
ENV_SOLVER = "DECPEP_SOLVER"


class Status(enum.Enum):
    OPTIMAL = "optimal"
    NEAR_OPTIMAL = "near-optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    SOLVER_FAILURE = "solver-failure"

    @property
    def ok(self) -> bool:
        return self in (Status.OPTIMAL, Status.NEAR_OPTIMAL)


class PEPError(RuntimeError):
    pass


class ModelingError(PEPError):
    pass


class SolverFailure(PEPError):
    pass


@dataclass
class Solution:
    """Solved PEP. ``value`` is always an upper bound on the decentralized worst case."""

    value: float
    G_par: np.ndarray
    G_perp: np.ndarray
    f: np.ndarray
    status: Status
    residuals: dict[str, float] = field(default_factory=dict)
    solver: str = ""
    iterations: int = 0
    solve_time: float = 0.0
    raw_status: str = ""
    x: np.ndarray | None = None


class SolverAdapter(Protocol):
    name: str
    tol: float

    def solve(self, form: SDPStandardForm) -> Solution: ...


def default_tol() -> float:
    return float(os.environ.get(ENV_TOL, DEFAULT_TOL))


def _classify(raw_ok: bool, residuals: dict, value: float, tol: float, size: float = 1.0) -> Status:
    if raw_ok:
        return Status.OPTIMAL
    # relative to the magnitude of the solution, as the solvers' own tolerances are
    scale = max(1.0, abs(value), size) if math.isfinite(value) else math.inf
    worst = max(residuals["primal_infeas"], residuals["gap"]) / scale
    if worst <= 10 * tol:
        return Status.NEAR_OPTIMAL
    return Status.SOLVER_FAILURE


def _primal_infeas(form: SDPStandardForm, x) -> float:
    return max(form.residuals(x).values())


class ClarabelAdapter:
    """Interior-point solve with Clarabel's native PSD triangle cones."""

    name = "clarabel"
    # PEPs often have no strictly feasible point (e.g. consensus outputs forced
    # to zero); a fixed regularization copes with that far better than the
    # dynamic one, the remaining variants are retried in order on failure
    primary = {"static_regularization_constant": 1e-6, "dynamic_regularization_enable": False}
    fallbacks = (
        {},
        {"static_regularization_constant": 1e-6},
        {"dynamic_regularization_enable": False},
    )

    # Clarabel's tolerances are relative, so bounds of large magnitude come back
    # with large absolute residuals; those are solved again with a tolerance
    # scaled down by the excess, but never below MIN_TOL
    MIN_TOL = 1e-10

    def __init__(self, tol: float | None = None, max_iter: int = 200, verbose: bool = False,
                 abs_tol: float | None = 1e-7, **settings):
        self.tol = default_tol() if tol is None else tol
        self.abs_tol = abs_tol
        self.max_iter = max_iter
        self.verbose = verbose
        self.settings = settings  # extra Clarabel settings applied to every attempt

    def _psd_rows(self, n: int, offset: int):
        # s = svec(G) with sqrt(2) on off-diagonals, column-major upper triangle
        rows, cols, data = [], [], []
        for j in range(n):
            for i in range(j + 1):
                k = triu_index(i, j)
                rows.append(k)
                cols.append(offset + k)
                data.append(-1.0 if i == j else -math.sqrt(2.0))
        return rows, cols, data

    @staticmethod
    def _svec_scale(dim: int) -> np.ndarray:
        s = np.empty(triu_len(dim))
        for j in range(dim):
            for i in range(j + 1):
                s[triu_index(i, j)] = 1.0 if i == j else math.sqrt(2.0)
        return s

    def solve(self, form: SDPStandardForm) -> Solution:
        import clarabel

        n = form.n_var
        blocks_A, blocks_b, cones = [], [], []
        if form.A_eq.shape[0]:
            blocks_A.append(form.A_eq)
            blocks_b.append(-form.b_eq)
            cones.append(clarabel.ZeroConeT(form.A_eq.shape[0]))
        if form.A_in.shape[0]:
            blocks_A.append(form.A_in)
            blocks_b.append(-form.b_in)
            cones.append(clarabel.NonnegativeConeT(form.A_in.shape[0]))
        off = form.offsets
        for dim, o in ((form.n_par, off["par"]), (form.n_perp, off["perp"])):
            if dim == 0:
                continue
            r, c, d = self._psd_rows(dim, o)
            blocks_A.append(sp.csr_matrix((d, (r, c)), shape=(triu_len(dim), n)))
            blocks_b.append(np.zeros(triu_len(dim)))
            cones.append(clarabel.PSDTriangleConeT(dim))
        for dim, A, b in form.lmis:
            s = self._svec_scale(dim)
            blocks_A.append(-sp.diags(s) @ A)
            blocks_b.append(s * b)
            cones.append(clarabel.PSDTriangleConeT(dim))
        A = sp.vstack(blocks_A).tocsc()
        b = np.concatenate(blocks_b)
        P = sp.csc_matrix((n, n))
        q = -np.asarray(form.c, dtype=float)

        best = self._attempts(clarabel, P, q, A, b, cones, form, self.tol)
        excess = best.residuals.get("primal_infeas", 0.0)
        if (best.status.ok and self.abs_tol is not None and excess > self.abs_tol
                and self.tol > self.MIN_TOL):
            tol = max(self.MIN_TOL, self.tol * self.abs_tol / excess)
            refined = self._attempts(clarabel, P, q, A, b, cones, form, tol)
            if refined.status.ok and refined.residuals["primal_infeas"] < excess:
                best = refined
        if best.status is Status.NEAR_OPTIMAL:
            warnings.warn(f"{self.name}: accepted near-optimal solution ({best.raw_status})",
                          stacklevel=2)
        return best

    def _attempts(self, clarabel, P, q, A, b, cones, form, tol) -> Solution:
        attempts = []
        for extra in (self.primary,) + self.fallbacks:
            settings = clarabel.DefaultSettings()
            settings.verbose = self.verbose
            settings.max_iter = self.max_iter
            settings.tol_feas = tol
            settings.tol_gap_abs = tol
            settings.tol_gap_rel = tol
            settings.max_threads = 1
            for k, v in {**extra, **self.settings}.items():
                setattr(settings, k, v)
            sol = clarabel.DefaultSolver(P, q, A, b, cones, settings).solve()
            out = _finish(form, np.asarray(sol.x, dtype=float), str(sol.status), self,
                          sol.r_dual, abs(sol.obj_val - sol.obj_val_dual), sol.iterations,
                          sol.solve_time, quiet=True)
            attempts.append(out)
            if out.status in (Status.OPTIMAL, Status.INFEASIBLE, Status.UNBOUNDED):
                break
        return min(attempts, key=lambda s: (_rank(s.status), s.residuals.get("gap", math.inf)))


def _rank(status: Status) -> int:
    order = (Status.OPTIMAL, Status.INFEASIBLE, Status.UNBOUNDED, Status.NEAR_OPTIMAL,
             Status.SOLVER_FAILURE)
    return order.index(status)


def _finish(form, x, raw, adapter, dual_res, gap, iterations, solve_time, quiet=False) -> Solution:
    raw_l = raw.lower().replace("_", "")
    if "primalinfeasible" in raw_l or raw_l == "infeasible":
        status = Status.INFEASIBLE
    elif "dualinfeasible" in raw_l or raw_l == "unbounded":
        status = Status.UNBOUNDED
    else:
        residuals = {
            "primal_infeas": _primal_infeas(form, x) if np.all(np.isfinite(x)) else math.inf,
            "dual_infeas": float(dual_res) if dual_res is not None else 0.0,
            "gap": float(gap) if gap is not None else 0.0,
        }
        raw_ok = raw_l in ("solved", "optimal")
        value = form.objective_value(x) if np.all(np.isfinite(x)) else math.nan
        size = float(np.abs(x).max(initial=0.0)) if np.all(np.isfinite(x)) else math.inf
        status = _classify(raw_ok, residuals, value, adapter.tol, size)
        G_par, G_perp, f = form.unpack(x)
        sol = Solution(value, G_par, G_perp, f, status, residuals,
                       adapter.name, int(iterations), float(solve_time), raw, x)
        if status is Status.NEAR_OPTIMAL and not quiet:
            warnings.warn(f"{adapter.name}: accepted near-optimal solution ({raw})", stacklevel=3)
        return sol
    nan = np.full(0, np.nan)
    return Solution(math.nan, nan, nan, nan, status, {}, adapter.name, int(iterations),
                    float(solve_time), raw, None)


class CvxpyAdapter:
    """Route the standard form through cvxpy (``solver`` is any cvxpy SDP solver name)."""

    def __init__(self, solver: str = "CLARABEL", tol: float | None = None, **options):
        self.solver = solver
        self.tol = default_tol() if tol is None else tol
        self.options = options
        self.name = f"cvxpy-{solver.lower()}"

    def _solver_kwargs(self) -> dict:
        s = self.solver.upper()
        if s == "CLARABEL":
            return {"tol_feas": self.tol, "tol_gap_abs": self.tol, "tol_gap_rel": self.tol}
        if s == "SCS":
            return {"eps": self.tol, "max_iters": 100000}
        if s == "CVXOPT":
            return {"abstol": self.tol, "reltol": self.tol, "feastol": self.tol}
        return {}

    def solve(self, form: SDPStandardForm) -> Solution:
        import cvxpy as cp

        parts = []
        for dim in (form.n_par, form.n_perp):
            if dim == 0:
                continue
            G = cp.Variable((dim, dim), PSD=True)
            idx = [j * dim + i for j in range(dim) for i in range(j + 1)]
            parts.append(cp.vec(G, order="F")[idx])
        fv = cp.Variable(form.n_f) if form.n_f else None
        if fv is not None:
            parts.append(fv)
        v = cp.hstack(parts)
        cons = []
        if form.A_eq.shape[0]:
            cons.append(form.A_eq @ v + form.b_eq == 0)
        if form.A_in.shape[0]:
            cons.append(form.A_in @ v + form.b_in <= 0)
        for dim, A, b in form.lmis:
            S = cp.Variable((dim, dim), PSD=True)
            idx = [j * dim + i for j in range(dim) for i in range(j + 1)]
            cons.append(cp.vec(S, order="F")[idx] == A @ v + b)
        prob = cp.Problem(cp.Maximize(form.c @ v + form.c0), cons)
        kwargs = {**self._solver_kwargs(), **self.options}
        try:
            prob.solve(solver=self.solver, **kwargs)
        except cp.error.SolverError as exc:
            raise SolverFailure(f"{self.name}: {exc}") from exc
        raw = str(prob.status)
        if raw in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            raw = "infeasible"
        elif raw in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
            raw = "unbounded"
        x = np.asarray(v.value, dtype=float) if v.value is not None else np.full(form.n_var, np.nan)
        stats = prob.solver_stats
        return _finish(form, x, raw, self, None, None, stats.num_iters or 0, stats.solve_time or 0.0)


ADAPTERS = {"clarabel": ClarabelAdapter, "cvxpy": CvxpyAdapter}


def get_adapter(name: str | None = None, tol: float | None = None) -> SolverAdapter:
    """``"clarabel"``, ``"cvxpy"`` or ``"cvxpy:<SOLVER>"``; default from ``DECPEP_SOLVER``."""
    name = name or os.environ.get(ENV_SOLVER, "clarabel")
    if name.startswith("cvxpy"):
        _, _, which = name.partition(":")
        return CvxpyAdapter(which or "CLARABEL", tol=tol)
    if name == "clarabel":
        return ClarabelAdapter(tol=tol)
    raise ValueError(f"unknown solver {name!r}")


def solve(adapter: SolverAdapter | None, form: SDPStandardForm) -> Solution:
    """Solve and surface modeling errors; infeasible/unbounded problems raise."""
    adapter = adapter or ClarabelAdapter()
    sol = adapter.solve(form)
    if sol.status is Status.INFEASIBLE:
        raise ModelingError(f"{adapter.name}: PEP is infeasible ({sol.raw_status})")
    if sol.status is Status.UNBOUNDED:
        raise ModelingError(f"{adapter.name}: PEP is unbounded ({sol.raw_status})")
    if sol.status is Status.SOLVER_FAILURE:
        raise SolverFailure(
            f"{adapter.name}: {sol.raw_status}, residuals {sol.residuals}, "
            f"{sol.iterations} iterations"
        )
    return sol
