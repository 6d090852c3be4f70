"""Lower-bound checks on explicit decentralized instances.

Two independent ways of probing a spectral bound from below:

* :func:`simulate_method` runs DGD, DIGing or EXTRA agent by agent on an
  :class:`ExplicitInstance` (explicit local functions and averaging
  matrices); the criterion it returns can never exceed a valid bound.
* :func:`scalar_oracle` solves the PEP with every matrix acting as a fixed
  scalar ``lam2`` on the disagreement block, which is what any averaging
  matrix does for two agents, and maximizes over a grid of ``lam2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.stats import ortho_group

from .analysis import Setting, exact_problem, spectral_problem
from .functions import BoundedSubgradient, SmoothStronglyConvex
from .methods import CONSTANT
from .pep import (
    ConsensusStart,
    FValGapAtAveragedIterate,
    MeanSquaredDistance,
    MeanSquaredDistanceAtK,
    to_standard_form,
)
from .solvers import SolverAdapter, solve


class DivergenceError(ArithmeticError):
    pass


# -- averaging matrices ----------------------------------------------------------


def make_averaging_matrix(N: int, eigs: Sequence[float], seed=None) -> np.ndarray:
    """Symmetric generalized doubly stochastic ``W`` with spectrum ``{1} + eigs``.

    ``W = Q diag(1, eigs) Q^T`` where ``Q`` is orthogonal with first column
    ``1/sqrt(N)``; the remaining columns are a seeded random completion.
    """
    eigs = np.asarray(eigs, dtype=float)
    if eigs.shape != (N - 1,):
        raise ValueError(f"need {N - 1} eigenvalues, got {eigs.size}")
    if np.any(np.abs(eigs) >= 1):
        raise ValueError("eigenvalues must lie in (-1, 1)")
    rng = np.random.default_rng(seed)
    M = np.column_stack([np.ones(N), rng.standard_normal((N, N - 1))])
    Q, _ = np.linalg.qr(M)
    Q[:, 0] = 1 / math.sqrt(N)  # fix the sign from QR
    W = Q @ np.diag(np.concatenate([[1.0], eigs])) @ Q.T
    return (W + W.T) / 2


def sample_eigs(N: int, lam_minus: float, lam_plus: float, rng) -> np.ndarray:
    """Eigenvalues in ``[lam_minus, lam_plus]``, endpoints favored (worst cases sit there)."""
    e = rng.uniform(lam_minus, lam_plus, N - 1)
    ends = rng.random(N - 1) < 0.5
    e[ends] = rng.choice([lam_minus, lam_plus], ends.sum())
    return e


# -- local functions ---------------------------------------------------------------


@dataclass
class Quadratic:
    """``0.5 x^T A x + b^T x``."""

    A: np.ndarray
    b: np.ndarray

    def __call__(self, x) -> float:
        return float(0.5 * x @ self.A @ x + self.b @ x)

    def grad(self, x) -> np.ndarray:
        return self.A @ x + self.b

    def shifted(self, c: np.ndarray) -> "Quadratic":
        return Quadratic(self.A, self.b + c)


@dataclass
class MaxAffine:
    """``max_j <S_j, x> + c_j``; the subgradient is the first active piece."""

    S: np.ndarray
    c: np.ndarray

    def __call__(self, x) -> float:
        return float((self.S @ x + self.c).max())

    def grad(self, x) -> np.ndarray:
        return self.S[int(np.argmax(self.S @ x + self.c))].copy()


@dataclass
class ExplicitInstance:
    """``N`` agents in ``R^d`` minimizing ``(1/N) sum f_i``."""

    functions: list
    x_star: np.ndarray
    f_star: float = field(init=False)

    def __post_init__(self):
        self.x_star = np.asarray(self.x_star, dtype=float)
        self.f_star = self.f(self.x_star)

    @property
    def N(self) -> int:
        return len(self.functions)

    @property
    def d(self) -> int:
        return self.x_star.size

    def f(self, x) -> float:
        return float(np.mean([fi(x) for fi in self.functions]))

    def grads(self, X: np.ndarray) -> np.ndarray:
        """Rows are ``grad f_i(x_i)``."""
        return np.stack([fi.grad(x) for fi, x in zip(self.functions, X)])


def quadratic_instance_sampler(mu: float, L: float, N: int, d: int, seed=None) -> ExplicitInstance:
    """Quadratics with Hessian spectra in ``[mu, L]`` and random linear terms."""
    if not 0 < mu <= L:
        raise ValueError("need 0 < mu <= L")
    rng = np.random.default_rng(seed)
    fs = []
    for _ in range(N):
        ev = rng.uniform(mu, L, d)
        ev[rng.random(d) < 0.5] = rng.choice([mu, L])
        Q = ortho_group.rvs(d, random_state=rng) if d > 1 else np.ones((1, 1))
        fs.append(Quadratic(Q @ np.diag(ev) @ Q.T, rng.standard_normal(d)))
    A = sum(q.A for q in fs)
    b = sum(q.b for q in fs)
    return ExplicitInstance(fs, np.linalg.solve(A, -b))


def max_affine_instance_sampler(R: float, N: int, d: int, seed=None, pieces: int = 4) -> ExplicitInstance:
    """Piecewise-linear local functions with subgradient norms at most ``R``.

    The minimizer of the average is found by linear programming; samples
    whose average is unbounded below are redrawn.
    """
    rng = np.random.default_rng(seed)
    while True:
        fs = []
        for _ in range(N):
            S = rng.standard_normal((pieces, d))
            S *= R * rng.uniform(0.2, 1.0, (pieces, 1)) / np.linalg.norm(S, axis=1, keepdims=True)
            fs.append(MaxAffine(S, rng.standard_normal(pieces)))
        x = _minimize_max_affine(fs, d)
        if x is not None:
            return ExplicitInstance(fs, x)


def _minimize_max_affine(fs: list[MaxAffine], d: int, box: float = 1e3):
    # variables [x (d), t (N)]; minimize mean t s.t. S_i x + c_i <= t_i
    N = len(fs)
    rows, rhs = [], []
    for i, q in enumerate(fs):
        for s, c in zip(q.S, q.c):
            r = np.zeros(d + N)
            r[:d] = s
            r[d + i] = -1
            rows.append(r)
            rhs.append(-c)
    cost = np.concatenate([np.zeros(d), np.full(N, 1 / N)])
    bounds = [(-box, box)] * d + [(None, None)] * N
    res = linprog(cost, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds, method="highs")
    if res.status != 0 or np.max(np.abs(res.x[:d])) > box / 2:
        return None
    return res.x[:d]


def targeted_instance(xs, gs, fs, N: int) -> ExplicitInstance:
    """All agents share the max-affine interpolant of consensus-block data.

    Typical input is the consensus part of reconstructed worst-case data.
    Every ``g`` must be interpolable; the minimizer of the shared function is
    recomputed by linear programming.
    """
    xs, gs, fs = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (xs, gs, fs))
    fs = fs.ravel()
    q = MaxAffine(gs, fs - np.einsum("ij,ij->i", gs, xs))
    x = _minimize_max_affine([q], xs.shape[1])
    if x is None:
        raise ValueError("interpolant is unbounded below")
    return ExplicitInstance([q] * N, x)


# -- simulation ------------------------------------------------------------------------


@dataclass
class SimulatorResult:
    value: float
    iterates: list[np.ndarray]
    matrices: list[np.ndarray]


def initial_state(instance: ExplicitInstance, setting: Setting, rng) -> np.ndarray:
    """Starting points saturating the initial condition of ``setting``."""
    N, d = instance.N, instance.d
    ic = setting.initial
    if isinstance(ic, ConsensusStart):
        u = rng.standard_normal(d)
        x0 = instance.x_star + ic.D * u / np.linalg.norm(u)
        X = np.tile(x0, (N, 1))
    elif isinstance(ic, MeanSquaredDistance):
        U = rng.standard_normal((N, d))
        U *= ic.D / math.sqrt(np.mean(np.sum(U * U, axis=1)))
        X = instance.x_star + U
    else:
        raise TypeError(f"unsupported initial condition {ic!r}")
    return X


def fit_gradient_spread(instance: ExplicitInstance, X0: np.ndarray, S: float) -> ExplicitInstance:
    """Shift the linear terms so that the gradient spread at ``X0`` is at most ``S``.

    The shifts sum to zero, so the average function (hence ``x*``) and every
    Hessian are unchanged; the spread is scaled by exactly ``S / spread``.
    """
    G = instance.grads(X0)
    dev = G - G.mean(axis=0)
    spread = math.sqrt(np.mean(np.sum(dev * dev, axis=1)))
    if spread <= S:
        return instance
    t = S / spread * (1 - 1e-12)
    fs = [q.shifted(-(1 - t) * dv) for q, dv in zip(instance.functions, dev)]
    return ExplicitInstance(fs, instance.x_star)


class MatrixSource:
    """Averaging matrices for a run: one shared matrix, or a fresh one per request."""

    def __init__(self, N: int, lam_minus: float, lam_plus: float, mode: str, rng):
        self.N, self.lm, self.lp, self.mode, self.rng = N, lam_minus, lam_plus, mode, rng
        self.drawn: list[np.ndarray] = []

    def get(self) -> np.ndarray:
        if self.mode == CONSTANT and self.drawn:
            return self.drawn[0]
        eigs = sample_eigs(self.N, self.lm, self.lp, self.rng)
        W = make_averaging_matrix(self.N, eigs, self.rng)
        self.drawn.append(W)
        return W


def _check(X):
    if not np.all(np.isfinite(X)) or np.abs(X).max() > 1e150:
        raise DivergenceError("iterates overflowed")
    return X


def _dgd(inst, X, p, mats):
    xs = [X]
    for _ in range(p.K):
        X = _check(mats.get() @ X - p.alpha * inst.grads(X))
        xs.append(X)
    return xs


def _diging(inst, X, p, mats):
    per_step = p.matrix_mode != CONSTANT and p.diging_grouping == "step"
    g = inst.grads(X)
    s = g
    xs = [X]
    for _ in range(p.K):
        Wx = mats.get()
        Ws = mats.get() if per_step else Wx
        X = _check(Wx @ X - p.alpha * s)
        g_new = inst.grads(X)
        s = _check(Ws @ s + g_new - g)
        g = g_new
        xs.append(X)
    return xs


def _extra(inst, X, p, mats):
    xs = [X]
    wx_prev = g_prev = None
    for k in range(p.K):
        wx = mats.get() @ X
        g = inst.grads(X)
        if k == 0:
            nxt = wx - p.alpha * g
        else:
            nxt = X + wx - 0.5 * (xs[k - 1] + wx_prev) - p.alpha * (g - g_prev)
        wx_prev, g_prev = wx, g
        X = _check(nxt)
        xs.append(X)
    return xs


SIMULATORS: dict[str, Callable] = {"dgd": _dgd, "diging": _diging, "extra": _extra}


def simulate_method(
    instance: ExplicitInstance,
    setting: Setting,
    lam_minus: float,
    lam_plus: float | None = None,
    seed=None,
    X0: np.ndarray | None = None,
) -> SimulatorResult:
    """Run the agent-level recursion and evaluate the criterion of ``setting``."""
    if lam_plus is None:
        lam_minus, lam_plus = -lam_minus, lam_minus
    rng = np.random.default_rng(seed)
    X = initial_state(instance, setting, rng) if X0 is None else np.asarray(X0, dtype=float)
    mats = MatrixSource(instance.N, lam_minus, lam_plus, setting.matrix_mode, rng)
    try:
        run = SIMULATORS[setting.method]
    except KeyError:
        raise ValueError(f"no simulator for {setting.method!r}") from None
    xs = run(instance, X, setting.params, mats)
    crit = setting.criterion
    if isinstance(crit, FValGapAtAveragedIterate):
        x_av = np.mean([x.mean(axis=0) for x in xs], axis=0)
        value = instance.f(x_av) - instance.f_star
    elif isinstance(crit, MeanSquaredDistanceAtK):
        value = float(np.mean(np.sum((xs[-1] - instance.x_star) ** 2, axis=1)))
    else:
        raise TypeError(f"unsupported criterion {crit!r}")
    return SimulatorResult(float(value), xs, mats.drawn)


def instance_for(setting: Setting, N: int, d: int, seed) -> tuple[ExplicitInstance, np.ndarray]:
    """Random instance of the setting's function class, with starting points."""
    rng = np.random.default_rng(seed)
    fc = setting.function_class
    if isinstance(fc, BoundedSubgradient):
        inst = max_affine_instance_sampler(fc.R, N, d, rng)
    elif isinstance(fc, SmoothStronglyConvex):
        if fc.mu == 0:
            raise ValueError("the quadratic sampler needs mu > 0")
        inst = quadratic_instance_sampler(fc.mu, fc.L, N, d, rng)
    else:
        raise TypeError(f"unsupported class {fc!r}")
    X0 = initial_state(inst, setting, rng)
    if setting.gradient_spread is not None:
        inst = fit_gradient_spread(inst, X0, setting.gradient_spread.S)
    return inst, X0


# -- oracle --------------------------------------------------------------------------------


@dataclass
class OracleResult:
    value: float
    argmax: float
    grid: np.ndarray
    values: np.ndarray


def default_grid(lam: float, n: int = 41) -> np.ndarray:
    return np.linspace(-lam, lam, n)


def scalar_oracle(
    setting: Setting,
    lam: float,
    grid: Sequence[float] | None = None,
    adapter: SolverAdapter | None = None,
) -> OracleResult:
    """Max over ``lam2`` in ``grid`` of the PEP where the matrix acts as ``lam2 * I``.

    Each grid point is one admissible two-agent network, so the result never
    exceeds the spectral bound for ``[-lam, lam]``.
    """
    if setting.matrix_mode != CONSTANT:
        raise ValueError("the scalar oracle needs a constant matrix")
    grid = default_grid(lam) if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.abs(grid) > lam + 1e-15):
        raise ValueError(f"grid leaves [-{lam}, {lam}]")
    values = np.array(
        [solve(adapter, to_standard_form(exact_problem(setting, float(l)))).value for l in grid]
    )
    i = int(np.argmax(values))
    return OracleResult(float(values[i]), float(grid[i]), grid, values)


# -- soundness sweep -------------------------------------------------------------------------


@dataclass
class SoundnessRecord:
    seed: int
    method: str
    matrix_mode: str
    N: int
    d: int
    lam: float
    simulated: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.simulated <= self.bound + 1e-6


def soundness_sweep(
    settings: Sequence[Setting],
    lams: Sequence[float] = (0.3, 0.6, 0.9),
    n_instances: int = 100,
    Ns: Sequence[int] = (2, 3, 5),
    ds: Sequence[int] = (1, 2),
    seed: int = 0,
    adapter: SolverAdapter | None = None,
) -> list[SoundnessRecord]:
    """Simulate ``n_instances`` seeded instances, cycling through every combination of setting and instance shape."""
    bounds: dict[tuple, float] = {}
    out = []
    for s in range(n_instances):
        # mixed radix, so that each setting meets every combination of the other axes
        q, i = divmod(s, len(settings))
        q, j = divmod(q, len(lams))
        q, n = divmod(q, len(Ns))
        setting, lam, N, d = settings[i], lams[j], Ns[n], ds[q % len(ds)]
        key = (id(setting), lam)
        if key not in bounds:
            bounds[key] = solve(adapter, to_standard_form(spectral_problem(setting, lam))).value
        inst, X0 = instance_for(setting, N, d, seed + s)
        sim = simulate_method(inst, setting, lam, seed=seed + s, X0=X0)
        out.append(SoundnessRecord(seed + s, setting.method, setting.matrix_mode, N, d, lam,
                                   sim.value, bounds[key]))
    return out


__all__ = [
    "DivergenceError",
    "ExplicitInstance",
    "MaxAffine",
    "OracleResult",
    "Quadratic",
    "SimulatorResult",
    "SoundnessRecord",
    "default_grid",
    "fit_gradient_spread",
    "instance_for",
    "make_averaging_matrix",
    "max_affine_instance_sampler",
    "quadratic_instance_sampler",
    "scalar_oracle",
    "simulate_method",
    "soundness_sweep",
    "targeted_instance",
]
