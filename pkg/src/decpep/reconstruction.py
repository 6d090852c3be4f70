"""Explicit worst-case data from a solved PEP.

Each Gram block is factored as ``G = P^T P`` through a clipped
eigendecomposition, giving coordinates for every basis leaf. Points,
gradients and function values of every evaluation follow by linearity. All
constraints and the objective are then re-evaluated on the factored Gram
matrices, so that a solution which cannot be realized is caught here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .functions import Evaluation
from .gram import Point
from .pep import PEPProblem, SDPStandardForm, to_standard_form
from .solvers import PEPError, Solution

DEFAULT_CLIP = 1e-7


class ReconstructionError(PEPError):
    pass


def factor(G: np.ndarray, clip: float = DEFAULT_CLIP) -> np.ndarray:
    """``P`` with ``P^T P ~= G``; eigenvalues below ``clip`` are dropped.

    Rows of ``P`` are the retained directions, so ``P.shape[0]`` is the
    numerical rank.
    """
    if G.size == 0:
        return np.zeros((0, 0))
    w, V = np.linalg.eigh((G + G.T) / 2)
    keep = w > clip
    return (np.sqrt(w[keep])[:, None] * V[:, keep].T)[::-1]


@dataclass
class ExplicitPoint:
    label: str
    x: np.ndarray
    g: np.ndarray
    f: float


@dataclass
class WorstCaseData:
    """Coordinates in ``R^(r_par + r_perp)``; the first ``r_par`` entries are the consensus part."""

    P_par: np.ndarray
    P_perp: np.ndarray
    f: np.ndarray
    points: list[ExplicitPoint]
    objective: float
    residual: float
    residuals: dict

    @property
    def rank_par(self) -> int:
        return self.P_par.shape[0]

    @property
    def rank_perp(self) -> int:
        return self.P_perp.shape[0]

    def vector(self, p: Point) -> np.ndarray:
        """Explicit coordinates of a symbolic point."""
        return np.concatenate([_coords(p.par, self.P_par), _coords(p.perp, self.P_perp)])

    def __getitem__(self, label: str) -> ExplicitPoint:
        for p in self.points:
            if p.label == label:
                return p
        raise KeyError(label)


def _coords(coeffs: dict, P: np.ndarray) -> np.ndarray:
    out = np.zeros(P.shape[0])
    for leaf, c in coeffs.items():
        out += float(c) * P[:, leaf]
    return out


def factored_grams(solution: Solution, form: SDPStandardForm, clip: float = DEFAULT_CLIP):
    """Factors of both Gram blocks and the Gram blocks they generate."""
    P_par = factor(solution.G_par, clip)
    P_perp = factor(solution.G_perp, clip)
    G_par = P_par.T @ P_par if P_par.size else np.zeros((form.n_par, form.n_par))
    G_perp = P_perp.T @ P_perp if P_perp.size else np.zeros((form.n_perp, form.n_perp))
    return P_par, P_perp, G_par, G_perp


def reconstruction_residuals(solution: Solution, form: SDPStandardForm, clip: float = DEFAULT_CLIP) -> dict:
    """Constraint violations of the factored data, plus its objective error."""
    _, _, G_par, G_perp = factored_grams(solution, form, clip)
    v = form.pack(G_par, G_perp, np.asarray(solution.f, dtype=float))
    res = form.residuals(v)
    res["objective"] = abs(form.objective_value(v) - solution.value)
    return res


def reconstruct(
    solution: Solution,
    problem: PEPProblem,
    form: SDPStandardForm | None = None,
    tol: float = DEFAULT_CLIP,
    check: bool = True,
) -> WorstCaseData:
    """Factor the Gram blocks and re-check every constraint.

    Raises :class:`ReconstructionError` when the factored data violates a
    constraint, or misses the objective, by more than ``10 * tol``.
    """
    if not solution.status.ok:
        raise ReconstructionError(f"cannot reconstruct a {solution.status.value} solution")
    form = form or to_standard_form(problem)
    P_par, P_perp, G_par, G_perp = factored_grams(solution, form, tol)
    f = np.asarray(solution.f, dtype=float)
    res = reconstruction_residuals(solution, form, tol)
    objective = problem.objective.evaluate(G_par, G_perp, f)
    data = WorstCaseData(P_par, P_perp, f, [], objective, max(res.values()), res)
    data.points = [_explicit(e, data) for e in problem.evaluations]
    if check and data.residual > 10 * tol:
        worst = max(res, key=res.get)
        raise ReconstructionError(
            f"reconstruction residual {data.residual:.3e} ({worst}) above {10 * tol:.1e}"
        )
    return data


def _explicit(e: Evaluation, data: WorstCaseData) -> ExplicitPoint:
    return ExplicitPoint(e.label, data.vector(e.point), data.vector(e.grad), float(data.f[e.fval.id]))


class PiecewiseLinear:
    """Max-affine convex interpolant ``f(x) = max_i f_i + <g_i, x - x_i>``.

    When the data is interpolable by a convex function, this is one such
    function and its subgradients are among the ``g_i``. Ties are broken
    toward the nearest data point so that ``grad(x_i) = g_i``.
    """

    def __init__(self, xs, gs, fs):
        self.xs = np.atleast_2d(np.asarray(xs, dtype=float))
        self.gs = np.atleast_2d(np.asarray(gs, dtype=float))
        self.fs = np.asarray(fs, dtype=float)
        self._c = self.fs - np.einsum("ij,ij->i", self.gs, self.xs)

    @classmethod
    def from_data(cls, data: WorstCaseData) -> "PiecewiseLinear":
        return cls([p.x for p in data.points], [p.g for p in data.points], [p.f for p in data.points])

    def _pieces(self, x):
        return self.gs @ np.asarray(x, dtype=float) + self._c

    def __call__(self, x) -> float:
        return float(self._pieces(x).max())

    def grad(self, x, tie: float = 1e-9) -> np.ndarray:
        v = self._pieces(x)
        active = np.flatnonzero(v >= v.max() - tie)
        d = np.linalg.norm(self.xs[active] - np.asarray(x, dtype=float), axis=1)
        return self.gs[active[np.argmin(d)]].copy()

    def interpolation_gap(self) -> float:
        """Largest ``f_i - f(x_i)`` deficit; ``<= 0`` up to rounding when the data is interpolable."""
        return float(max(self(x) - f for x, f in zip(self.xs, self.fs)))


__all__ = [
    "ReconstructionError",
    "WorstCaseData",
    "ExplicitPoint",
    "PiecewiseLinear",
    "factor",
    "factored_grams",
    "reconstruct",
    "reconstruction_residuals",
]
