"""Function evaluations and interpolation constraints for convex classes.

Constraints are always written for the lifted function of the whole network
(the agents' average expressed in basis b), which belongs to the same class
with the same parameters as the local functions.
"""

from __future__ import annotations

from dataclasses import dataclass

from .gram import (
    Block,
    Constraint,
    FValSymbol,
    GramLayout,
    Point,
    Scalar,
    div,
    exact,
    inner,
    sqnorm,
)


@dataclass(frozen=True)
class Evaluation:
    label: str
    point: Point
    grad: Point
    fval: FValSymbol

    @property
    def f(self) -> Scalar:
        return Scalar.fval(self.fval)


class EvaluationSet:
    def __init__(self, layout: GramLayout):
        self.layout = layout
        self.evals: list[Evaluation] = []
        self.star: Evaluation | None = None

    def __len__(self):
        return len(self.evals)

    def __iter__(self):
        return iter(self.evals)

    def __contains__(self, e: Evaluation):
        return any(e is other for other in self.evals)

    def _check_label(self, label: str):
        if any(e.label == label for e in self.evals):
            raise ValueError(f"duplicate evaluation label {label!r}")

    def add(self, point: Point | None, label: str) -> Evaluation:
        """Evaluate at ``point``; ``None`` means a fresh, unconstrained point."""
        self._check_label(label)
        lay = self.layout
        if point is None:
            point = lay.new_leaf(Block.PAR, f"x|{label}", "point") + lay.new_leaf(
                Block.PERP, f"x_perp|{label}", "point"
            )
        grad = lay.new_leaf(Block.PAR, f"g|{label}", "gradient") + lay.new_leaf(
            Block.PERP, f"g_perp|{label}", "gradient"
        )
        e = Evaluation(label, point, grad, lay.new_fval(f"f|{label}"))
        self.evals.append(e)
        return e

    def add_optimum(self, label: str = "star") -> Evaluation:
        # x_perp* = 0 and the consensus part of the gradient vanishes
        if self.star is not None:
            raise ValueError("optimum already defined")
        self._check_label(label)
        lay = self.layout
        point = lay.new_leaf(Block.PAR, f"x|{label}", "optimum")
        grad = lay.new_leaf(Block.PERP, f"g_perp|{label}", "gradient")
        e = Evaluation(label, point, grad, lay.new_fval(f"f|{label}"))
        self.evals.append(e)
        self.star = e
        return e


def add_evaluation(evals: EvaluationSet, point: Point | None, label: str) -> Evaluation:
    return evals.add(point, label)


def add_optimum(evals: EvaluationSet) -> Evaluation:
    return evals.add_optimum()


def fval_gap(evals: EvaluationSet, a: Evaluation, b: Evaluation) -> Scalar:
    for e in (a, b):
        if e not in evals:
            raise ValueError(f"evaluation {e.label!r} is not in this set")
    return a.f - b.f


@dataclass(frozen=True)
class BoundedSubgradient:
    """Convex functions whose subgradients have norm at most ``R``."""

    R: float = 1.0

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be positive")

    def interpolation_constraints(self, evals) -> list[Constraint]:
        evals = list(evals)
        if not evals:
            raise ValueError("empty evaluation set")
        out = []
        for i in evals:
            for j in evals:
                if i is j:
                    continue
                expr = j.f - i.f + inner(j.grad, i.point - j.point)
                out.append(Constraint(expr, "ineq", f"conv({i.label},{j.label})"))
        R2 = exact(self.R) * exact(self.R)
        for i in evals:
            out.append(Constraint(sqnorm(i.grad) - R2, "ineq", f"gradnorm({i.label})"))
        return out


@dataclass(frozen=True)
class SmoothStronglyConvex:
    """``mu``-strongly convex, ``L``-smooth functions, ``0 <= mu < L``."""

    mu: float = 0.0
    L: float = 1.0

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        if not self.L > 0 or self.L == float("inf"):
            raise ValueError("L must be positive and finite")
        if self.mu > self.L:
            raise ValueError("mu must not exceed L")
        if self.mu == self.L:
            raise ValueError("mu == L is a degenerate (quadratic-only) class")

    def interpolation_constraints(self, evals) -> list[Constraint]:
        evals = list(evals)
        if not evals:
            raise ValueError("empty evaluation set")
        mu, L = exact(self.mu), exact(self.L)
        scale = div(1, 2 * (1 - div(mu, L)))
        inv_L = div(1, L)
        cross = 2 * div(mu, L)
        out = []
        for i in evals:
            for j in evals:
                if i is j:
                    continue
                dx = i.point - j.point
                dg = i.grad - j.grad
                curv = inv_L * sqnorm(dg) + mu * sqnorm(dx) - cross * inner(dg, dx)
                expr = j.f - i.f + inner(j.grad, dx) + scale * curv
                out.append(Constraint(expr, "ineq", f"interp({i.label},{j.label})"))
        return out


FunctionClass = BoundedSubgradient | SmoothStronglyConvex


def interpolation_constraints(evals, fclass: FunctionClass) -> list[Constraint]:
    return fclass.interpolation_constraints(evals)
