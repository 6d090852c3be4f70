"""Consensus steps in basis b and spectral constraints on the unknown matrix.

A consensus step leaves the consensus part of a vector untouched and maps the
disagreement part ``x_perp`` to ``W_tilde @ x_perp`` where ``W_tilde`` is an
unknown symmetric matrix whose eigenvalues are those of the averaging matrix
without the eigenvalue 1. Steps sharing a matrix are collected as columns of
``X`` (inputs) and ``Y`` (outputs); the matrix is then eliminated through
necessary conditions on ``X^T X``, ``X^T Y`` and ``Y^T Y``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .gram import (
    LMI,
    Block,
    Constraint,
    GramLayout,
    MatrixExpr,
    Point,
    Scalar,
    exact,
    inner,
    linear,
)


@dataclass(frozen=True)
class SpectralRange:
    lam_minus: float
    lam_plus: float

    def __post_init__(self):
        if not -1 < self.lam_minus <= self.lam_plus < 1:
            raise ValueError(
                f"need -1 < lam_minus <= lam_plus < 1, got [{self.lam_minus}, {self.lam_plus}]"
            )

    @classmethod
    def symmetric(cls, lam: float) -> "SpectralRange":
        return cls(-lam, lam)

    def contains(self, other: "SpectralRange") -> bool:
        return self.lam_minus <= other.lam_minus and other.lam_plus <= self.lam_plus


@dataclass(frozen=True)
class MatrixClassId:
    id: int
    group: str = ""


class ConsensusRegistry:
    def __init__(self, layout: GramLayout):
        self.layout = layout
        self.pairs: dict[MatrixClassId, list[tuple[Point, Point]]] = {}

    def new_matrix(self, group: str = "") -> MatrixClassId:
        mid = MatrixClassId(len(self.pairs), group)
        self.pairs[mid] = []
        return mid

    @property
    def ids(self) -> list[MatrixClassId]:
        return list(self.pairs)

    def columns(self, mid: MatrixClassId) -> int:
        return len(self.pairs[mid])

    def step(self, p: Point, mid: MatrixClassId) -> Point:
        if mid not in self.pairs:
            raise KeyError(f"unknown matrix {mid}")
        k = len(self.pairs[mid])
        y = self.layout.new_leaf(Block.PERP, f"y_perp[W{mid.id},{k}]", "consensus")
        self.pairs[mid].append((p.perp_part, y))
        return Point(dict(p.par), dict(y.perp))


def consensus_step(reg: ConsensusRegistry, p: Point, mid: MatrixClassId) -> Point:
    return reg.step(p, mid)


_HALF = Fraction(1, 2)


def _sym(a: Scalar, b: Scalar) -> Scalar:
    return linear([(_HALF, a), (_HALF, b)])


def spectral_constraints(
    reg: ConsensusRegistry, rng: SpectralRange
) -> tuple[list[Constraint], list[LMI]]:
    """Necessary conditions for ``Y = W X`` with ``W`` symmetric, spectrum in ``rng``.

    ``X^T Y`` is symmetric; ``X^T Y - lm X^T X``, ``lp X^T X - X^T Y`` and
    ``-(Y - lm X)^T (Y - lp X)`` are PSD. Single-column groups yield scalar
    inequalities instead of 1x1 LMIs.
    """
    lm, lp = exact(rng.lam_minus), exact(rng.lam_plus)
    cons: list[Constraint] = []
    lmis: list[LMI] = []
    for mid, pairs in reg.pairs.items():
        if not pairs:
            raise ValueError(f"matrix {mid.id} has no consensus step")
        X = [x for x, _ in pairs]
        Y = [y for _, y in pairs]
        k = len(pairs)
        XX = [[inner(X[i], X[j]) for j in range(k)] for i in range(k)]
        YY = [[inner(Y[i], Y[j]) for j in range(k)] for i in range(k)]
        XY = [[inner(X[i], Y[j]) for j in range(k)] for i in range(k)]
        for i in range(k):
            for j in range(i + 1, k):
                cons.append(
                    Constraint(XY[i][j] - XY[j][i], "eq", f"sym(W{mid.id},{i},{j})")
                )
        S = [[XY[i][i] if i == j else _sym(XY[i][j], XY[j][i]) for j in range(k)] for i in range(k)]
        lower = [[S[i][j] - lm * XX[i][j] for j in range(k)] for i in range(k)]
        upper = [[lp * XX[i][j] - S[i][j] for j in range(k)] for i in range(k)]
        # -(Y - lm X)^T (Y - lp X), symmetrized with X^T Y = Y^T X
        red = [
            [-(YY[i][j] - (lm + lp) * S[i][j] + lm * lp * XX[i][j]) for j in range(k)]
            for i in range(k)
        ]
        for name, M in (("lower", lower), ("upper", upper), ("varred", red)):
            label = f"{name}(W{mid.id})"
            if k == 1:
                cons.append(Constraint(-M[0][0], "ineq", label))
            else:
                lmis.append(LMI(MatrixExpr.from_rows(M), label))
    return cons, lmis


def exact_scalar_consensus_constraints(
    reg: ConsensusRegistry, values: dict[MatrixClassId, float]
) -> list[Constraint]:
    """Pin ``y = lam2 * x`` for every registered pair: ``<y - lam2 x, z> = 0`` for all perp leaves ``z``."""
    leaves = [Point({}, {leaf.id: 1}) for leaf in reg.layout.leaves_perp]
    out = []
    for mid, pairs in reg.pairs.items():
        if mid not in values:
            raise KeyError(f"no value given for matrix {mid.id}")
        lam2 = values[mid]
        if not -1 < lam2 < 1:
            raise ValueError(f"|lam2| must be < 1, got {lam2}")
        for k, (x, y) in enumerate(pairs):
            r = y - exact(lam2) * x
            for z in leaves:
                e = inner(r, z)
                if not e.is_zero():
                    out.append(Constraint(e, "eq", f"scalar(W{mid.id},{k})"))
    return out
