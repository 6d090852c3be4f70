"""Symbolic vectors and Gram-linear expressions over two orthogonal blocks.

Every vector of a decentralized PEP is split into its consensus part (block
``PAR``) and its disagreement part (block ``PERP``). A :class:`Point` is a
linear combination of basis leaves in each block; :func:`inner` turns two
points into a :class:`Scalar`, an affine function of the entries of the two
Gram matrices and of the function values. Neither the dimension ``d`` nor the
number of agents ``N`` appears anywhere in this module.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Number, Rational
from typing import Iterable, Mapping, Sequence

Coef = int | Fraction | float


class Block(enum.Enum):
    PAR = "par"
    PERP = "perp"


class LayoutFrozenError(RuntimeError):
    pass


def exact(c) -> Coef:
    """Keep rationals exact, everything else becomes a float."""
    if isinstance(c, bool):
        return int(c)
    if isinstance(c, (int, Fraction)):
        return c
    if isinstance(c, Rational):
        return Fraction(c)
    return float(c)


def div(a, b) -> Coef:
    a, b = exact(a), exact(b)
    if isinstance(a, float) or isinstance(b, float):
        return a / b
    return Fraction(a) / Fraction(b)


def _add_into(acc: dict, key, c) -> None:
    v = acc.get(key, 0) + c
    if v == 0:
        acc.pop(key, None)
    else:
        acc[key] = v


def _scaled(coeffs: Mapping, s) -> dict:
    if s == 0:
        return {}
    return {k: v * s for k, v in coeffs.items() if v * s != 0}


@dataclass(frozen=True)
class BasisLeaf:
    id: int
    block: Block
    label: str
    origin: str = "free"


@dataclass(frozen=True)
class FValSymbol:
    id: int
    label: str


class GramLayout:
    """Ordered registry of leaves (Gram columns) and function-value symbols.

    Leaf ids are allocated sequentially per block, so a leaf's id is also its
    row/column in the corresponding Gram matrix.
    """

    def __init__(self):
        self.leaves = {Block.PAR: [], Block.PERP: []}
        self.fvals: list[FValSymbol] = []
        self.frozen = False

    @property
    def leaves_par(self) -> list[BasisLeaf]:
        return self.leaves[Block.PAR]

    @property
    def leaves_perp(self) -> list[BasisLeaf]:
        return self.leaves[Block.PERP]

    def size(self, block: Block) -> int:
        return len(self.leaves[block])

    def _check_open(self):
        if self.frozen:
            raise LayoutFrozenError("layout is frozen; no new leaves or symbols")

    def new_leaf(self, block: Block, label: str, origin: str = "free") -> "Point":
        self._check_open()
        leaves = self.leaves[block]
        leaf = BasisLeaf(len(leaves), block, label, origin)
        leaves.append(leaf)
        if block is Block.PAR:
            return Point({leaf.id: 1}, {})
        return Point({}, {leaf.id: 1})

    def new_fval(self, label: str) -> FValSymbol:
        self._check_open()
        sym = FValSymbol(len(self.fvals), label)
        self.fvals.append(sym)
        return sym

    def freeze(self) -> "GramLayout":
        self.frozen = True
        return self


@dataclass(frozen=True, eq=True)
class Point:
    """A vector in basis b: sparse leaf coefficients in each block."""

    par: Mapping[int, Coef] = field(default_factory=dict)
    perp: Mapping[int, Coef] = field(default_factory=dict)

    @classmethod
    def zero(cls) -> "Point":
        return cls({}, {})

    def is_zero(self) -> bool:
        return not self.par and not self.perp

    @property
    def par_part(self) -> "Point":
        return Point(dict(self.par), {})

    @property
    def perp_part(self) -> "Point":
        return Point({}, dict(self.perp))

    def __add__(self, other: "Point") -> "Point":
        if not isinstance(other, Point):
            return NotImplemented
        return combine([(1, self), (1, other)])

    def __sub__(self, other: "Point") -> "Point":
        if not isinstance(other, Point):
            return NotImplemented
        return combine([(1, self), (-1, other)])

    def __neg__(self) -> "Point":
        return combine([(-1, self)])

    def __mul__(self, s) -> "Point":
        if not isinstance(s, Number):
            return NotImplemented
        return combine([(s, self)])

    __rmul__ = __mul__

    def __truediv__(self, s) -> "Point":
        return combine([(div(1, s), self)])

    def __matmul__(self, other: "Point") -> "Scalar":
        return inner(self, other)


def combine(terms: Iterable[tuple[Coef, Point]]) -> Point:
    par: dict = {}
    perp: dict = {}
    for c, p in terms:
        c = exact(c)
        for k, v in p.par.items():
            _add_into(par, k, c * v)
        for k, v in p.perp.items():
            _add_into(perp, k, c * v)
    return Point(par, perp)


@dataclass(frozen=True)
class Scalar:
    """Affine expression ``sum c*G_block[i,j] + sum c*f_s + constant``.

    Gram keys are ``(block, i, j)`` with ``i <= j``; the coefficient of an
    off-diagonal key multiplies the single entry ``G[i, j] (= G[j, i])``.
    """

    gram: Mapping[tuple[Block, int, int], Coef] = field(default_factory=dict)
    fvals: Mapping[int, Coef] = field(default_factory=dict)
    constant: Coef = 0

    @classmethod
    def const(cls, c) -> "Scalar":
        return cls({}, {}, exact(c))

    @classmethod
    def fval(cls, sym: FValSymbol) -> "Scalar":
        return cls({}, {sym.id: 1}, 0)

    def is_zero(self) -> bool:
        return not self.gram and not self.fvals and self.constant == 0

    def _lift(self, other) -> "Scalar":
        if isinstance(other, Scalar):
            return other
        if isinstance(other, Number):
            return Scalar.const(other)
        raise TypeError(f"cannot combine Scalar with {type(other).__name__}")

    def __add__(self, other) -> "Scalar":
        return linear([(1, self), (1, self._lift(other))])

    __radd__ = __add__

    def __sub__(self, other) -> "Scalar":
        return linear([(1, self), (-1, self._lift(other))])

    def __rsub__(self, other) -> "Scalar":
        return linear([(1, self._lift(other)), (-1, self)])

    def __neg__(self) -> "Scalar":
        return linear([(-1, self)])

    def __mul__(self, s) -> "Scalar":
        if not isinstance(s, Number):
            return NotImplemented
        return linear([(s, self)])

    __rmul__ = __mul__

    def __truediv__(self, s) -> "Scalar":
        return linear([(div(1, s), self)])

    def evaluate(self, G_par, G_perp, f) -> float:
        mats = {Block.PAR: G_par, Block.PERP: G_perp}
        val = float(self.constant)
        for (b, i, j), c in self.gram.items():
            val += float(c) * float(mats[b][i, j])
        for k, c in self.fvals.items():
            val += float(c) * float(f[k])
        return val


def linear(terms: Iterable[tuple[Coef, Scalar]]) -> Scalar:
    gram: dict = {}
    fv: dict = {}
    const = 0
    for c, s in terms:
        c = exact(c)
        for k, v in s.gram.items():
            _add_into(gram, k, c * v)
        for k, v in s.fvals.items():
            _add_into(fv, k, c * v)
        const = const + c * s.constant
    return Scalar(gram, fv, const)


def inner(a: Point, b: Point) -> Scalar:
    """Gram expression of ``<a, b>``; blocks never mix."""
    gram: dict = {}
    for block, ca, cb in ((Block.PAR, a.par, b.par), (Block.PERP, a.perp, b.perp)):
        for i, u in ca.items():
            for j, v in cb.items():
                key = (block, i, j) if i <= j else (block, j, i)
                _add_into(gram, key, u * v)
    return Scalar(gram, {}, 0)


def sqnorm(a: Point) -> Scalar:
    return inner(a, a)


@dataclass(frozen=True)
class Constraint:
    """``expr <= 0`` (kind ``"ineq"``) or ``expr == 0`` (kind ``"eq"``)."""

    expr: Scalar
    kind: str = "ineq"
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("ineq", "eq"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")


def leq(lhs, rhs, label: str = "") -> Constraint:
    return Constraint(Scalar.const(0) + lhs - rhs, "ineq", label)


def equal(lhs, rhs, label: str = "") -> Constraint:
    return Constraint(Scalar.const(0) + lhs - rhs, "eq", label)


@dataclass(frozen=True)
class MatrixExpr:
    entries: tuple[tuple[Scalar, ...], ...]

    @property
    def dim(self) -> int:
        return len(self.entries)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[Scalar]]) -> "MatrixExpr":
        return cls(tuple(tuple(r) for r in rows))

    def is_symmetric(self) -> bool:
        n = self.dim
        return all(
            len(row) == n for row in self.entries
        ) and all(self.entries[i][j] == self.entries[j][i] for i in range(n) for j in range(i))

    def __getitem__(self, ij) -> Scalar:
        i, j = ij
        return self.entries[i][j]

    def evaluate(self, G_par, G_perp, f):
        import numpy as np

        n = self.dim
        out = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                out[i, j] = self.entries[i][j].evaluate(G_par, G_perp, f)
        return out


@dataclass(frozen=True)
class LMI:
    """``matrix`` is required to be positive semidefinite."""

    matrix: MatrixExpr
    label: str = ""


def gram_matrix(rows: Sequence[Point], cols: Sequence[Point]) -> list[list[Scalar]]:
    return [[inner(r, c) for c in cols] for r in rows]
