"""Decentralized methods written as traces of elementary PEP operations.

Each builder writes ``K`` iterations of a method into a :class:`~decpep.pep.PEP`
context, starting from a given initial point, and returns a
:class:`MethodTrace`. Builders only touch the context through its operation methods
(see ``ALLOWED_OPS``); :func:`validate_trace` checks that.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .consensus import MatrixClassId
from .functions import Evaluation
from .gram import Point, combine
from .pep import ALLOWED_OPS, PEP

CONSTANT = "constant"
TIME_VARYING = "time-varying"


@dataclass(frozen=True)
class MethodParams:
    K: int
    alpha: float
    matrix_mode: str = CONSTANT
    # time-varying DIGing: one matrix per iteration (x and s share it) or per step
    diging_grouping: str = "iteration"

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be nonnegative")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.matrix_mode not in (CONSTANT, TIME_VARYING):
            raise ValueError(f"unknown matrix mode {self.matrix_mode!r}")
        if self.diging_grouping not in ("iteration", "step"):
            raise ValueError(f"unknown DIGing grouping {self.diging_grouping!r}")


@dataclass
class MethodTrace:
    K: int
    iterates: list[Point]
    evaluations: list[Evaluation] = field(default_factory=list)
    consensus_ids: list[MatrixClassId] = field(default_factory=list)
    aux: dict[str, list[Point]] = field(default_factory=dict)


class _Matrices:
    """Hands out matrix ids following the constant / time-varying convention."""

    def __init__(self, pep: PEP, mode: str):
        self.pep = pep
        self.mode = mode
        self.ids: list[MatrixClassId] = []
        self._shared = None

    def get(self, group: str = "") -> MatrixClassId:
        if self.mode == CONSTANT:
            if self._shared is None:
                self._shared = self.pep.new_matrix("constant")
                self.ids.append(self._shared)
            return self._shared
        mid = self.pep.new_matrix(group)
        self.ids.append(mid)
        return mid


def build_dgd(pep: PEP, x0: Point, params: MethodParams) -> MethodTrace:
    """``x^{k+1} = W x^k - alpha * grad(x^k)``."""
    mats = _Matrices(pep, params.matrix_mode)
    xs, evs = [x0], []
    for k in range(params.K):
        y = pep.consensus(xs[k], mats.get(f"k={k}"))
        e = pep.gradient(xs[k], f"x{k}")
        evs.append(e)
        xs.append(pep.combine([(1, y), (-params.alpha, e.grad)]))
    return MethodTrace(params.K, xs, evs, mats.ids)


def build_diging(pep: PEP, x0: Point, params: MethodParams) -> MethodTrace:
    """Gradient tracking: ``x+ = W x - alpha s``, ``s+ = W s + g(x+) - g(x)``, ``s^0 = g(x^0)``."""
    mats = _Matrices(pep, params.matrix_mode)
    per_step = params.matrix_mode != CONSTANT and params.diging_grouping == "step"
    xs = [x0]
    e = pep.gradient(x0, "x0")
    evs = [e]
    ss = [e.grad]
    for k in range(params.K):
        w_x = mats.get(f"k={k}")
        w_s = mats.get(f"k={k},s") if per_step else w_x
        x_next = pep.combine([(1, pep.consensus(xs[k], w_x)), (-params.alpha, ss[k])])
        e_next = pep.gradient(x_next, f"x{k + 1}")
        s_next = pep.combine(
            [(1, pep.consensus(ss[k], w_s)), (1, e_next.grad), (-1, evs[k].grad)]
        )
        xs.append(x_next)
        evs.append(e_next)
        ss.append(s_next)
    return MethodTrace(params.K, xs, evs, mats.ids, {"s": ss})


def build_extra(pep: PEP, x0: Point, params: MethodParams) -> MethodTrace:
    """EXTRA with ``W2 = (I + W) / 2``.

    ``x^1 = W x^0 - alpha g^0`` and
    ``x^{k+1} = x^k + W x^k - W2 x^{k-1} - alpha (g^k - g^{k-1})``, where
    ``W2 x^{k-1}`` reuses the consensus output computed one step earlier.
    """
    mats = _Matrices(pep, params.matrix_mode)
    half = Fraction(1, 2)
    xs, evs, wx = [x0], [], []
    a = params.alpha
    for k in range(params.K):
        wx.append(pep.consensus(xs[k], mats.get(f"k={k}")))
        evs.append(pep.gradient(xs[k], f"x{k}"))
        if k == 0:
            nxt = pep.combine([(1, wx[0]), (-a, evs[0].grad)])
        else:
            nxt = pep.combine(
                [
                    (1, xs[k]),
                    (1, wx[k]),
                    (-half, xs[k - 1]),
                    (-half, wx[k - 1]),
                    (-a, evs[k].grad),
                    (a, evs[k - 1].grad),
                ]
            )
        xs.append(nxt)
    return MethodTrace(params.K, xs, evs, mats.ids)


METHODS: dict[str, Callable[[PEP, Point, MethodParams], MethodTrace]] = {
    "dgd": build_dgd,
    "diging": build_diging,
    "extra": build_extra,
}


def get_method(name: str):
    try:
        return METHODS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown method {name!r}; known: {', '.join(METHODS)}") from None


def averaged_iterate(trace: MethodTrace) -> Point:
    """Consensus point whose value is the mean of the iterates' consensus parts."""
    w = Fraction(1, len(trace.iterates))
    avg = combine((w, x.par_part) for x in trace.iterates)
    return avg.par_part


class InvalidTraceError(ValueError):
    pass


def validate_trace(pep: PEP, trace: MethodTrace) -> None:
    """Reject traces that use anything but the three decentralized operations.

    Every leaf reachable from the iterates must come from the initial point,
    the optimum, a gradient evaluation (or its implicit point) or a consensus
    output; every operation in the log must be one of the allowed kinds;
    every evaluation must belong to the problem.
    """
    for kind, _ in pep.ops:
        if kind not in ALLOWED_OPS:
            raise InvalidTraceError(f"operation {kind!r} is not allowed")
    allowed = {"initial", "optimum", "gradient", "consensus", "point"}
    lay = pep.layout
    points = list(trace.iterates) + [p for seq in trace.aux.values() for p in seq]
    for p in points:
        for block, coeffs in ((lay.leaves_par, p.par), (lay.leaves_perp, p.perp)):
            for leaf_id in coeffs:
                origin = block[leaf_id].origin
                if origin not in allowed:
                    raise InvalidTraceError(
                        f"leaf {block[leaf_id].label!r} has origin {origin!r}"
                    )
    for e in trace.evaluations:
        if e not in pep.evaluations:
            raise InvalidTraceError(f"evaluation {e.label!r} is not part of the problem")
    registered = set(pep.registry.pairs)
    for mid in trace.consensus_ids:
        if mid not in registered:
            raise InvalidTraceError(f"matrix {mid.id} is not registered")
