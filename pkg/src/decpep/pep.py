"""Assembly of the agent-independent performance estimation problem.

:class:`PEP` is the mutable build context a method writes its iterations
into. :meth:`PEP.assemble` collects everything into an immutable
:class:`PEPProblem`, which :func:`to_standard_form` lowers to numeric arrays
over the upper-triangular entries of the two Gram blocks and the function
values.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .consensus import (
    ConsensusRegistry,
    MatrixClassId,
    SpectralRange,
    exact_scalar_consensus_constraints,
    spectral_constraints,
)
from .functions import Evaluation, EvaluationSet, FunctionClass, fval_gap
from .gram import (
    LMI,
    Block,
    Constraint,
    GramLayout,
    Point,
    Scalar,
    combine,
    leq,
    sqnorm,
)

ALLOWED_OPS = ("gradient", "consensus", "combination")


class PEP:
    """Build context holding the layout and everything constrained over it."""

    def __init__(self):
        self.layout = GramLayout()
        self.evaluations = EvaluationSet(self.layout)
        self.registry = ConsensusRegistry(self.layout)
        self.constraints: list[Constraint] = []
        self.lmis: list[LMI] = []
        self.objective: Scalar | None = None
        self.ops: list[tuple[str, str]] = []

    # -- points that are not produced by a method --------------------------
    def optimum(self) -> Evaluation:
        return self.evaluations.add_optimum()

    @property
    def star(self) -> Evaluation | None:
        return self.evaluations.star

    def initial_point(self, label: str = "x0", consensus: bool = False) -> Point:
        p = self.layout.new_leaf(Block.PAR, label, "initial")
        if not consensus:
            p = p + self.layout.new_leaf(Block.PERP, label + "_perp", "initial")
        return p

    # -- the three operations of decentralized methods ----------------------
    def gradient(self, point: Point | None, label: str) -> Evaluation:
        self.ops.append(("gradient", label))
        return self.evaluations.add(point, label)

    def new_matrix(self, group: str = "") -> MatrixClassId:
        return self.registry.new_matrix(group)

    def consensus(self, point: Point, mid: MatrixClassId) -> Point:
        self.ops.append(("consensus", f"W{mid.id}"))
        return self.registry.step(point, mid)

    def combine(self, terms) -> Point:
        self.ops.append(("combination", ""))
        return combine(terms)

    # -- problem data -------------------------------------------------------
    def add_constraint(self, c: Constraint) -> None:
        self.constraints.append(c)

    def add_lmi(self, lmi: LMI) -> None:
        self.lmis.append(lmi)

    def set_objective(self, expr: Scalar) -> None:
        self.objective = expr

    def assemble(
        self,
        fclass: FunctionClass,
        spectral: SpectralRange | None = None,
        exact_values: dict[MatrixClassId, float] | None = None,
        gauge: bool = True,
    ) -> "PEPProblem":
        """Freeze the layout and gather every constraint.

        Exactly one of ``spectral`` (a range of eigenvalues for every matrix)
        or ``exact_values`` (one fixed eigenvalue per matrix) must be given
        when the method performs consensus steps.
        """
        if self.objective is None:
            raise ValueError("no objective set")
        if spectral is not None and exact_values is not None:
            raise ValueError("give either a spectral range or exact values, not both")
        eqs: list[Constraint] = []
        ineqs: list[Constraint] = []
        lmis = list(self.lmis)
        for c in fclass.interpolation_constraints(self.evaluations):
            (eqs if c.kind == "eq" else ineqs).append(c)
        if self.registry.pairs:
            if exact_values is not None:
                eqs.extend(exact_scalar_consensus_constraints(self.registry, exact_values))
            elif spectral is not None:
                cons, m = spectral_constraints(self.registry, spectral)
                for c in cons:
                    (eqs if c.kind == "eq" else ineqs).append(c)
                lmis.extend(m)
            else:
                raise ValueError("consensus steps present: a spectral range or exact values is required")
        for c in self.constraints:
            (eqs if c.kind == "eq" else ineqs).append(c)
        if gauge and self.star is not None:
            eqs.append(Constraint(self.star.f, "eq", "gauge(f_star=0)"))
        self.layout.freeze()
        return PEPProblem(self.layout, eqs, ineqs, lmis, self.objective, list(self.evaluations))


@dataclass(frozen=True)
class PEPProblem:
    layout: GramLayout
    equalities: list[Constraint]
    inequalities: list[Constraint]
    lmis: list[LMI]
    objective: Scalar
    evaluations: list[Evaluation] = field(default_factory=list)

    def stats(self) -> dict:
        return {
            "n_par": self.layout.size(Block.PAR),
            "n_perp": self.layout.size(Block.PERP),
            "n_fvals": len(self.layout.fvals),
            "n_eq": len(self.equalities),
            "n_ineq": len(self.inequalities),
            "lmi_sizes": [lmi.matrix.dim for lmi in self.lmis],
        }


# -- initial conditions -------------------------------------------------------


@dataclass(frozen=True)
class ConsensusStart:
    """All agents start at the same point, at distance at most ``D`` from the optimum."""

    D: float = 1.0

    def __post_init__(self):
        if not self.D > 0:
            raise ValueError("D must be positive")

    consensus = True

    def apply(self, pep: PEP, x0: Point, star: Evaluation) -> None:
        if x0.perp:
            raise ValueError("consensus start requires an initial point without perp part")
        pep.add_constraint(leq(sqnorm(x0 - star.point), self.D * self.D, "init"))


@dataclass(frozen=True)
class MeanSquaredDistance:
    """Average over agents of ``||x_i^0 - x*||^2`` at most ``D^2``."""

    D: float = 1.0

    def __post_init__(self):
        if not self.D > 0:
            raise ValueError("D must be positive")

    consensus = False

    def apply(self, pep: PEP, x0: Point, star: Evaluation) -> None:
        pep.add_constraint(leq(sqnorm(x0 - star.point), self.D * self.D, "init"))


@dataclass(frozen=True)
class InitialGradientSpread:
    """Disagreement of the local gradients at the starting points at most ``S``.

    In basis b this is ``||g_perp(x^0)||^2 <= S^2``. Without some bound of
    this kind, methods whose first step moves along the local gradients
    (DIGing, EXTRA) have no finite worst case over ``F_{mu,L}``.
    """

    S: float = 1.0

    def __post_init__(self):
        if not self.S > 0:
            raise ValueError("S must be positive")

    def apply(self, pep: PEP, x0: Point) -> None:
        e = next((e for e in pep.evaluations if e.point is x0), None)
        if e is None:
            e = pep.gradient(x0, "x0")
        pep.add_constraint(leq(sqnorm(e.grad.perp_part), self.S * self.S, "init-grad"))


InitialCondition = ConsensusStart | MeanSquaredDistance


def apply_initial_condition(pep: PEP, ic: InitialCondition, label: str = "x0") -> Point:
    """Create the initial point and constrain it; requires the optimum to exist."""
    if pep.star is None:
        raise ValueError("define the optimum before the initial condition")
    x0 = pep.initial_point(label, consensus=ic.consensus)
    ic.apply(pep, x0, pep.star)
    return x0


# -- performance criteria ------------------------------------------------------


class CriterionError(ValueError):
    pass


@dataclass(frozen=True)
class FValGapAtAveragedIterate:
    """``f(x_av) - f(x*)`` with ``x_av`` the average over all iterates and agents."""

    name = "fval-gap-avg"

    def apply(self, pep: PEP, trace) -> Scalar:
        from .methods import averaged_iterate

        if trace.iterates is None or len(trace.iterates) != trace.K + 1:
            raise CriterionError("averaged-iterate criterion needs the full iterate list")
        x_av = averaged_iterate(trace)
        e = pep.evaluations.add(x_av, "x_av")
        return fval_gap(pep.evaluations, e, pep.star)


@dataclass(frozen=True)
class MeanSquaredDistanceAtK:
    """Average over agents of ``||x_i^K - x*||^2``."""

    name = "msd-last"

    def apply(self, pep: PEP, trace) -> Scalar:
        if not trace.iterates:
            raise CriterionError("trace has no iterates")
        return sqnorm(trace.iterates[-1] - pep.star.point)


@dataclass(frozen=True)
class Custom:
    expr: Scalar = field(default_factory=Scalar)
    name = "custom"

    def apply(self, pep: PEP, trace) -> Scalar:
        return self.expr


PerformanceCriterion = FValGapAtAveragedIterate | MeanSquaredDistanceAtK | Custom


def apply_criterion(pep: PEP, trace, crit: PerformanceCriterion) -> Scalar:
    obj = crit.apply(pep, trace)
    pep.set_objective(obj)
    return obj


# -- standard form -------------------------------------------------------------


def triu_index(i: int, j: int) -> int:
    """Position of ``(i, j)``, ``i <= j``, in column-major upper-triangular order."""
    if i > j:
        i, j = j, i
    return j * (j + 1) // 2 + i


def triu_len(n: int) -> int:
    return n * (n + 1) // 2


@dataclass
class SDPStandardForm:
    """Numeric SDP over ``v = [triu(G_par), triu(G_perp), f]``.

    * ``A_eq v + b_eq == 0`` and ``A_in v + b_in <= 0``;
    * ``G_par``, ``G_perp`` PSD;
    * for each LMI, ``A v + b`` (upper triangle, column-major) is a PSD matrix;
    * maximize ``c v + c0``.
    """

    n_par: int
    n_perp: int
    n_f: int
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_in: sp.csr_matrix
    b_in: np.ndarray
    lmis: list[tuple[int, sp.csr_matrix, np.ndarray]]
    c: np.ndarray
    c0: float
    eq_labels: list[str]
    in_labels: list[str]
    lmi_labels: list[str]

    @property
    def n_var(self) -> int:
        return triu_len(self.n_par) + triu_len(self.n_perp) + self.n_f

    @property
    def offsets(self) -> dict[str, int]:
        return {"par": 0, "perp": triu_len(self.n_par), "f": triu_len(self.n_par) + triu_len(self.n_perp)}

    def stats(self) -> dict:
        return {
            "n_par": self.n_par,
            "n_perp": self.n_perp,
            "n_fvals": self.n_f,
            "n_var": self.n_var,
            "n_eq": self.A_eq.shape[0],
            "n_ineq": self.A_in.shape[0],
            "lmi_sizes": [dim for dim, _, _ in self.lmis],
        }

    def pack(self, G_par, G_perp, f) -> np.ndarray:
        v = np.zeros(self.n_var)
        off = self.offsets
        for n, G, o in ((self.n_par, G_par, off["par"]), (self.n_perp, G_perp, off["perp"])):
            for j in range(n):
                for i in range(j + 1):
                    v[o + triu_index(i, j)] = G[i, j]
        v[off["f"]:] = f
        return v

    def unpack(self, v) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        off = self.offsets
        return (
            _sym_from_triu(v[off["par"]:off["perp"]], self.n_par),
            _sym_from_triu(v[off["perp"]:off["f"]], self.n_perp),
            np.asarray(v[off["f"]:], dtype=float),
        )

    def objective_value(self, v) -> float:
        return float(self.c @ v + self.c0)

    def residuals(self, v) -> dict[str, float]:
        """Violation of each constraint family at ``v`` (0 means satisfied)."""
        G_par, G_perp, _ = self.unpack(v)
        eq = np.abs(self.A_eq @ v + self.b_eq)
        ineq = np.maximum(self.A_in @ v + self.b_in, 0.0)
        out = {
            "eq": float(eq.max(initial=0.0)),
            "ineq": float(ineq.max(initial=0.0)),
            "psd": max(_neg_part(G_par), _neg_part(G_perp)),
            "lmi": 0.0,
        }
        for dim, A, b in self.lmis:
            out["lmi"] = max(out["lmi"], _neg_part(_sym_from_triu(A @ v + b, dim)))
        return out


def _neg_part(M) -> float:
    if M.size == 0:
        return 0.0
    return float(max(0.0, -np.linalg.eigvalsh(M).min()))


def _sym_from_triu(t, n: int) -> np.ndarray:
    M = np.zeros((n, n))
    k = 0
    for j in range(n):
        for i in range(j + 1):
            M[i, j] = M[j, i] = t[k]
            k += 1
    return M


def _rows(exprs: Sequence[Scalar], offsets: dict, n_var: int):
    data, rows, cols = [], [], []
    b = np.zeros(len(exprs))
    for r, e in enumerate(exprs):
        for (block, i, j), c in e.gram.items():
            base = offsets["par"] if block is Block.PAR else offsets["perp"]
            rows.append(r)
            cols.append(base + triu_index(i, j))
            data.append(float(c))
        for k, c in e.fvals.items():
            rows.append(r)
            cols.append(offsets["f"] + k)
            data.append(float(c))
        b[r] = float(e.constant)
    A = sp.csr_matrix((data, (rows, cols)), shape=(len(exprs), n_var))
    A.sum_duplicates()
    return A, b


def to_standard_form(problem: PEPProblem) -> SDPStandardForm:
    lay = problem.layout
    if not lay.frozen:
        raise ValueError("layout must be frozen before emission")
    n_par, n_perp, n_f = lay.size(Block.PAR), lay.size(Block.PERP), len(lay.fvals)
    off = {"par": 0, "perp": triu_len(n_par), "f": triu_len(n_par) + triu_len(n_perp)}
    n_var = off["f"] + n_f
    A_eq, b_eq = _rows([c.expr for c in problem.equalities], off, n_var)
    A_in, b_in = _rows([c.expr for c in problem.inequalities], off, n_var)
    lmis = []
    for lmi in problem.lmis:
        M = lmi.matrix
        if not M.is_symmetric():
            raise ValueError(f"LMI {lmi.label!r} is not structurally symmetric")
        entries = [M[i, j] for j in range(M.dim) for i in range(j + 1)]
        A, b = _rows(entries, off, n_var)
        lmis.append((M.dim, A, b))
    c_row, c0 = _rows([problem.objective], off, n_var)
    return SDPStandardForm(
        n_par,
        n_perp,
        n_f,
        A_eq,
        b_eq,
        A_in,
        b_in,
        lmis,
        np.asarray(c_row.todense()).ravel(),
        float(c0[0]),
        [c.label for c in problem.equalities],
        [c.label for c in problem.inequalities],
        [lmi.label for lmi in problem.lmis],
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def dump_standard_form(form: SDPStandardForm, problem: PEPProblem | None = None) -> str:
    """Deterministic plain-text rendering, one nonzero per line."""
    out = io.StringIO()
    st = form.stats()
    out.write("# decpep standard form\n")
    for k in ("n_par", "n_perp", "n_fvals", "n_var", "n_eq", "n_ineq"):
        out.write(f"{k} {st[k]}\n")
    out.write("lmi_sizes " + " ".join(str(s) for s in st["lmi_sizes"]) + "\n")
    if problem is not None:
        for block, leaves in (("par", problem.layout.leaves_par), ("perp", problem.layout.leaves_perp)):
            for leaf in leaves:
                out.write(f"leaf {block} {leaf.id} {leaf.origin} {leaf.label}\n")
        for s in problem.layout.fvals:
            out.write(f"fval {s.id} {s.label}\n")

    def block(name, A, b, labels):
        A = A.tocsr()
        for r in range(A.shape[0]):
            out.write(f"{name} {r} {labels[r] if labels else ''} const {_fmt(b[r])}\n")
            lo, hi = A.indptr[r], A.indptr[r + 1]
            for idx in np.argsort(A.indices[lo:hi], kind="stable"):
                out.write(f"  {A.indices[lo + idx]} {_fmt(A.data[lo + idx])}\n")

    block("eq", form.A_eq, form.b_eq, form.eq_labels)
    block("ineq", form.A_in, form.b_in, form.in_labels)
    for k, (dim, A, b) in enumerate(form.lmis):
        out.write(f"lmi {k} {form.lmi_labels[k]} dim {dim}\n")
        block(" entry", A, b, None)
    out.write(f"objective const {_fmt(form.c0)}\n")
    for i in np.flatnonzero(form.c):
        out.write(f"  {i} {_fmt(form.c[i])}\n")
    return out.getvalue()


__all__ = [
    "PEP",
    "PEPProblem",
    "ConsensusStart",
    "MeanSquaredDistance",
    "InitialGradientSpread",
    "FValGapAtAveragedIterate",
    "MeanSquaredDistanceAtK",
    "Custom",
    "SDPStandardForm",
    "apply_initial_condition",
    "apply_criterion",
    "to_standard_form",
    "dump_standard_form",
]
