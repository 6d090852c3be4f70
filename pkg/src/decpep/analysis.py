"""One-call construction and solution of decentralized PEPs."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .consensus import SpectralRange
from .functions import BoundedSubgradient, FunctionClass, SmoothStronglyConvex
from .methods import CONSTANT, MethodParams, MethodTrace, get_method
from .pep import (
    PEP,
    ConsensusStart,
    FValGapAtAveragedIterate,
    InitialCondition,
    InitialGradientSpread,
    MeanSquaredDistance,
    MeanSquaredDistanceAtK,
    PEPProblem,
    PerformanceCriterion,
    apply_criterion,
    apply_initial_condition,
    to_standard_form,
)
from .solvers import Solution, SolverAdapter, solve


@dataclass(frozen=True)
class Setting:
    """Everything that defines a worst-case question except the spectral range."""

    method: str
    K: int
    alpha: float
    function_class: FunctionClass
    initial: InitialCondition
    criterion: PerformanceCriterion
    matrix_mode: str = CONSTANT
    diging_grouping: str = "iteration"
    gauge: bool = True
    gradient_spread: InitialGradientSpread | None = None

    @property
    def params(self) -> MethodParams:
        return MethodParams(self.K, self.alpha, self.matrix_mode, self.diging_grouping)

    def with_(self, **changes) -> "Setting":
        return replace(self, **changes)


def dgd_setting(K: int = 10, alpha: float | None = None, R: float = 1.0, D: float = 1.0,
                matrix_mode: str = CONSTANT) -> Setting:
    """DGD on bounded-subgradient functions, consensus start, averaged-iterate gap."""
    return Setting("dgd", K, K ** -0.5 if alpha is None else alpha, BoundedSubgradient(R),
                   ConsensusStart(D), FValGapAtAveragedIterate(), matrix_mode)


def smooth_setting(method: str, K: int = 10, alpha: float = 0.1, mu: float = 0.1, L: float = 1.0,
                   D: float = 1.0, matrix_mode: str = CONSTANT, S: float | None = None) -> Setting:
    """DIGing / EXTRA style: mean squared distance as initial condition and criterion.

    The spread of the local gradients at ``x^0`` is bounded by ``S`` (default
    ``L * D``, so that the bound scales as ``D^2``).
    """
    spread = InitialGradientSpread(L * D if S is None else S)
    return Setting(method, K, alpha, SmoothStronglyConvex(mu, L), MeanSquaredDistance(D),
                   MeanSquaredDistanceAtK(), matrix_mode, gradient_spread=spread)


def build(setting: Setting) -> tuple[PEP, MethodTrace]:
    pep = PEP()
    pep.optimum()
    x0 = apply_initial_condition(pep, setting.initial)
    trace = get_method(setting.method)(pep, x0, setting.params)
    if setting.gradient_spread is not None:
        setting.gradient_spread.apply(pep, x0)
    apply_criterion(pep, trace, setting.criterion)
    return pep, trace


def spectral_problem(setting: Setting, lam_minus: float, lam_plus: float | None = None) -> PEPProblem:
    """Problem over all symmetric generalized doubly stochastic matrices with
    nontrivial eigenvalues in ``[lam_minus, lam_plus]``; one argument means ``[-lam, lam]``."""
    rng = SpectralRange.symmetric(lam_minus) if lam_plus is None else SpectralRange(lam_minus, lam_plus)
    pep, _ = build(setting)
    return pep.assemble(setting.function_class, spectral=rng, gauge=setting.gauge)


def exact_problem(setting: Setting, lam2) -> PEPProblem:
    """Problem where every matrix acts on the disagreement block as ``lam2 * I``.

    ``lam2`` is a number (all matrices) or a sequence with one value per matrix.
    """
    pep, _ = build(setting)
    ids = pep.registry.ids
    if isinstance(lam2, (int, float)):
        values = {mid: lam2 for mid in ids}
    else:
        lam2 = list(lam2)
        if len(lam2) != len(ids):
            raise ValueError(f"need {len(ids)} values, got {len(lam2)}")
        values = dict(zip(ids, lam2))
    return pep.assemble(setting.function_class, exact_values=values, gauge=setting.gauge)


def solve_problem(problem: PEPProblem, adapter: SolverAdapter | None = None) -> Solution:
    return solve(adapter, to_standard_form(problem))


def worst_case(setting: Setting, lam: float, adapter: SolverAdapter | None = None) -> Solution:
    """Spectral upper bound for the symmetric range ``[-lam, lam]``."""
    return solve_problem(spectral_problem(setting, lam), adapter)
