"""Agent-independent performance estimation for decentralized first-order methods.

Worst cases are computed over two Gram blocks, one for the consensus part of
every vector and one for the disagreement part, so problem sizes depend on
the number of iterations only. Averaging matrices enter through their
spectral range.

Typical use::

    from decpep import dgd_setting, worst_case
    worst_case(dgd_setting(K=10), lam=0.5).value
"""

from .analysis import (
    Setting,
    build,
    dgd_setting,
    exact_problem,
    smooth_setting,
    solve_problem,
    spectral_problem,
    worst_case,
)
from .consensus import MatrixClassId, SpectralRange
from .functions import BoundedSubgradient, SmoothStronglyConvex
from .gram import Block, GramLayout, Point, Scalar, combine, inner, sqnorm
from .methods import CONSTANT, TIME_VARYING, MethodParams, build_dgd, build_diging, build_extra
from .pep import (
    PEP,
    ConsensusStart,
    Custom,
    FValGapAtAveragedIterate,
    InitialGradientSpread,
    MeanSquaredDistance,
    MeanSquaredDistanceAtK,
    PEPProblem,
    dump_standard_form,
    to_standard_form,
)
from .reconstruction import PiecewiseLinear, ReconstructionError, reconstruct
from .solvers import (
    ClarabelAdapter,
    CvxpyAdapter,
    ModelingError,
    PEPError,
    Solution,
    SolverFailure,
    Status,
    get_adapter,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "Block",
    "BoundedSubgradient",
    "CONSTANT",
    "ClarabelAdapter",
    "ConsensusStart",
    "Custom",
    "CvxpyAdapter",
    "FValGapAtAveragedIterate",
    "GramLayout",
    "InitialGradientSpread",
    "MatrixClassId",
    "MeanSquaredDistance",
    "MeanSquaredDistanceAtK",
    "MethodParams",
    "ModelingError",
    "PEP",
    "PEPError",
    "PEPProblem",
    "PiecewiseLinear",
    "Point",
    "ReconstructionError",
    "Scalar",
    "Setting",
    "SmoothStronglyConvex",
    "Solution",
    "SolverFailure",
    "SpectralRange",
    "Status",
    "TIME_VARYING",
    "build",
    "build_dgd",
    "build_diging",
    "build_extra",
    "combine",
    "dgd_setting",
    "dump_standard_form",
    "exact_problem",
    "get_adapter",
    "inner",
    "reconstruct",
    "smooth_setting",
    "solve",
    "solve_problem",
    "spectral_problem",
    "sqnorm",
    "to_standard_form",
    "worst_case",
]
