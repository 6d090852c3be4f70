from fractions import Fraction

import pytest

from decpep.gram import Block, combine
from decpep.methods import (
    TIME_VARYING,
    InvalidTraceError,
    MethodParams,
    averaged_iterate,
    build_dgd,
    build_diging,
    build_extra,
    get_method,
    validate_trace,
)
from decpep.pep import PEP, ConsensusStart, MeanSquaredDistance, apply_initial_condition


def start(consensus=True):
    pep = PEP()
    pep.optimum()
    x0 = apply_initial_condition(pep, ConsensusStart(1.0) if consensus else MeanSquaredDistance(1.0))
    return pep, x0


def n_consensus(pep):
    return sum(len(v) for v in pep.registry.pairs.values())


def test_dgd_k1_counts():
    pep, x0 = start()
    tr = build_dgd(pep, x0, MethodParams(1, 0.5))
    assert n_consensus(pep) == 1
    assert len(tr.evaluations) == 1
    assert len(tr.iterates) == 2


def test_dgd_constant_one_matrix_with_k_columns():
    pep, x0 = start()
    tr = build_dgd(pep, x0, MethodParams(10, 0.1))
    assert len(pep.registry.ids) == 1
    assert pep.registry.columns(pep.registry.ids[0]) == 10
    assert tr.consensus_ids == pep.registry.ids


def test_dgd_time_varying_one_matrix_per_step():
    pep, x0 = start()
    build_dgd(pep, x0, MethodParams(4, 0.1, TIME_VARYING))
    assert [pep.registry.columns(m) for m in pep.registry.ids] == [1] * 4


def test_dgd_par_recursion():
    pep, x0 = start(consensus=False)
    a = Fraction(1, 3)
    tr = build_dgd(pep, x0, MethodParams(3, a))
    for k in range(3):
        expected = combine([(1, tr.iterates[k].par_part), (-a, tr.evaluations[k].grad.par_part)])
        assert tr.iterates[k + 1].par_part == expected


def test_diging_counts_constant():
    pep, x0 = start(False)
    tr = build_diging(pep, x0, MethodParams(10, 0.1))
    assert len(pep.registry.ids) == 1
    assert pep.registry.columns(pep.registry.ids[0]) == 20
    assert len(tr.evaluations) == 11


def test_diging_counts_time_varying():
    pep, x0 = start(False)
    build_diging(pep, x0, MethodParams(10, 0.1, TIME_VARYING))
    assert [pep.registry.columns(m) for m in pep.registry.ids] == [2] * 10


def test_diging_counts_time_varying_per_step():
    pep, x0 = start(False)
    build_diging(pep, x0, MethodParams(10, 0.1, TIME_VARYING, "step"))
    assert [pep.registry.columns(m) for m in pep.registry.ids] == [1] * 20


def test_diging_tracker_equals_mean_gradient():
    pep, x0 = start(False)
    tr = build_diging(pep, x0, MethodParams(5, 0.2))
    for s, e in zip(tr.aux["s"], tr.evaluations):
        assert s.par_part == e.grad.par_part


def test_extra_counts():
    pep, x0 = start(False)
    tr = build_extra(pep, x0, MethodParams(2, 0.1))
    assert n_consensus(pep) == 2
    assert len(tr.evaluations) == 2
    pep, x0 = start(False)
    build_extra(pep, x0, MethodParams(7, 0.1))
    assert [pep.registry.columns(m) for m in pep.registry.ids] == [7]
    pep, x0 = start(False)
    build_extra(pep, x0, MethodParams(7, 0.1, TIME_VARYING))
    assert [pep.registry.columns(m) for m in pep.registry.ids] == [1] * 7


def test_extra_par_recursion():
    # substituting the unchanged consensus part into the update gives
    # xbar+ = 2 xbar - xbar_prev - alpha (gbar - gbar_prev)
    pep, x0 = start(False)
    a = Fraction(1, 4)
    tr = build_extra(pep, x0, MethodParams(4, a))
    xs, gs = tr.iterates, tr.evaluations
    assert xs[1].par_part == combine([(1, xs[0].par_part), (-a, gs[0].grad.par_part)])
    for k in range(1, 4):
        expected = combine(
            [
                (2, xs[k].par_part),
                (-1, xs[k - 1].par_part),
                (-a, gs[k].grad.par_part),
                (a, gs[k - 1].grad.par_part),
            ]
        )
        assert xs[k + 1].par_part == expected


def test_averaged_iterate():
    pep, x0 = start()
    tr = build_dgd(pep, x0, MethodParams(0, 0.1))
    assert averaged_iterate(tr) == x0.par_part
    pep, x0 = start(False)
    tr = build_dgd(pep, x0, MethodParams(3, Fraction(1, 2)))
    av = averaged_iterate(tr)
    assert av.perp == {}
    # x0's consensus leaf carries weight 1 in every iterate, so the average keeps it at 1
    assert av.par[x0.par_part.par.popitem()[0]] == 1
    z = pep.layout.new_leaf(Block.PERP, "z")
    from decpep.gram import inner

    assert inner(av, z).is_zero()


def test_validator_accepts_builders():
    for builder, cons in ((build_dgd, True), (build_diging, False), (build_extra, False)):
        pep, x0 = start(cons)
        tr = builder(pep, x0, MethodParams(3, 0.1))
        validate_trace(pep, tr)


def test_validator_rejects_foreign_leaf_and_operation():
    pep, x0 = start()
    tr = build_dgd(pep, x0, MethodParams(2, 0.1))
    rogue = pep.layout.new_leaf(Block.PAR, "oracle", "free")
    tr.iterates.append(tr.iterates[-1] + rogue)
    with pytest.raises(InvalidTraceError):
        validate_trace(pep, tr)
    pep, x0 = start()
    tr = build_dgd(pep, x0, MethodParams(2, 0.1))
    pep.ops.append(("projection", ""))
    with pytest.raises(InvalidTraceError):
        validate_trace(pep, tr)


def test_params_validation_and_registry():
    with pytest.raises(ValueError):
        MethodParams(1, 0.0)
    with pytest.raises(ValueError):
        MethodParams(-1, 0.1)
    with pytest.raises(ValueError):
        MethodParams(1, 0.1, "sometimes")
    assert get_method("DIGing") is build_diging
    with pytest.raises(ValueError):
        get_method("nids")
