"""Acceptance criteria 1 to 10. Each check records one or more lines in the terminal summary.

Optimized step sizes are cached for the module so that the ordering and
anchor checks share them. Every Clarabel solve made here is reconstructed
on the fly; criterion 8 inspects that log at the end.
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from centralized import agent_dgd_pep, subgradient_pep
from decpep import analysis
from decpep.consensus import SpectralRange, spectral_constraints
from decpep.experiments import ExperimentConfig, bound_at, optimize_alpha, run_sweep
from decpep.functions import (
    BoundedSubgradient,
    EvaluationSet,
    SmoothStronglyConvex,
    add_evaluation,
    interpolation_constraints,
)
from decpep.gram import GramLayout, inner, sqnorm
from decpep.methods import CONSTANT, TIME_VARYING
from decpep.reconstruction import reconstruction_residuals
from decpep.solvers import ClarabelAdapter, PEPError
from decpep.verification import scalar_oracle, soundness_sweep
from explicit import explicit_consensus_problem, max_violation

LAMS = (0.3, 0.6, 0.9)


def verdict(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


class ReconstructionLog:
    """Reconstruction residuals of every successful Clarabel solve, tagged by phase.

    Solves made while searching for a step size are tagged ``search``; all
    other solves produce values that some criterion reports.
    """

    def __init__(self):
        self.entries = []
        self.phase = "reported"

    def add(self, value, status, cons, obj):
        self.entries.append((self.phase, value, status, cons, obj))


@pytest.fixture(scope="module", autouse=True)
def reconstruction_log():
    log = ReconstructionLog()
    original = ClarabelAdapter.solve

    def solve_and_reconstruct(self, form):
        sol = original(self, form)
        if sol.status.ok:
            res = reconstruction_residuals(sol, form)
            cons = max(v for k, v in res.items() if k != "objective")
            log.add(sol.value, sol.status.value, cons, res["objective"])
        return sol

    with pytest.MonkeyPatch.context() as mp:
        mp.setattr(ClarabelAdapter, "solve", solve_and_reconstruct)
        yield log


@pytest.fixture(scope="module")
def optimized(reconstruction_log):
    cache = {}

    def get(method: str, mode: str, K: int, lam: float):
        key = (method, mode, K, lam)
        if key not in cache:
            cfg = ExperimentConfig(method=method, K=K, matrix_mode=mode, mu=0.1, L=1.0)
            reconstruction_log.phase = "search"
            try:
                res = optimize_alpha(cfg, lam)
            except PEPError as exc:
                res = exc
            finally:
                reconstruction_log.phase = "reported"
            if not isinstance(res, PEPError):
                # the reported value, solved again outside the search
                bound_at(cfg, lam, res.alpha)
            cache[key] = res
        return cache[key]

    return get


# -- 1 ----------------------------------------------------------------------------------------


@pytest.mark.parametrize("K", range(1, 11))
def test_c1_centralized_reduction(K, acceptance):
    spectral = analysis.worst_case(analysis.dgd_setting(K), 0.0).value
    central = subgradient_pep(K, K ** -0.5)
    rel = abs(spectral - central) / abs(central)
    ok = rel <= 1e-5
    acceptance.record(1, verdict(ok), f"K={K}: lambda=0 bound {spectral:.8f}, centralized {central:.8f}, rel {rel:.1e}")
    assert ok, f"K={K}: {spectral} vs centralized {central}"


@pytest.mark.parametrize("K", range(1, 6))
def test_c1_lambda_zero_matches_agentwise_two_agent_pep(K, acceptance):
    """At lambda=0 the agents still disagree after each local step, and the
    exact agent-by-agent model with two agents reaches the spectral value."""
    spectral = analysis.worst_case(analysis.dgd_setting(K), 0.0).value
    agents = agent_dgd_pep(K, K ** -0.5, np.full((2, 2), 0.5))
    rel = abs(spectral - agents) / agents
    acceptance.record(1, "NOTE", f"K={K}: agent-by-agent two-agent value {agents:.8f}, rel {rel:.1e}")
    assert rel <= 1e-5


# -- 2 ----------------------------------------------------------------------------------------


@pytest.mark.parametrize("lam", LAMS)
def test_c2_two_agent_oracle_tightness(lam, acceptance):
    setting = analysis.dgd_setting(5)
    bound = analysis.worst_case(setting, lam).value
    orc = scalar_oracle(setting, lam)
    ok = orc.value >= 0.99 * bound and orc.value <= bound + 1e-6
    acceptance.record(2, verdict(ok), f"lambda={lam}: oracle {orc.value:.8f} at {orc.argmax:+.3f}, "
                                      f"bound {bound:.8f}, ratio {orc.value / bound:.6f}")
    assert ok


# -- 3 ----------------------------------------------------------------------------------------


def test_c3_soundness(acceptance):
    settings = []
    for mode in (CONSTANT, TIME_VARYING):
        settings.append(analysis.dgd_setting(10, matrix_mode=mode))
        settings.append(analysis.smooth_setting("diging", K=10, alpha=0.2, matrix_mode=mode))
        settings.append(analysis.smooth_setting("extra", K=10, alpha=0.2, matrix_mode=mode))
    recs = soundness_sweep(settings, lams=LAMS, n_instances=100, seed=0)
    bad = [r for r in recs if not r.ok]
    worst = max(r.simulated / r.bound for r in recs)
    acceptance.record(3, verdict(not bad), f"{len(recs)} instances, {len(bad)} violations, "
                                           f"largest simulated/bound {worst:.4f}")
    assert not bad, bad[:3]


# -- 4 ----------------------------------------------------------------------------------------


@pytest.mark.parametrize("method,alpha", [("dgd", 10 ** -0.5), ("diging", 0.1)])
def test_c4_monotone_in_lambda(method, alpha, acceptance):
    rows = run_sweep(ExperimentConfig(method=method, K=10, alpha=alpha))
    assert all(r.ok for r in rows)
    b = [r.bound for r in rows]
    drops = [b[i] - b[i + 1] for i in range(len(b) - 1)]
    ok = max(drops) <= 1e-7
    acceptance.record(4, verdict(ok), f"{method} alpha={alpha:.4f}: bounds {b[0]:.5g} .. {b[-1]:.5g}, "
                                      f"largest decrease {max(max(drops), 0.0):.1e}")
    assert ok


# -- 5 ----------------------------------------------------------------------------------------


@pytest.mark.parametrize("lam", LAMS)
def test_c5_diging_time_varying_equals_constant(lam, optimized, acceptance):
    c = optimized("diging", CONSTANT, 5, lam)
    t = optimized("diging", TIME_VARYING, 5, lam)
    rel = abs(t.bound - c.bound) / c.bound
    ok = rel <= 1e-4
    acceptance.record(5, verdict(ok), f"lambda={lam}: constant {c.bound:.8f} (alpha {c.alpha:.4f}), "
                                      f"time-varying {t.bound:.8f} (alpha {t.alpha:.4f}), rel {rel:.1e}")
    assert ok


# -- 6 ----------------------------------------------------------------------------------------


@pytest.mark.parametrize("lam", LAMS)
def test_c6_extra_constant_not_worse_than_diging(lam, optimized, acceptance):
    e = optimized("extra", CONSTANT, 10, lam)
    d = optimized("diging", CONSTANT, 10, lam)
    ok = e.bound <= d.bound + 1e-7
    acceptance.record(6, verdict(ok), f"lambda={lam}: EXTRA {e.bound:.6g} (alpha {e.alpha:.4f}) "
                                      f"<= DIGing {d.bound:.6g} (alpha {d.alpha:.4f})")
    assert ok


def test_c6_extra_time_varying_blows_up(optimized, acceptance):
    e = optimized("extra", TIME_VARYING, 10, 0.9)
    d = optimized("diging", TIME_VARYING, 10, 0.9)
    if isinstance(e, PEPError) or isinstance(d, PEPError):
        acceptance.record(6, "SOFT", f"lambda=0.9 time-varying: solver gave no finite bound ({e or d})")
        return
    ratio = e.bound / d.bound
    ok = ratio >= 10
    acceptance.record(6, verdict(ok), f"lambda=0.9 time-varying: EXTRA {e.bound:.6g} (alpha {e.alpha:.4f}), "
                                      f"DIGing {d.bound:.6g}, ratio {ratio:.1f}")
    assert ok


# -- 7 ----------------------------------------------------------------------------------------


@pytest.mark.parametrize("lam", (0.3, 0.6))
def test_c7_step_size_anchor(lam, optimized, acceptance):
    res = optimized("diging", CONSTANT, 10, lam)
    anchor = 0.44 * (1 - lam) ** 2
    factor = max(res.alpha / anchor, anchor / res.alpha)
    state = "PASS" if factor <= 2 else "SOFT" if factor <= 5 else "FAIL"
    acceptance.record(7, state, f"lambda={lam}: alpha* {res.alpha:.4f}, anchor {anchor:.4f}, "
                                f"factor {factor:.2f}, bound {res.bound:.6g}")
    assert factor <= 5


# -- 9 ----------------------------------------------------------------------------------------


@pytest.mark.parametrize("D,R", [(2.0, 1.0), (1.0, 3.0)])
def test_c9_bounded_subgradient_scaling(D, R, acceptance):
    K, lam = 10, 0.5
    base = analysis.worst_case(analysis.dgd_setting(K), lam).value
    # the step size scales as D / R, which keeps the iteration homogeneous
    scaled = analysis.worst_case(analysis.dgd_setting(K, alpha=D / (R * math.sqrt(K)), R=R, D=D), lam).value
    rel = abs(scaled - D * R * base) / (D * R * base)
    ok = rel <= 1e-5
    acceptance.record(9, verdict(ok), f"DGD (D,R)=({D:g},{R:g}): {scaled:.8f} vs {D * R * base:.8f}, rel {rel:.1e}")
    assert ok


@pytest.mark.parametrize("method", ["diging", "extra"])
def test_c9_smooth_scaling(method, acceptance):
    lam, D = 0.5, 2.0
    base = analysis.worst_case(analysis.smooth_setting(method, K=5, alpha=0.2), lam).value
    scaled = analysis.worst_case(analysis.smooth_setting(method, K=5, alpha=0.2, D=D), lam).value
    rel = abs(scaled - D * D * base) / (D * D * base)
    ok = rel <= 1e-5
    acceptance.record(9, verdict(ok), f"{method} D={D:g}: {scaled:.8f} vs {D * D * base:.8f}, rel {rel:.1e}")
    assert ok


# -- 10 ---------------------------------------------------------------------------------------


def test_c10_constraint_counts(acceptance):
    wrong = []
    for n in range(1, 7):
        ev = EvaluationSet(GramLayout())
        for i in range(n):
            add_evaluation(ev, None, f"x{i}")
        if len(interpolation_constraints(ev, SmoothStronglyConvex(0.1, 1.0))) != n * (n - 1):
            wrong.append(("smooth", n))
        if len(interpolation_constraints(ev, BoundedSubgradient(1.0))) != n * (n - 1) + n:
            wrong.append(("bounded", n))
    acceptance.record(10, verdict(not wrong), f"constraint counts for n=1..6, mismatches {wrong}")
    assert not wrong


def test_c10_mu_to_zero_reduction(acceptance):
    lay = GramLayout()
    ev = EvaluationSet(lay)
    es = [add_evaluation(ev, None, f"x{i}") for i in range(3)]
    L = Fraction(2)
    exact = interpolation_constraints(ev, SmoothStronglyConvex(0, L))
    expected = [
        j.f - i.f + inner(j.grad, i.point - j.point) + sqnorm(i.grad - j.grad) / (2 * L)
        for i in es for j in es if i is not j
    ]
    identity = [c.expr for c in exact] == expected
    # and the strongly convex coefficients converge to these as mu -> 0
    near = interpolation_constraints(ev, SmoothStronglyConvex(1e-10, 2.0))
    dev = 0.0
    for a, b in zip(near, exact):
        keys = set(a.expr.gram) | set(b.expr.gram)
        dev = max(dev, max(abs(float(a.expr.gram.get(k, 0)) - float(b.expr.gram.get(k, 0))) for k in keys))
    ok = identity and dev <= 1e-9
    acceptance.record(10, verdict(ok), f"mu=0 identity {identity}, coefficient gap at mu=1e-10 {dev:.1e}")
    assert ok


def test_c10_feasibility_completeness(acceptance):
    rng = np.random.default_rng(2024)
    worst, n = 0.0, 0
    for k in range(2, 7):
        for _ in range(40):
            lm = rng.uniform(-0.95, 0.95)
            lp = min(lm + rng.uniform(0, 0.9), 0.99)
            reg, G = explicit_consensus_problem(rng, k, lm, lp, m=int(rng.integers(k, k + 4)))
            cons, lmis = spectral_constraints(reg, SpectralRange(lm, lp))
            worst = max(worst, max_violation(cons, lmis, G))
            n += 1
    ok = worst <= 1e-9
    acceptance.record(10, verdict(ok), f"{n} explicit (M, X) samples at sizes 2..6, largest relative violation {worst:.1e}")
    assert ok


# -- 8 (runs last: inspects every solve above) -----------------------------------------------------


def test_c8_reconstruction_fidelity(reconstruction_log, acceptance):
    if not reconstruction_log.entries:
        # running alone: exercise one problem per method
        for s in (analysis.dgd_setting(5), analysis.smooth_setting("diging", 5, 0.2),
                  analysis.smooth_setting("extra", 5, 0.2, matrix_mode=TIME_VARYING)):
            analysis.worst_case(s, 0.6)
    entries = reconstruction_log.entries
    reported = [e for e in entries if e[0] == "reported"]
    cons = max(e[3] for e in reported)
    obj = max(e[4] for e in reported)
    ok = cons <= 1e-6 and obj <= 1e-6
    acceptance.record(8, verdict(ok), f"{len(reported)} reported solutions: largest constraint violation "
                                      f"{cons:.1e}, objective error {obj:.1e} (absolute)")
    search = [e for e in entries if e[0] == "search"]
    if search:
        misses = [e for e in search if max(e[3], e[4]) > 1e-6]
        rel = max(max(e[3], e[4]) / max(1.0, abs(e[1])) for e in search)
        if misses:
            smallest = min(abs(e[1]) for e in misses)
            acceptance.record(8, "SOFT", f"{len(search)} step-size search solves: {len(misses)} miss 1e-6 absolute, "
                                         f"all with bounds >= {smallest:.3g}; largest violation relative to the "
                                         f"bound {rel:.1e}")
        else:
            acceptance.record(8, "PASS", f"{len(search)} step-size search solves within 1e-6 absolute")
        assert rel <= 1e-6
    assert ok
