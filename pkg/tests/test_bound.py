import json
import math
from fractions import Fraction

import numpy as np
import pytest

from tanglebound.bound import (
    BoundProblem,
    Certificate,
    Decomposition,
    Measure,
    OptimizerSettings,
    SearchSpace,
    Status,
    bound_via_convexification,
    certify_decomposition,
    constrained_pure_minimum,
    equivalence_report,
    fidelity_curve,
    fidelity_problem,
    inner_infimum,
    legendre_bound,
    legendre_sweep,
    noisy_ghz_fidelity,
    noisy_ghz_state,
    restricted_problem,
    skew_problem,
)
from tanglebound.charcurve import benchmarks, restricted_bound_analytic, skew_characteristic, tau3_closed_form, z_state
from tanglebound.qstate import GHZ, W, W_BAR, expectation, projector, projector_witness, three_tangle

FAST = OptimizerSettings(restarts=16)
SPAN = SearchSpace.span(GHZ, W)


def rho_test(p):
    return p * GHZ.projector() + (1 - p) * W.projector()


# -- types -------------------------------------------------------------------------


def test_problem_json_round_trip():
    prob = BoundProblem(
        (projector(GHZ), projector_witness(W, 0.0)), (0.1, -0.4), Measure.TAU3_SQ, SPAN,
        OptimizerSettings(restarts=5, seed=3),
    )
    back = BoundProblem.from_json(json.loads(json.dumps(prob.to_json())))
    assert back.measured == prob.measured and back.measure is Measure.TAU3_SQ
    assert np.allclose(back.space.basis, SPAN.basis)
    assert back.settings == prob.settings
    for a, b in zip(back.witnesses, prob.witnesses):
        assert np.array_equal(a.matrix, b.matrix)


def test_validation():
    wit = projector(GHZ)
    with pytest.raises(ValueError):
        BoundProblem((wit, wit, wit), (0, 0, 0))
    with pytest.raises(ValueError):
        BoundProblem((wit,), (0.0, 1.0))
    with pytest.raises(ValueError):
        SearchSpace.span(GHZ, GHZ)
    with pytest.raises(ValueError):
        OptimizerSettings(r_box=(1.0, -1.0))
    with pytest.raises(ValueError):
        OptimizerSettings.from_json({"restart": 3})
    with pytest.raises(ValueError):
        inner_infimum(BoundProblem((wit,), (0.5,)), [25.0])
    with pytest.raises(ValueError):
        inner_infimum(BoundProblem((wit,), (0.5,)), [1.0, 2.0])


def test_spaces():
    assert SearchSpace.full().dim == 8
    sym = SearchSpace.symmetric()
    assert sym.dim == 4 and np.allclose(sym.basis.conj().T @ sym.basis, np.eye(4))
    assert SearchSpace.from_json(SPAN.to_json()).dim == 2


# -- inner infimum -------------------------------------------------------------------


def test_inner_infimum_at_zero_multiplier_is_min_tangle():
    prob = BoundProblem((projector_witness(GHZ, 0.0),), (-0.3,), settings=FAST)
    res = inner_infimum(prob, [0.0])
    assert res.value == pytest.approx(0.0, abs=1e-8)
    assert three_tangle(res.argmin).tau3 <= 1e-8


def test_inner_infimum_positive_multiplier_is_trivial():
    p, r = 0.8, 1.5
    prob = fidelity_problem(p, settings=FAST)
    assert inner_infimum(prob, [r]).value == pytest.approx(-r * p, abs=1e-6)


def test_inner_infimum_double_minimum_at_r1():
    b = benchmarks()
    p = 0.85
    res = inner_infimum(restricted_problem(p), [b.r1])
    at_q1 = b.r1 * (b.q1 - p) + tau3_closed_form(b.q1)
    at_1 = b.r1 * (1 - p) + 1.0
    assert at_q1 == pytest.approx(at_1, abs=1e-6)
    assert res.value == pytest.approx(at_q1, abs=1e-6)
    q = res.argmin.fidelity(GHZ)
    assert min(abs(q - b.q1), abs(q - 1)) <= 1e-3


# -- dual bound ----------------------------------------------------------------------


def test_restricted_legendre_examples():
    b = benchmarks()
    low, high = legendre_sweep(restricted_problem(), [0.0, 0.5 - 0.85])
    assert low.epsilon == pytest.approx(0.0, abs=1e-9)
    assert low.status is Status.TRIVIAL_ZERO
    assert high.epsilon == pytest.approx(1 - abs(b.r1) * 0.15, abs=1e-3)
    assert high.r_star[0] == pytest.approx(b.r1, abs=1e-3)
    assert high.status is Status.CONVERGED


def test_result_invariants():
    res = legendre_bound(restricted_problem(0.9))
    best = max(v for _, v in res.trace)
    assert res.epsilon == max(0.0, best)
    assert all(v <= res.epsilon + 1e-6 for _, v in res.trace)
    data = res.to_json(include_trace=True)
    assert data["status"] == "CONVERGED" and len(data["trace"]) == len(res.trace)


def test_full_space_fidelity_endpoints():
    at_three_quarters, at_one = fidelity_curve([0.75, 1.0])
    assert at_three_quarters.epsilon == pytest.approx(0.0, abs=1e-3)
    assert at_one.epsilon == pytest.approx(1.0, abs=1e-3)


def test_dual_is_concave_in_r():
    res = legendre_sweep(restricted_problem(), [0.5 - 0.8])[0]
    pts = sorted((k[0], v) for k, v in res.trace)
    rs = np.array([p[0] for p in pts])
    vs = np.array([p[1] for p in pts])
    for i in range(1, rs.size - 1):
        lam = (rs[i] - rs[i - 1]) / (rs[i + 1] - rs[i - 1])
        chord = (1 - lam) * vs[i - 1] + lam * vs[i + 1]
        assert vs[i] >= chord - 1e-6


def test_bound_is_convex_in_fidelity():
    ps = np.linspace(0.7, 1.0, 16)
    eps = np.array([r.epsilon for r in fidelity_curve(ps, space="symmetric")])
    assert np.min(np.diff(eps, 2)) >= -1e-6


@pytest.mark.parametrize("c", [-1.0, 0.37, 2.0])
def test_identity_shift_invariance(c):
    base = restricted_problem(0.85)
    shifted = BoundProblem((base.witnesses[0].shifted(c),), (base.measured[0] + c,), space=SPAN)
    assert legendre_bound(shifted).epsilon == pytest.approx(legendre_bound(base).epsilon, abs=1e-6)


@pytest.mark.parametrize("measure", [Measure.TAU3, Measure.TAU3_SQ])
def test_skew_weight_lowers_the_bound(measure):
    ps = np.linspace(0, 1, 50)
    eps = {
        om: np.array([r.epsilon for r in legendre_sweep(skew_problem(om, measure=measure), -ps)])
        for om in (0.0, 1.0, -1.0)
    }
    assert np.all(eps[1.0] <= eps[0.0] + 1e-6)
    assert np.all(eps[-1.0] <= eps[1.0] + 1e-6)


def test_two_witness_zero_in_span():
    prob = BoundProblem((projector(GHZ), projector(W)), (0.0, 1.0), space=SPAN)
    assert legendre_bound(prob).epsilon == pytest.approx(0.0, abs=1e-6)


def test_two_witness_positive_bound_in_span():
    # pi_GHZ = q and pi_W = 1 - q on the span, so the second witness adds nothing
    b = benchmarks()
    prob = BoundProblem((projector(GHZ), projector(W)), (0.85, 0.15), space=SPAN)
    assert legendre_bound(prob).epsilon == pytest.approx(1 - abs(b.r1) * 0.15, abs=1e-3)


def test_iteration_cap_is_reported():
    prob = restricted_problem(0.9, settings=OptimizerSettings(restarts=4, max_inner_iterations=1))
    assert legendre_bound(prob).status is Status.MAX_ITER


def test_determinism_and_thread_independence():
    prob = fidelity_problem(0.9, settings=OptimizerSettings(restarts=8, seed=5))
    a = legendre_bound(prob)
    b = legendre_bound(prob)
    c = legendre_bound(BoundProblem(prob.witnesses, prob.measured,
                                    settings=OptimizerSettings(restarts=8, seed=5, threads=3)))
    assert a.trace == b.trace == c.trace
    assert a.epsilon == b.epsilon == c.epsilon


def test_symmetric_space_agrees_on_a_few_points():
    ps = [0.8, 0.9, 0.97]
    full = [r.epsilon for r in fidelity_curve(ps, settings=FAST)]
    sym = [r.epsilon for r in fidelity_curve(ps, settings=FAST, space="symmetric")]
    assert np.allclose(full, sym, atol=5e-3)


# -- primal route ------------------------------------------------------------------


def test_constrained_curve_is_characteristic_curve():
    qs = np.linspace(0, 1, 41)
    prob = BoundProblem((projector(GHZ),), (0.0,), space=SPAN)
    curve = constrained_pure_minimum(prob, qs)
    assert np.max(np.abs(curve.ys - tau3_closed_form(qs))) <= 1e-8
    assert np.allclose(curve.extras["residuals"], 0.0)


def test_constrained_skew_curve_matches_closed_form():
    ps = np.linspace(0, 1, 21)
    curve = constrained_pure_minimum(skew_problem(1.0, measure=Measure.TAU3), -ps)
    closed = [skew_characteristic(-w, 1.0, branch="negative") for w in curve.xs]
    assert np.max(np.abs(curve.ys - closed)) <= 1e-6


def test_constrained_fidelity_three_quarters():
    curve = constrained_pure_minimum(fidelity_problem(settings=FAST), [0.0, -0.1])
    assert curve.ys[curve.xs == 0.0][0] == pytest.approx(0.0, abs=1e-3)


def test_infeasible_targets_are_dropped():
    prob = BoundProblem((projector(GHZ),), (0.0,), space=SPAN)
    curve = constrained_pure_minimum(prob, [-0.5, 0.2, 0.6, 1.5])
    assert list(curve.xs) == [0.2, 0.6]
    assert len(curve.extras["infeasible"]) == 2


def test_penalty_path_with_two_witnesses():
    prob = BoundProblem((projector(GHZ), projector(W)), (0.0, 0.0), space=SPAN, settings=FAST)
    targets = [(0.3, 0.7), (0.8, 0.2), (0.5, 0.8)]
    curve = constrained_pure_minimum(prob, targets)
    assert list(curve.xs) == [0.3, 0.8]
    assert np.all(curve.extras["residuals"] <= 1e-6)
    assert np.allclose(curve.ys, tau3_closed_form(np.array([0.3, 0.8])), atol=1e-6)
    assert curve.extras["infeasible"] == [(0.5, 0.8)]


def test_convexified_restricted_bound():
    ps = np.linspace(0, 1, 200)
    conv = bound_via_convexification(BoundProblem((projector(GHZ),), (0.0,), space=SPAN), ps)
    assert np.max(np.abs(conv.ys - restricted_bound_analytic(conv.xs))) <= 1e-3


def test_hull_lies_below_pure_curve_near_full_fidelity():
    ps = np.linspace(0.9, 1.0, 11)
    conv = bound_via_convexification(fidelity_problem(space="symmetric", settings=FAST), 0.75 - ps)
    pure, env = conv.extras["pure_curve"], conv.extras["envelope"]
    top = (0.75 - pure.xs) >= 0.9
    assert np.max(pure.ys[top] - env(pure.xs[top])) > 1e-4


def test_restricted_equivalence():
    rep = equivalence_report(restricted_problem(), 0.5 - np.linspace(0, 1, 100))
    assert rep.max_discrepancy <= 1e-3


# -- decompositions and weak duality ---------------------------------------------------


def test_certificate_examples():
    cert = certify_decomposition(Decomposition([1.0], [GHZ]), GHZ.projector())
    assert cert == Certificate(pytest.approx(1.0), 0.0, True)
    mix = 0.5 * W.projector() + 0.5 * W_BAR.projector()
    cert = certify_decomposition(Decomposition([0.5, 0.5], [W, W_BAR]), mix)
    assert cert.upper_bound == 0.0 and cert.valid
    bad = certify_decomposition(Decomposition([1.0], [W]), mix)
    assert not bad.valid and bad.residual == pytest.approx(1 / 6)
    with pytest.raises(ValueError):
        Decomposition([0.7, 0.7], [W, GHZ])


def _triple_decomposition(rng, p):
    """Random decomposition of rho(p) from two phase-balanced triples of Z states."""
    qa, qb = rng.uniform(0, p), rng.uniform(p, 1)
    lam = (qb - p) / (qb - qa) if qb > qa else 1.0
    weights, states = [], []
    for q, wgt in ((qa, lam), (qb, 1 - lam)):
        phi0 = rng.uniform(0, 2 * math.pi)
        for k in range(3):
            weights.append(wgt / 3)
            states.append(z_state(q, phi0 + 2 * math.pi * k / 3))
    return Decomposition(weights, states)


def test_decompositions_never_undercut_the_bound():
    rng = np.random.default_rng(123)
    for _ in range(1000):
        p = rng.uniform(0, 1)
        cert = certify_decomposition(_triple_decomposition(rng, p), rho_test(p))
        assert cert.valid
        assert cert.upper_bound >= restricted_bound_analytic(p) - 1e-6


def test_weak_duality_against_traced_multipliers():
    rng = np.random.default_rng(321)
    prob = restricted_problem()
    results = legendre_sweep(prob, [0.5 - p for p in (0.3, 0.7, 0.8, 0.9, 0.99)])
    traced = sorted({key[0] for res in results for key, _ in res.trace})
    rs = np.array(traced[::6] + [float(res.r_star[0]) for res in results])
    # with the measured value set to 0 the inner value is G(r), the part independent of w
    g = np.array([inner_infimum(prob.with_measured(0.0), [r]).value for r in rs])
    wit = prob.witnesses[0]
    worst = math.inf
    for _ in range(1000):
        n = rng.integers(1, 5)
        weights = rng.dirichlet(np.ones(n))
        states = [z_state(rng.uniform(0, 1), rng.uniform(0, 2 * math.pi)) for _ in range(n)]
        dec = Decomposition(weights, states)
        w = sum(a * expectation(wit, s) for a, s in zip(weights, states))
        avg = certify_decomposition(dec, dec.density_matrix()).upper_bound
        worst = min(worst, np.min(avg - (rs * w + g)))
    assert worst >= -1e-6


# -- noisy GHZ -----------------------------------------------------------------------


def test_noisy_ghz_fidelity():
    assert noisy_ghz_fidelity(1) == 1
    assert noisy_ghz_fidelity(0) == Fraction(1, 8)
    assert noisy_ghz_fidelity(Fraction(5, 7)) == Fraction(3, 4)
    rho = noisy_ghz_state(0.4)
    assert np.vdot(GHZ.amplitudes, rho @ GHZ.amplitudes).real == pytest.approx(float(noisy_ghz_fidelity(0.4)))
    with pytest.raises(ValueError):
        noisy_ghz_fidelity(1.5)
