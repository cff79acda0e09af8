import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tanglebound.charcurve import benchmarks, restricted_bound_analytic, tau3_closed_form
from tanglebound.envelope import (
    SampledCurve,
    convexity_diagnostic,
    envelope_curve,
    envelope_eval,
    lower_convex_envelope,
)


def test_curve_validation():
    with pytest.raises(ValueError):
        SampledCurve([0.0], [1.0])
    with pytest.raises(ValueError):
        SampledCurve([0.0, 0.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        SampledCurve([0.0, 1.0], [1.0, np.nan])
    with pytest.raises(TypeError):
        lower_convex_envelope([(0, 0), (1, 1)])


def test_parabola_is_its_own_envelope():
    xs = np.linspace(-1, 1, 41)
    curve = SampledCurve(xs, xs**2)
    env = lower_convex_envelope(curve)
    assert np.array_equal(env.knot_xs, xs)
    assert env.affine_regions == []
    assert convexity_diagnostic(curve).is_convex


def test_concave_bump():
    env = lower_convex_envelope(SampledCurve([0, 0.5, 1], [0, 1, 0]))
    assert list(env.knot_xs) == [0, 1]
    assert env.affine_regions == [(0.0, 1.0)]
    assert env(0.5) == 0.0


def test_eval_at_knots_and_midpoints():
    env = lower_convex_envelope(SampledCurve([0, 1, 2, 3], [3, 1, 0, 2]))
    for x, y in zip(env.knot_xs, env.knot_ys):
        assert env(x) == y
    a, b = env.knot_xs[1], env.knot_xs[2]
    assert env(0.5 * (a + b)) == pytest.approx(0.5 * (env(a) + env(b)), abs=1e-15)
    with pytest.raises(ValueError):
        envelope_eval(env, 3.5)


def test_tangle_envelope_matches_closed_form_hull():
    b = benchmarks()
    qs = np.linspace(0, 1, 2001)
    vals = tau3_closed_form(qs)
    env = lower_convex_envelope(SampledCurve(qs, vals))
    h = qs[1] - qs[0]
    slope = np.max(np.abs(np.diff(vals))) / h
    assert np.max(np.abs(env(qs) - restricted_bound_analytic(qs))) <= 2 * h * slope
    assert env(0.85) == pytest.approx(restricted_bound_analytic(0.85), abs=1e-6)
    (a0, b0), (a1, b1) = env.affine_regions
    assert a0 == 0.0 and b0 == pytest.approx(b.q0, abs=2 * h)
    assert a1 == pytest.approx(b.q1, abs=2 * h) and b1 == 1.0


def test_tangle_concavity_near_one():
    qs = np.linspace(0, 1, 4001)
    tau = convexity_diagnostic(SampledCurve(qs, tau3_closed_form(qs)))
    tau_sq = convexity_diagnostic(SampledCurve(qs, tau3_closed_form(qs) ** 2))
    top = tau.nonconvex_intervals[-1]
    top_sq = tau_sq.nonconvex_intervals[-1]
    assert top[1] == 1.0 and top_sq[1] == 1.0
    assert 0.7 < top[0] < top_sq[0] < 1.0


curves = st.lists(st.floats(-10, 10), min_size=2, max_size=40)


@given(curves)
@settings(max_examples=200, deadline=None)
def test_envelope_properties(ys):
    xs = np.arange(len(ys), dtype=float)
    curve = SampledCurve(xs, ys)
    env = lower_convex_envelope(curve)
    vals = env(xs)
    assert np.all(vals <= curve.ys + 1e-12)
    assert np.array_equal(env(env.knot_xs), env.knot_ys)
    assert np.all(np.diff(env.slopes()) >= -1e-9)
    # idempotence
    again = lower_convex_envelope(envelope_curve(curve, env))
    assert np.array_equal(again(xs), vals)
    if len(ys) >= 3:
        flat = np.all(np.abs(vals - curve.ys) <= 1e-9)
        assert flat == convexity_diagnostic(curve).is_convex


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=30), st.integers(0, 2**31))
@settings(max_examples=100, deadline=None)
def test_refinement_never_raises_envelope(ys, seed):
    coarse_x = np.arange(len(ys), dtype=float) * 2
    extra = np.random.default_rng(seed).uniform(-5, 5, len(ys) - 1)
    fine_x = np.arange(2 * len(ys) - 1, dtype=float)
    fine_y = np.empty(fine_x.size)
    fine_y[::2] = ys
    fine_y[1::2] = extra
    coarse = lower_convex_envelope(SampledCurve(coarse_x, ys))
    fine = lower_convex_envelope(SampledCurve(fine_x, fine_y))
    assert np.all(fine(coarse_x) <= coarse(coarse_x) + 1e-12)
