"""Lower convex envelopes of sampled one-dimensional functions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

AFFINE_TOL = 1e-9
# collinear-within-rounding points stay on the hull, which makes hulls idempotent
COLLINEAR_RTOL = 1e-14


@dataclass(frozen=True)
class SampledCurve:
    """Samples (x_i, y_i) with strictly increasing x.

    ``extras`` carries optional per-sample metadata from the producer
    (constraint residuals, minimizers, ...) and does not take part in any
    geometry.
    """

    xs: np.ndarray
    ys: np.ndarray
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        if xs.ndim != 1 or ys.shape != xs.shape:
            raise ValueError("xs and ys must be 1-D sequences of equal length")
        if xs.size < 2:
            raise ValueError("a curve needs at least two samples")
        if not np.all(np.diff(xs) > 0):
            raise ValueError("xs must be strictly increasing")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    def __len__(self):
        return self.xs.size


@dataclass(frozen=True)
class ConvexEnvelope:
    knot_xs: np.ndarray
    knot_ys: np.ndarray
    knot_index: np.ndarray
    affine_regions: list[tuple[float, float]]

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knot_xs[0]), float(self.knot_xs[-1])

    def __call__(self, x):
        return envelope_eval(self, x)

    def slopes(self) -> np.ndarray:
        return np.diff(self.knot_ys) / np.diff(self.knot_xs)


def _turns_right(ox, oy, ax, ay, bx, by) -> bool:
    """True when a sits above the chord o -> b by more than rounding noise."""
    chord = oy + (by - oy) * ((ax - ox) / (bx - ox))
    scale = max(abs(oy), abs(ay), abs(by))
    return ay - chord > COLLINEAR_RTOL * scale


def lower_convex_envelope(curve: SampledCurve, tol: float = AFFINE_TOL) -> ConvexEnvelope:
    """Greatest convex function below the piecewise-linear interpolant.

    Monotone-chain lower hull over the samples, which are already sorted by
    x.  Collinear points are kept as knots so that the envelope reproduces the
    samples exactly wherever it touches them.
    """
    if not isinstance(curve, SampledCurve):
        raise TypeError("expected a SampledCurve")
    xs, ys = curve.xs, curve.ys
    hull: list[int] = []
    for i in range(xs.size):
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            if _turns_right(xs[o], ys[o], xs[a], ys[a], xs[i], ys[i]):
                hull.pop()
            else:
                break
        hull.append(i)
    idx = np.asarray(hull, dtype=int)
    kx, ky = xs[idx], ys[idx]

    regions = []
    for a, b in zip(idx[:-1], idx[1:]):
        if b - a < 2:
            continue
        inner = slice(a + 1, b)
        env = ys[a] + (ys[b] - ys[a]) * (xs[inner] - xs[a]) / (xs[b] - xs[a])
        if np.any(ys[inner] - env > tol):
            regions.append((float(xs[a]), float(xs[b])))
    return ConvexEnvelope(kx, ky, idx, regions)


def envelope_eval(env: ConvexEnvelope, x):
    """Linear interpolation between hull knots; no extrapolation."""
    x_arr = np.asarray(x, dtype=float)
    lo, hi = env.domain
    if np.any((x_arr < lo) | (x_arr > hi)):
        raise ValueError(f"x outside the sampled domain [{lo}, {hi}]")
    out = np.interp(x_arr, env.knot_xs, env.knot_ys)
    return float(out) if out.ndim == 0 else out


def envelope_curve(curve: SampledCurve, env: ConvexEnvelope | None = None) -> SampledCurve:
    """The envelope resampled on the curve's own abscissae."""
    env = env or lower_convex_envelope(curve)
    return SampledCurve(curve.xs, envelope_eval(env, curve.xs))


@dataclass(frozen=True)
class ConvexityReport:
    interior_xs: np.ndarray
    second_differences: np.ndarray
    chord_gaps: np.ndarray
    nonconvex_intervals: list[tuple[float, float]]

    @property
    def is_convex(self) -> bool:
        return not self.nonconvex_intervals


def convexity_diagnostic(curve: SampledCurve, tol: float = AFFINE_TOL) -> ConvexityReport:
    """Second divided differences and the intervals where they turn negative.

    A sample counts as non-convex when it sits more than ``tol`` above the
    chord through its two neighbours (the vertical gap is the quantity the
    envelope tolerance is measured in).  Adjacent offending samples are merged
    into one interval [x_{i-1}, x_{j+1}].
    """
    xs, ys = curve.xs, curve.ys
    if xs.size < 3:
        raise ValueError("need at least three samples")
    h_left = xs[1:-1] - xs[:-2]
    h_right = xs[2:] - xs[1:-1]
    s_left = (ys[1:-1] - ys[:-2]) / h_left
    s_right = (ys[2:] - ys[1:-1]) / h_right
    second = 2.0 * (s_right - s_left) / (h_left + h_right)
    # height of the middle sample above the neighbour chord
    gap = -0.5 * second * h_left * h_right

    bad = np.flatnonzero(gap > tol) + 1
    intervals: list[tuple[float, float]] = []
    if bad.size:
        start = prev = bad[0]
        for i in bad[1:]:
            if i != prev + 1:
                intervals.append((float(xs[start - 1]), float(xs[prev + 1])))
                start = i
            prev = i
        intervals.append((float(xs[start - 1]), float(xs[prev + 1])))
    return ConvexityReport(xs[1:-1], second, gap, intervals)
