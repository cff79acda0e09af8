"""Closed-form results for the superpositions sqrt(q)|GHZ> - e^{i phi} sqrt(1-q)|W>.

Everything here is analytic and serves as an oracle for the numerical
solvers in :mod:`tanglebound.bound`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from .qstate import GHZ, W, PureState

TWO_PI = 2.0 * math.pi
# prefactor of the GHZ/W cross term in the restricted tangle
K_CROSS = 8.0 * math.sqrt(6.0) / 9.0
FD_STEP = 1e-6


@dataclass(frozen=True)
class GhzwPoint:
    q: float
    phi: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")
        object.__setattr__(self, "phi", float(self.phi) % TWO_PI)


@dataclass(frozen=True)
class AnalyticBenchmarks:
    q0: float
    r0: float
    q1: float
    r1: float


def z_state(q, phi: float = 0.0) -> PureState:
    """sqrt(q)|GHZ> - e^{i phi} sqrt(1-q)|W>; ``q`` may also be a GhzwPoint."""
    pt = q if isinstance(q, GhzwPoint) else GhzwPoint(q, phi)
    amps = math.sqrt(pt.q) * GHZ.amplitudes - np.exp(1j * pt.phi) * math.sqrt(1.0 - pt.q) * W.amplitudes
    return PureState(amps, renormalize=True)


def _cross(q):
    q = np.asarray(q, dtype=float)
    return K_CROSS * np.sqrt(np.clip(q * (1.0 - q) ** 3, 0.0, None))


def tau3_closed_form(q, phi=0.0):
    """|q^2 - (8 sqrt6/9) sqrt(q (1-q)^3) e^{3 i phi}|, broadcasting over arrays.

    Also accepts a single GhzwPoint.
    """
    if isinstance(q, GhzwPoint):
        q, phi = q.q, q.phi
    q = np.asarray(q, dtype=float)
    val = np.abs(q * q - _cross(q) * np.exp(3j * np.asarray(phi, dtype=float)))
    return float(val) if val.ndim == 0 else val


def _signed_tau3(q: float) -> float:
    """The argument of |.| in tau3(q, 0); negative on (0, q0), positive beyond."""
    return q * q - float(_cross(q))


def _signed_derivative(q: float) -> float:
    # d/dq [q^2 - K sqrt(q) (1-q)^{3/2}]
    return 2.0 * q - K_CROSS * (1.0 - 4.0 * q) * math.sqrt(1.0 - q) / (2.0 * math.sqrt(q))


def tau3_derivative(q: float, side: str = "right") -> float:
    """d tau3(q, 0)/dq on (0, 1).

    The sign of the inner expression flips at q0, where tau3 has a kink;
    ``side`` picks the one-sided derivative there (right means q >= q0).
    """
    if not 0.0 < q < 1.0:
        raise ValueError("derivative defined for 0 < q < 1 only")
    q0 = _q0()
    if abs(q - q0) <= 1e-14:
        sign = 1.0 if side == "right" else -1.0
    else:
        sign = 1.0 if _signed_tau3(q) > 0.0 else -1.0
    return sign * _signed_derivative(q)


def tau3_derivative_fd(q: float, h: float = FD_STEP) -> float:
    return (tau3_closed_form(q + h) - tau3_closed_form(q - h)) / (2.0 * h)


def _q0() -> float:
    c = 4.0 * 2.0 ** (1.0 / 3.0)
    return c / (3.0 + c)


def _q1() -> float:
    return 0.5 + 3.0 / 310.0 * math.sqrt(465.0)


@lru_cache(maxsize=None)
def benchmarks() -> AnalyticBenchmarks:
    """q0, r0, q1, r1 for the diagonal GHZ witness on rho(p)."""
    q0 = _q0()
    q1 = _q1()
    r0 = -tau3_derivative(q0, side="right")
    r1 = -(1.0 - tau3_closed_form(q1)) / (1.0 - q1)
    r1_tangent = -tau3_derivative(q1)
    if abs(r1 - r1_tangent) > 1e-8:
        raise AssertionError(f"chord slope {r1} and tangent slope {r1_tangent} disagree")
    return AnalyticBenchmarks(q0=q0, r0=r0, q1=q1, r1=r1)


def restricted_bound_analytic(p):
    """Function convex hull of tau3(q, 0) on [0, 1], evaluated at p."""
    b = benchmarks()
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr < 0.0) | (p_arr > 1.0)):
        raise ValueError("p must lie in [0, 1]")
    mid = tau3_closed_form(np.clip(p_arr, b.q0, b.q1))
    line = 1.0 - abs(b.r1) * (1.0 - p_arr)
    out = np.where(p_arr <= b.q0, 0.0, np.where(p_arr <= b.q1, mid, line))
    return float(out) if out.ndim == 0 else out


def skew_qmin(p: float, phi: float, omega: float) -> float | None:
    """Overlap q of the constrained minimizer for the skew witness.

    Solves <Z(q,phi)|W_skew|Z(q,phi)> = -p, i.e.
    ``q - p - 2 sqrt(q(1-q)) omega cos(phi) = 0``, on the branch with
    ``omega*cos(phi) < 0`` (minus sign of the quadratic root).  Returns
    None when that branch does not exist.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    a = omega * math.cos(phi)
    if not a < 0.0:
        return None
    a2 = a * a
    disc = a2 + p - p * p
    if disc < 0.0:
        raise ArithmeticError(f"negative discriminant {disc}")
    return (p + 2.0 * a2 - 2.0 * abs(a) * math.sqrt(disc)) / (1.0 + 4.0 * a2)


def skew_constraint_residual(q: float, p: float, phi: float, omega: float) -> float:
    return q - p - 2.0 * math.sqrt(q * (1.0 - q)) * omega * math.cos(phi)


def skew_overlap(p: float, phi: float, omega: float) -> float:
    """Overlap q on the unique branch solving the skew constraint at (p, phi).

    With ``a = omega*cos(phi)`` the unsquared constraint
    ``q - p = 2 sqrt(q(1-q)) a`` selects the minus root for a < 0 (this is
    :func:`skew_qmin`) and the plus root for a > 0.
    """
    a = omega * math.cos(phi)
    a2 = a * a
    disc = max(a2 + p - p * p, 0.0)
    return min(max((p + 2.0 * a2 + 2.0 * a * math.sqrt(disc)) / (1.0 + 4.0 * a2), 0.0), 1.0)


def skew_characteristic(
    p: float, omega: float, squared: bool = False, branch: str = "all", n_grid: int = 4096
) -> float:
    """Minimum tangle over GHZ/W superpositions with <W_skew> = -p.

    ``branch="all"`` minimizes tau3(q(p, phi), phi) over the full phase
    circle, i.e. over both sign branches of the root.  ``branch="negative"``
    keeps only phases with omega*cos(phi) < 0 and uses :func:`skew_qmin`.
    The two agree for omega > 0; for other omega the positive branch can be
    lower.  A complex omega only enters through Re(omega e^{i phi}), so it
    is taken as real here with its phase absorbed into phi.
    """
    omega = float(np.real(omega))
    p = float(p)
    if branch not in ("all", "negative"):
        raise ValueError(f"unknown branch {branch!r}")
    if branch == "negative" and omega == 0.0:
        raise ValueError("the negative branch is empty for omega = 0")

    def objective(phi: float) -> float:
        if branch == "negative":
            q = skew_qmin(p, phi, omega)
            if q is None:
                return math.inf
        else:
            q = skew_overlap(p, phi, omega)
        return tau3_closed_form(q, phi)

    grid = np.linspace(0.0, TWO_PI, n_grid, endpoint=False)
    vals = np.array([objective(x) for x in grid])
    best = int(np.argmin(vals))
    step = grid[1] - grid[0]
    centre = grid[best]
    res = minimize_scalar(
        objective, bounds=(centre - step, centre + step), method="bounded",
        options={"xatol": 1e-13},
    )
    val = min(float(res.fun), float(vals[best]))
    return val * val if squared else val
