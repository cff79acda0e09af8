"""Lower bounds on the convex-roof three-tangle from witness data.

Two routes are implemented and can be cross-checked against each other:

* the dual route, ``eps(w) = sup_r inf_psi [sum_k r_k (w_k - <W_k>_psi) + E(psi)]``
  (:func:`legendre_bound`), and
* the primal route, minimizing E over pure states that satisfy the witness
  constraints and taking the lower convex envelope of the result
  (:func:`constrained_pure_minimum`, :func:`bound_via_convexification`).

All pure-state searches run through :func:`tanglebound.sphere.minimize_on_sphere`
with many restarts per problem evaluated as one batch.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .envelope import SampledCurve, lower_convex_envelope, envelope_eval
from .qstate import (
    DIM,
    GHZ,
    W,
    W_BAR,
    Observable,
    PureState,
    basis_state,
    hyperdet_and_grad,
    projector_witness,
    skew_witness,
    symmetric_basis,
    symmetric_weight,
    tau3_of,
)
from .sphere import minimize_on_sphere

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
SCAN_POINTS = 41
PENALTY_SCHEDULE = tuple(10.0 ** k for k in range(1, 8))
PENALTY_RESIDUAL = 1e-6
INFEASIBLE_RESIDUAL = 1e-4
CERTIFY_RESIDUAL = 1e-8
WARM_STARTS = (GHZ, W, W_BAR, basis_state(0), basis_state(7))
MAX_WITNESSES = 2
ZERO_SET_PENALTY = (1e1, 1e3, 1e5, 1e7)
DIP_TOL = 1e-6
XS_MERGE_RTOL = 1e-12
ZERO_SET_RESTARTS = 16


class Measure(str, enum.Enum):
    TAU3 = "tau3"
    TAU3_SQ = "tau3sq"

    def of(self, state: PureState) -> float:
        t = float(tau3_of(state.amplitudes))
        return t if self is Measure.TAU3 else t * t


class Status(str, enum.Enum):
    CONVERGED = "CONVERGED"
    MAX_ITER = "MAX_ITER"
    TRIVIAL_ZERO = "TRIVIAL_ZERO"


@dataclass(frozen=True)
class SearchSpace:
    """Subspace of C^8 the pure-state optimization runs over."""

    kind: str
    basis: np.ndarray = field(repr=False)

    @classmethod
    def full(cls) -> "SearchSpace":
        return cls("full", np.eye(DIM, dtype=complex))

    @classmethod
    def symmetric(cls) -> "SearchSpace":
        return cls("symmetric", symmetric_basis())

    @classmethod
    def span(cls, *states: PureState) -> "SearchSpace":
        if len(states) < 2:
            raise ValueError("a span needs at least two states")
        basis = np.column_stack([s.amplitudes for s in states])
        gram = basis.conj().T @ basis
        if np.max(np.abs(gram - np.eye(len(states)))) > 1e-10:
            raise ValueError("span states must be orthonormal")
        return cls("span", basis)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def reduce(self, op: Observable) -> np.ndarray:
        return self.basis.conj().T @ op.matrix @ self.basis

    def to_json(self):
        if self.kind in ("full", "symmetric"):
            return self.kind
        states = [PureState(self.basis[:, j]).to_json() for j in range(self.dim)]
        return {"span": states}

    @classmethod
    def from_json(cls, data) -> "SearchSpace":
        if data == "full":
            return cls.full()
        if data == "symmetric":
            return cls.symmetric()
        if isinstance(data, dict) and "span" in data:
            return cls.span(*[PureState.from_json(s) for s in data["span"]])
        raise ValueError(f"unknown search space {data!r}")


@dataclass(frozen=True)
class OptimizerSettings:
    restarts: int = 64
    r_box: tuple[float, float] = (-20.0, 20.0)
    inner_tolerance: float = 1e-8
    outer_tolerance: float = 1e-6
    seed: int = 0
    max_inner_iterations: int = 2000
    threads: int | None = None

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be positive")
        lo, hi = self.r_box
        if not lo < hi:
            raise ValueError("r_box must be a nonempty interval")
        if self.inner_tolerance <= 0 or self.outer_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_inner_iterations < 1:
            raise ValueError("max_inner_iterations must be positive")
        object.__setattr__(self, "r_box", (float(lo), float(hi)))

    def to_json(self) -> dict:
        return {
            "restarts": self.restarts,
            "r_box": list(self.r_box),
            "inner_tolerance": self.inner_tolerance,
            "outer_tolerance": self.outer_tolerance,
            "seed": self.seed,
            "max_inner_iterations": self.max_inner_iterations,
        }

    @classmethod
    def from_json(cls, data: dict | None) -> "OptimizerSettings":
        data = dict(data or {})
        if "r_box" in data:
            data["r_box"] = tuple(data["r_box"])
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown settings {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class BoundProblem:
    witnesses: tuple[Observable, ...]
    measured: tuple[float, ...]
    measure: Measure = Measure.TAU3
    space: SearchSpace = field(default_factory=SearchSpace.full)
    settings: OptimizerSettings = field(default_factory=OptimizerSettings)

    def __post_init__(self):
        wits = tuple(self.witnesses)
        vals = tuple(float(v) for v in np.atleast_1d(self.measured))
        if not wits:
            raise ValueError("at least one witness is required")
        if len(wits) != len(vals):
            raise ValueError("one measured value per witness is required")
        if len(wits) > MAX_WITNESSES:
            raise ValueError(f"at most {MAX_WITNESSES} witnesses are supported")
        object.__setattr__(self, "witnesses", wits)
        object.__setattr__(self, "measured", vals)
        object.__setattr__(self, "measure", Measure(self.measure))

    @property
    def K(self) -> int:
        return len(self.witnesses)

    def with_measured(self, measured) -> "BoundProblem":
        return replace(self, measured=tuple(np.atleast_1d(measured)))

    def to_json(self) -> dict:
        return {
            "witnesses": [w.to_json() for w in self.witnesses],
            "measured": list(self.measured),
            "measure": self.measure.value,
            "space": self.space.to_json(),
            "settings": self.settings.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "BoundProblem":
        try:
            wits = tuple(Observable.from_json(w) for w in data["witnesses"])
            measured = tuple(float(v) for v in data["measured"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed problem JSON: {exc}") from exc
        return cls(
            witnesses=wits,
            measured=measured,
            measure=Measure(data.get("measure", "tau3")),
            space=SearchSpace.from_json(data.get("space", "full")),
            settings=OptimizerSettings.from_json(data.get("settings")),
        )


class InnerResult(NamedTuple):
    value: float
    argmin: PureState
    converged: bool


@dataclass
class BoundResult:
    epsilon: float
    r_star: np.ndarray
    inner_minimizer: PureState
    trace: list[tuple[tuple[float, ...], float]]
    status: Status
    best_dual: float = 0.0

    @property
    def minimizer_symmetric_weight(self) -> float:
        """Weight of the dual minimizer in the permutation-symmetric subspace."""
        return symmetric_weight(self.inner_minimizer)

    def to_json(self, include_trace: bool = False) -> dict:
        out = {
            "epsilon": self.epsilon,
            "best_dual": self.best_dual,
            "r_star": [float(x) for x in self.r_star],
            "status": self.status.value,
            "inner_minimizer": self.inner_minimizer.to_json(),
            "minimizer_symmetric_weight": self.minimizer_symmetric_weight,
        }
        if include_trace:
            out["trace"] = [{"r": list(r), "value": v} for r, v in self.trace]
        return out


@dataclass(frozen=True)
class Decomposition:
    weights: tuple[float, ...]
    states: tuple[PureState, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size != len(self.states) or w.size == 0:
            raise ValueError("need one weight per state")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValueError("weights must lie on the probability simplex")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        object.__setattr__(self, "states", tuple(self.states))

    def density_matrix(self) -> np.ndarray:
        rho = np.zeros((DIM, DIM), dtype=complex)
        for p, s in zip(self.weights, self.states):
            rho += p * s.projector()
        return rho


class Certificate(NamedTuple):
    upper_bound: float
    residual: float
    valid: bool


# -- pure-state objective ---------------------------------------------------------


class _Objective:
    """E(psi) + sum_k c_k <W_k> + mu * sum_k (<W_k> - t_k)^2 for a batch of rows.

    psi = offset_row + scale_row * M u, with u on the unit sphere of C^m.
    Row-dependent data is indexed by the row ids passed by the optimizer.
    """

    def __init__(self, measure, M, offset=None, scale=None, quad=None, pen_ops=None, targets=None,
                 mu=0.0, e_weight=1.0):
        self.squared = Measure(measure) is Measure.TAU3_SQ
        self.e_weight = e_weight
        self.M = np.asarray(M, dtype=complex)
        self.identity = self.M.shape == (DIM, DIM) and np.array_equal(self.M, np.eye(DIM))
        self.offset = offset
        self.scale = scale
        self.quad = quad  # (R, m, m) reduced Hermitian, or None
        self.pen_ops = pen_ops  # (K, m, m) reduced witnesses, or None
        self.targets = targets  # (R, K)
        self.mu = mu

    def psi(self, u, rows):
        psi = u if self.identity else u @ self.M.T
        if self.scale is not None:
            psi = self.scale[rows, None] * psi
        if self.offset is not None:
            psi = psi + self.offset[rows]
        return psi

    def __call__(self, u, rows):
        psi = self.psi(u, rows)
        det, ddet = hyperdet_and_grad(psi)
        if self.squared:
            f = 16.0 * (det.real**2 + det.imag**2)
            G = 32.0 * det[:, None] * ddet.conj()
        else:
            mag = np.abs(det)
            f = 4.0 * mag
            phase = np.where(mag > 0, det / np.where(mag > 0, mag, 1.0), 0.0)
            G = 4.0 * phase[:, None] * ddet.conj()
        if self.e_weight != 1.0:
            f = self.e_weight * f
            G = self.e_weight * G
        if not self.identity:
            G = G @ self.M.conj()
        if self.scale is not None:
            G = self.scale[rows, None] * G
        if self.quad is not None:
            Lu = np.einsum("rij,rj->ri", self.quad[rows], u)
            f = f + _ip(u, Lu)
            G = G + 2.0 * Lu
        if self.pen_ops is not None and self.mu > 0:
            for k in range(self.pen_ops.shape[0]):
                Wu = u @ self.pen_ops[k].T
                e = _ip(u, Wu)
                res = e - self.targets[rows, k]
                f = f + self.mu * res * res
                G = G + (4.0 * self.mu * res)[:, None] * Wu
        return f, G

    def measure_only(self, u, rows):
        psi = self.psi(u, rows)
        t = tau3_of(psi)
        return t * t if self.squared else t


def _ip(a, b):
    return (a.real * b.real + a.imag * b.imag).sum(axis=-1)


def _initial_points(M: np.ndarray, restarts: int, seed: int, offset_dir=None) -> np.ndarray:
    """Warm starts (projected onto range(M)) followed by seeded random points.

    Restart j always receives the same point for a given (seed, j, M), which
    keeps results independent of how the batch is assembled.
    """
    m = M.shape[1]
    pts = []
    for s in WARM_STARTS:
        if len(pts) >= restarts:
            break
        c = M.conj().T @ s.amplitudes
        nrm = np.linalg.norm(c)
        if nrm > 1e-8:
            cand = c / nrm
            if not any(abs(abs(np.vdot(p, cand)) - 1.0) < 1e-12 for p in pts):
                pts.append(cand)
    j = len(pts)
    while len(pts) < restarts:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, j])))
        z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        pts.append(z / np.linalg.norm(z))
        j += 1
    return np.asarray(pts[:restarts])


# -- dual route ------------------------------------------------------------------


def _dual_batch(problem: BoundProblem, rs: np.ndarray):
    """G(r) = inf_psi [E(psi) - sum_k r_k <W_k>] for each row of ``rs``.

    Returns (values, argmin amplitudes (n, 8), converged flags).
    """
    rs = np.atleast_2d(np.asarray(rs, dtype=float))
    n_r = rs.shape[0]
    st = problem.settings
    B = problem.space.basis
    m = B.shape[1]
    reduced = np.stack([problem.space.reduce(w) for w in problem.witnesses])  # (K, m, m)
    L = -np.einsum("rk,kij->rij", rs, reduced)  # (n_r, m, m)

    x0 = _initial_points(B, st.restarts, st.seed)
    R = st.restarts
    quad = np.repeat(L, R, axis=0)
    u0 = np.tile(x0, (n_r, 1))
    obj = _Objective(problem.measure, B, quad=quad)
    kw = dict(ftol=st.inner_tolerance, max_iter=st.max_inner_iterations, threads=st.threads)
    res = minimize_on_sphere(obj, u0, **kw)
    u, f, conv = res.u, res.f, res.converged

    if problem.measure is Measure.TAU3:
        # |D| has a conical kink on the zero-tangle set and the local search
        # stalls there; a smooth penalty continuation reaches those minima.
        # Only the first ZERO_SET_RESTARTS restarts of each r take this detour.
        sub = (np.arange(n_r * R) % R) < min(ZERO_SET_RESTARTS, R)
        rows = np.flatnonzero(sub)
        pen = _Objective(Measure.TAU3_SQ, B, quad=quad[rows])
        polish_obj = _Objective(problem.measure, B, quad=quad[rows])
        v = u0[rows]
        for mu in ZERO_SET_PENALTY:
            pen.e_weight = mu
            v = minimize_on_sphere(pen, v, **kw).u
        polish = minimize_on_sphere(polish_obj, v, **kw)
        better = polish.f < f[rows]
        u[rows[better]] = polish.u[better]
        f[rows[better]] = polish.f[better]
        conv[rows[better]] = polish.converged[better]

    f = f.reshape(n_r, R)
    best = np.argmin(f, axis=1)  # ties resolve to the lowest restart index
    rows = np.arange(n_r) * R + best
    values = f[np.arange(n_r), best]
    argmins = u[rows] @ B.T
    # the reported minimum counts as converged only if its own restart did
    return values, argmins, conv[rows]


class _DualFunction:
    """Memoized r -> G(r) for one witness set, search space and measure."""

    def __init__(self, problem: BoundProblem):
        self.problem = problem
        self.cache: dict[tuple[float, ...], tuple[float, np.ndarray, bool]] = {}

    def evaluate(self, rs) -> list[tuple[float, np.ndarray, bool]]:
        rs = np.atleast_2d(np.asarray(rs, dtype=float))
        keys = [tuple(float(x) for x in r) for r in rs]
        todo = sorted({k for k in keys if k not in self.cache})
        if todo:
            vals, args, conv = _dual_batch(self.problem, np.array(todo))
            for k, v, a, c in zip(todo, vals, args, conv):
                self.cache[k] = (float(v), a, bool(c))
        return [self.cache[k] for k in keys]


def _check_r(problem: BoundProblem, r) -> np.ndarray:
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if r.shape != (problem.K,):
        raise ValueError(f"multiplier vector must have length {problem.K}")
    lo, hi = problem.settings.r_box
    if np.any(r < lo) or np.any(r > hi):
        raise ValueError(f"multiplier outside r_box {problem.settings.r_box}")
    return r


def inner_infimum(problem: BoundProblem, r) -> InnerResult:
    """inf over pure states of sum_k r_k (w_k - <W_k>) + E."""
    r = _check_r(problem, r)
    (g, arg, conv), = _DualFunction(problem).evaluate(r[None])
    value = float(np.dot(r, problem.measured)) + g
    return InnerResult(value, PureState(arg, renormalize=True), conv)


def _scan_grid(lo: float, hi: float) -> np.ndarray:
    neg = np.linspace(lo, 0.0, SCAN_POINTS) if lo < 0 else np.array([])
    pos = np.linspace(0.0, hi, SCAN_POINTS) if hi > 0 else np.array([])
    pts = np.concatenate([neg, pos])
    pts = pts[(pts >= lo) & (pts <= hi)]
    return np.unique(pts)


def _finish(dual: _DualFunction, w: np.ndarray, trace_keys: list[tuple[float, ...]]) -> BoundResult:
    entries = dual.evaluate(np.array(trace_keys))
    trace = []
    best_i, best_v = 0, -math.inf
    any_fail = False
    for i, (key, (g, _, conv)) in enumerate(zip(trace_keys, entries)):
        v = float(np.dot(key, w)) + g
        trace.append((key, v))
        any_fail |= not conv
        if v > best_v:
            best_i, best_v = i, v
    key = trace_keys[best_i]
    arg = entries[best_i][1]
    eps = max(0.0, best_v)
    if any_fail:
        status = Status.MAX_ITER
    elif best_v <= 0.0:
        status = Status.TRIVIAL_ZERO
    else:
        status = Status.CONVERGED
    return BoundResult(
        epsilon=eps,
        r_star=np.array(key),
        inner_minimizer=PureState(arg, renormalize=True),
        trace=trace,
        status=status,
        best_dual=best_v,
    )


def _golden_lockstep(dual: _DualFunction, ws: np.ndarray, brackets: list[tuple[float, float]], tol: float):
    """Golden-section maximization of r*w + G(r), one bracket per w, batched."""
    n = len(ws)
    a = np.array([b[0] for b in brackets], dtype=float)
    b = np.array([b[1] for b in brackets], dtype=float)
    traces: list[list[float]] = [[] for _ in range(n)]
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)

    def val(points):
        res = dual.evaluate(points[:, None])
        return np.array([e[0] for e in res])

    fc = val(c) + c * ws
    fd = val(d) + d * ws
    for i in range(n):
        traces[i] += [c[i], d[i]]
    active = (b - a) > tol
    while np.any(active):
        idx = np.flatnonzero(active)
        left = fc[idx] >= fd[idx]  # maximum lies in [a, d]
        new_pts = np.empty(idx.size)
        for j, i in enumerate(idx):
            if left[j]:
                b[i], d[i], fd[i] = d[i], c[i], fc[i]
                c[i] = b[i] - GOLDEN * (b[i] - a[i])
                new_pts[j] = c[i]
            else:
                a[i], c[i], fc[i] = c[i], d[i], fd[i]
                d[i] = a[i] + GOLDEN * (b[i] - a[i])
                new_pts[j] = d[i]
        vals = val(new_pts) + new_pts * ws[idx]
        for j, i in enumerate(idx):
            if left[j]:
                fc[i] = vals[j]
            else:
                fd[i] = vals[j]
            traces[i].append(new_pts[j])
        active = (b - a) > tol
    return traces


def legendre_sweep(problem: BoundProblem, measured_values) -> list[BoundResult]:
    """:func:`legendre_bound` for many measured values of a single witness.

    The inner infimum minus r*w does not depend on w, so one multiplier scan
    serves the whole sweep and the golden-section refinements run in lockstep.
    """
    if problem.K != 1:
        raise ValueError("sweeps are defined for a single witness")
    ws = np.asarray(measured_values, dtype=float).reshape(-1)
    st = problem.settings
    lo, hi = st.r_box
    dual = _DualFunction(problem)
    scan = _scan_grid(lo, hi)
    scan_vals = np.array([e[0] for e in dual.evaluate(scan[:, None])])

    brackets, refine = [], []
    for i, w in enumerate(ws):
        v = scan_vals + scan * w
        k = int(np.argmax(v))
        if scan[k] <= 0.0:
            a = scan[max(k - 1, 0)]
            b = min(scan[min(k + 1, scan.size - 1)], 0.0) if k + 1 < scan.size else scan[k]
            if b - a > st.outer_tolerance:
                brackets.append((a, b))
                refine.append(i)
    traces = _golden_lockstep(dual, ws[refine], brackets, st.outer_tolerance) if refine else []
    extra = {i: t for i, t in zip(refine, traces)}

    out = []
    for i, w in enumerate(ws):
        keys = [(float(r),) for r in scan] + [(float(r),) for r in extra.get(i, [])]
        out.append(_finish(dual, np.array([w]), keys))
    return out


PATTERN_DIRECTIONS = np.array(
    [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)], dtype=float
)
PATTERN_STARTS = 3


def _legendre_2d(problem: BoundProblem) -> BoundResult:
    """Coarse grid, then a pattern search from the best grid points and the origin.

    All starts advance in lockstep: each round evaluates the eight compass and
    diagonal neighbours of every active start as one batch, moves to the best
    improving neighbour, or halves the step when there is none.
    """
    st = problem.settings
    lo, hi = st.r_box
    dual = _DualFunction(problem)
    w = np.asarray(problem.measured)
    axis = np.linspace(lo, hi, 9)
    grid = np.array([(x, y) for x in axis for y in axis] + [(0.0, 0.0)])
    keys = [tuple(map(float, r)) for r in grid]
    vals = np.array([e[0] for e in dual.evaluate(grid)]) + grid @ w

    order = np.argsort(-vals, kind="stable")
    starts = [grid[i] for i in order[:PATTERN_STARTS]]
    if not any(np.array_equal(s, [0.0, 0.0]) for s in starts):
        starts.append(np.zeros(2))
    pos = np.array(starts)
    val = np.array([vals[keys.index(tuple(map(float, s)))] for s in starts])
    step = np.full(len(starts), axis[1] - axis[0])
    active = step > st.outer_tolerance
    while np.any(active):
        idx = np.flatnonzero(active)
        cand = np.clip(pos[idx, None, :] + step[idx, None, None] * PATTERN_DIRECTIONS, lo, hi)
        flat = cand.reshape(-1, 2)
        keys += [tuple(map(float, r)) for r in flat]
        cv = (np.array([e[0] for e in dual.evaluate(flat)]) + flat @ w).reshape(idx.size, -1)
        best = np.argmax(cv, axis=1)
        for j, i in enumerate(idx):
            if cv[j, best[j]] > val[i] + 1e-12:
                pos[i], val[i] = cand[j, best[j]], cv[j, best[j]]
            else:
                step[i] *= 0.5
        active = step > st.outer_tolerance
    return _finish(dual, w, keys)


def legendre_bound(problem: BoundProblem) -> BoundResult:
    """eps(w) = sup_r inf_psi [sum_k r_k (w_k - <W_k>) + E(psi)], clamped at 0."""
    if problem.K == 1:
        return legendre_sweep(problem, problem.measured)[0]
    return _legendre_2d(problem)


# -- primal route ------------------------------------------------------------------


@dataclass(frozen=True)
class _ProjectorForm:
    """Restriction of a witness to the search space as a + b |phi><phi|."""

    a: float
    b: float
    phi: np.ndarray  # (m,) in reduced coordinates
    complement: np.ndarray  # (m, m-1)


def _projector_form(problem: BoundProblem, tol: float = 1e-9) -> _ProjectorForm | None:
    red = problem.space.reduce(problem.witnesses[0])
    vals, vecs = np.linalg.eigh(red)
    m = vals.size
    if m == 1:
        return None
    scale = max(1.0, float(np.max(np.abs(vals))))
    # single eigenvalue at the bottom or top, the rest degenerate
    for single in (0, m - 1):
        rest = np.delete(vals, single)
        if np.ptp(rest) <= tol * scale and abs(vals[single] - rest.mean()) > tol * scale:
            others = [j for j in range(m) if j != single]
            return _ProjectorForm(
                a=float(rest.mean()),
                b=float(vals[single] - rest.mean()),
                phi=vecs[:, single],
                complement=vecs[:, others],
            )
    return None


def _feasible_range(problem: BoundProblem) -> tuple[float, float]:
    vals = np.linalg.eigvalsh(problem.space.reduce(problem.witnesses[0]))
    return float(vals[0]), float(vals[-1])


def _exact_constrained(problem: BoundProblem, form: _ProjectorForm, ws: np.ndarray):
    st = problem.settings
    B = problem.space.basis
    t = (ws - form.a) / form.b
    feasible = (t >= -1e-9) & (t <= 1 + 1e-9)
    t = np.clip(t, 0.0, 1.0)
    idx = np.flatnonzero(feasible)
    n, R = idx.size, st.restarts
    phi_full = B @ form.phi
    M = B @ form.complement
    offset = np.repeat(np.sqrt(t[idx])[:, None] * phi_full[None, :], R, axis=0)
    scale = np.repeat(np.sqrt(1.0 - t[idx]), R)
    obj = _Objective(problem.measure, M, offset=offset, scale=scale)
    x0 = _initial_points(M, R, st.seed)
    res = minimize_on_sphere(
        obj, np.tile(x0, (n, 1)), ftol=st.inner_tolerance, max_iter=st.max_inner_iterations,
        threads=st.threads,
    )
    f = res.f.reshape(n, R)
    best = np.argmin(f, axis=1)
    rows = np.arange(n) * R + best
    psi = obj.psi(res.u[rows], rows)
    return idx, f[np.arange(n), best], psi, np.zeros(n)


def _penalty_constrained(problem: BoundProblem, targets: np.ndarray):
    st = problem.settings
    B = problem.space.basis
    K = problem.K
    ops = np.stack([problem.space.reduce(w) for w in problem.witnesses])
    n, R = targets.shape[0], st.restarts
    tgt = np.repeat(targets, R, axis=0)
    u = np.tile(_initial_points(B, R, st.seed), (n, 1))
    obj = _Objective(problem.measure, B, pen_ops=ops, targets=tgt)
    for mu in PENALTY_SCHEDULE:
        obj.mu = mu
        res = minimize_on_sphere(
            obj, u, ftol=st.inner_tolerance, max_iter=st.max_inner_iterations, threads=st.threads
        )
        u = res.u
    rows = np.arange(n * R)
    E = obj.measure_only(u, rows)
    expect = np.stack([_ip(u, u @ ops[k].T) for k in range(K)], axis=1)
    resid = np.max(np.abs(expect - tgt), axis=1)

    E = E.reshape(n, R)
    resid = resid.reshape(n, R)
    keep, vals, psis, res_out = [], [], [], []
    for i in range(n):
        for limit in (PENALTY_RESIDUAL, INFEASIBLE_RESIDUAL):
            ok = resid[i] <= limit
            if np.any(ok):
                j = int(np.flatnonzero(ok)[np.argmin(E[i][ok])])
                if limit > PENALTY_RESIDUAL:
                    log.warning("constraint residual %.2e above %.0e at target %s",
                                resid[i, j], PENALTY_RESIDUAL, targets[i])
                keep.append(i)
                vals.append(E[i, j])
                psis.append(u[i * R + j] @ B.T)
                res_out.append(resid[i, j])
                break
    return np.array(keep, dtype=int), np.array(vals), np.array(psis).reshape(-1, DIM), np.array(res_out)


def constrained_pure_minimum(problem: BoundProblem, grid) -> SampledCurve:
    """inf E(psi) subject to <psi|W_k|psi> = w_k, for each target in ``grid``.

    A single witness whose restriction to the search space has the form
    a + b|phi><phi| fixes the overlap with phi, and the remaining freedom is
    parametrized exactly; otherwise a quadratic penalty with an increasing
    weight is used.  Infeasible targets are dropped; ``extras`` records which.
    For K >= 2 the curve's abscissa is the first witness value.
    """
    grid = np.asarray(grid, dtype=float)
    if problem.K == 1:
        targets = grid.reshape(-1, 1)
    else:
        targets = np.atleast_2d(grid)
        if targets.shape[1] != problem.K:
            raise ValueError(f"targets must have {problem.K} components")
    order = np.argsort(targets[:, 0], kind="stable")
    targets = targets[order]

    form = _projector_form(problem) if problem.K == 1 else None
    if form is not None:
        idx, vals, psis, resid = _exact_constrained(problem, form, targets[:, 0])
    else:
        idx, vals, psis, resid = _penalty_constrained(problem, targets)
    dropped = [tuple(t) for i, t in enumerate(targets) if i not in set(idx.tolist())]
    if idx.size < 2:
        raise ValueError("fewer than two feasible targets")
    return SampledCurve(
        targets[idx, 0],
        vals,
        extras={"targets": targets[idx], "minimizers": psis, "residuals": resid, "infeasible": dropped},
    )


def _near_duplicates(xs: np.ndarray) -> float:
    # abscissae closer than this are one sample; hull orientation tests are
    # ill-conditioned on pairs a few ulp apart
    return XS_MERGE_RTOL * max(float(np.ptp(xs)), 1.0)


def _merge_curves(a: SampledCurve, b: SampledCurve) -> SampledCurve:
    """Union of two samplings; near-coincident abscissae keep the lower value."""
    xs = np.concatenate([a.xs, b.xs])
    ys = np.concatenate([a.ys, b.ys])
    order = np.lexsort((ys, xs))
    xs, ys = xs[order], ys[order]
    tol = _near_duplicates(xs)
    keep = np.ones(xs.size, dtype=bool)
    last = 0
    for i in range(1, xs.size):
        if xs[i] - xs[last] <= tol:
            keep[i] = False
            if ys[i] < ys[last]:
                ys[last] = ys[i]
        else:
            last = i
    extras = {}
    for key in ("targets", "minimizers", "residuals"):
        if key in a.extras and key in b.extras:
            extras[key] = np.concatenate([a.extras[key], b.extras[key]])[order][keep]
    extras["infeasible"] = a.extras.get("infeasible", []) + b.extras.get("infeasible", [])
    return SampledCurve(xs[keep], ys[keep], extras=extras)


def _refine_local_minima(problem: BoundProblem, pure: SampledCurve, rounds: int, points: int) -> SampledCurve:
    """Resample around interior local minima of the pure-state curve.

    The tangle vanishes on isolated pure states, where the constrained curve
    has a V-shaped dip; a dip between two samples lifts the hull by up to
    (slope x spacing), so each round zooms into the bracket of every sampled
    minimum.  Only hull knots with a dip deeper than DIP_TOL are refined, so
    flat stretches where the curve is zero up to noise are left alone.
    """
    for _ in range(rounds):
        xs, ys = pure.xs, pure.ys
        knots = set(lower_convex_envelope(pure).knot_index.tolist())
        mins = [
            i for i in range(1, xs.size - 1)
            if i in knots and ys[i] <= min(ys[i - 1], ys[i + 1])
            and max(ys[i - 1], ys[i + 1]) - ys[i] > DIP_TOL
        ]
        if not mins:
            break
        new = np.concatenate([np.linspace(xs[i - 1], xs[i + 1], points + 2)[1:-1] for i in mins])
        new = np.setdiff1d(new, xs)
        if new.size < 2:
            break
        pure = _merge_curves(pure, constrained_pure_minimum(problem, new))
    return pure


def bound_via_convexification(
    problem: BoundProblem, grid, support_points: int = 101, refine_rounds: int = 4
) -> SampledCurve:
    """Lower convex envelope of the constrained pure-state curve, on ``grid``.

    The envelope is built over the whole attainable range of the witness in
    the search space (grid plus ``support_points`` evenly spaced values), so
    that pure states outside the requested window still shape the hull.
    Sampled local minima are then bracketed and resampled ``refine_rounds``
    times.
    """
    if problem.K != 1:
        raise ValueError("convexification is implemented for a single witness")
    grid = np.unique(np.asarray(grid, dtype=float))
    lo, hi = _feasible_range(problem)
    even = np.linspace(lo, hi, support_points)
    # support values within rounding of a requested grid value would duplicate it
    gap = np.min(np.abs(even[:, None] - grid[None, :]), axis=1)
    support = np.unique(np.concatenate([grid, even[gap > _near_duplicates(even)]]))
    support = support[(support >= lo - 1e-12) & (support <= hi + 1e-12)]
    pure = constrained_pure_minimum(problem, support)
    pure = _refine_local_minima(problem, pure, refine_rounds, points=6)
    env = lower_convex_envelope(pure)
    inside = (grid >= env.domain[0]) & (grid <= env.domain[1])
    xs = grid[inside]
    return SampledCurve(xs, envelope_eval(env, xs), extras={"pure_curve": pure, "envelope": env})


@dataclass
class EquivalenceReport:
    grid: np.ndarray
    legendre: np.ndarray
    convexified: np.ndarray
    max_discrepancy: float
    worst_point: float
    statuses: list[Status]


def equivalence_report(problem: BoundProblem, grid) -> EquivalenceReport:
    """Compare the dual route with the convexified primal route on a grid."""
    conv = bound_via_convexification(problem, grid)
    dual = legendre_sweep(problem, conv.xs)
    leg = np.array([r.epsilon for r in dual])
    # the primal route is not clamped; a negative hull value means zero bound
    cvx = np.maximum(conv.ys, 0.0)
    diff = np.abs(leg - cvx)
    k = int(np.argmax(diff))
    return EquivalenceReport(conv.xs, leg, cvx, float(diff[k]), float(conv.xs[k]), [r.status for r in dual])


# -- GHZ-fidelity helpers -----------------------------------------------------------

FIDELITY_ALPHA = 0.75
RESTRICTED_ALPHA = 0.5


def restricted_problem(
    p: float = 1.0, measure: Measure | str = Measure.TAU3, settings: OptimizerSettings | None = None
) -> BoundProblem:
    """GHZ witness 1/2 - pi_GHZ on the GHZ/W span; w = 1/2 - p for rho(p)."""
    return BoundProblem(
        witnesses=(projector_witness(GHZ, RESTRICTED_ALPHA),),
        measured=(RESTRICTED_ALPHA - p,),
        measure=Measure(measure),
        space=SearchSpace.span(GHZ, W),
        settings=settings or OptimizerSettings(),
    )


def skew_problem(
    omega: float,
    p: float = 1.0,
    measure: Measure | str = Measure.TAU3_SQ,
    settings: OptimizerSettings | None = None,
) -> BoundProblem:
    """Skew witness on the GHZ/W span; rho(p) has no GHZ/W coherence, so w = -p."""
    return BoundProblem(
        witnesses=(skew_witness(omega),),
        measured=(-p,),
        measure=Measure(measure),
        space=SearchSpace.span(GHZ, W),
        settings=settings or OptimizerSettings(),
    )


def fidelity_problem(
    p: float = 1.0,
    measure: Measure | str = Measure.TAU3,
    settings: OptimizerSettings | None = None,
    space: SearchSpace | str = "full",
) -> BoundProblem:
    if isinstance(space, str):
        space = SearchSpace.from_json(space)
    return BoundProblem(
        witnesses=(projector_witness(GHZ, FIDELITY_ALPHA),),
        measured=(FIDELITY_ALPHA - p,),
        measure=Measure(measure),
        space=space,
        settings=settings or OptimizerSettings(),
    )


def fidelity_curve(ps, measure=Measure.TAU3, settings=None, space="full") -> list[BoundResult]:
    ps = np.asarray(ps, dtype=float)
    if np.any((ps < 0) | (ps > 1)):
        raise ValueError("fidelities must lie in [0, 1]")
    prob = fidelity_problem(1.0, measure, settings, space)
    return legendre_sweep(prob, FIDELITY_ALPHA - ps)


def fidelity_bound(p: float, measure=Measure.TAU3, settings=None, space="full") -> float:
    """Lower bound on the tangle given the GHZ fidelity p."""
    return fidelity_curve([p], measure, settings, space)[0].epsilon


def noisy_ghz_fidelity(gamma):
    """GHZ fidelity of gamma*|GHZ><GHZ| + (1-gamma)*1/8.

    Exact for ``fractions.Fraction`` input.
    """
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must lie in [0, 1]")
    return gamma + (1 - gamma) / 8


def noisy_ghz_state(gamma: float) -> np.ndarray:
    return gamma * GHZ.projector() + (1.0 - gamma) * np.eye(DIM) / DIM


# -- decompositions ------------------------------------------------------------------


def certify_decomposition(dec: Decomposition, target, measure=Measure.TAU3) -> Certificate:
    """Average of E over a decomposition, an upper bound on E(target) if it matches."""
    target = np.asarray(target, dtype=complex)
    if target.shape != (DIM, DIM):
        raise ValueError("target must be an 8x8 matrix")
    measure = Measure(measure)
    residual = float(np.max(np.abs(dec.density_matrix() - target)))
    upper = float(sum(p * measure.of(s) for p, s in zip(dec.weights, dec.states)))
    return Certificate(upper, residual, residual <= CERTIFY_RESIDUAL)
