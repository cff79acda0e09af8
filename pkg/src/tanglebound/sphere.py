"""Batched local minimization on the complex unit sphere.

Each row of the batch is an independent problem ``min f_i(u)`` over
``u in C^m`` with ``|u| = 1``.  Rows share the iteration loop only so that
numpy can evaluate them together; every row keeps its own L-BFGS memory,
step length and stopping state, so a row's trajectory does not depend on
which other rows are in the batch.

The objective callback receives the current points of the active rows and
their row indices and returns ``(f, G)`` where ``G = 2 df/d(conj u)`` is the
Euclidean gradient written as a complex vector.  The iterate is retracted
to the sphere after every step.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

Objective = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]

ARMIJO_C1 = 1e-4
MAX_BACKTRACK = 40
MAX_ANGLE = 0.5
SMALL_STEPS_TO_STOP = 3


@dataclass
class SphereResult:
    u: np.ndarray
    f: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray


def _ip(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Real inner product of complex vectors along the last axis."""
    return (a.real * b.real + a.imag * b.imag).sum(axis=-1)


def _normalize(u: np.ndarray) -> np.ndarray:
    return u / np.sqrt(_ip(u, u))[..., None]


def _tangent(u: np.ndarray, g: np.ndarray) -> np.ndarray:
    return g - _ip(u, g)[:, None] * u


def thread_count() -> int:
    env = os.environ.get("TANGLEBOUND_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def minimize_on_sphere(
    objective: Objective,
    u0: np.ndarray,
    ftol: float = 1e-8,
    max_iter: int = 2000,
    memory: int = 8,
    gtol: float = 1e-11,
    threads: int | None = None,
) -> SphereResult:
    """Minimize every row of ``u0`` independently; see module docstring.

    With ``threads > 1`` the rows are split into contiguous blocks solved in
    a thread pool.  Rows are independent, so the result is identical for
    any split.
    """
    u0 = np.asarray(u0, dtype=complex)
    threads = thread_count() if threads is None else max(1, int(threads))
    n = u0.shape[0]
    if threads == 1 or n < 2 * threads:
        return _minimize_block(objective, u0, np.arange(n), ftol, max_iter, memory, gtol)

    blocks = np.array_split(np.arange(n), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(
            pool.map(
                lambda rows: _minimize_block(objective, u0[rows], rows, ftol, max_iter, memory, gtol),
                blocks,
            )
        )
    return SphereResult(
        u=np.concatenate([p.u for p in parts]),
        f=np.concatenate([p.f for p in parts]),
        converged=np.concatenate([p.converged for p in parts]),
        iterations=np.concatenate([p.iterations for p in parts]),
    )


def _minimize_block(objective, u0, row_ids, ftol, max_iter, memory, gtol) -> SphereResult:
    n, m = u0.shape
    x = _normalize(u0.copy())
    f, G = objective(x, row_ids)
    g = _tangent(x, G)

    S = np.zeros((n, memory, m), dtype=complex)
    Y = np.zeros((n, memory, m), dtype=complex)
    rho = np.zeros((n, memory))
    nmem = np.zeros(n, dtype=int)
    small = np.zeros(n, dtype=int)
    active = np.ones(n, dtype=bool)
    converged = np.zeros(n, dtype=bool)
    iters = np.zeros(n, dtype=int)

    gnorm = np.sqrt(_ip(g, g))
    done = gnorm <= gtol
    converged[done] = True
    active[done] = False

    for _ in range(max_iter):
        A = np.flatnonzero(active)
        if A.size == 0:
            break
        iters[A] += 1
        xa, ga, fa = x[A], g[A], f[A]
        Sa, Ya, ra, na = S[A], Y[A], rho[A], nmem[A]

        # two-loop recursion, newest pair first
        q = ga.copy()
        alph = np.zeros((A.size, memory))
        for j in range(memory):
            valid = j < na
            a = np.where(valid, ra[:, j] * _ip(Sa[:, j], q), 0.0)
            alph[:, j] = a
            q -= a[:, None] * Ya[:, j]
        yy = _ip(Ya[:, 0], Ya[:, 0])
        gamma = np.where(na > 0, _ip(Sa[:, 0], Ya[:, 0]) / np.where(yy > 0, yy, 1.0), 1.0)
        r = gamma[:, None] * q
        for j in range(memory - 1, -1, -1):
            valid = j < na
            b = np.where(valid, ra[:, j] * _ip(Ya[:, j], r), 0.0)
            r += ((alph[:, j] - b) * valid)[:, None] * Sa[:, j]
        d = _tangent(xa, -r)

        slope = _ip(ga, d)
        dnorm = np.sqrt(_ip(d, d))
        gn = np.sqrt(_ip(ga, ga))
        bad = ~(slope < -1e-12 * gn * dnorm)
        if np.any(bad):
            d[bad] = -ga[bad]
            na = np.where(bad, 0, na)
            slope = np.where(bad, -gn * gn, slope)
            dnorm = np.where(bad, gn, dnorm)

        step = np.where(na > 0, 1.0, 0.1 / np.maximum(dnorm, 1e-300))
        step = np.minimum(step, MAX_ANGLE / np.maximum(dnorm, 1e-300))

        x_new = xa.copy()
        f_new = fa.copy()
        G_new = np.zeros_like(ga)
        accepted = np.zeros(A.size, dtype=bool)
        pending = np.arange(A.size)
        for _bt in range(MAX_BACKTRACK):
            if pending.size == 0:
                break
            xt = _normalize(xa[pending] + step[pending, None] * d[pending])
            ft, Gt = objective(xt, row_ids[A[pending]])
            ok = ft <= fa[pending] + ARMIJO_C1 * step[pending] * slope[pending]
            hit = pending[ok]
            x_new[hit] = xt[ok]
            f_new[hit] = ft[ok]
            G_new[hit] = Gt[ok]
            accepted[hit] = True
            pending = pending[~ok]
            step[pending] *= 0.5

        # line-search failure: drop curvature memory, or stop if already steepest
        failed = ~accepted
        if np.any(failed):
            stuck = failed & (na == 0)
            ids = A[stuck]
            converged[ids] = True
            active[ids] = False
            nmem[A[failed & (na > 0)]] = 0

        acc = np.flatnonzero(accepted)
        if acc.size == 0:
            continue
        ids = A[acc]
        g_new = _tangent(x_new[acc], G_new[acc])
        s = x_new[acc] - xa[acc]
        y = g_new - ga[acc]
        sy = _ip(s, y)
        upd = sy > 1e-14 * np.sqrt(_ip(s, s) * _ip(y, y))
        S_acc, Y_acc, r_acc = Sa[acc], Ya[acc], ra[acc]
        n_acc = na[acc]
        if np.any(upd):
            S_acc[upd] = np.concatenate([s[upd, None], S_acc[upd, :-1]], axis=1)
            Y_acc[upd] = np.concatenate([y[upd, None], Y_acc[upd, :-1]], axis=1)
            r_acc[upd] = np.concatenate([(1.0 / sy[upd])[:, None], r_acc[upd, :-1]], axis=1)
            n_acc = np.where(upd, np.minimum(n_acc + 1, memory), n_acc)
        S[ids], Y[ids], rho[ids], nmem[ids] = S_acc, Y_acc, r_acc, n_acc

        decrease = f[ids] - f_new[acc]
        x[ids], f[ids], g[ids] = x_new[acc], f_new[acc], g_new
        tiny = decrease <= ftol * (1.0 + np.abs(f_new[acc]))
        small[ids] = np.where(tiny, small[ids] + 1, 0)
        gstop = np.sqrt(_ip(g_new, g_new)) <= gtol
        stop = (small[ids] >= SMALL_STEPS_TO_STOP) | gstop
        converged[ids[stop]] = True
        active[ids[stop]] = False

    return SphereResult(u=x, f=f, converged=converged, iterations=iters)
