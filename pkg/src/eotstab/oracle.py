"""Brute-force entropic OT on tiny instances, independent of the Sinkhorn recursion.

The transport polytope Pi(mu, nu) of an m x n problem is parameterised by
the (m-1)(n-1) cells outside the last row and column. Moving cell (i, j)
by ``t`` while compensating in (i, n-1), (m-1, j) and (m-1, n-1) keeps
both marginals fixed, so cyclic coordinate descent along these moves stays
exactly feasible. The remaining 2x2 rectangle cycles are swept as well;
they span nothing new but make the descent far better conditioned when
atoms nearly coincide. Each one-dimensional problem is solved by
golden-section search on its feasible interval.
"""

import math
from dataclasses import dataclass

import numpy as np

from .diagnostics import normalize
from .measures import DiscreteMeasure, build_cost
from .sinkhorn import Coupling, Potentials, _cost_values

MAX_CELLS = 25
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class SeparabilityError(ValueError):
    """The log-density of a coupling is not of the form f(x) + g(y) - c(x, y)."""


@dataclass(frozen=True)
class PolytopeParam:
    """Free cells of Pi(mu, nu) and the compensating cells of each move.

    ``moves[k]`` is a list of ``(i, j, sign)`` entries; moving free cell
    ``free[k]`` by ``t`` adds ``sign * t`` to every listed cell. ``cycles``
    holds the other rectangle moves in the same format.
    """

    shape: tuple
    free: tuple
    moves: tuple
    cycles: tuple = ()

    @classmethod
    def for_shape(cls, m, n):
        free, moves, cycles = [], [], []
        for i in range(m - 1):
            for j in range(n - 1):
                free.append((i, j))
                moves.append(((i, j, 1), (m - 1, n - 1, 1), (i, n - 1, -1), (m - 1, j, -1)))
        for i in range(m - 1):
            for k in range(i + 1, m):
                for j in range(n - 1):
                    for l in range(j + 1, n):
                        if (k, l) != (m - 1, n - 1):
                            cycles.append(((i, j, 1), (k, l, 1), (i, l, -1), (k, j, -1)))
        return cls((m, n), tuple(free), tuple(moves), tuple(cycles))

    @property
    def directions(self):
        return self.moves + self.cycles

    def feasible_interval(self, P, k):
        lo, hi = -math.inf, math.inf
        for i, j, s in self.directions[k]:
            if s > 0:
                lo = max(lo, -P[i][j])
            else:
                hi = min(hi, P[i][j])
        return lo, hi


def _line_delta(P, R, c, move, eps, t):
    """Objective change when moving ``t`` along ``move``, without cancellation error."""
    total = 0.0
    for i, j, s in move:
        p, st = P[i][j], s * t
        total += c[i][j] * st + eps * (st * math.log((p + st) / R[i][j]) + p * math.log1p(st / p))
    return total


def _directional_derivative(P, R, c, move, eps):
    return sum(s * (c[i][j] + eps * math.log(P[i][j] / R[i][j])) for i, j, s in move)


def _golden_section(fun, lo, hi, iters):
    x1 = hi - INV_PHI * (hi - lo)
    x2 = lo + INV_PHI * (hi - lo)
    f1, f2 = fun(x1), fun(x2)
    for _ in range(iters):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - INV_PHI * (hi - lo)
            f1 = fun(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + INV_PHI * (hi - lo)
            f2 = fun(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def _bracket(fun, lo, hi, h):
    """Interval inside ``(lo, hi)`` known to contain the minimiser of a convex ``fun`` with ``fun(0) = 0``."""
    a, b = max(-h, 0.5 * lo), min(h, 0.5 * hi)
    fa, fb = fun(a), fun(b)
    if fa >= 0 and fb >= 0:
        return a, b
    if fb < 0:
        # descend to the right until the objective rises or the boundary is near
        left, x, fx = 0.0, b, fb
        while True:
            nxt = min(2 * x, x + 0.5 * (hi - x))
            if nxt <= x:
                return left, hi
            fn = fun(nxt)
            if fn >= fx:
                return left, nxt
            left, x, fx = x, nxt, fn
    left, x, fx = 0.0, a, fa
    while True:
        nxt = max(2 * x, x - 0.5 * (x - lo))
        if nxt >= x:
            return lo, left
        fn = fun(nxt)
        if fn >= fx:
            return nxt, left
        left, x, fx = x, nxt, fn


def brute_force_solve(mu, nu, C, eps, tol=1e-10, max_sweeps=200_000, return_info=False):
    """Minimise ``<c, pi> + eps * H(pi | mu x nu)`` over Pi(mu, nu) directly.

    Starts from the product coupling and sweeps over the free cells until
    every directional derivative along the polytope moves is at most
    ``tol`` in absolute value. Only for ``m * n <= 25``.

    Returns
    -------
    Coupling
        The minimiser; with ``return_info=True`` also a dict holding the
        number of sweeps and the final largest directional derivative.
    """
    m, n = mu.size, nu.size
    if m * n > MAX_CELLS:
        raise ValueError(f"oracle is limited to {MAX_CELLS} cells, got {m} x {n}")
    c = _cost_values(C)
    if c.shape != (m, n):
        raise ValueError(f"cost shape {c.shape} does not match marginals ({m}, {n})")
    R = np.outer(mu.weights, nu.weights).tolist()
    P = [row[:] for row in R]
    cl = c.tolist()
    param = PolytopeParam.for_shape(m, n)
    directions = param.directions
    steps = [1e-3] * len(directions)
    sweeps, worst = 0, 0.0
    while param.moves and sweeps < max_sweeps:
        worst = max(abs(_directional_derivative(P, R, cl, mv, eps)) for mv in param.moves)
        if worst <= tol:
            break
        sweeps += 1
        for k, move in enumerate(directions):
            lo, hi = param.feasible_interval(P, k)

            def fun(t, move=move):
                return _line_delta(P, R, cl, move, eps, t)

            a, b = _bracket(fun, lo, hi, 4.0 * steps[k] + 1e-300)
            t, ft = _golden_section(fun, a, b, 60)
            if ft < 0:
                for i, j, s in move:
                    P[i][j] += s * t
                steps[k] = abs(t)
            else:
                steps[k] = 0.25 * steps[k]
    pi = Coupling(np.array(P), mu, nu)
    if return_info:
        return pi, {"sweeps": sweeps, "max_directional_derivative": worst}
    return pi


def potentials_from_coupling(pi, C, mu, nu, eps, alpha=0.0, threshold=1e-6):
    """Read potentials off a strictly positive coupling.

    The log-density ``L_ij = eps * log(pi_ij / (mu_i nu_j)) + c_ij`` is split
    into ``f_i + g_j`` by least squares (row and column means), then shifted
    to the arctan normalisation ``alpha``. Raises :class:`SeparabilityError`
    if the split leaves a residual above ``threshold``.
    """
    M = pi.matrix if hasattr(pi, "matrix") else np.asarray(pi, dtype=float)
    if np.any(M <= 0):
        raise SeparabilityError("coupling has zero entries; it is not an entropic optimiser")
    L = eps * np.log(M / np.outer(mu.weights, nu.weights)) + _cost_values(C)
    f = L.mean(axis=1)
    g = L.mean(axis=0) - L.mean()
    resid = float(np.max(np.abs(f[:, None] + g[None, :] - L)))
    if resid > threshold:
        raise SeparabilityError(f"log-density is not separable: residual {resid:.3g}")
    return normalize(Potentials(f, g, eps), mu, alpha).potentials


def random_instance(rng, sizes=(2, 3, 4, 5), epsilons=(0.1, 1.0), dim=2):
    """Small random problem: positive weights, quadratic cost on atoms in [0, 1]^dim."""
    m, n = (int(s) for s in rng.choice(sizes, size=2))
    eps = float(rng.choice(epsilons))
    mu = DiscreteMeasure.from_weights(rng.random((m, dim)), rng.uniform(0.1, 1.0, m))
    nu = DiscreteMeasure.from_weights(rng.random((n, dim)), rng.uniform(0.1, 1.0, n))
    return mu, nu, build_cost(mu, nu, "sqeuclidean"), eps
