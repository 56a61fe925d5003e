"""Log-domain Sinkhorn iterations on discrete marginals.

Potentials are kept in cost units: for regularisation ``eps`` the optimal
coupling has density ``exp((f_i + g_j - c_ij) / eps)`` with respect to the
product of the marginals.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .measures import CostMatrix, DiscreteMeasure

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 100_000
EXPONENT_LIMIT = 700.0


class PotentialOverflowError(FloatingPointError):
    """Raised when a coupling density would overflow double precision."""


def _cost_values(C):
    return C.values if isinstance(C, CostMatrix) else np.asarray(C, dtype=float)


@dataclass(frozen=True, eq=False)
class Potentials:
    f: np.ndarray
    g: np.ndarray
    eps: float

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float).ravel()
        g = np.asarray(self.g, dtype=float).ravel()
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise ValueError("potentials must be finite")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps!r}")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "eps", float(self.eps))

    def shifted(self, a):
        """The equivalent pair ``(f + a, g - a)``."""
        return Potentials(self.f + a, self.g - a, self.eps)

    def to_dict(self):
        return {"f": self.f.tolist(), "g": self.g.tolist(), "eps": self.eps, "units": "cost"}


@dataclass(frozen=True, eq=False)
class Coupling:
    """Nonnegative matrix on the product of the atoms of ``source`` and ``target``.

    Mass and marginals are not enforced here because Sinkhorn iterates
    legitimately have marginals different from ``(source, target)``; use
    :meth:`check` to validate a coupling claimed to lie in Pi(source, target).
    """

    matrix: np.ndarray
    source: DiscreteMeasure
    target: DiscreteMeasure

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        if M.shape != (self.source.size, self.target.size):
            raise ValueError(
                f"matrix shape {M.shape} does not match marginals "
                f"({self.source.size}, {self.target.size})"
            )
        if not np.all(np.isfinite(M)) or np.any(M < 0):
            raise ValueError("coupling entries must be finite and nonnegative")
        M = M.copy()
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def mass(self):
        return float(self.matrix.sum())

    def row_marginal(self):
        return self.matrix.sum(axis=1)

    def col_marginal(self):
        return self.matrix.sum(axis=0)

    def marginal_errors(self):
        """TV errors of the row and column sums against ``source`` and ``target``."""
        ex = 0.5 * np.abs(self.row_marginal() - self.source.weights).sum()
        ey = 0.5 * np.abs(self.col_marginal() - self.target.weights).sum()
        return float(ex), float(ey)

    def check(self, marginal_tol, mass_tol=1e-10):
        if abs(self.mass - 1.0) > mass_tol:
            raise ValueError(f"coupling mass {self.mass!r} differs from 1")
        ex, ey = self.marginal_errors()
        if max(ex, ey) > marginal_tol:
            raise ValueError(f"marginal errors ({ex:.3g}, {ey:.3g}) exceed {marginal_tol:g}")
        return self

    def to_dict(self):
        return {
            "matrix": self.matrix.tolist(),
            "source": self.source.to_dict(),
            "target": self.target.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class SolveReport:
    potentials: Potentials
    coupling: Coupling
    iterations: int
    marginal_error_trace: np.ndarray
    entropy_trace: np.ndarray
    dual_trace: np.ndarray
    converged: bool
    tol: float = DEFAULT_TOL

    def trace_rows(self):
        for k in range(self.iterations):
            yield (k + 1, float(self.marginal_error_trace[k]), float(self.entropy_trace[k]),
                   float(self.dual_trace[k]))

    def to_dict(self):
        return {
            "potentials": self.potentials.to_dict(),
            "coupling": self.coupling.to_dict(),
            "iterations": self.iterations,
            "converged": self.converged,
            "tol": self.tol,
            "marginal_error_trace": self.marginal_error_trace.tolist(),
            "entropy_trace": self.entropy_trace.tolist(),
            "dual_trace": self.dual_trace.tolist(),
        }

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    def save_trace_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "marginal_tv", "entropy_sum", "dual_value"])
            for it, tv, ent, dual in self.trace_rows():
                w.writerow([it, repr(tv), repr(ent), repr(dual)])


def half_step_psi(phi, C, mu, eps):
    """``psi_j = -eps * log sum_i mu_i exp((phi_i - c_ij) / eps)``."""
    c = _cost_values(C)
    z = (np.asarray(phi, dtype=float)[:, None] - c) / eps
    return -eps * logsumexp(z, axis=0, b=mu.weights[:, None])


def half_step_phi(psi, C, nu, eps):
    """``phi_i = -eps * log sum_j nu_j exp((psi_j - c_ij) / eps)``."""
    c = _cost_values(C)
    z = (np.asarray(psi, dtype=float)[None, :] - c) / eps
    return -eps * logsumexp(z, axis=1, b=nu.weights[None, :])


def log_density(f, g, C, eps):
    return (np.asarray(f)[:, None] + np.asarray(g)[None, :] - _cost_values(C)) / eps


def _coupling_matrix(f, g, C, mu, nu, eps):
    dens = log_density(f, g, C, eps)
    if np.max(dens) <= EXPONENT_LIMIT:
        return np.exp(dens) * np.outer(mu.weights, nu.weights)
    logpi = dens + np.log(mu.weights)[:, None] + np.log(nu.weights)[None, :]
    if np.any(logpi > EXPONENT_LIMIT):
        i, j = np.unravel_index(np.argmax(logpi), logpi.shape)
        raise PotentialOverflowError(
            f"exponent {logpi[i, j]:.6g} at cell ({i}, {j}) exceeds {EXPONENT_LIMIT}"
        )
    return np.exp(logpi)


def coupling_from_potentials(p, C, mu, nu):
    """Coupling with density ``exp((f + g - c) / eps)`` against ``mu x nu``."""
    return Coupling(_coupling_matrix(p.f, p.g, C, mu, nu, p.eps), mu, nu)


def _kl(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pos = p > 0
    if np.any(q[pos] <= 0):
        return np.inf
    return max(float(np.sum(p[pos] * np.log(p[pos] / q[pos]))), 0.0)


@dataclass(frozen=True, eq=False)
class SinkhornState:
    """Potentials around full iteration ``t`` of the dual recursion.

    ``phi = phi_t``, ``psi = psi_t``, ``phi_next = phi_{t+1}`` and
    ``psi_prev = psi_{t-1}`` (zero for ``t = 0``). The primal iterates are
    ``pi_{2t} = pi(phi_t, psi_t)`` and ``pi_{2t+1} = pi(phi_{t+1}, psi_t)``.
    """

    t: int
    phi: np.ndarray
    psi: np.ndarray
    phi_next: np.ndarray
    psi_prev: np.ndarray
    C: CostMatrix = field(repr=False)
    mu: DiscreteMeasure = field(repr=False)
    nu: DiscreteMeasure = field(repr=False)
    eps: float = 1.0

    def coupling(self, n):
        """Primal iterate ``pi_n`` for ``n`` in ``{2t - 1, 2t, 2t + 1}``."""
        t = self.t
        if n == 2 * t:
            f, g = self.phi, self.psi
        elif n == 2 * t + 1:
            f, g = self.phi_next, self.psi
        elif n == 2 * t - 1:
            f, g = self.phi, self.psi_prev
        else:
            raise ValueError(f"state at t={t} does not hold pi_{n}")
        M = _coupling_matrix(f, g, self.C, self.mu, self.nu, self.eps)
        if n == -1:
            M = M / M.sum()
        return Coupling(M, self.mu, self.nu)

    def potentials(self, n):
        """The pair whose coupling against ``mu x nu`` is ``pi_n``."""
        if n == 2 * self.t:
            return Potentials(self.phi, self.psi, self.eps)
        if n == 2 * self.t + 1:
            return Potentials(self.phi_next, self.psi, self.eps)
        raise ValueError(f"state at t={self.t} does not hold pi_{n}")


def sinkhorn_states(mu, nu, C, eps, phi0=None):
    """Yield :class:`SinkhornState` for ``t = 0, 1, 2, ...`` starting at ``phi_0``."""
    c = _cost_values(C)
    if c.shape != (mu.size, nu.size):
        raise ValueError(f"cost shape {c.shape} does not match marginals ({mu.size}, {nu.size})")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    phi = np.zeros(mu.size) if phi0 is None else np.asarray(phi0, dtype=float).copy()
    psi_prev = np.zeros(nu.size)
    t = 0
    while True:
        psi = half_step_psi(phi, c, mu, eps)
        phi_next = half_step_phi(psi, c, nu, eps)
        yield SinkhornState(t, phi, psi, phi_next, psi_prev, C, mu, nu, eps)
        phi, psi_prev = phi_next, psi
        t += 1


def iterate_marginals(state):
    """Marginals ``(mu_{2t}, nu_{2t-1})`` of the iterates at ``state``.

    They follow from the potentials alone: ``mu_{2t}`` has density
    ``exp((phi_t - phi_{t+1}) / eps)`` against ``mu`` and ``nu_{2t-1}`` has
    density ``exp((psi_{t-1} - psi_t) / eps)`` against ``nu``. At ``t = 0``
    the second measure is the column marginal of the normalised initial
    kernel coupling.
    """
    eps = state.eps
    wx = state.mu.weights * np.exp((state.phi - state.phi_next) / eps)
    wy = state.nu.weights * np.exp((state.psi_prev - state.psi) / eps)
    mu_2t = DiscreteMeasure(state.mu.atoms, wx / wx.sum())
    nu_prev = DiscreteMeasure(state.nu.atoms, wy / wy.sum())
    return mu_2t, nu_prev


def solve(mu, nu, C, eps, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, phi0=None):
    """Run Sinkhorn from ``phi_0 = 0`` until the marginals are matched.

    Each iteration performs the two half steps and examines the odd iterate
    ``pi(phi_{t+1}, psi_t)``, whose row marginal is ``mu``. The run stops
    once both marginal TV errors are at most ``tol`` and the log-ratio of
    every marginal weight to its target is at most ``10 * tol / max(1, eps)``;
    the latter bounds the Schrodinger residual by ``10 * tol``.

    Returns
    -------
    SolveReport
        ``converged`` is False if ``max_iter`` iterations were not enough;
        this is a status, not an error.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol!r}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be at least 1, got {max_iter!r}")
    errors, entropies, duals = [], [], []
    converged = False
    for state in sinkhorn_states(mu, nu, C, eps, phi0):
        M = _coupling_matrix(state.phi_next, state.psi, C, mu, nu, eps)
        row, col = M.sum(axis=1), M.sum(axis=0)
        err = max(0.5 * np.abs(row - mu.weights).sum(), 0.5 * np.abs(col - nu.weights).sum())
        errors.append(err)
        entropies.append(_kl(row / row.sum(), mu.weights) + _kl(col / col.sum(), nu.weights))
        duals.append(float(mu.weights @ state.phi_next + nu.weights @ state.psi))
        if err <= tol:
            logratio = max(np.abs(np.log(row / mu.weights)).max(),
                           np.abs(np.log(col / nu.weights)).max())
            if logratio <= 10 * tol / max(1.0, eps):
                converged = True
                break
        if state.t + 1 >= max_iter:
            break
    p = Potentials(state.phi_next, state.psi, eps)
    return SolveReport(
        potentials=p,
        coupling=Coupling(M, mu, nu),
        iterations=len(errors),
        marginal_error_trace=np.array(errors),
        entropy_trace=np.array(entropies),
        dual_trace=np.array(duals),
        converged=converged,
        tol=tol,
    )
