"""Optimality certificates for potentials and the integrability quantities behind stability."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .sinkhorn import Potentials, _cost_values, log_density

NORMALIZATION_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class NormalizedPotentials:
    """Potentials shifted so that ``sum_i mu_i * arctan(f_i) == alpha``."""

    potentials: Potentials
    alpha: float

    @property
    def f(self):
        return self.potentials.f

    @property
    def g(self):
        return self.potentials.g

    @property
    def eps(self):
        return self.potentials.eps

    def to_dict(self):
        return {"potentials": self.potentials.to_dict(), "alpha": self.alpha}


def _arctan_mean(f, w, a):
    return math.fsum(w * np.arctan(f + a))


def normalize(p, mu, alpha=0.0):
    """Shift ``(f, g)`` to ``(f + a, g - a)`` with ``int arctan(f + a) dmu = alpha``.

    The map ``a -> int arctan(f + a) dmu`` is continuous, strictly
    increasing and onto ``(-pi/2, pi/2)``, so ``a`` is bracketed by
    doubling and then found with Brent's method at full float precision.
    """
    if not -math.pi / 2 < alpha < math.pi / 2:
        raise ValueError(f"alpha must lie in (-pi/2, pi/2), got {alpha!r}")
    f, w = p.f, mu.weights
    if f.shape[0] != w.shape[0]:
        raise ValueError("potential f does not match the atoms of mu")
    spread = math.tan(min(abs(alpha) + 0.1, 0.5 * (abs(alpha) + math.pi / 2)))
    lo, hi = -(f.max() + spread), -(f.min() - spread)
    width = max(hi - lo, 1.0)
    while _arctan_mean(f, w, lo) > alpha:
        lo -= width
        width *= 2
    while _arctan_mean(f, w, hi) < alpha:
        hi += width
        width *= 2
    a = brentq(lambda s: _arctan_mean(f, w, s) - alpha, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)
    return NormalizedPotentials(p.shifted(a), float(alpha))


def _unwrap(p):
    return p.potentials if isinstance(p, NormalizedPotentials) else p


def schroedinger_residual(p, C, mu, nu):
    """Sup-norm defects of the two Schrodinger equations, in cost units.

    ``r_f = max_i |f_i + eps log sum_j nu_j exp((g_j - c_ij)/eps)|`` and
    symmetrically for ``r_g``.
    """
    p = _unwrap(p)
    c, eps = _cost_values(C), p.eps
    zf = (p.g[None, :] - c) / eps
    r_f = np.max(np.abs(p.f + eps * logsumexp(zf, axis=1, b=nu.weights[None, :])))
    zg = (p.f[:, None] - c) / eps
    r_g = np.max(np.abs(p.g + eps * logsumexp(zg, axis=0, b=mu.weights[:, None])))
    return float(r_f), float(r_g)


def primal_value(pi, C, mu, nu, eps):
    """``<c, pi> + eps * H(pi | mu x nu)`` with ``0 log 0 = 0``."""
    M = pi.matrix if hasattr(pi, "matrix") else np.asarray(pi, dtype=float)
    c = _cost_values(C)
    ref = np.outer(mu.weights, nu.weights)
    pos = M > 0
    transport = math.fsum((c * M).ravel())
    entropy = math.fsum((M[pos] * np.log(M[pos] / ref[pos])).ravel())
    return transport + eps * entropy


def dual_value(p, mu, nu):
    """``sum_i mu_i f_i + sum_j nu_j g_j`` (potentials in cost units)."""
    p = _unwrap(p)
    return math.fsum(mu.weights * p.f) + math.fsum(nu.weights * p.g)


@dataclass(frozen=True)
class ConditionReport:
    """Integrability quantities of a potential pair at one perturbation index.

    Dict-valued fields map the requested level (or exponent ``beta``) to
    the computed value. ``math.inf`` marks entries that need a common
    support with the limit measures when there is none.
    """

    f_plus_mean: float
    g_plus_mean: float
    f_abs_mean: float
    g_abs_mean: float
    f_mean: float
    g_mean: float
    cost_mean: float
    tail_f: dict = field(default_factory=dict)
    tail_g: dict = field(default_factory=dict)
    exp_moment: dict = field(default_factory=dict)
    entropy_to_limit: float = math.inf
    rn_tail_mu: dict = field(default_factory=dict)
    rn_tail_nu: dict = field(default_factory=dict)

    def rows(self):
        """Flat ``(name, value)`` pairs in a fixed order."""
        out = [
            ("f_plus_mean", self.f_plus_mean),
            ("g_plus_mean", self.g_plus_mean),
            ("f_abs_mean", self.f_abs_mean),
            ("g_abs_mean", self.g_abs_mean),
            ("f_mean", self.f_mean),
            ("g_mean", self.g_mean),
            ("cost_mean", self.cost_mean),
        ]
        for name in ("tail_f", "tail_g", "exp_moment", "rn_tail_mu", "rn_tail_nu"):
            key = "beta" if name == "exp_moment" else "C"
            for level, value in getattr(self, name).items():
                out.append((f"{name}[{key}={level:g}]", value))
        out.append(("entropy_to_limit", self.entropy_to_limit))
        return out

    def to_dict(self):
        return {name: value for name, value in self.rows()}


def _tail(values, weights, level):
    mask = values > level
    return math.fsum(weights[mask] * values[mask])


def _rn_tail(limit, current, level):
    if not current.same_support(limit):
        return math.inf
    ratio = limit.weights / current.weights
    return math.fsum(limit.weights[ratio >= level])


def _kl_aligned(p, q):
    return max(math.fsum(p * np.log(p / q)), 0.0)


def condition_report(p, mu, nu, mu_limit, nu_limit, C, betas=(1.0,), tail_levels=(0.0, 1.0)):
    """Integrability and tail quantities that control stability, for one potential pair.

    ``p`` are potentials for ``(mu, nu)``; ``mu_limit``/``nu_limit`` are the
    limiting marginals. Exponential moments ``int e^{beta c} d(mu x nu)``
    are taken under the current marginals. Tail levels should be
    nonnegative, where ``C -> int f 1{f > C} dmu`` is nonincreasing.
    """
    p = _unwrap(p)
    c = _cost_values(C)
    wx, wy = mu.weights, nu.weights
    f, g = p.f, p.g
    exp_moment = {}
    w = np.outer(wx, wy).ravel()
    for beta in betas:
        with np.errstate(over="ignore"):
            exp_moment[float(beta)] = float(np.exp(logsumexp(beta * c.ravel(), b=w)))
    if mu.same_support(mu_limit) and nu.same_support(nu_limit):
        entropy = _kl_aligned(wx, mu_limit.weights) + _kl_aligned(wy, nu_limit.weights)
    else:
        entropy = math.inf
    return ConditionReport(
        f_plus_mean=math.fsum(wx * np.maximum(f, 0.0)),
        g_plus_mean=math.fsum(wy * np.maximum(g, 0.0)),
        f_abs_mean=math.fsum(wx * np.abs(f)),
        g_abs_mean=math.fsum(wy * np.abs(g)),
        f_mean=math.fsum(wx * f),
        g_mean=math.fsum(wy * g),
        cost_mean=float(wx @ c @ wy),
        tail_f={float(C_): _tail(f, wx, C_) for C_ in tail_levels},
        tail_g={float(C_): _tail(g, wy, C_) for C_ in tail_levels},
        exp_moment=exp_moment,
        entropy_to_limit=entropy,
        rn_tail_mu={float(C_): _rn_tail(mu_limit, mu, C_) for C_ in tail_levels},
        rn_tail_nu={float(C_): _rn_tail(nu_limit, nu, C_) for C_ in tail_levels},
    )


def potentials_residual(p, pi, C, mu, nu):
    """``max_ij |f_i + g_j - c_ij - eps log(pi_ij / (mu_i nu_j))|`` for a positive coupling."""
    p = _unwrap(p)
    M = pi.matrix if hasattr(pi, "matrix") else np.asarray(pi, dtype=float)
    target = p.eps * np.log(M / np.outer(mu.weights, nu.weights))
    return float(np.max(np.abs(p.eps * log_density(p.f, p.g, C, p.eps) - target)))
