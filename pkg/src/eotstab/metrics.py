"""Distances between discrete measures, couplings and potentials.

Atoms of different measures are matched through their canonical keys
(coordinates rounded to 12 significant digits). Metrics that cannot be
evaluated for the given inputs return :data:`INAPPLICABLE` instead of
raising, so sweeps always produce complete rows.
"""

import math

import numpy as np

from .measures import DiscreteMeasure, canonical_key

#: Sentinel for a metric that does not apply to its inputs (a quiet NaN).
INAPPLICABLE = float("nan")

BL_DICTIONARY_VERSION = "bl-product-v1"


def is_inapplicable(value):
    return isinstance(value, float) and math.isnan(value)


def _mass_by_key(obj):
    from .sinkhorn import Coupling

    if isinstance(obj, DiscreteMeasure):
        return dict(zip(obj.keys, obj.weights.tolist()))
    if isinstance(obj, Coupling):
        out = {}
        M = obj.matrix
        for i, kx in enumerate(obj.source.keys):
            for j, ky in enumerate(obj.target.keys):
                if M[i, j] > 0:
                    out[(kx, ky)] = float(M[i, j])
        return out
    raise TypeError(f"expected DiscreteMeasure or Coupling, got {type(obj).__name__}")


def _tv(pm, qm):
    keys = set(pm) | set(qm)
    # sorted for a summation order independent of hashing
    total = math.fsum(abs(pm.get(k, 0.0) - qm.get(k, 0.0)) for k in sorted(keys))
    return min(0.5 * total, 1.0)


def tv_distance(p, q):
    """Total variation distance ``0.5 * sum |p(a) - q(a)|`` over the union of supports."""
    return _tv(_mass_by_key(p), _mass_by_key(q))


def tv_distance_couplings(a, b):
    """Total variation distance between couplings, cell by cell on the product grid."""
    return _tv(_mass_by_key(a), _mass_by_key(b))


def relative_entropy(p, q):
    """``H(p|q) = sum p log(p/q)``; ``inf`` when ``p`` charges an atom ``q`` does not."""
    pm, qm = _mass_by_key(p), _mass_by_key(q)
    terms = []
    for k in sorted(pm):
        pk = pm[k]
        qk = qm.get(k, 0.0)
        if qk <= 0:
            return math.inf
        terms.append(pk * math.log(pk / qk))
    return max(math.fsum(terms), 0.0)


def ky_fan(f_n, f, mu, support=None):
    """Ky Fan distance ``inf{t > 0 : mu(|f_n - f| > t) <= t}``.

    ``f_n`` and ``f`` are evaluated on the atoms of ``mu``. If ``support``
    (the measure ``f_n`` was computed on) is given and its atoms differ from
    those of ``mu``, the comparison is meaningless and :data:`INAPPLICABLE`
    is returned.
    """
    f_n = np.asarray(f_n, dtype=float).ravel()
    f = np.asarray(f, dtype=float).ravel()
    if support is not None and not support.same_support(mu):
        return INAPPLICABLE
    if f_n.shape != f.shape or f.shape[0] != mu.size:
        return INAPPLICABLE
    delta = np.abs(f_n - f)
    order = np.argsort(delta, kind="stable")
    d = delta[order]
    w = mu.weights[order]
    # above[k] = mass of the atoms d[k:], exactly 0 past the end
    above = np.append(np.cumsum(w[::-1])[::-1], 0.0)
    levels = np.concatenate(([0.0], np.unique(d[d > 0])))
    tails = above[np.searchsorted(d, levels, side="right")]
    candidates = np.maximum(levels, tails)
    upper = np.append(levels[1:], np.inf)
    return float(np.min(candidates[candidates < upper]))


def _cdf_gap(values_a, weights_a, values_b, weights_b):
    va = np.array([canonical_key([v])[0] for v in np.ravel(values_a)])
    vb = np.array([canonical_key([v])[0] for v in np.ravel(values_b)])
    grid = np.unique(np.concatenate((va, vb)))
    oa, ob = np.argsort(va, kind="stable"), np.argsort(vb, kind="stable")
    ca = np.concatenate(([0.0], np.cumsum(np.asarray(weights_a)[oa])))
    cb = np.concatenate(([0.0], np.cumsum(np.asarray(weights_b)[ob])))
    Fa = ca[np.searchsorted(va[oa], grid, side="right")]
    Fb = cb[np.searchsorted(vb[ob], grid, side="right")]
    return float(np.max(np.abs(Fa - Fb)))


def pushforward_kolmogorov(f_n, mu_n, f, mu):
    """Kolmogorov distance between the laws of ``f_n`` under ``mu_n`` and ``f`` under ``mu``.

    The supports of ``mu_n`` and ``mu`` may differ; only the real-valued
    pushforwards are compared.
    """
    return min(_cdf_gap(f_n, mu_n.weights, f, mu.weights), 1.0)


def _base_functions(dim):
    """(function, Lipschitz bound) pairs on R^dim, each bounded by 1 in sup-norm."""
    funcs = [(lambda z: np.ones(z.shape[0]), 0.0)]
    for k in range(dim):
        funcs.append((lambda z, k=k: np.clip(z[:, k], -1.0, 1.0), 1.0))
    for k in range(dim):
        funcs.append((lambda z, k=k: np.sin(z[:, k]), 1.0))
    # sup |d/dr exp(-r^2)| = sqrt(2/e)
    funcs.append((lambda z: np.exp(-np.einsum("ij,ij->i", z, z)), math.sqrt(2.0 / math.e)))
    return funcs


def bl_dictionary(dim_x, dim_y):
    """Test functions ``h(x, y) = s * u(x) * v(y)`` with ``|h| <= 1`` and ``Lip(h) <= 1``.

    ``u`` and ``v`` range over 1, clipped coordinates, sine of coordinates
    and the Gaussian bump; ``s = 1 / max(1, sqrt(Lip(u)^2 + Lip(v)^2))``.
    """
    out = []
    for u, lu in _base_functions(dim_x):
        for v, lv in _base_functions(dim_y):
            out.append((u, v, 1.0 / max(1.0, math.hypot(lu, lv))))
    return out


def _integrals(c, dictionary):
    X, Y, M = c.source.atoms, c.target.atoms, c.matrix
    return np.array([s * (u(X) @ M @ v(Y)) for u, v, s in dictionary])


def bounded_lipschitz(a, b):
    """Largest gap ``|int h da - int h db|`` over the fixed test-function dictionary.

    A computable stand-in for a weak-convergence metric between couplings;
    it is at most twice their total variation distance.
    """
    if a.source.dim != b.source.dim or a.target.dim != b.target.dim:
        raise ValueError("couplings live on spaces of different dimensions")
    dictionary = bl_dictionary(a.source.dim, a.target.dim)
    return float(np.max(np.abs(_integrals(a, dictionary) - _integrals(b, dictionary))))


def sup_distance(f_n, f, mu, support=None):
    """``max |f_n - f|`` over the atoms of ``mu``; inapplicable across supports."""
    if support is not None and not support.same_support(mu):
        return INAPPLICABLE
    return float(np.max(np.abs(np.asarray(f_n, dtype=float) - np.asarray(f, dtype=float))))

