"""Randomised invariance checks; each takes a seed and raises AssertionError on violation."""

import math

import numpy as np

from eotstab import (
    DiscreteMeasure,
    Potentials,
    bounded_lipschitz,
    coupling_from_potentials,
    ky_fan,
    normalize,
    pushforward_kolmogorov,
    relative_entropy,
    solve,
    tv_distance,
    tv_distance_couplings,
)
from eotstab.sinkhorn import Coupling

from conftest import random_measure, random_problem

TOL = 1e-10


def eps_scaling(seed):
    """Scaling cost and eps by lam leaves the coupling fixed and scales the potentials."""
    mu, nu, C, eps, rng = random_problem(seed)
    lam = float(rng.choice([1e-2, 0.5, 3.0, 100.0]))
    a = solve(mu, nu, C, eps, TOL)
    b = solve(mu, nu, C.scaled(lam), lam * eps, TOL)
    assert a.converged and b.converged
    assert tv_distance_couplings(a.coupling, b.coupling) <= 1e-9
    scale = lam * (1 + np.abs(a.potentials.f).max() + np.abs(a.potentials.g).max())
    assert np.abs(b.potentials.f - lam * a.potentials.f).max() <= 1e-9 * scale
    assert np.abs(b.potentials.g - lam * a.potentials.g).max() <= 1e-9 * scale


def shift_equivariance(seed):
    """Cost c + a(x) + b(y) has the same optimal coupling; potentials shift by (a, b)."""
    mu, nu, C, eps, rng = random_problem(seed)
    a, b = rng.uniform(0, 2, mu.size), rng.uniform(0, 2, nu.size)
    base = solve(mu, nu, C, eps, TOL)
    moved = solve(mu, nu, C.values + a[:, None] + b[None, :], eps, TOL)
    assert base.converged and moved.converged
    assert tv_distance_couplings(base.coupling, moved.coupling) <= 1e-8
    pb, pm = base.potentials, moved.potentials
    # potentials are unique up to a constant, so compare f + g
    sums = (pm.f[:, None] + pm.g[None, :]) - (pb.f[:, None] + pb.g[None, :])
    assert np.abs(sums - (a[:, None] + b[None, :])).max() <= 1e-8 * (1 + eps)
    shifted = coupling_from_potentials(pb.shifted(float(rng.normal())), C, mu, nu)
    assert tv_distance_couplings(shifted, base.coupling) <= 1e-12


def normalization_idempotence(seed):
    mu, _, _, eps, rng = random_problem(seed)
    p = Potentials(rng.normal(scale=10, size=mu.size), rng.normal(size=3), eps)
    alpha = float(rng.uniform(-1.5, 1.5))
    once = normalize(p, mu, alpha)
    twice = normalize(once.potentials, mu, alpha)
    assert abs(math.fsum(mu.weights * np.arctan(once.f)) - alpha) <= 1e-10
    assert np.abs(twice.f - once.f).max() <= 1e-12
    shifted = normalize(p.shifted(float(rng.normal(scale=5))), mu, alpha)
    assert np.abs(shifted.f - once.f).max() <= 1e-10


def pinsker(seed):
    rng = np.random.default_rng(seed)
    p = random_measure(rng, int(rng.integers(1, 10)))
    q = DiscreteMeasure.from_weights(p.atoms, rng.dirichlet(np.full(p.size, 0.5)) + 1e-12)
    assert tv_distance(p, q) <= math.sqrt(relative_entropy(p, q) / 2) + 1e-12


def metric_axioms(seed):
    """Symmetry, identity and triangle inequality for every distance."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    base = random_measure(rng, n)
    ms = [DiscreteMeasure.from_weights(base.atoms, rng.uniform(0.05, 1, n)) for _ in range(3)]
    ms[2] = random_measure(rng, n) if rng.random() < 0.5 else ms[2]
    nu = random_measure(rng, 3)
    pis = [Coupling(np.outer(m.weights, nu.weights), m, nu) for m in ms]
    fs = [rng.normal(scale=0.5, size=n) for _ in range(3)]
    slack = 1e-12
    pairs = [
        lambda i, j: tv_distance(ms[i], ms[j]),
        lambda i, j: tv_distance_couplings(pis[i], pis[j]),
        lambda i, j: bounded_lipschitz(pis[i], pis[j]),
        lambda i, j: pushforward_kolmogorov(fs[i], ms[i], fs[j], ms[j]),
        lambda i, j: ky_fan(fs[i], fs[j], base),
    ]
    for d in pairs:
        assert d(0, 1) == d(1, 0)
        assert d(0, 0) == 0.0
        assert d(0, 2) <= d(0, 1) + d(1, 2) + slack
    assert bounded_lipschitz(pis[0], pis[1]) <= 2 * tv_distance_couplings(pis[0], pis[1]) + slack


SUITE = {
    "eps_scaling": eps_scaling,
    "shift_equivariance": shift_equivariance,
    "normalization_idempotence": normalization_idempotence,
    "pinsker": pinsker,
    "metric_axioms": metric_axioms,
}
