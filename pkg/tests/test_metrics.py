import math

import numpy as np
import pytest
from hypothesis import given, settings

from eotstab import (
    DiscreteMeasure,
    bounded_lipschitz,
    ky_fan,
    pushforward_kolmogorov,
    relative_entropy,
    tv_distance,
    tv_distance_couplings,
)
from eotstab.metrics import INAPPLICABLE, bl_dictionary, is_inapplicable, sup_distance
from eotstab.sinkhorn import Coupling

import oracle_values as ov
from conftest import random_measure, seeds


def two(w, atoms=(0.0, 1.0)):
    return DiscreteMeasure(np.array(atoms, dtype=float)[:, None], np.array(w, dtype=float))


def reweight(m, rng):
    return DiscreteMeasure.from_weights(m.atoms, rng.uniform(0.05, 1.0, m.size))


class TestTotalVariation:
    def test_examples(self):
        a = two([0.5, 0.5])
        assert tv_distance(a, a) == 0.0
        assert tv_distance(a, two([0.7, 0.3])) == pytest.approx(0.2, abs=1e-15)
        assert tv_distance(a, two([0.5, 0.5], (5.0, 6.0))) == 1.0

    def test_couplings(self):
        a, b, far = two([0.5, 0.5]), two([0.7, 0.3]), two([0.5, 0.5], (5.0, 6.0))
        pa = Coupling(np.diag([0.5, 0.5]), a, a)
        assert tv_distance_couplings(pa, pa) == 0.0
        assert tv_distance_couplings(pa, Coupling(np.diag([0.7, 0.3]), b, b)) == pytest.approx(0.2, abs=1e-15)
        assert tv_distance_couplings(pa, Coupling(np.diag([0.5, 0.5]), far, far)) == 1.0

    def test_symmetric_vs_product(self, symmetric):
        mu, nu, _, _ = symmetric
        opt = Coupling(np.array([[ov.PI_DIAG, ov.PI_OFF], [ov.PI_OFF, ov.PI_DIAG]]), mu, nu)
        prod = Coupling(np.full((2, 2), 0.25), mu, nu)
        assert tv_distance_couplings(opt, prod) == pytest.approx(ov.TV_SYMMETRIC_VS_PRODUCT, abs=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(seeds)
    def test_metric_axioms(self, seed):
        rng = np.random.default_rng(seed)
        p = random_measure(rng, 5, dim=1)
        q, r = reweight(p, rng), random_measure(rng, 4, dim=1)
        assert tv_distance(p, q) == tv_distance(q, p)
        assert tv_distance(p, p) == 0.0
        assert tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-15


class TestRelativeEntropy:
    def test_examples(self):
        assert relative_entropy(two([0.5, 0.5]), two([0.5, 0.5])) == 0.0
        assert relative_entropy(two([0.7, 0.3]), two([0.5, 0.5])) == pytest.approx(ov.KL_SEVEN_THREE, abs=1e-15)
        assert relative_entropy(two([0.5, 0.5]), DiscreteMeasure([[0.0]], [1.0])) == math.inf

    @settings(max_examples=100, deadline=None)
    @given(seeds)
    def test_pinsker(self, seed):
        rng = np.random.default_rng(seed)
        p = random_measure(rng, int(rng.integers(1, 8)))
        q = reweight(p, rng)
        assert tv_distance(p, q) <= math.sqrt(relative_entropy(p, q) / 2) + 1e-12


class TestKyFan:
    def test_examples(self):
        mu = two([0.3, 0.7])
        assert ky_fan([1.0, 2.0], [1.0, 2.0], mu) == 0.0
        assert ky_fan([1.1, 2.1], [1.0, 2.0], mu) == pytest.approx(0.1, abs=1e-12)
        assert ky_fan([1.0, 0.0], [0.0, 0.0], two([0.05, 0.95])) == 0.05

    def test_large_deviation_small_mass(self):
        # all deviations exceed every t < 1, so the answer is min(1, mass) = 1
        assert ky_fan([5.0, 5.0], [0.0, 0.0], two([0.5, 0.5])) == 1.0

    def test_inapplicable_across_supports(self):
        mu, moved = two([0.5, 0.5]), two([0.5, 0.5], (0.0, 1.5))
        assert is_inapplicable(ky_fan([0.0, 0.0], [0.0, 0.0], mu, support=moved))
        assert is_inapplicable(sup_distance([0.0, 0.0], [0.0, 0.0], mu, support=moved))
        assert math.isnan(INAPPLICABLE)

    @settings(max_examples=100, deadline=None)
    @given(seeds)
    def test_matches_definition(self, seed):
        rng = np.random.default_rng(seed)
        mu = random_measure(rng, int(rng.integers(1, 10)), dim=1)
        a, b = rng.normal(scale=0.3, size=mu.size), rng.normal(scale=0.3, size=mu.size)
        k = ky_fan(a, b, mu)
        delta = np.abs(a - b)
        assert math.fsum(mu.weights[delta > k]) <= k + 1e-12
        below = k * (1 - 1e-9)
        if below > 0:
            assert math.fsum(mu.weights[delta > below]) > below
        assert ky_fan(a, b, mu) == ky_fan(b, a, mu)
        c = rng.normal(scale=0.3, size=mu.size)
        assert k <= ky_fan(a, c, mu) + ky_fan(c, b, mu) + 1e-12


class TestKolmogorov:
    def test_examples(self):
        mu = two([0.5, 0.5])
        point = DiscreteMeasure([[0.0]], [1.0])
        assert pushforward_kolmogorov([0.0, 1.0], mu, [0.0, 1.0], mu) == 0.0
        assert pushforward_kolmogorov([0.5], point, [0.0], point) == 1.0
        assert pushforward_kolmogorov([0.0, 1.0], two([0.6, 0.4]), [0.0, 1.0], mu) == pytest.approx(0.1, abs=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(seeds)
    def test_metric_axioms(self, seed):
        rng = np.random.default_rng(seed)
        ms = [random_measure(rng, int(rng.integers(1, 6)), dim=1) for _ in range(3)]
        fs = [rng.integers(0, 4, size=m.size).astype(float) for m in ms]
        d = lambda i, j: pushforward_kolmogorov(fs[i], ms[i], fs[j], ms[j])
        assert d(0, 1) == d(1, 0)
        assert d(0, 0) == 0.0
        assert d(0, 2) <= d(0, 1) + d(1, 2) + 1e-15


class TestBoundedLipschitz:
    def test_dictionary_is_admissible(self):
        rng = np.random.default_rng(0)
        X, Y = rng.normal(scale=3, size=(200, 2)), rng.normal(scale=3, size=(200, 2))
        for u, v, s in bl_dictionary(2, 2):
            h = s * u(X) * v(Y)
            assert np.all(np.abs(h) <= 1 + 1e-15)

    def test_identical_couplings(self, symmetric):
        mu, nu, _, _ = symmetric
        pi = Coupling(np.full((2, 2), 0.25), mu, nu)
        assert bounded_lipschitz(pi, pi) == 0.0

    def test_symmetric_vs_product(self, symmetric):
        mu, nu, _, _ = symmetric
        opt = Coupling(np.array([[ov.PI_DIAG, ov.PI_OFF], [ov.PI_OFF, ov.PI_DIAG]]), mu, nu)
        prod = Coupling(np.full((2, 2), 0.25), mu, nu)
        assert bounded_lipschitz(opt, prod) == pytest.approx(ov.BL_SYMMETRIC_VS_PRODUCT, abs=1e-15)

    def test_support_shift_bound(self):
        mu = two([0.3, 0.7])
        pi = Coupling(np.outer(mu.weights, mu.weights), mu, mu)
        moved = DiscreteMeasure(mu.atoms + 0.01, mu.weights)
        assert bounded_lipschitz(pi, Coupling(pi.matrix, moved, mu)) <= 0.01

    def test_dimension_mismatch(self):
        a, b = two([0.5, 0.5]), DiscreteMeasure([[0.0, 0.0]], [1.0])
        with pytest.raises(ValueError):
            bounded_lipschitz(Coupling(np.full((2, 2), 0.25), a, a), Coupling([[1.0]], b, b))

    @settings(max_examples=100, deadline=None)
    @given(seeds)
    def test_at_most_twice_tv(self, seed):
        rng = np.random.default_rng(seed)
        mu, nu = random_measure(rng, 3), random_measure(rng, 4)
        a = Coupling(rng.dirichlet(np.ones(12)).reshape(3, 4), mu, nu)
        b = Coupling(rng.dirichlet(np.ones(12)).reshape(3, 4), mu, nu)
        assert bounded_lipschitz(a, b) == bounded_lipschitz(b, a)
        assert bounded_lipschitz(a, b) <= 2 * tv_distance_couplings(a, b) + 1e-15
