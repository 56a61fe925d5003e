import numpy as np
import pytest
from hypothesis import given, settings

from eotstab import CostMatrix, DiscreteMeasure, PerturbationSpec, build_cost, perturb, sample_subgaussian
from eotstab.metrics import tv_distance

from conftest import random_measure, seeds


def point(*xs):
    return DiscreteMeasure(np.array([xs], dtype=float), np.array([1.0]))


class TestDiscreteMeasure:
    def test_zero_weights_are_dropped(self):
        m = DiscreteMeasure(np.array([[0.0], [1.0], [2.0]]), np.array([0.5, 0.0, 0.5]))
        assert m.size == 2
        assert m.atoms[:, 0].tolist() == [0.0, 2.0]

    @pytest.mark.parametrize("weights", [[0.5, 0.6], [-0.1, 1.1], [np.nan, 1.0]])
    def test_rejects_bad_weights(self, weights):
        with pytest.raises(ValueError):
            DiscreteMeasure(np.array([[0.0], [1.0]]), np.array(weights))

    def test_rejects_duplicate_atoms(self):
        with pytest.raises(ValueError, match="distinct"):
            DiscreteMeasure(np.array([[0.0], [0.0]]), np.array([0.5, 0.5]))

    def test_from_weights_normalizes(self):
        m = DiscreteMeasure.from_weights(np.array([[0.0], [1.0]]), [1.0, 3.0])
        np.testing.assert_allclose(m.weights, [0.25, 0.75])

    def test_json_round_trip(self, tmp_path):
        m = random_measure(np.random.default_rng(0), 5)
        m.save(tmp_path / "m.json")
        assert DiscreteMeasure.load(tmp_path / "m.json") == m


class TestBuildCost:
    @pytest.mark.parametrize("x, y, expected", [
        ((0.0,), (0.0,), 0.0),
        ((1.0, 0.0), (0.0, 0.0), 1.0),
        ((1.0, 2.0), (3.0, 5.0), 13.0),
    ])
    def test_squared_euclidean(self, x, y, expected):
        assert build_cost(point(*x), point(*y)).values[0, 0] == expected

    def test_euclidean(self):
        assert build_cost(point(0.0, 0.0), point(3.0, 4.0), "euclidean").values[0, 0] == 5.0

    def test_user_matrix(self):
        C = build_cost(point(0.0), point(1.0), np.array([[2.5]]))
        assert C.values[0, 0] == 2.5

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            build_cost(point(0.0), point(0.0, 1.0))

    def test_negative_entry_named(self):
        with pytest.raises(ValueError, match=r"\(0, 1\)"):
            CostMatrix(np.array([[0.0, -1.0]]))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            build_cost(point(0.0), point(1.0), "manhattan")

    @pytest.mark.parametrize("suffix", ["csv", "json"])
    def test_save_load(self, tmp_path, suffix):
        rng = np.random.default_rng(1)
        C = build_cost(random_measure(rng, 3), random_measure(rng, 4))
        C.save(tmp_path / f"c.{suffix}")
        np.testing.assert_array_equal(CostMatrix.load(tmp_path / f"c.{suffix}").values, C.values)


class TestSampler:
    @pytest.mark.parametrize("family", ["gaussian", "gaussian-mixture", "uniform-box"])
    def test_single_atom(self, family):
        m = sample_subgaussian(1, 3, family, seed=2)
        assert m.size == 1 and m.weights[0] == 1.0

    def test_uniform_weights(self):
        assert sample_subgaussian(4, 1, "gaussian", seed=0).weights.tolist() == [0.25] * 4

    def test_gaussian_mean(self):
        m = sample_subgaussian(100, 2, "gaussian", seed=7)
        assert np.all(np.abs(m.weights @ m.atoms) < 0.5)

    def test_uniform_box_range(self):
        m = sample_subgaussian(50, 2, "uniform-box", seed=3)
        assert m.atoms.min() >= 0.0 and m.atoms.max() <= 1.0

    def test_deterministic(self):
        assert sample_subgaussian(20, 2, "gaussian-mixture", 5) == sample_subgaussian(20, 2, "gaussian-mixture", 5)

    @pytest.mark.parametrize("args", [(0, 2, "gaussian"), (3, 0, "gaussian"), (3, 2, "cauchy")])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            sample_subgaussian(*args)


class TestPerturbationSpec:
    @pytest.mark.parametrize("schedule", [(), (0.1, 0.2), (0.0, 0.1), (0.1, 0.1), (-0.1,)])
    def test_invalid_schedule(self, schedule):
        with pytest.raises(ValueError):
            PerturbationSpec("weight-jitter", schedule)

    def test_geometric(self):
        spec = PerturbationSpec.geometric("support-jitter", 3)
        assert spec.schedule == (0.5, 0.25, 0.125)
        assert spec.magnitude(3) == 0.125
        with pytest.raises(IndexError):
            spec.magnitude(4)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            PerturbationSpec("atom-swap", (0.1,))


class TestPerturb:
    @pytest.mark.parametrize("mode", ["weight-jitter", "support-jitter"])
    def test_zero_magnitude_is_identity(self, mode):
        base = random_measure(np.random.default_rng(0), 4)
        assert perturb(base, PerturbationSpec(mode, (0.1, 0.0)), 2) == base

    @settings(max_examples=50, deadline=None)
    @given(seeds)
    def test_weight_jitter_tv_bound(self, seed):
        rng = np.random.default_rng(seed)
        base = random_measure(rng, int(rng.integers(1, 12)))
        spec = PerturbationSpec.geometric("weight-jitter", 6, seed=seed % 1000)
        for n in range(1, 7):
            out = perturb(base, spec, n)
            assert out.same_support(base)
            assert tv_distance(out, base) <= spec.magnitude(n) + 1e-15

    @settings(max_examples=50, deadline=None)
    @given(seeds)
    def test_support_jitter_displacement(self, seed):
        rng = np.random.default_rng(seed)
        base = random_measure(rng, int(rng.integers(1, 12)))
        spec = PerturbationSpec.geometric("support-jitter", 6, seed=seed % 1000)
        for n in range(1, 7):
            out = perturb(base, spec, n)
            np.testing.assert_array_equal(out.weights, base.weights)
            assert np.all(np.linalg.norm(out.atoms - base.atoms, axis=1) <= spec.magnitude(n) * (1 + 1e-12))

    def test_deterministic(self):
        base = random_measure(np.random.default_rng(4), 6)
        spec = PerturbationSpec.geometric("weight-jitter", 4, seed=11)
        assert perturb(base, spec, 3) == perturb(base, spec, 3)
        assert perturb(base, spec, 3) != perturb(base, PerturbationSpec.geometric("weight-jitter", 4, seed=12), 3)

    def test_floor_above_uniform_rejected(self):
        base = random_measure(np.random.default_rng(4), 4)
        with pytest.raises(ValueError, match="floor"):
            perturb(base, PerturbationSpec("weight-jitter", (0.1,), floor=0.5), 1)
