import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surfmorph.errors import ConfigError, DataError
from surfmorph.semantics import (
    SemanticDirection,
    apply_semantic,
    load_directions,
    pca_complexity,
    save_directions,
    train_direction,
)


def two_population_latents(rng, n_per_class, dim, axis, separation=2.0, noise=0.3):
    center = separation / 2.0 * axis
    pos = center + noise * rng.standard_normal((n_per_class, dim))
    neg = -center + noise * rng.standard_normal((n_per_class, dim))
    latents = np.vstack([pos, neg])
    labels = np.concatenate([np.ones(n_per_class), -np.ones(n_per_class)])
    return latents, labels


class TestTrainDirection:
    def test_recovers_separating_axis(self):
        rng = np.random.default_rng(0)
        axis = np.zeros(128)
        axis[0] = 1.0
        latents, labels = two_population_latents(rng, 60, 128, axis, noise=0.25)
        d = train_direction(latents, labels, "toy")
        assert d.n @ axis > 0.95
        assert d.train_accuracy > 0.95
        assert not d.low_confidence

    def test_label_flip_flips_normal(self):
        rng = np.random.default_rng(1)
        axis = np.zeros(16)
        axis[3] = 1.0
        latents, labels = two_population_latents(rng, 40, 16, axis)
        d1 = train_direction(latents, labels)
        d2 = train_direction(latents, -labels)
        np.testing.assert_allclose(d2.n, -d1.n, atol=1e-6)

    def test_random_labels_flagged_low_confidence(self):
        # n >> dim so a hyperplane cannot overfit the noise
        rng = np.random.default_rng(2)
        latents = rng.standard_normal((2000, 8))
        labels = rng.choice([-1.0, 1.0], size=2000)
        d = train_direction(latents, labels)
        assert abs(d.train_accuracy - 0.5) < 0.1
        assert d.low_confidence

    def test_single_class_rejected(self):
        with pytest.raises(DataError):
            train_direction(np.zeros((5, 4)), np.ones(5))

    def test_order_invariance(self):
        rng = np.random.default_rng(3)
        axis = np.zeros(8)
        axis[1] = 1.0
        latents, labels = two_population_latents(rng, 30, 8, axis)
        d1 = train_direction(latents, labels)
        perm = rng.permutation(len(labels))
        d2 = train_direction(latents[perm], labels[perm])
        np.testing.assert_allclose(d1.n, d2.n, atol=1e-6)
        assert abs(d1.bias - d2.bias) < 1e-6


class TestApplySemantic:
    def test_alpha_zero_identity(self):
        d = SemanticDirection("x", np.eye(4)[0], 0.0, 1.0)
        z = np.array([0.1, 0.2, 0.3, 0.4])
        np.testing.assert_array_equal(apply_semantic(z, d, 0.0), z)

    def test_round_trip(self):
        rng = np.random.default_rng(4)
        n = rng.standard_normal(8)
        d = SemanticDirection("x", n / np.linalg.norm(n), 0.5, 1.0)
        z = rng.standard_normal(8)
        back = apply_semantic(apply_semantic(z, d, 1.7), d, -1.7)
        np.testing.assert_allclose(back, z, atol=1e-12)

    def test_decision_value_monotone_in_alpha(self):
        rng = np.random.default_rng(5)
        axis = np.zeros(16)
        axis[2] = 1.0
        latents, labels = two_population_latents(rng, 30, 16, axis)
        d = train_direction(latents, labels)
        z = rng.standard_normal(16) * 0.1
        values = [d.decision_value(apply_semantic(z, d, a)) for a in np.linspace(-2, 2, 9)]
        assert np.all(np.diff(values) > 0)

    @given(a=st.floats(-3, 3), b=st.floats(-3, 3))
    @settings(max_examples=30, deadline=None)
    def test_additivity(self, a, b):
        n = np.zeros(6)
        n[4] = 1.0
        d = SemanticDirection("x", n, 0.0, 1.0)
        z = np.linspace(0, 1, 6)
        lhs = apply_semantic(apply_semantic(z, d, a), d, b)
        rhs = apply_semantic(z, d, a + b)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestPcaComplexity:
    def test_exact_rank_bound(self):
        rng = np.random.default_rng(6)
        basis = rng.standard_normal((3, 30))
        coeffs = rng.standard_normal((20, 3)) * np.array([5.0, 2.0, 1.0])
        data = coeffs @ basis
        mats = [row.reshape(10, 3) for row in data]
        assert pca_complexity(mats, threshold=0.99) <= 3

    def test_identical_copies_have_zero_complexity(self):
        mat = np.random.default_rng(7).standard_normal((10, 3))
        assert pca_complexity([mat, mat, mat]) == 0

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(8)
        mats = [rng.standard_normal((12, 3)) for _ in range(10)]
        counts = [pca_complexity(mats, t) for t in (0.5, 0.9, 0.99, 1.0)]
        assert counts == sorted(counts)

    def test_bad_threshold(self):
        with pytest.raises(ConfigError):
            pca_complexity([np.zeros((3, 3)), np.ones((3, 3))], threshold=1.5)

    def test_single_example_rejected(self):
        with pytest.raises(DataError):
            pca_complexity([np.zeros((3, 3))])


def test_direction_json_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    n = rng.standard_normal(128)
    d = SemanticDirection("smile", n / np.linalg.norm(n), -0.25, 0.93)
    path = tmp_path / "directions.json"
    save_directions([d], path)
    (loaded,) = load_directions(path)
    assert loaded.label == "smile"
    np.testing.assert_allclose(loaded.n, d.n, atol=1e-15)
    assert loaded.bias == pytest.approx(d.bias)
