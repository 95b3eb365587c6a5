"""Tests for iterate-averaged sampling and the ESS diagnostic."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedpost.errors import DivergenceError
from fedpost.objectives import LeastSquaresObjective, QuadraticObjective, make_regression
from fedpost.optim import OptimizerConfig
from fedpost.sampler import SamplerConfig, ess, iasg_sample


def _quadratic_1d(center=2.0):
    return QuadraticObjective(np.array([center]), np.array([[1.0]]))


class TestIasgSample:
    def test_window_of_one_returns_raw_iterates(self):
        obj, _ = make_regression(n=20, d=3, n_informative=3, noise_std=1.0, seed=0)
        cfg = SamplerConfig(burn_in_steps=2, steps_per_sample=1, num_samples=4, seed=5)

        samples = iasg_sample(obj, OptimizerConfig(lr=0.05).make(3), cfg, np.zeros(3))

        # Replay the same chain manually and compare the raw iterates.
        rng = np.random.default_rng(5)
        opt = OptimizerConfig(lr=0.05).make(3)
        theta = np.zeros(3)
        for _ in range(2):
            idx = rng.integers(0, 20, size=10)
            theta = opt.step(theta, obj.stochastic_gradient(theta, idx))
        for s in samples:
            idx = rng.integers(0, 20, size=10)
            theta = opt.step(theta, obj.stochastic_gradient(theta, idx))
            np.testing.assert_array_equal(s, theta)

    def test_converges_to_minimizer_near_start(self):
        # With deterministic gradients the stated tolerance holds when the
        # start is already close; long burn-in makes it hold from far away.
        obj = _quadratic_1d(center=2.0)
        cfg = SamplerConfig(burn_in_steps=50, steps_per_sample=10, num_samples=20, seed=1)
        samples = iasg_sample(obj, OptimizerConfig(lr=0.1).make(1), cfg, np.array([2.001]))
        assert abs(np.mean(samples) - 2.0) <= 1e-6

    def test_converges_to_minimizer_long_burn_in(self):
        obj = _quadratic_1d(center=2.0)
        cfg = SamplerConfig(burn_in_steps=300, steps_per_sample=10, num_samples=20, seed=1)
        samples = iasg_sample(obj, OptimizerConfig(lr=0.1).make(1), cfg, np.array([0.0]))
        assert abs(np.mean(samples) - 2.0) <= 1e-6

    def test_single_sample_no_burn_in_is_mean_of_first_iterates(self):
        obj = _quadratic_1d(center=0.0)
        lr = 0.25
        k = 4
        cfg = SamplerConfig(burn_in_steps=0, steps_per_sample=k, num_samples=1, seed=0)
        (sample,) = iasg_sample(obj, OptimizerConfig(lr=lr).make(1), cfg, np.array([1.0]))
        iterates = [(1 - lr) ** i for i in range(1, k + 1)]
        np.testing.assert_allclose(sample, [np.mean(iterates)], rtol=1e-12)

    def test_deterministic_in_seed(self):
        obj, _ = make_regression(n=30, d=5, n_informative=4, noise_std=1.0, seed=9)
        cfg = SamplerConfig(burn_in_steps=10, steps_per_sample=5, num_samples=6, seed=33)
        a = iasg_sample(obj, OptimizerConfig(lr=0.05).make(5), cfg, np.zeros(5))
        b = iasg_sample(obj, OptimizerConfig(lr=0.05).make(5), cfg, np.zeros(5))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_divergence_carries_step_index(self):
        # lr far above the stability limit blows the chain up quickly.
        obj = QuadraticObjective(np.zeros(1), np.array([[1.0]]))
        cfg = SamplerConfig(burn_in_steps=0, steps_per_sample=10_000, num_samples=1, seed=0)
        with pytest.raises(DivergenceError) as err:
            iasg_sample(obj, OptimizerConfig(lr=10.0).make(1), cfg, np.array([1.0]))
        assert err.value.step is not None and err.value.step >= 0

    def test_dimension_mismatch(self):
        obj = _quadratic_1d()
        with pytest.raises(ValueError):
            iasg_sample(obj, OptimizerConfig(lr=0.1).make(2),
                        SamplerConfig(), np.zeros(2))


class _ShiftedLoss:
    """Wraps an objective, adding a constant to every loss value."""

    def __init__(self, inner, shift):
        self.inner = inner
        self.shift = shift
        self.dim = inner.dim

    def loss(self, theta):
        return self.inner.loss(theta) + self.shift


class TestEss:
    def test_equal_losses_give_full_ess(self):
        obj = _quadratic_1d(center=0.0)
        samples = [np.array([1.0]), np.array([-1.0]), np.array([1.0])]
        np.testing.assert_allclose(ess(samples, obj), 3.0, rtol=1e-12)

    def test_dominating_sample_drives_ess_to_one(self):
        obj = _quadratic_1d(center=0.0)
        samples = [np.array([0.0]), np.array([100.0]), np.array([120.0])]
        assert ess(samples, obj) == pytest.approx(1.0, abs=1e-12)

    def test_known_weights(self):
        # Losses -log(1), -log(1), -log(2) produce weights (1, 1, 2) up to
        # the common shift, so ESS = 16/6.
        obj = _quadratic_1d(center=0.0)
        radii = [np.sqrt(2 * -np.log(w)) if w < 1 else 0.0 for w in (0.5, 0.5, 1.0)]
        samples = [np.array([r]) for r in radii]
        np.testing.assert_allclose(ess(samples, obj), 16.0 / 6.0, rtol=1e-12)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            ess([], _quadratic_1d())

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(min_value=-20.0, max_value=20.0),
                    min_size=1, max_size=30))
    def test_bounds_hold_for_arbitrary_samples(self, values):
        obj = _quadratic_1d(center=0.0)
        samples = [np.array([v]) for v in values]
        e = ess(samples, obj)
        assert 1.0 - 1e-12 <= e <= len(samples) + 1e-12

    def test_full_ess_iff_equal_weights(self):
        obj = _quadratic_1d(center=0.0)
        unequal = [np.array([0.0]), np.array([1.0])]
        assert ess(unequal, obj) < 2.0

    def test_invariant_to_constant_loss_shift(self):
        rng = np.random.default_rng(2)
        obj = _quadratic_1d(center=0.5)
        samples = [rng.normal(size=1) for _ in range(8)]
        base = ess(samples, obj)
        shifted = ess(samples, _ShiftedLoss(obj, 123.4))
        np.testing.assert_allclose(base, shifted, rtol=1e-12)


class TestEssTrends:
    """Sample quality improves with burn-in and with window length."""

    @staticmethod
    def _median_ess(dim, burn_in, steps_per_sample, lr=0.1, problems=10):
        vals = []
        for p in range(problems):
            obj, _ = make_regression(n=500, d=dim, n_informative=dim,
                                     noise_std=1.0, seed=1000 + p)
            cfg = SamplerConfig(burn_in_steps=burn_in,
                                steps_per_sample=steps_per_sample,
                                num_samples=10, seed=p, batch_size=10)
            samples = iasg_sample(obj, OptimizerConfig(lr=lr).make(dim), cfg,
                                  np.zeros(dim))
            vals.append(ess(samples, obj))
        return float(np.median(vals))

    @pytest.mark.slow
    def test_more_burn_in_never_hurts(self):
        from scipy.stats import spearmanr

        for dim in (10, 100):
            grid = [0, 10, 50, 200]
            med = [self._median_ess(dim, b, steps_per_sample=50) for b in grid]
            rho, _ = spearmanr(grid, med)
            assert rho >= 0.8, (dim, grid, med)

    @pytest.mark.slow
    def test_longer_windows_never_hurt(self):
        from scipy.stats import spearmanr

        for dim in (10, 100):
            grid = [5, 10, 20, 50]
            med = [self._median_ess(dim, 100, steps_per_sample=k) for k in grid]
            rho, _ = spearmanr(grid, med)
            assert rho >= 0.8, (dim, grid, med)
