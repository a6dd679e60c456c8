"""Input models, black-box wrappers and the built-in benchmarks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from relsense.model import (
    BlackBox,
    EvaluationError,
    FailureEvent,
    InputModel,
    Marginal,
    builtin_model,
    sample_input,
)


class TestBuiltinValues:
    def test_toy1_gate_open(self):
        box, _, _ = builtin_model("toy1")
        assert box.evaluate([4.0, 2.0]) == 6.0

    def test_toy1_gate_closed(self):
        box, _, _ = builtin_model("toy1")
        assert box.evaluate([2.0, 5.0]) == 2.0

    def test_additive_chi2_value(self):
        box, _, _ = builtin_model("additive_chi2")
        assert box.evaluate([1.0, 3.0]) == 10.0

    def test_sdof_median_point(self):
        box, _, _ = builtin_model("sdof_oscillator")
        c1, c2 = math.exp(2.0), math.exp(0.2)
        r = math.exp(0.6)
        m = t = f = math.e
        k = c1 + c2
        expected = -3.0 * r + abs(2.0 * f / k * math.sin(math.sqrt(k / m) * t / 2.0))
        got = box.evaluate([c1, c2, r, m, t, f])
        assert got == pytest.approx(expected, abs=1e-12)

    def test_toy1_failure_iff_first_coordinate_exceeds_three(self):
        box, _, event = builtin_model("toy1")
        x1 = np.linspace(-5.0, 5.0, 41)
        x2 = np.array([-4.0, -0.5, 0.0, 0.5, 4.0])
        grid = np.column_stack([np.repeat(x1, x2.size), np.tile(x2, x1.size)])
        y = box.evaluate_batch(grid)
        np.testing.assert_array_equal(event.indicator(y), grid[:, 0] > 3.0)

    def test_unknown_builtin(self):
        with pytest.raises(ValueError, match="unknown builtin model"):
            builtin_model("nope")


class TestSampling:
    def test_toy1_second_coordinate_moments(self):
        _, model, _ = builtin_model("toy1")
        x = sample_input(model, 10**6, seed=11)
        assert abs(x[:, 1].mean()) < 3.0 * math.sqrt(5.0) / 1000.0
        assert x[:, 1].std() == pytest.approx(math.sqrt(5.0), rel=0.01)

    def test_determinism(self):
        _, model, _ = builtin_model("additive_chi2")
        a = sample_input(model, 50, seed=3)
        b = sample_input(model, 50, seed=3)
        np.testing.assert_array_equal(a, b)
        c = sample_input(model, 50, seed=4)
        assert not np.array_equal(a, c)

    def test_single_draw_shape(self):
        _, model, _ = builtin_model("toy1")
        assert sample_input(model, 1, seed=0).shape == (1, 2)

    def test_n_must_be_positive(self):
        _, model, _ = builtin_model("toy1")
        with pytest.raises(ValueError, match="at least 1"):
            sample_input(model, 0, seed=0)

    def test_sdof_first_input_median(self):
        _, model, _ = builtin_model("sdof_oscillator")
        x = sample_input(model, 200001, seed=5)
        med = float(np.median(x[:, 0]))
        assert med == pytest.approx(math.exp(2.0), rel=0.01)
        # every lognormal coordinate stays positive
        assert np.all(x > 0.0)


class TestMarginal:
    def test_parameter_validation(self):
        with pytest.raises(ValueError, match="unknown marginal kind"):
            Marginal("beta", 0.0, 1.0)
        with pytest.raises(ValueError, match="strictly positive"):
            Marginal("normal", 0.0, 0.0)
        with pytest.raises(ValueError, match="finite"):
            Marginal("normal", math.inf, 1.0)

    @settings(max_examples=60, deadline=None)
    @given(
        kind=st.sampled_from(["normal", "lognormal", "uniform"]),
        loc=st.floats(-3.0, 3.0),
        scale=st.floats(0.05, 4.0),
        u=st.floats(1e-3, 1.0 - 1e-3),
    )
    def test_cdf_quantile_round_trip(self, kind, loc, scale, u):
        m = Marginal(kind, loc, scale)
        assert m.cdf(m.quantile(u)) == pytest.approx(u, abs=1e-8)

    def test_lognormal_moments(self):
        m = Marginal("lognormal", 2.0, 0.2)
        assert m.mean() == pytest.approx(math.exp(2.0 + 0.02), rel=1e-10)

    def test_uniform_support(self):
        m = Marginal("uniform", -1.0, 3.0)
        assert m.pdf(-1.5) == 0.0
        assert m.pdf(0.0) == pytest.approx(1.0 / 3.0)
        assert m.pdf(2.5) == 0.0


class TestInputModel:
    def test_log_density_independent_normals(self):
        model = InputModel((Marginal("normal", 0.0, 1.0), Marginal("normal", 0.0, 2.0)))
        x = np.array([[0.3, -1.2], [2.0, 0.0]])
        expected = stats.norm.logpdf(x[:, 0]) + stats.norm.logpdf(x[:, 1], scale=2.0)
        np.testing.assert_allclose(model.log_density(x), expected, rtol=1e-12)

    def test_log_density_gaussian_dependence_matches_mvn(self):
        cov = np.array([[4.0, 1.0], [1.0, 2.0]])
        model = InputModel(
            (Marginal("normal", 1.0, 2.0), Marginal("normal", -1.0, math.sqrt(2.0))),
            dependence="gaussian",
            covariance=cov,
        )
        rng = np.random.default_rng(0)
        x = rng.normal(size=(40, 2))
        expected = stats.multivariate_normal(mean=[1.0, -1.0], cov=cov).logpdf(x)
        np.testing.assert_allclose(model.log_density(x), expected, rtol=1e-9)

    def test_log_density_off_support(self):
        model = InputModel((Marginal("lognormal", 0.0, 1.0),))
        out = model.log_density(np.array([[-1.0], [1.0]]))
        assert out[0] == -math.inf
        assert math.isfinite(out[1])

    def test_gaussian_sample_covariance(self):
        cov = np.array([[1.0, 0.6], [0.6, 1.0]])
        model = InputModel(
            (Marginal("normal", 0.0, 1.0), Marginal("normal", 0.0, 1.0)),
            dependence="gaussian",
            covariance=cov,
        )
        x = model.sample(200000, np.random.default_rng(9))
        got = np.corrcoef(x.T)[0, 1]
        assert got == pytest.approx(0.6, abs=0.01)

    def test_covariance_validation(self):
        margs = (Marginal("normal", 0.0, 1.0), Marginal("normal", 0.0, 1.0))
        with pytest.raises(ValueError, match="requires a covariance"):
            InputModel(margs, dependence="gaussian")
        with pytest.raises(ValueError, match="symmetric"):
            InputModel(margs, dependence="gaussian", covariance=np.array([[1.0, 0.5], [0.2, 1.0]]))
        with pytest.raises(ValueError, match="must be 2x2"):
            InputModel(margs, dependence="gaussian", covariance=np.eye(3))
        with pytest.raises(ValueError, match="positive definite"):
            InputModel(margs, dependence="gaussian", covariance=np.array([[1.0, 2.0], [2.0, 1.0]]))
        with pytest.raises(ValueError, match="only meaningful"):
            InputModel(margs, covariance=np.eye(2))

    def test_gaussian_cholesky_requires_normal_marginals(self):
        model = InputModel((Marginal("lognormal", 0.0, 1.0),))
        with pytest.raises(ValueError, match="not jointly Gaussian"):
            model.gaussian_cholesky()

    def test_gaussian_cholesky_reconstructs_covariance(self):
        cov = np.array([[4.0, 1.0], [1.0, 2.0]])
        model = InputModel(
            (Marginal("normal", 0.0, 2.0), Marginal("normal", 0.0, math.sqrt(2.0))),
            dependence="gaussian",
            covariance=cov,
        )
        chol = model.gaussian_cholesky()
        np.testing.assert_allclose(chol @ chol.T, cov, atol=1e-12)


class TestBlackBox:
    def test_call_counter_exact(self):
        box, _, _ = builtin_model("toy1")
        for _ in range(7):
            box.evaluate([0.0, 0.0])
        assert box.call_count == 7
        box.evaluate_batch(np.zeros((13, 2)))
        assert box.call_count == 20

    def test_fresh_counter_per_instance(self):
        a, _, _ = builtin_model("toy1")
        b, _, _ = builtin_model("toy1")
        a.evaluate([0.0, 0.0])
        assert a.call_count == 1
        assert b.call_count == 0

    def test_dimension_check(self):
        box, _, _ = builtin_model("toy1")
        with pytest.raises(ValueError, match="expected 2 inputs"):
            box.evaluate([1.0])
        with pytest.raises(ValueError, match="expected 2 inputs"):
            box.evaluate_batch(np.zeros((4, 3)))

    def test_non_finite_scalar_output(self):
        box = BlackBox(fn=lambda x: math.inf, dimension=1, name="blowup")
        with pytest.raises(EvaluationError, match="non-finite output"):
            box.evaluate([1.0])

    def test_non_finite_batch_output_names_input(self):
        def batch(x):
            y = x[:, 0].copy()
            y[y > 1.0] = np.nan
            return y

        box = BlackBox(fn=lambda x: batch(x.reshape(1, -1))[0], dimension=1,
                       name="patchy", batch_fn=batch)
        with pytest.raises(EvaluationError, match=r"\[2\.0\]"):
            box.evaluate_batch(np.array([[0.0], [2.0], [0.5]]))

    def test_loop_fallback_without_batch_fn(self):
        box = BlackBox(fn=lambda x: float(x[0]) * 2.0, dimension=1, name="double")
        y = box.evaluate_batch(np.array([[1.0], [2.5]]))
        np.testing.assert_array_equal(y, [2.0, 5.0])
        assert box.call_count == 2


class TestFailureEvent:
    def test_strict_inequality(self):
        event = FailureEvent(3.0)
        np.testing.assert_array_equal(
            event.indicator(np.array([2.9, 3.0, 3.1])), [False, False, True])

    def test_threshold_must_be_finite(self):
        with pytest.raises(ValueError, match="finite"):
            FailureEvent(math.nan)
