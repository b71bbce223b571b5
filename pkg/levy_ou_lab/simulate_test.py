import math

import numpy as np
import pytest

from . import simulate as module
from .coefficients import MatrixFn, VectorFn
from .density import two_sample_ks
from .levy import StableSymmetric, compound_poisson, make_levy_model
from .ou_core import cf_solution
from .scenario import make_scenario
from .streams import make_stream


BROWNIAN = make_levy_model(b=[0.0], R=[[1.0]])
CAUCHY = make_levy_model(b=[0.0], R=[[0.0]], jumps=StableSymmetric(1.0, 1.0))
POISSON = make_levy_model(b=[0.0], R=[[0.0]], jumps=compound_poisson([[2.0, 1.0]]))
SILENT = make_levy_model(b=[0.0], R=[[0.0]])

OU_VARIANCE = (1 - math.exp(-2)) / 2


def _scalar_scenario(A="-1", B="1", f="0", noise=BROWNIAN, seed=0):
    return make_scenario(
        MatrixFn.from_rows([[A]]),
        MatrixFn.from_rows([[B]]),
        VectorFn.from_entries([f]),
        noise,
        seed=seed,
    )


def _planar_scenario(noise):
    return make_scenario(
        MatrixFn.from_rows([["-1", "0.5*sin(t)"], ["0", "-2"]]),
        MatrixFn.from_rows([["1", "0"], ["0.3", "1"]]),
        VectorFn.from_entries(["cos(t)", "0"]),
        noise,
    )


class TestSimulateExact:
    def test_zero_noise_follows_the_flow(self):
        sc = _scalar_scenario(noise=SILENT)

        terminal = module.simulate_exact(sc, 0, 1, [1.0], 100, make_stream(0, 0))

        np.testing.assert_allclose(terminal, [math.exp(-1)], rtol=1e-10)

    def test_zero_noise_includes_forcing(self):
        sc = _scalar_scenario(f="1", noise=SILENT)

        terminal = module.simulate_exact(sc, 0, 1, [0.0], 100, make_stream(0, 0))

        np.testing.assert_allclose(terminal, [1 - math.exp(-1)], rtol=1e-9)

    def test_empty_interval_returns_start(self):
        sc = _scalar_scenario()

        terminal = module.simulate_exact(sc, 2, 2, [0.3], 10, make_stream(0, 0))

        np.testing.assert_array_equal(terminal, [0.3])

    def test_rejects_reversed_times(self):
        with pytest.raises(ValueError, match="s <= t"):
            module.simulate_exact(
                _scalar_scenario(), 1, 0, [0.0], 10, make_stream(0, 0)
            )


class TestSimulateEuler:
    def test_zero_noise_approximates_exponential_decay(self):
        sc = _scalar_scenario(noise=SILENT)

        path = module.simulate_euler(sc, 0, 1, [1.0], 1000, make_stream(0, 0))

        assert path.states[-1, 0] == pytest.approx(math.exp(-1), abs=1e-3)

    def test_path_starts_at_x(self):
        sc = _planar_scenario(make_levy_model(b=[0.0, 0.0], R=[[1, 0], [0, 1]]))

        path = module.simulate_euler(sc, 0, 2, [1.0, -1.0], 50, make_stream(0, 0))

        assert path.times[0] == 0
        assert path.times[-1] == 2
        assert path.states.shape == (51, 2)
        np.testing.assert_array_equal(path.states[0], [1.0, -1.0])

    def test_counts_jumps(self):
        sc = _scalar_scenario(noise=POISSON)

        path = module.simulate_euler(sc, 0, 1, [0.0], 100, make_stream(0, 0))

        assert path.jump_count >= 0
        assert path.scheme == "euler"

    def test_serializes_one_column_per_component(self):
        sc = _planar_scenario(make_levy_model(b=[0.0, 0.0], R=[[1, 0], [0, 1]]))

        frame = module.simulate_euler(
            sc, 0, 1, [0.0, 0.0], 10, make_stream(0, 0)
        ).as_dataframe()

        assert list(frame.columns) == ["time", "x_1", "x_2"]
        assert len(frame) == 11


class TestEmpiricalCf:
    def test_zero_samples(self):
        assert module.empirical_cf(np.zeros((5, 2)), [1.0, 2.0]) == 1

    def test_symmetric_pair(self):
        assert module.empirical_cf([1.0, -1.0], math.pi) == pytest.approx(-1)

    def test_standard_normal(self):
        samples = np.random.default_rng(0).standard_normal(10**5)

        assert module.empirical_cf(samples, 1.0) == pytest.approx(
            math.exp(-0.5), abs=0.013
        )

    def test_stack_of_frequencies(self):
        samples = np.random.default_rng(0).standard_normal((100, 2))
        points = np.array([[0.0, 0.0], [1.0, -1.0], [0.5, 2.0]])

        stacked = module.empirical_cf(samples, points)

        assert stacked.shape == (3,)
        assert stacked[1] == pytest.approx(
            module.empirical_cf(samples, points[1]), abs=1e-12
        )

    def test_rejects_empty_samples(self):
        with pytest.raises(ValueError):
            module.empirical_cf([], 1.0)


class TestGetWorkerCount:
    def test_explicit_count_wins(self, monkeypatch):
        monkeypatch.setenv("LEVY_OU_THREADS", "7")

        assert module.get_worker_count(2) == 2

    def test_reads_environment(self, monkeypatch):
        monkeypatch.setenv("LEVY_OU_THREADS", "3")

        assert module.get_worker_count() == 3

    def test_defaults_without_environment(self, monkeypatch):
        monkeypatch.delenv("LEVY_OU_THREADS", raising=False)

        assert 1 <= module.get_worker_count() <= module.DEFAULT_MAX_WORKERS

    @pytest.mark.parametrize("configured", ["many", "0"])
    def test_rejects_bad_environment(self, monkeypatch, configured):
        monkeypatch.setenv("LEVY_OU_THREADS", configured)

        with pytest.raises(ValueError):
            module.get_worker_count()


class TestMonteCarlo:
    def test_result_does_not_depend_on_worker_count(self):
        sc = _scalar_scenario(noise=CAUCHY)

        single = module.monte_carlo(sc, 0, 1, [0.0], 3000, 20, workers=1)
        several = module.monte_carlo(sc, 0, 1, [0.0], 3000, 20, workers=3)

        np.testing.assert_array_equal(single.samples, several.samples)

    def test_rerun_is_identical(self):
        sc = _scalar_scenario(seed=4)

        first = module.monte_carlo(sc, 0, 1, [0.0], 1500, 20, "euler")
        second = module.monte_carlo(sc, 0, 1, [0.0], 1500, 20, "euler")

        np.testing.assert_array_equal(first.samples, second.samples)
        assert first.seed == 4

    def test_seed_argument_overrides_scenario_seed(self):
        sc = _scalar_scenario(seed=4)

        default = module.monte_carlo(sc, 0, 1, [0.0], 100, 20)
        overridden = module.monte_carlo(sc, 0, 1, [0.0], 100, 20, seed=5)

        assert not np.array_equal(default.samples, overridden.samples)
        assert overridden.seed == 5

    def test_shape(self):
        sc = _planar_scenario(make_levy_model(b=[0.0, 0.0], R=[[1, 0], [0, 1]]))

        result = module.monte_carlo(sc, 0, 1, [0.0, 0.0], 1030, 10)

        assert result.samples.shape == (1030, 2)
        assert result.jump_counts.shape == (1030,)

    def test_negative_times_draw_from_their_own_stream(self, mocker):
        spy = mocker.spy(module, "make_stream")
        sc = _scalar_scenario()

        module.monte_carlo(sc, -1, 1, [0.0], 10, 20)

        spy.assert_any_call(0, 0, negative_time=True)

    def test_brownian_variance(self):
        sc = _scalar_scenario()

        samples = module.monte_carlo(sc, 0, 1, [0.0], 10**4, 100).samples

        assert np.var(samples) == pytest.approx(OU_VARIANCE, abs=0.03)
        assert np.mean(samples) == pytest.approx(0, abs=0.03)

    def test_cauchy_empirical_cf(self):
        sc = _scalar_scenario(noise=CAUCHY)

        samples = module.monte_carlo(sc, 0, 1, [0.0], 10**4, 200).samples

        expected = math.exp(-(1 - math.exp(-1)))
        assert module.empirical_cf(samples, 1.0) == pytest.approx(
            expected, abs=4 / math.sqrt(10**4)
        )

    def test_mean_jump_count_is_poisson_rate(self):
        sc = _scalar_scenario(noise=POISSON)

        result = module.monte_carlo(sc, 0, 1, [0.0], 10**4, 100, "euler")

        assert np.mean(result.jump_counts) == pytest.approx(2, abs=0.05)

    def test_rejects_unknown_scheme(self):
        with pytest.raises(ValueError, match="Unknown scheme"):
            module.monte_carlo(_scalar_scenario(), 0, 1, [0.0], 10, 10, "milstein")

    @pytest.mark.slow
    @pytest.mark.parametrize("scheme", module.SCHEMES)
    def test_brownian_variance_at_full_size(self, scheme):
        sc = _scalar_scenario()

        samples = module.monte_carlo(sc, 0, 1, [0.0], 10**5, 1000, scheme).samples

        assert np.var(samples) == pytest.approx(OU_VARIANCE, abs=0.01)

    @pytest.mark.slow
    def test_exact_samples_match_cf_solution(self):
        sc = _planar_scenario(
            make_levy_model(
                b=[0.0, 0.0],
                R=[[1, 0], [0, 0.5]],
                jumps=compound_poisson([[1.0, 0.5, 0.0], [0.5, -1.0, 1.0]]),
            )
        )
        points = np.column_stack(
            [np.linspace(-1.5, 1.5, 10), np.linspace(1.0, -1.0, 10)]
        )

        samples = module.monte_carlo(sc, 0, 2, [1.0, 0.0], 10**5, 1000).samples

        empirical = module.empirical_cf(samples, points)
        exact = cf_solution(sc, 0, 2, [1.0, 0.0], points)
        assert np.max(np.abs(empirical - exact)) < 4 / math.sqrt(10**5)

    @pytest.mark.slow
    @pytest.mark.parametrize(
        "noise",
        [BROWNIAN, CAUCHY, POISSON],
        ids=["gaussian", "cauchy", "compound_poisson"],
    )
    def test_schemes_agree(self, noise):
        sc = _scalar_scenario(A="-1 - 0.5*sin(t)", f="cos(t)", noise=noise)

        # One seed, so both schemes integrate the same noise path
        exact = module.monte_carlo(sc, 0, 2, [0.5], 10**4, 1000, "exact", seed=3)
        euler = module.monte_carlo(sc, 0, 2, [0.5], 10**4, 1000, "euler", seed=3)

        assert two_sample_ks(exact.samples[:, 0], euler.samples[:, 0]) < 0.025


class TestMehlerExpectation:
    def test_zero_noise_is_composition_with_the_flow(self):
        sc = _scalar_scenario(noise=SILENT)

        value = module.mehler_expectation(
            sc, 0, 1, [2.0], lambda y: y[:, 0] ** 2, 10, 100
        )

        assert value == pytest.approx(4 * math.exp(-2), rel=1e-9)

    def test_second_moment(self):
        sc = _scalar_scenario()

        value = module.mehler_expectation(
            sc, 0, 1, [1.0], lambda y: y[:, 0] ** 2, 10**4, 100
        )

        assert value == pytest.approx(math.exp(-2) + OU_VARIANCE, abs=0.035)


class TestSamplePaths:
    def test_paths_are_independent_and_reproducible(self):
        sc = _scalar_scenario(seed=2)

        first = module.sample_paths(sc, 0, 1, [0.0], 20, 3)
        again = module.sample_paths(sc, 0, 1, [0.0], 20, 3)

        assert len(first) == 3
        assert not np.array_equal(first[0].states, first[1].states)
        for path, repeat in zip(first, again):
            np.testing.assert_array_equal(path.states, repeat.states)
            assert path.seed == 2

    def test_paths_do_not_reuse_monte_carlo_streams(self, mocker):
        spy = mocker.spy(module, "make_stream")

        module.sample_paths(_scalar_scenario(), 0, 1, [0.0], 10, 1)

        spy.assert_any_call(0, module.PATH_STREAM_BASE)
