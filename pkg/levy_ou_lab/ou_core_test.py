import math

import numpy as np
import pytest
from scipy.integrate import quad

from . import ou_core as module
from .coefficients import MatrixFn, VectorFn
from .levy import StableSymmetric, compound_poisson, make_levy_model
from .scenario import Numerics, make_scenario


BROWNIAN = make_levy_model(b=[0.0], R=[[1.0]])
CAUCHY = make_levy_model(b=[0.0], R=[[0.0]], jumps=StableSymmetric(1.0, 1.0))
HALF_ATOM = make_levy_model(b=[0.0], R=[[0.0]], jumps=compound_poisson([[1.0, 0.5]]))
JUMP_DIFFUSION = make_levy_model(
    b=[0.3], R=[[0.5]], jumps=compound_poisson([[1.0, 0.5], [2.0, -1.5]])
)
SILENT = make_levy_model(b=[0.0], R=[[0.0]])


def _scalar_scenario(A="-1", B="1", f="0", noise=BROWNIAN, **numerics):
    return make_scenario(
        MatrixFn.from_rows([[A]]),
        MatrixFn.from_rows([[B]]),
        VectorFn.from_entries([f]),
        noise,
        Numerics(**numerics),
    )


def _planar_scenario():
    return make_scenario(
        MatrixFn.from_rows([["-1 - 0.5*sin(t)", "0.3"], ["0", "-2"]]),
        MatrixFn.from_rows([["1", "0"], ["0.5*cos(t)", "1"]]),
        VectorFn.from_entries(["cos(t)", "1"]),
        make_levy_model(b=[0.1, 0.0], R=[[1.0, 0.2], [0.2, 0.5]]),
    )


A_GRID = np.linspace(-3, 3, 20)[:, np.newaxis]


class TestCfSolution:
    def test_is_one_at_origin(self):
        sc = _scalar_scenario(noise=JUMP_DIFFUSION, f="sin(t)")
        assert module.cf_solution(sc, 0, 1, [0.7], [0.0]) == 1

    def test_brownian_ou(self):
        sc = _scalar_scenario()

        cf = module.cf_solution(sc, 0, 1, [0.0], [1.0])

        assert cf == pytest.approx(math.exp(-(1 - math.exp(-2)) / 4), abs=1e-8)
        assert cf == pytest.approx(0.80560, abs=1e-5)

    def test_cauchy_ou(self):
        sc = _scalar_scenario(noise=CAUCHY)

        cf = module.cf_solution(sc, 0, 1, [0.0], [1.0])

        assert cf == pytest.approx(math.exp(-(1 - math.exp(-1))), abs=1e-8)

    def test_starting_point_shifts_phase(self):
        sc = _scalar_scenario()

        cf = module.cf_solution(sc, 0, 1, [2.0], [1.0])

        expected = np.exp(1j * 2 * math.exp(-1) - (1 - math.exp(-2)) / 4)
        assert cf == pytest.approx(expected, abs=1e-8)

    def test_stacked_points_match_single_points(self):
        sc = _scalar_scenario(noise=JUMP_DIFFUSION, f="sin(t)")

        stacked = module.cf_solution(sc, 0, 2, [0.5], A_GRID[:5])

        assert stacked.shape == (5,)
        for value, a in zip(stacked, A_GRID[:5]):
            assert value == pytest.approx(module.cf_solution(sc, 0, 2, [0.5], a))

    def test_is_hermitian(self):
        sc = _planar_scenario()
        a = np.array([0.4, -1.2])

        cf = module.cf_solution(sc, 0, 1, [1.0, 1.0], a)

        assert module.cf_solution(sc, 0, 1, [1.0, 1.0], -a) == pytest.approx(
            np.conj(cf)
        )
        assert abs(cf) <= 1

    @pytest.mark.parametrize("noise", [BROWNIAN, CAUCHY, JUMP_DIFFUSION])
    def test_factorizes_through_intermediate_time(self, noise):
        sc = _scalar_scenario(A="-(2 + sin(t))", f="cos(t)", noise=noise)
        s, u, t = 0.0, 0.8, 2.0
        U_tu = sc.operator.evaluate(t, u)

        for a in A_GRID:
            direct = module.cf_solution(sc, s, t, [0.5], a)
            earlier = module.cf_solution(sc, s, u, [0.5], U_tu.T @ a)
            later = module.cf_solution(sc, u, t, [0.0], a)
            assert abs(direct - earlier * later) < 1e-6

    def test_rejects_reversed_times(self):
        with pytest.raises(ValueError):
            module.cf_solution(_scalar_scenario(), 1, 0, [0.0], [1.0])


class TestComputeTriple:
    def test_empty_interval(self):
        sc = _scalar_scenario(noise=HALF_ATOM, f="3")

        triple = module.compute_triple(sc, 1.0, 1.0)

        np.testing.assert_array_equal(triple.b, [0.0])
        np.testing.assert_array_equal(triple.R, [[0.0]])
        assert triple.jumps.truncated_second_moment() == 0

    def test_forcing_drift(self):
        sc = _scalar_scenario(f="2", noise=SILENT)

        triple = module.compute_triple(sc, 0, 1)

        assert triple.b[0] == pytest.approx(2 * (1 - math.exp(-1)), abs=1e-9)
        assert triple.b[0] == pytest.approx(1.26424, abs=1e-5)

    def test_brownian_covariance(self):
        triple = module.compute_triple(_scalar_scenario(), 0, 1)

        assert triple.R[0, 0] == pytest.approx((1 - math.exp(-2)) / 2, abs=1e-9)

    def test_compensator_drift_of_compound_poisson(self):
        sc = _scalar_scenario(noise=HALF_ATOM)

        def correction(r):
            pushed = 0.5 * math.exp(-(1 - r))
            return pushed * (1 / (1 + pushed**2) - 1 / 1.25)

        expected, _ = quad(correction, 0, 1)

        assert module.compute_triple(sc, 0, 1).b[0] == pytest.approx(
            expected, abs=1e-10
        )

    def test_rejects_infinite_start(self):
        with pytest.raises(ValueError, match="limit_triple"):
            module.compute_triple(_scalar_scenario(), -math.inf, 0)

    @pytest.mark.parametrize(
        "noise", [BROWNIAN, HALF_ATOM, JUMP_DIFFUSION], ids=["gaussian", "cp", "jd"]
    )
    def test_triple_cf_matches_cf_solution(self, noise):
        sc = _scalar_scenario(A="-(2 + sin(t))", f="cos(t)", noise=noise)
        x = [0.7]

        triple = module.compute_triple(sc, 0.5, 2.5)
        shift = sc.operator.evaluate(2.5, 0.5) @ x

        from_triple = module.triple_cf(triple, shift, A_GRID)
        direct = module.cf_solution(sc, 0.5, 2.5, x, A_GRID)
        np.testing.assert_allclose(from_triple, direct, atol=1e-6)

    def test_planar_triple_cf_matches_cf_solution(self):
        sc = _planar_scenario()
        a_grid = np.random.default_rng(8).uniform(-2, 2, size=(20, 2))

        triple = module.compute_triple(sc, 0, 1.5)

        np.testing.assert_allclose(
            module.triple_cf(triple, np.zeros(2), a_grid),
            module.cf_solution(sc, 0, 1.5, np.zeros(2), a_grid),
            atol=1e-6,
        )

    def test_covariance_increases_as_start_recedes(self):
        sc = _planar_scenario()
        rng = np.random.default_rng(10)

        for earlier, later in np.sort(rng.uniform(-4, 2, size=(10, 2)), axis=1):
            difference = (
                module.compute_triple(sc, earlier, 2).R
                - module.compute_triple(sc, later, 2).R
            )
            assert np.min(np.linalg.eigvalsh(difference)) >= -1e-10


class TestLimitTriple:
    def test_stationary_variance(self):
        sc = _scalar_scenario()

        triple = module.limit_triple(sc, 3.0)

        assert triple.R[0, 0] == pytest.approx(0.5, abs=sc.numerics.tail_tol + 1e-8)
        assert triple.s == -math.inf
        assert triple.truncated_at < 3.0

    def test_stationary_mean(self):
        sc = _scalar_scenario(f="2", noise=SILENT)

        assert module.limit_triple(sc, 0.0).b[0] == pytest.approx(2, abs=1e-8)

    def test_no_jumps_means_empty_jump_functional(self):
        triple = module.limit_triple(_scalar_scenario(), 0.0)

        assert triple.jumps.truncated_second_moment() == 0
        assert triple.jumps.integrate(lambda z: np.ones(z.shape[:-1])) == 0

    def test_refuses_growing_operator(self):
        sc = _scalar_scenario(A="1")

        with pytest.raises(module.DecayUnavailable, match=r"\|\|U\(t,s\)\|\| <= C"):
            module.limit_triple(sc, 0.0)

    def test_doubling_the_window_moves_covariance_less_than_tail_tol(self):
        sc = _scalar_scenario(A="-(2 + sin(t))")

        triple = module.limit_triple(sc, 1.0)
        doubled = module.compute_triple(sc, 1.0 - 2 * (1.0 - triple.truncated_at), 1.0)

        assert abs(doubled.R[0, 0] - triple.R[0, 0]) < sc.numerics.tail_tol

    def test_logs_truncation_point(self, mocker):
        mock_logger = mocker.patch.object(module, "logger")

        module.limit_triple(_scalar_scenario(), 0.0)

        assert "Truncating" in mock_logger.info.call_args[0][0]


class TestCheckExistenceConditions:
    def test_brownian(self):
        report = module.check_existence_conditions(_scalar_scenario(), 0.0)

        assert report.cond_i.holds and report.cond_ii.holds
        assert report.cond_i.value == pytest.approx(0.5, abs=1e-6)
        assert report.cond_ii.value == 0
        assert report.majorant_per_unit_time == 0

    def test_compound_poisson_half_atom(self):
        report = module.check_existence_conditions(
            _scalar_scenario(noise=HALF_ATOM), 0.0
        )

        assert report.cond_ii.holds
        assert report.cond_ii.value == pytest.approx(0.125, abs=1e-6)
        assert report.cond_i.value == 0
        assert report.majorant_per_unit_time == pytest.approx(0.25, abs=1e-6)

    def test_cauchy(self):
        report = module.check_existence_conditions(_scalar_scenario(noise=CAUCHY), 0.0)

        # integral (1 ^ |y|^2) dy / (pi y^2) = 4 / pi, and integral e^{-(t-r)} dr = 1
        assert report.cond_ii.value == pytest.approx(4 / math.pi, abs=1e-6)

    def test_refuses_growing_operator(self):
        with pytest.raises(module.DecayUnavailable):
            module.check_existence_conditions(_scalar_scenario(A="1"), 0.0)


class TestDriftLimitCheck:
    def test_constant_forcing_settles(self):
        sc = _scalar_scenario(f="2", noise=SILENT)

        check = module.drift_limit_check(sc, 0.0)

        assert check.holds
        assert check.value < sc.numerics.tail_tol


class TestIDLaw:
    def test_gaussian_limit_law(self):
        law = module.limit_triple(_scalar_scenario(), 0.0).law()

        assert law.kind == "gaussian"
        assert law.location == pytest.approx(0, abs=1e-12)
        assert law.scale == pytest.approx(math.sqrt(0.5), abs=1e-8)
        assert law.cdf(0.0) == pytest.approx(0.5)

    def test_cauchy_limit_law(self):
        law = module.limit_triple(_scalar_scenario(noise=CAUCHY), 0.0).law()

        assert law.kind == "stable"
        assert law.scale == pytest.approx(1, abs=1e-8)
        assert law.cdf(1.0) == pytest.approx(0.75, abs=1e-8)
        assert law.cf([2.0]) == pytest.approx(math.exp(-2), abs=1e-8)

    def test_point_mass(self):
        law = module.limit_triple(_scalar_scenario(f="3", noise=SILENT), 0.0).law()

        assert law.kind == "point_mass"
        assert law.scale == 0
        np.testing.assert_array_equal(law.cdf([2.9, 3.1]), [0.0, 1.0])

    def test_samples_match_moments(self):
        law = module.limit_triple(_scalar_scenario(), 0.0).law()

        samples = law.sample(10**5, np.random.default_rng(0))

        assert samples.var() == pytest.approx(0.5, abs=0.01)

    def test_compound_poisson_has_no_closed_form(self):
        law = module.limit_triple(_scalar_scenario(noise=HALF_ATOM), 0.0).law()

        with pytest.raises(module.UnsupportedNoise):
            law.sample(10, np.random.default_rng(0))

    def test_cf_is_one_at_origin(self):
        law = module.limit_triple(_scalar_scenario(noise=JUMP_DIFFUSION), 0.0).law()

        assert law.cf([0.0]) == 1


class TestLevyKhintchineIntegral:
    @pytest.mark.parametrize(
        "noise",
        [HALF_ATOM, JUMP_DIFFUSION, CAUCHY],
        ids=["cp", "jd", "cauchy"],
    )
    def test_chunked_evaluation_matches_single_pass(self, mocker, noise):
        jumps = module.compute_triple(_scalar_scenario(noise=noise), 0, 1).jumps

        single_pass = jumps.levy_khintchine_integral(A_GRID)
        mocker.patch.object(module, "CHUNK_ENTRIES", 1)
        chunked = jumps.levy_khintchine_integral(A_GRID)

        np.testing.assert_allclose(chunked, single_pass, rtol=1e-12, atol=1e-15)

    def test_one_dimensional_stable_integral_is_separable(self):
        jumps = module.compute_triple(_scalar_scenario(noise=CAUCHY), 0, 2).jumps

        expected = -(1 - math.exp(-2)) * np.abs(A_GRID[:, 0])

        np.testing.assert_allclose(
            jumps.levy_khintchine_integral(A_GRID), expected, atol=1e-9
        )

    def test_single_point_is_a_scalar(self):
        jumps = module.compute_triple(_scalar_scenario(noise=HALF_ATOM), 0, 1).jumps

        assert isinstance(jumps.levy_khintchine_integral([1.0]), complex)
