import numpy as np
import pytest
from scipy.integrate import solve_ivp

from levyflat import hilbert
from levyflat.errors import ConfigError, DimensionMismatchError, NumericalError
from levyflat.hilbert import trapezoid_grid, unit_grid
from levyflat.levy import LevyDriver, atom_jumps, uniform_jumps
from levyflat.spde import (Coefficients, IdentitySemigroup, MatrixSemigroup,
                           SPDEProblem, ShiftSemigroup, WienerPath,
                           apply_semigroup, constant_coefficient,
                           convergence_order, jump_coefficient, simulate_mild)


def idle_jump():
    # jump channel that satisfies the driver contract but never moves the
    # state (zero volatility); used for noise-free problems
    return atom_jumps([(1.0, 0.5)])


def stable_matrix():
    return np.array([[-1.0, 0.4, 0.0, 0.0],
                     [0.2, -0.8, 0.1, 0.0],
                     [0.0, 0.3, -1.2, 0.2],
                     [0.1, 0.0, 0.2, -0.6]])


class TestIdentitySemigroup:
    def test_identity(self):
        sg = IdentitySemigroup()
        v = np.array([1.0, -2.0])
        assert np.array_equal(sg.apply(0.7, v), v)

    def test_negative_time_rejected(self):
        with pytest.raises(ConfigError):
            IdentitySemigroup().apply(-0.1, np.zeros(2))


class TestMatrixSemigroup:
    def test_scalar_exponential(self):
        space = unit_grid(3)
        sg = MatrixSemigroup(space, -np.eye(3))
        v = np.array([1.0, 2.0, -1.0])
        assert np.allclose(sg.apply(1.0, v), np.exp(-1.0) * v, atol=1e-12)

    def test_time_zero_is_identity(self):
        space = unit_grid(4)
        sg = MatrixSemigroup(space, stable_matrix())
        v = np.arange(4.0)
        assert np.array_equal(sg.apply(0.0, v), v)

    def test_semigroup_law(self):
        space = unit_grid(4)
        sg = MatrixSemigroup(space, stable_matrix())
        rng = np.random.default_rng(0)
        for t, s in ((0.2, 0.3), (0.5, 0.5)):
            v = rng.standard_normal(4)
            lhs = sg.apply(t + s, v)
            rhs = sg.apply(t, sg.apply(s, v))
            assert np.linalg.norm(lhs - rhs) < 1e-10 * np.linalg.norm(lhs)

    def test_pseudo_contractivity(self):
        space = trapezoid_grid(np.linspace(0.0, 1.0, 4))
        sg = MatrixSemigroup(space, stable_matrix())
        rng = np.random.default_rng(1)
        for t in (0.1, 0.5, 1.0):
            for _ in range(50):
                v = space.vector(rng.standard_normal(4))
                sv = sg.apply_hv(t, v)
                assert hilbert.norm(sv) <= np.exp(sg.beta * t) \
                    * hilbert.norm(v) + 1e-8

    def test_dimension_check(self):
        with pytest.raises(DimensionMismatchError):
            MatrixSemigroup(unit_grid(3), np.eye(2))


class TestShiftSemigroup:
    def space(self):
        return trapezoid_grid(np.linspace(0.0, 10.0, 64))

    def test_time_zero_is_identity(self):
        space = self.space()
        sg = ShiftSemigroup(space)
        v = np.sin(space.grid)
        assert np.array_equal(sg.apply(0.0, v), v)

    def test_linear_function_shifted_exactly(self):
        # monotone cubic interpolation reproduces linear data exactly
        space = self.space()
        sg = ShiftSemigroup(space)
        out = sg.apply(0.3, space.grid.copy())
        interior = space.grid + 0.3 <= space.grid[-1]
        assert np.allclose(out[interior], space.grid[interior] + 0.3, atol=1e-12)

    def test_constant_extrapolation(self):
        space = self.space()
        sg = ShiftSemigroup(space)
        v = space.grid.copy()
        out = sg.apply(3.0, v)
        beyond = space.grid + 3.0 >= space.grid[-1]
        assert np.allclose(out[beyond], space.grid[-1], atol=1e-12)

    def test_whole_spacing_shift_is_reindexing(self):
        space = self.space()
        sg = ShiftSemigroup(space)
        spacing = space.grid[1] - space.grid[0]
        v = np.sin(space.grid)
        out = sg.apply(3.0 * spacing, v)
        assert np.array_equal(out[:-3], v[3:])
        assert np.all(out[-3:] == v[-1])

    def test_law_at_grid_multiples(self):
        space = self.space()
        sg = ShiftSemigroup(space)
        assert sg.law_defect < 1e-8

    def test_exponential_scaling_of_decay_mode(self):
        # the shift maps exp(-c xi) to exp(-c t) exp(-c xi) up to
        # interpolation error
        space = self.space()
        sg = ShiftSemigroup(space)
        c = 0.3
        v = np.exp(-c * space.grid)
        out = sg.apply(0.25, v)
        interior = space.grid + 0.25 <= space.grid[-1]
        assert np.allclose(out[interior], np.exp(-c * 0.25) * v[interior],
                           atol=5e-7)


class TestJumpCoefficient:
    def coeffs(self):
        g1 = constant_coefficient(np.array([1.0, 0.0, 2.0]))
        g2 = constant_coefficient(np.array([0.0, 1.0, -1.0]))
        return Coefficients(alpha=constant_coefficient(np.zeros(3)),
                            gamma=(g1, g2))

    def test_zero_jump(self):
        out = jump_coefficient(self.coeffs(), np.zeros(3), [0.0, 0.0])
        assert np.array_equal(out, np.zeros(3))

    def test_scaling(self):
        out = jump_coefficient(self.coeffs(), np.zeros(3), [2.0, 0.0])
        assert np.allclose(out, [2.0, 0.0, 4.0])

    def test_additivity(self):
        out = jump_coefficient(self.coeffs(), np.zeros(3), [1.0, 1.0])
        assert np.allclose(out, [1.0, 1.0, 1.0])

    def test_length_check(self):
        with pytest.raises(DimensionMismatchError):
            jump_coefficient(self.coeffs(), np.zeros(3), [1.0])


def noise_free_problem(space, semigroup, alpha):
    driver = LevyDriver(p=0, jump_specs=(idle_jump(),))
    coeffs = Coefficients(alpha=alpha, sigma=(),
                          gamma=(constant_coefficient(np.zeros(space.dim)),))
    return SPDEProblem(space, semigroup, coeffs, driver)


class TestSimulateMild:
    def test_homogeneous_case_reduces_to_semigroup(self):
        space = unit_grid(4)
        sg = MatrixSemigroup(space, stable_matrix())
        prob = noise_free_problem(space, sg, constant_coefficient(np.zeros(4)))
        h0 = space.vector([1.0, -1.0, 0.5, 2.0])
        sim = simulate_mild(prob, h0, 1.0, 0.05, seed=0)
        expected = sg.apply(1.0, h0.values)
        assert np.allclose(sim.final_state, expected, atol=1e-9)

    def test_constant_drift_exact(self):
        space = unit_grid(3)
        a = np.array([0.5, -1.0, 2.0])
        prob = noise_free_problem(space, IdentitySemigroup(),
                                  constant_coefficient(a))
        h0 = space.vector(np.zeros(3))
        sim = simulate_mild(prob, h0, 1.0, 0.01, seed=0)
        assert np.allclose(sim.final_state, a, atol=1e-12)

    def test_injected_jump_hand_arithmetic(self):
        # one jump of size x at t = 0.5 with constant gamma g:
        # r_T = h0 + x g + compensator * g * T
        space = unit_grid(2)
        g = np.array([1.0, 2.0])
        spec = uniform_jumps(0.0, 0.5, 2.0)
        driver = LevyDriver(p=0, jump_specs=(spec,))
        coeffs = Coefficients(alpha=constant_coefficient(np.zeros(2)),
                              gamma=(constant_coefficient(g),))
        prob = SPDEProblem(space, IdentitySemigroup(), coeffs, driver)
        h0 = space.vector([0.0, 0.0])
        events = ((np.array([0.5]), np.array([0.3])),)
        sim = simulate_mild(prob, h0, 1.0, 0.1, seed=0, jump_events=events)
        comp = driver.compensator_drift()[0]
        expected = h0.values + 0.3 * g + comp * g * 1.0
        assert np.allclose(sim.final_state, expected, atol=1e-12)

    def test_cadlag_jump_records(self):
        space = unit_grid(2)
        g = np.array([1.0, -1.0])
        spec = atom_jumps([(0.7, 3.0)])
        driver = LevyDriver(p=0, jump_specs=(spec,))
        coeffs = Coefficients(alpha=constant_coefficient(np.zeros(2)),
                              gamma=(constant_coefficient(g),))
        prob = SPDEProblem(space, IdentitySemigroup(), coeffs, driver)
        sim = simulate_mild(prob, space.vector([0.0, 0.0]), 1.0, 0.05, seed=11)
        pres = [(t, v) for t, f, v in sim.records if f == "pre"]
        posts = [(t, v) for t, f, v in sim.records if f == "post"]
        assert len(pres) == len(posts) > 0
        for (tp, vp), (tq, vq) in zip(pres, posts):
            assert tp == tq
            jump = jump_coefficient(coeffs, vp, [0.7])
            assert np.allclose(vq, vp + jump, atol=1e-14)

    def test_bitwise_determinism(self):
        space = unit_grid(3)
        spec = uniform_jumps(0.0, 0.5, 4.0)
        driver = LevyDriver(p=1, jump_specs=(spec,))
        coeffs = Coefficients(alpha=lambda h: np.sin(h),
                              sigma=(constant_coefficient(np.full(3, 0.2)),),
                              gamma=(constant_coefficient(np.full(3, 0.1)),))
        prob = SPDEProblem(space, IdentitySemigroup(), coeffs, driver)
        h0 = space.vector([0.1, 0.2, 0.3])
        a = simulate_mild(prob, h0, 1.0, 0.01, seed=(3, 4))
        b = simulate_mild(prob, h0, 1.0, 0.01, seed=(3, 4))
        assert len(a.records) == len(b.records)
        for (ta, fa, va), (tb, fb, vb) in zip(a.records, b.records):
            assert ta == tb and fa == fb
            assert np.array_equal(va, vb)

    def test_nonfinite_state_reported(self):
        space = unit_grid(2)
        prob = noise_free_problem(space, IdentitySemigroup(),
                                  lambda h: np.full_like(h, np.inf))
        with pytest.raises(NumericalError):
            simulate_mild(prob, space.vector([5.0, 5.0]), 1.0, 0.1, seed=0)

    def test_invalid_horizon(self):
        space = unit_grid(2)
        prob = noise_free_problem(space, IdentitySemigroup(),
                                  constant_coefficient(np.zeros(2)))
        with pytest.raises(ConfigError):
            simulate_mild(prob, space.vector([0.0, 0.0]), 0.0, 0.1, seed=0)

    def test_against_ode_oracle(self):
        # noise-free nonlinear problem vs a high-accuracy ODE integrator
        space = unit_grid(4)
        A = stable_matrix()
        sg = MatrixSemigroup(space, A)
        prob = noise_free_problem(space, sg, lambda h: np.sin(h))
        h0 = np.array([0.5, -0.2, 0.3, 0.1])
        sol = solve_ivp(lambda _t, y: A @ y + np.sin(y), (0.0, 1.0), h0,
                        rtol=1e-11, atol=1e-12)
        errs = []
        for dt in (1e-3, 1e-4):
            sim = simulate_mild(prob, space.vector(h0), 1.0, dt, seed=0)
            errs.append(np.max(np.abs(sim.final_state - sol.y[:, -1])))
        assert errs[1] < 5e-5
        # first-order bias: the error contracts with the step size
        assert errs[1] < 0.2 * errs[0]


class TestWienerPath:
    def test_increments_sum_exactly(self):
        times = np.linspace(0.0, 1.0, 11)
        wp = WienerPath.generate(times, 2, np.random.default_rng(0))
        total = wp.increment(0.0, 1.0)
        parts = sum(wp.increment(times[i], times[i + 1]) for i in range(10))
        assert np.allclose(total, parts, atol=1e-14)

    def test_off_partition_time_rejected(self):
        times = np.linspace(0.0, 1.0, 11)
        wp = WienerPath.generate(times, 1, np.random.default_rng(0))
        with pytest.raises(NumericalError):
            wp.increment(0.0, 0.05)


class TestConvergenceOrder:
    def test_deterministic_linear_first_order(self):
        space = unit_grid(4)
        sg = MatrixSemigroup(space, stable_matrix())
        B = np.array([[0.0, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.0],
                      [0.0, 0.0, 0.0, 0.5], [0.5, 0.0, 0.0, 0.0]])
        prob = noise_free_problem(space, sg, lambda h: B @ h)
        h0 = space.vector([0.5, -0.2, 0.3, 0.1])
        res = convergence_order(prob, h0, 1.0, [8e-2, 4e-2, 2e-2, 1e-2],
                                1, 5, 1e-3)
        assert not res.skipped
        assert res.slope >= 0.9
        assert res.r_squared > 0.98

    def test_wiener_constant_sigma(self):
        space = unit_grid(4)
        sg = MatrixSemigroup(space, stable_matrix())
        driver = LevyDriver(p=1, jump_specs=(idle_jump(),))
        coeffs = Coefficients(
            alpha=lambda h: np.sin(h),
            sigma=(constant_coefficient(np.full(4, 0.3)),),
            gamma=(constant_coefficient(np.zeros(4)),))
        prob = SPDEProblem(space, sg, coeffs, driver)
        h0 = space.vector([0.5, -0.2, 0.3, 0.1])
        res = convergence_order(prob, h0, 1.0, [8e-2, 4e-2, 2e-2, 1e-2],
                                200, 5, 1e-3)
        assert not res.skipped
        assert res.slope >= 0.4

    def test_pure_jump_exact_scheme_skipped(self):
        space = unit_grid(4)
        sg = MatrixSemigroup(space, stable_matrix())
        spec = uniform_jumps(0.0, 0.5, 2.0)
        driver = LevyDriver(p=0, jump_specs=(spec,))
        g = np.full(4, 0.1)
        comp = driver.compensator_drift()[0]
        coeffs = Coefficients(alpha=constant_coefficient(-comp * g),
                              gamma=(constant_coefficient(g),))
        prob = SPDEProblem(space, sg, coeffs, driver)
        h0 = space.vector([0.5, -0.2, 0.3, 0.1])
        res = convergence_order(prob, h0, 1.0, [4e-2, 2e-2, 1e-2], 20, 5, 1e-3)
        assert res.skipped
        assert np.all(res.errors < 1e-13)

    def test_dt_must_divide_reference(self):
        space = unit_grid(2)
        prob = noise_free_problem(space, IdentitySemigroup(),
                                  constant_coefficient(np.zeros(2)))
        h0 = space.vector([0.0, 0.0])
        with pytest.raises(ConfigError):
            convergence_order(prob, h0, 1.0, [3e-3], 1, 0, 2e-3)
        with pytest.raises(ConfigError):
            convergence_order(prob, h0, 1.0, [1e-3], 1, 0, 1e-2)
