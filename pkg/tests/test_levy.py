import numpy as np
import pytest

from levyflat import levy
from levyflat.errors import ConfigError
from levyflat.levy import (DriverPath, JumpMeasureSpec, LevyDriver, atom_jumps,
                           cumulant, cumulant_prime, moment_check, sample_path,
                           small_jump_indices, stream, terminal_samples,
                           uniform_jumps)


class TestJumpMeasureSpec:
    def test_requires_exactly_one_of_density_atoms(self):
        with pytest.raises(ConfigError):
            JumpMeasureSpec(intensity=1.0)
        with pytest.raises(ConfigError):
            JumpMeasureSpec(intensity=1.0, support=((0.0, 1.0),),
                            density=lambda x: 1.0, atoms=((1.0, 1.0),))

    def test_rejects_nonpositive_intensity(self):
        with pytest.raises(ConfigError):
            JumpMeasureSpec(intensity=0.0, atoms=((1.0, 0.0),))

    def test_density_must_normalize(self):
        with pytest.raises(ConfigError):
            JumpMeasureSpec(intensity=1.0, support=((0.0, 1.0),),
                            density=lambda x: 2.0)

    def test_density_needs_support(self):
        with pytest.raises(ConfigError):
            JumpMeasureSpec(intensity=1.0, density=lambda x: 1.0)

    def test_unbounded_support_rejected(self):
        with pytest.raises(ConfigError):
            JumpMeasureSpec(intensity=1.0, support=((0.0, np.inf),),
                            density=lambda x: np.exp(-x))

    def test_atom_mass_must_match_intensity(self):
        with pytest.raises(ConfigError):
            JumpMeasureSpec(intensity=2.0, atoms=((1.0, 1.0),))

    def test_negative_atom_mass_rejected(self):
        with pytest.raises(ConfigError):
            JumpMeasureSpec(intensity=0.5, atoms=((1.0, 1.0), (2.0, -0.5)))

    def test_uniform_moments(self):
        spec = uniform_jumps(0.0, 1.0, 1.0)
        assert spec.mean_jump() == pytest.approx(0.5, abs=1e-10)
        assert spec.second_moment() == pytest.approx(1.0 / 3.0, abs=1e-10)

    def test_atom_moments_scale_with_mass(self):
        spec = atom_jumps([(0.5, 2.0), (1.0, 1.0)])
        assert spec.intensity == 3.0
        assert spec.mean_jump() == pytest.approx(2.0 * 0.5 + 1.0, abs=1e-12)

    def test_sample_sizes_match_distribution(self):
        spec = uniform_jumps(0.0, 2.0, 1.0)
        rng = np.random.default_rng(0)
        xs = spec.sample_sizes(rng, 50_000)
        assert xs.min() >= 0.0 and xs.max() <= 2.0
        assert xs.mean() == pytest.approx(1.0, abs=0.02)
        assert xs.var() == pytest.approx(4.0 / 12.0, rel=0.05)

    def test_atom_sampling_frequencies(self):
        spec = atom_jumps([(1.0, 3.0), (2.0, 1.0)])
        rng = np.random.default_rng(1)
        xs = spec.sample_sizes(rng, 40_000)
        assert np.mean(xs == 1.0) == pytest.approx(0.75, abs=0.01)


class TestMomentCheck:
    def test_unit_atom(self):
        # |x|^2 v |x|^4 = 1 at x = 1, mass 2
        assert moment_check(atom_jumps([(1.0, 2.0)])) == pytest.approx(2.0)

    def test_uniform_below_one(self):
        # x^2 >= x^4 on [0, 1], so the integral is 1/3
        assert moment_check(uniform_jumps(0.0, 1.0, 1.0)) \
            == pytest.approx(1.0 / 3.0, abs=1e-9)

    def test_large_atom(self):
        # |2|^4 = 16 dominates |2|^2 = 4
        assert moment_check(atom_jumps([(2.0, 1.0)])) == pytest.approx(16.0)


class TestSmallJumpIndices:
    def test_uniform_from_zero(self):
        driver = LevyDriver(p=0, jump_specs=(uniform_jumps(0.0, 0.5, 1.0),))
        assert small_jump_indices(driver, 1e-6) == {1}

    def test_atoms_never_qualify(self):
        driver = LevyDriver(p=0, jump_specs=(atom_jumps([(1.0, 1.0)]),))
        assert small_jump_indices(driver, 1e-6) == set()

    def test_support_away_from_zero(self):
        driver = LevyDriver(p=0, jump_specs=(uniform_jumps(0.2, 0.7, 1.0),))
        assert small_jump_indices(driver, 1e-6) == set()

    def test_negative_side_interval(self):
        driver = LevyDriver(p=0, jump_specs=(uniform_jumps(-0.5, 0.0, 1.0),))
        assert small_jump_indices(driver, 1e-6) == {1}

    def test_monotone_in_eps_min(self):
        driver = LevyDriver(p=0, jump_specs=(uniform_jumps(0.0, 0.5, 1.0),
                                             uniform_jumps(0.0, 0.01, 1.0)))
        large = small_jump_indices(driver, 0.1)
        small = small_jump_indices(driver, 1e-6)
        assert large <= small
        assert large == {1} and small == {1, 2}

    def test_requires_positive_eps(self):
        driver = LevyDriver(p=0, jump_specs=(uniform_jumps(0.0, 0.5, 1.0),))
        with pytest.raises(ConfigError):
            small_jump_indices(driver, 0.0)


class TestCumulant:
    def test_pure_wiener_limit(self):
        # a vanishing jump part leaves the Gaussian cumulant z^2/2
        driver = LevyDriver(p=1, jump_specs=(atom_jumps([(1.0, 1e-12)]),),
                            include_wiener_in_X=True)
        for z in (-2.0, -0.5, 0.7, 2.0):
            assert cumulant(driver, z) == pytest.approx(z * z / 2.0, abs=1e-10)
            assert cumulant_prime(driver, z) == pytest.approx(z, abs=1e-10)

    def test_prime_vanishes_at_zero(self):
        driver = LevyDriver(p=1, jump_specs=(uniform_jumps(0.0, 0.5, 3.0),),
                            include_wiener_in_X=True)
        assert cumulant_prime(driver, 0.0) == pytest.approx(0.0, abs=1e-14)

    def test_unit_atom_closed_form(self):
        # Psi'(z) = z + lam (e^z - 1); at z = 1, lam = 1 this equals e
        driver = LevyDriver(p=1, jump_specs=(atom_jumps([(1.0, 1.0)]),),
                            include_wiener_in_X=True)
        assert cumulant_prime(driver, 1.0) == pytest.approx(np.e, abs=1e-12)
        # Psi(z) = z^2/2 + lam (e^z - 1 - z)
        assert cumulant(driver, 1.0) == pytest.approx(0.5 + (np.e - 2.0),
                                                      abs=1e-12)

    def test_prime_matches_finite_difference(self):
        drivers = [
            LevyDriver(p=1, jump_specs=(uniform_jumps(0.0, 0.02, 5.0),),
                       include_wiener_in_X=True),
            LevyDriver(p=0, jump_specs=(uniform_jumps(-0.3, 0.4, 2.0),)),
            LevyDriver(p=1, jump_specs=(atom_jumps([(0.5, 1.0), (1.0, 0.5)]),),
                       include_wiener_in_X=True),
        ]
        step = 1e-5
        for driver in drivers:
            for z in np.linspace(-2.0, 2.0, 21):
                fd = (cumulant(driver, z + step)
                      - cumulant(driver, z - step)) / (2.0 * step)
                assert cumulant_prime(driver, z) == pytest.approx(fd, abs=1e-8)

    def test_restricted_to_one_jump_coordinate(self):
        driver = LevyDriver(p=0, jump_specs=(atom_jumps([(1.0, 1.0)]),
                                             atom_jumps([(1.0, 1.0)])))
        with pytest.raises(ConfigError):
            cumulant(driver, 1.0)
        with pytest.raises(ConfigError):
            cumulant_prime(driver, 1.0)


class TestDriverValidation:
    def test_needs_a_jump_coordinate(self):
        with pytest.raises(ConfigError):
            LevyDriver(p=1, jump_specs=())

    def test_negative_wiener_dimension(self):
        with pytest.raises(ConfigError):
            LevyDriver(p=-1, jump_specs=(atom_jumps([(1.0, 1.0)]),))

    def test_compensator_drift(self):
        driver = LevyDriver(p=0, jump_specs=(uniform_jumps(0.0, 1.0, 2.0),))
        assert driver.compensator_drift()[0] == pytest.approx(-1.0, abs=1e-10)


class TestSamplePath:
    def test_deterministic_per_seed(self):
        driver = LevyDriver(p=2, jump_specs=(uniform_jumps(0.0, 0.5, 4.0),))
        a = sample_path(driver, 1.0, 0.01, 42)
        b = sample_path(driver, 1.0, 0.01, 42)
        assert np.array_equal(a.wiener_increments, b.wiener_increments)
        for (ta, xa), (tb, xb) in zip(a.jump_events, b.jump_events):
            assert np.array_equal(ta, tb) and np.array_equal(xa, xb)

    def test_different_seeds_differ(self):
        driver = LevyDriver(p=1, jump_specs=(uniform_jumps(0.0, 0.5, 4.0),))
        a = sample_path(driver, 1.0, 0.01, 0)
        b = sample_path(driver, 1.0, 0.01, 1)
        assert not np.array_equal(a.wiener_increments, b.wiener_increments)

    def test_jump_times_inside_horizon(self):
        driver = LevyDriver(p=0, jump_specs=(uniform_jumps(0.0, 0.5, 20.0),))
        path = sample_path(driver, 2.0, 0.1, 3)
        times, _ = path.jump_events[0]
        assert np.all(times > 0.0) and np.all(times <= 2.0)

    def test_invalid_dt(self):
        driver = LevyDriver(p=0, jump_specs=(atom_jumps([(1.0, 1.0)]),))
        with pytest.raises(ConfigError):
            sample_path(driver, 1.0, 2.0, 0)
        with pytest.raises(ConfigError):
            sample_path(driver, -1.0, 0.1, 0)

    def test_terminal_value_hand_compensator(self):
        # one unit jump compensated at rate 1 over T = 1 nets to zero
        path = DriverPath(time_grid=np.array([0.0, 1.0]),
                          wiener_increments=np.zeros((1, 0)),
                          jump_events=((np.array([0.5]), np.array([1.0])),),
                          compensator_drift=np.array([-1.0]))
        assert path.terminal_values()[0] == pytest.approx(0.0, abs=1e-14)

    def test_near_zero_intensity_gives_no_jumps(self):
        driver = LevyDriver(p=0, jump_specs=(atom_jumps([(1.0, 1e-12)]),))
        path = sample_path(driver, 1.0, 0.1, 7)
        times, _ = path.jump_events[0]
        assert times.size == 0
        assert abs(path.terminal_values()[0]) < 1e-11


class TestStreams:
    def test_keys_give_independent_streams(self):
        a = stream(5, 0).standard_normal(10)
        b = stream(5, 1).standard_normal(10)
        assert not np.array_equal(a, b)

    def test_tuple_seeds_split(self):
        a = stream((5, 0), 0).standard_normal(10)
        b = stream((5, 1), 0).standard_normal(10)
        assert not np.array_equal(a, b)


class TestMartingale:
    def test_empirical_mean_near_zero(self):
        spec = uniform_jumps(0.0, 0.5, 4.0)
        samples = terminal_samples(spec, T=1.0, n_paths=100_000, seed=12)
        stderr = samples.std(ddof=1) / np.sqrt(samples.size)
        assert abs(samples.mean()) < 4.0 * stderr

    def test_variance_matches_levy_measure(self):
        spec = uniform_jumps(0.0, 0.5, 4.0)
        samples = terminal_samples(spec, T=1.0, n_paths=100_000, seed=12)
        target = spec.second_moment()  # T = 1
        assert samples.var(ddof=1) == pytest.approx(target, rel=0.05)
