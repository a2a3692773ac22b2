# ABOUTME: Tests for the benchmark oscillators and the synthetic data generators
# ABOUTME: True fields, period detection, seeded noise, lifting and field error

import numpy as np
import pytest

from odefield.bench.systems import (
    LATENT_DIM,
    SYSTEMS,
    SystemName,
    add_noise,
    crossing_period,
    eval_true_field,
    field_error,
    get_system,
    lift,
    lifted_series,
    sample_times,
    simulate_benchmark,
)
from odefield.dynamics.odeint import Trajectory


class TestSystems:
    """Test the true vector fields."""

    def test_van_der_pol(self):
        """f(x) = (x2, (1 - x1^2) x2 - x1)."""
        np.testing.assert_allclose(eval_true_field(get_system("vdp"), [2.0, 1.0]), [1.0, -5.0])

    def test_fitzhugh_nagumo(self):
        """f(x) = (3 (x1 - x1^3/3 + x2), (0.2 - 3 x1 - 0.2 x2) / 3)."""
        expected = [3.0 * (1.0 - 1.0 / 3.0 + 0.5), (0.2 - 3.0 - 0.1) / 3.0]

        np.testing.assert_allclose(eval_true_field(get_system("fhn"), [1.0, 0.5]), expected)

    def test_lotka_volterra(self):
        """f(x) = (1.5 x1 - x1 x2, -3 x2 + x1 x2)."""
        np.testing.assert_allclose(eval_true_field(get_system(SystemName.LV), [2.0, 1.0]), [1.0, -1.0])

    def test_lotka_volterra_fixed_point(self):
        """(3, 1.5) is an equilibrium."""
        np.testing.assert_allclose(SYSTEMS[SystemName.LV]([3.0, 1.5]), [0.0, 0.0], atol=1e-12)

    def test_names_case_insensitive(self):
        """System names are matched case-insensitively."""
        assert get_system("VDP") is SYSTEMS[SystemName.VDP]

    def test_unknown_system(self):
        """Unknown names list the valid choices."""
        with pytest.raises(ValueError, match="vdp, fhn, lv"):
            get_system("lorenz")

    def test_rejects_wrong_dimension(self):
        """The benchmarks are two-dimensional."""
        with pytest.raises(ValueError):
            eval_true_field(get_system("vdp"), [1.0, 2.0, 3.0])


class TestSimulation:
    """Test trajectories and sample times."""

    def test_van_der_pol_period(self):
        """The detected limit cycle period of the unforced oscillator is about 6.66."""
        assert get_system("vdp").period == pytest.approx(6.663, abs=0.02)

    def test_periods_positive(self):
        """Every benchmark has a detectable cycle."""
        for system in SYSTEMS.values():
            assert system.period > 0

    def test_sample_times_span(self):
        """Sample times cover the training span from zero."""
        system = get_system("lv")

        times = sample_times(system, 25)

        assert times.shape == (25,)
        assert times[0] == 0.0
        assert times[-1] == pytest.approx(1.7 * system.period)

    def test_crossing_period_of_a_sine(self):
        """A sampled sine of period 2 has crossing period 2."""
        times = np.linspace(0.0, 9.0, 901)

        assert crossing_period(times, np.sin(np.pi * times)) == pytest.approx(2.0, rel=1e-3)

    def test_crossing_period_needs_crossings(self):
        """A monotone signal has no period."""
        with pytest.raises(ValueError, match="crossing"):
            crossing_period(np.arange(5.0), np.arange(5.0))

    @pytest.mark.parametrize(("n_points", "cycles"), [(1, None), (10, 0.0), (10, -1.0)])
    def test_sample_times_invalid(self, n_points, cycles):
        """At least two points over a positive span."""
        with pytest.raises(ValueError):
            sample_times(get_system("vdp"), n_points, cycles)

    def test_simulation_starts_at_default_state(self):
        """Without x0 the simulation starts from the reference state."""
        trajectory = simulate_benchmark(get_system("fhn"), None, np.linspace(0.0, 2.0, 5))

        np.testing.assert_array_equal(trajectory.states[0], [-1.0, 1.0])

    def test_lotka_volterra_stays_positive(self):
        """Populations stay positive along the orbit."""
        system = get_system("lv")

        trajectory = simulate_benchmark(system, None, sample_times(system, 50))

        assert np.all(trajectory.states > 0)


class TestNoise:
    """Test seeded observation noise."""

    @pytest.fixture
    def clean(self):
        return Trajectory(np.linspace(0.0, 1.0, 20), np.zeros((20, 2)))

    def test_zero_noise_keeps_values(self, clean):
        """sigma_n = 0 returns the clean values with a zero noise scale."""
        noisy = add_noise(clean, 0.0, seed=1)

        np.testing.assert_array_equal(noisy.states, clean.states)
        np.testing.assert_array_equal(noisy.noise, [0.0, 0.0])

    def test_same_seed_same_noise(self, clean):
        """Noise is reproducible from the seed."""
        a = add_noise(clean, 0.1, seed=3)
        b = add_noise(clean, 0.1, seed=3)
        c = add_noise(clean, 0.1, seed=4)

        np.testing.assert_array_equal(a.states, b.states)
        assert not np.array_equal(a.states, c.states)

    def test_negative_noise(self, clean):
        """Negative noise levels are rejected."""
        with pytest.raises(ValueError):
            add_noise(clean, -0.1, seed=0)


class TestLifting:
    """Test the high-dimensional series generator."""

    def test_lift(self):
        """(x1, x2) -> (x1, x2, x1 x2 / 2)."""
        np.testing.assert_allclose(lift(np.array([[2.0, 3.0]])), [[2.0, 3.0, 3.0]])

    def test_lifted_series_shapes(self):
        """The clean series is the latent mapped linearly to the observed dimension."""
        times = np.linspace(0.0, 3.0, 12)

        series = lifted_series(get_system("vdp"), times, observed_dim=6, sigma_n=0.05, seed=2)

        assert series.latent.states.shape == (12, LATENT_DIM)
        assert series.noisy.states.shape == (12, 6)
        np.testing.assert_allclose(series.clean.states, series.latent.states @ series.mapping.T)
        np.testing.assert_allclose(series.noisy.noise, np.full(6, 0.05))

    def test_observed_dim_too_small(self):
        """The observed space must hold the latent."""
        with pytest.raises(ValueError):
            lifted_series(get_system("vdp"), [0.0, 1.0], observed_dim=2, sigma_n=0.0, seed=0)


class TestFieldError:
    """Test the normalised vector field error."""

    def test_exact_field_has_zero_error(self):
        """The true field against itself scores zero."""
        system = get_system("vdp")
        states = np.array([[1.0, 0.5], [-1.0, 2.0]])

        assert field_error(system, system, states) == 0.0

    def test_scaled_field(self):
        """A field off by 10% everywhere scores 0.1."""
        system = get_system("fhn")
        states = np.array([[1.0, 0.5], [-1.0, 2.0], [0.3, -0.2]])

        assert field_error(lambda x: 1.1 * system(x), system, states) == pytest.approx(0.1)

    def test_vanishing_reference(self):
        """A reference that is zero everywhere cannot normalise."""
        with pytest.raises(ValueError):
            field_error(lambda x: x, lambda x: np.zeros(2), [[1.0, 1.0]])
