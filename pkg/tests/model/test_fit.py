# ABOUTME: Tests for MAP fitting: initialisation, seeded restarts, the reducer and the fitted model
# ABOUTME: Uses a tiny damped-spiral dataset with few restarts and iterations

import numpy as np
import pytest

from odefield.bench.systems import add_noise, get_system, sample_times, simulate_benchmark
from odefield.gp.field import GridSpec, eval_field, make_grid
from odefield.model.fit import (
    FitConfig,
    FitFailedError,
    RestartResult,
    empirical_derivatives,
    finish_fit,
    fit,
    init_inducing,
    initial_noise,
    initial_params,
    plan_fit,
    restart_start,
    run_restart,
    select_best,
)
from odefield.model.params import Dataset
from odefield.model.posterior import log_posterior
from odefield.optim.lbfgs import OptimConfig


@pytest.fixture
def fast_cfg():
    return FitConfig(restarts=3, grid_size=3, optim=OptimConfig(max_iterations=25), seed=7)


def result(index, value):
    vector = None if value is None else np.zeros(2)
    return RestartResult(index, vector, -np.inf if value is None else value, 0.0, "converged-gradient")


class TestInitialisation:
    """Test the starting point of the optimisation."""

    def test_initial_noise_is_tenth_of_std(self, spiral_data):
        """Without an explicit value the noise starts at 10% of each dimension's spread."""
        expected = 0.1 * np.std(spiral_data.stacked_states(), axis=0)

        np.testing.assert_allclose(initial_noise(spiral_data, FitConfig()), expected)

    def test_explicit_initial_noise(self, spiral_data):
        """Configured noise is used as given."""
        np.testing.assert_array_equal(initial_noise(spiral_data, FitConfig(initial_noise=(0.3, 0.4))), [0.3, 0.4])

    def test_empirical_derivatives(self, spiral_data):
        """One divided difference per consecutive pair, paired with the later state."""
        points, slopes = empirical_derivatives(spiral_data)
        first = spiral_data.series[0]

        assert points.shape == slopes.shape == (spiral_data.n_points - 2, 2)
        np.testing.assert_array_equal(points[0], first.states[1])
        expected = (first.states[1] - first.states[0]) / (first.times[1] - first.times[0])
        np.testing.assert_allclose(slopes[0], expected)

    def test_init_inducing_picks_best_scale(self, spiral_data, spiral_locations, spiral_params):
        """The chosen scale maximises the log posterior among the candidates."""
        scales = (0.5, 1.0, 2.0)

        u_tilde, scale = init_inducing(spiral_data, spiral_locations, spiral_params, scales=scales)

        assert scale in scales
        chosen = log_posterior(spiral_params.replace(u_tilde=u_tilde), spiral_data, spiral_locations)
        for other in scales:
            candidate, _ = init_inducing(spiral_data, spiral_locations, spiral_params, scales=(other,))
            assert chosen >= log_posterior(spiral_params.replace(u_tilde=candidate), spiral_data, spiral_locations)

    def test_initial_field_follows_van_der_pol_orbit(self):
        """The initial field points along the observed motion for at least 80% of the samples."""
        system = get_system("vdp")
        clean = simulate_benchmark(system, None, sample_times(system, 25))
        data = Dataset.of(add_noise(clean, 0.1, seed=4))
        cfg = FitConfig()
        locations = make_grid(cfg.grid_for(data))

        params, _ = initial_params(data, locations, cfg)

        field = params.inducing(locations)
        points, slopes = empirical_derivatives(data)
        predicted = np.array([eval_field(x, field) for x in points])
        norms = np.linalg.norm(predicted, axis=1) * np.linalg.norm(slopes, axis=1)
        cosine = np.sum(predicted * slopes, axis=1) / norms
        assert np.mean(cosine > 0) >= 0.8

    def test_plan_uses_data_grid(self, spiral_data, fast_cfg):
        """The default grid covers the data with the configured size."""
        plan = plan_fit(spiral_data, None, fast_cfg)

        assert plan.locations.shape == (9, 2)
        assert len(plan.jobs) == 3
        assert plan.init_scale in fast_cfg.scale_candidates

    def test_plan_rejects_grid_dimension(self, spiral_data, fast_cfg):
        """The grid must match the data dimension."""
        grid = GridSpec(lower=(0.0,), upper=(1.0,), counts=(3,))

        with pytest.raises(ValueError):
            plan_fit(spiral_data, grid, fast_cfg)


class TestRestarts:
    """Test restart seeding and the reducer."""

    def test_restart_start_is_seeded(self, spiral_data, fast_cfg):
        """The same (seed, index) always gives the same start; only U~ moves."""
        plan = plan_fit(spiral_data, None, fast_cfg)
        job = plan.jobs[1]
        layout = job.layout

        a, b = restart_start(job), restart_start(job)

        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(a[layout.x0], job.start[layout.x0])
        np.testing.assert_array_equal(a[layout.log_omega], job.start[layout.log_omega])
        assert not np.array_equal(a[layout.u_tilde], job.start[layout.u_tilde])
        assert not np.array_equal(restart_start(plan.jobs[0]), a)

    def test_zero_perturbation(self, spiral_data):
        """With no perturbation every restart starts at the initial parameters."""
        plan = plan_fit(spiral_data, None, FitConfig(restarts=2, grid_size=3, perturbation_scale=0.0))

        np.testing.assert_array_equal(restart_start(plan.jobs[0]), restart_start(plan.jobs[1]))

    def test_run_restart_improves(self, spiral_data, fast_cfg):
        """An ascent ends at least as high as it started."""
        plan = plan_fit(spiral_data, None, fast_cfg)

        outcome = run_restart(plan.jobs[0])

        assert not outcome.failed
        assert outcome.value >= outcome.initial_value - 1e-6 * abs(outcome.initial_value)

    def test_select_best_prefers_highest_value(self):
        """The highest value wins."""
        best = select_best([result(0, -5.0), result(1, -1.0), result(2, -3.0)])

        assert best.index == 1

    def test_select_best_ties_to_lowest_index(self):
        """Equal values go to the lowest restart index, whatever the input order."""
        best = select_best([result(2, -1.0), result(1, -1.0), result(3, -2.0)])

        assert best.index == 1

    def test_select_best_skips_failures(self):
        """Failed restarts never win; all failed gives None."""
        assert select_best([result(0, None), result(1, -9.0)]).index == 1
        assert select_best([result(0, None), result(1, None)]) is None

    def test_all_failed_raises_with_diagnostics(self, spiral_data, fast_cfg):
        """finish_fit reports every failed restart."""
        plan = plan_fit(spiral_data, None, fast_cfg)

        with pytest.raises(FitFailedError) as info:
            finish_fit(plan, [result(i, None) for i in range(3)])

        assert info.value.diagnostics.failures == 3
        assert info.value.diagnostics.best_index is None
        assert all(r.value is None for r in info.value.diagnostics.restarts)


class TestFit:
    """Test the complete fit."""

    def test_fit_produces_model(self, spiral_data, fast_cfg):
        """The fitted model carries diagnostics and reproduces the data roughly."""
        calls = []

        model = fit(spiral_data, None, fast_cfg, on_restart=calls.append)

        assert len(calls) == 3
        diagnostics = model.diagnostics
        assert len(diagnostics.restarts) == 3
        assert diagnostics.best_index in (0, 1, 2)
        best_value = diagnostics.restarts[diagnostics.best_index].value
        assert best_value == max(v for v in diagnostics.values if v is not None)
        assert model.log_posterior(spiral_data) == pytest.approx(best_value, rel=1e-9)
        assert set(diagnostics.terms) >= {"prior", "misfit", "total"}
        np.testing.assert_array_equal(model.time_origins, [0.0, 0.5])

        fitted = model.fitted_trajectories(spiral_data)
        assert [f.size for f in fitted] == [8, 6]

    def test_fit_is_reproducible(self, spiral_data, fast_cfg):
        """Two fits with the same seed give bit-identical parameters."""
        a = fit(spiral_data, None, fast_cfg)
        b = fit(spiral_data, None, fast_cfg)

        np.testing.assert_array_equal(a.params.u_tilde, b.params.u_tilde)
        np.testing.assert_array_equal(a.params.x0, b.params.x0)
        assert a.params.log_sigma_f == b.params.log_sigma_f

    def test_fitted_field_is_callable(self, spiral_data, fast_cfg):
        """The learned vector field evaluates at any state."""
        model = fit(spiral_data, None, fast_cfg)

        value = model.vector_field(np.array([0.2, 0.1]))

        assert value.shape == (2,)
        assert np.all(np.isfinite(value))
