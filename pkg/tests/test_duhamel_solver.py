"""
Testes do solver de Picard por janelas
"""
import math

import numpy as np
import pytest

from app.numerics.duhamel_solver import (
    SolveConfig,
    contraction_scaling,
    continue_to_blowup,
    lipschitz_estimate,
    measure_gradient_constant,
    restart_report,
    solve_window,
    uniqueness_gap,
    window_bound_report,
)
from app.numerics.errors import BoundExceeded, DomainError, NoContraction
from app.numerics.hmflow import flow_source
from app.numerics.metric_model import decaying_bump
from app.numerics.radial_kernel import RadialField, RadialGrid, gradient_kernel_constant


def constant_source(r, u, du, t):
    return np.ones_like(u)


@pytest.fixture(scope='module')
def grid():
    return RadialGrid.uniform(8.0, 80, 3)


@pytest.fixture(scope='module')
def bump_flow():
    family = decaying_bump(n=3, a0=0.05, b0=0.05)
    config = SolveConfig(grid=RadialGrid.uniform_spacing(0.0, 6.0, 0.05, 5), dt=0.01)
    return family, config


def test_config_validation(grid):
    with pytest.raises(DomainError):
        SolveConfig(grid=grid, dt=0.0)
    with pytest.raises(DomainError):
        SolveConfig(grid=grid, dt=0.02, max_iterations=1)
    with pytest.raises(DomainError):
        SolveConfig(grid=grid, dt=0.02, restart_overlap=1.0)
    assert SolveConfig(grid=grid, dt=0.02).dt_min == pytest.approx(0.02 / 64.0)


def test_constant_source_grows_linearly(grid):
    config = SolveConfig(grid=grid, dt=0.02, c1_floor=10.0)
    trajectory = continue_to_blowup(0.0, 0.2, constant_source, config)
    assert not trajectory.blew_up
    assert trajectory.T0 == pytest.approx(0.2)
    assert trajectory.times[-1] == pytest.approx(0.2)
    np.testing.assert_allclose(trajectory.values, np.repeat(trajectory.times[:, None], grid.size, axis=1), atol=1e-10)
    assert trajectory.at(0.1).values[0] == pytest.approx(0.1, abs=1e-10)
    with pytest.raises(DomainError):
        trajectory.at(0.11)


def test_windows_take_at_most_half_the_remaining_time(grid):
    config = SolveConfig(grid=grid, dt=0.02, c1_floor=10.0)
    trajectory = continue_to_blowup(0.0, 0.4, constant_source, config)
    accepted = [w for w in trajectory.windows if 'failed' not in w]
    assert len(accepted) >= 3
    assert accepted[0]['delta'] == pytest.approx(0.2)
    for window in accepted:
        remaining = 0.4 - window['start']
        assert window['delta'] <= max(0.5 * remaining, config.min_window_steps * window['dt']) + 1e-12
    assert trajectory.T0 == pytest.approx(0.4)


def test_non_finite_source_stops_at_last_stable_time(grid):
    def source(r, u, du, t):
        return np.full_like(u, 0.0 if t < 0.049 else np.nan)

    trajectory = continue_to_blowup(0.0, 0.2, source, SolveConfig(grid=grid, dt=0.01))
    assert trajectory.blew_up
    assert trajectory.reason == 'source'
    assert trajectory.T0 == pytest.approx(0.05)
    assert any(w.get('failed') == 'BlowupSignal' for w in trajectory.windows)


def test_norm_ceiling_is_reported_as_blowup(grid):
    config = SolveConfig(grid=grid, dt=0.02, c1_floor=10.0, norm_ceiling=0.1)
    trajectory = continue_to_blowup(0.0, 0.2, constant_source, config)
    assert trajectory.blew_up
    assert trajectory.reason == 'norm_ceiling'
    assert trajectory.T0 <= 0.1 + 1e-9


def test_horizon_must_be_aligned(grid):
    config = SolveConfig(grid=grid, dt=0.02)
    with pytest.raises(DomainError):
        continue_to_blowup(0.0, 0.25 + 0.005, constant_source, config)
    with pytest.raises(DomainError):
        continue_to_blowup(0.2, 0.1, constant_source, config)


def test_window_rejects_misaligned_length(grid):
    config = SolveConfig(grid=grid, dt=0.02)
    with pytest.raises(DomainError):
        solve_window(RadialField.constant(grid, 0.0), 0.03, constant_source, config)


def test_window_leaving_the_tube(grid):
    config = SolveConfig(grid=grid, dt=0.02)
    with pytest.raises(BoundExceeded) as info:
        solve_window(RadialField.constant(grid, 0.0), 0.2, lambda r, u, du, t: np.full_like(u, 100.0), config, c1=0.1)
    assert info.value.bound == pytest.approx(0.2)
    assert info.value.norm > info.value.bound


def test_window_without_budget(grid):
    config = SolveConfig(grid=grid, dt=0.02, max_iterations=2)
    with pytest.raises(NoContraction) as info:
        solve_window(RadialField.constant(grid, 0.0), 0.2, lambda r, u, du, t: u + 1.0, config, c1=10.0)
    assert info.value.iterations == 2


def test_window_records_its_constants(grid):
    config = SolveConfig(grid=grid, dt=0.02)
    initial = RadialField.from_function(grid, lambda r: np.exp(-r * r))
    window = solve_window(initial, 0.1, lambda r, u, du, t: u, config)
    record = window.record()
    assert record['bound'] == pytest.approx(2.0 * initial.c1_norm())
    assert record['final_gap'] < config.cauchy_tol
    assert window.c5_prime == pytest.approx(gradient_kernel_constant(3))
    assert 0.0 < window.ratio < 1.0


def test_perturbed_first_guess_converges_to_the_same_solution(bump_flow):
    family, config = bump_flow
    F = flow_source(family)
    reference = continue_to_blowup(0.0, 0.1, F, config)
    perturbed = continue_to_blowup(0.0, 0.1, F, SolveConfig(grid=config.grid, dt=config.dt, perturbation=1e-3, seed=7))
    result = uniqueness_gap(reference, perturbed, tol=1e-6)
    assert result.verdict == 'PASS'
    assert result.report().passed
    assert np.all(np.diff(result.E) >= 0.0)


def test_uniqueness_across_grids_is_only_reported(bump_flow):
    family, config = bump_flow
    F = flow_source(family)
    reference = continue_to_blowup(0.0, 0.1, F, config)
    other = continue_to_blowup(0.0, 0.1, F, SolveConfig(grid=RadialGrid.uniform_spacing(0.0, 6.0, 0.075, 5), dt=0.01))
    report = uniqueness_gap(reference, other).report()
    assert not report.conclusive
    assert report.details['verdict'] == 'reported'


def test_restart_from_interior_time_agrees(bump_flow):
    family, config = bump_flow
    overlapped = SolveConfig(grid=config.grid, dt=config.dt, restart_overlap=0.5)
    trajectory = continue_to_blowup(0.0, 0.1, flow_source(family), overlapped)
    report = restart_report(trajectory)
    assert report.conclusive
    assert report.passed, report.value
    assert window_bound_report(trajectory).passed


def test_contraction_improves_on_shorter_windows(grid):
    config = SolveConfig(grid=grid, dt=0.025)
    initial = RadialField.from_function(grid, lambda r: np.exp(-r * r))
    report = contraction_scaling(lambda r, u, du, t: u, config, [0.4, 0.1], initial=initial)
    assert report.conclusive
    assert report.passed, report.details
    assert report.details['ratios'][1] < report.details['ratios'][0]


def test_gradient_constant_bound(grid):
    report = measure_gradient_constant(grid, [0.4, 0.1], np.exp(-grid.radii ** 2), steps=8)
    assert report.passed
    assert report.threshold == pytest.approx(4.0 / math.sqrt(math.pi))


def test_lipschitz_estimate_of_linear_source(grid):
    trajectory = continue_to_blowup(0.0, 0.2, constant_source, SolveConfig(grid=grid, dt=0.02, c1_floor=10.0))
    report = lipschitz_estimate(lambda r, u, du, t: u, trajectory, samples=16)
    assert report.passed
    assert 0.0 < report.value <= 1.0
