"""
Testes do fluxo radial rho~
"""
import math

import numpy as np
import pytest

from app.numerics.duhamel_solver import SolveConfig
from app.numerics.errors import DomainError, GridCompatibilityError
from app.numerics.hmflow import (
    blowup_report,
    forced_blowup,
    linearized_response,
    manufactured_convergence,
    manufactured_forcing,
    map_eval,
    metric_report,
    monotonicity_defect,
    norm_monitor,
    residual,
    solution_gap,
    solve,
    solve_direct,
    trajectory_rows,
)
from app.numerics.metric_model import decaying_bump, euclidean
from app.numerics.radial_kernel import RadialGrid


@pytest.fixture(scope='module')
def flat_solution():
    config = SolveConfig(grid=RadialGrid.uniform_spacing(0.0, 5.0, 0.1, 5), dt=0.02)
    return solve(euclidean(n=3), 0.0, 0.2, config)


@pytest.fixture(scope='module')
def bump():
    family = decaying_bump(n=3, a0=0.05, b0=0.05)
    grid = RadialGrid.uniform_spacing(0.0, 6.0, 0.05, 5)
    return family, grid


def test_flat_metric_keeps_the_identity(flat_solution):
    assert not flat_solution.blew_up
    assert flat_solution.T0 == pytest.approx(0.2)
    assert np.max(np.abs(flat_solution.rho_tilde)) == 0.0
    np.testing.assert_allclose(flat_solution.rho[-1], flat_solution.grid.radii)
    assert monotonicity_defect(flat_solution) == pytest.approx(1.0)
    assert np.max(norm_monitor(flat_solution)['c1']) == 0.0


def test_flat_residual_vanishes(flat_solution):
    out = residual(flat_solution)
    assert out.shape == (flat_solution.times.size - 2, flat_solution.grid.size - 1)
    assert np.max(np.abs(out)) == 0.0


def test_trajectory_rows_layout(flat_solution):
    rows = trajectory_rows(flat_solution)
    assert rows.shape == (flat_solution.times.size * flat_solution.grid.size, 4)
    np.testing.assert_allclose(rows[:, 3], rows[:, 1])


def test_map_eval_of_the_identity(flat_solution):
    rho, theta = map_eval(flat_solution, [0.5, 1.0, 2.5], 0.3, 0.13)
    np.testing.assert_allclose(rho, [0.5, 1.0, 2.5])
    assert theta == pytest.approx(0.3)
    with pytest.raises(DomainError):
        map_eval(flat_solution, [6.0], 0.0, 0.1)
    with pytest.raises(DomainError):
        map_eval(flat_solution, [1.0], 0.0, 0.5)


def test_as_trajectory_shares_the_data(flat_solution):
    trajectory = flat_solution.as_trajectory()
    assert trajectory.T0 == flat_solution.T0
    np.testing.assert_array_equal(trajectory.values, flat_solution.rho_tilde)


def test_grid_dimension_must_be_n_plus_two():
    config = SolveConfig(grid=RadialGrid.uniform_spacing(0.0, 5.0, 0.1, 3), dt=0.02)
    with pytest.raises(GridCompatibilityError):
        solve(euclidean(n=3), 0.0, 0.2, config)


def test_horizon_beyond_the_metric_horizon():
    config = SolveConfig(grid=RadialGrid.uniform_spacing(0.0, 5.0, 0.1, 5), dt=0.02)
    with pytest.raises(DomainError):
        solve(euclidean(n=3), 0.0, 1.0, config)


def test_duhamel_and_direct_solvers_agree(bump):
    family, grid = bump
    duhamel = solve(family, 0.0, 0.1, SolveConfig(grid=grid, dt=0.01))
    direct = solve_direct(family, 0.0, 0.1, grid, 0.01)
    assert direct.method == 'direct'
    assert np.max(np.abs(duhamel.rho_tilde)) > 1e-4
    assert solution_gap(duhamel, direct) <= 1e-3


def test_linearized_response_is_first_order(bump):
    family, grid = bump
    config = SolveConfig(grid=grid, dt=0.01)
    full = solve(family, 0.0, 0.1, config)
    linear = linearized_response(family, 0.0, 0.1, config)
    assert linear.method == 'linearized'
    scale = np.max(np.abs(full.rho_tilde))
    assert solution_gap(full, linear) < 0.5 * scale


def test_later_start_time_uses_shifted_family(bump):
    family, grid = bump
    solution = solve_direct(family, 0.2, 0.3, grid, 0.01)
    assert solution.metric.t0 == pytest.approx(0.2)
    assert solution.times[0] == pytest.approx(0.2)


def test_manufactured_alpha_must_vanish_at_start():
    with pytest.raises(DomainError):
        manufactured_forcing(euclidean(n=3), 'cos(t)')
    mms = manufactured_forcing(euclidean(n=3), 't')
    assert mms.exact(0.0, 0.5) == pytest.approx(0.5)
    assert mms.exact_dr(1.0, 0.5) == pytest.approx(-np.exp(-1.0))


def test_manufactured_solution_converges_at_second_order():
    report = manufactured_convergence(decaying_bump(n=3), 0.0, 0.2, [(0.1, 0.02), (0.05, 0.01)])
    assert report.name == 'hmflow.manufactured.direct'
    assert report.passed, report.details
    assert report.details['errors'][1] < report.details['errors'][0]


@pytest.mark.parametrize('factory', [euclidean, decaying_bump])
def test_metric_report_passes_for_presets(factory):
    report = metric_report(factory(n=3))
    assert report.name == 'hmflow.metric_identities'
    assert report.passed


@pytest.fixture(scope='module')
def forced():
    grid = RadialGrid.uniform_spacing(0.0, 4.0, 0.1, 5)
    config = SolveConfig(grid=grid, dt=5e-3, c1_floor=10.0, norm_ceiling=50.0, dt_min=5e-3 / 1024.0)
    return forced_blowup(euclidean(n=3), 0.0, 0.5, config, 5.0)


def test_forced_source_blows_up_near_the_riccati_time(forced):
    """Fonte lam (1 + rho~^2) na métrica plana: rho~ = tan(lam t) explode em pi/(2 lam)"""
    assert forced.blew_up
    assert forced.method == 'forced'
    assert forced.reason in ('norm_ceiling', 'dt_min')
    assert forced.T0 == pytest.approx(0.5 * math.pi / 5.0, rel=0.1)
    report = blowup_report(forced, 5.0, tol=0.1)
    assert report.name == 'hmflow.forced_blowup'
    assert report.threshold == pytest.approx(math.pi / 10.0)
    assert report.details['monotone']
    assert report.passed, report.details


def test_forced_profile_stays_uniform_and_follows_tan(forced):
    peak = float(np.max(np.abs(forced.rho_tilde)))
    assert np.max(np.ptp(forced.rho_tilde, axis=1)) <= 1e-6 * (1.0 + peak * peak)
    early = forced.times <= 0.2
    np.testing.assert_allclose(forced.rho_tilde[early, 0], np.tan(5.0 * forced.times[early]), rtol=1e-2, atol=1e-6)
    c1 = norm_monitor(forced)['c1']
    assert np.all(np.diff(c1) >= 0.0)


def test_blowup_report_fails_without_blowup(flat_solution):
    report = blowup_report(flat_solution, 5.0)
    assert not report.passed
    assert report.conclusive


def test_forced_blowup_needs_positive_rate():
    config = SolveConfig(grid=RadialGrid.uniform_spacing(0.0, 4.0, 0.1, 5), dt=5e-3)
    with pytest.raises(DomainError):
        forced_blowup(euclidean(n=3), 0.0, 0.5, config, 0.0)
