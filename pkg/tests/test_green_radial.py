"""
Testes das tabelas de Green na bola, no anel e no exterior
"""
import math
from dataclasses import replace

import numpy as np
import pytest

from app.numerics.errors import DomainError, GridCompatibilityError, TruncationError
from app.numerics.green_radial import (
    DomainSpec,
    Mollifier,
    SolverSettings,
    boundary_defect,
    build_annulus_kernel,
    build_ball_kernel,
    build_exterior_kernel,
    build_table,
    comparison_chain,
    conservation_defect,
    exterior_comparison,
    exterior_truncation_report,
    fit_envelopes,
    fit_gaussian_envelope,
    flux,
    flux_decay_exponent,
    free_kernel_block,
    gaussian_factor_sanity,
    lattice_grid,
    mollifier_limit,
    mollifier_monotonicity,
    smooth_step,
    symmetry_defect,
    table_checks,
    verify_epsilon_limit,
    verify_scaling,
)
from app.numerics.radial_kernel import RadialGrid


class TestDomainSpec:
    def test_annulus_needs_inner_radius_below_R(self):
        with pytest.raises(DomainError):
            DomainSpec.annulus(1.0, 1.0, 3)

    def test_exterior_needs_far_truncation(self):
        with pytest.raises(DomainError):
            DomainSpec.exterior(5.0, 3)

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            DomainSpec('slab', 3, 1.0)

    def test_boundary_distance(self):
        annulus = DomainSpec.annulus(0.2, 1.0, 3)
        np.testing.assert_allclose(annulus.boundary_distance([0.3, 0.9]), [0.1, 0.1])
        assert DomainSpec.exterior(10.0, 3).boundary_distance(3.0) == pytest.approx(2.0)


def test_smooth_step_profile():
    s = np.array([0.0, 0.5, 0.75, 1.0, 2.0])
    values = smooth_step(s)
    assert values[0] == 0.0 and values[1] == 0.0
    assert values[2] == pytest.approx(0.5)
    assert values[3] == 1.0 and values[4] == 1.0
    assert np.all(np.diff(smooth_step(np.linspace(0.0, 1.5, 200))) >= 0.0)


def test_mollifier_delta_range():
    with pytest.raises(DomainError):
        Mollifier(0.0)
    with pytest.raises(DomainError):
        Mollifier(1.5)


def test_solver_settings_validation():
    with pytest.raises(DomainError):
        SolverSettings(dt=0.0)
    with pytest.raises(DomainError):
        SolverSettings(dt=1e-3, rannacher_steps=3)


def test_lattice_grid_requires_lattice_endpoints():
    with pytest.raises(GridCompatibilityError):
        lattice_grid(0.11, 1.0, 0.05, 3)
    grid = lattice_grid(0.1, 1.0, 0.05, 3)
    assert grid.size == 19


def test_grid_must_match_domain():
    settings = SolverSettings(dt=1e-3)
    with pytest.raises(GridCompatibilityError):
        build_ball_kernel(1.0, 3, lattice_grid(0.0, 0.9, 0.05, 3), [0.01], settings)
    with pytest.raises(GridCompatibilityError):
        build_ball_kernel(1.0, 4, lattice_grid(0.0, 1.0, 0.05, 3), [0.01], settings)


def test_annulus_needs_cells_below_eps():
    # eps = 0.1 com passo 0.05: só duas células entre a origem e a esfera interna
    with pytest.raises(DomainError):
        build_annulus_kernel(0.1, 1.0, 3, lattice_grid(0.1, 1.0, 0.05, 3), [0.01], SolverSettings(dt=1e-3))


def test_times_must_be_multiples_of_dt():
    with pytest.raises(DomainError):
        build_ball_kernel(1.0, 3, lattice_grid(0.0, 1.0, 0.05, 3), [0.0125], SolverSettings(dt=1e-2))


class TestBallTable:
    def test_layout(self, small_ball):
        assert small_ball.values.shape == (41, 41, 3)
        assert small_ball.has_all_sources
        assert small_ball.flux_inner is None
        assert small_ball.flux_outer.shape == (41, 51)

    def test_dirichlet_rows_vanish(self, small_ball):
        assert boundary_defect(small_ball) == 0.0

    def test_close_to_symmetric(self, small_ball):
        assert symmetry_defect(small_ball) <= 2e-2

    def test_mass_stays_below_one_and_decreases(self, small_ball):
        excess, increase = conservation_defect(small_ball)
        assert excess <= 1e-3
        assert increase <= 1e-3

    def test_dominated_by_free_kernel(self, small_ball):
        kernel = free_kernel_block(3, small_ball.grid.radii, small_ball.source_radii, small_ball.times)
        assert np.max(small_ball.values - kernel) <= 1e-2 * np.max(kernel)
        assert gaussian_factor_sanity(small_ball).passed

    def test_outward_flux_is_nonnegative(self, small_ball):
        outer = flux(small_ball, 'outer')
        assert np.min(outer) >= -1e-2 * np.max(outer)
        with pytest.raises(DomainError):
            flux(small_ball, 'inner')

    def test_report_names(self, small_ball):
        names = [r.name for r in table_checks(small_ball, SolverSettings(dt=2e-3), label='green.ball')]
        assert names == [
            'green.ball.symmetry', 'green.ball.nonnegativity', 'green.ball.flux_sign',
            'green.ball.dirichlet_rows', 'green.ball.conservation',
        ]

    def test_time_and_source_lookup(self, small_ball):
        assert small_ball.time_index(0.05) == 1
        with pytest.raises(DomainError):
            small_ball.time_index(0.07)
        assert small_ball.source_column(0.5) == 20


def test_threads_do_not_change_the_table(small_ball):
    threaded = build_ball_kernel(
        1.0, 3, small_ball.grid, small_ball.times, SolverSettings(dt=2e-3, threads=3),
    )
    np.testing.assert_allclose(threaded.values, small_ball.values, rtol=0.0, atol=1e-12 * small_ball.peak)


def test_comparison_chain(small_ball):
    settings = SolverSettings(dt=2e-3)
    spacing = 1.0 / 40.0
    wide_grid = lattice_grid(0.0, 2.0, spacing, 3)
    wide = build_ball_kernel(2.0, 3, wide_grid, small_ball.times, settings,
                             sources=np.nonzero(wide_grid.radii <= 1.0 + 1e-12)[0])
    annulus = build_annulus_kernel(0.2, 1.0, 3, lattice_grid(0.2, 1.0, spacing, 3), small_ball.times, settings)
    report = comparison_chain(annulus, small_ball, wide, tol=1e-2)
    assert report.passed, report.details
    assert flux(annulus, 'inner').shape == flux(annulus, 'outer').shape


def test_mollifier_is_inactive_before_half_delta():
    settings = SolverSettings(dt=2e-3)
    grid = lattice_grid(0.0, 1.0, 1.0 / 20.0, 3)
    times = [0.02, 0.1]
    tables = {
        delta: build_ball_kernel(1.0, 3, grid, times, settings, mollifier=Mollifier(delta))
        for delta in (1.0, 0.5)
    }
    exact = build_ball_kernel(1.0, 3, grid, times, settings)
    kernel = free_kernel_block(3, grid.radii, grid.radii, times)
    for table in tables.values():
        np.testing.assert_allclose(table.values, kernel, rtol=0.0, atol=1e-13 * np.max(kernel))
    report = mollifier_monotonicity(tables, exact, tol=1e-2)
    assert report.passed, report.details


def _mollified_family(builder, geometry, grid, times, deltas, settings):
    sources = np.nonzero((grid.radii >= 0.25 - 1e-12) & (grid.radii <= 0.75 + 1e-12))[0]
    tables = {
        delta: builder(*geometry, grid, times, settings, mollifier=Mollifier(delta), sources=sources)
        for delta in deltas
    }
    return tables, builder(*geometry, grid, times, settings)


def test_mollifier_order_after_the_ramp_starts():
    """Com tau > delta/2 as tabelas mollificadas se afastam da exata e seguem ordenadas"""
    grid = lattice_grid(0.0, 1.0, 1.0 / 20.0, 3)
    tables, exact = _mollified_family(build_ball_kernel, (1.0, 3), grid, [0.2, 0.4], (0.5, 0.25, 0.125),
                                      SolverSettings(dt=2e-3))
    for delta in (0.5, 0.25):
        table = tables[delta]
        a = table.values[:, :, -1]
        b = exact.values[:, table.sources, -1]
        assert np.max(a - b) > 0.05 * exact.peak, delta
    report = mollifier_monotonicity(tables, exact, tol=1e-2)
    assert report.passed, report.details
    assert report.name == 'green.mollifier_monotonicity'


def test_mollifier_limit_gaps_shrink_with_delta():
    grid = lattice_grid(0.0, 1.0, 1.0 / 20.0, 3)
    tables, exact = _mollified_family(build_ball_kernel, (1.0, 3), grid, [0.2, 0.4], (0.5, 0.25, 0.125),
                                      SolverSettings(dt=2e-3))
    report = mollifier_limit(tables, exact, min_tau=0.3, tol=1.0)
    assert report.details['deltas'] == [0.5, 0.25, 0.125]
    assert report.details['decreasing'], report.details
    assert report.details['gaps'][-1] < report.details['gaps'][0]
    assert report.passed


def test_mollifier_limit_needs_late_times():
    grid = lattice_grid(0.0, 1.0, 1.0 / 20.0, 3)
    tables, exact = _mollified_family(build_ball_kernel, (1.0, 3), grid, [0.1], (0.5,), SolverSettings(dt=2e-3))
    with pytest.raises(DomainError):
        mollifier_limit(tables, exact, min_tau=0.3)


def test_annulus_mollifier_family():
    grid = lattice_grid(0.2, 1.0, 1.0 / 20.0, 3)
    tables, exact = _mollified_family(build_annulus_kernel, (0.2, 1.0, 3), grid, [0.2, 0.4], (0.5, 0.25, 0.125),
                                      SolverSettings(dt=2e-3))
    assert np.max(tables[0.5].values[:, :, -1] - exact.values[:, tables[0.5].sources, -1]) > 1e-3 * exact.peak
    order = mollifier_monotonicity(tables, exact, tol=1e-2, label='green.annulus')
    assert order.name == 'green.annulus.mollifier_monotonicity'
    assert order.passed, order.details
    limit = mollifier_limit(tables, exact, min_tau=0.3, tol=1.0, label='green.annulus')
    assert limit.name == 'green.annulus.mollifier_limit'
    assert limit.details['decreasing'], limit.details


def test_scaling_between_annuli_is_exact():
    report = verify_scaling(0.5, 2.0, 3, 1.0 / 16.0, 1e-2, [0.05, 0.1])
    assert report.passed
    assert report.value <= 1e-8


def test_epsilon_limit_in_three_dimensions():
    report = verify_epsilon_limit([0.2, 0.1, 0.05], 1.0, 3, 1.0 / 80.0, 1e-3, [0.05, 0.1])
    assert report.details['decreasing']
    assert report.passed, report.details


def test_epsilon_sweep_must_stay_inside_the_core():
    with pytest.raises(DomainError):
        verify_epsilon_limit([0.3, 0.1], 1.0, 3, 1.0 / 40.0, 1e-3, [0.05])


def test_exterior_truncation_is_checked_by_doubling():
    settings = SolverSettings(dt=1e-2)
    table = build_exterior_kernel(10.0, 3, 0.25, [0.1, 0.25], settings)
    assert table.flux_outer is None
    assert table.diagnostics['truncation_change'] < 1e-6
    assert np.all(table.source_radii <= 5.0 + 1e-12)


def test_exterior_truncation_failure():
    with pytest.raises(TruncationError):
        build_exterior_kernel(10.0, 3, 0.25, [4.0], SolverSettings(dt=5e-2))


def test_exterior_truncation_report_passes_when_doubling_agrees():
    table = build_exterior_kernel(10.0, 3, 0.25, [0.1, 0.25], SolverSettings(dt=1e-2))
    report = exterior_truncation_report(table)
    assert report.passed
    assert report.conclusive
    assert report.threshold == 1e-6
    assert not exterior_truncation_report(table, tol=0.0).passed


def test_exterior_truncation_report_without_measurement():
    table = build_exterior_kernel(10.0, 3, 0.25, [0.1], SolverSettings(dt=1e-2), check_truncation=False)
    report = exterior_truncation_report(table)
    assert not report.passed
    assert not report.conclusive
    assert report.value == math.inf


def test_exterior_kernels_increase_with_truncation_radius():
    settings = SolverSettings(dt=1e-2)
    times = [0.1, 0.25]
    near = build_exterior_kernel(10.0, 3, 0.25, times, settings, check_truncation=False)
    far = build_exterior_kernel(20.0, 3, 0.25, times, settings, source_radii=near.source_radii,
                                check_truncation=False)
    report = exterior_comparison([far, near], tol=1e-6)
    assert report.passed, report.details
    assert report.details['R_far'] == [10.0, 20.0]
    assert '10<=20' in report.details

    shrunk = replace(far, values=0.5 * far.values)
    assert not exterior_comparison([near, shrunk], tol=1e-6).passed


def test_exterior_comparison_rejects_other_domains(small_ball):
    with pytest.raises(DomainError):
        exterior_comparison([small_ball, small_ball])


def test_exterior_kernel_envelope_uses_distance_to_unit_sphere():
    table = build_exterior_kernel(10.0, 3, 0.25, [0.1, 0.25], SolverSettings(dt=1e-2), check_truncation=False)
    report = fit_envelopes([table], kind='kernel', tol=0.15, label='kernel.exterior')
    assert report.name == 'green.envelope.kernel.exterior'
    assert report.conclusive
    assert report.passed == (report.value <= 0.15)
    assert report.details['fits'][0]['domain']['kind'] == 'exterior'
    assert np.isfinite(report.value)


def test_kernel_envelope_is_a_pass_fail_check(small_ball):
    """O envelope do núcleo na bola decide: forma exata passa, ruído falha"""
    r = small_ball.grid.radii[:, None, None]
    rp = small_ball.source_radii[None, :, None]
    tau = small_ball.times[None, None, :]
    exact_form = 2.0 * (1.0 - rp) * tau ** -2.0 * np.exp(-0.3 * (r - rp) ** 2 / tau)
    clean = replace(small_ball, values=np.broadcast_to(exact_form, small_ball.values.shape).copy())
    report = fit_envelopes([clean], kind='kernel', tol=0.15, label='kernel.ball')
    assert report.conclusive
    assert report.passed
    assert report.details['fits'][0]['fit']['c'] == pytest.approx(0.3, rel=1e-6)

    rng = np.random.default_rng(7)
    noisy = replace(clean, values=clean.values * np.exp(rng.normal(0.0, 3.0, clean.values.shape)))
    report = fit_envelopes([noisy], kind='kernel', tol=0.15, label='kernel.ball')
    assert report.conclusive
    assert not report.passed

    real = fit_envelopes([small_ball], kind='kernel', tol=0.15, label='kernel.ball')
    assert real.conclusive
    assert real.passed == (real.value <= 0.15)


def test_flux_decay_on_fixed_physical_grid():
    report = flux_decay_exponent([2.0, 4.0, 8.0], 3, spacing=0.125, dt=0.02)
    assert report.threshold == pytest.approx(-2.0)
    assert report.passed, report.details
    assert report.value == pytest.approx(-2.0, rel=0.1)
    peaks = report.details['peaks']
    assert peaks[0] > peaks[1] > peaks[2]


def test_flux_decay_prediction_follows_the_source_radius():
    report = flux_decay_exponent([2.0, 4.0], 3, spacing=0.125, dt=0.02, source_r=0.5, tol=1.0)
    predicted = (2 * math.log(2.0) - 4 * math.log(3.5 / 1.5)) / math.log(2.0)
    assert report.threshold == pytest.approx(predicted)
    assert report.details['source_r'] == 0.5


def test_flux_decay_needs_radii_beyond_the_source():
    with pytest.raises(DomainError):
        flux_decay_exponent([2.0], 3, spacing=0.125)


def test_envelope_fit_recovers_parameters():
    rng = np.random.default_rng(3)
    tau = rng.uniform(0.01, 0.5, 200)
    d = rng.uniform(0.05, 1.0, 200)
    y = 2.5 * tau ** -2.0 * np.exp(-0.2 * d * d / tau)
    fit = fit_gaussian_envelope(tau, d, y, 3)
    assert fit.C == pytest.approx(2.5, rel=1e-8)
    assert fit.c == pytest.approx(0.2, rel=1e-8)
    assert fit.residual <= 1e-8
    assert fit.C_bound >= fit.C * (1.0 - 1e-12)


def test_envelope_needs_points():
    with pytest.raises(DomainError):
        fit_gaussian_envelope([0.1, 0.2], [0.1, 0.1], [1.0, 1.0], 3)


def test_build_table_source_subset_matches_full_table(small_ball):
    sources = [5, 20, 30]
    subset = build_table(DomainSpec.ball(1.0, 3), small_ball.grid, small_ball.times,
                         SolverSettings(dt=2e-3), sources=sources)
    np.testing.assert_allclose(subset.values, small_ball.values[:, sources], rtol=0.0, atol=1e-12 * small_ball.peak)
    np.testing.assert_allclose(subset.flux_outer, small_ball.flux_outer[sources], rtol=0.0, atol=1e-9 * np.max(np.abs(small_ball.flux_outer)))


def test_source_index_outside_grid():
    grid = RadialGrid.uniform(1.0, 20, 3)
    with pytest.raises(DomainError):
        build_table(DomainSpec.ball(1.0, 3), grid, [0.01], SolverSettings(dt=1e-3), sources=[50])


def test_gaussian_envelope_constant_is_at_most_one(small_ball):
    report = gaussian_factor_sanity(small_ball)
    assert report.value <= 1.0 + 1e-12
    assert math.isfinite(report.value)
