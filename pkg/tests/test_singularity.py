"""
Testes do classificador de singularidades removíveis
"""
import numpy as np
import pytest

from app.numerics.errors import DomainError, GridCompatibilityError
from app.numerics.green_radial import SolverSettings, build_ball_kernel, lattice_grid
from app.numerics.radial_kernel import RadialGrid
from app.numerics.singularity import (
    INCONCLUSIVE,
    REMOVABLE,
    SINGULAR,
    PuncturedSample,
    classify,
    constant,
    growth_exponent,
    heat_pulse,
    load_sample_csv,
    idempotence_defect,
    near_origin_sups,
    reconstruct,
    representation_tables,
    representation_terms,
    shifted_gaussian,
    static_fundamental,
)

SETTINGS = SolverSettings(dt=1e-3)


@pytest.fixture(scope='module')
def radii():
    return RadialGrid.graded(1.0, 48, 3, r_core=0.25, ratio=1.05, r_min=1e-3).radii


@pytest.fixture(scope='module')
def times():
    return np.linspace(0.1, 0.3, 21)


@pytest.fixture(scope='module')
def ball_table(times):
    grid = lattice_grid(0.0, 1.0, 1.0 / 64.0, 3)
    return build_ball_kernel(1.0, 3, grid, times[1:] - times[0], SETTINGS)


class TestSample:
    def test_origin_is_excluded(self, times):
        with pytest.raises(DomainError):
            constant(3, 1.0, np.linspace(0.0, 1.0, 20), times)

    def test_times_must_be_uniform(self, radii):
        with pytest.raises(DomainError):
            constant(3, 1.0, radii, [0.1, 0.2, 0.4])

    def test_shape_must_match(self, radii, times):
        with pytest.raises(DomainError):
            PuncturedSample(3, 1.0, radii, times, np.zeros((radii.size, 3)))

    def test_values_must_be_finite(self, radii, times):
        values = np.zeros((radii.size, times.size))
        values[3, 4] = np.inf
        with pytest.raises(DomainError):
            PuncturedSample(3, 1.0, radii, times, values)

    def test_offsets_and_trace(self, radii, times):
        sample = constant(3, 1.0, radii, times, value=2.0)
        np.testing.assert_allclose(sample.offsets, times[1:] - 0.1)
        assert sample.boundary_trace(0.15) == pytest.approx(2.0)

    def test_trace_needs_the_outer_radius(self, times):
        sample = constant(3, 1.0, np.linspace(0.01, 0.5, 20), times)
        with pytest.raises(DomainError):
            sample.boundary_trace(0.2)


class TestGrowth:
    def test_fundamental_solution_sits_on_the_threshold(self, radii, times):
        fit = growth_exponent(static_fundamental(3, 1.0, radii, times))
        assert fit.p == pytest.approx(1.0, abs=1e-8)
        assert fit.criterion_holds
        assert not fit.bounded

    def test_pulse_grows_like_r_to_the_minus_m(self, radii, times):
        fit = growth_exponent(heat_pulse(3, 1.0, radii, times, t_star=0.15))
        assert fit.p == pytest.approx(3.0, abs=0.05)
        assert not fit.criterion_holds

    def test_zero_sample_is_bounded(self, radii, times):
        fit = growth_exponent(constant(3, 1.0, radii, times, value=0.0))
        assert fit.p is None
        assert fit.bounded

    def test_needs_a_decade_of_radii(self, times):
        sample = constant(3, 1.0, np.linspace(0.1, 1.0, 40), times)
        with pytest.raises(DomainError):
            growth_exponent(sample)


class TestReconstruction:
    def test_returns_the_data_at_t1_and_on_the_boundary(self, radii, times, ball_table):
        sample = shifted_gaussian(3, 1.0, radii, times)
        rec = reconstruct(sample, ball_table)
        np.testing.assert_allclose(rec.values[-1], sample.values[-1])
        np.testing.assert_allclose(rec.values[:, 0], np.interp(rec.radii, sample.radii, sample.values[:, 0]))
        assert rec.as_sample(3, 1.0).r_min > 0.0

    def test_reconstruction_is_idempotent(self, radii, times, ball_table):
        """Reconstruir a reamostragem da reconstrução devolve a mesma u^"""
        sample = shifted_gaussian(3, 1.0, radii, times)
        rec = reconstruct(sample, ball_table)
        again = reconstruct(rec.as_sample(3, 1.0), ball_table)
        np.testing.assert_allclose(again.values, rec.values, rtol=0.0, atol=1e-6 * np.max(np.abs(rec.values)))
        assert idempotence_defect(sample, ball_table) <= 1e-6

    def test_idempotence_of_singular_data(self, radii, times, ball_table):
        sample = heat_pulse(3, 1.0, radii, times, t_star=0.15)
        assert idempotence_defect(sample, ball_table) <= 1e-6

    def test_table_times_must_match_offsets(self, radii, times, small_ball):
        with pytest.raises(GridCompatibilityError):
            reconstruct(shifted_gaussian(3, 1.0, radii, times), small_ball)


class TestClassify:
    def test_shifted_gaussian_is_removable(self, radii, times, ball_table):
        result = classify(shifted_gaussian(3, 1.0, radii, times), ball_table, tolerance=1e-2)
        assert result.verdict == REMOVABLE, result.to_dict()
        assert result.near_origin_bounded

    def test_pulse_is_singular(self, radii, times, ball_table):
        result = classify(heat_pulse(3, 1.0, radii, times, t_star=0.15), ball_table)
        assert result.verdict == SINGULAR
        assert result.to_dict()['growth']['p'] > 1.1
        assert not result.near_origin_bounded
        details = result.details
        assert details['near_origin_sup'] > 10.0 * details['reconstruction_near_origin_sup']

    def test_verdicts_are_exclusive(self, radii, times, ball_table):
        result = classify(static_fundamental(3, 1.0, radii, times), ball_table)
        assert result.verdict in (REMOVABLE, SINGULAR, INCONCLUSIVE)
        assert not result.near_origin_bounded

    def test_near_origin_comparison_uses_the_reconstruction(self, radii, times, ball_table):
        sample = shifted_gaussian(3, 1.0, radii, times)
        sample_sup, rec_sup = near_origin_sups(sample, reconstruct(sample, ball_table))
        assert sample_sup == pytest.approx(rec_sup, rel=0.05)
        zero = constant(3, 1.0, radii, times, value=0.0)
        assert classify(zero, ball_table).near_origin_bounded


def test_csv_sample_round_trip(tmp_path, radii, times):
    sample = shifted_gaussian(3, 1.0, radii, times)
    r, t = np.meshgrid(sample.radii, sample.times, indexing='ij')
    path = tmp_path / 'sample.csv'
    rows = np.column_stack([r.ravel(), t.ravel(), sample.values.ravel()])
    np.savetxt(path, rows, fmt='%.17g', delimiter=',', header='r,t,u', comments='')
    loaded = load_sample_csv(path, 3, 1.0)
    np.testing.assert_array_equal(loaded.radii, sample.radii)
    np.testing.assert_array_equal(loaded.values, sample.values)
    assert loaded.provenance == str(path)


def test_incomplete_csv(tmp_path, radii, times):
    path = tmp_path / 'cut.csv'
    rows = [(r, t, 1.0) for r in radii[:20] for t in times[:4]][:-1]
    np.savetxt(path, rows, delimiter=',', header='r,t,u', comments='')
    with pytest.raises(DomainError):
        load_sample_csv(path, 3, 1.0)


def test_inner_flux_term_vanishes_for_bounded_data(radii, times):
    sample = shifted_gaussian(3, 1.0, radii, times)
    tables = representation_tables(sample, [0.25, 0.125, 0.0625], 1.0 / 64.0, SETTINGS)
    terms = representation_terms(sample, tables)
    assert terms.bounded_data
    assert terms.eps == [0.25, 0.125, 0.0625]
    assert abs(terms.I2[-1]) < abs(terms.I2[0])
    report = terms.report(threshold=0.5)
    assert report.conclusive
    assert report.passed, report.details


def test_representation_eps_below_sample():
    sample = constant(3, 1.0, np.linspace(0.1, 1.0, 40), np.linspace(0.1, 0.2, 11))
    with pytest.raises(DomainError):
        representation_tables(sample, [0.05], 1.0 / 64.0, SETTINGS)
