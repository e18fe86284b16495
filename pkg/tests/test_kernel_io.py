"""
Testes da persistência e do cache das tabelas de núcleo
"""
from dataclasses import replace

import numpy as np
import pytest

from app.numerics.errors import CacheMismatchError
from app.numerics.green_radial import SolverSettings, build_annulus_kernel, build_ball_kernel, lattice_grid
from app.numerics.kernel_io import KernelCache, cache_key, export_csv, read_table, table_key, write_table


@pytest.fixture(scope='module')
def annulus():
    grid = lattice_grid(0.25, 1.0, 1.0 / 32.0, 3)
    return build_annulus_kernel(0.25, 1.0, 3, grid, [0.02, 0.04], SolverSettings(dt=2e-3))


def test_write_then_read_restores_the_table(annulus, tmp_path):
    path = tmp_path / 'annulus.hmk'
    size = write_table(annulus, path)
    assert size == path.stat().st_size
    loaded = read_table(path, expected_key=table_key(annulus))
    assert loaded.domain == annulus.domain
    assert loaded.grid == annulus.grid
    np.testing.assert_array_equal(loaded.values, annulus.values)
    np.testing.assert_array_equal(loaded.flux_inner, annulus.flux_inner)
    np.testing.assert_array_equal(loaded.flux_outer, annulus.flux_outer)
    assert table_key(loaded) == table_key(annulus)


def test_read_rejects_other_key(annulus, tmp_path):
    path = tmp_path / 'annulus.hmk'
    write_table(annulus, path)
    with pytest.raises(CacheMismatchError):
        read_table(path, expected_key='0' * 64)


def test_read_rejects_other_scheme(annulus, tmp_path):
    path = tmp_path / 'old.hmk'
    write_table(replace(annulus, scheme='cn-0'), path)
    with pytest.raises(CacheMismatchError):
        read_table(path)


def test_read_rejects_truncated_file(annulus, tmp_path):
    path = tmp_path / 'cut.hmk'
    write_table(annulus, path)
    data = path.read_bytes()
    path.write_bytes(data[:-64])
    with pytest.raises(CacheMismatchError):
        read_table(path)


def test_key_depends_on_step_and_mollifier(annulus):
    base = cache_key(annulus.domain, annulus.grid, annulus.times, annulus.dt)
    assert base == table_key(annulus)
    assert cache_key(annulus.domain, annulus.grid, annulus.times, 1e-3) != base
    assert cache_key(annulus.domain, annulus.grid, annulus.times, annulus.dt, mollifier_delta=0.5) != base
    assert cache_key(annulus.domain, annulus.grid, annulus.times, annulus.dt, sources=[3, 4]) != base


def test_cache_factory_reuses_tables(tmp_path):
    cache = KernelCache(tmp_path / 'cache')
    seen = []
    build = cache.factory(on_entry=lambda table, key, path, size, hit: seen.append((key, hit)))
    grid = lattice_grid(0.0, 1.0, 1.0 / 20.0, 3)
    settings = SolverSettings(dt=5e-3)

    first = build_ball_kernel(1.0, 3, grid, [0.05], settings, factory=build)
    second = build_ball_kernel(1.0, 3, grid, [0.05], settings, factory=build)

    assert [hit for _, hit in seen] == [False, True]
    assert seen[0][0] == seen[1][0]
    np.testing.assert_array_equal(first.values, second.values)
    entries = cache.entries()
    assert len(entries) == 1
    assert entries[0]['key'] == seen[0][0]
    assert entries[0]['domain']['kind'] == 'ball'


def test_cache_ignores_corrupt_entry(tmp_path, annulus):
    cache = KernelCache(tmp_path)
    key, path, _ = cache.put(annulus)
    path.write_bytes(b'lixo\n')
    assert cache.get(key) is None


def test_export_csv_has_one_row_per_entry(annulus, tmp_path):
    path = tmp_path / 'table.csv'
    export_csv(annulus, path)
    lines = path.read_text().splitlines()
    assert lines[0] == 'r,r_prime,tau,G'
    assert len(lines) - 1 == annulus.values.size
