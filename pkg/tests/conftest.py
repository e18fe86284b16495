"""
Fixtures compartilhadas: aplicação de teste, runner da CLI e grades pequenas
"""
import pytest

from app import create_app, db
from app.numerics.green_radial import SolverSettings, build_ball_kernel, lattice_grid


@pytest.fixture
def app(tmp_path, monkeypatch):
    # variáveis HMFLOW_* do ambiente não devem vazar para os testes
    for name in ('HMFLOW_CONFIG', 'HMFLOW_CACHE_DIR', 'HMFLOW_OUT_DIR', 'HMFLOW_LOG_LEVEL'):
        monkeypatch.delenv(name, raising=False)
    app = create_app('testing', {
        'CACHE_DIR': str(tmp_path / 'cache'),
        'OUT_DIR': str(tmp_path / 'runs'),
        'EXPERIMENT': {},
    })
    with app.app_context():
        yield app
        db.session.remove()
        db.drop_all()


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


@pytest.fixture
def write_config(tmp_path):
    """Grava um arquivo de experimento e devolve o caminho"""

    def write(text, name='experiment.toml'):
        path = tmp_path / name
        path.write_text(text, encoding='utf-8')
        return str(path)

    return write


@pytest.fixture(scope='session')
def small_settings():
    return SolverSettings(dt=2e-3)


@pytest.fixture(scope='session')
def small_ball(small_settings):
    """Bola unitária em m = 3 com 41 nós e todas as fontes"""
    grid = lattice_grid(0.0, 1.0, 1.0 / 40.0, 3)
    return build_ball_kernel(1.0, 3, grid, [0.02, 0.05, 0.1], small_settings)
