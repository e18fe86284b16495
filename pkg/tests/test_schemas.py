"""
Testes do carregamento e da validação do arquivo de experimento
"""
import pytest

from app import create_app
from app.numerics.errors import ConfigError
from app.schemas import SCHEMA_VERSION, config_hash, find_line, load_experiment


def test_defaults_fill_every_section():
    snapshot = load_experiment()
    assert snapshot['schema_version'] == SCHEMA_VERSION
    assert set(snapshot) == {'schema_version', 'green', 'hmflow', 'uniqueness', 'singularity', 'oracle'}
    assert snapshot['green']['dimension'] == 5
    assert snapshot['hmflow']['family'] == 'euclidean'
    assert snapshot['uniqueness']['params'] == {'a0': 0.05, 'b0': 0.05}
    assert snapshot['singularity']['sample_csv'] is None


def test_hash_is_stable_and_sensitive():
    assert config_hash(load_experiment()) == config_hash(load_experiment())
    changed = load_experiment(overrides={'green': {'dimension': 3}})
    assert config_hash(changed) != config_hash(load_experiment())


def test_file_values_override_defaults(write_config):
    path = write_config('schema_version = 1\n\n[hmflow]\nfamily = "decaying_bump"\nhorizon = 0.25\n')
    snapshot = load_experiment(path)
    assert snapshot['hmflow']['family'] == 'decaying_bump'
    assert snapshot['hmflow']['horizon'] == 0.25
    assert snapshot['hmflow']['dt'] == 0.01


def test_overrides_win_over_the_file(write_config):
    path = write_config('schema_version = 1\n[green]\ndimension = 4\n')
    snapshot = load_experiment(path, overrides={'green': {'dimension': 3}})
    assert snapshot['green']['dimension'] == 3


def test_unknown_key_reports_section_and_line(write_config):
    path = write_config('schema_version = 1\n[hmflow]\nspacing_typo = 0.1\n')
    with pytest.raises(ConfigError) as info:
        load_experiment(path)
    assert info.value.key == 'hmflow.spacing_typo'
    assert info.value.line == 3
    assert info.value.path == path
    assert f'{path}:3' in str(info.value)


def test_unknown_section(write_config):
    path = write_config('schema_version = 1\n\n[solver]\ndt = 0.1\n')
    with pytest.raises(ConfigError) as info:
        load_experiment(path)
    assert info.value.key == 'solver'
    assert info.value.line == 3


def test_unsupported_schema_version(write_config):
    path = write_config('schema_version = 2\n')
    with pytest.raises(ConfigError) as info:
        load_experiment(path)
    assert info.value.key == 'schema_version'
    assert info.value.line == 1


def test_missing_schema_version(write_config):
    with pytest.raises(ConfigError):
        load_experiment(write_config('[green]\ndimension = 3\n'))


def test_toml_syntax_error_has_a_line(write_config):
    path = write_config('schema_version = 1\n[hmflow\nr_max = 5.0\n')
    with pytest.raises(ConfigError) as info:
        load_experiment(path)
    assert info.value.line == 2


def test_horizon_beyond_T(write_config):
    path = write_config('schema_version = 1\n[hmflow]\nn = 3\nhorizon = 2.0\n')
    with pytest.raises(ConfigError) as info:
        load_experiment(path)
    assert info.value.key == 'hmflow.horizon'
    assert info.value.line == 4


def test_invalid_family_parameter(write_config):
    path = write_config('schema_version = 1\n[hmflow]\nfamily = "decaying_bump"\nparams = { curvature = 1.0 }\n')
    with pytest.raises(ConfigError) as info:
        load_experiment(path)
    assert info.value.key == 'hmflow.params'
    assert info.value.line == 4


def test_unknown_family(write_config):
    path = write_config('schema_version = 1\n[uniqueness]\nfamily = "hyperbolic"\n')
    with pytest.raises(ConfigError) as info:
        load_experiment(path)
    assert info.value.key == 'uniqueness.family'


def test_sample_csv_must_exist(write_config, tmp_path):
    path = write_config(f'schema_version = 1\n[singularity]\nsample_csv = "{tmp_path / "missing.csv"}"\n')
    with pytest.raises(ConfigError) as info:
        load_experiment(path)
    assert info.value.key == 'singularity.sample_csv'


@pytest.mark.parametrize('text, key', [
    ('[green]\nR_wide = 0.5\n', 'green.R_wide'),
    ('[green]\neps_values = [0.3]\n', 'green.eps_values'),
    ('[green]\nrannacher_steps = 3\n', 'green.rannacher_steps'),
    ('[oracle]\ncells = 31\n', 'oracle.cells'),
    ('[oracle]\ncells = 16\ncoarse_cells = 32\n', 'oracle.coarse_cells'),
    ('[singularity]\nt_star = 0.5\n', 'singularity.t_star'),
    ('[green]\nflux_decay_R = [2.0, 4.0]\n', 'green.flux_decay_spacing'),
    ('[hmflow]\nblowup_lambda = 1.0\n', 'hmflow.blowup_horizon'),
])
def test_cross_field_rules(write_config, text, key):
    with pytest.raises(ConfigError) as info:
        load_experiment(write_config('schema_version = 1\n' + text))
    assert info.value.key == key


def test_find_line_ignores_other_sections():
    text = 'schema_version = 1\n[green]\ndt = 1e-3\n[hmflow]\n# passo\ndt = 0.01\n'
    assert find_line(text, 'hmflow', 'dt') == 6
    assert find_line(text, 'green', 'dt') == 3
    assert find_line(text, None, 'schema_version') == 1
    assert find_line(text, 'oracle', 'dt') is None


def test_experiment_overrides_from_environment(monkeypatch):
    monkeypatch.setenv('HMFLOW_EXPERIMENT__green__dimension', '3')
    app = create_app('testing')
    assert app.config['EXPERIMENT'] == {'green': {'dimension': 3}}
    with app.app_context():
        snapshot = load_experiment(overrides=app.config['EXPERIMENT'])
    assert snapshot['green']['dimension'] == 3
