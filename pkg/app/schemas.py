"""
Schemas do arquivo de experimento

O arquivo é TOML com `schema_version` e uma tabela por subcomando. Cada
seção é validada pelo seu schema (chaves desconhecidas são rejeitadas) e
os valores ausentes recebem os defaults abaixo. Camadas, a última vence:
defaults -> arquivo -> EXPERIMENT da configuração (variáveis HMFLOW_...).
"""
import copy
import hashlib
import json
import math
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

from marshmallow import RAISE, Schema, ValidationError, fields, validate, validates_schema

from app.numerics.errors import ConfigError, DomainError
from app.numerics.metric_model import PRESETS, metric_family

SCHEMA_VERSION = 1

positive = validate.Range(min=0.0, min_inclusive=False)
fraction = validate.Range(min=0.0, max=1.0)


class StrictSchema(Schema):
    class Meta:
        unknown = RAISE


def _positive_list(default, **kwargs):
    return fields.List(fields.Float(validate=positive), load_default=default, validate=validate.Length(min=1), **kwargs)


def _family_or_error(data):
    try:
        return metric_family(data['family'], **{**data['params'], 'n': data['n']})
    except DomainError as e:
        raise ValidationError(str(e), 'params') from None


class GreenSchema(StrictSchema):
    """Parâmetros de green-verify"""
    dimension = fields.Integer(load_default=5, validate=validate.Range(min=3, max=9))
    R = fields.Float(load_default=1.0, validate=positive)
    R_wide = fields.Float(load_default=2.0, validate=positive)
    spacing = fields.Float(load_default=1.0 / 640.0, validate=positive)
    dt = fields.Float(load_default=1e-4, validate=positive)
    rannacher_steps = fields.Integer(load_default=2, validate=validate.Range(min=0))
    times = _positive_list([0.05, 0.1, 0.2])
    chain_eps = fields.Float(load_default=0.1, validate=positive)
    eps_values = _positive_list([0.2, 0.1, 0.05, 0.025])
    mollifier_deltas = fields.List(fields.Float(validate=validate.Range(min=0.0, max=1.0, min_inclusive=False)),
                                   load_default=[1.0, 0.5, 0.25, 0.125])
    mollifier_limit_deltas = fields.List(fields.Float(validate=validate.Range(min=0.0, max=1.0, min_inclusive=False)),
                                         load_default=[0.0625, 0.03125, 0.015625])
    mollifier_min_tau = fields.Float(load_default=0.05, validate=positive)
    scaling_eps = fields.Float(load_default=0.5, validate=positive)
    scaling_R = fields.Float(load_default=2.0, validate=positive)
    scaling_dimension = fields.Integer(load_default=3, validate=validate.Range(min=3, max=9))
    scaling_spacing = fields.Float(load_default=1.0 / 128.0, validate=positive)
    exterior_R_far = fields.Float(load_default=10.0, validate=validate.Range(min=10.0))
    exterior_spacing = fields.Float(load_default=0.05, validate=positive)
    flux_decay_R = _positive_list([4.0, 8.0, 16.0])
    flux_decay_spacing = fields.Float(load_default=0.25, validate=positive)
    flux_decay_dt = fields.Float(load_default=0.02, validate=positive)
    tol_discrete = fields.Float(load_default=1e-6, validate=positive)
    tol_sym = fields.Float(load_default=1e-5, validate=positive)
    chain_tol = fields.Float(load_default=1e-6, validate=positive)
    mollifier_tol = fields.Float(load_default=1e-4, validate=positive)
    scaling_tol = fields.Float(load_default=1e-3, validate=positive)
    envelope_tol = fields.Float(load_default=0.15, validate=positive)
    export_csv = fields.Boolean(load_default=False)

    @validates_schema
    def check_geometry(self, data, **kwargs):
        if data['R_wide'] <= data['R']:
            raise ValidationError('deve ser maior que R', 'R_wide')
        if max(data['eps_values']) >= 0.25 * data['R']:
            raise ValidationError('todos os eps devem ser menores que R/4', 'eps_values')
        if not 0.0 < data['chain_eps'] < data['R']:
            raise ValidationError('deve estar em (0, R)', 'chain_eps')
        if data['rannacher_steps'] % 2:
            raise ValidationError('deve ser par (meios passos)', 'rannacher_steps')
        if not data['scaling_eps'] < data['scaling_R']:
            raise ValidationError('deve ser menor que scaling_R', 'scaling_eps')
        if min(data['flux_decay_R']) < 16 * data['flux_decay_spacing']:
            raise ValidationError('o menor R precisa de ao menos 16 células', 'flux_decay_spacing')


class HmflowSchema(StrictSchema):
    """Parâmetros de hmflow-run"""
    family = fields.String(load_default='euclidean', validate=validate.OneOf(sorted(PRESETS)))
    params = fields.Dict(keys=fields.String(), values=fields.Float(), load_default=dict)
    n = fields.Integer(load_default=3, validate=validate.Range(min=3))
    t0 = fields.Float(load_default=0.0, validate=validate.Range(min=0.0))
    horizon = fields.Float(load_default=0.5, validate=positive)
    r_max = fields.Float(load_default=20.0, validate=positive)
    spacing = fields.Float(load_default=0.05, validate=positive)
    dt = fields.Float(load_default=0.01, validate=positive)
    cauchy_tol = fields.Float(load_default=1e-8, validate=positive)
    max_iterations = fields.Integer(load_default=40, validate=validate.Range(min=2))
    safety = fields.Float(load_default=2.0, validate=validate.Range(min=1.0))
    c1_floor = fields.Float(load_default=0.1, validate=positive)
    norm_ceiling = fields.Float(load_default=1e6, validate=positive)
    min_window_steps = fields.Integer(load_default=2, validate=validate.Range(min=1))
    max_window = fields.Float(load_default=1.0, validate=positive)
    zero_tol = fields.Float(load_default=1e-8, validate=positive)
    direct_check = fields.Boolean(load_default=True)
    lift_tol = fields.Float(load_default=1e-4, validate=positive)
    linearized_tol = fields.Float(load_default=0.1, validate=positive)
    mms = fields.Boolean(load_default=True)
    mms_levels = fields.List(fields.List(fields.Float(validate=positive), validate=validate.Length(equal=2)),
                             load_default=[[0.1, 0.02], [0.05, 0.01], [0.025, 0.005]],
                             validate=validate.Length(min=2))
    mms_family = fields.String(load_default='decaying_bump', validate=validate.OneOf(sorted(PRESETS)))
    mms_r_max = fields.Float(load_default=8.0, validate=positive)
    mms_horizon = fields.Float(load_default=0.4, validate=positive)
    residual_ratio = fields.Float(load_default=3.0, validate=positive)
    blowup = fields.Boolean(load_default=True)
    blowup_lambda = fields.Float(load_default=5.0, validate=positive)
    blowup_horizon = fields.Float(load_default=0.5, validate=positive)
    blowup_dt = fields.Float(load_default=5e-3, validate=positive)
    blowup_c1_floor = fields.Float(load_default=10.0, validate=positive)
    blowup_ceiling = fields.Float(load_default=50.0, validate=positive)
    blowup_tol = fields.Float(load_default=0.1, validate=positive)

    @validates_schema
    def check_family(self, data, **kwargs):
        family = _family_or_error(data)
        if data['horizon'] > family.T or data['horizon'] <= data['t0']:
            raise ValidationError(f'deve estar em (t0, T] com T = {family.T:g}', 'horizon')
        mms = metric_family(data['mms_family'], n=data['n'])
        if data['t0'] + data['mms_horizon'] > mms.T:
            raise ValidationError(f't0 + mms_horizon deve ser <= T = {mms.T:g}', 'mms_horizon')
        if data['blowup_horizon'] <= 0.5 * math.pi / data['blowup_lambda']:
            raise ValidationError('deve passar de pi/(2 blowup_lambda)', 'blowup_horizon')
        flat = metric_family('euclidean', n=data['n'])
        if data['t0'] + data['blowup_horizon'] > flat.T:
            raise ValidationError(f't0 + blowup_horizon deve ser <= T = {flat.T:g}', 'blowup_horizon')


class UniquenessSchema(StrictSchema):
    """Parâmetros de uniqueness-test"""
    family = fields.String(load_default='decaying_bump', validate=validate.OneOf(sorted(PRESETS)))
    params = fields.Dict(keys=fields.String(), values=fields.Float(), load_default=lambda: {'a0': 0.05, 'b0': 0.05})
    n = fields.Integer(load_default=3, validate=validate.Range(min=3))
    t0 = fields.Float(load_default=0.0, validate=validate.Range(min=0.0))
    horizon = fields.Float(load_default=0.2, validate=positive)
    r_max = fields.Float(load_default=20.0, validate=positive)
    spacing = fields.Float(load_default=0.05, validate=positive)
    dt = fields.Float(load_default=0.00625, validate=positive)
    perturbation = fields.Float(load_default=1e-3, validate=positive)
    seeds = fields.List(fields.Integer(), load_default=[1, 2], validate=validate.Length(min=1))
    tol = fields.Float(load_default=1e-6, validate=positive)
    restart_overlap = fields.Float(load_default=0.5, validate=validate.Range(min=0.0, max=1.0, max_inclusive=False))
    restart_tol = fields.Float(load_default=1e-6, validate=positive)
    contraction_deltas = _positive_list([0.4, 0.1, 0.025])
    contraction_slack = fields.Float(load_default=0.1, validate=fraction)
    gradient_deltas = _positive_list([0.4, 0.1, 0.025])

    @validates_schema
    def check_family(self, data, **kwargs):
        family = _family_or_error(data)
        if data['horizon'] > family.T or data['horizon'] <= data['t0']:
            raise ValidationError(f'deve estar em (t0, T] com T = {family.T:g}', 'horizon')


class SingularitySchema(StrictSchema):
    """Parâmetros de singularity-classify"""
    dimension = fields.Integer(load_default=3, validate=validate.Range(min=3, max=9))
    R = fields.Float(load_default=1.0, validate=positive)
    t1 = fields.Float(load_default=0.1, validate=positive)
    t2 = fields.Float(load_default=0.3, validate=positive)
    sample_dt = fields.Float(load_default=0.01, validate=positive)
    spacing = fields.Float(load_default=1.0 / 256.0, validate=positive)
    dt = fields.Float(load_default=5e-4, validate=positive)
    r_min = fields.Float(load_default=1e-3, validate=positive)
    grading = fields.Float(load_default=1.05, validate=validate.Range(min=1.0, min_inclusive=False))
    tolerance = fields.Float(load_default=1e-3, validate=positive)
    slack = fields.Float(load_default=0.1, validate=positive)
    shift = fields.Float(load_default=1.0, validate=positive)
    t_star = fields.Float(load_default=0.15, validate=positive)
    representation_eps = _positive_list([0.2, 0.1, 0.05])
    representation_spacing = fields.Float(load_default=1.0 / 160.0, validate=positive)
    representation_order = fields.Float(load_default=0.9, validate=positive)
    sample_csv = fields.String(load_default=None, allow_none=True)

    @validates_schema
    def check_times(self, data, **kwargs):
        if data['t2'] <= data['t1']:
            raise ValidationError('deve ser maior que t1', 't2')
        if not data['t1'] < data['t_star'] < data['t2']:
            raise ValidationError('deve estar em (t1, t2)', 't_star')
        if data['r_min'] >= 0.025 * data['R']:
            raise ValidationError('deve ficar uma década abaixo de R/4', 'r_min')
        if data['sample_csv'] is not None and not Path(data['sample_csv']).is_file():
            raise ValidationError('arquivo não encontrado', 'sample_csv')


class OracleSchema(StrictSchema):
    """Parâmetros de oracle-compare"""
    R = fields.Float(load_default=1.0, validate=positive)
    cells = fields.Integer(load_default=64, validate=validate.Range(min=4, max=64))
    coarse_cells = fields.Integer(load_default=32, validate=validate.Range(min=4, max=64))
    half_width = fields.Float(load_default=1.25, validate=positive)
    tau = fields.Float(load_default=0.05, validate=positive)
    dt = fields.Float(load_default=1e-3, validate=positive)
    bump_s = fields.Float(load_default=0.05, validate=positive)
    table_spacing = fields.Float(load_default=1.0 / 128.0, validate=positive)
    table_dt = fields.Float(load_default=1e-4, validate=positive)
    tolerance = fields.Float(load_default=0.02, validate=positive)
    annulus_eps = fields.Float(load_default=0.25, validate=positive)
    annulus_center = fields.Float(load_default=0.6, validate=positive)
    annulus_tolerance = fields.Float(load_default=0.03, validate=positive)

    @validates_schema
    def check_cells(self, data, **kwargs):
        for key in ('cells', 'coarse_cells'):
            if data[key] % 2:
                raise ValidationError('deve ser par', key)
        if data['coarse_cells'] >= data['cells']:
            raise ValidationError('deve ser menor que cells', 'coarse_cells')


SECTIONS = {
    'green': GreenSchema,
    'hmflow': HmflowSchema,
    'uniqueness': UniquenessSchema,
    'singularity': SingularitySchema,
    'oracle': OracleSchema,
}


def find_line(text, section, key):
    """Linha (1-based) onde `key` aparece na tabela `section` (None no topo)"""
    current = None
    pattern = re.compile(rf'^\s*["\']?{re.escape(key)}["\']?\s*=')
    for number, line in enumerate(text.splitlines(), start=1):
        header = re.match(r'^\s*\[([^\[\]]+)\]\s*(#.*)?$', line)
        if header:
            current = header.group(1).strip()
            continue
        if current == section and pattern.match(line):
            return number
    return None


def _first_error(messages):
    key = next(iter(messages))
    value = messages[key]
    while isinstance(value, dict):
        inner = next(iter(value))
        value = value[inner]
    message = value[0] if isinstance(value, list) else str(value)
    return key, message


def _merge(base, override):
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def read_experiment(path):
    """Lê o TOML; erros de sintaxe viram ConfigError com a linha"""
    with open(path, 'rb') as fh:
        raw = fh.read()
    text = raw.decode('utf-8')
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        match = re.search(r'line (\d+)', str(e))
        raise ConfigError(str(e), line=int(match.group(1)) if match else None, path=str(path)) from None
    return data, text


def load_experiment(path=None, overrides=None):
    """
    Carrega e valida o arquivo de experimento

    Args:
        path (str | None): arquivo TOML (None usa só os defaults)
        overrides (dict): camada EXPERIMENT vinda da configuração

    Returns:
        dict: snapshot completo {'schema_version': 1, seção: {...}}

    Raises:
        ConfigError: chave desconhecida, valor inválido ou versão errada
    """
    if path is None:
        data, text = {'schema_version': SCHEMA_VERSION}, ''
    else:
        data, text = read_experiment(path)
    where = str(path) if path is not None else '<defaults>'
    if overrides:
        data = _merge(data, overrides)

    for key in data:
        if key != 'schema_version' and key not in SECTIONS:
            raise ConfigError('seção desconhecida', key=key, line=find_line(text, None, key) or _header_line(text, key),
                              path=where)
    version = data.get('schema_version')
    if version != SCHEMA_VERSION:
        raise ConfigError(f'versão de schema {version!r} não suportada (esperado {SCHEMA_VERSION})',
                          key='schema_version', line=find_line(text, None, 'schema_version'), path=where)

    snapshot = {'schema_version': SCHEMA_VERSION}
    for section, schema in SECTIONS.items():
        raw_section = data.get(section, {})
        if not isinstance(raw_section, dict):
            raise ConfigError('deve ser uma tabela', key=section, line=_header_line(text, section), path=where)
        try:
            snapshot[section] = schema().load(raw_section)
        except ValidationError as e:
            key, message = _first_error(e.messages)
            if key == '_schema':
                raise ConfigError(message, key=section, line=_header_line(text, section), path=where) from None
            raise ConfigError(message, key=f'{section}.{key}', line=find_line(text, section, key), path=where) from None
    return snapshot


def _header_line(text, section):
    for number, line in enumerate(text.splitlines(), start=1):
        if re.match(rf'^\s*\[{re.escape(section)}\]', line):
            return number
    return None


def config_hash(snapshot):
    """sha256 do JSON canônico do snapshot"""
    return hashlib.sha256(json.dumps(snapshot, sort_keys=True).encode('utf-8')).hexdigest()
