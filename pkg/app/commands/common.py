"""
Infraestrutura comum dos comandos de experimento

Cada subcomando abre um ExperimentContext: carrega e valida o arquivo de
experimento, cria o diretório de artefatos, registra a execução no banco
e, ao final, grava manifest.json e summary.txt e sai com 0 (tudo passou),
1 (alguma verificação falhou) ou 2 (configuração inválida).
"""
import json
import time
from contextlib import contextmanager
from datetime import datetime
from pathlib import Path

import click
import numpy as np
from flask import current_app

from app import db
from app.models import CheckResult, ExperimentRun, KernelCacheEntry
from app.numerics.errors import ConfigError, NumericsError
from app.numerics.green_radial import SCHEME_VERSION
from app.numerics.kernel_io import FORMAT_VERSION, KernelCache
from app.numerics.report import CheckReport, to_plain
from app.schemas import SCHEMA_VERSION, config_hash, load_experiment

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2


def experiment_options(f):
    """Opções comuns a todos os subcomandos de experimento"""
    options = [
        click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False), default=None,
                     help='Arquivo TOML do experimento (default: apenas os valores padrão)'),
        click.option('--out-dir', type=click.Path(file_okay=False), default=None,
                     help='Diretório dos artefatos (default: OUT_DIR/<comando>-<hash>)'),
        click.option('--threads', type=click.IntRange(min=1), default=None,
                     help='Threads de trabalho (default: THREADS da configuração)'),
        click.option('--seed', type=int, default=0, show_default=True,
                     help='Semente das perturbações aleatórias'),
        click.option('--strict', is_flag=True, help='Verificações inconclusivas contam como falha'),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _status(report):
    if not report.conclusive:
        return 'INFO'
    return 'PASS' if report.passed else 'FAIL'


def _format(value):
    if isinstance(value, float):
        return f'{value:.6g}'
    return '-' if value is None else str(value)


class ExperimentContext:
    """
    Estado de uma execução de subcomando

    Attributes:
        subcommand (str): nome do subcomando
        config (dict): seção validada do arquivo de experimento
        snapshot (dict): todas as seções (gravado no manifest)
        config_hash (str): sha256 do snapshot
        out_dir (Path): diretório dos artefatos
        threads (int): threads de trabalho
        seed (int): semente
        strict (bool): inconclusivo conta como falha
        reports (list): CheckReports na ordem em que foram produzidos
    """

    def __init__(self, subcommand, section, snapshot, out_dir, threads, seed, strict):
        self.subcommand = subcommand
        self.snapshot = snapshot
        self.config = snapshot[section]
        self.config_hash = config_hash(snapshot)
        self.out_dir = Path(out_dir) if out_dir else Path(current_app.config['OUT_DIR']) / f'{subcommand}-{self.config_hash[:12]}'
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.threads = int(threads or current_app.config['THREADS'])
        self.seed = seed
        self.strict = strict
        self.reports = []
        self.artifacts = []
        self.cache_keys = set()
        self.started_at = datetime.utcnow()
        self._clock = time.perf_counter()
        self._factory = None

        self.run = ExperimentRun(subcommand=subcommand, config_hash=self.config_hash, out_dir=str(self.out_dir))
        db.session.add(self.run)
        db.session.commit()
        current_app.logger.info(f"{subcommand}: configuração {self.config_hash[:12]}, artefatos em {self.out_dir}")

    @classmethod
    def start(cls, subcommand, section, config_path=None, out_dir=None, threads=None, seed=0, strict=False):
        """
        Valida a configuração e abre a execução

        Configuração inválida encerra o comando com status 2 e uma mensagem
        com o arquivo, a linha e a chave.
        """
        try:
            snapshot = load_experiment(config_path, current_app.config.get('EXPERIMENT'))
        except ConfigError as e:
            current_app.logger.error(f"Erro ao carregar configuração: {str(e)}")
            click.echo(f"erro de configuração: {e}", err=True)
            click.get_current_context().exit(EXIT_CONFIG_ERROR)
        return cls(subcommand, section, snapshot, out_dir, threads, seed, strict)

    # --- verificações ---------------------------------------------------------

    def add(self, *reports):
        """Registra CheckReports (na lista, no banco e no log)"""
        for report in reports:
            self.reports.append(report)
            self.run.checks.append(CheckResult.from_report(report))
            current_app.logger.info(
                f"{_status(report)} {report.name}: valor={_format(report.value)} limite={_format(report.threshold)}"
            )
        db.session.commit()
        return reports

    @contextmanager
    def check(self, name):
        """
        Executa um bloco de verificação

        NumericsError no bloco é registrado como verificação `name` falha e
        a execução continua com o próximo bloco.
        """
        try:
            yield
        except NumericsError as e:
            current_app.logger.error(f"Erro ao executar {name}: {str(e)}")
            self.add(CheckReport(
                name, False,
                details={'error': str(e), 'type': type(e).__name__, 'notes': list(getattr(e, '__notes__', []))},
            ))

    # --- cache de núcleos -------------------------------------------------------

    @property
    def table_factory(self):
        """Construtor de tabelas que passa pelo cache em disco e indexa no banco"""
        if self._factory is None:
            cache = KernelCache(current_app.config['CACHE_DIR'])
            self._factory = cache.factory(on_entry=self._record_table)
        return self._factory

    def _record_table(self, table, key, path, size, hit):
        self.cache_keys.add(key)
        entry = KernelCacheEntry.query.filter_by(key=key).first()
        if entry is None:
            entry = KernelCacheEntry(
                key=key, domain_kind=table.domain.kind, dimension=table.domain.m,
                scheme=table.scheme, path=str(path), size_bytes=size, hits=0,
            )
            db.session.add(entry)
        if hit:
            entry.hits += 1
        db.session.commit()

    # --- artefatos ----------------------------------------------------------------

    def write_csv(self, name, rows, header):
        """CSV com 17 algarismos significativos"""
        path = self.out_dir / name
        data = np.asarray(rows, dtype=float).reshape(-1, len(header))
        np.savetxt(path, data, fmt='%.17g', delimiter=',', header=','.join(header), comments='')
        self.artifacts.append(name)
        return path

    def write_json(self, name, data):
        path = self.out_dir / name
        path.write_text(json.dumps(to_plain(data), indent=2, sort_keys=True) + '\n', encoding='utf-8')
        if name not in self.artifacts:
            self.artifacts.append(name)
        return path

    def exit_code(self):
        failed = [r for r in self.reports if r.conclusive and not r.passed]
        inconclusive = [r for r in self.reports if not r.conclusive]
        if failed or (self.strict and inconclusive):
            return EXIT_CHECK_FAILED
        return EXIT_OK

    def summary_lines(self, exit_code):
        lines = [f'{self.subcommand}  config {self.config_hash[:12]}  seed {self.seed}']
        width = max((len(r.name) for r in self.reports), default=0)
        for report in self.reports:
            lines.append(
                f'{_status(report):4s}  {report.name:{width}s}  valor={_format(report.value)}  '
                f'limite={_format(report.threshold)}'
            )
        counts = {status: sum(1 for r in self.reports if _status(r) == status) for status in ('PASS', 'FAIL', 'INFO')}
        lines.append(f"resultado: {counts['PASS']} PASS, {counts['FAIL']} FAIL, {counts['INFO']} INFO -> exit {exit_code}")
        return lines

    def finish(self):
        """Grava manifest.json e summary.txt, fecha o registro e encerra o comando"""
        wall_clock = time.perf_counter() - self._clock
        code = self.exit_code()
        lines = self.summary_lines(code)
        (self.out_dir / 'summary.txt').write_text('\n'.join(lines) + '\n', encoding='utf-8')
        self.artifacts.append('summary.txt')
        self.write_json('manifest.json', {
            'subcommand': self.subcommand,
            'schema_version': SCHEMA_VERSION,
            'config': self.snapshot,
            'config_hash': self.config_hash,
            'scheme_versions': {'green_radial': SCHEME_VERSION, 'kernel_file': FORMAT_VERSION},
            'kernel_cache_keys': sorted(self.cache_keys),
            'seed': self.seed,
            'threads': self.threads,
            'strict': self.strict,
            'started_at': self.started_at.isoformat(),
            'wall_clock': wall_clock,
            'checks': [r.to_dict() for r in self.reports],
            'artifacts': sorted(self.artifacts),
            'exit_code': code,
        })
        self.run.finish(code, wall_clock)
        db.session.commit()
        for line in lines:
            click.echo(line)
        click.get_current_context().exit(code)


def experiment_command(bp, name, section):
    """
    Registra um subcomando de experimento no blueprint

    A função decorada recebe o ExperimentContext já aberto e só precisa
    produzir verificações e artefatos.
    """

    def decorator(f):
        @bp.cli.command(name, help=f.__doc__)
        @experiment_options
        def command(config_path, out_dir, threads, seed, strict):
            ctx = ExperimentContext.start(name, section, config_path, out_dir, threads, seed, strict)
            f(ctx)
            ctx.finish()

        return command

    return decorator
