"""
Comando cache-list: índice das tabelas de núcleo em disco
"""
from pathlib import Path

import click
from flask import Blueprint, current_app

from app import db
from app.models import KernelCacheEntry
from app.numerics.green_radial import SCHEME_VERSION
from app.numerics.kernel_io import KernelCache

cache_bp = Blueprint('cache', __name__, cli_group=None)


def _stale(entry):
    return entry.scheme != SCHEME_VERSION or not Path(entry.path).exists()


@cache_bp.cli.command('cache-list')
@click.option('--prune', is_flag=True, help='Remove entradas de outro esquema ou sem arquivo')
def cache_list(prune):
    """Lista as tabelas de núcleo indexadas no banco e presentes no diretório de cache"""
    cache = KernelCache(current_app.config['CACHE_DIR'])
    entries = KernelCacheEntry.query.order_by(KernelCacheEntry.created_at).all()
    indexed = {entry.key for entry in entries}

    for entry in entries:
        flag = 'stale' if _stale(entry) else 'ok'
        click.echo(f"{entry.key[:12]}  {entry.domain_kind:8s}  m={entry.dimension}  {entry.scheme}  "
                   f"{entry.size_bytes:>10d} B  hits={entry.hits}  {flag}")
    orphans = [header for header in cache.entries() if header.get('key') not in indexed]
    for header in orphans:
        click.echo(f"{str(header.get('key'))[:12]}  (não indexada)  {header['path']}")
    click.echo(f"{len(entries)} entrada(s) indexada(s), {len(orphans)} arquivo(s) fora do índice")

    if prune:
        removed = 0
        try:
            for entry in entries:
                if _stale(entry):
                    Path(entry.path).unlink(missing_ok=True)
                    db.session.delete(entry)
                    removed += 1
            db.session.commit()
        except Exception as e:
            db.session.rollback()
            current_app.logger.error(f"Erro ao limpar cache: {str(e)}")
            raise click.ClickException(str(e))
        click.echo(f"{removed} entrada(s) removida(s)")
