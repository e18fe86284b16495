"""
Persistência das tabelas de núcleo

Formato binário: cabeçalho texto 'chave: valor-json' por linha terminado
por 'end-header', seguido dos arrays em little-endian na ordem e com as
formas listadas no cabeçalho.
"""
import hashlib
import json
import logging
import os
from pathlib import Path

import numpy as np

from app.numerics.errors import CacheMismatchError
from app.numerics.green_radial import SCHEME_VERSION, DomainSpec, KernelTable, build_table
from app.numerics.radial_kernel import RadialGrid

logger = logging.getLogger(__name__)

MAGIC = 'hmflow-kernel-table'
FORMAT_VERSION = 1
SUFFIX = '.hmk'
END_HEADER = 'end-header'


def cache_key(domain, grid, times, dt, rannacher_steps=2, mollifier_delta=None, sources=None):
    """sha256 do JSON canônico dos parâmetros que determinam a tabela"""
    sources = np.arange(grid.size) if sources is None else np.asarray(sources, dtype='<i8')
    payload = {
        'scheme': SCHEME_VERSION,
        'domain': domain.to_dict(),
        'grid': grid.fingerprint(),
        'times': [float(t) for t in sorted(times)],
        'dt': float(dt),
        'rannacher_steps': int(rannacher_steps),
        'mollifier_delta': None if mollifier_delta is None else float(mollifier_delta),
        'sources': hashlib.sha256(sources.astype('<i8').tobytes()).hexdigest(),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode('utf-8')).hexdigest()


def table_key(table):
    return cache_key(
        table.domain, table.grid, table.times, table.dt,
        table.rannacher_steps, table.mollifier_delta, table.sources,
    )


def _arrays(table):
    arrays = [
        ('radii', table.grid.radii, '<f8'),
        ('times', table.times, '<f8'),
        ('sources', table.sources, '<i8'),
        ('flux_times', table.flux_times, '<f8'),
        ('values', table.values, '<f8'),
    ]
    if table.flux_inner is not None:
        arrays.append(('flux_inner', table.flux_inner, '<f8'))
    if table.flux_outer is not None:
        arrays.append(('flux_outer', table.flux_outer, '<f8'))
    return arrays


def write_table(table, path):
    """
    Grava a tabela em `path`

    Returns:
        int: tamanho do arquivo em bytes
    """
    arrays = _arrays(table)
    header = {
        'magic': MAGIC,
        'format_version': FORMAT_VERSION,
        'scheme': table.scheme,
        'key': table_key(table),
        'domain': table.domain.to_dict(),
        'dt': table.dt,
        'rannacher_steps': table.rannacher_steps,
        'mollifier_delta': table.mollifier_delta,
        'diagnostics': table.diagnostics,
        'arrays': [[name, dtype, list(np.shape(data))] for name, data, dtype in arrays],
    }
    lines = [f'{name}: {json.dumps(value, sort_keys=True)}' for name, value in header.items()]
    lines.append(END_HEADER)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + '.tmp')
    with open(tmp, 'wb') as fh:
        fh.write(('\n'.join(lines) + '\n').encode('utf-8'))
        for _, data, dtype in arrays:
            fh.write(np.ascontiguousarray(data, dtype=dtype).tobytes())
    os.replace(tmp, path)
    return path.stat().st_size


def read_header(fh):
    header = {}
    while True:
        line = fh.readline()
        if not line:
            raise CacheMismatchError("cabeçalho sem 'end-header'")
        try:
            text = line.decode('utf-8').rstrip('\n')
            if text == END_HEADER:
                return header
            name, _, value = text.partition(': ')
            header[name] = json.loads(value)
        except ValueError as e:
            raise CacheMismatchError(f"cabeçalho ilegível: {e}") from None


def read_table(path, expected_key=None):
    """
    Lê uma tabela gravada por write_table

    Raises:
        CacheMismatchError: arquivo de outro formato, esquema numérico
            diferente ou chave diferente da esperada
    """
    with open(path, 'rb') as fh:
        header = read_header(fh)
        if header.get('magic') != MAGIC or header.get('format_version') != FORMAT_VERSION:
            raise CacheMismatchError(f"{path}: não é uma tabela de núcleo (formato {FORMAT_VERSION})")
        if header.get('scheme') != SCHEME_VERSION:
            raise CacheMismatchError(
                f"{path}: esquema {header.get('scheme')!r}, esperado {SCHEME_VERSION!r}"
            )
        if expected_key is not None and header.get('key') != expected_key:
            raise CacheMismatchError(f"{path}: chave {header.get('key')} diferente de {expected_key}")
        arrays = {}
        for name, dtype, shape in header['arrays']:
            count = int(np.prod(shape, dtype=np.int64))
            raw = fh.read(count * np.dtype(dtype).itemsize)
            if len(raw) != count * np.dtype(dtype).itemsize:
                raise CacheMismatchError(f"{path}: array '{name}' truncado")
            arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(
                np.int64 if dtype == '<i8' else np.float64
            )

    d = header['domain']
    domain = DomainSpec(d['kind'], d['m'], d['R'], d['eps'])
    return KernelTable(
        domain=domain,
        grid=RadialGrid(arrays['radii'], domain.m),
        times=arrays['times'],
        values=arrays['values'],
        sources=arrays['sources'],
        flux_times=arrays['flux_times'],
        flux_inner=arrays.get('flux_inner'),
        flux_outer=arrays.get('flux_outer'),
        dt=header['dt'],
        scheme=header['scheme'],
        mollifier_delta=header['mollifier_delta'],
        rannacher_steps=header['rannacher_steps'],
        diagnostics=header.get('diagnostics') or {},
    )


def export_csv(table, path):
    """CSV longo com colunas r, r_prime, tau, G"""
    r, rp, tau = np.meshgrid(table.grid.radii, table.source_radii, table.times, indexing='ij')
    rows = np.column_stack([r.ravel(), rp.ravel(), tau.ravel(), table.values.ravel()])
    np.savetxt(path, rows, fmt='%.17g', delimiter=',', header='r,r_prime,tau,G', comments='')


class KernelCache:
    """
    Cache de tabelas em disco endereçado por cache_key

    Attributes:
        directory (Path): diretório dos arquivos .hmk
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def path_for(self, key):
        return self.directory / f'{key}{SUFFIX}'

    def get(self, key):
        path = self.path_for(key)
        if not path.exists():
            return None
        try:
            return read_table(path, expected_key=key)
        except CacheMismatchError as e:
            logger.warning("ignorando entrada de cache inválida: %s", e)
            return None

    def put(self, table):
        key = table_key(table)
        path = self.path_for(key)
        size = write_table(table, path)
        return key, path, size

    def factory(self, on_entry=None):
        """
        Construtor com a assinatura de build_table que consulta o cache

        Args:
            on_entry: callback(table, key, path, size, hit) chamado a cada tabela
        """

        def build(domain, grid, times, settings, mollifier=None, sources=None):
            key = cache_key(
                domain, grid, times, settings.dt, settings.rannacher_steps,
                None if mollifier is None else mollifier.delta, sources,
            )
            table = self.get(key)
            hit = table is not None
            if hit:
                logger.info("cache: reutilizando tabela %s", key[:12])
                path = self.path_for(key)
                size = path.stat().st_size
            else:
                table = build_table(domain, grid, times, settings, mollifier, sources)
                key, path, size = self.put(table)
            if on_entry is not None:
                on_entry(table, key, path, size, hit)
            return table

        return build

    def entries(self):
        """Cabeçalhos das tabelas presentes no diretório"""
        found = []
        for path in sorted(self.directory.glob(f'*{SUFFIX}')):
            with open(path, 'rb') as fh:
                try:
                    header = read_header(fh)
                except (CacheMismatchError, ValueError):
                    continue
            header['path'] = str(path)
            header['size_bytes'] = path.stat().st_size
            found.append(header)
        return found
