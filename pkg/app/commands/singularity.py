"""
Comando singularity-classify: removível ou singular na bola furada
"""
from dataclasses import replace

import numpy as np
from flask import Blueprint

from app.commands.common import experiment_command
from app.numerics.green_radial import SolverSettings, build_ball_kernel, lattice_grid
from app.numerics.radial_kernel import RadialGrid
from app.numerics.report import CheckReport
from app.numerics.singularity import (
    REMOVABLE,
    SINGULAR,
    classify,
    heat_pulse,
    idempotence_defect,
    load_sample_csv,
    reconstruct,
    representation_tables,
    representation_terms,
    shifted_gaussian,
    static_fundamental,
)

singularity_bp = Blueprint('singularity', __name__, cli_group=None)


def _sample_mesh(cfg):
    m, R = cfg['dimension'], cfg['R']
    count = int(round((cfg['t2'] - cfg['t1']) / cfg['sample_dt']))
    times = cfg['t1'] + cfg['sample_dt'] * np.arange(count + 1)
    cells = int(round(0.75 * R / cfg['spacing']))
    radii = RadialGrid.graded(R, cells, m, r_core=0.25 * R, ratio=cfg['grading'], r_min=cfg['r_min']).radii
    return radii, times


def _record(ctx, name, sample, table, expected, cfg):
    result = classify(sample, table, tolerance=cfg['tolerance'], slack=cfg['slack'])
    details = result.to_dict()
    if expected is None:
        report = CheckReport(f'singularity.{name}', True, result.reconstruction_gap, cfg['tolerance'],
                             conclusive=False, details=details)
    else:
        details['expected'] = expected
        report = CheckReport(f'singularity.{name}', result.verdict == expected, result.reconstruction_gap,
                             cfg['tolerance'], details=details)
    ctx.add(report)
    rec = reconstruct(sample, table)
    r, t = np.meshgrid(rec.radii, rec.times, indexing='ij')
    ctx.write_csv(f'reconstruction_{name}.csv', np.column_stack([r.ravel(), t.ravel(), rec.values.ravel()]),
                  ['r', 't', 'u_hat'])
    return result


@experiment_command(singularity_bp, 'singularity-classify', 'singularity')
def singularity_classify(ctx):
    """Classifica amostras analíticas (e um CSV opcional) na bola furada"""
    cfg = ctx.config
    m, R = cfg['dimension'], cfg['R']
    settings = SolverSettings(dt=cfg['dt'], threads=ctx.threads)
    build = ctx.table_factory
    radii, times = _sample_mesh(cfg)
    grid = lattice_grid(0.0, R, cfg['spacing'], m)

    samples = {
        'shifted_gaussian': (shifted_gaussian(m, R, radii, times, shift=cfg['shift']), REMOVABLE),
        'heat_pulse': (heat_pulse(m, R, radii, times, cfg['t_star']), SINGULAR),
        'static_fundamental': (static_fundamental(m, R, radii, times), None),
    }
    verdicts = {}
    table = None
    with ctx.check('singularity.kernel_table'):
        table = build_ball_kernel(R, m, grid, samples['shifted_gaussian'][0].offsets, settings, factory=build)
        for name, (sample, expected) in samples.items():
            with ctx.check(f'singularity.{name}'):
                verdicts[name] = _record(ctx, name, sample, table, expected, cfg).verdict

    if table is not None:
        with ctx.check('singularity.idempotence'):
            defect = idempotence_defect(samples['shifted_gaussian'][0], table)
            ctx.add(CheckReport('singularity.idempotence', defect <= 1e-6, defect, 1e-6))

    if cfg['sample_csv']:
        with ctx.check('singularity.csv'):
            sample = load_sample_csv(cfg['sample_csv'], m, R)
            csv_grid = lattice_grid(0.0, R, cfg['spacing'], m)
            csv_table = build_ball_kernel(R, m, csv_grid, sample.offsets, settings, factory=build)
            verdicts['csv'] = _record(ctx, 'csv', sample, csv_table, None, cfg).verdict

    for name in ('shifted_gaussian', 'static_fundamental'):
        label = f'singularity.inner_term_order.{name}'
        with ctx.check(label):
            sample = samples[name][0]
            tables = representation_tables(
                sample, cfg['representation_eps'], cfg['representation_spacing'], settings, factory=build,
            )
            terms = representation_terms(sample, tables)
            ctx.add(replace(terms.report(threshold=cfg['representation_order']), name=label))
            ctx.write_csv(
                f'representation_{name}.csv',
                np.column_stack([terms.eps, terms.I1, terms.I2, terms.I3, terms.defects]),
                ['eps', 'I1', 'I2', 'I3', 'defect'],
            )

    ctx.write_json('verdicts.json', verdicts)
