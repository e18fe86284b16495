"""
Comando oracle-compare: tabelas de modo 0 contra o solver 3-D cartesiano
"""
from dataclasses import replace

import numpy as np
from flask import Blueprint

from app.commands.common import experiment_command
from app.numerics.green_radial import DomainSpec, SolverSettings, build_annulus_kernel, build_ball_kernel, lattice_grid
from app.numerics.oracle3d import Grid3D, compare_radialization
from app.numerics.report import CheckReport

oracle_bp = Blueprint('oracle', __name__, cli_group=None)


@experiment_command(oracle_bp, 'oracle-compare', 'oracle')
def oracle_compare(ctx):
    """Compara a média por cascas do oráculo 3-D com a tabela da bola (m = 3)"""
    cfg = ctx.config
    R, tau, s = cfg['R'], cfg['tau'], cfg['bump_s']
    settings = SolverSettings(dt=cfg['table_dt'], threads=ctx.threads)
    build = ctx.table_factory

    def bump(r):
        return np.exp(-(r * r) / (4.0 * s))

    deviations = {}
    with ctx.check('oracle.ball_table'):
        table = build_ball_kernel(R, 3, lattice_grid(0.0, R, cfg['table_spacing'], 3), [tau], settings, factory=build)
        for cells in (cfg['coarse_cells'], cfg['cells']):
            name = f'oracle.radialization.n{cells}'
            with ctx.check(name):
                grid = Grid3D(cfg['half_width'], cells, DomainSpec.ball(R, 3))
                report = compare_radialization(table, grid, bump, tau, cfg['dt'], tol=cfg['tolerance'])
                ctx.add(replace(report, name=name, conclusive=cells == cfg['cells']))
                deviations[cells] = report.value

    if len(deviations) == 2:
        coarse, fine = deviations[cfg['coarse_cells']], deviations[cfg['cells']]
        ctx.add(CheckReport('oracle.refinement', fine < coarse, fine / coarse if coarse > 0.0 else 0.0, 1.0,
                            details={'coarse': coarse, 'fine': fine}))
    ctx.write_csv('oracle.csv', sorted(deviations.items()), ['cells', 'deviation'])

    eps, center = cfg['annulus_eps'], cfg['annulus_center']
    with ctx.check('oracle.annulus'):
        grid = lattice_grid(eps, R, cfg['table_spacing'], 3)
        annulus = build_annulus_kernel(eps, R, 3, grid, [tau], settings, factory=build)
        report = compare_radialization(
            annulus, Grid3D(cfg['half_width'], cfg['cells'], DomainSpec.annulus(eps, R, 3)),
            lambda r: np.exp(-((r - center) ** 2) / (4.0 * s)), tau, cfg['dt'], tol=cfg['annulus_tolerance'],
        )
        ctx.add(replace(report, name='oracle.annulus', conclusive=False))
