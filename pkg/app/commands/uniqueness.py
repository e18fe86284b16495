"""
Comando uniqueness-test: chutes perturbados, recomeço e escala da contração
"""
import numpy as np
from flask import Blueprint

from app.commands.common import experiment_command
from app.commands.hmflow import family_from, solve_config
from app.numerics import hmflow
from app.numerics.duhamel_solver import (
    contraction_scaling,
    lipschitz_estimate,
    measure_gradient_constant,
    restart_report,
    uniqueness_gap,
    window_bound_report,
)
from app.numerics.radial_kernel import RadialGrid

uniqueness_bp = Blueprint('uniqueness', __name__, cli_group=None)


@experiment_command(uniqueness_bp, 'uniqueness-test', 'uniqueness')
def uniqueness_test(ctx):
    """Reconvergência de chutes perturbados e propriedades das janelas de Picard"""
    cfg = ctx.config
    t0, horizon, dt = cfg['t0'], cfg['horizon'], cfg['dt']
    family = family_from(cfg)
    family = family if t0 == family.t0 else family.with_start(t0)
    grid = RadialGrid.uniform_spacing(0.0, cfg['r_max'], cfg['spacing'], cfg['n'] + 2)
    F = hmflow.flow_source(family)

    reference = None
    with ctx.check('uniqueness.reference'):
        reference = hmflow.solve(family, t0, horizon, solve_config(cfg, grid, dt, ctx))
        ctx.add(window_bound_report(reference))
        ctx.add(restart_report(reference, tol=cfg['restart_tol']))
        ctx.add(lipschitz_estimate(F, reference.as_trajectory(), seed=ctx.seed))

    if reference is not None:
        curves = {}
        for seed in cfg['seeds']:
            name = f'uniqueness.gap.seed{seed}'
            with ctx.check(name):
                config = solve_config(
                    cfg, grid, dt, ctx, perturbation=cfg['perturbation'], seed=ctx.seed + seed, restart_overlap=0.0,
                )
                perturbed = hmflow.solve(family, t0, horizon, config)
                result = uniqueness_gap(reference.as_trajectory(), perturbed.as_trajectory(), tol=cfg['tol'])
                ctx.add(result.report(name))
                curves[seed] = result
        if curves:
            rows = [(seed, t, e) for seed, result in curves.items() for t, e in zip(result.times, result.E)]
            ctx.write_csv('uniqueness_gap.csv', rows, ['seed', 't', 'E'])

    with ctx.check('duhamel.contraction_scaling'):
        config = solve_config(cfg, grid, dt, ctx, restart_overlap=0.0)
        report, = ctx.add(contraction_scaling(F, config, cfg['contraction_deltas'], t0=t0,
                                              slack=cfg['contraction_slack']))
        ctx.write_csv('contraction.csv', np.column_stack([report.details['deltas'], report.details['ratios']]),
                      ['delta', 'ratio'])

    with ctx.check('duhamel.gradient_constant'):
        ctx.add(measure_gradient_constant(grid, cfg['gradient_deltas'], np.exp(-grid.radii ** 2)))
