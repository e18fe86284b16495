"""
Comando hmflow-run: o fluxo rho~ para uma família de métricas
"""
from dataclasses import replace

import numpy as np
from flask import Blueprint

from app.commands.common import experiment_command
from app.numerics import hmflow
from app.numerics.duhamel_solver import SolveConfig, window_bound_report
from app.numerics.metric_model import metric_family
from app.numerics.radial_kernel import RadialGrid
from app.numerics.report import CheckReport

hmflow_bp = Blueprint('hmflow', __name__, cli_group=None)


def solve_config(cfg, grid, dt, ctx, **overrides):
    """SolveConfig a partir de uma seção validada ([hmflow] ou [uniqueness])"""
    options = {'seed': ctx.seed, 'threads': ctx.threads}
    options.update(
        (key, cfg[key])
        for key in ('cauchy_tol', 'max_iterations', 'safety', 'c1_floor', 'norm_ceiling',
                    'min_window_steps', 'max_window', 'restart_overlap')
        if key in cfg
    )
    options.update(overrides)
    return SolveConfig(grid=grid, dt=dt, **options)


def family_from(cfg, name_key='family'):
    return metric_family(cfg[name_key], **{**cfg.get('params', {}), 'n': cfg['n']})


@experiment_command(hmflow_bp, 'hmflow-run', 'hmflow')
def hmflow_run(ctx):
    """Resolve o fluxo radial por Duhamel/Picard e verifica a solução"""
    cfg = ctx.config
    t0, horizon, dt = cfg['t0'], cfg['horizon'], cfg['dt']
    family = family_from(cfg)
    grid = RadialGrid.uniform_spacing(0.0, cfg['r_max'], cfg['spacing'], cfg['n'] + 2)

    with ctx.check('hmflow.metric_identities'):
        ctx.add(hmflow.metric_report(family))

    solution = None
    with ctx.check('hmflow.solve'):
        solution = hmflow.solve(family, t0, horizon, solve_config(cfg, grid, dt, ctx))
        monitor = hmflow.norm_monitor(solution)
        ctx.write_csv('trajectory.csv', hmflow.trajectory_rows(solution), ['t', 'r', 'rho_tilde', 'rho'])
        ctx.write_csv(
            'norms.csv', np.column_stack([monitor['times'], monitor['sup'], monitor['grad_sup'], monitor['c1']]),
            ['t', 'sup', 'grad_sup', 'c1'],
        )
        ctx.write_json('windows.json', solution.windows)
        ctx.add(window_bound_report(solution))
        ctx.add(CheckReport(
            'hmflow.blowup_time', not solution.blew_up, solution.T0, horizon, conclusive=False,
            details={'reason': solution.reason, 'windows': len(solution.windows)},
        ))
        slope = hmflow.monotonicity_defect(solution)
        ctx.add(CheckReport('hmflow.rho_monotone', slope > 0.0, slope, 0.0, conclusive=False))
        if family.name == 'euclidean':
            sup = float(np.max(np.abs(solution.rho_tilde)))
            ctx.add(CheckReport('hmflow.euclidean_fixed_point', sup <= cfg['zero_tol'], sup, cfg['zero_tol']))

    if solution is not None and not solution.blew_up:
        if cfg['direct_check']:
            with ctx.check('hmflow.direct_gap'):
                direct = hmflow.solve_direct(family, t0, horizon, grid, dt)
                gap = hmflow.solution_gap(solution, direct)
                ctx.add(CheckReport('hmflow.direct_gap', gap <= cfg['lift_tol'], gap, cfg['lift_tol']))

        with ctx.check('hmflow.linearized_response'):
            linear = hmflow.linearized_response(family, t0, horizon, solve_config(cfg, grid, dt, ctx))
            scale = float(np.max(np.abs(solution.rho_tilde)))
            gap = hmflow.solution_gap(solution, linear)
            relative = gap / scale if scale > 0.0 else gap
            ctx.add(CheckReport(
                'hmflow.linearized_response', relative <= cfg['linearized_tol'], relative, cfg['linearized_tol'],
                conclusive=False, details={'absolute_gap': gap, 'scale': scale},
            ))

    if cfg['blowup']:
        with ctx.check('hmflow.forced_blowup'):
            lam, blowup_dt = cfg['blowup_lambda'], cfg['blowup_dt']
            config = solve_config(
                cfg, grid, blowup_dt, ctx, c1_floor=cfg['blowup_c1_floor'], norm_ceiling=cfg['blowup_ceiling'],
                dt_min=blowup_dt / 1024.0,
            )
            forced = hmflow.forced_blowup(
                metric_family('euclidean', n=cfg['n']), t0, t0 + cfg['blowup_horizon'], config, lam,
            )
            ctx.add(hmflow.blowup_report(forced, lam, tol=cfg['blowup_tol']))
            monitor = hmflow.norm_monitor(forced)
            ctx.write_csv('forced_blowup.csv', np.column_stack([monitor['times'], monitor['c1']]), ['t', 'c1'])

    if cfg['mms']:
        mms_family = metric_family(cfg['mms_family'], n=cfg['n'])
        end = t0 + cfg['mms_horizon']
        levels = [tuple(level) for level in cfg['mms_levels']]
        with ctx.check('hmflow.manufactured.direct'):
            report, = ctx.add(hmflow.manufactured_convergence(
                mms_family, t0, end, levels, r_max=cfg['mms_r_max'], solver='direct',
            ))
            ratios = report.details['residual_ratios']
            worst = min(ratios)
            ctx.add(CheckReport(
                'hmflow.manufactured.residual_decay', worst >= cfg['residual_ratio'], worst, cfg['residual_ratio'],
                details={'residuals': report.details['residuals']},
            ))
            ctx.write_csv(
                'manufactured.csv',
                np.column_stack([[h for h, _ in levels], [k for _, k in levels],
                                 report.details['errors'], report.details['residuals']]),
                ['h', 'dt', 'error', 'residual'],
            )
        with ctx.check('hmflow.manufactured.duhamel'):
            report = hmflow.manufactured_convergence(
                mms_family, t0, end, levels, r_max=cfg['mms_r_max'], solver='duhamel',
                config_factory=lambda g, k: solve_config(cfg, g, k, ctx),
            )
            ctx.add(replace(report, conclusive=False))
