"""
Comando green-verify: tabelas de Green e verificações de núcleo
"""
import numpy as np
from flask import Blueprint

from app.commands.common import experiment_command
from app.numerics.green_radial import (
    Mollifier,
    SolverSettings,
    build_annulus_kernel,
    build_ball_kernel,
    build_exterior_kernel,
    comparison_chain,
    exterior_comparison,
    exterior_truncation_report,
    fit_envelopes,
    flux_decay_exponent,
    gaussian_factor_sanity,
    lattice_grid,
    mollifier_limit,
    mollifier_monotonicity,
    table_checks,
    verify_epsilon_limit,
    verify_scaling,
)
from app.numerics.kernel_io import export_csv
from app.numerics.radial_kernel import kernel_identity_checks

green_bp = Blueprint('green', __name__, cli_group=None)


def _region_sources(grid, R):
    radii = grid.radii
    return np.nonzero((radii >= 0.25 * R - 1e-12) & (radii <= 0.75 * R + 1e-12))[0]


def _mollifier_checks(ctx, label, exact, builder, geometry, cfg, settings, build, csv_name):
    """Ordem em delta e limite delta -> 0 contra a tabela exata do mesmo domínio"""
    R = exact.domain.R
    sources = _region_sources(exact.grid, R)

    def mollified(delta):
        return builder(*geometry, exact.grid, cfg['times'], settings, Mollifier(delta), sources, factory=build)

    ordered = {delta: mollified(delta) for delta in cfg['mollifier_deltas']}
    ctx.add(mollifier_monotonicity(ordered, exact, tol=cfg['chain_tol'], label=label))
    limit = {delta: mollified(delta) for delta in cfg['mollifier_limit_deltas']}
    report, = ctx.add(mollifier_limit(
        limit, exact, min_tau=cfg['mollifier_min_tau'], tol=cfg['mollifier_tol'], label=label,
    ))
    ctx.write_csv(csv_name, np.column_stack([report.details['deltas'], report.details['gaps']]), ['delta', 'gap'])


def _epsilon_tables(cfg, settings, build):
    """Anéis da varredura em eps (mesmos argumentos de verify_epsilon_limit: saem do cache)"""
    m, R, spacing = cfg['dimension'], cfg['R'], cfg['spacing']
    ball_grid = lattice_grid(0.0, R, spacing, m)
    region = ball_grid.radii[_region_sources(ball_grid, R)]
    tables = []
    for eps in sorted(cfg['eps_values'], reverse=True):
        grid = lattice_grid(eps, R, spacing, m)
        sources = [grid.node_index(r) for r in region]
        tables.append(build_annulus_kernel(eps, R, m, grid, cfg['times'], settings, sources=sources, factory=build))
    return tables


@experiment_command(green_bp, 'green-verify', 'green')
def green_verify(ctx):
    """Constrói as tabelas de Green (bola, anel, exterior) e roda as verificações"""
    cfg = ctx.config
    m, R, times = cfg['dimension'], cfg['R'], cfg['times']
    settings = SolverSettings(
        dt=cfg['dt'], rannacher_steps=cfg['rannacher_steps'],
        tol_discrete=cfg['tol_discrete'], tol_sym=cfg['tol_sym'], threads=ctx.threads,
    )
    build = ctx.table_factory
    summaries = {}

    with ctx.check('kernel.identities'):
        ctx.add(*kernel_identity_checks())

    ball = annulus = None
    with ctx.check('green.tables'):
        ball_grid = lattice_grid(0.0, R, cfg['spacing'], m)
        ball = build_ball_kernel(R, m, ball_grid, times, settings, factory=build)
        wide_grid = lattice_grid(0.0, cfg['R_wide'], cfg['spacing'], m)
        wide_sources = np.nonzero(wide_grid.radii <= R + 1e-12)[0]
        wide = build_ball_kernel(cfg['R_wide'], m, wide_grid, times, settings, sources=wide_sources, factory=build)
        annulus_grid = lattice_grid(cfg['chain_eps'], R, cfg['spacing'], m)
        annulus = build_annulus_kernel(cfg['chain_eps'], R, m, annulus_grid, times, settings, factory=build)
        for label, table in (('ball', ball), ('ball_wide', wide), ('annulus', annulus)):
            summaries[label] = table.summary()
            ctx.add(*table_checks(table, settings, label=f'green.{label}'))
        ctx.add(comparison_chain(annulus, ball, wide, tol=cfg['chain_tol']))
        ctx.add(gaussian_factor_sanity(ball))
        ctx.add(fit_envelopes([ball, annulus], kind='outer_flux', tol=cfg['envelope_tol']))
        ctx.add(fit_envelopes([annulus], kind='inner_flux', tol=cfg['envelope_tol']))
        ctx.add(fit_envelopes([ball], kind='kernel', tol=cfg['envelope_tol'], label='kernel.ball'))
        if cfg['export_csv']:
            for label, table in (('ball', ball), ('annulus', annulus)):
                export_csv(table, ctx.out_dir / f'kernel_{label}.csv')
                ctx.artifacts.append(f'kernel_{label}.csv')

    if ball is not None:
        with ctx.check('green.mollifier'):
            _mollifier_checks(
                ctx, 'green', ball, build_ball_kernel, (R, m), cfg, settings, build, 'mollifier_limit.csv',
            )
    if annulus is not None:
        with ctx.check('green.annulus.mollifier'):
            _mollifier_checks(
                ctx, 'green.annulus', annulus, build_annulus_kernel, (cfg['chain_eps'], R, m), cfg, settings, build,
                'mollifier_limit_annulus.csv',
            )

    with ctx.check('green.epsilon_limit'):
        report, = ctx.add(verify_epsilon_limit(
            cfg['eps_values'], R, m, cfg['spacing'], cfg['dt'], times, settings, factory=build,
        ))
        ctx.write_csv('epsilon_limit.csv', np.column_stack([report.details['eps'], report.details['gaps']]),
                      ['eps', 'gap'])
        sweep = _epsilon_tables(cfg, settings, build)
        ctx.add(fit_envelopes(sweep, kind='inner_flux', tol=cfg['envelope_tol'], conclusive=False))

    with ctx.check('green.scaling'):
        scaling_settings = SolverSettings(dt=cfg['dt'], rannacher_steps=cfg['rannacher_steps'], threads=ctx.threads)
        ctx.add(verify_scaling(
            cfg['scaling_eps'], cfg['scaling_R'], cfg['scaling_dimension'], cfg['scaling_spacing'],
            cfg['dt'], times, scaling_settings, tol=cfg['scaling_tol'], factory=build,
        ))

    with ctx.check('green.exterior'):
        exterior = build_exterior_kernel(
            cfg['exterior_R_far'], m, cfg['exterior_spacing'], times, settings, factory=build,
        )
        summaries['exterior'] = exterior.summary()
        ctx.add(exterior_truncation_report(exterior))
        ctx.add(*table_checks(exterior, settings, label='green.exterior'))
        nested = build_exterior_kernel(
            2.0 * cfg['exterior_R_far'], m, cfg['exterior_spacing'], times, settings,
            source_radii=exterior.source_radii, check_truncation=False, factory=build,
        )
        ctx.add(exterior_comparison([exterior, nested], tol=cfg['chain_tol']))
        ctx.add(fit_envelopes([exterior], kind='kernel', tol=cfg['envelope_tol'], label='kernel.exterior'))

    with ctx.check('green.flux_decay'):
        report, = ctx.add(flux_decay_exponent(
            cfg['flux_decay_R'], m, spacing=cfg['flux_decay_spacing'], dt=cfg['flux_decay_dt'], factory=build,
        ))
        ctx.write_csv('flux_decay.csv', np.column_stack([report.details['R'], report.details['peaks']]),
                      ['R', 'peak_total_flux'])

    ctx.write_json('tables.json', summaries)
