"""
Fluxo de aplicações harmônicas radial

A função rho~(r, t), com rho = r e^{rho~}, satisfaz

    d rho~/dt = rho~_rr + (n+1)/r rho~_r + deriva * rho~_r + rho~_r^2 + G

que é a equação radial do calor em dimensão n + 2 com fonte F. O solver
principal é o de Duhamel/Picard; solve_direct resolve a mesma equação por
volumes finitos e serve de verificação independente.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import sympy as sp
from scipy import sparse, stats
from scipy.sparse.linalg import splu

from app.numerics.duhamel_solver import Trajectory, c1_norms, continue_to_blowup
from app.numerics.errors import (
    BlowupSignal,
    ConditioningError,
    DomainError,
    GridCompatibilityError,
    NumericsError,
)
from app.numerics.green_radial import fv_operator
from app.numerics.metric_model import F_field, check_family, linearized_source
from app.numerics.radial_kernel import RadialField, RadialGrid, radial_derivative
from app.numerics.report import CheckReport

logger = logging.getLogger(__name__)


@dataclass
class FlowSolution:
    """
    Trajetória de rho~ em dimensão n + 2

    Attributes:
        metric (MetricFamily): família usada (com t0 já aplicado)
        t0 (float): instante inicial
        grid (RadialGrid): grade radial (dimensão n + 2)
        times (ndarray): instantes gravados
        rho_tilde (ndarray): [k, i]
        windows (list): registros das janelas de Picard
        T0 (float): último instante estável
        blew_up (bool): explosão numérica detectada
        method (str): 'duhamel', 'direct', 'linearized' ou 'forced'
    """
    metric: object
    t0: float
    grid: RadialGrid
    times: np.ndarray
    rho_tilde: np.ndarray
    windows: list = field(default_factory=list)
    T0: Optional[float] = None
    blew_up: bool = False
    reason: Optional[str] = None
    method: str = 'duhamel'

    @property
    def rho(self):
        return self.grid.radii[None, :] * np.exp(self.rho_tilde)

    def norms(self):
        return c1_norms(self.grid, self.rho_tilde)

    def field(self, k):
        return RadialField(self.grid, self.rho_tilde[k], float(self.times[k]))

    def as_trajectory(self):
        return Trajectory(self.grid, self.times, self.rho_tilde, self.windows, self.T0, self.blew_up, self.reason)


def flow_source(family, extra_source=None):
    """F(r, u, u_r, t) do fluxo, com um termo adicional opcional"""

    def F(r, u, du, t):
        value = F_field(family, r, u, du, t)
        if extra_source is not None:
            value = value + extra_source(r, t)
        return value

    return F


def _prepare(metric, t0, horizon, grid):
    family = metric if t0 == metric.t0 else metric.with_start(t0)
    if grid.dimension != family.n + 2:
        raise GridCompatibilityError(f"grade em dimensão {grid.dimension}, esperado n + 2 = {family.n + 2}")
    if not t0 < horizon <= family.T + 1e-12:
        raise DomainError(f"horizonte {horizon} fora de ({t0}, {family.T}]")
    return family


def solve(metric, t0, horizon, config, extra_source=None):
    """
    Resolve o fluxo de t0 até o instante `horizon` (dado inicial rho~ = 0)

    Args:
        metric (MetricFamily): dados da métrica
        t0 (float): instante inicial em [0, T)
        horizon (float): instante final, <= T
        config (SolveConfig): grade em dimensão n + 2 e parâmetros de Picard
        extra_source: termo adicional (r, t) -> array (soluções manufaturadas)

    Returns:
        FlowSolution
    """
    family = _prepare(metric, t0, horizon, config.grid)
    try:
        trajectory = continue_to_blowup(t0, horizon, flow_source(family, extra_source), config)
    except NumericsError as e:
        e.add_note(f"fluxo {family.name} n={family.n} t0={t0} horizonte={horizon}")
        raise
    logger.info(
        "fluxo %s n=%d: %d janelas, T0=%.6g%s",
        family.name, family.n, len(trajectory.windows), trajectory.T0,
        ' (explosão)' if trajectory.blew_up else '',
    )
    return FlowSolution(
        metric=family, t0=t0, grid=config.grid, times=trajectory.times, rho_tilde=trajectory.values,
        windows=trajectory.windows, T0=trajectory.T0, blew_up=trajectory.blew_up, reason=trajectory.reason,
    )


def forced_blowup(metric, t0, horizon, config, lam):
    """
    Fluxo com a fonte adicional lam (1 + rho~^2)

    F se anula em perfis constantes da família euclidiana e o núcleo
    discreto preserva constantes, então rho~ = tan(lam (t - t0)) e a
    explosão ocorre em t0 + pi/(2 lam).

    Returns:
        FlowSolution com method='forced'
    """
    if not lam > 0.0:
        raise DomainError(f"lam deve ser positivo, recebido {lam}")
    family = _prepare(metric, t0, horizon, config.grid)
    base = flow_source(family)

    def F(r, u, du, t):
        return base(r, u, du, t) + lam * (1.0 + u * u)

    trajectory = continue_to_blowup(t0, horizon, F, config)
    logger.info("explosão forçada lam=%g: T0=%.6g, previsto %.6g (%s)",
                lam, trajectory.T0, t0 + 0.5 * math.pi / lam, trajectory.reason)
    return FlowSolution(
        metric=family, t0=t0, grid=config.grid, times=trajectory.times, rho_tilde=trajectory.values,
        windows=trajectory.windows, T0=trajectory.T0, blew_up=trajectory.blew_up, reason=trajectory.reason,
        method='forced',
    )


def blowup_report(solution, lam, tol=0.1):
    """T0 contra t0 + pi/(2 lam) (erro relativo ao tempo até a explosão) e norma C1 crescente"""
    expected = solution.t0 + 0.5 * math.pi / lam
    c1 = norm_monitor(solution)['c1']
    drops = np.diff(c1) < -1e-9 * np.maximum(np.abs(c1[1:]), 1.0)
    monotone = not bool(np.any(drops))
    error = abs(solution.T0 - expected) / (expected - solution.t0)
    return CheckReport(
        'hmflow.forced_blowup', solution.blew_up and monotone and error <= tol, solution.T0, expected,
        details={'lam': lam, 'relative_error': error, 'monotone': monotone, 'reason': solution.reason,
                 'final_norm': float(c1[-1]), 'tolerance': tol},
    )


def solve_direct(metric, t0, horizon, grid, dt, extra_source=None):
    """
    Volumes finitos com Neumann em R_max, Crank-Nicolson na difusão e
    Adams-Bashforth de segunda ordem na parte não linear (o primeiro passo
    usa preditor-corretor)
    """
    family = _prepare(metric, t0, horizon, grid)
    steps = int(round((horizon - t0) / dt))
    if steps < 1 or abs(steps * dt - (horizon - t0)) > 1e-9 * max(1.0, horizon - t0):
        raise DomainError(f"horizonte - t0 não é múltiplo de dt={dt}")
    F = flow_source(family, extra_source)
    r = grid.radii
    volumes, stiffness = fv_operator(r, grid.dimension)
    half = 0.5 * dt
    try:
        lu = splu((sparse.diags(volumes) - half * stiffness).tocsc())
    except RuntimeError as e:
        raise ConditioningError(f"fatoração LU falhou: {e}") from e
    explicit = (sparse.diags(volumes) + half * stiffness).tocsr()

    def nonlinear(u, t):
        with np.errstate(over='ignore', invalid='ignore'):
            value = np.broadcast_to(F(r, u, radial_derivative(grid, u), t), r.shape)
        if not np.all(np.isfinite(value)):
            raise BlowupSignal(f"fonte não finita em t={t:.6g}", time=t)
        return value

    def advance(u, forcing):
        return lu.solve(explicit @ u + dt * volumes * forcing)

    u = np.zeros(grid.size)
    times = [t0]
    values = [u]
    n_prev = nonlinear(u, t0)
    predictor = advance(u, n_prev)
    n_next = nonlinear(predictor, t0 + dt)
    u = advance(u, 0.5 * (n_prev + n_next))
    times.append(t0 + dt)
    values.append(u)
    for k in range(1, steps):
        t = t0 + k * dt
        n_now = nonlinear(u, t)
        u = advance(u, 1.5 * n_now - 0.5 * n_prev)
        n_prev = n_now
        times.append(t0 + (k + 1) * dt)
        values.append(u)
    return FlowSolution(
        metric=family, t0=t0, grid=grid, times=np.array(times), rho_tilde=np.array(values),
        T0=float(horizon), method='direct',
    )


def linearized_response(metric, t0, horizon, config):
    """Duhamel de G(0, r^2, t) a partir de zero: resposta de primeira ordem"""
    family = _prepare(metric, t0, horizon, config.grid)
    trajectory = continue_to_blowup(
        t0, horizon, lambda r, u, du, t: linearized_source(family, r, t), config,
    )
    return FlowSolution(
        metric=family, t0=t0, grid=config.grid, times=trajectory.times, rho_tilde=trajectory.values,
        windows=trajectory.windows, T0=trajectory.T0, method='linearized',
    )


def _uniform_steps(solution):
    steps = np.diff(solution.times)
    if steps.size < 2 or np.max(np.abs(steps - steps[0])) > 1e-9 * steps[0]:
        raise DomainError("resíduo exige malha temporal uniforme com ao menos 3 instantes")
    return float(steps[0])


def residual(solution, extra_source=None):
    """
    Resíduo de diferenças finitas da equação radial

    Central no tempo, três pontos no espaço; na origem o laplaciano é
    (n+2) * 2 (u_1 - u_0)/h^2. O último nó (fronteira de truncamento) é
    excluído.

    Returns:
        ndarray [k, i] nos instantes times[1:-1] e nós radii[:-1]
    """
    dt = _uniform_steps(solution)
    h = solution.grid.spacing
    if h is None or solution.grid.radii[0] != 0.0:
        raise DomainError("resíduo exige grade uniforme a partir da origem")
    family = solution.metric
    F = flow_source(family, extra_source)
    r = solution.grid.radii
    m = solution.grid.dimension
    u = solution.rho_tilde
    out = np.empty((u.shape[0] - 2, r.size - 1))
    for k in range(1, u.shape[0] - 1):
        t = float(solution.times[k])
        uk = u[k]
        ut = (u[k + 1] - u[k - 1]) / (2.0 * dt)
        ur = np.zeros_like(uk)
        ur[1:-1] = (uk[2:] - uk[:-2]) / (2.0 * h)
        lap = np.zeros_like(uk)
        lap[1:-1] = (uk[2:] - 2.0 * uk[1:-1] + uk[:-2]) / h ** 2 + (m - 1) / r[1:-1] * ur[1:-1]
        lap[0] = m * 2.0 * (uk[1] - uk[0]) / h ** 2
        rhs = lap + F(r, uk, ur, t)
        out[k - 1] = (ut - rhs)[:-1]
    return out


@dataclass
class ManufacturedSolution:
    exact: Callable
    exact_dr: Callable
    source: Callable
    expression: str


def manufactured_forcing(metric, alpha_expr=None, t0=None):
    """
    Solução manufaturada rho~* = alpha(t) e^{-r^2} e a fonte compensadora

    Args:
        metric (MetricFamily): família (F exata é avaliada com ela)
        alpha_expr: expressão sympy em `t` com alpha(t0) = 0
            (default sin(2 (t - t0)))
        t0 (float): instante inicial (default metric.t0)

    Returns:
        ManufacturedSolution
    """
    t0 = metric.t0 if t0 is None else t0
    r, t = sp.symbols('r t')
    alpha = sp.sin(2 * (t - t0)) if alpha_expr is None else sp.sympify(alpha_expr, locals={'t': t})
    if abs(float(alpha.subs(t, t0))) > 1e-14:
        raise DomainError("alpha(t0) deve ser 0 (dado inicial nulo)")
    n = metric.n
    rho = alpha * sp.exp(-r ** 2)
    rho_r = sp.diff(rho, r)
    laplacian = sp.diff(rho, r, 2) + (n + 1) * sp.cancel(rho_r / r)
    rate = sp.diff(rho, t)
    exact = sp.lambdify((r, t), rho, 'numpy')
    exact_dr = sp.lambdify((r, t), rho_r, 'numpy')
    linear = sp.lambdify((r, t), rate - laplacian, 'numpy')
    family = metric if t0 == metric.t0 else metric.with_start(t0)

    def source(radii, time):
        radii = np.asarray(radii, dtype=float)
        u = np.broadcast_to(exact(radii, time), radii.shape)
        du = np.broadcast_to(exact_dr(radii, time), radii.shape)
        return np.broadcast_to(linear(radii, time), radii.shape) - F_field(family, radii, u, du, time)

    return ManufacturedSolution(exact=exact, exact_dr=exact_dr, source=source, expression=str(rho))


def manufactured_convergence(metric, t0, horizon, levels, r_max=8.0, alpha_expr=None, solver='direct',
                             config_factory=None):
    """
    Erro sup contra a solução manufaturada em níveis (h, dt) refinados

    Args:
        levels: sequência de (h, dt)
        solver: 'direct' ou 'duhamel' (este usa config_factory(grid, dt))

    Returns:
        CheckReport com a ordem observada (limite 1.5) e a razão de queda do resíduo
    """
    mms = manufactured_forcing(metric, alpha_expr, t0)
    errors, residuals, spacings = [], [], []
    for h, dt in levels:
        grid = RadialGrid.uniform_spacing(0.0, r_max, h, metric.n + 2)
        if solver == 'direct':
            solution = solve_direct(metric, t0, horizon, grid, dt, extra_source=mms.source)
        else:
            solution = solve(metric, t0, horizon, config_factory(grid, dt), extra_source=mms.source)
        exact = mms.exact(grid.radii, solution.times[-1])
        errors.append(float(np.max(np.abs(solution.rho_tilde[-1] - exact))))
        residuals.append(float(np.max(np.abs(residual(solution, extra_source=mms.source)))))
        spacings.append(h)
    fit = stats.linregress(np.log(spacings), np.log(errors))
    ratios = [a / b for a, b in zip(residuals[:-1], residuals[1:])]
    return CheckReport(
        f'hmflow.manufactured.{solver}', fit.slope >= 1.5, float(fit.slope), 1.5,
        details={'h': spacings, 'errors': errors, 'residuals': residuals, 'residual_ratios': ratios},
    )


def solution_gap(a, b):
    """sup |rho~_a - rho~_b| nos instantes comuns (b interpolada na grade de a)"""
    worst = 0.0
    matched = 0
    for k, t in enumerate(a.times):
        j = int(np.argmin(np.abs(b.times - t)))
        if abs(b.times[j] - t) > 1e-9 * max(1.0, abs(t)):
            continue
        other = np.interp(a.grid.radii, b.grid.radii, b.rho_tilde[j])
        worst = max(worst, float(np.max(np.abs(a.rho_tilde[k] - other))))
        matched += 1
    if matched == 0:
        raise DomainError("soluções sem instantes comuns")
    return worst


def map_eval(solution, r, theta, t):
    """
    phi_t em coordenadas polares: (rho(r, t), theta)

    Interpolação linear em r e em t; fora da grade ou de [t0, T0] gera DomainError.
    """
    r = np.asarray(r, dtype=float)
    radii, times = solution.grid.radii, solution.times
    if np.any(r < radii[0]) or np.any(r > radii[-1]):
        raise DomainError(f"r fora de [{radii[0]}, {radii[-1]}]")
    if not times[0] - 1e-12 <= t <= times[-1] + 1e-12:
        raise DomainError(f"t={t} fora de [{times[0]}, {times[-1]}]")
    k = int(np.clip(np.searchsorted(times, t) - 1, 0, times.size - 2))
    weight = 0.0 if times[k + 1] == times[k] else (t - times[k]) / (times[k + 1] - times[k])
    weight = float(np.clip(weight, 0.0, 1.0))
    profile = (1.0 - weight) * solution.rho_tilde[k] + weight * solution.rho_tilde[k + 1]
    rho = r * np.exp(np.interp(r, radii, profile))
    return rho, np.asarray(theta)


def norm_monitor(solution):
    """Curva da norma C1 (sup|rho~| + sup|rho~_r|) por instante"""
    grads = radial_derivative(solution.grid, solution.rho_tilde)
    sup = np.max(np.abs(solution.rho_tilde), axis=1)
    grad_sup = np.max(np.abs(grads), axis=1)
    return {'times': solution.times, 'sup': sup, 'grad_sup': grad_sup, 'c1': sup + grad_sup}


def trajectory_rows(solution):
    """Linhas (t, r, rho~, rho) para CSV"""
    t, r = np.meshgrid(solution.times, solution.grid.radii, indexing='ij')
    return np.column_stack([t.ravel(), r.ravel(), solution.rho_tilde.ravel(), solution.rho.ravel()])


def metric_report(family):
    """check_family como CheckReport"""
    result = check_family(family)
    return CheckReport(
        'hmflow.metric_identities', result['passed'], result['g_initial_identity'], 1e-10, details=result,
    )


def monotonicity_defect(solution):
    """Menor 1 + r rho~_r: rho é crescente em r onde isso é positivo"""
    grads = radial_derivative(solution.grid, solution.rho_tilde)
    return float(np.min(1.0 + solution.grid.radii[None, :] * grads))
