"""
Iteração de Picard por janelas para u_t = Laplaciano_m(u) + F(r, u, u_r, t)

Em cada janela [T2, T2 + delta] o iterado seguinte é

    next(t) = e^{(t-T2)Delta} u(T2) + int_{T2}^{t} e^{(t-s)Delta} F(prev(s)) ds

discretizado na malha temporal de passo dt com a recursão do ponto médio
D_{k+1} = E D_k + dt E_{1/2} F_{k+1/2}. As janelas são encadeadas por
continue_to_blowup até o horizonte ou até a norma C1 explodir.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from app.numerics.errors import BlowupSignal, BoundExceeded, DomainError, NoContraction
from app.numerics.radial_kernel import (
    DuhamelQuadrature,
    RadialField,
    duhamel_integrate,
    gradient_kernel_constant,
    kernel_matrix,
    radial_derivative,
)
from app.numerics.report import CheckReport

logger = logging.getLogger(__name__)

# abaixo disso os gaps são ruído de arredondamento e não entram na razão
GAP_FLOOR = 1e-13

Source = Callable[[np.ndarray, np.ndarray, np.ndarray, float], np.ndarray]


@dataclass
class SolveConfig:
    """
    Parâmetros do solver de Picard

    Attributes:
        grid (RadialGrid): grade em dimensão m = n + 2; R_max é o último raio
        dt (float): passo da malha temporal
        cauchy_tol (float): parada quando o gap C1 entre iterados cai abaixo
        max_iterations (int): orçamento por janela
        safety (float): fator sobre o C4 empírico na escolha de delta1
        c1_floor (float): piso de C1 (dado inicial nulo)
        norm_ceiling (float): norma C1 acima da qual se declara explosão
        dt_min (float): menor passo permitido (default dt/64)
        min_window_steps (int): abaixo disso o passo é reduzido à metade
        max_window (float): maior janela
        restart_overlap (float): fração da janela refeita a partir de um
            instante interior (consistência de semigrupo); 0 desliga
        perturbation (float): amplitude da perturbação suave do primeiro chute
        seed (int): semente da perturbação
        threads (int): threads na avaliação de F por nó temporal
    """
    grid: object
    dt: float
    cauchy_tol: float = 1e-8
    max_iterations: int = 40
    safety: float = 2.0
    c1_floor: float = 0.1
    norm_ceiling: float = 1e6
    dt_min: Optional[float] = None
    min_window_steps: int = 2
    max_window: float = 1.0
    restart_overlap: float = 0.0
    perturbation: float = 0.0
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if not self.dt > 0.0:
            raise DomainError(f"dt deve ser positivo, recebido {self.dt}")
        if not self.cauchy_tol > 0.0:
            raise DomainError("cauchy_tol deve ser positivo")
        if self.max_iterations < 2:
            raise DomainError("max_iterations deve ser >= 2")
        if self.safety < 1.0:
            raise DomainError("safety deve ser >= 1")
        if not 0.0 <= self.restart_overlap < 1.0:
            raise DomainError("restart_overlap deve estar em [0, 1)")
        if self.threads < 1:
            raise DomainError("threads deve ser >= 1")
        if self.dt_min is None:
            self.dt_min = self.dt / 64.0
        spacing = float(np.max(np.diff(self.grid.radii)))
        if spacing > 1.4 * math.sqrt(0.5 * self.dt):
            logger.warning(
                "passo da grade %.3g não resolve sqrt(dt/2)=%.3g", spacing, math.sqrt(0.5 * self.dt)
            )

    @property
    def R_max(self):
        return self.grid.r_max

    @property
    def dimension(self):
        return self.grid.dimension


class DuhamelOperator:
    """Operadores discretos E = e^{dt Delta} e E_{1/2} = e^{(dt/2) Delta}"""

    def __init__(self, grid, dt):
        self.grid = grid
        self.dt = dt
        self.E = kernel_matrix(grid, dt)
        self.E_half = kernel_matrix(grid, 0.5 * dt)

    def free_path(self, u0, steps):
        path = np.empty((steps + 1, u0.size))
        path[0] = u0
        for k in range(steps):
            path[k + 1] = self.E @ path[k]
        return path


def c1_norms(grid, path):
    """sup|u| + sup|u_r| em cada nó temporal"""
    path = np.atleast_2d(path)
    return np.max(np.abs(path), axis=1) + np.max(np.abs(radial_derivative(grid, path)), axis=1)


def c1_gap(grid, a, b):
    diff = np.atleast_2d(a - b)
    return float(np.max(np.max(np.abs(diff), axis=1) + np.max(np.abs(radial_derivative(grid, diff)), axis=1)))


def midpoint_forcing(F, grid, path, times, threads=1):
    """F avaliada no iterado médio de nós adjacentes, em t_k + dt/2"""
    mid = 0.5 * (path[1:] + path[:-1])
    grads = radial_derivative(grid, mid)
    mid_times = 0.5 * (times[1:] + times[:-1])
    r = grid.radii

    def evaluate(k):
        with np.errstate(over='ignore', invalid='ignore'):
            return np.broadcast_to(np.asarray(F(r, mid[k], grads[k], float(mid_times[k])), dtype=float), r.shape)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(evaluate, range(mid.shape[0])))
    else:
        rows = [evaluate(k) for k in range(mid.shape[0])]
    forcing = np.array(rows)
    bad = ~np.all(np.isfinite(forcing), axis=1)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise BlowupSignal(f"F não finita em t={mid_times[k]:.6g}", time=float(mid_times[k]))
    return forcing


def picard_step(prev, times, F, v, operator, threads=1):
    """
    Um passo de Picard na janela

    Args:
        prev (ndarray): iterado anterior [k, i] nos nós `times`
        times (ndarray): T2 + k*dt
        F: fonte F(r, u, u_r, t)
        v (ndarray): evolução livre do dado inicial da janela
        operator (DuhamelOperator): E e E_{1/2}

    Returns:
        ndarray com o mesmo layout de prev
    """
    forcing = midpoint_forcing(F, operator.grid, prev, times, threads)
    dt = operator.dt
    nxt = np.empty_like(v)
    nxt[0] = v[0]
    duhamel = np.zeros(v.shape[1])
    for k in range(forcing.shape[0]):
        duhamel = operator.E @ duhamel + dt * (operator.E_half @ forcing[k])
        nxt[k + 1] = v[k + 1] + duhamel
    if not np.all(np.isfinite(nxt)):
        raise BlowupSignal("iterado não finito", time=float(times[-1]))
    return nxt


@dataclass
class IterationState:
    """
    Janela aceita

    Attributes:
        times, iterate, previous: malha e os dois últimos iterados
        norms (ndarray): norma C1 do iterado final por nó temporal
        c1, c4, c5_prime (float): constantes empíricas da janela
        gaps (list): gaps C1 entre iterados consecutivos
        ratio (float): mediana das razões entre gaps consecutivos
        max_iterate_norm (float): maior norma C1 entre todos os iterados
    """
    start: float
    delta: float
    dt: float
    times: np.ndarray
    iterate: np.ndarray
    previous: np.ndarray
    norms: np.ndarray
    c1: float
    c4: float
    c5_prime: float
    gaps: list = field(default_factory=list)
    ratio: float = 0.0
    max_iterate_norm: float = 0.0

    @property
    def iterations(self):
        return len(self.gaps)

    def record(self):
        return {
            'start': self.start,
            'delta': self.delta,
            'dt': self.dt,
            'iterations': self.iterations,
            'contraction_ratio': self.ratio,
            'final_gap': self.gaps[-1] if self.gaps else 0.0,
            'c1': self.c1,
            'c4': self.c4,
            'bound': 2.0 * self.c1,
            'max_iterate_norm': self.max_iterate_norm,
            'end_norm': float(self.norms[-1]),
        }


def contraction_ratio(gaps):
    ratios = [b / a for a, b in zip(gaps[:-1], gaps[1:]) if a > GAP_FLOOR and b > GAP_FLOOR]
    return float(np.median(ratios)) if ratios else 0.0


def _perturbation_path(grid, steps, amplitude, seed):
    rng = np.random.default_rng(seed)
    coefficients = rng.uniform(-1.0, 1.0, size=steps)
    bump = np.exp(-grid.radii ** 2)
    return amplitude * coefficients[:, None] * bump[None, :]


def solve_window(initial, delta, F, config, c1=None, guess=None, operator=None, seed=None):
    """
    Itera picard_step numa janela até o gap C1 cair abaixo de cauchy_tol

    Args:
        initial (RadialField): dado em T2 = initial.time
        delta (float): comprimento da janela, múltiplo de config.dt
        F: fonte F(r, u, u_r, t)
        config (SolveConfig): parâmetros
        c1 (float): constante C1 do tubo (default: norma C1 do dado, com piso)
        guess (ndarray): primeiro chute (default: dado constante no tempo)

    Returns:
        IterationState

    Raises:
        BoundExceeded: algum iterado sai do tubo 2*C1
        NoContraction: gaps não decrescem ou o orçamento acaba
    """
    grid, dt = config.grid, config.dt
    steps = int(round(delta / dt))
    if steps < 1 or abs(steps * dt - delta) > 1e-9 * max(delta, dt):
        raise DomainError(f"janela {delta} não é múltiplo de dt={dt}")
    operator = operator or DuhamelOperator(grid, dt)
    times = initial.time + dt * np.arange(steps + 1)
    v = operator.free_path(initial.values, steps)
    if c1 is None:
        c1 = max(initial.c1_norm(), config.c1_floor)
    bound = 2.0 * c1

    prev = np.tile(initial.values, (steps + 1, 1)) if guess is None else np.array(guess, dtype=float)
    if config.perturbation:
        prev[1:] += _perturbation_path(grid, steps, config.perturbation, config.seed if seed is None else seed)

    gaps = []
    worst = 0.0
    previous = prev
    for iteration in range(1, config.max_iterations + 1):
        nxt = picard_step(prev, times, F, v, operator, config.threads)
        norms = c1_norms(grid, nxt)
        worst = max(worst, float(norms.max()))
        if norms.max() > bound:
            k = int(np.argmax(norms))
            raise BoundExceeded(
                f"iterado {iteration} com norma C1 {norms[k]:.4g} > {bound:.4g}",
                time=float(times[k]), norm=float(norms[k]), bound=bound,
            )
        gaps.append(c1_gap(grid, nxt, prev))
        previous, prev = prev, nxt
        logger.debug("janela %.6g: iteração %d gap %.3e", initial.time, iteration, gaps[-1])
        if gaps[-1] < config.cauchy_tol:
            break
        if len(gaps) >= 4 and gaps[-1] >= gaps[-2] >= gaps[-3] >= gaps[-4]:
            raise NoContraction(
                f"gaps não contraem na janela [{initial.time:.6g}, {times[-1]:.6g}]",
                time=initial.time, ratio=contraction_ratio(gaps), iterations=iteration,
            )
    else:
        raise NoContraction(
            f"{config.max_iterations} iterações sem atingir {config.cauchy_tol:g}",
            time=initial.time, ratio=contraction_ratio(gaps), iterations=config.max_iterations,
        )

    forcing = midpoint_forcing(F, grid, prev, times, config.threads)
    return IterationState(
        start=float(initial.time),
        delta=steps * dt,
        dt=dt,
        times=times,
        iterate=prev,
        previous=previous,
        norms=c1_norms(grid, prev),
        c1=c1,
        c4=config.safety * float(np.max(np.abs(forcing))),
        c5_prime=gradient_kernel_constant(grid.dimension),
        gaps=gaps,
        ratio=contraction_ratio(gaps),
        max_iterate_norm=worst,
    )


@dataclass
class Trajectory:
    """
    Solução encadeada

    Attributes:
        times (ndarray): instantes aceitos
        values (ndarray): [k, i]
        windows (list): registros JSON das janelas (e das falhas)
        T0 (float): último instante estável (= horizonte se não explodiu)
        blew_up (bool): explosão numérica detectada
        reason (str | None): 'norm_ceiling', 'dt_min' ou 'source'
    """
    grid: object
    times: np.ndarray
    values: np.ndarray
    windows: list
    T0: float
    blew_up: bool = False
    reason: Optional[str] = None

    def norms(self):
        return c1_norms(self.grid, self.values)

    def field(self, k):
        return RadialField(self.grid, self.values[k], float(self.times[k]))

    def at(self, t):
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"t={t} não está na trajetória")
        return self.field(idx)


def _aligned_steps(proposal, dt, remaining_steps):
    return min(int(math.floor(proposal / dt + 1e-9)), remaining_steps)


def continue_to_blowup(t0, T, F, config, initial=None):
    """
    Encadeia janelas de t0 até T ou até a explosão

    delta1 = min(max_window, (T - t)/2, (C1/(C4 (1 + C5')))^2) com C1 o maior
    valor da norma C1 até aqui e C4 = safety * sup|F| empírico. Após uma
    janela fácil (até um quarto do orçamento) a próxima proposta dobra;
    falhas (tubo ou contração) reduzem à metade. Nenhuma janela passa da
    metade do tempo restante (alinhada a dt), salvo o mínimo de
    min_window_steps passos no fim do horizonte. Janelas com menos de
    min_window_steps passos reduzem dt à metade; dt < dt_min é explosão.

    Returns:
        Trajectory
    """
    if not T > t0:
        raise DomainError(f"horizonte T={T} deve ser maior que t0={t0}")
    grid = config.grid
    dt = config.dt
    total = (T - t0) / dt
    if abs(round(total) - total) > 1e-8 * max(1.0, total):
        raise DomainError(f"T - t0 = {T - t0} não é múltiplo de dt={dt}")
    state = initial if initial is not None else RadialField(grid, np.zeros(grid.size), t0)
    if abs(state.time - t0) > 1e-12 * max(1.0, abs(t0)):
        raise DomainError("dado inicial fora de t0")

    times = [float(t0)]
    values = [state.values.copy()]
    windows = []
    c5_prime = gradient_kernel_constant(grid.dimension)
    history = max(state.c1_norm(), config.c1_floor)
    next_delta = None
    failed = False
    operators = {}
    blew_up, reason = False, None
    t = float(t0)
    # t = t0 + steps_done * dt com dt possivelmente reduzido
    steps_done, remaining_steps = 0, int(round(total))

    while remaining_steps > 0:
        try:
            forcing = midpoint_forcing(F, grid, np.vstack([state.values, state.values]), np.array([t, t]))
        except BlowupSignal as e:
            blew_up, reason = True, 'source'
            logger.info("explosão: %s", e)
            break
        c4 = config.safety * float(np.max(np.abs(forcing)))
        c1 = history
        delta1 = min(config.max_window, 0.5 * remaining_steps * dt)
        if c4 > 0.0:
            delta1 = min(delta1, (c1 / (c4 * (1.0 + c5_prime))) ** 2)
        if next_delta is None:
            proposal = delta1
        elif failed:
            proposal = next_delta
        else:
            proposal = max(delta1, next_delta)
        cap = max(remaining_steps // 2, min(config.min_window_steps, remaining_steps))
        steps = _aligned_steps(min(proposal, config.max_window), dt, cap)
        if steps < min(config.min_window_steps, remaining_steps):
            if 0.5 * dt < config.dt_min:
                blew_up, reason = True, 'dt_min'
                logger.info("explosão: dt abaixo de %.3g em t=%.6g", config.dt_min, t)
                break
            dt *= 0.5
            remaining_steps *= 2
            steps_done *= 2
            logger.info("reduzindo dt para %.3g em t=%.6g", dt, t)
            continue

        if dt not in operators:
            operators[dt] = (replace(config, dt=dt, dt_min=config.dt_min), DuhamelOperator(grid, dt))
        window_config, operator = operators[dt]
        try:
            window = solve_window(
                state, steps * dt, F, window_config, c1=c1, operator=operator,
                seed=config.seed + len(windows),
            )
        except (BoundExceeded, NoContraction) as e:
            windows.append({'start': t, 'delta': steps * dt, 'dt': dt, 'failed': type(e).__name__, 'message': str(e)})
            logger.debug("janela rejeitada em t=%.6g: %s", t, e)
            next_delta = 0.5 * steps * dt
            failed = True
            continue
        except BlowupSignal as e:
            # fonte não finita dentro da janela: encolhe até o tamanho mínimo
            if steps > config.min_window_steps:
                windows.append({'start': t, 'delta': steps * dt, 'dt': dt, 'failed': type(e).__name__,
                                'message': str(e)})
                next_delta = 0.5 * steps * dt
                failed = True
                continue
            blew_up, reason = True, 'source'
            logger.info("explosão: %s", e)
            break

        record = window.record()
        if config.restart_overlap > 0.0 and steps >= 2:
            record['overlap_gap'] = _overlap_gap(window, F, window_config, operator, grid)
        windows.append(record)

        norms = window.norms
        above = np.nonzero(norms > config.norm_ceiling)[0]
        keep = above[0] if above.size else steps + 1
        for k in range(1, keep):
            times.append(float(window.times[k]))
            values.append(window.iterate[k])
        if above.size:
            blew_up, reason = True, 'norm_ceiling'
            logger.info("explosão: norma C1 > %.3g em t=%.6g", config.norm_ceiling, window.times[above[0]])
            break

        steps_done += steps
        remaining_steps -= steps
        t = float(t0 + steps_done * dt)
        state = RadialField(grid, window.iterate[-1], t)
        history = max(history, float(norms.max()))
        easy = window.iterations <= max(2, config.max_iterations // 4)
        next_delta = 2.0 * window.delta if easy else window.delta
        failed = False
        logger.info(
            "janela [%.6g, %.6g]: %d iterações, razão %.3g, norma %.4g",
            window.start, t, window.iterations, window.ratio, norms[-1],
        )

    T0 = times[-1] if blew_up else float(T)
    return Trajectory(grid, np.array(times), np.array(values), windows, T0, blew_up, reason)


def _overlap_gap(window, F, config, operator, grid):
    """Refaz o fim da janela a partir de um instante interior e mede o gap"""
    steps = window.iterate.shape[0] - 1
    overlap = min(steps - 1, max(1, int(round(config.restart_overlap * steps))))
    start = steps - overlap
    restart = RadialField(grid, window.iterate[start], float(window.times[start]))
    redo = solve_window(
        restart, overlap * config.dt, F, replace(config, perturbation=0.0),
        c1=window.c1, operator=operator,
    )
    return c1_gap(grid, redo.iterate, window.iterate[start:])


@dataclass
class UniquenessResult:
    times: np.ndarray
    E: np.ndarray
    verdict: str
    tol: float

    def report(self, name='uniqueness.gap'):
        final = float(self.E[-1]) if self.E.size else 0.0
        return CheckReport(
            name, self.verdict == 'PASS', final, self.tol,
            conclusive=self.verdict != 'reported',
            details={'verdict': self.verdict, 'points': int(self.times.size)},
        )


def uniqueness_gap(traj_a, traj_b, tol=1e-6):
    """
    E(t) = sup_{s <= t} (sup|a - b| + sup|a_r - b_r|) nos instantes comuns

    Grades diferentes: b é interpolada na grade de a e o veredito é
    'reported' (o gap reflete discretização).
    """
    same_grid = traj_a.grid == traj_b.grid
    idx_a, idx_b = [], []
    for i, t in enumerate(traj_a.times):
        j = int(np.argmin(np.abs(traj_b.times - t)))
        if abs(traj_b.times[j] - t) <= 1e-9 * max(1.0, abs(t)):
            idx_a.append(i)
            idx_b.append(j)
    if not idx_a:
        raise DomainError("trajetórias sem instantes comuns")
    a = traj_a.values[idx_a]
    if same_grid:
        b = traj_b.values[idx_b]
    else:
        b = np.array([np.interp(traj_a.grid.radii, traj_b.grid.radii, traj_b.values[j]) for j in idx_b])
    diff = a - b
    pointwise = np.max(np.abs(diff), axis=1) + np.max(np.abs(radial_derivative(traj_a.grid, diff)), axis=1)
    curve = np.maximum.accumulate(pointwise)
    if not same_grid:
        verdict = 'reported'
    else:
        verdict = 'PASS' if curve[-1] <= tol else 'FAIL'
    return UniquenessResult(traj_a.times[idx_a], curve, verdict, tol)


def measure_gradient_constant(grid, deltas, forcing, steps=32):
    """
    Razão sup|d/dr Duhamel(f)| / (sup|f| sqrt(delta)) para f constante no tempo

    Returns:
        CheckReport: razões por delta contra a constante C5'
    """
    f = np.asarray(forcing, dtype=float)
    bound = gradient_kernel_constant(grid.dimension)
    ratios = []
    for delta in deltas:
        duhamel = duhamel_integrate(lambda s: f, 0.0, delta, DuhamelQuadrature(grid, steps))
        ratios.append(float(np.max(np.abs(duhamel.gradient()))) / (float(np.max(np.abs(f))) * math.sqrt(delta)))
    worst = max(ratios)
    return CheckReport(
        'duhamel.gradient_constant', worst <= bound, worst, bound,
        details={'deltas': list(deltas), 'ratios': ratios},
    )


def lipschitz_estimate(F, trajectory, samples=64, scale=1e-3, seed=0):
    """
    Estimativa de |F(u + a) - F(u)| / (sup|a| + sup|a_r|) no tubo da solução

    As perturbações a são suaves e aleatórias; um valor finito é o que se
    espera de F localmente Lipschitz.
    """
    rng = np.random.default_rng(seed)
    grid = trajectory.grid
    r = grid.radii
    worst = 0.0
    for _ in range(samples):
        k = int(rng.integers(trajectory.times.size))
        u = trajectory.values[k]
        t = float(trajectory.times[k])
        width = rng.uniform(0.5, 2.0)
        a = scale * rng.uniform(-1.0, 1.0) * np.exp(-(r / width) ** 2)
        du = radial_derivative(grid, u)
        da = radial_derivative(grid, a)
        change = np.asarray(F(r, u + a, du + da, t)) - np.asarray(F(r, u, du, t))
        size = float(np.max(np.abs(a)) + np.max(np.abs(da)))
        worst = max(worst, float(np.max(np.abs(change))) / size)
    return CheckReport(
        'duhamel.lipschitz', bool(np.isfinite(worst)), worst, None,
        details={'samples': samples, 'scale': scale},
    )


def window_bound_report(trajectory):
    """Maior norma C1 entre os iterados de cada janela aceita, relativa ao tubo 2*C1"""
    accepted = [w for w in trajectory.windows if 'failed' not in w]
    rejected = len(trajectory.windows) - len(accepted)
    worst = max((w['max_iterate_norm'] / w['bound'] for w in accepted), default=0.0)
    return CheckReport(
        'duhamel.window_bound', bool(accepted) and worst <= 1.0, worst, 1.0,
        details={'accepted': len(accepted), 'rejected': rejected},
    )


def restart_report(trajectory, tol=1e-6):
    """Gap entre a janela e o recomeço a partir de um instante interior"""
    gaps = [w['overlap_gap'] for w in trajectory.windows if 'overlap_gap' in w]
    worst = max(gaps, default=0.0)
    return CheckReport(
        'duhamel.restart_consistency', bool(gaps) and worst <= tol, worst, tol,
        conclusive=bool(gaps), details={'windows': len(gaps)},
    )


def contraction_scaling(F, config, deltas, initial=None, t0=0.0, slack=0.1):
    """
    Maior razão entre gaps consecutivos de Picard por comprimento de janela

    A razão se comporta como C delta + C' sqrt(delta): entre dois
    comprimentos delta > delta' ela deve cair ao menos pelo fator
    sqrt(delta'/delta) (metade quando delta' = delta/4), com folga `slack`.
    """
    grid = config.grid
    state = initial if initial is not None else RadialField(grid, np.zeros(grid.size), t0)
    operator = DuhamelOperator(grid, config.dt)
    deltas = sorted(deltas, reverse=True)
    ratios = []
    for delta in deltas:
        window = solve_window(state, delta, F, config, operator=operator)
        measured = [b / a for a, b in zip(window.gaps[:-1], window.gaps[1:]) if a > GAP_FLOOR and b > GAP_FLOOR]
        ratios.append(max(measured) if measured else 0.0)
        logger.info("contração delta=%.4g: razão %.3e em %d iterações", delta, ratios[-1], window.iterations)
    conclusive = len(ratios) >= 2 and all(r > 0.0 for r in ratios)
    normalized = [
        (b / a) / math.sqrt(d1 / d0)
        for (a, b), (d0, d1) in zip(zip(ratios[:-1], ratios[1:]), zip(deltas[:-1], deltas[1:])) if a > 0.0
    ]
    worst = max(normalized, default=0.0)
    return CheckReport(
        'duhamel.contraction_scaling', conclusive and worst <= 1.0 + slack, worst, 1.0 + slack,
        conclusive=conclusive, details={'deltas': deltas, 'ratios': ratios},
    )
