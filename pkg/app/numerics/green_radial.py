"""
Núcleos de Green de modo 0 da bola, do anel e do exterior da bola unitária

Para cada fonte r'_j resolve-se a equação radial do calor para o
complemento calórico g com dado de Dirichlet igual ao traço de modo 0 de
Gamma (opcionalmente mollificado por eta(tau/delta)) e dado inicial nulo;
o núcleo é G0 = K - g. A discretização espacial é de volumes finitos
conservativos (operador simétrico, origem regular por construção) e a
temporal é Crank-Nicolson com partida de Rannacher (meios passos de Euler
implícito com a mesma matriz).

Tolerâncias de verificação (tol_discrete, tol_sym) são relativas ao pico
da tabela.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, ClassVar, Optional

import numpy as np
from scipy import sparse, stats
from scipy.sparse.linalg import splu

from app.numerics.errors import (
    ConditioningError,
    DomainError,
    GridCompatibilityError,
    TruncationError,
)
from app.numerics.radial_kernel import HeatKernelParams, RadialGrid, mode0_kernel, shell_area
from app.numerics.report import CheckReport

logger = logging.getLogger(__name__)

SCHEME_VERSION = 'cn-rannacher-1'
MIN_INNER_CELLS = 4


@dataclass(frozen=True)
class DomainSpec:
    """
    Domínio radial: bola B_R, anel B_R \\ B_eps ou exterior de B_1 truncado em R_far

    Para o exterior, eps = 1 e R = R_far.
    """
    BALL: ClassVar[str] = 'ball'
    ANNULUS: ClassVar[str] = 'annulus'
    EXTERIOR: ClassVar[str] = 'exterior'

    kind: str
    m: int
    R: float
    eps: Optional[float] = None

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 3:
            raise DomainError(f"dimensão deve ser inteira e >= 3, recebido {self.m}")
        if self.kind == self.BALL:
            if self.eps is not None or not self.R > 0.0:
                raise DomainError("bola exige R > 0 e nenhum raio interno")
        elif self.kind == self.ANNULUS:
            if self.eps is None or not 0.0 < self.eps < self.R:
                raise DomainError(f"anel exige 0 < eps < R, recebido eps={self.eps}, R={self.R}")
        elif self.kind == self.EXTERIOR:
            if self.eps != 1.0 or self.R < 10.0:
                raise DomainError(f"exterior exige raio interno 1 e R_far >= 10, recebido {self.R}")
        else:
            raise DomainError(f"tipo de domínio desconhecido: {self.kind}")

    @classmethod
    def ball(cls, R, m):
        return cls(cls.BALL, m, float(R))

    @classmethod
    def annulus(cls, eps, R, m):
        return cls(cls.ANNULUS, m, float(R), float(eps))

    @classmethod
    def exterior(cls, R_far, m):
        return cls(cls.EXTERIOR, m, float(R_far), 1.0)

    @property
    def inner_radius(self):
        return 0.0 if self.eps is None else self.eps

    @property
    def R_far(self):
        return self.R if self.kind == self.EXTERIOR else None

    @property
    def has_inner_boundary(self):
        return self.kind != self.BALL

    @property
    def has_outer_boundary(self):
        """Fronteira externa física (no exterior, R_far é só truncamento)"""
        return self.kind != self.EXTERIOR

    def boundary_distance(self, r):
        """Distância de r à fronteira física do domínio"""
        r = np.asarray(r, dtype=float)
        if self.kind == self.BALL:
            return self.R - r
        if self.kind == self.ANNULUS:
            return np.minimum(r - self.eps, self.R - r)
        return r - self.eps

    def to_dict(self):
        return {'kind': self.kind, 'm': self.m, 'R': self.R, 'eps': self.eps}


def smooth_step(s):
    """eta: 0 em s <= 1/2, 1 em s >= 1, C-infinito e crescente"""
    s = np.asarray(s, dtype=float)
    rise = _psi(2.0 * s - 1.0)
    fall = _psi(2.0 - 2.0 * s)
    return rise / (rise + fall)


def _psi(x):
    positive = x > 0.0
    safe = np.where(positive, x, 1.0)
    return np.where(positive, np.exp(-1.0 / safe), 0.0)


@dataclass(frozen=True)
class Mollifier:
    """Rampa eta_delta(tau) = eta(tau/delta) aplicada ao dado de fronteira"""
    delta: float
    profile: str = 'exp_step'

    def __post_init__(self):
        if not 0.0 < self.delta <= 1.0:
            raise DomainError(f"delta deve estar em (0, 1], recebido {self.delta}")
        if self.profile != 'exp_step':
            raise DomainError(f"perfil de mollificador desconhecido: {self.profile}")

    def eta(self, tau):
        return smooth_step(np.asarray(tau, dtype=float) / self.delta)


@dataclass(frozen=True)
class SolverSettings:
    dt: float
    rannacher_steps: int = 2
    tol_discrete: float = 1e-6
    tol_sym: float = 1e-5
    threads: int = 1

    def __post_init__(self):
        if not self.dt > 0.0:
            raise DomainError(f"dt deve ser positivo, recebido {self.dt}")
        if self.rannacher_steps < 0 or self.rannacher_steps % 2:
            raise DomainError("rannacher_steps deve ser par e >= 0 (meios passos)")
        if self.threads < 1:
            raise DomainError("threads deve ser >= 1")


@dataclass
class KernelTable:
    """
    Núcleo de modo 0 tabelado

    Attributes:
        values (ndarray): G0[i, j, k] = G0(r_i, r'_{sources[j]}; times[k])
        sources (ndarray): índices dos nós usados como fonte
        flux_times (ndarray): 0, dt, 2dt, ...; fluxos gravados a cada passo
        flux_inner, flux_outer (ndarray | None): [j, n], derivada normal
            interna na fronteira; pela simetria de G0 é a derivada na
            variável de fonte avaliada no alvo r_{sources[j]}
    """
    domain: DomainSpec
    grid: RadialGrid
    times: np.ndarray
    values: np.ndarray
    sources: np.ndarray
    flux_times: np.ndarray
    flux_inner: Optional[np.ndarray]
    flux_outer: Optional[np.ndarray]
    dt: float
    scheme: str = SCHEME_VERSION
    mollifier_delta: Optional[float] = None
    rannacher_steps: int = 2
    diagnostics: dict = field(default_factory=dict)

    @property
    def source_radii(self):
        return self.grid.radii[self.sources]

    @property
    def peak(self):
        return float(np.max(np.abs(self.values)))

    @property
    def has_all_sources(self):
        return self.sources.size == self.grid.size and np.array_equal(self.sources, np.arange(self.grid.size))

    def time_index(self, tau, rtol=1e-9):
        """Índice k com times[k] == tau; DomainError se tau não está tabelado"""
        idx = int(np.argmin(np.abs(self.times - tau)))
        if abs(self.times[idx] - tau) > rtol * max(abs(tau), 1.0):
            raise DomainError(f"tau={tau} não está na tabela")
        return idx

    def source_column(self, r):
        """Coluna da fonte no raio r"""
        idx = self.grid.node_index(r)
        hits = np.nonzero(self.sources == idx)[0]
        if hits.size == 0:
            raise GridCompatibilityError(f"raio {r} não é fonte da tabela")
        return int(hits[0])

    def summary(self):
        return {
            'domain': self.domain.to_dict(),
            'nodes': self.grid.size,
            'sources': int(self.sources.size),
            'times': self.times.tolist(),
            'dt': self.dt,
            'scheme': self.scheme,
            'mollifier_delta': self.mollifier_delta,
            'peak': self.peak,
            'diagnostics': self.diagnostics,
        }

    def __repr__(self):
        return f'<KernelTable {self.domain.kind} m={self.domain.m} N={self.grid.size} S={self.sources.size}>'


def lattice_grid(lo, hi, spacing, m):
    """
    Grade com nós na rede k*spacing entre lo e hi

    Tabelas construídas com o mesmo passo compartilham nós e podem ser
    comparadas ponto a ponto.
    """
    k_lo = int(round(lo / spacing))
    k_hi = int(round(hi / spacing))
    for value, k in ((lo, k_lo), (hi, k_hi)):
        if abs(k * spacing - value) > 1e-9 * max(1.0, abs(value)):
            raise GridCompatibilityError(f"{value} não é nó da rede de passo {spacing}")
    return RadialGrid(spacing * np.arange(k_lo, k_hi + 1), m)


def fv_operator(radii, m):
    """
    Operador radial de volumes finitos

    Returns:
        (volumes, stiffness): volumes de controle V_i = (f_+^m - f_-^m)/m e
        matriz simétrica S com condutâncias f^{m-1}/dr nas faces; V du/dt = S u
        discretiza u_rr + (m-1)/r u_r (fator |S^{m-1}| cancelado).
    """
    radii = np.asarray(radii, dtype=float)
    faces = 0.5 * (radii[:-1] + radii[1:])
    lower = np.concatenate([[radii[0]], faces])
    upper = np.concatenate([faces, [radii[-1]]])
    volumes = (upper ** m - lower ** m) / m
    conductance = faces ** (m - 1) / np.diff(radii)
    main = np.zeros(radii.size)
    main[:-1] -= conductance
    main[1:] -= conductance
    stiffness = sparse.diags([conductance, main, conductance], [-1, 0, 1], format='csr')
    return volumes, stiffness


def _one_sided_weights(x0, x1, x2):
    h1 = x1 - x0
    h2 = x2 - x0
    a1 = h2 / (h1 * (h2 - h1))
    a2 = -h1 / (h2 * (h2 - h1))
    return np.array([-(a1 + a2), a1, a2])


class _Marcher:
    """Integra o complemento calórico para um bloco de colunas-fonte"""

    def __init__(self, domain, grid, settings, mollifier, nsteps, snapshot_steps):
        self.domain = domain
        self.radii = grid.radii
        self.m = domain.m
        self.dt = settings.dt
        self.rannacher_steps = settings.rannacher_steps
        self.mollifier = mollifier
        self.nsteps = nsteps
        self.snapshot_steps = snapshot_steps

        size = grid.size
        boundary = [size - 1]
        if domain.has_inner_boundary:
            boundary.insert(0, 0)
        self.boundary = np.array(boundary)
        self.interior = np.setdiff1d(np.arange(size), self.boundary)
        # nós com traço de Gamma; no exterior o nó R_far tem g = 0
        self.trace_nodes = self.boundary if domain.has_outer_boundary else np.array([0])

        volumes, stiffness = fv_operator(self.radii, self.m)
        self.volumes = volumes[self.interior]
        stiffness = stiffness.tocsr()
        self.S_II = stiffness[self.interior][:, self.interior].tocsr()
        self.S_IB = stiffness[self.interior][:, self.boundary].tocsr()
        if np.any(self.volumes <= 0.0):
            raise ConditioningError("volume de controle não positivo na grade")
        matrix = (sparse.diags(self.volumes) - 0.5 * self.dt * self.S_II).tocsc()
        try:
            self.lu = splu(matrix)
        except RuntimeError as e:
            raise ConditioningError(f"fatoração LU falhou: {e}") from e

        self.outer_rows = np.array([size - 1, size - 2, size - 3])
        self.outer_weights = _one_sided_weights(*self.radii[self.outer_rows])
        self.inner_rows = np.array([0, 1, 2])
        self.inner_weights = _one_sided_weights(*self.radii[self.inner_rows])

    def boundary_data(self, tau, src):
        data = np.zeros((self.boundary.size, src.size))
        if tau <= 0.0:
            return data
        params = HeatKernelParams(self.m, tau)
        ramp = 1.0 if self.mollifier is None else float(self.mollifier.eta(tau))
        if ramp == 0.0:
            return data
        for row, node in enumerate(self.boundary):
            if node in self.trace_nodes:
                data[row] = mode0_kernel(self.radii[node], src, params) * ramp
        return data

    def run(self, src_nodes):
        src = self.radii[src_nodes]
        ncols = src.size
        size = self.radii.size
        snapshots = np.zeros((size, ncols, len(self.snapshot_steps)))
        flux_inner = np.zeros((ncols, self.nsteps + 1))
        flux_outer = np.zeros((ncols, self.nsteps + 1))

        g = np.zeros((self.interior.size, ncols))
        b_prev = np.zeros((self.boundary.size, ncols))
        half = 0.5 * self.dt
        step = 0
        for k in range(self.rannacher_steps):
            b_new = self.boundary_data((k + 1) * half, src)
            rhs = self.volumes[:, None] * g + half * (self.S_IB @ b_new)
            g = self.lu.solve(rhs)
            b_prev = b_new
            if (k + 1) % 2 == 0:
                step += 1
                self._record(step, g, b_prev, src, snapshots, flux_inner, flux_outer)
        while step < self.nsteps:
            b_new = self.boundary_data((step + 1) * self.dt, src)
            rhs = (
                self.volumes[:, None] * g
                + half * (self.S_II @ g)
                + half * (self.S_IB @ (b_prev + b_new))
            )
            g = self.lu.solve(rhs)
            b_prev = b_new
            step += 1
            self._record(step, g, b_prev, src, snapshots, flux_inner, flux_outer)
        return snapshots, flux_inner, flux_outer

    def _record(self, step, g, b, src, snapshots, flux_inner, flux_outer):
        tau = step * self.dt
        params = HeatKernelParams(self.m, tau)
        full = np.zeros((self.radii.size, src.size))
        full[self.interior] = g
        full[self.boundary] = b

        rows = self.outer_rows
        kernel = mode0_kernel(self.radii[rows][:, None], src[None, :], params) - full[rows]
        flux_outer[:, step] = -(self.outer_weights @ kernel)
        if self.domain.has_inner_boundary:
            rows = self.inner_rows
            kernel = mode0_kernel(self.radii[rows][:, None], src[None, :], params) - full[rows]
            flux_inner[:, step] = self.inner_weights @ kernel

        slot = self.snapshot_steps.get(step)
        if slot is not None:
            snapshots[:, :, slot] = mode0_kernel(self.radii[:, None], src[None, :], params) - full


def _check_grid(domain, grid):
    if grid.dimension != domain.m:
        raise GridCompatibilityError(f"grade em dimensão {grid.dimension}, domínio em {domain.m}")
    scale = max(1.0, domain.R)
    if abs(grid.radii[0] - domain.inner_radius) > 1e-9 * scale:
        raise GridCompatibilityError(f"grade começa em {grid.radii[0]}, domínio em {domain.inner_radius}")
    if abs(grid.radii[-1] - domain.R) > 1e-9 * scale:
        raise GridCompatibilityError(f"grade termina em {grid.radii[-1]}, domínio em {domain.R}")
    if domain.kind == DomainSpec.ANNULUS:
        first_cell = grid.radii[1] - grid.radii[0]
        if domain.eps < MIN_INNER_CELLS * first_cell * (1.0 - 1e-9):
            raise DomainError(
                f"eps={domain.eps} a menos de {MIN_INNER_CELLS} células ({first_cell:g}) da origem"
            )


def _snapshot_steps(times, dt):
    steps = {}
    for slot, tau in enumerate(times):
        k = int(round(tau / dt))
        if k < 1 or abs(k * dt - tau) > 1e-9 * max(tau, dt):
            raise DomainError(f"tau={tau} não é múltiplo positivo de dt={dt}")
        steps[k] = slot
    return steps


def build_table(domain, grid, times, settings, mollifier=None, sources=None):
    """
    Constrói a tabela de G0 para um domínio

    Args:
        domain (DomainSpec): bola, anel ou exterior
        grid (RadialGrid): nós de inner_radius a R
        times: instantes tau > 0, múltiplos de settings.dt
        settings (SolverSettings): passo, partida de Rannacher, threads
        mollifier (Mollifier | None): rampa no dado de fronteira
        sources: índices das fontes (None = todos os nós)

    Returns:
        KernelTable
    """
    _check_grid(domain, grid)
    times = np.array(sorted(float(t) for t in times))
    if times.size == 0 or times[0] <= 0.0 or np.any(np.diff(times) <= 0.0):
        raise DomainError("instantes devem ser positivos e distintos")
    snapshot_steps = _snapshot_steps(times, settings.dt)
    nsteps = max(snapshot_steps)
    if sources is None:
        sources = np.arange(grid.size)
    sources = np.asarray(sources, dtype=int)
    if sources.ndim != 1 or np.any(sources < 0) or np.any(sources >= grid.size):
        raise DomainError("índices de fonte fora da grade")

    marcher = _Marcher(domain, grid, settings, mollifier, nsteps, snapshot_steps)
    live = np.nonzero(np.isin(sources, marcher.interior))[0]
    chunks = [c for c in np.array_split(live, settings.threads) if c.size]
    logger.info(
        "tabela %s m=%d: %d nós, %d fontes, %d passos, %d bloco(s)",
        domain.kind, domain.m, grid.size, sources.size, nsteps, len(chunks),
    )
    if len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=settings.threads) as pool:
            results = list(pool.map(lambda c: marcher.run(sources[c]), chunks))
    else:
        results = [marcher.run(sources[c]) for c in chunks]

    values = np.zeros((grid.size, sources.size, times.size))
    flux_inner = np.zeros((sources.size, nsteps + 1))
    flux_outer = np.zeros((sources.size, nsteps + 1))
    for cols, (snap, f_in, f_out) in zip(chunks, results):
        values[:, cols, :] = snap
        flux_inner[cols] = f_in
        flux_outer[cols] = f_out

    return KernelTable(
        domain=domain,
        grid=grid,
        times=times,
        values=values,
        sources=sources,
        flux_times=settings.dt * np.arange(nsteps + 1),
        flux_inner=flux_inner if domain.has_inner_boundary else None,
        flux_outer=flux_outer if domain.has_outer_boundary else None,
        dt=settings.dt,
        mollifier_delta=None if mollifier is None else mollifier.delta,
        rannacher_steps=settings.rannacher_steps,
    )


TableFactory = Callable[..., KernelTable]


def _factory(factory):
    return factory if factory is not None else build_table


def build_ball_kernel(R, m, grid, times, settings, mollifier=None, sources=None, factory=None):
    """G0 da bola B_R: Dirichlet em R com o traço de Gamma"""
    return _factory(factory)(DomainSpec.ball(R, m), grid, times, settings, mollifier, sources)


def build_annulus_kernel(eps, R, m, grid, times, settings, mollifier=None, sources=None, factory=None):
    """G0 do anel B_R \\ B_eps: Dirichlet nas duas esferas"""
    return _factory(factory)(DomainSpec.annulus(eps, R, m), grid, times, settings, mollifier, sources)


def build_exterior_kernel(R_far, m, grid_spacing, times, settings, source_radii=None,
                          check_truncation=True, truncation_tol=1e-6, factory=None):
    """
    G0 do exterior de B_1, truncado em R_far com g = 0

    Com check_truncation a tabela é refeita com 2*R_far e comparada em
    r, r' <= R_far/2; variação relativa >= truncation_tol gera TruncationError.
    """
    build = _factory(factory)
    domain = DomainSpec.exterior(R_far, m)
    grid = lattice_grid(1.0, R_far, grid_spacing, m)
    if source_radii is None:
        source_radii = grid.radii[(grid.radii > 1.0) & (grid.radii <= 0.5 * R_far + 1e-12)]
    sources = [grid.node_index(r) for r in source_radii]
    table = build(domain, grid, times, settings, None, sources)
    if not check_truncation:
        return table
    table.diagnostics['truncation_tol'] = truncation_tol

    wide_grid = lattice_grid(1.0, 2.0 * R_far, grid_spacing, m)
    wide_sources = [wide_grid.node_index(r) for r in source_radii]
    wide = build(DomainSpec.exterior(2.0 * R_far, m), wide_grid, times, settings, None, wide_sources)
    rows = grid.radii <= 0.5 * R_far + 1e-12
    cols = np.asarray(source_radii) <= 0.5 * R_far + 1e-12
    near = table.values[rows][:, cols]
    far = wide.values[:rows.sum()][:, cols]
    change = float(np.max(np.abs(near - far))) / max(table.peak, 1e-300)
    table.diagnostics['truncation_change'] = change
    logger.info("exterior R_far=%g: variação por duplicação %.3e", R_far, change)
    if change >= truncation_tol:
        raise TruncationError(
            f"truncamento em R_far={R_far} muda a tabela em {change:.2e}; use R_far maior"
        )
    return table


def flux(table, side):
    """
    Derivada normal interna na fronteira ('inner' ou 'outer')

    Returns:
        ndarray [j, n] nos instantes table.flux_times
    """
    if side == 'outer':
        values = table.flux_outer
    elif side == 'inner':
        values = table.flux_inner
    else:
        raise DomainError(f"lado desconhecido: {side}")
    if values is None:
        raise DomainError(f"domínio {table.domain.kind} não tem fronteira {side}")
    return values


# --- alinhamento entre tabelas -------------------------------------------------

def _match(radii_a, radii_b, tol=1e-9):
    near = np.clip(np.searchsorted(radii_b, radii_a), 1, radii_b.size - 1)
    left = radii_b[near - 1]
    choose_left = np.abs(left - radii_a) < np.abs(radii_b[near] - radii_a)
    near = np.where(choose_left, near - 1, near)
    hit = np.abs(radii_b[near] - radii_a) <= tol * max(1.0, radii_a.max(initial=1.0))
    return np.nonzero(hit)[0], near[hit]


def _aligned(a, b, row_range=None, col_range=None):
    """Blocos de a e b nos nós, fontes e instantes comuns"""
    rows_a, rows_b = _match(a.grid.radii, b.grid.radii)
    cols_a, cols_b = _match(a.source_radii, b.source_radii)
    times_a, times_b = _match(a.times, b.times)
    if rows_a.size == 0 or cols_a.size == 0 or times_a.size == 0:
        raise GridCompatibilityError("tabelas sem nós, fontes ou instantes comuns")
    if row_range is not None:
        keep = (a.grid.radii[rows_a] >= row_range[0] - 1e-12) & (a.grid.radii[rows_a] <= row_range[1] + 1e-12)
        rows_a, rows_b = rows_a[keep], rows_b[keep]
    if col_range is not None:
        keep = (a.source_radii[cols_a] >= col_range[0] - 1e-12) & (a.source_radii[cols_a] <= col_range[1] + 1e-12)
        cols_a, cols_b = cols_a[keep], cols_b[keep]
    block_a = a.values[np.ix_(rows_a, cols_a, times_a)]
    block_b = b.values[np.ix_(rows_b, cols_b, times_b)]
    return block_a, block_b, (a.grid.radii[rows_a], a.source_radii[cols_a], a.times[times_a])


def free_kernel_block(m, radii, source_radii, times):
    """K(r_i, r'_j; tau_k) no mesmo layout das tabelas"""
    block = np.empty((radii.size, source_radii.size, len(times)))
    for k, tau in enumerate(times):
        block[:, :, k] = mode0_kernel(radii[:, None], source_radii[None, :], HeatKernelParams(m, tau))
    return block


# --- verificações ----------------------------------------------------------------

def symmetry_defect(table):
    """max |G0(r,r') - G0(r',r)| / pico sobre as fontes da tabela"""
    block = table.values[table.sources]
    return float(np.max(np.abs(block - block.transpose(1, 0, 2)))) / max(table.peak, 1e-300)


def nonnegativity_defect(table):
    return max(0.0, -float(np.min(table.values))) / max(table.peak, 1e-300)


def boundary_defect(table):
    """|G0| nas linhas de Dirichlet com traço de Gamma (0 sem mollificador)"""
    rows = [table.grid.size - 1] if table.domain.has_outer_boundary else []
    if table.domain.has_inner_boundary:
        rows.append(0)
    return float(np.max(np.abs(table.values[rows]))) / max(table.peak, 1e-300)


def flux_negativity(table):
    worst = 0.0
    scale = 0.0
    for side in ('inner', 'outer'):
        values = getattr(table, f'flux_{side}')
        if values is not None:
            worst = max(worst, -float(np.min(values)))
            scale = max(scale, float(np.max(np.abs(values))))
    return max(worst, 0.0) / max(scale, 1e-300)


def conservation_defect(table):
    """
    Massa int G0(r, .; tau) peso de casca: deve ficar <= 1 e decrescer em tau

    Returns:
        (excesso máximo sobre 1, maior aumento entre instantes consecutivos)
    """
    if not table.has_all_sources:
        raise DomainError("conservação exige todas as fontes na tabela")
    mass = np.einsum('ijk,j->ik', table.values, table.grid.shell_weights())
    excess = max(0.0, float(np.max(mass - 1.0)))
    increase = max(0.0, float(np.max(np.diff(mass, axis=1)))) if mass.shape[1] > 1 else 0.0
    return excess, increase


def table_checks(table, settings, label=None):
    """Simetria, não negatividade, fronteira, fluxos e conservação de uma tabela"""
    label = label or table.domain.kind
    tol_d = settings.tol_discrete
    reports = [
        CheckReport(f'{label}.symmetry', symmetry_defect(table) <= settings.tol_sym,
                    symmetry_defect(table), settings.tol_sym),
        CheckReport(f'{label}.nonnegativity', nonnegativity_defect(table) <= tol_d,
                    nonnegativity_defect(table), tol_d),
        CheckReport(f'{label}.flux_sign', flux_negativity(table) <= tol_d,
                    flux_negativity(table), tol_d),
    ]
    if table.mollifier_delta is None:
        defect = boundary_defect(table)
        reports.append(CheckReport(f'{label}.dirichlet_rows', defect <= tol_d, defect, tol_d))
    if table.has_all_sources:
        excess, increase = conservation_defect(table)
        reports.append(CheckReport(
            f'{label}.conservation', max(excess, increase) <= tol_d,
            max(excess, increase), tol_d, details={'excess': excess, 'increase': increase},
        ))
    return reports


def comparison_chain(annulus, ball, ball_wide, tol=1e-6):
    """
    G0_{R,eps} <= G0_R <= G0_{R'} <= K nos nós comuns

    Violações relativas ao pico de K nesses nós.
    """
    a_ann, a_ball, _ = _aligned(annulus, ball)
    b_ball, b_wide, (radii, src, times) = _aligned(ball, ball_wide)
    kernel = free_kernel_block(ball.domain.m, radii, src, times)
    peak = float(np.max(kernel))
    violations = {
        'annulus_le_ball': float(np.max(a_ann - a_ball)) / peak,
        'ball_le_wider_ball': float(np.max(b_ball - b_wide)) / peak,
        'wider_ball_le_free': float(np.max(b_wide - kernel)) / peak,
        'nonnegative': -float(min(np.min(annulus.values), np.min(ball.values), np.min(ball_wide.values))) / peak,
    }
    worst = max(0.0, max(violations.values()))
    return CheckReport('green.comparison_chain', worst <= tol, worst, tol, details=violations)


def exterior_truncation_report(table, tol=None):
    """Variação por duplicação de R_far; sem medição o relatório não passa"""
    change = table.diagnostics.get('truncation_change')
    tol = table.diagnostics.get('truncation_tol', 1e-6) if tol is None else tol
    if change is None:
        return CheckReport('green.exterior.truncation', False, math.inf, tol, conclusive=False,
                           details={'measured': False})
    return CheckReport('green.exterior.truncation', change < tol, change, tol,
                       details={'measured': True, 'R_far': table.domain.R})


def exterior_comparison(tables, tol=1e-6):
    """
    G0_{R1,1} <= G0_{R2,1} <= ... para R_far crescente nos nós comuns

    A tabela de maior R_far faz o papel de G0_{inf,1}. Violações relativas
    ao maior pico entre as tabelas.
    """
    tables = sorted(tables, key=lambda t: t.domain.R)
    if len(tables) < 2:
        raise DomainError("comparação exterior exige ao menos dois R_far")
    if any(t.domain.kind != DomainSpec.EXTERIOR for t in tables):
        raise DomainError("comparação exterior aceita apenas tabelas exteriores")
    if len({t.domain.m for t in tables}) != 1:
        raise GridCompatibilityError("tabelas exteriores com dimensões diferentes")
    peak = max(t.peak for t in tables)
    violations = {}
    for near, far in zip(tables[:-1], tables[1:]):
        a, b, _ = _aligned(near, far)
        violations[f'{near.domain.R:g}<={far.domain.R:g}'] = float(np.max(a - b)) / peak
    violations['nonnegative'] = -min(float(np.min(t.values)) for t in tables) / peak
    worst = max(0.0, max(violations.values()))
    return CheckReport('green.exterior.comparison', worst <= tol, worst, tol,
                       details={**violations, 'R_far': [t.domain.R for t in tables]})


def mollifier_monotonicity(tables_by_delta, exact, tol=1e-6, label='green'):
    """
    0 <= g^{delta'} <= g^{delta} <= traço de Gamma para delta <= delta'

    Em termos de G0: K >= G0_{delta'} >= G0_{delta} >= G0_exato.
    """
    deltas = sorted(tables_by_delta)
    peak = exact.peak
    worst = {}
    for small, large in zip(deltas[:-1], deltas[1:]):
        a, b, _ = _aligned(tables_by_delta[small], tables_by_delta[large])
        worst[f'{small:g}<={large:g}'] = float(np.max(a - b)) / peak
    for delta in deltas:
        a, b, (radii, src, times) = _aligned(exact, tables_by_delta[delta])
        kernel = free_kernel_block(exact.domain.m, radii, src, times)
        worst[f'exact<={delta:g}'] = float(np.max(a - b)) / peak
        worst[f'{delta:g}<=free'] = float(np.max(b - kernel)) / peak
    value = max(0.0, max(worst.values()))
    return CheckReport(f'{label}.mollifier_monotonicity', value <= tol, value, tol, details=worst)


def mollifier_limit(tables_by_delta, exact, min_tau=0.05, tol=1e-4, label='green'):
    """
    Convergência delta -> 0 em subcilindros compactos

    Gap sup |G0_delta - G0| em R/4 <= r, r' <= 3R/4 e tau >= min_tau,
    relativo ao pico da tabela exata.
    """
    R = exact.domain.R
    region = (0.25 * R, 0.75 * R)
    deltas = sorted(tables_by_delta, reverse=True)
    gaps = []
    for delta in deltas:
        a, b, (_, _, times) = _aligned(tables_by_delta[delta], exact, region, region)
        late = times >= min_tau - 1e-12
        if not np.any(late):
            raise DomainError(f"nenhum instante >= {min_tau} na tabela")
        gaps.append(float(np.max(np.abs(a[:, :, late] - b[:, :, late]))) / exact.peak)
    decreasing = all(g1 <= g0 for g0, g1 in zip(gaps[:-1], gaps[1:]))
    final = gaps[-1]
    return CheckReport(
        f'{label}.mollifier_limit', decreasing and final <= tol, final, tol,
        details={'deltas': deltas, 'gaps': gaps, 'decreasing': decreasing},
    )


def verify_epsilon_limit(eps_values, R, m, spacing, dt, times, settings=None, factory=None):
    """
    G0_{R,eps} -> G0_R quando eps -> 0 em K = {R/4 <= r, r' <= 3R/4}

    Returns:
        CheckReport com os gaps por eps, monotonicidade e a ordem ajustada
        (limite m/2 - 1 - 0.2)
    """
    eps_values = sorted(eps_values, reverse=True)
    if len(eps_values) < 2:
        raise DomainError("varredura de eps precisa de ao menos dois valores")
    if eps_values[0] >= 0.25 * R:
        raise DomainError("fontes com r' < eps fora de K: exige eps < R/4")
    settings = settings or SolverSettings(dt=dt)
    region = (0.25 * R, 0.75 * R)
    ball_grid = lattice_grid(0.0, R, spacing, m)
    ball_sources = np.nonzero((ball_grid.radii >= region[0] - 1e-12) & (ball_grid.radii <= region[1] + 1e-12))[0]
    ball = build_ball_kernel(R, m, ball_grid, times, settings, sources=ball_sources, factory=factory)
    gaps = []
    for eps in eps_values:
        grid = lattice_grid(eps, R, spacing, m)
        sources = [grid.node_index(r) for r in ball_grid.radii[ball_sources]]
        annulus = build_annulus_kernel(eps, R, m, grid, times, settings, sources=sources, factory=factory)
        a, b, _ = _aligned(annulus, ball, region, region)
        gaps.append(float(np.max(np.abs(a - b))))
    decreasing = all(g1 < g0 for g0, g1 in zip(gaps[:-1], gaps[1:]))
    fit = stats.linregress(np.log(eps_values), np.log(np.maximum(gaps, 1e-300)))
    threshold = 0.5 * m - 1.0 - 0.2
    return CheckReport(
        'green.epsilon_limit', decreasing and fit.slope >= threshold, float(fit.slope), threshold,
        details={'eps': eps_values, 'gaps': gaps, 'decreasing': decreasing, 'order_stderr': float(fit.stderr)},
    )


def verify_scaling(eps, R, m, spacing, dt, times, settings=None, tol=1e-3, factory=None):
    """
    G_{R,eps}(r, r'; tau) = eps^{-m} G_{R/eps,1}(r/eps, r'/eps; tau/eps^2)

    e a versão para fluxos com eps^{-m-1}. Mismatches relativos aos picos.
    """
    settings = settings or SolverSettings(dt=dt)
    times = np.asarray(times, dtype=float)
    grid = lattice_grid(eps, R, spacing, m)
    scaled_grid = lattice_grid(1.0, R / eps, spacing / eps, m)
    if scaled_grid.size != grid.size or np.max(np.abs(grid.radii / eps - scaled_grid.radii)) > 1e-9 * (R / eps):
        raise GridCompatibilityError("grades não são imagens uma da outra pela escala")
    table = build_annulus_kernel(eps, R, m, grid, times, settings, factory=factory)
    scaled = build_annulus_kernel(
        1.0, R / eps, m, scaled_grid, times / eps ** 2,
        replace(settings, dt=settings.dt / eps ** 2), factory=factory,
    )
    value_gap = float(np.max(np.abs(table.values - eps ** (-m) * scaled.values))) / table.peak
    flux_gap = 0.0
    for side in ('inner', 'outer'):
        a = flux(table, side)
        b = eps ** (-m - 1) * flux(scaled, side)
        flux_gap = max(flux_gap, float(np.max(np.abs(a - b))) / max(float(np.max(np.abs(a))), 1e-300))
    worst = max(value_gap, flux_gap)
    return CheckReport(
        'green.scaling', worst <= tol, worst, tol,
        details={'eps': eps, 'R': R, 'value_mismatch': value_gap, 'flux_mismatch': flux_gap},
    )


@dataclass
class EnvelopeFit:
    C: float
    c: float
    residual: float
    C_bound: float
    points: int

    def to_dict(self):
        return {'C': self.C, 'c': self.c, 'residual': self.residual, 'C_bound': self.C_bound, 'points': self.points}


def fit_gaussian_envelope(tau, d, y, m, prefactor=None, floor=1e-10):
    """
    Ajuste em log de y ~ C * prefactor * tau^{-(m+1)/2} exp(-c d^2 / tau)

    Resíduo = ||r|| / ||y - media(y)|| em log; C_bound eleva C até o
    envelope dominar todos os pontos.
    """
    tau, d, y = (np.asarray(a, dtype=float).ravel() for a in (tau, d, y))
    pre = np.ones_like(y) if prefactor is None else np.asarray(prefactor, dtype=float).ravel()
    keep = np.isfinite(y) & (y > floor * np.max(y)) & (pre > 0.0) & (tau > 0.0)
    if keep.sum() < 3:
        raise DomainError("pontos insuficientes para o ajuste do envelope")
    tau, d, y, pre = tau[keep], d[keep], y[keep], pre[keep]
    target = np.log(y) + 0.5 * (m + 1) * np.log(tau) - np.log(pre)
    design = np.column_stack([np.ones_like(target), -(d * d) / tau])
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    fitted = design @ coef
    spread = float(np.linalg.norm(target - target.mean()))
    residual = float(np.linalg.norm(target - fitted)) / spread if spread > 0.0 else 0.0
    C = math.exp(coef[0])
    C_bound = math.exp(coef[0] + float(np.max(target - fitted)))
    return EnvelopeFit(C=C, c=float(coef[1]), residual=residual, C_bound=C_bound, points=int(keep.sum()))


def _envelope_samples(table, kind):
    m = table.domain.m
    if kind in ('outer_flux', 'inner_flux'):
        side = kind.split('_')[0]
        values = flux(table, side)[:, 1:]
        taus = np.broadcast_to(table.flux_times[1:], values.shape)
        target = table.source_radii
        if side == 'outer':
            dist = table.domain.R - target
        else:
            dist = target - table.domain.inner_radius
        dist = np.broadcast_to(dist[:, None], values.shape)
        keep = dist > 0.0
        return taus[keep], dist[keep], values[keep], None
    if kind == 'kernel':
        r = table.grid.radii[:, None, None]
        rp = table.source_radii[None, :, None]
        taus = np.broadcast_to(table.times[None, None, :], table.values.shape)
        dist = np.broadcast_to(np.abs(r - rp), table.values.shape)
        pre = np.broadcast_to(table.domain.boundary_distance(rp), table.values.shape)
        return taus, dist, table.values, pre
    raise DomainError(f"tipo de envelope desconhecido: {kind}")


def fit_envelopes(tables, kind='outer_flux', tol=0.15, conclusive=True, label=None):
    """
    Envelopes gaussianos dos fluxos (ou do núcleo, com fator de distância à fronteira)

    Para cada tabela ajusta (C, c) no conjunto completo e em horizontes
    crescentes (dependência de C com T). O passe exige resíduo <= tol. Com
    kind='kernel' o fator é delta_R(y) na bola e delta_1(y) = r' - 1 no exterior.
    """
    fits = []
    for table in tables:
        taus, dist, values, pre = _envelope_samples(table, kind)
        fit = fit_gaussian_envelope(taus, dist, values, table.domain.m, pre)
        by_horizon = {}
        for horizon in table.times:
            mask = np.asarray(taus) <= horizon + 1e-12
            try:
                sub = fit_gaussian_envelope(
                    np.asarray(taus)[mask], np.asarray(dist)[mask], np.asarray(values)[mask],
                    table.domain.m, None if pre is None else np.asarray(pre)[mask],
                )
                by_horizon[f'{horizon:g}'] = sub.C_bound
            except DomainError:
                continue
        fits.append({'domain': table.domain.to_dict(), 'fit': fit.to_dict(), 'C_by_horizon': by_horizon})
    worst = max(f['fit']['residual'] for f in fits)
    trend = [(f['domain']['eps'], f['fit']['C_bound']) for f in fits]
    return CheckReport(
        f'green.envelope.{label or kind}', worst <= tol, worst, tol, conclusive=conclusive,
        details={'fits': fits, 'C_trend': trend},
    )


def gaussian_factor_sanity(table):
    """K <= (4 pi tau)^{-m/2} exp(-(r-r')^2/(4 tau)): o envelope com c = 1/4 domina K"""
    m = table.domain.m
    r = table.grid.radii[:, None]
    rp = table.source_radii[None, :]
    worst = 0.0
    for tau in table.times:
        kernel = mode0_kernel(r, rp, HeatKernelParams(m, tau))
        bound = (4.0 * math.pi * tau) ** (-0.5 * m) * np.exp(-((r - rp) ** 2) / (4.0 * tau))
        worst = max(worst, float(np.max(kernel / bound)))
    return CheckReport('green.gaussian_factor', worst <= 1.0 + 1e-12, worst, 1.0)


def flux_decay_exponent(R_values, m, spacing=0.25, dt=0.02, horizon_fraction=0.5, source_r=0.0,
                        tol=0.1, factory=None):
    """
    Decaimento em R do fluxo total de saída a partir de uma fonte fixa

    Espaçamento, dt e fonte r' ficam fixos em unidades físicas para todos os
    R, então a inclinação não sai de uma reescala exata. O envelope
    C R^{m-1}/(R-r')^{m+1} prevê a inclinação de log R^{m-1}(R-r')^{-(m+1)}
    nos R amostrados (-2 quando r' = 0); exige erro relativo <= tol.
    """
    R_values = [float(R) for R in R_values]
    if len(R_values) < 2 or min(R_values) <= source_r:
        raise DomainError("flux_decay exige ao menos dois R maiores que a fonte")
    settings = SolverSettings(dt=dt)
    peaks = []
    for R in R_values:
        grid = lattice_grid(0.0, R, spacing, m)
        horizon = dt * max(1, round(horizon_fraction * R * R / dt))
        table = build_ball_kernel(R, m, grid, [horizon], settings,
                                  sources=[grid.node_index(source_r)], factory=factory)
        total = shell_area(m) * R ** (m - 1) * flux(table, 'outer')[0]
        peaks.append(float(np.max(total)))
    log_R = np.log(R_values)
    fit = stats.linregress(log_R, np.log(peaks))
    envelope = (m - 1) * log_R - (m + 1) * np.log(np.asarray(R_values) - source_r)
    predicted = float(stats.linregress(log_R, envelope).slope)
    error = abs(fit.slope - predicted) / abs(predicted)
    return CheckReport(
        'green.flux_decay', error <= tol, float(fit.slope), predicted,
        details={'R': R_values, 'peaks': peaks, 'source_r': source_r, 'relative_error': error},
    )
