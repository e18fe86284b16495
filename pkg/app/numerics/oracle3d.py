"""
Oráculo tridimensional grosseiro para a equação do calor

Diferenças finitas de 7 pontos numa grade cúbica centrada em células,
Crank-Nicolson no tempo e gradiente conjugado com pré-condicionador de
Jacobi. Serve para conferir, sem passar pela redução radial, as tabelas de
modo 0 em m = 3.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, cg

from app.numerics.errors import DomainError, GridCompatibilityError, SolverConvergenceError
from app.numerics.report import CheckReport

logger = logging.getLogger(__name__)

MAX_CELLS = 64
CG_RTOL = 1e-10


@dataclass
class Grid3D:
    """
    Cubo [-L, L]^3 com `cells` células por eixo

    Attributes:
        L (float): meia aresta do cubo
        cells (int): par, no máximo 64
        domain (DomainSpec | None): bola/anel; None usa o interior do cubo
            (a camada externa de células carrega o dado de fronteira)
    """
    L: float
    cells: int
    domain: Optional[object] = None
    mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.cells % 2 or not 4 <= self.cells <= MAX_CELLS:
            raise DomainError(f"cells deve ser par entre 4 e {MAX_CELLS}, recebido {self.cells}")
        if not self.L > 0.0:
            raise DomainError("L deve ser positivo")
        radius = self.radius
        if self.domain is None:
            inner = np.zeros((self.cells,) * 3, dtype=bool)
            inner[1:-1, 1:-1, 1:-1] = True
            self.mask = inner
            return
        if self.domain.m != 3:
            raise GridCompatibilityError(f"oráculo é tridimensional, domínio em m={self.domain.m}")
        if self.L < self.domain.R + 2.0 * self.h:
            raise GridCompatibilityError(
                f"cubo L={self.L} precisa de duas células além de R={self.domain.R} (h={self.h:g})"
            )
        self.mask = (radius < self.domain.R) & (radius > self.domain.inner_radius)

    @property
    def h(self):
        return 2.0 * self.L / self.cells

    @property
    def axis(self):
        return -self.L + (np.arange(self.cells) + 0.5) * self.h

    @property
    def mesh(self):
        return np.meshgrid(self.axis, self.axis, self.axis, indexing='ij')

    @property
    def radius(self):
        x, y, z = self.mesh
        return np.sqrt(x * x + y * y + z * z)


@dataclass
class Trajectory3D:
    grid: Grid3D
    times: np.ndarray
    fields: list

    def at(self, t):
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"t={t} não foi gravado")
        return self.fields[idx]


def laplacian(grid):
    """Laplaciano de 7 pontos no cubo inteiro (linhas da máscara são as usadas)"""
    n = grid.cells
    second = sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n)) / grid.h ** 2
    eye = sparse.identity(n)
    return (
        sparse.kron(sparse.kron(second, eye), eye)
        + sparse.kron(sparse.kron(eye, second), eye)
        + sparse.kron(sparse.kron(eye, eye), second)
    ).tocsr()


BoundaryData = Union[float, Callable[[np.ndarray, np.ndarray, np.ndarray, float], np.ndarray]]


def _boundary_values(grid, boundary, t, outside):
    if callable(boundary):
        x, y, z = (c.ravel()[outside] for c in grid.mesh)
        return np.asarray(boundary(x, y, z, t), dtype=float) * np.ones(outside.size)
    return np.full(outside.size, float(boundary))


def heat_solve_3d(grid, initial, boundary, horizon, dt, record_times=None):
    """
    Evolui u_t = Laplaciano(u) nas células da máscara

    Args:
        grid (Grid3D): cubo e máscara
        initial: callable (x, y, z) -> valores ou array (cells,)*3
        boundary: float ou callable (x, y, z, t) nas células fora da máscara
        horizon (float): tempo final, múltiplo de dt
        dt (float): passo
        record_times: instantes gravados (default: só o final)

    Returns:
        Trajectory3D
    """
    steps = int(round(horizon / dt))
    if steps < 1 or abs(steps * dt - horizon) > 1e-9 * max(horizon, dt):
        raise DomainError(f"horizonte {horizon} não é múltiplo de dt={dt}")
    record_times = [horizon] if record_times is None else sorted(record_times)
    record_steps = {}
    for tau in record_times:
        k = int(round(tau / dt))
        if abs(k * dt - tau) > 1e-9 * max(tau, dt) or not 0 <= k <= steps:
            raise DomainError(f"instante {tau} não está na malha temporal")
        record_steps[k] = tau

    mask = grid.mask.ravel()
    inside = np.nonzero(mask)[0]
    outside = np.nonzero(~mask)[0]
    lap = laplacian(grid)
    A = lap[inside][:, inside].tocsr()
    B = lap[inside][:, outside].tocsr()
    half = 0.5 * dt
    system = (sparse.identity(inside.size, format='csr') - half * A).tocsr()
    inv_diag = 1.0 / system.diagonal()
    jacobi = LinearOperator(system.shape, matvec=lambda v: inv_diag * v)

    if callable(initial):
        u0 = np.asarray(initial(*grid.mesh), dtype=float) * np.ones((grid.cells,) * 3)
    else:
        u0 = np.asarray(initial, dtype=float)
    if u0.shape != (grid.cells,) * 3:
        raise GridCompatibilityError(f"dado inicial com forma {u0.shape}")
    u = u0.ravel()[inside].copy()
    b_old = _boundary_values(grid, boundary, 0.0, outside)

    def snapshot(values, b):
        full = np.empty(grid.cells ** 3)
        full[inside] = values
        full[outside] = b
        return full.reshape((grid.cells,) * 3)

    times, fields = [], []
    if 0 in record_steps:
        times.append(0.0)
        fields.append(snapshot(u, b_old))
    for k in range(1, steps + 1):
        b_new = _boundary_values(grid, boundary, k * dt, outside)
        rhs = u + half * (A @ u) + half * (B @ (b_old + b_new))
        u, info = cg(system, rhs, x0=u, rtol=CG_RTOL, atol=0.0, M=jacobi)
        if info != 0:
            raise SolverConvergenceError(f"gradiente conjugado não convergiu no passo {k} (info={info})")
        b_old = b_new
        if k in record_steps:
            times.append(record_steps[k])
            fields.append(snapshot(u, b_new))
    logger.debug("oráculo 3-D: %d células ativas, %d passos", inside.size, steps)
    return Trajectory3D(grid, np.array(times), fields)


def shell_average(grid, field, width=None):
    """
    Médias por cascas de largura h sobre as células da máscara

    Returns:
        (centros, médias, contagens) das cascas não vazias
    """
    width = grid.h if width is None else width
    radius = grid.radius[grid.mask]
    values = np.asarray(field)[grid.mask]
    bins = np.floor(radius / width).astype(int)
    counts = np.bincount(bins)
    sums = np.bincount(bins, weights=values)
    used = counts > 0
    centers = (np.arange(counts.size) + 0.5) * width
    return centers[used], sums[used] / counts[used], counts[used]


def angular_deviation(grid, field):
    """max |u - perfil radial interpolado| / pico nas células da máscara"""
    centers, averages, _ = shell_average(grid, field)
    values = np.asarray(field)[grid.mask]
    profile = np.interp(grid.radius[grid.mask], centers, averages)
    peak = float(np.max(np.abs(values)))
    return float(np.max(np.abs(values - profile))) / max(peak, 1e-300)


def compare_radialization(table, grid, profile, tau, dt, tol=0.02, exclude_cells=2):
    """
    Tabela de modo 0 aplicada a um perfil radial contra o oráculo 3-D

    O oráculo evolui profile(|x|) com Dirichlet nulo fora do domínio; a
    tabela dá u(r) = sum_j G0(r, r_j; tau) profile(r_j) peso_j. O desvio é
    a média por casca de (u_3D - u_tabela(|x|)), relativa ao pico,
    excluindo cascas a menos de exclude_cells células da fronteira.
    """
    if table.domain.m != 3 or not table.has_all_sources:
        raise GridCompatibilityError("comparação exige tabela em m=3 com todas as fontes")
    k = table.time_index(tau)
    radii = table.grid.radii
    predicted = table.values[:, :, k] @ (table.grid.shell_weights() * profile(radii))

    trajectory = heat_solve_3d(
        grid, lambda x, y, z: profile(np.sqrt(x * x + y * y + z * z)), 0.0, tau, dt,
    )
    field3d = trajectory.at(tau)
    residual = np.zeros_like(field3d)
    residual[grid.mask] = field3d[grid.mask] - np.interp(grid.radius[grid.mask], radii, predicted)
    centers, mean_residual, _ = shell_average(grid, residual)
    keep = (centers <= table.domain.R - exclude_cells * grid.h) & (centers >= table.domain.inner_radius + exclude_cells * grid.h)
    peak = float(np.max(np.abs(predicted)))
    deviation = float(np.max(np.abs(mean_residual[keep]))) / peak
    spread = angular_deviation(grid, field3d)
    logger.info("oráculo N3=%d: desvio radial %.3e, desvio angular %.3e", grid.cells, deviation, spread)
    return CheckReport(
        'oracle.radialization', deviation <= tol, deviation, tol,
        details={'cells': grid.cells, 'h': grid.h, 'tau': tau, 'angular_deviation': spread},
    )
