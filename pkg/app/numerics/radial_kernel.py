"""
Núcleo do calor em R^m e sua redução radial (modo 0)

O núcleo de modo 0 K(r, r'; tau) é a média de Gamma sobre a esfera |y| = r'
com |x| = r. Para campos radiais,

    (e^{tau Delta} v)(r) = integral K(r, r'; tau) v(r') |S^{m-1}| r'^{m-1} dr'

e o fator |S^{m-1}| r'^{m-1} é o peso de casca (shell weight) da grade.
"""
import functools
import hashlib
import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy import integrate, special

from app.numerics.errors import DomainError, GridCompatibilityError
from app.numerics.report import CheckReport

logger = logging.getLogger(__name__)

QUADRATURE_START_NODES = 64
QUADRATURE_MAX_NODES = 1024
QUADRATURE_RTOL = 1e-12

# e^{-50} ~ 2e-22: abaixo disso o integrando angular é descartado
_ANGULAR_CUTOFF = 50.0
_SMALL_ARGUMENT = 1e-8


def shell_area(m):
    """Área da esfera unitária S^{m-1}"""
    return 2.0 * math.pi ** (m / 2.0) / math.gamma(m / 2.0)


def gradient_kernel_constant(m):
    """
    Constante C5' da estimativa de gradiente do termo de Duhamel

    ||grad int_0^delta e^{(delta-s)Delta} f ds|| <= C5' ||f|| sqrt(delta),
    com C5' = 2 Gamma((m+1)/2) / Gamma(m/2) (integral de |grad Gamma|).
    """
    return 2.0 * math.gamma((m + 1) / 2.0) / math.gamma(m / 2.0)


class RadialGrid:
    """
    Grade radial r_0 < r_1 < ... < r_{N-1} em dimensão m

    Attributes:
        radii (ndarray): raios (somente leitura)
        dimension (int): dimensão m do espaço ambiente
    """
    MIN_NODES = 16

    def __init__(self, radii, dimension):
        radii = np.array(radii, dtype=float)
        if radii.ndim != 1 or radii.size < self.MIN_NODES:
            raise DomainError(f"grade radial precisa de ao menos {self.MIN_NODES} nós")
        if int(dimension) != dimension or dimension < 3:
            raise DomainError(f"dimensão deve ser inteira e >= 3, recebido {dimension}")
        if not np.all(np.isfinite(radii)) or radii[0] < 0.0 or np.any(np.diff(radii) <= 0.0):
            raise DomainError("raios devem ser finitos, não negativos e estritamente crescentes")
        radii.setflags(write=False)
        self.radii = radii
        self.dimension = int(dimension)
        self._digest = hashlib.sha256(radii.astype('<f8').tobytes()).hexdigest()

    @classmethod
    def uniform(cls, r_max, cells, dimension):
        """Grade uniforme em [0, r_max] com `cells` células"""
        return cls(np.linspace(0.0, r_max, int(cells) + 1), dimension)

    @classmethod
    def uniform_spacing(cls, lo, hi, spacing, dimension):
        """
        Grade uniforme em [lo, hi] com passo `spacing`

        Os nós ficam na rede lo + k*spacing; hi - lo precisa ser múltiplo
        do passo, senão GridCompatibilityError.
        """
        count = (hi - lo) / spacing
        cells = int(round(count))
        if cells < 1 or abs(cells - count) > 1e-8 * max(1.0, count):
            raise GridCompatibilityError(
                f"intervalo [{lo}, {hi}] não é múltiplo do passo {spacing}"
            )
        return cls(lo + spacing * np.arange(cells + 1), dimension)

    @classmethod
    def graded(cls, r_max, cells, dimension, r_core, ratio=1.25, r_min=None):
        """
        Grade geométrica perto da origem e uniforme em [r_core, r_max]

        Usada para amostrar perfis do tipo r^{2-m}. Se r_min for dado a
        grade começa nele (sem o nó r = 0).
        """
        uniform = np.linspace(r_core, r_max, int(cells) + 1)
        floor = r_min if r_min is not None else r_core * 1e-4
        inner = []
        r = r_core / ratio
        while r > floor * (1.0 + 1e-12):
            inner.append(r)
            r /= ratio
        inner.append(floor)
        head = np.array(inner[::-1])
        if r_min is None:
            head = np.concatenate([[0.0], head])
        return cls(np.concatenate([head, uniform]), dimension)

    @property
    def size(self):
        return self.radii.size

    @property
    def r_max(self):
        return float(self.radii[-1])

    @property
    def spacing(self):
        """Passo da grade se for uniforme, senão None"""
        steps = np.diff(self.radii)
        mean = float(steps.mean())
        if np.max(np.abs(steps - mean)) <= 1e-9 * max(mean, 1e-300) + 1e-12 * self.r_max:
            return mean
        return None

    def shell_weights(self):
        """Pesos do trapézio vezes |S^{m-1}| r^{m-1}"""
        steps = np.diff(self.radii)
        w = np.zeros_like(self.radii)
        w[:-1] += 0.5 * steps
        w[1:] += 0.5 * steps
        return w * shell_area(self.dimension) * self.radii ** (self.dimension - 1)

    def node_index(self, r, tol=1e-9):
        """Índice do nó igual a r; GridCompatibilityError se r não é nó"""
        idx = int(np.argmin(np.abs(self.radii - r)))
        if abs(self.radii[idx] - r) > tol * max(1.0, self.r_max):
            raise GridCompatibilityError(f"raio {r} não é nó da grade")
        return idx

    def fingerprint(self):
        return {
            'dimension': self.dimension,
            'size': self.size,
            'first': float(self.radii[0]),
            'last': self.r_max,
            'sha256': self._digest,
        }

    def __eq__(self, other):
        if not isinstance(other, RadialGrid):
            return NotImplemented
        return self.dimension == other.dimension and self._digest == other._digest

    def __hash__(self):
        return hash((self.dimension, self._digest))

    def __repr__(self):
        return f'<RadialGrid m={self.dimension} N={self.size} [{self.radii[0]:g}, {self.r_max:g}]>'


def radial_derivative(grid, values):
    """
    Derivada radial de segunda ordem (central no interior, unilateral nas bordas)

    Aceita arrays (..., N); na origem a derivada de um campo radial suave é 0.
    """
    values = np.asarray(values, dtype=float)
    deriv = np.gradient(values, grid.radii, axis=-1, edge_order=2)
    if grid.radii[0] == 0.0:
        deriv[..., 0] = 0.0
    return deriv


@dataclass
class RadialField:
    """Amostras de uma função radial na grade, num instante"""
    grid: RadialGrid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.radii.shape:
            raise DomainError(
                f"campo com forma {values.shape} incompatível com a grade {self.grid.radii.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("campo radial com valores não finitos")
        self.values = values

    @classmethod
    def constant(cls, grid, value, time=0.0):
        return cls(grid, np.full(grid.size, float(value)), time)

    @classmethod
    def from_function(cls, grid, fn, time=0.0):
        return cls(grid, np.broadcast_to(fn(grid.radii), grid.radii.shape), time)

    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    def gradient(self):
        return radial_derivative(self.grid, self.values)

    def c1_norm(self):
        """sup|u| + sup|du/dr|, o funcional cuja finitude define T0"""
        return self.sup_norm() + float(np.max(np.abs(self.gradient())))


@dataclass(frozen=True)
class HeatKernelParams:
    m: int
    tau: float

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 3:
            raise DomainError(f"dimensão deve ser inteira e >= 3, recebido {self.m}")
        if not (self.tau > 0.0) or not math.isfinite(self.tau):
            raise DomainError(f"tau deve ser positivo, recebido {self.tau}")


def eval_gamma(sq_dist, params):
    """
    Gamma = (4 pi tau)^{-m/2} exp(-|x-y|^2 / (4 tau))

    Args:
        sq_dist: |x - y|^2 (escalar ou array, >= 0)
        params (HeatKernelParams): dimensão e tau

    Returns:
        float ou ndarray
    """
    sq = np.asarray(sq_dist, dtype=float)
    if np.any(sq < 0.0):
        raise DomainError("distância ao quadrado negativa")
    m, tau = params.m, params.tau
    value = (4.0 * math.pi * tau) ** (-0.5 * m) * np.exp(-sq / (4.0 * tau))
    return float(value) if value.ndim == 0 else value


def mode0_kernel(r, rp, params, method='bessel'):
    """
    Núcleo de modo 0 K(r, r'; tau), média esférica de Gamma

    Args:
        r, rp: raios (escalares ou arrays com broadcasting), >= 0
        params (HeatKernelParams): dimensão e tau
        method (str): 'bessel' (forma fechada com I_nu escalada) ou
            'quadrature' (Gauss-Legendre no ângulo polar)

    Returns:
        float ou ndarray com a forma do broadcasting de r e rp
    """
    r = np.asarray(r, dtype=float)
    rp = np.asarray(rp, dtype=float)
    if np.any(r < 0.0) or np.any(rp < 0.0):
        raise DomainError("raios devem ser não negativos")
    shape = np.broadcast(r, rp).shape
    r1 = np.broadcast_to(r, shape).ravel()
    rp1 = np.broadcast_to(rp, shape).ravel()
    if method == 'bessel':
        values = _mode0_bessel(r1, rp1, params.m, params.tau)
    elif method == 'quadrature':
        values = _mode0_quadrature(r1, rp1, params.m, params.tau)
    else:
        raise DomainError(f"método desconhecido: {method}")
    values = values.reshape(shape)
    return float(values) if values.ndim == 0 else values


def _gaussian_part(r, rp, m, tau):
    return (4.0 * math.pi * tau) ** (-0.5 * m) * np.exp(-((r - rp) ** 2) / (4.0 * tau))


def _mode0_bessel(r, rp, m, tau):
    # média de e^{a cos(theta)} sobre S^{m-1} vezes e^{-a}
    nu = 0.5 * m - 1.0
    a = r * rp / (2.0 * tau)
    average = np.empty_like(a)
    small = a < _SMALL_ARGUMENT
    a_small = a[small]
    average[small] = (1.0 + a_small ** 2 / (4.0 * (nu + 1.0))) * np.exp(-a_small)
    a_big = a[~small]
    average[~small] = (
        math.gamma(nu + 1.0) * np.exp(nu * np.log(2.0 / a_big)) * special.ive(nu, a_big)
    )
    return _gaussian_part(r, rp, m, tau) * average


def _mode0_quadrature(r, rp, m, tau):
    a = r * rp / (2.0 * tau)
    omega = math.sqrt(math.pi) * math.gamma((m - 1) / 2.0) / math.gamma(m / 2.0)
    with np.errstate(divide='ignore'):
        theta_max = np.arccos(np.maximum(-1.0, 1.0 - _ANGULAR_CUTOFF / a))

    def integrate(nodes):
        x, w = np.polynomial.legendre.leggauss(nodes)
        half = 0.5 * theta_max[:, None]
        theta = half * (x[None, :] + 1.0)
        integrand = np.exp(-2.0 * a[:, None] * np.sin(0.5 * theta) ** 2) * np.sin(theta) ** (m - 2)
        return (integrand * w[None, :]).sum(axis=1) * half[:, 0]

    nodes = QUADRATURE_START_NODES
    previous = integrate(nodes)
    while nodes < QUADRATURE_MAX_NODES:
        nodes *= 2
        current = integrate(nodes)
        converged = np.all(np.abs(current - previous) <= QUADRATURE_RTOL * np.abs(current))
        previous = current
        if converged:
            break
    else:
        logger.warning("quadratura angular não atingiu %.0e com %d nós", QUADRATURE_RTOL, nodes)
    return _gaussian_part(r, rp, m, tau) * previous / omega


def kernel_matrix(grid, tau, tail=True):
    """
    Operador discreto e^{tau Delta} na grade: K(r_i, r_j; tau) * peso_j

    Com tail=True a massa além do último nó, 1 - soma da linha, é somada
    à última coluna (o valor do último nó é levado ao infinito): constantes
    são preservadas exatamente.
    """
    return _kernel_matrix_cached(grid, float(tau), bool(tail))


@functools.lru_cache(maxsize=64)
def _kernel_matrix_cached(grid, tau, tail):
    params = HeatKernelParams(grid.dimension, tau)
    r = grid.radii
    spacing = float(np.max(np.diff(r)))
    if spacing > 1.4 * math.sqrt(tau):
        logger.warning("passo %.3g não resolve a largura do núcleo sqrt(tau)=%.3g", spacing, math.sqrt(tau))
    matrix = mode0_kernel(r[:, None], r[None, :], params) * grid.shell_weights()[None, :]
    if tail:
        matrix[:, -1] += 1.0 - matrix.sum(axis=1)
    matrix.setflags(write=False)
    return matrix


def semigroup_apply(u0, tau):
    """
    Evolução livre do calor de u0 por um tempo tau

    Args:
        u0 (RadialField): dado limitado
        tau (float): tempo decorrido > 0

    Returns:
        RadialField: e^{tau Delta} u0 no instante u0.time + tau
    """
    if not np.all(np.isfinite(u0.values)):
        raise DomainError("dado inicial ilimitado")
    HeatKernelParams(u0.grid.dimension, tau)
    matrix = kernel_matrix(u0.grid, tau)
    return RadialField(u0.grid, matrix @ u0.values, u0.time + tau)


@dataclass(frozen=True)
class DuhamelQuadrature:
    """Regra do ponto médio com `steps` subintervalos"""
    grid: RadialGrid
    steps: int = 32

    def __post_init__(self):
        if self.steps < 1:
            raise DomainError("steps deve ser >= 1")


SourcePath = Union[Callable[[float], object], Sequence]


def duhamel_integrate(source, t0, t, config):
    """
    Integral de Duhamel int_{t0}^{t} e^{(t-s)Delta} source(s) ds

    Args:
        source: função s -> RadialField/array/escalar, ou sequência de
            steps+1 campos nos nós uniformes de [t0, t]
        t0, t (float): janela, t >= t0
        config (DuhamelQuadrature): grade e número de passos

    Returns:
        RadialField no instante t
    """
    grid = config.grid
    if t < t0:
        raise DomainError(f"janela invertida [{t0}, {t}]")
    if t == t0:
        return RadialField(grid, np.zeros(grid.size), t)
    steps = config.steps
    dt = (t - t0) / steps
    step_op = kernel_matrix(grid, dt)
    half_op = kernel_matrix(grid, 0.5 * dt)
    total = np.zeros(grid.size)
    # D_{k+1} = E D_k + dt E_{1/2} f_{k+1/2}
    for f_mid in _midpoint_values(source, t0, dt, steps, grid):
        total = step_op @ total + dt * (half_op @ f_mid)
    return RadialField(grid, total, t)


def duhamel_error_estimate(source, t0, t, config):
    """Estimativa de Richardson do erro da regra do ponto médio (steps contra steps/2)"""
    if config.steps % 2:
        raise DomainError("estimativa de Richardson exige número par de passos")
    if callable(source):
        coarse_source = source
    else:
        coarse_source = list(source)[::2]
    fine = duhamel_integrate(source, t0, t, config)
    coarse = duhamel_integrate(coarse_source, t0, t, DuhamelQuadrature(config.grid, config.steps // 2))
    return float(np.max(np.abs(fine.values - coarse.values))) / 3.0


def _as_values(sample, grid):
    if isinstance(sample, RadialField):
        sample = sample.values
    values = np.broadcast_to(np.asarray(sample, dtype=float), grid.radii.shape)
    if not np.all(np.isfinite(values)):
        raise DomainError("fonte com valores não finitos")
    return values


def _midpoint_values(source, t0, dt, steps, grid):
    if callable(source):
        for k in range(steps):
            yield _as_values(source(t0 + (k + 0.5) * dt), grid)
        return
    samples = list(source)
    if len(samples) != steps + 1:
        raise DomainError(f"caminho da fonte com {len(samples)} amostras, esperado {steps + 1}")
    previous = _as_values(samples[0], grid)
    for sample in samples[1:]:
        current = _as_values(sample, grid)
        yield 0.5 * (previous + current)
        previous = current


def mode0_kernel_m3(r, rp, tau):
    """
    Forma fechada em m = 3

    K = (4 pi tau)^{-3/2} (tau / (r r')) (e^{-(r-r')^2/4tau} - e^{-(r+r')^2/4tau}), r, r' > 0
    """
    r = np.asarray(r, dtype=float)
    rp = np.asarray(rp, dtype=float)
    if np.any(r <= 0.0) or np.any(rp <= 0.0):
        raise DomainError("forma fechada exige r, r' > 0")
    HeatKernelParams(3, tau)
    near = np.exp(-((r - rp) ** 2) / (4.0 * tau))
    return (4.0 * math.pi * tau) ** -1.5 * (tau / (r * rp)) * near * -np.expm1(-(r * rp) / tau)


def normalization_defect(m, radii, taus):
    """max |int K(r, r'; tau) |S^{m-1}| r'^{m-1} dr' - 1| na malha (r, tau)"""
    area = shell_area(m)
    worst = 0.0
    for tau in taus:
        params = HeatKernelParams(m, tau)
        reach = 40.0 * math.sqrt(tau)
        for r in radii:
            lo, hi = max(0.0, r - reach), r + reach
            mass, _ = integrate.quad(
                lambda s: mode0_kernel(r, s, params) * area * s ** (m - 1),
                lo, hi, points=[r] if lo < r else None, epsabs=1e-13, epsrel=1e-12, limit=200,
            )
            worst = max(worst, abs(mass - 1.0))
    return worst


def closed_form_defect(radii, taus, method='quadrature'):
    """Maior desvio relativo (ao pico em cada tau) entre mode0_kernel e a forma fechada de m = 3"""
    r = np.asarray(radii, dtype=float)[:, None]
    rp = np.asarray(radii, dtype=float)[None, :]
    worst = 0.0
    for tau in taus:
        exact = mode0_kernel_m3(r, rp, tau)
        approx = mode0_kernel(r, rp, HeatKernelParams(3, tau), method=method)
        worst = max(worst, float(np.max(np.abs(approx - exact))) / float(np.max(exact)))
    return worst


def kernel_identity_checks(m_values=(3, 5), tol_mass=1e-8, tol_closed=1e-10):
    """Normalização de K numa malha 10x10 e a identidade de m = 3 numa malha 20x20x5"""
    radii = np.linspace(0.0, 3.0, 10)
    taus = np.geomspace(0.01, 1.0, 10)
    reports = []
    for m in m_values:
        defect = normalization_defect(m, radii, taus)
        reports.append(CheckReport(f'kernel.normalization.m{m}', defect <= tol_mass, defect, tol_mass))
    closed = closed_form_defect(np.linspace(0.1, 3.0, 20), np.geomspace(0.01, 1.0, 5))
    reports.append(CheckReport('kernel.closed_form_m3', closed <= tol_closed, closed, tol_closed))
    return reports
