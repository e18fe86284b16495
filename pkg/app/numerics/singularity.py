"""
Classificação de singularidades removíveis de funções calóricas radiais

Uma amostra u(r, t) em [r_min, R] x [t1, t2] é classificada por dois
critérios independentes: o expoente de crescimento sup_t |u| ~ r^{-p}
perto da origem, comparado com m - 2, e a reconstrução de u pela
representação de fronteira na bola B_R (termo inicial com G0 e termo de
fluxo em |x| = R), que é suave através da origem.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, stats

from app.numerics.errors import DomainError, GridCompatibilityError
from app.numerics.green_radial import DomainSpec, build_annulus_kernel, flux, lattice_grid
from app.numerics.radial_kernel import shell_area
from app.numerics.report import CheckReport

logger = logging.getLogger(__name__)

REMOVABLE = 'removable'
SINGULAR = 'singular'
INCONCLUSIVE = 'inconclusive'


@dataclass
class PuncturedSample:
    """
    Amostras de uma função calórica radial na bola furada

    Attributes:
        m (int): dimensão
        R (float): raio externo (o último raio amostrado deve ser R)
        radii (ndarray): r_min = radii[0] > 0
        times (ndarray): malha uniforme t1 < ... < t2, t1 > 0
        values (ndarray): [i, j] = u(radii[i], times[j])
        provenance (str): família analítica ou arquivo de origem
        time_sup: r -> sup_{t in [t1, t2]} |u(r, t)| analítico (opcional)
    """
    m: int
    R: float
    radii: np.ndarray
    times: np.ndarray
    values: np.ndarray
    provenance: str = 'external'
    time_sup: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.m < 3:
            raise DomainError(f"dimensão deve ser >= 3, recebido {self.m}")
        if self.radii.ndim != 1 or self.radii[0] <= 0.0 or np.any(np.diff(self.radii) <= 0.0):
            raise DomainError("raios devem ser positivos e crescentes (r_min > 0)")
        if self.times.size < 2 or self.times[0] <= 0.0:
            raise DomainError("malha temporal precisa de ao menos dois instantes com t1 > 0")
        steps = np.diff(self.times)
        if np.any(steps <= 0.0) or np.max(np.abs(steps - steps[0])) > 1e-9 * steps[0]:
            raise DomainError("malha temporal deve ser uniforme")
        if self.values.shape != (self.radii.size, self.times.size):
            raise DomainError(f"valores com forma {self.values.shape}, esperado {(self.radii.size, self.times.size)}")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("amostra com valores não finitos")

    @property
    def r_min(self):
        return float(self.radii[0])

    @property
    def t1(self):
        return float(self.times[0])

    @property
    def offsets(self):
        """t - t1 para t > t1: os instantes que a tabela de núcleo precisa ter"""
        return self.times[1:] - self.times[0]

    def boundary_trace(self, s):
        """u(R, s) interpolado no tempo"""
        if abs(self.radii[-1] - self.R) > 1e-9 * max(1.0, self.R):
            raise DomainError(f"amostra não cobre r = R = {self.R} (traço de fronteira ausente)")
        return np.interp(s, self.times, self.values[-1])

    def at_radius(self, r, s):
        """u(r, s) por interpolação bilinear"""
        column = np.array([np.interp(r, self.radii, self.values[:, j]) for j in range(self.times.size)])
        return np.interp(s, self.times, column)

    def scaled(self, factor):
        return PuncturedSample(
            self.m, self.R, self.radii, self.times, factor * self.values, f'{self.provenance}*{factor:g}',
            None if self.time_sup is None else (lambda r: abs(factor) * self.time_sup(r)),
        )


def _gaussian(m, r, s):
    return (4.0 * math.pi * s) ** (-0.5 * m) * np.exp(-(r * r) / (4.0 * s))


def shifted_gaussian(m, R, radii, times, shift=1.0):
    """Gamma(x, t + shift): calórica e suave através da origem"""
    r, t = np.meshgrid(radii, times, indexing='ij')
    return PuncturedSample(m, R, radii, times, _gaussian(m, r, t + shift), f'shifted_gaussian(shift={shift:g})')


def static_fundamental(m, R, radii, times):
    """|x|^{2-m}: harmônica fora da origem, O(|x|^{2-m})"""
    radii = np.asarray(radii, dtype=float)
    values = np.repeat((radii ** (2.0 - m))[:, None], len(times), axis=1)
    return PuncturedSample(
        m, R, radii, times, values, 'static_fundamental', time_sup=lambda r: np.asarray(r) ** (2.0 - m),
    )


def heat_pulse(m, R, radii, times, t_star):
    """Gamma(x, t - t*) ligado em t*: sup_t |u(r, .)| ~ r^{-m}"""
    times = np.asarray(times, dtype=float)
    r, t = np.meshgrid(radii, times, indexing='ij')
    s = t - t_star
    values = np.where(s > 0.0, _gaussian(m, r, np.where(s > 0.0, s, 1.0)), 0.0)
    lo = max(times[0] - t_star, 0.0)
    hi = times[-1] - t_star
    if hi <= 0.0:
        raise DomainError("t* deve ser anterior a t2")

    def time_sup(radius):
        radius = np.asarray(radius, dtype=float)
        s_star = np.clip(radius * radius / (2.0 * m), lo if lo > 0.0 else 1e-300, hi)
        return _gaussian(m, radius, s_star)

    return PuncturedSample(m, R, radii, times, values, f'heat_pulse(t*={t_star:g})', time_sup=time_sup)


def constant(m, R, radii, times, value=1.0):
    values = np.full((len(radii), len(times)), float(value))
    return PuncturedSample(m, R, radii, times, values, f'constant({value:g})')


GENERATORS = {
    'shifted_gaussian': shifted_gaussian,
    'static_fundamental': static_fundamental,
    'heat_pulse': heat_pulse,
    'constant': constant,
}


def load_sample_csv(path, m, R, provenance=None):
    """
    Lê uma amostra em CSV com colunas r, t, u (com cabeçalho)

    Raises:
        DomainError: malha (r, t) incompleta
    """
    data = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
    if data.shape[1] != 3:
        raise DomainError(f"{path}: esperado 3 colunas (r, t, u)")
    radii = np.unique(data[:, 0])
    times = np.unique(data[:, 1])
    if data.shape[0] != radii.size * times.size:
        raise DomainError(f"{path}: malha (r, t) incompleta")
    values = np.full((radii.size, times.size), np.nan)
    values[np.searchsorted(radii, data[:, 0]), np.searchsorted(times, data[:, 1])] = data[:, 2]
    return PuncturedSample(m, R, radii, times, values, provenance or str(path))


@dataclass
class GrowthFit:
    p: Optional[float]
    ci_low: Optional[float]
    ci_high: Optional[float]
    criterion_holds: bool
    bounded: bool
    points: int

    def to_dict(self):
        return {
            'p': self.p, 'ci_low': self.ci_low, 'ci_high': self.ci_high,
            'criterion_holds': self.criterion_holds, 'bounded': self.bounded, 'points': self.points,
        }


def growth_exponent(sample, slack=0.1, min_points=6):
    """
    Inclinação de log sup_t |u(r, .)| contra log(1/r) em r <= R/4

    O critério de crescimento vale se p <= m - 2 + slack. Se u se anula
    perto da origem, p é None e a amostra é marcada como limitada.
    """
    mask = sample.radii <= 0.25 * sample.R + 1e-12
    radii = sample.radii[mask]
    if radii.size < min_points or radii[-1] / radii[0] < 10.0:
        raise DomainError(f"ajuste exige >= {min_points} raios abrangendo uma década abaixo de R/4")
    if sample.time_sup is not None:
        sup = np.asarray(sample.time_sup(radii), dtype=float)
    else:
        sup = np.max(np.abs(sample.values[mask]), axis=1)
    if np.max(sup) <= 1e-300:
        return GrowthFit(None, None, None, True, True, int(radii.size))
    keep = sup > 0.0
    fit = stats.linregress(np.log(1.0 / radii[keep]), np.log(sup[keep]))
    p = float(fit.slope)
    half_width = 1.96 * float(fit.stderr)
    return GrowthFit(
        p=p,
        ci_low=p - half_width,
        ci_high=p + half_width,
        criterion_holds=p <= sample.m - 2 + slack,
        bounded=p <= slack,
        points=int(keep.sum()),
    )


@dataclass
class Reconstruction:
    radii: np.ndarray
    times: np.ndarray
    values: np.ndarray
    initial_term: np.ndarray
    boundary_term: np.ndarray

    def as_sample(self, m, R, provenance='reconstruction'):
        """Reamostra a reconstrução como PuncturedSample (sem o nó r = 0)"""
        start = 1 if self.radii[0] == 0.0 else 0
        return PuncturedSample(m, R, self.radii[start:], self.times, self.values[start:], provenance)


def _check_table(sample, table):
    domain = table.domain
    if domain.kind != DomainSpec.BALL or domain.m != sample.m or abs(domain.R - sample.R) > 1e-9 * sample.R:
        raise GridCompatibilityError(f"reconstrução exige tabela da bola B_{sample.R} em m={sample.m}")
    if not table.has_all_sources:
        raise GridCompatibilityError("reconstrução exige todas as fontes na tabela")
    offsets = sample.offsets
    if table.times.size != offsets.size or np.max(np.abs(table.times - offsets)) > 1e-9 * max(1.0, offsets[-1]):
        raise GridCompatibilityError("instantes da tabela devem ser t - t1 dos instantes da amostra")


def reconstruct(sample, table):
    """
    Representação de u na bola a partir de u(., t1) e do traço u(R, .)

    u^(r, t) = sum_j G0(r, r_j; t - t1) u(r_j, t1) peso_j
               + |S^{m-1}| R^{m-1} int_0^{t-t1} fluxo(r; sigma) u(R, t - sigma) d sigma

    Abaixo de r_min a amostra inicial é estendida pelo valor em r_min. Em
    t1 e em r = R a reconstrução devolve os dados.

    Returns:
        Reconstruction na grade da tabela e nos instantes da amostra
    """
    _check_table(sample, table)
    radii = table.grid.radii
    weights = table.grid.shell_weights()
    u1 = np.interp(radii, sample.radii, sample.values[:, 0])
    outer = flux(table, 'outer')
    area = shell_area(sample.m) * sample.R ** (sample.m - 1)

    initial = np.zeros((radii.size, sample.times.size))
    boundary = np.zeros_like(initial)
    initial[:, 0] = u1
    for k, tau in enumerate(table.times, start=1):
        initial[:, k] = table.values[:, :, k - 1] @ (u1 * weights)
        steps = int(round(tau / table.dt))
        sigma = table.flux_times[:steps + 1]
        trace = sample.boundary_trace(sample.t1 + tau - sigma)
        boundary[:, k] = area * integrate.trapezoid(outer[:, :steps + 1] * trace[None, :], sigma, axis=1)
    values = initial + boundary
    values[-1] = sample.boundary_trace(sample.times)
    return Reconstruction(radii, sample.times.copy(), values, initial, boundary)


@dataclass
class Classification:
    verdict: str
    growth: GrowthFit
    reconstruction_gap: float
    near_origin_bounded: bool
    tolerance: float
    slack: float
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            'verdict': self.verdict,
            'growth': self.growth.to_dict(),
            'reconstruction_gap': self.reconstruction_gap,
            'near_origin_bounded': self.near_origin_bounded,
            'tolerance': self.tolerance,
            'slack': self.slack,
            'details': self.details,
        }


def reconstruction_gap(sample, rec):
    """max |u^ - u| / max |u| em R/4 <= r <= 3R/4, t > t1"""
    region = (rec.radii >= 0.25 * sample.R - 1e-12) & (rec.radii <= 0.75 * sample.R + 1e-12)
    radii = rec.radii[region]
    exact = np.column_stack([np.interp(radii, sample.radii, sample.values[:, j]) for j in range(sample.times.size)])
    diff = np.abs(rec.values[region][:, 1:] - exact[:, 1:])
    scale = float(np.max(np.abs(exact[:, 1:])))
    return float(np.max(diff)) / max(scale, 1e-300)


def near_origin_sups(sample, rec):
    """
    sup |u| da amostra e sup |u^| da reconstrução em r <= R/4, t > t1

    u^ é calórica e fica limitada pelos dados parabólicos; uma amostra que
    passa muito desse valor perto da origem não é limitada ali.
    """
    cut = max(0.25 * sample.R, sample.radii[0]) + 1e-12
    sample_sup = float(np.max(np.abs(sample.values[sample.radii <= cut, 1:])))
    rec_sup = float(np.max(np.abs(rec.values[rec.radii <= cut, 1:])))
    return sample_sup, rec_sup


def idempotence_defect(sample, table):
    """
    Reconstrói, reamostra com as_sample e reconstrói de novo

    Returns:
        max |u^^ - u^| / max |u^| nos nós da tabela
    """
    first = reconstruct(sample, table)
    second = reconstruct(first.as_sample(sample.m, sample.R, f'{sample.provenance}:reconstruction'), table)
    scale = float(np.max(np.abs(first.values)))
    return float(np.max(np.abs(second.values - first.values))) / max(scale, 1e-300)


def classify(sample, table, tolerance=1e-3, slack=0.1):
    """
    Veredito a partir do crescimento e da reconstrução

    removable: critério de crescimento e gap <= tolerance; singular: p >
    m - 2 + slack ou gap > 10 * tolerance; senão inconclusive. near_origin_bounded
    exige sup |u| <= (1 + slack) sup |u^| perto da origem.
    """
    growth = growth_exponent(sample, slack)
    rec = reconstruct(sample, table)
    gap = reconstruction_gap(sample, rec)
    sample_sup, rec_sup = near_origin_sups(sample, rec)
    bounded = sample_sup <= (1.0 + slack) * rec_sup
    exceeds = growth.p is not None and growth.p > sample.m - 2 + slack
    if growth.criterion_holds and gap <= tolerance:
        verdict = REMOVABLE
    elif exceeds or gap > 10.0 * tolerance:
        verdict = SINGULAR
    else:
        verdict = INCONCLUSIVE
    logger.info(
        "amostra %s: p=%s, gap=%.3e -> %s",
        sample.provenance, 'None' if growth.p is None else f'{growth.p:.4f}', gap, verdict,
    )
    return Classification(
        verdict=verdict,
        growth=growth,
        reconstruction_gap=gap,
        near_origin_bounded=bounded,
        tolerance=tolerance,
        slack=slack,
        details={
            'provenance': sample.provenance,
            'near_origin_sup': sample_sup,
            'reconstruction_near_origin_sup': rec_sup,
            'origin_value_final': float(rec.values[0, -1]),
        },
    )


def representation_tables(sample, eps_values, spacing, settings, factory=None):
    """
    Tabelas do anel B_R \\ B_eps com uma única fonte em R/2

    Pela simetria de G0 a coluna da fonte R/2 é a linha do alvo R/2.
    """
    tables = {}
    for eps in eps_values:
        if eps < sample.r_min:
            raise DomainError(f"eps={eps} abaixo de r_min={sample.r_min}")
        grid = lattice_grid(eps, sample.R, spacing, sample.m)
        sources = [grid.node_index(0.5 * sample.R)]
        tables[eps] = build_annulus_kernel(
            eps, sample.R, sample.m, grid, sample.offsets, settings, sources=sources, factory=factory,
        )
    return tables


@dataclass
class RepresentationTerms:
    eps: list
    I1: list
    I2: list
    I3: list
    defects: list
    inner_order: Optional[float]
    bounded_data: bool

    def report(self, threshold=0.9):
        """A ordem do termo interno é julgada só para dados limitados"""
        passed = self.inner_order is not None and self.inner_order >= threshold
        return CheckReport(
            'singularity.inner_term_order', passed, self.inner_order, threshold,
            conclusive=self.bounded_data,
            details={'eps': self.eps, 'I1': self.I1, 'I2': self.I2, 'I3': self.I3, 'defects': self.defects},
        )


def representation_terms(sample, tables, bounded_data=None):
    """
    Termos da representação na bola furada em r = R/2 e t = t2

    I1: termo inicial no anel; I2: fluxo na esfera interna |x| = eps
    (pesado por |S^{m-1}| eps^{m-1}); I3: fluxo na esfera externa. O
    defeito é |I1 + I2 + I3 - u(R/2, t2)|.

    Args:
        tables (dict): eps -> tabela do anel com fonte única em R/2
        bounded_data (bool): dados limitados perto da origem (default:
            decidido pelo ajuste de crescimento)
    """
    if bounded_data is None:
        bounded_data = growth_exponent(sample).bounded
    target = 0.5 * sample.R
    t2 = float(sample.times[-1])
    exact = float(sample.at_radius(target, t2))
    area = shell_area(sample.m)
    eps_list, I1, I2, I3, defects = [], [], [], [], []
    for eps in sorted(tables, reverse=True):
        table = tables[eps]
        col = table.source_column(target)
        tau = t2 - sample.t1
        k = table.time_index(tau)
        radii = table.grid.radii
        u1 = np.interp(radii, sample.radii, sample.values[:, 0])
        first = float(table.values[:, col, k] @ (u1 * table.grid.shell_weights()))

        steps = int(round(tau / table.dt))
        sigma = table.flux_times[:steps + 1]
        s = t2 - sigma
        inner_trace = np.array([sample.at_radius(eps, si) for si in s])
        outer_trace = sample.boundary_trace(s)
        second = area * eps ** (sample.m - 1) * float(
            integrate.trapezoid(flux(table, 'inner')[col, :steps + 1] * inner_trace, sigma)
        )
        third = area * sample.R ** (sample.m - 1) * float(
            integrate.trapezoid(flux(table, 'outer')[col, :steps + 1] * outer_trace, sigma)
        )
        eps_list.append(float(eps))
        I1.append(first)
        I2.append(second)
        I3.append(third)
        defects.append(abs(first + second + third - exact) / max(abs(exact), 1e-300))
        logger.info("eps=%g: I1=%.6e I2=%.6e I3=%.6e", eps, first, second, third)

    order = None
    magnitudes = np.abs(I2)
    if len(eps_list) >= 2 and np.all(magnitudes > 0.0):
        order = float(stats.linregress(np.log(eps_list), np.log(magnitudes)).slope)
    return RepresentationTerms(eps_list, I1, I2, I3, defects, order, bool(bounded_data))
