"""
Dados da métrica de produto torcido e o lado direito do fluxo de aplicações harmônicas

A métrica é g = dr^2 + f(r,t)^2 dsigma com f(r,t) = r e^{f~(r^2,t)}. Este
módulo avalia o coeficiente de deriva, a não linearidade G e a fonte
completa F = deriva * p + p^2 + G da equação radial em rho~.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from app.numerics.errors import DomainError

logger = logging.getLogger(__name__)

# abaixo deste w o primeiro termo de G usa a expansão de segunda ordem
SMALL_W = 1e-6

Profile = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True, eq=False)
class MetricFamily:
    """
    Família de métricas (f~, d_w f~, xi, B) em dimensão n no intervalo [t0, T]

    f~0 e d_w f~0 são f~(., t0) e d_w f~(., t0): o mesmo callable, logo a
    compatibilidade no instante inicial vale por construção.

    Attributes:
        n (int): dimensão da variedade (>= 3)
        T (float): horizonte, 0 < T < (n-1)/2
        t0 (float): instante inicial, 0 <= t0 < T
        f_tilde, df_tilde_dw, xi: funções (w, t) -> array
        B: forma fechada de B(w,t) = 1/2 int_0^w xi; None usa quadratura
        name (str): nome do preset
        params (dict): parâmetros do preset
    """
    n: int
    T: float
    t0: float
    f_tilde: Profile
    df_tilde_dw: Profile
    xi: Profile
    B: Optional[Profile] = None
    name: str = 'custom'
    params: dict = field(default_factory=dict)
    _b_cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise DomainError(f"n deve ser inteiro >= 3, recebido {self.n}")
        if not 0.0 < self.T < 0.5 * (self.n - 1):
            raise DomainError(f"horizonte T={self.T} fora de (0, {(self.n - 1) / 2})")
        if not 0.0 <= self.t0 < self.T:
            raise DomainError(f"t0={self.t0} fora de [0, {self.T})")

    def f0(self, w):
        return self.f_tilde(w, self.t0)

    def df0_dw(self, w):
        return self.df_tilde_dw(w, self.t0)

    def with_start(self, t0):
        """Mesma família com outro instante inicial"""
        return replace(self, t0=t0)

    def check_time(self, t):
        if t < self.t0 - 1e-12 or t > self.T + 1e-12:
            raise DomainError(f"t={t} fora de [{self.t0}, {self.T}]")

    def B_values(self, w, t):
        """B(w,t); sem forma fechada usa quadratura adaptativa, em cache por (t, w)"""
        w = np.asarray(w, dtype=float)
        if self.B is not None:
            return np.broadcast_to(self.B(w, t), w.shape).astype(float)
        key = (float(t), w.tobytes())
        cached = self._b_cache.get(key)
        if cached is None:
            flat = [
                0.5 * integrate.quad(lambda u: float(self.xi(u, t)), 0.0, float(wi), epsabs=1e-13, epsrel=1e-12)[0]
                for wi in w.ravel()
            ]
            cached = np.array(flat).reshape(w.shape)
            self._b_cache[key] = cached
        return cached


@dataclass(frozen=True)
class SphereMetricMeta:
    n: int
    t: float


def euclidean(n=3, T=None, t0=0.0):
    """Métrica euclidiana: f~ = xi = 0"""
    zero = _zero
    return MetricFamily(
        n=n, T=T if T is not None else _default_horizon(n), t0=t0,
        f_tilde=zero, df_tilde_dw=zero, xi=zero, B=zero, name='euclidean', params={},
    )


def decaying_bump(n=3, T=None, t0=0.0, a0=1e-2, alpha=0.0, b0=1e-2, beta=0.0):
    """
    f~ = a(t) w e^{-w}, xi = b(t)/(1+w), B = b(t) log(1+w)/2

    a(t) = a0 (1 + alpha (t - t0)), b(t) = b0 (1 + beta (t - t0)).
    """
    def a(t):
        return a0 * (1.0 + alpha * (t - t0))

    def b(t):
        return b0 * (1.0 + beta * (t - t0))

    return MetricFamily(
        n=n, T=T if T is not None else _default_horizon(n), t0=t0,
        f_tilde=lambda w, t: a(t) * w * np.exp(-w),
        df_tilde_dw=lambda w, t: a(t) * (1.0 - w) * np.exp(-w),
        xi=lambda w, t: b(t) / (1.0 + w),
        B=lambda w, t: 0.5 * b(t) * np.log1p(w),
        name='decaying_bump',
        params={'a0': a0, 'alpha': alpha, 'b0': b0, 'beta': beta},
    )


def cylinder_tail(n=3, T=None, t0=0.0, c0=0.1, gamma=0.0, b0=1e-2, beta=0.0):
    """f~ = c(t) w/(1+w) -> c(t) quando w -> infinito, xi = b(t) e^{-w}"""
    def c(t):
        return c0 * (1.0 + gamma * (t - t0))

    def b(t):
        return b0 * (1.0 + beta * (t - t0))

    return MetricFamily(
        n=n, T=T if T is not None else _default_horizon(n), t0=t0,
        f_tilde=lambda w, t: c(t) * w / (1.0 + w),
        df_tilde_dw=lambda w, t: c(t) / (1.0 + w) ** 2,
        xi=lambda w, t: b(t) * np.exp(-w),
        B=lambda w, t: 0.5 * b(t) * -np.expm1(-w),
        name='cylinder_tail',
        params={'c0': c0, 'gamma': gamma, 'b0': b0, 'beta': beta},
    )


PRESETS = {
    'euclidean': euclidean,
    'decaying_bump': decaying_bump,
    'cylinder_tail': cylinder_tail,
}


def metric_family(name, **params):
    """
    Constrói um preset pelo nome

    Raises:
        DomainError: nome desconhecido ou parâmetro inválido
    """
    try:
        factory = PRESETS[name]
    except KeyError:
        raise DomainError(f"família de métricas desconhecida: {name}") from None
    try:
        return factory(**params)
    except TypeError as e:
        raise DomainError(f"parâmetros inválidos para {name}: {e}") from None


def _zero(w, t):
    return np.zeros_like(np.asarray(w, dtype=float))


def _default_horizon(n):
    return 0.45 * (n - 1)


def drift_field(family, r, t):
    """(n-1) 2r d_w f~(r^2,t) - r xi(r^2,t), vetorizado; aceita r = 0"""
    r = np.asarray(r, dtype=float)
    w = r * r
    return (family.n - 1) * 2.0 * r * family.df_tilde_dw(w, t) - r * family.xi(w, t)


def drift_coefficient(family, r, t):
    """
    Coeficiente de deriva da equação radial

    Args:
        family (MetricFamily): dados da métrica
        r (float): raio > 0
        t (float): instante em [t0, T]

    Returns:
        float
    """
    if r <= 0.0:
        raise DomainError(f"r deve ser positivo, recebido {r}")
    family.check_time(t)
    return float(drift_field(family, r, t))


def G_field(family, rho_tilde, w, t):
    """
    Não linearidade G(rho~, w, t) vetorizada; aceita w = 0 (limite na origem)

    G = -(n-1) expm1(D)/w + 2(n-1) d_w f~(w,t)
        - 2(n-1) e^{D + 2 rho~} d_w f~0(rho^2) - 2 xi(w,t),
    com D = 2 f~0(rho^2) - 2 f~(w,t) e rho^2 = w e^{2 rho~}.
    """
    rho_tilde, w = np.broadcast_arrays(np.asarray(rho_tilde, dtype=float), np.asarray(w, dtype=float))
    shape = w.shape
    rho_tilde, w = rho_tilde.ravel(), w.ravel()
    n1 = family.n - 1
    stretch = np.exp(2.0 * rho_tilde)
    rho_sq = w * stretch
    D = np.broadcast_to(2.0 * family.f0(rho_sq) - 2.0 * family.f_tilde(w, t), w.shape)

    small = w < SMALL_W
    first = np.empty(w.shape)
    big = ~small
    first[big] = -n1 * np.expm1(D[big]) / w[big]
    if np.any(small):
        # D/w pela regra do ponto médio; exige f~(0,t) = f~0(0)
        ws, ss, Ds = w[small], stretch[small], D[small]
        D_over_w = 2.0 * ss * family.df0_dw(0.5 * ws * ss) - 2.0 * family.df_tilde_dw(0.5 * ws, t)
        first[small] = -n1 * D_over_w * (1.0 + 0.5 * Ds + Ds * Ds / 6.0)

    value = (
        first
        + 2.0 * n1 * family.df_tilde_dw(w, t)
        - 2.0 * n1 * np.exp(D + 2.0 * rho_tilde) * family.df0_dw(rho_sq)
        - 2.0 * family.xi(w, t)
    )
    return value.reshape(shape)


def nonlinearity_G(family, rho_tilde, w, t):
    """
    G(rho~, w, t) para w > 0

    Raises:
        DomainError: w <= 0 ou t fora de [t0, T]
    """
    if np.any(np.asarray(w) <= 0.0):
        raise DomainError(f"w deve ser positivo, recebido {w}")
    family.check_time(t)
    value = G_field(family, rho_tilde, w, t)
    return float(value) if value.ndim == 0 else value


def F_field(family, r, rho_tilde, drho_dr, t):
    """Fonte F = deriva * p + p^2 + G(rho~, r^2, t), vetorizada"""
    r = np.asarray(r, dtype=float)
    p = np.asarray(drho_dr, dtype=float)
    return drift_field(family, r, t) * p + p * p + G_field(family, rho_tilde, r * r, t)


def F_eval(family, r, rho_tilde, drho_dr, t):
    """F num ponto com r > 0"""
    if r <= 0.0:
        raise DomainError(f"r deve ser positivo, recebido {r}")
    family.check_time(t)
    return float(F_field(family, r, rho_tilde, drho_dr, t))


def linearized_source(family, r, t):
    """G(0, r^2, t): fonte da linearização em torno de rho~ = 0"""
    r = np.asarray(r, dtype=float)
    return G_field(family, np.zeros_like(r), r * r, t)


def scalar_curvature_h(meta):
    """
    Curvatura escalar de h(t): 1 / (1 - 2t/(n-1))

    Raises:
        DomainError: t fora de [0, (n-1)/2)
    """
    limit = 0.5 * (meta.n - 1)
    if not 0.0 <= meta.t < limit:
        raise DomainError(f"t={meta.t} fora de [0, {limit})")
    return 1.0 / (1.0 - 2.0 * meta.t / (meta.n - 1))


def check_family(family, w_max=20.0, samples=64, times=None):
    """
    Verifica as identidades estruturais de uma família

    Returns:
        dict: defeitos máximos de cada identidade
    """
    w = np.linspace(0.0, w_max, samples)
    if times is None:
        times = np.linspace(family.t0, family.T, 5)
    step = 1e-4
    b_consistency = 0.0
    b_origin = 0.0
    b_quadrature = 0.0
    origin_offset = 0.0
    for t in times:
        wc = w[1:]
        dB = (family.B_values(wc + step, t) - family.B_values(wc - step, t)) / (2.0 * step)
        b_consistency = max(b_consistency, float(np.max(np.abs(2.0 * dB - family.xi(wc, t)))))
        b_origin = max(b_origin, abs(float(family.B_values(np.zeros(1), t)[0])))
        origin_offset = max(origin_offset, abs(float(np.asarray(family.f_tilde(np.zeros(1), t))[0])))
        if family.B is not None:
            points = np.array([0.5, 2.0, 7.5])
            quad = [0.5 * integrate.quad(lambda u: float(family.xi(u, t)), 0.0, wi)[0] for wi in points]
            b_quadrature = max(b_quadrature, float(np.max(np.abs(np.array(quad) - family.B_values(points, t)))))
    initial = float(np.max(np.abs(family.f_tilde(w, family.t0) - family.f0(w))))
    g_identity = float(np.max(np.abs(
        G_field(family, np.zeros_like(w), w, family.t0) + 2.0 * family.xi(w, family.t0)
    )))
    report = {
        'family': family.name,
        'b_consistency': b_consistency,
        'b_origin': b_origin,
        'b_quadrature_gap': b_quadrature,
        'initial_compatibility': initial,
        'g_initial_identity': g_identity,
        'origin_offset': origin_offset,
    }
    report['passed'] = bool(
        b_consistency <= 1e-6 and b_origin <= 1e-12 and initial == 0.0
        and g_identity <= 1e-10 and b_quadrature <= 1e-8
    )
    report['origin_regular'] = origin_offset <= 1e-12
    logger.debug("verificação da família %s: %s", family.name, report)
    return report
