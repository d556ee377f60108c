"""Worker computing-time models and order-statistic expectations.

A worker that stores ``r`` batches has a random computing time with mean
``eta * r``. Two laws are supported: exponential (light tail) and Pareto
(heavy tail, shape ``beta > 1``, scale ``eta*r*(beta-1)/beta`` so the mean
is preserved). The module also evaluates the expected a-th smallest of b
i.i.d. times in closed form, and the expectation of the maximum of ``a``
i.i.d. group completion times by quadrature of the survival function, where
a group completes when its F-th fastest worker finishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, betaincinv, gammaln

from .errors import ConfigError

EXPONENTIAL = "exponential"
PARETO = "pareto"

_QUAD_ABS_TOL = 1e-8
_QUAD_MAX_DEPTH = 60
_TAIL_QUANTILE_GAP = 1e-9


@dataclass(frozen=True)
class TimingModel:
    """Distribution of a single worker's computing time.

    ``eta`` is the mean for unit storage redundancy; with redundancy ``r``
    the mean is ``eta * r`` for both laws.
    """

    law: str
    eta: float
    beta: float | None = None

    def __post_init__(self):
        if self.law not in (EXPONENTIAL, PARETO):
            raise ConfigError(f"unknown timing law {self.law!r}")
        if self.eta <= 0:
            raise ConfigError("eta must be positive")
        if self.law == PARETO:
            if self.beta is None or self.beta <= 1:
                raise ConfigError("Pareto requires shape beta > 1 (finite mean)")

    def mean(self, r: float) -> float:
        return self.eta * r

    def pareto_scale(self, r: float) -> float:
        """Scale x_m of the Pareto law with redundancy r (support [x_m, inf))."""
        return self.eta * r * (self.beta - 1.0) / self.beta

    def cdf(self, x, r: float):
        """P(T <= x) for a single worker with redundancy r. Vectorized in x."""
        x = np.asarray(x, dtype=float)
        if self.law == EXPONENTIAL:
            return np.where(x > 0, -np.expm1(-np.maximum(x, 0.0) / (self.eta * r)), 0.0)
        xm = self.pareto_scale(r)
        with np.errstate(divide="ignore"):
            tail = np.where(x >= xm, (xm / np.maximum(x, xm)) ** self.beta, 1.0)
        return 1.0 - tail

    def quantile(self, q: float, r: float) -> float:
        """Inverse CDF for a single worker time."""
        if not 0.0 <= q < 1.0:
            raise ValueError("quantile level must be in [0, 1)")
        if self.law == EXPONENTIAL:
            return -self.eta * r * math.log1p(-q)
        return self.pareto_scale(r) * (1.0 - q) ** (-1.0 / self.beta)


def sample_times(model: TimingModel, r: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` i.i.d. worker computing times with redundancy ``r``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if model.law == EXPONENTIAL:
        return rng.exponential(model.eta * r, size=count)
    return model.pareto_scale(r) * (1.0 + rng.pareto(model.beta, size=count))


def harmonic(k: int) -> float:
    """k-th harmonic number, H_0 = 0."""
    if k < 0:
        raise ValueError("harmonic number index must be >= 0")
    return float(np.sum(1.0 / np.arange(1, k + 1)))


def expected_order_stat_exponential(a: int, b: int, eta: float, r: float) -> float:
    """E of the a-th smallest of b i.i.d. exponential times with mean eta*r."""
    if not 1 <= a <= b:
        raise ValueError(f"need 1 <= a <= b, got a={a}, b={b}")
    return eta * r * (harmonic(b) - harmonic(b - a))


def expected_order_stat_pareto(a: int, b: int, eta: float, r: float, beta: float) -> float:
    """E of the a-th smallest of b i.i.d. Pareto times with mean eta*r.

    Finite only when b - a + 1 > 1/beta. Evaluated through log-gamma to
    stay stable for large b.
    """
    if not 1 <= a <= b:
        raise ValueError(f"need 1 <= a <= b, got a={a}, b={b}")
    if beta <= 1:
        raise ValueError("beta must exceed 1")
    if b - a + 1 <= 1.0 / beta:
        raise ValueError(f"E[T_{a}:{b}] infinite for beta={beta}")
    xm = eta * r * (beta - 1.0) / beta
    log_ratio = (
        gammaln(b - a + 1 - 1.0 / beta)
        + gammaln(b + 1)
        - gammaln(b - a + 1)
        - gammaln(b + 1 - 1.0 / beta)
    )
    return xm * math.exp(log_ratio)


def expected_order_stat(model: TimingModel, a: int, b: int, r: float) -> float:
    """Closed-form E[T_{a:b}] for the model's law."""
    if model.law == EXPONENTIAL:
        return expected_order_stat_exponential(a, b, model.eta, r)
    return expected_order_stat_pareto(a, b, model.eta, r, model.beta)


def group_time_cdf(model: TimingModel, r: float, m_g: int, f: int, x):
    """CDF of a group completion time: the F-th fastest of M_G i.i.d. workers.

    Equals P(Binomial(M_G, F(x)) >= F), evaluated through the regularized
    incomplete beta function. Vectorized in x.
    """
    if not 1 <= f <= m_g:
        raise ValueError(f"need 1 <= F <= M_G, got F={f}, M_G={m_g}")
    p = model.cdf(x, r)
    return betainc(f, m_g - f + 1, p)


def group_time_quantile(model: TimingModel, r: float, m_g: int, f: int, q: float) -> float:
    """Inverse of group_time_cdf at level q in [0, 1)."""
    p = float(betaincinv(f, m_g - f + 1, q))
    return model.quantile(min(p, 1.0 - 1e-16), r)


def _adaptive_simpson(fun, lo, hi, f_lo, f_mid, f_hi, tol, depth):
    mid = 0.5 * (lo + hi)
    lm = 0.5 * (lo + mid)
    mh = 0.5 * (mid + hi)
    f_lm = fun(lm)
    f_mh = fun(mh)
    whole = (hi - lo) / 6.0 * (f_lo + 4.0 * f_mid + f_hi)
    left = (mid - lo) / 6.0 * (f_lo + 4.0 * f_lm + f_mid)
    right = (hi - mid) / 6.0 * (f_mid + 4.0 * f_mh + f_hi)
    err = left + right - whole
    if depth <= 0 or abs(err) <= 15.0 * tol:
        return left + right + err / 15.0
    return _adaptive_simpson(fun, lo, mid, f_lo, f_lm, f_mid, 0.5 * tol, depth - 1) + \
        _adaptive_simpson(fun, mid, hi, f_mid, f_mh, f_hi, 0.5 * tol, depth - 1)


def _tail_estimate(model: TimingModel, r: float, m_g: int, f: int, a: float,
                   x_hi: float) -> float:
    """Leading-order integral of 1 - F_G(x)^a beyond x_hi.

    Far in the tail 1 - F_G(x)^a ~ a C(M_G, F-1) (1 - F(x))^{M_G-F+1}; the
    integral of that term is analytic for both laws. Relative error is
    O(1 - F(x_hi)), negligible at the quantiles used here.
    """
    k = m_g - f + 1
    c = a * math.comb(m_g, f - 1)
    if model.law == EXPONENTIAL:
        scale = model.eta * r
        return c * (scale / k) * math.exp(-k * x_hi / scale)
    xm = model.pareto_scale(r)
    exponent = model.beta * k
    return c * xm**exponent * x_hi ** (1.0 - exponent) / (exponent - 1.0)


def expected_max_group_time(model: TimingModel, r: float, m_g: int, f: int, a: int) -> float:
    """E of the max of ``a`` i.i.d. group completion times (F-th of M_G each).

    Integrates the survival function 1 - F_G(x)^a up to a high quantile with
    adaptive Simpson (abs tol 1e-8; in log-x for the slowly decaying Pareto
    tail) and closes with the analytic leading-order tail term, enlarging
    the range until the tail is negligible. Finite for every beta > 1;
    accuracy degrades as beta*(M_G-F+1) approaches 1, where the mean is
    dominated by extreme straggling.
    """
    if a < 1:
        raise ValueError("a must be >= 1")
    if not 1 <= f <= m_g:
        raise ValueError(f"need 1 <= F <= M_G, got F={f}, M_G={m_g}")

    def survival(x):
        fg = float(group_time_cdf(model, r, m_g, f, x))
        return 1.0 - fg**a

    # A cheap lower estimate of the result fixes the scale for tail targets.
    x_lo = model.pareto_scale(r) if model.law == PARETO else 0.0
    scale0 = max(group_time_quantile(model, r, m_g, f, 0.5), x_lo, 1e-300)

    gap = _TAIL_QUANTILE_GAP / a
    x_hi = group_time_quantile(model, r, m_g, f, 1.0 - gap)
    tail = _tail_estimate(model, r, m_g, f, a, x_hi)
    while tail > 1e-9 * scale0 and gap > 1e-15:
        gap *= 1e-2
        x_hi = group_time_quantile(model, r, m_g, f, 1.0 - gap)
        tail = _tail_estimate(model, r, m_g, f, a, x_hi)

    if model.law == EXPONENTIAL:
        body = _adaptive_simpson(
            survival, 0.0, x_hi,
            survival(0.0), survival(0.5 * x_hi), survival(x_hi),
            _QUAD_ABS_TOL, _QUAD_MAX_DEPTH)
        return body + tail

    # Pareto: substitute x = x_lo * exp(s); the integrand then decays
    # exponentially and the wide range collapses to a few dozen units.
    def survival_log(s):
        x = x_lo * math.exp(s)
        return survival(x) * x

    s_hi = math.log(x_hi / x_lo)
    body = _adaptive_simpson(
        survival_log, 0.0, s_hi,
        survival_log(0.0), survival_log(0.5 * s_hi), survival_log(s_hi),
        _QUAD_ABS_TOL * max(scale0, 1.0), _QUAD_MAX_DEPTH)
    return x_lo + body + tail
