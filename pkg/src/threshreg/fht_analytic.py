"""Closed-form and exactly computable first-hitting-time laws.

The Wiener process ``X(r) = x0 + mu r + sigma W(r)`` started at ``x0 > 0``
hits zero at an inverse Gaussian time with density

    f(r) = x0 / sqrt(2 pi sigma2 r^3) * exp(-(x0 + mu r)^2 / (2 sigma2 r))

which is improper for ``mu > 0``: its total mass is ``exp(-2 x0 mu / sigma2)``.
Densities are returned as-is (never renormalized); the missing mass is
available from :func:`prob_finite_fht`.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special

from .process_kernel import BernoulliSpec, GammaSpec, MarkovChainSpec, PoissonSpec

__all__ = [
    "IgParams",
    "DiscreteFhtPmf",
    "std_normal_cdf",
    "ig_pdf",
    "ig_logpdf",
    "ig_cdf",
    "ig_sf",
    "ig_logsf",
    "prob_finite_fht",
    "negbin_fht_pmf",
    "erlang_fht_pdf",
    "erlang_fht_cdf",
    "gamma_fht_survival",
    "markov_fht_pmf",
]

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class IgParams:
    mu: float
    sigma2: float = 1.0
    x0: float = 1.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be > 0, got {self.sigma2}")
        if not self.x0 > 0:
            raise ValueError(f"x0 must be > 0, got {self.x0}")


@dataclass
class DiscreteFhtPmf:
    """``probabilities[i] = P(S = support_offset + i)``; ``deficiency`` is the mass beyond."""

    support_offset: int
    probabilities: np.ndarray
    deficiency: float

    @property
    def total(self):
        return float(self.probabilities.sum() + self.deficiency)


def std_normal_cdf(x):
    """Standard normal cdf through ``erfc`` (accurate in both tails)."""
    return 0.5 * special.erfc(-np.asarray(x, dtype=float) / np.sqrt(2.0))


def log1mexp(a):
    """``log(1 - exp(a))`` for ``a <= 0``, accurate at both ends."""
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(a > -np.log(2.0), np.log(-np.expm1(a)), np.log1p(-np.exp(a)))


def _check_r(r):
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("running time r must be > 0")
    return r


def _unpack(p, mu, sigma2, x0):
    if p is not None:
        return p.mu, p.sigma2, p.x0
    return (np.asarray(v, dtype=float) for v in (mu, sigma2, x0))


def ig_logpdf(r, p=None, *, mu=None, sigma2=1.0, x0=None):
    """Log of the (possibly improper) FHT density. Parameters broadcast with ``r``."""
    r = _check_r(r)
    mu, s2, x0 = _unpack(p, mu, sigma2, x0)
    return np.log(x0) - 0.5 * (_LOG_2PI + np.log(s2) + 3.0 * np.log(r)) - (x0 + mu * r) ** 2 / (
        2.0 * s2 * r
    )


def ig_pdf(r, p=None, *, mu=None, sigma2=1.0, x0=None):
    return np.exp(ig_logpdf(r, p, mu=mu, sigma2=sigma2, x0=x0))


def _ig_terms(r, mu, s2, x0):
    """Log of the two cdf terms and the log of the reflected part of the survival.

    Returns ``(log_phi_u, log_refl)`` where ``u = (x0 + mu r)/sqrt(s2 r)``,
    ``Phi(u)`` is the unreflected survival and
    ``refl = exp(-2 x0 mu / s2) * Phi((mu r - x0)/sqrt(s2 r))``.
    """
    sr = np.sqrt(s2 * r)
    u = (x0 + mu * r) / sr
    b = (mu * r - x0) / sr
    return special.log_ndtr(u), -2.0 * x0 * mu / s2 + special.log_ndtr(b), u, b


def ig_cdf(r, p=None, *, mu=None, sigma2=1.0, x0=None):
    """``Phi(-(mu r + x0)/sqrt(s2 r)) + exp(-2 x0 mu / s2) Phi((mu r - x0)/sqrt(s2 r))``.

    The second product is formed in log space: for strongly negative drift the
    exponential overflows while the normal tail underflows.
    """
    r = _check_r(r)
    mu, s2, x0 = _unpack(p, mu, sigma2, x0)
    log_u, log_refl, u, _ = _ig_terms(r, mu, s2, x0)
    return np.minimum(special.ndtr(-u) + np.exp(log_refl), 1.0)


def ig_logsf(r, p=None, *, mu=None, sigma2=1.0, x0=None):
    """``log(1 - F(r))`` computed without forming ``1 - F``.

    Equals ``log(Phi(u) - refl)``; ``refl < Phi(u)`` always, so the
    difference is taken as ``log Phi(u) + log1p(-exp(log refl - log Phi(u)))``.
    Returns ``-inf`` where the survival underflows.
    """
    r = _check_r(r)
    mu, s2, x0 = _unpack(p, mu, sigma2, x0)
    log_u, log_refl, _, _ = _ig_terms(r, mu, s2, x0)
    return log_u + log1mexp(np.minimum(log_refl - log_u, 0.0))


def ig_sf(r, p=None, *, mu=None, sigma2=1.0, x0=None):
    return np.exp(ig_logsf(r, p, mu=mu, sigma2=sigma2, x0=x0))


def prob_finite_fht(p=None, *, mu=None, sigma2=1.0, x0=None):
    """``P(S < inf)``: 1 for ``mu <= 0``, else ``exp(-2 x0 mu / sigma2)``."""
    mu, s2, x0 = _unpack(p, mu, sigma2, x0)
    return np.where(mu <= 0, 1.0, np.exp(-2.0 * x0 * np.maximum(mu, 0.0) / s2))[()]


def negbin_fht_pmf(s, spec: BernoulliSpec):
    """``P(S = s) = C(s-1, m-1) p^m (1-p)^(s-m)`` for ``s >= m``."""
    s = np.asarray(s)
    if np.any(s < spec.m) or np.any(s != np.floor(s)):
        raise ValueError(f"trial count must be an integer >= m={spec.m}")
    m, p = spec.m, spec.p
    logc = special.gammaln(s) - special.gammaln(m) - special.gammaln(s - m + 1)
    return np.exp(logc + m * np.log(p) + (s - m) * np.log1p(-p))


def erlang_fht_pdf(t, spec: PoissonSpec):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise ValueError("t must be > 0")
    m, lam = spec.m, spec.lam
    return np.exp(m * np.log(lam) + (m - 1) * np.log(t) - lam * t - special.gammaln(m))


def erlang_fht_cdf(t, spec: PoissonSpec):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise ValueError("t must be > 0")
    return special.gammainc(spec.m, spec.lam * t)


def gamma_fht_survival(t, spec: GammaSpec):
    """``P(S > t) = (1 - p) + p P(Z(t) < x0)`` with ``Z(t) ~ Gamma(alpha t, scale beta)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    shape = spec.alpha * t
    with np.errstate(divide="ignore", invalid="ignore"):
        below = np.where(shape > 0, special.gammainc(np.where(shape > 0, shape, 1.0), spec.x0 / spec.beta), 1.0)
    return (1.0 - spec.p_susceptible) + spec.p_susceptible * below


def markov_fht_pmf(spec: MarkovChainSpec, k_max):
    """First-passage pmf of the boundary set for steps ``1..k_max``.

    Iterates the mass row vector over the non-boundary states; the mass that
    moves into the boundary at step k is ``P(S = k)``.
    """
    k_max = int(k_max)
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    P = spec.transition
    inner = np.array(sorted(set(range(spec.n_states)) - spec.boundary))
    Q = P[np.ix_(inner, inner)]
    absorb = P[np.ix_(inner, sorted(spec.boundary))].sum(axis=1)
    v = (inner == spec.x0).astype(float)
    probs = np.empty(k_max)
    for k in range(k_max):
        probs[k] = v @ absorb
        v = v @ Q
    return DiscreteFhtPmf(support_offset=1, probabilities=probs, deficiency=float(v.sum()))
