"""Marker processes and the uncoupled likelihood for longitudinal records.

A subject's record is a sequence of observations ``(t_j, f_j, x_j, z_j)``,
``j = 0..m``, with ``t_0 = 0``, failure codes ``f_j = 0`` before the last
row, optional readings ``x_j`` of the parent process and covariate rows
``z_j`` (undefined at a final failure).

The uncoupled likelihood treats the observation sequence as a Markov chain
and sums per-interval conditional log terms over ``(r_{j-1}, r_j]``:

* readings present (observed-process mode): the sub-density of ``x_j``
  given ``x_{j-1}`` for a Wiener process killed at zero, and for a final
  failure the hitting law restarted from ``x_{m-1}``;
* readings absent (latent mode): survival ratios
  ``(1 - F(r_j)) / (1 - F(r_{j-1}))`` and a final failure term.

Interval ``(r_{j-1}, r_j]`` uses the parameters linked to ``z_{j-1}``.

This is one concrete realization of the uncoupling idea, whose general
justification is still open: the Markov property of the observation
sequence is assumed, not checked (``lagged_residual_correlation`` is a
diagnostic only), and markers do not enter the likelihood jointly with the
readings.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from . import _rng
from .fht_analytic import ig_logpdf, ig_logsf, log1mexp
from .process_kernel import WienerSpec
from .regression import (
    LINKS,
    RegressionSpec,
    SurvivalData,
    _maximize,
    numeric_gradient,
    start_values,
)
from .timescale import analytic_running_time

logger = logging.getLogger(__name__)

__all__ = [
    "SubjectRecord",
    "CompositeMarkerSpec",
    "BivariateWienerSpec",
    "JointWienerSpec",
    "composite_marker",
    "fit_composite_weights",
    "sample_joint_increments",
    "conditional_parent_given_markers",
    "absorbed_transition_logdensity",
    "uncoupled_loglik",
    "uncoupled_sample_loglik",
    "fit_uncoupled",
    "lagged_residual_correlation",
    "records_to_survival",
]


@dataclass
class SubjectRecord:
    times: np.ndarray
    failures: np.ndarray
    covariates: np.ndarray
    readings: Optional[np.ndarray] = None
    exposures: Optional[np.ndarray] = None
    subject_id: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.failures = np.asarray(self.failures, dtype=int)
        n = self.times.size
        cov = np.asarray(self.covariates, dtype=float)
        self.covariates = cov.reshape(n, -1) if cov.size else np.zeros((n, 0))
        if self.readings is not None:
            self.readings = np.asarray(self.readings, dtype=float)
        if self.exposures is not None:
            self.exposures = np.asarray(self.exposures, dtype=float).reshape(n, -1)
        for problem in self.problems():
            raise ValueError(f"subject {self.subject_id!r}: {problem}")

    def problems(self):
        """Invariant violations, as ``(row_index, message)`` strings."""
        out = []
        t, f = self.times, self.failures
        if t.size < 2:
            out.append("a record needs the origin row t_0 = 0 and at least one later row")
            return out
        if t[0] != 0.0:
            out.append(f"row 0: first time must be 0, got {float(t[0])!r}")
        dec = np.flatnonzero(np.diff(t) < 0)
        if dec.size:
            out.append(f"row {dec[0] + 1}: times decrease ({float(t[dec[0]])!r} -> {float(t[dec[0] + 1])!r})")
        if np.any((f != 0) & (f != 1)):
            out.append("failure codes must be 0 or 1")
        early = np.flatnonzero(f[:-1] != 0)
        if early.size:
            out.append(f"row {early[0]}: failure code 1 before the final observation")
        if self.covariates.shape[0] != t.size:
            out.append("covariate rows do not match observation rows")
        else:
            body = self.covariates[:-1] if self.failed else self.covariates
            if np.isnan(body).any():
                out.append("covariates missing before the final observation")
            if self.failed and self.covariates.shape[1] and not np.isnan(self.covariates[-1]).all():
                out.append(f"row {t.size - 1}: covariates must be absent at a final failure")
        if self.readings is not None:
            if self.readings.shape != t.shape:
                out.append("readings must be present for every row or for none")
            elif np.isnan(self.readings).any():
                out.append("readings must be present for every row or for none")
            else:
                alive = self.readings[:-1] if self.failed else self.readings
                low = np.flatnonzero(alive <= 0.0)
                if low.size:
                    out.append(f"row {low[0]}: reading must be > 0 while the subject survives")
        return out

    @property
    def m(self):
        return self.times.size - 1

    @property
    def failed(self):
        return bool(self.failures[-1] == 1)

    @property
    def observed(self):
        return self.readings is not None


@dataclass(frozen=True)
class CompositeMarkerSpec:
    gamma0: float
    gammas: tuple

    def __post_init__(self):
        g = tuple(float(v) for v in np.atleast_1d(self.gammas))
        if len(g) < 1:
            raise ValueError("a composite marker needs at least one component")
        object.__setattr__(self, "gammas", g)


def composite_marker(values, spec):
    """``gamma0 + sum_k gamma_k y_k``; the last axis of ``values`` indexes the markers."""
    y = np.asarray(values, dtype=float)
    if y.shape[-1] != len(spec.gammas):
        raise ValueError(f"{y.shape[-1]} marker readings for {len(spec.gammas)} weights")
    return spec.gamma0 + y @ np.asarray(spec.gammas)


def fit_composite_weights(parent_increments, marker_increments):
    """Least-squares weights predicting parent increments from marker increments.

    Returns ``(intercept, gammas)``; the intercept absorbs the drift mismatch
    per increment.
    """
    dx = np.asarray(parent_increments, dtype=float).ravel()
    dy = np.asarray(marker_increments, dtype=float).reshape(dx.size, -1)
    A = np.column_stack([np.ones(dx.size), dy])
    coef = np.linalg.lstsq(A, dx, rcond=None)[0]
    return float(coef[0]), coef[1:]


@dataclass(frozen=True)
class JointWienerSpec:
    """(K+1)-variate Wiener process; component 0 is the parent, 1..K the markers.

    ``drift`` and ``covariance`` are per unit running time.
    """

    drift: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.drift, dtype=float))
        S = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if S.shape != (mu.size, mu.size) or mu.size < 2:
            raise ValueError("drift and covariance must describe a parent and >= 1 marker")
        if not np.allclose(S, S.T):
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "drift", mu)
        object.__setattr__(self, "covariance", S)


@dataclass(frozen=True)
class BivariateWienerSpec:
    parent: WienerSpec
    marker_mu: float
    marker_sigma2: float
    rho: float

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ValueError(f"|rho| must be < 1, got {self.rho}")
        if not self.marker_sigma2 > 0:
            raise ValueError("marker variance must be > 0")

    def joint(self):
        sx, sy = np.sqrt(self.parent.sigma2), np.sqrt(self.marker_sigma2)
        c = self.rho * sx * sy
        return JointWienerSpec(
            np.array([self.parent.mu, self.marker_mu]),
            np.array([[self.parent.sigma2, c], [c, self.marker_sigma2]]),
        )


def _joint(spec):
    return spec.joint() if isinstance(spec, BivariateWienerSpec) else spec


def sample_joint_increments(spec, dr, size, seed=0):
    """Joint increments over running-time steps ``dr``; shape ``(size, K+1)``."""
    js = _joint(spec)
    L = np.linalg.cholesky(js.covariance * dr)
    out = np.empty((int(size), js.drift.size))
    for k, a, b in _rng.blocks(int(size)):
        Z = _rng.stream(seed, k).standard_normal((b - a, js.drift.size))
        out[a:b] = js.drift * dr + Z @ L.T
    return out


def conditional_parent_given_markers(spec, marker_increments, dr):
    """Gaussian mean and variance of the parent increment given marker increments."""
    js = _joint(spec)
    try:
        np.linalg.cholesky(js.covariance)
    except np.linalg.LinAlgError:
        raise ValueError("joint covariance is singular or not positive definite") from None
    S = js.covariance
    Syy = S[1:, 1:]
    Sxy = S[0, 1:]
    coef = np.linalg.solve(Syy, Sxy)
    dy = np.asarray(marker_increments, dtype=float)
    dy2 = dy.reshape(-1, Syy.shape[0])
    mean = js.drift[0] * dr + (dy2 - js.drift[1:] * dr) @ coef
    var = dr * (S[0, 0] - Sxy @ coef)
    shape = dy.shape[:-1] if dy.ndim > 1 or Syy.shape[0] > 1 else dy.shape
    return mean.reshape(shape)[()], float(max(var, 0.0))


def absorbed_transition_logdensity(x_prev, x_next, dr, mu, sigma2):
    """Log sub-density of ``X(r + dr) = x_next`` with no visit to zero, from ``x_prev``.

    Reflection principle: the free Gaussian transition density times
    ``1 - exp(-2 x_prev x_next / (sigma2 dr))``.
    """
    x_prev, x_next, dr = (np.asarray(v, dtype=float) for v in (x_prev, x_next, dr))
    if np.any(~(x_prev > 0)) or np.any(~(x_next > 0)):
        raise ValueError("states must be > 0 (not absorbed)")
    if np.any(~(dr > 0)):
        raise ValueError("dr must be > 0")
    v = sigma2 * dr
    free = -0.5 * np.log(2.0 * np.pi * v) - (x_next - x_prev - mu * dr) ** 2 / (2.0 * v)
    return (free + log1mexp(-2.0 * x_prev * x_next / v))[()]


def _record_running_times(record, spec, theta):
    if spec.n_exposures:
        if record.exposures is None:
            raise ValueError(f"subject {record.subject_id!r}: the model uses exposures but the record has none")
        alpha = np.append(np.exp(np.asarray(theta)[spec.blocks()["log_alpha"]]), 1.0)
        return record.exposures @ alpha
    if spec.time_transform is not None:
        return analytic_running_time(record.times, spec.time_transform)
    return record.times


def uncoupled_loglik(record, theta, spec, sigma2=1.0, failure="exact"):
    """Sum of conditional log terms over a subject's observation intervals.

    In latent mode ``theta`` is a full :class:`RegressionSpec` parameter
    vector. In observed-process mode only the drift block (beta) and
    ``sigma2`` are used: the initial level is the reading ``x_0``.

    ``failure="exact"`` treats the final failure time as the hitting time and
    uses the hitting density; ``failure="interval"`` uses the probability of a
    hit somewhere in the last interval.
    """
    if failure not in ("exact", "interval"):
        raise ValueError(f"unknown failure mode {failure!r}")
    theta = np.asarray(theta, dtype=float)
    r = _record_running_times(record, spec, theta)
    Z1 = np.column_stack([np.ones(record.m + 1), record.covariates])[:-1]  # z_0..z_{m-1}
    b = spec.blocks()
    mu = LINKS[spec.mu_link].inverse(Z1 @ theta[b["beta"]])
    r_prev, r_next = r[:-1], r[1:]
    dr = r_next - r_prev
    fail_last = record.failed
    terms = np.zeros(record.m)
    degenerate = dr <= 0

    if record.observed:
        x = record.readings
        surv = np.arange(record.m) < record.m - 1 if fail_last else np.ones(record.m, bool)
        ok = surv & ~degenerate
        if ok.any():
            terms[ok] = absorbed_transition_logdensity(x[:-1][ok], x[1:][ok], dr[ok], mu[ok], sigma2)
        if fail_last and not degenerate[-1]:
            if failure == "exact":
                terms[-1] = ig_logpdf(dr[-1], mu=mu[-1], sigma2=sigma2, x0=x[-2])
            else:
                terms[-1] = log1mexp(ig_logsf(dr[-1], mu=mu[-1], sigma2=sigma2, x0=x[-2]))
    else:
        x0 = LINKS[spec.x0_link].inverse(Z1 @ theta[b["gamma"]])
        s2 = spec.sigma2
        # log S(r_{j-1}) under the parameters of interval j; S(0) = 1
        ls_prev = np.zeros(record.m)
        pos = r_prev > 0
        if pos.any():
            ls_prev[pos] = ig_logsf(r_prev[pos], mu=mu[pos], sigma2=s2, x0=x0[pos])
        ls_next = ig_logsf(np.maximum(r_next, 1e-300), mu=mu, sigma2=s2, x0=x0)
        terms = ls_next - ls_prev
        if fail_last:
            if failure == "exact":
                terms[-1] = ig_logpdf(r_next[-1], mu=mu[-1], sigma2=s2, x0=x0[-1]) - ls_prev[-1]
            elif not degenerate[-1]:
                terms[-1] = log1mexp(ls_next[-1] - ls_prev[-1])
    if degenerate.any():
        idx = np.flatnonzero(degenerate)
        if not record.observed and fail_last and failure == "exact":
            idx = idx[idx != record.m - 1]
        if idx.size:
            warnings.warn(
                f"subject {record.subject_id!r}: zero-length interval(s) {(idx + 1).tolist()} contribute 0",
                RuntimeWarning,
            )
            terms[idx] = 0.0
    return float(np.sum(terms))


def uncoupled_sample_loglik(records, theta, spec, sigma2=1.0, failure="exact"):
    return float(sum(uncoupled_loglik(rec, theta, spec, sigma2, failure) for rec in records))


def records_to_survival(records, covariate_names=()):
    """Collapse records to one row per subject (final time, failure, baseline covariates)."""
    return SurvivalData(
        time=np.array([rec.times[-1] for rec in records]),
        event=np.array([rec.failed for rec in records]),
        covariates=np.vstack([rec.covariates[0] for rec in records]),
        exposures=None
        if records[0].exposures is None
        else np.vstack([rec.exposures[-1] for rec in records]),
        ids=[rec.subject_id for rec in records],
        covariate_names=tuple(covariate_names),
    )


def fit_uncoupled(records, spec, failure="exact", theta0=None, max_iter=500):
    """Maximize the uncoupled likelihood with central-difference gradients.

    Latent records: returns ``(theta, loglik, converged)`` over the
    :class:`RegressionSpec` parameters. Observed records: the parameter
    vector is ``[beta, log_sigma2]``.
    """
    observed = records[0].observed
    if any(rec.observed != observed for rec in records):
        raise ValueError("records mix observed-process and latent modes")
    b = spec.blocks()
    if observed:
        k = spec.n_coef

        def f(th):
            full = np.zeros(spec.n_params)
            full[b["beta"]] = th[:k]
            return uncoupled_sample_loglik(records, full, spec, np.exp(th[k]), failure)

        start = np.zeros(k + 1) if theta0 is None else np.asarray(theta0, dtype=float)
    else:

        def f(th):
            return uncoupled_sample_loglik(records, th, spec, failure=failure)

        start = start_values(records_to_survival(records), spec) if theta0 is None else np.asarray(theta0)

    fun_grad = lambda th: (f(th), numeric_gradient(f, th))
    theta, ll, g, iterations, converged, _ = _maximize(fun_grad, start, max_iter, 1e-6, 1e-9)
    return theta, float(ll), converged


def lagged_residual_correlation(records, theta, spec, sigma2=1.0):
    """Lag-1 correlation of standardized reading increments within subjects.

    A rough check of the Markov assumption for observed-process records;
    NaN when fewer than three residual pairs exist.
    """
    pairs = []
    b = spec.blocks()
    for rec in records:
        if not rec.observed:
            continue
        r = _record_running_times(rec, spec, theta)
        n_surv = rec.m - 1 if rec.failed else rec.m
        if n_surv < 2:
            continue
        Z1 = np.column_stack([np.ones(rec.m + 1), rec.covariates])[:n_surv]
        mu = LINKS[spec.mu_link].inverse(Z1 @ np.asarray(theta)[b["beta"]])
        dr = np.diff(r)[:n_surv]
        e = (np.diff(rec.readings)[:n_surv] - mu * dr) / np.sqrt(sigma2 * np.where(dr > 0, dr, np.nan))
        pairs.extend(zip(e[:-1], e[1:]))
    pairs = np.array([p for p in pairs if np.all(np.isfinite(p))])
    if len(pairs) < 3:
        return float("nan")
    return float(stats.pearsonr(pairs[:, 0], pairs[:, 1])[0])
