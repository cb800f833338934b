"""Threshold regression on censored inverse Gaussian data.

Each subject ``i`` has a covariate row ``z_i = (1, z_i1, ..., z_ik)`` and a
running time ``r_i`` at which it either failed or was censored. The drift
and initial level of its latent Wiener health process are linked to the
covariates, by default ``mu_i = z_i beta`` and ``ln x0_i = z_i gamma``, with
the process variance fixed at 1 (the health scale is latent, so one
parameter must be pinned). Failures contribute ``ln f(r_i)``, censored
subjects ``ln(1 - F(r_i))``.

Optional extensions, all sharing one parameter vector laid out as
``[beta, gamma, delta, log_alpha]``:

* a cure mixture: a susceptible fraction ``p_i = logistic(z_i delta)``; the
  rest never fail;
* composite running time ``r_i = sum_j alpha_j e_ij`` over per-category
  exposures ``e_ij`` with the last weight fixed at 1;
* a fixed analytic time transform applied to calendar times.

The log-likelihood gradient is analytic; the optimizer is BFGS followed by
Newton polishing on a finite-difference Hessian of that gradient.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, special

from .fht_analytic import ig_logpdf, ig_logsf, ig_sf, log1mexp
from . import _rng
from .timescale import AnalyticTimeSpec, analytic_running_time

logger = logging.getLogger(__name__)

__all__ = [
    "LinkFunction",
    "LINKS",
    "RegressionSpec",
    "SurvivalData",
    "FitResult",
    "NoEventsError",
    "SingularInformationWarning",
    "FLOOR_LOG",
    "apply_links",
    "subject_loglik",
    "sample_loglik",
    "loglik_and_grad",
    "numeric_gradient",
    "fit",
    "fit_cure_mixture",
    "predict_survival",
    "start_values",
    "simulate_survival",
]

# log of the smallest normal double; stands in for ln(0) survival
FLOOR_LOG = -745.0
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


class NoEventsError(ValueError):
    pass


class SingularInformationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LinkFunction:
    """``g(theta) = eta``; ``inverse`` maps the linear predictor back to the parameter."""

    kind: str

    def __post_init__(self):
        if self.kind not in ("identity", "log", "logit", "fisher-z"):
            raise ValueError(f"unknown link {self.kind!r}")

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "identity":
            return theta
        if self.kind == "log":
            if np.any(theta <= 0):
                raise ValueError("log link requires a positive parameter")
            return np.log(theta)
        if self.kind == "logit":
            if np.any((theta <= 0) | (theta >= 1)):
                raise ValueError("logit link requires a parameter in (0, 1)")
            return special.logit(theta)
        if np.any(np.abs(theta) >= 1):
            raise ValueError("fisher-z link requires a correlation in (-1, 1)")
        return np.arctanh(theta)

    def inverse(self, eta):
        eta = np.asarray(eta, dtype=float)
        return {
            "identity": lambda e: e,
            "log": np.exp,
            "logit": special.expit,
            "fisher-z": np.tanh,
        }[self.kind](eta)

    def dinverse(self, eta):
        """d theta / d eta."""
        eta = np.asarray(eta, dtype=float)
        if self.kind == "identity":
            return np.ones_like(eta)
        if self.kind == "log":
            return np.exp(eta)
        if self.kind == "logit":
            p = special.expit(eta)
            return p * (1.0 - p)
        return 1.0 - np.tanh(eta) ** 2


LINKS = {k: LinkFunction(k) for k in ("identity", "log", "logit", "fisher-z")}


@dataclass(frozen=True)
class RegressionSpec:
    n_covariates: int = 0
    mu_link: str = "identity"
    x0_link: str = "log"
    cure: bool = False
    n_exposures: int = 0
    time_transform: Optional[AnalyticTimeSpec] = None
    sigma2: float = 1.0
    covariate_names: tuple = ()

    def __post_init__(self):
        LinkFunction(self.mu_link)
        LinkFunction(self.x0_link)
        if self.sigma2 != 1.0:
            raise ValueError("sigma2 is fixed at 1 for identifiability")
        if self.n_exposures == 1:
            raise ValueError("composite running time needs at least two exposure categories")
        if self.covariate_names and len(self.covariate_names) != self.n_covariates:
            raise ValueError("covariate_names must match n_covariates")

    @property
    def n_coef(self):
        return self.n_covariates + 1

    @property
    def n_params(self):
        n = 2 * self.n_coef + (self.n_coef if self.cure else 0)
        return n + max(self.n_exposures - 1, 0)

    def blocks(self):
        """Slices of the parameter vector: beta, gamma, delta (cure), log_alpha."""
        k = self.n_coef
        out = {"beta": slice(0, k), "gamma": slice(k, 2 * k)}
        pos = 2 * k
        if self.cure:
            out["delta"] = slice(pos, pos + k)
            pos += k
        if self.n_exposures:
            out["log_alpha"] = slice(pos, pos + self.n_exposures - 1)
        return out

    def param_names(self):
        names = ("const",) + tuple(self.covariate_names or [f"z{j}" for j in range(1, self.n_coef)])
        out = []
        for block in self.blocks():
            if block == "log_alpha":
                out += [f"log_alpha[{j}]" for j in range(1, self.n_exposures)]
            else:
                out += [f"{block}[{n}]" for n in names]
        return out

    def to_dict(self):
        return {
            "n_covariates": self.n_covariates,
            "mu_link": self.mu_link,
            "x0_link": self.x0_link,
            "cure": self.cure,
            "n_exposures": self.n_exposures,
            "time_transform": None
            if self.time_transform is None
            else {"lam": self.time_transform.lam, "gam": self.time_transform.gam},
            "sigma2": self.sigma2,
            "covariate_names": list(self.covariate_names),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        tt = d.pop("time_transform", None)
        return cls(
            time_transform=None if tt is None else AnalyticTimeSpec(**tt),
            covariate_names=tuple(d.pop("covariate_names", ())),
            **d,
        )


@dataclass
class SurvivalData:
    """One row per subject: final time, failure indicator, baseline covariates."""

    time: np.ndarray
    event: np.ndarray
    covariates: np.ndarray
    exposures: Optional[np.ndarray] = None
    ids: Optional[list] = None
    covariate_names: tuple = ()

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.event = np.asarray(self.event).astype(bool)
        n = self.time.size
        cov = np.asarray(self.covariates, dtype=float)
        self.covariates = cov.reshape(n, -1) if cov.size else np.zeros((n, 0))
        if self.exposures is not None:
            self.exposures = np.asarray(self.exposures, dtype=float).reshape(n, -1)
        if self.event.size != n or self.covariates.shape[0] != n:
            raise ValueError("time, event and covariates must have one row per subject")
        if self.ids is None:
            self.ids = [str(i) for i in range(n)]

    def __len__(self):
        return self.time.size

    @property
    def design(self):
        return np.column_stack([np.ones(len(self)), self.covariates])

    def subset(self, mask):
        mask = np.asarray(mask)
        idx = np.flatnonzero(mask) if mask.dtype == bool else mask
        return SurvivalData(
            self.time[idx],
            self.event[idx],
            self.covariates[idx],
            None if self.exposures is None else self.exposures[idx],
            [self.ids[i] for i in idx],
            self.covariate_names,
        )

    def concat(self, other):
        return SurvivalData(
            np.concatenate([self.time, other.time]),
            np.concatenate([self.event, other.event]),
            np.vstack([self.covariates, other.covariates]),
            None if self.exposures is None else np.vstack([self.exposures, other.exposures]),
            list(self.ids) + list(other.ids),
            self.covariate_names,
        )


@dataclass
class FitResult:
    spec: RegressionSpec
    params: np.ndarray
    loglik: float
    covariance: np.ndarray
    converged: bool
    iterations: int
    gradient: np.ndarray
    diagnostics: list = field(default_factory=list)
    n_subjects: int = 0
    n_events: int = 0

    def _block(self, name):
        sl = self.spec.blocks().get(name)
        return None if sl is None else self.params[sl]

    @property
    def beta_hat(self):
        return self._block("beta")

    @property
    def gamma_hat(self):
        return self._block("gamma")

    @property
    def delta_hat(self):
        return self._block("delta")

    @property
    def alpha_hat(self):
        la = self._block("log_alpha")
        return None if la is None else np.append(np.exp(la), 1.0)

    @property
    def stderr(self):
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def wald_interval(self, level=0.99):
        q = special.ndtri(0.5 + level / 2.0)
        return self.params - q * self.stderr, self.params + q * self.stderr

    def summary(self):
        lines = [f"{'parameter':<20}{'estimate':>14}{'std.err':>12}"]
        for name, est, se in zip(self.spec.param_names(), self.params, self.stderr):
            lines.append(f"{name:<20}{est:>14.6f}{se:>12.6f}")
        lines.append(f"loglik = {self.loglik!r}  converged = {self.converged}  iterations = {self.iterations}")
        lines += [f"note: {d}" for d in self.diagnostics]
        return "\n".join(lines)


def apply_links(spec, theta, z):
    """Return ``(mu, x0)`` for covariate rows ``z`` (without the leading 1)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape[1] != spec.n_covariates:
        raise ValueError(f"covariate row has {z.shape[1]} entries, expected {spec.n_covariates}")
    theta = np.asarray(theta, dtype=float)
    if theta.size != spec.n_params:
        raise ValueError(f"expected {spec.n_params} parameters, got {theta.size}")
    Z1 = np.column_stack([np.ones(z.shape[0]), z])
    b = spec.blocks()
    mu = LINKS[spec.mu_link].inverse(Z1 @ theta[b["beta"]])
    x0 = LINKS[spec.x0_link].inverse(Z1 @ theta[b["gamma"]])
    if np.any(~(x0 > 0)):
        raise ValueError("linked initial level x0 must be positive")
    return mu, x0


def susceptible_fraction(spec, theta, z):
    if not spec.cure:
        return np.ones(np.atleast_2d(z).shape[0])
    z = np.atleast_2d(np.asarray(z, dtype=float))
    Z1 = np.column_stack([np.ones(z.shape[0]), z])
    return special.expit(Z1 @ np.asarray(theta)[spec.blocks()["delta"]])


def subject_loglik(r, failed, mu, x0, sigma2=1.0):
    """``ln f(r)`` for a failure, ``ln(1 - F(r))`` for a censored subject."""
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("running time r must be > 0")
    failed = np.asarray(failed, dtype=bool)
    out = np.where(
        failed,
        ig_logpdf(r, mu=mu, sigma2=sigma2, x0=x0),
        ig_logsf(r, mu=mu, sigma2=sigma2, x0=x0),
    )
    if np.any(np.isneginf(out) & ~failed):
        warnings.warn("censored survival underflowed to 0; contribution floored at -745", RuntimeWarning)
        out = np.where(np.isneginf(out) & ~failed, FLOOR_LOG, out)
    return out[()]


def running_times(spec, theta, data):
    """Running time of every subject and ``dr/dlog_alpha`` (or None)."""
    if spec.n_exposures:
        E = data.exposures
        if E is None or E.shape[1] != spec.n_exposures:
            raise ValueError(f"spec expects {spec.n_exposures} exposure columns")
        alpha = np.append(np.exp(np.asarray(theta)[spec.blocks()["log_alpha"]]), 1.0)
        r = E @ alpha
        return r, E[:, :-1] * alpha[:-1]
    t = data.time
    if spec.time_transform is not None:
        t = analytic_running_time(t, spec.time_transform)
    return t, None


def loglik_and_grad(theta, data, spec, per_subject=False):
    """Sample log-likelihood and its analytic gradient with respect to ``theta``."""
    theta = np.asarray(theta, dtype=float)
    b = spec.blocks()
    Z1 = data.design
    if Z1.shape[1] != spec.n_coef:
        raise ValueError(f"data has {Z1.shape[1] - 1} covariates, spec expects {spec.n_covariates}")
    r, dr_dla = running_times(spec, theta, data)
    bad = np.flatnonzero(~(r > 0))
    if bad.size:
        raise ValueError(
            "running time must be > 0; offending subject(s): "
            + ", ".join(str(data.ids[i]) for i in bad[:10])
        )
    ev = data.event
    eta_mu = Z1 @ theta[b["beta"]]
    eta_x0 = Z1 @ theta[b["gamma"]]
    mu_link, x0_link = LINKS[spec.mu_link], LINKS[spec.x0_link]
    mu = mu_link.inverse(eta_mu)
    x0 = x0_link.inverse(eta_x0)
    if np.any(~(x0 > 0)):
        raise ValueError("linked initial level x0 must be positive")
    s2 = spec.sigma2

    lf = ig_logpdf(r, mu=mu, sigma2=s2, x0=x0)
    ls = ig_logsf(r, mu=mu, sigma2=s2, x0=x0)
    floored = ~ev & ~np.isfinite(ls)
    if floored.any():
        logger.warning("%d censored subject(s) with survival underflow floored at %g", floored.sum(), FLOOR_LOG)
        ls = np.where(floored, FLOOR_LOG, ls)

    w = x0 + mu * r
    # failure terms
    dlf_mu = -w / s2
    dlf_x0 = 1.0 / x0 - w / (s2 * r)
    dlf_r = -1.5 / r - mu * w / (s2 * r) + w**2 / (2.0 * s2 * r**2)
    # survival terms, ratios formed in log space
    sr = np.sqrt(s2 * r)
    u = w / sr
    log_refl = -2.0 * x0 * mu / s2 + special.log_ndtr((mu * r - x0) / sr)
    refl_S = np.exp(log_refl - ls)
    phi_S = np.exp(-0.5 * u**2 - _HALF_LOG_2PI - ls)
    dls_mu = 2.0 * x0 / s2 * refl_S
    dls_x0 = 2.0 * phi_S / sr + 2.0 * mu / s2 * refl_S
    dls_r = -np.exp(lf - ls)
    for arr in (dls_mu, dls_x0, dls_r):
        arr[floored] = 0.0

    if spec.cure:
        eta_p = Z1 @ theta[b["delta"]]
        logp = -np.logaddexp(0.0, -eta_p)
        log1mp = -np.logaddexp(0.0, eta_p)
        lmix = np.logaddexp(log1mp, logp + ls)
        wt = np.exp(logp + ls - lmix)  # share of the survival mass from susceptibles
        ll = np.where(ev, logp + lf, lmix)
        d_eta_p = np.where(ev, np.exp(log1mp), -np.exp(log1mp + logp + log1mexp(ls) - lmix))
    else:
        wt = 1.0
        ll = np.where(ev, lf, ls)

    d_mu = np.where(ev, dlf_mu, wt * dls_mu)
    d_x0 = np.where(ev, dlf_x0, wt * dls_x0)
    d_r = np.where(ev, dlf_r, wt * dls_r)

    grad = np.empty_like(theta)
    grad[b["beta"]] = Z1.T @ (d_mu * mu_link.dinverse(eta_mu))
    grad[b["gamma"]] = Z1.T @ (d_x0 * x0_link.dinverse(eta_x0))
    if spec.cure:
        grad[b["delta"]] = Z1.T @ d_eta_p
    if dr_dla is not None:
        grad[b["log_alpha"]] = dr_dla.T @ d_r
    if per_subject:
        return ll, grad
    return float(np.sum(ll)), grad


def sample_loglik(data, spec, theta):
    """Sum of subject contributions at ``theta``."""
    return loglik_and_grad(theta, data, spec)[0]


def numeric_gradient(fun, theta, rel_step=1e-6):
    """Central differences with step ``rel_step * max(1, |theta_i|)``."""
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for i in range(theta.size):
        h = rel_step * max(1.0, abs(theta[i]))
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        g[i] = (fun(tp) - fun(tm)) / (tp[i] - tm[i])
    return g


def _hessian(grad_fn, theta, rel_step=1e-5):
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    H = np.empty((n, n))
    for i in range(n):
        h = rel_step * max(1.0, abs(theta[i]))
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        H[:, i] = (grad_fn(tp) - grad_fn(tm)) / (tp[i] - tm[i])
    return 0.5 * (H + H.T)


def start_values(data, spec):
    """Method-of-moments drift from uncensored times, zero slopes, unit initial level."""
    theta = np.zeros(spec.n_params)
    b = spec.blocks()
    r, _ = running_times(spec, theta, data)
    ev = data.event
    if ev.any():
        mu0 = -1.0 / np.mean(r[ev])
        try:
            theta[b["beta"].start] = float(LINKS[spec.mu_link](mu0))
        except ValueError:
            theta[b["beta"].start] = 0.0
    if spec.cure:
        frac = np.clip(ev.mean() + 0.5 * (1 - ev.mean()), 0.05, 0.95)
        theta[b["delta"].start] = special.logit(frac)
    return theta


def _maximize(fun_grad, theta0, max_iter, gtol, ftol):
    """BFGS on the negative log-likelihood, then Newton polishing.

    Returns ``(theta, loglik, grad, iterations, converged, trace)``.
    """
    trace = []

    def neg(th):
        try:
            ll, g = fun_grad(th)
        except (ValueError, FloatingPointError):
            return np.inf, np.zeros_like(th)
        if not np.isfinite(ll):
            return np.inf, np.zeros_like(th)
        return -ll, -g

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        res = optimize.minimize(
            neg, theta0, jac=True, method="BFGS",
            options={"gtol": gtol, "maxiter": max_iter, "norm": np.inf},
        )
    theta = res.x
    iterations = int(res.nit)
    ll, g = fun_grad(theta)
    trace.append(("bfgs", iterations, ll, float(np.max(np.abs(g)))))
    prev = -np.inf
    converged = False
    for _ in range(50):
        gnorm = float(np.max(np.abs(g)))
        rel = abs(ll - prev) / max(1.0, abs(ll))
        if gnorm < gtol and rel < ftol:
            converged = True
            break
        H = _hessian(lambda th: fun_grad(th)[1], theta)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, -g, rcond=None)[0]
        if not np.all(np.isfinite(step)) or g @ step <= 0:
            step = g / max(1.0, np.max(np.abs(H)))  # not an ascent direction: fall back to gradient
        t = 1.0
        while t > 1e-10:
            cand = theta + t * step
            try:
                ll_c, g_c = fun_grad(cand)
            except (ValueError, FloatingPointError):
                ll_c = -np.inf
            if np.isfinite(ll_c) and ll_c >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            t *= 0.5
        else:
            break
        prev = ll
        theta, ll, g = cand, ll_c, g_c
        iterations += 1
        trace.append(("newton", iterations, ll, float(np.max(np.abs(g)))))
    return theta, ll, g, iterations, converged, trace


def fit(data, spec, *, max_iter=500, gtol=1e-6, ftol=1e-9, n_starts=1, seed=0,
        gradient="analytic", theta0=None):
    """Maximum-likelihood fit of ``spec`` to ``data``.

    ``gradient="numeric"`` replaces the analytic gradient by central
    differences of the log-likelihood (step ``1e-6 * max(1, |theta|)``).
    With ``n_starts > 1`` extra starts are jittered around the default start
    from a seeded stream; the best log-likelihood wins, ties going to the
    start that needed fewer iterations.
    """
    diagnostics = []
    n_events = int(np.sum(data.event))
    if n_events == 0:
        if spec.cure:
            raise NoEventsError("no events in the data: the susceptible fraction is not identified")
        msg = "no uncensored subjects; the fit is driven by censoring alone"
        warnings.warn(msg, RuntimeWarning)
        diagnostics.append(msg)
    Z1 = data.design
    rank = np.linalg.matrix_rank(Z1)
    if rank < Z1.shape[1]:
        diagnostics.append(
            f"multicollinearity: design matrix has rank {rank} < {Z1.shape[1]} columns"
        )

    if gradient == "analytic":
        fun_grad = lambda th: loglik_and_grad(th, data, spec)
    elif gradient == "numeric":
        f = lambda th: loglik_and_grad(th, data, spec)[0]
        fun_grad = lambda th: (f(th), numeric_gradient(f, th))
    else:
        raise ValueError(f"unknown gradient mode {gradient!r}")

    base = start_values(data, spec) if theta0 is None else np.asarray(theta0, dtype=float)
    starts = [base]
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(0xF17,)))
    for _ in range(int(n_starts) - 1):
        starts.append(base + rng.normal(0.0, 0.5, size=base.size))
    best = None
    for th0 in starts:
        out = _maximize(fun_grad, th0, max_iter, gtol, ftol)
        if best is None or (out[1], -out[3]) > (best[1], -best[3]):
            best = out
    theta, ll, g, iterations, converged, trace = best
    if not converged:
        diagnostics.append(
            "optimizer did not converge; trace: "
            + "; ".join(f"{k}#{i} ll={v:.10g} |g|={gn:.3g}" for k, i, v, gn in trace[-5:])
        )

    H = _hessian(lambda th: loglik_and_grad(th, data, spec)[1], theta)
    info = -H
    w = np.linalg.eigvalsh(info)
    if w.min() <= 1e-10 * max(1.0, abs(w).max()):
        msg = (
            "observed information is singular or not positive definite "
            f"(eigenvalues {w.min():.3g} .. {w.max():.3g}); "
            "parameters are not separately identified (multicollinearity)"
        )
        diagnostics.append(msg)
        warnings.warn(msg, SingularInformationWarning)
        cov = np.linalg.pinv(info)
    else:
        cov = np.linalg.inv(info)
    cov = 0.5 * (cov + cov.T)

    if spec.cure:
        p = susceptible_fraction(spec, theta, data.covariates)
        if np.any(p > 1 - 1e-6) or np.any(p < 1e-6):
            diagnostics.append("susceptible fraction estimate pinned at the boundary of [0, 1]")

    return FitResult(
        spec=spec, params=theta, loglik=float(ll), covariance=cov, converged=bool(converged),
        iterations=int(iterations), gradient=g, diagnostics=diagnostics,
        n_subjects=len(data), n_events=n_events,
    )


def fit_cure_mixture(data, spec, **options):
    """:func:`fit` with the susceptible-fraction mixture switched on."""
    if not spec.cure:
        spec = RegressionSpec(**{**spec.__dict__, "cure": True})
    return fit(data, spec, **options)


def predict_survival(result, z, r_grid):
    """``1 - F(r)`` (mixed with the cured fraction when present) on ``r_grid``."""
    spec = result.spec
    z = np.asarray(z, dtype=float).reshape(1, -1) if spec.n_covariates else np.zeros((1, 0))
    mu, x0 = apply_links(spec, result.params, z)
    r = np.asarray(r_grid, dtype=float)
    if np.any(r < 0):
        raise ValueError("running time grid must be >= 0")
    pos = r > 0
    sf = np.ones_like(r)
    sf[pos] = ig_sf(r[pos], mu=mu[0], sigma2=spec.sigma2, x0=x0[0])
    if spec.cure:
        p = susceptible_fraction(spec, result.params, z)[0]
        sf = (1.0 - p) + p * sf
    return sf


def simulate_survival(spec, theta, covariates, censor_time=None, occupancy=None, seed=0):
    """Draw one outcome per covariate row from the model ``(spec, theta)``.

    Hitting times are drawn exactly on the running-time scale and mapped to
    calendar time. With exposures, ``occupancy`` gives each subject's
    constant share of time in every category (rows sum to 1), so running
    time grows at rate ``occupancy @ alpha``. ``censor_time`` (calendar) is
    optional; subjects that never fail must be censored.
    """
    from .process_kernel import sample_ig_exact

    theta = np.asarray(theta, dtype=float)
    z = np.asarray(covariates, dtype=float)
    n = z.shape[0]
    z = z.reshape(n, -1) if z.size else np.zeros((n, 0))
    mu, x0 = apply_links(spec, theta, z)
    r = sample_ig_exact((mu, spec.sigma2, x0), seed=seed, size=n)
    if spec.cure:
        p = susceptible_fraction(spec, theta, z)
        u = np.concatenate([_rng.stream(seed, (1 << 20) + k).random(b - a) for k, a, b in _rng.blocks(n)])
        r = np.where(u < p, r, np.inf)
    exposures = None
    if spec.n_exposures:
        occ = np.asarray(occupancy, dtype=float).reshape(n, spec.n_exposures)
        if np.any(np.abs(occ.sum(axis=1) - 1.0) > 1e-12) or np.any(occ < 0):
            raise ValueError("occupancy rows must be nonnegative and sum to 1")
        alpha = np.append(np.exp(theta[spec.blocks()["log_alpha"]]), 1.0)
        rate = occ @ alpha
        with np.errstate(divide="ignore"):
            t = r / rate
    elif spec.time_transform is not None:
        tt = spec.time_transform
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(r < 1.0, (-np.log1p(-np.minimum(r, 1.0)) / tt.lam) ** (1.0 / tt.gam), np.inf)
    else:
        t = r
    c = np.full(n, np.inf) if censor_time is None else np.broadcast_to(np.asarray(censor_time, dtype=float), (n,))
    time = np.minimum(t, c)
    if not np.all(np.isfinite(time)):
        raise ValueError("some subjects neither fail nor are censored; supply censor_time")
    event = t <= c
    if spec.n_exposures:
        exposures = occ * time[:, None]
        # keep the accounting constraint exact after scaling
        exposures[:, -1] = time - exposures[:, :-1].sum(axis=1)
    return SurvivalData(time=time, event=event, covariates=z, exposures=exposures)
