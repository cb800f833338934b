"""Kaplan-Meier curves and their comparison with fitted threshold-regression curves.

For each covariate subgroup the Kaplan-Meier curve is computed on the
fitted running-time scale and compared with the model survival ``1 - F(r)``
at the subgroup's mean covariates. The sup-distance between the two is
referred to a parametric bootstrap: datasets are simulated from the fitted
model (censoring resampled from the reverse Kaplan-Meier estimate), the
model is refitted on each, including the running-time weights, and the
same statistic is recomputed.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _rng
from .regression import fit as fit_model
from .regression import predict_survival, running_times, simulate_survival

logger = logging.getLogger(__name__)

__all__ = [
    "KmCurve",
    "kaplan_meier",
    "sup_distance",
    "SubgroupComparison",
    "ValidationReport",
    "km_vs_fitted",
]


@dataclass
class KmCurve:
    """Product-limit estimate; ``survival[k]`` holds on ``[event_times[k], event_times[k+1])``."""

    event_times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    n_events: np.ndarray
    greenwood_se: Optional[np.ndarray] = None
    last_time: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.event_times, t, side="right")
        vals = np.concatenate([[1.0], self.survival])
        return vals[k][()]

    def to_rows(self):
        se = self.greenwood_se if self.greenwood_se is not None else np.full(self.survival.size, np.nan)
        return [
            (float(t), float(s), int(n), int(d), float(e))
            for t, s, n, d, e in zip(self.event_times, self.survival, self.at_risk, self.n_events, se)
        ]


def kaplan_meier(times, events):
    """Product-limit estimator with Greenwood standard errors.

    At tied times, events are counted before censorings (censored subjects
    are still at risk at their own time).
    """
    t = np.asarray(times, dtype=float).ravel()
    d = np.asarray(events).astype(bool).ravel()
    if t.size == 0:
        raise ValueError("kaplan_meier needs at least one observation")
    if t.size != d.size:
        raise ValueError("times and events differ in length")
    if np.any(~(t > 0)):
        raise ValueError("times must be > 0")
    uniq, inverse = np.unique(t, return_inverse=True)
    n_at = t.size - np.concatenate([[0], np.cumsum(np.bincount(inverse))[:-1]])
    deaths = np.bincount(inverse, weights=d, minlength=uniq.size).astype(int)
    keep = deaths > 0
    et, n_risk, dk = uniq[keep], n_at[keep], deaths[keep]
    surv = np.cumprod(1.0 - dk / n_risk)
    with np.errstate(divide="ignore", invalid="ignore"):
        gw = np.cumsum(dk / (n_risk * (n_risk - dk)))
        se = surv * np.sqrt(gw)
    se = np.where(np.isfinite(se), se, 0.0)
    return KmCurve(et, surv, n_risk, dk, se, float(t.max()))


def sup_distance(km, survival_fn):
    """``sup |KM(r) - S(r)|`` over ``(0, km.last_time]`` for a continuous ``S``.

    The supremum is attained at an event time, approached from the left or
    the right, or at the last observation.
    """
    if km.event_times.size == 0:
        pts = np.array([km.last_time])
        return float(np.max(np.abs(1.0 - survival_fn(pts))))
    pts = np.append(km.event_times, km.last_time)
    s = survival_fn(pts)
    right = np.append(km.survival, km.survival[-1])
    left = np.concatenate([[1.0], km.survival])
    return float(max(np.max(np.abs(right - s)), np.max(np.abs(left - s))))


@dataclass
class SubgroupComparison:
    name: str
    n: int
    n_events: int
    covariates: np.ndarray
    km: Optional[KmCurve]
    fitted_at_events: Optional[np.ndarray]
    distance: float
    critical_value: float
    level: float
    within_band: Optional[bool]
    bootstrap_distances: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))
    flagged: str = ""

    def band(self, level):
        """Bootstrap critical value at another confidence level."""
        if self.bootstrap_distances.size == 0:
            return float("nan")
        return float(np.quantile(self.bootstrap_distances, level))


@dataclass
class ValidationReport:
    subgroups: list
    n_boot: int
    level: float
    seed: int
    n_refit_failures: int = 0

    def to_dict(self):
        out = {"n_boot": self.n_boot, "level": self.level, "seed": self.seed,
               "n_refit_failures": self.n_refit_failures, "subgroups": []}
        for g in self.subgroups:
            out["subgroups"].append({
                "name": g.name, "n": g.n, "n_events": g.n_events,
                "covariates": [float(v) for v in g.covariates],
                "sup_distance": g.distance, "critical_value": g.critical_value,
                "within_band": g.within_band, "flagged": g.flagged,
            })
        return out

    def to_text(self):
        lines = [f"KM vs fitted, {self.level:.0%} parametric bootstrap band, B={self.n_boot}, seed={self.seed}"]
        for g in self.subgroups:
            if g.flagged:
                lines.append(f"{g.name}: n={g.n} FLAGGED: {g.flagged}")
                continue
            verdict = "within band" if g.within_band else "OUTSIDE band"
            lines.append(
                f"{g.name}: n={g.n} events={g.n_events} sup-distance={g.distance:.6f} "
                f"critical={g.critical_value:.6f} {verdict}"
            )
        return "\n".join(lines)


def _subgroup_masks(subgroups, n):
    if subgroups is None:
        return {"all": np.ones(n, dtype=bool)}
    out = {}
    for name, mask in dict(subgroups).items():
        m = np.asarray(mask)
        if m.dtype != bool:
            b = np.zeros(n, dtype=bool)
            b[m.astype(int)] = True
            m = b
        if m.shape != (n,):
            raise ValueError(f"subgroup {name!r} mask has the wrong length")
        if not m.any():
            raise ValueError(f"subgroup {name!r} is empty")
        out[str(name)] = m
    return out


def _statistics(result, data, masks):
    r, _ = running_times(result.spec, result.params, data)
    out = {}
    for name, m in masks.items():
        zbar = data.covariates[m].mean(axis=0)
        if not data.event[m].any():
            out[name] = (None, zbar, np.nan)
            continue
        km = kaplan_meier(r[m], data.event[m])
        sf = lambda x: predict_survival(result, zbar, x)
        out[name] = (km, zbar, sup_distance(km, sf))
    return out


def _sample_censoring(data, size, rng):
    """Calendar censoring times from the reverse Kaplan-Meier estimate.

    Mass the estimate leaves beyond the last observation becomes
    administrative censoring at that time.
    """
    cens = ~data.event
    if not cens.any():
        return np.full(size, data.time.max())
    km_c = kaplan_meier(data.time, cens)
    cdf = 1.0 - km_c.survival
    u = rng.random(size)
    k = np.searchsorted(cdf, u, side="left")
    times = np.append(km_c.event_times, data.time.max())
    return times[np.minimum(k, times.size - 1)]


def km_vs_fitted(result, data, subgroups=None, n_boot=200, level=0.95, seed=0):
    """Compare Kaplan-Meier and fitted survival per subgroup, with a bootstrap band.

    ``subgroups`` maps names to boolean masks (or index arrays); ``None``
    uses the whole sample. The observed sup-distance lies within the band
    when it does not exceed the ``level`` quantile of the bootstrap
    distances. Subgroups without events are flagged and get no band.
    """
    if not result.converged:
        warnings.warn("validating a fit that did not converge", RuntimeWarning)
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    masks = _subgroup_masks(subgroups, len(data))
    observed = _statistics(result, data, masks)
    spec = result.spec
    occupancy = None
    if spec.n_exposures:
        occupancy = data.exposures / data.time[:, None]

    boot = {name: [] for name in masks}
    failures = 0
    for b in range(int(n_boot)):
        rng = _rng.stream(seed, (1 << 24) + b)
        cens = _sample_censoring(data, len(data), rng)
        sim_seed = int(rng.integers(0, 2**63 - 1))
        sim = simulate_survival(spec, result.params, data.covariates, cens, occupancy, seed=sim_seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                refit = fit_model(sim, spec, theta0=result.params)
            except Exception as exc:  # noqa: BLE001 - a failed replicate is skipped and counted
                logger.debug("bootstrap refit %d failed: %s", b, exc)
                failures += 1
                continue
        stats_b = _statistics(refit, sim, masks)
        for name, (_, _, dist) in stats_b.items():
            if np.isfinite(dist):
                boot[name].append(dist)

    out = []
    for name, m in masks.items():
        km, zbar, dist = observed[name]
        dists = np.asarray(boot[name])
        n_ev = int(data.event[m].sum())
        if km is None:
            msg = "subgroup has zero events; Kaplan-Meier comparison not possible"
            warnings.warn(f"{name}: {msg}", RuntimeWarning)
            out.append(SubgroupComparison(name, int(m.sum()), 0, zbar, None, None, float("nan"),
                                          float("nan"), level, None, dists, msg))
            continue
        crit = float(np.quantile(dists, level)) if dists.size else float("nan")
        fitted = predict_survival(result, zbar, km.event_times)
        out.append(SubgroupComparison(name, int(m.sum()), n_ev, zbar, km, fitted, dist, crit, level,
                                      bool(dist <= crit) if dists.size else None, dists))
    return ValidationReport(out, int(n_boot), float(level), int(seed), failures)
