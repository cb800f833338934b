"""Calendar time to running time.

Two families are supported:

* the analytic transform ``r = 1 - exp(-lam * t**gam)``;
* the composite exposure-weighted scale ``r(t) = sum_j alpha_j r_j(t)``,
  where ``r_j(t)`` is the time spent in exposure category ``j`` during
  ``[0, t]``. The last category is the numeraire (``alpha_J = 1``), and the
  accumulators obey the accounting constraint ``sum_j r_j(t) = t``.

Exposure tables are tabulated cumulative exposures with constant occupancy
rates between tabulated times (linear interpolation). Stochastic
subordination by a directing process is not supported.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "AnalyticTimeSpec",
    "ExposureTable",
    "CompositeTimeSpec",
    "AccountingError",
    "NonInvertibleError",
    "check_accounting",
    "analytic_running_time",
    "composite_running_time",
    "running_time",
    "invert_running_time",
]

ACCOUNTING_TOL = 1e-9


class AccountingError(ValueError):
    """Exposure accumulators do not add up to calendar time."""

    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = list(rows)


class NonInvertibleError(ValueError):
    """Running time is flat on an interval; ``interval`` holds its calendar endpoints."""

    def __init__(self, r, interval):
        super().__init__(
            f"running time {r!r} is attained on the whole interval "
            f"[{float(interval[0])!r}, {float(interval[1])!r}] of calendar time"
        )
        self.interval = interval


@dataclass(frozen=True)
class AnalyticTimeSpec:
    lam: float
    gam: float

    def __post_init__(self):
        if not (self.lam > 0 and self.gam > 0):
            raise ValueError(f"lam and gam must be > 0, got {self.lam}, {self.gam}")


def check_accounting(times, exposures, tol=ACCOUNTING_TOL):
    """Return the indices of rows where ``sum_j r_j(t) != t`` beyond ``tol``."""
    times = np.asarray(times, dtype=float)
    exposures = np.atleast_2d(np.asarray(exposures, dtype=float))
    gap = np.abs(exposures.sum(axis=1) - times)
    return np.flatnonzero(gap > tol * np.maximum(1.0, np.abs(times)))


@dataclass(frozen=True)
class ExposureTable:
    """Cumulative exposure of one subject, ``cumulative[k, j] = r_j(times[k])``."""

    times: np.ndarray
    cumulative: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        R = np.atleast_2d(np.asarray(self.cumulative, dtype=float))
        if t.ndim != 1 or R.shape[0] != t.size:
            raise ValueError("times and cumulative exposures must have matching rows")
        if t.size == 0 or t[0] != 0.0 or np.any(R[0] != 0.0):
            raise ValueError("exposure table must start at t=0 with zero exposure")
        if np.any(np.diff(t) < 0):
            raise ValueError("exposure table times must be nondecreasing")
        dec = np.flatnonzero((np.diff(R, axis=0) < 0).any(axis=1))
        if dec.size:
            raise ValueError(f"cumulative exposure decreases after row(s) {dec.tolist()}")
        bad = check_accounting(t, R)
        if bad.size:
            raise AccountingError(
                "accounting constraint sum_j r_j(t) = t violated at row(s) "
                + ", ".join(f"{k} (t={float(t[k])!r}, sum={float(R[k].sum())!r})" for k in bad),
                rows=bad,
            )
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "cumulative", R)

    @classmethod
    def from_intervals(cls, intervals, n_categories):
        """Build from consecutive ``(start, stop, category)`` occupancy intervals."""
        times, rows = [0.0], [np.zeros(n_categories)]
        cur = np.zeros(n_categories)
        t = 0.0
        for start, stop, cat in intervals:
            if start != t:
                raise ValueError(f"interval starting at {start} leaves a gap after {t}")
            cur = cur.copy()
            cur[cat] += stop - start
            times.append(stop)
            rows.append(cur)
            t = stop
        return cls(np.array(times), np.array(rows))

    @property
    def n_categories(self):
        return self.cumulative.shape[1]

    def at(self, t):
        """Interpolated ``r_j(t)``, shape ``(len(t), J)``; constant beyond the last row."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.column_stack(
            [np.interp(t, self.times, self.cumulative[:, j]) for j in range(self.n_categories)]
        )


@dataclass(frozen=True)
class CompositeTimeSpec:
    """Category weights; the last entry is the numeraire and must be exactly 1.

    Zero weights are accepted for non-numeraire categories (running time then
    stands still while the subject is in that category).
    """

    alphas: tuple

    def __post_init__(self):
        a = tuple(float(v) for v in self.alphas)
        if not a:
            raise ValueError("at least one category is required")
        if a[-1] != 1.0:
            raise ValueError(f"numeraire weight alpha_J must be exactly 1, got {float(a[-1])!r}")
        if any(v < 0 for v in a):
            raise ValueError("category weights must be nonnegative")
        object.__setattr__(self, "alphas", a)


def analytic_running_time(t, spec):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("calendar time must be >= 0")
    return -np.expm1(-spec.lam * t**spec.gam)


def composite_running_time(t, table, alphas):
    """``sum_j alpha_j r_j(t)`` for one subject's :class:`ExposureTable`."""
    spec = alphas if isinstance(alphas, CompositeTimeSpec) else CompositeTimeSpec(tuple(alphas))
    if len(spec.alphas) != table.n_categories:
        raise ValueError(
            f"{len(spec.alphas)} weights given for {table.n_categories} exposure categories"
        )
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("calendar time must be >= 0")
    if np.any(t_arr > table.times[-1] * (1 + ACCOUNTING_TOL) + ACCOUNTING_TOL):
        raise AccountingError(
            f"exposure table ends at t={float(table.times[-1])!r}; accounting cannot hold beyond it"
        )
    # accounting lets the numeraire column be eliminated: r = t + sum_{j<J} (alpha_j - 1) r_j(t),
    # which is exactly t when every weight is 1
    a = np.asarray(spec.alphas)
    flat = t_arr.reshape(-1)
    r = flat + table.at(flat)[:, :-1] @ (a[:-1] - 1.0)
    return r.reshape(t_arr.shape)[()]


def running_time(t, spec, table=None):
    if isinstance(spec, AnalyticTimeSpec):
        return analytic_running_time(t, spec)
    if table is None:
        raise ValueError("a composite running time needs the subject's exposure table")
    return composite_running_time(t, table, spec)


def invert_running_time(r, spec, table=None, tol=1e-12):
    """Calendar time ``t`` with ``running_time(t) == r``, found by bisection.

    Raises :class:`NonInvertibleError` when ``r`` is attained on an interval
    of positive length, and ``ValueError`` when ``r`` is outside the range.
    """
    r = float(r)
    if isinstance(spec, AnalyticTimeSpec):
        if not 0.0 <= r < 1.0:
            raise ValueError(f"running time {r!r} outside the transform's range [0, 1)")
        lo, hi = 0.0, 1.0
        while analytic_running_time(hi, spec) < r:
            hi *= 2.0
    else:
        if table is None:
            raise ValueError("a composite running time needs the subject's exposure table")
        lo, hi = 0.0, float(table.times[-1])
        r_hi = composite_running_time(hi, table, spec)
        if not 0.0 <= r <= r_hi:
            raise ValueError(f"running time {r!r} outside the table's range [0, {r_hi!r}]")

    def f(t):
        return float(running_time(t, spec, table))

    left = _bisect(f, r, lo, hi, tol, strict=True)
    right = _bisect(f, r, lo, hi, tol, strict=False)
    if right - left > max(1e-9, 1e3 * tol * max(1.0, hi)):
        raise NonInvertibleError(r, (left, right))
    return 0.5 * (left + right)


def _bisect(f, r, lo, hi, tol, strict):
    """Smallest t with f(t) >= r (strict) or largest t with f(t) <= r."""
    for _ in range(200):
        if hi - lo <= tol * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if (f(mid) >= r) if strict else (f(mid) > r):
            hi = mid
        else:
            lo = mid
    return hi if strict else lo
