"""Parent-process parameterizations and exact-increment Monte Carlo samplers.

Every sampler is a pure function of its arguments and ``seed``. Samplers that
draw many replicates (``size=...``) process them in blocks of
``_rng.BLOCK`` replicates, block ``k`` using stream ``k`` of the seed.

No-hit outcomes are reported as ``np.inf`` in replicate arrays and as ``None``
for single draws.

Continuous processes hit the zero level (or ``boundary_level`` for OU).
Crossings between grid points are caught with the Brownian-bridge correction:
a step from ``a > 0`` to ``b > 0`` contains an unseen crossing with probability
``exp(-2ab / (sigma2 * dt))``. For a Wiener process this rule is exact given the
step endpoints, so hit/no-hit outcomes carry no discretization error; only the
reported time inside the step does (linear interpolation for observed
crossings, step midpoint for bridge crossings).
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from . import _rng

__all__ = [
    "WienerSpec",
    "GammaSpec",
    "PoissonSpec",
    "BernoulliSpec",
    "OuSpec",
    "MarkovChainSpec",
    "SamplePath",
    "correlation_factor",
    "sample_wiener_fht",
    "sample_wiener_readings",
    "sample_ig_exact",
    "sample_gamma_path",
    "sample_gamma_paths",
    "sample_poisson_fht",
    "sample_bernoulli_fht",
    "sample_markov_fht",
    "sample_ou_fht",
    "sample_correlated_wiener",
    "correlated_wiener_fht",
]

# elements per random-number chunk; bounds memory of the vectorized engines
_CHUNK_ELEMS = 1 << 16


@dataclass(frozen=True)
class WienerSpec:
    mu: float
    sigma2: float = 1.0
    x0: float = 1.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be > 0, got {self.sigma2}")
        if not self.x0 > 0:
            raise ValueError(f"x0 must be > 0 (boundary is the zero level), got {self.x0}")


@dataclass(frozen=True)
class GammaSpec:
    """``X(t) = x0 - Z(t)``, ``Z`` a gamma process with shape ``alpha*t`` and scale ``beta``.

    With probability ``1 - p_susceptible`` the path stays at ``x0`` forever.
    """

    alpha: float
    beta: float
    x0: float
    p_susceptible: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "x0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0.0 <= self.p_susceptible <= 1.0:
            raise ValueError(f"p_susceptible must lie in [0, 1], got {self.p_susceptible}")


@dataclass(frozen=True)
class PoissonSpec:
    lam: float
    m: int

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")


@dataclass(frozen=True)
class BernoulliSpec:
    p: float
    m: int

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")


@dataclass(frozen=True)
class OuSpec:
    """Mean-reverting diffusion ``dX = theta (equilibrium - X) dt + sqrt(sigma2) dW``."""

    theta: float
    equilibrium: float
    sigma2: float
    x0: float

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be > 0, got {self.theta}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be > 0, got {self.sigma2}")


@dataclass(frozen=True)
class MarkovChainSpec:
    transition: np.ndarray
    x0: int
    boundary: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError(f"transition must be square, got shape {P.shape}")
        if np.any(P < 0) or np.any(P > 1):
            raise ValueError("transition entries must lie in [0, 1]")
        bad = np.flatnonzero(np.abs(P.sum(axis=1) - 1.0) > 1e-12)
        if bad.size:
            raise ValueError(f"rows {bad.tolist()} do not sum to 1 within 1e-12")
        P.setflags(write=False)
        object.__setattr__(self, "transition", P)
        boundary = frozenset(int(b) for b in self.boundary)
        n = P.shape[0]
        if not boundary:
            raise ValueError("boundary must be a nonempty set of states")
        if any(b < 0 or b >= n for b in boundary):
            raise ValueError(f"boundary states must lie in 0..{n - 1}")
        if not 0 <= int(self.x0) < n:
            raise ValueError(f"x0 must lie in 0..{n - 1}")
        if int(self.x0) in boundary:
            raise ValueError("x0 must not be a boundary state")
        object.__setattr__(self, "boundary", boundary)
        object.__setattr__(self, "x0", int(self.x0))

    @property
    def n_states(self):
        return self.transition.shape[0]


@dataclass
class SamplePath:
    times: np.ndarray
    states: np.ndarray
    hit: Optional[tuple] = None  # (fht_time, threshold_state)


def _check_horizon(dt, t_max):
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if not t_max > 0:
        raise ValueError(f"t_max must be > 0, got {t_max}")
    return max(1, int(np.ceil(t_max / dt - 1e-9)))


def correlation_factor(corr, dim=None):
    """Return ``L`` with ``L @ L.T == corr`` for a PSD unit-diagonal matrix."""
    R = np.atleast_2d(np.asarray(corr, dtype=float))
    if R.shape[0] != R.shape[1]:
        raise ValueError(f"correlation matrix must be square, got shape {R.shape}")
    if dim is not None and R.shape[0] != dim:
        raise ValueError(f"correlation matrix has dimension {R.shape[0]}, expected {dim}")
    if not np.allclose(R, R.T, atol=1e-12):
        raise ValueError("correlation matrix is not symmetric")
    if not np.allclose(np.diag(R), 1.0, atol=1e-12):
        raise ValueError("correlation matrix must have unit diagonal")
    try:
        return np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh(R)
    if w.min() < -1e-10:
        raise ValueError(
            f"correlation matrix is not positive semidefinite (smallest eigenvalue {w.min():.3g})"
        )
    return V * np.sqrt(np.clip(w, 0.0, None))


def _first_passage(dist0, advance, bridge_var, n_steps, dt, rng, record_steps=None):
    """Vectorized first passage of ``(n, C)`` distances to zero.

    ``advance(d_prev, Z, active_rows)`` maps the current distances ``(na, C)``
    and standard normals ``(na, K, C)`` to the next ``K`` distances (it may
    overwrite ``Z``). Each dimension is absorbed at its own crossing; a row
    leaves the active set once every dimension has crossed.
    """
    n, C = dist0.shape
    hit_time = np.full((n, C), np.inf)
    rec = None
    if record_steps is not None:
        record_steps = np.asarray(record_steps, dtype=int)
        rec = np.full((n, len(record_steps), C), np.nan)
    rows = np.arange(n)
    d = dist0.astype(float).copy()
    done = np.zeros((n, C), dtype=bool)
    # exp(-2ab/var) underflows to exactly 0 beyond this product
    ab_cut = 372.5 * bridge_var
    step = 0
    while step < n_steps and rows.size:
        na = rows.size
        K = int(min(n_steps - step, max(1, _CHUNK_ELEMS // (na * C))))
        path = advance(d, rng.standard_normal((na, K, C)), rows)
        ab = np.empty_like(path)
        np.multiply(path[:, 0, :], d, out=ab[:, 0, :])
        np.multiply(path[:, 1:, :], path[:, :-1, :], out=ab[:, 1:, :])
        crossed = path <= 0.0
        cand = np.flatnonzero((ab < ab_cut) & (ab > 0.0) & ~crossed)
        if cand.size:
            u = rng.random(cand.size)
            crossed.flat[cand[u < np.exp(-2.0 * ab.flat[cand] / bridge_var)]] = True
        any_c = crossed.any(axis=1)
        first = np.argmax(crossed, axis=1)  # (na, C)
        ii, cc = np.nonzero(any_c & ~done[rows])
        if ii.size:
            kk = first[ii, cc]
            b = path[ii, kk, cc]
            a = np.where(kk > 0, path[ii, np.maximum(kk - 1, 0), cc], d[ii, cc])
            frac = np.where(b <= 0.0, a / np.maximum(a - b, 1e-300), 0.5)
            hit_time[rows[ii], cc] = (step + kk + np.clip(frac, 0.0, 1.0)) * dt
        if rec is not None:
            sel = np.flatnonzero((record_steps >= step + 1) & (record_steps <= step + K))
            if sel.size:
                local = record_steps[sel] - step - 1
                # a reading at step s exists only if no crossing happened at or before s
                alive = ~done[rows][:, None, :] & ~(
                    any_c[:, None, :] & (first[:, None, :] <= local[None, :, None])
                )
                rec[rows[:, None], sel[None, :], :] = np.where(alive, path[:, local, :], np.nan)
        done[rows[ii], cc] = True
        keep = ~done[rows].all(axis=1)
        d = path[keep, -1, :]
        rows = rows[keep]
        step += K
    return hit_time, rec


def _wiener_advance(drift_dt, sd_dt):
    """Distances in units of each row's sigma: drift ``mu/sigma*dt``, step sd ``sqrt(dt)``."""

    def advance(d, Z, rows):
        Z *= sd_dt
        Z += drift_dt[rows][:, None, :]
        np.cumsum(Z, axis=1, out=Z)
        Z += d[:, None, :]
        return Z

    return advance


def _broadcast_wiener(spec, size):
    """Per-replicate (mu, sigma2, x0) arrays from a spec or arrays of parameters."""
    if isinstance(spec, WienerSpec):
        mu, s2, x0 = spec.mu, spec.sigma2, spec.x0
    else:
        mu, s2, x0 = spec
    mu, s2, x0 = (np.broadcast_to(np.asarray(v, dtype=float), (size,)) for v in (mu, s2, x0))
    if np.any(s2 <= 0) or np.any(x0 <= 0):
        raise ValueError("sigma2 and x0 must be > 0")
    return mu, s2, x0


def _wiener_block(mu, s2, x0, dt, n_steps, rng, record=None):
    sig = np.sqrt(s2)
    adv = _wiener_advance((mu / sig * dt)[:, None], np.sqrt(dt))
    t, rec = _first_passage((x0 / sig)[:, None], adv, dt, n_steps, dt, rng, record)
    if rec is not None:
        rec = rec[:, :, 0] * sig[:, None]
    return t[:, 0], rec


def sample_wiener_fht(spec, dt=1e-3, t_max=50.0, seed=0, size=None):
    """First hitting time of zero by ``x0 + mu t + sigma W(t)``.

    ``spec`` is a :class:`WienerSpec` or a ``(mu, sigma2, x0)`` triple of
    arrays broadcastable to ``size`` (one parameter set per replicate).
    Returns a float (``None`` when no crossing by ``t_max``) when ``size`` is
    None, else an array of length ``size`` with ``inf`` for no crossing.
    """
    n = 1 if size is None else int(size)
    n_steps = _check_horizon(dt, t_max)
    mu, s2, x0 = _broadcast_wiener(spec, n)
    out = np.empty(n)
    for k, a, b in _rng.blocks(n):
        out[a:b], _ = _wiener_block(mu[a:b], s2[a:b], x0[a:b], dt, n_steps, _rng.stream(seed, k))
    out[out > t_max] = np.inf
    if size is None:
        return None if not np.isfinite(out[0]) else float(out[0])
    return out


def sample_wiener_readings(spec, reading_dt, n_readings, dt=1e-3, seed=0, size=1):
    """Simulate Wiener paths read every ``reading_dt``, ``n_readings`` times.

    Returns ``(fht, readings)``: ``fht`` is ``inf`` when no crossing by the
    last reading time; ``readings[i, j]`` is the state at ``(j+1)*reading_dt``,
    NaN once the path has been absorbed.
    """
    n = int(size)
    every = int(round(reading_dt / dt))
    if every < 1 or abs(every * dt - reading_dt) > 1e-9 * max(1.0, reading_dt):
        raise ValueError("reading_dt must be a positive multiple of dt")
    n_steps = every * int(n_readings)
    record = every * np.arange(1, int(n_readings) + 1)
    mu, s2, x0 = _broadcast_wiener(spec, n)
    fht = np.empty(n)
    readings = np.empty((n, int(n_readings)))
    for k, a, b in _rng.blocks(n):
        fht[a:b], readings[a:b] = _wiener_block(
            mu[a:b], s2[a:b], x0[a:b], dt, n_steps, _rng.stream(seed, k), record
        )
    return fht, readings


def sample_ig_exact(spec, seed=0, size=None):
    """Exact draws of the Wiener first hitting time (no path simulation).

    Positive drift hits with probability ``exp(-2 x0 mu / sigma2)``; given a
    hit, the time has the law of the mirrored negative-drift case.
    """
    n = 1 if size is None else int(size)
    mu, s2, x0 = _broadcast_wiener(spec, n)
    out = np.empty(n)
    for k, a, b in _rng.blocks(n):
        rng = _rng.stream(seed, k)
        m, v, x = mu[a:b], s2[a:b], x0[a:b]
        am = np.abs(m)
        t = np.empty(b - a)
        zero = am == 0
        # zero drift: Levy law x^2 / (sigma2 Z^2)
        z = rng.standard_normal(b - a)
        t[zero] = x[zero] ** 2 / (v[zero] * z[zero] ** 2)
        nz = ~zero
        t[nz] = rng.wald(x[nz] / am[nz], x[nz] ** 2 / v[nz])
        u = rng.random(b - a)
        cured = (m > 0) & (u >= np.exp(-2.0 * x * np.clip(m, 0, None) / v))
        t[cured] = np.inf
        out[a:b] = t
    if size is None:
        return None if not np.isfinite(out[0]) else float(out[0])
    return out


def sample_gamma_paths(spec, grid, seed=0, size=1):
    """Return ``X`` values on ``grid`` for ``size`` paths, shape ``(size, len(grid))``."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing and start at 0")
    dts = np.diff(grid)
    n = int(size)
    X = np.empty((n, grid.size))
    for k, a, b in _rng.blocks(n):
        rng = _rng.stream(seed, k)
        m = b - a
        susceptible = rng.random(m) < spec.p_susceptible
        inc = rng.gamma(spec.alpha * dts, spec.beta, size=(m, dts.size))
        inc[~susceptible] = 0.0
        X[a:b, 0] = spec.x0
        X[a:b, 1:] = spec.x0 - np.cumsum(inc, axis=1)
    return X


def sample_gamma_path(spec, grid, seed=0):
    grid = np.asarray(grid, dtype=float)
    X = sample_gamma_paths(spec, grid, seed=seed, size=1)[0]
    hit = None
    idx = np.flatnonzero(X <= 0.0)
    if idx.size:
        hit = (float(grid[idx[0]]), float(X[idx[0]]))
    return SamplePath(times=grid, states=X, hit=hit)


def sample_poisson_fht(spec, seed=0, size=None):
    """Time of the m-th event of a rate-``lam`` Poisson process (sum of exponential gaps)."""
    n = 1 if size is None else int(size)
    out = np.empty(n)
    for k, a, b in _rng.blocks(n):
        rng = _rng.stream(seed, k)
        out[a:b] = rng.exponential(1.0 / spec.lam, size=(b - a, spec.m)).sum(axis=1)
    return float(out[0]) if size is None else out


def sample_bernoulli_fht(spec, seed=0, size=None, chunk_trials=64):
    """Trial index of the m-th success, simulated trial by trial."""
    n = 1 if size is None else int(size)
    out = np.empty(n, dtype=np.int64)
    for k, a, b in _rng.blocks(n):
        rng = _rng.stream(seed, k)
        rows = np.arange(a, b)
        count = np.zeros(b - a, dtype=np.int64)
        trials = 0
        while rows.size:
            succ = rng.random((rows.size, chunk_trials)) < spec.p
            cum = count[:, None] + np.cumsum(succ, axis=1)
            reached = cum >= spec.m
            fin = reached.any(axis=1)
            out[rows[fin]] = trials + np.argmax(reached[fin], axis=1) + 1
            count = cum[~fin, -1]
            rows = rows[~fin]
            trials += chunk_trials
    return int(out[0]) if size is None else out


def sample_markov_fht(spec, t_max=1000, seed=0, size=None):
    """Steps until the chain first enters the boundary.

    Returns ``(steps, hit_state)`` or ``None`` for a single draw; for
    ``size`` draws returns ``(steps, states)`` arrays with ``steps = inf``
    and ``state = -1`` when the boundary was not reached within ``t_max``.
    """
    n = 1 if size is None else int(size)
    cum = np.cumsum(spec.transition, axis=1)
    cum[:, -1] = 1.0
    is_b = np.zeros(spec.n_states, dtype=bool)
    is_b[list(spec.boundary)] = True
    steps = np.full(n, np.inf)
    states = np.full(n, -1, dtype=np.int64)
    for k, a, b in _rng.blocks(n):
        rng = _rng.stream(seed, k)
        rows = np.arange(a, b)
        cur = np.full(b - a, spec.x0, dtype=np.int64)
        for t in range(1, int(t_max) + 1):
            if not rows.size:
                break
            u = rng.random(rows.size)
            cur = (u[:, None] >= cum[cur]).sum(axis=1)
            hit = is_b[cur]
            steps[rows[hit]] = t
            states[rows[hit]] = cur[hit]
            rows, cur = rows[~hit], cur[~hit]
    if size is None:
        return None if not np.isfinite(steps[0]) else (int(steps[0]), int(states[0]))
    return steps, states


def sample_ou_fht(spec, boundary_level=0.0, dt=1e-3, t_max=50.0, seed=0, size=None):
    """First crossing of ``boundary_level`` by an OU process (exact Gaussian steps)."""
    if spec.x0 == boundary_level:
        raise ValueError("x0 must lie strictly on one side of boundary_level")
    n = 1 if size is None else int(size)
    n_steps = _check_horizon(dt, t_max)
    side = 1.0 if spec.x0 > boundary_level else -1.0
    eq = side * (spec.equilibrium - boundary_level)
    phi_m1 = np.expm1(-spec.theta * dt)
    phi = 1.0 + phi_m1
    sd = np.sqrt(spec.sigma2 * -np.expm1(-2.0 * spec.theta * dt) / (2.0 * spec.theta))
    d0 = side * (spec.x0 - boundary_level)

    def advance(d, Z, rows):
        # offsets w_k = d_k - d_prev obey w_k = phi w_{k-1} + (phi-1)(d_prev-eq) + sd Z_k;
        # expm1 keeps the reversion pull exact when theta*dt is tiny
        e = sd * Z[:, :, 0] + (phi_m1 * (d[:, 0] - eq))[:, None]
        w = lfilter([1.0], [1.0, -phi], e, axis=1)
        return (d[:, 0][:, None] + w)[:, :, None]

    out = np.empty(n)
    for k, a, b in _rng.blocks(n):
        rng = _rng.stream(seed, k)
        t, _ = _first_passage(
            np.full((b - a, 1), d0), advance, spec.sigma2 * dt, n_steps, dt, rng
        )
        out[a:b] = t[:, 0]
    out[out > t_max] = np.inf
    if size is None:
        return None if not np.isfinite(out[0]) else float(out[0])
    return out


def _correlated_setup(specs, corr):
    specs = list(specs)
    if not specs:
        raise ValueError("at least one WienerSpec is required")
    C = len(specs)
    R = np.atleast_2d(np.asarray(corr, dtype=float))
    correlation_factor(R, C)
    # perfectly correlated copies of the same spec share one path
    rep = list(range(C))
    for j in range(C):
        for i in range(j):
            if rep[i] == i and specs[i] == specs[j] and R[i, j] == 1.0:
                rep[j] = i
                break
    uniq = sorted(set(rep))
    L = correlation_factor(R[np.ix_(uniq, uniq)])
    cols = [uniq.index(r) for r in rep]
    mu = np.array([specs[u].mu for u in uniq])
    sig = np.sqrt([specs[u].sigma2 for u in uniq])
    x0 = np.array([specs[u].x0 for u in uniq])
    return mu, sig, x0, L, cols


def correlated_wiener_fht(specs, corr, dt=1e-3, t_max=50.0, seed=0, size=1):
    """Latent zero-level hitting times of a C-dimensional correlated Wiener process.

    Increments of dimensions ``i`` and ``j`` have correlation ``corr[i, j]``.
    Returns an array of shape ``(size, C)`` with ``inf`` where a dimension has
    not crossed by ``t_max``.
    """
    mu, sig, x0, L, cols = _correlated_setup(specs, corr)
    n = int(size)
    n_steps = _check_horizon(dt, t_max)
    Cu = mu.size
    drift = np.broadcast_to(mu / sig * dt, (n, Cu))
    sq = np.sqrt(dt)

    def advance(d, Z, rows):
        return d[:, None, :] + np.cumsum(drift[rows][:, None, :] + sq * (Z @ L.T), axis=1)

    out = np.empty((n, Cu))
    for k, a, b in _rng.blocks(n):
        t, _ = _first_passage(
            np.tile(x0 / sig, (b - a, 1)), advance, dt, n_steps, dt, _rng.stream(seed, k)
        )
        out[a:b] = t
    out[out > t_max] = np.inf
    return out[:, cols]


def sample_correlated_wiener(specs, corr, dt=1e-3, t_max=50.0, seed=0):
    """One replicate of correlated Wiener paths, one :class:`SamplePath` per dimension.

    Each path is recorded on the ``dt`` grid up to its own crossing (or
    ``t_max``); ``hit`` holds ``(time, 0.0)`` when the dimension crossed.
    """
    mu, sig, x0, L, cols = _correlated_setup(specs, corr)
    n_steps = _check_horizon(dt, t_max)
    rng = _rng.stream(seed, 0)
    Z = rng.standard_normal((n_steps, mu.size)) @ L.T
    U = rng.random((n_steps, mu.size))
    d = np.vstack([x0 / sig, x0 / sig + np.cumsum(mu / sig * dt + np.sqrt(dt) * Z, axis=0)])
    times = np.arange(n_steps + 1) * dt
    paths = []
    for c in range(mu.size):
        a, b = d[:-1, c], d[1:, c]
        with np.errstate(over="ignore"):
            p = np.where((a > 0) & (b > 0), np.exp(-2.0 * a * b / dt), 0.0)
        crossed = (b <= 0) | (U[:, c] < p)
        hit = None
        stop = n_steps
        if crossed.any():
            k = int(np.argmax(crossed))
            frac = a[k] / (a[k] - b[k]) if b[k] <= 0 else 0.5
            t_hit = (k + frac) * dt
            if t_hit <= t_max:
                hit = (float(t_hit), 0.0)
                stop = k + 1
        states = d[: stop + 1, c] * sig[c]
        if hit is not None:
            states = states.copy()
            states[-1] = 0.0
        paths.append(SamplePath(times=times[: stop + 1], states=states, hit=hit))
    return [paths[j] for j in cols]
