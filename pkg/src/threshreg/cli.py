"""Command-line interface: ``threshreg {simulate,fit,predict,validate,loglik}``.

Every command is deterministic given its inputs and ``--seed`` (default
taken from ``THRESHREG_SEED``, else 0). Floats are printed with ``repr``
precision so that printed values can be fed back exactly.
"""

import argparse
import json
import logging
import sys
import warnings

import numpy as np

from . import _rng
from .competing import simulate_competing
from .dataio import (
    ArtifactError,
    DatasetError,
    ModelArtifact,
    TOOL_VERSION,
    load_dataset,
    load_model,
    save_model,
    write_dataset,
)
from .longitudinal import lagged_residual_correlation, uncoupled_sample_loglik
from .process_kernel import (
    GammaSpec,
    WienerSpec,
    sample_gamma_paths,
    sample_ig_exact,
    sample_wiener_fht,
    sample_wiener_readings,
)
from .regression import (
    LINKS,
    NoEventsError,
    RegressionSpec,
    fit,
    predict_survival,
    sample_loglik,
)
from .validation import km_vs_fitted

logger = logging.getLogger("threshreg")


class UsageError(Exception):
    pass


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(text):
    """``start:stop:step`` or a comma list."""
    if ":" in text:
        parts = [float(v) for v in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise argparse.ArgumentTypeError("grid must be start:stop:step with step > 0")
        n = int(np.floor((parts[1] - parts[0]) / parts[2] + 1e-9)) + 1
        return parts[0] + parts[2] * np.arange(n)
    return np.array(_floats(text))


def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", newline="")


# simulate

def cmd_simulate(args):
    seed = args.seed
    out = _open_out(args.out)
    try:
        if args.process == "wiener":
            spec = WienerSpec(args.mu[0], args.sigma2, args.x0[0])
            ids = [f"s{i}" for i in range(args.n)]
            if args.readings:
                fht, X = sample_wiener_readings(spec, args.reading_dt, args.readings, dt=args.dt, seed=seed, size=args.n)
                _write_longitudinal(out, ids, spec.x0, fht, X, args.reading_dt)
                return 0
            if args.method == "exact":
                t = sample_ig_exact(spec, seed=seed, size=args.n)
            else:
                t = sample_wiener_fht(spec, dt=args.dt, t_max=args.t_max, seed=seed, size=args.n)
            event = t <= args.t_max
            if not np.isfinite(args.t_max) and not event.all():
                raise UsageError("some paths never hit; give a finite --t-max for censoring")
            write_dataset(out, ids, np.minimum(t, args.t_max), event.astype(int))
        elif args.process == "competing":
            C = len(args.mu)
            x0 = args.x0 * C if len(args.x0) == 1 else args.x0
            if len(x0) != C:
                raise UsageError("--x0 needs one value or one per cause")
            specs = [WienerSpec(m, args.sigma2, x) for m, x in zip(args.mu, x0)]
            corr = np.full((C, C), args.rho)
            np.fill_diagonal(corr, 1.0)
            t_max = args.t_max if np.isfinite(args.t_max) else 50.0
            oc = simulate_competing(specs, corr, dt=args.dt, t_max=t_max, seed=seed, size=args.n)
            write_dataset(out, [f"s{i}" for i in range(args.n)], oc.time, (oc.cause > 0).astype(int),
                          causes=oc.cause)
        elif args.process == "gamma":
            spec = GammaSpec(args.alpha, args.beta, args.x0[0], args.p_susceptible)
            t_max = args.t_max if np.isfinite(args.t_max) else 50.0
            grid = np.arange(0.0, t_max + 0.5 * args.dt, args.dt)
            X = sample_gamma_paths(spec, grid, seed=seed, size=args.n)
            hit = X <= 0
            k = np.where(hit.any(axis=1), hit.argmax(axis=1), grid.size - 1)
            write_dataset(out, [f"s{i}" for i in range(args.n)], grid[k], hit.any(axis=1).astype(int))
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _write_longitudinal(out, ids, x0, fht, X, reading_dt):
    cols = {"id": [], "j": [], "t": [], "f": [], "x": []}

    def row(sid, j, t, f, x):
        for key, v in zip(cols, (sid, j, t, f, x)):
            cols[key].append(v)

    for i, sid in enumerate(ids):
        row(sid, 0, 0.0, 0, x0)
        j = 0
        for k in range(X.shape[1]):
            t = (k + 1) * reading_dt
            if fht[i] <= t:
                break
            j += 1
            row(sid, j, t, 0, X[i, k])
        if np.isfinite(fht[i]):
            row(sid, j + 1, fht[i], 1, 0.0)
    write_dataset(out, cols["id"], cols["t"], cols["f"], readings=cols["x"], j=cols["j"])


# fit

def _build_spec(ds, args):
    names = ds.covariate_names if args.covariates is None else tuple(args.covariates)
    return RegressionSpec(
        n_covariates=len(names),
        mu_link=args.mu_link,
        x0_link=args.x0_link,
        cure=args.cure,
        n_exposures=len(ds.exposure_names) if args.exposures else 0,
        covariate_names=names,
    )


def _survival_for(ds, spec):
    sub = ds.select_covariates(spec.covariate_names)
    data = sub.to_survival()
    if not spec.n_exposures:
        data.exposures = None
    elif data.exposures is None or data.exposures.shape[1] != spec.n_exposures:
        raise UsageError(f"model expects {spec.n_exposures} exposure columns, dataset has {len(ds.exposure_names)}")
    return sub, data


def cmd_fit(args):
    ds = load_dataset(args.data)
    spec = _build_spec(ds, args)
    _, data = _survival_for(ds, spec)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = fit(data, spec, n_starts=args.n_starts, seed=args.seed, max_iter=args.max_iter)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if args.model_out:
        save_model(ModelArtifact.from_fit(res, seed=args.seed), args.model_out)
    print(res.summary())
    print(f"loglik = {res.loglik!r}")
    return 0 if res.converged else 3


# predict

def cmd_predict(args):
    art = load_model(args.model)
    res = art.to_fit()
    spec = res.spec
    if args.z is not None:
        Z = np.array([args.z])
    elif args.data is not None:
        ds = load_dataset(args.data)
        Z = ds.select_covariates(spec.covariate_names).to_survival().covariates
    else:
        Z = np.zeros((1, 0))
    if Z.shape[1] != spec.n_covariates:
        raise UsageError(f"model has {spec.n_covariates} covariates, got rows of width {Z.shape[1]}")
    out = _open_out(args.out)
    try:
        out.write("row,r,survival\n")
        for i, z in enumerate(Z):
            sf = predict_survival(res, z, args.r_grid)
            for r, s in zip(args.r_grid, sf):
                out.write(f"{i},{float(r)!r},{float(s)!r}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


# validate

def _subgroups(ds, data, by):
    if by is None:
        return None
    if by not in ds.covariate_names:
        raise UsageError(f"--by column {by!r} is not a covariate")
    col = np.vstack([r.covariates[0] for r in ds.records])[:, ds.covariate_names.index(by)]
    levels = np.unique(col)
    if levels.size > 10:
        med = float(np.median(col))
        return {f"{by}<={med!r}": col <= med, f"{by}>{med!r}": col > med}
    return {f"{by}={float(v)!r}": col == v for v in levels}


def cmd_validate(args):
    art = load_model(args.model)
    res = art.to_fit()
    ds = load_dataset(args.data)
    sub, data = _survival_for(ds, res.spec)
    groups = _subgroups(ds, data, args.by)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = km_vs_fitted(res, data, groups, n_boot=args.n_boot, level=args.level, seed=args.seed)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(rep.to_text())
    d = rep.to_dict()
    if sub.has_readings and all(r.observed for r in sub.records):
        d["lagged_residual_correlation"] = lagged_residual_correlation(sub.records, res.params, spec=res.spec)
        print(f"lag-1 residual correlation = {d['lagged_residual_correlation']!r}")
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(json.dumps(d, sort_keys=True, indent=2) + "\n")
    if args.curves:
        with open(args.curves, "w") as fh:
            fh.write("subgroup,r,km,greenwood_se,at_risk,fitted\n")
            for g in rep.subgroups:
                if g.km is None:
                    continue
                for (t, s, n, _, se), fv in zip(g.km.to_rows(), g.fitted_at_events):
                    fh.write(f"{g.name},{t!r},{s!r},{se!r},{n},{float(fv)!r}\n")
    return 0


# loglik

def cmd_loglik(args):
    if args.model:
        art = load_model(args.model)
        spec, theta = art.spec, art.params
    else:
        if args.params is None:
            raise UsageError("give --model or --params")
        ds0 = load_dataset(args.data)
        spec = _build_spec(ds0, args)
        theta = np.array(args.params)
    if args.params is not None and args.model:
        theta = np.array(args.params)
    if theta.size != spec.n_params:
        raise UsageError(f"{theta.size} coefficients given for {spec.n_params} parameters {spec.param_names()}")
    ds = load_dataset(args.data)
    sub, data = _survival_for(ds, spec)
    if args.mode == "marginal":
        ll = sample_loglik(data, spec, theta)
    else:
        if any(r.observed for r in sub.records) and not all(r.observed for r in sub.records):
            raise UsageError("subjects mix observed-process and latent modes")
        ll = uncoupled_sample_loglik(sub.records, theta, spec, sigma2=args.sigma2, failure=args.failure)
    print(repr(float(ll)))
    return 0


def build_parser():
    seed_default = _rng.default_seed()
    p = argparse.ArgumentParser(prog="threshreg", description="First-hitting-time threshold regression")
    p.add_argument("--version", action="version", version=TOOL_VERSION)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate first hitting times into a dataset file")
    s.add_argument("--process", choices=["wiener", "competing", "gamma"], default="wiener")
    s.add_argument("--mu", type=_floats, default=[-1.0], help="drift (one per cause for competing)")
    s.add_argument("--x0", type=_floats, default=[1.0])
    s.add_argument("--sigma2", type=float, default=1.0)
    s.add_argument("--rho", type=float, default=0.0, help="common correlation between causes")
    s.add_argument("--alpha", type=float, default=1.0, help="gamma process shape rate")
    s.add_argument("--beta", type=float, default=1.0, help="gamma process scale")
    s.add_argument("--p-susceptible", type=float, default=1.0)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--t-max", type=float, default=float("inf"), help="administrative censoring time")
    s.add_argument("--method", choices=["exact", "path"], default="exact")
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--readings", type=int, default=0, help="number of process readings per subject")
    s.add_argument("--reading-dt", type=float, default=0.5)
    s.add_argument("--seed", type=int, default=seed_default)
    s.add_argument("--out", default=None, help="output file (default stdout)")
    s.set_defaults(func=cmd_simulate)

    def model_flags(q):
        q.add_argument("--covariates", type=lambda t: [c for c in t.split(",") if c], default=None)
        q.add_argument("--cure", action="store_true")
        q.add_argument("--exposures", action="store_true", help="composite running time from exp_* columns")
        q.add_argument("--mu-link", choices=sorted(LINKS), default="identity")
        q.add_argument("--x0-link", choices=sorted(LINKS), default="log")

    f = sub.add_parser("fit", help="maximum-likelihood fit")
    f.add_argument("--data", required=True)
    model_flags(f)
    f.add_argument("--n-starts", type=int, default=1)
    f.add_argument("--max-iter", type=int, default=500)
    f.add_argument("--seed", type=int, default=seed_default)
    f.add_argument("--model-out", default=None)
    f.set_defaults(func=cmd_fit)

    q = sub.add_parser("predict", help="survival curves for covariate rows")
    q.add_argument("--model", required=True)
    q.add_argument("--z", type=_floats, default=None, help="one covariate row")
    q.add_argument("--data", default=None, help="dataset whose baseline covariate rows are used")
    q.add_argument("--r-grid", type=_grid, default=_grid("0:10:0.5"))
    q.add_argument("--seed", type=int, default=seed_default)
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_predict)

    v = sub.add_parser("validate", help="Kaplan-Meier comparison with bootstrap band")
    v.add_argument("--model", required=True)
    v.add_argument("--data", required=True)
    v.add_argument("--by", default=None, help="covariate defining subgroups")
    v.add_argument("--n-boot", type=int, default=200)
    v.add_argument("--level", type=float, default=0.95)
    v.add_argument("--seed", type=int, default=seed_default)
    v.add_argument("--report", default=None, help="JSON report file")
    v.add_argument("--curves", default=None, help="curve table (CSV)")
    v.set_defaults(func=cmd_validate)

    ll = sub.add_parser("loglik", help="evaluate the log-likelihood at given coefficients")
    ll.add_argument("--data", required=True)
    ll.add_argument("--model", default=None)
    ll.add_argument("--params", type=_floats, default=None)
    model_flags(ll)
    ll.add_argument("--mode", choices=["marginal", "uncoupled"], default="marginal")
    ll.add_argument("--failure", choices=["exact", "interval"], default="exact")
    ll.add_argument("--sigma2", type=float, default=1.0, help="process variance (observed-process mode)")
    ll.add_argument("--seed", type=int, default=seed_default)
    ll.set_defaults(func=cmd_loglik)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except NoEventsError as exc:
        print(f"error: no events: {exc}", file=sys.stderr)
        return 4
    except (DatasetError, ArtifactError, UsageError, KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
