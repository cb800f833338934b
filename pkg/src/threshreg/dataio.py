"""Datasets on disk and saved model artifacts.

Dataset files are comma-separated with a header row and one row per
``(subject, observation)``. Reserved columns:

``id``
    subject identifier (required)
``j``
    observation index, 0..m (optional; file order is used when absent)
``time``, ``event``
    observation time and failure code (required)
``x``
    process reading; an empty field means missing
``cause``
    competing-risk cause label, 0 for censored
``exp_<name>``
    cumulative exposure in category ``<name>``; the last such column is the
    numeraire

Every other column is a covariate. A file in which every subject has a
single row with positive time is read as censored survival data (one
record ``t_0 = 0 < t_1``, covariates taken as baseline values). Otherwise
each subject's first row must be the origin, ``time = 0``.

Model artifacts are JSON with sorted keys and a version field; floats are
written with ``repr`` precision, so a save/load/save cycle is byte-identical.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .longitudinal import SubjectRecord
from .regression import FitResult, RegressionSpec, SurvivalData
from .timescale import ACCOUNTING_TOL

__all__ = [
    "DatasetError",
    "Dataset",
    "load_dataset",
    "write_dataset",
    "ArtifactError",
    "ModelArtifact",
    "save_model",
    "load_model",
    "TOOL_VERSION",
]

TOOL_VERSION = "1.0.0"
RESERVED = ("id", "j", "time", "event", "x", "cause")


class DatasetError(ValueError):
    """Invalid dataset; ``diagnostics`` lists ``(line, message)`` pairs."""

    def __init__(self, path, diagnostics):
        self.diagnostics = list(diagnostics)
        body = "\n".join(f"  line {ln}: {msg}" if ln else f"  {msg}" for ln, msg in self.diagnostics)
        super().__init__(f"{path}: {len(self.diagnostics)} problem(s)\n{body}")


@dataclass
class Dataset:
    records: list
    covariate_names: tuple
    exposure_names: tuple
    survival_mode: bool
    causes: Optional[np.ndarray] = None
    source_lines: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.records)

    @property
    def ids(self):
        return [r.subject_id for r in self.records]

    @property
    def has_readings(self):
        return any(r.observed for r in self.records)

    def to_survival(self):
        """One row per subject: final time and failure, baseline covariates, final exposures."""
        recs = self.records
        return SurvivalData(
            time=np.array([r.times[-1] for r in recs]),
            event=np.array([r.failed for r in recs]),
            covariates=np.vstack([r.covariates[0] for r in recs]) if recs else np.zeros((0, 0)),
            exposures=np.vstack([r.exposures[-1] for r in recs]) if self.exposure_names else None,
            ids=self.ids,
            covariate_names=self.covariate_names,
        )

    def select_covariates(self, names):
        """Dataset restricted to the named covariate columns, in that order."""
        idx = []
        for n in names:
            if n not in self.covariate_names:
                raise KeyError(f"no covariate column {n!r}; have {list(self.covariate_names)}")
            idx.append(self.covariate_names.index(n))
        recs = [
            SubjectRecord(r.times, r.failures, r.covariates[:, idx], r.readings, r.exposures, r.subject_id)
            for r in self.records
        ]
        return Dataset(recs, tuple(names), self.exposure_names, self.survival_mode, self.causes)


def _parse_float(text, name, line, diags, allow_empty=False):
    text = text.strip()
    if text == "":
        if allow_empty:
            return math.nan
        diags.append((line, f"column {name!r} is empty"))
        return math.nan
    try:
        return float(text)
    except ValueError:
        diags.append((line, f"column {name!r}: cannot parse {text!r} as a number"))
        return math.nan


def load_dataset(path, covariates=None):
    """Read and validate a dataset file; raise :class:`DatasetError` listing every problem.

    ``covariates`` optionally restricts the covariate columns used.
    """
    diags = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(path, [(1, "file is empty; a header row is required")]) from None
        rows = [(i + 2, row) for i, row in enumerate(reader) if any(c.strip() for c in row)]
    for col in ("id", "time", "event"):
        if col not in header:
            diags.append((1, f"required column {col!r} missing from header"))
    if len(set(header)) != len(header):
        diags.append((1, "duplicate column names in header"))
    if diags:
        raise DatasetError(path, diags)
    exp_cols = [h for h in header if h.startswith("exp_")]
    cov_cols = [h for h in header if h not in RESERVED and not h.startswith("exp_")]
    if covariates is not None:
        missing = [c for c in covariates if c not in cov_cols]
        if missing:
            raise DatasetError(path, [(1, f"covariate column(s) {missing} not in header")])
        cov_cols = list(covariates)
    pos = {h: k for k, h in enumerate(header)}

    groups = {}
    for line, row in rows:
        if len(row) != len(header):
            diags.append((line, f"expected {len(header)} fields, found {len(row)}"))
            continue
        sid = row[pos["id"]].strip()
        if not sid:
            diags.append((line, "empty subject id"))
            continue
        rec = {
            "line": line,
            "time": _parse_float(row[pos["time"]], "time", line, diags),
            "event": _parse_float(row[pos["event"]], "event", line, diags),
            "x": _parse_float(row[pos["x"]], "x", line, diags, True) if "x" in pos else math.nan,
            "cause": _parse_float(row[pos["cause"]], "cause", line, diags, True) if "cause" in pos else math.nan,
            "j": _parse_float(row[pos["j"]], "j", line, diags) if "j" in pos else None,
            "z": [_parse_float(row[pos[c]], c, line, diags, True) for c in cov_cols],
            "e": [_parse_float(row[pos[c]], c, line, diags) for c in exp_cols],
        }
        if rec["event"] not in (0.0, 1.0) and not math.isnan(rec["event"]):
            diags.append((line, f"event must be 0 or 1, got {row[pos['event']].strip()!r}"))
        groups.setdefault(sid, []).append(rec)
    if not rows:
        diags.append((None, "no data rows"))
    if diags:
        raise DatasetError(path, diags)

    survival_mode = all(len(g) == 1 for g in groups.values()) and all(
        g[0]["time"] > 0 for g in groups.values()
    )
    records, causes = [], []
    for sid, g in groups.items():
        if g[0]["j"] is not None:
            g.sort(key=lambda r: r["j"])
            js = [r["j"] for r in g]
            first = 1 if survival_mode else 0
            if js != [float(first + k) for k in range(len(g))]:
                diags.append((g[0]["line"], f"subject {sid!r}: observation indices {js} are not consecutive from {first}"))
        rec = _build_record(sid, g, survival_mode, cov_cols, exp_cols, diags)
        if rec is not None:
            records.append(rec)
            causes.append(g[-1]["cause"])
    if diags:
        raise DatasetError(path, diags)
    cause_arr = None
    if "cause" in pos:
        cause_arr = np.array(causes)
        for sid, g in groups.items():
            c, ev = g[-1]["cause"], g[-1]["event"]
            if math.isnan(c) or c != int(c) or c < 0 or (c > 0) != (ev == 1):
                diags.append((g[-1]["line"], f"subject {sid!r}: cause must be 0 when censored and >= 1 for a failure"))
        if diags:
            raise DatasetError(path, diags)
        cause_arr = cause_arr.astype(int)
    names = tuple(c[4:] for c in exp_cols)
    return Dataset(records, tuple(cov_cols), names, survival_mode, cause_arr)


def _build_record(sid, g, survival_mode, cov_cols, exp_cols, diags):
    n0 = len(diags)
    lines = [r["line"] for r in g]
    t = np.array([r["time"] for r in g])
    f = np.array([int(r["event"]) for r in g])
    x = np.array([r["x"] for r in g])
    z = np.array([r["z"] for r in g], dtype=float).reshape(len(g), len(cov_cols))
    e = np.array([r["e"] for r in g], dtype=float).reshape(len(g), len(exp_cols))

    for k in range(1, len(g)):
        if t[k] < t[k - 1]:
            diags.append((lines[k], f"subject {sid!r}: time {float(t[k])!r} is earlier than the previous row's {float(t[k - 1])!r}"))
    for k in range(len(g) - 1):
        if f[k] != 0:
            diags.append((lines[k], f"subject {sid!r}: failure code 1 before the subject's last row"))
    if not survival_mode and len(g) < 2:
        diags.append((lines[0], f"subject {sid!r}: needs an origin row and at least one later row"))
    if not survival_mode and t[0] != 0.0:
        diags.append((lines[0], f"subject {sid!r}: first row must be the origin time 0, got {float(t[0])!r}"))
    if survival_mode and not t[0] > 0:
        diags.append((lines[0], f"subject {sid!r}: time must be > 0"))
    present = ~np.isnan(x)
    if present.any() and not present.all():
        k = int(np.flatnonzero(~present)[0]) if present[0] else int(np.flatnonzero(present)[0])
        diags.append((lines[k], f"subject {sid!r}: process readings must be present on every row or on none"))
    if present.all():
        alive = len(g) - 1 if f[-1] == 1 else len(g)
        for k in range(alive):
            if not x[k] > 0:
                diags.append((lines[k], f"subject {sid!r}: reading {float(x[k])!r} must be > 0 before failure"))
    body = z if survival_mode else (z[:-1] if f[-1] == 1 else z)
    for k in np.flatnonzero(np.isnan(body).any(axis=1)):
        diags.append((lines[k], f"subject {sid!r}: covariate value missing"))
    if not survival_mode and f[-1] == 1 and cov_cols and not np.isnan(z[-1]).all():
        diags.append((lines[-1], f"subject {sid!r}: covariates must be empty on a final failure row"))
    if exp_cols:
        for k in np.flatnonzero((e < 0).any(axis=1)):
            diags.append((lines[k], f"subject {sid!r}: negative exposure"))
        for k in range(1, len(g)):
            if np.any(e[k] < e[k - 1]) and not np.any(e[k] < 0):
                diags.append((lines[k], f"subject {sid!r}: cumulative exposure decreases"))
        gap = np.abs(e.sum(axis=1) - t)
        for k in np.flatnonzero(gap > ACCOUNTING_TOL * np.maximum(1.0, np.abs(t))):
            diags.append((lines[k], (
                f"subject {sid!r}: accounting constraint violated, exposures sum to "
                f"{float(e[k].sum())!r} but time is {float(t[k])!r}"
            )))
    if len(diags) > n0:
        return None

    if survival_mode:
        t = np.concatenate([[0.0], t])
        f = np.concatenate([[0], f])
        zz = np.vstack([z, z])
        if f[-1] == 1:
            zz[-1] = np.nan
        z = zz
        x = np.concatenate([[math.nan], x])
        present = ~np.isnan(x)
        e = np.vstack([np.zeros((1, len(exp_cols))), e])
    readings = x if present.all() else None
    return SubjectRecord(t, f, z, readings, e if exp_cols else None, sid)


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def write_dataset(path_or_file, ids, times, events, covariates=None, covariate_names=(),
                  readings=None, causes=None, exposures=None, exposure_names=(), j=None):
    """Write rows in the dataset format; all columns are sequences of equal length."""
    n = len(ids)
    header = ["id"] + (["j"] if j is not None else []) + ["time", "event"]
    if readings is not None:
        header.append("x")
    if causes is not None:
        header.append("cause")
    header += list(covariate_names) + [f"exp_{e}" for e in exposure_names]
    cov = np.zeros((n, 0)) if covariates is None else np.asarray(covariates, dtype=float).reshape(n, -1)
    exp = np.zeros((n, 0)) if exposures is None else np.asarray(exposures, dtype=float).reshape(n, -1)

    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(n):
            row = [str(ids[i])] + ([str(int(j[i]))] if j is not None else [])
            row += [_fmt(times[i]), str(int(events[i]))]
            if readings is not None:
                row.append(_fmt(readings[i]))
            if causes is not None:
                row.append(str(int(causes[i])))
            row += [_fmt(v) for v in cov[i]] + [_fmt(v) for v in exp[i]]
            w.writerow(row)

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            emit(fh)


class ArtifactError(ValueError):
    """Unreadable, corrupt or incompatible model artifact."""


@dataclass
class ModelArtifact:
    spec: RegressionSpec
    params: np.ndarray
    covariance: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    diagnostics: list
    n_subjects: int
    n_events: int
    seed: int = 0
    tool_version: str = TOOL_VERSION

    @classmethod
    def from_fit(cls, result, seed=0):
        return cls(result.spec, np.asarray(result.params, dtype=float), np.asarray(result.covariance, dtype=float),
                   float(result.loglik), bool(result.converged), int(result.iterations),
                   list(result.diagnostics), int(result.n_subjects), int(result.n_events), int(seed))

    def to_fit(self):
        return FitResult(
            spec=self.spec, params=self.params.copy(), loglik=self.loglik, covariance=self.covariance.copy(),
            converged=self.converged, iterations=self.iterations, gradient=np.full(self.params.size, np.nan),
            diagnostics=list(self.diagnostics), n_subjects=self.n_subjects, n_events=self.n_events,
        )

    def to_dict(self):
        return {
            "format": "threshreg-model",
            "tool_version": self.tool_version,
            "seed": self.seed,
            "spec": self.spec.to_dict(),
            "param_names": self.spec.param_names(),
            "params": [float(v) for v in self.params],
            "covariance": [[float(v) for v in row] for row in self.covariance],
            "loglik": float(self.loglik),
            "converged": self.converged,
            "iterations": self.iterations,
            "diagnostics": list(self.diagnostics),
            "n_subjects": self.n_subjects,
            "n_events": self.n_events,
        }


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def save_model(artifact, path):
    if isinstance(artifact, FitResult):
        artifact = ModelArtifact.from_fit(artifact)
    with open(path, "w") as fh:
        fh.write(_dumps(artifact.to_dict()))


def load_model(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ArtifactError(f"{path}: cannot read model artifact ({exc})") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: corrupt model artifact (not valid JSON: {exc.msg} at line {exc.lineno})") from None
    if not isinstance(d, dict) or d.get("format") != "threshreg-model":
        raise ArtifactError(f"{path}: corrupt model artifact (missing format tag)")
    version = str(d.get("tool_version", ""))
    if version.split(".")[0] != TOOL_VERSION.split(".")[0]:
        raise ArtifactError(
            f"{path}: artifact written by version {version!r}; this is {TOOL_VERSION} (major versions differ)"
        )
    try:
        spec = RegressionSpec.from_dict(d["spec"])
        params = np.array(d["params"], dtype=float)
        cov = np.array(d["covariance"], dtype=float).reshape(params.size, params.size)
        art = ModelArtifact(
            spec, params, cov, float(d["loglik"]), bool(d["converged"]), int(d["iterations"]),
            list(d["diagnostics"]), int(d["n_subjects"]), int(d["n_events"]), int(d["seed"]), version,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"{path}: corrupt model artifact ({exc!r})") from None
    if params.size != spec.n_params:
        raise ArtifactError(f"{path}: corrupt model artifact ({params.size} params for a {spec.n_params}-parameter spec)")
    return art
