"""Trial data model: full-data records, design, and interim snapshots.

A subject's full data hold entry time, baseline covariates, arm, the
ascertainment lag T, the outcome, and a time-dependent covariate path.
The observed data at calendar time t keep only subjects enrolled by t
and mask the outcome of anyone whose lag exceeds their follow-up.
Covariate paths are step functions: the value at time u is the last
recorded value at a time <= u (a configurable default before the first
record, all-zeros unless stated).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, DesignError

__all__ = [
    "SubjectRecord",
    "TrialDesign",
    "ObservedSubject",
    "InterimSnapshot",
    "ModelSpec",
    "BasisSpec",
    "snapshot_at",
    "load_trial",
    "load_design",
    "export_snapshot_csv",
]

OUTCOME_KINDS = ("mean_difference", "log_relative_risk", "proportional_odds")


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Outcome model determining the estimating function and beta's meaning.

    ``mean_difference``: continuous outcome, beta = E(Y|A=1) - E(Y|A=0);
    ``log_relative_risk``: binary outcome, E(Y|A=a) = exp(alpha + beta*a);
    ``proportional_odds``: ordinal 1..levels, beta the cumulative log
    odds ratio with levels-1 cutpoints.
    """

    kind: str
    levels: int | None = None

    def __post_init__(self):
        if self.kind not in OUTCOME_KINDS:
            raise DesignError(f"unknown model kind: {self.kind!r}")
        if self.kind == "proportional_odds":
            if self.levels is None or self.levels < 3:
                raise DesignError("proportional_odds requires levels >= 3")
        elif self.levels is not None:
            raise DesignError(f"{self.kind} takes no 'levels'")

    @property
    def p(self) -> int:
        """Parameter dimension (nuisance cutpoints/intercept plus beta)."""
        return self.levels if self.kind == "proportional_odds" else 2


@dataclass(frozen=True, eq=False)
class BasisSpec:
    """Named basis transforms for the augmentation terms.

    ``f_terms`` are functions of the baseline vector X (the constant
    f_0 = 1 is implicit); ``h_terms`` are functions of (u, X, L(u)).
    Recognized names: ``"x"`` (all baseline components), ``"x<i>"``
    (single component, 0-based), ``"l"`` (all time-dependent
    components), ``"l<i>"``.
    """

    f_terms: tuple[str, ...] = ()
    h_terms: tuple[str, ...] = ()

    def __post_init__(self):
        for name in tuple(self.f_terms) + tuple(self.h_terms):
            if not (name in ("x", "l") or _single_index(name) is not None):
                raise DesignError(f"unknown basis term: {name!r}")
        if any(t == "l" or t.startswith("l") for t in self.f_terms):
            raise DesignError("baseline basis terms may reference X only")

    def f_width(self, p_x: int) -> int:
        return sum(p_x if t == "x" else 1 for t in self.f_terms)

    def h_width(self, p_x: int, q: int) -> int:
        out = 0
        for t in self.h_terms:
            if t == "x":
                out += p_x
            elif t == "l":
                out += q
            else:
                out += 1
        return out


def _single_index(name: str):
    if len(name) > 1 and name[0] in ("x", "l") and name[1:].isdigit():
        return name[0], int(name[1:])
    return None


@dataclass(frozen=True, eq=False)
class SubjectRecord:
    """One enrollee's full data.

    ``covariate_path`` is a pair (times, values) with strictly increasing
    times in [0, lag] and values of shape (len(times), q).
    """

    id: str
    entry_time: float
    baseline: np.ndarray
    arm: int
    lag: float
    outcome: float
    covariate_path: tuple[np.ndarray, np.ndarray]

    def __post_init__(self):
        if self.arm not in (0, 1):
            raise DataFormatError(f"subject {self.id}: arm must be 0 or 1")
        if not self.lag > 0:
            raise DataFormatError(f"subject {self.id}: lag must be positive")
        if self.entry_time < 0:
            raise DataFormatError(f"subject {self.id}: entry_time must be >= 0")
        times, values = self.covariate_path
        if len(times) != len(values):
            raise DataFormatError(f"subject {self.id}: path times/values mismatch")
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise DataFormatError(f"subject {self.id}: path times must increase")
        if len(times) and (times[0] < 0 or times[-1] > self.lag + 1e-12):
            raise DataFormatError(
                f"subject {self.id}: path times must lie in [0, lag]"
            )


@dataclass(frozen=True, eq=False)
class TrialDesign:
    """Design parameters for a monitored two-arm trial.

    ``analysis_times`` lists all planned analyses in calendar time,
    interim analyses first and the final analysis last; the first must
    be at least max_followup (so fully followed subjects exist) and the
    last at least enrollment_window + max_followup (so all outcomes are
    ascertained).
    """

    n_max: int
    max_followup: float  # per-subject follow-up horizon (days/weeks)
    enrollment_window: float
    alpha: float
    sidedness: str
    spending: str
    analysis_times: tuple[float, ...]
    model: ModelSpec
    basis: BasisSpec = field(default_factory=BasisSpec)
    direction: int = 1  # one-sided rejection direction: +1 upper, -1 lower

    def __post_init__(self):
        if self.n_max <= 0:
            raise DesignError("n_max must be positive")
        if self.max_followup <= 0 or self.enrollment_window < 0:
            raise DesignError("invalid follow-up or enrollment window")
        if not 0 < self.alpha < 0.5:
            raise DesignError("alpha must be in (0, 0.5)")
        if self.sidedness not in ("one", "two"):
            raise DesignError("sidedness must be 'one' or 'two'")
        if self.spending not in ("obrien_fleming", "pocock"):
            raise DesignError(f"unknown spending kind: {self.spending!r}")
        if self.direction not in (1, -1):
            raise DesignError("direction must be +1 or -1")
        times = self.analysis_times
        if len(times) < 1 or any(b <= a for a, b in zip(times, times[1:])):
            raise DesignError("analysis_times must be strictly increasing")
        if times[0] < self.max_followup:
            raise DesignError(
                "first analysis must be at least the maximum follow-up "
                f"period after trial start ({self.max_followup})"
            )
        if times[-1] < self.enrollment_window + self.max_followup:
            raise DesignError(
                "final analysis must allow every outcome to be ascertained "
                f"(>= {self.enrollment_window + self.max_followup})"
            )

    @property
    def t_end(self) -> float:
        return self.analysis_times[-1]


@dataclass(frozen=True, eq=False)
class ObservedSubject:
    """One subject as visible at an interim analysis.

    ``outcome`` is None unless the lag has elapsed (``ascertained``);
    the covariate path is truncated to times <= followup.
    """

    id: str
    entry_time: float
    baseline: np.ndarray
    arm: int
    censoring_time: float  # C(t) = t - entry
    followup: float  # U(t) = min(lag, C(t))
    ascertained: bool  # lag <= C(t)
    outcome: float | None
    covariate_path: tuple[np.ndarray, np.ndarray]


class InterimSnapshot:
    """The observed data at calendar time t.

    Contains every subject enrolled by t (entry <= t, ties included),
    with per-subject censoring time, follow-up, ascertainment status and
    masked outcomes.  Immutable after construction; numeric views used
    by the estimation routines are built lazily and cached.
    """

    def __init__(self, t: float, subjects: tuple[ObservedSubject, ...],
                 max_followup: float):
        self.t = float(t)
        self.subjects = tuple(subjects)
        self.max_followup = float(max_followup)
        self.n_t = len(self.subjects)
        self.n_A_t = sum(1 for s in self.subjects
                         if s.censoring_time >= max_followup)
        self._arrays = None

    def arrays(self) -> "SnapshotArrays":
        if self._arrays is None:
            self._arrays = SnapshotArrays.from_snapshot(self)
        return self._arrays

    def __repr__(self):
        return (f"InterimSnapshot(t={self.t}, n={self.n_t}, "
                f"n_A={self.n_A_t})")


@dataclass(eq=False)
class SnapshotArrays:
    """Column-oriented view of a snapshot for vectorized estimation."""

    t: float
    max_followup: float
    ids: tuple[str, ...]
    entry: np.ndarray
    arm: np.ndarray  # int8
    X: np.ndarray  # (n, p_x)
    U: np.ndarray
    delta: np.ndarray  # bool
    Y: np.ndarray  # float, NaN where masked
    paths: tuple[tuple[np.ndarray, np.ndarray], ...]
    q: int

    @classmethod
    def from_snapshot(cls, snap: InterimSnapshot) -> "SnapshotArrays":
        subs = snap.subjects
        n = len(subs)
        p_x = len(subs[0].baseline) if n else 0
        q = subs[0].covariate_path[1].shape[1] if n and len(
            subs[0].covariate_path[0]) else _path_width(subs)
        X = np.zeros((n, p_x))
        entry = np.zeros(n)
        arm = np.zeros(n, dtype=np.int8)
        U = np.zeros(n)
        delta = np.zeros(n, dtype=bool)
        Y = np.full(n, np.nan)
        for i, s in enumerate(subs):
            entry[i] = s.entry_time
            arm[i] = s.arm
            X[i] = s.baseline
            U[i] = s.followup
            delta[i] = s.ascertained
            if s.outcome is not None:
                Y[i] = s.outcome
        return cls(
            t=snap.t, max_followup=snap.max_followup,
            ids=tuple(s.id for s in subs), entry=entry, arm=arm, X=X,
            U=U, delta=delta, Y=Y,
            paths=tuple(s.covariate_path for s in subs), q=q,
        )

    @property
    def n(self) -> int:
        return len(self.entry)

    def A_float(self) -> np.ndarray:
        return self.arm.astype(float)

    def path_values(self, i: int, u: np.ndarray) -> np.ndarray:
        """Step-function covariate values L_i(u) for a grid of times."""
        times, values = self.paths[i]
        out = np.zeros((len(u), self.q))
        if len(times) == 0:
            return out
        idx = np.searchsorted(times, u, side="right") - 1
        ok = idx >= 0
        out[ok] = values[idx[ok]]
        return out


def _path_width(subs) -> int:
    for s in subs:
        if len(s.covariate_path[0]):
            return s.covariate_path[1].shape[1]
    return 0


def snapshot_at(records, t: float, max_followup: float) -> InterimSnapshot:
    """Construct the observed data at calendar time t from full data.

    Includes exactly the subjects with entry <= t; per subject computes
    C(t) = t - entry, U(t) = min(lag, C(t)), the ascertainment indicator
    lag <= C(t), masks the outcome when not ascertained, and truncates
    the covariate path to times <= U(t).
    """
    if not t > 0:
        raise DesignError("snapshot time must be positive")
    out = []
    for r in records:
        if r.entry_time > t:
            continue
        c = t - r.entry_time
        ascertained = r.lag <= c
        u = r.lag if ascertained else c
        times, values = r.covariate_path
        keep = times <= u + 1e-12
        out.append(ObservedSubject(
            id=r.id,
            entry_time=r.entry_time,
            baseline=r.baseline,
            arm=r.arm,
            censoring_time=c,
            followup=u,
            ascertained=ascertained,
            outcome=r.outcome if ascertained else None,
            covariate_path=(times[keep], values[keep]),
        ))
    return InterimSnapshot(t, tuple(out), max_followup)


# ---------------------------------------------------------------------------
# file ingestion
# ---------------------------------------------------------------------------

def load_design(design_file) -> TrialDesign:
    """Parse a design JSON file (see README for the schema)."""
    with open(design_file) as fh:
        raw = json.load(fh)
    required = {"n_max", "T_F", "E_max", "alpha", "sidedness", "spending",
                "analysis_times", "model", "basis"}
    missing = required - raw.keys()
    if missing:
        raise DataFormatError(f"design file missing keys: {sorted(missing)}")
    model = ModelSpec(raw["model"]["kind"], raw["model"].get("levels"))
    basis = BasisSpec(tuple(raw["basis"].get("f", ())),
                      tuple(raw["basis"].get("h", ())))
    direction = {"upper": 1, "lower": -1}.get(raw.get("direction", "upper"))
    if direction is None:
        raise DataFormatError("direction must be 'upper' or 'lower'")
    return TrialDesign(
        n_max=int(raw["n_max"]),
        max_followup=float(raw["T_F"]),
        enrollment_window=float(raw["E_max"]),
        alpha=float(raw["alpha"]),
        sidedness=str(raw["sidedness"]),
        spending=str(raw["spending"]),
        analysis_times=tuple(float(v) for v in raw["analysis_times"]),
        model=model,
        basis=basis,
        direction=direction,
    )


def _parse_float(text: str, what: str, row: int) -> float:
    try:
        val = float(text)
    except ValueError:
        raise DataFormatError(f"row {row}: {what} is not numeric: {text!r}")
    if not math.isfinite(val):
        raise DataFormatError(f"row {row}: {what} is not finite")
    return val


def load_trial(subject_file, longitudinal_file, design_file):
    """Load and validate subject, longitudinal, and design files.

    Returns ``(records, design)``.  Subject CSV header is
    ``id,entry_time,arm,T,Y,x1,...,xp``; longitudinal CSV header is
    ``id,u,l1,...,lq`` with rows joined to subjects by id.  Rows with
    u beyond the subject's lag are rejected, as are duplicate ids,
    lags exceeding the follow-up horizon, and outcomes outside the
    model's support.
    """
    design = load_design(design_file)
    with open(subject_file, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:5] != ["id", "entry_time", "arm", "T", "Y"]:
            raise DataFormatError(
                "subject file must start with columns id,entry_time,arm,T,Y"
            )
        x_names = header[5:]
        if any(not n.startswith("x") for n in x_names):
            raise DataFormatError("baseline columns must be named x1..xp")
        rows = []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5 + len(x_names):
                raise DataFormatError(f"row {lineno}: wrong field count")
            sid = row[0]
            if sid in seen:
                raise DataFormatError(f"row {lineno}: duplicate id {sid!r}")
            seen.add(sid)
            entry = _parse_float(row[1], "entry_time", lineno)
            arm = row[2]
            if arm not in ("0", "1"):
                raise DataFormatError(f"row {lineno}: arm must be 0 or 1")
            lag = _parse_float(row[3], "T", lineno)
            if lag > design.max_followup + 1e-9:
                raise DataFormatError(
                    f"row {lineno}: lag exceeds T_F ({lag} > {design.max_followup})"
                )
            if row[4] == "":
                raise DataFormatError(
                    f"row {lineno}: outcome Y is required in full data"
                )
            y = _parse_float(row[4], "Y", lineno)
            _check_outcome(design.model, y, lineno)
            x = np.array([_parse_float(v, "x", lineno) for v in row[5:]])
            rows.append((sid, entry, int(arm), lag, y, x))

    paths = {sid: ([], []) for sid, *_ in rows}
    lag_of = {sid: lag for sid, _, _, lag, _, _ in rows}
    if longitudinal_file is not None:
        with open(longitudinal_file, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[:2] != ["id", "u"]:
                raise DataFormatError(
                    "longitudinal file must start with columns id,u"
                )
            q = len(header) - 2
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 2 + q:
                    raise DataFormatError(f"row {lineno}: wrong field count")
                sid = row[0]
                if sid not in paths:
                    raise DataFormatError(
                        f"row {lineno}: unknown subject id {sid!r}"
                    )
                u = _parse_float(row[1], "u", lineno)
                if u < 0 or u > lag_of[sid] + 1e-9:
                    raise DataFormatError(
                        f"row {lineno}: time u={u} outside [0, T] for {sid!r}"
                    )
                vals = [_parse_float(v, "l", lineno) for v in row[2:]]
                paths[sid][0].append(u)
                paths[sid][1].append(vals)

    records = []
    for sid, entry, arm, lag, y, x in rows:
        times, vals = paths[sid]
        order = np.argsort(times) if times else []
        ptimes = np.array([times[i] for i in order], dtype=float)
        if len(ptimes) > 1 and np.any(np.diff(ptimes) <= 0):
            raise DataFormatError(f"subject {sid!r}: duplicate path times")
        pvals = (np.array([vals[i] for i in order], dtype=float)
                 if times else np.zeros((0, 0)))
        records.append(SubjectRecord(
            id=sid, entry_time=entry, baseline=x, arm=arm, lag=lag,
            outcome=y, covariate_path=(ptimes, pvals),
        ))
    return records, design


def _check_outcome(model: ModelSpec, y: float, lineno: int):
    if model.kind == "proportional_odds":
        if not (float(y).is_integer() and 1 <= y <= model.levels):
            raise DataFormatError(
                f"row {lineno}: ordinal outcome must be an integer in "
                f"1..{model.levels}, got {y}"
            )
    elif model.kind == "log_relative_risk":
        if y not in (0.0, 1.0):
            raise DataFormatError(
                f"row {lineno}: binary outcome must be 0 or 1, got {y}"
            )


def export_snapshot_csv(snapshot: InterimSnapshot, path) -> None:
    """Write a snapshot using the subject schema plus C,U,delta columns.

    The outcome column is blank for non-ascertained subjects.
    """
    subs = snapshot.subjects
    p_x = len(subs[0].baseline) if subs else 0
    header = (["id", "entry_time", "arm", "T", "Y"]
              + [f"x{i + 1}" for i in range(p_x)] + ["C", "U", "delta"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s in subs:
            lag = s.followup if s.ascertained else ""
            y = "" if s.outcome is None else repr(s.outcome)
            writer.writerow(
                [s.id, repr(s.entry_time), s.arm, lag, y]
                + [repr(v) for v in s.baseline]
                + [repr(s.censoring_time), repr(s.followup),
                   int(s.ascertained)]
            )
