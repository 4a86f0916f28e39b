"""Shared test fixtures and independent oracle implementations.

Oracles here are deliberately written in plain loops, independent of
the library's vectorized code paths.
"""

from __future__ import annotations

import numpy as np

from lagseq.data import InterimSnapshot, ObservedSubject, SubjectRecord


def make_subject(i, entry, arm, lag, outcome, x=(0.0,), path=None):
    if path is None:
        times = np.zeros(0)
        values = np.zeros((0, 0))
    else:
        times = np.array([p[0] for p in path], dtype=float)
        values = np.array([p[1] for p in path], dtype=float)
    return SubjectRecord(
        id=f"s{i}", entry_time=float(entry), baseline=np.array(x, dtype=float),
        arm=int(arm), lag=float(lag), outcome=float(outcome),
        covariate_path=(times, values),
    )


def snapshot_from_followup(pairs, t=100.0, max_followup=90.0, arms=None,
                           outcomes=None, xs=None):
    """Snapshot with prescribed (U, delta) pairs for censoring tests."""
    subs = []
    for i, (u, delta) in enumerate(pairs):
        arm = arms[i] if arms is not None else 0
        y = outcomes[i] if outcomes is not None else 1.0
        x = xs[i] if xs is not None else (0.0,)
        subs.append(ObservedSubject(
            id=f"s{i}", entry_time=t - (u if not delta else u + 1.0),
            baseline=np.array(x, dtype=float), arm=arm,
            censoring_time=(u if not delta else u + 1.0),
            followup=float(u), ascertained=bool(delta),
            outcome=float(y) if delta else None,
            covariate_path=(np.zeros(0), np.zeros((0, 0))),
        ))
    return InterimSnapshot(t, tuple(subs), max_followup)


def km_oracle(pairs):
    """Brute-force product-limit estimator with explicit risk sets.

    ``pairs`` are (U, delta) with delta = 1 meaning the censoring time
    is itself censored (outcome ascertained).  Returns (times, survivor)
    at the censoring-event times.
    """
    events = sorted({u for u, d in pairs if d == 0})
    surv = []
    k = 1.0
    for ev in events:
        at_risk = sum(1 for u, _ in pairs if u >= ev)
        died = sum(1 for u, d in pairs if u == ev and d == 0)
        k *= (at_risk - died) / at_risk
        surv.append(k)
    return events, surv


def km_eval_oracle(pairs, x):
    """pr(C >= x) from the brute-force curve (left limit)."""
    events, surv = km_oracle(pairs)
    val = 1.0
    for ev, s in zip(events, surv):
        if ev < x:
            val = s
    return val


def outcome_km_event_prob(U, delta_event, horizon):
    """Classical product-limit estimate of pr(event by horizon).

    ``delta_event`` marks observed events at U; everything else is
    censored at U.  Independent oracle for the binary-outcome identity.
    """
    events = sorted({u for u, d in zip(U, delta_event) if d and u <= horizon})
    surv = 1.0
    for ev in events:
        at_risk = sum(1 for u in U if u >= ev)
        died = sum(1 for u, d in zip(U, delta_event) if d and u == ev)
        surv *= (at_risk - died) / at_risk
    return 1.0 - surv
