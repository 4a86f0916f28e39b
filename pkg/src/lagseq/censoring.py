"""Kaplan-Meier estimation of the censoring distribution.

At an interim analysis the censoring variable is the elapsed follow-up
C(t) = t - entry; a subject whose outcome is not yet ascertained
(delta = 0) is a censoring *event* at U = C(t), while ascertainment
(delta = 1) censors the censoring time.  The product-limit estimator is
fit on {U_i, 1 - delta_i}, overall or per arm.

Survivor evaluation follows the "C >= u" convention: the estimate at u
is the left limit of the product-limit curve, so jumps at exactly u are
excluded.  This keeps every ascertained subject's weight positive.

Hazard increments are the counting-process form d/n (events over
at-risk), which makes the per-jump martingale identity
``sum_i dM_i(u_j) = 0`` hold exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import InterimSnapshot
from .errors import DesignError, EstimationError

__all__ = [
    "CensoringCurve",
    "MartingaleJumps",
    "fit_censoring_km",
    "eval_geq",
    "martingale_jumps",
    "dump_curve_csv",
]


@dataclass(frozen=True, eq=False)
class CensoringCurve:
    """Product-limit survivor of the censoring time for one arm (or pooled).

    ``survivor[j]`` is the curve's value just after ``jump_times[j]``;
    ``hazard_increments[j] = events[j] / at_risk[j]``.
    """

    arm: int | str  # 0, 1, or "pooled"
    t: float  # analysis time the curve was fit at
    n_fit: int  # subjects used in the fit
    jump_times: np.ndarray
    survivor: np.ndarray
    hazard_increments: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray

    def eval_geq(self, u) -> np.ndarray | float:
        """Estimate of pr(C >= u): left limit, jumps at exactly u excluded."""
        u_arr = np.asarray(u, dtype=float)
        if len(self.jump_times) == 0:
            vals = np.ones(u_arr.shape)
        else:
            idx = np.searchsorted(self.jump_times, u_arr, side="left")
            vals = np.where(
                idx == 0, 1.0, self.survivor[np.maximum(idx - 1, 0)]
            )
        if np.ndim(u) == 0:
            return float(vals)
        return vals


@dataclass(frozen=True, eq=False)
class MartingaleJumps:
    """Per-subject censoring-martingale increments at the curve's jumps.

    ``increments[i, j] = dN_i(u_j) - dLambda(u_j) * I(U_i >= u_j)``;
    rows are the subjects the curve was fit on.
    """

    arm: int | str
    jump_times: np.ndarray
    subject_ids: tuple[str, ...]
    increments: np.ndarray  # (n_subjects, n_jumps)


def _arm_mask(arrays, arm):
    if arm == "pooled":
        return np.ones(arrays.n, dtype=bool)
    if arm in (0, 1):
        return arrays.arm == arm
    raise DesignError(f"arm must be 0, 1, or 'pooled', got {arm!r}")


def km_from_followup(U: np.ndarray, delta: np.ndarray):
    """Product-limit pieces from follow-up times and ascertainment flags.

    Returns (jump_times, survivor, hazard_increments, at_risk, events).
    Censoring events (delta = 0) at a time u are counted against a risk
    set that includes ascertainments tied at the same u.
    """
    U = np.asarray(U, dtype=float)
    delta = np.asarray(delta, dtype=bool)
    event_times = np.unique(U[~delta])
    if len(event_times) == 0:
        empty = np.zeros(0)
        return empty, empty.copy(), empty.copy(), empty.copy(), empty.copy()
    U_sorted = np.sort(U)
    n_total = len(U)
    # at risk at u: subjects with U >= u
    at_risk = n_total - np.searchsorted(U_sorted, event_times, side="left")
    cens_sorted = np.sort(U[~delta])
    events = (np.searchsorted(cens_sorted, event_times, side="right")
              - np.searchsorted(cens_sorted, event_times, side="left"))
    haz = events / at_risk
    survivor = np.cumprod(1.0 - haz)
    return (event_times, survivor, haz.astype(float),
            at_risk.astype(float), events.astype(float))


def fit_censoring_km(snapshot: InterimSnapshot, arm) -> CensoringCurve:
    """Fit the censoring-time Kaplan-Meier for one arm (or pooled)."""
    arrays = snapshot.arrays()
    mask = _arm_mask(arrays, arm)
    if not mask.any():
        raise EstimationError(f"no subjects in arm {arm!r} at t={snapshot.t}")
    jumps, surv, haz, at_risk, events = km_from_followup(
        arrays.U[mask], arrays.delta[mask]
    )
    return CensoringCurve(
        arm=arm, t=snapshot.t, n_fit=int(mask.sum()),
        jump_times=jumps, survivor=surv, hazard_increments=haz,
        at_risk=at_risk, events=events,
    )


def eval_geq(curve: CensoringCurve, u):
    """Estimate of pr(C >= u) from a fitted curve (left-limit convention)."""
    if np.ndim(u) == 0 and u < 0:
        raise DesignError("u must be nonnegative")
    return curve.eval_geq(u)


def martingale_jumps(curve: CensoringCurve, snapshot: InterimSnapshot,
                     arm) -> MartingaleJumps:
    """Per-subject martingale increments at the curve's jump times.

    Increments vanish beyond a subject's follow-up; across the fitted
    subjects they sum to zero at every jump.
    """
    if arm != curve.arm or snapshot.t != curve.t:
        raise DesignError("curve does not match the requested snapshot/arm")
    arrays = snapshot.arrays()
    mask = _arm_mask(arrays, arm)
    if int(mask.sum()) != curve.n_fit:
        raise DesignError("curve was fit on a different subject subset")
    U = arrays.U[mask]
    delta = arrays.delta[mask]
    ids = tuple(np.array(arrays.ids)[mask])
    jumps = curve.jump_times
    at_risk = U[:, None] >= jumps[None, :]
    inc = -curve.hazard_increments[None, :] * at_risk
    is_event = (~delta)[:, None] & (U[:, None] == jumps[None, :])
    inc = inc + is_event.astype(float)
    return MartingaleJumps(arm=arm, jump_times=jumps, subject_ids=ids,
                           increments=inc)


def dump_curve_csv(curve: CensoringCurve, path) -> None:
    """Write the curve as CSV with columns u,K,dLambda,at_risk,events."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["u", "K", "dLambda", "at_risk", "events"])
        for j in range(len(curve.jump_times)):
            writer.writerow([
                repr(float(curve.jump_times[j])),
                repr(float(curve.survivor[j])),
                repr(float(curve.hazard_increments[j])),
                int(curve.at_risk[j]),
                int(curve.events[j]),
            ])
