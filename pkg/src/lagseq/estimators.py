"""Treatment-effect estimators at an interim analysis.

Four estimators share one pipeline:

* ``tf_only``  -- the full-data estimating equation with unit weights on
  the subset already followed for the maximum follow-up period.
* ``ipwcc``    -- step 1: the same estimating function, weighted by the
  inverse arm-specific censoring survivor 1/K(U, A) for ascertained
  subjects.
* ``aipw1``/``aipw2`` -- step 2: a one-step update of the step-1 result.
  Per subject a "dependent variable" combines the weighted influence
  value with an integral of the censoring-martingale increments against
  the at-risk average of weighted influence values; it is regressed by
  ordinary least squares on baseline covariates (A - pi)f_m(X) and, for
  aipw2, on arm-specific martingale integrals of centered time-dependent
  basis functions.  The fitted values shift the point estimate and their
  residuals give the standard error
  ``SE = sqrt(sum_i (Yhat_i - Pred_i)^2) / n``.

All quantities are computed from the snapshot's column arrays; subject
order never affects results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .censoring import fit_censoring_km
from .data import BasisSpec, InterimSnapshot, ModelSpec, SnapshotArrays
from .errors import DesignError, EstimationError
from .models import (
    InfluenceEvaluator,
    ParamVector,
    compute_G_arrays,
    evaluate_M,
    solve_weighted_arrays,
)

__all__ = [
    "AnalysisResult",
    "estimate_tf_only",
    "estimate_ipwcc",
    "estimate_aipw",
    "step2_dependent_variable",
    "step2_augmentation_covariates",
    "analyze_snapshot",
]

ESTIMATOR_KINDS = ("tf_only", "ipwcc", "aipw1", "aipw2")
_LSTSQ_RCOND = 1e-10


@dataclass(frozen=True, eq=False)
class AnalysisResult:
    """One estimator's answer at one analysis time."""

    estimator_kind: str
    t: float
    beta_hat: float
    se: float
    wald: float
    n_t: int
    n_A_t: int
    n_ess: float
    p_info: float
    theta_step1: ParamVector
    diagnostics: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "estimator": self.estimator_kind,
            "t": self.t,
            "beta": self.beta_hat,
            "se": self.se,
            "wald": self.wald,
            "n": self.n_t,
            "nA": self.n_A_t,
            "n_ess": self.n_ess,
            "p_info": self.p_info,
        }


# ---------------------------------------------------------------------------
# step 1: inverse-probability-weighted complete-case fit
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class _Step1:
    arrays: SnapshotArrays
    curves: dict
    weights: np.ndarray  # delta / K(U, arm)
    theta: ParamVector
    evaluator: InfluenceEvaluator
    m: np.ndarray  # influence values, zero where the outcome is masked
    pi_hat: float
    solver_info: dict = field(default_factory=dict)


def ipcw_weights(arrays: SnapshotArrays, curves: dict) -> np.ndarray:
    """delta_i / K(U_i, A_i) using the left-limit survivor convention."""
    w = np.zeros(arrays.n)
    for a in (0, 1):
        mask = (arrays.arm == a) & arrays.delta
        if mask.any():
            k = curves[a].eval_geq(arrays.U[mask])
            if np.any(k <= 0):
                raise EstimationError(
                    "zero censoring-survivor weight for an ascertained subject"
                )
            w[mask] = 1.0 / k
    return w


def _fit_step1(snapshot: InterimSnapshot, model: ModelSpec) -> _Step1:
    arrays = snapshot.arrays()
    curves = {a: fit_censoring_km(snapshot, a) for a in (0, 1)}
    w = ipcw_weights(arrays, curves)
    theta, info = solve_weighted_arrays(model, arrays.Y, arrays.A_float(), w,
                                        return_info=True)
    G = compute_G_arrays(model, arrays.Y, arrays.A_float(), w, theta)
    evaluator = InfluenceEvaluator(spec=model, theta=theta, G_row=G)
    m = np.zeros(arrays.n)
    obs = arrays.delta
    m[obs] = evaluate_M(model, theta, arrays.Y[obs],
                        arrays.A_float()[obs]) @ G
    pi_hat = float(arrays.arm.mean())
    return _Step1(arrays=arrays, curves=curves, weights=w, theta=theta,
                  evaluator=evaluator, m=m, pi_hat=pi_hat,
                  solver_info=info)


# ---------------------------------------------------------------------------
# step 2 building blocks
# ---------------------------------------------------------------------------

def _arm_pieces(step1: _Step1, a: int):
    """Sorted-lookup helpers for one arm's martingale integrals."""
    arrays = step1.arrays
    idx = np.flatnonzero(arrays.arm == a)
    U = arrays.U[idx]
    delta = arrays.delta[idx]
    curve = step1.curves[a]
    jumps = curve.jump_times
    dlam = curve.hazard_increments
    at_risk = curve.at_risk
    # last jump index <= U_i (exclusive end), own-event jump position
    upto = np.searchsorted(jumps, U, side="right")
    own = np.searchsorted(jumps, U, side="left")
    return idx, U, delta, jumps, dlam, at_risk, upto, own


def _at_risk_average(U: np.ndarray, values: np.ndarray, jumps: np.ndarray,
                     at_risk: np.ndarray) -> np.ndarray:
    """Average of ``values`` over subjects with U >= u_j, per jump."""
    order = np.argsort(U, kind="stable")
    vs = values[order]
    prefix = np.concatenate([[0.0], np.cumsum(vs)])
    below = np.searchsorted(U[order], jumps, side="left")
    suffix = prefix[-1] - prefix[below]
    return np.where(at_risk > 0, suffix / np.maximum(at_risk, 1.0), 0.0)


def step2_dependent_variable(snapshot: InterimSnapshot, curves: dict,
                             evaluator: InfluenceEvaluator) -> np.ndarray:
    """Per-subject dependent variable for the augmentation regression.

    ``Yhat_i = delta_i m_i / K(U_i, A_i) + sum over own-arm jumps u_j <=
    U_i of dM_i(u_j) * R(u_j)``, with R the at-risk average of the
    weighted influence values in the subject's arm.
    """
    arrays = snapshot.arrays()
    w = ipcw_weights(arrays, curves)
    m = np.zeros(arrays.n)
    obs = arrays.delta
    m[obs] = evaluator.values(arrays.Y[obs], arrays.A_float()[obs])
    step1 = _Step1(arrays=arrays, curves=curves, weights=w,
                   theta=evaluator.theta, evaluator=evaluator, m=m,
                   pi_hat=float(arrays.arm.mean()))
    return _dependent_variable(step1)


def _dependent_variable(step1: _Step1) -> np.ndarray:
    arrays = step1.arrays
    out = step1.weights * step1.m  # delta * m / K(U, A)
    for a in (0, 1):
        idx, U, delta, jumps, dlam, at_risk, upto, own = _arm_pieces(step1, a)
        if len(jumps) == 0:
            continue
        wm = (step1.weights * step1.m)[idx]
        R = _at_risk_average(U, wm, jumps, at_risk)
        cum = np.concatenate([[0.0], np.cumsum(dlam * R)])
        integral = -cum[upto]
        cens = ~delta
        integral[cens] += R[own[cens]]
        out[idx] += integral
    return out


def step2_augmentation_covariates(snapshot: InterimSnapshot, curves: dict,
                                  basis: BasisSpec,
                                  pi_hat: float | None = None) -> np.ndarray:
    """Design matrix of the augmentation regression, width M + 1 + 2L.

    Columns: the baseline block ``(A_i - pi) f_m(X_i)`` for m = 0..M
    (f_0 = 1), then for each arm the martingale integrals of the
    centered time-dependent basis functions, zero off-arm.
    """
    arrays = snapshot.arrays()
    if pi_hat is None:
        pi_hat = float(arrays.arm.mean())
    F = _f_matrix(basis, arrays.X)  # (n, M + 1) including the constant
    centered_arm = arrays.A_float() - pi_hat
    blocks = [centered_arm[:, None] * F]
    L = basis.h_width(arrays.X.shape[1], arrays.q)
    for a in (0, 1):
        block = np.zeros((arrays.n, L))
        idx, U, delta, jumps, dlam, at_risk, upto, own = _arm_pieces_curves(
            arrays, curves, a
        )
        if len(jumps) > 0 and L > 0:
            H = _h_matrices(basis, arrays, idx, jumps)  # (n_a, J, L)
            risk = U[:, None] >= jumps[None, :]
            counts = risk.sum(axis=0).astype(float)
            mu = np.einsum("ij,ijl->jl", risk.astype(float), H)
            mu /= np.maximum(counts, 1.0)[:, None]
            Hc = H - mu[None, :, :]
            cum = np.cumsum(dlam[None, :, None] * Hc, axis=1)
            cum = np.concatenate([np.zeros((len(idx), 1, L)), cum], axis=1)
            vals = -np.take_along_axis(
                cum, upto[:, None, None].repeat(L, axis=2), axis=1
            )[:, 0, :]
            cens = ~delta
            vals[cens] += Hc[cens, own[cens], :]
            block[idx] = vals
        blocks.append(block)
    return np.concatenate(blocks, axis=1)


def _arm_pieces_curves(arrays, curves, a):
    idx = np.flatnonzero(arrays.arm == a)
    U = arrays.U[idx]
    delta = arrays.delta[idx]
    curve = curves[a]
    jumps = curve.jump_times
    upto = np.searchsorted(jumps, U, side="right")
    own = np.searchsorted(jumps, U, side="left")
    return idx, U, delta, jumps, curve.hazard_increments, curve.at_risk, upto, own


def _f_matrix(basis: BasisSpec, X: np.ndarray) -> np.ndarray:
    cols = [np.ones(X.shape[0])]
    for term in basis.f_terms:
        if term == "x":
            cols.extend(X.T)
        else:
            cols.append(X[:, int(term[1:])])
    return np.column_stack(cols)


def _h_matrices(basis: BasisSpec, arrays: SnapshotArrays, idx: np.ndarray,
                jumps: np.ndarray) -> np.ndarray:
    """Basis values h_l(u_j, X_i, L_i(u_j)) as an (n_a, J, L) array."""
    n_a, J = len(idx), len(jumps)
    lmat = None
    if any(t == "l" or t.startswith("l") for t in basis.h_terms):
        lmat = np.zeros((n_a, J, arrays.q))
        for row, i in enumerate(idx):
            lmat[row] = arrays.path_values(int(i), jumps)
    cols = []
    for term in basis.h_terms:
        if term == "x":
            for comp in range(arrays.X.shape[1]):
                cols.append(np.broadcast_to(
                    arrays.X[idx, comp][:, None], (n_a, J)))
        elif term == "l":
            for comp in range(arrays.q):
                cols.append(lmat[:, :, comp])
        elif term[0] == "x":
            cols.append(np.broadcast_to(
                arrays.X[idx, int(term[1:])][:, None], (n_a, J)))
        else:
            cols.append(lmat[:, :, int(term[1:])])
    if not cols:
        return np.zeros((n_a, J, 0))
    return np.stack(cols, axis=2)


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def estimate_tf_only(snapshot: InterimSnapshot, model: ModelSpec,
                     n_max: int) -> AnalysisResult:
    """Full-data analysis restricted to fully followed subjects.

    Uses unit weights on the subset with elapsed follow-up >= the
    maximum follow-up period; for these subjects the outcome is always
    ascertained.  The information fraction is n_A / n_max.
    """
    arrays = snapshot.arrays()
    full = (snapshot.t - arrays.entry) >= arrays.max_followup
    n_A = int(full.sum())
    model_p = model.p
    if n_A < model_p + 2:
        raise EstimationError(
            f"only {n_A} fully followed subjects at t={snapshot.t}"
        )
    w = full.astype(float)
    theta, info = solve_weighted_arrays(model, arrays.Y, arrays.A_float(), w,
                                        return_info=True)
    G = compute_G_arrays(model, arrays.Y, arrays.A_float(), w, theta)
    m = evaluate_M(model, theta, arrays.Y[full], arrays.A_float()[full]) @ G
    se = float(np.sqrt(np.sum(m ** 2)) / n_A)
    beta = theta.beta
    return AnalysisResult(
        estimator_kind="tf_only", t=snapshot.t, beta_hat=beta, se=se,
        wald=beta / se, n_t=arrays.n, n_A_t=n_A, n_ess=float(n_A),
        p_info=n_A / n_max, theta_step1=theta,
        diagnostics={"var_full": float(np.mean(m ** 2)),
                     "iterations": info["iterations"]},
    )


def estimate_ipwcc(snapshot: InterimSnapshot, model: ModelSpec,
                   n_max: int) -> AnalysisResult:
    """Step-1 inverse-probability-weighted complete-case estimator."""
    step1 = _fit_step1(snapshot, model)
    return _ipw_result(snapshot, step1, n_max)


def _ipw_result(snapshot, step1, n_max, yhat=None) -> AnalysisResult:
    from .information import information_fraction, var_full_ipw_arrays

    arrays = step1.arrays
    if yhat is None:
        yhat = _dependent_variable(step1)
    n = arrays.n
    se = float(np.sqrt(np.sum(yhat ** 2)) / n)
    var_full = var_full_ipw_arrays(step1.weights, step1.m, n)
    n_ess, p_info, warn = information_fraction(var_full, se, n_max)
    beta = step1.theta.beta
    diags = {"var_full": var_full,
             "iterations": step1.solver_info.get("iterations")}
    if warn:
        diags["p_info_raw"] = warn
    return AnalysisResult(
        estimator_kind="ipwcc", t=snapshot.t, beta_hat=beta, se=se,
        wald=beta / se, n_t=n, n_A_t=snapshot.n_A_t, n_ess=n_ess,
        p_info=p_info, theta_step1=step1.theta, diagnostics=diags,
    )


def estimate_aipw(snapshot: InterimSnapshot, model: ModelSpec,
                  basis: BasisSpec, variant: str, n_max: int) -> AnalysisResult:
    """One-step augmented update of the step-1 estimator.

    ``aipw1`` regresses the dependent variable on the baseline block
    only; ``aipw2`` additionally uses the arm-specific martingale
    covariates.  Rank-deficient designs are solved by minimum-norm
    least squares with singular values below 1e-10 * s_max dropped.
    """
    if variant not in ("aipw1", "aipw2"):
        raise DesignError(f"variant must be 'aipw1' or 'aipw2', got {variant!r}")
    step1 = _fit_step1(snapshot, model)
    return _aipw_result(snapshot, step1, basis, variant, n_max)


def _aipw_result(snapshot, step1, basis, variant, n_max,
                 yhat=None, design_full=None) -> AnalysisResult:
    from .information import information_fraction, var_full_aipw_arrays

    arrays = step1.arrays
    if yhat is None:
        yhat = _dependent_variable(step1)
    if design_full is None:
        design_full = step2_augmentation_covariates(
            snapshot, step1.curves, basis, pi_hat=step1.pi_hat
        )
    n = arrays.n
    f_cols = 1 + basis.f_width(arrays.X.shape[1])
    design = design_full[:, :f_cols] if variant == "aipw1" else design_full
    if design.shape[1] >= n:
        raise EstimationError(
            f"augmentation design has {design.shape[1]} columns for {n} rows"
        )
    if n < design.shape[1] + 2:
        raise EstimationError("augmentation design needs two more rows than columns")
    coef, _, rank, sv = np.linalg.lstsq(design, yhat, rcond=_LSTSQ_RCOND)
    pred = design @ coef
    beta = step1.theta.beta - float(pred.mean())
    resid = yhat - pred
    se = float(np.sqrt(np.sum(resid ** 2)) / n)
    ss_tot = float(np.sum(yhat ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 0.0
    var_full = var_full_aipw_arrays(
        step1.weights, step1.m, design_full[:, :f_cols], n
    )
    n_ess, p_info, warn = information_fraction(var_full, se, n_max)
    diags = {"var_full": var_full, "r2": r2, "rank": int(rank),
             "iterations": step1.solver_info.get("iterations")}
    if warn:
        diags["p_info_raw"] = warn
    return AnalysisResult(
        estimator_kind=variant, t=snapshot.t, beta_hat=beta, se=se,
        wald=beta / se, n_t=n, n_A_t=snapshot.n_A_t, n_ess=n_ess,
        p_info=p_info, theta_step1=step1.theta, diagnostics=diags,
    )


def analyze_snapshot(snapshot: InterimSnapshot, model: ModelSpec,
                     basis: BasisSpec, n_max: int,
                     estimators=ESTIMATOR_KINDS) -> dict:
    """All requested estimators at one analysis, sharing the step-1 fit.

    Returns ``{estimator_kind: AnalysisResult}``; results are identical
    to calling the individual estimator functions.
    """
    out = {}
    if "tf_only" in estimators:
        out["tf_only"] = estimate_tf_only(snapshot, model, n_max)
    needs_step1 = [e for e in estimators if e != "tf_only"]
    if needs_step1:
        step1 = _fit_step1(snapshot, model)
        yhat = _dependent_variable(step1)
        if "ipwcc" in estimators:
            out["ipwcc"] = _ipw_result(snapshot, step1, n_max, yhat=yhat)
        variants = [e for e in ("aipw1", "aipw2") if e in estimators]
        if variants:
            design_full = step2_augmentation_covariates(
                snapshot, step1.curves, basis, pi_hat=step1.pi_hat
            )
            for v in variants:
                out[v] = _aipw_result(
                    snapshot, step1, basis, v, n_max,
                    yhat=yhat, design_full=design_full,
                )
    return out
