"""Outcome models, estimating functions, and the weighted solver.

Each model defines a p-dimensional estimating function M(Y, A; theta)
with mean zero at the truth, where theta stacks the nuisance parameters
and the scalar treatment effect beta last:

* ``mean_difference``:   M = (1, A)' (Y - alpha - beta*A)
* ``log_relative_risk``: M = (1, A)' (Y - exp(alpha + beta*A))
* ``proportional_odds``: M = D(A) r, with r_j = I(Y <= j) - expit(alpha_j
  + beta*A) and D(A) the gradient-transpose times the inverse working
  covariance.  Under working independence (V = diag of the marginal
  Bernoulli variances of the cumulative indicators) D(A) collapses to
  [I; A 1'], i.e. M_j = r_j for j < p and M_p = A * sum_j r_j.

The influence of the beta estimator is m = G M with G the last row of
the inverted negative Jacobian of the averaged estimating function.
Weighted averages are normalized by the total weight, which makes G
invariant to rescaling all weights by a constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import InterimSnapshot, ModelSpec
from .errors import (
    DegenerateFitError,
    DesignError,
    NonConvergenceError,
)

__all__ = [
    "ParamVector",
    "InfluenceEvaluator",
    "evaluate_M",
    "scaling_matrix",
    "solve_weighted",
    "compute_G",
    "influence",
]

_TARGET_TOL = 1e-12
_ACCEPT_TOL = 1e-8
_MAX_ITER = 50
_MAX_COND = 1e12


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Stacked parameters (nuisance alpha, treatment effect beta last)."""

    alpha: np.ndarray
    beta: float

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.alpha, [self.beta]])

    @classmethod
    def from_theta(cls, theta: np.ndarray) -> "ParamVector":
        theta = np.asarray(theta, dtype=float)
        return cls(alpha=theta[:-1].copy(), beta=float(theta[-1]))


@dataclass(frozen=True, eq=False)
class InfluenceEvaluator:
    """Influence-function evaluator m(Y, A, X) = G_row . M(Y, A, X)."""

    spec: ModelSpec
    theta: ParamVector
    G_row: np.ndarray

    def values(self, Y, A, X=None) -> np.ndarray:
        return evaluate_M(self.spec, self.theta, Y, A, X) @ self.G_row


def _as_arrays(Y, A):
    Y = np.atleast_1d(np.asarray(Y, dtype=float))
    A = np.atleast_1d(np.asarray(A, dtype=float))
    if Y.shape != A.shape:
        raise DesignError("Y and A must have matching shapes")
    return Y, A


def _check_ordinal(Y: np.ndarray, levels: int):
    ok = np.isfinite(Y) & (Y == np.round(Y)) & (Y >= 1) & (Y <= levels)
    if not ok.all():
        bad = Y[~ok]
        raise DesignError(f"ordinal outcome outside 1..{levels}: {bad[:5]}")


def evaluate_M(spec: ModelSpec, theta: ParamVector, Y, A, X=None) -> np.ndarray:
    """Per-subject estimating-function values, shape (n, p)."""
    Y, A = _as_arrays(Y, A)
    th = theta.theta
    if spec.kind == "mean_difference":
        r = Y - th[0] - th[1] * A
        return np.column_stack([r, A * r])
    if spec.kind == "log_relative_risk":
        r = Y - np.exp(th[0] + th[1] * A)
        return np.column_stack([r, A * r])
    c = spec.levels
    _check_ordinal(Y, c)
    cuts = np.arange(1, c)
    cum = (Y[:, None] <= cuts[None, :]).astype(float)
    probs = expit(th[None, :-1] + th[-1] * A[:, None])
    res = cum - probs
    return np.column_stack([res, A * res.sum(axis=1)])


def scaling_matrix(spec: ModelSpec, theta: ParamVector, a: int) -> np.ndarray:
    """Residual-to-M scaling D(A) = grad' V_ind^{-1} for proportional odds.

    With the working-independence covariance this is [I; a 1'], a
    (p x p-1) matrix; exposed for verification against finite-difference
    gradients of the cumulative-probability vector.
    """
    if spec.kind != "proportional_odds":
        raise DesignError("scaling_matrix applies to proportional_odds only")
    cm1 = spec.levels - 1
    return np.vstack([np.eye(cm1), np.full((1, cm1), float(a))])


def _residual(spec, theta_vec, Y, A, w, wsum):
    M = evaluate_M(spec, ParamVector.from_theta(theta_vec), Y, A)
    return (w @ M) / wsum


def _jacobian_analytic(spec, theta_vec, Y, A, w, wsum):
    th = theta_vec
    if spec.kind == "mean_difference":
        sw = wsum
        swa = float(w @ A)
        return -np.array([[sw, swa], [swa, swa]]) / wsum
    if spec.kind == "log_relative_risk":
        e = np.exp(th[0] + th[1] * A)
        we = float(w @ e)
        wea = float(w @ (A * e))
        return -np.array([[we, wea], [wea, wea]]) / wsum
    c = spec.levels
    p = c
    J = np.zeros((p, p))
    for a in (0, 1):
        mask = A == a
        W = float(w[mask].sum())
        if W == 0.0:
            continue
        v = expit(th[:-1] + th[-1] * a)
        v = v * (1.0 - v)
        J[: p - 1, : p - 1] += W * np.diag(v)
        if a == 1:
            J[: p - 1, p - 1] += W * v
            J[p - 1, : p - 1] += W * v
            J[p - 1, p - 1] += W * v.sum()
    return -J / wsum


def _jacobian_numeric(spec, theta_vec, Y, A, w, wsum):
    p = len(theta_vec)
    J = np.zeros((p, p))
    for k in range(p):
        h = 1e-5 * (1.0 + abs(theta_vec[k]))
        up = theta_vec.copy()
        dn = theta_vec.copy()
        up[k] += h
        dn[k] -= h
        J[:, k] = (_residual(spec, up, Y, A, w, wsum)
                   - _residual(spec, dn, Y, A, w, wsum)) / (2.0 * h)
    return J


def _start_values(spec, Y, A, w):
    if spec.kind == "mean_difference":
        m0 = float(w[A == 0] @ Y[A == 0] / w[A == 0].sum())
        m1 = float(w[A == 1] @ Y[A == 1] / w[A == 1].sum())
        return np.array([m0, m1 - m0])
    if spec.kind == "log_relative_risk":
        m0 = float(w[A == 0] @ Y[A == 0] / w[A == 0].sum())
        m1 = float(w[A == 1] @ Y[A == 1] / w[A == 1].sum())
        if m0 <= 0.0 or m1 <= 0.0:
            raise DegenerateFitError(
                "zero weighted event rate in an arm (separation)"
            )
        return np.array([np.log(m0), np.log(m1) - np.log(m0)])
    c = spec.levels
    wsum = w.sum()
    cum = np.array([float(w @ (Y <= j)) for j in range(1, c)]) / wsum
    cum = np.clip(cum, 1e-6, 1.0 - 1e-6)
    cum = np.maximum.accumulate(cum)  # keep a monotone start
    alpha0 = np.log(cum / (1.0 - cum))
    return np.concatenate([alpha0, [0.0]])


def _check_fit_inputs(spec, Y, A, w):
    pos = w > 0
    if not np.isfinite(Y[pos]).all():
        raise DesignError("positive weight attached to a masked outcome")
    if pos.sum() < spec.p:
        raise DegenerateFitError(
            f"need at least {spec.p} weighted subjects, have {int(pos.sum())}"
        )
    if not (pos & (A == 0)).any() or not (pos & (A == 1)).any():
        raise DegenerateFitError("weighted subjects must span both arms")
    if spec.kind == "proportional_odds":
        for j in range(1, spec.levels + 1):
            if float(w[pos] @ (Y[pos] == j)) <= 0.0:
                raise DegenerateFitError(
                    f"ordinal level {j} has zero weighted count"
                )


def solve_weighted(spec: ModelSpec, snapshot: InterimSnapshot, weights,
                   jacobian: str = "analytic") -> ParamVector:
    """Solve the weighted estimating equation for (alpha, beta).

    ``weights`` must be nonnegative, positive only for subjects whose
    outcome is ascertained.  Damped Newton iteration; the returned root
    satisfies max |sum_i w_i M_i| / sum_i w_i <= 1e-8 (usually ~1e-14).
    """
    arrays = snapshot.arrays()
    return solve_weighted_arrays(spec, arrays.Y, arrays.A_float(), weights,
                                 jacobian=jacobian)


def solve_weighted_arrays(spec: ModelSpec, Y, A, weights,
                          jacobian: str = "analytic",
                          return_info: bool = False):
    Y = np.asarray(Y, dtype=float)
    A = np.asarray(A, dtype=float)
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise DesignError("weights must be nonnegative")
    _check_fit_inputs(spec, Y, A, w)
    pos = w > 0
    Yp, Ap, wp = Y[pos], A[pos], w[pos]
    wsum = float(wp.sum())
    jac = _jacobian_analytic if jacobian == "analytic" else _jacobian_numeric

    theta = _start_values(spec, Yp, Ap, wp)
    r = _residual(spec, theta, Yp, Ap, wp, wsum)
    rnorm = float(np.max(np.abs(r)))
    iters = 0
    for _ in range(_MAX_ITER):
        if rnorm <= _TARGET_TOL:
            break
        J = jac(spec, theta, Yp, Ap, wp, wsum)
        step = _solve_step(J, r)
        # damped update: halve the step while the residual worsens
        lam = 1.0
        for _ in range(12):
            cand = theta - lam * step
            rc = _residual(spec, cand, Yp, Ap, wp, wsum)
            cnorm = float(np.max(np.abs(rc)))
            if np.isfinite(cnorm) and cnorm < rnorm:
                break
            lam *= 0.5
        else:
            break
        theta, r, rnorm = cand, rc, cnorm
        iters += 1
    if rnorm > _ACCEPT_TOL:
        raise NonConvergenceError(
            f"estimating equation not solved after {_MAX_ITER} iterations "
            f"(residual {rnorm:.2e})"
        )
    out = ParamVector.from_theta(theta)
    if spec.kind == "proportional_odds" and np.any(np.diff(out.alpha) <= 0):
        raise DegenerateFitError("cutpoints not strictly increasing at the root")
    if return_info:
        return out, {"iterations": iters, "residual": rnorm}
    return out


def _solve_step(J: np.ndarray, r: np.ndarray) -> np.ndarray:
    try:
        if np.linalg.cond(J) > _MAX_COND:
            raise np.linalg.LinAlgError
        return np.linalg.solve(J, r)
    except np.linalg.LinAlgError:
        ridge = 1e-8 * max(1.0, float(np.abs(np.diag(J)).max()))
        Jr = J - ridge * np.eye(len(r))
        try:
            return np.linalg.solve(Jr, r)
        except np.linalg.LinAlgError:
            raise DegenerateFitError("singular Jacobian in the Newton solver")


def compute_G(spec: ModelSpec, snapshot: InterimSnapshot, weights,
              theta: ParamVector, jacobian: str = "analytic") -> np.ndarray:
    """Last row of the inverted negative weighted-average Jacobian."""
    arrays = snapshot.arrays()
    return compute_G_arrays(spec, arrays.Y, arrays.A_float(), weights, theta,
                            jacobian=jacobian)


def compute_G_arrays(spec: ModelSpec, Y, A, weights, theta: ParamVector,
                     jacobian: str = "analytic") -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    A = np.asarray(A, dtype=float)
    w = np.asarray(weights, dtype=float)
    pos = w > 0
    wsum = float(w[pos].sum())
    jac = _jacobian_analytic if jacobian == "analytic" else _jacobian_numeric
    B = -jac(spec, theta.theta, Y[pos], A[pos], w[pos], wsum)
    if np.linalg.cond(B) > _MAX_COND:
        raise DegenerateFitError(
            "estimating-function Jacobian is numerically singular"
        )
    p = B.shape[0]
    e_last = np.zeros(p)
    e_last[-1] = 1.0
    return np.linalg.solve(B.T, e_last)


def influence(evaluator: InfluenceEvaluator, Y, A, X=None):
    """Influence values m = G_row . M; scalar in, scalar out."""
    vals = evaluator.values(Y, A, X)
    if np.ndim(Y) == 0:
        return float(vals[0])
    return vals
