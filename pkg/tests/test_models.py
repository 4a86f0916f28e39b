"""Estimating functions, weighted solver, and influence evaluators."""

import numpy as np
import numpy.testing as npt
import pytest

from lagseq.data import ModelSpec
from lagseq.errors import DegenerateFitError, DesignError
from lagseq.models import (
    InfluenceEvaluator,
    ParamVector,
    compute_G_arrays,
    evaluate_M,
    influence,
    scaling_matrix,
    solve_weighted_arrays,
)

MEAN = ModelSpec("mean_difference")
LOGRR = ModelSpec("log_relative_risk")
PO3 = ModelSpec("proportional_odds", 3)
PO6 = ModelSpec("proportional_odds", 6)


def theta(*vals):
    return ParamVector.from_theta(np.array(vals, dtype=float))


# ---------------------------------------------------------------------------
# evaluate_M
# ---------------------------------------------------------------------------

def test_mean_difference_plugin():
    M = evaluate_M(MEAN, theta(0.0, 0.0), [2.0], [1.0])
    npt.assert_allclose(M, [[2.0, 2.0]])


def test_log_relative_risk_zero_residual():
    M = evaluate_M(LOGRR, theta(0.0, 0.0), [1.0], [0.0])
    npt.assert_allclose(M, [[0.0, 0.0]])


def test_proportional_odds_residuals_and_gradient_oracle():
    M = evaluate_M(PO3, theta(0.0, 0.0, 0.0), [1.0], [0.0])
    npt.assert_allclose(M[0, :2], [0.5, 0.5])
    npt.assert_allclose(M[0, 2], 0.0)  # A = 0 zeroes the last component

    # D(A) agrees with a finite-difference gradient of the expit vector
    # scaled by the inverse working covariance
    th = theta(-0.3, 0.4, 0.2)
    for a in (0, 1):
        def expit_vec(v):
            return 1.0 / (1.0 + np.exp(-(v[:-1] + v[-1] * a)))

        base = th.theta
        grad = np.zeros((2, 3))
        for k in range(3):
            up, dn = base.copy(), base.copy()
            up[k] += 1e-6
            dn[k] -= 1e-6
            grad[:, k] = (expit_vec(up) - expit_vec(dn)) / 2e-6
        p = expit_vec(base)
        v_ind = np.diag(p * (1 - p))
        oracle = grad.T @ np.linalg.inv(v_ind)
        npt.assert_allclose(scaling_matrix(PO3, th, a), oracle, atol=1e-5)


def test_ordinal_outside_support_raises():
    with pytest.raises(DesignError):
        evaluate_M(PO3, theta(0.0, 0.0, 0.0), [4.0], [0.0])
    with pytest.raises(DesignError):
        evaluate_M(PO3, theta(0.0, 0.0, 0.0), [1.5], [0.0])


# ---------------------------------------------------------------------------
# solve_weighted
# ---------------------------------------------------------------------------

def test_mean_difference_closed_form():
    rng = np.random.default_rng(0)
    Y = rng.normal(size=40)
    A = (np.arange(40) % 2).astype(float)
    w = np.ones(40)
    th = solve_weighted_arrays(MEAN, Y, A, w)
    assert th.beta == pytest.approx(Y[A == 1].mean() - Y[A == 0].mean(),
                                    abs=1e-12)


def test_log_relative_risk_closed_form():
    rng = np.random.default_rng(1)
    A = (np.arange(60) % 2).astype(float)
    Y = (rng.random(60) < np.where(A == 1, 0.5, 0.3)).astype(float)
    th = solve_weighted_arrays(LOGRR, Y, A, np.ones(60))
    expect = np.log(Y[A == 1].mean() / Y[A == 0].mean())
    assert th.beta == pytest.approx(expect, abs=1e-12)


def _po_oracle_root(Y, A, w, levels, beta_grid):
    """Grid/bisection oracle for the working-independence root.

    For each beta on a fine grid, profile the cutpoints by bisection on
    each marginal equation, then evaluate the beta-equation and locate
    its sign change.
    """
    def expit(x):
        return 1.0 / (1.0 + np.exp(-x))

    def alpha_profile(beta):
        alphas = []
        for j in range(1, levels):
            target = np.asarray(Y <= j, dtype=float)

            def eq(aj):
                return float(np.sum(w * (target - expit(aj + beta * A))))

            lo, hi = -30.0, 30.0
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if eq(mid) > 0:
                    lo = mid
                else:
                    hi = mid
            alphas.append(0.5 * (lo + hi))
        return np.array(alphas)

    def beta_eq(beta):
        al = alpha_profile(beta)
        tot = 0.0
        for j in range(1, levels):
            target = np.asarray(Y <= j, dtype=float)
            tot += float(np.sum(w * A * (target - expit(al[j - 1] + beta * A))))
        return tot

    vals = [beta_eq(b) for b in beta_grid]
    for i in range(len(beta_grid) - 1):
        if vals[i] == 0.0:
            return beta_grid[i]
        if vals[i] * vals[i + 1] < 0:
            lo, hi = beta_grid[i], beta_grid[i + 1]
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if beta_eq(lo) * beta_eq(mid) <= 0:
                    hi = mid
                else:
                    lo = mid
            return 0.5 * (lo + hi)
    raise AssertionError("oracle found no sign change")


def test_proportional_odds_matches_grid_oracle():
    Y = np.array([1, 2, 3, 1, 2, 3, 1, 1, 2, 3, 3, 2], dtype=float)
    A = np.array([0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1], dtype=float)
    w = np.ones(12)
    th = solve_weighted_arrays(PO3, Y, A, w)
    oracle = _po_oracle_root(Y, A, w, 3, np.linspace(-3, 3, 121))
    assert th.beta == pytest.approx(oracle, abs=1e-4)


def test_weighted_solution_respects_weights():
    Y = np.array([1.0, 2.0, 5.0, 7.0])
    A = np.array([0.0, 0.0, 1.0, 1.0])
    w = np.array([2.0, 1.0, 1.0, 3.0])
    th = solve_weighted_arrays(MEAN, Y, A, w)
    m0 = (2 * 1 + 1 * 2) / 3
    m1 = (1 * 5 + 3 * 7) / 4
    assert th.beta == pytest.approx(m1 - m0, abs=1e-12)


def test_root_residual_is_tiny():
    rng = np.random.default_rng(7)
    n = 200
    A = (rng.random(n) < 0.5).astype(float)
    Y = rng.integers(1, 7, size=n).astype(float)
    w = rng.uniform(0.5, 3.0, size=n)
    th = solve_weighted_arrays(PO6, Y, A, w)
    M = evaluate_M(PO6, th, Y, A)
    resid = (w @ M) / w.sum()
    assert np.max(np.abs(resid)) < 1e-8


def test_separation_raises():
    Y = np.array([0.0, 0.0, 1.0, 1.0])
    A = np.array([0.0, 0.0, 1.0, 1.0])
    with pytest.raises(DegenerateFitError):
        solve_weighted_arrays(LOGRR, Y, A, np.ones(4))


def test_missing_ordinal_level_raises():
    Y = np.array([1.0, 1.0, 3.0, 3.0, 1.0, 3.0])
    A = np.array([0.0, 1.0, 0.0, 1.0, 1.0, 0.0])
    with pytest.raises(DegenerateFitError, match="level 2"):
        solve_weighted_arrays(PO3, Y, A, np.ones(6))


def test_single_arm_raises():
    Y = np.array([1.0, 2.0, 3.0])
    A = np.zeros(3)
    with pytest.raises(DegenerateFitError):
        solve_weighted_arrays(MEAN, Y, A, np.ones(3))


def test_analytic_and_numeric_jacobians_same_root():
    rng = np.random.default_rng(11)
    for spec in (MEAN, LOGRR, PO3):
        for rep in range(20):
            n = 60
            A = (rng.random(n) < 0.5).astype(float)
            if spec.kind == "mean_difference":
                Y = rng.normal(size=n) + 0.3 * A
            elif spec.kind == "log_relative_risk":
                Y = (rng.random(n) < 0.4).astype(float)
                if Y[A == 0].sum() == 0 or Y[A == 1].sum() == 0:
                    continue
            else:
                Y = rng.integers(1, 4, size=n).astype(float)
            w = rng.uniform(0.5, 2.0, size=n)
            try:
                th_a = solve_weighted_arrays(spec, Y, A, w, jacobian="analytic")
                th_n = solve_weighted_arrays(spec, Y, A, w, jacobian="numeric")
            except DegenerateFitError:
                continue
            npt.assert_allclose(th_a.theta, th_n.theta, atol=1e-6)


# ---------------------------------------------------------------------------
# compute_G / influence
# ---------------------------------------------------------------------------

def test_G_hand_inversion_balanced():
    Y = np.array([1.0, 2.0, 3.0, 4.0])
    A = np.array([0.0, 1.0, 0.0, 1.0])
    th = solve_weighted_arrays(MEAN, Y, A, np.ones(4))
    G = compute_G_arrays(MEAN, Y, A, np.ones(4), th)
    npt.assert_allclose(G, [-2.0, 4.0], atol=1e-12)


def test_G_weight_scale_invariance():
    rng = np.random.default_rng(3)
    Y = rng.normal(size=30)
    A = (np.arange(30) % 2).astype(float)
    w = rng.uniform(0.5, 2.0, size=30)
    th = solve_weighted_arrays(MEAN, Y, A, w)
    G1 = compute_G_arrays(MEAN, Y, A, w, th)
    G2 = compute_G_arrays(MEAN, Y, A, 7.3 * w, th)
    npt.assert_allclose(G1, G2, rtol=1e-12)


def test_G_numeric_matches_analytic():
    rng = np.random.default_rng(4)
    n = 80
    A = (rng.random(n) < 0.5).astype(float)
    Y = (rng.random(n) < 0.4).astype(float)
    w = np.ones(n)
    th = solve_weighted_arrays(LOGRR, Y, A, w)
    Ga = compute_G_arrays(LOGRR, Y, A, w, th, jacobian="analytic")
    Gn = compute_G_arrays(LOGRR, Y, A, w, th, jacobian="numeric")
    npt.assert_allclose(Ga, Gn, atol=1e-6)


def test_influence_mean_zero_at_root():
    rng = np.random.default_rng(5)
    for spec in (MEAN, PO6):
        n = 150
        A = (rng.random(n) < 0.5).astype(float)
        Y = (rng.integers(1, 7, size=n).astype(float)
             if spec.kind == "proportional_odds" else rng.normal(size=n))
        w = rng.uniform(0.2, 2.5, size=n)
        th = solve_weighted_arrays(spec, Y, A, w)
        G = compute_G_arrays(spec, Y, A, w, th)
        ev = InfluenceEvaluator(spec=spec, theta=th, G_row=G)
        m = ev.values(Y, A)
        assert abs(float(w @ m) / w.sum()) < 1e-8


def test_influence_two_sample_variance_identity():
    # unweighted mean difference: (1/n) sum m^2 equals the two-sample
    # variance expression with ddof=0 variances, exactly
    rng = np.random.default_rng(6)
    n = 111
    A = (rng.random(n) < 0.4).astype(float)
    Y = rng.normal(loc=1.0 + 0.5 * A, scale=2.0, size=n)
    w = np.ones(n)
    th = solve_weighted_arrays(MEAN, Y, A, w)
    G = compute_G_arrays(MEAN, Y, A, w, th)
    m = evaluate_M(MEAN, th, Y, A) @ G
    pi = A.mean()
    v1 = Y[A == 1].var()
    v0 = Y[A == 0].var()
    npt.assert_allclose(np.mean(m ** 2), v1 / pi + v0 / (1 - pi), rtol=1e-10)


def test_influence_scalar_api():
    ev = InfluenceEvaluator(spec=MEAN, theta=theta(1.0, 0.5),
                            G_row=np.array([-2.0, 4.0]))
    val = influence(ev, 2.0, 1.0)
    assert isinstance(val, float)
    assert val == pytest.approx((-2.0 + 4.0) * (2.0 - 1.0 - 0.5))
