"""Effective sample size, information fractions, maximum information."""

import numpy as np
import numpy.testing as npt
import pytest
from scipy.stats import norm

from lagseq.censoring import fit_censoring_km
from lagseq.data import BasisSpec, ModelSpec, snapshot_at
from lagseq.errors import DesignError
from lagseq.estimators import analyze_snapshot, ipcw_weights
from lagseq.information import (
    information_based_fraction,
    max_information,
    n_ess,
    var_full_aipw,
    var_full_ipw,
    var_full_aipw_arrays,
    var_full_ipw_arrays,
)
from lagseq.models import (
    InfluenceEvaluator,
    compute_G_arrays,
    evaluate_M,
    solve_weighted_arrays,
)
from lagseq.scenarios import gen_scenario1
from lagseq.simulation import replication_rng

MEAN = ModelSpec("mean_difference")
PO6 = ModelSpec("proportional_odds", 6)
BASIS = BasisSpec(f_terms=("x",), h_terms=("l", "x"))


def fitted_pieces(snapshot, model):
    arrays = snapshot.arrays()
    curves = {a: fit_censoring_km(snapshot, a) for a in (0, 1)}
    w = ipcw_weights(arrays, curves)
    th = solve_weighted_arrays(model, arrays.Y, arrays.A_float(), w)
    G = compute_G_arrays(model, arrays.Y, arrays.A_float(), w, th)
    return arrays, curves, w, InfluenceEvaluator(spec=model, theta=th, G_row=G)


def test_var_full_ipw_all_ascertained_is_mean_square():
    rng = replication_rng(70, 0)
    records = gen_scenario1(rng, 0.0, n=60)
    snap = snapshot_at(records, 330.0, 90.0)
    arrays, curves, w, ev = fitted_pieces(snap, PO6)
    m = ev.values(arrays.Y, arrays.A_float())
    got = var_full_ipw(snap, ev, curves)
    npt.assert_allclose(got, np.mean(m ** 2), rtol=1e-12)


def test_var_full_ipw_bruteforce_sum():
    rng = replication_rng(71, 0)
    records = gen_scenario1(rng, 0.0, n=10)
    snap = snapshot_at(records, 160.0, 90.0)
    arrays, curves, w, ev = fitted_pieces(snap, MEAN)
    got = var_full_ipw(snap, ev, curves)
    total = 0.0
    for i in range(arrays.n):
        if arrays.delta[i]:
            mi = float(ev.values(arrays.Y[i:i + 1],
                                 arrays.A_float()[i:i + 1])[0])
            k = curves[int(arrays.arm[i])].eval_geq(float(arrays.U[i]))
            total += mi ** 2 / k
    npt.assert_allclose(got, total / arrays.n, atol=1e-12)


def test_var_full_aipw_normal_equations_oracle():
    rng = np.random.default_rng(9)
    n = 10
    w = rng.uniform(0.0, 2.0, size=n)
    w[w < 0.4] = 0.0
    m = rng.normal(size=n)
    m[w == 0] = 0.0
    F = np.column_stack([np.ones(n), rng.normal(size=n)])
    got = var_full_aipw_arrays(w, m, F, n)
    # weighted normal equations solved directly
    W = np.diag(w)
    coef = np.linalg.solve(F.T @ W @ F, F.T @ W @ m)
    resid = m - F @ coef
    npt.assert_allclose(got, float(np.sum(w * resid ** 2) / n), atol=1e-10)


def test_var_full_aipw_public_wrapper():
    rng = replication_rng(72, 0)
    records = gen_scenario1(rng, 0.0, n=120)
    snap = snapshot_at(records, 170.0, 90.0)
    arrays, curves, w, ev = fitted_pieces(snap, PO6)
    v_ipw = var_full_ipw(snap, ev, curves)
    v_aipw = var_full_aipw(snap, ev, curves, BASIS)
    assert 0 < v_aipw <= v_ipw + 1e-12


def test_n_ess_definition_and_warning():
    ess, p = n_ess(4.0, np.sqrt(4.0 / 100.0), n_max=200)
    assert ess == pytest.approx(100.0)
    assert p == pytest.approx(0.5)
    with pytest.warns(UserWarning, match="exceeds 1"):
        ess, p = n_ess(4.0, np.sqrt(4.0 / 250.0), n_max=200)
    assert p == pytest.approx(1.0001)
    with pytest.raises(DesignError):
        n_ess(0.0, 1.0, 100)
    with pytest.raises(DesignError):
        n_ess(1.0, 0.0, 100)


def test_max_information_values():
    mi = max_information(0.05, 0.1, 1.0, 1.0)
    z = norm.ppf(0.975) + norm.ppf(0.9)
    assert mi == pytest.approx(z ** 2, abs=1e-6)
    assert mi == pytest.approx(10.5074, abs=1e-3)
    assert max_information(0.05, 0.1, 1.0, 1.03) == pytest.approx(
        mi * 1.03, rel=1e-12)
    assert max_information(0.05, 0.1, 2.0, 1.0) == pytest.approx(
        mi / 4.0, rel=1e-12)
    with pytest.raises(DesignError):
        max_information(0.05, 0.1, 0.0)


def test_information_based_fraction():
    inf_t, p = information_based_fraction(0.2, 50.0)
    assert inf_t == pytest.approx(25.0)
    assert p == pytest.approx(0.5)


def test_p_fixed_one_at_end_all_estimators():
    rng = replication_rng(73, 0)
    records = gen_scenario1(rng, np.log(1.5), n=150)
    snap = snapshot_at(records, 330.0, 90.0)
    out = analyze_snapshot(snap, PO6, BASIS, 150)
    for e, res in out.items():
        assert res.p_info == pytest.approx(1.0, abs=1e-9), e


def test_interim_p_between_complete_and_enrolled_fraction():
    # Monte Carlo-flavored check of the effective-sample-size bracketing
    vals = []
    for rep in range(30):
        rng = replication_rng(74, rep)
        records = gen_scenario1(rng, 0.0)
        snap = snapshot_at(records, 195.0, 90.0)
        out = analyze_snapshot(snap, PO6, BASIS, 602, ("ipwcc",))
        res = out["ipwcc"]
        vals.append((res.n_A_t / 602, res.p_info, res.n_t / 602))
    lo, mid, hi = map(np.median, zip(*vals))
    assert lo <= mid <= hi
