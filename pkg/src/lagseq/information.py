"""Effective sample size and proportion-of-information monitoring scales.

Fixed-sample monitoring converts an interim standard error into the
number of fully followed subjects that would deliver the same
precision: ``n_ess = var_full / se^2`` with ``var_full`` an estimate of
the full-data influence variance, so ``p = n_ess / n_max``.  At the
final analysis the estimators' algebra makes p exactly 1.

Information-based monitoring instead uses ``Inf(t) = se^{-2}`` against
a maximum-information target; no sample-size re-estimation is done.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .boundaries import norm_ppf
from .data import BasisSpec, InterimSnapshot
from .errors import DesignError

__all__ = [
    "InformationReport",
    "var_full_ipw",
    "var_full_aipw",
    "n_ess",
    "max_information",
    "information_based_fraction",
]

_P_CAP = 1.0001


@dataclass(frozen=True)
class InformationReport:
    """Monitoring-scale summary attached to an analysis."""

    var_full_influence: float
    n_ess: float
    p_fixed: float
    inf_t: float
    mi: float | None
    mode: str  # "fixed_sample" | "information_based"


def fixed_sample_report(var_full: float, se_beta: float,
                        n_max: int) -> InformationReport:
    """Monitoring summary under a fixed maximum sample size."""
    ess, p, _raw = information_fraction(var_full, se_beta, n_max)
    return InformationReport(
        var_full_influence=float(var_full), n_ess=ess, p_fixed=p,
        inf_t=float(se_beta ** -2), mi=None, mode="fixed_sample",
    )


def information_based_report(var_full: float, se_beta: float,
                             mi: float) -> InformationReport:
    """Monitoring summary against a maximum-information target."""
    inf_t, p = information_based_fraction(se_beta, mi)
    return InformationReport(
        var_full_influence=float(var_full),
        n_ess=float(var_full / se_beta ** 2), p_fixed=p,
        inf_t=inf_t, mi=float(mi), mode="information_based",
    )


def var_full_ipw_arrays(weights: np.ndarray, m: np.ndarray, n: int) -> float:
    """(1/n) sum_i delta_i m_i^2 / K(U_i, A_i) with weights = delta/K."""
    return float(np.sum(weights * m ** 2) / n)


def var_full_ipw(snapshot: InterimSnapshot, evaluator, curves) -> float:
    """Full-data influence-variance estimate for the step-1 estimator."""
    from .estimators import ipcw_weights

    arrays = snapshot.arrays()
    w = ipcw_weights(arrays, curves)
    m = np.zeros(arrays.n)
    obs = arrays.delta
    m[obs] = evaluator.values(arrays.Y[obs], arrays.A_float()[obs])
    return var_full_ipw_arrays(w, m, arrays.n)


def var_full_aipw_arrays(weights: np.ndarray, m: np.ndarray,
                         f_design: np.ndarray, n: int) -> float:
    """Influence variance after projecting out the baseline augmentation.

    Weighted least squares of m on the baseline block with weights
    delta/K; returns (1/n) sum_i w_i (m_i - Pred*_i)^2.
    """
    sw = np.sqrt(weights)
    coef, *_ = np.linalg.lstsq(sw[:, None] * f_design, sw * m, rcond=1e-10)
    resid = m - f_design @ coef
    return float(np.sum(weights * resid ** 2) / n)


def var_full_aipw(snapshot: InterimSnapshot, evaluator, curves,
                  basis: BasisSpec) -> float:
    """Full-data influence-variance estimate for augmented estimators."""
    from .estimators import ipcw_weights, step2_augmentation_covariates

    arrays = snapshot.arrays()
    w = ipcw_weights(arrays, curves)
    m = np.zeros(arrays.n)
    obs = arrays.delta
    m[obs] = evaluator.values(arrays.Y[obs], arrays.A_float()[obs])
    f_cols = 1 + basis.f_width(arrays.X.shape[1])
    design = step2_augmentation_covariates(snapshot, curves, basis)[:, :f_cols]
    return var_full_aipw_arrays(w, m, design, arrays.n)


def n_ess(var_full: float, se_beta: float, n_max: int):
    """Effective sample size and fixed-sample information fraction.

    Returns ``(n_ess, p_fixed)`` with ``p_fixed`` the raw ratio; values
    above 1 (sampling noise) trigger a warning and are capped at 1.0001.
    """
    if se_beta <= 0 or var_full <= 0:
        raise DesignError("var_full and se_beta must be positive")
    ess = var_full / se_beta ** 2
    p = ess / n_max
    if p > 1.0:
        warnings.warn(
            f"information fraction {p:.6f} exceeds 1; capped at {_P_CAP}",
            stacklevel=2,
        )
        p = min(p, _P_CAP)
    return float(ess), float(p)


def information_fraction(var_full: float, se_beta: float, n_max: int):
    """Internal variant of :func:`n_ess` that reports instead of warning.

    Returns ``(n_ess, p_capped, raw_p_if_above_1_or_None)``.
    """
    if se_beta <= 0 or var_full <= 0:
        raise DesignError("var_full and se_beta must be positive")
    ess = var_full / se_beta ** 2
    raw = ess / n_max
    p = min(raw, _P_CAP)
    return float(ess), float(p), (float(raw) if raw > 1.0 else None)


def max_information(alpha: float, power_gamma: float, beta_A: float,
                    inflation: float = 1.0) -> float:
    """Target information ``((z_{alpha/2} + z_gamma) / beta_A)^2 * IF``."""
    if beta_A == 0:
        raise DesignError("beta_A must be nonzero")
    if inflation < 1.0:
        raise DesignError("inflation factor must be >= 1")
    z_a = norm_ppf(1.0 - alpha / 2.0)
    z_g = norm_ppf(1.0 - power_gamma)
    return float(((z_a + z_g) / beta_A) ** 2 * inflation)


def information_based_fraction(se_beta: float, mi: float):
    """``Inf(t) = se^{-2}`` and its fraction of the maximum information."""
    if se_beta <= 0 or mi <= 0:
        raise DesignError("se_beta and mi must be positive")
    inf_t = se_beta ** -2
    return float(inf_t), float(inf_t / mi)
