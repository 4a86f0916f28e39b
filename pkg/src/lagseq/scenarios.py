"""Data generators for the three benchmark trial scenarios.

Scenario 1: six-level ordinal outcome (1 best, 6 = death) under a
proportional odds law; death is ascertained at its (early) occurrence
time, all other levels only after the full follow-up period.

Scenario 2: the same generative mechanism with the binary outcome
"death by the end of follow-up"; the effect is a log relative risk.

Scenario 3: a continuous outcome, the last of five longitudinal
measurements from a linear mixed model; the lag equals the full
follow-up period for everyone, and interim efficiency comes from the
baseline measurement and the last value carried forward.
"""

from __future__ import annotations

import math

import numpy as np

from .data import BasisSpec, ModelSpec, SubjectRecord, TrialDesign

__all__ = [
    "scenario_design",
    "true_beta",
    "gen_scenario1",
    "gen_scenario2",
    "gen_scenario3",
    "generate_scenario",
]

_CUTS = np.array([0.12, 0.35, 0.52, 0.62, 0.67])
_ORDINAL_LOG_OR = math.log(1.5)

_S3_VISITS = np.array([0.0, 4.0, 12.0, 24.0, 52.0])
_S3_INTERCEPTS = np.array([65.0, 60.0, 55.0, 49.0])
_S3_X1_PROBS = np.array([0.4, 0.3, 0.2, 0.1])
_S3_D = np.array([[80.0, -0.5], [-0.5, 0.08]])
_S3_SIGMA = 4.5
_S3_XI_NULL = (-0.3, -0.3)
_S3_XI_ALT = (-0.3, -0.18)


def scenario_design(scenario: int) -> TrialDesign:
    """Design parameters for a benchmark scenario.

    The augmentation bases mirror the published benchmark runs:
    baseline functions are the components of X, time-dependent functions
    the components of L(u) alone.
    """
    basis = BasisSpec(f_terms=("x",), h_terms=("l",))
    if scenario == 1:
        return TrialDesign(
            n_max=602, max_followup=90.0, enrollment_window=240.0,
            alpha=0.025, sidedness="one", spending="obrien_fleming",
            analysis_times=(150.0, 195.0, 240.0, 285.0, 330.0),
            model=ModelSpec("proportional_odds", 6), basis=basis,
            direction=1,
        )
    if scenario == 2:
        return TrialDesign(
            n_max=900, max_followup=90.0, enrollment_window=240.0,
            alpha=0.025, sidedness="one", spending="obrien_fleming",
            analysis_times=(150.0, 195.0, 240.0, 285.0, 330.0),
            model=ModelSpec("log_relative_risk"), basis=basis,
            direction=-1,
        )
    if scenario == 3:
        return TrialDesign(
            n_max=300, max_followup=52.0, enrollment_window=156.0,
            alpha=0.025, sidedness="one", spending="obrien_fleming",
            analysis_times=(104.0, 130.0, 156.0, 182.0, 208.0),
            model=ModelSpec("mean_difference"), basis=basis,
            direction=1,
        )
    raise ValueError(f"unknown scenario {scenario}")


def true_beta(scenario: int, hypothesis: str) -> float:
    """The treatment effect implied by the generator."""
    if hypothesis not in ("null", "alternative"):
        raise ValueError(f"hypothesis must be 'null' or 'alternative'")
    alt = hypothesis == "alternative"
    if scenario == 1:
        return _ORDINAL_LOG_OR if alt else 0.0
    if scenario == 2:
        if not alt:
            return 0.0
        p0 = 1.0 - 0.67
        p1 = 1.0 - 0.67 / (math.exp(-_ORDINAL_LOG_OR) * 0.33 + 0.67)
        return math.log(p1 / p0)
    if scenario == 3:
        xi = _S3_XI_ALT if alt else _S3_XI_NULL
        return (xi[1] - xi[0]) * 52.0
    raise ValueError(f"unknown scenario {scenario}")


def _ordinal_core(rng: np.random.Generator, n: int, log_or: float,
                  t_f: float, e_max: float):
    """Shared mechanism behind scenarios 1 and 2."""
    entry = rng.uniform(0.0, e_max, size=n)
    arm = (rng.random(n) < 0.5).astype(np.int8)
    ups = rng.uniform(0.0, 1.0, size=n)
    inv_or = math.exp(-log_or)
    gamma = np.where(
        arm == 1, ups * inv_or / (1.0 - ups + ups * inv_or), ups
    )
    level = np.searchsorted(_CUTS, gamma, side="right") + 1  # 1..6
    hosp = t_f * gamma / 0.52  # time in hospital when discharged early
    death = level == 6
    t0 = rng.uniform(0.0, 30.0, size=n)
    t1 = rng.uniform(20.0, 50.0, size=n)
    lag = np.where(death, np.where(arm == 1, t1, t0), t_f)
    x = rng.normal(1.5 * (ups - 0.5), 1.0, size=n)
    discharge = np.where(gamma < 0.52, hosp, t_f)
    return entry, arm, level, lag, x, discharge


def _ordinal_records(entry, arm, outcome, lag, x, discharge, t_f):
    records = []
    zero = (np.array([0.0]), np.array([[0.0, 0.0]]))
    for i in range(len(entry)):
        w = discharge[i]
        if w < lag[i]:
            path = (np.array([0.0, w]),
                    np.array([[0.0, 0.0], [1.0, t_f - w]]))
        else:
            path = zero
        records.append(SubjectRecord(
            id=f"s{i + 1}", entry_time=float(entry[i]),
            baseline=np.array([x[i]]), arm=int(arm[i]), lag=float(lag[i]),
            outcome=float(outcome[i]), covariate_path=path,
        ))
    return records


def gen_scenario1(rng: np.random.Generator, beta: float,
                  n: int = 602) -> list:
    """Ordinal-outcome trial data with cumulative log odds ratio ``beta``.

    Time-dependent covariates: the discharged-by-u indicator and the
    days expected out of hospital by the end of follow-up.
    """
    t_f, e_max = 90.0, 240.0
    entry, arm, level, lag, x, discharge = _ordinal_core(
        rng, n, beta, t_f, e_max)
    return _ordinal_records(entry, arm, level, lag, x, discharge, t_f)


def gen_scenario2(rng: np.random.Generator, beta_ordinal: float,
                  n: int = 900) -> list:
    """Binary death-by-follow-up outcome from the same mechanism.

    ``beta_ordinal`` parameterizes the underlying ordinal law; the
    implied treatment effect on the binary scale is the log relative
    risk reported by :func:`true_beta`.
    """
    t_f, e_max = 90.0, 240.0
    entry, arm, level, lag, x, discharge = _ordinal_core(
        rng, n, beta_ordinal, t_f, e_max)
    outcome = (level == 6).astype(float)
    return _ordinal_records(entry, arm, outcome, lag, x, discharge, t_f)


def gen_scenario3(rng: np.random.Generator, xi: tuple[float, float],
                  n: int = 300) -> list:
    """Continuous-outcome trial data from a linear mixed model.

    Five measurements at fixed visit weeks; the outcome is the last
    one, the analysis baseline covariate is the first, and the single
    time-dependent covariate is the most recent measurement.
    """
    t_f, e_max = 52.0, 156.0
    entry = rng.uniform(0.0, e_max, size=n)
    arm = (rng.random(n) < 0.5).astype(np.int8)
    x1 = rng.choice(4, size=n, p=_S3_X1_PROBS) + 1
    b = rng.multivariate_normal(np.zeros(2), _S3_D, size=n)
    e = rng.normal(0.0, _S3_SIGMA, size=(n, len(_S3_VISITS)))
    slope = np.where(arm == 1, xi[1], xi[0])
    z = (_S3_INTERCEPTS[x1 - 1][:, None]
         + (slope[:, None] + b[:, 1][:, None]) * _S3_VISITS[None, :]
         + b[:, 0][:, None] + e)
    records = []
    for i in range(n):
        records.append(SubjectRecord(
            id=f"s{i + 1}", entry_time=float(entry[i]),
            baseline=np.array([z[i, 0]]), arm=int(arm[i]), lag=t_f,
            outcome=float(z[i, -1]),
            covariate_path=(_S3_VISITS.copy(), z[i][:, None].copy()),
        ))
    return records


def generate_scenario(scenario: int, hypothesis: str,
                      rng: np.random.Generator) -> list:
    """Dispatch to the scenario generator with hypothesis-level effects."""
    alt = hypothesis == "alternative"
    if scenario == 1:
        return gen_scenario1(rng, _ORDINAL_LOG_OR if alt else 0.0)
    if scenario == 2:
        return gen_scenario2(rng, _ORDINAL_LOG_OR if alt else 0.0)
    if scenario == 3:
        return gen_scenario3(rng, _S3_XI_ALT if alt else _S3_XI_NULL)
    raise ValueError(f"unknown scenario {scenario}")
