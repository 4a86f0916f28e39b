"""Monte Carlo harness: replication driver and operating characteristics.

Each replication draws one full trial from a scenario generator, applies
every requested estimator at every analysis time, recomputes stopping
boundaries from that replication's realized information fractions, and
records the first boundary crossing.  Replications are independent
given (seed, rep_index): random streams are counter-based, so results
do not depend on worker count or scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .boundaries import compute_boundaries, decide
from .data import snapshot_at
from .errors import DesignError, EstimationError
from .estimators import ESTIMATOR_KINDS, analyze_snapshot
from .scenarios import generate_scenario, scenario_design, true_beta

__all__ = [
    "ScenarioConfig",
    "ReplicationResult",
    "AggregateStats",
    "replication_rng",
    "run_replication",
    "run_simulation",
    "aggregate",
]

_MONOTONE_EPS = 1e-6
_FAILURE_RATE_LIMIT = 1e-3


def replication_rng(seed: int, rep_index: int, purpose: int = 0):
    """Counter-based stream for one replication (scheduling independent)."""
    ss = np.random.SeedSequence(entropy=(int(seed), int(rep_index), purpose))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """One Monte Carlo run of a benchmark scenario."""

    scenario: int
    hypothesis: str  # "null" | "alternative"
    reps: int
    seed: int
    spendings: tuple[str, ...] = ("obrien_fleming",)
    estimators: tuple[str, ...] = ESTIMATOR_KINDS
    jobs: int = 1

    def __post_init__(self):
        if self.scenario not in (1, 2, 3):
            raise DesignError("scenario must be 1, 2, or 3")
        if self.hypothesis not in ("null", "alternative"):
            raise DesignError("hypothesis must be 'null' or 'alternative'")
        if self.reps < 2:
            raise DesignError("need at least 2 replications")
        bad = set(self.estimators) - set(ESTIMATOR_KINDS)
        if bad:
            raise DesignError(f"unknown estimators: {sorted(bad)}")
        bad = set(self.spendings) - {"obrien_fleming", "pocock"}
        if bad:
            raise DesignError(f"unknown spending kinds: {sorted(bad)}")

    @property
    def design(self):
        return scenario_design(self.scenario)

    @property
    def true_beta(self) -> float:
        return true_beta(self.scenario, self.hypothesis)


@dataclass(eq=False)
class ReplicationResult:
    """Per-replication estimates and stopping decisions.

    Arrays are indexed [estimator, analysis]; estimator order follows
    the config.  ``stopped_at`` is the 1-based analysis of the first
    crossing, 0 when the trial runs to the end without rejecting.
    """

    rep_index: int
    beta: np.ndarray
    se: np.ndarray
    p_raw: np.ndarray
    n_enrolled: np.ndarray
    n_full: np.ndarray
    n_ess: np.ndarray
    failed: np.ndarray  # bool per estimator
    fail_messages: dict
    rejected: dict  # spending -> bool array per estimator
    stopped_at: dict  # spending -> int array per estimator
    sample_size: dict  # spending -> enrolled count at stop
    stop_time: dict  # spending -> calendar stopping time
    fraction_adjustments: int = 0


def monitoring_fractions(p_raw: np.ndarray) -> tuple[np.ndarray, int]:
    """Strictly increasing fractions in (0, 1] for the boundary engine.

    Raw fractions are capped at 1; a non-increase is bumped by 1e-6 and
    counted; a backward pass keeps everything strictly below later
    values (the final analysis sits at 1 up to numerical noise).
    """
    fr = np.minimum(np.asarray(p_raw, dtype=float), 1.0)
    adjusted = 0
    for j in range(1, len(fr)):
        if fr[j] <= fr[j - 1]:
            fr[j] = fr[j - 1] + _MONOTONE_EPS
            adjusted += 1
    if fr[-1] > 1.0:
        fr[-1] = 1.0
    for j in range(len(fr) - 2, -1, -1):
        cap = fr[j + 1] - 1e-9
        if fr[j] > cap:
            fr[j] = cap
            adjusted += 1
    return fr, adjusted


def run_replication(config: ScenarioConfig, rep_index: int) -> ReplicationResult:
    """One deterministic replication: generate, estimate, monitor."""
    design = config.design
    rng = replication_rng(config.seed, rep_index)
    records = generate_scenario(config.scenario, config.hypothesis, rng)
    times = design.analysis_times
    n_est = len(config.estimators)
    n_j = len(times)
    beta = np.full((n_est, n_j), np.nan)
    se = np.full((n_est, n_j), np.nan)
    p_raw = np.full((n_est, n_j), np.nan)
    n_enrolled = np.zeros((n_est, n_j), dtype=int)
    n_full = np.zeros((n_est, n_j), dtype=int)
    n_ess_arr = np.full((n_est, n_j), np.nan)
    failed = np.zeros(n_est, dtype=bool)
    fail_messages: dict = {}

    for j, t in enumerate(times):
        snap = snapshot_at(records, t, design.max_followup)
        results = {}
        if "tf_only" in config.estimators and not failed[
            config.estimators.index("tf_only")
        ]:
            try:
                results.update(analyze_snapshot(
                    snap, design.model, design.basis, design.n_max,
                    ("tf_only",),
                ))
            except EstimationError as exc:
                fail_messages.setdefault("tf_only", f"t={t}: {exc}")
        weighted = [
            e for k, e in enumerate(config.estimators)
            if e != "tf_only" and not failed[k]
        ]
        if weighted:
            # the weighted estimators share step 1; a failure fails them all
            try:
                results.update(analyze_snapshot(
                    snap, design.model, design.basis, design.n_max, weighted
                ))
            except EstimationError as exc:
                for e in weighted:
                    fail_messages.setdefault(e, f"t={t}: {exc}")
        for k, e in enumerate(config.estimators):
            if failed[k]:
                continue
            res = results.get(e)
            if res is None:
                failed[k] = True
                continue
            beta[k, j] = res.beta_hat
            se[k, j] = res.se
            p_raw[k, j] = res.diagnostics.get("p_info_raw", res.p_info)
            n_enrolled[k, j] = res.n_t
            n_full[k, j] = res.n_A_t
            n_ess_arr[k, j] = res.n_ess

    rejected = {}
    stopped_at = {}
    sample_size = {}
    stop_time = {}
    adjustments = 0
    for kind in config.spendings:
        rej = np.zeros(n_est, dtype=bool)
        stop = np.zeros(n_est, dtype=int)
        ss = np.zeros(n_est, dtype=float)
        st = np.zeros(n_est, dtype=float)
        for k in range(n_est):
            if failed[k]:
                continue
            fr, adj = monitoring_fractions(p_raw[k])
            adjustments += adj
            plan = compute_boundaries(
                fr, design.alpha, design.sidedness, kind
            )
            hit = 0
            for j in range(n_j):
                stat = beta[k, j] / se[k, j]
                dec = decide(plan, j + 1, stat, direction=design.direction)
                if dec.decision == "stop_reject":
                    hit = j + 1
                    break
            rej[k] = hit > 0
            stop[k] = hit
            idx = hit - 1 if hit else n_j - 1
            ss[k] = n_enrolled[k, idx]
            st[k] = times[idx]
        rejected[kind] = rej
        stopped_at[kind] = stop
        sample_size[kind] = ss
        stop_time[kind] = st

    return ReplicationResult(
        rep_index=rep_index, beta=beta, se=se, p_raw=p_raw,
        n_enrolled=n_enrolled, n_full=n_full, n_ess=n_ess_arr,
        failed=failed, fail_messages=fail_messages, rejected=rejected,
        stopped_at=stopped_at, sample_size=sample_size, stop_time=stop_time,
        fraction_adjustments=adjustments,
    )


def _run_chunk(args):
    config, indices = args
    return [run_replication(config, i) for i in indices]


def run_simulation(config: ScenarioConfig, return_reps: bool = False):
    """Run all replications (optionally in parallel) and aggregate.

    Results are independent of ``config.jobs``: replications use
    counter-based streams and aggregation folds them in index order.
    """
    indices = list(range(config.reps))
    if config.jobs <= 1:
        reps = [run_replication(config, i) for i in indices]
    else:
        chunk = max(1, math.ceil(config.reps / (config.jobs * 8)))
        chunks = [
            (config, indices[i:i + chunk])
            for i in range(0, len(indices), chunk)
        ]
        reps = []
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            for part in pool.map(_run_chunk, chunks):
                reps.extend(part)
    reps.sort(key=lambda r: r.rep_index)
    stats = aggregate(reps, config)
    if return_reps:
        return stats, reps
    return stats


@dataclass(eq=False)
class AggregateStats:
    """Operating characteristics across replications."""

    config: ScenarioConfig
    n_reps: int
    analysis_times: tuple[float, ...]
    estimators: tuple[str, ...]
    per_estimator: dict = field(default_factory=dict)
    failure_counts: dict = field(default_factory=dict)
    failure_rate_ok: bool = True
    fraction_adjustments: int = 0

    def to_json_dict(self) -> dict:
        out = {
            "scenario": self.config.scenario,
            "hypothesis": self.config.hypothesis,
            "reps": self.n_reps,
            "seed": self.config.seed,
            "true_beta": self.config.true_beta,
            "analysis_times": list(self.analysis_times),
            "estimators": list(self.estimators),
            "failure_counts": dict(self.failure_counts),
            "failure_rate_ok": self.failure_rate_ok,
            "fraction_adjustments": self.fraction_adjustments,
            "per_estimator": {},
        }
        for e, d in self.per_estimator.items():
            entry = {}
            for key, val in d.items():
                if isinstance(val, np.ndarray):
                    entry[key] = val.tolist()
                elif isinstance(val, dict):
                    entry[key] = {
                        kk: (vv.tolist() if isinstance(vv, np.ndarray) else vv)
                        for kk, vv in val.items()
                    }
                else:
                    entry[key] = val
            out["per_estimator"][e] = entry
        return out


def aggregate(reps: list, config: ScenarioConfig) -> AggregateStats:
    """Fold replication results into means, covariances, and stop rates."""
    if len(reps) < 2:
        raise DesignError("need at least 2 successful replications")
    estimators = config.estimators
    n_j = len(config.design.analysis_times)
    beta0 = config.true_beta
    n_max = config.design.n_max
    stats = AggregateStats(
        config=config, n_reps=len(reps),
        analysis_times=config.design.analysis_times,
        estimators=estimators,
    )
    stats.fraction_adjustments = sum(r.fraction_adjustments for r in reps)
    failed = np.array([r.failed for r in reps])  # (R, E)
    mse_tf = None
    tf_index = estimators.index("tf_only") if "tf_only" in estimators else None
    if tf_index is not None:
        ok = ~failed[:, tf_index]
        b = np.array([r.beta[tf_index] for r in reps])[ok]
        mse_tf = np.mean((b - beta0) ** 2, axis=0)

    for k, e in enumerate(estimators):
        ok = ~failed[:, k]
        n_ok = int(ok.sum())
        stats.failure_counts[e] = int((~ok).sum())
        if n_ok < 2:
            stats.per_estimator[e] = {"n_used": n_ok}
            continue
        b = np.array([r.beta[k] for r in reps])[ok]  # (R_ok, J)
        s = np.array([r.se[k] for r in reps])[ok]
        p = np.array([r.p_raw[k] for r in reps])[ok]
        nen = np.array([r.n_enrolled[k] for r in reps])[ok]
        nfull = np.array([r.n_full[k] for r in reps])[ok]
        mse = np.mean((b - beta0) ** 2, axis=0)
        cov = np.cov(b.T, ddof=1) if n_j > 1 else np.array([[np.var(b, ddof=1)]])
        var_diag = np.diag(cov)
        ii_dev = 0.0
        for t_idx in range(1, n_j):
            for s_idx in range(t_idx):
                if var_diag[t_idx] > 0:
                    dev = abs(cov[s_idx, t_idx] - var_diag[t_idx]) / var_diag[t_idx]
                    ii_dev = max(ii_dev, dev)
        entry = {
            "n_used": n_ok,
            "mean_beta": b.mean(axis=0),
            "sd_beta": b.std(axis=0, ddof=1),
            "mean_se": s.mean(axis=0),
            "mse": mse,
            "mse_ratio_vs_tf": (mse_tf / mse) if mse_tf is not None else None,
            "cov_beta": cov,
            "independent_increments_dev": float(ii_dev),
            "median_p": np.median(p, axis=0),
            "median_n_frac": np.median(nen / n_max, axis=0),
            "median_nA_frac": np.median(nfull / n_max, axis=0),
            "mc_se_beta_mean": b.std(axis=0, ddof=1) / math.sqrt(n_ok),
            "boundaries": {},
        }
        for kind in config.spendings:
            rej = np.array([r.rejected[kind][k] for r in reps])[ok]
            ss = np.array([r.sample_size[kind][k] for r in reps])[ok]
            st = np.array([r.stop_time[kind][k] for r in reps])[ok]
            p_rej = float(rej.mean())
            entry["boundaries"][kind] = {
                "p_reject": p_rej,
                "p_reject_mc_se": math.sqrt(max(p_rej * (1 - p_rej), 1e-12) / n_ok),
                "expected_ss": float(ss.mean()),
                "sd_ss": float(ss.std(ddof=1)),
                "expected_stop": float(st.mean()),
                "sd_stop": float(st.std(ddof=1)),
            }
        stats.per_estimator[e] = entry

    worst = max(stats.failure_counts.values()) if stats.failure_counts else 0
    stats.failure_rate_ok = worst < _FAILURE_RATE_LIMIT * len(reps)
    return stats
