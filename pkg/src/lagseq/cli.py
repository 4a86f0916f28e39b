"""Command-line front end: analyze, boundary, simulate.

Every command is deterministic given its inputs and flags; JSON reports
embed a manifest (command echo, input digests, seed, version, and a
timestamp, which is the only field that varies between identical runs).
Exit codes: 0 continue/success, 1 validation error, 2 numerical or
estimation failure, 3 stop-for-efficacy (analyze only).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .boundaries import compute_boundaries, decide
from .data import load_trial, snapshot_at
from .errors import (
    DataFormatError,
    DesignError,
    EstimationError,
    LagseqError,
    NumericalError,
)
from .estimators import analyze_snapshot
from .simulation import (
    ScenarioConfig,
    monitoring_fractions,
    run_simulation,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_STOP = 3

_ESTIMATOR_NAMES = {
    "tf": "tf_only", "ipw": "ipwcc", "aipw1": "aipw1", "aipw2": "aipw2",
}
_SPENDING_NAMES = {"obf": "obrien_fleming", "pocock": "pocock"}


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


def _manifest(command: str, args: argparse.Namespace, files: dict,
              seed=None) -> dict:
    return {
        "command": command,
        "arguments": {k: v for k, v in sorted(vars(args).items())
                      if k != "func"},
        "input_digests": {name: _digest(p) for name, p in files.items()
                          if p is not None},
        "seed": seed,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


def _emit_json(payload: dict, out_path):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _parse_fractions(text: str):
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip() != "")
    except ValueError:
        raise DesignError(f"fractions must be comma-separated numbers: {text!r}")
    return vals


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    records, design = load_trial(args.subjects, args.longitudinal, args.design)
    t = float(args.time)
    if t < design.max_followup:
        raise DesignError(
            f"analysis time {t} precedes the maximum follow-up period "
            f"{design.max_followup}; the first interim analysis cannot "
            "occur before fully followed subjects exist"
        )
    estimator = _ESTIMATOR_NAMES.get(args.estimator)
    if estimator is None:
        raise DesignError(f"unknown estimator {args.estimator!r}")
    snap = snapshot_at(records, t, design.max_followup)
    result = analyze_snapshot(
        snap, design.model, design.basis, design.n_max, (estimator,)
    )[estimator]

    priors = _parse_fractions(args.prior_fractions) if args.prior_fractions else ()
    if any(not 0 < p <= 1 for p in priors) or any(
        b <= a for a, b in zip(priors, priors[1:])
    ):
        raise DesignError(
            f"prior fractions must be strictly increasing in (0, 1]: {priors}"
        )
    inf_t = result.se ** -2
    if args.mi is not None:
        # information-based monitoring: fraction of the target information
        from .information import information_based_fraction

        _, p_now = information_based_fraction(result.se, args.mi)
    else:
        p_now = result.diagnostics.get("p_info_raw", result.p_info)
    raw = priors + (p_now,)
    fractions, adjusted = monitoring_fractions(np.array(raw))
    plan = compute_boundaries(
        fractions, design.alpha, design.sidedness, design.spending
    )
    decision = decide(plan, len(fractions), result.wald,
                      direction=design.direction)
    outcome = decision.decision
    if outcome == "final_accept" and t < design.t_end:
        # the plan ends at the current analysis, but the trial does not
        outcome = "continue"

    if args.dump_curves:
        from .censoring import dump_curve_csv, fit_censoring_km

        for a in (0, 1):
            dump_curve_csv(fit_censoring_km(snap, a),
                           f"{args.dump_curves}_arm{a}.csv")

    result_json = result.to_json_dict()
    if args.mi is not None:
        result_json["inf_t"] = inf_t
        result_json["mi"] = args.mi
    report = {
        "manifest": _manifest("analyze", args, {
            "subjects": args.subjects, "longitudinal": args.longitudinal,
            "design": args.design,
        }),
        "result": result_json,
        "monitoring": {
            "fractions": list(fractions),
            "fractions_adjusted": adjusted,
            "spending": design.spending,
            "alpha": design.alpha,
            "sidedness": design.sidedness,
            "direction": design.direction,
            "boundary": plan.boundaries[-1],
            "boundaries": list(plan.boundaries),
            "decision": outcome,
        },
    }
    _emit_json(report, args.out)
    print(
        f"{estimator} at t={t:.6g}: beta={result.beta_hat:.6g} "
        f"se={result.se:.6g} T={result.wald:.6g} p={result.p_info:.6g} "
        f"boundary={plan.boundaries[-1]:.6g} -> {outcome}",
        file=sys.stderr,
    )
    return EXIT_STOP if outcome == "stop_reject" else EXIT_OK


# ---------------------------------------------------------------------------
# boundary
# ---------------------------------------------------------------------------

def cmd_boundary(args) -> int:
    fractions = _parse_fractions(args.fractions)
    kind = _SPENDING_NAMES.get(args.spending)
    if kind is None:
        raise DesignError(f"unknown spending {args.spending!r}")
    sidedness = {1: "one", 2: "two"}.get(args.sided)
    if sidedness is None:
        raise DesignError("--sided must be 1 or 2")
    plan = compute_boundaries(fractions, args.alpha, sidedness, kind)
    rows = [
        {"j": j + 1, "t": plan.info_fractions[j],
         "spend": plan.spend_values[j], "boundary": plan.boundaries[j]}
        for j in range(plan.n_analyses)
    ]
    if args.format == "json":
        payload = {
            "manifest": _manifest("boundary", args, {}),
            "alpha": plan.alpha, "sidedness": plan.sidedness,
            "spending": plan.spending, "table": rows,
        }
        _emit_json(payload, args.out)
    else:
        fh = open(args.out, "w", newline="") if args.out else sys.stdout
        try:
            writer = csv.writer(fh)
            writer.writerow(["j", "t", "spend", "boundary"])
            for r in rows:
                writer.writerow([r["j"], f"{r['t']:.6g}",
                                 f"{r['spend']:.6g}", f"{r['boundary']:.6g}"])
        finally:
            if args.out:
                fh.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.spending == "both":
        spendings = ("obrien_fleming", "pocock")
    else:
        kind = _SPENDING_NAMES.get(args.spending)
        if kind is None:
            raise DesignError(f"unknown spending {args.spending!r}")
        spendings = (kind,)
    hypothesis = {"null": "null", "alt": "alternative",
                  "alternative": "alternative"}.get(args.hypothesis)
    if hypothesis is None:
        raise DesignError(f"unknown hypothesis {args.hypothesis!r}")
    jobs = args.jobs if args.jobs else int(os.environ.get("LAGSEQ_JOBS", "1"))
    config = ScenarioConfig(
        scenario=args.scenario, hypothesis=hypothesis, reps=args.reps,
        seed=args.seed, spendings=spendings, jobs=jobs,
    )
    stats, reps = run_simulation(config, return_reps=True)
    payload = {
        "manifest": _manifest("simulate", args, {}, seed=args.seed),
        "results": stats.to_json_dict(),
    }
    _emit_json(payload, args.out)
    if args.dump_reps:
        _dump_reps_csv(stats, reps, args.dump_reps)
    for e in stats.estimators:
        d = stats.per_estimator[e]
        if "boundaries" not in d:
            continue
        for kind, bd in d["boundaries"].items():
            print(
                f"{e}/{kind}: P(reject)={bd['p_reject']:.6g} "
                f"E(SS)={bd['expected_ss']:.6g} E(stop)={bd['expected_stop']:.6g}",
                file=sys.stderr,
            )
    if not stats.failure_rate_ok:
        print("estimator failure rate exceeded 0.1% of replications",
              file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _dump_reps_csv(stats, reps, path):
    times = stats.analysis_times
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rep", "estimator", "t", "beta", "se", "p_raw",
                         "n", "n_A"])
        for r in reps:
            for k, e in enumerate(stats.estimators):
                if r.failed[k]:
                    continue
                for j, t in enumerate(times):
                    writer.writerow([
                        r.rep_index, e, t, repr(float(r.beta[k, j])),
                        repr(float(r.se[k, j])), repr(float(r.p_raw[k, j])),
                        int(r.n_enrolled[k, j]), int(r.n_full[k, j]),
                    ])


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lagseq",
        description=(
            "Group-sequential interim monitoring for two-arm trials with "
            "time-lagged outcomes"
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="one interim analysis on trial data")
    p.add_argument("--subjects", required=True)
    p.add_argument("--longitudinal", default=None)
    p.add_argument("--design", required=True)
    p.add_argument("--time", required=True, type=float)
    p.add_argument("--estimator", required=True,
                   choices=sorted(_ESTIMATOR_NAMES))
    p.add_argument("--prior-fractions", default="",
                   help="comma-separated fractions of earlier analyses")
    p.add_argument("--mi", type=float, default=None,
                   help="maximum-information target; switches monitoring "
                        "to the information-based scale Inf(t)/MI")
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.add_argument("--dump-curves", default=None,
                   help="prefix for per-arm censoring-curve CSV dumps")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("boundary", help="alpha-spending stopping boundaries")
    p.add_argument("--fractions", required=True)
    p.add_argument("--alpha", type=float, default=0.025)
    p.add_argument("--sided", type=int, default=1)
    p.add_argument("--spending", default="obf", choices=["obf", "pocock"])
    p.add_argument("--format", default="csv", choices=["csv", "json"])
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("simulate", help="Monte Carlo operating characteristics")
    p.add_argument("--scenario", type=int, required=True, choices=[1, 2, 3])
    p.add_argument("--hypothesis", required=True,
                   choices=["null", "alt", "alternative"])
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--spending", default="obf",
                   choices=["obf", "pocock", "both"])
    p.add_argument("--jobs", type=int, default=0,
                   help="worker processes (default: LAGSEQ_JOBS or 1)")
    p.add_argument("--out", default=None, help="write results JSON here")
    p.add_argument("--dump-reps", default=None,
                   help="write per-replication estimates CSV here")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataFormatError, DesignError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (EstimationError, NumericalError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except LagseqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
