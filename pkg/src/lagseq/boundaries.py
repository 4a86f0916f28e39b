"""Alpha-spending stopping boundaries for group-sequential monitoring.

Critical values are obtained by the classical recursive numerical
integration for a standard Gaussian statistic sequence with the
independent-increments covariance cov(Z_i, Z_j) = sqrt(t_i / t_j).
The recursion tracks the sub-density of the non-stopped statistic on
the Brownian-motion scale (S_j = Z_j * sqrt(t_j)), where the transition
between analyses is a plain Gaussian convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import ndtr, ndtri

from .errors import DesignError, NumericalError

__all__ = [
    "BoundaryPlan",
    "SequentialDecision",
    "spending_value",
    "compute_boundaries",
    "decide",
]

SPENDING_KINDS = ("obrien_fleming", "pocock")

# Default integration grid: the Brownian-scale span covers at least +-8
# statistic standard deviations at every information fraction <= 1.
GRID_POINTS = 4001
GRID_SPAN = 8.0
_TAIL_TOL = 1e-8
_ZERO_INCREMENT = 1e-14


def norm_cdf(x):
    """Standard normal CDF (machine accurate, scipy ndtr)."""
    return ndtr(x)


def norm_ppf(p):
    """Standard normal quantile (machine accurate, scipy ndtri)."""
    return ndtri(p)


def spending_value(kind: str, alpha: float, t: float) -> float:
    """Cumulative alpha spent at information fraction ``t``.

    O'Brien-Fleming type: ``2 * (1 - Phi(z_{alpha/2} / sqrt(t)))``;
    Pocock type: ``alpha * ln(1 + (e - 1) * t)``.  Both equal ``alpha``
    at ``t = 1``.
    """
    if not 0.0 < t <= 1.0:
        raise DesignError(f"information fraction must be in (0, 1], got {t}")
    if not 0.0 < alpha < 1.0:
        raise DesignError(f"alpha must be in (0, 1), got {alpha}")
    if kind == "obrien_fleming":
        z = norm_ppf(1.0 - alpha / 2.0)
        # upper tail computed directly to avoid cancellation at small t
        return float(2.0 * norm_cdf(-z / math.sqrt(t)))
    if kind == "pocock":
        return float(alpha * math.log(1.0 + (math.e - 1.0) * t))
    raise DesignError(f"unknown spending kind: {kind!r}")


@dataclass(frozen=True, eq=False)
class BoundaryPlan:
    """Stopping boundaries for a sequence of information fractions."""

    info_fractions: tuple[float, ...]
    alpha: float
    sidedness: str  # "one" or "two"
    spending: str
    spend_values: tuple[float, ...]
    increments: tuple[float, ...]
    boundaries: tuple[float, ...]
    crossing_probs: tuple[float, ...]  # realized per-analysis crossing mass
    grid_points: int = GRID_POINTS

    @property
    def n_analyses(self) -> int:
        return len(self.info_fractions)


@dataclass(frozen=True)
class SequentialDecision:
    """Stop/continue decision for one analysis of a monitored trial."""

    analysis: int  # 1-based index into the plan
    statistic: float
    boundary: float
    decision: str  # "stop_reject" | "continue" | "final_accept"


def _validate_fractions(fractions) -> tuple[float, ...]:
    fr = tuple(float(t) for t in fractions)
    if len(fr) == 0:
        raise DesignError("at least one information fraction is required")
    if any(not 0.0 < t <= 1.0 for t in fr):
        raise DesignError(f"information fractions must lie in (0, 1]: {fr}")
    if any(b <= a for a, b in zip(fr, fr[1:])):
        raise DesignError(f"information fractions must be strictly increasing: {fr}")
    return fr


class _SubDensity:
    """Trapezoid representation of the non-stopped statistic's sub-density."""

    def __init__(self, x: np.ndarray, g: np.ndarray):
        self.x = x
        self.h = float(x[1] - x[0])
        self.g = g
        trap = self.h * (g[:-1] + g[1:]) / 2.0
        self._suffix = np.concatenate([np.cumsum(trap[::-1])[::-1], [0.0]])

    def upper_tail(self, c: float) -> float:
        """Integral over [c, x_max], linear interpolation within the cell."""
        x, g = self.x, self.g
        if c <= x[0]:
            return float(self._suffix[0])
        if c >= x[-1]:
            return 0.0
        k = int(np.searchsorted(x, c, side="right")) - 1
        frac = (c - x[k]) / self.h
        gc = g[k] + frac * (g[k + 1] - g[k])
        partial = (x[k + 1] - c) * (gc + g[k + 1]) / 2.0
        return float(partial + self._suffix[k + 1])

    def lower_tail(self, c: float) -> float:
        """Integral over [x_min, c]."""
        return float(self._suffix[0]) - self.upper_tail(c)


def _clip_upper(x: np.ndarray, g: np.ndarray, c: float) -> np.ndarray:
    """Zero the density at and above ``c``, preserving the retained mass.

    The ordinate of the last retained grid point is adjusted so that the
    trapezoid mass below ``c`` matches the linearly interpolated sub-cell
    integral exactly.
    """
    out = g.copy()
    if c >= x[-1]:
        return out
    if c <= x[0]:
        out[:] = 0.0
        return out
    h = float(x[1] - x[0])
    k = int(np.searchsorted(x, c, side="right")) - 1
    frac = (c - x[k]) / h
    gc = g[k] + frac * (g[k + 1] - g[k])
    kept = (c - x[k]) * (g[k] + gc) / 2.0  # exact mass in [x_k, c]
    out[k + 1 :] = 0.0
    # adjust the last retained ordinate so the trapezoid mass over
    # [x_{k-1}, x_{k+1}] equals the exact retained mass over [x_{k-1}, c]
    if k == 0:
        out[0] = 2.0 * kept / h
    else:
        out[k] = g[k] / 2.0 + kept / h
    return out


def _clip_lower(x: np.ndarray, g: np.ndarray, c: float) -> np.ndarray:
    """Zero the density at and below ``c`` (mirror of :func:`_clip_upper`)."""
    return _clip_upper(-x[::-1], g[::-1], -c)[::-1]


def _propagate(x: np.ndarray, g: np.ndarray, dt: float) -> np.ndarray:
    """Convolve the sub-density with a Gaussian increment of variance dt."""
    h = float(x[1] - x[0])
    sd = math.sqrt(dt)
    half = min(float(x[-1] - x[0]), 10.0 * sd + 5.0 * h)
    m = int(math.ceil(half / h))
    off = np.arange(-m, m + 1) * h
    kern = np.exp(-0.5 * (off / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))
    out = fftconvolve(g, kern * h, mode="same")
    np.maximum(out, 0.0, out=out)
    return out


def compute_boundaries(
    fractions,
    alpha: float,
    sidedness: str = "one",
    kind: str = "obrien_fleming",
    grid_points: int = GRID_POINTS,
) -> BoundaryPlan:
    """Solve sequentially for critical values matching the spending increments.

    At analysis j the boundary b_j satisfies
    ``pr(no crossing before j, cross at j | H0) = alpha*(t_j) - alpha*(t_{j-1})``
    under the canonical independent-increments Gaussian law.  Two-sided
    plans use symmetric boundaries on ``|Z|``.  An increment of zero
    yields an infinite boundary (no alpha left to spend).
    """
    fr = _validate_fractions(fractions)
    if sidedness not in ("one", "two"):
        raise DesignError(f"sidedness must be 'one' or 'two', got {sidedness!r}")
    spends = tuple(spending_value(kind, alpha, t) for t in fr)
    increments = tuple(max(0.0, s - p) for s, p in zip(spends, (0.0,) + spends[:-1]))

    try:
        bounds, crossed = _solve_plan(fr, increments, sidedness, grid_points)
    except NumericalError:
        # one automatic refinement with a doubled grid, then give up
        bounds, crossed = _solve_plan(fr, increments, sidedness, 2 * grid_points - 1)

    return BoundaryPlan(
        info_fractions=fr,
        alpha=alpha,
        sidedness=sidedness,
        spending=kind,
        spend_values=spends,
        increments=increments,
        boundaries=tuple(bounds),
        crossing_probs=tuple(crossed),
        grid_points=grid_points,
    )


def _solve_plan(fr, increments, sidedness, grid_points):
    x = np.linspace(-GRID_SPAN, GRID_SPAN, grid_points)
    sd1 = math.sqrt(fr[0])
    g = np.exp(-0.5 * (x / sd1) ** 2) / (sd1 * math.sqrt(2.0 * math.pi))

    bounds: list[float] = []
    crossed: list[float] = []
    for j, (t, pi_j) in enumerate(zip(fr, increments)):
        scale = math.sqrt(t)
        if pi_j <= _ZERO_INCREMENT:
            bounds.append(math.inf)
            crossed.append(0.0)
        else:
            dens = _SubDensity(x, g)

            def tail(b: float) -> float:
                c = b * scale
                mass = dens.upper_tail(c)
                if sidedness == "two":
                    mass += dens.lower_tail(-c)
                return mass

            lo, hi = 0.0, GRID_SPAN / scale
            if tail(hi) > pi_j:
                raise NumericalError("integration grid too narrow for target spend")
            if tail(lo) < pi_j:
                raise NumericalError("spending increment exceeds available mass")
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if tail(mid) >= pi_j:
                    lo = mid
                else:
                    hi = mid
                if hi - lo < 1e-13 * max(1.0, hi):
                    break
            b = 0.5 * (lo + hi)
            realized = tail(b)
            if abs(realized - pi_j) > max(_TAIL_TOL, 1e-6 * pi_j):
                raise NumericalError(f"boundary root failed at analysis {j + 1}")
            bounds.append(b)
            crossed.append(realized)
            c = b * scale
            g = _clip_upper(x, g, c)
            if sidedness == "two":
                g = _clip_lower(x, g, -c)
        if j + 1 < len(fr):
            g = _propagate(x, g, fr[j + 1] - t)
    return bounds, crossed


def decide(
    plan: BoundaryPlan, j: int, statistic: float, direction: int = 1
) -> SequentialDecision:
    """Apply the plan's boundary at analysis ``j`` (1-based) to a statistic.

    One-sided plans stop when ``direction * statistic >= b_j``; two-sided
    plans stop when ``|statistic| >= b_j``.  Equality stops.  At the final
    analysis a non-crossing yields ``final_accept``.
    """
    if not 1 <= j <= plan.n_analyses:
        raise DesignError(
            f"analysis index {j} out of order for a {plan.n_analyses}-analysis plan"
        )
    b = plan.boundaries[j - 1]
    if plan.sidedness == "two":
        hit = abs(statistic) >= b
    else:
        hit = direction * statistic >= b
    if hit:
        outcome = "stop_reject"
    elif j == plan.n_analyses:
        outcome = "final_accept"
    else:
        outcome = "continue"
    return SequentialDecision(
        analysis=j, statistic=float(statistic), boundary=float(b), decision=outcome
    )
