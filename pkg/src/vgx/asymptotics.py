"""High-level tail predictions and empirical comparison.

predict() assembles the leading-order approximation of

    p(u) = P{exists t in [0, T]: X(t) > u b}

from the model's local structure: a tail probability at the localisation
point, a power of u from the time rescaling, and a regime constant
(generalized Pickands, drifted Pickands, or a closed form).  compare()
runs the importance-sampled estimator against the prediction over a ladder
of thresholds and reports the ratio trend.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma

import numpy as np
from scipy.integrate import quad

from .constants import (EstimateWithError, c_w_constant, pickands_limit,
                        piterbarg_limit, skew_constant)
from .models import LocalStructure, Regime, local_structure
from .qp import SymmetricPD
from .tails import exceedance_mc, mvn_tail

__all__ = [
    "classify",
    "predict",
    "compare",
    "AsymptoticPrediction",
    "CompareReport",
    "sub_time_factor",
    "sub_time_factor_printed",
    "sub_time_factor_oracle",
    "ConstantBudget",
]


def classify(model, b) -> LocalStructure:
    """Regime classification; alias for the model's local structure."""
    return local_structure(model, b)


def sub_time_factor(beta: float, tau_w: float) -> float:
    """Time-rescaling factor of the boundary regime with beta > alpha:

        integral_0^inf exp(-tau_w s^beta) ds = Gamma(1 + 1/beta) tau_w^(-1/beta).
    """
    return gamma(1.0 + 1.0 / beta) * tau_w ** (-1.0 / beta)


def sub_time_factor_printed(beta: float, tau_w: float) -> float:
    """Variant with the exponent on tau_w as sometimes printed, -beta.

    Emitted for side-by-side comparison only; sub_time_factor is the branch
    consistent with the defining single integral.
    """
    return gamma(1.0 / beta + 1.0) * tau_w ** (-beta)


def sub_time_factor_oracle(beta: float, tau_w: float) -> float:
    """Direct quadrature of the defining integral; disambiguation oracle."""
    val, _ = quad(lambda s: np.exp(-tau_w * s ** beta), 0.0, np.inf)
    return val


@dataclass(frozen=True)
class ConstantBudget:
    """Monte Carlo budget for estimating the regime constant."""

    lambdas: tuple = (1.0, 2.0, 4.0)
    h: float = 0.02
    N: int = 100_000
    seed: int = 0
    workers: int = 1


@dataclass(frozen=True)
class AsymptoticPrediction:
    u: float
    regime: str
    value: float
    tail: float
    u_power: float
    constant: float
    constant_stderr: float
    constant_kind: str
    alt_value: float = np.nan
    details: dict = field(default_factory=dict)


def _regime_constant(ls: LocalStructure, budget: ConstantBudget,
                     horizon: float = None):
    """(constant, stderr, kind) for the classified regime.

    Boundary localisation (t0 at the right endpoint) uses the time-reversed
    expansion matrix (one-sided approach from the left); an interior t0
    contributes both one-sided constants.
    """
    if ls.regime == Regime.STATIONARY_SKEW:
        return skew_constant(ls.w, ls.V), 0.0, "closed_skew"
    if ls.regime == Regime.SUP:
        c = c_w_constant(ls.w, ls.Xi, ls.A, ls.qp.index_I, ls.tau_w)
        return c, 0.0, "closed_boundary"
    interior = (horizon is not None and 0.0 < ls.t0 < horizon
                and ls.regime in (Regime.SUB, Regime.CRITICAL))
    if ls.regime == Regime.CRITICAL:
        est = piterbarg_limit(ls.alpha, ls.V_w, ls.W_w,
                              lambdas=budget.lambdas, h=budget.h, N=budget.N,
                              seed=budget.seed, workers=budget.workers,
                              side="two" if interior else "left")
        return est.value, est.stderr, "mc_drifted"
    if ls.regime == Regime.SUB:
        pl = pickands_limit(ls.alpha, ls.V_w.T, lambdas=budget.lambdas,
                            h=budget.h, N=budget.N, seed=budget.seed,
                            workers=budget.workers)
        if not interior:
            return pl.value, pl.stderr, "mc_pickands"
        pr = pickands_limit(ls.alpha, ls.V_w, lambdas=budget.lambdas,
                            h=budget.h, N=budget.N, seed=budget.seed + 1,
                            workers=budget.workers)
        return (pl.value + pr.value,
                float(np.hypot(pl.stderr, pr.stderr)), "mc_pickands_two_sided")
    pl = pickands_limit(ls.alpha, ls.V_w, lambdas=budget.lambdas,
                        h=budget.h, N=budget.N, seed=budget.seed,
                        workers=budget.workers)
    return pl.value, pl.stderr, "mc_pickands"


def predict(model, b, u: float, budget: ConstantBudget = ConstantBudget(),
            constant_override: float = None) -> AsymptoticPrediction:
    """Leading-order approximation of the exceedance probability at level u.

    constant_override substitutes a precomputed regime constant (useful
    when sweeping u: the constant does not depend on u).
    """
    b = np.asarray(b, dtype=float)
    ls = local_structure(model, b)
    if ls.regime in (Regime.STATIONARY, Regime.STATIONARY_SKEW):
        sig = SymmetricPD(model.sigma(0.0))
        horizon = model.horizon
        u_power = 2.0 / ls.alpha
        extra = horizon
    else:
        sig = SymmetricPD(model.sigma(ls.t0))
        if ls.regime == Regime.SUB:
            u_power = 2.0 / ls.alpha - 2.0 / ls.beta
        else:
            u_power = 0.0
        extra = 1.0
    tail = mvn_tail(sig, b, u).value

    if constant_override is not None:
        const, cse, kind = float(constant_override), 0.0, "override"
    else:
        const, cse, kind = _regime_constant(ls, budget, horizon=model.horizon)

    alt = np.nan
    if ls.regime == Regime.SUB:
        factor = sub_time_factor(ls.beta, ls.tau_w)
        alt_factor = sub_time_factor_printed(ls.beta, ls.tau_w)
        value = extra * const * factor * u ** u_power * tail
        alt = extra * const * alt_factor * u ** u_power * tail
        details = {"time_factor": factor, "time_factor_printed": alt_factor}
    else:
        value = extra * const * u ** u_power * tail
        details = {}
    details.update({"sigma_b_sq": 1.0 / ls.qp.value, "horizon_factor": extra})
    return AsymptoticPrediction(
        u=u, regime=ls.regime, value=float(value), tail=float(tail),
        u_power=u_power, constant=const, constant_stderr=cse,
        constant_kind=kind, alt_value=float(alt), details=details)


@dataclass(frozen=True)
class CompareRow:
    u: float
    empirical: float
    empirical_stderr: float
    predicted: float
    ratio: float
    ratio_stderr: float


@dataclass(frozen=True)
class CompareReport:
    rows: tuple
    trend_intercept: float
    trend_slope: float  # fitted ratio ~ intercept + slope / u
    constant: float = np.nan
    constant_stderr: float = np.nan
    regime: str = ""
    u_power: float = np.nan

    @property
    def flattening(self) -> bool:
        """|ratio - 1| at the largest u no worse than at the smallest."""
        first, last = self.rows[0], self.rows[-1]
        slack = 2.0 * (first.ratio_stderr + last.ratio_stderr)
        return abs(last.ratio - 1.0) <= abs(first.ratio - 1.0) + slack


def compare(model, b, us, N: int = 100_000, grid_points: int = 200,
            seed: int = 0, workers: int = 1,
            budget: ConstantBudget = ConstantBudget()) -> CompareReport:
    """Empirical exceedance vs prediction over an increasing u ladder."""
    b = np.asarray(b, dtype=float)
    ls = local_structure(model, b)
    T = model.horizon
    if model.stationary:
        times = np.linspace(0.0, T, grid_points + 1)
    else:
        times = np.linspace(T / grid_points, T, grid_points)
    const, cse, _ = _regime_constant(ls, budget, horizon=model.horizon)
    rows = []
    for k, u in enumerate(us):
        n_u = int(min(N, 1_000_000 / u))
        emp = exceedance_mc(model, b, float(u), times, N=n_u, seed=seed,
                            stream=k, workers=workers)
        pred = predict(model, b, float(u), budget=budget,
                       constant_override=const)
        ratio = emp.value / pred.value if pred.value > 0 else np.inf
        rse = ratio * np.sqrt(
            (emp.stderr / emp.value) ** 2 + (cse / const) ** 2
        ) if emp.value > 0 and const > 0 else np.inf
        rows.append(CompareRow(u=float(u), empirical=emp.value,
                               empirical_stderr=emp.stderr,
                               predicted=pred.value, ratio=float(ratio),
                               ratio_stderr=float(rse)))
    if len(rows) < 2:
        slope, intercept = 0.0, rows[0].ratio
    else:
        x = np.array([1.0 / r.u for r in rows])
        y = np.array([r.ratio for r in rows])
        wts = np.array([1.0 / max(r.ratio_stderr, 1e-12) ** 2 for r in rows])
        slope, intercept = np.polyfit(x, y, 1, w=np.sqrt(wts))
    u_power = (2.0 / ls.alpha if ls.regime in (Regime.STATIONARY,
                                               Regime.STATIONARY_SKEW)
               else (2.0 / ls.alpha - 2.0 / ls.beta
                     if ls.regime == Regime.SUB else 0.0))
    return CompareReport(rows=tuple(rows), trend_intercept=float(intercept),
                         trend_slope=float(slope), constant=float(const),
                         constant_stderr=float(cse), regime=ls.regime,
                         u_power=u_power)
