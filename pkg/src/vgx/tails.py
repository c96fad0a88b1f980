"""Multivariate normal tail probabilities and path exceedance estimators.

Three layers:

* mvn_tail            -- P{X > u b} for X ~ N(0, Sigma), randomized-QMC
                         sequential conditioning (separation of variables);
* mvn_tail_asymptotic -- the u -> infinity expansion driven by the
                         lower-bound QP (active set I, dual w);
* exceedance_mc       -- P{exists t on a grid: X(t) > u b} by plain or
                         exponentially tilted Monte Carlo on sampled paths.

A Borell-type upper bound exp(-(u - mu)^2 / (2 sigma_b^2)) serves as a
cheap sanity envelope for the simulated estimates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm
from scipy.stats import qmc

from .qp import SymmetricPD, solve_pi_sigma
from .models import sigma_b_sq
from .simulate import (GridSpec, build_grid_cov, factor_psd, fsum_merge,
                       map_blocks, block_normals, _philox)

__all__ = [
    "TailQuery",
    "mvn_tail",
    "mvn_tail_asymptotic",
    "exceedance_mc",
    "ExceedanceEstimate",
    "borell_tis_bound",
    "estimate_mu",
]


@dataclass(frozen=True)
class TailQuery:
    sigma: SymmetricPD
    b: np.ndarray
    u: float

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        if b.size != self.sigma.dim:
            raise ValueError("dimension mismatch")
        if self.u < 0:
            raise ValueError("u must be nonnegative")
        object.__setattr__(self, "b", b)

    @property
    def lower(self) -> np.ndarray:
        return self.u * self.b


@dataclass(frozen=True)
class TailEstimate:
    value: float
    stderr: float


def mvn_tail(sigma, b, u: float, n_qmc: int = 4096, shifts: int = 64,
             seed: int = 0) -> TailEstimate:
    """P{X > u b} by sequential conditioning along a Cholesky ordering.

    Variables are visited hardest constraint first (largest standardized
    threshold).  Each of `shifts` independently scrambled Sobol sequences
    gives one estimate; the spread across scrambles is the reported error.
    """
    if not isinstance(sigma, SymmetricPD):
        sigma = SymmetricPD(sigma)
    q = TailQuery(sigma, b, u)
    S = sigma.entries
    d = sigma.dim
    lo = q.lower
    order = np.argsort(-lo / np.sqrt(np.diag(S)))
    Sp = S[np.ix_(order, order)]
    lp = lo[order]
    L = np.linalg.cholesky(Sp)

    if d == 1:
        return TailEstimate(float(norm.sf(lp[0] / L[0, 0])), 0.0)

    rng = np.random.default_rng(seed)
    ests = np.empty(shifts)
    for s in range(shifts):
        sob = qmc.Sobol(d - 1, scramble=True, rng=rng)
        pts = sob.random(n_qmc)
        prob = np.full(n_qmc, 1.0)
        y = np.zeros((n_qmc, d))
        for i in range(d):
            cond = (lp[i] - y[:, :i] @ L[i, :i]) / L[i, i]
            e = norm.sf(cond)
            prob *= e
            if i < d - 1:
                # sample the conditional truncated normal via its tail mass
                tail = e * (1.0 - pts[:, i])
                y[:, i] = norm.isf(np.clip(tail, 1e-320, 1.0))
                y[prob == 0.0, i] = 0.0
        ests[s] = prob.mean()
    return TailEstimate(float(ests.mean()),
                        float(ests.std(ddof=1) / np.sqrt(shifts)))


def mvn_tail_asymptotic(sigma, b, u: float) -> float:
    """Leading-order expansion of P{X > u b} as u grows.

    With QP solution (b~, I, J, w), m = |I| and L the indices of J where
    the relaxed solution still touches the constraint,

        P ~ u^-m phi_Sigma(u b~) (prod_{i in I} w_i)^-1
            * integral over x_J of exp(-x_J' (Sigma^-1)_JJ x_J / 2) 1{x_L < 0}.
    """
    if not isinstance(sigma, SymmetricPD):
        sigma = SymmetricPD(sigma)
    b = np.asarray(b, dtype=float)
    S = sigma.entries
    d = sigma.dim
    sol = solve_pi_sigma(sigma, b)
    I = list(sol.index_I)
    J = list(sol.index_J)
    m = len(I)

    Sinv = np.linalg.inv(S)
    dens = ((2 * np.pi) ** (-d / 2) / np.sqrt(np.linalg.det(S))
            * np.exp(-0.5 * u * u * sol.value))
    lead = u ** (-m) * dens / np.prod(sol.w[I])
    if not J:
        return float(lead)

    K = Sinv[np.ix_(J, J)]
    gauss = (2 * np.pi) ** (len(J) / 2) / np.sqrt(np.linalg.det(K))
    slack = sol.b_tilde[J] - b[J]
    tol = 1e-9 * max(np.abs(b).max(), 1.0)
    Lset = [k for k, s in enumerate(slack) if s <= tol]
    if not Lset:
        return float(lead * gauss)
    # orthant factor: P{G_L < 0} for G ~ N(0, K^-1) restricted to L
    C = np.linalg.inv(K)[np.ix_(Lset, Lset)]
    if len(Lset) == 1:
        orth = 0.5
    else:
        orth = mvn_tail(SymmetricPD(C), np.full(len(Lset), 1.0),
                        u=1e-9).value  # P{G > ~0} = P{G < 0} by symmetry
    return float(lead * gauss * orth)


@dataclass(frozen=True)
class ExceedanceEstimate:
    value: float
    stderr: float
    hits: int
    ess: float
    u: float
    warnings: tuple = ()


def _tilt_data(M: np.ndarray, grid: GridSpec, sigma_t0: SymmetricPD, b,
               u: float, idx_t0: int):
    """Mean shift and log-weight pieces for the exponential tilt at t0."""
    d = grid.dim
    sol = solve_pi_sigma(sigma_t0, b)
    theta = u * np.linalg.solve(sigma_t0.entries, sol.b_tilde)
    cols = slice(idx_t0 * d, (idx_t0 + 1) * d)
    shift = M[:, cols] @ theta  # u * R(t, t0) Sigma(t0)^-1 b~, flattened
    log_norm = 0.5 * float(theta @ sigma_t0.entries @ theta)
    return theta, shift, log_norm, cols


def exceedance_mc(model, b, u: float, times, N: int, seed: int = 0,
                  stream: int = 0, workers: int = 1,
                  importance: bool = True) -> ExceedanceEstimate:
    """Estimate P{exists t on the grid: X(t) > u b} from sampled paths.

    With importance=True paths are exponentially tilted so the mean sits on
    the threshold.  Non-stationary models tilt at the grid point of maximal
    generalized variance; stationary models use an equal mixture of tilts
    over all grid points (crossings are not localised there).  Weights are
    exact, so the estimator stays unbiased for the grid event.
    """
    b = np.asarray(b, dtype=float)
    times = np.asarray(times, dtype=float)
    d = b.size
    grid = GridSpec(times=times, dim=d)
    M = build_grid_cov(model.cmf, grid)
    L = factor_psd(M).lower
    thresh = u * b
    n = times.size
    mixture = importance and model.stationary

    if importance:
        vars_b = [sigma_b_sq(model, b, float(t)) for t in times]
        idx0 = int(np.argmax(vars_b))
        sig0 = SymmetricPD(model.sigma(float(times[idx0])))
        theta, shift0, log_norm, cols = _tilt_data(M, grid, sig0, b, u, idx0)
        if mixture:
            # one mean-shift column per mixture component (tilt location)
            theta_full = np.zeros(n * d)
            shifts = np.empty((n, n * d))
            for k in range(n):
                theta_full[:] = 0.0
                theta_full[k * d:(k + 1) * d] = theta
                shifts[k] = M @ theta_full

    def one_block(block: int, count: int):
        z = block_normals(seed, stream, block, (count, n * d))
        flat = z @ L.T
        if mixture:
            picks = _philox(seed, stream + (1 << 32), block).integers(n, size=count)
            flat = flat + shifts[picks]
            # w = p/q with q the equal mixture of the n tilted densities
            scores = flat.reshape(count, n, d) @ theta  # theta' x_{t_j}
            mx = scores.max(axis=1)
            lse = mx + np.log(np.exp(scores - mx[:, None]).sum(axis=1) / n)
            logw = log_norm - lse
        elif importance:
            flat = flat + shift0
            logw = -flat[:, cols] @ theta + log_norm
        paths = flat.reshape(count, n, d)
        hit = np.any(np.all(paths >= thresh, axis=2), axis=1)
        if importance:
            w = np.where(hit, np.exp(logw), 0.0)
        else:
            w = hit.astype(float)
        wsum = float(w.sum())
        return wsum, float((w * w).sum()), int(hit.sum())

    parts = map_blocks(one_block, N, workers=workers)
    tot = fsum_merge(p[0] for p in parts)
    tot2 = fsum_merge(p[1] for p in parts)
    hits = sum(p[2] for p in parts)
    mean = tot / N
    var = max(tot2 / N - mean * mean, 0.0)
    stderr = float(np.sqrt(var / max(N - 1, 1)))
    ess = tot * tot / tot2 if tot2 > 0 else 0.0
    warns = ()
    if importance and 0 < ess < 100:
        warns = (f"effective sample size {ess:.1f} < 100; "
                 "estimate may be unstable",)
    elif hits == 0:
        warns = ("no threshold crossings observed",)
    return ExceedanceEstimate(value=float(mean), stderr=stderr, hits=hits,
                              ess=float(ess), u=u, warnings=warns)


def estimate_mu(model, b, times, N: int = 10_000, seed: int = 0,
                workers: int = 1) -> float:
    """E sup over the grid of the scalar projection w'X(t) / (w'b).

    This is the centering constant of the concentration bound: the
    projected field has variance sigma_b^2 at the localisation point and
    its supremum crosses u exactly when the vector event is on the verge
    of happening along the minimising direction.
    """
    b = np.asarray(b, dtype=float)
    times = np.asarray(times, dtype=float)
    d = b.size
    grid = GridSpec(times=times, dim=d)
    vars_b = [sigma_b_sq(model, b, float(t)) for t in times]
    idx0 = int(np.argmax(vars_b))
    sig0 = SymmetricPD(model.sigma(float(times[idx0])))
    sol = solve_pi_sigma(sig0, b)
    z = np.linalg.solve(sig0.entries, sol.b_tilde)
    z = z / float(z @ b)
    M = build_grid_cov(model.cmf, grid)
    L = factor_psd(M).lower
    n = times.size

    def one_block(block: int, count: int):
        zn = block_normals(seed, 7, block, (count, n * d))
        paths = (zn @ L.T).reshape(count, n, d)
        proj = paths @ z
        return float(proj.max(axis=1).sum())

    parts = map_blocks(one_block, N, workers=workers)
    return fsum_merge(parts) / N


def borell_tis_bound(u: float, mu: float, sigma_b2: float) -> float:
    """Concentration envelope exp(-(u - mu)^2 / (2 sigma_b^2)), u > mu."""
    if u <= mu:
        raise ValueError("bound requires u above the expected supremum")
    if sigma_b2 <= 0:
        raise ValueError("sigma_b^2 must be positive")
    return float(np.exp(-((u - mu) ** 2) / (2.0 * sigma_b2)))
