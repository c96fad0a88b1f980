"""Lower-bound-constrained quadratic program behind the tail constants.

For a positive definite Sigma and a threshold vector b with at least one
positive component, minimise x' Sigma^-1 x subject to x >= b.  The solution
is characterised by a unique active index set I: the solution agrees with b
on I, the dual vector w = Sigma^-1 b_tilde is strictly positive on I and
exactly zero on the complement J.  Everything downstream (generalized
variance, tail prefactors, regime constants) is parameterised by
(b_tilde, I, J, w, value).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NotPositiveDefiniteError

__all__ = [
    "SymmetricPD",
    "QPSolution",
    "solve_pi_sigma",
    "brute_force_pi_sigma",
    "dual_certificate",
]

_SYM_RTOL = 1e-12
_FEAS_RTOL = 1e-9
_MAX_FAST_DIM = 12


@dataclass(frozen=True)
class SymmetricPD:
    """A validated symmetric positive definite matrix."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise ValueError(f"expected a square matrix, got shape {m.shape}")
        scale = max(np.abs(m).max(), 1.0)
        if np.abs(m - m.T).max() > _SYM_RTOL * scale:
            raise NotPositiveDefiniteError("matrix is not symmetric")
        m = 0.5 * (m + m.T)
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError(
                "matrix is not positive definite"
            ) from None
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class QPSolution:
    """Solution of Pi_Sigma(b): point, active/inactive sets, dual, value."""

    b_tilde: np.ndarray
    index_I: tuple  # 0-based, sorted
    index_J: tuple
    w: np.ndarray
    value: float


def _check_b(b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.ndim != 1:
        raise ValueError("b must be a vector")
    if not np.any(b > 0):
        raise ValueError("b must have at least one positive component")
    return b


def _candidate(sigma: np.ndarray, b: np.ndarray, idx: tuple):
    """Solve the active-set system for candidate I = idx.

    Returns (b_tilde, w, value); feasibility is not checked here.
    """
    d = sigma.shape[0]
    I = np.asarray(idx, dtype=int)
    J = np.setdiff1d(np.arange(d), I)
    c, low = cho_factor(sigma[np.ix_(I, I)])
    wI = cho_solve((c, low), b[I])
    b_tilde = np.empty(d)
    b_tilde[I] = b[I]
    if J.size:
        b_tilde[J] = sigma[np.ix_(J, I)] @ wI
    w = np.zeros(d)
    w[I] = wI
    value = float(b[I] @ wI)
    return b_tilde, w, value


def _feasible(b: np.ndarray, b_tilde: np.ndarray, w: np.ndarray,
              idx: tuple, tol: float) -> bool:
    I = np.asarray(idx, dtype=int)
    mask = np.zeros(b.size, dtype=bool)
    mask[I] = True
    if np.any(w[I] <= tol):
        return False
    return bool(np.all(b_tilde[~mask] >= b[~mask] - tol))


def _pick(cands: list) -> QPSolution:
    """Deterministic choice among feasible candidates.

    Minimal value wins; near-ties (within the feasibility tolerance,
    relative) resolve to smaller |I|, then lexicographically smallest I.
    """
    vmin = min(c[0] for c in cands)
    cutoff = vmin + _FEAS_RTOL * max(abs(vmin), 1.0)
    tied = [c for c in cands if c[0] <= cutoff]
    tied.sort(key=lambda c: (len(c[1]), c[1]))
    value, idx, b_tilde, w = tied[0]
    d = b_tilde.size
    J = tuple(i for i in range(d) if i not in set(idx))
    return QPSolution(b_tilde=b_tilde, index_I=tuple(idx), index_J=J,
                      w=w, value=value)


def solve_pi_sigma(sigma: SymmetricPD, b) -> QPSolution:
    """Solve Pi_Sigma(b) by active-set enumeration, cheapest candidate first.

    Candidates are ordered by increasing quadratic value; the first feasible
    one is optimal, so the scan exits early.  Dimension capped at 12 --
    larger instances are outside this library's domain.
    """
    if not isinstance(sigma, SymmetricPD):
        sigma = SymmetricPD(sigma)
    b = _check_b(b)
    d = sigma.dim
    if b.size != d:
        raise ValueError("dimension mismatch between sigma and b")
    if d > _MAX_FAST_DIM:
        raise ValueError(f"dimension {d} exceeds the supported cap {_MAX_FAST_DIM}")
    m = sigma.entries
    tol = _FEAS_RTOL * max(np.abs(b).max(), 1.0)

    cands = []
    for r in range(1, d + 1):
        for idx in combinations(range(d), r):
            b_tilde, w, value = _candidate(m, b, idx)
            cands.append((value, idx, b_tilde, w))
    cands.sort(key=lambda c: c[0])

    feasible = []
    for value, idx, b_tilde, w in cands:
        if feasible and value > feasible[0][0] + _FEAS_RTOL * max(abs(feasible[0][0]), 1.0):
            break  # strictly worse than the best feasible: done
        if _feasible(b, b_tilde, w, idx, tol):
            feasible.append((value, idx, b_tilde, w))
    if not feasible:
        raise RuntimeError("no feasible active set found; inputs violate preconditions")
    return _pick(feasible)


def brute_force_pi_sigma(sigma: SymmetricPD, b) -> QPSolution:
    """Oracle: exhaustively check every nonempty subset as candidate I.

    No ordering, no early exit; d <= 10.
    """
    if not isinstance(sigma, SymmetricPD):
        sigma = SymmetricPD(sigma)
    b = _check_b(b)
    d = sigma.dim
    if d > 10:
        raise ValueError("brute force oracle limited to d <= 10")
    m = sigma.entries
    tol = _FEAS_RTOL * max(np.abs(b).max(), 1.0)
    feasible = []
    for r in range(1, d + 1):
        for idx in combinations(range(d), r):
            b_tilde, w, value = _candidate(m, b, idx)
            if _feasible(b, b_tilde, w, idx, tol):
                feasible.append((value, idx, b_tilde, w))
    if not feasible:
        raise RuntimeError("no feasible active set found; inputs violate preconditions")
    return _pick(feasible)


@dataclass(frozen=True)
class CertificateReport:
    dual_gap: float          # |(w'b)^2/(w'Sigma w) - value| / value
    primal_violation: float  # max componentwise violation of b_tilde >= b
    active_mismatch: float   # max |b_tilde_I - b_I|
    stationarity: float      # ||Sigma w - b_tilde||_inf / ||b_tilde||_inf
    complementarity: float   # max |w_i (b_tilde_i - b_i)| over J

    @property
    def max_residual(self) -> float:
        return max(self.dual_gap, self.primal_violation, self.active_mismatch,
                   self.stationarity, self.complementarity)


def dual_certificate(sol: QPSolution, sigma: SymmetricPD, b) -> CertificateReport:
    """Residuals of the optimality identities; all ~0 for a valid solution."""
    if not isinstance(sigma, SymmetricPD):
        sigma = SymmetricPD(sigma)
    b = np.asarray(b, dtype=float)
    m = sigma.entries
    w, bt = sol.w, sol.b_tilde
    denom = float(w @ m @ w)
    dual_val = float(w @ b) ** 2 / denom if denom > 0 else np.inf
    scale = max(abs(sol.value), 1.0)
    I = list(sol.index_I)
    J = list(sol.index_J)
    return CertificateReport(
        dual_gap=abs(dual_val - sol.value) / scale,
        primal_violation=float(np.max(np.maximum(b - bt, 0.0), initial=0.0)),
        active_mismatch=float(np.max(np.abs(bt[I] - b[I]), initial=0.0)),
        stationarity=float(np.max(np.abs(m @ w - bt)) / max(np.abs(bt).max(), 1.0)),
        complementarity=float(np.max(np.abs(w[J] * (bt[J] - b[J])), initial=0.0)),
    )
