"""Rank-one machinery: smallest-eigenvector bases, the slack LMI that
replaces rank constraints, geometric penalty schedules, and the
certification ratio.

A PSD matrix X of dimension n has rank one exactly when the n-1 smallest
eigenvalues vanish, i.e. when  varpi I_{n-1} - B^H X B >= 0  holds with
varpi = 0 and B spanning the (n-1)-dimensional bottom eigenspace. The
solvers keep varpi as a nonnegative decision variable, penalize it with a
geometrically growing weight, and refresh B from the current iterate each
SCA round, which drives the iterates toward rank one.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .cvxsolver import LMIBlock
from .linalg import hermitian_eig

RANK_ONE_THRESHOLD = 0.99


@dataclass(frozen=True)
class PenaltySchedule:
    """Geometric penalty growth: weight <- min(growth * weight, cap)."""

    weight: float = 1e-3
    growth: float = 3.0
    cap: float = 1e4

    def __post_init__(self):
        if self.growth <= 1.0:
            raise ValueError("growth factor must exceed 1")
        if self.weight < 0 or self.cap < self.weight:
            raise ValueError("need 0 <= weight <= cap")

    def step(self) -> "PenaltySchedule":
        return replace(self, weight=min(self.growth * self.weight, self.cap))


def penalty_step(schedule: PenaltySchedule) -> PenaltySchedule:
    return schedule.step()


def smallest_eigvec_basis(x: np.ndarray, m: int) -> np.ndarray:
    """Orthonormal basis (n x m) of the m smallest-eigenvalue eigenvectors.

    Ties resolve deterministically through the eigensolver's stable
    ordering and in-order Gram-Schmidt, so refreshed bases are
    reproducible run to run.
    """
    x = np.asarray(x, dtype=complex)
    n = x.shape[0]
    if not 1 <= m < n:
        raise ValueError(f"need 1 <= m < n, got m={m}, n={n}")
    _, vecs = hermitian_eig(x, symmetrize=True)
    return vecs[:, :m].copy()


def rank_lmi(var_name: str, basis: np.ndarray, slack_name: str) -> LMIBlock:
    """Solver-ready block  slack * I_m - basis^H X basis >= 0."""
    basis = np.asarray(basis, dtype=complex)
    m = basis.shape[1]
    return LMIBlock(dim=m,
                    congruences=((var_name, basis, -1.0),),
                    scalar_terms=((slack_name, np.eye(m)),))


def min_feasible_varpi(x: np.ndarray, basis: np.ndarray) -> float:
    """Smallest slack for which the block is PSD: lambda_max(B^H X B).

    With B spanning the n-1 smallest eigenvectors this equals the
    second-largest eigenvalue of X (Rayleigh-quotient argument), and it is
    zero exactly for rank-one X.
    """
    basis = np.asarray(basis, dtype=complex)
    compressed = basis.conj().T @ np.asarray(x, dtype=complex) @ basis
    evals, _ = hermitian_eig(compressed, symmetrize=True)
    return max(float(evals[-1]), 0.0)


def rank_one_ratio(x: np.ndarray) -> float:
    """lambda_max(X) / Tr(X) in [0, 1]; equals 1 iff X has rank one."""
    x = np.asarray(x, dtype=complex)
    tr = float(np.trace(x).real)
    if tr <= 0.0:
        raise ValueError("rank_one_ratio needs Tr(X) > 0")
    evals, _ = hermitian_eig(x, symmetrize=True)
    return float(evals[-1]) / tr
