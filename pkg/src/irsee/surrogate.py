"""Affine rate surrogate around an expansion point, in received-power
coordinates that are linear in the lifted (PSD matrix) variables.

Per user k and slot l define
    x = own-signal power   (x_kkl = Tr(H_k W_kl), or |h_k^H w_kl|^2)
    b = total received power plus noise (sum_i x_ikl + sigma2_k)
so the SINR is G = x / (b - x) and the single-slot rate is

    R(x, b) = log2(b) - log2(b - x) - beta * sqrt(D(x, b)),
    D = C^2 (1 - ((b - x)/b)^2),  C = log2 e.

Both x and b are affine in the matrix variables, so an affine surrogate in
(x, b) is affine in the variables. Requiring the surrogate to match R's
value and gradient at the expansion point determines it uniquely:

    dR/dx = C/(b - x) - beta*C / (b*sqrt(G^2 + 2G))
    dR/db = -(x/b) * dR/dx        (R is scale-invariant: R(tx, tb) = R(x, b))

(using 1 - ((b-x)/b)^2 = (G^2 + 2G)/(1 + G)^2). The sqrt(G^2 + 2G)
denominator vanishes at G = 0, a removable singularity handled by flooring
G in the penalty slope. Gradient-matching makes the surrogate exact to
first order; it is NOT a global lower bound of R (R is neither convex nor
concave in (x, b)), which is why the SCA drivers re-expand every iteration
and re-check true rates before accepting a step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fbl import LOG2E, beta_coefficient, dispersion, rate_from_levels

GAMMA_FLOOR = 1e-8


@dataclass(frozen=True)
class ExpansionPoint:
    """Received-power state of one iterate.

    x[k, i, l] is the power user k receives from beamformer i in slot l;
    b[k, l] = sum_i x[k, i, l] + sigma2[k]; gamma/delta are the SINR and
    dispersion at the point. amplitudes (h_k^H w_il) are kept when the
    point came from vectors, None when it came from lifted matrices.
    """

    x: np.ndarray          # (K, K, L) nonnegative
    b: np.ndarray          # (K, L)
    sigma2: np.ndarray     # (K,)
    gamma: np.ndarray      # (K, L)
    delta: np.ndarray      # (K, L)
    amplitudes: np.ndarray | None = None

    @property
    def own(self) -> np.ndarray:
        """(K, L) own-signal powers x_kkl."""
        k = self.x.shape[0]
        return self.x[np.arange(k), np.arange(k), :]


def expansion_point(x: np.ndarray, sigma2, amplitudes=None) -> ExpansionPoint:
    """Assemble an ExpansionPoint from received powers x[k, i, l]."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 3 or x.shape[0] != x.shape[1]:
        raise ValueError(f"x must have shape (K, K, L), got {x.shape}")
    if np.any(x < -1e-12):
        raise ValueError("received powers must be nonnegative")
    x = np.clip(x, 0.0, None)
    k_users = x.shape[0]
    s2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (k_users,)).copy()
    if np.any(s2 <= 0):
        raise ValueError("noise power must be positive")
    b = x.sum(axis=1) + s2[:, None]
    own = x[np.arange(k_users), np.arange(k_users), :]
    if np.any(b <= own):
        raise ValueError("total power must exceed own-signal power (zero noise?)")
    gamma = own / (b - own)
    return ExpansionPoint(x=x, b=b, sigma2=s2, gamma=gamma,
                          delta=dispersion(gamma), amplitudes=amplitudes)


def expansion_from_vectors(h: np.ndarray, omega: np.ndarray, sigma2) -> ExpansionPoint:
    """Expansion point from combined channels (K, M) and beamformers (K, L, M)."""
    h = np.asarray(h, dtype=complex)
    omega = np.asarray(omega, dtype=complex)
    amp = np.einsum("km,ilm->kil", h.conj(), omega)
    return expansion_point(np.abs(amp) ** 2, sigma2, amplitudes=amp)


def expansion_from_lifted(h_outer: np.ndarray, big_omega: np.ndarray, sigma2) -> ExpansionPoint:
    """Expansion point from channel outer products (K, M, M) and PSD
    beamformer matrices (K, L, M, M): x[k, i, l] = Tr(H_k W_il)."""
    x = np.einsum("kab,ilba->kil", np.asarray(h_outer, dtype=complex),
                  np.asarray(big_omega, dtype=complex)).real
    return expansion_point(x, sigma2)


@dataclass(frozen=True)
class SurrogateCoefficients:
    """Affine surrogate per (k, l): value = const + x_weight*x + b_weight*b.

    In terms of the per-beamformer powers x_ikl this reads
        const + b_weight*sigma2 + (x_weight + b_weight)*x_kkl
              + b_weight * sum_{i != k} x_ikl
    so own matrices carry weight (x_weight + b_weight) and interfering
    ones carry b_weight. Inactive (deadline) slots have all-zero rows.
    """

    x_weight: np.ndarray   # (K, L)
    b_weight: np.ndarray   # (K, L)
    const: np.ndarray      # (K, L)
    beta: np.ndarray       # (K,)
    sigma2: np.ndarray     # (K,)
    active: np.ndarray     # (K, L) bool

    @property
    def own_weight(self) -> np.ndarray:
        """Weight on the own-beamformer power x_kkl."""
        return self.x_weight + self.b_weight

    @property
    def other_weight(self) -> np.ndarray:
        """Weight on each interfering-beamformer power x_ikl, i != k."""
        return self.b_weight

    @property
    def slot_constant(self) -> np.ndarray:
        """Constant including the noise share of b."""
        return self.const + self.b_weight * self.sigma2[:, None]


def build_surrogate(ep: ExpansionPoint, eps_k, m_d: int,
                    active: np.ndarray | None = None) -> SurrogateCoefficients:
    """Tight, gradient-matching affine surrogate at the expansion point."""
    k_users, slots = ep.b.shape
    eps_arr = np.broadcast_to(np.asarray(eps_k, dtype=float), (k_users,))
    beta = np.array([beta_coefficient(e, m_d) for e in eps_arr])
    if active is None:
        active = np.ones((k_users, slots), dtype=bool)
    else:
        active = np.asarray(active, dtype=bool)

    own = ep.own
    b = ep.b
    gamma = np.clip(ep.gamma, GAMMA_FLOOR, None)
    # dR/dx = C/(b-x) - beta*C/(b*sqrt(G^2+2G)); dR/db = -(x/b) dR/dx.
    penalty_slope = beta[:, None] * LOG2E / (b * np.sqrt(gamma * gamma + 2.0 * gamma))
    x_weight = LOG2E / (b - own) - penalty_slope
    b_weight = -(own / b) * x_weight
    value = np.empty_like(b)
    for k in range(k_users):
        for l in range(slots):
            value[k, l] = rate_from_levels(own[k, l], b[k, l], beta[k]) \
                if active[k, l] else 0.0
    const = value - x_weight * own - b_weight * b

    zero = ~active
    x_weight = np.where(zero, 0.0, x_weight)
    b_weight = np.where(zero, 0.0, b_weight)
    const = np.where(zero, 0.0, const)
    return SurrogateCoefficients(x_weight=x_weight, b_weight=b_weight,
                                 const=const, beta=beta.copy(),
                                 sigma2=ep.sigma2.copy(), active=active.copy())


def eval_surrogate(coeffs: SurrogateCoefficients, own: np.ndarray,
                   b: np.ndarray) -> np.ndarray:
    """Per-user surrogate rate at candidate levels own (K, L), b (K, L)."""
    slot_vals = coeffs.const + coeffs.x_weight * own + coeffs.b_weight * b
    return np.where(coeffs.active, slot_vals, 0.0).sum(axis=1)


def eval_surrogate_traces(coeffs: SurrogateCoefficients, x: np.ndarray) -> np.ndarray:
    """Per-user surrogate rate from full received powers x (K, K, L)."""
    k_users = x.shape[0]
    own = x[np.arange(k_users), np.arange(k_users), :]
    b = x.sum(axis=1) + coeffs.sigma2[:, None]
    return eval_surrogate(coeffs, own, b)


def true_rates_from_traces(x: np.ndarray, sigma2, beta) -> np.ndarray:
    """Raw per-user rates at received powers x (K, K, L); mirrors the rate
    model, for surrogate validation and feasibility re-checks."""
    k_users, _, slots = x.shape
    s2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (k_users,))
    beta_arr = np.broadcast_to(np.asarray(beta, dtype=float), (k_users,))
    own = x[np.arange(k_users), np.arange(k_users), :]
    b = x.sum(axis=1) + s2[:, None]
    out = np.zeros(k_users)
    for k in range(k_users):
        for l in range(slots):
            out[k] += rate_from_levels(own[k, l], b[k, l], beta_arr[k])
    return out
