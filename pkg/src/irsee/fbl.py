"""Finite-blocklength rate model: SINR, channel dispersion, Gaussian
Q-function inverse, the short-packet achievable rate, and energy efficiency.

Rate model per user k over slots l:

    R_k = sum_l [ log2(1 + G_kl) - beta_k * sqrt(D_kl) ]
    D_kl = (log2 e)^2 * (1 - 1/(1 + G_kl)^2)
    beta_k = Qinv(eps_k) / sqrt(m_d)

where G_kl is the SINR, eps_k the decoding error probability and m_d the
blocklength in symbols. The normal approximation can go negative at low
SINR; the raw value is returned and only EE reporting clamps at zero.

Both the vector form (beamformers w_kl) and the lifted form (PSD matrices
W_kl = w w^H against channel outer products) are supported and agree on
rank-one inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG2E = math.log2(math.e)
LOG2E_SQ = LOG2E * LOG2E


def qfunc(z: float) -> float:
    """Gaussian tail probability Q(z) = P(N(0,1) > z), via erfc."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def qinv(eps: float) -> float:
    """Solve Q(z) = eps for z, 0 < eps < 1.

    Bisection bracket plus Newton polish on the forward Q itself (no
    rational approximation of the inverse), accurate to ~1e-12 relative.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if eps == 0.5:
        return 0.0
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if qfunc(mid) > eps:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, abs(lo)):
            break
    z = 0.5 * (lo + hi)
    # Newton: Q'(z) = -pdf(z); a couple of steps squeeze out the residual.
    for _ in range(4):
        pdf = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        if pdf <= 0.0:
            break
        step = (qfunc(z) - eps) / pdf
        z += step
        if abs(step) <= 1e-14 * max(1.0, abs(z)):
            break
    return z


def beta_coefficient(eps: float, m_d: int) -> float:
    """Dispersion penalty weight Qinv(eps)/sqrt(m_d)."""
    if m_d < 1:
        raise ValueError(f"blocklength must be >= 1, got {m_d}")
    return qinv(eps) / math.sqrt(m_d)


def sinr(h: np.ndarray, omega: np.ndarray, sigma2) -> np.ndarray:
    """Per-user per-slot SINR from combined channels and beamformers.

    h: (K, M) combined channel per user, omega: (K, L, M) beamformer per
    user per slot, sigma2: scalar or (K,) noise powers. Returns (K, L):

        G[k, l] = |h_k^H w_kl|^2 / (sum_{i != k} |h_k^H w_il|^2 + sigma2_k)
    """
    h = np.asarray(h, dtype=complex)
    omega = np.asarray(omega, dtype=complex)
    k_users, m_ant = h.shape
    if omega.ndim != 3 or omega.shape[0] != k_users or omega.shape[2] != m_ant:
        raise ValueError(f"omega shape {omega.shape} inconsistent with h {h.shape}")
    s2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (k_users,))
    if np.any(s2 <= 0):
        raise ValueError("noise power must be positive")
    # amp[k, i, l] = h_k^H w_il
    amp = np.einsum("km,ilm->kil", h.conj(), omega)
    p = np.abs(amp) ** 2
    signal = p[np.arange(k_users), np.arange(k_users), :]
    interference = p.sum(axis=1) - signal
    return signal / (interference + s2[:, None])


def sinr_lifted(h_outer: np.ndarray, big_omega: np.ndarray, sigma2) -> np.ndarray:
    """SINR in the lifted domain: trace ratios of H_k = h_k h_k^H against
    the PSD matrices W_il. h_outer: (K, M, M), big_omega: (K, L, M, M)."""
    h_outer = np.asarray(h_outer, dtype=complex)
    big_omega = np.asarray(big_omega, dtype=complex)
    k_users = h_outer.shape[0]
    s2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (k_users,))
    # x[k, i, l] = Tr(H_k W_il)
    x = np.einsum("kab,ilba->kil", h_outer, big_omega).real
    signal = x[np.arange(k_users), np.arange(k_users), :]
    interference = x.sum(axis=1) - signal
    return signal / (interference + s2[:, None])


def dispersion(gamma) -> np.ndarray:
    """Channel dispersion (log2 e)^2 * (1 - 1/(1+G)^2), elementwise."""
    g = np.asarray(gamma, dtype=float)
    return LOG2E_SQ * (1.0 - 1.0 / (1.0 + g) ** 2)


@dataclass(frozen=True)
class RateTerms:
    """Per-user rate decomposition R = U - V at given SINRs."""

    gamma: np.ndarray        # (K, L)
    delta: np.ndarray        # (K, L)
    beta: np.ndarray         # (K,)
    shannon_sum: np.ndarray  # (K,) U_k = sum_l log2(1+G)
    penalty_sum: np.ndarray  # (K,) V_k = sum_l beta_k sqrt(D)
    rate: np.ndarray         # (K,) R_k = U_k - V_k


def rate_terms(gamma: np.ndarray, beta) -> RateTerms:
    """Assemble U, V and the raw (unclamped) rate per user."""
    g = np.atleast_2d(np.asarray(gamma, dtype=float))
    b = np.broadcast_to(np.asarray(beta, dtype=float), (g.shape[0],))
    d = dispersion(g)
    u = np.log2(1.0 + g).sum(axis=1)
    v = b * np.sqrt(d).sum(axis=1)
    return RateTerms(gamma=g, delta=d, beta=b.copy(), shannon_sum=u,
                     penalty_sum=v, rate=u - v)


def rate(gamma: np.ndarray, beta) -> np.ndarray:
    """Raw per-user rate sum_l [log2(1+G) - beta sqrt(D)] (may be negative)."""
    return rate_terms(gamma, beta).rate


def rate_from_levels(x: float, b: float, beta: float) -> float:
    """Single-slot rate as a function of the received-power coordinates
    (x, b): own-signal power x and total-plus-noise power b, so that
    G = x / (b - x). Used by the surrogate construction and its tests."""
    if b <= x:
        raise ValueError("total power b must exceed own-signal power x")
    g = x / (b - x)
    return math.log2(1.0 + g) - beta * math.sqrt(LOG2E_SQ * (1.0 - 1.0 / (1.0 + g) ** 2))


def total_transmit_power(omega: np.ndarray = None, big_omega: np.ndarray = None) -> float:
    """Sum of beamformer powers, from vectors (K,L,M) or lifted (K,L,M,M)."""
    if (omega is None) == (big_omega is None):
        raise ValueError("pass exactly one of omega / big_omega")
    if omega is not None:
        return float(np.sum(np.abs(np.asarray(omega)) ** 2))
    w = np.asarray(big_omega)
    return float(np.einsum("klmm->", w).real)


def energy_efficiency(
    rates: np.ndarray,
    transmit_power: float,
    p_irs: float,
    n_elements: int,
    p_dyn: float,
    p_circuit_bs: float,
    include_irs_power: bool = True,
    clamp_negative_rates: bool = True,
) -> float:
    """Network EE in bits/Joule/Hz: sum of rates over total consumed power.

    Reporting clamps negative per-user rates at zero; optimization-side
    constraint checks use the raw values. Schemes without an IRS drop the
    IRS static and per-element dynamic terms from the denominator.
    """
    r = np.asarray(rates, dtype=float)
    if clamp_negative_rates:
        r = np.clip(r, 0.0, None)
    denom = transmit_power + p_circuit_bs
    if include_irs_power:
        denom += p_irs + n_elements * p_dyn
    if denom <= 0.0:
        raise ValueError("total consumed power must be positive")
    return float(r.sum() / denom)
