"""IRS reflection optimization at fixed transmit beamformers.

The unit-modulus constraint is lifted: with t = [conj(psi); 1] (psi the
diagonal of the reflection matrix, plus a dummy slot that absorbs the
global phase) and E = t t^H, every received power becomes linear in E:

    |(h_irs^H diag(psi) H + h_bs^H) w|^2 = Tr(E Z w w^H Z^H),
    Z_k = [diag(h_irs_k^H) H ; h_bs_k^H]   ((N+1) x M).

The subproblem maximizes the surrogate sum rate over E >= 0 with unit
diagonal, the QoS floor, and the rank-one slack LMI on E's bottom-N
eigenspace; the same trust region / merit acceptance as the beamformer
loop keeps the affine surrogate honest. Reflection coefficients are
recovered from the dominant eigenvector (de-rotated by the dummy slot)
with a Gaussian-randomization fallback when E is far from rank one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, Scenario
from .config import OptimizerConfig
from .cvxsolver import ConicProblem, LMIBlock, Objective, TraceConstraint, solve
from .fbl import rate
from .linalg import dominant_eigvec
from .rankrelax import min_feasible_varpi, rank_lmi, rank_one_ratio, \
    smallest_eigvec_basis
from .surrogate import SurrogateCoefficients, build_surrogate, \
    eval_surrogate_traces, expansion_point
from .beamform_opt import SolveReport, betas

logger = logging.getLogger(__name__)


@dataclass
class PhaseLift:
    """Lifted matrix E ((N+1) x (N+1), unit diagonal, PSD) and the
    recovered unit-modulus reflection coefficients psi (N,)."""

    E: np.ndarray
    psi: np.ndarray


def lift_vector(psi: np.ndarray) -> np.ndarray:
    """[conj(psi); 1] so that Tr(E Z W Z^H) reproduces the combined
    channel with reflection diag(psi)."""
    psi = np.asarray(psi, dtype=complex)
    return np.concatenate([psi.conj(), [1.0 + 0.0j]])


def lift_channels(ch: ChannelSet, sigma2_k: np.ndarray) -> np.ndarray:
    """Noise-normalized lifting maps Z_k, stacked (K, N+1, M)."""
    k_users, m_ant = ch.h_bs.shape
    n = ch.H.shape[0]
    z = np.empty((k_users, n + 1, m_ant), dtype=complex)
    for k in range(k_users):
        z[k, :n, :] = ch.h_irs[k].conj()[:, None] * ch.H
        z[k, n, :] = ch.h_bs[k].conj()
        z[k] /= np.sqrt(float(sigma2_k[k]))
    return z


def coupling_matrices(z: np.ndarray, omega_mat: np.ndarray) -> np.ndarray:
    """G[k, i, l] = Z_k W_il Z_k^H, so x_ikl = Tr(E G[k, i, l])."""
    return np.einsum("kam,ilmn,kbn->kilab", z, omega_mat, z.conj(),
                     optimize=True)


def received_powers(e_mat: np.ndarray, g: np.ndarray) -> np.ndarray:
    """x[k, i, l] under lifted matrix E."""
    return np.einsum("ab,kilba->kil", e_mat, g, optimize=True).real


def effective_channel_matrices(z: np.ndarray, e_mat: np.ndarray) -> np.ndarray:
    """Y_k = Z_k^H E Z_k (M x M): Tr(E Z W Z^H) = Tr(W Y)."""
    return np.einsum("kam,ab,kbn->kmn", z.conj(), e_mat, z, optimize=True)


def assemble_p7(
    coeffs: SurrogateCoefficients,
    g: np.ndarray,
    penalty_weight: float,
    basis: np.ndarray,
    s: Scenario,
    qos_penalty: float = 0.0,
    trust: tuple | None = None,
) -> ConicProblem:
    """Rate-maximization subproblem in E for one SCA iteration."""
    n_dim = g.shape[-1]
    active = s.active_slots
    own_w = coeffs.own_weight
    oth_w = coeffs.other_weight
    slot_const = coeffs.slot_constant

    weight = np.zeros((n_dim, n_dim), dtype=complex)
    for k in range(s.K):
        for l in range(s.L):
            if not active[k, l]:
                continue
            for i in range(s.K):
                if not active[i, l]:
                    continue
                coef = own_w[k, l] if i == k else oth_w[k, l]
                if coef != 0.0:
                    weight += coef * g[k, i, l]
    qos_slacks = [f"u_{k}" for k in range(s.K)] if qos_penalty > 0 else []
    scalar_weights = {"zeta": -penalty_weight}
    scalar_weights.update({name: -qos_penalty for name in qos_slacks})
    objective = Objective(matrix_weights={"E": weight},
                          scalar_weights=scalar_weights,
                          constant=float(slot_const[active].sum()))

    constraints = []
    for n in range(n_dim):
        basis_vec = np.zeros((n_dim, n_dim), dtype=complex)
        basis_vec[n, n] = 1.0
        constraints.append(TraceConstraint({"E": basis_vec}, 1.0, "=="))
    for k in range(s.K):
        mats = np.zeros((n_dim, n_dim), dtype=complex)
        for l in range(s.L):
            if not active[k, l]:
                continue
            for i in range(s.K):
                if not active[i, l]:
                    continue
                coef = own_w[k, l] if i == k else oth_w[k, l]
                if coef != 0.0:
                    mats += coef * g[k, i, l]
        rhs = -(float(s.R_min_k[k]) - float(slot_const[k, active[k]].sum()))
        scal = {f"u_{k}": -1.0} if qos_penalty > 0 else {}
        constraints.append(TraceConstraint({"E": -mats}, rhs, "<=", scal))
    if trust is not None:
        lo, hi = trust
        for k in range(s.K):
            for i in range(s.K):
                for l in range(s.L):
                    if not (active[k, l] and active[i, l]):
                        continue
                    constraints.append(TraceConstraint(
                        {"E": g[k, i, l]}, float(hi[k, i, l]), "<="))
                    if lo[k, i, l] > 0.0:
                        constraints.append(TraceConstraint(
                            {"E": -g[k, i, l]}, -float(lo[k, i, l]), "<="))

    lmis = (rank_lmi("E", basis, "zeta"),)
    return ConicProblem(matrix_vars=(("E", n_dim),),
                        scalar_vars=tuple(["zeta"] + qos_slacks),
                        objective=objective,
                        constraints=tuple(constraints), lmis=lmis)


def extract_unit_modulus(e_mat: np.ndarray) -> np.ndarray:
    """Reflection coefficients from the dominant eigenvector of E.

    Entries are exactly unit modulus by construction. A vanishing dummy
    slot (no global-phase anchor) falls back to entrywise normalization.
    """
    e_mat = np.asarray(e_mat, dtype=complex)
    n = e_mat.shape[0] - 1
    _, vec = dominant_eigvec(e_mat)
    anchor = vec[n]
    if abs(anchor) < 1e-12:
        logger.warning("dummy slot of the lifted phase vector is ~0; "
                       "recovering without the global-phase anchor")
        ratios = vec[:n]
    else:
        ratios = vec[:n] / anchor
    mods = np.abs(ratios)
    unit = np.where(mods > 0, ratios / np.where(mods > 0, mods, 1.0), 1.0)
    return unit.conj()


def optimize_phases(
    ch: ChannelSet,
    omega_mat: np.ndarray,
    omega: np.ndarray,
    psi_init: np.ndarray,
    s: Scenario,
    cfg: OptimizerConfig = OptimizerConfig(),
):
    """SCA loop over the lifted reflection matrix at fixed beamformers.

    Returns (PhaseLift | None, SolveReport): None when the QoS region at
    these beamformers is empty, in which case the caller keeps the
    incoming phases.
    """
    if s.N == 0:
        raise ValueError("phase optimization needs at least one IRS element")
    z = lift_channels(ch, s.sigma2_k)
    g = coupling_matrices(z, omega_mat)
    beta = betas(s)
    active = s.active_slots
    n_dim = s.N + 1

    e_cur = np.outer(lift_vector(psi_init), lift_vector(psi_init).conj())
    penalty = cfg.penalty
    report = SolveReport(columns=("g", "objective", "penalty",
                                  "min_rank_ratio", "solver_status"))
    prev_sol = None
    radius = cfg.trust_init

    def true_rates(e_mat):
        x = received_powers(e_mat, g)
        own = x[np.arange(s.K), np.arange(s.K), :]
        interference = x.sum(axis=1) - own
        gam = np.where(active, own / (interference + 1.0), 0.0)
        return rate(gam, beta)

    def merit(e_mat, weight):
        rates = true_rates(e_mat)
        val = float(rates.sum()) - cfg.qos_penalty * float(
            np.clip(s.R_min_k - rates, 0.0, None).sum())
        val -= weight * min_feasible_varpi(e_mat, basis)
        return val

    obj_prev = None
    for it in range(1, cfg.phase_max_iter + 1):
        x_cur = received_powers(e_cur, g)
        ep = expansion_point(np.clip(x_cur, 0.0, None), 1.0)
        coeffs = build_surrogate(ep, s.eps_k, s.m_d, active=active)
        basis = smallest_eigvec_basis(e_cur, s.N)
        width = radius * ep.b[:, None, :]
        trust = (ep.x - width, ep.x + width)
        prob = assemble_p7(coeffs, g, penalty.weight, basis, s,
                           qos_penalty=cfg.qos_penalty, trust=trust)
        sol = solve(prob, tol=cfg.solve_tol_phase,
                    max_iter=cfg.solve_max_iter, warm=prev_sol)
        if sol.status in ("infeasible", "unbounded"):
            report.status = sol.status
            report.append(it, float("nan"), penalty.weight,
                          float("nan"), sol.status)
            return None, report
        prev_sol = sol
        e_star = sol.matrices["E"]

        merit_cur = merit(e_cur, penalty.weight)
        e_new = e_cur
        step_alpha = 0.0
        for alpha in cfg.backtrack_factors:
            cand = (1.0 - alpha) * e_cur + alpha * e_star
            if merit(cand, penalty.weight) >= merit_cur - 1e-12:
                e_new = cand
                step_alpha = alpha
                break
        if step_alpha >= 1.0:
            radius = min(radius * cfg.trust_grow, cfg.trust_max)
        else:
            radius = max(radius * cfg.trust_shrink, cfg.trust_min)

        obj_val = float(true_rates(e_new).sum())
        ratio = rank_one_ratio(e_new)
        report.append(it, obj_val, penalty.weight, ratio, sol.status)
        e_cur = e_new
        if obj_prev is not None and abs(obj_val - obj_prev) <= cfg.phase_obj_tol:
            break
        obj_prev = obj_val
        if ratio < cfg.rank_one_threshold:
            penalty = penalty.step()
    else:
        report.status = "iteration-cap"

    psi = _extract_with_fallback(e_cur, g, s, cfg, beta, true_rates, report)
    return PhaseLift(E=e_cur, psi=psi), report


def _extract_with_fallback(e_mat, g, s, cfg, beta, true_rates, report):
    psi = extract_unit_modulus(e_mat)
    if rank_one_ratio(e_mat) >= cfg.rank_one_threshold:
        return psi

    logger.info("randomization fallback for phase extraction")
    report.fallback_events += 1

    def score(p):
        e_cand = np.outer(lift_vector(p), lift_vector(p).conj())
        rates = true_rates(e_cand)
        feasible = bool(np.all(rates >= s.R_min_k - cfg.qos_slack))
        return (feasible, float(rates.sum()))

    w_, v = np.linalg.eigh(0.5 * (e_mat + e_mat.conj().T))
    root = (v * np.sqrt(np.clip(w_, 0.0, None))) @ v.conj().T
    rng = np.random.default_rng([s.seed, 0xE16E])
    best = (score(psi), psi)
    for _ in range(cfg.randomization_candidates):
        draw = root @ ((rng.standard_normal(s.N + 1)
                        + 1j * rng.standard_normal(s.N + 1)) / np.sqrt(2.0))
        anchor = draw[s.N]
        if abs(anchor) < 1e-12:
            continue
        ratios = draw[:s.N] / anchor
        mods = np.abs(ratios)
        cand = np.where(mods > 0, ratios / np.where(mods > 0, mods, 1.0),
                        1.0).conj()
        sc = score(cand)
        if sc > best[0]:
            best = (sc, cand)
    return best[1]
