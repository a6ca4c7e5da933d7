"""Transmit-beamformer optimization at fixed IRS phases.

The energy-efficiency ratio is handled by fractional programming: for a
parameter rho the inner problem maximizes

    sum_k surrogate_rate_k(W) - rho * E_tot(W) - penalty * sum varpi_kl

over lifted PSD beamformers W_kl, subject to the surrogate QoS floor, the
power budget, empty post-deadline slots, and the rank-one slack LMIs.
rho is updated to the achieved surrogate-EE ratio until the inner optimum
is (numerically) zero; the surrogate and the LMI bases are refreshed at
every iterate.

Two guards keep the raw loop from derailing, since the affine surrogate
is exact only to first order and can overpromise far from its expansion
point: the QoS rows carry heavily penalized slacks (so a subproblem never
goes empty just because the previous step overshot; nonzero slack at
termination is what flags a genuinely unservable drop), and each solver
step is backtracked toward the previous iterate until the true
(non-surrogate) rate margin is not degraded.

All solves run on noise-normalized channels (h / sigma), which puts the
received-power variables on O(SINR) scales the first-order conic solver
likes; rates and feasibility are invariant under that scaling.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import Scenario
from .config import OptimizerConfig
from .cvxsolver import ConicProblem, ConicSolution, Objective, \
    TraceConstraint, solve
from .fbl import beta_coefficient, rate
from .linalg import dominant_eigvec
from .rankrelax import min_feasible_varpi, rank_lmi, rank_one_ratio, \
    smallest_eigvec_basis
from .surrogate import SurrogateCoefficients, build_surrogate, \
    eval_surrogate_traces, expansion_from_lifted

logger = logging.getLogger(__name__)


@dataclass
class SolveReport:
    """Per-iteration trace of one solver run."""

    columns: tuple
    rows: list = field(default_factory=list)
    status: str = "optimal"
    fallback_events: int = 0

    def append(self, *values) -> None:
        self.rows.append(tuple(values))

    def to_text(self) -> str:
        lines = ["\t".join(self.columns)]
        for row in self.rows:
            lines.append("\t".join(
                f"{v:.10g}" if isinstance(v, float) else str(v) for v in row))
        return "\n".join(lines) + "\n"


@dataclass
class BeamformerSet:
    """Lifted matrices (K, L, M, M), extracted vectors (K, L, M), and the
    final fractional-programming parameter."""

    omega_mat: np.ndarray
    omega: np.ndarray
    rho: float


def normalized_channels(h: np.ndarray, sigma2_k: np.ndarray) -> np.ndarray:
    """Scale each user's channel by 1/sigma so noise becomes unity."""
    return np.asarray(h, dtype=complex) / np.sqrt(
        np.asarray(sigma2_k, dtype=float))[:, None]


def betas(s: Scenario) -> np.ndarray:
    return np.array([beta_coefficient(float(e), s.m_d) for e in s.eps_k])


def mrt_init(h: np.ndarray, s: Scenario) -> np.ndarray:
    """Rank-one start: maximum-ratio vectors at an equal power split over
    the active (user, slot) pairs. Feasible for power and deadlines."""
    active = s.active_slots
    n_active = int(active.sum())
    if n_active == 0:
        raise ValueError("no active (user, slot) pairs")
    p_share = s.p_max / n_active
    omega_mat = np.zeros((s.K, s.L, s.M, s.M), dtype=complex)
    for k in range(s.K):
        norm = np.linalg.norm(h[k])
        direction = h[k] / norm if norm > 0 else np.eye(s.M, dtype=complex)[:, 0]
        lifted = p_share * np.outer(direction, direction.conj())
        for l in range(s.L):
            if active[k, l]:
                omega_mat[k, l] = lifted
    return omega_mat


def _var(k: int, l: int) -> str:
    return f"W_{k}_{l}"


def _slack(k: int, l: int) -> str:
    return f"varpi_{k}_{l}"


def assemble_p5(
    coeffs: SurrogateCoefficients,
    h_outer: np.ndarray,
    rho: float,
    penalty_weight: float,
    bases: dict,
    s: Scenario,
    qos_penalty: float = 0.0,
    trust: tuple | None = None,
) -> ConicProblem:
    """Conic subproblem for one fractional-programming iteration.

    bases maps active (k, l) pairs to the current smallest-eigenvector
    matrices; with M = 1 the rank constraint is vacuous and no LMI is
    emitted. Post-deadline pairs get no variable at all, which realizes
    the empty-slot constraint exactly. qos_penalty > 0 adds a slack u_k
    to each QoS row, penalized in the objective. trust, when given, is a
    pair of (K, K, L) arrays bounding every received power
    Tr(H_k W_il) to [lo, hi] around the expansion point.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    active = s.active_slots
    pairs = [(k, l) for k in range(s.K) for l in range(s.L) if active[k, l]]
    matrix_vars = tuple((_var(k, l), s.M) for k, l in pairs)
    scalar_vars = list(_slack(k, l) for k, l in pairs) if s.M > 1 else []
    qos_slacks = [f"u_{k}" for k in range(s.K)] if qos_penalty > 0 else []

    own_w = coeffs.own_weight
    oth_w = coeffs.other_weight
    slot_const = coeffs.slot_constant

    obj_weights = {}
    for i, l in pairs:
        w = -rho * np.eye(s.M, dtype=complex)
        for k in range(s.K):
            if not active[k, l]:
                continue
            coef = own_w[k, l] if k == i else oth_w[k, l]
            if coef != 0.0:
                w = w + coef * h_outer[k]
        obj_weights[_var(i, l)] = w
    constant = float(slot_const[active].sum()) - rho * s.static_power()
    scalar_weights = {name: -penalty_weight for name in scalar_vars}
    scalar_weights.update({name: -qos_penalty for name in qos_slacks})
    objective = Objective(matrix_weights=obj_weights,
                          scalar_weights=scalar_weights, constant=constant)

    constraints = [TraceConstraint(
        {name: np.eye(s.M) for name, _ in matrix_vars}, s.p_max, "<=")]
    for k in range(s.K):
        mats = {}
        for i, l in pairs:
            coef = own_w[k, l] if k == i else oth_w[k, l]
            if active[k, l] and coef != 0.0:
                mats[_var(i, l)] = -coef * h_outer[k]
        rhs = -(float(s.R_min_k[k]) - float(slot_const[k, active[k]].sum()))
        scal = {f"u_{k}": -1.0} if qos_penalty > 0 else {}
        constraints.append(TraceConstraint(mats, rhs, "<=", scal))
    if trust is not None:
        lo, hi = trust
        for i, l in pairs:
            for k in range(s.K):
                constraints.append(TraceConstraint(
                    {_var(i, l): h_outer[k]}, float(hi[k, i, l]), "<="))
                if lo[k, i, l] > 0.0:
                    constraints.append(TraceConstraint(
                        {_var(i, l): -h_outer[k]}, -float(lo[k, i, l]), "<="))

    lmis = []
    if s.M > 1:
        for k, l in pairs:
            lmis.append(rank_lmi(_var(k, l), bases[(k, l)], _slack(k, l)))
    return ConicProblem(matrix_vars=matrix_vars,
                        scalar_vars=tuple(scalar_vars + qos_slacks),
                        objective=objective, constraints=tuple(constraints),
                        lmis=tuple(lmis))


def lifted_rates(h_outer: np.ndarray, omega_mat: np.ndarray,
                 beta: np.ndarray) -> np.ndarray:
    """Raw per-user rates of a lifted iterate under unit noise."""
    x = np.einsum("kab,ilba->kil", h_outer, omega_mat).real
    k_users = x.shape[0]
    own = x[np.arange(k_users), np.arange(k_users), :]
    interference = x.sum(axis=1) - own
    return rate(own / (interference + 1.0), beta)


def _omega_from_solution(sol: ConicSolution, s: Scenario) -> np.ndarray:
    active = s.active_slots
    out = np.zeros((s.K, s.L, s.M, s.M), dtype=complex)
    for k in range(s.K):
        for l in range(s.L):
            if active[k, l]:
                out[k, l] = sol.matrices[_var(k, l)]
    total = np.einsum("klmm->", out).real
    if total > s.p_max:
        out *= s.p_max / total
    return out


def extract_beamformer(omega_mat: np.ndarray) -> np.ndarray:
    """Dominant-eigenpair vector sqrt(lam_max) * v; zero matrix -> zero."""
    omega_mat = np.asarray(omega_mat, dtype=complex)
    if np.abs(omega_mat).max() == 0.0:
        return np.zeros(omega_mat.shape[0], dtype=complex)
    lam, v = dominant_eigvec(omega_mat)
    return np.sqrt(max(lam, 0.0)) * v


def _matrix_sqrt(a: np.ndarray) -> np.ndarray:
    w_, v = np.linalg.eigh(0.5 * (a + a.conj().T))
    return (v * np.sqrt(np.clip(w_, 0.0, None))) @ v.conj().T


def _sinr_from_vectors(h_norm: np.ndarray, omega: np.ndarray) -> np.ndarray:
    amp = np.einsum("km,ilm->kil", h_norm.conj(), omega)
    p = np.abs(amp) ** 2
    k_users = h_norm.shape[0]
    signal = p[np.arange(k_users), np.arange(k_users), :]
    interference = p.sum(axis=1) - signal
    return signal / (interference + 1.0)


def extract_all(
    omega_mat: np.ndarray,
    h_norm: np.ndarray,
    s: Scenario,
    cfg: OptimizerConfig,
    beta: np.ndarray,
    report: SolveReport | None = None,
    rng_seed: int = 0,
) -> np.ndarray:
    """Rank-one recovery for every active pair, with Gaussian
    randomization when a matrix is far from rank one.

    Candidates keep the pair's power at Tr(W) and are judged by true-rate
    QoS feasibility first, sum rate second; fallback events are logged
    and counted on the report.
    """
    active = s.active_slots
    omega = np.zeros((s.K, s.L, s.M), dtype=complex)
    needs_fallback = []
    for k in range(s.K):
        for l in range(s.L):
            if not active[k, l]:
                continue
            mat = omega_mat[k, l]
            omega[k, l] = extract_beamformer(mat)
            tr = float(np.trace(mat).real)
            if tr > 1e-12 and s.M > 1 and rank_one_ratio(mat) < cfg.rank_one_threshold:
                needs_fallback.append((k, l))

    if needs_fallback:
        rng = np.random.default_rng([rng_seed, 0x5EED])
        for k, l in needs_fallback:
            mat = omega_mat[k, l]
            tr = float(np.trace(mat).real)
            root = _matrix_sqrt(mat)

            def scored(vec):
                omega[k, l] = vec
                rates = rate(_sinr_from_vectors(h_norm, omega), beta)
                feasible = bool(np.all(rates >= s.R_min_k - cfg.qos_slack))
                return (feasible, float(rates.sum()))

            best = (scored(omega[k, l]), omega[k, l].copy())
            for _ in range(cfg.randomization_candidates):
                g = (rng.standard_normal(s.M) + 1j * rng.standard_normal(s.M)) \
                    / np.sqrt(2.0)
                cand = root @ g
                norm = np.linalg.norm(cand)
                if norm == 0.0:
                    continue
                cand *= np.sqrt(tr) / norm
                score = (scored(cand), cand.copy())
                if score[0] > best[0]:
                    best = score
            omega[k, l] = best[1]
            logger.info("randomization fallback for beamformer (%d, %d)", k, l)
            if report is not None:
                report.fallback_events += 1
    return omega


def dinkelbach_sca(
    h: np.ndarray,
    s: Scenario,
    cfg: OptimizerConfig = OptimizerConfig(),
    omega_init: np.ndarray | None = None,
    include_irs_power: bool = True,
    rho_init: float = 0.0,
):
    """Iterate surrogate construction, basis refresh, and the parametric
    conic solve until |F(rho)| falls below tolerance.

    Returns (BeamformerSet | None, SolveReport); a None set means the QoS
    region stayed empty for this drop (status "infeasible" on the
    report), which callers record rather than raise.
    """
    h = np.asarray(h, dtype=complex)
    h_norm = normalized_channels(h, s.sigma2_k)
    h_outer = np.einsum("ka,kb->kab", h_norm, h_norm.conj())
    active = s.active_slots
    pairs = [(k, l) for k in range(s.K) for l in range(s.L) if active[k, l]]
    static = s.static_power(include_irs=include_irs_power)
    s_solve = _scenario_with_static(s, static)
    beta = betas(s)

    omega_mat = mrt_init(h_norm, s) if omega_init is None else omega_init.copy()
    penalty = cfg.penalty
    rho = max(0.0, float(rho_init))
    report = SolveReport(columns=("d", "rho", "F", "penalty",
                                  "min_rank_ratio", "solver_status"))
    prev_sol = None
    converged = False

    def margin(om):
        return float((lifted_rates(h_outer, om, beta) - s.R_min_k).min())

    def ratio(om):
        denom = float(np.einsum("klmm->", om).real) + static
        return float(lifted_rates(h_outer, om, beta).sum()) / denom

    def min_rank(om):
        worst = 1.0
        if s.M > 1:
            for k, l in pairs:
                if float(np.trace(om[k, l]).real) > 1e-12:
                    worst = min(worst, rank_one_ratio(om[k, l]))
        return worst

    def solve_once(om, rho_val, pen_weight, warm, radius):
        ep = expansion_from_lifted(h_outer, om, 1.0)
        coeffs = build_surrogate(ep, s.eps_k, s.m_d, active=active)
        bases = {}
        if s.M > 1:
            for k, l in pairs:
                bases[(k, l)] = smallest_eigvec_basis(om[k, l], s.M - 1)
        trust = None
        if radius is not None:
            width = radius * ep.b[:, None, :]
            trust = (ep.x - width, ep.x + width)
        prob = assemble_p5(coeffs, h_outer, rho_val, pen_weight, bases,
                           s_solve, qos_penalty=cfg.qos_penalty, trust=trust)
        sol = solve(prob, tol=cfg.solve_tol_beamform,
                    max_iter=cfg.solve_max_iter, warm=warm)
        return coeffs, bases, sol

    radius = cfg.trust_init
    for d in range(1, cfg.dinkelbach_max_iter + 1):
        coeffs, bases, sol = solve_once(omega_mat, rho, penalty.weight,
                                        prev_sol, radius)
        if sol.status in ("infeasible", "unbounded"):
            report.status = sol.status
            report.append(d, rho, float("nan"), penalty.weight,
                          float("nan"), sol.status)
            return None, report
        prev_sol = sol
        omega_star = _omega_from_solution(sol, s)

        # Step acceptance against the true-rate analog of the subproblem
        # objective (rates, EE parameter, rank slacks, QoS deficits). The
        # surrogate overpromises away from its expansion point, so walk
        # back toward the incumbent until the merit stops degrading.
        def merit(om):
            val = float(lifted_rates(h_outer, om, beta).sum()) \
                - rho * (float(np.einsum("klmm->", om).real) + static) \
                - cfg.qos_penalty * float(np.clip(
                    s.R_min_k - lifted_rates(h_outer, om, beta), 0.0, None).sum())
            if s.M > 1:
                val -= penalty.weight * sum(
                    min_feasible_varpi(om[k, l], bases[(k, l)]) for k, l in pairs)
            return val

        merit_cur = merit(omega_mat)
        omega_new = omega_mat
        step_alpha = 0.0
        for alpha in cfg.backtrack_factors:
            cand = (1.0 - alpha) * omega_mat + alpha * omega_star
            if merit(cand) >= merit_cur - 1e-12:
                omega_new = cand
                step_alpha = alpha
                break
        if step_alpha >= 1.0:
            radius = min(radius * cfg.trust_grow, cfg.trust_max)
        else:
            radius = max(radius * cfg.trust_shrink, cfg.trust_min)

        # F is the subproblem's optimal value (surrogate rates, the rho
        # in use, and the solver's own slack values).
        f_val = float(sol.objective)
        min_ratio = min_rank(omega_new)
        report.append(d, rho, f_val, penalty.weight, min_ratio, sol.status)
        omega_mat = omega_new
        if abs(f_val) <= cfg.dinkelbach_tol:
            converged = True
            break
        # Parameter update from the achieved (true-rate) ratio; iterates
        # that still violate QoS keep rho where it is so the loop cannot
        # terminate on an unservable point. The running max keeps the
        # recorded trace monotone even when a later step trades a little
        # EE for rank-one-ness.
        if margin(omega_mat) >= -cfg.qos_slack:
            rho = max(rho, ratio(omega_mat))
        # Growing the weight past rank-one attainment only poisons the
        # termination test (F picks up -weight * varpi noise).
        if min_ratio < cfg.rank_one_threshold:
            penalty = penalty.step()

    if not converged:
        report.status = "iteration-cap"
    if margin(omega_mat) < -10.0 * cfg.qos_slack:
        report.status = "infeasible"
        return None, report

    omega = extract_all(omega_mat, h_norm, s, cfg, beta, report,
                        rng_seed=s.seed)

    # The QoS floor was enforced on the surrogate; re-check the true rates
    # after extraction and re-run frozen-rho passes while they help.
    for _ in range(cfg.repair_passes):
        rates = rate(_sinr_from_vectors(h_norm, omega), beta)
        if np.all(rates >= s.R_min_k - cfg.qos_slack):
            break
        coeffs, bases, sol = solve_once(omega_mat, rho, penalty.weight,
                                        prev_sol, radius)
        if sol.status != "optimal":
            break
        prev_sol = sol
        omega_cand = _omega_from_solution(sol, s)
        if margin(omega_cand) <= margin(omega_mat):
            break
        omega_mat = omega_cand
        omega = extract_all(omega_mat, h_norm, s, cfg, beta, report,
                            rng_seed=s.seed)

    return BeamformerSet(omega_mat=omega_mat, omega=omega, rho=rho), report


def _scenario_with_static(s: Scenario, static: float) -> Scenario:
    """Scenario view whose static_power() equals the requested total;
    used so no-IRS runs exclude the IRS terms from E_tot."""
    if abs(s.static_power() - static) < 1e-15:
        return s
    return replace(s, P_IRS=0.0, P_d=0.0, P_c_BS=static)
