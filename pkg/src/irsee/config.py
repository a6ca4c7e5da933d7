"""Optimizer knobs shared by the beamformer, phase, and outer loops."""

from __future__ import annotations

from dataclasses import dataclass, field

from .rankrelax import PenaltySchedule, RANK_ONE_THRESHOLD


@dataclass(frozen=True)
class OptimizerConfig:
    # Fractional-programming loop (sub-problem 1)
    dinkelbach_tol: float = 1e-3
    dinkelbach_max_iter: int = 30
    # Phase SCA loop (sub-problem 2)
    phase_obj_tol: float = 1e-3
    phase_max_iter: int = 30
    # Outer alternating loop
    ao_max_iter: int = 15
    ao_ee_tol: float = 1e-2
    # Rank-one handling
    penalty: PenaltySchedule = field(default_factory=PenaltySchedule)
    rank_one_threshold: float = RANK_ONE_THRESHOLD
    randomization_candidates: int = 100
    # Feasibility restoration against the true (non-surrogate) rates
    qos_slack: float = 1e-4
    repair_passes: int = 3
    # Subproblem QoS rows carry penalized slacks (surrogates are not true
    # lower bounds, so hard rows can go transiently empty); the weight must
    # dwarf any EE gain per unit rate.
    qos_penalty: float = 100.0
    # Largest true-rate-safe convex step back toward the solver iterate.
    backtrack_factors: tuple = (1.0, 0.5, 0.25, 0.1, 0.04)
    # Trust region on the received-power coordinates (relative to each
    # slot's total received power): keeps the affine surrogate honest at
    # the subproblem optimum so the fractional-programming residual F can
    # actually contract below its tolerance.
    trust_init: float = 0.5
    trust_shrink: float = 0.4
    trust_grow: float = 1.6
    trust_max: float = 2.0
    trust_min: float = 1e-5
    # Conic solver
    solve_tol_beamform: float = 1e-6
    solve_tol_phase: float = 1e-6
    solve_max_iter: int = 50_000
