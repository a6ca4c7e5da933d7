"""Conic-solver goldens. Expected optima come from eigenvalue arguments
(linear objective over the spectraplex peaks at the top eigenvalue) or
hand-computable allocations, never from the solver itself."""

import numpy as np
import pytest

from irsee.cvxsolver import (
    ConicProblem,
    LMIBlock,
    Objective,
    TraceConstraint,
    dump_problem,
    smat,
    solve,
    svec,
)


def spectraplex(c, dim):
    return ConicProblem(
        matrix_vars=(("X", dim),), scalar_vars=(),
        objective=Objective(matrix_weights={"X": c}),
        constraints=(TraceConstraint({"X": np.eye(dim)}, 1.0, "=="),))


class TestSvec:
    def test_round_trip(self):
        rng = np.random.default_rng(0)
        for n in (1, 2, 5, 9):
            a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            a = 0.5 * (a + a.conj().T)
            assert np.allclose(smat(svec(a), n), a, atol=1e-14)

    def test_inner_product_preserved(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            b = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            a = 0.5 * (a + a.conj().T)
            b = 0.5 * (b + b.conj().T)
            assert svec(a) @ svec(b) == pytest.approx(np.trace(a @ b).real, rel=1e-12)


class TestGoldens:
    def test_spectraplex_diag(self):
        # max Tr(CX) over the spectraplex is the top eigenvalue of C.
        sol = solve(spectraplex(np.diag([1.0, 2.0]), 2))
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(2.0, abs=1e-4)
        assert sol.matrices["X"][1, 1].real == pytest.approx(1.0, abs=1e-4)
        assert abs(sol.matrices["X"][0, 0]) < 1e-4

    def test_spectraplex_complex(self):
        c = np.array([[1.0, 2j], [-2j, 1.0]])   # eigenvalues 1 +- 2
        sol = solve(spectraplex(c, 2))
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(3.0, abs=1e-4)

    def test_spectraplex_random_matches_eig(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            c = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            c = 0.5 * (c + c.conj().T)
            sol = solve(spectraplex(c, 4))
            assert sol.status == "optimal"
            assert sol.objective == pytest.approx(np.linalg.eigvalsh(c)[-1], abs=5e-4)

    def test_infeasible(self):
        p = ConicProblem(
            matrix_vars=(("X", 2),), scalar_vars=(),
            objective=Objective(),
            constraints=(TraceConstraint({"X": np.eye(2)}, -1.0, "<="),))
        assert solve(p).status == "infeasible"

    def test_zero_optimum(self):
        p = ConicProblem(
            matrix_vars=(("X", 2),), scalar_vars=(),
            objective=Objective(matrix_weights={"X": -np.eye(2)}))
        sol = solve(p)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(0.0, abs=1e-5)

    def test_unbounded(self):
        p = ConicProblem(
            matrix_vars=(("X", 2),), scalar_vars=(),
            objective=Objective(matrix_weights={"X": np.eye(2)}))
        assert solve(p).status == "unbounded"

    def test_scalar_lmi_bound(self):
        # max -t  s.t.  t I - diag(1, 3) >= 0  ->  t = 3.
        p = ConicProblem(
            matrix_vars=(), scalar_vars=("t",),
            objective=Objective(scalar_weights={"t": -1.0}),
            lmis=(LMIBlock(dim=2, const=-np.diag([1.0, 3.0]),
                           scalar_terms=(("t", np.eye(2)),)),))
        sol = solve(p)
        assert sol.status == "optimal"
        assert sol.scalars["t"] == pytest.approx(3.0, abs=1e-4)

    def test_congruence_lmi_steers_allocation(self):
        # max 2 X_11 + X_22 - 10 w  s.t. Tr(X) <= 1, w >= X_22 (scalar LMI
        # via the congruence with e_2). Optimal: everything on X_11.
        e2 = np.array([[0.0], [1.0]], dtype=complex)
        p = ConicProblem(
            matrix_vars=(("X", 2),), scalar_vars=("w",),
            objective=Objective(matrix_weights={"X": np.diag([2.0, 1.0])},
                                scalar_weights={"w": -10.0}),
            constraints=(TraceConstraint({"X": np.eye(2)}, 1.0, "<="),),
            lmis=(LMIBlock(dim=1, congruences=(("X", e2, -1.0),),
                           scalar_terms=(("w", np.eye(1)),)),))
        sol = solve(p)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(2.0, abs=2e-4)
        assert sol.matrices["X"][0, 0].real == pytest.approx(1.0, abs=2e-4)
        assert sol.scalars["w"] < 1e-4

    def test_power_split_two_users(self):
        # max Tr(H1 X1) + Tr(H2 X2)  s.t.  Tr(X1) + Tr(X2) <= 1:
        # all power to the stronger channel's top eigenvector.
        h1 = np.array([1.0, 0.0], dtype=complex)
        h2 = np.array([0.0, 2.0], dtype=complex)
        p = ConicProblem(
            matrix_vars=(("X1", 2), ("X2", 2)), scalar_vars=(),
            objective=Objective(matrix_weights={
                "X1": np.outer(h1, h1.conj()), "X2": np.outer(h2, h2.conj())}),
            constraints=(TraceConstraint({"X1": np.eye(2), "X2": np.eye(2)}, 1.0, "<="),))
        sol = solve(p)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(4.0, abs=2e-4)
        assert np.trace(sol.matrices["X2"]).real == pytest.approx(1.0, abs=2e-4)


class TestProperties:
    def test_weak_duality_spectraplex(self):
        # Any feasible objective never exceeds the analytic optimum.
        rng = np.random.default_rng(11)
        c = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        c = 0.5 * (c + c.conj().T)
        sol = solve(spectraplex(c, 3))
        assert sol.objective <= np.linalg.eigvalsh(c)[-1] + 1e-5

    def test_objective_scaling_invariance(self):
        c = np.diag([1.0, 2.0, 0.5])
        sol1 = solve(spectraplex(c, 3))
        sol5 = solve(spectraplex(5.0 * c, 3))
        assert sol5.objective == pytest.approx(5.0 * sol1.objective, rel=1e-4)
        assert np.abs(sol5.matrices["X"] - sol1.matrices["X"]).max() < 1e-4

    def test_determinism(self):
        c = np.array([[1.0, 0.3 + 0.2j], [0.3 - 0.2j, 2.0]])
        s1 = solve(spectraplex(c, 2))
        s2 = solve(spectraplex(c, 2))
        assert s1.objective == s2.objective
        assert np.array_equal(s1.matrices["X"], s2.matrices["X"])
        assert s1.iterations == s2.iterations

    def test_psd_iterates_polished(self):
        sol = solve(spectraplex(np.diag([3.0, 1.0, 2.0]), 3))
        evals = np.linalg.eigvalsh(sol.matrices["X"])
        assert evals[0] >= -1e-12

    def test_warm_start_agrees_and_saves_iterations(self):
        c = np.diag([1.0, 2.0, 0.5])
        cold = solve(spectraplex(c, 3))
        warm = solve(spectraplex(c, 3), warm=cold)
        assert warm.status == "optimal"
        assert warm.iterations <= cold.iterations
        assert warm.objective == pytest.approx(cold.objective, abs=1e-5)

    def test_rejects_bad_tol(self):
        with pytest.raises(ValueError):
            solve(spectraplex(np.eye(2), 2), tol=0.0)


class TestDump:
    def test_dump_writes_all_sections(self, tmp_path):
        e2 = np.array([[0.0], [1.0]], dtype=complex)
        p = ConicProblem(
            matrix_vars=(("X", 2),), scalar_vars=("w",),
            objective=Objective(matrix_weights={"X": np.eye(2)},
                                scalar_weights={"w": -1.0}, constant=0.5),
            constraints=(TraceConstraint({"X": np.eye(2)}, 1.0, "<=",
                                         {"w": 2.0}),),
            lmis=(LMIBlock(dim=1, const=np.zeros((1, 1)),
                           congruences=(("X", e2, -1.0),),
                           scalar_terms=(("w", np.eye(1)),)),))
        out = tmp_path / "problem.txt"
        dump_problem(p, str(out))
        text = out.read_text()
        for token in ("conic-problem v1", "matrix_vars 1", "X dim 2",
                      "constraint 0 sense <=", "lmi 0 dim 1", "congruence X"):
            assert token in text
