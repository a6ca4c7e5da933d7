"""Rank-one equivalence checks against brute-force eigendecompositions
(numpy's eigh as the independent oracle)."""

import numpy as np
import pytest

from irsee.rankrelax import (
    PenaltySchedule,
    min_feasible_varpi,
    penalty_step,
    rank_lmi,
    rank_one_ratio,
    smallest_eigvec_basis,
)


def random_psd(rng, n, rank):
    b = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return b @ b.conj().T


class TestSmallestEigvecBasis:
    def test_diag_case(self):
        basis = smallest_eigvec_basis(np.diag([5.0, 0.0, 0.0]).astype(complex), 2)
        # Columns span the e2/e3 plane: no component on e1.
        assert np.abs(basis[0, :]).max() < 1e-10
        assert np.allclose(basis.conj().T @ basis, np.eye(2), atol=1e-10)

    def test_orthogonal_to_rank_one_direction(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            v = rng.standard_normal(5) + 1j * rng.standard_normal(5)
            basis = smallest_eigvec_basis(np.outer(v, v.conj()), 4)
            assert np.linalg.norm(basis.conj().T @ v) <= 1e-8 * np.linalg.norm(v)

    def test_identity_deterministic(self):
        b1 = smallest_eigvec_basis(np.eye(3, dtype=complex), 2)
        b2 = smallest_eigvec_basis(np.eye(3, dtype=complex), 2)
        assert np.array_equal(b1, b2)
        assert np.allclose(b1.conj().T @ b1, np.eye(2), atol=1e-10)

    def test_rejects_bad_m(self):
        with pytest.raises(ValueError):
            smallest_eigvec_basis(np.eye(3), 3)
        with pytest.raises(ValueError):
            smallest_eigvec_basis(np.eye(3), 0)


class TestRankLmi:
    def test_rank_one_feasible_at_zero(self):
        rng = np.random.default_rng(7)
        v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        x = np.outer(v, v.conj())
        basis = smallest_eigvec_basis(x, 3)
        assert min_feasible_varpi(x, basis) <= 1e-9 * np.linalg.eigvalsh(x)[-1]

    def test_min_varpi_diag(self):
        x = np.diag([1.0, 1.0, 0.0]).astype(complex)
        basis = smallest_eigvec_basis(x, 2)
        assert min_feasible_varpi(x, basis) == pytest.approx(1.0, abs=1e-10)

    def test_zero_matrix_feasible_at_zero(self):
        x = np.zeros((3, 3), dtype=complex)
        basis = np.eye(3, dtype=complex)[:, :2]
        assert min_feasible_varpi(x, basis) == 0.0

    def test_block_structure(self):
        basis = np.eye(4, dtype=complex)[:, :3]
        block = rank_lmi("X", basis, "varpi")
        assert block.dim == 3
        assert block.congruences[0][0] == "X"
        assert block.congruences[0][2] == -1.0
        assert block.scalar_terms[0][0] == "varpi"

    def test_equivalence_brute_force(self):
        # rank(X) == 1 (lam2/lam1 <= 1e-9)  <=>  min feasible slack is 0
        # with the bottom-(n-1) eigenvector basis; and the minimal slack
        # always equals the second-largest eigenvalue (oracle: eigh).
        rng = np.random.default_rng(11)
        n_rank_one = 0
        for trial in range(1000):
            n = int(rng.integers(2, 9))
            rank = 1 if trial % 2 == 0 else int(rng.integers(2, n + 1))
            x = random_psd(rng, n, rank)
            evals = np.linalg.eigvalsh(x)
            basis = smallest_eigvec_basis(x, n - 1)
            varpi = min_feasible_varpi(x, basis)
            second_largest = evals[-2]
            assert varpi == pytest.approx(second_largest, rel=1e-8, abs=1e-9)
            numerically_rank_one = second_largest / evals[-1] <= 1e-9
            feasible_at_zero = varpi <= 1e-9 * evals[-1]
            assert numerically_rank_one == feasible_at_zero
            n_rank_one += int(numerically_rank_one)
        # Both directions must actually be exercised.
        assert 0 < n_rank_one < 1000


class TestPenalty:
    def test_single_step(self):
        s = PenaltySchedule(weight=1.0, growth=2.0, cap=100.0)
        assert penalty_step(s).weight == pytest.approx(2.0)

    def test_caps_after_seven_steps(self):
        s = PenaltySchedule(weight=1.0, growth=2.0, cap=100.0)
        for _ in range(7):
            s = s.step()
        assert s.weight == pytest.approx(100.0)

    def test_reaches_cap_in_log_steps(self):
        s = PenaltySchedule(weight=1e-3, growth=3.0, cap=1e4)
        expected = int(np.ceil(np.log(1e4 / 1e-3) / np.log(3.0)))
        seq = [s.weight]
        for _ in range(expected):
            s = s.step()
            seq.append(s.weight)
        assert s.weight == pytest.approx(1e4)
        assert all(b >= a for a, b in zip(seq, seq[1:]))

    def test_rejects_degenerate_growth(self):
        with pytest.raises(ValueError):
            PenaltySchedule(weight=1.0, growth=1.0, cap=10.0)


class TestRankOneRatio:
    def test_projector(self):
        rng = np.random.default_rng(13)
        v = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        assert rank_one_ratio(np.outer(v, v.conj())) == pytest.approx(1.0, abs=1e-10)

    def test_identity(self):
        assert rank_one_ratio(np.eye(4)) == pytest.approx(0.25, abs=1e-12)

    def test_diag(self):
        assert rank_one_ratio(np.diag([3.0, 1.0])) == pytest.approx(0.75, abs=1e-12)

    def test_zero_trace_rejected(self):
        with pytest.raises(ValueError):
            rank_one_ratio(np.zeros((2, 2)))
