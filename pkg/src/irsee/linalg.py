"""Dense complex/Hermitian linear-algebra kernel.

Everything downstream (surrogate construction, rank relaxation, cone
projections, beamformer extraction) works with small Hermitian matrices
(dimension <= ~64), so robustness matters far more than asymptotics.
The eigensolver is a cyclic Jacobi iteration on the Hermitian matrix:
slow in theory, bulletproof in practice at these sizes, and fully
deterministic including its tie-breaking.
"""

from __future__ import annotations

import numpy as np

HERMITIAN_RTOL = 1e-12
JACOBI_OFF_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


class LinalgError(Exception):
    """Raised for structurally invalid inputs (shape, symmetry)."""


class ConvergenceError(LinalgError):
    """Raised when the Jacobi sweep cap is hit before the off-diagonal
    mass drops below tolerance."""


def is_hermitian(a: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    """Check max|A - A^H| <= rtol * max|A| (zero matrix counts as Hermitian)."""
    a = np.asarray(a)
    scale = np.abs(a).max() if a.size else 0.0
    if scale == 0.0:
        return True
    return np.abs(a - a.conj().T).max() <= rtol * scale


def _phase_fix(v: np.ndarray) -> np.ndarray:
    """Rotate each eigenvector so its largest-magnitude entry is real positive.

    Removes the arbitrary global phase so repeated runs (and tie-broken
    degenerate subspaces) produce identical bytes.
    """
    v = v.copy()
    for j in range(v.shape[1]):
        col = v[:, j]
        idx = int(np.argmax(np.abs(col)))
        pivot = col[idx]
        if np.abs(pivot) > 0:
            col *= np.conj(pivot) / np.abs(pivot)
    return v


def hermitian_eig(
    a: np.ndarray,
    symmetrize: bool = False,
    off_tol: float = JACOBI_OFF_TOL,
    max_sweeps: int = JACOBI_MAX_SWEEPS,
):
    """Eigendecomposition A = V diag(w) V^H by cyclic Jacobi rotations.

    Returns (w, V) with eigenvalues ascending and V unitary. Equal
    eigenvalues keep a deterministic basis: stable sort, then
    Gram-Schmidt in index order inside each degenerate group, then a
    phase normalization.

    symmetrize=False rejects non-Hermitian input; True replaces A by
    (A + A^H)/2 first.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise LinalgError(f"expected square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise LinalgError("non-finite entries")
    if symmetrize:
        a = 0.5 * (a + a.conj().T)
    elif not is_hermitian(a):
        raise LinalgError("matrix is not Hermitian (pass symmetrize=True to force)")

    n = a.shape[0]
    w = a.copy()
    v = np.eye(n, dtype=complex)
    scale = max(np.abs(w).max(), 1.0)

    for _ in range(max_sweeps):
        off = np.abs(w - np.diag(np.diag(w))).max() if n > 1 else 0.0
        if off <= off_tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = w[p, q]
                if np.abs(apq) <= 1e-300:
                    continue
                app = w[p, p].real
                aqq = w[q, q].real
                # Unitary 2x2 rotation zeroing the (p, q) entry.
                phase = apq / np.abs(apq)
                tau = (aqq - app) / (2.0 * np.abs(apq))
                if tau >= 0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # Column rotation: [p, q] <- [c*p - conj(s*phase)*q, s*phase*p + c*q]
                sp = s * phase
                wp = w[:, p].copy()
                wq = w[:, q].copy()
                w[:, p] = c * wp - np.conj(sp) * wq
                w[:, q] = sp * wp + c * wq
                wp = w[p, :].copy()
                wq = w[q, :].copy()
                w[p, :] = c * wp - sp * wq
                w[q, :] = np.conj(sp) * wp + c * wq
                w[p, q] = 0.0
                w[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - np.conj(sp) * vq
                v[:, q] = sp * vp + c * vq
    else:
        off = np.abs(w - np.diag(np.diag(w))).max() if n > 1 else 0.0
        if off > off_tol * scale:
            raise ConvergenceError(
                f"Jacobi did not converge in {max_sweeps} sweeps "
                f"(off-diagonal {off:.3e} > {off_tol * scale:.3e})"
            )

    evals = np.diag(w).real.copy()
    order = np.argsort(evals, kind="stable")
    evals = evals[order]
    vecs = v[:, order]

    # Deterministic basis inside numerically degenerate eigenvalue groups.
    tie_tol = max(off_tol * scale, 1e-300)
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and abs(evals[stop] - evals[start]) <= tie_tol:
            stop += 1
        if stop - start > 1:
            block = vecs[:, start:stop]
            q_block, _ = np.linalg.qr(block)
            vecs[:, start:stop] = q_block
        start = stop

    return evals, _phase_fix(vecs)


def dominant_eigvec(a: np.ndarray):
    """Largest eigenpair (lam_max, v) of a Hermitian PSD matrix, ||v|| = 1.

    The zero matrix is degenerate: returns (0.0, e_1).
    """
    a = np.asarray(a, dtype=complex)
    if np.abs(a).max() == 0.0:
        v = np.zeros(a.shape[0], dtype=complex)
        v[0] = 1.0
        return 0.0, v
    evals, vecs = hermitian_eig(a, symmetrize=True)
    return float(evals[-1]), vecs[:, -1].copy()


def trace_inner(a: np.ndarray, b: np.ndarray):
    """Tr(A^H B); the tiny imaginary residue of Hermitian pairs is dropped.

    Returns a float whenever |imag| <= 1e-12 * (1 + |value|), else complex.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise LinalgError(f"shape mismatch {a.shape} vs {b.shape}")
    val = complex(np.vdot(a, b))
    if abs(val.imag) <= 1e-12 * (1.0 + abs(val)):
        return float(val.real)
    return val


def projection_psd(a: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the Hermitian PSD cone.

    Hot path of the conic solver, so this uses LAPACK's eigh rather than
    the Jacobi routine above; the two are cross-checked in the tests.
    """
    a = np.asarray(a, dtype=complex)
    a = 0.5 * (a + a.conj().T)
    w, v = np.linalg.eigh(a)
    if w[0] >= 0.0:
        return a
    wp = np.clip(w, 0.0, None)
    return (v * wp) @ v.conj().T
