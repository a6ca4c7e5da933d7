"""Self-contained conic solver for the SDP subproblems.

Problem class: maximize an affine functional of Hermitian PSD matrix
variables and nonnegative scalar slacks, subject to affine trace
equalities/inequalities and linear-matrix-inequality blocks of the form

    const + sum_t coeff_t * L_t^H X_{v(t)} L_t + sum_j s_j * S_j  >=  0.

The algorithm is first-order operator splitting on the homogeneous
self-dual embedding (ADMM with over-relaxation): each iteration does one
linear solve against a cached factor of (I + A^T A) plus Euclidean cone
projections. Hermitian matrices are handled natively through an
orthonormal real vectorization (diagonal, then sqrt(2)-scaled real and
imaginary upper-triangle parts), under which the PSD cone is self-dual
and projection reduces to an eigenvalue clip. Problems here are small
(matrices up to ~31 x 31, tens of constraints), so the dense factor and
blockwise-uniform Ruiz equilibration are cheap, and determinism is exact:
no randomness, fixed iteration order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 50_000
INFEAS_TOL = 1e-9
CHECK_EVERY = 25
RELAXATION = 1.5


# ---------------------------------------------------------------------------
# Hermitian vectorization


def svec_indices(n: int):
    iu, ju = np.triu_indices(n, 1)
    return iu, ju


def svec(a: np.ndarray) -> np.ndarray:
    """Orthonormal real coordinates of a Hermitian matrix; preserves the
    trace inner product: svec(A) . svec(B) = Tr(A B)."""
    n = a.shape[0]
    iu, ju = svec_indices(n)
    off = a[iu, ju]
    return np.concatenate([np.diag(a).real,
                           np.sqrt(2.0) * off.real,
                           np.sqrt(2.0) * off.imag])


def smat(x: np.ndarray, n: int) -> np.ndarray:
    """Inverse of svec."""
    iu, ju = svec_indices(n)
    k = iu.size
    a = np.zeros((n, n), dtype=complex)
    a[np.arange(n), np.arange(n)] = x[:n]
    off = (x[n:n + k] + 1j * x[n + k:n + 2 * k]) / np.sqrt(2.0)
    a[iu, ju] = off
    a[ju, iu] = off.conj()
    return a


def _basis_stack(n: int) -> np.ndarray:
    """All n^2 orthonormal Hermitian basis matrices, stacked (n^2, n, n)."""
    iu, ju = svec_indices(n)
    k = iu.size
    out = np.zeros((n * n, n, n), dtype=complex)
    r = np.arange(n)
    out[r, r, r] = 1.0
    s = 1.0 / np.sqrt(2.0)
    rows = np.arange(k)
    out[n + rows, iu, ju] = s
    out[n + rows, ju, iu] = s
    out[n + k + rows, iu, ju] = 1j * s
    out[n + k + rows, ju, iu] = -1j * s
    return out


def _svec_batch(mats: np.ndarray) -> np.ndarray:
    """svec applied along the first axis of (r, n, n)."""
    n = mats.shape[1]
    iu, ju = svec_indices(n)
    off = mats[:, iu, ju]
    d = mats[:, np.arange(n), np.arange(n)].real
    return np.concatenate([d, np.sqrt(2.0) * off.real, np.sqrt(2.0) * off.imag], axis=1)


# ---------------------------------------------------------------------------
# Problem description


@dataclass(frozen=True)
class TraceConstraint:
    """sum_v Tr(matrix_coeffs[v] X_v) + sum_j scalar_coeffs[j] s_j (<=|==) rhs."""

    matrix_coeffs: dict
    rhs: float
    sense: str = "<="              # "<=" or "=="
    scalar_coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sense not in ("<=", "=="):
            raise ValueError(f"bad sense {self.sense!r}")


@dataclass(frozen=True)
class LMIBlock:
    """const + sum (coeff * L^H X_v L) + sum (s_j * S_j) >= 0 (PSD order)."""

    dim: int
    const: np.ndarray | None = None
    congruences: tuple = ()        # (var_name, L (n x dim), coeff)
    scalar_terms: tuple = ()       # (scalar_name, S (dim x dim) Hermitian)


@dataclass(frozen=True)
class Objective:
    """Affine objective (maximized): sum Tr(W_v X_v) + sum c_j s_j + const."""

    matrix_weights: dict = field(default_factory=dict)
    scalar_weights: dict = field(default_factory=dict)
    constant: float = 0.0


@dataclass(frozen=True)
class ConicProblem:
    matrix_vars: tuple            # ((name, dim), ...), every X_v is PSD-constrained
    scalar_vars: tuple            # (name, ...), every s_j >= 0
    objective: Objective
    constraints: tuple = ()
    lmis: tuple = ()


@dataclass
class ConicSolution:
    matrices: dict
    scalars: dict
    objective: float
    status: str                   # optimal | infeasible | unbounded | iteration-cap
    residuals: tuple              # (primal, dual, gap)
    iterations: int
    dual_y: np.ndarray | None = None
    slack_s: np.ndarray | None = None


# ---------------------------------------------------------------------------
# Standard-form assembly:  min c.x  s.t.  A x + s = b,  s in K


class _Cones:
    def __init__(self):
        self.n_eq = 0
        self.n_pos = 0
        self.psd_dims = []        # matrix dim per PSD block, in row order


class _StandardForm:
    def __init__(self, p: ConicProblem):
        self.problem = p
        self.var_offset = {}
        off = 0
        self.mat_dims = dict(p.matrix_vars)
        for name, dim in p.matrix_vars:
            self.var_offset[name] = off
            off += dim * dim
        for name in p.scalar_vars:
            self.var_offset[name] = off
            off += 1
        self.nx = off

        eq = [c for c in p.constraints if c.sense == "=="]
        ineq = [c for c in p.constraints if c.sense == "<="]
        cones = _Cones()
        cones.n_eq = len(eq)
        cones.n_pos = len(ineq) + len(p.scalar_vars)

        rows = []
        bs = []

        def trace_row(con):
            row = np.zeros(self.nx)
            for name, w in con.matrix_coeffs.items():
                dim = self.mat_dims[name]
                o = self.var_offset[name]
                w = np.asarray(w, dtype=complex)
                row[o:o + dim * dim] = svec(0.5 * (w + w.conj().T))
            for name, coef in con.scalar_coeffs.items():
                row[self.var_offset[name]] = coef
            return row

        for con in eq:
            rows.append(trace_row(con))
            bs.append(con.rhs)
        for con in ineq:
            rows.append(trace_row(con))
            bs.append(con.rhs)
        for name in p.scalar_vars:
            row = np.zeros(self.nx)
            row[self.var_offset[name]] = -1.0
            rows.append(row)
            bs.append(0.0)

        a_top = np.array(rows) if rows else np.zeros((0, self.nx))
        b_top = np.array(bs)

        psd_blocks = []
        basis_cache = {}

        def basis(n):
            if n not in basis_cache:
                basis_cache[n] = _basis_stack(n)
            return basis_cache[n]

        for name, dim in p.matrix_vars:
            block = np.zeros((dim * dim, self.nx))
            o = self.var_offset[name]
            block[:, o:o + dim * dim] = -np.eye(dim * dim)
            psd_blocks.append((block, np.zeros(dim * dim)))
            cones.psd_dims.append(dim)

        for lmi in p.lmis:
            d = lmi.dim
            block = np.zeros((d * d, self.nx))
            for name, lmat, coeff in lmi.congruences:
                n = self.mat_dims[name]
                lmat = np.asarray(lmat, dtype=complex)
                if lmat.shape != (n, d):
                    raise ValueError(
                        f"congruence map for {name} must be ({n}, {d}), got {lmat.shape}")
                mapped = np.einsum("ni,rnm,md->rid", lmat.conj(), basis(n), lmat,
                                   optimize=True)
                o = self.var_offset[name]
                block[:, o:o + n * n] -= coeff * _svec_batch(mapped).T
            for name, smatx in lmi.scalar_terms:
                smatx = np.asarray(smatx, dtype=complex)
                block[:, self.var_offset[name]] -= svec(smatx)
            const = np.zeros((d, d), dtype=complex) if lmi.const is None \
                else np.asarray(lmi.const, dtype=complex)
            psd_blocks.append((block, svec(const)))
            cones.psd_dims.append(d)

        if psd_blocks:
            a_psd = np.concatenate([blk for blk, _ in psd_blocks], axis=0)
            b_psd = np.concatenate([bb for _, bb in psd_blocks])
            self.A = np.concatenate([a_top, a_psd], axis=0)
            self.b = np.concatenate([b_top, b_psd])
        else:
            self.A = a_top
            self.b = b_top
        self.cones = cones

        c = np.zeros(self.nx)
        for name, w in p.objective.matrix_weights.items():
            dim = self.mat_dims[name]
            o = self.var_offset[name]
            w = np.asarray(w, dtype=complex)
            c[o:o + dim * dim] = svec(0.5 * (w + w.conj().T))
        for name, coef in p.objective.scalar_weights.items():
            c[self.var_offset[name]] = coef
        self.c = -c                      # maximize -> minimize

    # -- cone projections -------------------------------------------------

    def project_dual(self, y: np.ndarray) -> np.ndarray:
        """Projection onto K* = R^eq x R+^pos x PSD x ..."""
        out = y.copy()
        base = self.cones.n_eq
        stop = base + self.cones.n_pos
        np.clip(out[base:stop], 0.0, None, out=out[base:stop])
        self._project_psd_part(out, stop)
        return out

    def project_primal_cone(self, s: np.ndarray) -> np.ndarray:
        """Projection onto K = {0}^eq x R+^pos x PSD x ..."""
        out = s.copy()
        out[:self.cones.n_eq] = 0.0
        base = self.cones.n_eq
        stop = base + self.cones.n_pos
        np.clip(out[base:stop], 0.0, None, out=out[base:stop])
        self._project_psd_part(out, stop)
        return out

    def _psd_groups(self, start: int):
        """Cache per-dimension gather indices for batched projections."""
        if not hasattr(self, "_psd_group_cache"):
            by_dim = {}
            off = start
            for d in self.cones.psd_dims:
                by_dim.setdefault(d, []).append(off)
                off += d * d
            cache = []
            for d, offsets in sorted(by_dim.items()):
                gather = np.asarray(offsets)[:, None] + np.arange(d * d)[None, :]
                cache.append((d, gather, svec_indices(d)))
            self._psd_group_cache = cache
        return self._psd_group_cache

    def _project_psd_part(self, vec: np.ndarray, start: int) -> None:
        sqrt2 = np.sqrt(2.0)
        for d, gather, (iu, ju) in self._psd_groups(start):
            if d == 1:
                idx = gather[:, 0]
                np.clip(vec[idx], 0.0, None, out=vec[idx])
                continue
            flat = vec[gather]                      # (nb, d*d)
            nb = flat.shape[0]
            k = iu.size
            mats = np.zeros((nb, d, d), dtype=complex)
            r = np.arange(d)
            mats[:, r, r] = flat[:, :d]
            off = (flat[:, d:d + k] + 1j * flat[:, d + k:]) / sqrt2
            mats[:, iu, ju] = off
            mats[:, ju, iu] = off.conj()
            w, v = np.linalg.eigh(mats)
            np.clip(w, 0.0, None, out=w)
            proj = (v * w[:, None, :]) @ v.conj().transpose(0, 2, 1)
            out = np.empty((nb, d * d))
            out[:, :d] = proj[:, r, r].real
            poff = proj[:, iu, ju]
            out[:, d:d + k] = sqrt2 * poff.real
            out[:, d + k:] = sqrt2 * poff.imag
            vec[gather] = out


# ---------------------------------------------------------------------------
# Blockwise Ruiz equilibration (uniform inside each cone/variable block)


def _equilibrate(sf: _StandardForm, n_passes: int = 10):
    a = sf.A.copy()
    m, nx = a.shape

    row_groups = []
    for i in range(sf.cones.n_eq + sf.cones.n_pos):
        row_groups.append(np.array([i]))
    off = sf.cones.n_eq + sf.cones.n_pos
    for d in sf.cones.psd_dims:
        row_groups.append(np.arange(off, off + d * d))
        off += d * d

    col_groups = []
    for name, dim in sf.problem.matrix_vars:
        o = sf.var_offset[name]
        col_groups.append(np.arange(o, o + dim * dim))
    for name in sf.problem.scalar_vars:
        col_groups.append(np.array([sf.var_offset[name]]))

    d_row = np.ones(m)
    d_col = np.ones(nx)
    for _ in range(n_passes):
        for g in row_groups:
            peak = np.abs(a[g, :]).max()
            if peak > 0:
                a[g, :] /= np.sqrt(peak)
                d_row[g] /= np.sqrt(peak)
        for g in col_groups:
            peak = np.abs(a[:, g]).max()
            if peak > 0:
                a[:, g] /= np.sqrt(peak)
                d_col[g] /= np.sqrt(peak)
    return a, d_row, d_col


# ---------------------------------------------------------------------------
# Solver


def solve(p: ConicProblem, tol: float = DEFAULT_TOL,
          max_iter: int = DEFAULT_MAX_ITER,
          warm: ConicSolution | None = None) -> ConicSolution:
    """Solve the conic problem; deterministic for identical inputs.

    status "optimal" guarantees primal/dual/gap residuals <= tol and PSD
    iterates polished onto the cone; "infeasible"/"unbounded" return with
    the certificate residual in `residuals`; the iteration cap returns the
    best candidate found.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    sf = _StandardForm(p)
    a_sc, d_row, d_col = _equilibrate(sf)
    b_sc = d_row * sf.b
    c_sc = d_col * sf.c
    b_scale = max(np.linalg.norm(b_sc), 1.0)
    c_scale = max(np.linalg.norm(c_sc), 1.0)
    b_hat = b_sc / b_scale
    c_hat = c_sc / c_scale

    m, nx = a_sc.shape
    gram = a_sc.T @ a_sc
    gram[np.diag_indices(nx)] += 1.0
    gram_inv = np.linalg.inv(gram)
    gram_inv = 0.5 * (gram_inv + gram_inv.T)

    def m_solve(wx, wy):
        zx = gram_inv @ (wx - a_sc.T @ wy)
        zy = wy + a_sc @ zx
        return zx, zy

    h_x, h_y = c_hat, b_hat
    g_x, g_y = m_solve(h_x, h_y)
    h_dot_g = 1.0 + h_x @ g_x + h_y @ g_y

    # Homogeneous embedding state u = (x, y, tau), v = (0, s, kappa).
    ux = np.zeros(nx)
    uy = np.zeros(m)
    utau = 1.0
    vx = np.zeros(nx)
    vy = np.zeros(m)
    vkappa = 1.0
    if warm is not None and warm.dual_y is not None and warm.dual_y.shape == (m,):
        ux = _pack_variables(sf, warm) / (d_col * b_scale)
        uy = warm.dual_y / (d_row * c_scale)
        vy = d_row * warm.slack_s / b_scale
        vkappa = 0.0

    b_norm = np.linalg.norm(sf.b)
    c_norm = np.linalg.norm(sf.c)

    best = None
    status = "iteration-cap"
    iters_done = max_iter

    for it in range(1, max_iter + 1):
        wx = ux + vx
        wy = uy + vy
        wtau = utau + vkappa
        # (I + Q)^-1 via the Schur reduction against M = [[I, A^T], [-A, I]].
        px, py = m_solve(wx, wy)
        ztau = (wtau + h_x @ px + h_y @ py) / h_dot_g
        zx = px - ztau * g_x
        zy = py - ztau * g_y

        rx = RELAXATION * zx + (1 - RELAXATION) * ux
        ry = RELAXATION * zy + (1 - RELAXATION) * uy
        rtau = RELAXATION * ztau + (1 - RELAXATION) * utau

        ux_new = rx - vx                      # free block: projection is identity
        uy_new = sf.project_dual(ry - vy)
        utau_new = max(rtau - vkappa, 0.0)

        vx = vx - rx + ux_new
        vy = vy - ry + uy_new
        vkappa = vkappa - rtau + utau_new
        ux, uy, utau = ux_new, uy_new, utau_new

        if it % CHECK_EVERY != 0 and it != max_iter:
            continue

        if utau > 1e-10:
            x_cand = (ux / utau) * d_col * b_scale
            y_cand = (uy / utau) * d_row * c_scale
            s_cand = (vy / utau) / d_row * b_scale
            r_primal = np.linalg.norm(sf.A @ x_cand + s_cand - sf.b) / (1.0 + b_norm)
            r_dual = np.linalg.norm(sf.A.T @ y_cand + sf.c) / (1.0 + c_norm)
            p_obj = sf.c @ x_cand
            d_obj = sf.b @ y_cand
            gap = abs(p_obj + d_obj) / (1.0 + abs(p_obj) + abs(d_obj))
            cand = (max(r_primal, r_dual, gap), x_cand, y_cand, s_cand,
                    (r_primal, r_dual, gap))
            if best is None or cand[0] < best[0]:
                best = cand
            if r_primal <= tol and r_dual <= tol and gap <= tol:
                status = "optimal"
                iters_done = it
                best = cand
                break

        # Certificates (unscaled): y with A^T y ~ 0, b.y < 0 -> infeasible;
        # x with A x + s ~ 0, c.x < 0 -> unbounded.
        y_cert = uy * d_row * c_scale
        by = sf.b @ y_cert
        if by < -1e-12:
            r_inf = np.linalg.norm(sf.A.T @ y_cert) * max(b_norm, 1.0) / (-by)
            if r_inf <= max(INFEAS_TOL * 1e3, tol * 1e-1):
                status = "infeasible"
                iters_done = it
                best = (np.inf, None, y_cert, None, (r_inf, np.inf, np.inf))
                break
        x_cert = ux * d_col * b_scale
        cx = sf.c @ x_cert
        if cx < -1e-12:
            s_cert = sf.project_primal_cone(-(sf.A @ x_cert))
            r_unb = np.linalg.norm(sf.A @ x_cert + s_cert) * max(c_norm, 1.0) / (-cx)
            if r_unb <= max(INFEAS_TOL * 1e3, tol * 1e-1):
                status = "unbounded"
                iters_done = it
                best = (np.inf, x_cert, None, None, (np.inf, r_unb, np.inf))
                break
    else:
        iters_done = max_iter

    if status in ("infeasible", "unbounded"):
        return ConicSolution(matrices={}, scalars={}, objective=np.nan,
                             status=status, residuals=best[4],
                             iterations=iters_done)

    if best is None:
        return ConicSolution(matrices={}, scalars={}, objective=np.nan,
                             status="iteration-cap", residuals=(np.inf,) * 3,
                             iterations=iters_done)

    _, x_cand, y_cand, s_cand, resid = best
    matrices = {}
    for name, dim in p.matrix_vars:
        o = sf.var_offset[name]
        mat = smat(x_cand[o:o + dim * dim], dim)
        matrices[name] = _psd_polish(mat)
    scalars = {name: max(float(x_cand[sf.var_offset[name]]), 0.0)
               for name in p.scalar_vars}
    obj = p.objective.constant
    for name, w in p.objective.matrix_weights.items():
        obj += float(np.vdot(np.asarray(w).conj().T, matrices[name]).real)
    for name, coef in p.objective.scalar_weights.items():
        obj += coef * scalars[name]
    return ConicSolution(matrices=matrices, scalars=scalars, objective=obj,
                         status=status, residuals=resid, iterations=iters_done,
                         dual_y=y_cand, slack_s=s_cand)


def _psd_polish(mat: np.ndarray) -> np.ndarray:
    """Clip the tiny negative eigenvalues an ADMM iterate carries."""
    mat = 0.5 * (mat + mat.conj().T)
    w, v = np.linalg.eigh(mat)
    if w.size == 0 or w[0] >= 0.0:
        return mat
    return (v * np.clip(w, 0.0, None)) @ v.conj().T


def _pack_variables(sf: _StandardForm, sol: ConicSolution) -> np.ndarray:
    x = np.zeros(sf.nx)
    for name, dim in sf.problem.matrix_vars:
        o = sf.var_offset[name]
        x[o:o + dim * dim] = svec(np.asarray(sol.matrices[name], dtype=complex))
    for name in sf.problem.scalar_vars:
        x[sf.var_offset[name]] = sol.scalars[name]
    return x


def dump_problem(p: ConicProblem, path: str) -> None:
    """Plain-text dump (dense coefficient matrices) for offline
    cross-checking against an external reference solver."""
    def fmt_mat(m):
        m = np.asarray(m, dtype=complex)
        lines = []
        for row in m:
            lines.append(" ".join(f"{z.real:+.12e}{z.imag:+.12e}j" for z in row))
        return "\n".join(lines)

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("conic-problem v1\n")
        fh.write(f"matrix_vars {len(p.matrix_vars)}\n")
        for name, dim in p.matrix_vars:
            fh.write(f"  {name} dim {dim}\n")
        fh.write(f"scalar_vars {len(p.scalar_vars)}\n")
        for name in p.scalar_vars:
            fh.write(f"  {name}\n")
        fh.write(f"objective constant {p.objective.constant:.17g}\n")
        for name, w in sorted(p.objective.matrix_weights.items()):
            fh.write(f"objective matrix {name}\n{fmt_mat(w)}\n")
        for name, coef in sorted(p.objective.scalar_weights.items()):
            fh.write(f"objective scalar {name} {coef:.17g}\n")
        for i, con in enumerate(p.constraints):
            fh.write(f"constraint {i} sense {con.sense} rhs {con.rhs:.17g}\n")
            for name, w in sorted(con.matrix_coeffs.items()):
                fh.write(f"  matrix {name}\n{fmt_mat(w)}\n")
            for name, coef in sorted(con.scalar_coeffs.items()):
                fh.write(f"  scalar {name} {coef:.17g}\n")
        for i, lmi in enumerate(p.lmis):
            fh.write(f"lmi {i} dim {lmi.dim}\n")
            if lmi.const is not None:
                fh.write(f"  const\n{fmt_mat(lmi.const)}\n")
            for name, lmat, coeff in lmi.congruences:
                fh.write(f"  congruence {name} coeff {coeff:.17g}\n{fmt_mat(lmat)}\n")
            for name, smatx in lmi.scalar_terms:
                fh.write(f"  scalar_term {name}\n{fmt_mat(smatx)}\n")
