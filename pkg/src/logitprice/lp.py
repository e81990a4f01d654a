"""Dense/sparse linear programming with a bounded-variable dual simplex.

Problems are stated as ``maximize c @ x`` subject to rows ``a_i @ x (<=|>=|=) rhs_i``
and ``lb <= x <= ub``.  The solver works on row activities ``r = A x`` with
bounds ``[rl, ru]``; a basis is described by the set of basic structural
columns and an equally sized set of tight rows, so only a small square
matrix (tight rows x basic columns) is ever inverted.  Its inverse is kept
up to date with rank-one and bordering updates and refactored periodically.

Presolve drops empty rows, scales each row to unit max-norm, and merges
duplicate rows.  Infinite variable bounds are replaced by a large artificial
box; an optimum resting on an artificial bound is reported as unbounded.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.linalg.blas import dger

BASIC, AT_LOWER, AT_UPPER = 0, 1, 2

PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-10
ROW_TOL = 1e-7
ARTIFICIAL_BOUND = 1e9
REFACTOR_EVERY = 50
STALL_LIMIT = 200
PERTURBATION = 1e-7


class LpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL_FAILURE = "NumericalFailure"


class NumericalFailure(RuntimeError):
    """Raised internally when the factorization breaks down."""


_SENSES = {"<=": "<=", "L": "<=", "le": "<=", ">=": ">=", "G": ">=", "ge": ">=",
           "=": "=", "==": "=", "E": "=", "eq": "="}


@dataclass(eq=False)
class LinearProgram:
    """``maximize objective @ x`` subject to ``A x (senses) rhs`` and ``lb <= x <= ub``.

    ``A`` may be a dense array or any scipy sparse matrix.  ``lb`` defaults
    to zero and ``ub`` to ``+inf``.
    """

    objective: np.ndarray
    A: object = None
    senses: Sequence[str] = ()
    rhs: np.ndarray = None
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        n = self.objective.size
        if self.A is None:
            self.A = sp.csr_matrix((0, n))
        elif sp.issparse(self.A):
            self.A = sp.csr_matrix(self.A, dtype=float)
        else:
            dense = np.asarray(self.A, dtype=float)
            self.A = sp.csr_matrix(dense.reshape(-1, n) if dense.size else (0, n))
        m = self.A.shape[0]
        if self.A.shape[1] != n:
            raise ValueError(f"A has {self.A.shape[1]} columns for {n} variables")
        try:
            self.senses = [_SENSES[s] for s in self.senses]
        except KeyError as exc:
            raise ValueError(f"unknown relation {exc.args[0]!r}") from None
        self.rhs = np.zeros(0) if self.rhs is None else np.asarray(self.rhs, dtype=float).ravel()
        if len(self.senses) != m or self.rhs.size != m:
            raise ValueError(f"need one relation and one rhs per row ({m} rows)")
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).ravel().copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel().copy()
        if self.lb.size != n or self.ub.size != n:
            raise ValueError("bounds must have one entry per variable")
        both = np.isfinite(self.lb) & np.isfinite(self.ub)
        if np.any(self.lb[both] > self.ub[both]):
            raise ValueError("lb > ub for some variables")

    @classmethod
    def from_rows(cls, objective, rows, lb=None, ub=None) -> "LinearProgram":
        """Build from a list of ``(coefficients, relation, rhs)`` triples."""
        objective = np.asarray(objective, dtype=float)
        if rows:
            A = np.array([np.asarray(a, dtype=float) for a, _, _ in rows])
            senses = [rel for _, rel, _ in rows]
            rhs = [r for _, _, r in rows]
        else:
            A, senses, rhs = None, [], []
        return cls(objective, A, senses, rhs, lb, ub)

    @property
    def num_vars(self) -> int:
        return self.objective.size

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    def row_bounds(self):
        rl = np.full(self.num_rows, -np.inf)
        ru = np.full(self.num_rows, np.inf)
        for k, s in enumerate(self.senses):
            if s in ("<=", "="):
                ru[k] = self.rhs[k]
            if s in (">=", "="):
                rl[k] = self.rhs[k]
        return rl, ru

    def max_violation(self, x) -> float:
        """Largest row violation scaled by ``1 + |rhs|`` (0 when feasible)."""
        if self.num_rows == 0:
            return 0.0
        act = self.A @ x
        rl, ru = self.row_bounds()
        viol = np.maximum(np.nan_to_num(rl - act, nan=0.0, neginf=0.0),
                          np.nan_to_num(act - ru, nan=0.0, neginf=0.0))
        return float(np.max(np.maximum(viol, 0.0) / (1.0 + np.abs(self.rhs))))


@dataclass(frozen=True)
class LpBasis:
    """Final simplex basis: basic variables and tight rows (original row indices)."""

    columns: np.ndarray
    rows: np.ndarray


@dataclass
class LpSolution:
    status: LpStatus
    x: Optional[np.ndarray] = None
    objective_value: Optional[float] = None
    duals: Optional[np.ndarray] = None
    dual_bound: Optional[float] = None
    iterations: int = 0
    message: str = ""
    basis: Optional[LpBasis] = None

    @property
    def optimal(self) -> bool:
        return self.status == LpStatus.OPTIMAL


@dataclass
class _Presolved:
    A: sp.csr_matrix
    rl: np.ndarray
    ru: np.ndarray
    row_of: np.ndarray        # presolved row index for each original row (-1 if dropped)
    row_scale: np.ndarray     # original row k == row_scale[k] * presolved row row_of[k]
    infeasible: bool = False


def _presolve(lp: LinearProgram) -> _Presolved:
    A = lp.A.copy()
    A.sum_duplicates()
    A.eliminate_zeros()
    m = A.shape[0]
    rl, ru = lp.row_bounds()
    row_of = np.full(m, -1)
    scale = np.ones(m)
    nnz = np.diff(A.indptr)
    empty = nnz == 0
    if np.any(empty):
        if np.any(rl[empty] > ROW_TOL * (1 + np.abs(rl[empty]))) or np.any(
            ru[empty] < -ROW_TOL * (1 + np.abs(ru[empty]))
        ):
            return _Presolved(A, rl, ru, row_of, scale, infeasible=True)
    keep = np.flatnonzero(~empty)
    if keep.size == 0:
        return _Presolved(sp.csr_matrix((0, A.shape[1])), np.zeros(0), np.zeros(0), row_of, scale)
    A = A[keep]
    rl, ru = rl[keep], ru[keep]
    # unit max-norm, first nonzero positive
    absmax = np.maximum.reduceat(np.abs(A.data), A.indptr[:-1])
    first = A.data[A.indptr[:-1]]
    s = np.where(first < 0, -1.0, 1.0) / absmax
    A = sp.diags(s) @ A
    A = sp.csr_matrix(A)
    A.sort_indices()
    lo = np.where(s > 0, rl * s, ru * s)
    hi = np.where(s > 0, ru * s, rl * s)
    # duplicate rows: key on (column pattern, coefficients rounded to 12 digits)
    width = int(np.diff(A.indptr).max())
    k = A.shape[0]
    keys = np.full((k, 2 * width), -1.0)
    counts = np.diff(A.indptr)
    rows = np.repeat(np.arange(k), counts)
    slot = np.arange(A.data.size) - np.repeat(A.indptr[:-1], counts)
    keys[rows, slot] = A.indices
    keys[rows, width + slot] = np.round(A.data, 12)
    _, first_idx, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    g = first_idx.size
    glo = np.full(g, -np.inf)
    ghi = np.full(g, np.inf)
    np.maximum.at(glo, inverse, lo)
    np.minimum.at(ghi, inverse, hi)
    if np.any(glo > ghi + PRIMAL_TOL * (1 + np.abs(glo))):
        return _Presolved(A, rl, ru, row_of, scale, infeasible=True)
    # keep group representatives in original order for determinism
    order = np.argsort(first_idx, kind="stable")
    rank = np.empty(g, dtype=int)
    rank[order] = np.arange(g)
    Ap = A[first_idx[order]]
    row_of[keep] = rank[inverse]
    scale[keep] = 1.0 / s
    return _Presolved(sp.csr_matrix(Ap), glo[order], ghi[order], row_of, scale)


def _sub_outer(M: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``M -= outer(u, v)`` in place (BLAS rank-one update on the transposed view)."""
    if M.size and M.flags.c_contiguous and M.dtype == np.float64:
        dger(-1.0, np.array(v, dtype=float), np.array(u, dtype=float), a=M.T, overwrite_a=1)
    else:
        M -= np.outer(u, v)
    return M


def _drop(M: np.ndarray, s: int, t: int) -> np.ndarray:
    """``M`` without row ``s`` and column ``t``, minus the matching rank-one correction."""
    keep_r = np.flatnonzero(np.arange(M.shape[0]) != s)
    keep_c = np.flatnonzero(np.arange(M.shape[1]) != t)
    out = M[np.ix_(keep_r, keep_c)]
    return _sub_outer(out, M[keep_r, t] / M[s, t], M[s, keep_c])


class _DualSimplex:
    """Bounded dual simplex on ``max c x, rl <= A x <= ru, lb <= x <= ub``."""

    def __init__(self, A: sp.csr_matrix, c, lb, ub, rl, ru, row_tol):
        self.A = A
        self.AT = sp.csr_matrix(A.T)
        self.Acsc = sp.csc_matrix(A)
        self.c = c
        self.m, self.n = A.shape
        self.lb = lb
        self.ub = ub
        self.rl = rl
        self.ru = ru
        self.row_tol = row_tol
        self.var_tol = PRIMAL_TOL * (1 + np.minimum(np.abs(np.nan_to_num(lb)), np.abs(np.nan_to_num(ub))))
        self.vstat = np.where(c > 0, AT_UPPER, AT_LOWER).astype(np.int8)
        self.rstat = np.zeros(self.m, dtype=np.int8)
        self.SB = np.zeros(0, dtype=int)
        self.RN = np.zeros(0, dtype=int)
        self.Minv = np.zeros((0, 0))
        self.x = np.where(self.vstat == AT_UPPER, ub, lb).astype(float)
        self.r = A @ self.x
        self.iterations = 0
        self.updates = 0

    # -- linear algebra -------------------------------------------------
    def _row_dense(self, i) -> np.ndarray:
        a = np.zeros(self.n)
        s, e = self.A.indptr[i], self.A.indptr[i + 1]
        a[self.A.indices[s:e]] = self.A.data[s:e]
        return a

    def _col_on_rn(self, j) -> np.ndarray:
        """Column ``j`` of A restricted to the tight rows, in RN order."""
        out = np.zeros(self.RN.size)
        s, e = self.Acsc.indptr[j], self.Acsc.indptr[j + 1]
        rows = self.Acsc.indices[s:e]
        pos = self.rn_pos[rows]
        ok = pos >= 0
        out[pos[ok]] = self.Acsc.data[s:e][ok]
        return out

    def _index(self):
        self.rn_pos = np.full(self.m, -1)
        self.rn_pos[self.RN] = np.arange(self.RN.size)
        self.sb_pos = np.full(self.n, -1)
        self.sb_pos[self.SB] = np.arange(self.SB.size)

    def refactor(self):
        self._index()
        k = self.SB.size
        if k == 0:
            self.Minv = np.zeros((0, 0))
        else:
            M = self.A[self.RN][:, self.SB].toarray()
            try:
                self.Minv = np.linalg.inv(M)
            except np.linalg.LinAlgError as exc:
                raise NumericalFailure("singular basis") from exc
            if not np.all(np.isfinite(self.Minv)):
                raise NumericalFailure("non-finite basis inverse")
        self.updates = 0

    def compute_primal(self):
        x = np.where(self.vstat == AT_UPPER, self.ub, self.lb).astype(float)
        if self.SB.size:
            x[self.SB] = 0.0
            bound = np.where(self.rstat[self.RN] == AT_UPPER, self.ru[self.RN], self.rl[self.RN])
            ax = self.A @ x
            x[self.SB] = self.Minv @ (bound - ax[self.RN])
        self.x = x
        self.r = self.A @ x

    def compute_duals(self):
        y = self.c[self.SB] @ self.Minv if self.SB.size else np.zeros(0)
        yfull = np.zeros(self.m)
        yfull[self.RN] = y
        self.y = yfull
        self.d = self.c - self.AT @ yfull
        if self.SB.size:
            self.d[self.SB] = 0.0

    # -- pricing ----------------------------------------------------------
    def primal_infeasibilities(self):
        """Return (kind, index, violation, direction) of the worst violation or None."""
        best = None
        if self.SB.size:
            xb = self.x[self.SB]
            lo = self.lb[self.SB] - xb
            hi = xb - self.ub[self.SB]
            tol = self.var_tol[self.SB]
            v = np.maximum(lo, hi)
            v = np.where(v > tol, v, 0.0)
            k = int(np.argmax(v))
            if v[k] > 0:
                best = ("var", int(self.SB[k]), float(v[k]), 1 if lo[k] > hi[k] else -1)
        basic_rows = self.rstat == BASIC
        lo = np.where(basic_rows, self.rl - self.r, -np.inf)
        hi = np.where(basic_rows, self.r - self.ru, -np.inf)
        v = np.maximum(lo, hi)
        v = np.where(v > self.row_tol, v, 0.0)
        k = int(np.argmax(v)) if self.m else 0
        if self.m and v[k] > 0 and (best is None or v[k] > best[2]):
            best = ("row", k, float(v[k]), 1 if lo[k] > hi[k] else -1)
        return best

    def first_infeasibility(self):
        """Bland-style choice: lowest index among violated basics (variables first)."""
        if self.SB.size:
            xb = self.x[self.SB]
            lo = self.lb[self.SB] - xb
            hi = xb - self.ub[self.SB]
            bad = np.maximum(lo, hi) > self.var_tol[self.SB]
            if np.any(bad):
                cand = self.SB[bad]
                j = int(cand.min())
                s = self.sb_pos[j]
                return ("var", j, float(max(lo[s], hi[s])), 1 if lo[s] > hi[s] else -1)
        basic_rows = self.rstat == BASIC
        lo = np.where(basic_rows, self.rl - self.r, -np.inf)
        hi = np.where(basic_rows, self.r - self.ru, -np.inf)
        bad = np.flatnonzero(np.maximum(lo, hi) > self.row_tol)
        if bad.size:
            i = int(bad[0])
            return ("row", i, float(max(lo[i], hi[i])), 1 if lo[i] > hi[i] else -1)
        return None

    # -- one iteration ----------------------------------------------------
    def tableau_row(self, kind, idx):
        """Coefficients of the leaving basic on nonbasic columns and tight rows."""
        if kind == "var":
            s = self.sb_pos[idx]
            rho = self.Minv[s].copy()
            tmp = np.zeros(self.m)
            tmp[self.RN] = rho
            alpha_v = -(self.AT @ tmp)
            return alpha_v, rho, None
        a_i = self._row_dense(idx)
        u = a_i[self.SB] @ self.Minv if self.SB.size else np.zeros(0)
        tmp = np.zeros(self.m)
        tmp[self.RN] = u
        alpha_v = a_i - self.AT @ tmp
        return alpha_v, u, a_i

    def ratio_test(self, alpha_v, alpha_r, direction, bland):
        nb = self.vstat != BASIC
        free_v = nb & (self.ub > self.lb)
        cand_v = np.flatnonzero(free_v)
        st_v = self.vstat[cand_v]
        av = alpha_v[cand_v]
        dv = self.d[cand_v]
        rn = self.RN
        st_r = self.rstat[rn]
        ranged = self.ru[rn] > self.rl[rn]
        ar = alpha_r
        dr = self.y[rn]

        stat = np.concatenate([st_v, st_r])
        alpha = np.concatenate([av, ar])
        dvals = np.concatenate([dv, dr])
        movable = np.concatenate([np.ones(cand_v.size, bool), ranged])
        lower = stat == AT_LOWER
        sa = direction * alpha
        elig = movable & np.where(lower, sa > PIVOT_TOL, sa < -PIVOT_TOL)
        if not np.any(elig):
            return None
        e = np.flatnonzero(elig)
        a_abs = np.abs(alpha[e])
        dd = np.where(lower[e], np.maximum(-dvals[e], 0.0), np.maximum(dvals[e], 0.0))
        ratios = dd / a_abs
        if bland:
            tmin = ratios.min()
            ties = e[ratios <= tmin + 1e-12]
            # lowest global index: structurals first, then rows
            gidx = np.concatenate([cand_v, self.n + rn])
            pick = ties[int(np.argmin(gidx[ties]))]
        else:
            theta = np.min((dd + DUAL_TOL) / a_abs)
            ok = ratios <= theta
            pick = e[ok][int(np.argmax(a_abs[ok]))]
        step = float(ratios[np.flatnonzero(e == pick)[0]])
        if pick < cand_v.size:
            return ("var", int(cand_v[pick]), float(alpha[pick]), step)
        t = pick - cand_v.size
        return ("row", int(rn[t]), float(alpha[pick]), step)

    def pivot(self, leave, enter, alpha_r, a_leave_row):
        lkind, lidx, direction = leave
        ekind, eidx = enter
        new_leave_stat = AT_LOWER if direction > 0 else AT_UPPER
        Minv = self.Minv
        if lkind == "var":
            s = self.sb_pos[lidx]
            if ekind == "var":
                w = Minv @ self._col_on_rn(eidx)
                if abs(w[s]) < PIVOT_TOL:
                    raise NumericalFailure("tiny pivot")
                rs = Minv[s] / w[s]
                _sub_outer(Minv, w, rs)
                Minv[s] = rs
                self.SB[s] = eidx
            else:
                t = self.rn_pos[eidx]
                piv = Minv[s, t]
                if abs(piv) < PIVOT_TOL:
                    raise NumericalFailure("tiny pivot")
                self.Minv = _drop(Minv, s, t)
                self.SB = np.delete(self.SB, s)
                self.RN = np.delete(self.RN, t)
                self.rstat[eidx] = BASIC
            self.vstat[lidx] = new_leave_stat
            if ekind == "var":
                self.vstat[eidx] = BASIC
        else:
            u = alpha_r  # a_leave[SB] @ Minv
            if ekind == "var":
                col = self._col_on_rn(eidx) if self.SB.size else np.zeros(0)
                w = Minv @ col if self.SB.size else np.zeros(0)
                sigma = a_leave_row[eidx] - (a_leave_row[self.SB] @ w if self.SB.size else 0.0)
                if abs(sigma) < PIVOT_TOL:
                    raise NumericalFailure("tiny pivot")
                k = self.SB.size
                new = np.empty((k + 1, k + 1))
                new[:k, :k] = _sub_outer(Minv, w, -u / sigma)
                new[:k, k] = -w / sigma
                new[k, :k] = -u / sigma
                new[k, k] = 1.0 / sigma
                self.Minv = new
                self.SB = np.append(self.SB, eidx)
                self.RN = np.append(self.RN, lidx)
                self.vstat[eidx] = BASIC
            else:
                t = self.rn_pos[eidx]
                if abs(u[t]) < PIVOT_TOL:
                    raise NumericalFailure("tiny pivot")
                v = u / u[t]
                v[t] -= 1.0 / u[t]
                _sub_outer(Minv, Minv[:, t].copy(), v)
                self.RN[t] = lidx
                self.rstat[eidx] = BASIC
            self.rstat[lidx] = new_leave_stat
        self.updates += 1
        if self.updates >= REFACTOR_EVERY:
            self.refactor()
        else:
            self._index()

    def install(self, cols, rows) -> bool:
        """Start from basic columns ``cols`` and tight rows ``rows``.

        A nonsingular square part is kept (column-pivoted QR), tight rows
        whose multiplier points at an infinite side are released, and the
        nonbasic variables are put on the side their reduced cost favors, so
        the result is dual feasible.  Returns False (and leaves the empty
        basis) if nothing usable remains.
        """
        cols = np.unique(np.asarray(cols, dtype=int))
        rows = np.unique(np.asarray(rows, dtype=int))
        cols = cols[(cols >= 0) & (cols < self.n)]
        rows = rows[(rows >= 0) & (rows < self.m)]
        if cols.size == 0 or rows.size == 0:
            return False
        M = self.A[rows][:, cols].toarray()
        _, R, P = sla.qr(M, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        if diag.size == 0 or diag[0] == 0.0:
            return False
        rank = int(np.sum(diag > 1e-9 * diag[0]))
        keep_c = np.sort(P[:rank])
        _, _, P = sla.qr(M[:, keep_c].T, mode="economic", pivoting=True)
        keep_r = np.sort(P[:rank])
        self.SB = cols[keep_c]
        self.RN = rows[keep_r]
        self.vstat[self.SB] = BASIC
        self.rstat[self.RN] = AT_UPPER
        try:
            self.refactor()
            self._dual_feasible()
        except NumericalFailure:
            self._reset()
            return False
        return True

    def _reset(self):
        self.vstat = np.where(self.c > 0, AT_UPPER, AT_LOWER).astype(np.int8)
        self.rstat[:] = BASIC
        self.SB = np.zeros(0, dtype=int)
        self.RN = np.zeros(0, dtype=int)
        self.refactor()

    def _dual_feasible(self):
        """Pick row sides and nonbasic bounds by the sign of the multipliers."""
        while True:
            self.compute_duals()
            if not self.RN.size:
                break
            y = self.y[self.RN]
            up = np.isfinite(self.ru[self.RN])
            lo = np.isfinite(self.rl[self.RN])
            bad = ((y > DUAL_TOL) & ~up) | ((y < -DUAL_TOL) & ~lo)
            if not np.any(bad):
                side = np.where(y > DUAL_TOL, AT_UPPER, np.where(y < -DUAL_TOL, AT_LOWER,
                                                                  np.where(up, AT_UPPER, AT_LOWER)))
                self.rstat[self.RN] = side
                break
            t = int(np.argmax(np.where(bad, np.abs(y), -1.0)))
            s = int(np.argmax(np.abs(self.Minv[:, t])))
            if abs(self.Minv[s, t]) < PIVOT_TOL:
                raise NumericalFailure("tiny pivot")
            self.Minv = _drop(self.Minv, s, t)
            self.vstat[self.SB[s]] = AT_LOWER
            self.rstat[self.RN[t]] = BASIC
            self.SB = np.delete(self.SB, s)
            self.RN = np.delete(self.RN, t)
            self._index()
        nb = self.vstat != BASIC
        self.vstat[nb] = np.where(self.d[nb] > 0, AT_UPPER, AT_LOWER)

    def run(self, max_iter, basis=None):
        """Perturbed-cost phase followed by a clean-up phase on the true costs.

        ``basis`` is an optional ``(columns, rows)`` starting basis.
        """
        c_true = self.c
        warm = basis is not None and self.install(*basis)
        rng = np.random.default_rng(12345)
        eps = PERTURBATION * (1.0 + np.abs(c_true)) * (1.0 + rng.random(self.n))
        # push every reduced cost further into its dual-feasible side
        self.c = np.where(self.vstat == AT_UPPER, c_true + eps, c_true - eps)
        self.refactor()
        if warm:
            self._dual_feasible()
        self.compute_primal()
        self.compute_duals()
        outcome = self._iterate(max_iter)
        self.c = c_true
        if outcome != "optimal":
            return outcome
        self.compute_duals()
        self._repair_dual()
        return self._iterate(max_iter)

    def _iterate(self, max_iter):
        self.compute_primal()
        self.compute_duals()
        bland = False
        stall = 0
        last_obj = np.inf
        verified = False
        while True:
            if self.iterations >= max_iter:
                raise NumericalFailure(f"pivot budget of {max_iter} exhausted")
            leave = self.first_infeasibility() if bland else self.primal_infeasibilities()
            if leave is None:
                if verified:
                    return "optimal"
                # fresh factorization before declaring optimality
                self.refactor()
                self.compute_primal()
                self.compute_duals()
                self._repair_dual()
                verified = True
                continue
            verified = False
            kind, idx, _, direction = leave
            alpha_v, alpha_r, a_row = self.tableau_row(kind, idx)
            choice = self.ratio_test(alpha_v, alpha_r, direction, bland)
            if choice is None:
                if self.updates:
                    self.refactor()
                    self.compute_primal()
                    self.compute_duals()
                    continue
                return "infeasible"
            ekind, eidx, _, step = choice
            self.pivot((kind, idx, direction), (ekind, eidx), alpha_r, a_row)
            self.iterations += 1
            self.compute_primal()
            self.compute_duals()
            obj = float(self.c @ self.x)
            if step <= 1e-14 and abs(obj - last_obj) <= 1e-13 * (1 + abs(obj)):
                stall += 1
                if stall >= STALL_LIMIT:
                    bland = True
            else:
                stall = 0
            last_obj = obj

    def _repair_dual(self):
        """Flip boxed nonbasic variables whose reduced cost has the wrong sign."""
        nb = self.vstat != BASIC
        wrong_lo = nb & (self.vstat == AT_LOWER) & (self.d > DUAL_TOL)
        wrong_hi = nb & (self.vstat == AT_UPPER) & (self.d < -DUAL_TOL)
        if np.any(wrong_lo | wrong_hi):
            self.vstat[wrong_lo] = AT_UPPER
            self.vstat[wrong_hi] = AT_LOWER
            self.compute_primal()


def solve_lp(lp: LinearProgram, max_iter: Optional[int] = None,
             basis: Optional[LpBasis] = None) -> LpSolution:
    """Solve ``lp`` and return a certified status.

    On ``Optimal`` the point satisfies every row to ``1e-7 * (1 + |rhs|)`` and
    the bounds to ``1e-9``.  ``dual_bound`` is the Lagrangian bound
    ``sum_j max_{x_j in [lb, ub]} d_j x_j + sum_i max_{r_i in [rl, ru]} y_i r_i``
    evaluated at the final multipliers; it is a valid upper bound on the
    optimum regardless of simplex round-off.

    ``basis`` (for instance the ``basis`` of an earlier solve of a similar
    LP) seeds the simplex; columns or rows out of range are ignored and an
    unusable basis falls back to the default start.
    """
    n = lp.num_vars
    c = lp.objective
    lb = lp.lb.copy()
    ub = lp.ub.copy()
    if np.any(lb > ub + PRIMAL_TOL * (1 + np.abs(lb))):
        return LpSolution(LpStatus.INFEASIBLE, message="inconsistent variable bounds")
    pre = _presolve(lp)
    if pre.infeasible:
        return LpSolution(LpStatus.INFEASIBLE, message="presolve detected inconsistent rows")
    art_lo = ~np.isfinite(lb)
    art_hi = ~np.isfinite(ub)
    lb_w = np.where(art_lo, -ARTIFICIAL_BOUND, lb)
    ub_w = np.where(art_hi, ARTIFICIAL_BOUND, ub)
    m = pre.A.shape[0]
    # row tolerance in the scaled space tight enough for the unscaled contract
    row_tol = np.full(m, PRIMAL_TOL)
    if m:
        orig_rhs = np.abs(lp.rhs)
        kept = np.flatnonzero(pre.row_of >= 0)
        contract = 0.1 * ROW_TOL * (1.0 + orig_rhs[kept]) / np.abs(pre.row_scale[kept])
        np.minimum.at(row_tol, pre.row_of[kept], contract)
        row_tol = np.maximum(row_tol, 1e-13)
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000
    solver = _DualSimplex(pre.A, c, lb_w, ub_w, pre.rl, pre.ru, row_tol)
    start = None
    if basis is not None and m:
        rows = np.asarray(basis.rows, dtype=int)
        rows = rows[(rows >= 0) & (rows < lp.num_rows)]
        rows = pre.row_of[rows]
        start = (basis.columns, rows[rows >= 0])
    try:
        outcome = solver.run(max_iter, start)
    except NumericalFailure as exc:
        return LpSolution(LpStatus.NUMERICAL_FAILURE, iterations=solver.iterations, message=str(exc))
    if outcome == "infeasible":
        return LpSolution(LpStatus.INFEASIBLE, iterations=solver.iterations)

    x = solver.x.copy()
    d = solver.d
    at_art = ((solver.vstat == AT_LOWER) & art_lo) | ((solver.vstat == AT_UPPER) & art_hi)
    if np.any(at_art & (np.abs(d) > DUAL_TOL)) or np.any(np.abs(x) >= 0.5 * ARTIFICIAL_BOUND):
        return LpSolution(LpStatus.UNBOUNDED, iterations=solver.iterations)
    x = np.clip(x, lb, ub)
    viol = lp.max_violation(x)
    if viol > ROW_TOL:
        return LpSolution(
            LpStatus.NUMERICAL_FAILURE, iterations=solver.iterations,
            message=f"row violation {viol:.3g} after optimality",
        )

    # duals of presolved rows mapped back to the original rows
    y_pre = solver.y
    duals = np.zeros(lp.num_rows)
    rep = np.full(m, lp.num_rows)        # first original row behind each presolved row
    if m:
        kept = np.flatnonzero(pre.row_of >= 0)
        np.minimum.at(rep, pre.row_of[kept], kept)
        duals[rep] = y_pre / pre.row_scale[rep]
    dual_bound = _lagrangian_bound(c, pre.A, lb, ub, pre.rl, pre.ru, y_pre)
    obj = float(c @ x)
    return LpSolution(
        LpStatus.OPTIMAL, x=x, objective_value=obj, duals=duals,
        dual_bound=max(dual_bound, obj), iterations=solver.iterations,
        basis=LpBasis(np.sort(solver.SB), np.sort(rep[solver.RN])),
    )


def _lagrangian_bound(c, A, lb, ub, rl, ru, y) -> float:
    # any multipliers give a bound; drop signs that would make it infinite
    y = np.where((y > 0) & ~np.isfinite(ru), 0.0, y)
    y = np.where((y < 0) & ~np.isfinite(rl), 0.0, y)
    d = c - A.T @ y

    def term(coef, lo, hi):
        with np.errstate(invalid="ignore"):
            pos = np.where(coef > 0, coef * hi, 0.0)
            neg = np.where(coef < 0, coef * lo, 0.0)
        vals = pos + neg
        vals = np.where(coef == 0, 0.0, vals)
        return float(np.sum(vals))

    return term(d, lb, ub) + term(y, rl, ru)
