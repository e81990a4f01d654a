"""LP overestimator of expected revenue over a box of prices.

With ``f_knl(p) = sum_j exp(V_jnl - V_knl)`` convex and ``tau = 1 / f``, revenue
is ``sum w_ln * tau_knl * p_k``.  The relaxation introduces ``W_kjnl``
standing for ``tau_knl * p_j`` and keeps

* ``A p >= b``;
* ``tau * (f(a) + grad f(a) (p - a)) <= 1`` for every pool point ``a``
  (supporting hyperplanes of the convex ``f``, multiplied by ``tau > 0``);
* every polytope row ``g p >= h`` (the ``A`` rows and the box rows) multiplied
  by ``tau``, ``tau - LB_tau`` and ``UB_tau - tau``;
* McCormick envelopes of ``W = tau * p``.

Any price vector ``p`` in the box, together with ``tau = 1 / f(p)`` and
``W = tau p``, satisfies every row, so the LP optimum bounds revenue from
above.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .lp import LinearProgram, LpBasis, LpSolution, LpStatus, solve_lp
from .model import (
    MixedLogitInstance,
    f_gradients,
    log_ratio_denominators,
    ratio_denominators,
)

VERTEX_LIMIT = 20
POOL_CAPACITY = 20
POOL_DEDUP_TOL = 1e-9
DROP_REL = 1e-10


class ConfigurationError(ValueError):
    pass


class RelaxationFailure(RuntimeError):
    """The relaxation LP broke down numerically."""


@dataclass(frozen=True)
class NodeBox:
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        lb = np.array(self.lb, dtype=float)
        ub = np.array(self.ub, dtype=float)
        if lb.shape != ub.shape or lb.ndim != 1:
            raise ValueError("lb and ub must be vectors of the same length")
        if np.any(lb > ub):
            raise ValueError("box has lb > ub")
        lb.setflags(write=False)
        ub.setflags(write=False)
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)

    @classmethod
    def of(cls, inst: MixedLogitInstance) -> "NodeBox":
        return cls(inst.price_lb, inst.price_ub)

    @property
    def widths(self) -> np.ndarray:
        return self.ub - self.lb

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lb + self.ub)

    @property
    def half_diagonal(self) -> float:
        return 0.5 * float(np.linalg.norm(self.widths))

    def contains(self, p, tol: float = 0.0) -> bool:
        p = np.asarray(p)
        return bool(np.all(p >= self.lb - tol) and np.all(p <= self.ub + tol))

    def vertices(self) -> np.ndarray:
        m = self.lb.size
        if m > VERTEX_LIMIT:
            raise ConfigurationError(
                f"{m} prices give 2^{m} box vertices; use the interval bound instead"
            )
        corners = np.array(list(itertools.product((0, 1), repeat=m)), dtype=bool)
        return np.where(corners, self.ub, self.lb)


class PointPool:
    """Anchor points of the supporting hyperplanes, newest last, at most ``capacity``."""

    def __init__(self, points=(), capacity: int = POOL_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._points: list = []
        for p in points:
            self.add(p)

    def add(self, p) -> bool:
        p = np.array(p, dtype=float)
        for q in self._points:
            if np.max(np.abs(q - p)) <= POOL_DEDUP_TOL:
                return False
        self._points.append(p)
        if len(self._points) > self.capacity:
            del self._points[0]
        return True

    def copy(self) -> "PointPool":
        out = PointPool(capacity=self.capacity)
        out._points = [p.copy() for p in self._points]
        return out

    @property
    def points(self) -> list:
        return list(self._points)

    def __len__(self):
        return len(self._points)

    def __iter__(self):
        return iter(self._points)


@dataclass(frozen=True)
class TauBounds:
    """Bounds on ``tau = 1 / f`` per (priced k, customer n, class l).

    ``total_ub`` (shape (N, L)) bounds ``sum_k tau_knl``: one minus the
    least probability left to the unpriced alternatives.
    """

    lb: np.ndarray
    ub: np.ndarray
    total_ub: Optional[np.ndarray] = None


# -- tau bounds ----------------------------------------------------------------

def _priced_logf(inst, prices, idx=None):
    """``log f`` for priced alternatives (or ``idx``) at a batch of prices, shape (S, m, N, L)."""
    prices = np.atleast_2d(prices)
    idx = inst.priced_index if idx is None else idx
    beta = inst.price_coef[inst.priced_index]
    V = np.broadcast_to(inst.exo_utility, (prices.shape[0],) + inst.exo_utility.shape).copy()
    V[:, inst.priced_index] += beta[None] * prices[:, :, None, None]
    M = V.max(axis=1, keepdims=True)
    lse = np.log(np.exp(V - M).sum(axis=1, keepdims=True)) + M
    return (lse - V)[:, idx]


def tau_lower_bounds(inst: MixedLogitInstance, box: NodeBox, method: str = "vertex") -> np.ndarray:
    """``1 / max f`` over the box, per (k, n, l).

    ``vertex`` evaluates every box vertex (exact, since a convex function
    peaks at a vertex).  ``interval`` bounds each term of ``f`` separately by
    its largest value and works for any number of prices.
    """
    return _share_lower_bounds(inst, box, method, inst.priced_index)


def unpriced_share_lower_bound(inst: MixedLogitInstance, box: NodeBox, method: str = "vertex") -> np.ndarray:
    """Lower bound of the total choice probability of unpriced alternatives, shape (N, L)."""
    free = np.setdiff1d(np.arange(inst.n_alternatives), inst.priced_index)
    if free.size == 0:
        return np.zeros((inst.n_customers, inst.n_classes))
    return _share_lower_bounds(inst, box, method, free).sum(axis=0)


def _share_lower_bounds(inst, box, method, alts):
    if method == "vertex":
        m = box.lb.size
        if m > VERTEX_LIMIT:
            raise ConfigurationError(
                f"vertex enumeration needs 2^{m} evaluations; pass method='interval'"
            )
        best = None
        verts = box.vertices()
        for s in range(0, verts.shape[0], 4096):
            lf = _priced_logf(inst, verts[s:s + 4096], alts).max(axis=0)
            best = lf if best is None else np.maximum(best, lf)
        return np.exp(-best)
    if method == "interval":
        idx = inst.priced_index
        beta = np.zeros_like(inst.price_coef)
        beta[idx] = inst.price_coef[idx]
        lo = np.zeros(inst.n_alternatives)
        hi = np.zeros(inst.n_alternatives)
        lo[idx], hi[idx] = box.lb, box.ub
        Va = inst.exo_utility + beta * lo[:, None, None]
        Vb = inst.exo_utility + beta * hi[:, None, None]
        vmax = np.maximum(Va, Vb)
        vmin = np.minimum(Va, Vb)
        # log sum_j exp(vmax_j - vmin_k)
        M = vmax.max(axis=0)
        lse = np.log(np.exp(vmax - M).sum(axis=0)) + M
        return np.exp(-(lse[None] - vmin[alts]))
    raise ValueError(f"unknown method {method!r}")


def _logf_and_grad(inst, P):
    """``log f_knl`` and its gradient at per-(k, n, l) points ``P`` (m, N, L, m)."""
    idx = inst.priced_index
    m = idx.size
    beta = inst.price_coef[idx]                                 # (m, N, L)
    q = inst.exo_utility                                        # (I, N, L)
    # utilities of every alternative at every point: (I, m_k, N, L)
    V = np.broadcast_to(q[:, None], (q.shape[0], m) + q.shape[1:]).copy()
    V[idx] += beta[:, None] * np.moveaxis(P, -1, 0)
    M = V.max(axis=0)
    E = np.exp(V - M)
    Z = E.sum(axis=0)
    pi = E / Z                                                  # (I, m_k, N, L)
    ks = np.arange(m)
    Vk = V[idx[ks], ks]                                         # (m_k, N, L)
    logf = np.log(Z) + M - Vk
    # d log f_k / d p_j = beta_j pi_j - [j == k] beta_k; the diagonal is
    # formed as -beta_k * (sum of the other probabilities) to avoid cancellation
    grad = np.moveaxis(beta[:, None] * pi[idx], 0, -1)          # (m_k, N, L, m_j)
    own = np.zeros((q.shape[0], m))
    own[idx[ks], ks] = 1.0
    others = np.einsum("ik...,ik->k...", pi, 1.0 - own)
    grad[ks, ..., ks] = -beta * others
    return logf, grad


def tau_upper_bounds(inst: MixedLogitInstance, box: NodeBox, tol: float = 1e-8,
                     max_iter: int = 500) -> np.ndarray:
    """``1 / min f`` over the box, per (k, n, l).

    ``log f`` is minimized by projected gradient descent with backtracking.
    The returned value is certified: with ``a`` the final iterate, convexity
    gives ``log f(p) >= log f(a) + g (p - a)`` and the right side is minimized
    over the box in closed form, so the bound is valid even if the descent
    stopped early.
    """
    m = box.lb.size
    shape = (m, inst.n_customers, inst.n_classes, m)
    lb = np.broadcast_to(box.lb, shape)
    ub = np.broadcast_to(box.ub, shape)
    P = np.broadcast_to(box.center, shape).copy()
    width = float(np.max(box.widths)) if m else 0.0
    logf, grad = _logf_and_grad(inst, P)
    if width > 0:
        step = np.full(shape[:-1], width / max(float(np.max(np.abs(grad))), 1e-300))
        for _ in range(max_iter):
            trial = np.clip(P - step[..., None] * grad, lb, ub)
            d = trial - P
            pg = np.max(np.abs(d), axis=-1)
            active = pg > tol
            if not np.any(active):
                break
            lf_trial, g_trial = _logf_and_grad(inst, trial)
            ok = lf_trial <= logf + 1e-4 * np.sum(grad * d, axis=-1)
            ok &= active
            P = np.where(ok[..., None], trial, P)
            logf = np.where(ok, lf_trial, logf)
            grad = np.where(ok[..., None], g_trial, grad)
            step = np.where(ok, step * 2.0, np.where(active, step * 0.5, step))
    cert = logf + np.sum(np.minimum(grad * (lb - P), grad * (ub - P)), axis=-1)
    cert = np.maximum(cert, 0.0)        # f >= 1 always
    return np.exp(-cert)


def compute_tau_bounds(inst: MixedLogitInstance, box: NodeBox, method: str = "vertex") -> TauBounds:
    lo = tau_lower_bounds(inst, box, method)
    hi = tau_upper_bounds(inst, box)
    hi = np.maximum(hi, lo)
    total = np.minimum(1.0 - unpriced_share_lower_bound(inst, box, method), hi.sum(axis=0))
    return TauBounds(lo, hi, np.maximum(total, lo.sum(axis=0)))


def tau_upper_bound(inst: MixedLogitInstance, box: NodeBox, i: int, n: int, l: int) -> float:
    """Upper bound of ``1 / f_inl`` over the box; ``i`` indexes all alternatives."""
    k = _priced_position(inst, i)
    return float(tau_upper_bounds(inst, box)[k, n, l])


def tau_lower_bound(inst: MixedLogitInstance, box: NodeBox, i: int, n: int, l: int,
                    method: str = "vertex") -> float:
    """Lower bound of ``1 / f_inl`` over the box; ``i`` indexes all alternatives."""
    k = _priced_position(inst, i)
    return float(tau_lower_bounds(inst, box, method)[k, n, l])


def _priced_position(inst, i):
    pos = np.flatnonzero(inst.priced_index == i)
    if pos.size == 0:
        raise IndexError(f"alternative {i} is not priced")
    return int(pos[0])


# -- LP assembly ---------------------------------------------------------------

@dataclass(frozen=True)
class RelaxationLayout:
    """Column positions: ``p`` first, then ``tau[k, n, l]``, then ``W[k, j, n, l]``."""

    m: int
    N: int
    L: int

    @property
    def n_tau(self) -> int:
        return self.m * self.N * self.L

    @property
    def n_vars(self) -> int:
        return self.m + self.n_tau + self.m * self.n_tau

    def tau(self, k, n, l):
        return self.m + (np.asarray(k) * self.N + n) * self.L + l

    def W(self, k, j, n, l):
        return self.m + self.n_tau + ((np.asarray(k) * self.m + j) * self.N + n) * self.L + l

    def point(self, inst: MixedLogitInstance, p) -> np.ndarray:
        """Relaxation variables ``(p, 1/f(p), p/f(p))`` of an actual price vector."""
        p = np.asarray(p, dtype=float)
        tau = np.exp(-log_ratio_denominators(inst, p)[inst.priced_index])   # (m, N, L)
        W = tau[:, None] * p[None, :, None, None]                            # (m, m, N, L)
        return np.concatenate([p, tau.ravel(), W.ravel()])


# row families, for keys that identify a row across neighbouring boxes
_FAM_A, _FAM_HYP, _FAM_POLY, _FAM_CAP, _FAM_CAP_POLY, _FAM_MC = range(6)


def _row_keys(family, sub, idx):
    """``family | sub | idx`` packed into int64 (idx < 2**32, sub < 2**24)."""
    idx = np.asarray(idx, dtype=np.int64)
    return (np.int64(family) << 56) | (np.asarray(sub, dtype=np.int64) << 32) | idx


class _Rows:
    def __init__(self):
        self.r, self.c, self.v, self.rhs, self.sense, self.keys = [], [], [], [], [], []
        self.count = 0

    def add(self, cols, vals, rhs, sense, keys):
        """Add a block of rows; ``cols``/``vals`` are (rows, nnz) arrays."""
        cols = np.asarray(cols)
        vals = np.asarray(vals, dtype=float)
        k = cols.shape[0]
        if k == 0:
            return
        self.keys.append(np.broadcast_to(keys, (k,)))
        self.r.append(np.repeat(np.arange(self.count, self.count + k), cols.shape[1]))
        self.c.append(cols.ravel())
        self.v.append(vals.ravel())
        self.rhs.append(np.broadcast_to(np.asarray(rhs, dtype=float), (k,)))
        self.sense.extend([sense] * k)
        self.count += k

    def matrix(self, n):
        if not self.count:
            return sp.csr_matrix((0, n)), np.zeros(0), []
        A = sp.csr_matrix((np.concatenate(self.v), (np.concatenate(self.r), np.concatenate(self.c))),
                          shape=(self.count, n))
        A.eliminate_zeros()
        return A, np.concatenate(self.rhs), self.sense

    def key_array(self):
        return np.concatenate(self.keys) if self.keys else np.zeros(0, dtype=np.int64)


def polytope_rows(inst: MixedLogitInstance, box: NodeBox):
    """``(G, h)`` with ``G p >= h`` describing ``A p >= b`` and the box."""
    m = inst.n_priced
    G = [np.eye(m), -np.eye(m)]
    h = [box.lb, -box.ub]
    if inst.A is not None:
        G.insert(0, inst.A)
        h.insert(0, inst.b)
    return np.vstack(G), np.concatenate(h)


def revenue_caps(inst: MixedLogitInstance, box: NodeBox, tb: TauBounds) -> np.ndarray:
    """``w_ln * UB_tau_knl * ub_k``: the most each (k, n, l) term can contribute."""
    weight = inst.class_weight.T * inst.customer_mass[:, None]       # (N, L)
    return weight[None] * tb.ub * box.ub[:, None, None]


def trivial_bound(inst: MixedLogitInstance, box: NodeBox, tb: TauBounds) -> float:
    """Revenue bound from the tau and price bounds alone."""
    weight = inst.class_weight.T * inst.customer_mass[:, None]
    share = np.minimum(tb.ub.sum(axis=0), 1.0)
    by_term = revenue_caps(inst, box, tb).sum(axis=0)
    return float(np.sum(np.minimum(by_term, weight * share * np.max(box.ub))))


def build_relaxation(inst: MixedLogitInstance, box: NodeBox, pool, tb: TauBounds, active=None):
    """Assemble the relaxation LP; returns ``(LinearProgram, RelaxationLayout)``.

    ``active`` (shape of the tau bounds) leaves out the rows of unselected
    (k, n, l) terms and fixes their variables at zero.  Every row besides
    ``A p >= b`` involves a single term, so this only relaxes the remaining
    terms; the caller accounts for the dropped ones separately.
    """
    lp, lay, _ = _assemble(inst, box, pool, tb, active)
    return lp, lay


def _assemble(inst, box, pool, tb, active):
    """``build_relaxation`` plus one key per row (family, anchor or polytope row, term)."""
    anchors = [np.asarray(a, dtype=float) for a in pool]
    if not anchors:
        raise ValueError("the point pool is empty")
    m, N, L = inst.n_priced, inst.n_customers, inst.n_classes
    lay = RelaxationLayout(m, N, L)
    idx = inst.priced_index
    K, NN, LL = np.meshgrid(np.arange(m), np.arange(N), np.arange(L), indexing="ij")
    K, NN, LL = K.ravel(), NN.ravel(), LL.ravel()              # one entry per tau
    act = np.ones(K.size, dtype=bool) if active is None else np.asarray(active, dtype=bool).ravel()
    tau_col = lay.tau(K, NN, LL)
    Wcols = np.stack([lay.W(K, j, NN, LL) for j in range(m)], axis=1)   # (T, m)
    Ltau = tb.lb.ravel()
    Utau = tb.ub.ravel()
    all_tau = (Ltau, Utau)
    K, NN, LL, tau_col, Wcols, Ltau, Utau = (x[act] for x in (K, NN, LL, tau_col, Wcols, Ltau, Utau))
    term = np.flatnonzero(act)
    rows = _Rows()

    if inst.A is not None:
        rows.add(np.tile(np.arange(m), (inst.A.shape[0], 1)), inst.A, inst.b, ">=",
                 _row_keys(_FAM_A, 0, np.arange(inst.A.shape[0])))

    # supporting hyperplanes, one per (anchor, tau); rows scaled to unit max-norm
    for ai, a in enumerate(anchors):
        f = ratio_denominators(inst, a)[idx].ravel()[act]                  # (T,)
        g = np.moveaxis(f_gradients(inst, a)[idx], 1, -1).reshape(-1, m)[act]  # (T, m)
        c0 = f - g @ a
        coef = np.column_stack([c0, g])
        scale = np.max(np.abs(coef), axis=1)
        ok = np.all(np.isfinite(coef), axis=1) & (scale > 0)
        rows.add(np.column_stack([tau_col, Wcols])[ok], coef[ok] / scale[ok, None],
                 1.0 / scale[ok], "<=", _row_keys(_FAM_HYP, ai, term[ok]))

    # polytope rows multiplied by tau, tau - LB and UB - tau
    G, h = polytope_rows(inst, box)
    for gi, (gr, hr) in enumerate(zip(G, h)):
        nz = np.flatnonzero(gr)
        gv = gr[nz]
        T = tau_col.size
        Wc = Wcols[:, nz]
        pc = np.broadcast_to(nz, (T, nz.size))
        gW = np.broadcast_to(gv, (T, nz.size))
        rows.add(np.column_stack([Wc, tau_col]), np.column_stack([gW, np.full(T, -hr)]), 0.0, ">=",
                 _row_keys(_FAM_POLY, 3 * gi, term))
        rows.add(np.column_stack([Wc, tau_col, pc]),
                 np.column_stack([gW, np.full(T, -hr), -Ltau[:, None] * gW]), -Ltau * hr, ">=",
                 _row_keys(_FAM_POLY, 3 * gi + 1, term))
        rows.add(np.column_stack([Wc, tau_col, pc]),
                 np.column_stack([-gW, np.full(T, hr), Utau[:, None] * gW]), Utau * hr, ">=",
                 _row_keys(_FAM_POLY, 3 * gi + 2, term))

    if tb.total_ub is not None:
        # probabilities of the priced alternatives leave room for the unpriced
        # ones: s = c - sum_k tau_k >= 0, also multiplied by every polytope row
        NL = np.meshgrid(np.arange(N), np.arange(L), indexing="ij")
        n_idx, l_idx = NL[0].ravel(), NL[1].ravel()
        cap = tb.total_ub[n_idx, l_idx]
        tcols = np.stack([lay.tau(k, n_idx, l_idx) for k in range(m)], axis=1)    # (NL, m)
        rows.add(tcols, np.ones(tcols.shape), cap, "<=", _row_keys(_FAM_CAP, 0, np.arange(cap.size)))
        for gi, (gr, hr) in enumerate(zip(G, h)):
            nz = np.flatnonzero(gr)
            wcols = np.concatenate([lay.W(k, nz[:, None], n_idx, l_idx).T for k in range(m)], axis=1)
            wvals = np.tile(-gr[nz], m)
            pcols = np.broadcast_to(nz, (n_idx.size, nz.size))
            rows.add(np.column_stack([pcols, wcols, tcols]),
                     np.column_stack([cap[:, None] * gr[nz], np.broadcast_to(wvals, (n_idx.size, wvals.size)),
                                      np.full((n_idx.size, m), hr)]),
                     cap * hr, ">=", _row_keys(_FAM_CAP_POLY, gi, np.arange(cap.size)))

    # McCormick envelopes of W_kj = tau_k * p_j
    for j in range(m):
        lj, uj = box.lb[j], box.ub[j]
        cols = np.column_stack([Wcols[:, j], np.full(K.size, j), tau_col])
        one = np.ones(K.size)
        rows.add(cols, np.column_stack([one, -Ltau, np.full(K.size, -lj)]), -Ltau * lj, ">=",
                 _row_keys(_FAM_MC, 4 * j, term))
        rows.add(cols, np.column_stack([one, -Utau, np.full(K.size, -uj)]), -Utau * uj, ">=",
                 _row_keys(_FAM_MC, 4 * j + 1, term))
        rows.add(cols, np.column_stack([one, -Utau, np.full(K.size, -lj)]), -Utau * lj, "<=",
                 _row_keys(_FAM_MC, 4 * j + 2, term))
        rows.add(cols, np.column_stack([one, -Ltau, np.full(K.size, -uj)]), -Ltau * uj, "<=",
                 _row_keys(_FAM_MC, 4 * j + 3, term))

    n = lay.n_vars
    A, rhs, senses = rows.matrix(n)
    c = np.zeros(n)
    weight = (inst.class_weight.T * inst.customer_mass[:, None])    # (N, L)
    c[lay.W(K, K, NN, LL)] = weight[NN, LL]
    Lt = np.where(act, all_tau[0], 0.0)
    Ut = np.where(act, all_tau[1], 0.0)
    Wlb = (Lt[:, None] * box.lb[None, :]).ravel()                    # order (T, j) == (k, n, l, j)
    Wub = (Ut[:, None] * box.ub[None, :]).ravel()
    # reorder W bounds from (k, n, l, j) to the layout order (k, j, n, l)
    perm = np.moveaxis(np.arange(lay.n_tau * m).reshape(m, N, L, m), -1, 1).ravel()
    lb = np.concatenate([box.lb, Lt, Wlb[perm]])
    ub = np.concatenate([box.ub, Ut, Wub[perm]])
    return LinearProgram(c, A, senses, rhs, lb, ub), lay, rows.key_array()


@dataclass(frozen=True)
class WarmStart:
    """Final LP basis of a node relaxation, rows named by key and anchor.

    Passed to ``node_upper_bound`` of a nearby box (a child) it seeds the
    simplex there; rows that no longer exist are skipped.
    """

    columns: np.ndarray
    row_keys: np.ndarray
    anchors: tuple


def _warm_basis(warm: WarmStart, keys: np.ndarray, anchors) -> LpBasis:
    """Translate ``warm`` to row indices of an LP whose rows carry ``keys``."""
    rk = warm.row_keys.copy()
    hyp = (rk >> 56) == _FAM_HYP
    if np.any(hyp):
        remap = np.full(len(warm.anchors), -1, dtype=np.int64)
        for i, a in enumerate(warm.anchors):
            for j, b in enumerate(anchors):
                if np.array_equal(a, b):
                    remap[i] = j
                    break
        sub = remap[(rk[hyp] >> 32) & 0xFFFFFF]
        moved = _row_keys(_FAM_HYP, np.maximum(sub, 0), rk[hyp] & 0xFFFFFFFF)
        rk[hyp] = np.where(sub >= 0, moved, -1)
    order = np.argsort(keys, kind="stable")
    pos = np.clip(np.searchsorted(keys[order], rk), 0, max(keys.size - 1, 0))
    hit = (keys[order][pos] == rk) if keys.size else np.zeros(rk.size, dtype=bool)
    return LpBasis(warm.columns, order[pos[hit]])


@dataclass
class NodeBound:
    ub: float
    p_candidate: Optional[np.ndarray]
    status: LpStatus
    flagged: bool = False
    solution: Optional[LpSolution] = None
    tau_bounds: Optional[TauBounds] = None
    warm: Optional[WarmStart] = None


def box_feasible(inst: MixedLogitInstance, box: NodeBox) -> bool:
    """Whether the box meets ``A p >= b``."""
    if inst.A is None:
        return True
    lp = LinearProgram(np.zeros(inst.n_priced), inst.A, [">="] * inst.A.shape[0], inst.b,
                       box.lb, box.ub)
    return solve_lp(lp).status == LpStatus.OPTIMAL


def _price_scaled(lp: LinearProgram, lay: RelaxationLayout, scale: float) -> LinearProgram:
    """Same LP in units of ``scale`` for ``p`` and ``W``; keeps rows with prices in the
    thousands and rows with probabilities on a comparable footing."""
    s = np.ones(lay.n_vars)
    s[: lay.m] = scale
    s[lay.m + lay.n_tau:] = scale
    return LinearProgram(lp.objective * s, lp.A @ sp.diags(s), lp.senses, lp.rhs, lp.lb / s, lp.ub / s)


def node_upper_bound(inst: MixedLogitInstance, box: NodeBox, pool, method: str = "vertex",
                     warm: Optional[WarmStart] = None) -> NodeBound:
    """Upper bound of revenue over ``box`` and the clipped ``p`` part of the LP optimizer.

    Terms whose largest possible contribution is negligible are left out of
    the LP and added back at that largest value.  The LP part is the
    Lagrangian value of the final multipliers, which stays valid even if the
    simplex stopped slightly short of optimal, and the result never exceeds
    ``trivial_bound``.  A box missing the polytope gets ``-inf``; an
    infeasible relaxation of a nonempty box (numerical trouble) falls back
    to ``trivial_bound`` and is ``flagged``.  A breakdown of the LP raises
    ``RelaxationFailure``.

    ``warm`` (the ``warm`` of a parent box's result) only changes where the
    simplex starts; a warm solve that does not reach an optimum is redone
    from scratch.
    """
    if not box_feasible(inst, box):
        return NodeBound(-np.inf, None, LpStatus.INFEASIBLE)
    tb = compute_tau_bounds(inst, box, method)
    trivial = trivial_bound(inst, box, tb)
    caps = revenue_caps(inst, box, tb)
    active = caps > DROP_REL * max(1.0, trivial)
    dropped = float(caps[~active].sum())
    if not np.any(active):
        return NodeBound(min(trivial, dropped), None, LpStatus.OPTIMAL, tau_bounds=tb)
    anchors = tuple(np.asarray(a, dtype=float) for a in pool)
    lp, lay, keys = _assemble(inst, box, anchors, tb, active)
    scale = float(np.max(box.ub))
    scale = scale if scale > 0 else 1.0
    scaled = _price_scaled(lp, lay, scale)
    sol = None
    if warm is not None:
        sol = solve_lp(scaled, basis=_warm_basis(warm, keys, anchors))
    if sol is None or sol.status != LpStatus.OPTIMAL:
        sol = solve_lp(scaled)
    if sol.status == LpStatus.OPTIMAL:
        p = np.clip(sol.x[: lay.m] * scale, box.lb, box.ub)
        ub = min(trivial, float(sol.dual_bound) + dropped)
        basis = WarmStart(sol.basis.columns, keys[sol.basis.rows], anchors)
        return NodeBound(ub, p, sol.status, solution=sol, tau_bounds=tb, warm=basis)
    if sol.status == LpStatus.NUMERICAL_FAILURE:
        raise RelaxationFailure(sol.message or "relaxation LP failed")
    return NodeBound(trivial, None, sol.status, flagged=True, solution=sol, tau_bounds=tb)
