"""Demand model: discrete mixed multinomial logit over taste classes.

Conventions
-----------
``I`` alternatives, ``N`` customers, ``L`` taste classes.  Coefficient
tensors are indexed ``[i, n, l]`` and class weights ``[l, n]``.  A price
vector only covers the *priced* alternatives, in the order they appear in
``MixedLogitInstance.alternatives``.  Unpriced alternatives (e.g. an
opt-out) keep their whole utility in ``exo_utility``.

Every exponential sum is evaluated with a max shift, so utilities with a
spread of several hundred units never overflow.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class Alternative:
    name: str
    priced: bool = True


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimensions, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MixedLogitInstance:
    """Immutable pricing instance.

    Parameters
    ----------
    alternatives : sequence of Alternative
    price_coef : array, shape (I, N, L)
        Price sensitivity per alternative, customer and class.  Must be
        strictly negative for priced alternatives; ignored otherwise.
    exo_utility : array, shape (I, N, L)
        Price-independent utility.
    class_weight : array, shape (L, N)
        Probability of class ``l`` for customer ``n``; columns sum to one.
    price_lb, price_ub : array, shape (n_priced,)
    A, b : optional
        Linear side constraints ``A @ p >= b`` on the priced prices.
    customer_mass : array, shape (N,), optional
        Number of buyers each customer stands for (default one).  Revenue is
        summed with these multiplicities.
    metadata : dict
        Free-form provenance (generator name, seed, ...).  Not used by the
        solver.
    """

    alternatives: tuple
    price_coef: np.ndarray
    exo_utility: np.ndarray
    class_weight: np.ndarray
    price_lb: np.ndarray
    price_ub: np.ndarray
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    customer_mass: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        set_ = object.__setattr__
        alts = tuple(
            a if isinstance(a, Alternative) else Alternative(*a) if isinstance(a, (tuple, list))
            else Alternative(**a)
            for a in self.alternatives
        )
        set_(self, "alternatives", alts)
        set_(self, "price_coef", _frozen(self.price_coef, 3, "price_coef"))
        set_(self, "exo_utility", _frozen(self.exo_utility, 3, "exo_utility"))
        set_(self, "class_weight", _frozen(self.class_weight, 2, "class_weight"))
        set_(self, "price_lb", _frozen(self.price_lb, 1, "price_lb"))
        set_(self, "price_ub", _frozen(self.price_ub, 1, "price_ub"))
        if self.A is not None or self.b is not None:
            if self.A is None or self.b is None:
                raise ValueError("A and b must be given together")
            A = _frozen(self.A, 2, "A")
            b = _frozen(self.b, 1, "b")
            if A.shape[0] == 0:
                A = b = None
            set_(self, "A", A)
            set_(self, "b", b)
        mass = np.ones(self.price_coef.shape[1]) if self.customer_mass is None else self.customer_mass
        set_(self, "customer_mass", _frozen(mass, 1, "customer_mass"))
        set_(self, "_priced_index", np.flatnonzero([a.priced for a in alts]))
        self._validate()

    # -- dimensions -----------------------------------------------------
    @property
    def n_alternatives(self) -> int:
        return len(self.alternatives)

    @property
    def n_customers(self) -> int:
        return self.price_coef.shape[1]

    @property
    def n_classes(self) -> int:
        return self.price_coef.shape[2]

    @property
    def priced_index(self) -> np.ndarray:
        """Positions of the priced alternatives among all alternatives."""
        return self._priced_index

    @property
    def n_priced(self) -> int:
        return len(self._priced_index)

    @property
    def n_constraints(self) -> int:
        return 0 if self.A is None else self.A.shape[0]

    @property
    def names(self) -> list:
        return [a.name for a in self.alternatives]

    def _validate(self):
        I = len(self.alternatives)
        if I < 1:
            raise ValueError("an instance needs at least one alternative")
        names = self.names
        if len(set(names)) != len(names):
            raise ValueError(f"alternative names must be unique: {names}")
        if self.n_priced == 0:
            raise ValueError("at least one alternative must be priced")
        if self.price_coef.shape[0] != I:
            raise ValueError(f"price_coef has {self.price_coef.shape[0]} rows for {I} alternatives")
        if self.exo_utility.shape != self.price_coef.shape:
            raise ValueError(
                f"exo_utility shape {self.exo_utility.shape} != price_coef shape {self.price_coef.shape}"
            )
        _, N, L = self.price_coef.shape
        if N < 1 or L < 1:
            raise ValueError("need at least one customer and one class")
        if self.class_weight.shape != (L, N):
            raise ValueError(f"class_weight must have shape {(L, N)}, got {self.class_weight.shape}")
        if self.customer_mass.shape != (N,):
            raise ValueError(f"customer_mass must have length {N}")
        if not np.all(np.isfinite(self.customer_mass)) or np.any(self.customer_mass <= 0):
            raise ValueError("customer_mass must be positive and finite")
        if not (np.all(np.isfinite(self.price_coef)) and np.all(np.isfinite(self.exo_utility))):
            raise ValueError("coefficients must be finite")
        if np.any(self.class_weight < 0):
            raise ValueError("class weights must be nonnegative")
        sums = self.class_weight.sum(axis=0)
        if np.any(np.abs(sums - 1.0) > WEIGHT_TOL):
            raise ValueError(f"class weights must sum to 1 for every customer, got {sums}")
        beta = self.price_coef[self.priced_index]
        if np.any(beta >= 0):
            i, n, l = np.argwhere(beta >= 0)[0]
            raise ValueError(
                f"price coefficient of priced alternative {self.names[self.priced_index[i]]!r} "
                f"(customer {n}, class {l}) must be negative, got {beta[i, n, l]}"
            )
        m = self.n_priced
        if self.price_lb.shape != (m,) or self.price_ub.shape != (m,):
            raise ValueError(f"price bounds must have length {m}")
        if not np.all(np.isfinite(self.price_ub)) or not np.all(np.isfinite(self.price_lb)):
            raise ValueError("price bounds must be finite")
        if np.any(self.price_lb < 0) or np.any(self.price_lb > self.price_ub):
            raise ValueError("need 0 <= price_lb <= price_ub")
        if self.A is not None:
            if self.A.shape[1] != m or self.b.shape != (self.A.shape[0],):
                raise ValueError(f"A must be (k, {m}) and b of length k")
            if not _polytope_nonempty(self):
                raise ValueError("price box intersected with A p >= b is empty")

    def is_feasible(self, p, tol: float = 1e-7, lb=None, ub=None) -> bool:
        """True if ``p`` lies in the price box (or the given box) and satisfies ``A p >= b``."""
        p = np.asarray(p, dtype=float)
        lb = self.price_lb if lb is None else lb
        ub = self.price_ub if ub is None else ub
        if p.shape != (self.n_priced,):
            return False
        if np.any(p < lb - tol) or np.any(p > ub + tol):
            return False
        if self.A is not None:
            scale = 1.0 + np.abs(self.b)
            if np.any(self.A @ p - self.b < -tol * scale):
                return False
        return True


def _polytope_nonempty(inst: MixedLogitInstance) -> bool:
    from .lp import LinearProgram, LpStatus, solve_lp

    lp = LinearProgram(
        objective=np.zeros(inst.n_priced),
        A=inst.A,
        senses=[">="] * inst.A.shape[0],
        rhs=inst.b,
        lb=inst.price_lb,
        ub=inst.price_ub,
    )
    return solve_lp(lp).status == LpStatus.OPTIMAL


# -- evaluation -------------------------------------------------------------

def _check_prices(inst: MixedLogitInstance, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (inst.n_priced,):
        raise ValueError(f"expected {inst.n_priced} prices, got shape {p.shape}")
    return p


def full_prices(inst: MixedLogitInstance, p) -> np.ndarray:
    """Price vector over all alternatives, zero at unpriced ones."""
    full = np.zeros(inst.n_alternatives)
    full[inst.priced_index] = _check_prices(inst, p)
    return full


def _effective_beta(inst: MixedLogitInstance) -> np.ndarray:
    beta = np.zeros_like(inst.price_coef)
    idx = inst.priced_index
    beta[idx] = inst.price_coef[idx]
    return beta


def utilities(inst: MixedLogitInstance, p) -> np.ndarray:
    """All systematic utilities, shape (I, N, L)."""
    pf = full_prices(inst, p)
    beta = _effective_beta(inst)
    return inst.exo_utility + beta * pf[:, None, None]


def _check_index(inst, i, n, l):
    for name, v, size in (("i", i, inst.n_alternatives), ("n", n, inst.n_customers),
                          ("l", l, inst.n_classes)):
        if not (0 <= v < size):
            raise IndexError(f"index {name}={v} out of range [0, {size})")


def systematic_utility(inst: MixedLogitInstance, p, i: int, n: int, l: int) -> float:
    _check_index(inst, i, n, l)
    u = inst.exo_utility[i, n, l]
    if inst.alternatives[i].priced:
        u += inst.price_coef[i, n, l] * full_prices(inst, p)[i]
    return float(u)


def _log_partition(V: np.ndarray):
    """Return (M, log sum exp(V - M)) over the alternative axis."""
    M = V.max(axis=0)
    return M, np.log(np.exp(V - M).sum(axis=0))


def class_probabilities(inst: MixedLogitInstance, p) -> np.ndarray:
    """Per-class logit probabilities, shape (I, N, L)."""
    V = utilities(inst, p)
    M = V.max(axis=0)
    E = np.exp(V - M)
    return E / E.sum(axis=0)


def log_ratio_denominators(inst: MixedLogitInstance, p) -> np.ndarray:
    """``log f[i, n, l]`` with ``f = sum_j exp(V_j - V_i)``, shape (I, N, L)."""
    V = utilities(inst, p)
    M, lse = _log_partition(V)
    return lse + M - V


def ratio_denominators(inst: MixedLogitInstance, p) -> np.ndarray:
    return np.exp(log_ratio_denominators(inst, p))


def ratio_denominator(inst: MixedLogitInstance, p, i: int, n: int, l: int) -> float:
    """``f_{inl}(p) = sum_j exp(V_jnl - V_inl)``; always >= 1."""
    _check_index(inst, i, n, l)
    V = utilities(inst, p)[:, n, l]
    M = V.max()
    return float(np.exp(np.log(np.exp(V - M).sum()) + M - V[i]))


def choice_probabilities(inst: MixedLogitInstance, p) -> np.ndarray:
    """Mixed logit probabilities ``P[i, n]``; columns sum to one."""
    pi = class_probabilities(inst, p)
    return np.einsum("inl,ln->in", pi, inst.class_weight)


def expected_revenue(inst: MixedLogitInstance, p) -> float:
    """Sum over priced alternatives and customers of ``p_i * P[i, n]``."""
    p = _check_prices(inst, p)
    P = choice_probabilities(inst, p)
    return float(p @ (P[inst.priced_index] @ inst.customer_mass))


def revenue_and_gradient(inst: MixedLogitInstance, p):
    """Expected revenue and its gradient over the priced prices.

    With per-class probabilities ``pi`` and ``pbar = sum_i p_i pi_i`` the
    partial derivative is
    ``sum_{n,l} w_ln pi_m (1 + beta_m (p_m - pbar))``.
    """
    p = _check_prices(inst, p)
    idx = inst.priced_index
    pi = class_probabilities(inst, p)[idx]                   # (m, N, L)
    beta = inst.price_coef[idx]
    w = inst.class_weight.T * inst.customer_mass[:, None]    # (N, L)
    pbar = np.einsum("i,inl->nl", p, pi)
    value = float(np.einsum("nl,nl->", w, pbar))
    grad = np.einsum("nl,inl->i", w, pi * (1.0 + beta * (p[:, None, None] - pbar)))
    return value, grad


def revenue_gradient(inst: MixedLogitInstance, p) -> np.ndarray:
    return revenue_and_gradient(inst, p)[1]


def f_gradients(inst: MixedLogitInstance, p) -> np.ndarray:
    """Gradients of every ratio denominator, shape (I, n_priced, N, L).

    ``d f_i / d p_m = beta_m exp(V_m - V_i)`` for ``m != i`` and
    ``d f_i / d p_i = -beta_i sum_{j != i} exp(V_j - V_i)``.  The diagonal is
    summed directly rather than as ``beta_i (f_i pi_i - f_i)``, which loses
    all precision when ``pi_i`` is close to one.
    """
    idx = inst.priced_index
    V = utilities(inst, p)                                    # (I, N, L)
    D = np.exp(V[None] - V[:, None])                          # D[i, j] = exp(V_j - V_i)
    beta = inst.price_coef[idx]                               # (m, N, L)
    grad = D[:, idx] * beta[None]                             # (I, m, N, L)
    for k, i in enumerate(idx):
        grad[i, k] = -beta[k] * np.delete(D[i], i, axis=0).sum(axis=0)
    return grad


def f_gradient(inst: MixedLogitInstance, p, i: int, n: int, l: int) -> np.ndarray:
    _check_index(inst, i, n, l)
    return f_gradients(inst, p)[i, :, n, l]


def market_shares(inst: MixedLogitInstance, p) -> np.ndarray:
    """Percentage of customers choosing each alternative; sums to 100."""
    P = choice_probabilities(inst, p)
    mass = inst.customer_mass
    return 100.0 * (P @ mass) / mass.sum()


def expected_revenue_batch(inst: MixedLogitInstance, prices: np.ndarray) -> np.ndarray:
    """Revenue at many price vectors at once; ``prices`` has shape (k, n_priced)."""
    prices = np.atleast_2d(np.asarray(prices, dtype=float))
    idx = inst.priced_index
    pf = np.zeros((prices.shape[0], inst.n_alternatives))
    pf[:, idx] = prices
    beta = _effective_beta(inst)
    V = inst.exo_utility[None] + beta[None] * pf[:, :, None, None]   # (k, I, N, L)
    V -= V.max(axis=1, keepdims=True)
    E = np.exp(V)
    pi = E / E.sum(axis=1, keepdims=True)
    spend = np.einsum("ki,kinl->knl", prices, pi[:, idx])
    return np.einsum("knl,ln,n->k", spend, inst.class_weight, inst.customer_mass)


def mnl_probabilities(utilities_in: Sequence[float]) -> np.ndarray:
    """Plain multinomial logit probabilities for one utility vector."""
    V = np.asarray(utilities_in, dtype=float)
    E = np.exp(V - V.max())
    return E / E.sum()
