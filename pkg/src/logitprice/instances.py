"""Built-in and generated pricing instances.

* ``intel_instance``: three server processors sold to seven customer segments.
* ``random_instance``: coefficients drawn uniformly, ``q ~ U[-5, 5]`` and
  ``beta ~ U[-5, -0.025]``.
* ``parking_instance``: free on-street, paid on-street and paid underground
  parking with a bivariate normal taste distribution for access time and fee,
  discretized on a regular grid.  Customer attributes are synthetic.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr

from .model import Alternative, MixedLogitInstance

log = logging.getLogger(__name__)

INTEL_WEIGHTS = np.array([0.0753, 0.1126, 0.1285, 0.1180, 0.0859, 0.2842, 0.1953])
INTEL_Q = np.array([
    [-1.0334, 3.2480, -0.9336, 1.7094, 0.4187, -0.8904, -0.9804],
    [0.7840, 4.7161, -0.3438, 1.8777, 2.1771, -0.4310, -0.4907],
    [6.0054, 3.8771, 1.3506, 2.3611, 1.1723, 0.8889, 0.9163],
])
INTEL_BETA = np.array([
    [-0.00416, -0.01840, -0.00525, -0.01165, -0.01015, -0.00325, -0.00331],
    [-0.00312, -0.01354, -0.00394, -0.00874, -0.00639, -0.00244, -0.00248],
    [-0.00181, -0.00744, -0.00229, -0.00508, -0.00167, -0.00142, -0.00144],
])
INTEL_PRICE_UB = 5000.0
INTEL_REFERENCE_PRICES = np.array([608.2695, 365.079, 1209.09])
INTEL_REFERENCE_REVENUE = 362.3389


def _normalized(w: np.ndarray, what: str, warn: bool = True) -> np.ndarray:
    total = float(np.sum(w))
    if abs(total - 1.0) > 1e-12:
        if warn:
            log.warning("%s sum to %.6g; renormalizing to 1", what, total)
        w = w / total
    return w


def intel_instance() -> MixedLogitInstance:
    """One representative customer, seven segments, three priced products on [0, 5000]^3.

    Customers may also buy nothing (an unpriced alternative with zero
    utility).  The published segment weights sum to 0.9998; they are
    renormalized and the total is kept as the customer's mass, so revenues
    equal those computed with the weights exactly as published.
    """
    total = float(INTEL_WEIGHTS.sum())
    w = _normalized(INTEL_WEIGHTS, "segment weights")
    beta = np.vstack([INTEL_BETA, np.zeros((1, 7))])
    q = np.vstack([INTEL_Q, np.zeros((1, 7))])
    return MixedLogitInstance(
        alternatives=[Alternative(f"sku{i + 1}") for i in range(3)] + [Alternative("none", priced=False)],
        price_coef=beta[:, None, :],
        exo_utility=q[:, None, :],
        class_weight=w[:, None],
        price_lb=np.zeros(3),
        price_ub=np.full(3, INTEL_PRICE_UB),
        customer_mass=np.array([total]),
        metadata={"generator": "intel"},
    )


def random_instance(seed: int, I: int = 3, K: int = 7, N: int = 1, weights=None,
                    price_ub: float = 100.0, outside_option: bool = True) -> MixedLogitInstance:
    """Random instance with ``q ~ U[-5, 5]`` and ``beta ~ U[-5, -0.025]``.

    ``weights`` (length ``K``) defaults to the Intel segment weights when
    ``K == 7`` and to uniform weights otherwise.  ``outside_option`` appends
    an unpriced no-purchase alternative with zero utility; without it the
    probabilities of the priced products sum to one and revenue simply grows
    with every price.
    """
    if I < 1 or K < 1 or N < 1:
        raise ValueError("I, K and N must be positive")
    rng = np.random.default_rng(seed)
    q = rng.uniform(-5.0, 5.0, size=(I, N, K))
    beta = rng.uniform(-5.0, -0.025, size=(I, N, K))
    if weights is None:
        w = _normalized(INTEL_WEIGHTS, "segment weights", warn=False) if K == 7 else np.full(K, 1.0 / K)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (K,):
            raise ValueError(f"weights must have length {K}")
        w = w / w.sum()
    alts = [Alternative(f"p{i + 1}") for i in range(I)]
    if outside_option:
        alts.append(Alternative("none", priced=False))
        q = np.concatenate([q, np.zeros((1, N, K))])
        beta = np.concatenate([beta, np.zeros((1, N, K))])
    return MixedLogitInstance(
        alternatives=alts,
        price_coef=beta,
        exo_utility=q,
        class_weight=np.repeat(w[:, None], N, axis=1),
        price_lb=np.zeros(I),
        price_ub=np.full(I, float(price_ub)),
        metadata={"generator": "random", "seed": int(seed), "I": I, "K": K, "N": N,
                  "price_ub": float(price_ub), "outside_option": bool(outside_option)},
    )


# -- parking -------------------------------------------------------------------

@dataclass(frozen=True)
class ParkingParams:
    asc_psp: float = 32.0
    asc_pup: float = 34.0
    beta_td: float = -0.612
    beta_origin: float = -5.762
    fee_psp_lowinc: float = -10.995
    fee_psp_resident: float = -11.44
    fee_pup_lowinc: float = -13.729
    fee_pup_resident: float = -10.668
    beta_ageveh: float = 4.037
    mean: tuple = (-0.788, -32.3)                       # (beta_AT, beta_FEE)
    cov: tuple = ((1.1236, -12.8), (-12.8, 201.64))
    support: tuple = ((-3.6, 1.94), (-68.52, 3.92))     # 0.99 confidence box

    def __post_init__(self):
        C = np.asarray(self.cov, dtype=float)
        if C.shape != (2, 2) or not np.allclose(C, C.T):
            raise ValueError("covariance must be a symmetric 2x2 matrix")
        if np.any(np.linalg.eigvalsh(C) < 0):
            raise ValueError("covariance must be positive semidefinite")


@dataclass(frozen=True)
class CustomerProfile:
    """Attributes of one parking customer; times in minutes, ordered (FSP, PSP, PUP)."""

    access_time: tuple
    time_to_destination: tuple
    origin: int = 0
    low_income: int = 0
    resident: int = 0
    new_vehicle: int = 0

    def __post_init__(self):
        for name in ("origin", "low_income", "resident", "new_vehicle"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1")
        if len(self.access_time) != 3 or len(self.time_to_destination) != 3:
            raise ValueError("need one access time and one walking time per alternative")
        if min(self.access_time) < 0 or min(self.time_to_destination) < 0:
            raise ValueError("times must be nonnegative")


PARKING_NAMES = ("FSP", "PSP", "PUP")
PARKING_PRICE_UB = 2.0


GRID_QUAD_NODES = 32


def _edge_cdf(edges, mean, sd):
    """Normal CDF at ``edges``; a zero ``sd`` is a point mass at ``mean``."""
    if sd > 0:
        return ndtr((edges - mean) / sd)
    return (edges >= mean).astype(float)


def _cell_masses(params: ParkingParams, n: int) -> np.ndarray:
    """Normal probability of each of the ``n x n`` support cells, shape ``(n, n)``.

    The x-marginal is integrated by Gauss-Legendre against the conditional
    normal CDF of y, which is exact up to quadrature error on smooth cells.
    """
    (a0, a1), (f0, f1) = params.support
    ea, ef = np.linspace(a0, a1, n + 1), np.linspace(f0, f1, n + 1)
    mx, my = (float(v) for v in params.mean)
    C = np.asarray(params.cov, dtype=float)
    if C[0, 0] == 0:
        col = np.diff(_edge_cdf(ea, mx, 0.0))
        return col[:, None] * np.diff(_edge_cdf(ef, my, np.sqrt(C[1, 1])))[None, :]
    sx = np.sqrt(C[0, 0])
    slope = C[0, 1] / C[0, 0]
    cs = np.sqrt(max(C[1, 1] - C[0, 1] * slope, 0.0))
    z, wz = np.polynomial.legendre.leggauss(GRID_QUAD_NODES)
    out = np.empty((n, n))
    for i in range(n):
        half = 0.5 * (ea[i + 1] - ea[i])
        xs = ea[i] + half * (z + 1.0)
        wx = half * wz * np.exp(-0.5 * ((xs - mx) / sx) ** 2) / (sx * np.sqrt(2 * np.pi))
        cm = my + slope * (xs - mx)
        if cs > 0:
            cdf = ndtr((ef[:, None] - cm[None, :]) / cs)
        else:
            cdf = (ef[:, None] >= cm[None, :]).astype(float)
        out[i] = np.diff(cdf, axis=0) @ wx
    return out


def gaussian_grid(params: ParkingParams, n: int):
    """Discretize ``(beta_AT, beta_FEE)`` on an ``n x n`` grid of cell centers.

    Each center carries the normal probability of its cell, renormalized over
    the support box.  ``n = 1`` returns the mean with weight one.
    Returns a list of ``(beta_at, beta_fee, weight)``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if n == 1:
        return [(float(params.mean[0]), float(params.mean[1]), 1.0)]
    (a0, a1), (f0, f1) = params.support
    ca = a0 + (np.arange(n) + 0.5) * (a1 - a0) / n
    cf = f0 + (np.arange(n) + 0.5) * (f1 - f0) / n
    mass = np.clip(_cell_masses(params, n), 0.0, None)
    if not mass.sum() > 0:
        raise ValueError("the taste distribution puts no mass on the support box")
    w = (mass / mass.sum()).ravel()
    A, F = np.meshgrid(ca, cf, indexing="ij")
    return [(float(a), float(f), float(x)) for a, f, x in zip(A.ravel(), F.ravel(), w)]


def synthetic_profiles(rng: np.random.Generator, N: int):
    """Times ``~ U[1, 15]`` minutes, dummies ``~ Bernoulli(0.5)``."""
    out = []
    for _ in range(N):
        at = rng.uniform(1.0, 15.0, size=3)
        td = rng.uniform(1.0, 15.0, size=3)
        d = rng.integers(0, 2, size=4)
        out.append(CustomerProfile(tuple(float(x) for x in at), tuple(float(x) for x in td),
                                   *(int(x) for x in d)))
    return out


def parking_coefficients(params: ParkingParams, profiles: Sequence[CustomerProfile],
                         beta_at, beta_fee):
    """Price and exogenous coefficients for taste draws ``beta_at``/``beta_fee``.

    Returns ``(beta, q)`` of shape ``(3, N, S)`` for ``S`` draws; row 0 (FSP)
    of ``beta`` is zero.
    """
    beta_at = np.atleast_1d(np.asarray(beta_at, dtype=float))
    beta_fee = np.atleast_1d(np.asarray(beta_fee, dtype=float))
    AT = np.array([c.access_time for c in profiles])            # (N, 3)
    TD = np.array([c.time_to_destination for c in profiles])
    origin = np.array([c.origin for c in profiles], dtype=float)
    low = np.array([c.low_income for c in profiles], dtype=float)
    res = np.array([c.resident for c in profiles], dtype=float)
    new = np.array([c.new_vehicle for c in profiles], dtype=float)
    N, S = len(profiles), beta_at.size
    beta = np.zeros((3, N, S))
    beta[1] = beta_fee[None] + (params.fee_psp_lowinc * low + params.fee_psp_resident * res)[:, None]
    beta[2] = beta_fee[None] + (params.fee_pup_lowinc * low + params.fee_pup_resident * res)[:, None]
    q = np.empty((3, N, S))
    q[0] = AT[:, 0, None] * beta_at[None] + (params.beta_td * TD[:, 0] + params.beta_origin * origin)[:, None]
    q[1] = params.asc_psp + AT[:, 1, None] * beta_at[None] + (params.beta_td * TD[:, 1])[:, None]
    q[2] = (params.asc_pup + AT[:, 2, None] * beta_at[None]
            + (params.beta_td * TD[:, 2] + params.beta_ageveh * new)[:, None])
    return beta, q


def parking_instance(seed: int = 0, N: int = 10, n_grid: int = 1,
                     params: Optional[ParkingParams] = None,
                     profiles: Optional[Sequence[CustomerProfile]] = None) -> MixedLogitInstance:
    """Parking instance with ``n_grid**2`` taste classes and ``N`` customers.

    Grid points whose fee coefficient would make a price coefficient
    nonnegative are rejected (``n_grid <= 9`` is always safe with the default
    parameters).
    """
    params = params or ParkingParams()
    if n_grid < 1:
        raise ValueError("n_grid must be at least 1")
    if profiles is None:
        if N < 1:
            raise ValueError("N must be at least 1")
        profiles = synthetic_profiles(np.random.default_rng(seed), N)
    profiles = list(profiles)
    grid = gaussian_grid(params, n_grid)
    b_at = np.array([g[0] for g in grid])
    b_fee = np.array([g[1] for g in grid])
    w = np.array([g[2] for g in grid])
    beta, q = parking_coefficients(params, profiles, b_at, b_fee)
    if np.any(beta[1:] >= 0):
        raise ValueError(
            f"n_grid={n_grid} puts grid points at a nonnegative fee coefficient; "
            "use a smaller grid or a support box below zero"
        )
    return MixedLogitInstance(
        alternatives=[Alternative("FSP", priced=False), Alternative("PSP"), Alternative("PUP")],
        price_coef=beta,
        exo_utility=q,
        class_weight=np.repeat(w[:, None], len(profiles), axis=1),
        price_lb=np.zeros(2),
        price_ub=np.full(2, PARKING_PRICE_UB),
        metadata={
            "generator": "parking", "seed": int(seed), "customers": len(profiles),
            "n_grid": int(n_grid), "params": _params_dict(params),
            "profiles": [{k: list(v) if isinstance(v, tuple) else v for k, v in asdict(c).items()}
                         for c in profiles],
        },
    )


def _params_dict(params: ParkingParams) -> dict:
    d = asdict(params)
    return {k: (np.asarray(v).tolist() if isinstance(v, tuple) else v) for k, v in d.items()}


def params_from_dict(d: dict) -> ParkingParams:
    d = dict(d)
    d["mean"] = tuple(d["mean"])
    d["cov"] = tuple(tuple(r) for r in d["cov"])
    d["support"] = tuple(tuple(r) for r in d["support"])
    return ParkingParams(**d)


def profiles_from_dicts(rows) -> list:
    return [CustomerProfile(tuple(r["access_time"]), tuple(r["time_to_destination"]),
                            r["origin"], r["low_income"], r["resident"], r["new_vehicle"])
            for r in rows]


def _sample_tastes(params: ParkingParams, samples: int, rng: np.random.Generator) -> np.ndarray:
    C = np.asarray(params.cov, dtype=float)
    try:
        root = np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(C)
        root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    z = rng.standard_normal((samples, 2))
    return np.asarray(params.mean, dtype=float) + z @ root.T


def continuous_ml_revenue(params: ParkingParams, profiles: Sequence[CustomerProfile], p,
                          samples: int = 100_000, seed: int = 0, return_std_error: bool = False,
                          chunk: int = 20_000):
    """Monte-Carlo revenue under the continuous normal taste distribution.

    ``p`` is ``(p_PSP, p_PUP)``.  Each draw of ``(beta_AT, beta_FEE)`` is
    shared by all customers, so the estimator averages total revenue per draw;
    with ``return_std_error`` the standard error of that mean is returned too.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    p = np.asarray(p, dtype=float)
    if p.shape != (2,):
        raise ValueError("expected two prices (PSP, PUP)")
    rng = np.random.default_rng(seed)
    draws = _sample_tastes(params, samples, rng)
    totals = np.empty(samples)
    pf = np.array([0.0, p[0], p[1]])
    for s in range(0, samples, chunk):
        d = draws[s:s + chunk]
        beta, q = parking_coefficients(params, profiles, d[:, 0], d[:, 1])
        V = q + beta * pf[:, None, None]
        V -= V.max(axis=0)
        E = np.exp(V)
        pi = E / E.sum(axis=0)
        totals[s:s + chunk] = np.einsum("i,ins->s", pf, pi)
    mean = float(totals.mean())
    if not return_std_error:
        return mean
    se = float(totals.std(ddof=1) / np.sqrt(samples)) if samples > 1 else float("inf")
    return mean, se


def parking_context(inst: MixedLogitInstance):
    """Recover ``(params, profiles)`` from a generated parking instance."""
    meta = inst.metadata or {}
    if meta.get("generator") != "parking" or "profiles" not in meta:
        raise ValueError("instance carries no parking customer data")
    return params_from_dict(meta["params"]), profiles_from_dicts(meta["profiles"])
