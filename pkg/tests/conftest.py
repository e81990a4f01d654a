import numpy as np
import pytest

from logitprice.model import Alternative, MixedLogitInstance


def make_instance(beta, q, w=None, lb=None, ub=None, priced=None, A=None, b=None):
    beta = np.asarray(beta, dtype=float)
    q = np.asarray(q, dtype=float)
    I, N, L = beta.shape
    priced = [True] * I if priced is None else priced
    m = sum(priced)
    w = np.full((L, N), 1.0 / L) if w is None else np.asarray(w, dtype=float)
    return MixedLogitInstance(
        alternatives=[Alternative(f"a{i}", pr) for i, pr in enumerate(priced)],
        price_coef=beta,
        exo_utility=q,
        class_weight=w,
        price_lb=np.zeros(m) if lb is None else lb,
        price_ub=np.ones(m) if ub is None else ub,
        A=A,
        b=b,
    )


def monopoly(N=1):
    """One priced alternative and nothing else: revenue is N * p."""
    return make_instance(-np.ones((1, N, 1)), np.zeros((1, N, 1)))


def single_with_optout(ub=10.0):
    """Revenue p e^-p / (e^-p + 1)."""
    return make_instance([[[-1.0]], [[-1.0]]], np.zeros((2, 1, 1)), ub=[ub], priced=[True, False])


def symmetric_pair(L=2, N=1, ub=5.0):
    beta = np.broadcast_to(np.linspace(-1.0, -2.0, L), (3, N, L)).copy()
    q = np.zeros((3, N, L))
    return make_instance(beta, q, lb=[0.0, 0.0], ub=[ub, ub], priced=[True, True, False])


def random_two_product(seed, N=None, L=None, ub=10.0):
    """Two priced products plus an opt-out, q ~ U[-5, 5], beta ~ U[-5, -0.025]."""
    rng = np.random.default_rng(seed)
    N = N or int(rng.integers(1, 4))
    L = L or int(rng.integers(1, 4))
    beta = rng.uniform(-5.0, -0.025, size=(3, N, L))
    q = rng.uniform(-5.0, 5.0, size=(3, N, L))
    q[2] = 0.0
    w = rng.dirichlet(np.ones(L), size=N).T
    return make_instance(beta, q, w=w, lb=[0.0, 0.0], ub=[ub, ub], priced=[True, True, False])


def grid_revenue_max(inst, step, chunk=500, want_above=None):
    """Exhaustive grid search over a two-price box.

    Revenue is evaluated independently of the package: for each (n, l) the
    exponentials factor over the two price axes, so every chunk of rows is an
    outer product.  Returns ``(best_value, best_point, points_above)`` where
    the last item lists grid points whose revenue exceeds ``want_above``.
    """
    assert inst.n_priced == 2
    g1 = np.arange(inst.price_lb[0], inst.price_ub[0] + 0.5 * step, step)
    g2 = np.arange(inst.price_lb[1], inst.price_ub[1] + 0.5 * step, step)
    g1 = np.minimum(g1, inst.price_ub[0])
    g2 = np.minimum(g2, inst.price_ub[1])
    k1, k2 = inst.priced_index
    others = [i for i in range(inst.n_alternatives) if i not in (k1, k2)]
    best, arg, above = -np.inf, None, []
    for s in range(0, g1.size, chunk):
        a = g1[s:s + chunk]
        total = np.zeros((a.size, g2.size))
        for n in range(inst.n_customers):
            for l in range(inst.n_classes):
                w = inst.class_weight[l, n] * inst.customer_mass[n]
                v1 = inst.exo_utility[k1, n, l] + inst.price_coef[k1, n, l] * a
                v2 = inst.exo_utility[k2, n, l] + inst.price_coef[k2, n, l] * g2
                vo = inst.exo_utility[others, n, l]
                M = max(v1.max(), v2.max(), vo.max() if len(others) else -np.inf)
                e1 = np.exp(v1 - M)[:, None]
                e2 = np.exp(v2 - M)[None, :]
                eo = np.exp(vo - M).sum() if len(others) else 0.0
                total += w * (a[:, None] * e1 + g2[None, :] * e2) / (e1 + e2 + eo)
        i, j = np.unravel_index(np.argmax(total), total.shape)
        if total[i, j] > best:
            best, arg = float(total[i, j]), np.array([a[i], g2[j]])
        if want_above is not None:
            ii, jj = np.nonzero(total > want_above)
            above.extend(zip(a[ii], g2[jj]))
    return best, arg, above


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
