import numpy as np
import pytest

from logitprice.instances import INTEL_REFERENCE_PRICES, intel_instance, parking_instance, random_instance
from logitprice.local_search import local_search
from logitprice.model import expected_revenue, f_gradients, ratio_denominators
from logitprice.relaxation import (
    ConfigurationError,
    NodeBox,
    PointPool,
    RelaxationLayout,
    TauBounds,
    build_relaxation,
    compute_tau_bounds,
    node_upper_bound,
    tau_lower_bound,
    tau_lower_bounds,
    tau_upper_bound,
    tau_upper_bounds,
)

from conftest import grid_revenue_max, make_instance, monopoly, random_two_product

INTEL = intel_instance()


def families():
    base = random_two_product(21)
    constrained = make_instance(base.price_coef, base.exo_utility, w=base.class_weight, lb=[0, 0],
                                ub=[10, 10], priced=[True, True, False], A=[[1.0, -1.0]], b=[-2.0])
    return {
        "intel": INTEL,
        "parking": parking_instance(seed=1, N=3, n_grid=3),
        "random": random_instance(4, I=3, K=3, N=2, price_ub=10.0),
        "constrained": constrained,
    }


def feasible_points(inst, box, rng, count):
    P = rng.uniform(box.lb, box.ub, size=(200 * count, box.lb.size))
    out = [p for p in P if inst.is_feasible(p, tol=0.0)]
    return out[:count] if len(out) >= count else None


def sub_box(inst, rng, count=0):
    """A random box, with ``count`` sampled feasible points when asked."""
    while True:
        a = rng.uniform(inst.price_lb, inst.price_ub)
        b = rng.uniform(inst.price_lb, inst.price_ub)
        box = NodeBox(np.minimum(a, b), np.maximum(a, b))
        if count == 0:
            return box
        pts = feasible_points(inst, box, rng, count)
        if pts is not None:
            return box, pts


# -- boxes and pools --------------------------------------------------------------------

def test_node_box_geometry():
    box = NodeBox([0.0, 1.0], [2.0, 1.0])
    np.testing.assert_array_equal(box.widths, [2.0, 0.0])
    np.testing.assert_array_equal(box.center, [1.0, 1.0])
    assert box.half_diagonal == 1.0
    assert box.vertices().shape == (4, 2)
    with pytest.raises(ValueError):
        NodeBox([1.0], [0.0])


def test_pool_deduplicates_and_keeps_newest():
    pool = PointPool(capacity=3)
    assert pool.add([1.0, 2.0])
    assert not pool.add([1.0, 2.0 + 1e-10])
    for k in range(4):
        pool.add([float(k), 9.0])
    assert len(pool) == 3
    np.testing.assert_array_equal(pool.points[-1], [3.0, 9.0])
    clone = pool.copy()
    clone.add([7.0, 7.0])
    assert len(pool) == 3 and clone.points[-1][0] == 7.0


# -- tau bounds ----------------------------------------------------------------------------

def test_single_alternative_tau_is_one():
    box = NodeBox([0.0], [1.0])
    assert tau_upper_bound(monopoly(), box, 0, 0, 0) == 1.0
    assert tau_lower_bound(monopoly(), box, 0, 0, 0) == 1.0


def test_point_box_gives_exact_tau():
    p = INTEL_REFERENCE_PRICES
    tb = compute_tau_bounds(INTEL, NodeBox(p, p))
    exact = 1.0 / ratio_denominators(INTEL, p)[:3]
    np.testing.assert_allclose(tb.lb, exact, rtol=1e-12)
    np.testing.assert_allclose(tb.ub, exact, rtol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_tau_bounds_match_grid_oracle(seed):
    inst = random_two_product(100 + seed, ub=4.0)
    box = NodeBox([0.5, 1.0], [3.0, 2.5])
    g1, g2 = np.meshgrid(np.linspace(0.5, 3.0, 200), np.linspace(1.0, 2.5, 200), indexing="ij")
    pts = np.column_stack([g1.ravel(), g2.ravel()])
    f = np.array([ratio_denominators(inst, p)[:2] for p in pts])      # (S, 2, N, L)
    ub = tau_upper_bounds(inst, box)
    lb = tau_lower_bounds(inst, box)
    # the grid contains the four vertices, where the convex maximum sits
    np.testing.assert_allclose(lb, 1.0 / f.max(axis=0), rtol=1e-10)
    # a grid can only overestimate the minimum of f
    assert np.all(ub >= 1.0 / f.min(axis=0) * (1 - 1e-12))
    np.testing.assert_allclose(ub, 1.0 / f.min(axis=0), rtol=1e-4)


def test_interval_bound_is_weaker_but_valid():
    box = NodeBox([500.0, 300.0, 1000.0], [700.0, 400.0, 1300.0])
    v = tau_lower_bounds(INTEL, box, "vertex")
    i = tau_lower_bounds(INTEL, box, "interval")
    assert np.all(i <= v * (1 + 1e-12))
    assert np.all(i > 0)


def test_vertex_enumeration_guard():
    beta = -np.ones((21, 1, 1))
    inst = make_instance(beta, np.zeros((21, 1, 1)), lb=np.zeros(21), ub=np.ones(21))
    with pytest.raises(ConfigurationError, match="interval"):
        tau_lower_bounds(inst, NodeBox.of(inst))
    assert np.all(tau_lower_bounds(inst, NodeBox.of(inst), "interval") > 0)


@pytest.mark.parametrize("name", ["intel", "parking", "random", "constrained"])
def test_tau_bounds_contain_sampled_values(name):
    inst = families()[name]
    rng = np.random.default_rng(3)
    for _ in range(5):
        box = sub_box(inst, rng)
        tb = compute_tau_bounds(inst, box)
        assert np.all(0 < tb.lb) and np.all(tb.lb <= tb.ub) and np.all(tb.ub <= 1)
        for p in rng.uniform(box.lb, box.ub, size=(50, box.lb.size)):
            tau = 1.0 / ratio_denominators(inst, p)[inst.priced_index]
            assert np.all(tb.lb <= tau * (1 + 1e-12))
            assert np.all(tau <= tb.ub * (1 + 1e-12))
            assert np.all(tau.sum(axis=0) <= tb.total_ub * (1 + 1e-12))


def test_tau_upper_bound_monotone_under_shrinking():
    rng = np.random.default_rng(5)
    box = NodeBox.of(INTEL)
    prev = tau_upper_bounds(INTEL, box)
    for _ in range(6):
        box = NodeBox(box.lb, np.maximum(box.lb, box.ub - rng.uniform(0, 0.5) * box.widths))
        cur = tau_upper_bounds(INTEL, box)
        assert np.all(cur <= prev * (1 + 1e-9))
        prev = cur


# -- the LP ---------------------------------------------------------------------------------

def test_intel_variable_count():
    box = NodeBox.of(INTEL)
    lp, lay = build_relaxation(INTEL, box, PointPool([INTEL_REFERENCE_PRICES]), compute_tau_bounds(INTEL, box))
    assert lp.num_vars == lay.n_vars == 3 + 21 + 63 == 87


def test_degenerate_mccormick_forces_product():
    p = np.array([600.0, 370.0, 1200.0])
    box = NodeBox(p, p)
    tb = compute_tau_bounds(INTEL, box)
    tight = TauBounds(tb.lb, tb.lb, tb.total_ub)
    lp, lay = build_relaxation(INTEL, box, PointPool([p]), tight)
    rng = np.random.default_rng(0)
    for _ in range(5):
        lp.objective = rng.normal(size=lp.num_vars)
        from logitprice.lp import solve_lp
        sol = solve_lp(lp)
        tau = sol.x[lay.m:lay.m + lay.n_tau].reshape(3, 1, 7)
        W = sol.x[lay.m + lay.n_tau:].reshape(3, 3, 1, 7)
        np.testing.assert_allclose(W, tau[:, None] * p[None, :, None, None], rtol=1e-7, atol=1e-9)


@pytest.mark.parametrize("name", ["intel", "parking", "random", "constrained"])
def test_true_points_satisfy_every_row(name):
    inst = families()[name]
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(4):
        box, pts = sub_box(inst, rng, 25 + 3)
        pool = PointPool(pts[:3])
        lp, lay = build_relaxation(inst, box, pool, compute_tau_bounds(inst, box))
        for p in pts[3:]:
            x = lay.point(inst, p)
            assert np.all(x >= lp.lb - 1e-12 * (1 + np.abs(lp.lb)))
            assert np.all(x <= lp.ub + 1e-12 * (1 + np.abs(lp.ub)))
            worst = max(worst, lp.max_violation(x))
    assert worst <= 1e-9


@pytest.mark.parametrize("name", ["intel", "parking", "random"])
def test_supporting_hyperplanes_underestimate(name):
    inst = families()[name]
    rng = np.random.default_rng(2)
    box = NodeBox.of(inst)
    idx = inst.priced_index
    for a in rng.uniform(box.lb, box.ub, size=(3, box.lb.size)):
        fa = ratio_denominators(inst, a)[idx]
        ga = f_gradients(inst, a)[idx]                       # (m, m, N, L)
        P = rng.uniform(box.lb, box.ub, size=(10_000, box.lb.size))
        for p in P:
            lin = fa + np.einsum("kjnl,j->knl", ga, p - a)
            f = ratio_denominators(inst, p)[idx]
            assert np.all(f >= lin - 1e-9 * np.maximum(1.0, np.abs(f)))


def test_monopoly_bound_is_exact():
    inst = monopoly(N=2)
    box = NodeBox.of(inst)
    nb = node_upper_bound(inst, box, PointPool([[0.5]]))
    assert nb.ub >= 2.0 - 1e-9
    assert nb.ub == pytest.approx(2.0, abs=1e-7)


def test_intel_bound_covers_reference_optimum():
    nb = node_upper_bound(INTEL, NodeBox.of(INTEL), PointPool([INTEL_REFERENCE_PRICES]))
    assert nb.ub >= 362.3389
    assert nb.ub >= expected_revenue(INTEL, INTEL_REFERENCE_PRICES)
    assert NodeBox.of(INTEL).contains(nb.p_candidate)


@pytest.mark.parametrize("seed", range(50))
def test_bound_dominates_grid_optimum(seed):
    inst = random_two_product(seed)
    best, _, _ = grid_revenue_max(inst, 0.02)
    nb = node_upper_bound(inst, NodeBox.of(inst), PointPool([inst.price_ub / 2]))
    assert nb.ub >= best - 1e-7


@pytest.mark.parametrize("name", ["intel", "parking", "random", "constrained"])
def test_bound_dominates_sampled_revenue(name):
    inst = families()[name]
    rng = np.random.default_rng(8)
    for _ in range(3):
        box, pts = sub_box(inst, rng, 101)
        nb = node_upper_bound(inst, box, PointPool(pts[:1]))
        vals = [expected_revenue(inst, p) for p in pts[1:]]
        assert nb.ub >= max(vals) - 1e-7


def test_more_anchors_never_loosen():
    rng = np.random.default_rng(4)
    for seed in range(8):
        inst = random_two_product(seed)
        box = NodeBox.of(inst)
        pool = PointPool([box.center])
        prev = node_upper_bound(inst, box, pool).ub
        for p in rng.uniform(box.lb, box.ub, size=(4, 2)):
            pool.add(p)
            cur = node_upper_bound(inst, box, pool).ub
            assert cur <= prev + 1e-7 * max(1.0, abs(prev))
            prev = cur


def test_children_never_exceed_parent():
    from logitprice.bnb import Node, branch
    for seed in range(8):
        inst = random_two_product(seed)
        box = NodeBox.of(inst)
        pool = PointPool([local_search(inst).prices, box.center])
        parent = node_upper_bound(inst, box, pool).ub
        left, right = branch(Node(box, pool, parent, 0, 0))
        kids = [node_upper_bound(inst, c.box, pool).ub for c in (left, right)]
        assert max(kids) <= parent + 1e-7 * max(1.0, abs(parent))


def test_box_outside_polytope_gets_minus_infinity():
    inst = families()["constrained"]          # p0 - p1 >= -2
    nb = node_upper_bound(inst, NodeBox([0.0, 5.0], [1.0, 10.0]), PointPool([[0.5, 2.0]]))
    assert nb.ub == -np.inf


def test_layout_point_round_trip():
    lay = RelaxationLayout(3, 1, 7)
    x = lay.point(INTEL, INTEL_REFERENCE_PRICES)
    tau = x[lay.tau(0, 0, 5)]
    assert x[lay.W(0, 0, 0, 5)] == pytest.approx(tau * INTEL_REFERENCE_PRICES[0])


@pytest.mark.parametrize("name", ["intel", "parking", "random", "constrained"])
def test_warm_started_children_match_cold(name):
    from logitprice.bnb import Node, branch
    inst = families()[name]
    rng = np.random.default_rng(8)
    box, pts = sub_box(inst, rng, count=2)
    pool = PointPool(pts)
    parent = node_upper_bound(inst, box, pool)
    assert parent.warm is not None
    node = Node(box, pool, parent.ub, 0, 0, parent.warm)
    for child in branch(node):
        child.pool.add(child.box.center)
        cold = node_upper_bound(inst, child.box, child.pool)
        warm = node_upper_bound(inst, child.box, child.pool, warm=child.warm)
        if cold.ub == -np.inf:
            assert warm.ub == -np.inf
            continue
        assert warm.ub == pytest.approx(cold.ub, rel=1e-6, abs=1e-9)


def test_warm_start_follows_reordered_anchors():
    from logitprice.relaxation import _assemble, _warm_basis
    inst = random_instance(4, I=3, K=3, N=2, price_ub=10.0)
    box = NodeBox.of(inst)
    a, b = np.full(3, 2.0), np.full(3, 6.0)
    tb = compute_tau_bounds(inst, box)
    nb = node_upper_bound(inst, box, PointPool([a, b]))
    _, _, keys = _assemble(inst, box, (b, a), tb, None)
    basis = _warm_basis(nb.warm, keys, (b, a))
    # each hyperplane row moves to the other anchor's slot, nothing else changes
    old = nb.warm.row_keys
    hyp = (old >> 56) == 1
    moved = keys[basis.rows]
    assert np.sum((moved >> 56) == 1) == np.sum(hyp)
    assert np.array_equal(np.sort(moved[(moved >> 56) != 1]), np.sort(old[~hyp]))
    swapped = np.sort(old[hyp] ^ (np.int64(1) << 32))
    assert np.array_equal(np.sort(moved[(moved >> 56) == 1]), swapped)
