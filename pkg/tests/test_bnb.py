import numpy as np
import pytest

from logitprice.bnb import Node, SolveConfig, SolveStatus, branch, relative_gap, select_branch_dim, solve
from logitprice.model import expected_revenue
from logitprice.relaxation import NodeBox, PointPool

from conftest import grid_revenue_max, make_instance, monopoly, random_two_product, single_with_optout


def nonincreasing(xs, rel=1e-12):
    return all(b <= a + rel * max(1.0, abs(a)) for a, b in zip(xs, xs[1:]))


def test_widest_side_smallest_index():
    assert select_branch_dim(NodeBox([0, 0, 0], [1, 3, 3])) == 1
    assert select_branch_dim(NodeBox([0, 0], [2, 1])) == 0
    with pytest.raises(ValueError):
        select_branch_dim(NodeBox([1.0], [1.0]))


def test_children_tile_parent():
    parent = Node(NodeBox([0.0, 0.0], [4.0, 2.0]), PointPool([[1.0, 1.0]]), 7.0, 2, 0)
    left, right = branch(parent, 5)
    np.testing.assert_array_equal(left.box.ub, [2.0, 2.0])
    np.testing.assert_array_equal(right.box.lb, [2.0, 0.0])
    assert (left.id, right.id) == (5, 6)
    assert left.depth == right.depth == 3
    assert left.upper_bound == right.upper_bound == 7.0
    left.pool.add([3.0, 3.0])
    assert len(right.pool) == 1


def test_relative_gap():
    assert relative_gap(2.0, 1.0) == 1.0
    assert relative_gap(0.5, 0.0) == 0.5
    assert relative_gap(1.0, 2.0) == 0.0


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(gap_tol=0)
    with pytest.raises(ValueError):
        SolveConfig(threads=0)
    with pytest.raises(ValueError):
        SolveConfig(node_limit=0)


def test_monopoly_solved_at_root():
    rep = solve(monopoly(N=2))
    assert rep.status == SolveStatus.OPTIMAL_WITHIN_TOL
    assert rep.incumbent_value == pytest.approx(2.0)
    assert rep.gap <= 1e-5
    assert rep.n_nodes <= 3


def test_single_product_with_optout():
    inst = single_with_optout()
    rep = solve(inst, SolveConfig(gap_tol=1e-6))
    grid = np.arange(0.0, 10.0, 1e-5)
    best = (grid * np.exp(-grid) / (np.exp(-grid) + 1)).max()
    assert rep.incumbent_value >= best - 1e-9
    assert rep.global_upper_bound >= best
    assert rep.gap <= 1e-6


@pytest.mark.parametrize("seed", range(6))
def test_random_two_product_against_grid(seed):
    inst = random_two_product(seed)
    rep = solve(inst, SolveConfig(gap_tol=1e-4, record_boxes=True))
    best, _, above = grid_revenue_max(inst, 5e-3, want_above=rep.incumbent_value + 1e-4 * max(1, rep.incumbent_value))
    assert rep.status == SolveStatus.OPTIMAL_WITHIN_TOL
    assert rep.incumbent_value >= best - 1e-4 * (1 + abs(best))
    assert rep.global_upper_bound >= best - 1e-12
    for lb, ub, _ in rep.fathomed_boxes:
        for p in above:
            assert not (np.all(p >= lb) and np.all(p <= ub))


@pytest.mark.parametrize("seed", range(4))
def test_trace_is_monotone(seed):
    rep = solve(random_two_product(10 + seed), SolveConfig(gap_tol=1e-6))
    ubs = [t.global_upper_bound for t in rep.trace]
    incs = [t.incumbent_value for t in rep.trace]
    assert nonincreasing(ubs)
    assert nonincreasing([-v for v in incs])
    assert all(u >= v for u, v in zip(ubs, incs))


def test_fathomed_and_open_boxes_tile_the_root():
    inst = random_two_product(3)
    rep = solve(inst, SolveConfig(node_limit=40, record_boxes=True, gap_tol=1e-9))
    boxes = rep.fathomed_boxes + rep.open_boxes
    area = sum(np.prod(ub - lb) for lb, ub, _ in boxes)
    assert area == pytest.approx(100.0, rel=1e-12)
    rng = np.random.default_rng(0)
    for p in rng.uniform(0, 10, size=(500, 2)):
        assert any(np.all(p >= lb) and np.all(p <= ub) for lb, ub, _ in boxes)


def test_node_limit_reports_valid_bounds():
    inst = random_two_product(5)
    rep = solve(inst, SolveConfig(node_limit=3, gap_tol=1e-12))
    assert rep.status == SolveStatus.NODE_LIMIT
    assert rep.n_nodes == 3
    assert rep.global_upper_bound >= rep.incumbent_value
    assert rep.incumbent_value == pytest.approx(expected_revenue(inst, rep.incumbent))


def test_time_limit_status():
    rep = solve(random_two_product(7, N=3, L=3), SolveConfig(time_limit=1e-9, gap_tol=1e-12))
    assert rep.status in (SolveStatus.TIME_LIMIT, SolveStatus.OPTIMAL_WITHIN_TOL)
    assert rep.incumbent is not None


def test_solutions_list_within_tolerance():
    inst = make_instance(np.full((3, 1, 1), -1.0), np.zeros((3, 1, 1)), lb=[0, 0], ub=[5, 5],
                         priced=[True, True, False])
    rep = solve(inst, SolveConfig(gap_tol=1e-5))
    for v, p in rep.solutions:
        assert v >= rep.incumbent_value - 1e-5 * max(1, rep.incumbent_value)
        assert v == pytest.approx(expected_revenue(inst, p))


def test_linear_constraints_respected():
    base = random_two_product(2)
    inst = make_instance(base.price_coef, base.exo_utility, w=base.class_weight, lb=[0, 0], ub=[10, 10],
                         priced=[True, True, False], A=[[1.0, -1.0]], b=[1.0])
    rep = solve(inst, SolveConfig(gap_tol=1e-4))
    assert rep.incumbent[0] - rep.incumbent[1] >= 1.0 - 1e-7


def test_runs_are_deterministic():
    inst = random_two_product(9)
    a = solve(inst, SolveConfig(seed=3, gap_tol=1e-5))
    b = solve(inst, SolveConfig(seed=3, gap_tol=1e-5))
    np.testing.assert_array_equal(a.incumbent, b.incumbent)
    assert [(t.incumbent_value, t.global_upper_bound, t.open_nodes) for t in a.trace] == \
           [(t.incumbent_value, t.global_upper_bound, t.open_nodes) for t in b.trace]


def test_threads_reach_the_same_certificate():
    inst = random_two_product(4)
    one = solve(inst, SolveConfig(gap_tol=1e-5))
    two = solve(inst, SolveConfig(gap_tol=1e-5, threads=2))
    assert two.gap <= 1e-5
    assert two.incumbent_value == pytest.approx(one.incumbent_value, abs=2e-5 * max(1, one.incumbent_value))
