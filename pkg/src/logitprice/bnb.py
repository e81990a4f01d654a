"""Spatial branch-and-bound over the price box.

Nodes are processed best-first by upper bound.  Each node runs local searches
inside its box (lower bounds), solves the LP relaxation (upper bound), tries
the relaxation's price vector as a candidate, and is either fathomed or split
at the midpoint of its widest side.
"""
from __future__ import annotations

import enum
import heapq
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .lp import LpStatus
from .local_search import InfeasibleRegion, LocalSearchConfig, local_search
from .model import MixedLogitInstance, expected_revenue
from .relaxation import (
    NodeBound,
    NodeBox,
    PointPool,
    POOL_CAPACITY,
    RelaxationFailure,
    WarmStart,
    box_feasible,
    compute_tau_bounds,
    node_upper_bound,
    trivial_bound,
)

log = logging.getLogger(__name__)

FATHOM_REL = 1e-9
SOLUTION_LIST_LIMIT = 50


class SolveStatus(str, enum.Enum):
    OPTIMAL_WITHIN_TOL = "OptimalWithinTol"
    TIME_LIMIT = "TimeLimit"
    NODE_LIMIT = "NodeLimit"


@dataclass(frozen=True)
class SolveConfig:
    gap_tol: float = 1e-5
    time_limit: Optional[float] = None
    node_limit: Optional[int] = None
    seed: int = 0
    ls_starts: int = 1
    threads: int = 1
    pool_capacity: int = POOL_CAPACITY
    local_search: LocalSearchConfig = field(default_factory=LocalSearchConfig)
    tau_method: str = "vertex"
    record_boxes: bool = False
    warm_start: bool = True

    def __post_init__(self):
        if not self.gap_tol > 0:
            raise ValueError("gap_tol must be positive")
        if self.time_limit is not None and not self.time_limit > 0:
            raise ValueError("time_limit must be positive")
        if self.node_limit is not None and self.node_limit < 1:
            raise ValueError("node_limit must be positive")
        if self.ls_starts < 0 or self.threads < 1:
            raise ValueError("ls_starts must be >= 0 and threads >= 1")


@dataclass
class Node:
    box: NodeBox
    pool: PointPool
    upper_bound: float
    depth: int
    id: int
    warm: Optional[WarmStart] = None


@dataclass(frozen=True)
class TracePoint:
    iteration: int
    wall_time: float
    incumbent_value: float
    global_upper_bound: float
    open_nodes: int
    max_box_radius: float


@dataclass
class SolveReport:
    incumbent: np.ndarray
    incumbent_value: float
    global_upper_bound: float
    gap: float
    status: SolveStatus
    trace: List[TracePoint]
    nodes_explored_per_iteration: List[int]
    solutions: list
    n_nodes: int
    elapsed: float
    fathomed_boxes: list = field(default_factory=list)
    open_boxes: list = field(default_factory=list)


def relative_gap(ub: float, inc: float) -> float:
    return max(0.0, (ub - inc) / max(1.0, abs(inc)))


def select_branch_dim(box: NodeBox) -> int:
    """Widest side, smallest index on ties."""
    w = box.widths
    if not np.any(w > 0):
        raise ValueError("cannot branch on a degenerate box")
    return int(np.argmax(w))


def branch(node: Node, next_id: int = 0):
    """Split ``node`` at the midpoint of its widest side; children inherit pool and bound."""
    d = select_branch_dim(node.box)
    lb, ub = node.box.lb, node.box.ub
    mid = 0.5 * (lb[d] + ub[d])
    ub_left = ub.copy()
    ub_left[d] = mid
    lb_right = lb.copy()
    lb_right[d] = mid
    left = Node(NodeBox(lb, ub_left), node.pool.copy(), node.upper_bound, node.depth + 1, next_id, node.warm)
    right = Node(NodeBox(lb_right, ub), node.pool.copy(), node.upper_bound, node.depth + 1, next_id + 1,
                 node.warm)
    return left, right


@dataclass
class _Evaluation:
    candidates: list
    bound: Optional[NodeBound]
    failed: bool = False
    empty: bool = False


def _evaluate(inst: MixedLogitInstance, node: Node, cfg: SolveConfig) -> _Evaluation:
    box = node.box
    if not box_feasible(inst, box):
        return _Evaluation([], None, empty=True)
    rng = np.random.default_rng([cfg.seed, node.id])
    candidates = []
    for _ in range(cfg.ls_starts):
        try:
            res = local_search(inst, cfg.local_search, lb=box.lb, ub=box.ub, rng=rng)
        except InfeasibleRegion:
            break
        candidates.append((res.prices, res.value))
        node.pool.add(res.prices)
    center = box.center
    if inst.is_feasible(center):
        node.pool.add(center)
    if len(node.pool) == 0:
        node.pool.add(np.clip(center, inst.price_lb, inst.price_ub))
    bound = None
    failed = False
    warm = node.warm if cfg.warm_start else None
    for attempt in range(2):
        try:
            bound = node_upper_bound(inst, box, node.pool, cfg.tau_method, warm if attempt == 0 else None)
            break
        except RelaxationFailure as exc:
            log.debug("relaxation failed on node %d (%s)", node.id, exc)
            # perturb the pool once and retry
            node.pool.add(rng.uniform(box.lb, box.ub))
    else:
        failed = True
        tb = compute_tau_bounds(inst, box, cfg.tau_method)
        bound = NodeBound(trivial_bound(inst, box, tb), None, LpStatus.NUMERICAL_FAILURE,
                          flagged=True, tau_bounds=tb)
    if bound is not None and bound.p_candidate is not None:
        p = bound.p_candidate
        if inst.is_feasible(p):
            candidates.append((p, expected_revenue(inst, p)))
            try:
                res = local_search(inst, cfg.local_search, p0=p, lb=box.lb, ub=box.ub)
                candidates.append((res.prices, res.value))
            except (InfeasibleRegion, ValueError):
                pass
    return _Evaluation(candidates, bound, failed)


def solve(inst: MixedLogitInstance, config: Optional[SolveConfig] = None) -> SolveReport:
    """Maximize expected revenue to a certified relative gap."""
    cfg = config or SolveConfig()
    start = time.perf_counter()
    root_box = NodeBox.of(inst)
    if not box_feasible(inst, root_box):
        raise ValueError("instance has no feasible price vector")
    root = Node(root_box, PointPool(capacity=cfg.pool_capacity), np.inf, 0, 0)
    heap = [(-np.inf, 0, root)]
    next_id = 1
    inc_p: Optional[np.ndarray] = None
    inc_v = -np.inf
    solutions: list = []
    fathomed_ub = -np.inf
    fathomed_boxes: list = []
    trace: List[TracePoint] = []
    per_depth: List[int] = []
    processed = 0
    status = SolveStatus.OPTIMAL_WITHIN_TOL
    executor = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None

    def gub() -> float:
        open_ub = -heap[0][0] if heap else -np.inf
        return max(open_ub, fathomed_ub, inc_v)

    def fathom_level() -> float:
        return inc_v + FATHOM_REL * abs(inc_v) + cfg.gap_tol * max(1.0, abs(inc_v))

    def record(p, v):
        nonlocal inc_p, inc_v
        if v > inc_v:
            inc_p, inc_v = np.array(p, dtype=float), float(v)
        solutions.append((float(v), np.array(p, dtype=float)))

    def fathom(node, ub):
        nonlocal fathomed_ub
        fathomed_ub = max(fathomed_ub, ub)
        if cfg.record_boxes:
            fathomed_boxes.append((node.box.lb.copy(), node.box.ub.copy(), float(ub)))

    try:
        while heap:
            if inc_p is not None and relative_gap(gub(), inc_v) <= cfg.gap_tol * (1 + 1e-6) + 1e-12:
                break
            if cfg.node_limit is not None and processed >= cfg.node_limit:
                status = SolveStatus.NODE_LIMIT
                break
            # the root is always processed so that an incumbent exists
            if processed and cfg.time_limit is not None and time.perf_counter() - start >= cfg.time_limit:
                status = SolveStatus.TIME_LIMIT
                break
            batch = []
            budget = cfg.threads
            if cfg.node_limit is not None:
                budget = min(budget, cfg.node_limit - processed)
            while heap and len(batch) < budget:
                neg_ub, _, node = heapq.heappop(heap)
                # prune with the current incumbent before spending work on it
                if inc_p is not None and node.upper_bound <= fathom_level():
                    fathom(node, node.upper_bound)
                    continue
                batch.append(node)
            if not batch:
                continue
            if executor is None:
                results = [_evaluate(inst, batch[0], cfg)]
            else:
                results = list(executor.map(lambda nd: _evaluate(inst, nd, cfg), batch))
            for node, ev in zip(batch, results):
                processed += 1
                while len(per_depth) <= node.depth:
                    per_depth.append(0)
                per_depth[node.depth] += 1
                for p, v in ev.candidates:
                    record(p, v)
                if ev.empty:
                    fathom(node, -np.inf)
                    continue
                if ev.bound is not None and ev.bound.ub < np.inf:
                    node.upper_bound = min(node.upper_bound, ev.bound.ub)
                    node.warm = ev.bound.warm
                if inc_p is not None and node.upper_bound <= fathom_level():
                    fathom(node, node.upper_bound)
                    continue
                if not np.any(node.box.widths > 0):
                    # a single point: its value is known exactly
                    v = expected_revenue(inst, node.box.lb)
                    record(node.box.lb, v)
                    fathom(node, v)
                    continue
                left, right = branch(node, next_id)
                next_id += 2
                for child in (left, right):
                    heapq.heappush(heap, (-child.upper_bound, child.id, child))
            log.debug("node %d: incumbent %.10g, bound %.10g, open %d", processed, inc_v, gub(), len(heap))
            trace.append(TracePoint(
                iteration=processed,
                wall_time=time.perf_counter() - start,
                incumbent_value=inc_v,
                global_upper_bound=gub(),
                open_nodes=len(heap),
                max_box_radius=max((nd.box.half_diagonal for _, _, nd in heap), default=0.0),
            ))
    finally:
        if executor is not None:
            executor.shutdown()

    if inc_p is None:
        raise RuntimeError("no feasible price vector found")
    if not heap:
        status = SolveStatus.OPTIMAL_WITHIN_TOL
    upper = gub()
    gap = relative_gap(upper, inc_v)
    keep = inc_v - cfg.gap_tol * max(1.0, abs(inc_v))
    sols = []
    for v, p in sorted(solutions, key=lambda s: -s[0]):
        if v < keep or len(sols) >= SOLUTION_LIST_LIMIT:
            break
        if all(np.max(np.abs(p - q)) > 1e-6 for _, q in sols):
            sols.append((v, p))
    return SolveReport(
        incumbent=inc_p,
        incumbent_value=inc_v,
        global_upper_bound=upper,
        gap=gap,
        status=status,
        trace=trace,
        nodes_explored_per_iteration=per_depth,
        solutions=sols,
        n_nodes=processed,
        elapsed=time.perf_counter() - start,
        fathomed_boxes=fathomed_boxes,
        open_boxes=[(nd.box.lb.copy(), nd.box.ub.copy(), float(nd.upper_bound)) for _, _, nd in heap]
        if cfg.record_boxes else [],
    )
