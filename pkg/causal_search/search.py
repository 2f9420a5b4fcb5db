"""
Exact structure search over the order graph.

The order graph has one node per subset U of the variables; moving from U to
U + {i} places X_i after every member of U and costs the negated best local
score of X_i with parents drawn from U. Both the dynamic program and A*
return a shortest path from the empty set to the full set.
"""

import heapq
import logging
import math
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .graph import Dag, graph_to_json
from .score import ParentGraph, VarSet, from_mask, to_mask

DEFAULT_MAX_DP_VARS = 25
DEADLINE_CHECK_EVERY = 1024


class TooLargeError(ValueError):
    """Raised when an exhaustive method is asked to handle too many variables."""


class SearchTimeoutError(RuntimeError):
    """Raised when a search runs past its wall-clock deadline."""


class InfeasibleConstraintsError(RuntimeError):
    """Raised when no DAG satisfies the parent-graph constraints with a finite score."""


@dataclass
class SearchResult:
    dag: Dag
    total_score: float
    expanded_nodes: int
    runtime: float
    max_expanded_f: Optional[float] = None

    def to_dict(self) -> dict:
        payload = graph_to_json(self.dag)
        payload.update({"total_score": self.total_score, "expanded_nodes": self.expanded_nodes})
        return payload


class _OrderGraph:
    """Local-index view of a list of parent graphs."""

    def __init__(self, pgs: Sequence[ParentGraph], num_vars: Optional[int]):
        self.pgs = sorted(pgs, key=lambda pg: pg.variable)
        self.variables = [pg.variable for pg in self.pgs]
        if len(set(self.variables)) != len(self.variables):
            raise ValueError("Duplicate variables in parent graphs")
        self.num_vars = num_vars if num_vars is not None else (max(self.variables) + 1 if self.variables else 0)
        if self.variables and self.variables[-1] >= self.num_vars:
            raise ValueError(f"Variable {self.variables[-1]} out of range for {self.num_vars} variables")
        self.size = len(self.pgs)
        self.full = (1 << self.size) - 1
        self.bits = [1 << v for v in self.variables]

    def step(self, k: int, placed_global: int) -> Tuple[float, Optional[int]]:
        """Cost of placing local variable k after the globally-masked set, and the chosen parents."""
        score, mask = self.pgs[k].best_for(placed_global)
        if mask is None or score == -math.inf:
            return math.inf, None
        return -score, mask

    def best_unconstrained_cost(self, k: int) -> float:
        pg = self.pgs[k]
        return -pg.scores[0] if pg.scores else math.inf

    def result(self, parent_masks: Dict[int, int], expanded: int, started: float,
               max_f: Optional[float] = None) -> SearchResult:
        parents = [frozenset() for _ in range(self.num_vars)]
        total = 0.0
        for k, pg in enumerate(self.pgs):
            mask = parent_masks[k]
            parents[pg.variable] = from_mask(mask)
            total += pg.score_of(mask)
        dag = Dag(self.num_vars, tuple(parents))
        return SearchResult(dag, total, expanded, time.monotonic() - started, max_f)


def _check_deadline(deadline: Optional[float], method: str):
    if deadline is not None and time.monotonic() > deadline:
        raise SearchTimeoutError(f"{method} search exceeded its time budget")


def dp_exact(pgs: Sequence[ParentGraph], num_vars: Optional[int] = None,
             max_vars: int = DEFAULT_MAX_DP_VARS, deadline: Optional[float] = None) -> SearchResult:
    started = time.monotonic()
    og = _OrderGraph(pgs, num_vars)
    if og.size > max_vars:
        raise TooLargeError(f"Dynamic programming refuses {og.size} variables (limit {max_vars})")
    _check_deadline(deadline, "dp")

    subsets = og.full + 1
    cost = [math.inf] * subsets
    choice = [-1] * subsets
    chosen_parents = [0] * subsets
    gmask = [0] * subsets
    cost[0] = 0.0
    for U in range(1, subsets):
        if U % DEADLINE_CHECK_EVERY == 0:
            _check_deadline(deadline, "dp")
        low = U & -U
        gmask[U] = gmask[U ^ low] | og.bits[low.bit_length() - 1]
        rest = U
        while rest:
            bit = rest & -rest
            rest ^= bit
            prev = U ^ bit
            if cost[prev] == math.inf:
                continue
            k = bit.bit_length() - 1
            step_cost, mask = og.step(k, gmask[prev])
            candidate = cost[prev] + step_cost
            if candidate < cost[U]:
                cost[U] = candidate
                choice[U] = k
                chosen_parents[U] = mask
    if cost[og.full] == math.inf:
        raise InfeasibleConstraintsError("No DAG with finite score satisfies the constraints")

    parent_masks = {}
    U = og.full
    while U:
        k = choice[U]
        parent_masks[k] = chosen_parents[U]
        U ^= 1 << k
    result = og.result(parent_masks, subsets, started)
    logging.debug(f"dp_exact: {og.size} variables, score {result.total_score:.6f}, {result.runtime:.3f}s")
    return result


def simple_heuristic(pgs: Sequence[ParentGraph], U: VarSet) -> float:
    """Sum over unplaced variables of their best cost with every other variable allowed as a parent."""
    placed = to_mask(U)
    total = 0.0
    for pg in pgs:
        if placed >> pg.variable & 1:
            continue
        total += -pg.scores[0] if pg.scores else math.inf
    return total


def astar_exact(pgs: Sequence[ParentGraph], num_vars: Optional[int] = None,
                deadline: Optional[float] = None) -> SearchResult:
    started = time.monotonic()
    og = _OrderGraph(pgs, num_vars)
    _check_deadline(deadline, "A*")
    unplaced_cost = [og.best_unconstrained_cost(k) for k in range(og.size)]
    if math.inf in unplaced_cost:
        raise InfeasibleConstraintsError("A variable has no parent set with a finite score")
    h0 = sum(unplaced_cost)
    g_score: Dict[int, float] = {0: 0.0}
    came_from: Dict[int, Tuple[int, int, int]] = {}
    gmask: Dict[int, int] = {0: 0}
    # entries: (f, h, U); smaller h then smaller bitset break f ties
    frontier: List[Tuple[float, float, int]] = [(h0, h0, 0)]
    closed = set()
    expanded = 0
    max_f = -math.inf
    while frontier:
        f, h, U = heapq.heappop(frontier)
        if U in closed:
            continue
        if U == og.full:
            break
        closed.add(U)
        expanded += 1
        max_f = max(max_f, f)
        if expanded % DEADLINE_CHECK_EVERY == 0:
            _check_deadline(deadline, "A*")
        g = g_score[U]
        placed = gmask[U]
        for k in range(og.size):
            bit = 1 << k
            if U & bit:
                continue
            step_cost, mask = og.step(k, placed)
            if step_cost == math.inf:
                continue
            V = U | bit
            if V in closed:
                continue
            g_new = g + step_cost
            if g_new < g_score.get(V, math.inf):
                g_score[V] = g_new
                came_from[V] = (U, k, mask)
                gmask[V] = placed | og.bits[k]
                h_new = h - unplaced_cost[k]
                heapq.heappush(frontier, (g_new + h_new, h_new, V))
    else:
        raise InfeasibleConstraintsError("No DAG with finite score satisfies the constraints")

    parent_masks = {}
    V = og.full
    while V:
        U, k, mask = came_from[V]
        parent_masks[k] = mask
        V = U
    result = og.result(parent_masks, expanded, started, max_f if expanded else None)
    optimum = g_score[og.full]
    if expanded and max_f > optimum + 1e-9 * max(1.0, abs(optimum)):
        logging.warning(f"A* expanded a node with f={max_f} above the optimal cost {optimum}")
    logging.debug(f"astar_exact: {og.size} variables, {expanded} expansions, "
                  f"score {result.total_score:.6f}, {result.runtime:.3f}s")
    return result
