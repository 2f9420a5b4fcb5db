"""
Gaussian BIC local scores and sparse parent graphs.

Parent sets are carried as integer bitmasks over the global variable indices
(bit j set <=> X_j is a parent). A ParentGraph keeps only the parent sets
whose score strictly beats every one of their subsets, sorted best first, so
the best parent set inside an allowed set is the first stored entry that
fits in it.

Local scores are rounded to multiples of SCORE_GRID. Sums of grid values are
exact in double precision, so a DAG's total score does not depend on the
order in which its local scores are added.
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
from scipy import linalg

from .graph import Dag, UndirectedGraph

NEG_INF = float('-inf')
SOLVE_RIDGE = 1e-10
DEFAULT_MAX_PARENTS = 8
SCORE_GRID = 2.0 ** -24

VarSet = Union[int, Iterable[int]]


def to_mask(variables: VarSet) -> int:
    if isinstance(variables, (int, np.integer)):
        return int(variables)
    mask = 0
    for v in variables:
        mask |= 1 << int(v)
    return mask


def from_mask(mask: int) -> FrozenSet[int]:
    members = []
    v = 0
    while mask:
        if mask & 1:
            members.append(v)
        mask >>= 1
        v += 1
    return frozenset(members)


def on_grid(value: float) -> float:
    """Nearest multiple of SCORE_GRID; infinities pass through."""
    if not math.isfinite(value):
        return value
    return round(value / SCORE_GRID) * SCORE_GRID


@dataclass(frozen=True)
class LocalScore:
    variable: int
    parent_set: FrozenSet[int]
    value: float

    def __post_init__(self):
        if self.variable in self.parent_set:
            raise ValueError(f"Variable {self.variable} cannot be its own parent")


@dataclass(frozen=True)
class SearchConstraints:
    num_vars: int
    forbidden_parents: Tuple[FrozenSet[int], ...]
    required_edges: FrozenSet[Tuple[int, int]] = field(default_factory=frozenset)
    forbidden_edges: FrozenSet[Tuple[int, int]] = field(default_factory=frozenset)
    # pairs (i, j), i < j, that must be adjacent in either direction
    required_adjacencies: FrozenSet[Tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, 'forbidden_parents', tuple(frozenset(f) for f in self.forbidden_parents))
        object.__setattr__(self, 'required_edges', frozenset(self.required_edges))
        object.__setattr__(self, 'forbidden_edges', frozenset(self.forbidden_edges))
        object.__setattr__(self, 'required_adjacencies',
                           frozenset((min(i, j), max(i, j)) for i, j in self.required_adjacencies))
        if len(self.forbidden_parents) != self.num_vars:
            raise ValueError(f"Expected {self.num_vars} forbidden-parent sets, got {len(self.forbidden_parents)}")
        clash = self.required_edges & self.forbidden_edges
        if clash:
            raise ValueError(f"Edges both required and forbidden: {sorted(clash)}")
        for j, i in self.required_edges:
            if j in self.forbidden_parents[i]:
                raise ValueError(f"Required edge {j}->{i} uses a forbidden parent")
        for i, j in self.required_adjacencies:
            if i == j:
                raise ValueError(f"Required adjacency ({i}, {j}) is a self-loop")
            if i not in self.candidates(j) and j not in self.candidates(i):
                raise ValueError(f"Required adjacency ({i}, {j}) is forbidden in both directions")
        required = nx.DiGraph(list(self.required_edges))
        if not nx.is_directed_acyclic_graph(required):
            raise ValueError("Required edges contain a directed cycle")

    @classmethod
    def none(cls, num_vars: int) -> "SearchConstraints":
        return cls(num_vars, tuple(frozenset() for _ in range(num_vars)))

    @classmethod
    def from_superstructure(cls, graph: UndirectedGraph) -> "SearchConstraints":
        everyone = frozenset(range(graph.num_vars))
        return cls(graph.num_vars, tuple(everyone - graph.neighbors(i) - {i} for i in range(graph.num_vars)))

    def restrict(self, variables: Iterable[int]) -> "SearchConstraints":
        """Additionally forbid every parent outside ``variables``."""
        outside = frozenset(range(self.num_vars)) - frozenset(variables)
        return SearchConstraints(self.num_vars, tuple(f | outside for f in self.forbidden_parents),
                                 self.required_edges, self.forbidden_edges, self.required_adjacencies)

    def with_edges(self, required: Iterable[Tuple[int, int]] = (),
                   forbidden: Iterable[Tuple[int, int]] = (),
                   adjacent: Iterable[Tuple[int, int]] = ()) -> "SearchConstraints":
        return SearchConstraints(self.num_vars, self.forbidden_parents,
                                 self.required_edges | frozenset(required),
                                 self.forbidden_edges | frozenset(forbidden),
                                 self.required_adjacencies | frozenset(adjacent))

    def candidates(self, i: int) -> FrozenSet[int]:
        return frozenset(j for j in range(self.num_vars)
                         if j != i and j not in self.forbidden_parents[i] and (j, i) not in self.forbidden_edges)

    def required_parents(self, i: int) -> FrozenSet[int]:
        return frozenset(j for j, k in self.required_edges if k == i)

    def required_neighbors(self, i: int) -> FrozenSet[int]:
        """Variables that must be adjacent to X_i with the direction left open."""
        directed = {j for j, k in self.required_edges if k == i} | {k for j, k in self.required_edges if j == i}
        paired = {b if a == i else a for a, b in self.required_adjacencies if i in (a, b)}
        return frozenset(paired - directed)

    def key(self) -> str:
        payload = repr((self.num_vars,
                        [sorted(f) for f in self.forbidden_parents],
                        sorted(self.required_edges),
                        sorted(self.forbidden_edges),
                        sorted(self.required_adjacencies)))
        return hashlib.sha256(payload.encode()).hexdigest()[:32]


@dataclass(frozen=True)
class ParentGraph:
    variable: int
    candidates: FrozenSet[int]
    masks: Tuple[int, ...]
    scores: Tuple[float, ...]
    # required-adjacent candidates; any of them placed before X_i must be a parent
    adjacent: int = 0
    # required-adjacent variables that cannot be parents, so they must follow X_i
    followers: int = 0
    # (forced mask, masks, scores) for every nonempty subset of ``adjacent``
    variants: Tuple[Tuple[int, Tuple[int, ...], Tuple[float, ...]], ...] = ()

    @property
    def entries(self) -> List[LocalScore]:
        return [LocalScore(self.variable, from_mask(m), s) for m, s in zip(self.masks, self.scores)]

    @cached_property
    def _variant_table(self) -> Dict[int, Tuple[Tuple[int, ...], Tuple[float, ...]]]:
        return {forced: (masks, scores) for forced, masks, scores in self.variants}

    def best_for(self, allowed_mask: int) -> Tuple[float, Optional[int]]:
        """Best stored parent set inside allowed_mask that contains every allowed required neighbour."""
        if self.followers & allowed_mask:
            return NEG_INF, None
        forced = self.adjacent & allowed_mask
        masks, scores = (self.masks, self.scores) if not forced else self._variant_table.get(forced, ((), ()))
        blocked = ~allowed_mask
        for mask, score in zip(masks, scores):
            if not mask & blocked:
                return score, mask
        return NEG_INF, None

    def score_of(self, mask: int) -> float:
        for masks, scores in [(self.masks, self.scores)] + [(m, s) for _, m, s in self.variants]:
            if mask in masks:
                return scores[masks.index(mask)]
        raise KeyError(f"Parent set {sorted(from_mask(mask))} of X{self.variable} is not stored")

    def to_dict(self) -> dict:
        return {"variable": self.variable, "candidates": sorted(self.candidates),
                "masks": [str(m) for m in self.masks], "scores": list(self.scores),
                "adjacent": str(self.adjacent), "followers": str(self.followers),
                "variants": [[str(f), [str(m) for m in masks], list(scores)] for f, masks, scores in self.variants]}

    @classmethod
    def from_dict(cls, data: dict) -> "ParentGraph":
        variants = tuple((int(f), tuple(int(m) for m in masks), tuple(float(s) for s in scores))
                         for f, masks, scores in data.get("variants", []))
        return cls(data["variable"], frozenset(data["candidates"]),
                   tuple(int(m) for m in data["masks"]), tuple(float(s) for s in data["scores"]),
                   int(data.get("adjacent", 0)), int(data.get("followers", 0)), variants)


def bic_local(S: np.ndarray, n: int, i: int, pa: Iterable[int]) -> float:
    """
    BIC of X_i regressed on pa (higher is better):

        -(n/2) log sigma2 - (log n / 2) (|pa| + 1)

    where sigma2 = S_ii - S_i,pa S_pa,pa^-1 S_pa,i is the profiled residual variance.
    """
    parents = sorted(pa)
    if i in parents:
        raise ValueError(f"Variable {i} cannot be its own parent")
    if parents:
        S_pp = S[np.ix_(parents, parents)]
        s_pi = S[parents, i]
        try:
            factor = linalg.cho_factor(S_pp)
        except linalg.LinAlgError:
            try:
                factor = linalg.cho_factor(S_pp + SOLVE_RIDGE * np.eye(len(parents)))
            except linalg.LinAlgError:
                return NEG_INF
        variance = S[i, i] - s_pi @ linalg.cho_solve(factor, s_pi)
    else:
        variance = S[i, i]
    if not np.isfinite(variance) or variance <= 0:
        return NEG_INF
    return on_grid(-0.5 * n * math.log(variance) - 0.5 * math.log(n) * (len(parents) + 1))


def total_score(S: np.ndarray, n: int, dag: Dag) -> float:
    return sum(bic_local(S, n, i, dag.parent_sets[i]) for i in range(dag.num_vars))


def default_max_parents(d: int, has_superstructure: bool) -> Optional[int]:
    if has_superstructure:
        return None
    return min(d - 1, DEFAULT_MAX_PARENTS)


def build_parent_graph(S: np.ndarray, n: int, i: int, constraints: SearchConstraints,
                       max_parents: Optional[int] = None) -> ParentGraph:
    candidates = constraints.candidates(i)
    required = constraints.required_parents(i)
    missing = required - candidates
    if missing:
        raise ValueError(f"Required parents {sorted(missing)} of variable {i} are not candidates")
    limit = len(candidates) if max_parents is None else max_parents
    if len(required) > limit:
        raise ValueError(f"Variable {i} needs {len(required)} required parents but max_parents={limit}")

    neighbors = constraints.required_neighbors(i)
    adjacent = sorted(neighbors & candidates)
    followers = to_mask(neighbors - candidates)
    memo: Dict[int, float] = {}
    masks, scores = _pruned_sets(S, n, i, required, candidates - required, limit, memo)
    variants = []
    for size in range(1, len(adjacent) + 1):
        for forced in combinations(adjacent, size):
            if len(required) + size > limit:
                continue
            forced_set = required | frozenset(forced)
            table = _pruned_sets(S, n, i, forced_set, candidates - forced_set, limit, memo)
            variants.append((to_mask(forced),) + table)
    logging.debug(f"Parent graph for X{i}: {len(candidates)} candidates, {len(masks)}/{len(memo)} sets kept, "
                  f"{len(variants)} adjacency variants")
    return ParentGraph(i, candidates, masks, scores, to_mask(adjacent), followers, tuple(variants))


def _pruned_sets(S: np.ndarray, n: int, i: int, required: FrozenSet[int], free: FrozenSet[int], limit: int,
                 memo: Dict[int, float]) -> Tuple[Tuple[int, ...], Tuple[float, ...]]:
    """Sets ``required`` + subset of ``free`` that beat all their subsets of that form, best first."""
    free = sorted(free)
    required_mask = to_mask(required)
    # best score over all (required + subset) sets, indexed by subset bitmask over `free`
    best_sub = {}
    kept = []
    for size in range(0, min(limit - len(required), len(free)) + 1):
        for combo in combinations(range(len(free)), size):
            local = 0
            for k in combo:
                local |= 1 << k
            pa = required | {free[k] for k in combo}
            mask = to_mask(pa)
            if mask not in memo:
                memo[mask] = bic_local(S, n, i, pa)
            score = memo[mask]
            inherited = max((best_sub[local ^ (1 << k)] for k in combo), default=NEG_INF)
            best_sub[local] = max(score, inherited)
            if score > inherited:
                kept.append((mask | required_mask, score, tuple(sorted(pa))))
    kept.sort(key=lambda e: (-e[1], len(e[2]), e[2]))
    return tuple(e[0] for e in kept), tuple(e[1] for e in kept)


def build_parent_graphs(S: np.ndarray, n: int, constraints: SearchConstraints,
                        max_parents: Optional[int] = None, variables: Optional[Sequence[int]] = None,
                        cache=None, dataset_key: Optional[str] = None) -> List[ParentGraph]:
    variables = list(range(constraints.num_vars)) if variables is None else sorted(variables)
    hit = None
    meta = {"n": int(n), "d": constraints.num_vars, "max_parents": max_parents}
    if cache is not None and dataset_key is not None:
        constraints_key = f"{constraints.key()}-{max_parents}-{to_mask(variables):x}"
        hit = cache.has(dataset_key, constraints_key)
        if hit:
            stored = {k: hit.meta.get(k) for k in meta}
            if stored == meta:
                logging.info(f"Score cache hit for {dataset_key}/{constraints_key}")
                return hit.parent_graphs
            logging.warning(f"Score cache entry {dataset_key}/{constraints_key} was built for {stored}, "
                            f"expected {meta}; rebuilding")
    pgs = [build_parent_graph(S, n, i, constraints, max_parents) for i in variables]
    if hit is not None:
        cache.add(dataset_key, constraints_key, pgs, meta)
    return pgs


def best_score_and_set(pg: ParentGraph, allowed: VarSet) -> Tuple[float, Optional[FrozenSet[int]]]:
    score, mask = pg.best_for(to_mask(allowed))
    return score, None if mask is None else from_mask(mask)
