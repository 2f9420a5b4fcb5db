"""
Local A*: exact search on two-hop clusters of a super-structure.

Clusters are processed from smallest to largest. Each cluster search is
constrained by the marks saved from earlier clusters (directed marks as
required edges, undirected marks as required adjacencies), and afterwards the
marks touching the cluster's target variable are saved. The saved marks are
closed under Meek's rules at the end to give the estimated CPDAG.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Set, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from .graph import (
    Cpdag, Dag, NotExtendableError, UndirectedGraph,
    apply_meek_rules, consistent_extension, dag_to_cpdag, two_hop_neighbors,
)
from .score import SearchConstraints, build_parent_graphs
from .search import astar_exact
from .sem import Dataset

DEFAULT_MAX_CLUSTER_SIZE = 20


class ClusterTooLargeError(RuntimeError):
    """Raised when a two-hop cluster exceeds the configured size bound."""

    def __init__(self, message: str, sizes: Tuple[int, ...] = (), bound: int = 0):
        super().__init__(message)
        self.sizes = tuple(sizes)
        self.bound = bound

    @property
    def oversized(self) -> int:
        return sum(s > self.bound for s in self.sizes)


class InconsistentMarksError(RuntimeError):
    """Raised in strict mode when saved marks admit no consistent orientation inside a cluster."""


@dataclass
class ClusterPlan:
    clusters: Tuple[FrozenSet[int], ...]
    order: Tuple[int, ...]

    @property
    def max_cluster_size(self) -> int:
        return max((len(c) for c in self.clusters), default=0)


@dataclass
class MarkConflict:
    pair: Tuple[int, int]
    existing: str
    proposed: str
    existing_source: int
    target: int


@dataclass
class ClusterRecord:
    target: int
    size: int
    runtime: float
    expanded_nodes: int
    conflicts: int
    required_edges: int
    forbidden_edges: int
    required_adjacencies: int = 0


@dataclass
class LocalAStarResult:
    cpdag: Cpdag
    plan: ClusterPlan
    records: List[ClusterRecord]
    conflicts: List[MarkConflict]
    runtime: float
    # pair -> target whose cluster saved its mark
    provenance: Dict[Tuple[int, int], int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "max_cluster_size": self.plan.max_cluster_size,
            "clusters": [r.__dict__ for r in self.records],
            "conflicts": [c.__dict__ for c in self.conflicts],
        }


class AccumulatedMec:
    def __init__(self, num_vars: int):
        self.num_vars = num_vars
        self.marks = np.zeros((num_vars, num_vars), dtype=np.int8)
        self.provenance: Dict[Tuple[int, int], int] = {}
        self.conflicts: List[MarkConflict] = []
        self.completed: Set[int] = set()

    def mark(self, i: int, j: int) -> Optional[str]:
        return Cpdag(self.marks).mark(i, j)

    def submarks(self, cluster) -> Cpdag:
        """Saved marks between members of the cluster; everything else blanked."""
        members = sorted(cluster)
        sub = np.zeros_like(self.marks)
        sub[np.ix_(members, members)] = self.marks[np.ix_(members, members)]
        return Cpdag(sub)

    def to_cpdag(self) -> Cpdag:
        return Cpdag(apply_meek_rules(self.marks))


def plan_clusters(superstructure: UndirectedGraph) -> ClusterPlan:
    d = superstructure.num_vars
    clusters = tuple(frozenset({i}) | two_hop_neighbors(superstructure, i) for i in range(d))
    order = tuple(sorted(range(d), key=lambda i: (len(clusters[i]), i)))
    return ClusterPlan(clusters, order)


def _in_v_structure(cpdag: Cpdag, parent: int, child: int) -> bool:
    marks = cpdag.marks
    adjacent = (marks | marks.T).astype(bool)
    for other in range(cpdag.num_vars):
        if other in (parent, child):
            continue
        if marks[other, child] and not marks[child, other] and not adjacent[other, parent]:
            return True
    return False


def merge_marks(acc: AccumulatedMec, local_cpdag: Cpdag, target: int) -> AccumulatedMec:
    """
    Save the marks of local_cpdag incident to target. Undirected marks and
    directed marks of v-structures are kept as they are; any other directed
    mark is saved undirected and left for the final Meek closure. A pair that
    already carries a mark keeps it, and a disagreement is recorded.
    """
    for other in range(local_cpdag.num_vars):
        mark = local_cpdag.mark(target, other)
        if other == target or mark is None:
            continue
        if mark == '--':
            proposed = (1, 1)
        elif mark == '->':
            proposed = (1, 0) if _in_v_structure(local_cpdag, target, other) else (1, 1)
        else:
            proposed = (0, 1) if _in_v_structure(local_cpdag, other, target) else (1, 1)
        existing = (int(acc.marks[target, other]), int(acc.marks[other, target]))
        pair = (min(target, other), max(target, other))
        if existing == (0, 0):
            acc.marks[target, other], acc.marks[other, target] = proposed
            acc.provenance[pair] = target
        elif existing != proposed:
            conflict = MarkConflict(pair, acc.mark(*pair), _describe(proposed, target, pair),
                                    acc.provenance.get(pair, -1), target)
            acc.conflicts.append(conflict)
            logging.warning(f"Mark conflict on {pair}: kept {conflict.existing} from cluster "
                            f"{conflict.existing_source}, cluster {target} proposed {conflict.proposed}")
    acc.completed.add(target)
    return acc


def _describe(proposed: Tuple[int, int], target: int, pair: Tuple[int, int]) -> str:
    forward, backward = proposed if target == pair[0] else proposed[::-1]
    if forward and backward:
        return '--'
    return '->' if forward else '<-'


def cluster_constraints(acc: AccumulatedMec, base: SearchConstraints, cluster: FrozenSet[int],
                        strict: bool = False) -> Tuple[SearchConstraints, int]:
    """
    Within-cluster constraints from the saved marks, plus the count of conflicts raised.

    Directed marks become required edges and undirected marks become required
    adjacencies with the orientation left to the search. Pairs between a
    completed target and an unmarked cluster member are forbidden.
    """
    conflicts = 0
    forbidden = set()
    for t in acc.completed & cluster:
        for v in cluster:
            if v != t and not acc.marks[t, v] and not acc.marks[v, t]:
                forbidden.add((t, v))
                forbidden.add((v, t))
    sub = acc.submarks(cluster)
    required, adjacent = sub.directed_edges(), sub.undirected_edges()
    if required or adjacent:
        try:
            consistent_extension(sub)
        except NotExtendableError as e:
            if strict:
                raise InconsistentMarksError(str(e))
            logging.warning(f"Saved marks inside cluster {sorted(cluster)} are not extendable, "
                            f"searching without required edges: {e}")
            conflicts += 1
            required, adjacent = [], []
    return base.restrict(cluster).with_edges(required, forbidden, adjacent), conflicts


def search_cluster(S: np.ndarray, n: int, constraints: SearchConstraints, cluster: FrozenSet[int],
                   max_parents: Optional[int] = None, deadline: Optional[float] = None) -> Tuple[Dag, int, float]:
    started = time.monotonic()
    pgs = build_parent_graphs(S, n, constraints, max_parents, variables=sorted(cluster))
    result = astar_exact(pgs, num_vars=constraints.num_vars, deadline=deadline)
    return result.dag, result.expanded_nodes, time.monotonic() - started


def _waves(plan: ClusterPlan) -> List[List[int]]:
    """Consecutive runs of the order whose clusters are pairwise disjoint."""
    waves: List[List[int]] = []
    used: Set[int] = set()
    for target in plan.order:
        cluster = plan.clusters[target]
        if waves and not (used & cluster):
            waves[-1].append(target)
            used |= cluster
        else:
            waves.append([target])
            used = set(cluster)
    return waves


class LocalAStar:
    def __init__(self, config):
        self.max_cluster_size = int(config.get('max_cluster_size', DEFAULT_MAX_CLUSTER_SIZE))
        self.parallel = int(config.get('parallel', 1))
        self.max_parents = config.get('max_parents')
        self.deadline = config.get('deadline')
        self.strict_marks = bool(config.get('strict_marks', False))
        if self.max_cluster_size < 1:
            raise ValueError(f"max_cluster_size must be positive, got {self.max_cluster_size}")

    def run(self, S: np.ndarray, n: int, superstructure: UndirectedGraph) -> LocalAStarResult:
        started = time.monotonic()
        d = superstructure.num_vars
        if S.shape != (d, d):
            raise ValueError(f"Covariance shape {S.shape} does not match super-structure on {d} variables")
        plan = plan_clusters(superstructure)
        oversized = [i for i in range(d) if len(plan.clusters[i]) > self.max_cluster_size]
        if oversized:
            raise ClusterTooLargeError(
                f"{len(oversized)} clusters exceed {self.max_cluster_size} variables "
                f"(largest {plan.max_cluster_size}); sparsify the super-structure",
                tuple(len(c) for c in plan.clusters), self.max_cluster_size)

        base = SearchConstraints.from_superstructure(superstructure)
        acc = AccumulatedMec(d)
        records: List[ClusterRecord] = []
        for wave in _waves(plan):
            jobs = []
            for target in wave:
                constraints, conflicts = cluster_constraints(acc, base, plan.clusters[target], self.strict_marks)
                jobs.append((target, constraints, conflicts))
            if self.parallel > 1 and len(jobs) > 1:
                outputs = Parallel(n_jobs=self.parallel)(
                    delayed(search_cluster)(S, n, c, plan.clusters[t], self.max_parents, self.deadline)
                    for t, c, _ in jobs)
            else:
                outputs = [search_cluster(S, n, c, plan.clusters[t], self.max_parents, self.deadline)
                           for t, c, _ in jobs]
            for (target, constraints, conflicts), (dag, expanded, runtime) in zip(jobs, outputs):
                before = len(acc.conflicts)
                merge_marks(acc, dag_to_cpdag(dag), target)
                record = ClusterRecord(target, len(plan.clusters[target]), runtime, expanded,
                                       conflicts + len(acc.conflicts) - before,
                                       len(constraints.required_edges), len(constraints.forbidden_edges),
                                       len(constraints.required_adjacencies))
                records.append(record)
                logging.info(f"Local A* cluster X{target}: size {record.size}, {record.runtime:.3f}s, "
                             f"{record.expanded_nodes} expansions, {record.conflicts} conflicts")
        cpdag = acc.to_cpdag()
        runtime = time.monotonic() - started
        logging.info(f"Local A* finished {d} clusters in {runtime:.3f}s: {len(cpdag.directed_edges())} directed, "
                     f"{len(cpdag.undirected_edges())} undirected edges")
        return LocalAStarResult(cpdag, plan, records, acc.conflicts, runtime, dict(acc.provenance))


def local_astar(data_or_S: Union[Dataset, np.ndarray], n: Optional[int], superstructure: UndirectedGraph,
                cfg: Optional[dict] = None) -> Cpdag:
    from .glasso import empirical_covariance
    if isinstance(data_or_S, Dataset):
        S, n = empirical_covariance(data_or_S), data_or_S.n
    else:
        S = np.asarray(data_or_S, dtype=float)
        if n is None:
            raise ValueError("Sample count is required when passing a covariance matrix")
    return LocalAStar(cfg or {}).run(S, n, superstructure).cpdag
