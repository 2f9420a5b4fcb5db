"""
Graph types for causal structure learning.

Dag, UndirectedGraph and Cpdag are immutable once built. Variables are the
integers 0..d-1. The Cpdag keeps a dense d x d mark matrix A where
A[i, j] == 1 and A[j, i] == 0 means i -> j, and A[i, j] == A[j, i] == 1 means
the undirected mark i -- j.
"""

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import TYPE_CHECKING, Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

import networkx as nx
import numpy as np

if TYPE_CHECKING:
    from .score import SearchConstraints


DIRECTED = "->"
UNDIRECTED = "--"


class NotExtendableError(RuntimeError):
    """Raised when a partially directed graph admits no consistent DAG extension."""


@dataclass(frozen=True)
class Dag:
    num_vars: int
    parent_sets: Tuple[FrozenSet[int], ...]

    def __post_init__(self):
        if len(self.parent_sets) != self.num_vars:
            raise ValueError(f"Dag expects {self.num_vars} parent sets, got {len(self.parent_sets)}")
        object.__setattr__(self, 'parent_sets', tuple(frozenset(p) for p in self.parent_sets))
        for i, parents in enumerate(self.parent_sets):
            if i in parents:
                raise ValueError(f"Self-loop on variable {i}")
            for j in parents:
                if not 0 <= j < self.num_vars:
                    raise ValueError(f"Parent index {j} of variable {i} out of range")
        if not nx.is_directed_acyclic_graph(self.to_networkx()):
            raise ValueError("Directed edge relation contains a cycle")

    @classmethod
    def empty(cls, num_vars: int) -> "Dag":
        return cls(num_vars, tuple(frozenset() for _ in range(num_vars)))

    @classmethod
    def from_edges(cls, num_vars: int, edges: Iterable[Tuple[int, int]]) -> "Dag":
        parents: List[Set[int]] = [set() for _ in range(num_vars)]
        for j, i in edges:
            parents[i].add(j)
        return cls(num_vars, tuple(frozenset(p) for p in parents))

    @classmethod
    def from_adjacency(cls, adjacency: np.ndarray) -> "Dag":
        rows, cols = np.nonzero(adjacency)
        return cls.from_edges(adjacency.shape[0], zip(rows.tolist(), cols.tolist()))

    def edges(self) -> List[Tuple[int, int]]:
        return sorted((j, i) for i, parents in enumerate(self.parent_sets) for j in parents)

    @property
    def num_edges(self) -> int:
        return sum(len(p) for p in self.parent_sets)

    def has_edge(self, j: int, i: int) -> bool:
        return j in self.parent_sets[i]

    def adjacent(self, i: int, j: int) -> bool:
        return j in self.parent_sets[i] or i in self.parent_sets[j]

    def children(self, i: int) -> FrozenSet[int]:
        return frozenset(c for c, parents in enumerate(self.parent_sets) if i in parents)

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(self.num_vars))
        g.add_edges_from((j, i) for i, parents in enumerate(self.parent_sets) for j in parents)
        return g

    def topological_order(self) -> List[int]:
        return list(nx.lexicographical_topological_sort(self.to_networkx()))

    def to_adjacency(self) -> np.ndarray:
        adj = np.zeros((self.num_vars, self.num_vars), dtype=np.int8)
        for j, i in self.edges():
            adj[j, i] = 1
        return adj


@dataclass(frozen=True)
class UndirectedGraph:
    num_vars: int
    edges: FrozenSet[Tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self):
        normalized = set()
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"Self-loop on variable {i}")
            if not (0 <= i < self.num_vars and 0 <= j < self.num_vars):
                raise ValueError(f"Edge ({i}, {j}) out of range for {self.num_vars} variables")
            normalized.add((min(i, j), max(i, j)))
        object.__setattr__(self, 'edges', frozenset(normalized))

    @classmethod
    def from_adjacency(cls, adjacency: np.ndarray) -> "UndirectedGraph":
        present = np.asarray(adjacency) != 0
        rows, cols = np.nonzero(np.triu(present | present.T, k=1))
        return cls(present.shape[0], frozenset(zip(rows.tolist(), cols.tolist())))

    @cached_property
    def _neighbors(self) -> Tuple[FrozenSet[int], ...]:
        nbrs: List[Set[int]] = [set() for _ in range(self.num_vars)]
        for i, j in self.edges:
            nbrs[i].add(j)
            nbrs[j].add(i)
        return tuple(frozenset(n) for n in nbrs)

    def neighbors(self, i: int) -> FrozenSet[int]:
        if not 0 <= i < self.num_vars:
            raise IndexError(f"Variable {i} out of range for {self.num_vars} variables")
        return self._neighbors[i]

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def is_subgraph_of(self, other: "UndirectedGraph") -> bool:
        return self.num_vars == other.num_vars and self.edges <= other.edges

    def to_adjacency(self) -> np.ndarray:
        adj = np.zeros((self.num_vars, self.num_vars), dtype=np.int8)
        for i, j in self.edges:
            adj[i, j] = adj[j, i] = 1
        return adj


class Cpdag:
    """Mixed graph of directed and undirected marks (an MEC, or a partial one)."""

    def __init__(self, adjacency: np.ndarray):
        marks = np.array(adjacency, dtype=np.int8) != 0
        if marks.ndim != 2 or marks.shape[0] != marks.shape[1]:
            raise ValueError(f"Mark matrix must be square, got shape {marks.shape}")
        if marks.diagonal().any():
            raise ValueError("Mark matrix has self-loops")
        self._marks = marks.astype(np.int8)
        self._marks.setflags(write=False)

    @classmethod
    def empty(cls, num_vars: int) -> "Cpdag":
        return cls(np.zeros((num_vars, num_vars), dtype=np.int8))

    @classmethod
    def from_edges(cls, num_vars: int, directed: Iterable[Tuple[int, int]] = (),
                   undirected: Iterable[Tuple[int, int]] = ()) -> "Cpdag":
        marks = np.zeros((num_vars, num_vars), dtype=np.int8)
        for i, j in directed:
            marks[i, j] = 1
        for i, j in undirected:
            marks[i, j] = marks[j, i] = 1
        return cls(marks)

    @property
    def num_vars(self) -> int:
        return self._marks.shape[0]

    @property
    def marks(self) -> np.ndarray:
        return self._marks

    def mark(self, i: int, j: int) -> Optional[str]:
        """Mark of the pair as seen from i: '->', '<-', '--' or None."""
        forward, backward = self._marks[i, j], self._marks[j, i]
        if forward and backward:
            return UNDIRECTED
        if forward:
            return DIRECTED
        if backward:
            return "<-"
        return None

    def directed_edges(self) -> Set[Tuple[int, int]]:
        rows, cols = np.nonzero(self._marks & (1 - self._marks.T))
        return set(zip(rows.tolist(), cols.tolist()))

    def undirected_edges(self) -> Set[Tuple[int, int]]:
        rows, cols = np.nonzero(np.triu(self._marks & self._marks.T, k=1))
        return set(zip(rows.tolist(), cols.tolist()))

    def skeleton(self) -> UndirectedGraph:
        return UndirectedGraph.from_adjacency(self._marks)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Cpdag):
            return NotImplemented
        return self._marks.shape == other._marks.shape and np.array_equal(self._marks, other._marks)

    def __hash__(self) -> int:
        return hash((self._marks.shape[0], self._marks.tobytes()))

    def __repr__(self) -> str:
        return (f"Cpdag(d={self.num_vars}, directed={sorted(self.directed_edges())}, "
                f"undirected={sorted(self.undirected_edges())})")


def skeleton(dag: Dag) -> UndirectedGraph:
    return UndirectedGraph(dag.num_vars, frozenset(dag.edges()))


def v_structures(dag: Dag) -> Set[Tuple[int, int, int]]:
    """Triples (a, c, b) with a -> c <- b, a < b and a, b non-adjacent."""
    found = set()
    for c, parents in enumerate(dag.parent_sets):
        for a, b in combinations(sorted(parents), 2):
            if not dag.adjacent(a, b):
                found.add((a, c, b))
    return found


def moralize(dag: Dag) -> UndirectedGraph:
    edges = set(dag.edges())
    for parents in dag.parent_sets:
        edges.update(combinations(sorted(parents), 2))
    return UndirectedGraph(dag.num_vars, frozenset(edges))


def two_hop_neighbors(g: UndirectedGraph, i: int) -> FrozenSet[int]:
    first = g.neighbors(i)
    reach = set(first)
    for j in first:
        reach |= g.neighbors(j)
    reach.discard(i)
    return frozenset(reach)


def _orient(marks: np.ndarray, a: int, b: int):
    marks[a, b] = 1
    marks[b, a] = 0


def _meek_orientable(marks: np.ndarray, a: int, b: int) -> bool:
    """Whether one of Meek's rules R1-R4 compels the undirected a -- b into a -> b."""
    directed = (marks & (1 - marks.T)).astype(bool)
    undirected = (marks & marks.T).astype(bool)
    adjacent = (marks | marks.T).astype(bool)
    # R1: c -> a -- b, c and b non-adjacent
    if np.any(directed[:, a] & ~adjacent[:, b]):
        return True
    # R2: a -> c -> b
    if np.any(directed[a, :] & directed[:, b]):
        return True
    # R3: a -- c -> b, a -- e -> b, c and e non-adjacent
    kites = np.flatnonzero(undirected[a, :] & directed[:, b])
    for c, e in combinations(kites.tolist(), 2):
        if not adjacent[c, e]:
            return True
    # R4: a -- c -> e -> b, c and b non-adjacent, a adjacent to e
    for c in np.flatnonzero(undirected[a, :] & ~adjacent[:, b]).tolist():
        if c == b:
            continue
        if np.any(directed[c, :] & directed[:, b] & adjacent[a, :]):
            return True
    return False


def apply_meek_rules(marks: np.ndarray) -> np.ndarray:
    """Closure of a partially directed mark matrix under Meek's rules R1-R4."""
    marks = np.array(marks, dtype=np.int8)
    changed = True
    while changed:
        changed = False
        rows, cols = np.nonzero(marks & marks.T)
        for a, b in zip(rows.tolist(), cols.tolist()):
            if not (marks[a, b] and marks[b, a]):
                continue
            if _meek_orientable(marks, a, b):
                _orient(marks, a, b)
                changed = True
    return marks


def dag_to_cpdag(dag: Dag) -> Cpdag:
    marks = (dag.to_adjacency() | dag.to_adjacency().T).astype(np.int8)
    for a, c, b in v_structures(dag):
        _orient(marks, a, c)
        _orient(marks, b, c)
    return Cpdag(apply_meek_rules(marks))


def markov_equivalent(d1: Dag, d2: Dag) -> bool:
    return skeleton(d1) == skeleton(d2) and v_structures(d1) == v_structures(d2)


def consistent_extension(cpdag: Cpdag, fixed: Optional["SearchConstraints"] = None) -> Dag:
    """
    Orient every undirected mark without creating a cycle or a new v-structure.

    Repeatedly removes the lowest-index vertex that has no outgoing directed
    mark and whose undirected neighbours are adjacent to all of its other
    neighbours, orienting its undirected marks towards it. Required edges of
    ``fixed`` are imposed before the sweep; forbidden edges are never chosen.
    """
    marks = np.array(cpdag.marks, dtype=np.int8)
    d = marks.shape[0]
    forbidden: FrozenSet[Tuple[int, int]] = frozenset()
    if fixed is not None:
        forbidden = fixed.forbidden_edges
        for j, i in sorted(fixed.required_edges):
            if marks[i, j] and not marks[j, i]:
                raise NotExtendableError(f"Required edge {j}->{i} contradicts directed mark {i}->{j}")
            _orient(marks, j, i)

    adjacent = (marks | marks.T).astype(bool)
    remaining = set(range(d))
    parents: Dict[int, Set[int]] = {i: set() for i in range(d)}
    while remaining:
        chosen = None
        for x in sorted(remaining):
            if any(marks[x, y] and not marks[y, x] for y in remaining):
                continue
            nbrs = [y for y in remaining if adjacent[x, y]]
            loose = [y for y in nbrs if marks[x, y] and marks[y, x]]
            if any((y, x) in forbidden for y in loose):
                continue
            if all(adjacent[y, z] for y in loose for z in nbrs if z != y):
                chosen = x
                break
        if chosen is None:
            raise NotExtendableError(f"No consistent extension; stuck on variables {sorted(remaining)}")
        for y in remaining:
            if adjacent[chosen, y]:
                parents[chosen].add(y)
        remaining.discard(chosen)
    return Dag(d, tuple(frozenset(parents[i]) for i in range(d)))


def graph_to_json(graph) -> dict:
    """JSON form shared by Dag, UndirectedGraph and Cpdag: {"d": int, "edges": [[i, j, mark], ...]}."""
    if isinstance(graph, Dag):
        edges = [[j, i, DIRECTED] for j, i in graph.edges()]
        d = graph.num_vars
    elif isinstance(graph, UndirectedGraph):
        edges = [[i, j, UNDIRECTED] for i, j in sorted(graph.edges)]
        d = graph.num_vars
    elif isinstance(graph, Cpdag):
        edges = [[i, j, DIRECTED] for i, j in sorted(graph.directed_edges())]
        edges += [[i, j, UNDIRECTED] for i, j in sorted(graph.undirected_edges())]
        d = graph.num_vars
    else:
        raise TypeError(f"Cannot serialize {type(graph).__name__}")
    return {"d": d, "edges": edges}


def cpdag_from_json(data: dict) -> Cpdag:
    directed, undirected = [], []
    for i, j, mark in data["edges"]:
        if mark == DIRECTED:
            directed.append((i, j))
        elif mark == UNDIRECTED:
            undirected.append((i, j))
        else:
            raise ValueError(f"Unknown edge mark: {mark}")
    return Cpdag.from_edges(data["d"], directed, undirected)


def undirected_from_json(data: dict) -> UndirectedGraph:
    return UndirectedGraph(data["d"], frozenset((i, j) for i, j, _ in data["edges"]))


def dag_from_json(data: dict) -> Dag:
    for _, _, mark in data["edges"]:
        if mark != DIRECTED:
            raise ValueError(f"Dag JSON may only hold '->' marks, got {mark}")
    return Dag.from_edges(data["d"], [(i, j) for i, j, _ in data["edges"]])


def save_graph(graph, path: str, extra: Optional[dict] = None):
    payload = graph_to_json(graph)
    if extra:
        payload.update(extra)
    with open(path, 'wt') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
    logging.debug(f"Wrote {type(graph).__name__} with {len(payload['edges'])} edges to {path}")


def load_graph_json(path: str) -> dict:
    with open(path, 'rt') as f:
        return json.load(f)
