#!/usr/bin/env python3
"""
Tests for Local A*: cluster planning, mark merging and end-to-end recovery.
"""

import sys
import os

# Add parent directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

import numpy as np

from causal_search.glasso import empirical_covariance
from causal_search.graph import Cpdag, UndirectedGraph, dag_to_cpdag, moralize
from causal_search.local import (
    AccumulatedMec, ClusterTooLargeError, InconsistentMarksError, LocalAStar, cluster_constraints, local_astar,
    merge_marks, plan_clusters,
)
from causal_search.pipeline import learn_structure
from causal_search.score import SearchConstraints, build_parent_graphs
from causal_search.search import astar_exact
from causal_search.sem import (
    WeightedDag, analytic_covariance, analytic_precision, random_er_dag, random_weights, sample, support_graph,
)

POPULATION_N = 10 ** 6


def _population(model):
    return analytic_covariance(model), POPULATION_N


def _two_components():
    # 0 -> 1 -> 2 and 3 -> 4 <- 5
    B = np.zeros((6, 6))
    B[0, 1], B[1, 2] = 0.8, -0.7
    B[3, 4], B[5, 4] = 0.6, 0.7
    return WeightedDag.from_weights(B, np.ones(6))


def test_plan_clusters():
    empty = plan_clusters(UndirectedGraph(3))
    assert empty.clusters == (frozenset({0}), frozenset({1}), frozenset({2}))
    assert empty.order == (0, 1, 2)

    path = plan_clusters(UndirectedGraph(5, frozenset({(0, 1), (1, 2), (2, 3), (3, 4)})))
    assert path.clusters[0] == frozenset({0, 1, 2})
    assert path.clusters[2] == frozenset(range(5))
    assert path.order == (0, 4, 1, 3, 2)
    assert path.max_cluster_size == 5

    star = plan_clusters(UndirectedGraph(6, frozenset((0, leaf) for leaf in range(1, 6))))
    assert all(c == frozenset(range(6)) for c in star.clusters)
    assert star.order == tuple(range(6))


def test_isolated_variables():
    S = np.diag([1.0, 2.0, 1.5])
    result = LocalAStar({}).run(S, 1000, UndirectedGraph(3))
    assert result.cpdag == Cpdag.empty(3)
    assert len(result.records) == 3
    assert result.to_dict()["max_cluster_size"] == 1


def test_chain_population():
    B = np.zeros((4, 4))
    B[0, 1], B[1, 2], B[2, 3] = 0.8, 0.8, 0.8
    model = WeightedDag.from_weights(B, np.ones(4))
    S, n = _population(model)
    cpdag = local_astar(S, n, moralize(model.dag))
    assert cpdag.directed_edges() == set()
    assert cpdag.undirected_edges() == {(0, 1), (1, 2), (2, 3)}


def test_merge_saves_v_structures():
    acc = AccumulatedMec(3)
    collider = Cpdag.from_edges(3, directed=[(0, 2), (1, 2)])
    merge_marks(acc, collider, 2)
    assert acc.to_cpdag().directed_edges() == {(0, 2), (1, 2)}
    assert acc.provenance == {(0, 2): 2, (1, 2): 2}
    assert acc.completed == {2}

    # the same marks seen again are not a conflict
    merge_marks(acc, collider, 0)
    assert acc.conflicts == []


def test_merge_first_writer_wins():
    acc = AccumulatedMec(3)
    merge_marks(acc, Cpdag.from_edges(3, directed=[(0, 2), (1, 2)]), 2)
    merge_marks(acc, Cpdag.from_edges(3, directed=[(2, 0), (1, 0)]), 0)
    assert acc.mark(0, 2) == '->'
    assert len(acc.conflicts) == 1
    conflict = acc.conflicts[0]
    assert conflict.pair == (0, 2)
    assert conflict.existing == '->' and conflict.proposed == '<-'
    assert conflict.existing_source == 2 and conflict.target == 0


def test_merge_defers_implied_orientations():
    local = Cpdag.from_edges(4, directed=[(0, 2), (1, 2), (2, 3)])
    acc = AccumulatedMec(4)
    merge_marks(acc, local, 3)
    # 2 -> 3 is not part of a v-structure, so it is saved undirected
    assert acc.mark(2, 3) == '--'
    merge_marks(acc, local, 2)
    assert acc.conflicts == []
    assert acc.to_cpdag().directed_edges() == {(0, 2), (1, 2), (2, 3)}


def test_cluster_constraints():
    acc = AccumulatedMec(4)
    for i, j in [(0, 1), (1, 2), (2, 3), (0, 3)]:
        acc.marks[i, j] = acc.marks[j, i] = 1
    cluster = frozenset(range(4))
    try:
        cluster_constraints(acc, SearchConstraints.none(4), cluster, strict=True)
    except InconsistentMarksError:
        pass
    else:
        raise AssertionError("chordless cycle of saved marks accepted in strict mode")
    constraints, conflicts = cluster_constraints(acc, SearchConstraints.none(4), cluster)
    assert conflicts == 1
    assert constraints.required_edges == frozenset()
    assert constraints.required_adjacencies == frozenset()

    acc = AccumulatedMec(3)
    merge_marks(acc, Cpdag.from_edges(3, undirected=[(0, 1)]), 0)
    constraints, conflicts = cluster_constraints(acc, SearchConstraints.none(3), frozenset(range(3)))
    assert conflicts == 0
    assert constraints.forbidden_edges == frozenset({(0, 2), (2, 0)})
    # undirected marks leave the orientation open
    assert constraints.required_edges == frozenset()
    assert constraints.required_adjacencies == frozenset({(0, 1)})

    acc = AccumulatedMec(4)
    merge_marks(acc, Cpdag.from_edges(4, directed=[(0, 2), (1, 2)], undirected=[(2, 3)]), 2)
    constraints, _ = cluster_constraints(acc, SearchConstraints.none(4), frozenset(range(4)))
    assert constraints.required_edges == frozenset({(0, 2), (1, 2)})
    assert constraints.required_adjacencies == frozenset({(2, 3)})


def test_saved_undirected_mark_keeps_true_collider():
    # 1 -> 0 <- 2, with 0 -- 1 saved undirected by an earlier cluster
    B = np.zeros((3, 3))
    B[1, 0], B[2, 0] = 0.8, -0.6
    model = WeightedDag.from_weights(B, np.ones(3))
    S, n = _population(model)
    acc = AccumulatedMec(3)
    merge_marks(acc, Cpdag.from_edges(3, undirected=[(0, 1)]), 1)
    constraints, conflicts = cluster_constraints(acc, SearchConstraints.none(3), frozenset(range(3)))
    assert conflicts == 0
    pgs = build_parent_graphs(S, n, constraints, variables=range(3))
    dag = astar_exact(pgs, num_vars=3).dag
    assert dag_to_cpdag(dag) == dag_to_cpdag(model.dag)
    assert dag.has_edge(1, 0) and dag.has_edge(2, 0)


def test_parallel_matches_sequential():
    model = _two_components()
    S, n = _population(model)
    superstructure = moralize(model.dag)
    sequential = LocalAStar({}).run(S, n, superstructure)
    parallel = LocalAStar({'parallel': 2}).run(S, n, superstructure)
    assert parallel.cpdag == sequential.cpdag
    assert sequential.cpdag == dag_to_cpdag(model.dag)


def test_cluster_size_bound():
    chain = UndirectedGraph(3, frozenset({(0, 1), (1, 2)}))
    try:
        LocalAStar({'max_cluster_size': 2}).run(np.eye(3), 100, chain)
    except ClusterTooLargeError:
        pass
    else:
        raise AssertionError("oversized cluster searched")


def test_marks_are_final_once_target_is_done():
    for seed in range(5):
        model = random_weights(random_er_dag(10, 2, seed=seed), seed=seed + 900)
        S, n = _population(model)
        result = LocalAStar({}).run(S, n, moralize(model.dag))
        position = {r.target: k for k, r in enumerate(result.records)}
        assert sorted(position) == list(range(10))
        for (a, b), source in result.provenance.items():
            assert source in (a, b), (seed, a, b, source)
            other = b if source == a else a
            assert position[source] <= position[other], (seed, a, b, source)
        assert result.cpdag.skeleton().edges == frozenset(result.provenance)


def test_agrees_with_superstructure_astar():
    for d in (10, 15):
        agree = 0
        for seed in range(10):
            model = random_weights(random_er_dag(d, 2, seed=seed), seed=seed + 700)
            data = sample(model, 10 ** 4, seed=seed + 1400)
            S, n = empirical_covariance(data), data.n
            superstructure = support_graph(analytic_precision(model))
            local = learn_structure(S, n, 'local-astar', superstructure)["cpdag"]
            exact = learn_structure(S, n, 'astar-ss', superstructure)["cpdag"]
            assert local.skeleton().is_subgraph_of(superstructure), (d, seed)
            agree += local == exact
        assert agree >= 9, (d, agree)


def test_population_recovers_true_mec():
    hits = 0
    for seed in range(10):
        model = random_weights(random_er_dag(10, 2, seed=seed), seed=seed + 700)
        S, n = _population(model)
        hits += local_astar(S, n, moralize(model.dag)) == dag_to_cpdag(model.dag)
    assert hits >= 9, hits


def test_local_astar_on_samples():
    model = _two_components()
    data = sample(model, 5000, seed=3)
    cpdag = local_astar(data, None, moralize(model.dag), {'max_cluster_size': 6})
    assert cpdag.num_vars == 6
    assert cpdag.skeleton().is_subgraph_of(moralize(model.dag))
    try:
        local_astar(np.eye(6), None, moralize(model.dag))
    except ValueError:
        pass
    else:
        raise AssertionError("covariance accepted without a sample count")


def main():
    """Run all tests."""
    print("\n" + "=" * 60)
    print("Local A* Tests")
    print("=" * 60 + "\n")

    try:
        test_plan_clusters()
        test_isolated_variables()
        test_chain_population()
        test_merge_saves_v_structures()
        test_merge_first_writer_wins()
        test_merge_defers_implied_orientations()
        test_cluster_constraints()
        test_saved_undirected_mark_keeps_true_collider()
        test_parallel_matches_sequential()
        test_cluster_size_bound()
        test_marks_are_final_once_target_is_done()
        test_agrees_with_superstructure_astar()
        test_population_recovers_true_mec()
        test_local_astar_on_samples()
        print("All Local A* tests passed")
    except Exception as e:
        print(f"\n❌ Test failed with error: {e}")
        import traceback
        traceback.print_exc()
        sys.exit(1)


if __name__ == '__main__':
    main()
