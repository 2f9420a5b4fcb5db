#!/usr/bin/env python3
"""
Tests for the brute-force references: DAG enumeration, CI queries and the
sparsest-permutation sweep.
"""

import sys
import os
from itertools import combinations

# Add parent directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

import numpy as np

from causal_search.graph import Cpdag, dag_to_cpdag
from causal_search.oracle import (
    CiOracle, ci_query, count_dags, enumerate_optimal_dags, minimal_imap, smr_holds, sparsest_permutation,
)
from causal_search.search import TooLargeError
from causal_search.sem import (
    WeightedDag, analytic_covariance, path_cancellation_model, random_er_dag, random_weights, sample,
    triangle_cancellation_model,
)


def _chain():
    B = np.zeros((3, 3))
    B[0, 1], B[1, 2] = 0.8, 0.6
    return WeightedDag.from_weights(B, np.ones(3))


def _collider():
    B = np.zeros((3, 3))
    B[0, 2], B[1, 2] = 0.7, -0.5
    return WeightedDag.from_weights(B, np.array([1.0, 1.5, 1.0]))


def test_count_dags():
    assert count_dags(1) == 1
    assert count_dags(2) == 3
    assert count_dags(3) == 25
    assert count_dags(4) == 543


def test_enumeration_small_cases():
    best, optimal = enumerate_optimal_dags(np.array([[1.5]]), 100)
    assert len(optimal) == 1 and optimal[0].num_edges == 0

    best, optimal = enumerate_optimal_dags(np.eye(3), 1000)
    assert len(optimal) == 1 and optimal[0].num_edges == 0
    assert abs(best - (-1.5 * np.log(1000))) < 1e-6

    try:
        enumerate_optimal_dags(np.eye(6), 100)
    except TooLargeError:
        pass
    else:
        raise AssertionError("enumeration ran on six variables")


def test_ci_queries():
    chain = CiOracle.from_model(_chain())
    assert not ci_query(chain, 0, 2)
    assert ci_query(chain, 0, 2, [1])

    collider = CiOracle.from_model(_collider())
    assert ci_query(collider, 0, 1)
    assert not ci_query(collider, 0, 1, [2])

    cancelled = CiOracle.from_model(path_cancellation_model())
    assert ci_query(cancelled, 0, 3)

    try:
        ci_query(chain, 0, 0)
    except ValueError:
        pass
    else:
        raise AssertionError("CI query on a single variable accepted")
    try:
        ci_query(chain, 0, 3)
    except IndexError:
        pass
    else:
        raise AssertionError("out-of-range variable accepted")


def test_ci_query_symmetry():
    o = CiOracle.from_model(random_weights(random_er_dag(5, 2, seed=4), seed=5))
    for i, j in combinations(range(5), 2):
        rest = [v for v in range(5) if v not in (i, j)]
        for size in range(len(rest) + 1):
            for cond in combinations(rest, size):
                assert ci_query(o, i, j, cond) == ci_query(o, j, i, cond), (i, j, cond)


def test_oracle_validation():
    try:
        CiOracle(np.array([[1.0, 2.0], [2.0, 1.0]]))
    except ValueError:
        pass
    else:
        raise AssertionError("indefinite covariance accepted")
    try:
        sparsest_permutation(CiOracle(np.eye(8)))
    except TooLargeError:
        pass
    else:
        raise AssertionError("permutation sweep ran on eight variables")


def test_sample_oracle_detects_dependence():
    o = CiOracle.from_data(sample(_chain(), 5000, seed=1))
    assert o.n == 5000
    assert not ci_query(o, 0, 1)
    assert not ci_query(o, 1, 2, [0])


def test_minimal_imap_follows_order():
    o = CiOracle.from_model(_collider())
    assert minimal_imap(o, (0, 1, 2)).edges() == [(0, 2), (1, 2)]
    # placing the collider first makes its parents dependent
    assert minimal_imap(o, (2, 0, 1)).num_edges == 3


def test_sparsest_permutation():
    independent = sparsest_permutation(CiOracle(np.eye(3)))
    assert independent.min_edges == 0
    assert independent.mecs == [Cpdag.empty(3)]
    assert len(independent.permutations) == 6

    chain = sparsest_permutation(CiOracle.from_model(_chain()))
    assert chain.min_edges == 2
    assert chain.mecs == [dag_to_cpdag(_chain().dag)]

    for seed in range(3):
        model = random_weights(random_er_dag(5, 2, seed=seed), seed=seed + 40)
        result = sparsest_permutation(CiOracle.from_model(model))
        assert result.min_edges <= model.dag.num_edges
        assert result.mecs == [dag_to_cpdag(model.dag)], f"seed {seed}"


def test_smr_holds():
    assert smr_holds(CiOracle.from_model(_chain()), _chain().dag)
    assert smr_holds(CiOracle(np.diag([1.0, 2.0])), random_er_dag(2, 0, seed=0))
    triangle = triangle_cancellation_model()
    assert not smr_holds(CiOracle.from_model(triangle), triangle.dag)


def test_exhaustive_optimum_matches_sparsest_permutation():
    for seed in range(3):
        model = random_weights(random_er_dag(4, 2, seed=seed + 60), seed=seed + 61)
        _, optimal = enumerate_optimal_dags(analytic_covariance(model), 10 ** 6)
        mecs = set(dag_to_cpdag(dag) for dag in optimal)
        assert mecs == set(sparsest_permutation(CiOracle.from_model(model)).mecs), f"seed {seed}"
        assert mecs == {dag_to_cpdag(model.dag)}, f"seed {seed}"


def test_triangle_optimum_is_not_the_true_mec():
    model = triangle_cancellation_model()
    _, optimal = enumerate_optimal_dags(analytic_covariance(model), 10 ** 6)
    mecs = set(dag_to_cpdag(dag) for dag in optimal)
    assert dag_to_cpdag(model.dag) not in mecs
    assert all(dag.num_edges == 2 for dag in optimal)


def main():
    """Run all tests."""
    print("\n" + "=" * 60)
    print("Oracle Tests")
    print("=" * 60 + "\n")

    try:
        test_count_dags()
        test_enumeration_small_cases()
        test_ci_queries()
        test_ci_query_symmetry()
        test_oracle_validation()
        test_sample_oracle_detects_dependence()
        test_minimal_imap_follows_order()
        test_sparsest_permutation()
        test_smr_holds()
        test_exhaustive_optimum_matches_sparsest_permutation()
        test_triangle_optimum_is_not_the_true_mec()
        print("All oracle tests passed")
    except Exception as e:
        print(f"\n❌ Test failed with error: {e}")
        import traceback
        traceback.print_exc()
        sys.exit(1)


if __name__ == '__main__':
    main()
