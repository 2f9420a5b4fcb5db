#!/usr/bin/env python3
"""
Tests for the graphical lasso and super-structure estimation.
"""

import sys
import os

# Add parent directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

import numpy as np
from scipy import optimize

from causal_search.glasso import (
    GlassoConfig, SingularInputError, empirical_covariance, estimate_superstructure, fit_superstructure,
    graphical_lasso, threshold_covariance,
)
from causal_search.metrics import superstructure_rates
from causal_search.graph import UndirectedGraph
from causal_search.sem import (
    Dataset, analytic_covariance, analytic_precision, random_er_dag, random_weights, sample, support_graph,
)


def _random_covariance(d, seed, n=200):
    rng = np.random.default_rng(seed)
    data = Dataset(rng.standard_normal((n, d)) @ (np.eye(d) + 0.3 * rng.standard_normal((d, d))))
    S = empirical_covariance(data)
    return S / np.sqrt(np.outer(np.diag(S), np.diag(S)))


def test_config_defaults():
    small, medium, large = GlassoConfig.default_for(10), GlassoConfig.default_for(30), GlassoConfig.default_for(50)
    assert small.lam == 0.05 and small.cov_threshold is None
    assert medium.lam == 0.2 and medium.cov_threshold is None
    assert large.lam == 0.2 and large.cov_threshold == 0.03
    cfg = GlassoConfig.from_config({'lambda': 0.1, 'max_iters': 50}, 10)
    assert cfg.lam == 0.1 and cfg.max_iters == 50
    try:
        GlassoConfig(lam=-0.1)
    except ValueError:
        pass
    else:
        raise AssertionError("negative penalty accepted")


def test_empirical_covariance():
    data = Dataset(np.array([[1.0, 2.0], [3.0, 6.0]]))
    S = empirical_covariance(data)
    assert np.allclose(S, [[1.0, 2.0], [2.0, 4.0]])
    try:
        empirical_covariance(Dataset(np.ones((1, 2))))
    except ValueError:
        pass
    else:
        raise AssertionError("single sample accepted")


def test_threshold_keeps_diagonal():
    S = np.array([[0.01, 0.02], [0.02, 1.0]])
    T = threshold_covariance(S, 0.03)
    assert T[0, 0] == 0.01 and T[0, 1] == 0.0 and T[1, 0] == 0.0
    assert threshold_covariance(S, None) is S


def test_zero_penalty_inverts():
    S = _random_covariance(5, seed=0)
    result = graphical_lasso(S, GlassoConfig(lam=0.0))
    assert np.allclose(result.theta_hat.theta, np.linalg.inv(S), atol=1e-8)
    assert result.converged


def test_large_penalty_gives_diagonal():
    S = _random_covariance(5, seed=1)
    off = np.abs(S - np.diag(np.diag(S))).max()
    result = graphical_lasso(S, GlassoConfig(lam=off + 0.01))
    theta = result.theta_hat.theta
    assert np.all(theta[~np.eye(5, dtype=bool)] == 0)
    assert np.allclose(np.diag(theta), 1.0 / np.diag(S))
    assert result.converged


def test_certificates():
    for seed in range(5):
        S = _random_covariance(6, seed=seed)
        result = graphical_lasso(S, GlassoConfig(lam=0.1))
        assert result.converged, f"seed {seed}"
        assert result.kkt_residual <= 1e-3, (seed, result.kkt_residual)
        assert -1e-4 <= result.dual_gap <= 1e-3, (seed, result.dual_gap)
        path = result.objective_path
        assert path and path[-1] >= path[0] - 1e-8, f"seed {seed}"
        assert np.allclose(np.diag(result.sigma_hat), np.diag(S))


def test_matches_convex_solver():
    S = _random_covariance(3, seed=4)
    lam = 0.1
    pairs = [(0, 1), (0, 2), (1, 2)]

    def negative_log_det(u):
        W = S.copy()
        for (i, j), value in zip(pairs, u):
            W[i, j] += value
            W[j, i] += value
        sign, logdet = np.linalg.slogdet(W)
        inverse = np.linalg.inv(W)
        grad = np.array([-2 * inverse[i, j] for i, j in pairs])
        return (-logdet if sign > 0 else np.inf), grad

    best = optimize.minimize(negative_log_det, np.zeros(3), jac=True, method='L-BFGS-B',
                             bounds=[(-lam, lam)] * 3, options={'ftol': 1e-14, 'gtol': 1e-10})
    W_star = S.copy()
    for (i, j), value in zip(pairs, best.x):
        W_star[i, j] += value
        W_star[j, i] += value

    result = graphical_lasso(S, GlassoConfig(lam=lam, convergence_tol=1e-8))
    assert np.allclose(result.sigma_hat, W_star, atol=1e-4)
    assert np.allclose(result.theta_hat.theta, np.linalg.inv(W_star), atol=1e-3)


def test_singular_input():
    S = np.array([[1.0, 0.0], [0.0, 0.0]])
    try:
        graphical_lasso(S, GlassoConfig(lam=0.1))
    except SingularInputError:
        pass
    else:
        raise AssertionError("zero variance accepted")


def test_non_convergence_is_reported():
    S = _random_covariance(6, seed=2)
    result = graphical_lasso(S, GlassoConfig(lam=0.05, max_iters=1, convergence_tol=1e-12))
    assert not result.converged
    assert result.iterations == 1


def test_superstructure_recovers_neighbours():
    tprs = []
    for seed in range(5):
        model = random_weights(random_er_dag(10, 2, seed=seed), seed=seed + 50)
        data = sample(model, 300, seed=seed + 100)
        graph, result = fit_superstructure(data, GlassoConfig(lam=0.05))
        tpr, _ = superstructure_rates(graph, model.dag)
        tprs.append(tpr)
        assert graph == estimate_superstructure(data, GlassoConfig(lam=0.05))
    assert np.mean(tprs) >= 0.9, tprs


def test_edge_count_shrinks_along_lambda_path():
    grid = [0.02, 0.05, 0.1, 0.2, 0.4]
    seeds_with_increase = 0
    for seed in range(10):
        model = random_weights(random_er_dag(10, 2, seed=seed), seed=seed + 50)
        S = empirical_covariance(sample(model, 300, seed=seed + 100))
        counts = []
        for lam in grid:
            support = graphical_lasso(S, GlassoConfig(lam=lam)).theta_hat.theta != 0
            np.fill_diagonal(support, False)
            counts.append(int(support.sum()) // 2)
        assert counts[-1] <= counts[0], (seed, counts)
        increases = [b - a for a, b in zip(counts, counts[1:]) if b > a]
        assert all(step <= 2 for step in increases), (seed, counts)
        seeds_with_increase += bool(increases)
    assert seeds_with_increase <= 2, seeds_with_increase


def test_population_support_is_contained():
    hits = 0
    for seed in range(10):
        model = random_weights(random_er_dag(10, 2, seed=seed), seed=seed + 50)
        truth = support_graph(analytic_precision(model))
        result = graphical_lasso(analytic_covariance(model), GlassoConfig(lam=0.005, convergence_tol=1e-7))
        support = result.theta_hat.theta != 0
        np.fill_diagonal(support, False)
        hits += truth.is_subgraph_of(UndirectedGraph.from_adjacency(support))
    assert hits >= 9, hits


def main():
    """Run all tests."""
    print("\n" + "=" * 60)
    print("Graphical Lasso Tests")
    print("=" * 60 + "\n")

    try:
        test_config_defaults()
        test_empirical_covariance()
        test_threshold_keeps_diagonal()
        test_zero_penalty_inverts()
        test_large_penalty_gives_diagonal()
        test_certificates()
        test_matches_convex_solver()
        test_singular_input()
        test_non_convergence_is_reported()
        test_superstructure_recovers_neighbours()
        test_edge_count_shrinks_along_lambda_path()
        test_population_support_is_contained()
        print("All graphical lasso tests passed")
    except Exception as e:
        print(f"\n❌ Test failed with error: {e}")
        import traceback
        traceback.print_exc()
        sys.exit(1)


if __name__ == '__main__':
    main()
