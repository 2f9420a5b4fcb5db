"""
Brute-force references for small problems: exhaustive BIC over all DAGs,
population conditional-independence queries, and the sparsest-permutation
sweep.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np
from scipy import stats

from .graph import Cpdag, Dag, dag_to_cpdag
from .score import bic_local, from_mask
from .search import TooLargeError
from .sem import Dataset, WeightedDag, analytic_covariance

MAX_ENUMERATE_VARS = 5
MAX_PERMUTATION_VARS = 7
DEFAULT_CI_TOL = 1e-8
DEFAULT_ALPHA = 0.01


@lru_cache(maxsize=None)
def _all_dag_parent_masks(d: int) -> np.ndarray:
    """Every labeled DAG on d nodes as a row of per-node parent bitmasks."""
    if d == 0:
        return np.zeros((1, 0), dtype=np.int64)
    options = []
    for i in range(d):
        others = [j for j in range(d) if j != i]
        masks = [sum(1 << others[k] for k in range(len(others)) if s >> k & 1) for s in range(1 << (d - 1))]
        options.append(np.array(masks, dtype=np.int64))
    grid = np.stack([g.ravel() for g in np.meshgrid(*options, indexing='ij')], axis=1)

    # repeatedly strip nodes whose parents are all stripped; cyclic rows keep a remainder
    remaining = np.full(grid.shape[0], (1 << d) - 1, dtype=np.int64)
    for _ in range(d):
        for i in range(d):
            ready = ((remaining >> i) & 1).astype(bool) & ((grid[:, i] & remaining) == 0)
            remaining[ready] &= ~(1 << i)
    dags = grid[remaining == 0]
    logging.debug(f"Enumerated {dags.shape[0]} DAGs on {d} nodes")
    return dags


def count_dags(d: int) -> int:
    return int(_all_dag_parent_masks(d).shape[0])


def enumerate_optimal_dags(S: np.ndarray, n: int, d: Optional[int] = None,
                           tol: float = 1e-8) -> Tuple[float, List[Dag]]:
    """Best total BIC over all DAGs, and every DAG within tol (relative) of it."""
    d = S.shape[0] if d is None else d
    if d > MAX_ENUMERATE_VARS:
        raise TooLargeError(f"Exhaustive DAG enumeration refuses {d} variables (limit {MAX_ENUMERATE_VARS})")
    dags = _all_dag_parent_masks(d)
    totals = np.zeros(dags.shape[0])
    for i in range(d):
        column = dags[:, i]
        local: Dict[int, float] = {int(m): bic_local(S, n, i, from_mask(int(m))) for m in np.unique(column)}
        totals = totals + np.array([local[int(m)] for m in column])
    best = float(totals.max())
    winners = np.flatnonzero(totals >= best - tol * max(1.0, abs(best)))
    optimal = [Dag(d, tuple(from_mask(int(m)) for m in dags[w])) for w in winners]
    return best, optimal


class CiOracle:
    def __init__(self, sigma: np.ndarray, tol: float = DEFAULT_CI_TOL, n: Optional[int] = None,
                 alpha: float = DEFAULT_ALPHA):
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise ValueError(f"Covariance must be square, got shape {sigma.shape}")
        if not np.allclose(sigma, sigma.T):
            raise ValueError("Covariance is not symmetric")
        try:
            np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise ValueError("Covariance is not positive definite")
        self.sigma = sigma
        self.tol = tol
        self.n = n
        self.alpha = alpha

    @classmethod
    def from_model(cls, model: WeightedDag, tol: float = DEFAULT_CI_TOL) -> "CiOracle":
        return cls(analytic_covariance(model), tol)

    @classmethod
    def from_data(cls, data: Dataset, alpha: float = DEFAULT_ALPHA) -> "CiOracle":
        """Finite-sample oracle answering with a Fisher z-test."""
        from .glasso import empirical_covariance
        return cls(empirical_covariance(data), n=data.n, alpha=alpha)

    @property
    def num_vars(self) -> int:
        return self.sigma.shape[0]

    def partial_correlation(self, i: int, j: int, cond) -> float:
        index = [i, j] + sorted(set(cond) - {i, j})
        precision = np.linalg.inv(self.sigma[np.ix_(index, index)])
        return float(-precision[0, 1] / math.sqrt(precision[0, 0] * precision[1, 1]))


def ci_query(o: CiOracle, i: int, j: int, cond=()) -> bool:
    if i == j:
        raise ValueError(f"CI query needs two distinct variables, got {i} twice")
    for v in (i, j, *cond):
        if not 0 <= v < o.num_vars:
            raise IndexError(f"Variable {v} out of range for {o.num_vars} variables")
    rho = o.partial_correlation(i, j, cond)
    if o.n is None:
        return abs(rho) < o.tol
    dof = o.n - len(set(cond) - {i, j}) - 3
    if dof < 1:
        raise ValueError(f"Too few samples ({o.n}) for a conditioning set of size {len(cond)}")
    rho = min(max(rho, -1 + 1e-12), 1 - 1e-12)
    z = math.atanh(rho) * math.sqrt(dof)
    p_value = 2 * stats.norm.sf(abs(z))
    return p_value > o.alpha


@dataclass
class SparsestPermutations:
    min_edges: int
    mecs: List[Cpdag]
    permutations: List[Tuple[int, ...]]


def minimal_imap(o: CiOracle, order, memo: Optional[Dict] = None) -> Dag:
    """DAG with j -> i for j before i unless X_j and X_i are independent given the other predecessors."""
    memo = {} if memo is None else memo
    parents: List[FrozenSet[int]] = [frozenset() for _ in range(o.num_vars)]
    for t, i in enumerate(order):
        preds = frozenset(order[:t])
        chosen = set()
        for j in preds:
            key = (min(i, j), max(i, j), preds - {j})
            if key not in memo:
                memo[key] = ci_query(o, i, j, sorted(preds - {j}))
            if not memo[key]:
                chosen.add(j)
        parents[i] = frozenset(chosen)
    return Dag(o.num_vars, tuple(parents))


def sparsest_permutation(o: CiOracle, d: Optional[int] = None) -> SparsestPermutations:
    d = o.num_vars if d is None else d
    if d > MAX_PERMUTATION_VARS:
        raise TooLargeError(f"Sparsest-permutation sweep refuses {d} variables (limit {MAX_PERMUTATION_VARS})")
    memo: Dict = {}
    best = math.inf
    mecs: Dict[Cpdag, None] = {}
    winners: List[Tuple[int, ...]] = []
    for order in permutations(range(d)):
        dag = minimal_imap(o, order, memo)
        if dag.num_edges < best:
            best, mecs, winners = dag.num_edges, {}, []
        if dag.num_edges == best:
            mecs.setdefault(dag_to_cpdag(dag), None)
            winners.append(order)
    logging.debug(f"Sparsest permutation: {best} edges, {len(mecs)} MECs over {len(winners)} orders")
    return SparsestPermutations(int(best), list(mecs), winners)


def smr_holds(o: CiOracle, true_dag: Dag) -> bool:
    result = sparsest_permutation(o, true_dag.num_vars)
    return len(result.mecs) == 1 and result.mecs[0] == dag_to_cpdag(true_dag)
