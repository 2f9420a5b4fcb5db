"""
Linear-Gaussian structural equation models: X = B^T X + N.

Generates Erdos-Renyi DAGs and weights, draws samples, and computes the
population covariance and precision matrices together with the collider
faithfulness checks read off the precision matrix.
"""

import json
import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from .graph import Dag, UndirectedGraph, skeleton


WEIGHT_RANGE = (0.2, 0.8)
NOISE_RANGE = (1.0, 2.0)
POPULATION_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class WeightedDag:
    dag: Dag
    weights: np.ndarray
    noise_vars: np.ndarray

    def __post_init__(self):
        d = self.dag.num_vars
        weights = np.asarray(self.weights, dtype=float)
        noise_vars = np.asarray(self.noise_vars, dtype=float)
        if weights.shape != (d, d) or noise_vars.shape != (d,):
            raise ValueError(f"Weights must be {d}x{d} and noise variances length {d}")
        if not np.array_equal(weights != 0, self.dag.to_adjacency() != 0):
            raise ValueError("Support of B does not match the DAG edges")
        if np.any(noise_vars <= 0):
            raise ValueError("Noise variances must be strictly positive")
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'noise_vars', noise_vars)

    @classmethod
    def from_weights(cls, weights, noise_vars) -> "WeightedDag":
        weights = np.asarray(weights, dtype=float)
        return cls(Dag.from_adjacency(weights != 0), weights, np.asarray(noise_vars, dtype=float))

    @property
    def num_vars(self) -> int:
        return self.dag.num_vars


@dataclass(frozen=True, eq=False)
class Dataset:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError(f"Dataset must be an n x d matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Dataset contains non-finite entries")
        object.__setattr__(self, 'values', values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def num_vars(self) -> int:
        return self.values.shape[1]

    @property
    def columns(self) -> List[str]:
        return [f"X{i + 1}" for i in range(self.num_vars)]

    def to_csv(self, path: str):
        pd.DataFrame(self.values, columns=self.columns).to_csv(path, index=False)
        logging.info(f"Wrote dataset with n={self.n}, d={self.num_vars} to {path}")

    @classmethod
    def from_csv(cls, path: str) -> "Dataset":
        frame = pd.read_csv(path)
        logging.info(f"Loaded dataset {path} with shape {frame.shape}")
        return cls(frame.to_numpy(dtype=float))


@dataclass(frozen=True, eq=False)
class PrecisionMatrix:
    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
            raise ValueError(f"Precision matrix must be square, got shape {theta.shape}")
        scale = max(1.0, float(np.max(np.abs(theta)))) if theta.size else 1.0
        if np.max(np.abs(theta - theta.T), initial=0.0) > 1e-12 * scale:
            raise ValueError("Precision matrix is not symmetric")
        try:
            np.linalg.cholesky(theta)
        except np.linalg.LinAlgError:
            raise ValueError("Precision matrix is not positive definite")
        object.__setattr__(self, 'theta', theta)

    @property
    def num_vars(self) -> int:
        return self.theta.shape[0]

    def covariance(self) -> np.ndarray:
        return np.linalg.inv(self.theta)


@dataclass
class FaithfulnessReport:
    sscf_holds: bool
    sucf_holds: bool
    violating_pairs: List[Tuple[int, int, str]] = field(default_factory=list)


@dataclass
class MinThetaSummary:
    d: int
    expected_degree: float
    reps: int
    mean_min_neighbor_abs_theta: Optional[float]
    mean_min_spouse_abs_theta: Optional[float]
    reps_with_neighbors: int
    reps_with_spouses: int


def random_er_dag(d: int, expected_degree: float, seed=None) -> Dag:
    if d < 1:
        raise ValueError(f"Need at least one variable, got d={d}")
    if expected_degree < 0 or (d > 1 and expected_degree > d - 1):
        raise ValueError(f"Expected degree {expected_degree} invalid for d={d}")
    rng = np.random.default_rng(seed)
    if d == 1:
        return Dag.empty(1)
    p = expected_degree / (d - 1)
    upper = np.triu(rng.random((d, d)) < p, k=1)
    order = rng.permutation(d)
    adjacency = np.zeros((d, d), dtype=np.int8)
    rows, cols = np.nonzero(upper)
    adjacency[order[rows], order[cols]] = 1
    return Dag.from_adjacency(adjacency)


def random_weights(dag: Dag, seed=None) -> WeightedDag:
    rng = np.random.default_rng(seed)
    d = dag.num_vars
    weights = np.zeros((d, d))
    edges = dag.edges()
    if edges:
        magnitudes = rng.uniform(*WEIGHT_RANGE, size=len(edges))
        signs = rng.choice([-1.0, 1.0], size=len(edges))
        rows, cols = zip(*edges)
        weights[list(rows), list(cols)] = signs * magnitudes
    noise_vars = rng.uniform(*NOISE_RANGE, size=d)
    return WeightedDag(dag, weights, noise_vars)


def sample(model: WeightedDag, n: int, seed=None) -> Dataset:
    if n < 1:
        raise ValueError(f"Sample size must be positive, got {n}")
    rng = np.random.default_rng(seed)
    d = model.num_vars
    noise = rng.standard_normal((n, d)) * np.sqrt(model.noise_vars)
    values = np.zeros((n, d))
    for i in model.dag.topological_order():
        values[:, i] = values @ model.weights[:, i] + noise[:, i]
    return Dataset(values)


def analytic_covariance(model: WeightedDag) -> np.ndarray:
    d = model.num_vars
    inv = np.linalg.inv(np.eye(d) - model.weights)
    sigma = inv.T @ np.diag(model.noise_vars) @ inv
    return (sigma + sigma.T) / 2


def analytic_precision(model: WeightedDag) -> PrecisionMatrix:
    """
    Entrywise precision of the SEM:

        Theta_jk = -B_kj / s_j - B_jk / s_k + sum_l B_jl B_kl / s_l
        Theta_jj = 1 / s_j + sum_l B_jl^2 / s_l

    with s the noise variances.
    """
    B = model.weights
    w = 1.0 / model.noise_vars
    spouse_terms = (B * w) @ B.T
    theta = np.diag(w) + spouse_terms - w[:, None] * B.T - B * w[None, :]
    return PrecisionMatrix((theta + theta.T) / 2)


def precision_from_product(model: WeightedDag) -> np.ndarray:
    """(I - B) Omega^-1 (I - B)^T as an explicit matrix product."""
    d = model.num_vars
    resid = np.eye(d) - model.weights
    return np.linalg.multi_dot([resid, np.diag(1.0 / model.noise_vars), resid.T])


def support_graph(theta: PrecisionMatrix, tol: float = POPULATION_TOL) -> UndirectedGraph:
    if tol < 0:
        raise ValueError(f"Tolerance must be non-negative, got {tol}")
    return UndirectedGraph.from_adjacency(np.abs(theta.theta) > tol)


def collider_pairs(dag: Dag) -> Tuple[List[Tuple[int, int]], List[Tuple[int, int]]]:
    """(shielded, unshielded) spouse pairs, each pair listed once as (j, k) with j < k."""
    shielded, unshielded = set(), set()
    for parents in dag.parent_sets:
        for j, k in combinations(sorted(parents), 2):
            (shielded if dag.adjacent(j, k) else unshielded).add((j, k))
    return sorted(shielded), sorted(unshielded)


def check_sscf_sucf(model: WeightedDag, tol: float = POPULATION_TOL) -> FaithfulnessReport:
    theta = analytic_precision(model).theta
    shielded, unshielded = collider_pairs(model.dag)
    violating = [(j, k, 'shielded') for j, k in shielded if abs(theta[j, k]) <= tol]
    violating += [(j, k, 'unshielded') for j, k in unshielded if abs(theta[j, k]) <= tol]
    report = FaithfulnessReport(
        sscf_holds=not any(kind == 'shielded' for _, _, kind in violating),
        sucf_holds=not any(kind == 'unshielded' for _, _, kind in violating),
        violating_pairs=violating,
    )
    if violating:
        logging.debug(f"Collider faithfulness violated on pairs {violating}")
    return report


def min_theta_experiment(d: int, expected_degree: float, reps: int, seed=None) -> MinThetaSummary:
    if reps < 1:
        raise ValueError(f"Need at least one repetition, got {reps}")
    neighbor_mins, spouse_mins = [], []
    for child in np.random.SeedSequence(seed).spawn(reps):
        dag_seed, weight_seed = child.spawn(2)
        model = random_weights(random_er_dag(d, expected_degree, dag_seed), weight_seed)
        abs_theta = np.abs(analytic_precision(model).theta)
        edges = model.dag.edges()
        if edges:
            rows, cols = zip(*edges)
            neighbor_mins.append(float(abs_theta[list(rows), list(cols)].min()))
        _, spouses = collider_pairs(model.dag)
        if spouses:
            rows, cols = zip(*spouses)
            spouse_mins.append(float(abs_theta[list(rows), list(cols)].min()))
    summary = MinThetaSummary(
        d=d,
        expected_degree=expected_degree,
        reps=reps,
        mean_min_neighbor_abs_theta=float(np.mean(neighbor_mins)) if neighbor_mins else None,
        mean_min_spouse_abs_theta=float(np.mean(spouse_mins)) if spouse_mins else None,
        reps_with_neighbors=len(neighbor_mins),
        reps_with_spouses=len(spouse_mins),
    )
    logging.info(f"min-theta d={d} degree={expected_degree}: neighbors={summary.mean_min_neighbor_abs_theta} "
                 f"spouses={summary.mean_min_spouse_abs_theta}")
    return summary


# Named population models. Variable indices: X=0, W=1, Z=2, Y=3 for the collider
# examples; X=0, Y=1, Z=2, W=3 for the cancellation chain.

def scf_violation_model() -> WeightedDag:
    B = np.zeros((4, 4))
    B[0, 1], B[1, 2], B[0, 3], B[0, 2], B[2, 3] = 0.5, 1.0, 0.5, 0.5, 1.0
    return WeightedDag.from_weights(B, np.ones(4))


def ucf_violation_model() -> WeightedDag:
    B = np.zeros((4, 4))
    B[0, 1], B[1, 2], B[0, 3], B[2, 3] = 0.5, 1.0, 0.5, 0.5
    return WeightedDag.from_weights(B, np.ones(4))


def path_cancellation_model() -> WeightedDag:
    B = np.zeros((4, 4))
    B[0, 1], B[1, 2], B[2, 3], B[0, 3] = 1.0, 1.0, 1.0, -1.0
    return WeightedDag.from_weights(B, np.ones(4))


def triangle_cancellation_model() -> WeightedDag:
    """X -> Y -> Z with X -> Z cancelling so that X and Z are marginally independent."""
    B = np.zeros((3, 3))
    B[0, 1], B[1, 2], B[0, 2] = 1.0, 1.0, -1.0
    return WeightedDag.from_weights(B, np.ones(3))


def unfaithful_recovery_experiment(n: int, sims: int, glasso_cfg=None, seed=None) -> float:
    """Fraction of simulations where the estimated super-structure keeps every true adjacency."""
    from .glasso import GlassoConfig, estimate_superstructure

    model = path_cancellation_model()
    cfg = glasso_cfg or GlassoConfig.default_for(model.num_vars)
    truth = skeleton(model.dag)
    hits = 0
    for child in np.random.SeedSequence(seed).spawn(sims):
        estimate = estimate_superstructure(sample(model, n, child), cfg)
        if truth.edges <= estimate.edges:
            hits += 1
    logging.info(f"Path-cancellation model, n={n}: all neighbours recovered in {hits}/{sims} simulations")
    return hits / sims


def model_to_json(model: WeightedDag) -> dict:
    return {"B": model.weights.tolist(), "noise_vars": model.noise_vars.tolist()}


def model_from_json(data: dict) -> WeightedDag:
    return WeightedDag.from_weights(data["B"], data["noise_vars"])


def save_model(model: WeightedDag, path: str):
    with open(path, 'wt') as f:
        json.dump(model_to_json(model), f)


def load_model(path: str) -> WeightedDag:
    with open(path, 'rt') as f:
        return model_from_json(json.load(f))
