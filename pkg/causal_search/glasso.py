"""
Graphical lasso and super-structure extraction.

The penalized likelihood is maximized by scikit-learn's block coordinate
descent solver. Only off-diagonal entries of the precision matrix are
penalized, so diag(W) stays equal to diag(S). Sweeps stop once the absolute
dual gap falls below the convergence tolerance.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg
from sklearn import covariance
from sklearn.exceptions import ConvergenceWarning

from .graph import UndirectedGraph
from .sem import Dataset, PrecisionMatrix

RIDGE = 1e-8


class SingularInputError(ValueError):
    """Raised when the covariance matrix has a zero (or negative) variance."""


@dataclass
class GlassoConfig:
    lam: float = 0.05
    max_iters: int = 200
    convergence_tol: float = 1e-5
    cov_threshold: Optional[float] = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"l1 penalty must be non-negative, got {self.lam}")
        if self.convergence_tol <= 0:
            raise ValueError(f"Convergence tolerance must be positive, got {self.convergence_tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be positive, got {self.max_iters}")

    @classmethod
    def default_for(cls, d: int) -> "GlassoConfig":
        return cls(lam=0.05 if d <= 20 else 0.2, cov_threshold=0.03 if d > 40 else None)

    @classmethod
    def from_config(cls, config: dict, d: int) -> "GlassoConfig":
        defaults = cls.default_for(d)
        lam = config.get('lambda')
        cov_threshold = config.get('cov_threshold', defaults.cov_threshold)
        return cls(
            lam=defaults.lam if lam is None else float(lam),
            max_iters=int(config.get('max_iters', defaults.max_iters)),
            convergence_tol=float(config.get('convergence_tol', defaults.convergence_tol)),
            cov_threshold=defaults.cov_threshold if cov_threshold is None else float(cov_threshold),
        )


@dataclass
class GlassoResult:
    theta_hat: PrecisionMatrix
    sigma_hat: np.ndarray
    iterations: int
    converged: bool
    lam: float
    objective_path: List[float] = field(default_factory=list)
    dual_gap: float = 0.0
    kkt_residual: float = 0.0

    def diagnostics(self) -> dict:
        return {
            "lambda": self.lam,
            "iterations": self.iterations,
            "converged": self.converged,
            "dual_gap": self.dual_gap,
            "kkt_residual": self.kkt_residual,
        }


def empirical_covariance(data: Dataset) -> np.ndarray:
    if data.n < 2:
        raise ValueError(f"Need at least two samples for a covariance estimate, got {data.n}")
    S = covariance.empirical_covariance(np.asarray(data.values, dtype=float))
    return (S + S.T) / 2


def threshold_covariance(S: np.ndarray, threshold: Optional[float]) -> np.ndarray:
    """Zero off-diagonal entries with |S_ij| < threshold; the diagonal is never touched."""
    if threshold is None:
        return S
    S = S.copy()
    small = np.abs(S) < threshold
    np.fill_diagonal(small, False)
    S[small] = 0.0
    return S


def penalized_log_likelihood(S: np.ndarray, theta: np.ndarray, lam: float) -> float:
    sign, logdet = np.linalg.slogdet(theta)
    if sign <= 0:
        return -np.inf
    off = np.abs(theta).sum() - np.abs(np.diag(theta)).sum()
    return float(logdet - np.sum(S * theta) - lam * off)


def dual_gap(S: np.ndarray, theta: np.ndarray, lam: float) -> float:
    off = np.abs(theta).sum() - np.abs(np.diag(theta)).sum()
    return float(np.sum(S * theta) - theta.shape[0] + lam * off)


def kkt_residual(S: np.ndarray, W: np.ndarray, theta: np.ndarray, lam: float) -> float:
    """Largest violation of W - S = lam * subgradient(|Theta|_1,off) over off-diagonal entries."""
    grad = W - S
    active = theta != 0
    residual = np.where(active, np.abs(grad - lam * np.sign(theta)), np.maximum(np.abs(grad) - lam, 0.0))
    np.fill_diagonal(residual, np.abs(np.diag(grad)))
    return float(residual.max()) if residual.size else 0.0


def graphical_lasso(S: np.ndarray, cfg: GlassoConfig) -> GlassoResult:
    S = np.asarray(S, dtype=float)
    d = S.shape[0]
    if np.any(np.diag(S) <= 0):
        raise SingularInputError("Covariance matrix has zero variance entries")
    if np.linalg.eigvalsh(S).min() <= 0:
        logging.debug(f"Covariance is rank-deficient, adding ridge {RIDGE}")
        S = S + RIDGE * np.eye(d)

    if cfg.lam == 0 or d < 2:
        theta = linalg.pinvh(S)
        theta = (theta + theta.T) / 2
        return GlassoResult(PrecisionMatrix(theta), S.copy(), 0, True, cfg.lam,
                            [penalized_log_likelihood(S, theta, cfg.lam)],
                            dual_gap(S, theta, cfg.lam), kkt_residual(S, S, theta, cfg.lam))

    with warnings.catch_warnings():
        warnings.simplefilter('ignore', ConvergenceWarning)
        W, theta, costs, sweeps = covariance.graphical_lasso(
            S, alpha=cfg.lam, mode='cd', tol=cfg.convergence_tol, enet_tol=cfg.convergence_tol / 10,
            max_iter=cfg.max_iters, return_costs=True, return_n_iter=True)
    # sklearn's cost is -2 * loglik (with the 2*pi constant) plus the penalty
    offset = 2 * d * np.log(2 * np.pi)
    objective_path = [float(offset - cost) for cost, _ in costs]
    for sweep, (cost, gap) in enumerate(costs, start=1):
        logging.debug(f"[graphical_lasso] sweep {sweep}, objective {offset - cost:.6e}, dual gap {gap:.3e}")
    converged = bool(costs) and bool(abs(costs[-1][1]) < cfg.convergence_tol)
    if not converged:
        logging.warning(f"graphical_lasso did not converge after {cfg.max_iters} sweeps (lambda={cfg.lam})")

    theta = (theta + theta.T) / 2
    try:
        theta_hat = PrecisionMatrix(theta)
    except ValueError as e:
        raise FloatingPointError(f"Non SPD result: {e}")
    return GlassoResult(
        theta_hat=theta_hat,
        sigma_hat=W,
        iterations=int(sweeps),
        converged=converged,
        lam=cfg.lam,
        objective_path=objective_path,
        dual_gap=dual_gap(S, theta, cfg.lam),
        kkt_residual=kkt_residual(S, W, theta, cfg.lam),
    )


def fit_superstructure(data: Dataset, cfg: GlassoConfig) -> Tuple[UndirectedGraph, GlassoResult]:
    S = threshold_covariance(empirical_covariance(data), cfg.cov_threshold)
    result = graphical_lasso(S, cfg)
    support = result.theta_hat.theta != 0
    np.fill_diagonal(support, False)
    graph = UndirectedGraph.from_adjacency(support)
    logging.info(f"Estimated super-structure with {graph.num_edges} edges "
                 f"(lambda={cfg.lam}, {result.iterations} sweeps, converged={result.converged})")
    return graph, result


def estimate_superstructure(data: Dataset, cfg: GlassoConfig) -> UndirectedGraph:
    graph, _ = fit_superstructure(data, cfg)
    return graph
