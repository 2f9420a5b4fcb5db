"""
Structure-recovery metrics on CPDAGs and super-structures.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from .graph import Cpdag, Dag, UndirectedGraph, dag_to_cpdag, skeleton


@dataclass
class EvalReport:
    shd: int
    f1_directed: float
    f1_undirected: float
    superstructure_tpr: Optional[float] = None
    superstructure_fdr: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def _check_sizes(est, truth):
    if est.num_vars != truth.num_vars:
        raise ValueError(f"Graphs have different sizes: {est.num_vars} vs {truth.num_vars}")


def shd_cpdag(est: Cpdag, truth: Cpdag) -> int:
    """Number of unordered pairs whose marks differ in any way."""
    _check_sizes(est, truth)
    a, b = est.marks, truth.marks
    differs = (a != b) | (a.T != b.T)
    return int(np.triu(differs, k=1).sum())


def _f1(est: set, truth: set) -> float:
    if not est and not truth:
        return 1.0
    if not est or not truth:
        return 0.0
    hits = len(est & truth)
    if hits == 0:
        return 0.0
    precision, recall = hits / len(est), hits / len(truth)
    return 2 * precision * recall / (precision + recall)


def f1_edges(est: Cpdag, truth: Cpdag) -> Tuple[float, float]:
    _check_sizes(est, truth)
    return (_f1(est.directed_edges(), truth.directed_edges()),
            _f1(est.undirected_edges(), truth.undirected_edges()))


def superstructure_rates(est: UndirectedGraph, true_dag: Dag) -> Tuple[float, float]:
    _check_sizes(est, true_dag)
    truth = skeleton(true_dag).edges
    found = est.edges
    tpr = len(found & truth) / len(truth) if truth else 1.0
    fdr = len(found - truth) / len(found) if found else 0.0
    return tpr, fdr


def evaluate(est: Cpdag, truth_dag: Dag, superstructure: Optional[UndirectedGraph] = None) -> EvalReport:
    truth = dag_to_cpdag(truth_dag)
    f1_directed, f1_undirected = f1_edges(est, truth)
    report = EvalReport(shd_cpdag(est, truth), f1_directed, f1_undirected)
    if superstructure is not None:
        report.superstructure_tpr, report.superstructure_fdr = superstructure_rates(superstructure, truth_dag)
    logging.debug(f"Evaluation: {report}")
    return report


def aggregate(reports: Iterable[EvalReport]) -> pd.DataFrame:
    """Mean and standard error of every metric over the reports, one row per metric."""
    frame = pd.DataFrame([r.to_dict() for r in reports], dtype=float)
    if frame.empty:
        return pd.DataFrame(columns=["metric", "mean", "stderr", "count"])
    rows: List[dict] = []
    for metric in frame.columns:
        values = frame[metric].dropna()
        stderr = float(values.sem()) if len(values) > 1 else 0.0
        rows.append({
            "metric": metric,
            "mean": float(values.mean()) if len(values) else np.nan,
            "stderr": stderr if len(values) else np.nan,
            "count": int(len(values)),
        })
    return pd.DataFrame(rows)
