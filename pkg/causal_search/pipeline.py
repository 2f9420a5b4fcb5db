"""
Experiment sweeps: simulate, estimate a super-structure, search, evaluate.

Every seed writes its artifacts under <output_dir>/seed-<seed>/. The
result.json of a seed depends only on (config, seed); wall-clock timings and
run status go to manifest.json instead.
"""

import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .glasso import GlassoConfig, empirical_covariance, fit_superstructure
from .graph import (
    UndirectedGraph, dag_to_cpdag, graph_to_json, load_graph_json, save_graph, undirected_from_json,
)
from .local import ClusterTooLargeError, plan_clusters
from .metrics import EvalReport, aggregate, evaluate
from .score import SearchConstraints, build_parent_graphs, default_max_parents
from .search import DEFAULT_MAX_DP_VARS, SearchTimeoutError
from .sem import (
    analytic_precision, min_theta_experiment, random_er_dag, random_weights, sample, save_model, support_graph,
    unfaithful_recovery_experiment,
)

METHODS = ('dp', 'astar', 'astar-ss', 'local-astar')
SUPERSTRUCTURE_SOURCES = ('glasso', 'true-supp', 'file')
UNFAITHFUL_SAMPLE_SIZES = (20, 100, 1000000)


@dataclass
class ExperimentConfig:
    d: int = 10
    expected_degree: float = 2.0
    n: int = 10000
    seeds: List[int] = field(default_factory=lambda: [0])
    method: str = 'local-astar'
    superstructure: str = 'glasso'
    superstructure_file: Optional[str] = None
    parallel: int = 1
    time_budget: Optional[float] = 3600.0
    output_dir: str = 'results'
    glasso: Optional[GlassoConfig] = None
    search: dict = field(default_factory=dict)
    local: dict = field(default_factory=dict)
    score_cache_dir: Optional[str] = None

    def __post_init__(self):
        if self.glasso is None:
            self.glasso = GlassoConfig.default_for(self.d)
        if not self.seeds:
            raise ValueError("At least one seed is required")
        if self.method not in METHODS:
            raise ValueError(f"Unknown method {self.method}; expected one of {METHODS}")
        if self.superstructure not in SUPERSTRUCTURE_SOURCES:
            raise ValueError(f"Unknown super-structure source {self.superstructure}")
        if self.superstructure == 'file' and self.needs_superstructure and not self.superstructure_file:
            raise ValueError("superstructure: file needs superstructure_file")
        if self.d < 1 or self.n < 2:
            raise ValueError(f"Need d >= 1 and n >= 2, got d={self.d}, n={self.n}")
        if self.parallel < 1:
            raise ValueError(f"parallel must be positive, got {self.parallel}")

    @property
    def needs_superstructure(self) -> bool:
        return self.method in ('astar-ss', 'local-astar')

    @classmethod
    def from_config(cls, config: dict) -> "ExperimentConfig":
        experiment = config.get('experiment', {}) or {}
        d = int(experiment.get('d', 10))
        seeds = experiment.get('seeds', [0])
        if isinstance(seeds, int):
            seeds = list(range(seeds))
        return cls(
            d=d,
            expected_degree=float(experiment.get('expected_degree', 2.0)),
            n=int(experiment.get('n', 10000)),
            seeds=[int(s) for s in seeds],
            method=experiment.get('method', 'local-astar'),
            superstructure=experiment.get('superstructure', 'glasso'),
            superstructure_file=experiment.get('superstructure_file'),
            parallel=int(experiment.get('parallel', 1)),
            time_budget=experiment.get('time_budget', 3600.0),
            output_dir=config.get('output_dir', 'results'),
            glasso=GlassoConfig.from_config(config.get('glasso', {}) or {}, d),
            search=config.get('search', {}) or {},
            local=config.get('local', {}) or {},
            score_cache_dir=config.get('score_cache_dir'),
        )


def learn_structure(S: np.ndarray, n: int, method: str, superstructure: Optional[UndirectedGraph] = None,
                    search_config: Optional[dict] = None, local_config: Optional[dict] = None,
                    deadline: Optional[float] = None, cache=None) -> dict:
    """Run one structure-learning method; returns the Cpdag and method details."""
    search_config = search_config or {}
    d = S.shape[0]
    if method in ('astar-ss', 'local-astar') and superstructure is None:
        raise ValueError(f"Method {method} needs a super-structure")
    max_parents = search_config.get('max_parents')
    if max_parents is None:
        max_parents = default_max_parents(d, method in ('astar-ss', 'local-astar'))

    if method == 'local-astar':
        from .local import LocalAStar
        local_config = dict(local_config or {})
        local_config.setdefault('deadline', deadline)
        local_config.setdefault('max_parents', search_config.get('max_parents'))
        result = LocalAStar(local_config).run(S, n, superstructure)
        return {"cpdag": result.cpdag, "dag": None, "details": result.to_dict()}

    dataset = None
    if cache is not None:
        from .cache import dataset_key
        dataset = dataset_key(S, n)
    if method == 'astar-ss':
        constraints = SearchConstraints.from_superstructure(superstructure)
    else:
        constraints = SearchConstraints.none(d)
    pgs = build_parent_graphs(S, n, constraints, max_parents, cache=cache, dataset_key=dataset)
    if method == 'dp':
        from .search import dp_exact
        result = dp_exact(pgs, num_vars=d, max_vars=int(search_config.get('max_dp_vars', DEFAULT_MAX_DP_VARS)),
                          deadline=deadline)
    elif method in ('astar', 'astar-ss'):
        from .search import astar_exact
        result = astar_exact(pgs, num_vars=d, deadline=deadline)
    else:
        raise ValueError(f"Unknown method {method}")
    return {"cpdag": dag_to_cpdag(result.dag), "dag": result.dag,
            "details": {"total_score": result.total_score, "expanded_nodes": result.expanded_nodes}}


def superstructure_summary(graph: UndirectedGraph) -> dict:
    """Edge count and two-hop cluster sizes of a super-structure."""
    sizes = [len(c) for c in plan_clusters(graph).clusters]
    return {"edges": graph.num_edges, "max_cluster_size": max(sizes, default=0),
            "mean_cluster_size": float(np.mean(sizes)) if sizes else 0.0}


def _superstructure_for(cfg: ExperimentConfig, model, data):
    if not cfg.needs_superstructure:
        return None, None
    if cfg.superstructure == 'glasso':
        graph, result = fit_superstructure(data, cfg.glasso)
        return graph, result.diagnostics()
    elif cfg.superstructure == 'true-supp':
        return support_graph(analytic_precision(model)), None
    elif cfg.superstructure == 'file':
        return undirected_from_json(load_graph_json(cfg.superstructure_file)), None
    raise ValueError(f"Unknown super-structure source {cfg.superstructure}")


def run_seed(cfg: ExperimentConfig, seed: int) -> dict:
    started = time.monotonic()
    seed_dir = os.path.join(cfg.output_dir, f"seed-{seed}")
    os.makedirs(seed_dir, exist_ok=True)
    entry = {"seed": seed, "dir": seed_dir, "status": "ok", "runtime": None, "error": None}
    try:
        dag_seed, weight_seed, sample_seed = np.random.SeedSequence(seed).spawn(3)
        model = random_weights(random_er_dag(cfg.d, cfg.expected_degree, dag_seed), weight_seed)
        data = sample(model, cfg.n, sample_seed)
        save_model(model, os.path.join(seed_dir, "model.json"))
        data.to_csv(os.path.join(seed_dir, "data.csv"))

        superstructure, glasso_diagnostics = _superstructure_for(cfg, model, data)
        if superstructure is not None:
            save_graph(superstructure, os.path.join(seed_dir, "superstructure.json"))

        cache = None
        if cfg.score_cache_dir:
            from .cache import ScoreCache
            cache = ScoreCache({'score_cache_dir': cfg.score_cache_dir})
        deadline = None if cfg.time_budget is None else started + float(cfg.time_budget)
        learned = learn_structure(empirical_covariance(data), data.n, cfg.method, superstructure,
                                  cfg.search, cfg.local, deadline, cache)
        save_graph(learned["cpdag"], os.path.join(seed_dir, "cpdag.json"))

        report = evaluate(learned["cpdag"], model.dag, superstructure)
        result = {
            "seed": seed,
            "method": cfg.method,
            "d": cfg.d,
            "n": cfg.n,
            "expected_degree": cfg.expected_degree,
            "true_edges": model.dag.num_edges,
            "metrics": report.to_dict(),
            "cpdag": graph_to_json(learned["cpdag"]),
        }
        if learned["dag"] is not None:
            result["total_score"] = learned["details"]["total_score"]
            result["dag"] = graph_to_json(learned["dag"])
        if glasso_diagnostics is not None:
            result["glasso"] = glasso_diagnostics
        if superstructure is not None:
            result["superstructure"] = superstructure_summary(superstructure)
        with open(os.path.join(seed_dir, "result.json"), 'wt') as f:
            json.dump(result, f, indent=2, sort_keys=True)
        entry["report"] = report.to_dict()
        logging.info(f"Seed {seed}: SHD {report.shd}, directed F1 {report.f1_directed:.3f}, "
                     f"undirected F1 {report.f1_undirected:.3f}")
    except SearchTimeoutError as e:
        entry.update(status="timeout", error=str(e))
        logging.warning(f"Seed {seed} timed out: {e}")
    except ClusterTooLargeError as e:
        entry.update(status="too-large", error=str(e),
                     clusters={"max_cluster_size": max(e.sizes, default=0), "oversized": e.oversized,
                               "bound": e.bound})
        logging.warning(f"Seed {seed} skipped: {e}")
    except Exception as e:
        entry.update(status="failed", error=f"{type(e).__name__}: {e}")
        logging.error(f"Seed {seed} failed: {type(e).__name__}: {e}")
    entry["runtime"] = time.monotonic() - started
    return entry


def run_pipeline(cfg: ExperimentConfig) -> dict:
    os.makedirs(cfg.output_dir, exist_ok=True)
    logging.info(f"Pipeline: method={cfg.method}, d={cfg.d}, degree={cfg.expected_degree}, n={cfg.n}, "
                 f"{len(cfg.seeds)} seeds")
    if cfg.parallel > 1 and len(cfg.seeds) > 1:
        entries = Parallel(n_jobs=cfg.parallel)(delayed(run_seed)(cfg, seed) for seed in cfg.seeds)
    else:
        entries = [run_seed(cfg, seed) for seed in cfg.seeds]

    reports = [EvalReport(**e["report"]) for e in entries if e["status"] == "ok"]
    table = aggregate(reports)
    aggregate_path = os.path.join(cfg.output_dir, "aggregate.csv")
    table.to_csv(aggregate_path, index=False)
    manifest = {
        "method": cfg.method,
        "d": cfg.d,
        "n": cfg.n,
        "expected_degree": cfg.expected_degree,
        "aggregate": aggregate_path,
        "seeds": [{k: v for k, v in e.items() if k != "report"} for e in entries],
    }
    with open(os.path.join(cfg.output_dir, "manifest.json"), 'wt') as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    counts = {status: sum(e["status"] == status for e in entries)
              for status in ("ok", "timeout", "too-large", "failed")}
    logging.info(f"Pipeline finished: {counts}")
    return manifest


def mintheta(config: dict) -> pd.DataFrame:
    d_grid = config.get('d_grid', [10, 20, 50, 100, 200, 500, 1000])
    degrees = config.get('degrees', [config.get('degree', 2)])
    reps = int(config.get('reps', 100))
    seed = config.get('seed', 0)
    rows = []
    for d in d_grid:
        for degree in degrees:
            summary = min_theta_experiment(int(d), float(degree), reps, seed=[seed, int(d), int(degree * 1000)])
            rows.append(summary.__dict__)
    return pd.DataFrame(rows)


def unfaithful(config: dict) -> pd.DataFrame:
    sims = int(config.get('sims', 100))
    seed = config.get('seed', 0)
    sizes = config.get('sample_sizes', UNFAITHFUL_SAMPLE_SIZES)
    glasso_cfg = GlassoConfig.from_config(config.get('glasso', {}) or {}, 4)
    rows = []
    for n in sizes:
        rate = unfaithful_recovery_experiment(int(n), sims, glasso_cfg, seed=[seed, int(n)])
        rows.append({"n": int(n), "sims": sims, "recovery_rate": rate})
    return pd.DataFrame(rows)
