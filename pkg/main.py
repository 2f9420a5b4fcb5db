# causal-search main application

# causal-search learns linear-Gaussian causal structure: it estimates a
# super-structure with the graphical lasso, runs exact BIC search (DP, A*,
# A* with a super-structure, or Local A* on two-hop clusters), and evaluates
# the estimated CPDAG against simulated ground truth.

import argparse
import json
import logging
import os
import sys
import time

def load_config(config_path):
    import yaml
    if not config_path:
        return {}
    try:
        with open(config_path, 'r') as f:
            config = yaml.safe_load(f) or {}
        logging.info(f"Configuration loaded from {config_path}")
        return config
    except Exception as e:
        logging.error(f"Error loading configuration: {e}")
        return None

def write_json(payload, path=None):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path:
        with open(path, 'wt') as f:
            f.write(text + "\n")
        logging.info(f"Wrote {path}")
    else:
        print(text)

def cmd_simulate(args, config):
    import numpy as np
    from causal_search.graph import save_graph
    from causal_search.sem import random_er_dag, random_weights, sample, save_model
    experiment = config.get('experiment') or {}
    d = args.d or experiment.get('d', 10)
    degree = args.degree if args.degree is not None else experiment.get('expected_degree', 2)
    n = args.n or experiment.get('n', 10000)
    dag_seed, weight_seed, sample_seed = np.random.SeedSequence(args.seed).spawn(3)
    model = random_weights(random_er_dag(d, degree, dag_seed), weight_seed)
    data = sample(model, n, sample_seed)
    os.makedirs(args.out_dir, exist_ok=True)
    save_model(model, os.path.join(args.out_dir, "model.json"))
    save_graph(model.dag, os.path.join(args.out_dir, "dag.json"))
    data.to_csv(os.path.join(args.out_dir, "data.csv"))

def cmd_superstructure(args, config):
    from causal_search.glasso import GlassoConfig, fit_superstructure
    from causal_search.graph import save_graph
    from causal_search.sem import Dataset
    data = Dataset.from_csv(args.data)
    glasso_config = dict(config.get('glasso', {}) or {})
    if args.lam is not None:
        glasso_config['lambda'] = args.lam
    if args.cov_threshold is not None:
        glasso_config['cov_threshold'] = args.cov_threshold
    graph, result = fit_superstructure(data, GlassoConfig.from_config(glasso_config, data.num_vars))
    extra = {"diagnostics": result.diagnostics(), "objective_path": result.objective_path}
    if args.out:
        save_graph(graph, args.out, extra)
    else:
        from causal_search.graph import graph_to_json
        write_json({**graph_to_json(graph), **extra})

def cmd_search(args, config):
    from causal_search.glasso import empirical_covariance
    from causal_search.graph import graph_to_json, load_graph_json, undirected_from_json
    from causal_search.pipeline import learn_structure
    from causal_search.sem import Dataset
    data = Dataset.from_csv(args.data)
    superstructure = None
    if args.superstructure:
        superstructure = undirected_from_json(load_graph_json(args.superstructure))
    local_config = dict(config.get('local', {}) or {})
    if args.max_cluster is not None:
        local_config['max_cluster_size'] = args.max_cluster
    if args.parallel is not None:
        local_config['parallel'] = args.parallel
    cache = None
    if config.get('score_cache_dir'):
        from causal_search.cache import ScoreCache
        cache = ScoreCache(config)
    budget = args.time_budget if args.time_budget is not None else (config.get('experiment') or {}).get('time_budget')
    deadline = time.monotonic() + float(budget) if budget else None
    learned = learn_structure(empirical_covariance(data), data.n, args.method, superstructure,
                              config.get('search', {}) or {}, local_config, deadline, cache)
    payload = {"method": args.method, "cpdag": graph_to_json(learned["cpdag"]), **learned["details"]}
    if learned["dag"] is not None:
        payload["dag"] = graph_to_json(learned["dag"])
    write_json(payload, args.out)

def _load_truth(path):
    from causal_search.graph import dag_from_json, load_graph_json
    from causal_search.sem import model_from_json
    payload = load_graph_json(path)
    if "B" in payload:
        return model_from_json(payload).dag
    return dag_from_json(payload)

def _load_estimate(path):
    from causal_search.graph import cpdag_from_json, load_graph_json
    payload = load_graph_json(path)
    return cpdag_from_json(payload.get("cpdag", payload))

def cmd_evaluate(args, config):
    from causal_search.metrics import EvalReport, aggregate, evaluate
    if args.results_dir:
        reports = []
        for name in sorted(os.listdir(args.results_dir)):
            path = os.path.join(args.results_dir, name, "result.json")
            if os.path.isfile(path):
                with open(path, 'rt') as f:
                    reports.append(EvalReport(**json.load(f)["metrics"]))
        logging.info(f"Aggregating {len(reports)} seed results from {args.results_dir}")
        table = aggregate(reports)
        if args.out:
            table.to_csv(args.out, index=False)
        else:
            print(table.to_csv(index=False), end='')
        return
    if not (args.est and args.truth):
        raise ValueError("evaluate needs --est and --truth, or --results-dir")
    superstructure = None
    if args.superstructure:
        from causal_search.graph import load_graph_json, undirected_from_json
        superstructure = undirected_from_json(load_graph_json(args.superstructure))
    report = evaluate(_load_estimate(args.est), _load_truth(args.truth), superstructure)
    write_json(report.to_dict(), args.out)

def cmd_oracle(args, config):
    from causal_search.graph import dag_to_cpdag, graph_to_json
    from causal_search.oracle import CiOracle, enumerate_optimal_dags, smr_holds, sparsest_permutation
    from causal_search.sem import analytic_covariance, load_model
    model = load_model(args.model)
    if args.mode == 'sp':
        o = CiOracle.from_model(model, args.tol)
        result = sparsest_permutation(o)
        payload = {"min_edges": result.min_edges,
                   "mecs": [graph_to_json(m) for m in result.mecs],
                   "smr_holds": smr_holds(o, model.dag)}
    else:
        best, dags = enumerate_optimal_dags(analytic_covariance(model), args.n)
        payload = {"best_score": best,
                   "optimal_dags": [graph_to_json(dag) for dag in dags],
                   "optimal_mecs": [graph_to_json(m) for m in dict.fromkeys(dag_to_cpdag(dag) for dag in dags)],
                   "true_mec": graph_to_json(dag_to_cpdag(model.dag))}
    write_json(payload, args.out)

def cmd_mintheta(args, config):
    from causal_search.pipeline import mintheta
    mintheta_config = dict(config.get('mintheta', {}) or {})
    if args.d_grid:
        mintheta_config['d_grid'] = args.d_grid
    if args.degrees:
        mintheta_config['degrees'] = args.degrees
    if args.reps:
        mintheta_config['reps'] = args.reps
    table = mintheta(mintheta_config)
    if args.out:
        table.to_csv(args.out, index=False)
        logging.info(f"Wrote {args.out}")
    else:
        print(table.to_csv(index=False), end='')

def cmd_pipeline(args, config):
    from causal_search.pipeline import ExperimentConfig, run_pipeline
    if args.output_dir:
        config['output_dir'] = args.output_dir
    manifest = run_pipeline(ExperimentConfig.from_config(config))
    failed = [e["seed"] for e in manifest["seeds"] if e["status"] == "failed"]
    if failed:
        logging.warning(f"Seeds failed: {failed}")

def cmd_unfaithful(args, config):
    from causal_search.pipeline import unfaithful
    unfaithful_config = dict(config.get('unfaithful', {}) or {})
    if args.sims:
        unfaithful_config['sims'] = args.sims
    table = unfaithful(unfaithful_config)
    if args.out:
        table.to_csv(args.out, index=False)
    else:
        print(table.to_csv(index=False), end='')

COMMANDS = {
    'simulate': cmd_simulate,
    'superstructure': cmd_superstructure,
    'search': cmd_search,
    'evaluate': cmd_evaluate,
    'oracle': cmd_oracle,
    'mintheta': cmd_mintheta,
    'pipeline': cmd_pipeline,
    'unfaithful': cmd_unfaithful,
}

LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']

def build_parser():
    parser = argparse.ArgumentParser(description="causal-search - exact and local causal structure learning")
    parser.add_argument('--config', type=str, help='Path to configuration file')
    parser.add_argument('--log-level', type=str, choices=LOG_LEVELS, help='Logging level (overrides log_level in the config, default INFO)')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('simulate', help='Draw a random linear-Gaussian SEM and samples from it')
    p.add_argument('--d', type=int)
    p.add_argument('--degree', type=float)
    p.add_argument('--n', type=int)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out-dir', type=str, required=True)

    p = sub.add_parser('superstructure', help='Estimate a super-structure with the graphical lasso')
    p.add_argument('--data', type=str, required=True)
    p.add_argument('--lambda', dest='lam', type=float)
    p.add_argument('--cov-threshold', type=float)
    p.add_argument('--out', type=str)

    p = sub.add_parser('search', help='Run exact or local structure search')
    p.add_argument('--data', type=str, required=True)
    p.add_argument('--method', choices=['dp', 'astar', 'astar-ss', 'local-astar'], default='astar')
    p.add_argument('--superstructure', type=str)
    p.add_argument('--max-cluster', type=int)
    p.add_argument('--parallel', type=int)
    p.add_argument('--time-budget', type=float)
    p.add_argument('--out', type=str)

    p = sub.add_parser('evaluate', help='Compare an estimated CPDAG with the true DAG')
    p.add_argument('--est', type=str)
    p.add_argument('--truth', type=str)
    p.add_argument('--superstructure', type=str)
    p.add_argument('--results-dir', type=str)
    p.add_argument('--out', type=str)

    p = sub.add_parser('oracle', help='Brute-force references on a saved model')
    p.add_argument('--model', type=str, required=True)
    p.add_argument('--mode', choices=['sp', 'exhaustive-bic'], default='sp')
    p.add_argument('--n', type=int, default=1000000)
    p.add_argument('--tol', type=float, default=1e-8)
    p.add_argument('--out', type=str)

    p = sub.add_parser('mintheta', help='Smallest precision entries on neighbours and spouses')
    p.add_argument('--d-grid', type=int, nargs='+')
    p.add_argument('--degrees', type=float, nargs='+')
    p.add_argument('--reps', type=int)
    p.add_argument('--out', type=str)

    p = sub.add_parser('pipeline', help='Run a simulate/search/evaluate sweep from the config')
    p.add_argument('--output-dir', type=str)

    p = sub.add_parser('unfaithful', help='Neighbour recovery on the path-cancellation model')
    p.add_argument('--sims', type=int)
    p.add_argument('--out', type=str)
    return parser

def main(argv=None):
    """Main entry point for causal-search.

    Parses command-line arguments, loads the optional configuration, and
    dispatches to the subcommand. Any error is reported as a JSON object on
    stderr with a nonzero exit code.

    Config File Example:
    ```yaml
    output_dir: results/
    experiment:
      d: 10
      expected_degree: 2
      n: 10000
      seeds: [0, 1, 2]
      method: local-astar
      superstructure: glasso
    glasso:
      lambda: 0.05
    local:
      max_cluster_size: 20
    ```
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    # Set up logging
    logging.basicConfig(level=getattr(logging, args.log_level or 'INFO'))
    logger = logging.getLogger(__name__)
    logger.info("Starting causal-search %s with config: %s", args.command, args.config)

    config = load_config(args.config)
    if config is None:
        print(json.dumps({"error": "ConfigError", "message": f"Failed to load configuration {args.config}"}), file=sys.stderr)
        return 2
    if args.log_level is None and config.get('log_level') in LOG_LEVELS:
        logging.getLogger().setLevel(getattr(logging, config['log_level']))

    try:
        COMMANDS[args.command](args, config)
    except Exception as e:
        logger.debug("Command failed", exc_info=True)
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1
    return 0

if __name__ == "__main__":
    sys.exit(main())
