"""
Command-line interface: collect, train, run, compare, sweep, calibrate.
"""
import argparse
import logging
import os
from dataclasses import replace
from typing import Dict, List, Optional

from .dataset import collect_dataset, load_dataset, policy_names, save_dataset
from .exceptions import ConfigError
from .experiment_config import ExperimentConfig, load_config, save_config
from .metrics import metrics_report, total_objective
from .reporting import selection_frequencies, summary_table, write_comparison, write_loss_curve, write_report, \
    write_sweep
from .scheduler import build_environment, build_policies, calibrate_deadlines, run_configured, save_trace, \
    with_deadlines
from .state import load_model, save_model
from .surrogate import ABLATIONS
from .training import train

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "config", "config.yaml")


def _with_seed(cfg: ExperimentConfig, seed: Optional[int]) -> ExperimentConfig:
    if seed is None:
        return cfg
    return replace(cfg, environment=replace(cfg.environment, seed=seed))


def _banner(title: str):
    logger.info("=" * 60)
    logger.info(title)
    logger.info("=" * 60)


def cmd_collect(args) -> int:
    cfg = _with_seed(load_config(args.config), args.seed)
    gamma = args.gamma or cfg.environment.trace_intervals
    out = args.out or cfg.output.dataset_file
    _banner(f"Collecting traces: {len(cfg.policies.set)} policies x {gamma} intervals")
    data = collect_dataset(build_environment(cfg), build_policies(cfg), gamma)
    save_dataset(data, out)
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    data = load_dataset(args.data or cfg.output.dataset_file)
    names = policy_names(data)
    if names is None:
        raise ConfigError("Dataset policy indices are inconsistent")
    if names != list(cfg.policies.set):
        raise ConfigError(f"Dataset policies {names} differ from config policy set {cfg.policies.set}")
    surrogate = cfg.surrogate
    if args.ablation:
        surrogate = replace(surrogate, **ABLATIONS[args.ablation])
    out = args.out or cfg.output.model_file
    _banner(f"Training surrogate ({surrogate.ablation}) on {len(data)} datapoints")
    result = train(data, cfg.training, surrogate, names, cfg.environment.serverless_cost_per_s)
    save_model(result.params, out, metadata={
        "epochs_run": result.epochs_run,
        "best_epoch": result.best_epoch,
        "early_stopped": result.early_stopped,
        "datapoints": len(data),
        "ablation": surrogate.ablation,
    })
    curve = args.curve or os.path.splitext(out)[0] + "_loss"
    write_loss_curve(result.history, curve)
    return 0


def _run_one(cfg: ExperimentConfig, selector: str, model: Optional[str], data: Optional[str],
             intervals: Optional[int]):
    params = load_model(model) if selector == "metanet" else None
    dataset = load_dataset(data) if data and selector in ("ucb", "qlearn") else None
    return run_configured(cfg, selector, params, dataset, intervals)


def cmd_run(args) -> int:
    cfg = _with_seed(load_config(args.config), args.seed)
    if args.selector == "metanet" and not args.model:
        raise ConfigError("--model is required for the metanet selector")
    _banner(f"Episode with selector {args.selector}")
    log = _run_one(cfg, args.selector, args.model, args.data, args.intervals)
    prefix = args.report or os.path.join(cfg.output.directory, f"run_{args.selector.replace(':', '_')}")
    summary = write_report(log, prefix, cfg.policies.set, {"selector": args.selector, "seed": cfg.environment.seed})
    if args.trace:
        save_trace(log, args.trace)
    for line in summary_table({args.selector: summary}):
        logger.info(line)
    return 0


def cmd_compare(args) -> int:
    selectors = [s for s in args.selectors.split(",") if s]
    summaries: Dict[str, Dict] = {}
    for path in args.config:
        cfg = _with_seed(load_config(path), args.seed)
        label = os.path.splitext(os.path.basename(path))[0]
        for selector in selectors:
            _banner(f"Compare: {selector} on {label}")
            log = _run_one(cfg, selector, args.model, args.data, args.intervals)
            summary = metrics_report(log)
            summary["total_objective"] = total_objective(log)
            key = selector if len(args.config) == 1 else f"{label}:{selector}"
            summaries[key] = summary
    write_comparison(summaries, args.out)
    for line in summary_table(summaries):
        logger.info(line)
    return 0


def cmd_sweep(args) -> int:
    base = _with_seed(load_config(args.config), args.seed)
    counts = [int(h) for h in args.hosts.split(",") if h]
    results: Dict[int, Dict] = {}
    frequencies: Dict[int, Dict[str, float]] = {}
    for hosts in counts:
        cfg = base.scale_roster(hosts)
        _banner(f"Sweep: {args.selector} on {hosts} hosts")
        log = _run_one(cfg, args.selector, args.model, args.data, args.intervals)
        summary = metrics_report(log)
        summary["total_objective"] = total_objective(log)
        results[hosts] = summary
        frequencies[hosts] = selection_frequencies(log, cfg.policies.set)
    write_sweep(results, frequencies, args.out)
    return 0


def cmd_calibrate(args) -> int:
    cfg = load_config(args.config)
    _banner(f"Calibrating SLA deadlines on {cfg.sla.reference_policy}")
    deadlines = calibrate_deadlines(cfg)
    save_config(with_deadlines(cfg, deadlines), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metanet", description="Cloud scheduling simulator and policy selector")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="run every policy and store the trace dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--gamma", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", help="train the surrogate on a dataset")
    p.add_argument("--config", default=DEFAULT_CONFIG)
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--ablation", choices=sorted(ABLATIONS))
    p.add_argument("--curve", help="loss curve prefix")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="run one episode with a selector")
    p.add_argument("--config", required=True)
    p.add_argument("--selector", required=True)
    p.add_argument("--model")
    p.add_argument("--data", help="trace dataset for bandit warm start")
    p.add_argument("--seed", type=int)
    p.add_argument("--intervals", type=int)
    p.add_argument("--report")
    p.add_argument("--trace")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several selectors and tabulate their metrics")
    p.add_argument("--config", required=True, action="append")
    p.add_argument("--selectors", required=True, help="comma separated")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--seed", type=int)
    p.add_argument("--intervals", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="repeat an episode for several host counts")
    p.add_argument("--config", required=True)
    p.add_argument("--hosts", required=True, help="comma separated host counts")
    p.add_argument("--selector", default="metanet")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--seed", type=int)
    p.add_argument("--intervals", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="derive SLA deadlines and write them into a config copy")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments and dispatch. Library errors are logged and give exit
    status 1; usage errors exit with 2 from argparse.
    """
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, FloatingPointError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
