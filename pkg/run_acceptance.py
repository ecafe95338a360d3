#!/usr/bin/env python3
"""
Long-running acceptance checks on the desk config: training convergence,
the regime-shift comparison, Q-learning against random selection, UCB on a
stationary arm problem and ablation distinguishability.

Prints PASS/FAIL per check; exit status 1 if any check fails.
"""
import argparse
import logging
import sys
import time
from dataclasses import replace

import numpy as np

from src.dataset import collect_dataset
from src.experiment_config import ExperimentConfig, load_config
from src.main import DEFAULT_CONFIG
from src.metrics import total_objective
from src.policy_selection import UCBSelector, select_policy
from src.scheduler import build_environment, build_policies, run_configured
from src.surrogate import ABLATIONS
from src.training import train

logging.basicConfig(level=logging.WARNING)

REGIME_RATES = [0.4, 2.4]


def regime_config(base: ExperimentConfig, seed: int) -> ExperimentConfig:
    env = replace(base.environment, regime_rates=list(REGIME_RATES), regime_length=50, episode_length=300, seed=seed)
    return replace(base, environment=env)


def trained_model(cfg: ExperimentConfig, surrogate=None):
    data = collect_dataset(build_environment(cfg), build_policies(cfg), cfg.environment.trace_intervals)
    result = train(data, cfg.training, surrogate or cfg.surrogate, cfg.policies.set,
                   cfg.environment.serverless_cost_per_s)
    return data, result


def check_training_convergence(base: ExperimentConfig) -> bool:
    print("\n[training convergence]")
    _, result = trained_model(base)
    first, last = result.history[0].val_loss, result.history[result.best_epoch - 1].val_loss
    print(f"  epochs run: {result.epochs_run}, early stopped: {result.early_stopped}")
    print(f"  validation loss: epoch 1 {first:.6f} -> epoch {result.best_epoch} {last:.6f}")
    return result.early_stopped and result.epochs_run <= 100 and last <= 0.5 * first


def check_regime_shift(base: ExperimentConfig, seeds) -> bool:
    print("\n[regime shift]")
    totals = {"metanet": [], "qlearn": [], "random": []}
    for name in base.policies.set:
        totals[f"static:{name}"] = []
    for seed in seeds:
        cfg = regime_config(base, seed)
        data, result = trained_model(cfg)
        for selector in totals:
            params = result.params if selector == "metanet" else None
            log = run_configured(cfg, selector, params=params, dataset=data)
            totals[selector].append(total_objective(log))
        print(f"  seed {seed}: " + ", ".join(f"{k}={v[-1]:.4f}" for k, v in totals.items()))

    means = {k: float(np.mean(v)) for k, v in totals.items()}
    statics = {k: v for k, v in means.items() if k.startswith("static:")}
    worst, best = max(statics.values()), min(statics.values())
    meta = means["metanet"]
    print(f"  mean totals: metanet {meta:.4f}, best static {best:.4f}, worst static {worst:.4f}")
    print(f"  qlearn {means['qlearn']:.4f} vs random {means['random']:.4f}")
    beats_worst = meta <= 0.85 * worst
    near_best = meta <= 1.05 * best
    q_ok = means["qlearn"] <= means["random"]
    print(f"  metanet >= 15% below worst: {beats_worst}; within 5% of best: {near_best}; qlearn <= random: {q_ok}")
    return beats_worst and near_best and q_ok


def check_ucb_stationary() -> bool:
    print("\n[ucb stationary arms]")
    costs = [1.0, 0.5, 0.9]
    selector = UCBSelector(3, rho=0.0)
    picks = []
    for t in range(1000):
        k = selector.select(t, None, []).index
        picks.append(k)
        selector.update(k, costs[k], 0.0)
    share = picks[-100:].count(1) / 100
    print(f"  best arm share over the last 100 rounds: {share:.2f}")
    return share >= 0.9


def check_ablations(base: ExperimentConfig) -> bool:
    print("\n[ablation distinguishability]")
    cfg = replace(base, environment=replace(base.environment, trace_intervals=100))
    data = collect_dataset(build_environment(cfg), build_policies(cfg), cfg.environment.trace_intervals)
    rho = cfg.environment.serverless_cost_per_s
    replay = [dp for dp in data if dp.k == 0][:100]

    def choices(surrogate):
        result = train(data, cfg.training, surrogate, cfg.policies.set, rho)
        return [select_policy(result.params, dp.W, dp.H, dp.S, rho) for dp in replay]

    reference = choices(cfg.surrogate)
    ok = True
    for name in ("gnn", "dual", "attn"):
        picks = choices(replace(cfg.surrogate, **ABLATIONS[name]))
        differing = sum(a != b for a, b in zip(reference, picks))
        print(f"  {name}: {differing} of {len(replay)} selections differ")
        ok = ok and differing >= 1
    return ok


def main():
    parser = argparse.ArgumentParser(description="Run the acceptance scenarios")
    parser.add_argument("--config", default=DEFAULT_CONFIG)
    parser.add_argument("--seeds", default="0,1,2,3,4")
    parser.add_argument("--skip", default="", help="comma separated: training,regime,ucb,ablation")
    args = parser.parse_args()

    base = load_config(args.config)
    seeds = [int(s) for s in args.seeds.split(",") if s]
    skip = set(args.skip.split(","))
    checks = [
        ("training", lambda: check_training_convergence(base)),
        ("regime", lambda: check_regime_shift(base, seeds)),
        ("ucb", check_ucb_stationary),
        ("ablation", lambda: check_ablations(base)),
    ]

    print("=" * 80)
    print("ACCEPTANCE")
    print("=" * 80)
    outcomes = {}
    for name, check in checks:
        if name in skip:
            continue
        start = time.time()
        outcomes[name] = check()
        print(f"  {'PASS' if outcomes[name] else 'FAIL'} ({time.time() - start:.0f}s)")

    print("\n" + "=" * 80)
    for name, passed in outcomes.items():
        print(f"{name:<12} {'PASS' if passed else 'FAIL'}")
    print("=" * 80)
    return 0 if all(outcomes.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
