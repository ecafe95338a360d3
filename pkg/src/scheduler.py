"""
Episode loop: each interval a selector picks a policy, the policy places
the active tasks and the cloud executes the interval.
"""
import json
import logging
import os
from dataclasses import asdict, replace
from typing import Dict, List, Optional, Sequence

from .data_classes import Datapoint, IntervalRecord
from .environment import CloudEnvironment
from .exceptions import ConfigError
from .experiment_config import ExperimentConfig
from .metrics import calibrate_sla
from .policies import Policy, build_policy_set
from .policy_selection import Selector, StaticSelector, build_selector
from .surrogate import SurrogateParams, scale_features

logger = logging.getLogger(__name__)


def build_environment(cfg: ExperimentConfig, deadlines: Optional[Dict[str, float]] = None) -> CloudEnvironment:
    return CloudEnvironment(cfg.environment, cfg.host_specs(), cfg.applications,
                            cfg.sla.deadlines if deadlines is None else deadlines)


def build_policies(cfg: ExperimentConfig) -> List[Policy]:
    return build_policy_set(cfg.policies.set, cfg.policies.params, cfg.policies.timing_mode, cfg.environment.seed)


def run_episode(selector: Selector,
                env: CloudEnvironment,
                policies: Sequence[Policy],
                T: int,
                rho: float) -> List[IntervalRecord]:
    """
    Run T intervals.

    Per interval: observe the state left by the previous interval, let the
    selector choose (charging its time to new tasks' waiting time), run the
    chosen policy, execute, record, then hand the realised costs back to
    the selector.

    Returns:
        One IntervalRecord per interval
    """
    if len(policies) != selector.q:
        raise ConfigError(f"Selector expects {selector.q} policies, got {len(policies)}")
    log: List[IntervalRecord] = []
    for t in range(T):
        state = env.observe()
        inference_host = env.least_loaded_host() if selector.runs_inference else -1
        env.begin_interval()
        choice = selector.select(t, state, env.specs)
        policy = policies[choice.index]
        out = policy.schedule(env.problem())
        report = env.step(out.decision, scheduling_time=out.omega, selector_time=choice.selector_time)

        responses = report.completed_response
        record = IntervalRecord(
            interval=report.interval,
            policy=policy.name,
            k=choice.index,
            phi=report.phi,
            omega=out.omega,
            selector_time=choice.selector_time,
            objective=report.phi + rho * out.omega,
            energy=report.energy,
            arrivals=report.arrivals,
            completions=len(report.completions),
            sum_response=float(sum(responses)),
            sum_response_sq=float(sum(r * r for r in responses)),
            sum_wait=float(sum(report.completed_wait)),
            sla_violations=env.sla_violations(report.completed_apps, responses),
            mean_cpu_pct=float(sum(report.host_cpu_pct) / len(report.host_cpu_pct)),
            active_hosts=report.active_hosts,
            migrations=report.migrations,
            unplaced=report.unplaced,
            inference_host=inference_host,
            predicted=choice.predicted,
            completed_response=list(responses),
            completed_apps=list(report.completed_apps),
        )
        log.append(record)

        W, H = scale_features(state, env.specs)
        datapoint = Datapoint(k=choice.index, policy=policy.name, interval=report.interval,
                              W=W, H=H, S=list(state.S), phi=report.phi, omega=out.omega)
        selector.update(choice.index, report.phi, out.omega, datapoint)
        if (t + 1) % 50 == 0:
            logger.info(f"Interval {t + 1}/{T}: last policy {policy.name}, phi={report.phi:.6f}")
    return log


def run_configured(cfg: ExperimentConfig,
                   selector_spec: str,
                   params: Optional[SurrogateParams] = None,
                   dataset: Optional[Sequence[Datapoint]] = None,
                   episode_length: Optional[int] = None) -> List[IntervalRecord]:
    """Build environment, policies and selector from a config and run one episode."""
    rho = cfg.environment.serverless_cost_per_s
    policies = build_policies(cfg)
    selector = build_selector(selector_spec, cfg.policies.set, rho, cfg.selection, cfg.training, params)
    if dataset and cfg.selection.pretrain_bandits:
        selector.pretrain(dataset)
    T = cfg.environment.episode_length if episode_length is None else episode_length
    logger.info(f"Running {selector_spec} for {T} intervals on {cfg.num_hosts} hosts")
    return run_episode(selector, build_environment(cfg), policies, T, rho)


def calibrate_deadlines(cfg: ExperimentConfig) -> Dict[str, float]:
    """
    Per-application deadlines from a reference run of a single policy.

    The reference run has no deadlines of its own.
    """
    reference = cfg.sla.reference_policy
    policies = build_policy_set([reference], cfg.policies.params, cfg.policies.timing_mode, cfg.environment.seed)
    env = build_environment(cfg, deadlines={})
    log = run_episode(StaticSelector(1, 0), env, policies, cfg.sla.reference_intervals,
                      cfg.environment.serverless_cost_per_s)
    return calibrate_sla(log, [a.name for a in cfg.applications], cfg.sla.percentile)


def with_deadlines(cfg: ExperimentConfig, deadlines: Dict[str, float]) -> ExperimentConfig:
    return replace(cfg, sla=replace(cfg.sla, deadlines=dict(deadlines)))


def save_trace(log: Sequence[IntervalRecord], path: str):
    """Episode trace as JSON-Lines, one record per interval."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        for record in log:
            f.write(json.dumps(asdict(record), sort_keys=True) + "\n")


def load_trace(path: str) -> List[IntervalRecord]:
    with open(path) as f:
        return [IntervalRecord(**json.loads(line)) for line in f if line.strip()]
