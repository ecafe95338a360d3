"""
Experiment configuration: loading, validation and host-roster scaling.

The config is one YAML document (JSON documents load unchanged). Every
section maps onto a dataclass; unknown keys are rejected.
"""
import copy
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional

import yaml

from .data_classes import AppProfile, HostSpec
from .exceptions import ConfigError
from .policies import POLICY_REGISTRY
from .surrogate import ABLATIONS, SurrogateConfig

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1

DEFAULT_POLICY_SET = [
    "ar_aco",
    "smooth_aco",
    "greedy_surrogate",
    "local_search",
    "graph_gradient",
    "gradient",
    "annealed_gradient",
]


@dataclass
class LatencyNoise:
    """Per-host allocation jitter |N(mean, std)| in seconds."""
    mean_s: float = 0.0
    std_s: float = 0.0


@dataclass
class EnvConfig:
    """Simulator parameters."""
    interval_s: float = 10.0
    serverless_cost_per_s: float = 5.0e-5
    arrival_rate: float = 1.2
    episode_length: int = 1000
    trace_intervals: int = 100
    seed: int = 0
    migration_delay_s: float = 2.0
    allocation_time_s: float = 0.5
    hibernate_idle: bool = True
    latency_noise: LatencyNoise = field(default_factory=LatencyNoise)
    regime_rates: List[float] = field(default_factory=list)
    regime_length: int = 50

    def validate(self):
        if self.interval_s <= 0:
            raise ConfigError("environment.interval_s must be > 0")
        if self.serverless_cost_per_s < 0:
            raise ConfigError("environment.serverless_cost_per_s must be >= 0")
        if self.arrival_rate < 0 or any(r < 0 for r in self.regime_rates):
            raise ConfigError("arrival rates must be >= 0")
        if self.episode_length < 1:
            raise ConfigError("environment.episode_length must be >= 1")
        if self.trace_intervals < 1:
            raise ConfigError("environment.trace_intervals must be >= 1")
        if self.regime_length < 1:
            raise ConfigError("environment.regime_length must be >= 1")
        if self.migration_delay_s < 0 or self.allocation_time_s < 0:
            raise ConfigError("delays must be >= 0")
        if self.latency_noise.std_s < 0:
            raise ConfigError("environment.latency_noise.std_s must be >= 0")

    def rate_at(self, interval: int) -> float:
        """Arrival rate for an interval; alternates through regime_rates when given."""
        if not self.regime_rates:
            return self.arrival_rate
        return self.regime_rates[(interval // self.regime_length) % len(self.regime_rates)]


@dataclass
class HostGroup:
    """A batch of identical hosts."""
    name: str
    count: int
    ips_capacity: float
    ram_capacity: float
    disk_capacity: float
    cost_per_hour: float
    power_table: List[float]

    def spec(self) -> HostSpec:
        return HostSpec(name=self.name,
                        ips_capacity=self.ips_capacity,
                        ram_capacity=self.ram_capacity,
                        disk_capacity=self.disk_capacity,
                        cost_per_s=self.cost_per_hour / 3600.0,
                        power_table=tuple(float(p) for p in self.power_table))


@dataclass
class SLAConfig:
    """Per-application deadlines and how to calibrate them."""
    percentile: float = 90.0
    reference_policy: str = "annealed_gradient"
    reference_intervals: int = 300
    deadlines: Dict[str, float] = field(default_factory=dict)


@dataclass
class PolicyConfig:
    """The ordered policy set and per-policy parameter blocks."""
    set: List[str] = field(default_factory=lambda: list(DEFAULT_POLICY_SET))
    timing_mode: str = "synthetic"
    params: Dict[str, Dict[str, Any]] = field(default_factory=dict)


@dataclass
class TrainConfig:
    """Offline training and fine-tuning hyperparameters."""
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-5
    max_epochs: int = 100
    batch_size: int = 16
    train_fraction: float = 0.8
    lof_neighbors: int = 10
    lof_threshold: float = 1.5
    lof_standardize: bool = False
    early_stopping: bool = True
    seed: int = 0
    loss_norm: str = "l2"

    def validate(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("training.train_fraction must be in (0, 1)")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ConfigError("training.max_epochs and training.batch_size must be >= 1")
        if self.loss_norm not in ("l2", "squared"):
            raise ConfigError(f"training.loss_norm must be 'l2' or 'squared', got '{self.loss_norm}'")
        if self.lof_neighbors < 1:
            raise ConfigError("training.lof_neighbors must be >= 1")


@dataclass
class SelectionConfig:
    """Online selection and baseline selector parameters."""
    rho_in_selection: bool = True
    selector_time_s: float = 0.05
    timing_mode: str = "synthetic"
    fine_tune: bool = True
    ucb_c: float = 1.0
    q_alpha: float = 0.1
    q_gamma: float = 0.9
    q_epsilon_start: float = 0.3
    q_epsilon_end: float = 0.01
    q_anneal_steps: int = 300
    pretrain_bandits: bool = True
    seed: int = 0


@dataclass
class OutputConfig:
    directory: str = "results"
    dataset_file: str = "results/dataset.jsonl"
    model_file: str = "models/metanet.bin"


@dataclass
class ExperimentConfig:
    """A complete experiment description."""
    version: int = CONFIG_VERSION
    environment: EnvConfig = field(default_factory=EnvConfig)
    hosts: List[HostGroup] = field(default_factory=list)
    applications: List[AppProfile] = field(default_factory=list)
    sla: SLAConfig = field(default_factory=SLAConfig)
    policies: PolicyConfig = field(default_factory=PolicyConfig)
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def host_specs(self) -> List[HostSpec]:
        specs = []
        for group in self.hosts:
            spec = group.spec()
            specs.extend([spec] * group.count)
        return specs

    @property
    def num_hosts(self) -> int:
        return sum(g.count for g in self.hosts)

    def scale_roster(self, total: int) -> "ExperimentConfig":
        """
        Copy of this config with `total` hosts, keeping the group proportions.

        Counts are apportioned by largest remainder; ties go to the earlier group.
        """
        if total < 1:
            raise ConfigError(f"Host count must be >= 1, got {total}")
        base = self.num_hosts
        quotas = [g.count * total / base for g in self.hosts]
        counts = [math.floor(q) for q in quotas]
        order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
        for i in order[:total - sum(counts)]:
            counts[i] += 1
        scaled = copy.deepcopy(self)
        scaled.hosts = [replace(g, count=c) for g, c in zip(scaled.hosts, counts) if c > 0]
        return scaled

    def validate(self):
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"Unsupported config version {self.version}, expected {CONFIG_VERSION}")
        self.environment.validate()
        self.training.validate()
        if not self.hosts or self.num_hosts < 1:
            raise ConfigError("At least one host is required")
        if any(g.count < 0 for g in self.hosts):
            raise ConfigError("Host counts must be >= 0")
        for group in self.hosts:
            group.spec()
        if not self.applications:
            raise ConfigError("At least one application profile is required")
        if self.policies.timing_mode not in ("synthetic", "wallclock"):
            raise ConfigError(f"policies.timing_mode must be synthetic|wallclock, got '{self.policies.timing_mode}'")
        if self.selection.timing_mode not in ("synthetic", "wallclock"):
            raise ConfigError("selection.timing_mode must be synthetic|wallclock")
        if len(self.policies.set) < 2 or len(set(self.policies.set)) != len(self.policies.set):
            raise ConfigError("policies.set needs at least two distinct policies")
        for name in self.policies.set:
            if name not in POLICY_REGISTRY:
                raise ConfigError(f"Unknown policy '{name}'")
        for name in self.policies.params:
            if name not in POLICY_REGISTRY:
                raise ConfigError(f"Parameters given for unknown policy '{name}'")
        self.surrogate.validate()
        if self.surrogate.q != len(self.policies.set):
            raise ConfigError(f"surrogate.q={self.surrogate.q} does not match {len(self.policies.set)} policies")


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _check_keys(data: Dict[str, Any], allowed, path: str):
    if data is None:
        return
    if not isinstance(data, dict):
        raise ConfigError(f"'{path}' must be a mapping")
    for key in data:
        if key not in allowed:
            raise ConfigError(f"Unknown config key '{path}.{key}'" if path else f"Unknown config key '{key}'")


def _simple(cls, data: Optional[Dict[str, Any]], path: str, nested: Optional[Dict[str, Any]] = None):
    data = dict(data or {})
    names = {f.name for f in fields(cls)}
    _check_keys(data, names, path)
    for key, value in (nested or {}).items():
        data[key] = value
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"Invalid section '{path}': {e}") from e


def _pair(value, path: str):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"'{path}' must be a [low, high] pair")
    return (float(value[0]), float(value[1]))


def _parse_app(data: Dict[str, Any], path: str) -> AppProfile:
    _check_keys(data, {"name", "ips", "ram", "disk", "work"}, path)
    try:
        return AppProfile(name=str(data["name"]),
                          ips=_pair(data["ips"], f"{path}.ips"),
                          ram=_pair(data["ram"], f"{path}.ram"),
                          disk=_pair(data["disk"], f"{path}.disk"),
                          work=_pair(data["work"], f"{path}.work"))
    except KeyError as e:
        raise ConfigError(f"Missing key {e} in '{path}'") from e


def config_from_dict(raw: Dict[str, Any]) -> ExperimentConfig:
    """
    Build and validate an ExperimentConfig from a parsed document.

    Raises:
        ConfigError: on unknown keys, bad values or a version mismatch
    """
    if not isinstance(raw, dict):
        raise ConfigError("Config document must be a mapping")
    _check_keys(raw, {f.name for f in fields(ExperimentConfig)}, "")
    if "version" not in raw:
        raise ConfigError("Config is missing the 'version' field")

    env_raw = dict(raw.get("environment") or {})
    noise = _simple(LatencyNoise, env_raw.pop("latency_noise", None), "environment.latency_noise")
    environment = _simple(EnvConfig, env_raw, "environment", {"latency_noise": noise})

    hosts = []
    for i, group in enumerate(raw.get("hosts") or []):
        hosts.append(_simple(HostGroup, group, f"hosts[{i}]"))
    applications = [_parse_app(a, f"applications[{i}]") for i, a in enumerate(raw.get("applications") or [])]

    surrogate_raw = dict(raw.get("surrogate") or {})
    _check_keys(surrogate_raw, {"embed_dim", "heads", "hidden", "ablation", "seed"}, "surrogate")
    ablation = surrogate_raw.pop("ablation", "none")
    if ablation not in ABLATIONS:
        raise ConfigError(f"surrogate.ablation must be one of {sorted(ABLATIONS)}, got '{ablation}'")
    policies = _simple(PolicyConfig, raw.get("policies"), "policies")
    surrogate = replace(SurrogateConfig(**surrogate_raw), q=len(policies.set), **ABLATIONS[ablation])

    cfg = ExperimentConfig(
        version=int(raw["version"]),
        environment=environment,
        hosts=hosts,
        applications=applications,
        sla=_simple(SLAConfig, raw.get("sla"), "sla"),
        policies=policies,
        surrogate=surrogate,
        training=_simple(TrainConfig, raw.get("training"), "training"),
        selection=_simple(SelectionConfig, raw.get("selection"), "selection"),
        output=_simple(OutputConfig, raw.get("output"), "output"),
    )
    cfg.validate()
    return cfg


def load_config(path: str) -> ExperimentConfig:
    """Read a YAML (or JSON) experiment config from disk."""
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found at {path}")
    with open(path, "r") as f:
        raw = yaml.safe_load(f)
    cfg = config_from_dict(raw)
    logger.debug(f"Loaded config from {path}: {cfg.num_hosts} hosts, policies {cfg.policies.set}")
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Plain-data form of a config, accepted back by config_from_dict."""
    data = asdict(cfg)
    for app in data["applications"]:
        for key in ("ips", "ram", "disk", "work"):
            app[key] = list(app[key])
    surrogate = data["surrogate"]
    ablation = next((name for name, flags in ABLATIONS.items()
                     if all(surrogate[k] == v for k, v in flags.items())), "none")
    data["surrogate"] = {
        "embed_dim": surrogate["embed_dim"],
        "heads": surrogate["heads"],
        "hidden": surrogate["hidden"],
        "ablation": ablation,
        "seed": surrogate["seed"],
    }
    return data


def save_config(cfg: ExperimentConfig, path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        yaml.safe_dump(config_to_dict(cfg), f, sort_keys=False)
    logger.info(f"Config written to {path}")
