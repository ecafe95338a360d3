"""
Data classes for the cloud simulator and the meta-scheduler.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .exceptions import ConfigError, ScheduleValidationError

POWER_TABLE_POINTS = 11


@dataclass(frozen=True)
class HostSpec:
    """Static host capacities, price and power curve."""
    name: str
    ips_capacity: float  # instructions per second
    ram_capacity: float  # GB
    disk_capacity: float  # GB
    cost_per_s: float  # $/s (mu)
    power_table: Tuple[float, ...]  # watts at 0%, 10%, ..., 100% CPU

    def __post_init__(self):
        for label, value in (("ips_capacity", self.ips_capacity),
                             ("ram_capacity", self.ram_capacity),
                             ("disk_capacity", self.disk_capacity)):
            if value <= 0:
                raise ConfigError(f"Host '{self.name}': {label} must be > 0, got {value}")
        if self.cost_per_s < 0:
            raise ConfigError(f"Host '{self.name}': cost must be >= 0")
        if len(self.power_table) != POWER_TABLE_POINTS:
            raise ConfigError(f"Host '{self.name}': power table needs {POWER_TABLE_POINTS} points")
        if any(b < a for a, b in zip(self.power_table, self.power_table[1:])):
            raise ConfigError(f"Host '{self.name}': power table must be nondecreasing")

    @property
    def capacity(self) -> np.ndarray:
        return np.array([self.ips_capacity, self.ram_capacity, self.disk_capacity], dtype=np.float64)


@dataclass
class HostState:
    """Resource usage of one host averaged over an interval."""
    cpu: float = 0.0  # IPS
    ram: float = 0.0  # GB
    disk: float = 0.0  # GB

    def as_vector(self) -> List[float]:
        return [self.cpu, self.ram, self.disk]


@dataclass(frozen=True)
class AppProfile:
    """Uniform demand ranges for one application type."""
    name: str
    ips: Tuple[float, float]
    ram: Tuple[float, float]
    disk: Tuple[float, float]
    work: Tuple[float, float]

    def __post_init__(self):
        for label, (lo, hi) in (("ips", self.ips), ("ram", self.ram),
                                ("disk", self.disk), ("work", self.work)):
            if lo <= 0 or hi < lo:
                raise ConfigError(f"Application '{self.name}': invalid {label} range [{lo}, {hi}]")


@dataclass
class Task:
    """A workload in the system."""
    id: int
    app_type: str
    ips_demand: float
    ram_demand: float
    disk_demand: float
    total_work: float
    remaining_work: float
    arrival_interval: int
    completion_interval: Optional[int] = None
    waiting_time: float = 0.0
    response_time: float = 0.0
    host: Optional[int] = None
    placed_once: bool = False
    completed_work: float = 0.0

    @property
    def demand(self) -> List[float]:
        return [self.ips_demand, self.ram_demand, self.disk_demand]

    @property
    def done(self) -> bool:
        return self.completion_interval is not None


@dataclass
class ScheduleGraph:
    """Bipartite task-to-host assignment, one host per task."""
    edges: Dict[int, int] = field(default_factory=dict)

    def host_of(self, task_id: int) -> Optional[int]:
        return self.edges.get(task_id)

    def pairs(self) -> List[Tuple[int, int]]:
        return sorted(self.edges.items())

    def validate(self, active_task_ids: List[int], num_hosts: int):
        """
        Check that the decision covers exactly the active tasks with known hosts.

        Raises:
            ScheduleValidationError
        """
        active = set(active_task_ids)
        unknown = set(self.edges) - active
        if unknown:
            raise ScheduleValidationError(f"Decision references unknown tasks {sorted(unknown)}")
        missing = active - set(self.edges)
        if missing:
            raise ScheduleValidationError(f"Active tasks without a host: {sorted(missing)}")
        for task_id, host in self.edges.items():
            if not 0 <= host < num_hosts:
                raise ScheduleValidationError(f"Task {task_id} assigned to unknown host {host}")

    def __len__(self) -> int:
        return len(self.edges)


@dataclass
class PolicyOutput:
    """A scheduling decision plus the time the policy took to produce it."""
    decision: ScheduleGraph
    omega: float  # seconds
    iterations: int = 0


@dataclass
class SystemState:
    """
    Snapshot fed to the surrogate: task demands W (n x 3), host usage
    H (m x 3) and the assignment S as (task row, host index) pairs.
    """
    task_ids: List[int]
    W: np.ndarray
    H: np.ndarray
    S: List[Tuple[int, int]]

    @classmethod
    def empty(cls, num_hosts: int) -> "SystemState":
        return cls(task_ids=[], W=np.zeros((0, 3)), H=np.zeros((num_hosts, 3)), S=[])

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def m(self) -> int:
        return self.H.shape[0]


@dataclass
class SchedulingProblem:
    """Everything a policy sees when it has to place the active tasks."""
    tasks: List[Task]
    specs: List[HostSpec]
    host_usage: np.ndarray  # m x 3, previous interval
    previous: ScheduleGraph
    util_history: np.ndarray  # intervals x m CPU fraction
    interval: int
    interval_s: float

    @property
    def n(self) -> int:
        return len(self.tasks)

    @property
    def m(self) -> int:
        return len(self.specs)

    def demands(self) -> np.ndarray:
        if not self.tasks:
            return np.zeros((0, 3))
        return np.array([t.demand for t in self.tasks], dtype=np.float64)

    def capacities(self) -> np.ndarray:
        return np.array([s.capacity for s in self.specs], dtype=np.float64)

    def prices(self) -> np.ndarray:
        return np.array([s.cost_per_s for s in self.specs], dtype=np.float64)

    def previous_hosts(self) -> List[Optional[int]]:
        return [self.previous.host_of(t.id) for t in self.tasks]


@dataclass
class IntervalReport:
    """Outcome of executing one interval."""
    interval: int
    phi: float
    energy: float
    completions: List[int]
    completed_response: List[float]
    completed_wait: List[float]
    completed_apps: List[str]
    host_cpu: List[float]  # IPS averaged over the interval
    host_cpu_pct: List[float]
    migrations: int
    active_hosts: int
    unplaced: int
    repaired: int
    arrivals: int


@dataclass
class Datapoint:
    """One (policy, state, realised cost, realised scheduling time) tuple."""
    k: int
    policy: str
    interval: int
    W: np.ndarray
    H: np.ndarray
    S: List[Tuple[int, int]]
    phi: float
    omega: float

    def __post_init__(self):
        if self.phi < 0 or self.omega < 0:
            raise ValueError(f"Datapoint costs must be >= 0, got phi={self.phi}, omega={self.omega}")


@dataclass
class IntervalRecord:
    """One row of an episode log: the selection made and what it cost."""
    interval: int
    policy: str
    k: int
    phi: float
    omega: float
    selector_time: float
    objective: float  # phi + rho * omega
    energy: float
    arrivals: int
    completions: int
    sum_response: float
    sum_response_sq: float
    sum_wait: float
    sla_violations: int
    mean_cpu_pct: float
    active_hosts: int
    migrations: int
    unplaced: int
    inference_host: int = -1
    predicted: Optional[List[float]] = None  # denormalised score per policy
    completed_response: List[float] = field(default_factory=list)
    completed_apps: List[str] = field(default_factory=list)
