"""
Discrete-time simulation of a heterogeneous cloud.

Each interval: sample arrivals, take a placement decision, execute every
host for one interval with proportional fair sharing of IPS, then account
cost, energy, waiting and response times.
"""
import copy
import logging
from typing import Dict, List, Optional

import numpy as np

from .data_classes import (AppProfile, HostSpec, HostState, IntervalReport, ScheduleGraph,
                           SchedulingProblem, SystemState, Task)
from .experiment_config import EnvConfig

logger = logging.getLogger(__name__)

_COMPLETION_TOL = 1e-9


def sample_arrivals(rng: np.random.Generator,
                    rate: float,
                    apps: List[AppProfile],
                    next_id: int = 0,
                    interval: int = 0) -> List[Task]:
    """
    Draw the tasks arriving in one interval.

    Args:
        rng: arrival stream
        rate: Poisson rate (tasks per interval)
        apps: application profiles, picked uniformly
        next_id: id given to the first new task
        interval: arrival interval stamped on the tasks

    Returns:
        List of new tasks
    """
    if rate < 0:
        raise ValueError(f"Arrival rate must be >= 0, got {rate}")
    count = int(rng.poisson(rate))
    tasks = []
    for offset in range(count):
        app = apps[int(rng.integers(len(apps)))]
        work = float(rng.uniform(*app.work))
        tasks.append(Task(
            id=next_id + offset,
            app_type=app.name,
            ips_demand=float(rng.uniform(*app.ips)),
            ram_demand=float(rng.uniform(*app.ram)),
            disk_demand=float(rng.uniform(*app.disk)),
            total_work=work,
            remaining_work=work,
            arrival_interval=interval,
        ))
    return tasks


def execution_cost(host_states: List[HostState],
                   specs: List[HostSpec],
                   interval_s: float,
                   completions: int) -> float:
    """
    Amortised cost of an interval: price of the active hosts over the
    completed tasks, with the denominator clamped to 1.
    """
    spend = sum(spec.cost_per_s * interval_s
                for state, spec in zip(host_states, specs) if state.cpu > 0)
    return spend / max(1, completions)


def host_power(state: HostState, spec: HostSpec) -> float:
    """Watts drawn at the host's CPU utilisation, interpolated on its power table."""
    u = min(max(state.cpu / spec.ips_capacity, 0.0), 1.0)
    grid = np.linspace(0.0, 1.0, len(spec.power_table))
    return float(np.interp(u, grid, spec.power_table))


def energy(host_states: List[HostState],
           specs: List[HostSpec],
           interval_s: float,
           hibernate_idle: bool = False) -> float:
    """
    Joules consumed by all hosts over one interval.

    With hibernate_idle, hosts with zero CPU use draw nothing.
    """
    total = 0.0
    for state, spec in zip(host_states, specs):
        if hibernate_idle and state.cpu <= 0:
            continue
        total += host_power(state, spec) * interval_s
    return total


class CloudEnvironment:
    """
    A cloud of static hosts executing a stream of tasks.

    Usage per interval: begin_interval() -> problem() -> step(decision, ...).
    """

    def __init__(self,
                 config: EnvConfig,
                 specs: List[HostSpec],
                 apps: List[AppProfile],
                 deadlines: Optional[Dict[str, float]] = None):
        config.validate()
        if not specs:
            raise ValueError("Environment needs at least one host")
        self.config = config
        self.specs = list(specs)
        self.apps = list(apps)
        self.deadlines = dict(deadlines or {})
        arrival_seq, noise_seq = np.random.SeedSequence(config.seed).spawn(2)
        self.arrival_rng = np.random.default_rng(arrival_seq)
        self.noise_rng = np.random.default_rng(noise_seq)

        self.interval = 0
        self.next_task_id = 0
        self.active: Dict[int, Task] = {}
        self.completed: List[Task] = []
        self.previous = ScheduleGraph()
        self.host_usage = np.zeros((self.m, 3))
        self.util_history: List[np.ndarray] = []
        self.last_state = SystemState.empty(self.m)
        self._arrivals = 0
        self._repaired = 0
        self._open = False

    @property
    def m(self) -> int:
        return len(self.specs)

    @property
    def capacities(self) -> np.ndarray:
        return np.array([s.capacity for s in self.specs])

    def clone(self) -> "CloudEnvironment":
        return copy.deepcopy(self)

    def begin_interval(self) -> List[Task]:
        """Admit this interval's arrivals and open it for a decision."""
        if self._open:
            raise RuntimeError(f"Interval {self.interval} already open")
        rate = self.config.rate_at(self.interval)
        new_tasks = sample_arrivals(self.arrival_rng, rate, self.apps, self.next_task_id, self.interval)
        self.next_task_id += len(new_tasks)
        for task in new_tasks:
            self.active[task.id] = task
        self._arrivals = len(new_tasks)
        self._open = True
        return new_tasks

    def problem(self) -> SchedulingProblem:
        """What a policy needs to place the currently active tasks."""
        history = np.array(self.util_history) if self.util_history else np.zeros((0, self.m))
        return SchedulingProblem(tasks=list(self.active.values()),
                                 specs=self.specs,
                                 host_usage=self.host_usage.copy(),
                                 previous=ScheduleGraph(dict(self.previous.edges)),
                                 util_history=history,
                                 interval=self.interval,
                                 interval_s=self.config.interval_s)

    def observe(self) -> SystemState:
        """Tasks, host usage and assignment of the last executed interval."""
        s = self.last_state
        return SystemState(task_ids=list(s.task_ids), W=s.W.copy(), H=s.H.copy(), S=list(s.S))

    def least_loaded_host(self) -> int:
        """Host with the least CPU use last interval; lowest index on ties."""
        return int(np.argmin(self.host_usage[:, 0]))

    def _place(self, tasks: List[Task], decision: ScheduleGraph) -> Dict[int, Optional[int]]:
        caps = self.capacities
        ram_free = caps[:, 1].copy()
        disk_free = caps[:, 2].copy()
        placement: Dict[int, Optional[int]] = {}
        repaired = 0

        def fits(task: Task, host: int) -> bool:
            return task.ram_demand <= ram_free[host] + 1e-12 and task.disk_demand <= disk_free[host] + 1e-12

        # running tasks claim RAM/disk before new ones
        order = [t for t in tasks if t.host is not None] + [t for t in tasks if t.host is None]
        for task in order:
            target = decision.edges[task.id]
            chosen: Optional[int] = None
            if fits(task, target):
                chosen = target
            else:
                repaired += 1
                if task.host is not None and fits(task, task.host):
                    chosen = task.host
            if chosen is not None:
                ram_free[chosen] -= task.ram_demand
                disk_free[chosen] -= task.disk_demand
            placement[task.id] = chosen
        if repaired:
            logger.warning(f"Interval {self.interval}: {repaired} placements exceeded RAM/disk and were repaired")
        self._repaired = repaired
        return placement

    def step(self,
             decision: ScheduleGraph,
             scheduling_time: float = 0.0,
             selector_time: float = 0.0) -> IntervalReport:
        """
        Execute one interval under a placement decision.

        Args:
            decision: host for every active task
            scheduling_time: omega of the policy that produced the decision (s)
            selector_time: time spent choosing the policy (s)

        Returns:
            IntervalReport
        """
        if not self._open:
            raise RuntimeError("step() called before begin_interval()")
        cfg = self.config
        dt = cfg.interval_s
        tasks = list(self.active.values())
        decision.validate([t.id for t in tasks], self.m)
        jitter = np.abs(self.noise_rng.normal(cfg.latency_noise.mean_s, cfg.latency_noise.std_s, size=self.m))

        placement = self._place(tasks, decision)

        migrations = 0
        unplaced = 0
        demand = np.zeros(self.m)
        for task in tasks:
            host = placement[task.id]
            if host is None:
                unplaced += 1
                task.waiting_time += dt
                task.response_time += dt
                continue
            if task.host is not None and host != task.host:
                migrations += 1
                task.response_time += cfg.migration_delay_s
            if not task.placed_once:
                delay = selector_time + scheduling_time + cfg.allocation_time_s + float(jitter[host])
                task.waiting_time += delay
                task.response_time += delay
                task.placed_once = True
            demand[host] += task.ips_demand

        share = np.ones(self.m)
        ips = np.array([s.ips_capacity for s in self.specs])
        over = demand > ips
        share[over] = ips[over] / demand[over]

        usage = np.zeros((self.m, 3))
        finished: List[Task] = []
        for task in tasks:
            host = placement[task.id]
            if host is None:
                continue
            alloc = task.ips_demand * share[host]
            capacity_work = alloc * dt
            if task.remaining_work <= capacity_work * (1 + _COMPLETION_TOL):
                run_time = min(task.remaining_work / alloc, dt)
                task.completed_work += task.remaining_work
                task.remaining_work = 0.0
                task.response_time += run_time
                task.completion_interval = self.interval
                finished.append(task)
            else:
                run_time = dt
                task.remaining_work -= capacity_work
                task.completed_work += capacity_work
                task.response_time += dt
            frac = run_time / dt
            usage[host] += np.array([alloc, task.ram_demand, task.disk_demand]) * frac

        host_states = [HostState(cpu=float(u[0]), ram=float(u[1]), disk=float(u[2])) for u in usage]
        phi = execution_cost(host_states, self.specs, dt, len(finished))
        joules = energy(host_states, self.specs, dt, hibernate_idle=cfg.hibernate_idle)
        cpu_pct = [100.0 * s.cpu / spec.ips_capacity for s, spec in zip(host_states, self.specs)]

        rows = {t.id: i for i, t in enumerate(tasks)}
        self.last_state = SystemState(
            task_ids=[t.id for t in tasks],
            W=np.array([t.demand for t in tasks]) if tasks else np.zeros((0, 3)),
            H=usage.copy(),
            S=[(rows[t.id], placement[t.id]) for t in tasks if placement[t.id] is not None],
        )

        for task in tasks:
            task.host = placement[task.id]
        for task in finished:
            del self.active[task.id]
            self.completed.append(task)
        self.previous = ScheduleGraph({t.id: t.host for t in self.active.values() if t.host is not None})
        self.host_usage = usage
        self.util_history.append(usage[:, 0] / ips)

        report = IntervalReport(
            interval=self.interval,
            phi=phi,
            energy=joules,
            completions=[t.id for t in finished],
            completed_response=[t.response_time for t in finished],
            completed_wait=[t.waiting_time for t in finished],
            completed_apps=[t.app_type for t in finished],
            host_cpu=[s.cpu for s in host_states],
            host_cpu_pct=cpu_pct,
            migrations=migrations,
            active_hosts=sum(1 for s in host_states if s.cpu > 0),
            unplaced=unplaced,
            repaired=self._repaired,
            arrivals=self._arrivals,
        )
        logger.debug(f"Interval {self.interval}: phi={phi:.6f} energy={joules:.1f}J "
                     f"done={len(finished)} active_hosts={report.active_hosts} migrations={migrations}")
        self.interval += 1
        self._open = False
        return report

    def sla_violations(self, apps: List[str], response: List[float]) -> int:
        """Completed tasks whose response time exceeds their application's deadline."""
        return sum(1 for app, rt in zip(apps, response)
                   if app in self.deadlines and rt > self.deadlines[app])
