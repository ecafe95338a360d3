"""
Shared fixtures: a small two-type cloud and a matching experiment config.
"""
import copy

import numpy as np
import pytest

from src.data_classes import AppProfile, HostSpec
from src.experiment_config import EnvConfig, config_from_dict

SMALL_POWER = [86.0, 89.4, 92.6, 96.0, 99.5, 102.0, 106.0, 108.0, 112.0, 114.0, 117.0]
LARGE_POWER = [93.7, 97.0, 101.0, 105.0, 110.0, 116.0, 121.0, 125.0, 129.0, 133.0, 135.0]

SMALL_CONFIG = {
    "version": 1,
    "environment": {
        "interval_s": 10.0,
        "serverless_cost_per_s": 5.0e-5,
        "arrival_rate": 2.0,
        "episode_length": 12,
        "trace_intervals": 6,
        "seed": 3,
    },
    "hosts": [
        {"name": "small", "count": 2, "ips_capacity": 4000, "ram_capacity": 4, "disk_capacity": 32,
         "cost_per_hour": 0.0472, "power_table": SMALL_POWER},
        {"name": "large", "count": 2, "ips_capacity": 8000, "ram_capacity": 16, "disk_capacity": 64,
         "cost_per_hour": 0.189, "power_table": LARGE_POWER},
    ],
    "applications": [
        {"name": "heavy", "ips": [1500, 3000], "ram": [0.5, 1.5], "disk": [1, 4], "work": [20000, 60000]},
        {"name": "light", "ips": [300, 1000], "ram": [0.1, 0.5], "disk": [0.2, 1], "work": [3000, 20000]},
    ],
    "policies": {
        "set": ["round_robin", "best_fit", "gradient"],
        "params": {"gradient": {"steps": 10}},
    },
    "surrogate": {"embed_dim": 8, "heads": 2, "hidden": 8},
    "training": {"max_epochs": 5, "batch_size": 4, "lof_neighbors": 3},
}


@pytest.fixture
def small_config_dict():
    return copy.deepcopy(SMALL_CONFIG)


@pytest.fixture
def small_config(small_config_dict):
    return config_from_dict(small_config_dict)


@pytest.fixture
def specs():
    return [
        HostSpec("small", 4000.0, 4.0, 32.0, 0.0472 / 3600, tuple(SMALL_POWER)),
        HostSpec("large", 8000.0, 16.0, 64.0, 0.189 / 3600, tuple(LARGE_POWER)),
    ]


@pytest.fixture
def apps():
    return [
        AppProfile("heavy", (1500.0, 3000.0), (0.5, 1.5), (1.0, 4.0), (20000.0, 60000.0)),
        AppProfile("light", (300.0, 1000.0), (0.1, 0.5), (0.2, 1.0), (3000.0, 20000.0)),
    ]


@pytest.fixture
def env_config():
    return EnvConfig(interval_s=10.0, arrival_rate=2.0, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
