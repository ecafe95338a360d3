"""
Trace collection for MetaNet training: one episode per policy, one
datapoint per interval, stored as JSON-Lines.
"""
import json
import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.neighbors import LocalOutlierFactor

from .data_classes import Datapoint
from .environment import CloudEnvironment
from .exceptions import ConfigError, PolicyError, ScheduleValidationError
from .policies import Policy
from .surrogate import scale_features

logger = logging.getLogger(__name__)

COEFF_FLOOR = 1e-12


def collect_dataset(env: CloudEnvironment, policies: Sequence[Policy], gamma: int) -> List[Datapoint]:
    """
    Run every policy for gamma intervals on its own clone of env.

    Each datapoint pairs the state observed at the start of the interval
    (zero hosts and no tasks on the first one) with the cost and scheduling
    time realised by the policy in that interval. A policy failure ends that
    policy's episode; datapoints gathered before it are kept.
    """
    if gamma < 1:
        raise ConfigError(f"Trace length must be >= 1, got {gamma}")
    data: List[Datapoint] = []
    for k, policy in enumerate(policies):
        episode = env.clone()
        for t in range(gamma):
            state = episode.observe()
            episode.begin_interval()
            try:
                out = policy.schedule(episode.problem())
                report = episode.step(out.decision, scheduling_time=out.omega)
            except (PolicyError, ScheduleValidationError) as e:
                logger.error(f"Policy '{policy.name}' failed at interval {t}: {e}; episode aborted")
                break
            W, H = scale_features(state, episode.specs)
            data.append(Datapoint(k=k, policy=policy.name, interval=t, W=W, H=H, S=list(state.S),
                                  phi=report.phi, omega=out.omega))
        logger.info(f"Collected {policy.name}: {sum(1 for d in data if d.k == k)} datapoints")
    return data


def datapoint_to_dict(dp: Datapoint) -> Dict:
    return {
        "k": dp.k,
        "policy": dp.policy,
        "interval": dp.interval,
        "W": dp.W.tolist(),
        "H": dp.H.tolist(),
        "S": [[int(i), int(j)] for i, j in dp.S],
        "phi": float(dp.phi),
        "omega": float(dp.omega),
    }


def datapoint_from_dict(data: Dict) -> Datapoint:
    W = np.array(data["W"], dtype=np.float64).reshape(-1, 3)
    H = np.array(data["H"], dtype=np.float64).reshape(-1, 3)
    return Datapoint(k=int(data["k"]), policy=data["policy"], interval=int(data["interval"]),
                     W=W, H=H, S=[(int(i), int(j)) for i, j in data["S"]],
                     phi=float(data["phi"]), omega=float(data["omega"]))


def save_dataset(data: Sequence[Datapoint], path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        for dp in data:
            f.write(json.dumps(datapoint_to_dict(dp), sort_keys=True) + "\n")
    logger.info(f"Wrote {len(data)} datapoints to {path}")


def load_dataset(path: str) -> List[Datapoint]:
    if not os.path.exists(path):
        raise ConfigError(f"Dataset file not found: {path}")
    with open(path) as f:
        return [datapoint_from_dict(json.loads(line)) for line in f if line.strip()]


def split_dataset(data: Sequence[Datapoint],
                  train_fraction: float,
                  rng: np.random.Generator) -> Tuple[List[Datapoint], List[Datapoint]]:
    """Random partition into training and validation parts."""
    order = rng.permutation(len(data))
    cut = int(round(train_fraction * len(data)))
    if len(data) > 1:
        cut = min(max(cut, 1), len(data) - 1)
    return [data[i] for i in order[:cut]], [data[i] for i in order[cut:]]


def lof_filter(points: np.ndarray,
               k_neighbors: int = 10,
               threshold: float = 1.5,
               standardize: bool = False) -> np.ndarray:
    """
    Inlier mask by Local Outlier Factor on the rows as given.

    Points whose LOF exceeds threshold are outliers. Repeated rows are
    scored once and share a verdict. With k_neighbors or fewer distinct rows
    nothing is filtered. standardize rescales each column to unit variance
    first.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if not len(points):
        return np.ones(0, dtype=bool)
    if standardize:
        std = points.std(axis=0)
        std[std == 0] = 1.0
        points = (points - points.mean(axis=0)) / std
    distinct, inverse = np.unique(points, axis=0, return_inverse=True)
    if len(distinct) <= k_neighbors:
        logger.warning(f"LOF needs more than {k_neighbors} distinct points, got {len(distinct)}; no filtering")
        return np.ones(len(points), dtype=bool)
    lof = LocalOutlierFactor(n_neighbors=k_neighbors, algorithm="brute")
    lof.fit(distinct)
    inlier = -lof.negative_outlier_factor_ <= threshold
    return inlier[np.asarray(inverse).reshape(-1)]


def denorm_coeffs(data: Sequence[Datapoint],
                  q: int,
                  rho: float,
                  k_neighbors: int = 10,
                  threshold: float = 1.5,
                  standardize: bool = False) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Per-policy maxima of phi, omega and phi + rho * omega over LOF inliers.

    Raises:
        ConfigError: a policy has no datapoints
    """
    phi_max, omega_max, score_max = np.zeros(q), np.zeros(q), np.zeros(q)
    for k in range(q):
        rows = np.array([[dp.phi, dp.omega] for dp in data if dp.k == k]).reshape(-1, 2)
        if not len(rows):
            raise ConfigError(f"No datapoints for policy index {k}")
        mask = lof_filter(rows, k_neighbors, threshold, standardize)
        if (~mask).any():
            logger.info(f"Policy {k}: {int((~mask).sum())} of {len(rows)} datapoints dropped as outliers")
        kept = rows[mask]
        phi_max[k] = max(kept[:, 0].max(), COEFF_FLOOR)
        omega_max[k] = max(kept[:, 1].max(), COEFF_FLOOR)
        score_max[k] = max((kept[:, 0] + rho * kept[:, 1]).max(), COEFF_FLOOR)
    return phi_max, omega_max, score_max


def policy_names(data: Sequence[Datapoint]) -> Optional[List[str]]:
    """Policy names by index, or None if the dataset disagrees with itself."""
    names: Dict[int, str] = {}
    for dp in data:
        if names.setdefault(dp.k, dp.policy) != dp.policy:
            return None
    if sorted(names) != list(range(len(names))):
        return None
    return [names[k] for k in range(len(names))]
