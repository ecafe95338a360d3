"""
One-step-ahead host utilisation forecasts.
"""
import logging
from typing import Optional, Union

import numpy as np

logger = logging.getLogger(__name__)


def fit_ar(series: np.ndarray, order: int) -> Optional[np.ndarray]:
    """
    Least-squares AR(p) coefficients, most recent lag first.

    Returns None when the series is constant or the design is rank deficient.
    """
    series = np.asarray(series, dtype=np.float64)
    if len(series) < order + 1:
        raise ValueError(f"AR({order}) needs at least {order + 1} points, got {len(series)}")
    if np.ptp(series) == 0.0:
        return None
    rows = np.array([series[t - order:t][::-1] for t in range(order, len(series))])
    targets = series[order:]
    coeffs, _, rank, _ = np.linalg.lstsq(rows, targets, rcond=None)
    if rank < order:
        return None
    return coeffs


def ar_forecast(history: np.ndarray,
                order: int = 2,
                capacity: Union[float, np.ndarray] = 1.0) -> np.ndarray:
    """
    Predict next-interval utilisation of every host with a per-host AR(p) fit.

    Args:
        history: intervals x hosts utilisation series
        order: AR order p
        capacity: upper clamp, scalar or per host

    Returns:
        Per-host prediction clamped to [0, capacity]
    """
    history = np.asarray(history, dtype=np.float64)
    if history.ndim == 1:
        history = history[:, None]
    if history.shape[0] < order + 1:
        raise ValueError(f"AR({order}) forecast needs {order + 1} intervals of history, got {history.shape[0]}")
    predictions = np.empty(history.shape[1])
    for j in range(history.shape[1]):
        series = history[:, j]
        coeffs = fit_ar(series, order)
        if coeffs is None:
            predictions[j] = series[-1]
        else:
            predictions[j] = float(np.dot(coeffs, series[-order:][::-1]))
    return np.clip(predictions, 0.0, capacity)


def smoothing_forecast(history: np.ndarray,
                       alpha: float = 0.5,
                       capacity: Union[float, np.ndarray] = 1.0) -> np.ndarray:
    """Simple exponential smoothing per host; the final level is the forecast."""
    history = np.asarray(history, dtype=np.float64)
    if history.ndim == 1:
        history = history[:, None]
    if history.shape[0] == 0:
        raise ValueError("Smoothing forecast needs at least one interval of history")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"Smoothing factor must be in (0, 1], got {alpha}")
    level = history[0].copy()
    for row in history[1:]:
        level = alpha * row + (1.0 - alpha) * level
    return np.clip(level, 0.0, capacity)
