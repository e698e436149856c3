"""
Error statistics for Monte-Carlo runs
Pooled moments, per-time moments and the empirical CDF of |e|.
"""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import pandas as pd


@dataclass(frozen=True)
class PooledStats:
    std: float
    std_sample: float
    mean: float
    mean_abs: float
    max_abs: float
    n_samples: int

    @classmethod
    def empty(cls) -> "PooledStats":
        nan = float('nan')
        return cls(std=nan, std_sample=nan, mean=nan, mean_abs=nan, max_abs=nan, n_samples=0)


def pooled_stats(errors) -> PooledStats:
    """Moments over every sample; std is the population (ddof=0) value"""
    values = np.asarray(errors, dtype=float).ravel()
    values = values[np.isfinite(values)]
    if values.size == 0:
        return PooledStats.empty()
    return PooledStats(
        std=float(np.std(values, ddof=0)),
        std_sample=float(np.std(values, ddof=1)) if values.size > 1 else float('nan'),
        mean=float(np.mean(values)),
        mean_abs=float(np.mean(np.abs(values))),
        max_abs=float(np.max(np.abs(values))),
        n_samples=int(values.size),
    )


def per_time_stats(frame: pd.DataFrame, error_column: str) -> pd.DataFrame:
    """mean, std (ddof=0), mean |e| and count of one error column grouped by t"""
    data = frame[['t', error_column]].dropna()
    grouped = data.groupby('t')[error_column]
    out = pd.DataFrame({
        'mean': grouped.mean(),
        'std': grouped.std(ddof=0),
        'mean_abs': grouped.apply(lambda s: s.abs().mean()),
        'n': grouped.count(),
    })
    return out.reset_index()


def ecdf(errors) -> List[Tuple[float, float]]:
    """Step points of the ECDF of |e|, starting from (0, 0) and ending at probability 1"""
    values = np.sort(np.abs(np.asarray(errors, dtype=float).ravel()))
    values = values[np.isfinite(values)]
    if values.size == 0:
        return [(0.0, 0.0)]
    unique, counts = np.unique(values, return_counts=True)
    cumulative = np.cumsum(counts) / values.size
    points = [(0.0, 0.0)]
    points.extend((float(x), float(p)) for x, p in zip(unique, cumulative))
    points[-1] = (points[-1][0], 1.0)
    return points
