from dataclasses import dataclass

import numpy as np
import pandas as pd

from core.errors import SeriesTooShortError

MIN_SAMPLES = 200
WINDOW_FRACTION = 0.05
TAIL_FRACTION = 0.5


@dataclass
class LimsupEstimate:
    limsup: float
    tail_mean: float
    window: int
    length: int


def limsup_estimate(series, min_samples: int = MIN_SAMPLES, window_fraction: float = WINDOW_FRACTION,
                    tail_fraction: float = TAIL_FRACTION) -> LimsupEstimate:
    """
    Finite-horizon proxy for limsup: the largest moving average (window = 5%
    of the series) over the final half, together with the plain tail mean.
    """
    values = np.asarray(series, dtype=float)
    n = values.size
    if n < min_samples:
        raise SeriesTooShortError(f"limsup estimate needs at least {min_samples} samples, got {n}", n)
    window = max(int(round(window_fraction * n)), 1)
    tail = pd.Series(values[n - int(round(tail_fraction * n)):])
    rolling = tail.rolling(window).mean().dropna()
    return LimsupEstimate(
        limsup=float(rolling.max()),
        tail_mean=float(tail.mean()),
        window=window,
        length=n,
    )


def tail_average(series, tail_fraction: float = TAIL_FRACTION) -> float:
    values = np.asarray(series, dtype=float)
    return float(np.mean(values[values.size - max(int(round(tail_fraction * values.size)), 1):]))
