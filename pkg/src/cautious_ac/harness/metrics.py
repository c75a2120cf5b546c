"""Performance-oscillation statistics of a learning curve."""

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["OscillationReport", "oscillation_metrics", "DIVISORS"]

DIVISORS = ("drops", "steps")


@dataclass(frozen=True)
class OscillationReport:
    """Size of the return drops along a sequence of evaluations.

    Attributes
    ----------
    sup_drop : float
        Largest single drop ``max |R_{k+1} - R_k|`` over drop indices.
    rms_drop : float
        Root of the summed squared drops divided by ``num_drops`` (or by
        ``num_steps`` when computed with ``divisor="steps"``).
    num_drops : int
    num_steps : int
        Number of consecutive pairs, ``len(returns) - 1``.
    """

    sup_drop: float
    rms_drop: float
    num_drops: int
    num_steps: int
    divisor: str = "drops"


def oscillation_metrics(returns, divisor="drops"):
    """Sup and RMS of the decreases ``R_{k+1} - R_k < 0`` in ``returns``.

    Returns zeros when the sequence never decreases.

    Examples
    --------
    >>> oscillation_metrics([0, 3, 1, 2]).rms_drop
    2.0
    """
    if divisor not in DIVISORS:
        raise ValueError(f"divisor must be one of {DIVISORS}")
    r = np.asarray(returns, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise ValueError("need a sequence of at least two returns")
    if not np.all(np.isfinite(r)):
        raise ValueError("returns must be finite")
    diffs = np.diff(r)
    drops = -diffs[diffs < 0]
    steps = diffs.size
    if drops.size == 0:
        return OscillationReport(0.0, 0.0, 0, steps, divisor)
    n = drops.size if divisor == "drops" else steps
    rms = math.sqrt(float(np.sum(drops**2)) / n)
    return OscillationReport(float(drops.max()), rms, int(drops.size), steps, divisor)
