"""Policy interpolation and the interpolation-coefficient (zeta) rules."""

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from ._validation import check_policy
from .mdp import expected_advantage
from .regularizers import kl_divergence

__all__ = [
    "ZetaMovingState",
    "TvBound",
    "PolicyDistance",
    "interpolate",
    "max_adv_diff",
    "tv_bound",
    "zeta_exact",
    "zeta_cac_update",
    "estimate_M",
    "policy_distance",
]

DENOM_FLOOR = 1e-12


def _clip_ratio(num, den):
    if abs(den) < DENOM_FLOOR:
        return 1.0 if num > 0 else 0.0
    return float(min(max(num / den, 0.0), 1.0))


@dataclass(frozen=True)
class ZetaMovingState:
    """Moving averages driving the adaptive interpolation coefficient.

    Attributes
    ----------
    a_tilde : float
        Running estimate of the expected improvement ``M``.
    a_maxdiff : float
        Slower running estimate used as the scale in the ratio.
    nu_a, nu_maxdiff : float
        Averaging rates, with ``0 <= nu_maxdiff <= nu_a <= 1``.
    negative_constant : float or None
        Value ``a_tilde`` is reset to when ``M <= 0``.  ``None`` resets it to
        ``M`` itself.  Must be nonpositive when given.
    guard : bool
        Disable to drop the ``M <= 0`` branch entirely (ablation).
    """

    a_tilde: float = 0.0
    a_maxdiff: float = 0.0
    nu_a: float = 0.01
    nu_maxdiff: float = 0.001
    negative_constant: Optional[float] = None
    guard: bool = True

    def __post_init__(self):
        if not 0.0 <= self.nu_maxdiff <= self.nu_a <= 1.0:
            raise ValueError("need 0 <= nu_maxdiff <= nu_a <= 1")
        if self.negative_constant is not None and self.negative_constant > 0:
            raise ValueError("negative_constant must be <= 0")

    @property
    def zeta(self):
        return _clip_ratio(self.a_tilde, abs(self.a_maxdiff))


class TvBound(NamedTuple):
    b_k: float
    c_k: float
    bound: float


class PolicyDistance(NamedTuple):
    max_tv: float
    max_kl: float

    @property
    def kl_is_finite(self):
        return math.isfinite(self.max_kl)


def interpolate(pi_new, pi_old, zeta):
    """Convex combination ``zeta * pi_new + (1 - zeta) * pi_old``."""
    if not 0.0 <= zeta <= 1.0:
        raise ValueError(f"zeta must lie in [0, 1], got {zeta}")
    pi_new = check_policy(pi_new, name="pi_new")
    pi_old = check_policy(pi_old, *pi_new.shape, name="pi_old")
    if zeta == 1.0:
        return pi_new.copy()
    if zeta == 0.0:
        return pi_old.copy()
    return zeta * pi_new + (1.0 - zeta) * pi_old


def _state_advantage(pi_new, q, v, bonus):
    adv = expected_advantage(pi_new, q, v)
    if bonus is not None:
        adv = adv + np.asarray(bonus, dtype=np.float64)
    return adv


def max_adv_diff(pi_new, q, v, bonus=None):
    """Largest gap ``max_{s,s'} |A(s) - A(s')|`` of the per-state expected advantage.

    ``bonus`` is an optional per-state term added to the expected advantage
    (the regularizer difference when the advantage is measured in the soft
    objective).
    """
    adv = _state_advantage(pi_new, q, v, bonus)
    return float(adv.max() - adv.min())


def estimate_M(pi_next, q_prev, v_prev, state_weights, bonus=None):
    """Weighted mean over states of the expected advantage of ``pi_next``.

    ``state_weights`` are normalized to sum to one; pass the discounted
    occupancy of the previous policy for the exact quantity, or visit counts
    from an on-policy window for the sampled one.
    """
    w = np.asarray(state_weights, dtype=np.float64)
    if w.ndim != 1 or not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("state_weights must be a finite nonnegative vector")
    total = w.sum()
    if total <= 0:
        raise ValueError("state_weights are all zero")
    adv = _state_advantage(pi_next, q_prev, v_prev, bonus)
    if adv.shape != w.shape:
        raise ValueError(f"state_weights must have length {adv.shape[0]}")
    return float(w @ adv / total)


def tv_bound(params, k, epsilon=0.0, r_max=1.0, gamma=0.99):
    """Bound on the max total variation between consecutive regularized policies.

    ``B_k = eps beta (1 - gamma^k) / (1 - gamma)``,
    ``C_k = r_max beta sum_{j<k} alpha^j gamma^(k-j-1)``,
    bound ``sqrt(4 B_k + 2 C_k)``.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    if epsilon < 0 or r_max < 0:
        raise ValueError("epsilon and r_max must be nonnegative")
    a, b = params.alpha, params.beta
    b_k = epsilon * b * (1.0 - gamma**k) / (1.0 - gamma)
    j = np.arange(k, dtype=np.float64)
    # 0**0 == 1 keeps the alpha = 0 case exact
    c_k = r_max * b * float(np.sum(np.power(a, j) * np.power(gamma, k - j - 1)))
    return TvBound(float(b_k), c_k, math.sqrt(4.0 * b_k + 2.0 * c_k))


def zeta_exact(m, delta, c_k, horizon_const=1.0):
    """``clip(2 * horizon_const * c_k * m / delta, 0, 1)``.

    For ``delta`` below the floor the clip limit is returned: 1 when ``m > 0``,
    else 0.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if m <= 0:
        return 0.0
    return _clip_ratio(2.0 * horizon_const * c_k * m, delta)


def zeta_cac_update(state, m):
    """Advance the moving averages with a new improvement estimate ``m``.

    Returns the new :class:`ZetaMovingState` and the coefficient it implies.
    """
    m = float(m)
    if state.guard and m <= 0:
        a_tilde = m if state.negative_constant is None else state.negative_constant
    else:
        a_tilde = (1.0 - state.nu_a) * state.a_tilde + state.nu_a * m
    a_maxdiff = (1.0 - state.nu_maxdiff) * state.a_maxdiff + state.nu_maxdiff * m
    new = replace(state, a_tilde=a_tilde, a_maxdiff=a_maxdiff)
    zeta = 0.0 if (state.guard and m <= 0) else new.zeta
    return new, zeta


def policy_distance(p, q):
    """Worst-state total variation and KL divergence ``KL(p || q)``.

    ``max_kl`` is ``inf`` when some state of ``p`` leaves the support of ``q``.
    """
    p = check_policy(p, name="p")
    q = check_policy(q, *p.shape, name="q")
    tv = 0.5 * np.abs(p - q).sum(axis=1)
    return PolicyDistance(float(tv.max()), float(kl_divergence(p, q).max()))
