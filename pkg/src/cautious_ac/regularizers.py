"""Entropy- and KL-regularized operators on tabular policies.

The regularized objective at a state is

    E_pi[Q(s, .)] + I(s),   I(s) = kappa * H(pi(.|s)) - tau * KL(pi(.|s) || pi_base(.|s))

whose maximizer over the simplex is the Boltzmann policy

    pi(a|s) ∝ pi_base(a|s) ** (tau / (kappa + tau)) * exp(Q(s, a) / (kappa + tau)).

All normalizations are done in log space with per-row max subtraction.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax, xlogy

from ._validation import check_policy, check_table
from .mdp import ConvergenceError, _evaluate

__all__ = [
    "InfiniteKLError",
    "RegParams",
    "entropy",
    "kl_divergence",
    "regularization_bonus",
    "boltzmann_greedy",
    "soft_policy_evaluation",
    "soft_bellman_sweeps",
    "soft_value_iteration_oracle",
    "log_z_exact",
    "z_exact",
    "z_monte_carlo",
    "log_z_monte_carlo",
]

PROB_FLOOR = 1e-300


class InfiniteKLError(ValueError):
    """The new policy puts mass where the base policy has none."""


@dataclass(frozen=True)
class RegParams:
    """Shannon (``kappa``) and KL (``tau``) regularization weights.

    ``alpha = kappa / (kappa + tau)`` and ``beta = 1 / (kappa + tau)`` are the
    coefficients entering the consecutive-policy TV bound.  The Boltzmann step
    raises the base policy to ``base_power = tau / (kappa + tau)``, the weight
    the KL term carries; ``alpha + base_power == 1``.
    """

    kappa: float = 0.2
    tau: float = 0.1

    def __post_init__(self):
        k, t = float(self.kappa), float(self.tau)
        if not (np.isfinite(k) and np.isfinite(t)) or k < 0 or t < 0 or k + t <= 0:
            raise ValueError(f"need kappa >= 0, tau >= 0, kappa + tau > 0; got ({k}, {t})")
        object.__setattr__(self, "kappa", k)
        object.__setattr__(self, "tau", t)

    @property
    def alpha(self):
        return self.kappa / (self.kappa + self.tau)

    @property
    def beta(self):
        return 1.0 / (self.kappa + self.tau)

    @property
    def base_power(self):
        return self.tau / (self.kappa + self.tau)


def entropy(pi):
    """Row-wise Shannon entropy with ``0 log 0 = 0``."""
    return -np.sum(xlogy(pi, pi), axis=-1)


def kl_divergence(p, q, floor=PROB_FLOOR):
    """Row-wise ``KL(p || q)``; ``inf`` where ``p > floor`` but ``q < floor``."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    support = p > floor
    bad = np.any(support & (q < floor), axis=-1)
    safe_q = np.where(support, np.maximum(q, floor), 1.0)
    terms = np.where(support, p * (np.log(np.where(support, p, 1.0)) - np.log(safe_q)), 0.0)
    out = terms.sum(axis=-1)
    return np.where(bad, np.inf, out)


def regularization_bonus(pi_new, pi_base, params):
    """Per-state bonus ``kappa H(pi_new) - tau KL(pi_new || pi_base)``.

    Raises
    ------
    InfiniteKLError
        If ``tau > 0`` and ``pi_new`` has mass outside the support of ``pi_base``.
    """
    pi_new = check_policy(pi_new, name="pi_new")
    pi_base = check_policy(pi_base, *pi_new.shape, name="pi_base")
    bonus = params.kappa * entropy(pi_new)
    if params.tau > 0:
        kl = kl_divergence(pi_new, pi_base)
        if np.any(np.isinf(kl)):
            raise InfiniteKLError("pi_new is not absolutely continuous w.r.t. pi_base")
        bonus = bonus - params.tau * kl
    return bonus


def _boltzmann_logits(pi_base, q, params):
    logits = params.beta * q
    if params.base_power > 0:
        with np.errstate(divide="ignore"):
            logits = logits + params.base_power * np.log(pi_base)
    return logits


def boltzmann_greedy(pi_base, q, params):
    """Maximizer of ``E_pi[Q] + I`` relative to ``pi_base``, row by row."""
    q = np.asarray(q, dtype=np.float64)
    pi_base = check_policy(pi_base, *q.shape, name="pi_base")
    check_table(q, pi_base.shape, "q")
    logits = _boltzmann_logits(pi_base, q, params)
    assert np.all(np.isfinite(logits.max(axis=1))), "row with no admissible action"
    return softmax(logits, axis=1)


def soft_policy_evaluation(mdp, pi_new, pi_base, params, tol=1e-10, max_iter=100_000, method="direct"):
    """Regularized action values of ``pi_new`` with the KL anchored at ``pi_base``.

    Fixed point of ``Q = R + gamma P (E_{pi_new} Q + I)`` where ``I`` is
    :func:`regularization_bonus` of ``(pi_new, pi_base)``.
    """
    pi_new = check_policy(pi_new, mdp.num_states, mdp.num_actions, name="pi_new")
    bonus = regularization_bonus(pi_new, pi_base, params)
    return _evaluate(mdp, pi_new, bonus, tol, max_iter, method)


def _soft_backup(mdp, q, kappa):
    v = kappa * logsumexp(q / kappa, axis=1)
    return mdp.reward + mdp.discount * mdp.next_expectation(v)


def soft_bellman_sweeps(mdp, kappa, q_init=None):
    """Yield ``(q, residual)`` for successive soft Bellman optimality sweeps."""
    q = np.zeros(mdp.shape) if q_init is None else np.array(q_init, dtype=np.float64)
    while True:
        tq = _soft_backup(mdp, q, kappa)
        residual = float(np.max(np.abs(tq - q)))
        yield q, residual
        q = tq


def soft_value_iteration_oracle(mdp, kappa, tol=1e-10, max_iter=100_000, q_init=None):
    """Entropy-regularized optimal ``Q*`` and ``pi* = softmax(Q*/kappa)`` by value iteration.

    ``V(s) = kappa log sum_a exp(Q(s, a) / kappa)`` is evaluated with a stable
    log-sum-exp.  This is deliberately a different algorithm from the policy
    iteration loops it is used to check.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    for it, (q, residual) in enumerate(soft_bellman_sweeps(mdp, kappa, q_init)):
        if residual <= tol:
            return q, softmax(q / kappa, axis=1)
        if it >= max_iter:
            raise ConvergenceError("soft value iteration did not converge", residual, it)


def log_z_exact(pi_base, q, params, s):
    """``log Z(s) = log sum_a pi_base(a|s)^p exp(beta Q(s, a))``."""
    pi_base = check_policy(pi_base, name="pi_base")
    q = check_table(q, pi_base.shape, "q")
    return float(logsumexp(_boltzmann_logits(pi_base[s], q[s], params)))


def z_exact(pi_base, q, params, s):
    """Normalization factor of the Boltzmann greedy policy at state ``s``."""
    return float(np.exp(log_z_exact(pi_base, q, params, s)))


def _log_weights(pi_base, q, params, s, proposal, n, seed):
    pi_base = check_policy(pi_base, name="pi_base")
    q = check_table(q, pi_base.shape, "q")
    proposal = pi_base if proposal is None else check_policy(proposal, *pi_base.shape, name="proposal")
    if n < 1:
        raise ValueError("n must be a positive integer")
    log_f = _boltzmann_logits(pi_base[s], q[s], params)
    qs = proposal[s]
    if np.any((qs <= 0) & np.isfinite(log_f)):
        raise ValueError("proposal is zero where the integrand is positive")
    rng = np.random.default_rng(seed)
    acts = rng.choice(qs.shape[0], size=n, p=qs)
    return log_f[acts] - np.log(qs[acts])


def z_monte_carlo(pi_base, q, params, s, proposal=None, n=1024, seed=None):
    """Importance-sampling estimate of ``Z(s)`` with actions drawn from ``proposal``.

    ``proposal`` defaults to ``pi_base``.  The estimate is the plain average of
    ``pi_base^p exp(beta Q) / proposal`` over ``n`` sampled actions, so it is
    unbiased and deterministic for a fixed ``seed``.
    """
    return float(np.mean(np.exp(_log_weights(pi_base, q, params, s, proposal, n, seed))))


def log_z_monte_carlo(pi_base, q, params, s, proposal=None, n=1024, seed=None):
    """``log`` of :func:`z_monte_carlo`, computed without leaving log space."""
    lw = _log_weights(pi_base, q, params, s, proposal, n, seed)
    return float(logsumexp(lw) - np.log(n))
