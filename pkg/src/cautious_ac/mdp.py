"""Finite MDPs and exact (dynamic-programming) evaluation primitives.

Tables follow one layout throughout the package:

* transition ``P[s, a, s']``, reward ``R[s, a]``
* policies ``pi[s, a]`` with rows on the probability simplex
* ``Q[s, a]`` and ``V[s]`` in reward units

Evaluation solves the Bellman linear system directly and then polishes the
result with fixed-point sweeps until the sup-norm residual is below ``tol``.
``method="iterative"`` runs plain (optionally damped) sweeps from ``Q = 0``
instead, and is what the tests use as an independent route.
"""

import threading
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._validation import check_distribution, check_policy, check_table

__all__ = [
    "ConvergenceError",
    "TabularMdp",
    "policy_evaluation_exact",
    "advantage",
    "expected_advantage",
    "occupancy_measure",
    "expected_return",
    "mixture_occupancy_policy",
]

ROW_ATOL = 1e-12
MIXTURE_FLOOR = 1e-12
# above this many states the transition kernel is handled as a sparse matrix
SPARSE_STATES = 200


class ConvergenceError(RuntimeError):
    """A fixed-point iteration stopped before reaching its tolerance."""

    def __init__(self, message, residual, iterations):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """A finite discounted MDP ``(S, A, P, R, gamma)``.

    Parameters
    ----------
    transition : array of shape (S, A, S)
        ``transition[s, a, s']`` is the probability of moving to ``s'``.
    reward : array of shape (S, A)
    discount : float in (0, 1)
    r_max : float, optional
        Bound on ``|R|``; defaults to ``max |R|``.
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    r_max: float = None
    name: str = field(default="mdp", compare=False)

    def __post_init__(self):
        P = np.array(self.transition, dtype=np.float64)
        R = np.array(self.reward, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        if R.shape != P.shape[:2]:
            raise ValueError(f"reward must have shape {P.shape[:2]}, got {R.shape}")
        if P.shape[0] < 1 or P.shape[1] < 1:
            raise ValueError("need at least one state and one action")
        if not np.all(np.isfinite(P)) or np.any(P < 0):
            raise ValueError("transition probabilities must be finite and nonnegative")
        row_err = np.max(np.abs(P.sum(axis=2) - 1.0))
        if row_err > ROW_ATOL:
            raise ValueError(f"transition rows must sum to 1 (max error {row_err:.3e})")
        if not np.all(np.isfinite(R)):
            raise ValueError("rewards must be finite")
        gamma = float(self.discount)
        if not 0.0 < gamma < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {gamma}")
        r_max = float(np.max(np.abs(R))) if self.r_max is None else float(self.r_max)
        if r_max < 0 or np.max(np.abs(R)) > r_max * (1 + 1e-12):
            raise ValueError(f"|R| exceeds r_max={r_max}")
        P.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "discount", gamma)
        object.__setattr__(self, "r_max", r_max)
        # last factorization of (I - gamma P_pi), keyed by the policy bytes
        object.__setattr__(self, "_lu_cache", (None, None))
        object.__setattr__(self, "_lu_lock", threading.Lock())

    @property
    def num_states(self):
        return self.transition.shape[0]

    @property
    def num_actions(self):
        return self.transition.shape[1]

    @property
    def shape(self):
        return self.reward.shape

    @cached_property
    def _csr(self):
        S, A = self.shape
        return sp.csr_matrix(self.transition.reshape(S * A, S))

    @property
    def is_sparse(self):
        return self.num_states > SPARSE_STATES

    def next_expectation(self, v):
        """Left operator ``(P v)(s, a) = sum_s' P(s'|s,a) v(s')``."""
        if self.is_sparse:
            return (self._csr @ v).reshape(self.shape)
        return self.transition @ v

    def state_kernel(self, pi):
        """Policy-averaged kernel ``P_pi[s, s']`` (sparse for large MDPs)."""
        S, A = self.shape
        if self.is_sparse:
            rows = np.repeat(np.arange(S), A)
            agg = sp.csr_matrix((pi.ravel(), (rows, np.arange(S * A))), shape=(S, S * A))
            return (agg @ self._csr).tocsc()
        return np.einsum("sa,sat->st", pi, self.transition)

    def _factor(self, pi):
        key = np.ascontiguousarray(pi, dtype=np.float64).tobytes()
        with self._lu_lock:
            cached_key, lu = self._lu_cache
        if cached_key == key:
            return lu
        K = self.state_kernel(pi)
        if self.is_sparse:
            lu = spla.splu(sp.identity(self.num_states, format="csc") - self.discount * K)
        else:
            lu = sla.lu_factor(np.eye(self.num_states) - self.discount * K)
        with self._lu_lock:
            object.__setattr__(self, "_lu_cache", (key, lu))
        return lu

    def solve_discounted(self, pi, rhs, transpose=False):
        """Solve ``(I - gamma P_pi) x = rhs`` (or its transpose)."""
        lu = self._factor(pi)
        if self.is_sparse:
            return lu.solve(np.asarray(rhs, dtype=np.float64), trans="T" if transpose else "N")
        return sla.lu_solve(lu, rhs, trans=1 if transpose else 0)


def _check_pair(mdp, pi):
    return check_policy(pi, mdp.num_states, mdp.num_actions)


def _bellman(mdp, pi, q, bonus):
    w = np.sum(pi * q, axis=1)
    if bonus is not None:
        w = w + bonus
    return mdp.reward + mdp.discount * mdp.next_expectation(w)


def _evaluate(mdp, pi, bonus=None, tol=1e-10, max_iter=100_000, method="direct", damping=1.0):
    """Fixed point of ``Q = R + gamma P (E_pi Q + bonus)``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    if method == "direct":
        rhs = np.sum(pi * mdp.reward, axis=1)
        if bonus is not None:
            rhs = rhs + bonus
        w = mdp.solve_discounted(pi, rhs)
        q = mdp.reward + mdp.discount * mdp.next_expectation(w)
    elif method == "iterative":
        q = np.zeros(mdp.shape)
    else:
        raise ValueError(f"unknown evaluation method {method!r}")

    residual = np.inf
    for it in range(max_iter + 1):
        tq = _bellman(mdp, pi, q, bonus)
        residual = float(np.max(np.abs(tq - q)))
        if residual <= tol:
            return q
        if it == max_iter:
            break
        q = tq if damping == 1.0 else (1.0 - damping) * q + damping * tq
    raise ConvergenceError("policy evaluation did not converge", residual, max_iter)


def policy_evaluation_exact(mdp, policy, tol=1e-10, max_iter=100_000, method="direct", damping=1.0):
    """Unregularized action and state values of ``policy``.

    Returns
    -------
    q : ndarray of shape (S, A)
        Satisfies ``Q = R + gamma P (sum_a pi Q)`` with sup-norm residual <= tol.
    v : ndarray of shape (S,)
        ``V(s) = sum_a pi(a|s) Q(s, a)``.

    Raises
    ------
    ConvergenceError
        If the residual is still above ``tol`` after ``max_iter`` sweeps.
    """
    pi = _check_pair(mdp, policy)
    q = _evaluate(mdp, pi, None, tol, max_iter, method, damping)
    return q, np.sum(pi * q, axis=1)


def advantage(q, v):
    """``A(s, a) = Q(s, a) - V(s)``."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if q.ndim != 2 or v.shape != q.shape[:1]:
        raise ValueError(f"shape mismatch between Q {q.shape} and V {v.shape}")
    return q - v[:, None]


def expected_advantage(pi_new, q, v):
    """Per-state expected advantage ``sum_a pi_new(a|s) Q(s, a) - V(s)``."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    pi_new = check_policy(pi_new, *q.shape)
    if v.shape != q.shape[:1]:
        raise ValueError(f"shape mismatch between Q {q.shape} and V {v.shape}")
    return np.sum(pi_new * q, axis=1) - v


def _initial(mdp, init):
    if init is None:
        return np.full(mdp.num_states, 1.0 / mdp.num_states)
    return check_distribution(init, mdp.num_states, name="init")


def occupancy_measure(mdp, policy, init=None, tol=1e-10, max_iter=100_000, method="direct"):
    """Unnormalized discounted state occupancy ``d(s) = sum_t gamma^t P(s_t = s)``.

    The weights sum to ``1 / (1 - gamma)``. ``init`` defaults to uniform.
    """
    pi = _check_pair(mdp, policy)
    mu = _initial(mdp, init)
    gamma = mdp.discount
    if method == "direct":
        d = np.asarray(mdp.solve_discounted(pi, mu, transpose=True), dtype=np.float64)
    elif method == "iterative":
        d = np.zeros_like(mu)
    else:
        raise ValueError(f"unknown occupancy method {method!r}")

    K = mdp.state_kernel(pi)
    residual = np.inf
    for it in range(max_iter + 1):
        nxt = mu + gamma * (K.T @ d)
        residual = float(np.max(np.abs(nxt - d)))
        if residual <= tol:
            break
        if it == max_iter:
            raise ConvergenceError("occupancy iteration did not converge", residual, max_iter)
        d = nxt
    return np.maximum(d, 0.0)


def expected_return(mdp, policy, init=None, tol=1e-10):
    """``J = sum_s init(s) V(s)`` for the unregularized values of ``policy``."""
    _, v = policy_evaluation_exact(mdp, policy, tol=tol)
    return float(_initial(mdp, init) @ v)


def mixture_occupancy_policy(mdp, policies, weights, init=None, floor=MIXTURE_FLOOR):
    """Policy whose state-action occupancy is the weighted mixture of occupancies.

    ``pi'(a|s) = sum_i w_i d_i(s) pi_i(a|s) / sum_i w_i d_i(s)``; states where
    the denominator falls below ``floor`` get the uniform distribution.
    """
    policies = [_check_pair(mdp, p) for p in policies]
    if not policies:
        raise ValueError("need at least one policy")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(policies),):
        raise ValueError("one weight per policy is required")
    check_distribution(w, name="weights")

    num = np.zeros(mdp.shape)
    den = np.zeros(mdp.num_states)
    for wi, pi in zip(w, policies):
        if wi == 0.0:
            continue
        d = occupancy_measure(mdp, pi, init)
        num += wi * d[:, None] * pi
        den += wi * d
    out = np.full(mdp.shape, 1.0 / mdp.num_actions)
    ok = den > floor
    out[ok] = num[ok] / den[ok, None]
    return out / out.sum(axis=1, keepdims=True)
