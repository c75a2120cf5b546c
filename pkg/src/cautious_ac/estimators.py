"""scikit-learn style estimators wrapping the iteration loops.

``fit`` takes a :class:`~cautious_ac.mdp.TabularMdp` in place of a design
matrix; ``predict`` maps state indices to greedy actions of the learned policy.

>>> from cautious_ac.envs import make_chain
>>> est = CautiousActorCritic(n_iter=200).fit(make_chain(5))
>>> est.predict([0, 4]).tolist()
[1, 1]
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from .algorithms import (
    Adaptive,
    AlgoConfig,
    ExactLowerBound,
    Fixed,
    run_cac,
    run_cpi_classic,
    run_cvi,
    run_spi_shannon,
)
from .cautious import ZetaMovingState
from .mdp import TabularMdp, expected_return
from .regularizers import RegParams

__all__ = [
    "CautiousActorCritic",
    "ConservativeValueIteration",
    "SoftPolicyIteration",
    "ConservativePolicyIteration",
]


def _seed(random_state):
    if isinstance(random_state, (int, np.integer)):
        return int(random_state)
    return int(check_random_state(random_state).randint(np.iinfo(np.int32).max))


def _zeta_mode(zeta, state=None, horizon_const=1.0):
    if isinstance(zeta, str):
        if zeta == "adaptive":
            return Adaptive(state or ZetaMovingState())
        if zeta == "exact":
            return ExactLowerBound(horizon_const)
        raise ValueError(f"zeta must be 'adaptive', 'exact' or a number, got {zeta!r}")
    return Fixed(float(zeta))


class _TabularPolicyEstimator(BaseEstimator):
    def _check_mdp(self, mdp):
        if not isinstance(mdp, TabularMdp):
            raise TypeError(f"expected a TabularMdp, got {type(mdp).__name__}")
        return mdp

    def _store(self, mdp, result):
        self.policy_ = result.policy
        self.q_ = result.q
        self.greedy_policy_ = result.greedy_policy
        self.history_ = list(result.records)
        self.n_iter_ = len(result.records)
        self.n_states_, self.n_actions_ = mdp.shape
        return self

    def _states(self, states):
        check_is_fitted(self, "policy_")
        s = np.asarray(states)
        if s.ndim != 1 or not np.issubdtype(s.dtype, np.integer):
            raise ValueError("states must be a 1-d array of integer indices")
        if s.size and (s.min() < 0 or s.max() >= self.n_states_):
            raise ValueError(f"state indices must lie in [0, {self.n_states_})")
        return s

    def predict_proba(self, states):
        """Action probabilities of the learned policy, shape ``(len(states), A)``."""
        idx = self._states(states)
        return self.policy_[idx]

    def predict(self, states):
        """Most likely action per state; ties go to the lowest index."""
        return self.predict_proba(states).argmax(axis=1)

    def score(self, mdp, init=None):
        """Unregularized expected return of the learned policy on ``mdp``."""
        check_is_fitted(self, "policy_")
        return expected_return(self._check_mdp(mdp), self.policy_, init)


class CautiousActorCritic(_TabularPolicyEstimator):
    """Exact tabular cautious actor-critic.

    Parameters
    ----------
    kappa, tau : float
        Entropy and KL regularization weights.
    zeta : {"adaptive", "exact"} or float
        Interpolation rule: moving-average ratio, exact lower-bound maximizer,
        or a fixed coefficient in ``[0, 1]``.
    nu_a, nu_maxdiff, negative_constant :
        Moving-average settings for ``zeta="adaptive"``.
    n_iter : int
        Maximum number of iterations.
    stop_tol : float or None
        Stop once the greedy and deployed policies are within this max-TV.
    noise_sigma : float
        Scale of the Gaussian noise added to evaluated Q tables.
    advantage : {"soft", "task"}
        Critic used for the improvement estimate.
    random_state : int, RandomState or None
        Seeds the critic noise.
    """

    def __init__(
        self,
        kappa=0.2,
        tau=0.1,
        zeta="adaptive",
        nu_a=0.01,
        nu_maxdiff=0.001,
        negative_constant=None,
        horizon_const=1.0,
        n_iter=1000,
        eval_tol=1e-10,
        stop_tol=1e-9,
        noise_sigma=0.0,
        advantage="soft",
        evaluate_pre_interpolation=False,
        random_state=None,
    ):
        self.kappa = kappa
        self.tau = tau
        self.zeta = zeta
        self.nu_a = nu_a
        self.nu_maxdiff = nu_maxdiff
        self.negative_constant = negative_constant
        self.horizon_const = horizon_const
        self.n_iter = n_iter
        self.eval_tol = eval_tol
        self.stop_tol = stop_tol
        self.noise_sigma = noise_sigma
        self.advantage = advantage
        self.evaluate_pre_interpolation = evaluate_pre_interpolation
        self.random_state = random_state

    def fit(self, mdp, y=None):
        mdp = self._check_mdp(mdp)
        state = ZetaMovingState(nu_a=self.nu_a, nu_maxdiff=self.nu_maxdiff, negative_constant=self.negative_constant)
        config = AlgoConfig(
            reg=RegParams(self.kappa, self.tau),
            iterations=self.n_iter,
            zeta_mode=_zeta_mode(self.zeta, state, self.horizon_const),
            eval_tol=self.eval_tol,
            noise_sigma=self.noise_sigma,
            seed=_seed(self.random_state),
            advantage=self.advantage,
            evaluate_pre_interpolation=self.evaluate_pre_interpolation,
            stop_tol=self.stop_tol,
        )
        return self._store(mdp, run_cac(mdp, config))


class ConservativeValueIteration(_TabularPolicyEstimator):
    """Entropy- and KL-regularized value iteration (interpolation fixed at 1)."""

    def __init__(self, kappa=0.2, tau=0.1, n_iter=1000, eval_tol=1e-10, stop_tol=1e-9, noise_sigma=0.0, random_state=None):
        self.kappa = kappa
        self.tau = tau
        self.n_iter = n_iter
        self.eval_tol = eval_tol
        self.stop_tol = stop_tol
        self.noise_sigma = noise_sigma
        self.random_state = random_state

    def fit(self, mdp, y=None):
        mdp = self._check_mdp(mdp)
        result = run_cvi(
            mdp,
            RegParams(self.kappa, self.tau),
            self.n_iter,
            self.eval_tol,
            stop_tol=self.stop_tol,
            noise_sigma=self.noise_sigma,
            seed=_seed(self.random_state),
        )
        return self._store(mdp, result)


class SoftPolicyIteration(_TabularPolicyEstimator):
    """Shannon-entropy regularized policy iteration."""

    def __init__(self, kappa=0.2, n_iter=1000, eval_tol=1e-10, stop_tol=1e-9, noise_sigma=0.0, random_state=None):
        self.kappa = kappa
        self.n_iter = n_iter
        self.eval_tol = eval_tol
        self.stop_tol = stop_tol
        self.noise_sigma = noise_sigma
        self.random_state = random_state

    def fit(self, mdp, y=None):
        mdp = self._check_mdp(mdp)
        result = run_spi_shannon(
            mdp,
            self.kappa,
            self.n_iter,
            self.eval_tol,
            stop_tol=self.stop_tol,
            noise_sigma=self.noise_sigma,
            seed=_seed(self.random_state),
        )
        return self._store(mdp, result)


class ConservativePolicyIteration(_TabularPolicyEstimator):
    """Classic conservative policy iteration with a deterministic greedy target.

    ``zeta="exact"`` uses the coefficient that keeps the exact return
    nondecreasing; a float fixes it (1 gives plain policy iteration).
    """

    def __init__(self, zeta="exact", n_iter=1000, eval_tol=1e-10, stop_tol=0.0, noise_sigma=0.0, random_state=None):
        self.zeta = zeta
        self.n_iter = n_iter
        self.eval_tol = eval_tol
        self.stop_tol = stop_tol
        self.noise_sigma = noise_sigma
        self.random_state = random_state

    def fit(self, mdp, y=None):
        mdp = self._check_mdp(mdp)
        if self.zeta == "adaptive":
            raise ValueError("ConservativePolicyIteration supports zeta='exact' or a number")
        result = run_cpi_classic(
            mdp,
            self.n_iter,
            _zeta_mode(self.zeta),
            self.eval_tol,
            stop_tol=self.stop_tol,
            noise_sigma=self.noise_sigma,
            seed=_seed(self.random_state),
        )
        return self._store(mdp, result)
