"""Exact tabular iteration loops: CAC, CVI, soft policy iteration and classic CPI.

Every loop returns a :class:`RunResult` whose ``records`` hold one
:class:`IterationRecord` per iteration.  Record ``k`` describes the update that
produced the greedy policy ``pi_{k+1}`` and the deployed policy after
interpolation.
"""

import functools
import math
from collections import deque
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Union

import numpy as np

from ._validation import check_distribution, check_policy, uniform_policy
from .cautious import (
    ZetaMovingState,
    estimate_M,
    interpolate,
    max_adv_diff,
    policy_distance,
    tv_bound,
    zeta_cac_update,
    zeta_exact,
)
from .mdp import occupancy_measure, policy_evaluation_exact
from .regularizers import (
    RegParams,
    boltzmann_greedy,
    entropy,
    regularization_bonus,
    soft_policy_evaluation,
    soft_value_iteration_oracle,
)

__all__ = [
    "Fixed",
    "Adaptive",
    "ExactLowerBound",
    "AlgoConfig",
    "IterationRecord",
    "RunResult",
    "run_cac",
    "run_cvi",
    "run_spi_shannon",
    "run_cpi_classic",
    "with_noisy_critic",
    "hard_value_iteration",
    "soft_optimal_policy",
]


@dataclass(frozen=True)
class Fixed:
    """Constant interpolation coefficient."""

    value: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError("fixed zeta must lie in [0, 1]")


@dataclass(frozen=True)
class Adaptive:
    """Moving-average coefficient; ``state`` holds the initial averages and rates."""

    state: ZetaMovingState = field(default_factory=ZetaMovingState)


@dataclass(frozen=True)
class ExactLowerBound:
    """Coefficient maximizing the improvement lower bound with exact quantities."""

    horizon_const: float = 1.0


ZetaMode = Union[Fixed, Adaptive, ExactLowerBound]


@dataclass(frozen=True)
class AlgoConfig:
    """Settings shared by the iteration loops.

    ``advantage`` selects the critic used for the improvement estimate ``M``:
    ``"soft"`` measures the gain in the regularized one-step objective (always
    nonnegative without noise), ``"task"`` uses the unregularized advantage of
    the deployed policy.  ``state_weighting="sampled"`` replaces the exact
    occupancy by visit counts from a FIFO window of on-policy states.

    ``stop_tol`` enables early stopping once the greedy policy is within that
    max-TV of the deployed one.  :func:`run_cac` also stops a noise-free exact
    run that has stalled (``zeta = 0`` with ``M <= 0``), since every later
    iteration would repeat it.  ``RunResult.stop_reason`` says which applied.
    """

    reg: RegParams = field(default_factory=RegParams)
    iterations: int = 100
    zeta_mode: ZetaMode = field(default_factory=Adaptive)
    eval_tol: float = 1e-10
    noise_sigma: float = 0.0
    seed: int = 0
    init_policy: Optional[np.ndarray] = None
    init_dist: Optional[np.ndarray] = None
    epsilon: float = 0.0
    advantage: str = "soft"
    evaluate_pre_interpolation: bool = False
    state_weighting: str = "exact"
    window: int = 1000
    samples_per_iter: int = 1000
    stop_tol: Optional[float] = None
    reference_policy: Optional[np.ndarray] = None
    track_optimum: bool = True
    keep_trace: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.eval_tol <= 0:
            raise ValueError("eval_tol must be positive")
        if self.advantage not in ("soft", "task"):
            raise ValueError("advantage must be 'soft' or 'task'")
        if self.state_weighting not in ("exact", "sampled"):
            raise ValueError("state_weighting must be 'exact' or 'sampled'")
        if self.window < 1 or self.samples_per_iter < 1:
            raise ValueError("window and samples_per_iter must be positive")
        if not isinstance(self.zeta_mode, (Fixed, Adaptive, ExactLowerBound)):
            raise TypeError(f"unsupported zeta mode {self.zeta_mode!r}")


@dataclass(frozen=True)
class IterationRecord:
    k: int
    return_J: float
    zeta: float
    m: float
    max_tv_consecutive: float
    max_kl_consecutive: float
    tv_bound_consecutive: float
    q_sup_norm_change: float
    dist_to_soft_optimal_policy: float

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class RunResult:
    records: list
    policy: np.ndarray
    q: np.ndarray
    greedy_policy: np.ndarray
    zeta_state: Optional[ZetaMovingState] = None
    trace: Optional[dict] = None
    stop_reason: str = "iterations"

    @property
    def returns(self):
        return np.array([r.return_J for r in self.records])


def hard_value_iteration(mdp, tol=1e-10, max_iter=100_000):
    """Standard value iteration; returns ``(Q*, deterministic greedy policy)``."""
    q = np.zeros(mdp.shape)
    for _ in range(max_iter):
        tq = mdp.reward + mdp.discount * mdp.next_expectation(q.max(axis=1))
        done = np.max(np.abs(tq - q)) <= tol
        q = tq
        if done:
            break
    pi = np.zeros(mdp.shape)
    pi[np.arange(mdp.num_states), q.argmax(axis=1)] = 1.0
    return q, pi


def soft_optimal_policy(mdp, kappa, tol=1e-10):
    return soft_value_iteration_oracle(mdp, kappa, tol=tol)[1]


class _Critic:
    """Exact evaluation plus optional Gaussian corruption of the Q tables."""

    def __init__(self, sigma, seed):
        self.sigma = sigma
        self.rng_noise, self.rng_states = (
            np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)
        )

    def corrupt(self, q):
        if self.sigma == 0:
            return q
        return q + self.sigma * self.rng_noise.standard_normal(q.shape)


class _StateWindow:
    """FIFO window of on-policy states; restarts from ``init`` w.p. ``1 - gamma``."""

    def __init__(self, mdp, init, size, rng):
        self.mdp = mdp
        self.init = init
        self.rng = rng
        self.buffer = deque(maxlen=size)
        self.state = int(rng.choice(mdp.num_states, p=init))

    def collect(self, pi, steps):
        mdp, rng = self.mdp, self.rng
        for _ in range(steps):
            self.buffer.append(self.state)
            a = rng.choice(mdp.num_actions, p=pi[self.state])
            if rng.random() > mdp.discount:
                self.state = int(rng.choice(mdp.num_states, p=self.init))
            else:
                self.state = int(rng.choice(mdp.num_states, p=mdp.transition[self.state, a]))
        return np.bincount(np.fromiter(self.buffer, dtype=np.intp), minlength=mdp.num_states)


def _setup(mdp, config):
    S, A = mdp.shape
    if config.init_policy is None:
        pi = uniform_policy(S, A)
    else:
        pi = check_policy(config.init_policy, S, A, name="init_policy").copy()
    init = (
        np.full(S, 1.0 / S)
        if config.init_dist is None
        else check_distribution(config.init_dist, S, name="init_dist")
    )
    return pi, init


def _reference(mdp, config, kappa):
    if not config.track_optimum:
        return None
    if config.reference_policy is not None:
        return check_policy(config.reference_policy, *mdp.shape, name="reference_policy")
    if kappa > 0:
        return soft_optimal_policy(mdp, kappa)
    return hard_value_iteration(mdp)[1]


def _tv(p, q):
    return float(0.5 * np.abs(p - q).sum(axis=1).max())


class _Recorder:
    def __init__(self, mdp, config, reference, init, bound_fn):
        self.mdp = mdp
        self.config = config
        self.reference = reference
        self.init = init
        self.bound_fn = bound_fn
        self.records = []
        self.trace = {"greedy": [], "deployed": [], "q": [], "zeta": []} if config.keep_trace else None

    def add(self, k, deployed, greedy, greedy_prev, zeta, m, q_new, q_old):
        _, v = policy_evaluation_exact(self.mdp, deployed, tol=self.config.eval_tol)
        dist = policy_distance(greedy, greedy_prev)
        rec = IterationRecord(
            k=k,
            return_J=float(self.init @ v),
            zeta=float(zeta),
            m=float(m),
            max_tv_consecutive=dist.max_tv,
            max_kl_consecutive=dist.max_kl,
            tv_bound_consecutive=self.bound_fn(max(k, 1)),
            q_sup_norm_change=float(np.max(np.abs(q_new - q_old))),
            dist_to_soft_optimal_policy=math.nan if self.reference is None else _tv(deployed, self.reference),
        )
        self.records.append(rec)
        if self.trace is not None:
            self.trace["greedy"].append(greedy)
            self.trace["deployed"].append(deployed)
            self.trace["q"].append(q_new)
            self.trace["zeta"].append(zeta)
        return rec


def _weights(mdp, pi, init, config, window):
    if window is None:
        return occupancy_measure(mdp, pi, init, tol=config.eval_tol)
    return window.collect(pi, config.samples_per_iter)


def _make_window(mdp, init, config, critic):
    if config.state_weighting != "sampled":
        return None
    return _StateWindow(mdp, init, config.window, critic.rng_states)


def _resolve(config, overrides):
    config = AlgoConfig() if config is None else config
    return replace(config, **overrides) if overrides else config


def run_cac(mdp, config=None, **overrides):
    """Cautious actor-critic with exact tabular evaluation.

    Each iteration ``k``:

    1. ``pi_{k+1} = boltzmann_greedy(pi~_k, Q_k)`` with the KL anchored at the
       deployed policy ``pi~_k``;
    2. the improvement estimate ``M`` is formed from ``Q_k`` under the
       occupancy of ``pi~_k`` and turned into ``zeta``;
    3. ``pi~_{k+1} = zeta pi_{k+1} + (1 - zeta) pi~_k``;
    4. ``Q_{k+1}`` is the regularized value of ``pi~_{k+1}`` (or of
       ``pi_{k+1}`` with ``evaluate_pre_interpolation``) anchored at ``pi~_k``.

    Keyword overrides replace fields of ``config``.
    """
    config = _resolve(config, overrides)
    reg = config.reg
    gamma, r_max = mdp.discount, mdp.r_max
    tol = config.eval_tol
    pi, init = _setup(mdp, config)
    critic = _Critic(config.noise_sigma, config.seed)
    window = _make_window(mdp, init, config, critic)
    mode = config.zeta_mode
    zstate = mode.state if isinstance(mode, Adaptive) else None

    recorder = _Recorder(
        mdp,
        config,
        _reference(mdp, config, reg.kappa),
        init,
        lambda k: tv_bound(reg, k, config.epsilon, r_max, gamma).bound,
    )
    q = soft_policy_evaluation(mdp, pi, pi, reg, tol=tol)
    greedy_prev = pi
    greedy = pi

    for k in range(config.iterations):
        greedy = boltzmann_greedy(pi, critic.corrupt(q), reg)

        weights = _weights(mdp, pi, init, config, window)
        if config.advantage == "soft":
            qa = critic.corrupt(q)
            v_a = np.sum(pi * qa, axis=1) + reg.kappa * entropy(pi)
            bonus = regularization_bonus(greedy, pi, reg)
        else:
            qa, _ = policy_evaluation_exact(mdp, pi, tol=tol)
            qa = critic.corrupt(qa)
            v_a = np.sum(pi * qa, axis=1)
            bonus = None
        m = estimate_M(greedy, qa, v_a, weights, bonus)

        if isinstance(mode, Fixed):
            zeta = mode.value
        elif isinstance(mode, Adaptive):
            zstate, zeta = zeta_cac_update(zstate, m)
        else:
            delta = max_adv_diff(greedy, qa, v_a, bonus)
            c_k = tv_bound(reg, max(k, 1), config.epsilon, r_max, gamma).c_k
            zeta = zeta_exact(m, delta, c_k, mode.horizon_const)

        deployed = interpolate(greedy, pi, zeta)
        target = greedy if config.evaluate_pre_interpolation else deployed
        q_new = soft_policy_evaluation(mdp, target, pi, reg, tol=tol)

        recorder.add(k, deployed, greedy, greedy_prev, zeta, m, q_new, q)
        gap = _tv(greedy, pi)
        # without noise or sampling, zeta = 0 with M <= 0 repeats forever
        stalled = critic.sigma == 0 and window is None and zeta == 0.0 and m <= 0
        pi, q, greedy_prev = deployed, q_new, greedy
        if config.stop_tol is not None and (gap <= config.stop_tol or stalled):
            reason = "converged" if gap <= config.stop_tol else "stalled"
            return RunResult(recorder.records, pi, q, greedy, zstate, recorder.trace, reason)

    return RunResult(recorder.records, pi, q, greedy, zstate, recorder.trace)


def run_cvi(mdp, reg=None, iterations=100, eval_tol=1e-10, **overrides):
    """Conservative value iteration: :func:`run_cac` with ``zeta`` fixed at 1."""
    reg = RegParams() if reg is None else reg
    if reg.tau <= 0:
        raise ValueError("CVI needs a positive KL weight tau")
    config = AlgoConfig(reg=reg, iterations=iterations, eval_tol=eval_tol, zeta_mode=Fixed(1.0))
    return run_cac(mdp, config, **overrides)


def run_spi_shannon(mdp, kappa=0.2, iterations=100, eval_tol=1e-10, **overrides):
    """Soft policy iteration with Shannon entropy only (tabular SAC analogue).

    Alternates ``pi_{k+1} = softmax(Q_k / kappa)`` and entropy-regularized
    evaluation of ``pi_{k+1}``.  Implemented independently of :func:`run_cac`.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    reg = RegParams(kappa, 0.0)
    config = _resolve(AlgoConfig(reg=reg, iterations=iterations, eval_tol=eval_tol, zeta_mode=Fixed(1.0)), overrides)
    pi, init = _setup(mdp, config)
    critic = _Critic(config.noise_sigma, config.seed)
    recorder = _Recorder(
        mdp,
        config,
        _reference(mdp, config, kappa),
        init,
        lambda k: tv_bound(reg, k, config.epsilon, mdp.r_max, mdp.discount).bound,
    )
    q = soft_policy_evaluation(mdp, pi, pi, reg, tol=eval_tol)
    greedy_prev = pi
    for k in range(config.iterations):
        logits = critic.corrupt(q) / kappa
        logits -= logits.max(axis=1, keepdims=True)
        new = np.exp(logits)
        new /= new.sum(axis=1, keepdims=True)

        d = occupancy_measure(mdp, pi, init, tol=eval_tol)
        qa = critic.corrupt(q)
        gain = np.sum((new - pi) * qa, axis=1) + kappa * (entropy(new) - entropy(pi))
        m = float(d @ gain / d.sum())

        q_new = soft_policy_evaluation(mdp, new, new, reg, tol=eval_tol)
        recorder.add(k, new, new, greedy_prev, 1.0, m, q_new, q)
        gap = _tv(new, pi)
        pi, q, greedy_prev = new, q_new, new
        if config.stop_tol is not None and gap <= config.stop_tol:
            return RunResult(recorder.records, pi, q, pi, None, recorder.trace, "converged")
    return RunResult(recorder.records, pi, q, pi, None, recorder.trace)


def _cpi_zeta(rule, m, delta, v, gamma):
    if isinstance(rule, Fixed):
        return rule.value
    if not isinstance(rule, ExactLowerBound):
        raise TypeError("CPI supports Fixed or ExactLowerBound zeta rules")
    if v < 1e-12:
        return 0.0
    # maximizer of zeta*M/(1-g) - zeta^2 * g * v * delta / (1-g)^2
    return zeta_exact(m, delta, 1.0 / v, (1.0 - gamma) / (4.0 * gamma))


def run_cpi_classic(mdp, iterations=100, zeta_rule=None, eval_tol=1e-10, **overrides):
    """Conservative policy iteration with a deterministic greedy target.

    ``pi' = argmax_a Q^{pi_k}`` (ties to the lowest action index) and
    ``pi_{k+1} = zeta pi' + (1 - zeta) pi_k``.  With
    ``ExactLowerBound`` the coefficient is
    ``(1 - gamma) M / (2 gamma v Delta)``, clipped to ``[0, 1]``, where ``M``
    is the occupancy-weighted expected advantage, ``v`` the max total
    variation and ``Delta`` the advantage spread; this choice makes the exact
    return nondecreasing.
    """
    zeta_rule = ExactLowerBound() if zeta_rule is None else zeta_rule
    config = _resolve(AlgoConfig(iterations=iterations, eval_tol=eval_tol, zeta_mode=zeta_rule), overrides)
    gamma = mdp.discount
    pi, init = _setup(mdp, config)
    critic = _Critic(config.noise_sigma, config.seed)
    recorder = _Recorder(mdp, config, _reference(mdp, config, 0.0), init, lambda k: 1.0)
    q, _ = policy_evaluation_exact(mdp, pi, tol=eval_tol)
    greedy_prev = pi
    rows = np.arange(mdp.num_states)
    for k in range(config.iterations):
        qn = critic.corrupt(q)
        target = np.zeros(mdp.shape)
        target[rows, qn.argmax(axis=1)] = 1.0

        d = occupancy_measure(mdp, pi, init, tol=eval_tol)
        v_pi = np.sum(pi * qn, axis=1)
        m = estimate_M(target, qn, v_pi, d)
        delta = max_adv_diff(target, qn, v_pi)
        zeta = _cpi_zeta(config.zeta_mode, m, delta, _tv(target, pi), gamma)

        deployed = interpolate(target, pi, zeta)
        q_new, _ = policy_evaluation_exact(mdp, deployed, tol=eval_tol)
        recorder.add(k, deployed, target, greedy_prev, zeta, m, q_new, q)
        gap = _tv(deployed, pi)
        pi, q, greedy_prev = deployed, q_new, target
        if config.stop_tol is not None and gap <= config.stop_tol:
            return RunResult(recorder.records, pi, q, greedy_prev, None, recorder.trace, "converged")
    return RunResult(recorder.records, pi, q, greedy_prev, None, recorder.trace)


def with_noisy_critic(run, sigma, seed):
    """Wrap one of the ``run_*`` loops so every evaluated Q gets N(0, sigma^2) noise."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")

    @functools.wraps(run)
    def noisy(*args, **kwargs):
        return run(*args, noise_sigma=sigma, seed=seed, **kwargs)

    return noisy
