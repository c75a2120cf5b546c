"""Seeded constructors for :class:`~cautious_ac.mdp.TabularMdp` instances."""

from dataclasses import dataclass, field

import numpy as np

from .mdp import TabularMdp

__all__ = [
    "EnvSpec",
    "make_env",
    "make_random_mdp",
    "make_chain",
    "make_gridworld",
    "make_discretized_pendulum",
    "PendulumGrid",
    "angle_normalize",
    "pendulum_step",
    "pendulum_cost",
]


def make_random_mdp(num_states, num_actions, branching=None, seed=0, discount=0.99):
    """Garnet-style random MDP.

    Each ``(s, a)`` moves to ``branching`` distinct successors drawn uniformly,
    with Dirichlet(1) probabilities.  Rewards are uniform on ``[-1, 1]`` and
    ``r_max = 1``.
    """
    branching = num_states if branching is None else branching
    if num_states < 1 or num_actions < 1:
        raise ValueError("num_states and num_actions must be positive")
    if not 1 <= branching <= num_states:
        raise ValueError("branching must lie in [1, num_states]")
    rng = np.random.default_rng(seed)
    P = np.zeros((num_states, num_actions, num_states))
    for s in range(num_states):
        for a in range(num_actions):
            succ = rng.choice(num_states, size=branching, replace=False)
            P[s, a, succ] = rng.dirichlet(np.ones(branching))
    P /= P.sum(axis=2, keepdims=True)
    R = rng.uniform(-1.0, 1.0, size=(num_states, num_actions))
    return TabularMdp(P, R, discount, r_max=1.0, name=f"random-{num_states}x{num_actions}-s{seed}")


def make_chain(n, slip_prob=0.0, discount=0.99):
    """Chain of ``n`` states with actions 0 = left, 1 = right.

    The intended move happens with probability ``1 - slip_prob``, the opposite
    move otherwise; moves past either end stay put.  Reward is 1 for any action
    taken in the rightmost state and 0 elsewhere, so ``r_max = 1``.
    """
    if n < 2:
        raise ValueError("chain needs n >= 2")
    if not 0.0 <= slip_prob <= 1.0:
        raise ValueError("slip_prob must lie in [0, 1]")
    P = np.zeros((n, 2, n))
    for s in range(n):
        left, right = max(s - 1, 0), min(s + 1, n - 1)
        P[s, 0, left] += 1.0 - slip_prob
        P[s, 0, right] += slip_prob
        P[s, 1, right] += 1.0 - slip_prob
        P[s, 1, left] += slip_prob
    R = np.zeros((n, 2))
    R[n - 1, :] = 1.0
    return TabularMdp(P, R, discount, r_max=1.0, name=f"chain-{n}")


GRID_MOVES = ((0, -1), (0, 1), (-1, 0), (1, 0))  # up, down, left, right as (dx, dy)


def make_gridworld(width, height, goal=None, step_cost=1.0, discount=0.99):
    """Deterministic gridworld with 4 moves and an absorbing goal.

    State index is ``y * width + x``.  Moves into the border leave the agent in
    place.  Every action outside the goal costs ``step_cost`` (reward
    ``-step_cost``); the goal absorbs with reward 0.  The optimal value is
    ``-step_cost (1 - gamma^d) / (1 - gamma)`` with ``d`` the Manhattan
    distance to the goal.
    """
    if width < 1 or height < 1:
        raise ValueError("grid dimensions must be positive")
    if step_cost < 0:
        raise ValueError("step_cost must be nonnegative")
    gx, gy = (width - 1, height - 1) if goal is None else goal
    if not (0 <= gx < width and 0 <= gy < height):
        raise ValueError(f"goal {goal} lies outside the {width}x{height} grid")
    S = width * height
    g = gy * width + gx
    P = np.zeros((S, 4, S))
    R = np.full((S, 4), -float(step_cost))
    for y in range(height):
        for x in range(width):
            s = y * width + x
            for a, (dx, dy) in enumerate(GRID_MOVES):
                if s == g:
                    P[s, a, s] = 1.0
                    continue
                nx = min(max(x + dx, 0), width - 1)
                ny = min(max(y + dy, 0), height - 1)
                P[s, a, ny * width + nx] = 1.0
    R[g, :] = 0.0
    return TabularMdp(P, R, discount, r_max=float(step_cost), name=f"grid-{width}x{height}")


def angle_normalize(x):
    return (x + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class PendulumGrid:
    """Grid geometry of a discretized pendulum; ``theta = 0`` is upright."""

    theta_bins: int = 31
    thetadot_bins: int = 31
    torque_levels: int = 5
    max_speed: float = 8.0
    max_torque: float = 2.0

    @property
    def thetas(self):
        return angle_normalize(2 * np.pi * np.arange(self.theta_bins) / self.theta_bins)

    @property
    def thetadots(self):
        return np.linspace(-self.max_speed, self.max_speed, self.thetadot_bins)

    @property
    def torques(self):
        return np.linspace(-self.max_torque, self.max_torque, self.torque_levels)

    def state_index(self, i_theta, i_dot):
        return i_theta * self.thetadot_bins + i_dot

    def nearest_state(self, theta, thetadot):
        width = 2 * np.pi / self.theta_bins
        i = int(np.round((theta % (2 * np.pi)) / width)) % self.theta_bins
        step = 2 * self.max_speed / (self.thetadot_bins - 1)
        j = int(np.clip(np.round((thetadot + self.max_speed) / step), 0, self.thetadot_bins - 1))
        return self.state_index(i, j)

    def bilinear(self, theta, thetadot):
        """Grid cells and weights interpolating the continuous state."""
        width = 2 * np.pi / self.theta_bins
        u = (theta % (2 * np.pi)) / width
        i0 = int(np.floor(u)) % self.theta_bins
        wt = u - np.floor(u)
        i1 = (i0 + 1) % self.theta_bins
        step = 2 * self.max_speed / (self.thetadot_bins - 1)
        v = (np.clip(thetadot, -self.max_speed, self.max_speed) + self.max_speed) / step
        j0 = min(int(np.floor(v)), self.thetadot_bins - 2)
        wd = v - j0
        cells = (
            (self.state_index(i0, j0), (1 - wt) * (1 - wd)),
            (self.state_index(i1, j0), wt * (1 - wd)),
            (self.state_index(i0, j0 + 1), (1 - wt) * wd),
            (self.state_index(i1, j0 + 1), wt * wd),
        )
        return cells


def pendulum_step(theta, thetadot, u, dt=0.05, gravity=10.0, mass=1.0, length=1.0, max_speed=8.0):
    """One Euler step of the torque-driven pendulum (semi-implicit, as in gym)."""
    newdot = thetadot + (3 * gravity / (2 * length) * np.sin(theta) + 3.0 / (mass * length**2) * u) * dt
    newdot = np.clip(newdot, -max_speed, max_speed)
    return angle_normalize(theta + newdot * dt), newdot


def pendulum_cost(theta, thetadot, u):
    return angle_normalize(theta) ** 2 + 0.1 * thetadot**2 + 0.001 * u**2


def make_discretized_pendulum(
    theta_bins=31,
    thetadot_bins=31,
    torque_levels=5,
    dt=0.05,
    gravity=10.0,
    mass=1.0,
    length=1.0,
    max_speed=8.0,
    max_torque=2.0,
    discount=0.99,
    r_max=1.0,
):
    """Tabular pendulum swing-up on a ``theta x thetadot`` grid.

    The continuous one-step dynamics are applied from each grid point and the
    successor is spread over the four surrounding cells with bilinear weights,
    so every row is a partition of unity.  ``theta`` wraps around and
    ``thetadot`` is clamped to ``[-max_speed, max_speed]``.  Reward is the
    negated quadratic cost scaled into ``[-r_max, 0]``; the upright state at
    rest with zero torque earns exactly 0.
    """
    if theta_bins < 3 or thetadot_bins < 3:
        raise ValueError("pendulum needs at least 3 bins per dimension")
    if torque_levels < 1:
        raise ValueError("torque_levels must be positive")
    if min(dt, gravity, mass, length, max_speed, max_torque, r_max) <= 0:
        raise ValueError("physical parameters must be positive")
    grid = PendulumGrid(theta_bins, thetadot_bins, torque_levels, max_speed, max_torque)
    S = theta_bins * thetadot_bins
    P = np.zeros((S, torque_levels, S))
    cost = np.zeros((S, torque_levels))
    worst = np.pi**2 + 0.1 * max_speed**2 + 0.001 * max_torque**2
    for i, th in enumerate(grid.thetas):
        for j, thd in enumerate(grid.thetadots):
            s = grid.state_index(i, j)
            for a, u in enumerate(grid.torques):
                nth, nthd = pendulum_step(th, thd, u, dt, gravity, mass, length, max_speed)
                for cell, w in grid.bilinear(nth, nthd):
                    P[s, a, cell] += w
                cost[s, a] = pendulum_cost(th, thd, u)
    R = -r_max * cost / worst
    mdp = TabularMdp(P, R, discount, r_max=r_max, name=f"pendulum-{theta_bins}x{thetadot_bins}x{torque_levels}")
    object.__setattr__(mdp, "grid", grid)
    return mdp


@dataclass(frozen=True)
class EnvSpec:
    """Declarative description of an environment, as read from run configs."""

    kind: str = "random"
    params: dict = field(default_factory=dict)
    seed: int = 0
    discount: float = 0.99

    def build(self):
        return make_env(self)


_BUILDERS = {
    "random": lambda spec: make_random_mdp(seed=spec.seed, discount=spec.discount, **spec.params),
    "chain": lambda spec: make_chain(discount=spec.discount, **spec.params),
    "gridworld": lambda spec: make_gridworld(discount=spec.discount, **spec.params),
    "pendulum": lambda spec: make_discretized_pendulum(discount=spec.discount, **spec.params),
}


def make_env(spec):
    try:
        build = _BUILDERS[spec.kind]
    except KeyError:
        raise ValueError(f"unknown environment kind {spec.kind!r}") from None
    return build(spec)
