"""Input validation helpers shared by the solvers and estimators."""

import numpy as np

SIMPLEX_ATOL = 1e-12


def check_distribution(p, size=None, name="distribution", atol=SIMPLEX_ATOL):
    """Return ``p`` as a float vector after checking it lies on the simplex."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {p.shape}")
    if size is not None and p.shape[0] != size:
        raise ValueError(f"{name} must have length {size}, got {p.shape[0]}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError(f"{name} must be finite and nonnegative")
    if abs(p.sum() - 1.0) > atol * max(1, p.shape[0]):
        raise ValueError(f"{name} must sum to 1, got {p.sum()!r}")
    return p


def check_policy(pi, num_states=None, num_actions=None, name="policy", atol=SIMPLEX_ATOL):
    """Validate a tabular policy of shape (num_states, num_actions).

    Every row must be a probability distribution: finite, nonnegative and
    summing to one within ``atol``.
    """
    pi = np.asarray(pi, dtype=np.float64)
    if pi.ndim != 2:
        raise ValueError(f"{name} must be a 2-d table, got shape {pi.shape}")
    if num_states is not None and pi.shape[0] != num_states:
        raise ValueError(f"{name} has {pi.shape[0]} states, expected {num_states}")
    if num_actions is not None and pi.shape[1] != num_actions:
        raise ValueError(f"{name} has {pi.shape[1]} actions, expected {num_actions}")
    if not np.all(np.isfinite(pi)) or np.any(pi < 0):
        raise ValueError(f"{name} entries must be finite and nonnegative")
    err = np.max(np.abs(pi.sum(axis=1) - 1.0))
    if err > atol * max(1, pi.shape[1]):
        raise ValueError(f"{name} rows must sum to 1 (max error {err:.3e})")
    return pi


def check_table(x, shape, name="table"):
    """Validate a dense real-valued Q/V/A table of the given shape."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != tuple(shape):
        raise ValueError(f"{name} must have shape {tuple(shape)}, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains NaN or infinite entries")
    return x


def uniform_policy(num_states, num_actions):
    return np.full((num_states, num_actions), 1.0 / num_actions)


def renormalize_rows(pi):
    """Divide each row by its sum; used after convex combinations to remove drift."""
    return pi / pi.sum(axis=1, keepdims=True)
