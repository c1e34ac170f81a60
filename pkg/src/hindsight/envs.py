"""Reward-free goal-reaching environments with discrete actions.

FourRooms is the trainable environment: an 11x11 grid split into four rooms
by one-cell-thick walls with four doorways. States and goals are the agent
position normalized to [0, 1]^2. Environments are plain value records; `step`
is a pure function of (state, action).

TabularMDP is an exact small MDP (transition tensor, behavior policy, initial
distribution, discount, goal distribution) used by the identity-checking
suite, not for rollouts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

GRID = 11
# Walls: middle row and middle column, except one doorway per half.
_DOORS = (2, 8)
# up, down, left, right, stay
ACTION_DELTAS = np.array([(-1, 0), (1, 0), (0, -1), (0, 1), (0, 0)], dtype=np.int64)
ACTION_NAMES = ("up", "down", "left", "right", "stay")


def _free_mask() -> np.ndarray:
    free = np.ones((GRID, GRID), dtype=bool)
    mid = GRID // 2
    for i in range(GRID):
        if i not in _DOORS:
            free[mid, i] = False
            free[i, mid] = False
    return free


class FourRooms:
    """Four-rooms gridworld with actions {up, down, left, right, stay}.

    Moving into a wall or off the grid leaves the position unchanged. Episodes
    have a fixed horizon and never terminate early on success. Start states
    and behavioral goals are both uniform over free cells.
    """

    state_dim = 2
    goal_dim = 2
    action_count = 5
    horizon = 50
    success_threshold = 0.08

    def __init__(self):
        self.free = _free_mask()
        self.free_cells = [(int(r), int(c)) for r, c in np.argwhere(self.free)]
        self._cells = np.array(self.free_cells, dtype=np.int64)

    # -- encoding ------------------------------------------------------

    def encode(self, row: int, col: int) -> np.ndarray:
        return np.array([row, col], dtype=np.float64) / (GRID - 1)

    def decode(self, state: np.ndarray) -> tuple[int, int]:
        rc = np.rint(np.asarray(state, dtype=np.float64) * (GRID - 1)).astype(int)
        return int(rc[0]), int(rc[1])

    # -- dynamics ------------------------------------------------------

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        r, c = self._cells[rng.integers(len(self._cells))]
        return self.encode(r, c)

    def sample_goal(self, rng: np.random.Generator) -> np.ndarray:
        """Behavioral goal distribution: uniform over free cells."""
        r, c = self._cells[rng.integers(len(self._cells))]
        return self.encode(r, c)

    def step(self, state: np.ndarray, action: int) -> np.ndarray:
        if not 0 <= action < self.action_count:
            raise ValueError(f"action index {action} out of range")
        return self.step_many(np.asarray(state, dtype=np.float64)[None, :],
                              np.array([action]))[0]

    def step_many(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Vectorized step: (N, 2) states, (N,) action indices."""
        actions = np.asarray(actions)
        if actions.size and (actions.min() < 0 or actions.max() >= self.action_count):
            raise ValueError("action index out of range")
        pos = np.rint(np.asarray(states, dtype=np.float64) * (GRID - 1)).astype(np.int64)
        nxt = pos + ACTION_DELTAS[actions]
        inside = ((nxt >= 0) & (nxt < GRID)).all(axis=1)
        ok = inside.copy()
        ok[inside] = self.free[nxt[inside, 0], nxt[inside, 1]]
        out = np.where(ok[:, None], nxt, pos)
        return out.astype(np.float64) / (GRID - 1)

    # -- goals ---------------------------------------------------------

    def achieved_goal(self, state: np.ndarray) -> np.ndarray:
        return np.array(state, dtype=np.float64, copy=True)

    def achieved_goal_many(self, states: np.ndarray) -> np.ndarray:
        return np.array(states, dtype=np.float64, copy=True)

    def is_success(self, achieved: np.ndarray, desired: np.ndarray) -> bool:
        achieved = np.asarray(achieved, dtype=np.float64)
        desired = np.asarray(desired, dtype=np.float64)
        if achieved.shape != desired.shape:
            raise ConfigError("goal dimensions disagree")
        return bool(np.linalg.norm(achieved - desired) <= self.success_threshold)


@dataclass
class TabularMDP:
    """Exact finite MDP with a fixed behavior policy and goal distribution.

    P[s, a, s'] is the transition tensor, mu[s, a] the behavior policy,
    rho0 the initial state distribution, rho_plus the behavioral goal
    distribution with goals identified with states.
    """

    P: np.ndarray
    mu: np.ndarray
    rho0: np.ndarray
    gamma: float
    rho_plus: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.rho0 = np.asarray(self.rho0, dtype=np.float64)
        if self.rho_plus is None:
            self.rho_plus = np.full(self.P.shape[0], 1.0 / self.P.shape[0])
        self.rho_plus = np.asarray(self.rho_plus, dtype=np.float64)
        s, a, s2 = self.P.shape
        if s != s2 or self.mu.shape != (s, a) or self.rho0.shape != (s,) \
                or self.rho_plus.shape != (s,):
            raise ConfigError("inconsistent MDP table shapes")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma {self.gamma} outside (0, 1)")
        for name, table, axis in (("P", self.P, 2), ("mu", self.mu, 1),
                                  ("rho0", self.rho0, 0), ("rho_plus", self.rho_plus, 0)):
            if table.min() < 0.0:
                raise ConfigError(f"{name} has a negative entry")
            sums = table.sum(axis=axis)
            if not np.allclose(sums, 1.0, rtol=0.0, atol=1e-12):
                raise ConfigError(f"{name} rows do not sum to 1")

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]


def random_tabular_mdp(n_states: int, n_actions: int, gamma: float,
                       seed: int) -> TabularMDP:
    """Seeded random MDP with Dirichlet(1) rows; test fixture generator."""
    if n_states < 1 or n_actions < 1:
        raise ConfigError("need at least one state and one action")
    rng = np.random.default_rng(seed)
    alpha = np.ones(n_states)
    P = rng.dirichlet(alpha, size=(n_states, n_actions))
    mu = rng.dirichlet(np.ones(n_actions), size=n_states)
    rho0 = rng.dirichlet(alpha)
    rho_plus = rng.dirichlet(alpha)
    return TabularMDP(P=P, mu=mu, rho0=rho0, gamma=gamma, rho_plus=rho_plus)


def make_env(name: str):
    """Build an environment from its config name.

    "four-rooms" -> FourRooms; "tabular:SxA:seed[:gamma]" -> TabularMDP
    (gamma defaults to 0.9).
    """
    if name == "four-rooms":
        return FourRooms()
    if name.startswith("tabular:"):
        parts = name.split(":")
        try:
            s, a = (int(v) for v in parts[1].split("x"))
            seed = int(parts[2])
            gamma = float(parts[3]) if len(parts) > 3 else 0.9
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"bad tabular env name {name!r}") from exc
        return random_tabular_mdp(s, a, gamma, seed)
    raise ConfigError(f"unknown environment {name!r}")
