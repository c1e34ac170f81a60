"""Evaluation and diagnostics: success rates, the initial achieved-goal
change ratio, normalized gain over the behavior-cloning baseline, and
imitated-action maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .algos import her_reward, imitation_indicator

CSV_HEADER = ("env_step,algo,seed,success_rate,loss_total,loss_td,loss_bc,"
              "imitated_fraction,wall_clock_s")


@dataclass
class MetricsRecord:
    env_step: int
    algo: str
    seed: int
    success_rate: float
    loss_total: float
    loss_td: float
    loss_bc: float
    imitated_fraction: float
    wall_clock_s: float

    def to_csv_row(self) -> str:
        return ",".join([
            str(self.env_step), self.algo, str(self.seed),
            repr(float(self.success_rate)), repr(float(self.loss_total)),
            repr(float(self.loss_td)), repr(float(self.loss_bc)),
            repr(float(self.imitated_fraction)), repr(float(self.wall_clock_s)),
        ])

    @classmethod
    def from_csv_row(cls, row: str) -> "MetricsRecord":
        parts = row.strip().split(",")
        if len(parts) != 9:
            raise ValueError(f"bad metrics row: {row!r}")
        return cls(int(parts[0]), parts[1], int(parts[2]), float(parts[3]),
                   float(parts[4]), float(parts[5]), float(parts[6]),
                   float(parts[7]), float(parts[8]))


def evaluate(net: nn.Mlp, env, n_episodes: int, rng: np.random.Generator) -> float:
    """Fraction of greedy rollouts whose final state achieves a freshly
    sampled behavioral goal. Episodes run the full env horizon."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    starts = np.stack([env.reset(rng) for _ in range(n_episodes)])
    goals = np.stack([env.sample_goal(rng) for _ in range(n_episodes)])
    states = starts
    for _ in range(env.horizon):
        x = np.concatenate([states, goals], axis=1)
        actions = np.argmax(nn.forward_many(net, x), axis=1)
        states = env.step_many(states, actions)
    dist = np.linalg.norm(env.achieved_goal_many(states) - goals, axis=1)
    return float(np.mean(dist <= env.success_threshold))


def initial_ag_change_ratio(env, n_trajectories: int, rng: np.random.Generator,
                            return_endpoints: bool = False):
    """Fraction of uniform-random-policy episodes whose final achieved goal
    differs from the initial one beyond the success threshold.

    Equivalently the expectation of -r under the (-1, 0) goal-reaching reward
    applied to (initial state, final achieved goal); `return_endpoints` exposes
    the per-trajectory achieved goals so callers can check both formulations.
    """
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be >= 1")
    states = np.stack([env.reset(rng) for _ in range(n_trajectories)])
    start_ags = env.achieved_goal_many(states)
    for _ in range(env.horizon):
        actions = rng.integers(0, env.action_count, size=n_trajectories)
        states = env.step_many(states, actions)
    final_ags = env.achieved_goal_many(states)
    changed = np.array([
        -her_reward(s0, gT, env, r_bar=-1.0, beta=1.0)
        for s0, gT in zip(start_ags, final_ags)
    ])
    ratio = float(np.mean(changed))
    if return_endpoints:
        return ratio, start_ags, final_ags
    return ratio


def normalized_gain(success_algo: float, success_gcsl: float) -> float:
    """Fraction of the remaining headroom over the cloning baseline:
    (algo - baseline) / (100 - baseline), success rates in percent.

    This normalizer is a convention of this package (bounded above by 1,
    sign-preserving, comparable across environments); a baseline at exactly
    100 leaves it undefined and returns nan.
    """
    for v in (success_algo, success_gcsl):
        if not 0.0 <= v <= 100.0:
            raise ValueError("success rates must lie in [0, 100]")
    if success_gcsl == 100.0:
        return float("nan")
    return (success_algo - success_gcsl) / (100.0 - success_gcsl)


@dataclass
class ImitatedActionMap:
    """Per-(free cell, action) imitation gate for one goal and threshold."""

    cells: list          # (row, col) per entry
    indicators: np.ndarray  # (n_cells, n_actions) of 0/1
    goal: np.ndarray
    gamma_hdm: float

    @property
    def count(self) -> int:
        return int(self.indicators.sum())

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as f:
            f.write("row,col," + ",".join(f"action{a}" for a in range(self.indicators.shape[1])) + "\n")
            for (r, c), row in zip(self.cells, self.indicators):
                f.write(f"{r},{c}," + ",".join(str(int(v)) for v in row) + "\n")


def imitated_action_map(net: nn.Mlp, env, goal: np.ndarray,
                        gamma_hdm: float) -> ImitatedActionMap:
    """Evaluate the imitation gate at every (free cell, action) for one goal:
    an entry is on iff Q(s,a,g) - max_a' Q(step(s,a),a',g) < log(gamma_hdm)."""
    goal = np.asarray(goal, dtype=np.float64)
    cells = env.free_cells
    states = np.stack([env.encode(r, c) for r, c in cells])
    n, a_count = len(cells), env.action_count
    goals = np.broadcast_to(goal, (n, goal.size))
    q = nn.forward_many(net, np.concatenate([states, goals], axis=1))
    indicators = np.zeros((n, a_count), dtype=np.int64)
    for a in range(a_count):
        nxt = env.step_many(states, np.full(n, a))
        q_next = nn.forward_many(net, np.concatenate([nxt, goals], axis=1))
        indicators[:, a] = imitation_indicator(q[:, a], q_next.max(axis=1), gamma_hdm)
    return ImitatedActionMap(cells, indicators, goal, gamma_hdm)
